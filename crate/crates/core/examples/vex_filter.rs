// Variance explained of a batch and the median-ratio filter over a stream of
// predictions.

use sauna::vex::{
    accept_transition, adjusted_vex, vex_of_batch, ReferenceTracker, DEFAULT_EPS0, DEFAULT_RHO,
};

pub fn run_example() -> sauna::Result<()> {
    let returns = [1.0, 2.0, 3.0, 4.0];
    for (label, values) in [
        ("perfect", [1.0, 2.0, 3.0, 4.0]),
        ("mean only", [2.5; 4]),
        ("noisy", [1.2, 1.7, 3.4, 3.9]),
        ("zeros", [0.0; 4]),
    ] {
        let s = vex_of_batch(&returns, &values)?;
        println!("{label:>10}: vex = {:+.4}", s.vex);
    }
    let s = vex_of_batch(&returns, &[1.2, 1.7, 3.4, 3.9])?;
    println!("adjusted (n = 4, p = 1): {:+.4}", adjusted_vex(s.vex, 4, 1)?);

    // Predictions as a vex head might emit them during one collection.
    let predictions = [0.02, 0.30, 0.28, 0.05, 0.33, 0.31, 0.01, 0.29, 0.35, 0.08];
    let mut tracker = ReferenceTracker::median();
    let mut rejected = 0;
    for (t, &p) in predictions.iter().enumerate() {
        let median = tracker.center();
        let keep = accept_transition(p, &tracker, DEFAULT_RHO, DEFAULT_EPS0);
        tracker.insert(p);
        if !keep {
            rejected += 1;
        }
        println!(
            "t = {t}: prediction {p:.2}, median so far {median:.3} -> {}",
            if keep { "keep" } else { "drop" }
        );
    }
    println!("rejected {rejected} of {}", predictions.len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
