// Baseline, filtered, auxiliary-only and random-filter runs on the point
// mass, followed by a comparison table and plot-data export.
//
// `cargo run --release --example ablation_suite -- [out_dir] [steps]`

use std::path::PathBuf;

use sauna::harness::{compare, plot_data, run_suite};

pub fn run_example() -> sauna::Result<()> {
    let out = std::env::temp_dir().join(format!("sauna_suite_{}", std::process::id()));
    run(out.clone(), 2048)?;
    let _ = std::fs::remove_dir_all(out);
    Ok(())
}

fn run(out: PathBuf, steps: usize) -> sauna::Result<()> {
    let overrides = [
        format!("total_steps={steps}"),
        "seeds=0,1".to_string(),
        "horizon=512".to_string(),
        "hidden=16,16".to_string(),
        "eval_every=2".to_string(),
        "eval_episodes=2".to_string(),
    ];
    for run in run_suite(&out, &["pointmass"], &overrides)? {
        println!("{}: all seeds completed = {}", run.dir.display(), run.all_completed());
    }
    let env_dir = out.join("pointmass");
    for other in ["sauna", "no_filter_aux", "random_filter"] {
        println!("\nppo_baseline vs {other}");
        print!("{}", compare(&env_dir.join("ppo_baseline"), &env_dir.join(other))?);
    }
    for metric in ["rejection_fraction", "grad_l1_first_layer", "vex_batch"] {
        let (long, summary) = plot_data(metric, &[env_dir.clone()])?.write(&out.join("plots"), metric)?;
        println!("wrote {} and {}", long.display(), summary.display());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("suite_out"));
    let steps = args.next().and_then(|s| s.parse().ok()).unwrap_or(2048);
    if let Err(e) = run(out, steps) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
