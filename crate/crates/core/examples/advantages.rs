// Discounted returns and GAE over a stream that crosses an episode end and a
// time-limit truncation.

use sauna::returns::{discounted_returns, gae_advantages, normalize_advantages, Boundary};

pub fn run_example() -> sauna::Result<()> {
    let rewards = [1.0, 0.0, -1.0, 2.0, 0.5, 0.5];
    let values = [0.8, 0.1, -0.6, 1.5, 0.9, 0.7];
    let boundaries = [
        Boundary::Continue,
        Boundary::Continue,
        Boundary::Terminal,
        Boundary::Continue,
        Boundary::Truncated { next_value: 0.6 },
        Boundary::Continue,
    ];
    let (gamma, lambda, bootstrap) = (0.9, 0.95, 0.4);

    let returns = discounted_returns(&rewards, &boundaries, bootstrap, gamma);
    let adv = gae_advantages(&rewards, &values, &boundaries, bootstrap, gamma, lambda);
    let full = gae_advantages(&rewards, &values, &boundaries, bootstrap, gamma, 1.0);
    let norm = normalize_advantages(&adv);

    println!("  t   reward  boundary                      return     gae   gae(1)+V   normalized");
    for t in 0..rewards.len() {
        println!(
            "{t:>3} {:>8.2}  {:<30} {:>7.3} {:>7.3} {:>10.3} {:>12.3}",
            rewards[t],
            format!("{:?}", boundaries[t]),
            returns[t],
            adv[t],
            full[t] + values[t],
            norm[t]
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
