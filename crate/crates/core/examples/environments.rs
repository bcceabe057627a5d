// The built-in tasks under a zero-torque and a uniformly random policy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sauna::env::{make_env, ENV_NAMES};

fn episode_return(name: &str, seed: u64, random: bool) -> sauna::Result<(f64, usize)> {
    let mut env = make_env(name)?;
    let spec = env.spec().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
    env.reset(seed);
    let (mut total, mut steps) = (0.0, 0);
    loop {
        let action: Vec<f64> = spec
            .action_low
            .iter()
            .zip(&spec.action_high)
            .map(|(lo, hi)| if random { rng.random_range(*lo..*hi) } else { 0.0 })
            .collect();
        let step = env.step(&action)?;
        total += step.reward;
        steps += 1;
        if step.done() {
            return Ok((total, steps));
        }
    }
}

pub fn run_example() -> sauna::Result<()> {
    for name in ENV_NAMES {
        let spec = make_env(name)?.spec().clone();
        println!(
            "{name}: state {} dims, action {} dims in [{:?}, {:?}], {} steps per episode",
            spec.state_dim, spec.action_dim, spec.action_low, spec.action_high, spec.max_episode_steps
        );
        for random in [false, true] {
            let episodes = 20;
            let mut sum = 0.0;
            let mut lengths = 0;
            for seed in 0..episodes {
                let (r, n) = episode_return(name, seed, random)?;
                sum += r;
                lengths += n;
            }
            println!(
                "  {:<12} mean return {:>9.1}, mean length {:>5.1}",
                if random { "random" } else { "zero action" },
                sum / episodes as f64,
                lengths as f64 / episodes as f64
            );
        }
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
