// Trains one agent on the pendulum, saves a checkpoint and evaluates the
// restored policy.
//
// `cargo run --release --example train_agent -- [variant] [steps]`

use sauna::agent::{evaluate_policy, policy_from_checkpoint, Agent, TrainSchedule, Variant};
use sauna::approximator::Checkpoint;
use sauna::harness::{experiment::agent_config, preset};

pub fn run_example() -> sauna::Result<()> {
    run(Variant::Sauna, 8192)
}

fn run(variant: Variant, steps: usize) -> sauna::Result<()> {
    let mut cfg = preset("pendulum")?;
    cfg.variant = variant;
    cfg.random_filter_rate = Some(0.05);
    let mut agent = Agent::new("pendulum", agent_config(&cfg, 0)?, 0)?;
    let schedule = TrainSchedule {
        total_steps: steps,
        eval_every: 4,
        eval_episodes: 5,
    };
    println!("update  steps  episode return  vex_B  rejected  value loss  eval");
    agent.train(schedule, |r| {
        println!(
            "{:>6} {:>6} {:>15} {:>6.3} {:>8.1}% {:>11.4} {}",
            r.update,
            r.env_steps,
            r.return_mean.map_or("-".into(), |x| format!("{x:.1}")),
            r.vex_batch,
            100.0 * r.rejection_fraction,
            r.report.value_loss,
            r.eval_return.map_or(String::new(), |x| format!("{x:.1}")),
        );
        Ok(())
    })?;

    let path = std::env::temp_dir().join(format!("sauna_example_{}.ckpt", std::process::id()));
    agent.checkpoint().save(&path)?;
    let ckpt = Checkpoint::load(&path)?;
    let (model, norm) = policy_from_checkpoint(&ckpt)?;
    let restored = evaluate_policy(&model, &norm, "pendulum", 5, 99)?;
    println!("checkpoint {} restored, eval return {restored:.1}", path.display());
    let _ = std::fs::remove_file(&path);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    let mut args = std::env::args().skip(1);
    let parsed = (|| -> sauna::Result<(Variant, usize)> {
        let variant = args.next().as_deref().unwrap_or("sauna").parse()?;
        let steps = match args.next() {
            Some(s) => s
                .parse()
                .map_err(|_| sauna::Error::Usage(format!("bad step count {s:?}")))?,
            None => 8192,
        };
        Ok((variant, steps))
    })();
    if let Err(e) = parsed.and_then(|(v, n)| run(v, n)) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
