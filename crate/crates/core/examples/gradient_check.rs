// Analytic gradients of the composite loss against central differences on a
// tiny model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sauna::approximator::{ActorCritic, ModelShape, Tensor};
use sauna::ppo::{loss_value, sauna_loss, PpoHyperparams, UpdateBatch};

pub fn run_example() -> sauna::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let shape = ModelShape {
        state_dim: 3,
        action_dim: 1,
        hidden: vec![4, 4],
        shared_trunk: false,
    };
    let mut model = ActorCritic::new(&shape, &mut rng)?;
    for t in Tensor::ALL {
        for p in model.tensor_mut(t) {
            *p += rng.random_range(-0.3..0.3);
        }
    }
    let mut batch = UpdateBatch {
        vex_target: 0.4,
        ..Default::default()
    };
    for _ in 0..3 {
        let obs: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = model.policy_mean(&obs)?;
        let action = vec![mean[0] + rng.random_range(-0.5..0.5)];
        let (lp, _) = model.policy.log_prob_and_entropy(&obs, &action)?;
        batch.obs.push(obs);
        batch.actions.push(action);
        batch.old_log_probs.push(lp + rng.random_range(-0.2..0.2));
        batch.advantages.push(rng.random_range(-1.0..1.0));
        batch.returns.push(rng.random_range(-1.0..1.0));
    }
    let hyper = PpoHyperparams {
        entropy_coef: 0.01,
        ..Default::default()
    };
    let idx = [0, 1, 2];
    let (terms, grads) = sauna_loss(&mut model, &batch, &idx, &hyper)?;
    println!(
        "loss {:.6} (surrogate {:.4}, value {:.4}, vex {:.4})",
        terms.total, terms.surrogate, terms.value, terms.vex
    );

    let h = 1e-5;
    for t in Tensor::ALL {
        let mut worst: f64 = 0.0;
        for k in 0..model.tensor(t).len() {
            let mut plus = model.clone();
            plus.tensor_mut(t)[k] += h;
            let mut minus = model.clone();
            minus.tensor_mut(t)[k] -= h;
            let fd = (loss_value(&plus, &batch, &idx, &hyper)?
                - loss_value(&minus, &batch, &idx, &hyper)?)
                / (2.0 * h);
            let an = grads.get(t)[k];
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-4));
        }
        println!("{:<18} {:>4} params, worst relative error {worst:.2e}", t.name(), model.tensor(t).len());
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
