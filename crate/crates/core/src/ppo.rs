//! Clipped-surrogate policy optimization with the auxiliary
//! variance-explained head.
//!
//! Per sample the minimized loss is
//!
//! ```text
//! −clip(A, α, δ) + c₁ (V(s) − R)² + c₂ (vex(s) − vex_B)² − c_H · H[π(·|s)]
//! ```
//!
//! averaged over a minibatch, with `α = π(a|s) / π_old(a|s)`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::{
    adam_step, gaussian_terms, ActorCritic, AdamConfig, AdamState, ModelGrads, StepOutcome,
    Tensor,
};
use crate::error::{check_dim, Error, Result};
use crate::vex::{DEFAULT_EPS0, DEFAULT_RHO};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpoHyperparams {
    /// Clip range δ.
    pub clip: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    /// Accepted transitions per update, T.
    pub horizon: usize,
    pub gamma: f64,
    pub lambda: f64,
    /// c₁
    pub value_coef: f64,
    /// c₂
    pub vex_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub learning_rate: f64,
    /// Filter threshold ρ.
    pub rho: f64,
    /// Laplace term ε₀ of the filter ratio.
    pub eps0: f64,
    /// Keep the vex loss out of the shared trunk and clip the vex head on its
    /// own.
    pub isolate_vex_head: bool,
}

impl Default for PpoHyperparams {
    fn default() -> Self {
        Self {
            clip: 0.2,
            epochs: 10,
            minibatch_size: 64,
            horizon: 2048,
            gamma: 0.99,
            lambda: 0.95,
            value_coef: 0.5,
            vex_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            learning_rate: 3e-4,
            rho: DEFAULT_RHO,
            eps0: DEFAULT_EPS0,
            isolate_vex_head: false,
        }
    }
}

impl PpoHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad(format!("clip must lie in (0, 1), got {}", self.clip));
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.horizon == 0 {
            return bad("epochs, minibatch_size and horizon must be positive".into());
        }
        if self.horizon % self.minibatch_size != 0 {
            return bad(format!(
                "horizon {} is not a multiple of minibatch_size {}",
                self.horizon, self.minibatch_size
            ));
        }
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return bad("gamma must lie in [0, 1) and lambda in [0, 1]".into());
        }
        if self.rho < 0.0 || self.value_coef < 0.0 || self.vex_coef < 0.0 {
            return bad("rho, value_coef and vex_coef must be non-negative".into());
        }
        if self.eps0 <= 0.0 || self.max_grad_norm <= 0.0 || self.learning_rate < 0.0 {
            return bad("eps0 and max_grad_norm must be positive, learning_rate non-negative".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// Clipped surrogate, piecewise in the sign of the advantage:
/// `min(αA, (1+δ)A)` for `A ≥ 0` and `min(αA, (1−δ)A)` for `A < 0`.
pub fn clip_objective(advantage: f64, ratio: f64, clip: f64) -> f64 {
    let bound = if advantage >= 0.0 {
        (1.0 + clip) * advantage
    } else {
        (1.0 - clip) * advantage
    };
    (ratio * advantage).min(bound)
}

/// Derivative of [`clip_objective`] with respect to the ratio.
pub fn clip_objective_dratio(advantage: f64, ratio: f64, clip: f64) -> f64 {
    let bound = if advantage >= 0.0 {
        (1.0 + clip) * advantage
    } else {
        (1.0 - clip) * advantage
    };
    if ratio * advantage <= bound {
        advantage
    } else {
        0.0
    }
}

/// Everything the update needs about the accepted transitions.
#[derive(Clone, Debug, Default)]
pub struct UpdateBatch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    /// Advantages as fed to the surrogate (normalized by the caller).
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Regression target of the vex head, shared by every sample.
    pub vex_target: f64,
}

impl UpdateBatch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

/// Minibatch averages of the loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    /// Negated clipped surrogate.
    pub surrogate: f64,
    pub value: f64,
    pub vex: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub total: f64,
}

/// Loss and gradient on the samples `idx` of `batch`.
pub fn sauna_loss(
    model: &mut ActorCritic,
    batch: &UpdateBatch,
    idx: &[usize],
    hyper: &PpoHyperparams,
) -> Result<(LossTerms, ModelGrads)> {
    if idx.is_empty() {
        return Err(Error::Usage("loss over an empty minibatch".into()));
    }
    let shared = model.shared_trunk();
    let mut grads = model.zero_grads();
    let mut terms = LossTerms::default();
    let scale = 1.0 / idx.len() as f64;
    let (c1, c2, ch) = (hyper.value_coef, hyper.vex_coef, hyper.entropy_coef);

    let n = idx.len();
    let state_dim = model.shape().state_dim;
    let action_dim = model.shape().action_dim;
    let mut obs = Vec::with_capacity(n * state_dim);
    for &i in idx {
        check_dim("batch observation", state_dim, batch.obs[i].len())?;
        obs.extend_from_slice(&batch.obs[i]);
    }
    let h = model.critic.trunk.forward_batch_train(&obs, n)?.to_vec();
    let values = model.critic.value_head.forward_batch_train(&h, n)?.to_vec();
    let vexes = model.critic.vex_head.forward_batch_train(&h, n)?.to_vec();
    let policy_in = if shared { &h } else { &obs };
    let means = model.policy.mean_net.forward_batch_train(policy_in, n)?.to_vec();

    let mut d_value = vec![0.0; n];
    let mut d_vex = vec![0.0; n];
    let mut d_mean = vec![0.0; n * action_dim];
    for (k, &i) in idx.iter().enumerate() {
        let mean = &means[k * action_dim..(k + 1) * action_dim];
        let g = gaussian_terms(mean, &model.policy.log_std, &batch.actions[i])?;

        let adv = batch.advantages[i];
        let log_ratio = g.log_prob - batch.old_log_probs[i];
        let ratio = log_ratio.exp();
        let surrogate = clip_objective(adv, ratio, hyper.clip);
        let v_err = values[k] - batch.returns[i];
        let x_err = vexes[k] - batch.vex_target;

        terms.surrogate -= surrogate * scale;
        terms.value += v_err * v_err * scale;
        terms.vex += x_err * x_err * scale;
        terms.entropy += g.entropy * scale;
        terms.approx_kl += ((ratio - 1.0) - log_ratio) * scale;
        if (ratio - 1.0).abs() > hyper.clip {
            terms.clip_fraction += scale;
        }

        // d loss / d log π
        let dlogp = -clip_objective_dratio(adv, ratio, hyper.clip) * ratio * scale;
        for (dm, d) in d_mean[k * action_dim..(k + 1) * action_dim]
            .iter_mut()
            .zip(&g.dlogp_dmean)
        {
            *dm = d * dlogp;
        }
        for ((gl, dl), de) in grads
            .get_mut(Tensor::LogStd)
            .iter_mut()
            .zip(&g.dlogp_dlog_std)
            .zip(&g.dentropy_dlog_std)
        {
            *gl += dlogp * dl - ch * scale * de;
        }
        d_value[k] = 2.0 * c1 * v_err * scale;
        d_vex[k] = 2.0 * c2 * x_err * scale;
    }
    let mut dh = model
        .critic
        .value_head
        .backward_batch_into(&d_value, grads.get_mut(Tensor::ValueHead))?;
    let dh_vex = model
        .critic
        .vex_head
        .backward_batch_into(&d_vex, grads.get_mut(Tensor::VexHead))?;
    if !hyper.isolate_vex_head {
        dh.iter_mut().zip(&dh_vex).for_each(|(a, b)| *a += b);
    }
    let dpol = model
        .policy
        .mean_net
        .backward_batch_into(&d_mean, grads.get_mut(Tensor::MeanNet))?;
    if shared {
        dh.iter_mut().zip(&dpol).for_each(|(a, b)| *a += b);
    }
    model
        .critic
        .trunk
        .backward_batch_into(&dh, grads.get_mut(Tensor::Trunk))?;
    terms.total =
        terms.surrogate + c1 * terms.value + c2 * terms.vex - ch * terms.entropy;
    Ok((terms, grads))
}

/// Scalar loss of [`sauna_loss`] from pure forward passes.
pub fn loss_value(
    model: &ActorCritic,
    batch: &UpdateBatch,
    idx: &[usize],
    hyper: &PpoHyperparams,
) -> Result<f64> {
    let mut total = 0.0;
    for &i in idx {
        let p = model.predict(&batch.obs[i])?;
        let g = gaussian_terms(&p.mean, &model.policy.log_std, &batch.actions[i])?;
        let ratio = (g.log_prob - batch.old_log_probs[i]).exp();
        total += -clip_objective(batch.advantages[i], ratio, hyper.clip)
            + hyper.value_coef * (p.value - batch.returns[i]).powi(2)
            + hyper.vex_coef * (p.vex - batch.vex_target).powi(2)
            - hyper.entropy_coef * g.entropy;
    }
    Ok(total / idx.len() as f64)
}

/// Parameter groups that are clipped and checked for finiteness together.
pub fn param_groups(shared_trunk: bool, isolate_vex_head: bool) -> Vec<Vec<Tensor>> {
    use Tensor::*;
    match (shared_trunk, isolate_vex_head) {
        (false, false) => vec![vec![MeanNet, LogStd], vec![Trunk, ValueHead, VexHead]],
        (false, true) => vec![vec![MeanNet, LogStd], vec![Trunk, ValueHead], vec![VexHead]],
        (true, false) => vec![vec![MeanNet, LogStd, Trunk, ValueHead, VexHead]],
        (true, true) => vec![vec![MeanNet, LogStd, Trunk, ValueHead], vec![VexHead]],
    }
}

/// Adam state for every tensor of a model.
#[derive(Clone, Debug)]
pub struct Optimizers {
    states: Vec<(Tensor, AdamState)>,
}

impl Optimizers {
    pub fn new(model: &ActorCritic, config: AdamConfig) -> Self {
        Self {
            states: Tensor::ALL
                .iter()
                .map(|&t| (t, AdamState::new(model.tensor(t).len(), config)))
                .collect(),
        }
    }

    pub fn state(&self, t: Tensor) -> &AdamState {
        &self.states.iter().find(|(x, _)| *x == t).unwrap().1
    }

    fn state_mut(&mut self, t: Tensor) -> &mut AdamState {
        &mut self.states.iter_mut().find(|(x, _)| *x == t).unwrap().1
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateReport {
    pub surrogate_loss: f64,
    pub value_loss: f64,
    pub vex_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// L1 norm of the unclipped gradient of each policy layer, input side
    /// first, averaged over minibatches.
    pub grad_l1_layers: Vec<f64>,
    /// Mean value loss of each epoch, measured on the minibatches as they
    /// were visited.
    pub value_loss_per_epoch: Vec<f64>,
    pub minibatches: usize,
    /// Minibatches dropped for non-finite loss or gradient.
    pub skipped_minibatches: usize,
}

impl UpdateReport {
    pub fn grad_l1_first_layer(&self) -> f64 {
        self.grad_l1_layers.first().copied().unwrap_or(0.0)
    }

    pub fn grad_l1_last_layer(&self) -> f64 {
        self.grad_l1_layers.last().copied().unwrap_or(0.0)
    }
}

/// Runs `epochs` passes of shuffled minibatches over `batch`.
pub fn update<R: Rng + ?Sized>(
    model: &mut ActorCritic,
    optimizers: &mut Optimizers,
    batch: &UpdateBatch,
    hyper: &PpoHyperparams,
    rng: &mut R,
) -> Result<UpdateReport> {
    if batch.len() < hyper.minibatch_size {
        return Err(Error::Usage(format!(
            "batch of {} transitions is shorter than one minibatch ({})",
            batch.len(),
            hyper.minibatch_size
        )));
    }
    let groups = param_groups(model.shared_trunk(), hyper.isolate_vex_head);
    let layers = model.policy_layers();
    let mut report = UpdateReport {
        grad_l1_layers: vec![0.0; layers.len()],
        ..Default::default()
    };
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut counted = 0usize;

    for _ in 0..hyper.epochs {
        order.shuffle(rng);
        let mut epoch_value = 0.0;
        let mut epoch_batches = 0usize;
        for idx in order.chunks(hyper.minibatch_size) {
            report.minibatches += 1;
            let (terms, mut grads) = sauna_loss(model, batch, idx, hyper)?;
            let finite = terms.total.is_finite()
                && groups.iter().all(|g| grads.is_finite(g));
            if !finite {
                report.skipped_minibatches += 1;
                continue;
            }
            for (acc, (t, range)) in report.grad_l1_layers.iter_mut().zip(&layers) {
                *acc += grads.get(*t)[range.clone()].iter().map(|g| g.abs()).sum::<f64>();
            }
            for group in &groups {
                clip_group(&mut grads, group, hyper.max_grad_norm);
                for &t in group {
                    let outcome = adam_step(
                        model.tensor_mut(t),
                        grads.get(t),
                        optimizers.state_mut(t),
                    )?;
                    debug_assert_eq!(outcome, StepOutcome::Applied);
                }
            }
            report.surrogate_loss += terms.surrogate;
            report.value_loss += terms.value;
            report.vex_loss += terms.vex;
            report.entropy += terms.entropy;
            report.approx_kl += terms.approx_kl;
            report.clip_fraction += terms.clip_fraction;
            epoch_value += terms.value;
            epoch_batches += 1;
            counted += 1;
        }
        report
            .value_loss_per_epoch
            .push(epoch_value / epoch_batches.max(1) as f64);
    }
    if counted > 0 {
        let n = counted as f64;
        report.surrogate_loss /= n;
        report.value_loss /= n;
        report.vex_loss /= n;
        report.entropy /= n;
        report.approx_kl /= n;
        report.clip_fraction /= n;
        report.grad_l1_layers.iter_mut().for_each(|g| *g /= n);
    } else {
        let nan = f64::NAN;
        report.surrogate_loss = nan;
        report.value_loss = nan;
        report.vex_loss = nan;
    }
    Ok(report)
}

/// Rescales the group so that its global L2 norm is at most `max_norm`.
fn clip_group(grads: &mut ModelGrads, group: &[Tensor], max_norm: f64) {
    let norm = grads.l2_norm(group);
    let coef = max_norm / (norm + 1e-6);
    if coef < 1.0 {
        for &t in group {
            grads.get_mut(t).iter_mut().for_each(|g| *g *= coef);
        }
    }
}
