//! Filtered batch collection, the training loop and evaluation.
//!
//! One [`Agent`] owns its environment, model, optimizers and random streams.
//! Each iteration visits states until `horizon` transitions have been
//! accepted by the variant's filter, computes targets on the visited
//! trajectory and runs one PPO update on the accepted transitions.

pub mod variant;

use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use variant::{FilterKind, Variant};

use crate::approximator::{ActorCritic, Checkpoint, ModelShape};
use crate::env::{make_env, Environment, ObsNormalizer};
use crate::error::{Error, Result};
use crate::ppo::{update, Optimizers, PpoHyperparams, UpdateBatch, UpdateReport};
use crate::returns::{discounted_returns, gae_advantages, normalize_advantages, Boundary};
use crate::vex::{accept_transition, adjusted_vex, vex_of_batch, ReferenceTracker};

const FILTER_STREAM_SALT: u64 = 0x5f1e_7e12_d00d_cafe;
const EVAL_STREAM_SALT: u64 = 0x0e7a_1a7e_5eed_0001;
const MAX_NONFINITE_UPDATES: usize = 3;

/// Rejection probability used by [`Variant::RandomFilter`].
#[derive(Clone, Debug, PartialEq)]
pub enum RandomRejection {
    Rate(f64),
    /// Per-update rejection fractions; the last entry is reused once the
    /// schedule runs out.
    Schedule(Vec<f64>),
}

impl RandomRejection {
    pub fn probability(&self, update: usize) -> f64 {
        match self {
            RandomRejection::Rate(q) => *q,
            RandomRejection::Schedule(s) => s.get(update).or(s.last()).copied().unwrap_or(0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub variant: Variant,
    pub hyper: PpoHyperparams,
    pub hidden: Vec<usize>,
    pub shared_policy_trunk: bool,
    pub normalize_obs: bool,
    pub median_accepted_only: bool,
    pub returns_on_accepted_only: bool,
    pub adjusted_vex_predictors: usize,
    /// Multiplies rewards before they enter any training target.
    pub reward_scale: f64,
    pub random_rejection: Option<RandomRejection>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Sauna,
            hyper: PpoHyperparams::default(),
            hidden: vec![64, 64],
            shared_policy_trunk: false,
            normalize_obs: true,
            median_accepted_only: false,
            returns_on_accepted_only: false,
            adjusted_vex_predictors: 1,
            reward_scale: 1.0,
            random_rejection: None,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.variant == Variant::RandomFilter && self.random_rejection.is_none() {
            return Err(Error::Config(
                "random_filter needs a rejection rate or a sauna run to replay".into(),
            ));
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return Err(Error::Config(format!(
                "reward_scale must be positive, got {}",
                self.reward_scale
            )));
        }
        if self.variant == Variant::AdjustedVex
            && self.hyper.horizon <= self.adjusted_vex_predictors + 1
        {
            return Err(Error::Config(
                "horizon too short for the adjusted statistic".into(),
            ));
        }
        Ok(())
    }

    /// Hyperparameters handed to the update. The baseline never trains the
    /// vex head.
    fn update_hyper(&self) -> PpoHyperparams {
        let mut h = self.hyper.clone();
        if !self.variant.trains_vex_head() {
            h.vex_coef = 0.0;
        }
        h
    }
}

/// One visited environment step with the predictions made when it was
/// collected.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    /// Observation as fed to the networks (normalized if enabled).
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    /// Unscaled environment reward.
    pub reward: f64,
    pub value: f64,
    pub vex_pred: f64,
    pub log_prob: f64,
    pub terminal: bool,
    pub truncated: bool,
    /// Value of the next state; only meaningful after a truncation.
    pub next_value: f64,
    pub accepted: bool,
}

impl Transition {
    fn boundary(&self) -> Boundary {
        if self.terminal {
            Boundary::Terminal
        } else if self.truncated {
            Boundary::Truncated {
                next_value: self.next_value,
            }
        } else {
            Boundary::Continue
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CollectionStats {
    pub visited: usize,
    pub accepted: usize,
    pub rejected: usize,
    /// Undiscounted returns of episodes that finished during collection.
    pub episode_returns: Vec<f64>,
}

impl CollectionStats {
    pub fn rejection_fraction(&self) -> f64 {
        if self.visited == 0 {
            0.0
        } else {
            self.rejected as f64 / self.visited as f64
        }
    }
}

/// Every visited transition of one collection, in order.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub transitions: Vec<Transition>,
    /// Value of the state after the last transition, used when that
    /// transition did not end its episode.
    pub bootstrap_value: f64,
    pub stats: CollectionStats,
}

impl Batch {
    pub fn accepted(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(|t| t.accepted)
    }
}

/// Training targets for the accepted transitions of a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Targets {
    pub returns: Vec<f64>,
    /// Normalized advantages.
    pub advantages: Vec<f64>,
    /// Batch variance explained of the accepted transitions.
    pub vex_batch: f64,
    /// What the vex head regresses onto.
    pub vex_target: f64,
}

/// Per-update record of the training loop.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateRecord {
    /// 1-based update index.
    pub update: usize,
    /// Visited environment steps so far, rejected ones included.
    pub env_steps: usize,
    pub accepted_steps: usize,
    /// Episodes finished so far.
    pub episodes: usize,
    pub return_mean: Option<f64>,
    pub return_std: Option<f64>,
    pub eval_return: Option<f64>,
    pub vex_batch: f64,
    pub rejection_fraction: f64,
    pub report: UpdateReport,
    pub wall_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainSchedule {
    /// Stop once at least this many environment steps were visited.
    pub total_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
}

#[derive(Clone, Debug, Default)]
struct EpisodeTrace {
    undiscounted: f64,
    rewards: Vec<f64>,
    values: Vec<f64>,
}

pub struct Agent {
    config: AgentConfig,
    env_name: String,
    env: Box<dyn Environment>,
    model: ActorCritic,
    optimizers: Optimizers,
    obs_norm: ObsNormalizer,
    rng: ChaCha8Rng,
    filter_rng: ChaCha8Rng,
    seed: u64,
    state: Option<Vec<f64>>,
    episode: EpisodeTrace,
    last_empirical_vex: Option<f64>,
    updates: usize,
    env_steps: usize,
    accepted_steps: usize,
    episodes: usize,
    nonfinite_streak: usize,
}

impl Agent {
    pub fn new(env_name: &str, config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let env = make_env(env_name)?;
        let spec = env.spec().clone();
        let shape = ModelShape {
            state_dim: spec.state_dim,
            action_dim: spec.action_dim,
            hidden: config.hidden.clone(),
            shared_trunk: config.shared_policy_trunk,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = ActorCritic::new(&shape, &mut rng)?;
        let optimizers = Optimizers::new(&model, config.hyper.adam());
        Ok(Self {
            obs_norm: ObsNormalizer::new(spec.state_dim, config.normalize_obs),
            filter_rng: ChaCha8Rng::seed_from_u64(seed ^ FILTER_STREAM_SALT),
            config,
            env_name: env_name.to_string(),
            env,
            model,
            optimizers,
            rng,
            seed,
            state: None,
            episode: EpisodeTrace::default(),
            last_empirical_vex: None,
            updates: 0,
            env_steps: 0,
            accepted_steps: 0,
            episodes: 0,
            nonfinite_streak: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn model(&self) -> &ActorCritic {
        &self.model
    }

    pub fn obs_normalizer(&self) -> &ObsNormalizer {
        &self.obs_norm
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    fn check_finite(&self, xs: &[f64], what: &str) -> Result<()> {
        if xs.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Diverged(format!(
                "non-finite {what} during collection after {} updates",
                self.updates
            )))
        }
    }

    fn reset_env(&mut self) -> Vec<f64> {
        let s = self.env.reset(self.rng.next_u64());
        self.episode = EpisodeTrace::default();
        s
    }

    /// Closes the current episode's empirical variance explained.
    fn finish_episode(&mut self, last_boundary: Boundary) -> Result<()> {
        let n = self.episode.rewards.len();
        let mut boundaries = vec![Boundary::Continue; n];
        boundaries[n - 1] = last_boundary;
        let returns =
            discounted_returns(&self.episode.rewards, &boundaries, 0.0, self.config.hyper.gamma);
        self.last_empirical_vex = Some(vex_of_batch(&returns, &self.episode.values)?.vex);
        Ok(())
    }

    /// Visits states until `horizon` transitions are accepted.
    pub fn collect_batch(&mut self) -> Result<Batch> {
        let horizon = self.config.hyper.horizon;
        let hyper = &self.config.hyper;
        let (rho, eps0) = (hyper.rho, hyper.eps0);
        let filter = self.config.variant.filter();
        let mut tracker = if self.config.variant == Variant::MeanInsteadOfMedian {
            ReferenceTracker::mean()
        } else {
            ReferenceTracker::median()
        };
        let reject_p = self
            .config
            .random_rejection
            .as_ref()
            .map_or(0.0, |r| r.probability(self.updates));
        let mut stats = CollectionStats::default();
        let mut transitions = Vec::with_capacity(horizon + horizon / 4);

        let mut raw = match self.state.take() {
            Some(s) => s,
            None => self.reset_env(),
        };
        while stats.accepted < horizon {
            self.obs_norm.update(&raw);
            let obs = self.obs_norm.normalize(&raw);
            let pred = self.model.predict(&obs)?;
            self.check_finite(&pred.mean, "policy mean")?;
            self.check_finite(&[pred.value, pred.vex], "critic output")?;
            let policy_in = if self.model.shared_trunk() {
                self.model.critic.trunk.forward(&obs)?
            } else {
                obs.clone()
            };
            let action = self.model.policy.sample(&policy_in, &mut self.rng)?;
            let (log_prob, _) = self.model.policy.log_prob_and_entropy(&policy_in, &action)?;
            let step = self.env.step(&action)?;

            let accepted = match filter {
                FilterKind::None => true,
                FilterKind::Random => self.filter_rng.random::<f64>() >= reject_p,
                FilterKind::Vex => {
                    let signal = match self.config.variant {
                        Variant::EmpiricalVexFilter => self.last_empirical_vex.unwrap_or(pred.vex),
                        _ => pred.vex,
                    };
                    let ok = accept_transition(signal, &tracker, rho, eps0);
                    if ok || !self.config.median_accepted_only {
                        tracker.insert(signal);
                    }
                    ok
                }
            };

            let next_value = if step.truncated {
                let next = self.obs_norm.normalize(&step.next_state);
                self.model.predict(&next)?.value
            } else {
                0.0
            };
            stats.visited += 1;
            if accepted {
                stats.accepted += 1;
            } else {
                stats.rejected += 1;
            }
            self.episode.undiscounted += step.reward;
            self.episode.rewards.push(step.reward * self.config.reward_scale);
            self.episode.values.push(pred.value);
            let t = Transition {
                obs,
                action,
                reward: step.reward,
                value: pred.value,
                vex_pred: pred.vex,
                log_prob,
                terminal: step.terminal,
                truncated: step.truncated,
                next_value,
                accepted,
            };
            let boundary = t.boundary();
            transitions.push(t);
            if step.done() {
                stats.episode_returns.push(self.episode.undiscounted);
                self.finish_episode(boundary)?;
                self.episodes += 1;
                raw = self.reset_env();
            } else {
                raw = step.next_state;
            }
        }
        let last = self.obs_norm.normalize(&raw);
        let bootstrap_value = self.model.predict(&last)?.value;
        self.state = Some(raw);
        self.env_steps += stats.visited;
        self.accepted_steps += stats.accepted;
        Ok(Batch {
            transitions,
            bootstrap_value,
            stats,
        })
    }

    /// Returns, normalized advantages and the vex target of the accepted
    /// transitions.
    pub fn compute_targets(&self, batch: &Batch) -> Result<Targets> {
        let hyper = &self.config.hyper;
        let scale = self.config.reward_scale;
        let (returns, advantages) = if self.config.returns_on_accepted_only {
            // Holes are skipped; an episode end inside a hole closes the
            // preceding accepted transition.
            let mut rewards = Vec::new();
            let mut values = Vec::new();
            let mut boundaries: Vec<Boundary> = Vec::new();
            for t in &batch.transitions {
                if t.accepted {
                    rewards.push(t.reward * scale);
                    values.push(t.value);
                    boundaries.push(t.boundary());
                } else if t.terminal || t.truncated {
                    if let Some(b) = boundaries.last_mut() {
                        if *b == Boundary::Continue {
                            *b = t.boundary();
                        }
                    }
                }
            }
            let r = discounted_returns(&rewards, &boundaries, batch.bootstrap_value, hyper.gamma);
            let a = gae_advantages(
                &rewards,
                &values,
                &boundaries,
                batch.bootstrap_value,
                hyper.gamma,
                hyper.lambda,
            );
            (r, a)
        } else {
            let rewards: Vec<f64> = batch.transitions.iter().map(|t| t.reward * scale).collect();
            let values: Vec<f64> = batch.transitions.iter().map(|t| t.value).collect();
            let boundaries: Vec<Boundary> = batch.transitions.iter().map(Transition::boundary).collect();
            let r = discounted_returns(&rewards, &boundaries, batch.bootstrap_value, hyper.gamma);
            let a = gae_advantages(
                &rewards,
                &values,
                &boundaries,
                batch.bootstrap_value,
                hyper.gamma,
                hyper.lambda,
            );
            let keep = |xs: Vec<f64>| -> Vec<f64> {
                xs.into_iter()
                    .zip(&batch.transitions)
                    .filter(|(_, t)| t.accepted)
                    .map(|(x, _)| x)
                    .collect()
            };
            (keep(r), keep(a))
        };
        let values: Vec<f64> = batch.accepted().map(|t| t.value).collect();
        let vex_batch = vex_of_batch(&returns, &values)?.vex;
        let vex_target = if self.config.variant == Variant::AdjustedVex {
            adjusted_vex(vex_batch, returns.len(), self.config.adjusted_vex_predictors)?
        } else {
            vex_batch
        };
        Ok(Targets {
            advantages: normalize_advantages(&advantages),
            returns,
            vex_batch,
            vex_target,
        })
    }

    /// One collection plus one update. Evaluation is left to the caller.
    pub fn iterate(&mut self) -> Result<UpdateRecord> {
        let started = Instant::now();
        let batch = self.collect_batch()?;
        let targets = self.compute_targets(&batch)?;
        let mut ub = UpdateBatch {
            vex_target: targets.vex_target,
            advantages: targets.advantages,
            returns: targets.returns,
            ..Default::default()
        };
        for t in batch.accepted() {
            ub.obs.push(t.obs.clone());
            ub.actions.push(t.action.clone());
            ub.old_log_probs.push(t.log_prob);
        }
        let hyper = self.config.update_hyper();
        let report = update(&mut self.model, &mut self.optimizers, &ub, &hyper, &mut self.rng)?;
        self.updates += 1;
        if report.skipped_minibatches > 0 {
            self.nonfinite_streak += 1;
            if self.nonfinite_streak >= MAX_NONFINITE_UPDATES {
                return Err(Error::Diverged(format!(
                    "non-finite loss in {MAX_NONFINITE_UPDATES} consecutive updates (last: update {})",
                    self.updates
                )));
            }
        } else {
            self.nonfinite_streak = 0;
        }
        let eps = &batch.stats.episode_returns;
        let (return_mean, return_std) = if eps.is_empty() {
            (None, None)
        } else {
            let n = eps.len() as f64;
            let m = eps.iter().sum::<f64>() / n;
            let v = eps.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            (Some(m), Some(v.sqrt()))
        };
        Ok(UpdateRecord {
            update: self.updates,
            env_steps: self.env_steps,
            accepted_steps: self.accepted_steps,
            episodes: self.episodes,
            return_mean,
            return_std,
            eval_return: None,
            vex_batch: targets.vex_batch,
            rejection_fraction: batch.stats.rejection_fraction(),
            report,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Alternates collection and update until `total_steps` environment steps
    /// were visited, evaluating every `eval_every` updates and after the last.
    pub fn train<F>(&mut self, schedule: TrainSchedule, mut sink: F) -> Result<()>
    where
        F: FnMut(&UpdateRecord) -> Result<()>,
    {
        if schedule.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        while self.env_steps < schedule.total_steps {
            let mut rec = self.iterate()?;
            let last = self.env_steps >= schedule.total_steps;
            if last || rec.update % schedule.eval_every == 0 {
                let t0 = Instant::now();
                rec.eval_return = Some(self.evaluate(schedule.eval_episodes)?);
                rec.wall_ms += t0.elapsed().as_secs_f64() * 1e3;
            }
            sink(&rec)?;
        }
        Ok(())
    }

    /// Mean undiscounted return of the deterministic policy over `episodes`
    /// episodes. Episode seeds depend only on the run seed, so successive
    /// evaluations face the same start states.
    pub fn evaluate(&self, episodes: usize) -> Result<f64> {
        evaluate_policy(
            &self.model,
            &self.obs_norm,
            &self.env_name,
            episodes,
            self.seed ^ EVAL_STREAM_SALT,
        )
    }

    /// Model, normalizer statistics and run metadata.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint {
            meta: serde_json::json!({
                "env": self.env_name,
                "variant": self.config.variant.name(),
                "seed": self.seed,
                "updates": self.updates,
                "env_steps": self.env_steps,
                "obs_norm_enabled": self.obs_norm.enabled(),
            }),
            sections: Vec::new(),
        };
        self.model.write_checkpoint(&mut ck);
        ck.push_vector("obs_norm.mean", self.obs_norm.mean());
        ck.push_vector("obs_norm.var", self.obs_norm.var());
        ck.push_vector("obs_norm.count", &[self.obs_norm.count()]);
        ck
    }
}

/// Restores the model and observation normalizer written by
/// [`Agent::checkpoint`].
pub fn policy_from_checkpoint(ckpt: &Checkpoint) -> Result<(ActorCritic, ObsNormalizer)> {
    let model = ActorCritic::read_checkpoint(ckpt)?;
    let enabled = ckpt.meta["obs_norm_enabled"]
        .as_bool()
        .ok_or_else(|| Error::Checkpoint("meta.obs_norm_enabled missing".into()))?;
    let count = ckpt.section("obs_norm.count")?.data.first().copied().unwrap_or(0.0);
    let norm = ObsNormalizer::from_stats(
        ckpt.section("obs_norm.mean")?.data.clone(),
        ckpt.section("obs_norm.var")?.data.clone(),
        count,
        enabled,
    );
    Ok((model, norm))
}

/// Mean undiscounted return of mean-action episodes with frozen observation
/// statistics. Reads nothing but its arguments.
pub fn evaluate_policy(
    model: &ActorCritic,
    obs_norm: &ObsNormalizer,
    env_name: &str,
    episodes: usize,
    seed: u64,
) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::Usage("evaluation needs at least one episode".into()));
    }
    let mut env = make_env(env_name)?;
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut s = env.reset(seeds.next_u64());
        loop {
            let action = model.policy_mean(&obs_norm.normalize(&s))?;
            let step = env.step(&action)?;
            total += step.reward;
            if step.done() {
                break;
            }
            s = step.next_state;
        }
    }
    Ok(total / episodes as f64)
}
