//! Seedable continuous-control tasks behind a single interface.

mod normalize;
mod pendulum;
mod pointmass;

pub use normalize::ObsNormalizer;
pub use pendulum::Pendulum;
pub use pointmass::PointMass;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    /// Bounds every observation stays within.
    pub obs_low: Vec<f64>,
    pub obs_high: Vec<f64>,
    pub max_episode_steps: usize,
}

impl EnvSpec {
    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(a, (lo, hi))| a.clamp(*lo, *hi))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// The task itself ended the episode.
    pub terminal: bool,
    /// The step limit ended the episode.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode. The same seed always yields the same state.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Advances one step. Actions are clipped to the declared bounds first.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
}

pub const ENV_NAMES: [&str; 2] = ["pendulum", "pointmass"];

pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    match name {
        "pendulum" => Ok(Box::new(Pendulum::new())),
        "pointmass" => Ok(Box::new(PointMass::new())),
        other => Err(Error::Config(format!(
            "unknown environment {other:?}, expected one of {ENV_NAMES:?}"
        ))),
    }
}

/// Episode bookkeeping shared by the built-in tasks.
#[derive(Clone, Debug, Default)]
struct EpisodeClock {
    steps: usize,
    started: bool,
    finished: bool,
}

impl EpisodeClock {
    fn start(&mut self) {
        *self = Self {
            steps: 0,
            started: true,
            finished: false,
        };
    }

    fn check_can_step(&self) -> Result<()> {
        if !self.started {
            Err(Error::Usage("step called before reset".into()))
        } else if self.finished {
            Err(Error::Usage("step called after the episode ended; reset first".into()))
        } else {
            Ok(())
        }
    }

    /// Records one step and returns the truncation flag.
    fn tick(&mut self, terminal: bool, limit: usize) -> bool {
        self.steps += 1;
        let truncated = !terminal && self.steps >= limit;
        self.finished = terminal || truncated;
        truncated
    }
}
