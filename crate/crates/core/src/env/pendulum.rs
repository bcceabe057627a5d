use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvSpec, Environment, EpisodeClock, StepResult};
use crate::error::{check_dim, Result};

const GRAVITY: f64 = 10.0;
const MASS: f64 = 1.0;
const LENGTH: f64 = 1.0;
const DT: f64 = 0.05;
const MAX_SPEED: f64 = 8.0;
const MAX_TORQUE: f64 = 2.0;

/// Torque-limited pendulum swing-up. Angle 0 is upright. Observations are
/// `(cos θ, sin θ, θ̇)`; the episode never terminates and truncates at 200
/// steps.
///
/// Dynamics (semi-implicit Euler):
/// `θ̇' = clip(θ̇ + (3g/2l · sin θ + 3/(ml²) · u) dt, ±8)`, `θ' = θ + θ̇' dt`.
/// Reward: `-(wrap(θ)² + 0.1 θ̇² + 0.001 u²)` on the pre-step state.
#[derive(Clone, Debug)]
pub struct Pendulum {
    spec: EnvSpec,
    theta: f64,
    theta_dot: f64,
    clock: EpisodeClock,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Pendulum {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "pendulum",
                state_dim: 3,
                action_dim: 1,
                action_low: vec![-MAX_TORQUE],
                action_high: vec![MAX_TORQUE],
                obs_low: vec![-1.0, -1.0, -MAX_SPEED],
                obs_high: vec![1.0, 1.0, MAX_SPEED],
                max_episode_steps: 200,
            },
            theta: 0.0,
            theta_dot: 0.0,
            clock: EpisodeClock::default(),
        }
    }

    /// Starts an episode from an explicit `(θ, θ̇)`.
    pub fn reset_to(&mut self, theta: f64, theta_dot: f64) -> Vec<f64> {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.clock.start();
        self.observe()
    }

    pub fn angle(&self) -> f64 {
        self.theta
    }

    pub fn angular_velocity(&self) -> f64 {
        self.theta_dot
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

/// Maps an angle into `[-π, π)`.
pub fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl Environment for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = rng.random_range(-PI..PI);
        let theta_dot = rng.random_range(-1.0..1.0);
        self.reset_to(theta, theta_dot)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        self.clock.check_can_step()?;
        check_dim("pendulum action", 1, action.len())?;
        let u = action[0].clamp(-MAX_TORQUE, MAX_TORQUE);
        let th = wrap_angle(self.theta);
        let reward = -(th * th + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u);

        let accel = 3.0 * GRAVITY / (2.0 * LENGTH) * self.theta.sin()
            + 3.0 / (MASS * LENGTH * LENGTH) * u;
        self.theta_dot = (self.theta_dot + accel * DT).clamp(-MAX_SPEED, MAX_SPEED);
        self.theta += self.theta_dot * DT;

        let truncated = self.clock.tick(false, self.spec.max_episode_steps);
        Ok(StepResult {
            next_state: self.observe(),
            reward,
            terminal: false,
            truncated,
        })
    }
}
