use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvSpec, Environment, EpisodeClock, StepResult};
use crate::error::{check_dim, Result};

const DT: f64 = 0.1;
const MAX_SPEED: f64 = 1.0;
const ARENA: f64 = 2.0;
const GOAL_RADIUS: f64 = 0.05;

/// A point mass in the plane driven by acceleration commands in `[-1, 1]²`
/// towards a goal at the origin. Observations are `(x, y, vx, vy)`.
///
/// Dynamics: `v' = clip(v + a dt, ±1)`, `p' = clip(p + v' dt, ±2)` with
/// `dt = 0.1`. Reward is `-‖p - goal‖` on the pre-step position; the episode
/// terminates once `‖p' - goal‖ < 0.05` and truncates at 300 steps.
#[derive(Clone, Debug)]
pub struct PointMass {
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    goal: [f64; 2],
    clock: EpisodeClock,
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl PointMass {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "pointmass",
                state_dim: 4,
                action_dim: 2,
                action_low: vec![-1.0; 2],
                action_high: vec![1.0; 2],
                obs_low: vec![-ARENA, -ARENA, -MAX_SPEED, -MAX_SPEED],
                obs_high: vec![ARENA, ARENA, MAX_SPEED, MAX_SPEED],
                max_episode_steps: 300,
            },
            pos: [0.0; 2],
            vel: [0.0; 2],
            goal: [0.0; 2],
            clock: EpisodeClock::default(),
        }
    }

    pub fn reset_to(&mut self, pos: [f64; 2], vel: [f64; 2]) -> Vec<f64> {
        self.pos = pos;
        self.vel = vel;
        self.clock.start();
        self.observe()
    }

    pub fn goal(&self) -> [f64; 2] {
        self.goal
    }

    fn distance(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.goal[0]).hypot(p[1] - self.goal[1])
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }
}

impl Environment for PointMass {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        self.reset_to(pos, [0.0, 0.0])
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        self.clock.check_can_step()?;
        check_dim("pointmass action", 2, action.len())?;
        let reward = -self.distance(self.pos);
        for i in 0..2 {
            let a = action[i].clamp(-1.0, 1.0);
            self.vel[i] = (self.vel[i] + a * DT).clamp(-MAX_SPEED, MAX_SPEED);
            self.pos[i] = (self.pos[i] + self.vel[i] * DT).clamp(-ARENA, ARENA);
        }
        let terminal = self.distance(self.pos) < GOAL_RADIUS;
        let truncated = self.clock.tick(terminal, self.spec.max_episode_steps);
        Ok(StepResult {
            next_state: self.observe(),
            reward,
            terminal,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_state_is_within_bounds() {
        let mut env = PointMass::new();
        for seed in 0..500 {
            let s = env.reset(seed);
            let spec = env.spec();
            for i in 0..4 {
                assert!(s[i] >= spec.obs_low[i] && s[i] <= spec.obs_high[i]);
            }
            assert!(s[0].abs() <= 1.0 && s[1].abs() <= 1.0);
        }
    }

    #[test]
    fn at_goal_with_zero_action_is_terminal_with_zero_reward() {
        let mut env = PointMass::new();
        env.reset_to([0.0, 0.0], [0.0, 0.0]);
        let r = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(r.reward, 0.0);
        assert!(r.terminal);
        assert!(!r.truncated);
    }

    #[test]
    fn reward_is_negated_distance() {
        let mut env = PointMass::new();
        env.reset_to([0.3, -0.4], [0.0, 0.0]);
        let r = env.step(&[0.0, 0.0]).unwrap();
        assert!((r.reward + 0.5).abs() < 1e-15);
        assert!(!r.terminal);
    }

    #[test]
    fn states_stay_in_the_arena() {
        let mut env = PointMass::new();
        env.reset_to([1.9, -1.9], [1.0, -1.0]);
        for _ in 0..100 {
            let r = env.step(&[5.0, -5.0]).unwrap();
            let s = &r.next_state;
            assert!(s[0] <= ARENA && s[1] >= -ARENA);
            assert!(s[2].abs() <= MAX_SPEED && s[3].abs() <= MAX_SPEED);
            if r.done() {
                break;
            }
        }
    }
}
