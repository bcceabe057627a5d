//! Discounted returns and generalized advantage estimation over a stream of
//! steps that may span several episodes.

/// How the episode continues after a step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Boundary {
    /// The next step belongs to the same episode.
    Continue,
    /// The episode ended in a terminal state; the tail is worth 0.
    Terminal,
    /// The episode was cut by a time limit; the tail is worth the value of
    /// the (unseen) next state.
    Truncated { next_value: f64 },
}

/// Tail value after step `t` and whether the recursion continues into `t + 1`.
fn tail(boundaries: &[Boundary], t: usize, bootstrap_value: f64) -> (Option<f64>, bool) {
    match boundaries[t] {
        Boundary::Terminal => (Some(0.0), false),
        Boundary::Truncated { next_value } => (Some(next_value), false),
        Boundary::Continue if t + 1 == boundaries.len() => (Some(bootstrap_value), false),
        Boundary::Continue => (None, true),
    }
}

/// `R_t = r_t + γ R_{t+1}` inside each episode, closed with 0 at terminal
/// steps, the next-state value at truncations and `bootstrap_value` after
/// the last step when it does not end an episode.
pub fn discounted_returns(
    rewards: &[f64],
    boundaries: &[Boundary],
    bootstrap_value: f64,
    gamma: f64,
) -> Vec<f64> {
    assert_eq!(rewards.len(), boundaries.len(), "rewards and boundaries differ in length");
    let mut out = vec![0.0; rewards.len()];
    let mut running = 0.0;
    for t in (0..rewards.len()).rev() {
        let next = match tail(boundaries, t, bootstrap_value) {
            (Some(v), _) => v,
            (None, _) => running,
        };
        running = rewards[t] + gamma * next;
        out[t] = running;
    }
    out
}

/// Generalized advantage estimates `A_t = Σ (γλ)^k δ_{t+k}` with
/// `δ_t = r_t + γ V(s_{t+1}) − V(s_t)`, respecting episode boundaries.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    boundaries: &[Boundary],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    assert_eq!(rewards.len(), values.len(), "rewards and values differ in length");
    assert_eq!(rewards.len(), boundaries.len(), "rewards and boundaries differ in length");
    let mut out = vec![0.0; rewards.len()];
    let mut running = 0.0;
    for t in (0..rewards.len()).rev() {
        let (next_value, carry) = match tail(boundaries, t, bootstrap_value) {
            (Some(v), _) => (v, false),
            (None, c) => (values[t + 1], c),
        };
        let delta = rewards[t] + gamma * next_value - values[t];
        running = if carry {
            delta + gamma * lambda * running
        } else {
            delta
        };
        out[t] = running;
    }
    out
}

/// Shifts and scales to zero mean and unit (population) standard deviation.
/// A constant input maps to zeros.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    if adv.is_empty() {
        return Vec::new();
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    adv.iter().map(|a| (a - mean) / std).collect()
}
