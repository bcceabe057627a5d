/// Running mean / variance normalization of observations.
///
/// Statistics are updated with every observation while training and frozen
/// for evaluation. Normalized values are clipped to `±clip`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObsNormalizer {
    mean: Vec<f64>,
    var: Vec<f64>,
    count: f64,
    clip: f64,
    enabled: bool,
}

const VAR_EPS: f64 = 1e-8;
const PRIOR_COUNT: f64 = 1e-4;

impl ObsNormalizer {
    pub fn new(dim: usize, enabled: bool) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: PRIOR_COUNT,
            clip: 10.0,
            enabled,
        }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn from_stats(mean: Vec<f64>, var: Vec<f64>, count: f64, enabled: bool) -> Self {
        Self {
            mean,
            var,
            count,
            clip: 10.0,
            enabled,
        }
    }

    /// Folds one observation into the running statistics. The prior is a
    /// unit-variance pseudo-sample of weight `PRIOR_COUNT`.
    pub fn update(&mut self, obs: &[f64]) {
        if !self.enabled {
            return;
        }
        let total = self.count + 1.0;
        for ((m, v), &x) in self.mean.iter_mut().zip(self.var.iter_mut()).zip(obs) {
            let delta = x - *m;
            *m += delta / total;
            *v = (*v * self.count + delta * delta * self.count / total) / total;
        }
        self.count = total;
    }

    pub fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        if !self.enabled {
            return obs.to_vec();
        }
        obs.iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(x, (m, v))| ((x - m) / (v + VAR_EPS).sqrt()).clamp(-self.clip, self.clip))
            .collect()
    }
}
