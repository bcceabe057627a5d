use rand::Rng;
use rand_distr::StandardNormal;

use super::dense::DenseNet;
use crate::error::{check_dim, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Diagonal Gaussian policy with a state-independent log standard deviation.
#[derive(Clone, Debug)]
pub struct GaussianPolicy {
    pub mean_net: DenseNet,
    pub log_std: Vec<f64>,
}

/// Log-density and entropy together with their partial derivatives with
/// respect to the mean and the (unclamped) log standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianTerms {
    pub log_prob: f64,
    pub entropy: f64,
    pub dlogp_dmean: Vec<f64>,
    pub dlogp_dlog_std: Vec<f64>,
    pub dentropy_dlog_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(mean_net: DenseNet, init_log_std: f64) -> Self {
        let dim = mean_net.output_dim();
        Self {
            mean_net,
            log_std: vec![init_log_std; dim],
        }
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn mean(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.mean_net.forward(input)
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|&l| clamp_log_std(l).exp()).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, input: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mean = self.mean(input)?;
        Ok(mean
            .iter()
            .zip(self.std())
            .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect())
    }

    pub fn log_prob_and_entropy(&self, input: &[f64], action: &[f64]) -> Result<(f64, f64)> {
        let mean = self.mean(input)?;
        let t = gaussian_terms(&mean, &self.log_std, action)?;
        Ok((t.log_prob, t.entropy))
    }
}

#[inline]
pub fn clamp_log_std(l: f64) -> f64 {
    l.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

/// Diagonal Gaussian log-density, entropy and their derivatives. The clamp on
/// `log_std` blocks gradient outside `[LOG_STD_MIN, LOG_STD_MAX]`.
pub fn gaussian_terms(mean: &[f64], log_std: &[f64], action: &[f64]) -> Result<GaussianTerms> {
    check_dim("gaussian log_std", mean.len(), log_std.len())?;
    check_dim("gaussian action", mean.len(), action.len())?;
    let d = mean.len();
    let mut t = GaussianTerms {
        log_prob: 0.0,
        entropy: 0.0,
        dlogp_dmean: vec![0.0; d],
        dlogp_dlog_std: vec![0.0; d],
        dentropy_dlog_std: vec![0.0; d],
    };
    for i in 0..d {
        let ls = clamp_log_std(log_std[i]);
        let inside = (LOG_STD_MIN..=LOG_STD_MAX).contains(&log_std[i]);
        let var = (2.0 * ls).exp();
        let diff = action[i] - mean[i];
        let z2 = diff * diff / var;
        t.log_prob += -0.5 * z2 - ls - HALF_LN_2PI;
        t.entropy += 0.5 + HALF_LN_2PI + ls;
        t.dlogp_dmean[i] = diff / var;
        if inside {
            t.dlogp_dlog_std[i] = z2 - 1.0;
            t.dentropy_dlog_std[i] = 1.0;
        }
    }
    Ok(t)
}
