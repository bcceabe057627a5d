use rand::Rng;

use super::dense::{Activation, DenseNet};
use super::policy::GaussianPolicy;
use crate::error::{Error, Result};

const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;
const POLICY_OUTPUT_GAIN: f64 = 0.01;
const VALUE_OUTPUT_GAIN: f64 = 1.0;
const VEX_OUTPUT_GAIN: f64 = 0.01;

/// Value function and variance-explained predictor reading one shared trunk.
#[derive(Clone, Debug)]
pub struct ValueVexNet {
    pub trunk: DenseNet,
    pub value_head: DenseNet,
    pub vex_head: DenseNet,
}

impl ValueVexNet {
    pub fn predict(&self, obs: &[f64]) -> Result<(f64, f64)> {
        let h = self.trunk.forward(obs)?;
        Ok(self.predict_from_features(&h)?)
    }

    pub fn predict_from_features(&self, h: &[f64]) -> Result<(f64, f64)> {
        let v = self.value_head.forward(h)?[0];
        let x = self.vex_head.forward(h)?[0];
        Ok((v, x))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelShape {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden: Vec<usize>,
    /// Policy mean reads the value trunk instead of its own network.
    pub shared_trunk: bool,
}

/// The parameter tensors of an [`ActorCritic`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tensor {
    MeanNet,
    LogStd,
    Trunk,
    ValueHead,
    VexHead,
}

impl Tensor {
    pub const ALL: [Tensor; 5] = [
        Tensor::MeanNet,
        Tensor::LogStd,
        Tensor::Trunk,
        Tensor::ValueHead,
        Tensor::VexHead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tensor::MeanNet => "policy.mean_net",
            Tensor::LogStd => "policy.log_std",
            Tensor::Trunk => "critic.trunk",
            Tensor::ValueHead => "critic.value_head",
            Tensor::VexHead => "critic.vex_head",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ActorCritic {
    pub policy: GaussianPolicy,
    pub critic: ValueVexNet,
    shape: ModelShape,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub value: f64,
    pub vex: f64,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(shape: &ModelShape, rng: &mut R) -> Result<Self> {
        if shape.hidden.is_empty() {
            return Err(Error::Config("at least one hidden layer is required".into()));
        }
        let width = *shape.hidden.last().unwrap();
        let mut trunk_sizes = vec![shape.state_dim];
        trunk_sizes.extend(&shape.hidden);

        let mean_sizes = if shape.shared_trunk {
            vec![width, shape.action_dim]
        } else {
            let mut s = trunk_sizes.clone();
            s.push(shape.action_dim);
            s
        };
        let mut mean_net = DenseNet::new(&mean_sizes, Activation::Identity)?;
        mean_net.init_orthogonal(rng, HIDDEN_GAIN, POLICY_OUTPUT_GAIN);

        let mut trunk = DenseNet::new(&trunk_sizes, Activation::Tanh)?;
        trunk.init_orthogonal(rng, HIDDEN_GAIN, HIDDEN_GAIN);
        let mut value_head = DenseNet::new(&[width, 1], Activation::Identity)?;
        value_head.init_orthogonal(rng, HIDDEN_GAIN, VALUE_OUTPUT_GAIN);
        let mut vex_head = DenseNet::new(&[width, width, 1], Activation::Identity)?;
        vex_head.init_orthogonal(rng, HIDDEN_GAIN, VEX_OUTPUT_GAIN);

        Ok(Self {
            policy: GaussianPolicy::new(mean_net, 0.0),
            critic: ValueVexNet {
                trunk,
                value_head,
                vex_head,
            },
            shape: shape.clone(),
        })
    }

    /// Reassembles a model from already-built parts.
    pub fn from_parts(
        shape: ModelShape,
        policy: GaussianPolicy,
        critic: ValueVexNet,
    ) -> Result<Self> {
        let feat = *shape.hidden.last().unwrap_or(&0);
        let policy_in = if shape.shared_trunk { feat } else { shape.state_dim };
        let ok = policy.mean_net.input_dim() == policy_in
            && policy.action_dim() == shape.action_dim
            && critic.trunk.input_dim() == shape.state_dim
            && critic.value_head.input_dim() == critic.trunk.output_dim()
            && critic.vex_head.input_dim() == critic.trunk.output_dim();
        if !ok {
            return Err(Error::Config("model parts do not match the declared shape".into()));
        }
        Ok(Self {
            policy,
            critic,
            shape,
        })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn shared_trunk(&self) -> bool {
        self.shape.shared_trunk
    }

    pub fn predict(&self, obs: &[f64]) -> Result<Prediction> {
        let h = self.critic.trunk.forward(obs)?;
        let (value, vex) = self.critic.predict_from_features(&h)?;
        let mean = if self.shape.shared_trunk {
            self.policy.mean(&h)?
        } else {
            self.policy.mean(obs)?
        };
        Ok(Prediction { mean, value, vex })
    }

    pub fn policy_mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        if self.shape.shared_trunk {
            let h = self.critic.trunk.forward(obs)?;
            self.policy.mean(&h)
        } else {
            self.policy.mean(obs)
        }
    }

    pub fn tensor(&self, t: Tensor) -> &[f64] {
        match t {
            Tensor::MeanNet => self.policy.mean_net.params(),
            Tensor::LogStd => &self.policy.log_std,
            Tensor::Trunk => self.critic.trunk.params(),
            Tensor::ValueHead => self.critic.value_head.params(),
            Tensor::VexHead => self.critic.vex_head.params(),
        }
    }

    pub fn tensor_mut(&mut self, t: Tensor) -> &mut [f64] {
        match t {
            Tensor::MeanNet => self.policy.mean_net.params_mut(),
            Tensor::LogStd => &mut self.policy.log_std,
            Tensor::Trunk => self.critic.trunk.params_mut(),
            Tensor::ValueHead => self.critic.value_head.params_mut(),
            Tensor::VexHead => self.critic.vex_head.params_mut(),
        }
    }

    /// Every parameter, in [`Tensor::ALL`] order.
    pub fn flat_params(&self) -> Vec<f64> {
        Tensor::ALL
            .iter()
            .flat_map(|&t| self.tensor(t).iter().copied())
            .collect()
    }

    /// Policy parameters only (mean network and log-std).
    pub fn policy_params(&self) -> Vec<f64> {
        let mut p = self.tensor(Tensor::MeanNet).to_vec();
        p.extend_from_slice(self.tensor(Tensor::LogStd));
        p
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            tensors: Tensor::ALL.map(|t| vec![0.0; self.tensor(t).len()]),
        }
    }

    /// Layers whose gradient norms are reported for the policy path, as
    /// `(tensor, index range)`, input side first.
    pub fn policy_layers(&self) -> Vec<(Tensor, std::ops::Range<usize>)> {
        let mut out = Vec::new();
        if self.shape.shared_trunk {
            let trunk = &self.critic.trunk;
            out.extend((0..trunk.num_layers()).map(|l| (Tensor::Trunk, trunk.layer_range(l))));
        }
        let mean = &self.policy.mean_net;
        out.extend((0..mean.num_layers()).map(|l| (Tensor::MeanNet, mean.layer_range(l))));
        out
    }
}

/// Gradient buffers shaped like an [`ActorCritic`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    tensors: [Vec<f64>; 5],
}

impl ModelGrads {
    fn index(t: Tensor) -> usize {
        Tensor::ALL.iter().position(|&x| x == t).unwrap()
    }

    pub fn get(&self, t: Tensor) -> &[f64] {
        &self.tensors[Self::index(t)]
    }

    pub fn get_mut(&mut self, t: Tensor) -> &mut [f64] {
        &mut self.tensors[Self::index(t)]
    }

    pub fn scale(&mut self, c: f64) {
        self.tensors
            .iter_mut()
            .flat_map(|v| v.iter_mut())
            .for_each(|g| *g *= c);
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flatten().copied().collect()
    }

    pub fn l2_norm(&self, group: &[Tensor]) -> f64 {
        group
            .iter()
            .flat_map(|&t| self.get(t).iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self, group: &[Tensor]) -> bool {
        group
            .iter()
            .flat_map(|&t| self.get(t).iter())
            .all(|g| g.is_finite())
    }
}
