//! Dense networks with hand-written backpropagation, the Gaussian policy, the
//! value / variance-explained critic and the Adam optimizer.

pub mod adam;
pub mod checkpoint;
pub mod dense;
pub mod model;
pub mod policy;

pub use adam::{adam_step, AdamConfig, AdamState, StepOutcome};
pub use checkpoint::Checkpoint;
pub use dense::{Activation, DenseNet, Gradient};
pub use model::{ActorCritic, ModelGrads, ModelShape, Prediction, Tensor, ValueVexNet};
pub use policy::{gaussian_terms, GaussianPolicy, GaussianTerms};
