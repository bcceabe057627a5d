//! On-policy policy gradients with transition filtering by predicted fraction
//! of variance explained.
//!
//! The crate is organized bottom-up:
//!
//! - [`approximator`]: dense networks, Gaussian policy, value / vex critic, Adam.
//! - [`env`]: seedable pendulum and point-mass tasks.
//! - [`returns`]: discounted returns and GAE.
//! - [`vex`]: batch variance explained, running median, filter predicate.
//! - [`ppo`]: clipped surrogate loss and the minibatch update.
//! - [`agent`]: filtered collection, training loop, evaluation, ablations.
//! - [`harness`]: configuration files, multi-seed runs, CSV metrics, comparison
//!   and plot-data export.

pub mod agent;
pub mod approximator;
pub mod env;
pub mod error;
pub mod harness;
pub mod ppo;
pub mod returns;
pub mod vex;

pub use error::{Error, Result};
