//! Risk-constrained structured LQR: exact and rollout-based objectives,
//! policy gradients, minimax optimizers and a networked microgrid benchmark.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod gains;
pub mod gradients;
pub mod microgrid;
pub mod numlin;
pub mod objective;
pub mod optimize;
pub mod rng;
pub mod system;

pub use error::{Error, Result};
pub use gains::{SparsityPattern, StructuredGain};
pub use objective::{ConstraintSpec, CostSpec, Evaluation, Evaluator, MultiplierBox, Problem};
pub use system::{LtiSystem, NoiseModel};
