//! Query-efficient black-box adversarial attacks with zeroth-order natural
//! gradient descent.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: a from-scratch softmax MLP, exposed to attackers through a
//!   counted query interface, plus exact input gradients for white-box use.
//! - [`loss`]: the clamped log-margin attack loss, the success predicate and
//!   the projection onto the L∞/box feasible set.
//! - [`zograd`]: random directions and the joint estimate of the loss gradient
//!   and the score function from one shared batch of `R + 1` queries.
//! - [`fim`]: Fisher information (exact, outer product, Monte Carlo), damping,
//!   and the O(d) rank-one natural gradient step.
//! - [`attack`]: ZO-NGD, the ZO-PGD baseline and white-box NGD/PGD.
//! - [`geometry`]: numerical checks tying the Fisher information to the KL
//!   divergence.
//! - [`harness`]: datasets, campaigns, ablations, tuning and reports.

pub mod attack;
pub mod error;
pub mod fim;
pub mod geometry;
pub mod harness;
pub mod loss;
pub mod model;
pub mod rng;
pub mod zograd;

pub use error::{Error, Result};
