//! Parameter-efficient fine-tuning toolkit.
//!
//! Six adapter parameterisations (LoRA, VeRA, DoRA, PiSSA, SVFT and SSVD
//! with strict, approximate and unconstrained rotations) built on a small
//! dense linear algebra kernel, a one-sided Jacobi SVD and Cayley-transform
//! rotations, plus synthetic domain-shift tasks for training them.

pub mod adapters;
pub mod densela;
pub mod error;
pub mod rotations;
pub mod svd;
pub mod train;

pub use error::{Error, Result};
