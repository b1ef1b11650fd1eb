//! The six adapter parameterisations behind one contract.
//!
//! | method | effective weight |
//! |---|---|
//! | LoRA  | `W0 + A·Bᵀ` |
//! | VeRA  | `W0 + diag(d)·A·diag(b)·Bᵀ`, `A`, `B` frozen and shared |
//! | DoRA  | `m ⊙ (W0 + A·Bᵀ) / ‖W0 + A·Bᵀ‖_c` (column-wise) |
//! | PiSSA | `A·Bᵀ + Σ_{i>r} σᵢ uᵢ vᵢᵀ`, `A`, `B` from the top-r SVD |
//! | SVFT  | `U·(Σ + M)·Vᵀ`, `M` on a fixed sparse support |
//! | SSVD  | `U·(Σ + ΔΣ)·G·Vᵀ`, `ΔΣ` and `G` acting on the top-k block |

mod checkpoint;
mod spec;
mod state;

pub use checkpoint::{checkpoint_tensor_hash, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use spec::{AdapterSpec, Method, SvftVariant};
pub use state::{AdapterState, VeraShared, DORA_NORM_EPS, VERA_D_INIT};

#[cfg(test)]
mod tests;
