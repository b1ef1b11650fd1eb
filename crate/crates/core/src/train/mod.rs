//! Synthetic domain-shift tasks and the loop that trains adapters on them.
//!
//! A task pairs a source weight `w0` with a shifted teacher `w_tgt`; inputs
//! are standard normal columns and the loss is MSE against teacher outputs.
//! The host is a single adapted linear layer; [`TwoLayerHost`] stacks two
//! with a `tanh` in between.

mod gradcheck;
mod host;
mod optim;
mod run;
mod task;

pub use gradcheck::{central_difference, check_adapter_gradient, GradCheck, FD_STEP};
pub use host::TwoLayerHost;
pub use optim::{
    adam_step, sgd_step, AdamState, Optimizer, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
};
pub use run::{train_run, RunResult, TrainConfig};
pub use task::{
    gen_batch, make_dense_shift, make_inclass_shift, make_inclass_shift_with_truth,
    make_lowrank_shift, make_lowrank_shift_with_factors, mse_grad, mse_loss, InClassTruth,
    ShiftKind, ShiftTask, HELD_OUT_SAMPLES,
};

#[cfg(test)]
mod tests;
