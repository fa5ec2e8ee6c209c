//! Closed-form task adaptation by kernel ridge regression, the regularized
//! task objective, and its gradient with respect to the kernel parameters.

mod adapt;
mod kernel;
mod objective;

pub use adapt::{adapt, predict, KernelAdaptation};
pub use kernel::{kernel_matrix, rbf_kernel, KernelParams, INIT_LAMBDA, INIT_SIGMA};
pub use objective::{
    grad_norm_penalty, info_penalty, info_penalty_with, task_objective, task_objective_with, InfoRegularizer,
    ObjectiveOptions, ObjectiveValue, RegWeights,
};

#[cfg(test)]
mod tests;
