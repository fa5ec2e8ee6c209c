use crate::error::{Error, Result};
use crate::gradnet::loss::argmax_rows;
use crate::ndcore::{Matrix, RegularizedSystem};
use crate::tasks::Episode;

use super::kernel::{kernel_matrix, KernelParams};

/// The adapted function `f(x) = Σ_j α_j k(z_j, embed(x))` for one task.
#[derive(Debug, Clone)]
pub struct KernelAdaptation {
    pub support_z: Matrix,
    /// `n × outputs`; one column per class for classification.
    pub alpha: Matrix,
    pub targets: Matrix,
    pub params: KernelParams,
    pub classification: bool,
    pub(crate) kernel: Matrix,
    pub(crate) system: RegularizedSystem,
}

/// Fit the support set in closed form with one regularized solve.
pub fn adapt(episode: &Episode, kp: &KernelParams) -> Result<KernelAdaptation> {
    let support_z = kp.embed(&episode.support_x)?;
    adapt_embedded(episode, kp, support_z)
}

pub(crate) fn adapt_embedded(episode: &Episode, kp: &KernelParams, support_z: Matrix) -> Result<KernelAdaptation> {
    if episode.support_y.is_empty() {
        return Err(Error::InsufficientData("empty support set".into()));
    }
    let kernel = kernel_matrix(&support_z, &support_z, kp.sigma())?;
    let system = RegularizedSystem::factor(&kernel, kp.lambda())?;
    let targets = episode.support_y.to_matrix(episode.n_way);
    let alpha = system.solve_columns(&targets)?;
    Ok(KernelAdaptation {
        support_z,
        alpha,
        targets,
        params: kp.clone(),
        classification: episode.is_classification(),
        kernel,
        system,
    })
}

impl KernelAdaptation {
    pub fn kernel(&self) -> &Matrix {
        &self.kernel
    }

    /// Predictions for raw inputs `x` (embedded with the adaptation's parameters).
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.params.embed(x)?;
        self.predict_embedded(&z)
    }

    pub fn predict_embedded(&self, z: &Matrix) -> Result<Matrix> {
        if z.cols() != self.support_z.cols() {
            return Err(Error::DimensionMismatch(format!(
                "query embeds to {} dims, support to {}",
                z.cols(),
                self.support_z.cols()
            )));
        }
        kernel_matrix(z, &self.support_z, self.params.sigma())?.matmul(&self.alpha)
    }

    /// Argmax class per query row (ties to the lower class index).
    pub fn predict_labels(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.predict(x)?))
    }
}

/// Free-function form of [`KernelAdaptation::predict`].
pub fn predict(a: &KernelAdaptation, x: &Matrix) -> Result<Matrix> {
    a.predict(x)
}
