use crate::error::{Error, Result};
use crate::gradnet::{forward, NetParams, Tape};
use crate::ndcore::{sq_dist, Matrix};

/// Bandwidth initialization.
pub const INIT_SIGMA: f64 = 1.0;
/// Ridge-weight initialization.
pub const INIT_LAMBDA: f64 = 0.1;

/// Trainable kernel hyperparameters, in log space, plus an optional embedding
/// network the kernel acts on. Without an embedding the kernel sees raw inputs.
///
/// Flat order: `[log_sigma, log_lambda, embed...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    pub log_sigma: f64,
    pub log_lambda: f64,
    pub embed: Option<NetParams>,
}

impl KernelParams {
    pub fn new(sigma: f64, lambda: f64, embed: Option<NetParams>) -> Result<Self> {
        if !(sigma > 0.0 && lambda > 0.0 && sigma.is_finite() && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma {sigma} and lambda {lambda} must be positive")));
        }
        Ok(Self { log_sigma: sigma.ln(), log_lambda: lambda.ln(), embed })
    }

    pub fn initial(embed: Option<NetParams>) -> Self {
        Self::new(INIT_SIGMA, INIT_LAMBDA, embed).expect("positive constants")
    }

    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }

    pub fn lambda(&self) -> f64 {
        self.log_lambda.exp()
    }

    pub fn num_params(&self) -> usize {
        2 + self.embed.as_ref().map_or(0, NetParams::num_params)
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = vec![self.log_sigma, self.log_lambda];
        if let Some(e) = &self.embed {
            out.extend(e.flatten());
        }
        out
    }

    pub fn unflatten(&self, flat: &[f64]) -> Result<KernelParams> {
        if flat.len() != self.num_params() {
            return Err(Error::LengthMismatch { expected: self.num_params(), got: flat.len() });
        }
        if !flat[..2].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("kernel hyperparameter"));
        }
        let embed = self.embed.as_ref().map(|e| e.unflatten(&flat[2..])).transpose()?;
        Ok(KernelParams { log_sigma: flat[0], log_lambda: flat[1], embed })
    }

    pub fn zeros_like(&self) -> KernelParams {
        KernelParams { log_sigma: 0.0, log_lambda: 0.0, embed: self.embed.as_ref().map(NetParams::zeros_like) }
    }

    /// Map inputs into the kernel's input space.
    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        match &self.embed {
            Some(net) => net.predict(x),
            None => Ok(x.clone()),
        }
    }

    /// Like [`embed`](Self::embed), keeping the tape for a reverse sweep.
    pub(crate) fn embed_taped(&self, x: &Matrix) -> Result<(Matrix, Option<Tape<'_>>)> {
        match &self.embed {
            Some(net) => {
                let (z, tape) = forward(net, x)?;
                Ok((z, Some(tape)))
            }
            None => Ok((x.clone(), None)),
        }
    }
}

/// Gaussian RBF `exp(−‖a − b‖² / 2σ²)`.
pub fn rbf_kernel(a: &[f64], b: &[f64], sigma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("rbf on {} and {} dims", a.len(), b.len())));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {sigma}")));
    }
    Ok((-sq_dist(a, b) / (2.0 * sigma * sigma)).exp())
}

/// Squared distances between the rows of `a` and the rows of `b`.
pub(crate) fn sq_dists(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), b.rows(), |i, j| sq_dist(a.row(i), b.row(j)))
}

pub(crate) fn rbf_from_sq_dists(d: &Matrix, sigma: f64) -> Matrix {
    let s = 1.0 / (2.0 * sigma * sigma);
    Matrix::from_fn(d.rows(), d.cols(), |i, j| (-d[(i, j)] * s).exp())
}

/// Kernel matrix between the rows of `a` and the rows of `b`.
pub fn kernel_matrix(a: &Matrix, b: &Matrix, sigma: f64) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch(format!("kernel between {} and {} dims", a.cols(), b.cols())));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {sigma}")));
    }
    Ok(rbf_from_sq_dists(&sq_dists(a, b), sigma))
}
