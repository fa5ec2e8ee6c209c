use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradnet::loss::{accuracy, cross_entropy, mse, softmax};
use crate::ndcore::{Matrix, RegularizedSystem};
use crate::tasks::{Episode, Targets};

use super::adapt::{adapt_embedded, KernelAdaptation};
use super::kernel::{rbf_from_sq_dists, sq_dists, KernelParams};

/// Weights of the two regularizers added to the query loss.
///
/// The gradient-norm term enters as `mu_sign · mu · ‖∇_f L‖²`; `mu_sign = +1`
/// penalizes large gradients, `-1` rewards them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegWeights {
    pub mu: f64,
    pub gamma: f64,
    pub mu_sign: f64,
}

impl Default for RegWeights {
    fn default() -> Self {
        Self { mu: 0.0, gamma: 0.0, mu_sign: 1.0 }
    }
}

impl RegWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.gamma >= 0.0 && self.mu.is_finite() && self.gamma.is_finite()) {
            return Err(Error::Config(format!("regularization weights must be non-negative: {self:?}")));
        }
        if self.mu_sign != 1.0 && self.mu_sign != -1.0 {
            return Err(Error::Config(format!("mu_sign must be +1 or -1, got {}", self.mu_sign)));
        }
        Ok(())
    }
}

/// How much the fit depends on its training data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoRegularizer {
    /// `tr(K (K + λI)⁻¹)`, in `[0, n]`.
    #[default]
    EffectiveDof,
    /// `log det(I + K/λ)`.
    LogDet,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveOptions {
    pub info: InfoRegularizer,
    /// Treat the solved coefficients as constants when differentiating.
    pub first_order: bool,
}

/// Terms of one task's objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub total: f64,
    pub query_loss: f64,
    pub grad_penalty: f64,
    pub info_penalty: f64,
    /// Query MSE for regression, query accuracy for classification.
    pub query_metric: f64,
}

/// Value and partials `(∂/∂K, ∂/∂λ)` of the information regularizer.
fn info_terms(system: &RegularizedSystem, kernel: &Matrix, kind: InfoRegularizer) -> (f64, Matrix, f64) {
    let n = kernel.rows() as f64;
    let lambda = system.lambda();
    let inv = system.inverse();
    match kind {
        InfoRegularizer::EffectiveDof => {
            let inv2 = inv.matmul(&inv).expect("square");
            let value = n - lambda * inv.trace();
            (value, inv2.scaled(lambda), lambda * inv2.trace() - inv.trace())
        }
        InfoRegularizer::LogDet => {
            (system.log_det() - n * lambda.ln(), inv.clone(), inv.trace() - n / lambda)
        }
    }
}

/// Information regularizer of the support fit (effective degrees of freedom).
pub fn info_penalty(kp: &KernelParams, episode: &Episode) -> Result<f64> {
    info_penalty_with(kp, episode, InfoRegularizer::EffectiveDof)
}

pub fn info_penalty_with(kp: &KernelParams, episode: &Episode, kind: InfoRegularizer) -> Result<f64> {
    let a = super::adapt(episode, kp)?;
    Ok(info_terms(&a.system, &a.kernel, kind).0)
}

/// Per-point loss gradients with respect to the prediction, for an
/// unaveraged loss: `2(f − y)` for squared error, `softmax(f) − onehot(y)`
/// for cross-entropy.
fn pointwise_loss_grads(f: &Matrix, targets: &Targets, n_way: usize) -> Matrix {
    let y = targets.to_matrix(n_way);
    match targets {
        Targets::Real(_) => f.sub(&y).expect("shapes match").scaled(2.0),
        Targets::Labels(_) => softmax(f).sub(&y).expect("shapes match"),
    }
}

/// `Σ_j ‖∂ℓ(f(x_j), y_j)/∂f‖²` over the episode's query (meta-update) set.
pub fn grad_norm_penalty(a: &KernelAdaptation, episode: &Episode) -> Result<f64> {
    let f = a.predict(&episode.query_x)?;
    let g = pointwise_loss_grads(&f, &episode.query_y, episode.n_way);
    Ok(g.data().iter().map(|v| v * v).sum())
}

/// Gradient of [`grad_norm_penalty`] with respect to the predictions.
fn grad_penalty_backward(f: &Matrix, targets: &Targets, n_way: usize) -> Matrix {
    let h = pointwise_loss_grads(f, targets, n_way);
    match targets {
        Targets::Real(_) => h.scaled(4.0),
        Targets::Labels(_) => {
            let p = softmax(f);
            Matrix::from_fn(f.rows(), f.cols(), |i, k| {
                let hp: f64 = h.row(i).iter().zip(p.row(i)).map(|(a, b)| a * b).sum();
                2.0 * p[(i, k)] * (h[(i, k)] - hp)
            })
        }
    }
}

fn query_loss(f: &Matrix, targets: &Targets) -> Result<(f64, Matrix, f64)> {
    match targets {
        Targets::Real(y) => {
            let (l, g) = mse(f, y)?;
            Ok((l, g, l))
        }
        Targets::Labels(y) => {
            let (l, g) = cross_entropy(f, y)?;
            Ok((l, g, accuracy(f, y)))
        }
    }
}

/// Task objective with default options; see [`task_objective_with`].
pub fn task_objective(episode: &Episode, kp: &KernelParams, rw: &RegWeights) -> Result<(f64, KernelParams)> {
    let (v, g) = task_objective_with(episode, kp, rw, ObjectiveOptions::default())?;
    Ok((v.total, g))
}

/// Query loss of the closed-form fit plus the weighted regularizers, and its
/// gradient with respect to every kernel parameter.
///
/// Reverse mode runs through the prediction, the regularized solve (via its
/// adjoint, reusing the adaptation's factorization), the kernel entries and
/// finally the embedding network.
pub fn task_objective_with(
    episode: &Episode,
    kp: &KernelParams,
    rw: &RegWeights,
    opts: ObjectiveOptions,
) -> Result<(ObjectiveValue, KernelParams)> {
    let n = episode.support_x.rows();
    let x = episode.support_x.vstack(&episode.query_x)?;
    let (z, mut tape) = kp.embed_taped(&x)?;
    let zs = z.slice_rows(0, n);
    let zq = z.slice_rows(n, z.rows());
    let sigma = kp.sigma();
    let lambda = kp.lambda();

    let a = adapt_embedded(episode, kp, zs.clone())?;
    let ds = sq_dists(&zs, &zs);
    let dq = sq_dists(&zq, &zs);
    let kq = rbf_from_sq_dists(&dq, sigma);
    let f = kq.matmul(&a.alpha)?;

    let (lq, mut grad_f, metric) = query_loss(&f, &episode.query_y)?;
    let pointwise = pointwise_loss_grads(&f, &episode.query_y, episode.n_way);
    let grad_penalty: f64 = pointwise.data().iter().map(|v| v * v).sum();
    let (info_value, info_dk, info_dl) = info_terms(&a.system, &a.kernel, opts.info);
    let mu_eff = rw.mu_sign * rw.mu;
    let total = lq + mu_eff * grad_penalty + rw.gamma * info_value;
    if !total.is_finite() {
        return Err(Error::NonFinite("kernel task objective"));
    }

    if mu_eff != 0.0 {
        let gp = grad_penalty_backward(&f, &episode.query_y, episode.n_way);
        grad_f = grad_f.add(&gp.scaled(mu_eff))?;
    }

    // f = Kq α
    let grad_kq = grad_f.matmul_t(&a.alpha)?;
    let grad_alpha = kq.t_matmul(&grad_f)?;

    let mut grad_k = Matrix::zeros(n, n);
    let mut grad_lambda = 0.0;
    if !opts.first_order {
        let adj = a.system.adjoint(&a.alpha, &grad_alpha)?;
        grad_k = adj.grad_k;
        grad_lambda = adj.grad_lambda;
    }
    if rw.gamma != 0.0 {
        grad_k = grad_k.add(&info_dk.scaled(rw.gamma))?;
        grad_lambda += rw.gamma * info_dl;
    }

    // k = exp(−d / 2σ²): ∂k/∂log σ = k d / σ², ∂k/∂d = −k / 2σ².
    let inv_s2 = 1.0 / (sigma * sigma);
    let mut grad_log_sigma = 0.0;
    let e = zs.cols();
    let mut grad_zs = Matrix::zeros(n, e);
    let mut grad_zq = Matrix::zeros(zq.rows(), e);
    for i in 0..n {
        for j in 0..n {
            let k = a.kernel[(i, j)];
            let g = grad_k[(i, j)];
            grad_log_sigma += g * k * ds[(i, j)] * inv_s2;
            if i != j {
                // K_ij and K_ji both move with z_i; grad_k is symmetric.
                let c = -2.0 * g * k * inv_s2;
                for t in 0..e {
                    grad_zs[(i, t)] += c * (zs[(i, t)] - zs[(j, t)]);
                }
            }
        }
    }
    for i in 0..zq.rows() {
        for j in 0..n {
            let k = kq[(i, j)];
            let g = grad_kq[(i, j)];
            grad_log_sigma += g * k * dq[(i, j)] * inv_s2;
            let c = -g * k * inv_s2;
            for t in 0..e {
                let diff = zq[(i, t)] - zs[(j, t)];
                grad_zq[(i, t)] += c * diff;
                grad_zs[(j, t)] -= c * diff;
            }
        }
    }

    let embed = match tape.as_mut() {
        Some(t) => Some(t.backward(&grad_zs.vstack(&grad_zq)?)?.0),
        None => None,
    };
    let grads = KernelParams { log_sigma: grad_log_sigma, log_lambda: grad_lambda * lambda, embed };
    let value = ObjectiveValue { total, query_loss: lq, grad_penalty, info_penalty: info_value, query_metric: metric };
    Ok((value, grads))
}
