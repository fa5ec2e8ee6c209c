//! Gradient-step task adaptation (MAML) and its first-order variant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradnet::loss::{accuracy, cross_entropy, mse};
use crate::gradnet::{loss_and_grad, NetParams};
use crate::ndcore::{norm, Matrix, Vector};
use crate::tasks::{Episode, Targets};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    #[default]
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerConfig {
    pub inner_lr: f64,
    pub n_steps: usize,
    pub order: Order,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self { inner_lr: 0.01, n_steps: 1, order: Order::First }
    }
}

impl InnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner_lr > 0.0 && self.inner_lr.is_finite()) {
            return Err(Error::Config(format!("inner_lr must be positive, got {}", self.inner_lr)));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// A differentiable support/query loss pair over a flat parameter vector.
pub trait BilevelLoss {
    fn support(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;
    fn query(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Result of the inner loop.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedParams {
    pub theta_prime: NetParams,
    /// Parameters before each step; `trajectory[0]` is the meta-parameter snapshot.
    pub trajectory: Vec<Vec<f64>>,
    /// Support loss before each step.
    pub support_losses: Vec<f64>,
}

impl AdaptedParams {
    pub fn steps(&self) -> usize {
        self.support_losses.len()
    }
}

/// Per-task outcome of [`meta_gradient`].
#[derive(Debug, Clone, PartialEq)]
pub struct MetaGradient {
    pub query_loss: f64,
    /// Query MSE (regression) or accuracy (classification) at the adapted parameters.
    pub query_metric: f64,
    pub grad: Vector,
}

/// Loss of a network on one split of an episode.
pub fn net_loss(net: &NetParams, x: &Matrix, y: &Targets) -> Result<(f64, NetParams)> {
    loss_and_grad(net, x, |out| match y {
        Targets::Real(t) => mse(out, t),
        Targets::Labels(l) => cross_entropy(out, l),
    })
}

/// Query metric of a network: MSE for regression, accuracy for classification.
pub fn net_metric(net: &NetParams, episode: &Episode) -> Result<f64> {
    let out = net.predict(&episode.query_x)?;
    match &episode.query_y {
        Targets::Real(t) => Ok(mse(&out, t)?.0),
        Targets::Labels(l) => Ok(accuracy(&out, l)),
    }
}

/// The support/query losses of an episode for a fixed network shape.
pub struct EpisodeLoss<'a> {
    pub template: &'a NetParams,
    pub episode: &'a Episode,
}

impl EpisodeLoss<'_> {
    fn eval(&self, theta: &[f64], x: &Matrix, y: &Targets) -> Result<(f64, Vec<f64>)> {
        let net = self.template.unflatten(theta)?;
        let (l, g) = net_loss(&net, x, y)?;
        if !l.is_finite() {
            return Err(Error::NonFinite("task loss"));
        }
        Ok((l, g.flatten()))
    }
}

impl BilevelLoss for EpisodeLoss<'_> {
    fn support(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.eval(theta, &self.episode.support_x, &self.episode.support_y)
    }

    fn query(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.eval(theta, &self.episode.query_x, &self.episode.query_y)
    }
}

/// `n_steps` plain full-batch gradient steps on the support loss.
pub fn adapt_flat(loss: &impl BilevelLoss, theta: &[f64], cfg: &InnerConfig) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    let mut current = theta.to_vec();
    let mut trajectory = Vec::with_capacity(cfg.n_steps);
    let mut losses = Vec::with_capacity(cfg.n_steps);
    for _ in 0..cfg.n_steps {
        let (l, g) = loss.support(&current)?;
        if !l.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("support loss"));
        }
        let next: Vec<f64> = current.iter().zip(&g).map(|(t, gi)| t - cfg.inner_lr * gi).collect();
        trajectory.push(std::mem::replace(&mut current, next));
        losses.push(l);
    }
    Ok((current, trajectory, losses))
}

/// Central-difference Hessian-vector product of the support loss at `theta`.
fn hvp(loss: &impl BilevelLoss, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let vn = norm(v);
    if vn == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let scale = theta.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let h = 1e-4 * (1.0 + scale);
    let shifted = |s: f64| -> Vec<f64> { theta.iter().zip(v).map(|(t, vi)| t + s * h * vi / vn).collect() };
    let (_, gp) = loss.support(&shifted(1.0))?;
    let (_, gm) = loss.support(&shifted(-1.0))?;
    Ok(gp.iter().zip(&gm).map(|(a, b)| vn * (a - b) / (2.0 * h)).collect())
}

/// Meta-gradient of the query loss after adaptation, with respect to the
/// pre-adaptation parameters.
///
/// First order uses the query gradient at the adapted parameters directly.
/// Second order pulls it back through each inner step,
/// `v ← (I − lr·H(θ_k)) v`, with finite-difference Hessian-vector products.
pub fn meta_gradient_flat(
    loss: &impl BilevelLoss,
    adapted: &[f64],
    trajectory: &[Vec<f64>],
    cfg: &InnerConfig,
) -> Result<(f64, Vec<f64>)> {
    let (lq, mut v) = loss.query(adapted)?;
    if !lq.is_finite() {
        return Err(Error::NonFinite("query loss"));
    }
    if cfg.order == Order::Second {
        for theta_k in trajectory.iter().rev() {
            let hv = hvp(loss, theta_k, &v)?;
            for (vi, h) in v.iter_mut().zip(&hv) {
                *vi -= cfg.inner_lr * h;
            }
        }
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("meta-gradient"));
    }
    Ok((lq, v))
}

/// Adapt a network to an episode's support set.
pub fn adapt_maml(episode: &Episode, theta: &NetParams, cfg: &InnerConfig) -> Result<AdaptedParams> {
    if episode.support_y.is_empty() {
        return Err(Error::InsufficientData("empty support set".into()));
    }
    let loss = EpisodeLoss { template: theta, episode };
    let (flat, trajectory, support_losses) = adapt_flat(&loss, &theta.flatten(), cfg)?;
    Ok(AdaptedParams { theta_prime: theta.unflatten(&flat)?, trajectory, support_losses })
}

/// Query-loss meta-gradient for one task in canonical parameter order.
pub fn meta_gradient(episode: &Episode, theta: &NetParams, adapted: &AdaptedParams, cfg: &InnerConfig) -> Result<MetaGradient> {
    if adapted.theta_prime.num_params() != theta.num_params() {
        return Err(Error::LengthMismatch { expected: theta.num_params(), got: adapted.theta_prime.num_params() });
    }
    let loss = EpisodeLoss { template: theta, episode };
    let (query_loss, grad) = meta_gradient_flat(&loss, &adapted.theta_prime.flatten(), &adapted.trajectory, cfg)?;
    Ok(MetaGradient { query_loss, query_metric: net_metric(&adapted.theta_prime, episode)?, grad: Vector::new(grad)? })
}
