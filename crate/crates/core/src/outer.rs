//! Meta-gradient aggregation across a meta-batch and the meta-parameter update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradnet::NetParams;
use crate::inner_kernel::KernelParams;
use crate::ndcore::{cosine, Matrix, Vector};

/// Flat partials of one task's query loss in canonical parameter order.
pub type GradientVector = Vector;

/// Per-task meta-gradients of one meta-batch, in task order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    grads: Vec<GradientVector>,
    task_ids: Vec<u64>,
}

impl GradientBundle {
    pub fn new(grads: Vec<GradientVector>, task_ids: Vec<u64>) -> Result<Self> {
        let first = grads.first().ok_or_else(|| Error::InvalidArgument("empty gradient bundle".into()))?;
        if task_ids.len() != grads.len() {
            return Err(Error::LengthMismatch { expected: grads.len(), got: task_ids.len() });
        }
        if let Some(bad) = grads.iter().find(|g| g.len() != first.len()) {
            return Err(Error::LengthMismatch { expected: first.len(), got: bad.len() });
        }
        Ok(Self { grads, task_ids })
    }

    /// Bundle with task ids `0..m`.
    pub fn from_grads(grads: Vec<GradientVector>) -> Result<Self> {
        let ids = (0..grads.len() as u64).collect();
        Self::new(grads, ids)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.grads[0].len()
    }

    pub fn grads(&self) -> &[GradientVector] {
        &self.grads
    }

    pub fn task_ids(&self) -> &[u64] {
        &self.task_ids
    }
}

/// Pairwise cosine weights, per-task scale factors and the resulting aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationReport {
    /// `m × m`, diagonal left at zero.
    pub weights: Matrix,
    pub scales: Vec<f64>,
    pub aggregated: GradientVector,
}

/// Unweighted sum of the task gradients, accumulated in task order.
pub fn aggregate_plain(b: &GradientBundle) -> GradientVector {
    let mut out = vec![0.0; b.dim()];
    for g in b.grads() {
        for (o, v) in out.iter_mut().zip(g.iter()) {
            *o += v;
        }
    }
    Vector::from_raw(out)
}

/// Similarity-weighted sum `Σ_i s_i g_i` with
/// `s_i = 1 + (1/m) Σ_{j≠i} cos(g_i, g_j)`.
///
/// Tasks whose gradients agree with the rest of the batch are amplified,
/// conflicting ones damped. The divisor is the batch size `m`.
pub fn aggregate_oamfs(b: &GradientBundle) -> Result<(GradientVector, AggregationReport)> {
    let m = b.len();
    let mut weights = Matrix::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let w = cosine(&b.grads[i], &b.grads[j])?;
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
    }
    let scales: Vec<f64> = (0..m)
        .map(|i| 1.0 + (0..m).filter(|&j| j != i).map(|j| weights[(i, j)]).sum::<f64>() / m as f64)
        .collect();
    let mut out = vec![0.0; b.dim()];
    for (g, &s) in b.grads().iter().zip(&scales) {
        for (o, v) in out.iter_mut().zip(g.iter()) {
            *o += s * v;
        }
    }
    let aggregated = Vector::from_raw(out);
    Ok((aggregated.clone(), AggregationReport { weights, scales, aggregated }))
}

/// Everything the outer loop trains.
#[derive(Debug, Clone, PartialEq)]
pub enum MetaParams {
    /// Network initialization adapted by gradient steps.
    Net(NetParams),
    /// Kernel hyperparameters and optional embedding for closed-form adaptation.
    Kernel(KernelParams),
}

impl MetaParams {
    pub fn num_params(&self) -> usize {
        match self {
            MetaParams::Net(p) => p.num_params(),
            MetaParams::Kernel(k) => k.num_params(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        match self {
            MetaParams::Net(p) => p.flatten(),
            MetaParams::Kernel(k) => k.flatten(),
        }
    }

    pub fn unflatten(&self, flat: &[f64]) -> Result<MetaParams> {
        Ok(match self {
            MetaParams::Net(p) => MetaParams::Net(p.unflatten(flat)?),
            MetaParams::Kernel(k) => MetaParams::Kernel(k.unflatten(flat)?),
        })
    }
}

/// `θ ← θ − β g` in canonical flat order.
pub fn meta_step(theta: &MetaParams, g: &GradientVector, beta: f64) -> Result<MetaParams> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("meta learning rate must be positive, got {beta}")));
    }
    let flat = theta.flatten();
    if flat.len() != g.len() {
        return Err(Error::LengthMismatch { expected: flat.len(), got: g.len() });
    }
    let next: Vec<f64> = flat.iter().zip(g.iter()).map(|(t, gi)| t - beta * gi).collect();
    theta.unflatten(&next)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

/// Stateful meta-optimizer behind the [`meta_step`] interface.
#[derive(Debug, Clone)]
pub enum MetaOptimizer {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, t: u32 },
}

impl MetaOptimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Sgd => MetaOptimizer::Sgd,
            OptimizerKind::Adam => MetaOptimizer::Adam { m: Vec::new(), v: Vec::new(), t: 0 },
        }
    }

    pub fn step(&mut self, theta: &MetaParams, g: &GradientVector, beta: f64) -> Result<MetaParams> {
        match self {
            MetaOptimizer::Sgd => meta_step(theta, g, beta),
            MetaOptimizer::Adam { m, v, t } => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                if m.is_empty() {
                    *m = vec![0.0; g.len()];
                    *v = vec![0.0; g.len()];
                }
                if m.len() != g.len() {
                    return Err(Error::LengthMismatch { expected: m.len(), got: g.len() });
                }
                *t += 1;
                let (c1, c2) = (1.0 - B1.powi(*t as i32), 1.0 - B2.powi(*t as i32));
                let direction: Vec<f64> = g
                    .iter()
                    .zip(m.iter_mut().zip(v.iter_mut()))
                    .map(|(&gi, (mi, vi))| {
                        *mi = B1 * *mi + (1.0 - B1) * gi;
                        *vi = B2 * *vi + (1.0 - B2) * gi * gi;
                        (*mi / c1) / ((*vi / c2).sqrt() + EPS)
                    })
                    .collect();
                meta_step(theta, &Vector::new(direction)?, beta)
            }
        }
    }
}
