use std::hash::{DefaultHasher, Hash, Hasher};

use crate::ndcore::Matrix;

/// Per-point supervision of an episode.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Real(Vec<f64>),
    Labels(Vec<usize>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Real(v) => v.len(),
            Targets::Labels(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, Targets::Labels(_))
    }

    /// Targets as a `len × outputs` matrix: the real values as one column, or
    /// one-hot rows over `n_way` classes.
    pub fn to_matrix(&self, n_way: usize) -> Matrix {
        match self {
            Targets::Real(v) => Matrix::from_fn(v.len(), 1, |i, _| v[i]),
            Targets::Labels(l) => Matrix::from_fn(l.len(), n_way, |i, c| if l[i] == c { 1.0 } else { 0.0 }),
        }
    }
}

/// Ground truth behind a sampled episode.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskInfo {
    Sinusoid { amplitude: f64, phase: f64 },
    Blobs { centroids: Vec<Vec<f64>> },
    ImageFolder,
}

/// One few-shot task: a support set to adapt on and a disjoint query set to score on.
///
/// Points are grouped by label (`k_shot` support / `q_query` query points per
/// label). For regression `n_way` is 1 and `q_query` counts query points.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub support_x: Matrix,
    pub support_y: Targets,
    pub query_x: Matrix,
    pub query_y: Targets,
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
    pub task_id: u64,
    /// `classes[label]` is the source class (generation slot or folder index)
    /// that episode label maps to.
    pub classes: Vec<usize>,
    pub info: TaskInfo,
}

impl Episode {
    pub fn input_dim(&self) -> usize {
        self.support_x.cols()
    }

    pub fn is_classification(&self) -> bool {
        self.support_y.is_classification()
    }

    /// Number of model outputs the episode calls for.
    pub fn output_dim(&self) -> usize {
        if self.is_classification() {
            self.n_way
        } else {
            1
        }
    }

    /// Content hash over inputs and targets, used to audit stream disjointness.
    pub fn content_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for v in self.support_x.data().iter().chain(self.query_x.data()) {
            v.to_bits().hash(&mut h);
        }
        for t in [&self.support_y, &self.query_y] {
            match t {
                Targets::Real(v) => v.iter().for_each(|x| x.to_bits().hash(&mut h)),
                Targets::Labels(v) => v.hash(&mut h),
            }
        }
        h.finish()
    }
}
