//! Task distributions and N-way K-shot episode sampling.

mod episode;
pub mod image_folder;
pub mod rng;

use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use episode::{Episode, Targets, TaskInfo};
pub use image_folder::ImageInventory;

use crate::error::{Error, Result};
use crate::ndcore::{sq_dist, Matrix};

/// Sine regression tasks `y = A·sin(x + φ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SinusoidParams {
    pub amplitude: [f64; 2],
    pub phase: [f64; 2],
    pub x_range: [f64; 2],
}

impl Default for SinusoidParams {
    fn default() -> Self {
        Self { amplitude: [0.1, 5.0], phase: [0.0, std::f64::consts::PI], x_range: [-5.0, 5.0] }
    }
}

/// Isotropic Gaussian classes with per-task random centroids.
///
/// Centroid coordinates are drawn from `N(center, centroid_std²)`, points
/// from `N(centroid, within_std²)`. With `min_separation > 0`, centroid sets
/// are resampled until every pair is at least `min_separation · within_std` apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlobParams {
    pub dim: usize,
    pub center: f64,
    pub centroid_std: f64,
    pub within_std: f64,
    pub min_separation: f64,
}

impl Default for BlobParams {
    fn default() -> Self {
        Self { dim: 8, center: 0.0, centroid_std: 1.0, within_std: 0.5, min_separation: 0.0 }
    }
}

impl BlobParams {
    /// A broad prior: the "general" side of a scenario study.
    pub fn general(dim: usize) -> Self {
        Self { dim, center: 0.0, centroid_std: 1.0, within_std: 0.6, ..Self::default() }
    }

    /// Centroids confined to an offset subregion with tighter classes: the "specific" side.
    pub fn specific(dim: usize) -> Self {
        Self { dim, center: 1.5, centroid_std: 0.5, within_std: 0.3, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageFolderParams {
    pub root: PathBuf,
    #[serde(default = "default_side")]
    pub side: u32,
}

fn default_side() -> u32 {
    28
}

/// A distribution over tasks, as configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskDistribution {
    Sinusoid(SinusoidParams),
    GaussianBlobs(BlobParams),
    ImageFolder(ImageFolderParams),
}

impl Default for TaskDistribution {
    fn default() -> Self {
        TaskDistribution::Sinusoid(SinusoidParams::default())
    }
}

/// Episode dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeShape {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
}

/// A ready-to-sample task distribution (image inventories loaded).
#[derive(Debug, Clone)]
pub enum TaskSampler {
    Sinusoid(SinusoidParams),
    GaussianBlobs(BlobParams),
    ImageFolder(Arc<ImageInventory>),
}

impl TaskDistribution {
    pub fn is_classification(&self) -> bool {
        !matches!(self, TaskDistribution::Sinusoid(_))
    }

    pub fn prepare(&self) -> Result<TaskSampler> {
        self.validate()?;
        Ok(match self {
            TaskDistribution::Sinusoid(p) => TaskSampler::Sinusoid(p.clone()),
            TaskDistribution::GaussianBlobs(p) => TaskSampler::GaussianBlobs(p.clone()),
            TaskDistribution::ImageFolder(p) => TaskSampler::ImageFolder(Arc::new(ImageInventory::load(&p.root, p.side)?)),
        })
    }

    fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2], what: &str| {
            if r[0] <= r[1] && r.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} range {r:?} is not an ordered finite interval")))
            }
        };
        match self {
            TaskDistribution::Sinusoid(p) => {
                ordered(p.amplitude, "amplitude")?;
                ordered(p.phase, "phase")?;
                ordered(p.x_range, "x")
            }
            TaskDistribution::GaussianBlobs(p) => {
                if p.dim == 0 || p.centroid_std < 0.0 || !(p.within_std > 0.0) || p.min_separation < 0.0 {
                    return Err(Error::Config(format!("invalid blob parameters {p:?}")));
                }
                Ok(())
            }
            TaskDistribution::ImageFolder(p) => {
                if p.side == 0 {
                    return Err(Error::Config("image side must be positive".into()));
                }
                Ok(())
            }
        }
    }
}

impl TaskSampler {
    pub fn input_dim(&self) -> usize {
        match self {
            TaskSampler::Sinusoid(_) => 1,
            TaskSampler::GaussianBlobs(p) => p.dim,
            TaskSampler::ImageFolder(inv) => inv.input_dim(),
        }
    }

    pub fn is_classification(&self) -> bool {
        !matches!(self, TaskSampler::Sinusoid(_))
    }

    /// Draw one episode. Regression ignores `n_way` and uses a single output.
    pub fn sample_episode(&self, shape: EpisodeShape, rng: &mut impl Rng) -> Result<Episode> {
        if shape.k_shot == 0 || shape.q_query == 0 || (self.is_classification() && shape.n_way == 0) {
            return Err(Error::InvalidArgument(format!("empty episode shape {shape:?}")));
        }
        let task_id = rng.random();
        match self {
            TaskSampler::Sinusoid(p) => Ok(sample_sinusoid(p, shape, task_id, rng)),
            TaskSampler::GaussianBlobs(p) => sample_blobs(p, shape, task_id, rng),
            TaskSampler::ImageFolder(inv) => sample_images(inv, shape, task_id, rng),
        }
    }
}

fn uniform(range: [f64; 2], rng: &mut impl Rng) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

fn sample_sinusoid(p: &SinusoidParams, shape: EpisodeShape, task_id: u64, rng: &mut impl Rng) -> Episode {
    let amplitude = uniform(p.amplitude, rng);
    let phase = uniform(p.phase, rng);
    let mut draw = |n: usize| {
        let xs: Vec<f64> = (0..n).map(|_| uniform(p.x_range, rng)).collect();
        let ys = xs.iter().map(|x| amplitude * (x + phase).sin()).collect();
        (Matrix::from_fn(n, 1, |i, _| xs[i]), Targets::Real(ys))
    };
    let (support_x, support_y) = draw(shape.k_shot);
    let (query_x, query_y) = draw(shape.q_query);
    Episode {
        support_x,
        support_y,
        query_x,
        query_y,
        n_way: 1,
        k_shot: shape.k_shot,
        q_query: shape.q_query,
        task_id,
        classes: vec![0],
        info: TaskInfo::Sinusoid { amplitude, phase },
    }
}

/// Random relabelling: `classes[label]` is the slot assigned that label.
fn relabel(n_way: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut classes: Vec<usize> = (0..n_way).collect();
    classes.shuffle(rng);
    classes
}

/// Assemble class-grouped support and query sets from per-label point lists.
fn assemble(per_label: Vec<Vec<Vec<f64>>>, shape: EpisodeShape, dim: usize) -> (Matrix, Targets, Matrix, Targets) {
    let mut sx = Vec::with_capacity(shape.n_way * shape.k_shot * dim);
    let mut qx = Vec::with_capacity(shape.n_way * shape.q_query * dim);
    let (mut sy, mut qy) = (Vec::new(), Vec::new());
    for (label, points) in per_label.into_iter().enumerate() {
        for (i, p) in points.into_iter().enumerate() {
            if i < shape.k_shot {
                sx.extend(p);
                sy.push(label);
            } else {
                qx.extend(p);
                qy.push(label);
            }
        }
    }
    (
        Matrix::from_raw(sy.len(), dim, sx),
        Targets::Labels(sy),
        Matrix::from_raw(qy.len(), dim, qx),
        Targets::Labels(qy),
    )
}

const MAX_CENTROID_DRAWS: usize = 10_000;

fn sample_blobs(p: &BlobParams, shape: EpisodeShape, task_id: u64, rng: &mut impl Rng) -> Result<Episode> {
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let min_sq = (p.min_separation * p.within_std).powi(2);
    let mut centroids = Vec::new();
    for attempt in 0.. {
        if attempt == MAX_CENTROID_DRAWS {
            return Err(Error::InsufficientData(format!(
                "could not place {} centroids {}σ apart",
                shape.n_way, p.min_separation
            )));
        }
        centroids = (0..shape.n_way)
            .map(|_| (0..p.dim).map(|_| p.center + p.centroid_std * std_normal.sample(rng)).collect::<Vec<f64>>())
            .collect();
        let separated = (0..shape.n_way)
            .all(|i| (i + 1..shape.n_way).all(|j| sq_dist(&centroids[i], &centroids[j]) >= min_sq));
        if separated {
            break;
        }
    }
    let classes = relabel(shape.n_way, rng);
    let per_label = classes
        .iter()
        .map(|&slot| {
            (0..shape.k_shot + shape.q_query)
                .map(|_| centroids[slot].iter().map(|c| c + p.within_std * std_normal.sample(rng)).collect())
                .collect()
        })
        .collect();
    let (support_x, support_y, query_x, query_y) = assemble(per_label, shape, p.dim);
    Ok(Episode {
        support_x,
        support_y,
        query_x,
        query_y,
        n_way: shape.n_way,
        k_shot: shape.k_shot,
        q_query: shape.q_query,
        task_id,
        classes,
        info: TaskInfo::Blobs { centroids },
    })
}

fn sample_images(inv: &ImageInventory, shape: EpisodeShape, task_id: u64, rng: &mut impl Rng) -> Result<Episode> {
    let per_class = shape.k_shot + shape.q_query;
    let eligible: Vec<usize> = (0..inv.classes.len()).filter(|&c| inv.classes[c].images.len() >= per_class).collect();
    if eligible.len() < shape.n_way {
        return Err(Error::InsufficientData(format!(
            "{}-way episode needs {} classes with at least {per_class} images, found {}",
            shape.n_way,
            shape.n_way,
            eligible.len()
        )));
    }
    let chosen: Vec<usize> = eligible.choose_multiple(rng, shape.n_way).copied().collect();
    let order = relabel(shape.n_way, rng);
    let classes: Vec<usize> = order.iter().map(|&slot| chosen[slot]).collect();
    let per_label = classes
        .iter()
        .map(|&c| {
            let imgs = &inv.classes[c].images;
            rand::seq::index::sample(rng, imgs.len(), per_class).into_iter().map(|i| imgs[i].clone()).collect()
        })
        .collect();
    let (support_x, support_y, query_x, query_y) = assemble(per_label, shape, inv.input_dim());
    Ok(Episode {
        support_x,
        support_y,
        query_x,
        query_y,
        n_way: shape.n_way,
        k_shot: shape.k_shot,
        q_query: shape.q_query,
        task_id,
        classes,
        info: TaskInfo::ImageFolder,
    })
}

/// Free-function form of [`TaskSampler::sample_episode`].
pub fn sample_episode(sampler: &TaskSampler, n_way: usize, k_shot: usize, q_query: usize, rng: &mut impl Rng) -> Result<Episode> {
    sampler.sample_episode(EpisodeShape { n_way, k_shot, q_query }, rng)
}

/// Which way a scenario study crosses between distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioDirection {
    /// Train on the general distribution, meta-test on the specific one.
    GeneralToSpecific,
    SpecificToGeneral,
}

impl ScenarioDirection {
    pub fn label(self) -> &'static str {
        match self {
            ScenarioDirection::GeneralToSpecific => "G->S",
            ScenarioDirection::SpecificToGeneral => "S->G",
        }
    }
}

/// Train/test pairing; training episodes only ever come from `train`.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub train: TaskSampler,
    pub test: TaskSampler,
    pub direction: ScenarioDirection,
}

impl ScenarioSpec {
    pub fn reversed(&self) -> ScenarioSpec {
        let direction = match self.direction {
            ScenarioDirection::GeneralToSpecific => ScenarioDirection::SpecificToGeneral,
            ScenarioDirection::SpecificToGeneral => ScenarioDirection::GeneralToSpecific,
        };
        ScenarioSpec { train: self.test.clone(), test: self.train.clone(), direction }
    }
}

/// Pair a training and a meta-test distribution. The first argument is
/// treated as the general one.
pub fn scenario_pair(train: TaskSampler, test: TaskSampler) -> Result<ScenarioSpec> {
    if train.input_dim() != test.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "scenario inputs: train {} vs test {}",
            train.input_dim(),
            test.input_dim()
        )));
    }
    if train.is_classification() != test.is_classification() {
        return Err(Error::DimensionMismatch("scenario mixes regression and classification".into()));
    }
    Ok(ScenarioSpec { train, test, direction: ScenarioDirection::GeneralToSpecific })
}
