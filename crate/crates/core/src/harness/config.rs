use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradnet::{Activation, NetParams};
use crate::inner_kernel::{InfoRegularizer, KernelParams, ObjectiveOptions, RegWeights};
use crate::inner_maml::{InnerConfig, Order};
use crate::outer::{MetaParams, OptimizerKind};
use crate::tasks::{BlobParams, EpisodeShape, TaskDistribution};

/// Inner-loop algorithm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerAlgo {
    /// Gradient steps, meta-gradient through the steps.
    Maml,
    /// Gradient steps, meta-gradient taken at the adapted parameters.
    FoMaml,
    /// Closed-form kernel ridge fit.
    #[default]
    IAmfs,
}

impl InnerAlgo {
    pub fn label(self) -> &'static str {
        match self {
            InnerAlgo::Maml => "maml",
            InnerAlgo::FoMaml => "fo_maml",
            InnerAlgo::IAmfs => "i_amfs",
        }
    }

    pub fn is_kernel(self) -> bool {
        self == InnerAlgo::IAmfs
    }
}

/// Meta-batch aggregation rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterAlgo {
    Plain,
    #[default]
    OAmfs,
}

impl OuterAlgo {
    pub fn label(self) -> &'static str {
        match self {
            OuterAlgo::Plain => "plain",
            OuterAlgo::OAmfs => "o_amfs",
        }
    }
}

/// Hidden-layer activation; `auto` picks tanh for regression and relu for classification.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationChoice {
    #[default]
    Auto,
    Relu,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub activation: ActivationChoice,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { hidden: vec![40, 40], activation: ActivationChoice::Auto }
    }
}

/// Step-based inner loop settings. The derivative order follows the inner algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MamlConfig {
    pub inner_lr: f64,
    pub n_steps: usize,
}

impl Default for MamlConfig {
    fn default() -> Self {
        let d = InnerConfig::default();
        Self { inner_lr: d.inner_lr, n_steps: d.n_steps }
    }
}

/// What the kernel is evaluated on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelInput {
    /// Raw inputs for regression, the learned embedding for classification.
    #[default]
    Auto,
    Raw,
    Embed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub input: KernelInput,
    pub embed_dim: usize,
    pub info: InfoRegularizer,
    /// Treat the fitted coefficients as constants in the meta-gradient.
    pub first_order: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { input: KernelInput::Auto, embed_dim: 32, info: InfoRegularizer::default(), first_order: false }
    }
}

/// Distributions for the `scenario` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub general: TaskDistribution,
    pub specific: TaskDistribution,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            general: TaskDistribution::GaussianBlobs(BlobParams::general(8)),
            specific: TaskDistribution::GaussianBlobs(BlobParams::specific(8)),
        }
    }
}

/// Settings for the `check-grad` subcommand, which builds its own small models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub support_points: usize,
    pub query_points: usize,
    pub step: f64,
    pub kernel_tol: f64,
    pub maml_tol: f64,
    /// Perturb every analytic gradient before comparison.
    pub inject_fault: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            hidden: vec![8, 8],
            embed_dim: 4,
            support_points: 5,
            query_points: 10,
            step: 1e-5,
            kernel_tol: 1e-4,
            maml_tol: 1e-3,
            inject_fault: false,
        }
    }
}

/// Largest model `check-grad` accepts.
pub const CHECK_MAX_PARAMS: usize = 200;

/// A complete run description. Every field has a default, so an empty file is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads for per-task work; 1 runs everything on the calling thread.
    pub threads: usize,
    pub out: PathBuf,
    pub dump_weights: bool,
    /// Flat parameter file (as written by `train`) for `eval`; the seeded initialization otherwise.
    pub params: Option<PathBuf>,
    pub task: TaskDistribution,
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
    pub meta_batch_size: usize,
    pub inner: InnerAlgo,
    pub outer: OuterAlgo,
    pub beta: f64,
    pub meta_optimizer: OptimizerKind,
    pub n_meta_iters: usize,
    pub eval_episodes: usize,
    pub log_interval: usize,
    /// Evaluate every this many iterations during training; 0 disables.
    pub eval_interval: usize,
    /// Record content hashes of every sampled episode.
    pub audit_episodes: bool,
    pub maml: MamlConfig,
    pub kernel: KernelConfig,
    pub reg: RegWeights,
    pub net: NetConfig,
    pub scenario: ScenarioConfig,
    pub check: CheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 1,
            out: PathBuf::from("out"),
            dump_weights: false,
            params: None,
            task: TaskDistribution::default(),
            n_way: 5,
            k_shot: 5,
            q_query: 15,
            meta_batch_size: 4,
            inner: InnerAlgo::default(),
            outer: OuterAlgo::default(),
            beta: 0.001,
            meta_optimizer: OptimizerKind::default(),
            n_meta_iters: 2000,
            eval_episodes: 600,
            log_interval: 100,
            eval_interval: 0,
            audit_episodes: false,
            maml: MamlConfig::default(),
            kernel: KernelConfig::default(),
            reg: RegWeights::default(),
            net: NetConfig::default(),
            scenario: ScenarioConfig::default(),
            check: CheckConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            (self.threads, "threads"),
            (self.n_way, "n_way"),
            (self.k_shot, "k_shot"),
            (self.q_query, "q_query"),
            (self.meta_batch_size, "meta_batch_size"),
            (self.eval_episodes, "eval_episodes"),
            (self.log_interval, "log_interval"),
            (self.maml.n_steps, "maml.n_steps"),
            (self.kernel.embed_dim, "kernel.embed_dim"),
        ];
        if let Some((_, name)) = positive.iter().find(|(v, _)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.net.hidden.contains(&0) || self.check.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.task.is_classification() && self.n_way < 2 {
            return Err(Error::Config("classification needs n_way >= 2".into()));
        }
        self.inner_config().validate()?;
        self.reg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn shape(&self) -> EpisodeShape {
        EpisodeShape { n_way: self.n_way, k_shot: self.k_shot, q_query: self.q_query }
    }

    pub fn inner_config(&self) -> InnerConfig {
        let order = if self.inner == InnerAlgo::Maml { Order::Second } else { Order::First };
        InnerConfig { inner_lr: self.maml.inner_lr, n_steps: self.maml.n_steps, order }
    }

    pub fn objective_options(&self) -> ObjectiveOptions {
        ObjectiveOptions { info: self.kernel.info, first_order: self.kernel.first_order }
    }

    fn hidden_activation(&self, classification: bool) -> Activation {
        match (self.net.activation, classification) {
            (ActivationChoice::Relu, _) | (ActivationChoice::Auto, true) => Activation::Relu,
            (ActivationChoice::Tanh, _) | (ActivationChoice::Auto, false) => Activation::Tanh,
        }
    }

    fn uses_embedding(&self, classification: bool) -> bool {
        match self.kernel.input {
            KernelInput::Auto => classification,
            KernelInput::Raw => false,
            KernelInput::Embed => true,
        }
    }

    /// Seeded meta-parameter initialization for a task family with the given input width.
    pub fn initial_params(&self, input_dim: usize, classification: bool, rng: &mut impl Rng) -> Result<MetaParams> {
        let act = self.hidden_activation(classification);
        let widths = |out: usize| {
            let mut w = vec![input_dim];
            w.extend(&self.net.hidden);
            w.push(out);
            w
        };
        if self.inner.is_kernel() {
            let embed = if self.uses_embedding(classification) {
                Some(NetParams::init(&widths(self.kernel.embed_dim), act, rng)?)
            } else {
                None
            };
            Ok(MetaParams::Kernel(KernelParams::initial(embed)))
        } else {
            let out = if classification { self.n_way } else { 1 };
            Ok(MetaParams::Net(NetParams::init(&widths(out), act, rng)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.task = TaskDistribution::GaussianBlobs(BlobParams::general(4));
        cfg.inner = InnerAlgo::FoMaml;
        cfg.outer = OuterAlgo::Plain;
        cfg.params = Some("p.csv".into());
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn nested_sections_parse() {
        let cfg = RunConfig::from_toml(
            "inner = \"maml\"\nn_meta_iters = 10\n[task]\nkind = \"gaussian_blobs\"\ndim = 3\n[maml]\nn_steps = 3\n[reg]\nmu = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.inner_config().order, Order::Second);
        assert_eq!(cfg.maml.n_steps, 3);
        assert_eq!(cfg.reg.mu, 0.5);
        assert!(matches!(cfg.task, TaskDistribution::GaussianBlobs(BlobParams { dim: 3, .. })));
    }

    #[test]
    fn rejects_bad_values() {
        for text in ["beta = 0.0", "meta_batch_size = 0", "bogus = 1", "inner = \"sgd\"", "[maml]\ninner_lr = -1.0", "n_way = 1\n[task]\nkind = \"gaussian_blobs\""] {
            assert!(matches!(RunConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn initial_params_follow_algorithm() {
        let mut rng = crate::tasks::rng::stream(0, crate::tasks::rng::Purpose::Init, 0);
        let cfg = RunConfig::default();
        let p = cfg.initial_params(1, false, &mut rng).unwrap();
        assert!(matches!(&p, MetaParams::Kernel(k) if k.embed.is_none()));
        let p = cfg.initial_params(8, true, &mut rng).unwrap();
        assert!(matches!(&p, MetaParams::Kernel(k) if k.embed.as_ref().unwrap().output_dim() == 32));
        let cfg = RunConfig { inner: InnerAlgo::Maml, ..RunConfig::default() };
        assert_eq!(cfg.initial_params(1, false, &mut rng).unwrap().num_params(), 40 * 2 + 40 * 41 + 41);
    }
}
