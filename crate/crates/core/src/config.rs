//! TOML run configuration. Unknown keys are rejected everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{sample_indexed, SynapticGraph};
use crate::model::{presets, AgingFunction, ModelSpec, NeighborhoodRule, RateFunction};
use crate::rng::RandomCoordinateSource;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
    #[serde(default)]
    pub decompose: DecomposeConfig,
    #[serde(default)]
    pub sample: SampleConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub graph_tau: GraphTauConfig,
    #[serde(default)]
    pub isi_cov: IsiCovConfig,
    #[serde(default)]
    pub loss_memory: LossMemoryConfig,
    #[serde(default)]
    pub oracle_check: OracleCheckConfig,
}

/// Which model to build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Independent {
        neurons: usize,
        delta: f64,
    },
    TwoNeuron {
        delta: f64,
        gamma: f64,
        weight: f64,
    },
    AllToAll {
        neurons: usize,
        weight: f64,
        phi: RateFunction,
        aging: AgingFunction,
        delta: f64,
        gamma: f64,
    },
    Lattice {
        dimension: u32,
        radius: i64,
        alpha: f64,
        delta: f64,
        gamma: f64,
    },
    /// Unit weights on graph number `graph` of the random-graph stream.
    RandomGraph {
        neurons: usize,
        theta: f64,
        graph: u64,
        phi: RateFunction,
        aging: AgingFunction,
    },
    Custom {
        neurons: usize,
        /// `[source, target, weight]` triples.
        edges: Vec<(usize, usize, f64)>,
        phi: RateFunction,
        aging: AgingFunction,
        delta: f64,
        gamma: f64,
        #[serde(default)]
        neighborhoods: NeighborhoodRule,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        age_cap: Option<u64>,
    },
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::TwoNeuron {
            delta: 0.7,
            gamma: 0.25,
            weight: 0.25,
        }
    }
}

impl ModelConfig {
    /// Build the model; random graphs are drawn from the stream rooted at `seed`.
    pub fn build(&self, seed: u64) -> Result<ModelSpec> {
        let spec = match self {
            ModelConfig::Independent { neurons, delta } => presets::independent(*neurons, *delta),
            ModelConfig::TwoNeuron { delta, gamma, weight } => presets::two_neuron(*delta, *gamma, *weight),
            ModelConfig::AllToAll {
                neurons,
                weight,
                phi,
                aging,
                delta,
                gamma,
            } => presets::all_to_all(*neurons, *weight, phi.clone(), aging.clone(), *delta, *gamma),
            ModelConfig::Lattice {
                dimension,
                radius,
                alpha,
                delta,
                gamma,
            } => presets::lattice_window(*dimension, *radius, *alpha, *delta, *gamma).map(|l| l.spec),
            ModelConfig::RandomGraph {
                neurons,
                theta,
                graph,
                phi,
                aging,
            } => self
                .graph(seed)?
                .expect("random-graph preset has a graph")
                .to_spec(phi.clone(), aging.clone(), phi.floor(), phi.lipschitz())
                .map_err(|e| Error::config("model", format!("graph {graph} (N = {neurons}, theta = {theta}): {e}"))),
            ModelConfig::Custom {
                neurons,
                edges,
                phi,
                aging,
                delta,
                gamma,
                neighborhoods,
                age_cap,
            } => ModelSpec::new(
                *neurons,
                edges.clone(),
                vec![phi.clone(); *neurons],
                vec![aging.clone(); *neurons],
                *delta,
                *gamma,
                neighborhoods.clone(),
            )
            .map(|s| match age_cap {
                Some(cap) => s.with_age_cap(*cap),
                None => s,
            }),
        };
        spec.map_err(|e| match e {
            e @ Error::Config { .. } => e,
            e => Error::config("model", e.to_string()),
        })
    }

    /// The synaptic graph behind a random-graph model.
    pub fn graph(&self, seed: u64) -> Result<Option<SynapticGraph>> {
        match self {
            ModelConfig::RandomGraph {
                neurons, theta, graph, ..
            } => sample_indexed(*neurons, *theta, &RandomCoordinateSource::new(seed), *graph)
                .map(Some)
                .map_err(|e| Error::config("model", e.to_string())),
            _ => Ok(None),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    /// Number of `G(n)` values reported.
    pub horizon: u64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self { horizon: 20 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecompositionKind {
    /// Given the spontaneous field.
    #[default]
    Conditional,
    /// Unconditional, for age-independent rates with summable memory.
    Spacetime,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeConfig {
    #[default]
    Auto,
    Exact,
    Dominated,
}

impl From<ModeConfig> for crate::kalikow::Mode {
    fn from(m: ModeConfig) -> Self {
        match m {
            ModeConfig::Auto => crate::kalikow::Mode::Auto,
            ModeConfig::Exact => crate::kalikow::Mode::Exact,
            ModeConfig::Dominated => crate::kalikow::Mode::Dominated,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeConfig {
    pub kind: DecompositionKind,
    pub mode: ModeConfig,
    pub neuron: usize,
    pub time: i64,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            kind: DecompositionKind::Conditional,
            mode: ModeConfig::Auto,
            neuron: 0,
            time: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub kind: DecompositionKind,
    pub mode: ModeConfig,
    /// Recorded neurons; all when empty.
    pub neurons: Vec<usize>,
    pub start: i64,
    pub end: i64,
    /// Largest clan before giving up.
    pub budget: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            kind: DecompositionKind::Conditional,
            mode: ModeConfig::Auto,
            neurons: Vec::new(),
            start: 0,
            end: 999,
            budget: crate::perfect::DEFAULT_BUDGET,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub neurons: Vec<usize>,
    pub steps: u64,
    pub burnin: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            neurons: Vec::new(),
            steps: 10_000,
            burnin: 1_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphTauConfig {
    pub neurons: usize,
    pub theta: f64,
    /// Values of `k`; defaults to `2..=⌊√N⌋`.
    pub ks: Vec<u64>,
    pub reps: u64,
}

impl Default for GraphTauConfig {
    fn default() -> Self {
        Self {
            neurons: 50,
            theta: 0.0,
            ks: Vec::new(),
            reps: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsiCovConfig {
    pub neurons: Vec<usize>,
    pub theta: f64,
    pub phi: RateFunction,
    pub aging: AgingFunction,
    pub graphs: u64,
    pub steps: u64,
    pub burnin: u64,
    pub min_spikes: usize,
}

impl Default for IsiCovConfig {
    fn default() -> Self {
        Self {
            neurons: vec![20, 50, 100],
            theta: 0.0,
            phi: RateFunction::saturated_linear(0.5, 0.5),
            aging: AgingFunction::ConstantOne,
            graphs: 100,
            steps: 200_000,
            burnin: 1_000,
            min_spikes: crate::isi::DEFAULT_MIN_SPIKES,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossMemoryConfig {
    pub neuron: usize,
    pub s_grid: Vec<u64>,
    pub quiet_past: u64,
    pub reps: u64,
    /// Decay rate used for the geometric comparison, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl Default for LossMemoryConfig {
    fn default() -> Self {
        Self {
            neuron: 0,
            s_grid: (2..=20).collect(),
            quiet_past: 50,
            reps: 100_000,
            beta: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleCheckConfig {
    /// Independent perfect samples of the configuration at `time`.
    pub samples: u64,
    pub time: i64,
    pub budget: usize,
}

impl Default for OracleCheckConfig {
    fn default() -> Self {
        Self {
            samples: 20_000,
            time: 0,
            budget: crate::perfect::DEFAULT_BUDGET,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| text[s].lines().next().unwrap_or("").trim().to_string())
                .unwrap_or_default();
            Error::config(field, e.message().to_string())
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }

    /// Range checks that do not need the model.
    pub fn check(&self) -> Result<()> {
        if self.validate.horizon < 2 {
            return Err(Error::config("validate.horizon", "must be at least 2"));
        }
        if self.sample.end < self.sample.start {
            return Err(Error::config("sample.end", "must not precede sample.start"));
        }
        if self.sample.budget == 0 {
            return Err(Error::config("sample.budget", "must be positive"));
        }
        if self.graph_tau.neurons < 2 {
            return Err(Error::config("graph_tau.neurons", "must be at least 2"));
        }
        if self.graph_tau.reps < 100 {
            return Err(Error::config("graph_tau.reps", "must be at least 100"));
        }
        if !(self.graph_tau.theta >= 0.0) {
            return Err(Error::config("graph_tau.theta", "must be >= 0"));
        }
        if self.isi_cov.neurons.iter().any(|&n| n < 2) {
            return Err(Error::config("isi_cov.neurons", "every N must be at least 2"));
        }
        if self.loss_memory.s_grid.is_empty() || self.loss_memory.s_grid.contains(&0) {
            return Err(Error::config("loss_memory.s_grid", "needs values s >= 1"));
        }
        if self.oracle_check.samples < 2 {
            return Err(Error::config("oracle_check.samples", "must be at least 2"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let cfg = Config::from_toml("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.model.build(0).unwrap(), presets::two_neuron_default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(Config::from_toml("sed = 3"), Err(Error::Config { .. })));
        let err = Config::from_toml("[model]\npreset = \"independent\"\nneurons = 2\ndelta = 0.3\ndleta = 1").unwrap_err();
        assert!(err.to_string().contains("dleta"), "{err}");
    }

    #[test]
    fn round_trip() {
        let text = r#"
seed = 9
[model]
preset = "custom"
neurons = 3
edges = [[0, 1, 0.5], [1, 2, -0.25]]
delta = 0.3
gamma = 0.5
phi = { shape = { family = "saturated-linear", floor = 0.3, slope = 0.5 } }
aging = { family = "exponential", scale = 1.0, rate = 2.0 }
[simulate]
steps = 50
"#;
        let cfg = Config::from_toml(text).unwrap();
        let again = Config::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.model.build(cfg.seed).unwrap().neuron_count(), 3);
    }

    #[test]
    fn bad_model_names_the_model() {
        let cfg = Config::from_toml("[model]\npreset = \"independent\"\nneurons = 2\ndelta = 1.5").unwrap();
        match cfg.model.build(0) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "model"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn random_graph_model_is_reproducible() {
        let m = ModelConfig::RandomGraph {
            neurons: 30,
            theta: 1.0,
            graph: 4,
            phi: RateFunction::saturated_linear(0.5, 0.5),
            aging: AgingFunction::ConstantOne,
        };
        assert_eq!(m.build(7).unwrap(), m.build(7).unwrap());
    }
}
