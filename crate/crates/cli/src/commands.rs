//! One function per subcommand. Each returns its artifacts in memory so a
//! run can be written to disk or compared against a previous run.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spikeclan::config::{Config, DecompositionKind, ModeConfig};
use spikeclan::forward::oracle::{isi_moments, IsiMoments, MarkovOracle};
use spikeclan::forward::simulate_neurons;
use spikeclan::graph::{
    default_k, edge_probability, estimate_event_a_complement, estimate_tau_cdf_curve, sample_indexed, tau_tail_bound,
    Proportion,
};
use spikeclan::isi::{covariance_experiment, loss_of_memory_profile, CovarianceExperiment, CovarianceReport};
use spikeclan::kalikow::spacetime::SpacetimeDecomposition;
use spikeclan::kalikow::{Exactness, KalikowWeights, SiteDecomposition, SiteTimeContext};
use spikeclan::model::constants::{mgf_rho, MgfRho};
use spikeclan::model::{validate_model, Regime};
use spikeclan::perfect::{xi_at, ClanSampler, ClanStats, SpacetimeSampler, SCAN_CAP};
use spikeclan::stats::{chi_square_test, sample_mean, ChiSquareTest, Estimate};
use spikeclan::{Error, ModelSpec, RandomCoordinateSource, SpikeField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Validate,
    Decompose,
    SamplePerfect,
    Simulate,
    GraphTau,
    IsiCov,
    LossMemory,
    OracleCheck,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Validate,
        Command::Decompose,
        Command::SamplePerfect,
        Command::Simulate,
        Command::GraphTau,
        Command::IsiCov,
        Command::LossMemory,
        Command::OracleCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Decompose => "decompose",
            Command::SamplePerfect => "sample-perfect",
            Command::Simulate => "simulate",
            Command::GraphTau => "graph-tau",
            Command::IsiCov => "isi-cov",
            Command::LossMemory => "loss-memory",
            Command::OracleCheck => "oracle-check",
        }
    }
}

/// Command-line values that replace config entries before a run.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    /// Repetition count of the chosen subcommand.
    pub reps: Option<u64>,
    /// Clan budget of the perfect samplers.
    pub budget: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, command: Command, cfg: &mut Config) -> spikeclan::Result<()> {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(reps) = self.reps {
            match command {
                Command::Simulate => cfg.simulate.steps = reps,
                Command::GraphTau => cfg.graph_tau.reps = reps,
                Command::IsiCov => cfg.isi_cov.graphs = reps,
                Command::LossMemory => cfg.loss_memory.reps = reps,
                Command::OracleCheck => cfg.oracle_check.samples = reps,
                Command::Validate | Command::Decompose | Command::SamplePerfect => {}
            }
        }
        if let Some(budget) = self.budget {
            cfg.sample.budget = budget;
            cfg.oracle_check.budget = budget;
        }
        cfg.check()
    }
}

/// A named output file.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: String,
    /// False when a validation or oracle check failed.
    pub passed: bool,
    /// Variates drawn from the root coordinate source and from replica sources
    /// whose totals are collected.
    pub draws: u64,
}

fn json<T: Serialize>(name: &str, value: &T) -> spikeclan::Result<Artifact> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(Artifact {
        name: name.to_string(),
        bytes,
    })
}

fn raster(field: &SpikeField) -> spikeclan::Result<Artifact> {
    let mut bytes = Vec::new();
    field.write_csv(&mut bytes)?;
    Ok(Artifact {
        name: "raster.csv".into(),
        bytes,
    })
}

fn csv(name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Artifact {
    let mut text = format!("{header}\n");
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    Artifact {
        name: name.to_string(),
        bytes: text.into_bytes(),
    }
}

fn neuron_list(spec: &ModelSpec, requested: &[usize], field: &str) -> spikeclan::Result<Vec<usize>> {
    let n = spec.neuron_count();
    if let Some(&bad) = requested.iter().find(|&&i| i >= n) {
        return Err(config_error(field, format!("neuron {bad} out of range for {n} neurons")));
    }
    Ok(if requested.is_empty() {
        (0..n).collect()
    } else {
        requested.to_vec()
    })
}

fn config_error(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

fn check_neuron(spec: &ModelSpec, i: usize, field: &str) -> spikeclan::Result<()> {
    neuron_list(spec, &[i], field).map(|_| ())
}

pub fn run(command: Command, cfg: &Config) -> spikeclan::Result<Outcome> {
    match command {
        Command::Validate => validate(cfg),
        Command::Decompose => decompose(cfg),
        Command::SamplePerfect => sample_perfect(cfg),
        Command::Simulate => simulate(cfg),
        Command::GraphTau => graph_tau(cfg),
        Command::IsiCov => isi_cov(cfg),
        Command::LossMemory => loss_memory(cfg),
        Command::OracleCheck => oracle_check(cfg),
    }
}

fn validate(cfg: &Config) -> spikeclan::Result<Outcome> {
    let spec = cfg.model.build(cfg.seed)?;
    let report = validate_model(&spec, cfg.validate.horizon)?;
    let passed = report.regime != Regime::Neither;
    let e = report.e_delta.map_or("n/a".to_string(), |e| format!("{e:.6}"));
    Ok(Outcome {
        summary: format!(
            "validate: regime {:?}, e(delta) = {e}, delta* = {:.6}",
            report.regime, report.delta_star.value
        ),
        artifacts: vec![json("validation.json", &report)?],
        passed,
        draws: 0,
    })
}

#[derive(Serialize)]
struct RangeRow {
    k: i64,
    alpha: f64,
    lambda: f64,
    /// Dominating weight; absent for `k < 1`.
    lambda_bar: Option<f64>,
}

#[derive(Serialize)]
struct DecompositionDoc<'a> {
    kind: DecompositionKind,
    neuron: usize,
    time: i64,
    /// Last spontaneous spike before `time`; conditional decompositions only.
    last_spontaneous: Option<i64>,
    exactness: Exactness,
    k_max: i64,
    residual: f64,
    total: f64,
    ranges: Vec<RangeRow>,
    weights: &'a KalikowWeights,
}

fn range_rows(w: &KalikowWeights, lambda_bar: impl Fn(i64) -> Option<f64>) -> Vec<RangeRow> {
    (-1..=w.k_max())
        .map(|k| RangeRow {
            k,
            alpha: w.alpha(k),
            lambda: w.lambda(k),
            lambda_bar: lambda_bar(k),
        })
        .collect()
}

fn decompose(cfg: &Config) -> spikeclan::Result<Outcome> {
    let spec = cfg.model.build(cfg.seed)?;
    let d = &cfg.decompose;
    check_neuron(&spec, d.neuron, "decompose.neuron")?;
    let src = RandomCoordinateSource::new(cfg.seed);
    let (artifact, k_max, residual) = match d.kind {
        DecompositionKind::Conditional => {
            if spec.delta() <= 0.0 {
                return Err(Error::RegimeMismatch(
                    "the conditional decomposition needs a spontaneous floor".into(),
                ));
            }
            let xi = |j: usize, s: i64| xi_at(&src, spec.delta(), j, s);
            let ctx = SiteTimeContext::from_field(&spec, d.neuron, d.time, &xi, SCAN_CAP)?;
            let site = SiteDecomposition::new(&spec, ctx, d.mode.into())?;
            let w = site.weights();
            let doc = json(
                "decomposition.json",
                &DecompositionDoc {
                    kind: d.kind,
                    neuron: d.neuron,
                    time: d.time,
                    last_spontaneous: Some(site.context().last_spontaneous()),
                    exactness: w.exactness(),
                    k_max: w.k_max(),
                    residual: w.residual(),
                    total: w.total(),
                    ranges: range_rows(w, |k| (k >= 1).then(|| site.lambda_bar(k))),
                    weights: w,
                },
            )?;
            (doc, w.k_max(), w.residual())
        }
        DecompositionKind::Spacetime => {
            let dec = SpacetimeDecomposition::new(&spec, d.neuron, d.mode.into())?;
            let w = dec.weights();
            let doc = json(
                "decomposition.json",
                &DecompositionDoc {
                    kind: d.kind,
                    neuron: d.neuron,
                    time: d.time,
                    last_spontaneous: None,
                    exactness: w.exactness(),
                    k_max: w.k_max(),
                    residual: w.residual(),
                    total: w.total(),
                    ranges: range_rows(w, |_| None),
                    weights: w,
                },
            )?;
            (doc, w.k_max(), w.residual())
        }
    };
    Ok(Outcome {
        summary: format!(
            "decompose: neuron {} at time {}, k_max {k_max}, residual {residual:.3e}",
            d.neuron, d.time
        ),
        artifacts: vec![artifact],
        passed: true,
        draws: src.draws(),
    })
}

#[derive(Serialize)]
struct RasterMeta {
    seed: u64,
    spec_hash: String,
    regime: Regime,
    kind: DecompositionKind,
    mode: ModeConfig,
    used_dominated: bool,
    budget: usize,
    stats: ClanStats,
    neurons: Vec<usize>,
    start: i64,
    end: i64,
    spikes: usize,
}

fn sample_perfect(cfg: &Config) -> spikeclan::Result<Outcome> {
    let spec = cfg.model.build(cfg.seed)?;
    let s = &cfg.sample;
    let neurons = neuron_list(&spec, &s.neurons, "sample.neurons")?;
    let regime = validate_model(&spec, cfg.validate.horizon)?.regime;
    let src = RandomCoordinateSource::new(cfg.seed);
    let (field, stats, used_dominated) = match s.kind {
        DecompositionKind::Conditional => {
            let sampler = ClanSampler::with_mode(&spec, &src, s.budget, s.mode.into())?;
            let field = sampler.sample(&neurons, s.start, s.end)?;
            (field, sampler.stats(), sampler.used_dominated())
        }
        DecompositionKind::Spacetime => {
            if s.mode != ModeConfig::Auto {
                return Err(config_error("sample.mode", "the space-time sampler only supports `auto`"));
            }
            let sampler = SpacetimeSampler::new(&spec, &src, s.budget)?;
            let field = sampler.sample(&neurons, s.start, s.end)?;
            (field, sampler.stats(), sampler.used_dominated())
        }
    };
    let meta = RasterMeta {
        seed: cfg.seed,
        spec_hash: spec.spec_hash(),
        regime,
        kind: s.kind,
        mode: s.mode,
        used_dominated,
        budget: s.budget,
        stats,
        neurons,
        start: s.start,
        end: s.end,
        spikes: field.spike_count(),
    };
    Ok(Outcome {
        summary: format!(
            "sample-perfect: {} spikes on [{}, {}], {} clans, largest {}",
            meta.spikes, meta.start, meta.end, meta.stats.clans, meta.stats.largest
        ),
        artifacts: vec![raster(&field)?, json("raster.json", &meta)?],
        passed: true,
        draws: src.draws(),
    })
}

#[derive(Serialize)]
struct SimulationMeta {
    seed: u64,
    spec_hash: String,
    steps: u64,
    burnin: u64,
    neurons: Vec<usize>,
    start: i64,
    end: i64,
    spikes: usize,
}

fn simulate(cfg: &Config) -> spikeclan::Result<Outcome> {
    let spec = cfg.model.build(cfg.seed)?;
    let s = &cfg.simulate;
    let neurons = neuron_list(&spec, &s.neurons, "simulate.neurons")?;
    let src = RandomCoordinateSource::new(cfg.seed);
    let field = simulate_neurons(&spec, &neurons, s.steps, s.burnin, &src)?;
    let meta = SimulationMeta {
        seed: cfg.seed,
        spec_hash: spec.spec_hash(),
        steps: s.steps,
        burnin: s.burnin,
        neurons,
        start: field.start(),
        end: field.end(),
        spikes: field.spike_count(),
    };
    Ok(Outcome {
        summary: format!("simulate: {} spikes in {} steps", meta.spikes, s.steps),
        artifacts: vec![raster(&field)?, json("raster.json", &meta)?],
        passed: true,
        draws: src.draws(),
    })
}

#[derive(Serialize)]
struct TauRow {
    k: u64,
    cdf: Proportion,
    bound: f64,
    within: bool,
}

#[derive(Serialize)]
struct GraphTauReport {
    seed: u64,
    neurons: usize,
    theta: f64,
    edge_probability: f64,
    reps: u64,
    rows: Vec<TauRow>,
    all_within: bool,
    /// Event A uses `k = ⌊√N⌋`.
    k: u64,
    a_complement: Proportion,
    a_complement_bound: f64,
}

fn graph_tau(cfg: &Config) -> spikeclan::Result<Outcome> {
    let g = &cfg.graph_tau;
    let ks: Vec<u64> = if g.ks.is_empty() {
        (2..=default_k(g.neurons).max(2)).collect()
    } else {
        g.ks.clone()
    };
    let src = RandomCoordinateSource::new(cfg.seed);
    let cdf = estimate_tau_cdf_curve(g.neurons, g.theta, &ks, g.reps, &src)?;
    let rows: Vec<TauRow> = ks
        .iter()
        .zip(cdf)
        .map(|(&k, cdf)| {
            let bound = tau_tail_bound(g.neurons, g.theta, k);
            TauRow {
                k,
                within: cdf.estimate <= bound + 3.0 * cdf.standard_error,
                cdf,
                bound,
            }
        })
        .collect();
    let report = GraphTauReport {
        seed: cfg.seed,
        neurons: g.neurons,
        theta: g.theta,
        edge_probability: edge_probability(g.neurons, g.theta),
        reps: g.reps,
        all_within: rows.iter().all(|r| r.within),
        k: default_k(g.neurons),
        a_complement: estimate_event_a_complement(g.neurons, g.theta, g.reps, &src)?,
        a_complement_bound: (2.0 * g.theta).exp() / (g.neurons as f64).sqrt(),
        rows,
    };
    let table = csv(
        "tau_cdf.csv",
        "k,cdf,standard_error,bound,within",
        report
            .rows
            .iter()
            .map(|r| format!("{},{},{},{},{}", r.k, r.cdf.estimate, r.cdf.standard_error, r.bound, r.within)),
    );
    let graph = sample_indexed(g.neurons, g.theta, &src, 0)?;
    let mut edges = Vec::new();
    graph.write_csv(&mut edges)?;
    Ok(Outcome {
        summary: format!(
            "graph-tau: N = {}, theta = {}, {} of {} k values within bound, P(A^c) = {:.4}",
            g.neurons,
            g.theta,
            report.rows.iter().filter(|r| r.within).count(),
            report.rows.len(),
            report.a_complement.estimate
        ),
        artifacts: vec![
            json("graph_tau.json", &report)?,
            table,
            Artifact {
                name: "graph_0.csv".into(),
                bytes: edges,
            },
            json("graph_0.json", &graph.meta(Some(cfg.seed)))?,
        ],
        passed: true,
        draws: src.draws(),
    })
}

#[derive(Serialize)]
struct IsiCovDoc {
    seed: u64,
    /// Median `|Cov|` does not increase from one `N` to the next.
    nonincreasing: bool,
    reports: Vec<CovarianceReport>,
}

fn isi_cov(cfg: &Config) -> spikeclan::Result<Outcome> {
    let c = &cfg.isi_cov;
    let src = RandomCoordinateSource::new(cfg.seed);
    let reports = c
        .neurons
        .iter()
        .map(|&n| {
            let exp = CovarianceExperiment {
                neurons: n,
                theta: c.theta,
                phi: c.phi.clone(),
                aging: c.aging.clone(),
                graphs: c.graphs,
                steps: c.steps,
                burnin: c.burnin,
                min_spikes: c.min_spikes,
            };
            covariance_experiment(&exp, &src)
        })
        .collect::<spikeclan::Result<Vec<_>>>()?;
    let medians: Vec<f64> = reports.iter().map(|r| r.median_abs_covariance).collect();
    let doc = IsiCovDoc {
        seed: cfg.seed,
        nonincreasing: medians.windows(2).all(|w| w[1] <= w[0]),
        reports,
    };
    let table = csv(
        "isi_cov.csv",
        "neurons,theta,delta,k,graphs,in_a,a_complement,a_complement_se,a_complement_bound,median_abs_covariance,median_standard_error,bound,within_bound",
        doc.reports.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.neurons,
                r.theta,
                r.delta,
                r.k,
                r.rows.len(),
                r.rows.iter().filter(|g| g.in_event_a).count(),
                r.a_complement.estimate,
                r.a_complement.standard_error,
                r.a_complement_bound,
                r.median_abs_covariance,
                r.median_standard_error,
                r.bound,
                r.within_bound
            )
        }),
    );
    let medians = medians.iter().map(|m| format!("{m:.3e}")).collect::<Vec<_>>().join(", ");
    Ok(Outcome {
        summary: format!("isi-cov: median |Cov| by N [{medians}], nonincreasing {}", doc.nonincreasing),
        artifacts: vec![json("isi_cov.json", &doc)?, table],
        passed: true,
        draws: src.draws(),
    })
}

#[derive(Serialize)]
struct GeometricCheck {
    mgf: MgfRho,
    log_rho: f64,
    /// Fitted slope is at most `ln ρ + 3 SE`.
    slope_within: Option<bool>,
}

#[derive(Serialize)]
struct LossMemoryDoc {
    seed: u64,
    spec_hash: String,
    profile: spikeclan::isi::LossOfMemoryReport,
    geometric: Option<GeometricCheck>,
}

fn loss_memory(cfg: &Config) -> spikeclan::Result<Outcome> {
    let spec = cfg.model.build(cfg.seed)?;
    let l = &cfg.loss_memory;
    check_neuron(&spec, l.neuron, "loss_memory.neuron")?;
    let src = RandomCoordinateSource::new(cfg.seed);
    let profile = loss_of_memory_profile(&spec, l.neuron, &l.s_grid, l.quiet_past, l.reps, &src)?;
    let geometric = match l.beta {
        Some(beta) => {
            let mgf = mgf_rho(&spec, beta)?;
            let log_rho = mgf.rho.ln();
            let slope_within = profile
                .log_slope
                .map(|s| s.estimate <= log_rho + 3.0 * s.standard_error);
            Some(GeometricCheck {
                mgf,
                log_rho,
                slope_within,
            })
        }
        None => None,
    };
    let table = csv(
        "loss_memory.csv",
        "s,difference,standard_error,harmonic_envelope,dominated",
        profile.points.iter().map(|p| {
            format!(
                "{},{},{},{},{}",
                p.s, p.difference.estimate, p.difference.standard_error, p.harmonic_envelope, p.dominated
            )
        }),
    );
    let slope = profile
        .log_slope
        .map_or("none".to_string(), |s| format!("{:.4} ± {:.4}", s.estimate, s.standard_error));
    let doc = LossMemoryDoc {
        seed: cfg.seed,
        spec_hash: spec.spec_hash(),
        profile,
        geometric,
    };
    Ok(Outcome {
        summary: format!(
            "loss-memory: c_hat {:.4e}, dominated {}, log slope {slope}",
            doc.profile.c_hat, doc.profile.dominated
        ),
        artifacts: vec![json("loss_memory.json", &doc)?, table],
        passed: true,
        draws: src.draws(),
    })
}

#[derive(Serialize)]
struct RateCheck {
    neuron: usize,
    exact: f64,
    sampled: Estimate,
    within: bool,
}

#[derive(Serialize)]
struct OracleCheckDoc {
    seed: u64,
    spec_hash: String,
    states: usize,
    memory: usize,
    samples: u64,
    time: i64,
    rates: Vec<RateCheck>,
    /// Stationary law of the configuration at one time, by spike bitmask.
    joint_exact: Vec<f64>,
    joint_counts: Vec<u64>,
    chi_square: ChiSquareTest,
    isi: Vec<IsiMoments>,
    passed: bool,
}

fn oracle_check(cfg: &Config) -> spikeclan::Result<Outcome> {
    let spec = cfg.model.build(cfg.seed)?;
    let o = &cfg.oracle_check;
    let oracle = MarkovOracle::new(&spec)?;
    let n = spec.neuron_count();
    let neurons: Vec<usize> = (0..n).collect();
    let src = RandomCoordinateSource::new(cfg.seed);
    let draws: Vec<(usize, u64)> = (0..o.samples)
        .into_par_iter()
        .map(|r| {
            let child = src.child(r);
            let sampler = ClanSampler::new(&spec, &child, o.budget)?;
            let field = sampler.sample(&neurons, o.time, o.time)?;
            let state = neurons.iter().filter(|&&i| field.get(i, o.time)).map(|&i| 1usize << i).sum();
            Ok((state, child.draws()))
        })
        .collect::<spikeclan::Result<_>>()?;
    let rates: Vec<RateCheck> = neurons
        .iter()
        .map(|&i| {
            let hits: Vec<f64> = draws.iter().map(|&(x, _)| (x >> i & 1) as f64).collect();
            let sampled = sample_mean(&hits);
            let exact = oracle.spike_rate(i);
            RateCheck {
                neuron: i,
                exact,
                sampled,
                within: sampled.within(exact, 3.0),
            }
        })
        .collect();
    let joint_exact = oracle.joint_distribution();
    let mut joint_counts = vec![0u64; joint_exact.len()];
    for &(x, _) in &draws {
        joint_counts[x] += 1;
    }
    let chi_square = chi_square_test(&joint_counts, &joint_exact)?;
    let isi = (0..n).map(|i| isi_moments(&oracle, i)).collect::<spikeclan::Result<Vec<_>>>()?;
    let passed = rates.iter().all(|r| r.within);
    let doc = OracleCheckDoc {
        seed: cfg.seed,
        spec_hash: spec.spec_hash(),
        states: oracle.state_count(),
        memory: oracle.memory(),
        samples: o.samples,
        time: o.time,
        rates,
        joint_exact,
        joint_counts,
        chi_square,
        isi,
        passed,
    };
    let worst = doc
        .rates
        .iter()
        .map(|r| (r.sampled.estimate - r.exact).abs() / r.sampled.standard_error.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(Outcome {
        summary: format!(
            "oracle-check: {} samples, worst rate deviation {worst:.2} SE, chi-square p = {:.4}, {}",
            o.samples,
            doc.chi_square.p_value,
            if passed { "pass" } else { "FAIL" }
        ),
        artifacts: vec![json("oracle.json", &doc)?],
        passed,
        draws: src.draws() + draws.iter().map(|d| d.1).sum::<u64>(),
    })
}
