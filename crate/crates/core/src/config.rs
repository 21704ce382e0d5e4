//! Run configuration: TOML parsing, defaults reproducing the benchmark
//! tracking experiment, validation, and lowering into simulator pieces.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_edge_weight_matrix, ring_phases, GraphSchedule};
use crate::noise::{NoiseKind, NoiseModel, T2_SIGMA_P15};
use crate::problem::{ProblemSeq, TrackingProblem};
use crate::rng::StreamKey;
use crate::sim::{ClipSchedule, StepSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemName {
    TrackingConvex,
    TrackingNonconvex,
}

impl ProblemName {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemName::TrackingConvex => "tracking_convex",
            ProblemName::TrackingNonconvex => "tracking_nonconvex",
        }
    }
}

/// Fully resolved and validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemName,
    pub agents: usize,
    pub dim: usize,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub delta: f64,
    pub out_dir: PathBuf,
    pub target_noise: bool,
    /// Overrides the per-problem loss scale (1/2 quadratic, 1/4 quartic).
    pub loss_scale: Option<f64>,
    pub state_bound: f64,
    pub init_lo: Vec<f64>,
    pub init_hi: Vec<f64>,
    pub step: StepSchedule,
    pub clip: ClipSchedule,
    pub noise: NoiseModel,
    pub edge_weight: f64,
    pub window_b: usize,
    /// 0-based undirected edge phases, cycled in order.
    pub phases: Vec<Vec<(usize, usize)>>,
}

// Raw mirror of the TOML schema; integers stay signed so negative values
// surface as validation errors instead of parse errors.
#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    problem: ProblemName,
    agents: i64,
    dim: i64,
    horizon: i64,
    seeds: Vec<u64>,
    delta: f64,
    out_dir: PathBuf,
    target_noise: bool,
    loss_scale: Option<f64>,
    state_bound: f64,
    init_box: RawInitBox,
    step: RawStep,
    clip: RawClip,
    noise: RawNoise,
    graph: RawGraph,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawInitBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawStep {
    a: f64,
    b: f64,
    kappa: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawClip {
    c0: f64,
    alpha: f64,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawNoise {
    kind: NoiseKind,
    scale: f64,
    tail_p: Option<f64>,
    sigma_p: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawGraph {
    edge_weight: f64,
    window_b: i64,
    /// 1-based node pairs per phase; omitted means the default ring phases.
    phases: Option<Vec<Vec<[i64; 2]>>>,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            problem: ProblemName::TrackingConvex,
            agents: 6,
            dim: 2,
            horizon: 5000,
            seeds: (1..=10).collect(),
            delta: 0.1,
            out_dir: PathBuf::from("out"),
            target_noise: true,
            loss_scale: None,
            state_bound: 25.0,
            init_box: RawInitBox::default(),
            step: RawStep::default(),
            clip: RawClip::default(),
            noise: RawNoise::default(),
            graph: RawGraph::default(),
        }
    }
}

impl Default for RawInitBox {
    fn default() -> Self {
        Self {
            lo: vec![9.0, 9.0],
            hi: vec![10.0, 10.0],
        }
    }
}

impl Default for RawStep {
    fn default() -> Self {
        Self {
            a: 0.5,
            b: 10.0,
            kappa: None,
        }
    }
}

impl Default for RawClip {
    fn default() -> Self {
        Self { c0: 2.0, alpha: 0.1 }
    }
}

impl Default for RawNoise {
    fn default() -> Self {
        Self {
            kind: NoiseKind::StudentT2,
            scale: 1.0,
            tail_p: None,
            sigma_p: None,
        }
    }
}

impl Default for RawGraph {
    fn default() -> Self {
        Self {
            edge_weight: 0.8,
            window_b: 4,
            phases: None,
        }
    }
}

fn positive_count(v: i64, what: &str) -> Result<usize> {
    if v < 1 {
        return Err(Error::Validation(format!("{what} must be >= 1, got {v}")));
    }
    Ok(v as usize)
}

impl RawConfig {
    fn resolve(self) -> Result<RunConfig> {
        let agents = positive_count(self.agents, "agents")?;
        let dim = positive_count(self.dim, "dim")?;
        let horizon = positive_count(self.horizon, "horizon")?;
        let window_b = positive_count(self.graph.window_b, "graph.window_b")?;

        // The non-convex benchmark decays its steps more slowly.
        let kappa = self.step.kappa.unwrap_or(match self.problem {
            ProblemName::TrackingConvex => 0.5,
            ProblemName::TrackingNonconvex => 0.4,
        });
        let step = StepSchedule::new(self.step.a, self.step.b, kappa)?;
        let clip = ClipSchedule::new(self.clip.c0, self.clip.alpha)?;

        let noise = resolve_noise(&self.noise)?;

        let phases = match self.graph.phases {
            Some(raw) => {
                let mut phases = Vec::with_capacity(raw.len());
                for phase in raw {
                    let mut edges = Vec::with_capacity(phase.len());
                    for [a, b] in phase {
                        if a < 1 || b < 1 || a as usize > agents || b as usize > agents {
                            return Err(Error::Validation(format!(
                                "graph edge ({a},{b}) must reference nodes in 1..={agents}"
                            )));
                        }
                        edges.push((a as usize - 1, b as usize - 1));
                    }
                    phases.push(edges);
                }
                phases
            }
            None => ring_phases(agents, 4),
        };

        let config = RunConfig {
            problem: self.problem,
            agents,
            dim,
            horizon,
            seeds: self.seeds,
            delta: self.delta,
            out_dir: self.out_dir,
            target_noise: self.target_noise,
            loss_scale: self.loss_scale,
            state_bound: self.state_bound,
            init_lo: self.init_box.lo,
            init_hi: self.init_box.hi,
            step,
            clip,
            noise,
            edge_weight: self.graph.edge_weight,
            window_b,
            phases,
        };
        config.validate()?;
        Ok(config)
    }
}

fn resolve_noise(raw: &RawNoise) -> Result<NoiseModel> {
    if raw.kind == NoiseKind::None {
        return Ok(NoiseModel::none());
    }
    let base = match raw.kind {
        NoiseKind::Gaussian => NoiseModel::gaussian(raw.scale),
        NoiseKind::StudentT2 => NoiseModel::student_t2(raw.scale),
        NoiseKind::ParetoSymmetric => NoiseModel::pareto_symmetric(raw.scale),
        NoiseKind::None => unreachable!(),
    };
    let model = match (raw.tail_p, raw.sigma_p) {
        (None, None) => base,
        (Some(p), Some(s)) => NoiseModel {
            tail_p: p,
            sigma_p: s,
            ..base
        },
        (None, Some(s)) => NoiseModel { sigma_p: s, ..base },
        (Some(p), None) => {
            // Default certificates are only precomputed for the default p.
            if (p - base.tail_p).abs() > 1e-12 {
                return Err(Error::Validation(format!(
                    "noise.sigma_p must be given explicitly for tail_p = {p} \
                     (no stored certificate for {} at that exponent)",
                    base.kind
                )));
            }
            base
        }
    };
    model.validate()?;
    Ok(model)
}

impl RunConfig {
    /// Benchmark convex tracking configuration (the all-defaults config).
    pub fn default_convex() -> Self {
        RawConfig::default().resolve().expect("defaults validate")
    }

    /// Benchmark non-convex preset: quartic loss and kappa = 0.4.
    pub fn default_nonconvex() -> Self {
        let raw = RawConfig {
            problem: ProblemName::TrackingNonconvex,
            ..RawConfig::default()
        };
        raw.resolve().expect("defaults validate")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        raw.resolve()
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents < 2 {
            return Err(Error::Validation(
                "tracking problems need at least 2 agents so both coordinates are observed".into(),
            ));
        }
        if self.dim != 2 {
            return Err(Error::Validation(format!(
                "tracking problems are 2-dimensional, got dim = {}",
                self.dim
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Validation("seeds must be non-empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Validation("seeds must be distinct".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Validation(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        if !(self.state_bound > 0.0) {
            return Err(Error::Validation(format!(
                "state_bound must be positive, got {}",
                self.state_bound
            )));
        }
        if let Some(s) = self.loss_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Validation(format!(
                    "loss_scale must be positive, got {s}"
                )));
            }
        }
        if self.init_lo.len() != self.dim || self.init_hi.len() != self.dim {
            return Err(Error::Validation(format!(
                "init_box must have {} coordinates",
                self.dim
            )));
        }
        if self
            .init_lo
            .iter()
            .zip(&self.init_hi)
            .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite()) || lo > hi)
        {
            return Err(Error::Validation("init_box needs lo <= hi per coordinate".into()));
        }
        if !(self.edge_weight > 0.0 && self.edge_weight < 1.0) {
            return Err(Error::Validation(format!(
                "graph.edge_weight must lie in (0,1), got {}",
                self.edge_weight
            )));
        }
        self.noise.validate()?;
        // Builds every phase matrix and checks window connectivity.
        self.graph_schedule()?;
        Ok(())
    }

    /// Theory-mode gate from the regret theorems: kappa > 2 alpha > 0.
    /// Violations downgrade bound checks to inapplicable, never block runs.
    pub fn theory_mode(&self) -> bool {
        self.step.kappa > 2.0 * self.clip.alpha && self.clip.alpha > 0.0
    }

    pub fn graph_schedule(&self) -> Result<GraphSchedule> {
        let matrices = self
            .phases
            .iter()
            .map(|p| build_edge_weight_matrix(self.agents, p, self.edge_weight))
            .collect::<Result<Vec<_>>>()?;
        GraphSchedule::new(matrices, self.window_b)
    }

    /// Instantiate the problem for one seed (the target trajectory is part of
    /// the random environment).
    pub fn build_problem(&self, seed: u64) -> Box<dyn ProblemSeq> {
        let key = StreamKey::new(seed);
        let target = crate::problem::target_trajectory(self.horizon, self.target_noise, &key);
        match self.problem {
            ProblemName::TrackingConvex => Box::new(match self.loss_scale {
                Some(s) => TrackingProblem::convex_scaled(target, self.agents, self.state_bound, s),
                None => TrackingProblem::convex(target, self.agents, self.state_bound),
            }),
            ProblemName::TrackingNonconvex => Box::new(match self.loss_scale {
                Some(s) => {
                    TrackingProblem::nonconvex_scaled(target, self.agents, self.state_bound, s)
                }
                None => TrackingProblem::nonconvex(target, self.agents, self.state_bound),
            }),
        }
    }
}

/// Load and validate a config file; an empty file yields the benchmark
/// convex defaults.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_toml_str(&text)
}
