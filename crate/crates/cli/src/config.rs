//! Experiment configuration, read from a JSON document.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "name": "example1",
//!   "seed": 1,
//!   "experiment": { "mode": "consensus", ... }
//! }
//! ```
//!
//! Validation happens before anything runs; every problem is reported as a
//! [`ConfigError`] naming the offending field.

use std::path::{Path, PathBuf};

use ptc_core::protocol::ProtocolKind;
use ptc_core::ptcfun::{PtcFunction, PtcSpec};
use ptc_core::sim::{IntegratorConfig, SETTLE_FLOOR};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Smallest accepted quadrature tolerance for certification runs.
pub const MIN_QUADRATURE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema_version {found}, expected {SCHEMA_VERSION}")]
    Schema { found: u32 },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid<T>(field: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub experiment: Experiment,
}

fn default_name() -> String {
    "run".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Experiment {
    Consensus(ConsensusSpec),
    Formation(FormationSpec),
    Certify(CertifySpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusSpec {
    pub graphs: GraphSource,
    #[serde(default)]
    pub switching: Switching,
    pub protocol: ProtocolKind,
    pub function: FunctionSpec,
    pub t_c: f64,
    pub gain: GainRule,
    pub x0: InitialState,
    pub integrator: Integrator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    /// Edge-list files, one graph each; relative paths resolve against the
    /// config file's directory.
    Files { paths: Vec<PathBuf> },
    /// `count` seeded random connected graphs on `n` vertices.
    Random { n: usize, count: usize },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Switching {
    /// Always the first graph.
    #[default]
    Constant,
    /// Seeded random signal with dwell times in `[min_dwell, 3 min_dwell]`.
    Random { min_dwell: f64 },
    Explicit {
        breakpoints: Vec<f64>,
        indices: Vec<usize>,
        min_dwell: f64,
    },
}

/// A catalog family. `n` of `power_n` may be left out; it then defaults to
/// the largest edge count for the edge-wise protocol and the agent count for
/// the node-wise one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    ExpP { p: f64 },
    ExpSqrt,
    PowerK { a: f64, b: f64, p: f64, q: f64, k: f64 },
    PowerN { a: f64, b: f64, p: f64, q: f64, n: Option<usize> },
}

impl FunctionSpec {
    pub fn build(&self, default_n: usize) -> Result<PtcFunction, ConfigError> {
        let spec = match *self {
            FunctionSpec::ExpP { p } => PtcSpec::ExpP { p },
            FunctionSpec::ExpSqrt => PtcSpec::ExpSqrt,
            FunctionSpec::PowerK { a, b, p, q, k } => PtcSpec::PowerK { a, b, p, q, k },
            FunctionSpec::PowerN { a, b, p, q, n } => PtcSpec::PowerN {
                a,
                b,
                p,
                q,
                n: n.unwrap_or(default_n).max(1),
            },
        };
        spec.build().or_else(|e| invalid("function", e.to_string()))
    }
}

impl From<PtcSpec> for FunctionSpec {
    fn from(spec: PtcSpec) -> Self {
        match spec {
            PtcSpec::ExpP { p } => FunctionSpec::ExpP { p },
            PtcSpec::ExpSqrt => FunctionSpec::ExpSqrt,
            PtcSpec::PowerK { a, b, p, q, k } => FunctionSpec::PowerK { a, b, p, q, k },
            PtcSpec::PowerN { a, b, p, q, n } => FunctionSpec::PowerN { a, b, p, q, n: Some(n) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainRule {
    /// Switching-network bound, valid for the edge-wise protocol.
    Theorem2,
    /// Static-network bound for the node-wise protocol, using the smallest
    /// algebraic connectivity in the family.
    Theorem3,
    /// Fixed gains: one value for every node or one per node.
    Explicit { kappa: Gains },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gains {
    Uniform(f64),
    PerNode(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    Values(Vec<f64>),
    /// Seeded draw, uniform in `[-half_width, half_width]`.
    Uniform { half_width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Integrator {
    pub step: f64,
    pub horizon: f64,
    #[serde(default)]
    pub settle_tol: Option<f64>,
    /// `null` disables step-size control; absent means the default factor.
    #[serde(default = "default_stability", skip_serializing_if = "is_default_stability")]
    pub stability_factor: Option<f64>,
}

fn default_stability() -> Option<f64> {
    Some(ptc_core::sim::DEFAULT_STABILITY_FACTOR)
}

fn is_default_stability(v: &Option<f64>) -> bool {
    *v == default_stability()
}

impl Integrator {
    pub fn to_core(&self) -> IntegratorConfig {
        let mut icfg = IntegratorConfig::new(self.step, self.horizon)
            .with_stability_factor(self.stability_factor);
        if let Some(tol) = self.settle_tol {
            icfg = icfg.with_settle_tol(tol);
        }
        icfg
    }

    fn validate(&self, t_c: f64) -> Result<(), ConfigError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return invalid("integrator.step", format!("must be positive, got {}", self.step));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return invalid("integrator.horizon", format!("must be positive, got {}", self.horizon));
        }
        if self.horizon < t_c {
            return invalid(
                "integrator.horizon",
                format!("{} ends before the deadline t_c = {t_c}", self.horizon),
            );
        }
        if let Some(tol) = self.settle_tol {
            // the tolerance doubles as the integrator's stiffness floor; below
            // this the step size collapses near consensus
            if !(tol >= SETTLE_FLOOR) {
                return invalid(
                    "integrator.settle_tol",
                    format!("must be at least {SETTLE_FLOOR:e}, got {tol}"),
                );
            }
        }
        if let Some(c) = self.stability_factor {
            if !(c > 0.0 && c.is_finite()) {
                return invalid("integrator.stability_factor", format!("must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationSpec {
    /// Reference positions `z*`; the agent count is their number.
    pub reference: Vec<[f64; 2]>,
    pub comm_range: f64,
    pub protocol: ProtocolKind,
    pub function: FunctionSpec,
    pub t_c: f64,
    pub gain: FormationGain,
    pub z0: InitialPositions,
    pub integrator: Integrator,
    #[serde(default)]
    pub on_disconnect: DisconnectPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum FormationGain {
    /// Switching-network bound over every connected proximity graph: the
    /// path graph's algebraic connectivity and edge counts between `n - 1`
    /// and `n (n - 1) / 2`.
    Theorem2,
    Explicit { kappa: Gains },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialPositions {
    Values(Vec<[f64; 2]>),
    /// Seeded draw, uniform in `[lo, hi]^2`, redrawn until the proximity
    /// graph is connected.
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisconnectPolicy {
    #[default]
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySpec {
    /// Functions to certify; the reference catalog when absent.
    #[serde(default)]
    pub functions: Option<Vec<FunctionSpec>>,
    #[serde(default = "default_cutoff")]
    pub tail_cutoff: f64,
    #[serde(default = "default_quadrature_tol")]
    pub quadrature_tol: f64,
    #[serde(default = "default_trials")]
    pub inequality_trials: usize,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
}

fn default_cutoff() -> f64 {
    ptc_core::ptcfun::DEFAULT_TAIL_CUTOFF
}

fn default_quadrature_tol() -> f64 {
    1e-3
}

fn default_trials() -> usize {
    10_000
}

fn default_sizes() -> Vec<usize> {
    vec![1, 2, 5, 10, 50]
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        // read the version first so a newer document fails with a clear message
        #[derive(Deserialize)]
        struct Version {
            schema_version: u32,
        }
        let v: Version = serde_json::from_str(text)?;
        if v.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema {
                found: v.schema_version,
            });
        }
        let cfg: Self = serde_json::from_str(text)?;
        Ok(cfg)
    }

    /// Reads a config file; relative graph paths are made absolute against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Experiment::Consensus(ConsensusSpec {
            graphs: GraphSource::Files { paths },
            ..
        }) = &mut cfg.experiment
        {
            for p in paths.iter_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema {
                found: self.schema_version,
            });
        }
        match &self.experiment {
            Experiment::Consensus(c) => c.validate(),
            Experiment::Formation(f) => f.validate(),
            Experiment::Certify(c) => c.validate(),
        }
    }
}

fn check_deadline(t_c: f64) -> Result<(), ConfigError> {
    if !(t_c > 0.0 && t_c.is_finite()) {
        return invalid("t_c", format!("must be positive, got {t_c}"));
    }
    Ok(())
}

fn check_gains(gains: &Gains, n: usize) -> Result<(), ConfigError> {
    let values = match gains {
        Gains::Uniform(k) => std::slice::from_ref(k),
        Gains::PerNode(ks) => {
            if ks.len() != n {
                return invalid("gain.kappa", format!("{} values for {n} agents", ks.len()));
            }
            ks.as_slice()
        }
    };
    if let Some(k) = values.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
        return invalid("gain.kappa", format!("gains must be positive, got {k}"));
    }
    Ok(())
}

impl ConsensusSpec {
    /// Agent count when it is known without reading graph files.
    pub fn declared_agents(&self) -> Option<usize> {
        match (&self.graphs, &self.x0) {
            (GraphSource::Random { n, .. }, _) => Some(*n),
            (_, InitialState::Values(v)) => Some(v.len()),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        check_deadline(self.t_c)?;
        self.integrator.validate(self.t_c)?;
        let family_size = match &self.graphs {
            GraphSource::Files { paths } => {
                if paths.is_empty() {
                    return invalid("graphs.paths", "no graph files given");
                }
                if let Some(p) = paths.iter().find(|p| !p.is_file()) {
                    return invalid("graphs.paths", format!("{} does not exist", p.display()));
                }
                paths.len()
            }
            GraphSource::Random { n, count } => {
                if *n < 2 {
                    return invalid("graphs.n", "need at least two agents");
                }
                if *count == 0 {
                    return invalid("graphs.count", "need at least one graph");
                }
                *count
            }
        };
        match &self.switching {
            Switching::Constant => {}
            Switching::Random { min_dwell } => {
                if !(*min_dwell > 0.0 && min_dwell.is_finite()) {
                    return invalid("switching.min_dwell", format!("must be positive, got {min_dwell}"));
                }
            }
            Switching::Explicit { indices, .. } => {
                if let Some(i) = indices.iter().find(|&&i| i >= family_size) {
                    return invalid(
                        "switching.indices",
                        format!("index {i} outside a family of {family_size} graphs"),
                    );
                }
            }
        }
        self.function.build(1)?;
        match &self.x0 {
            InitialState::Values(v) => {
                if let Some(n) = self.declared_agents().filter(|&n| n != v.len()) {
                    return invalid("x0", format!("{} values for {n} agents", v.len()));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return invalid("x0", "values must be finite");
                }
            }
            InitialState::Uniform { half_width } => {
                if !(*half_width > 0.0 && half_width.is_finite()) {
                    return invalid("x0.uniform.half_width", format!("must be positive, got {half_width}"));
                }
            }
        }
        if let GainRule::Explicit { kappa } = &self.gain {
            if let Some(n) = self.declared_agents() {
                check_gains(kappa, n)?;
            } else if let Gains::Uniform(_) = kappa {
                check_gains(kappa, 0)?;
            }
        }
        Ok(())
    }
}

impl FormationSpec {
    pub fn agent_count(&self) -> usize {
        self.reference.len()
    }

    fn validate(&self) -> Result<(), ConfigError> {
        check_deadline(self.t_c)?;
        self.integrator.validate(self.t_c)?;
        let n = self.agent_count();
        if n < 2 {
            return invalid("reference", "need at least two agents");
        }
        if self.reference.iter().flatten().any(|v| !v.is_finite()) {
            return invalid("reference", "positions must be finite");
        }
        if !(self.comm_range > 0.0 && self.comm_range.is_finite()) {
            return invalid("comm_range", format!("must be positive, got {}", self.comm_range));
        }
        self.function.build(1)?;
        match &self.z0 {
            InitialPositions::Values(z) => {
                if z.len() != n {
                    return invalid("z0", format!("{} positions for {n} agents", z.len()));
                }
                if z.iter().flatten().any(|v| !v.is_finite()) {
                    return invalid("z0", "positions must be finite");
                }
            }
            InitialPositions::Uniform { lo, hi } => {
                if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                    return invalid("z0.uniform", format!("need lo < hi, got [{lo}, {hi}]"));
                }
            }
        }
        if let FormationGain::Explicit { kappa } = &self.gain {
            check_gains(kappa, n)?;
        }
        Ok(())
    }
}

impl CertifySpec {
    fn validate(&self) -> Result<(), ConfigError> {
        if let Some(fs) = &self.functions {
            if fs.is_empty() {
                return invalid("functions", "empty list");
            }
            for f in fs {
                f.build(1)?;
            }
        }
        if !(self.tail_cutoff > 1.0 && self.tail_cutoff.is_finite()) {
            return invalid("tail_cutoff", format!("must exceed 1, got {}", self.tail_cutoff));
        }
        // the end-piece estimates leave residuals near 1e-9; asking for much
        // less only makes the adaptive rule subdivide without end
        if !(self.quadrature_tol >= MIN_QUADRATURE_TOL) {
            return invalid(
                "quadrature_tol",
                format!("must be at least {MIN_QUADRATURE_TOL:e}, got {}", self.quadrature_tol),
            );
        }
        if self.sizes.iter().any(|&n| n == 0) {
            return invalid("sizes", "sizes must be positive");
        }
        Ok(())
    }
}

pub fn resolve_gains(gains: &Gains, n: usize) -> Vec<f64> {
    match gains {
        Gains::Uniform(k) => vec![*k; n],
        Gains::PerNode(ks) => ks.clone(),
    }
}
