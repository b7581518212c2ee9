//! Integration of the switched consensus dynamics, settling-time measurement
//! and Lyapunov diagnostics.

mod integrator;
mod random;

use log::warn;
use thiserror::Error;

use crate::graph::{GraphError, SwitchedNetwork, WeightedGraph};
use crate::protocol::{
    edgewise_into, nodewise_into, stiffness_bound, FamilyStats, ProtocolConfig, ProtocolError,
    ProtocolKind,
};
use crate::ptcfun::PtcFunction;

pub(crate) use integrator::{advance, Dynamics, Workspace};
pub use integrator::MIN_SUBSTEP_FRACTION;
pub use random::{make_random_switching, random_connected_graph, random_family};

/// Default ratio between the outer step and the settling bound `T_c`.
pub const DEFAULT_STEP_FRACTION: f64 = 1e-4;
/// Default substep safety factor (fraction of the inverse stiffness bound).
pub const DEFAULT_STABILITY_FACTOR: f64 = 1.0;
/// Default settle threshold relative to the initial disagreement.
pub const DEFAULT_SETTLE_REL: f64 = 1e-6;
/// Absolute floor of the default settle threshold.
pub const SETTLE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("initial state has {found} entries, network has {expected} vertices")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid integrator settings: {0}")]
    Config(String),
    #[error("state became non-finite after t = {t_last}")]
    NonFinite { t_last: f64 },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    /// Outer step `h`; the trace is sampled on this grid.
    pub step: f64,
    /// Final (absolute) time.
    pub horizon: f64,
    /// Absolute disagreement below which integration stops. `None` selects
    /// `max(1e-6 * disagreement(x0), 1e-12)`.
    pub settle_tol: Option<f64>,
    /// Substep control; `None` integrates with plain fixed steps.
    pub stability_factor: Option<f64>,
}

impl IntegratorConfig {
    pub fn new(step: f64, horizon: f64) -> Self {
        Self {
            step,
            horizon,
            settle_tol: None,
            stability_factor: Some(DEFAULT_STABILITY_FACTOR),
        }
    }

    /// Step `1e-4 T_c` up to `horizon`.
    pub fn for_deadline(t_c: f64, horizon: f64) -> Self {
        Self::new(DEFAULT_STEP_FRACTION * t_c, horizon)
    }

    pub fn with_settle_tol(mut self, tol: f64) -> Self {
        self.settle_tol = Some(tol);
        self
    }

    pub fn with_stability_factor(mut self, factor: Option<f64>) -> Self {
        self.stability_factor = factor;
        self
    }

    pub fn resolve_settle_tol(&self, initial_disagreement: f64) -> f64 {
        self.settle_tol
            .unwrap_or_else(|| (DEFAULT_SETTLE_REL * initial_disagreement).max(SETTLE_FLOOR))
    }

    pub(crate) fn validate(&self, t0: f64) -> Result<(), SimError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(SimError::Config(format!("step {} must be positive", self.step)));
        }
        if !(self.horizon > t0 && self.horizon.is_finite()) {
            return Err(SimError::Config(format!(
                "horizon {} must exceed the start time {t0}",
                self.horizon
            )));
        }
        if let Some(tol) = self.settle_tol {
            if !(tol > 0.0) {
                return Err(SimError::Config(format!("settle tolerance {tol} must be positive")));
            }
        }
        if let Some(c) = self.stability_factor {
            if !(c > 0.0 && c.is_finite()) {
                return Err(SimError::Config(format!("stability factor {c} must be positive")));
            }
        }
        Ok(())
    }

    /// Number of outer steps from `t0` to the horizon.
    pub(crate) fn step_count(&self, t0: f64) -> usize {
        ((self.horizon - t0) / self.step - 1e-9).ceil().max(0.0) as usize
    }
}

/// Per-sample Lyapunov diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// `max(x) - min(x)`.
    pub v_maxmin: f64,
    /// `sqrt(lambda) beta(m_hi) ||x - alpha 1||` with `alpha` the initial mean.
    pub v_delta: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Active family index on `[times[k], times[k + 1])`.
    pub sigma: Vec<usize>,
    pub diagnostics: Vec<Diagnostics>,
    /// Integration stopped early because the disagreement fell below
    /// `settle_tol`; the state is frozen from the last sample on.
    pub halted: bool,
    pub settle_tol: f64,
    /// Some drift evaluation hit the overflow clamp.
    pub clamped: bool,
    /// Some substep hit the minimum length, so stability was not enforced.
    pub floor_hit: bool,
    pub substeps: usize,
}

impl SimulationTrace {
    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trace is never empty")
    }

    /// Sampled state at time `t` (the last sample at or before `t`); past the
    /// end of an early-halted trace this is the frozen state.
    pub fn state_at(&self, t: f64) -> &[f64] {
        let k = self.times.partition_point(|&s| s <= t + 1e-12 * t.abs().max(1.0));
        &self.states[k.saturating_sub(1)]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// `max(x) - min(x)`.
pub fn disagreement(x: &[f64]) -> f64 {
    assert!(!x.is_empty(), "disagreement of an empty state");
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Elapsed time from `t0` to the first sample after which the max-min
/// disagreement stays below `tol`; `None` if the trace never settles.
pub fn settling_time(trace: &SimulationTrace, tol: f64) -> Option<f64> {
    let k = trace
        .diagnostics
        .iter()
        .rposition(|d| !(d.v_maxmin < tol))
        .map_or(0, |last_bad| last_bad + 1);
    trace.times.get(k).map(|t| t - trace.t0())
}

/// Consensus dynamics on the currently active family member.
pub(crate) struct ConsensusDynamics<'a> {
    pub kind: ProtocolKind,
    pub kappa: &'a [f64],
    pub f: &'a PtcFunction,
    pub graph: &'a WeightedGraph,
    pub scratch: Vec<f64>,
}

impl Dynamics for ConsensusDynamics<'_> {
    fn prepare(&mut self, _: f64, _: &[f64]) {}

    fn eval(&self, x: &[f64], out: &mut [f64]) -> bool {
        match self.kind {
            ProtocolKind::EdgeWise => edgewise_into(x, self.graph, self.kappa, self.f, out),
            ProtocolKind::NodeWise => nodewise_into(x, self.graph, self.kappa, self.f, out),
        }
    }

    fn stiffness(&mut self, x: &[f64], floor: f64) -> f64 {
        stiffness_bound(
            self.kind,
            x,
            self.graph,
            self.kappa,
            self.f,
            floor,
            &mut self.scratch,
        )
    }
}

/// Integrates `x' = u(x)` for the protocol in `cfg` over the switched
/// network.
///
/// Switching breakpoints are snapped to the step grid so every step sees a
/// single topology. The trace is sampled once per outer step and ends early
/// (state frozen) once the disagreement is below the settle threshold.
pub fn simulate(
    net: &SwitchedNetwork,
    cfg: &ProtocolConfig,
    x0: &[f64],
    icfg: &IntegratorConfig,
) -> Result<SimulationTrace, SimError> {
    let n = net.vertex_count();
    if x0.len() != n {
        return Err(SimError::DimensionMismatch {
            expected: n,
            found: x0.len(),
        });
    }
    if cfg.kappa().len() != n {
        return Err(ProtocolError::GainLength {
            expected: n,
            found: cfg.kappa().len(),
        }
        .into());
    }
    let t0 = net.signal().t0();
    icfg.validate(t0)?;
    let signal = net.signal().snapped(icfg.step);
    let stats = FamilyStats::from_family(net.family())?;
    let lyap_scale = stats.lambda.sqrt() * cfg.ptc().beta(stats.m_hi);
    let alpha = mean(x0);
    let diag = |x: &[f64]| Diagnostics {
        v_maxmin: disagreement(x),
        v_delta: lyap_scale * x.iter().map(|v| (v - alpha) * (v - alpha)).sum::<f64>().sqrt(),
        mean: mean(x),
    };

    let settle_tol = icfg.resolve_settle_tol(disagreement(x0));
    let floor = settle_tol;
    let steps = icfg.step_count(t0);
    let mut trace = SimulationTrace {
        times: vec![t0],
        states: vec![x0.to_vec()],
        sigma: vec![signal.index_at(t0)],
        diagnostics: vec![diag(x0)],
        halted: false,
        settle_tol,
        clamped: false,
        floor_hit: false,
        substeps: 0,
    };
    if trace.diagnostics[0].v_maxmin < settle_tol {
        trace.halted = true;
        return Ok(trace);
    }

    let mut x = x0.to_vec();
    let mut work = Workspace::new(n);
    let mut scratch = vec![0.0; n];
    for k in 0..steps {
        let t = t0 + k as f64 * icfg.step;
        let idx = signal.index_at(t);
        let mut sys = ConsensusDynamics {
            kind: cfg.kind(),
            kappa: cfg.kappa(),
            f: cfg.ptc(),
            graph: &net.family()[idx],
            scratch: std::mem::take(&mut scratch),
        };
        let report = advance(
            &mut sys,
            t,
            &mut x,
            icfg.step,
            icfg.stability_factor,
            floor,
            &mut work,
        );
        scratch = sys.scratch;
        trace.substeps += report.substeps;
        trace.floor_hit |= report.floor_hit;
        if report.clamped && !trace.clamped {
            warn!("drift magnitude clamped near t = {t}");
            trace.clamped = true;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SimError::NonFinite { t_last: t });
        }
        let t_next = t0 + (k + 1) as f64 * icfg.step;
        let d = diag(&x);
        trace.times.push(t_next);
        trace.states.push(x.clone());
        trace.sigma.push(signal.index_at(t_next));
        trace.diagnostics.push(d);
        if d.v_maxmin < settle_tol {
            trace.halted = true;
            break;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SwitchingSignal;
    use crate::ptcfun::{make_power_k, make_power_n};

    fn sym() -> PtcFunction {
        make_power_k(1.0, 1.0, 0.5, 1.5, 1.0).unwrap()
    }

    #[test]
    fn disagreement_examples() {
        assert_eq!(disagreement(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(disagreement(&[4.0; 5]), 0.0);
        assert_eq!(disagreement(&[-5.0, 5.0]), 10.0);
    }

    #[test]
    fn consensus_initial_state_is_constant() {
        let net = SwitchedNetwork::fixed(WeightedGraph::path(4).unwrap(), 0.0).unwrap();
        let cfg = ProtocolConfig::uniform(ProtocolKind::EdgeWise, 4, 2.0, sym(), Some(1.0)).unwrap();
        let icfg = IntegratorConfig::new(1e-3, 1.0).with_settle_tol(1e-9);
        let trace = simulate(&net, &cfg, &[1.5; 4], &icfg).unwrap();
        assert!(trace.halted);
        assert!(trace.states.iter().all(|s| s == &vec![1.5; 4]));
        assert_eq!(settling_time(&trace, 1e-9), Some(0.0));
    }

    #[test]
    fn two_agents_stay_symmetric() {
        let net = SwitchedNetwork::fixed(WeightedGraph::complete(2).unwrap(), 0.0).unwrap();
        let cfg = ProtocolConfig::uniform(ProtocolKind::EdgeWise, 2, 1.0, sym(), Some(1.0)).unwrap();
        let icfg = IntegratorConfig::new(1e-4, 1.0);
        let trace = simulate(&net, &cfg, &[1.0, -1.0], &icfg).unwrap();
        for s in &trace.states {
            assert!((s[0] + s[1]).abs() < 1e-14);
        }
        for d in &trace.diagnostics {
            assert!(d.mean.abs() < 1e-14);
        }
        assert!(trace.halted);
    }

    #[test]
    fn never_settling_trace() {
        // tiny gain, short horizon
        let net = SwitchedNetwork::fixed(WeightedGraph::path(3).unwrap(), 0.0).unwrap();
        let cfg = ProtocolConfig::uniform(ProtocolKind::NodeWise, 3, 1e-3, sym(), None).unwrap();
        let icfg = IntegratorConfig::new(1e-3, 0.05);
        let trace = simulate(&net, &cfg, &[0.0, 1.0, 2.0], &icfg).unwrap();
        assert!(!trace.halted);
        assert_eq!(settling_time(&trace, 1e-6), None);
        assert_eq!(trace.len(), 51);
        assert!((trace.times.last().unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn settling_time_uses_last_excursion() {
        let mk = |v: f64| Diagnostics {
            v_maxmin: v,
            v_delta: 0.0,
            mean: 0.0,
        };
        let trace = SimulationTrace {
            times: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            states: vec![vec![0.0]; 5],
            sigma: vec![0; 5],
            diagnostics: [1.0, 0.01, 0.5, 0.01, 0.001].map(mk).to_vec(),
            halted: false,
            settle_tol: 1e-3,
            clamped: false,
            floor_hit: false,
            substeps: 0,
        };
        assert_eq!(settling_time(&trace, 0.1), Some(0.3));
        assert_eq!(settling_time(&trace, 2.0), Some(0.0));
        assert_eq!(settling_time(&trace, 1e-4), None);
    }

    #[test]
    fn switching_takes_effect_at_breakpoints() {
        let fam = vec![
            WeightedGraph::path(3).unwrap(),
            WeightedGraph::complete(3).unwrap(),
        ];
        let sig = SwitchingSignal::new(vec![0.0, 0.0102, 0.03], vec![0, 1, 0], 0.01).unwrap();
        let net = SwitchedNetwork::new(fam, sig).unwrap();
        let f = make_power_n(1.0, 1.0, 0.5, 1.5, 3).unwrap();
        let cfg = ProtocolConfig::uniform(ProtocolKind::EdgeWise, 3, 0.01, f, None).unwrap();
        let icfg = IntegratorConfig::new(1e-3, 0.05);
        let trace = simulate(&net, &cfg, &[0.0, 1.0, 5.0], &icfg).unwrap();
        // breakpoint 0.0102 snaps to 0.010
        let switch_at: Vec<f64> = trace
            .sigma
            .windows(2)
            .zip(&trace.times[1..])
            .filter(|(w, _)| w[0] != w[1])
            .map(|(_, t)| *t)
            .collect();
        assert_eq!(switch_at.len(), 2);
        assert!((switch_at[0] - 0.010).abs() < 1e-12);
        assert!((switch_at[1] - 0.030).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let net = SwitchedNetwork::fixed(WeightedGraph::path(3).unwrap(), 0.0).unwrap();
        let cfg = ProtocolConfig::uniform(ProtocolKind::NodeWise, 3, 1.0, sym(), None).unwrap();
        let icfg = IntegratorConfig::new(1e-3, 1.0);
        assert!(matches!(
            simulate(&net, &cfg, &[0.0, 1.0], &icfg),
            Err(SimError::DimensionMismatch { .. })
        ));
        let bad = IntegratorConfig::new(0.0, 1.0);
        assert!(matches!(simulate(&net, &cfg, &[0.0, 1.0, 2.0], &bad), Err(SimError::Config(_))));
        let bad = IntegratorConfig::new(1e-3, -1.0);
        assert!(matches!(simulate(&net, &cfg, &[0.0, 1.0, 2.0], &bad), Err(SimError::Config(_))));
    }

    #[test]
    fn overflow_is_reported() {
        use crate::ptcfun::make_exp_sqrt;
        let net = SwitchedNetwork::fixed(WeightedGraph::complete(2).unwrap(), 0.0).unwrap();
        let cfg =
            ProtocolConfig::uniform(ProtocolKind::NodeWise, 2, 1.0, make_exp_sqrt(), None).unwrap();
        let icfg = IntegratorConfig::new(1e-3, 1.0).with_stability_factor(None);
        let err = simulate(&net, &cfg, &[0.0, 5e3], &icfg).unwrap_err();
        assert!(matches!(err, SimError::NonFinite { .. }), "{err:?}");
    }
}
