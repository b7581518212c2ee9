//! Displacement-based formation control.
//!
//! Each agent moves in the plane using only relative displacements to its
//! neighbours. Running a consensus protocol on `x = z - z*` coordinatewise
//! drives the agents to `z* + alpha` for some common offset `alpha`, i.e. to
//! any translate of the reference formation.

use std::collections::VecDeque;

use log::warn;
use thiserror::Error;

use crate::graph::{proximity_graph, GraphError, WeightedGraph};
use crate::protocol::{
    drift, edgewise_into, nodewise_into, stiffness_bound, ProtocolConfig, ProtocolError,
    ProtocolKind,
};
use crate::ptcfun::PtcFunction;
use crate::sim::{advance, disagreement, Dynamics, IntegratorConfig, SimError, Workspace};

pub type Point = [f64; 2];

/// Tolerance of the cycle-consistency check on explicit displacement lists.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormationError {
    #[error("expected {expected} agents, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("a formation needs at least one agent")]
    NoAgents,
    #[error("displacement for ({j}, {i}) is not finite")]
    NonFinite { j: usize, i: usize },
    #[error("agent index {index} out of range for {n} agents")]
    AgentOutOfRange { index: usize, n: usize },
    #[error("displacements do not pin agent {0} relative to agent 0")]
    Underdetermined(usize),
    #[error("displacement ({j}, {i}) is off by {residual:e} from a consistent formation")]
    Infeasible { j: usize, i: usize, residual: f64 },
    #[error("communication range {0} must be positive")]
    BadRange(f64),
    #[error("initial proximity graph is disconnected")]
    InitiallyDisconnected,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Desired displacements `d*_ji = z*_j - z*_i`, stored through a reference
/// formation `z*`. Feasible displacement sets are exactly those that come from
/// some `z*`, so nothing is lost.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementSpec {
    zstar: Vec<Point>,
}

impl DisplacementSpec {
    pub fn from_reference(zstar: Vec<Point>) -> Result<Self, FormationError> {
        if zstar.is_empty() {
            return Err(FormationError::NoAgents);
        }
        if let Some(i) = zstar.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(FormationError::NonFinite { j: i, i });
        }
        Ok(Self { zstar })
    }

    /// Builds a spec from explicit displacements `(j, i, d*_ji)`.
    ///
    /// A reference formation is rebuilt by breadth-first search from agent 0
    /// over the listed pairs; every listed displacement, in both directions,
    /// must then agree with it to [`FEASIBILITY_TOL`].
    pub fn from_pairs<I>(n: usize, pairs: I) -> Result<Self, FormationError>
    where
        I: IntoIterator<Item = (usize, usize, Point)>,
    {
        if n == 0 {
            return Err(FormationError::NoAgents);
        }
        let pairs: Vec<_> = pairs.into_iter().collect();
        let mut adj = vec![Vec::new(); n];
        for (k, &(j, i, d)) in pairs.iter().enumerate() {
            for index in [i, j] {
                if index >= n {
                    return Err(FormationError::AgentOutOfRange { index, n });
                }
            }
            if !d.iter().all(|v| v.is_finite()) {
                return Err(FormationError::NonFinite { j, i });
            }
            adj[i].push(k);
            adj[j].push(k);
        }
        let mut zstar: Vec<Option<Point>> = vec![None; n];
        zstar[0] = Some([0.0, 0.0]);
        let mut queue = VecDeque::from([0]);
        while let Some(v) = queue.pop_front() {
            let zv = zstar[v].expect("queued vertices are placed");
            for &k in &adj[v] {
                let (j, i, d) = pairs[k];
                // z_j = z_i + d
                let (other, pos) = if v == i {
                    (j, [zv[0] + d[0], zv[1] + d[1]])
                } else {
                    (i, [zv[0] - d[0], zv[1] - d[1]])
                };
                if zstar[other].is_none() {
                    zstar[other] = Some(pos);
                    queue.push_back(other);
                }
            }
        }
        let zstar: Vec<Point> = zstar
            .into_iter()
            .enumerate()
            .map(|(v, p)| p.ok_or(FormationError::Underdetermined(v)))
            .collect::<Result<_, _>>()?;
        let spec = Self { zstar };
        for (j, i, d) in pairs {
            let want = spec.dstar(j, i);
            let residual = (want[0] - d[0]).hypot(want[1] - d[1]);
            if !(residual <= FEASIBILITY_TOL * (1.0 + d[0].hypot(d[1]))) {
                return Err(FormationError::Infeasible { j, i, residual });
            }
        }
        Ok(spec)
    }

    pub fn agent_count(&self) -> usize {
        self.zstar.len()
    }

    pub fn reference(&self) -> &[Point] {
        &self.zstar
    }

    /// `d*_ji = z*_j - z*_i`.
    pub fn dstar(&self, j: usize, i: usize) -> Point {
        let (a, b) = (self.zstar[j], self.zstar[i]);
        [a[0] - b[0], a[1] - b[1]]
    }

    /// `x = z - z*` split into its two coordinate vectors.
    pub fn shifted(&self, z: &[Point]) -> [Vec<f64>; 2] {
        [0, 1].map(|c| z.iter().zip(&self.zstar).map(|(p, s)| p[c] - s[c]).collect())
    }

    /// Inverse of [`shifted`](Self::shifted).
    pub fn unshift(&self, x: &[f64], y: &[f64]) -> Vec<Point> {
        self.zstar
            .iter()
            .zip(x.iter().zip(y))
            .map(|(s, (x, y))| [x + s[0], y + s[1]])
            .collect()
    }

    fn check(&self, z: &[Point]) -> Result<(), FormationError> {
        if z.len() != self.zstar.len() {
            return Err(FormationError::DimensionMismatch {
                expected: self.zstar.len(),
                found: z.len(),
            });
        }
        Ok(())
    }
}

/// Formation velocities: the consensus drift of `cfg` applied to each
/// coordinate of `z - z*`.
pub fn drift_formation(
    z: &[Point],
    g: &WeightedGraph,
    spec: &DisplacementSpec,
    cfg: &ProtocolConfig,
) -> Result<Vec<Point>, FormationError> {
    spec.check(z)?;
    let [x, y] = spec.shifted(z);
    let vx = drift(&x, g, cfg)?;
    let vy = drift(&y, g, cfg)?;
    Ok(vx.into_iter().zip(vy).map(|(a, b)| [a, b]).collect())
}

/// `max ||(z_j - z_i) - d*_ji||` over the edges of `g`; zero without edges.
pub fn formation_error(z: &[Point], g: &WeightedGraph, spec: &DisplacementSpec) -> f64 {
    g.edges()
        .iter()
        .map(|e| pair_error(z, spec, e.j, e.i))
        .fold(0.0, f64::max)
}

/// Same as [`formation_error`] over every pair of agents.
pub fn pairwise_formation_error(z: &[Point], spec: &DisplacementSpec) -> f64 {
    let n = z.len();
    (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (j, i)))
        .map(|(j, i)| pair_error(z, spec, j, i))
        .fold(0.0, f64::max)
}

fn pair_error(z: &[Point], spec: &DisplacementSpec, j: usize, i: usize) -> f64 {
    let d = spec.dstar(j, i);
    (z[j][0] - z[i][0] - d[0]).hypot(z[j][1] - z[i][1] - d[1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormationTrace {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<Point>>,
    /// Formation error over the edges of the proximity graph at each sample.
    pub formation_error: Vec<f64>,
    /// Whether the proximity graph at each sample is connected.
    pub connected: Vec<bool>,
    /// Distinct proximity graphs in order of appearance; `sigma[k]` indexes
    /// the graph in force on `[times[k], times[k + 1])`.
    pub graphs: Vec<WeightedGraph>,
    pub sigma: Vec<usize>,
    /// The proximity graph stayed connected at every sample, so the
    /// predefined-time guarantee applies.
    pub certified: bool,
    pub halted: bool,
    pub settle_tol: f64,
    pub clamped: bool,
    pub floor_hit: bool,
    pub substeps: usize,
}

impl FormationTrace {
    pub fn final_positions(&self) -> &[Point] {
        self.positions.last().expect("trace is never empty")
    }

    /// Sampled positions at time `t` (frozen after an early halt).
    pub fn positions_at(&self, t: f64) -> &[Point] {
        let k = self.times.partition_point(|&s| s <= t + 1e-12 * t.abs().max(1.0));
        &self.positions[k.saturating_sub(1)]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Both coordinates of `x = z - z*` stacked as `[x_0..x_n, y_0..y_n]`.
struct FormationDynamics<'a> {
    kind: ProtocolKind,
    kappa: &'a [f64],
    f: &'a PtcFunction,
    graph: &'a WeightedGraph,
    scratch: Vec<f64>,
}

impl Dynamics for FormationDynamics<'_> {
    fn prepare(&mut self, _: f64, _: &[f64]) {}

    fn eval(&self, x: &[f64], out: &mut [f64]) -> bool {
        let n = self.kappa.len();
        let (ox, oy) = out.split_at_mut(n);
        let one = match self.kind {
            ProtocolKind::EdgeWise => edgewise_into,
            ProtocolKind::NodeWise => nodewise_into,
        };
        let cx = one(&x[..n], self.graph, self.kappa, self.f, ox);
        let cy = one(&x[n..], self.graph, self.kappa, self.f, oy);
        cx || cy
    }

    fn stiffness(&mut self, x: &[f64], floor: f64) -> f64 {
        let n = self.kappa.len();
        let (k, g, f) = (self.kind, self.graph, self.f);
        let lx = stiffness_bound(k, &x[..n], g, self.kappa, f, floor, &mut self.scratch);
        let ly = stiffness_bound(k, &x[n..], g, self.kappa, f, floor, &mut self.scratch);
        lx.max(ly)
    }
}

/// Integrates the formation dynamics from `z0` with a proximity graph
/// (unit weights, range `comm_range`) recomputed at every outer step.
///
/// Integration starts at `t = 0`. If the graph disconnects the run continues,
/// with each component evolving on its own, and the trace is marked not
/// certified. The run stops early once both coordinates of `z - z*` agree to
/// within the settle threshold inside every component of the current graph;
/// after that the drift vanishes up to the threshold and the state is frozen.
pub fn simulate_formation(
    z0: &[Point],
    spec: &DisplacementSpec,
    cfg: &ProtocolConfig,
    icfg: &IntegratorConfig,
    comm_range: f64,
) -> Result<FormationTrace, FormationError> {
    simulate_formation_with(z0, spec, cfg, icfg, comm_range, OnDisconnect::Continue)
}

/// What [`simulate_formation_with`] does when the proximity graph splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnDisconnect {
    /// Warn and keep integrating.
    Continue,
    /// End the trace at the first disconnected sample. Useful when only
    /// certified runs matter.
    Stop,
}

pub fn simulate_formation_with(
    z0: &[Point],
    spec: &DisplacementSpec,
    cfg: &ProtocolConfig,
    icfg: &IntegratorConfig,
    comm_range: f64,
    on_disconnect: OnDisconnect,
) -> Result<FormationTrace, FormationError> {
    spec.check(z0)?;
    let n = z0.len();
    if cfg.kappa().len() != n {
        return Err(ProtocolError::GainLength {
            expected: n,
            found: cfg.kappa().len(),
        }
        .into());
    }
    if !(comm_range > 0.0 && comm_range.is_finite()) {
        return Err(FormationError::BadRange(comm_range));
    }
    icfg.validate(0.0)?;
    let g0 = proximity_graph(z0, comm_range, 1.0)?;
    if !g0.is_connected() {
        return Err(FormationError::InitiallyDisconnected);
    }

    let [x0, y0] = spec.shifted(z0);
    let spread = |x: &[f64]| disagreement(&x[..n]).max(disagreement(&x[n..]));
    // largest disagreement inside any connected component of `g`
    let local_spread = |x: &[f64], g: &WeightedGraph| {
        let (count, label) = g.components();
        let mut lo = vec![[f64::INFINITY; 2]; count];
        let mut hi = vec![[f64::NEG_INFINITY; 2]; count];
        for (v, &c) in label.iter().enumerate() {
            for (d, value) in [x[v], x[n + v]].into_iter().enumerate() {
                lo[c][d] = lo[c][d].min(value);
                hi[c][d] = hi[c][d].max(value);
            }
        }
        lo.iter()
            .zip(&hi)
            .flat_map(|(l, h)| [h[0] - l[0], h[1] - l[1]])
            .fold(0.0, f64::max)
    };
    let mut state: Vec<f64> = x0.into_iter().chain(y0).collect();
    let settle_tol = icfg.resolve_settle_tol(spread(&state));
    let mut trace = FormationTrace {
        times: vec![0.0],
        positions: vec![z0.to_vec()],
        formation_error: vec![formation_error(z0, &g0, spec)],
        connected: vec![true],
        graphs: vec![g0],
        sigma: vec![0],
        certified: true,
        halted: false,
        settle_tol,
        clamped: false,
        floor_hit: false,
        substeps: 0,
    };
    if spread(&state) < settle_tol {
        trace.halted = true;
        return Ok(trace);
    }

    let mut work = Workspace::new(2 * n);
    let mut scratch = vec![0.0; n];
    for k in 0..icfg.step_count(0.0) {
        let t = k as f64 * icfg.step;
        let graph = &trace.graphs[*trace.sigma.last().expect("non-empty")];
        let mut sys = FormationDynamics {
            kind: cfg.kind(),
            kappa: cfg.kappa(),
            f: cfg.ptc(),
            graph,
            scratch: std::mem::take(&mut scratch),
        };
        let report = advance(
            &mut sys,
            t,
            &mut state,
            icfg.step,
            icfg.stability_factor,
            settle_tol,
            &mut work,
        );
        scratch = sys.scratch;
        trace.substeps += report.substeps;
        trace.floor_hit |= report.floor_hit;
        if report.clamped && !trace.clamped {
            warn!("formation drift clamped near t = {t}");
            trace.clamped = true;
        }
        if !state.iter().all(|v| v.is_finite()) {
            return Err(SimError::NonFinite { t_last: t }.into());
        }

        let t_next = (k + 1) as f64 * icfg.step;
        let z = spec.unshift(&state[..n], &state[n..]);
        let g = proximity_graph(&z, comm_range, 1.0)?;
        let connected = g.is_connected();
        if !connected && trace.certified {
            warn!("proximity graph disconnected at t = {t_next}; run is not certified");
            trace.certified = false;
        }
        trace.formation_error.push(formation_error(&z, &g, spec));
        trace.connected.push(connected);
        let last = *trace.sigma.last().expect("non-empty");
        if trace.graphs[last] == g {
            trace.sigma.push(last);
        } else {
            trace.graphs.push(g);
            trace.sigma.push(trace.graphs.len() - 1);
        }
        trace.times.push(t_next);
        trace.positions.push(z);
        if !connected && on_disconnect == OnDisconnect::Stop {
            break;
        }
        let g = &trace.graphs[*trace.sigma.last().expect("non-empty")];
        if local_spread(&state, g) < settle_tol {
            trace.halted = true;
            break;
        }
    }
    Ok(trace)
}
