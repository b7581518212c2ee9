//! Consensus drift laws and gain selection.
//!
//! Two protocols share the scalar map `pt_map(e) = sign(e) Omega(|e|) / |e|`:
//!
//! * edge-wise: `u_i = kappa_i * sum_{j ~ i} sqrt(a_ij) pt_map(sqrt(a_ij) (x_j - x_i))`,
//!   which is `x' = -D F(D^T x)` in matrix form and conserves the state sum
//!   for uniform gains;
//! * node-wise: `u_i = kappa_i * pt_map(e_i)` with
//!   `e_i = sum_{j ~ i} a_ij (x_j - x_i) = -(Q x)_i`, one evaluation per node.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, WeightedGraph};
use crate::ptcfun::PtcFunction;

/// Magnitudes at or below this are treated as the removable singularity of
/// `pt_map` at the origin.
pub const ZERO_THRESHOLD: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("state has {found} entries but the graph has {expected} vertices")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("gain vector has {found} entries but the graph has {expected} vertices")]
    GainLength { expected: usize, found: usize },
    #[error("gain kappa_{index} = {value} is not positive")]
    NonPositiveGain { index: usize, value: f64 },
    #[error("settling bound T_c = {0} is not positive")]
    BadDeadline(f64),
    #[error("algebraic connectivity {0} is not positive; the graph is disconnected")]
    Disconnected(f64),
    #[error("protocol kind {0:?} does not match the requested drift")]
    WrongKind(ProtocolKind),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    /// One nonlinearity per incident edge; average preserving.
    EdgeWise,
    /// One nonlinearity per node.
    NodeWise,
}

#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    kind: ProtocolKind,
    kappa: Vec<f64>,
    ptc: PtcFunction,
    t_c: Option<f64>,
}

impl ProtocolConfig {
    pub fn new(
        kind: ProtocolKind,
        kappa: Vec<f64>,
        ptc: PtcFunction,
        t_c: Option<f64>,
    ) -> Result<Self, ProtocolError> {
        if let Some((index, &value)) = kappa.iter().enumerate().find(|(_, k)| !(**k > 0.0 && k.is_finite())) {
            return Err(ProtocolError::NonPositiveGain { index, value });
        }
        if let Some(t) = t_c {
            if !(t > 0.0 && t.is_finite()) {
                return Err(ProtocolError::BadDeadline(t));
            }
        }
        Ok(Self {
            kind,
            kappa,
            ptc,
            t_c,
        })
    }

    /// Same gain `kappa` at every one of `n` nodes.
    pub fn uniform(
        kind: ProtocolKind,
        n: usize,
        kappa: f64,
        ptc: PtcFunction,
        t_c: Option<f64>,
    ) -> Result<Self, ProtocolError> {
        Self::new(kind, vec![kappa; n], ptc, t_c)
    }

    pub fn kind(&self) -> ProtocolKind {
        self.kind
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn min_kappa(&self) -> f64 {
        self.kappa.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn ptc(&self) -> &PtcFunction {
        &self.ptc
    }

    pub fn t_c(&self) -> Option<f64> {
        self.t_c
    }

    fn check_dims(&self, x: &[f64], g: &WeightedGraph) -> Result<(), ProtocolError> {
        let n = g.vertex_count();
        if x.len() != n {
            return Err(ProtocolError::DimensionMismatch {
                expected: n,
                found: x.len(),
            });
        }
        if self.kappa.len() != n {
            return Err(ProtocolError::GainLength {
                expected: n,
                found: self.kappa.len(),
            });
        }
        Ok(())
    }
}

/// `min lambda_2`, min and max edge counts over a graph family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyStats {
    pub lambda: f64,
    pub m_lo: usize,
    pub m_hi: usize,
}

impl FamilyStats {
    pub fn from_family(family: &[WeightedGraph]) -> Result<Self, ProtocolError> {
        if family.is_empty() {
            return Err(GraphError::EmptyFamily.into());
        }
        let mut lambda = f64::INFINITY;
        let mut m_lo = usize::MAX;
        let mut m_hi = 0;
        for g in family {
            let l = g.algebraic_connectivity();
            if !(l > 0.0) {
                return Err(ProtocolError::Disconnected(l));
            }
            lambda = lambda.min(l);
            m_lo = m_lo.min(g.edge_count());
            m_hi = m_hi.max(g.edge_count());
        }
        Ok(Self { lambda, m_lo, m_hi })
    }
}

/// `sign(e) Omega(|e|) / |e|`, zero at the origin.
pub fn pt_map(e: f64, f: &PtcFunction) -> f64 {
    pt_map_checked(e, f).0
}

/// [`pt_map`] plus whether the magnitude hit the overflow clamp.
pub fn pt_map_checked(e: f64, f: &PtcFunction) -> (f64, bool) {
    let mag = e.abs();
    if mag <= ZERO_THRESHOLD || e.is_nan() {
        return (0.0, false);
    }
    let (r, clamped) = f.omega_ratio_checked(mag);
    (e.signum() * r, clamped)
}

/// Edge-wise drift. Fails on dimension mismatch or a node-wise config.
pub fn drift_edgewise(
    x: &[f64],
    g: &WeightedGraph,
    cfg: &ProtocolConfig,
) -> Result<Vec<f64>, ProtocolError> {
    if cfg.kind != ProtocolKind::EdgeWise {
        return Err(ProtocolError::WrongKind(cfg.kind));
    }
    cfg.check_dims(x, g)?;
    let mut out = vec![0.0; x.len()];
    edgewise_into(x, g, &cfg.kappa, &cfg.ptc, &mut out);
    Ok(out)
}

/// Node-wise drift. Fails on dimension mismatch or an edge-wise config.
pub fn drift_nodewise(
    x: &[f64],
    g: &WeightedGraph,
    cfg: &ProtocolConfig,
) -> Result<Vec<f64>, ProtocolError> {
    if cfg.kind != ProtocolKind::NodeWise {
        return Err(ProtocolError::WrongKind(cfg.kind));
    }
    cfg.check_dims(x, g)?;
    let mut out = vec![0.0; x.len()];
    nodewise_into(x, g, &cfg.kappa, &cfg.ptc, &mut out);
    Ok(out)
}

/// Drift selected by `cfg.kind()`.
pub fn drift(x: &[f64], g: &WeightedGraph, cfg: &ProtocolConfig) -> Result<Vec<f64>, ProtocolError> {
    match cfg.kind {
        ProtocolKind::EdgeWise => drift_edgewise(x, g, cfg),
        ProtocolKind::NodeWise => drift_nodewise(x, g, cfg),
    }
}

/// Unchecked edge-wise drift into `out`; returns whether any evaluation was
/// clamped.
pub(crate) fn edgewise_into(
    x: &[f64],
    g: &WeightedGraph,
    kappa: &[f64],
    f: &PtcFunction,
    out: &mut [f64],
) -> bool {
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut clamped = false;
    for e in g.edges() {
        let s = e.sqrt_weight();
        // e_ij as seen from i; node j sees -e_ij
        let (v, c) = pt_map_checked(s * (x[e.j] - x[e.i]), f);
        clamped |= c;
        out[e.i] += s * v;
        out[e.j] -= s * v;
    }
    for (o, k) in out.iter_mut().zip(kappa) {
        *o *= k;
    }
    clamped
}

pub(crate) fn nodewise_into(
    x: &[f64],
    g: &WeightedGraph,
    kappa: &[f64],
    f: &PtcFunction,
    out: &mut [f64],
) -> bool {
    g.laplacian_apply(x, out);
    let mut clamped = false;
    for (o, k) in out.iter_mut().zip(kappa) {
        let (v, c) = pt_map_checked(-*o, f);
        clamped |= c;
        *o = k * v;
    }
    clamped
}

/// Gershgorin bound on the drift Jacobian at `x`, used to size stable
/// integration steps. Disagreements below `floor` are evaluated at `floor`,
/// since the slope of `pt_map` is unbounded at the origin.
pub(crate) fn stiffness_bound(
    kind: ProtocolKind,
    x: &[f64],
    g: &WeightedGraph,
    kappa: &[f64],
    f: &PtcFunction,
    floor: f64,
    scratch: &mut [f64],
) -> f64 {
    let slope = |e: f64| f.omega_ratio_slope(e.abs().max(floor));
    scratch.iter_mut().for_each(|v| *v = 0.0);
    match kind {
        ProtocolKind::EdgeWise => {
            for e in g.edges() {
                let w = e.weight * slope(e.sqrt_weight() * (x[e.j] - x[e.i]));
                scratch[e.i] += 2.0 * w;
                scratch[e.j] += 2.0 * w;
            }
        }
        ProtocolKind::NodeWise => {
            g.laplacian_apply(x, scratch);
            let deg = g.weighted_degrees();
            for (s, d) in scratch.iter_mut().zip(&deg) {
                *s = 2.0 * d * slope(*s);
            }
        }
    }
    scratch
        .iter()
        .zip(kappa)
        .map(|(s, k)| s * k)
        .fold(0.0, f64::max)
}

/// Gain bound for predefined-time average consensus on a switching family:
/// `beta(m_lo)^d / (lambda beta(m_hi)^2 T_c)`.
pub fn gain_theorem2(stats: &FamilyStats, f: &PtcFunction, t_c: f64) -> Result<f64, ProtocolError> {
    if !(stats.lambda > 0.0) {
        return Err(ProtocolError::Disconnected(stats.lambda));
    }
    if !(t_c > 0.0 && t_c.is_finite()) {
        return Err(ProtocolError::BadDeadline(t_c));
    }
    let b_lo = f.beta(stats.m_lo);
    let b_hi = f.beta(stats.m_hi);
    Ok(b_lo.powf(f.d()) / (stats.lambda * b_hi * b_hi * t_c))
}

/// Gain bound for predefined-time consensus of the node-wise protocol on a
/// static graph: `1 / (lambda_2 beta(n)^(2 - d) T_c)`.
pub fn gain_theorem3(lambda2: f64, n: usize, f: &PtcFunction, t_c: f64) -> Result<f64, ProtocolError> {
    if !(lambda2 > 0.0) {
        return Err(ProtocolError::Disconnected(lambda2));
    }
    if !(t_c > 0.0 && t_c.is_finite()) {
        return Err(ProtocolError::BadDeadline(t_c));
    }
    Ok(1.0 / (lambda2 * f.beta(n).powf(2.0 - f.d()) * t_c))
}
