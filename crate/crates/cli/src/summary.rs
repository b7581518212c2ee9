//! Run summaries.
//!
//! A summary is a pure function of a trace table and a [`SummaryContext`]
//! (what the config and the graph family say: deadline, gains, bound).
//! Nothing in it depends on in-memory integrator state, so the same numbers
//! come back when the summary is recomputed from a CSV file.

use ptc_core::formation::{pairwise_formation_error, DisplacementSpec};
use ptc_core::sim::{disagreement, IntegratorConfig};
use serde::{Deserialize, Serialize};

use crate::table::{ConsensusTable, FormationTable};

/// Sentinel written in place of a settling time or margin for a run that
/// never settled.
pub const NOT_SETTLED: &str = "NOT_SETTLED";

/// Pairwise displacement error a certified formation run must reach by the
/// deadline.
pub const FORMATION_TOL: f64 = 1e-3;

/// A time that may be missing. Serialized as a number or as
/// [`NOT_SETTLED`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Settled {
    At(f64),
    Never,
}

impl Settled {
    pub fn value(self) -> Option<f64> {
        match self {
            Settled::At(t) => Some(t),
            Settled::Never => None,
        }
    }
}

impl Serialize for Settled {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Settled::At(t) => s.serialize_f64(*t),
            Settled::Never => s.serialize_str(NOT_SETTLED),
        }
    }
}

impl<'de> Deserialize<'de> for Settled {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t) => Ok(Settled::At(t)),
            Raw::Text(s) if s == NOT_SETTLED => Ok(Settled::Never),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("expected a number or {NOT_SETTLED}, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certification {
    Pass,
    Fail,
    /// No guarantee applies to this configuration (gain below the bound, or
    /// no result covers the protocol and network).
    NotClaimed,
    /// Formation run whose proximity graph disconnected.
    Excluded,
}

/// Gain information from the config and the graph family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainInfo {
    pub rule: String,
    pub kappa_min: f64,
    pub kappa_max: f64,
    /// Smallest gain for which a predefined-time guarantee holds; `None`
    /// when no result covers the configuration.
    pub certified_bound: Option<f64>,
    /// Algebraic connectivity the bound is computed from.
    pub lambda: f64,
}

impl GainInfo {
    pub fn below_bound(&self) -> bool {
        self.certified_bound
            .is_some_and(|b| self.kappa_min < b * (1.0 - 1e-12))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryContext {
    pub t_c: f64,
    pub integrator: IntegratorConfig,
    pub gain: GainInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusSummary {
    pub agents: usize,
    pub samples: usize,
    pub t0: f64,
    pub t_end: f64,
    pub t_c: f64,
    pub settle_tol: f64,
    /// Elapsed time from `t0` after which the disagreement stays below
    /// `settle_tol`.
    pub settling_time: Settled,
    /// `t_c - settling_time`.
    pub margin: Settled,
    pub initial_mean: f64,
    pub consensus_value: f64,
    pub conservation_error: f64,
    pub initial_disagreement: f64,
    pub final_disagreement: f64,
    /// Disagreement at `t0 + t_c` over the initial one.
    pub disagreement_ratio_at_t_c: f64,
    pub gain: GainInfo,
    pub gain_below_bound: bool,
    pub certification: Certification,
}

/// Elapsed time after the last sample at or above `tol`.
fn settle(times: &[f64], spread: impl Iterator<Item = f64>, tol: f64) -> Settled {
    let mut last_above = None;
    for (k, v) in spread.enumerate() {
        if !(v < tol) {
            last_above = Some(k);
        }
    }
    match last_above {
        None => Settled::At(0.0),
        Some(k) if k + 1 == times.len() => Settled::Never,
        Some(k) => Settled::At(times[k + 1] - times[0]),
    }
}

/// Index of the last sample at or before `t`.
fn sample_at(times: &[f64], t: f64) -> usize {
    times
        .partition_point(|&s| s <= t + 1e-12 * t.abs().max(1.0))
        .saturating_sub(1)
}

fn certify(gain: &GainInfo, settling: Settled, t_c: f64) -> Certification {
    if gain.certified_bound.is_none() || gain.below_bound() {
        return Certification::NotClaimed;
    }
    match settling {
        Settled::At(t) if t <= t_c => Certification::Pass,
        _ => Certification::Fail,
    }
}

pub fn summarize_consensus(table: &ConsensusTable, ctx: &SummaryContext) -> ConsensusSummary {
    let first = &table.states[0];
    let d0 = disagreement(first);
    let settle_tol = ctx.integrator.resolve_settle_tol(d0);
    let settling_time = settle(&table.times, table.v_maxmin.iter().copied(), settle_tol);
    let margin = match settling_time {
        Settled::At(t) => Settled::At(ctx.t_c - t),
        Settled::Never => Settled::Never,
    };
    let t0 = table.times[0];
    let m0 = table.mean[0];
    let at_t_c = sample_at(&table.times, t0 + ctx.t_c);
    let last = table.times.len() - 1;
    let ratio = if d0 > 0.0 { table.v_maxmin[at_t_c] / d0 } else { 0.0 };
    ConsensusSummary {
        agents: table.agents(),
        samples: table.times.len(),
        t0,
        t_end: table.times[last],
        t_c: ctx.t_c,
        settle_tol,
        settling_time,
        margin,
        initial_mean: m0,
        consensus_value: table.mean[last],
        conservation_error: table.mean.iter().map(|m| (m - m0).abs()).fold(0.0, f64::max),
        initial_disagreement: d0,
        final_disagreement: table.v_maxmin[last],
        disagreement_ratio_at_t_c: ratio,
        gain: ctx.gain.clone(),
        gain_below_bound: ctx.gain.below_bound(),
        certification: certify(&ctx.gain, settling_time, ctx.t_c),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationSummary {
    pub agents: usize,
    pub samples: usize,
    pub t_end: f64,
    pub t_c: f64,
    pub settle_tol: f64,
    /// Elapsed time after which both coordinates of `z - z*` agree to
    /// within `settle_tol`.
    pub settling_time: Settled,
    pub margin: Settled,
    /// Over the edges present at the last sample before the deadline.
    pub edge_error_at_t_c: f64,
    /// Over all pairs of agents.
    pub pairwise_error_at_t_c: f64,
    pub final_pairwise_error: f64,
    /// The proximity graph stayed connected at every sample.
    pub connected_throughout: bool,
    pub first_disconnect: Option<f64>,
    pub gain: GainInfo,
    pub gain_below_bound: bool,
    pub certification: Certification,
}

pub fn summarize_formation(
    table: &FormationTable,
    spec: &DisplacementSpec,
    ctx: &SummaryContext,
) -> FormationSummary {
    let spread = |z: &[[f64; 2]]| {
        let [x, y] = spec.shifted(z);
        disagreement(&x).max(disagreement(&y))
    };
    let settle_tol = ctx.integrator.resolve_settle_tol(spread(&table.positions[0]));
    let settling_time = settle(&table.times, table.positions.iter().map(|z| spread(z)), settle_tol);
    let margin = match settling_time {
        Settled::At(t) => Settled::At(ctx.t_c - t),
        Settled::Never => Settled::Never,
    };
    let at_t_c = sample_at(&table.times, table.times[0] + ctx.t_c);
    let last = table.times.len() - 1;
    let connected_throughout = table.connected.iter().all(|&c| c);
    let pairwise_at_t_c = pairwise_formation_error(&table.positions[at_t_c], spec);
    let certification = if !connected_throughout {
        Certification::Excluded
    } else if ctx.gain.certified_bound.is_none() || ctx.gain.below_bound() {
        Certification::NotClaimed
    } else if pairwise_at_t_c < FORMATION_TOL {
        Certification::Pass
    } else {
        Certification::Fail
    };
    FormationSummary {
        agents: table.agents(),
        samples: table.times.len(),
        t_end: table.times[last],
        t_c: ctx.t_c,
        settle_tol,
        settling_time,
        margin,
        edge_error_at_t_c: table.formation_error[at_t_c],
        pairwise_error_at_t_c: pairwise_at_t_c,
        final_pairwise_error: pairwise_formation_error(&table.positions[last], spec),
        connected_throughout,
        first_disconnect: table
            .connected
            .iter()
            .position(|&c| !c)
            .map(|k| table.times[k]),
        gain: ctx.gain.clone(),
        gain_below_bound: ctx.gain.below_bound(),
        certification,
    }
}
