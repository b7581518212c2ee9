use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{info, warn};
use ptc_core::formation::{simulate_formation_with, DisplacementSpec, FormationError, OnDisconnect, Point};
use ptc_core::graph::{proximity_graph, read_edge_list, GraphError, SwitchedNetwork, SwitchingSignal, WeightedGraph};
use ptc_core::protocol::{gain_theorem2, gain_theorem3, FamilyStats, ProtocolConfig, ProtocolError, ProtocolKind};
use ptc_core::ptcfun::{certify_assumption1, check_inequality6, INEQUALITY_TOL};
use ptc_core::rng::SeedStream;
use ptc_core::sim::{make_random_switching, random_family, simulate, SimError};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::{
    resolve_gains, CertifySpec, ConfigError, ConsensusSpec, DisconnectPolicy, Experiment, ExperimentConfig,
    FormationGain, FormationSpec, GainRule, GraphSource, InitialPositions, InitialState, Switching,
};
use crate::summary::{
    summarize_consensus, summarize_formation, Certification, ConsensusSummary, FormationSummary, GainInfo,
    SummaryContext,
};
use crate::table::{ConsensusTable, FormationTable, TableError};

/// Draws of `z0` before a uniform start with a connected proximity graph is
/// given up on.
pub const MAX_START_DRAWS: usize = 100_000;

pub const TRACE_CSV: &str = "trace.csv";
pub const FORMATION_CSV: &str = "formation.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const CERTIFY_JSON: &str = "certify.json";
pub const CONFIG_JSON: &str = "config.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("formation run failed: {0}")]
    Formation(#[from] FormationError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Table { path: PathBuf, source: TableError },
}

impl RunError {
    /// 1 for configuration problems, 2 for everything that goes wrong while
    /// running.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            _ => 2,
        }
    }
}

fn config_err(field: &str, message: impl std::fmt::Display) -> RunError {
    RunError::Config(ConfigError::Invalid {
        field: field.to_string(),
        message: message.to_string(),
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Report {
    Consensus {
        summary: ConsensusSummary,
        run: RunInfo,
    },
    Formation {
        summary: FormationSummary,
        run: RunInfo,
    },
    Certify(CertifyReport),
}

/// Integrator bookkeeping; not part of the summary because it cannot be
/// recovered from the trace file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunInfo {
    pub halted: bool,
    pub clamped: bool,
    pub floor_hit: bool,
    pub substeps: usize,
}

impl Report {
    pub fn passed(&self) -> bool {
        match self {
            Report::Consensus { summary, .. } => summary.certification != Certification::Fail,
            Report::Formation { summary, .. } => summary.certification != Certification::Fail,
            Report::Certify(r) => r.all_passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Document<'a> {
    pub name: &'a str,
    pub seed: u64,
    #[serde(flatten)]
    pub report: &'a Report,
}

#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    /// 0 when every claimed guarantee held, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.report.passed() {
            0
        } else {
            3
        }
    }
}

/// Runs an experiment and writes its artifacts into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, RunError> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let mut artifacts = Vec::new();
    let config_path = out.join(CONFIG_JSON);
    std::fs::write(&config_path, cfg.to_json() + "\n").map_err(io_err(&config_path))?;
    artifacts.push(config_path);

    let report = match &cfg.experiment {
        Experiment::Consensus(spec) => {
            let prepared = prepare_consensus(spec, cfg.seed)?;
            let trace = simulate(&prepared.net, &prepared.protocol, &prepared.x0, &prepared.ctx.integrator)?;
            let table = ConsensusTable::from_trace(&trace);
            let path = out.join(TRACE_CSV);
            write_table(&path, |w| table.write_csv(w))?;
            artifacts.push(path);
            Report::Consensus {
                summary: summarize_consensus(&table, &prepared.ctx),
                run: RunInfo {
                    halted: trace.halted,
                    clamped: trace.clamped,
                    floor_hit: trace.floor_hit,
                    substeps: trace.substeps,
                },
            }
        }
        Experiment::Formation(spec) => {
            let prepared = prepare_formation(spec, cfg.seed)?;
            let policy = match spec.on_disconnect {
                DisconnectPolicy::Continue => OnDisconnect::Continue,
                DisconnectPolicy::Stop => OnDisconnect::Stop,
            };
            let trace = simulate_formation_with(
                &prepared.z0,
                &prepared.spec,
                &prepared.protocol,
                &prepared.ctx.integrator,
                spec.comm_range,
                policy,
            )?;
            let table = FormationTable::from_trace(&trace);
            let path = out.join(FORMATION_CSV);
            write_table(&path, |w| table.write_csv(w))?;
            artifacts.push(path);
            Report::Formation {
                summary: summarize_formation(&table, &prepared.spec, &prepared.ctx),
                run: RunInfo {
                    halted: trace.halted,
                    clamped: trace.clamped,
                    floor_hit: trace.floor_hit,
                    substeps: trace.substeps,
                },
            }
        }
        Experiment::Certify(spec) => Report::Certify(certify(spec, cfg.seed)?),
    };

    let name = match report {
        Report::Certify(_) => CERTIFY_JSON,
        _ => SUMMARY_JSON,
    };
    let path = out.join(name);
    let doc = Document {
        name: &cfg.name,
        seed: cfg.seed,
        report: &report,
    };
    let text = serde_json::to_string_pretty(&doc).expect("report serializes") + "\n";
    std::fs::write(&path, text).map_err(io_err(&path))?;
    artifacts.push(path);
    Ok(Outcome { report, artifacts })
}

fn write_table(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<File>) -> Result<(), TableError>,
) -> Result<(), RunError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write(&mut w).map_err(|source| RunError::Table {
        path: path.to_path_buf(),
        source,
    })
}

/// Everything a consensus run needs, rebuilt deterministically from the
/// config and seed.
#[derive(Debug, Clone)]
pub struct PreparedConsensus {
    pub net: SwitchedNetwork,
    pub protocol: ProtocolConfig,
    pub x0: Vec<f64>,
    pub stats: FamilyStats,
    pub ctx: SummaryContext,
}

fn graph_err(e: GraphError) -> RunError {
    config_err("graphs", e)
}

fn protocol_err(e: ProtocolError) -> RunError {
    match e {
        ProtocolError::Graph(g) => graph_err(g),
        other => config_err("gain", other),
    }
}

pub fn prepare_consensus(spec: &ConsensusSpec, seed: u64) -> Result<PreparedConsensus, RunError> {
    let seeds = SeedStream::new(seed);
    let family: Vec<WeightedGraph> = match &spec.graphs {
        GraphSource::Files { paths } => paths
            .iter()
            .map(|p| read_edge_list(p).map_err(|e| config_err("graphs.paths", format!("{}: {e}", p.display()))))
            .collect::<Result<_, _>>()?,
        GraphSource::Random { n, count } => random_family(*n, *count, &mut seeds.rng("graphs")),
    };
    let signal = match &spec.switching {
        Switching::Constant => SwitchingSignal::constant(0.0, 0),
        Switching::Random { min_dwell } => make_random_switching(
            family.len(),
            0.0,
            spec.integrator.horizon,
            *min_dwell,
            seeds.derive("switching"),
        ),
        Switching::Explicit {
            breakpoints,
            indices,
            min_dwell,
        } => SwitchingSignal::new(breakpoints.clone(), indices.clone(), *min_dwell)
            .map_err(|e| config_err("switching", e))?,
    };
    let net = SwitchedNetwork::new(family, signal).map_err(graph_err)?;
    let n = net.vertex_count();
    let stats = FamilyStats::from_family(net.family()).map_err(protocol_err)?;

    let x0 = match &spec.x0 {
        InitialState::Values(v) => {
            if v.len() != n {
                return Err(config_err("x0", format!("{} values for {n} agents", v.len())));
            }
            v.clone()
        }
        InitialState::Uniform { half_width } => {
            let mut rng = seeds.rng("x0");
            (0..n).map(|_| rng.gen_range(-half_width..=*half_width)).collect()
        }
    };

    let default_n = match spec.protocol {
        ProtocolKind::EdgeWise => stats.m_hi,
        ProtocolKind::NodeWise => n,
    };
    let f = spec.function.build(default_n)?;
    let static_net = net.signal().indices().iter().all(|&i| i == net.signal().indices()[0]);
    // the edge-wise guarantee covers any switching; the node-wise one only a
    // fixed graph
    let bound = match spec.protocol {
        ProtocolKind::EdgeWise => Some(gain_theorem2(&stats, &f, spec.t_c).map_err(protocol_err)?),
        ProtocolKind::NodeWise if static_net => {
            let lambda = net.family()[net.signal().indices()[0]].algebraic_connectivity();
            Some(gain_theorem3(lambda, n, &f, spec.t_c).map_err(protocol_err)?)
        }
        ProtocolKind::NodeWise => None,
    };
    let (rule, kappa) = match &spec.gain {
        GainRule::Theorem2 => ("theorem2", vec![gain_theorem2(&stats, &f, spec.t_c).map_err(protocol_err)?; n]),
        GainRule::Theorem3 => (
            "theorem3",
            vec![gain_theorem3(stats.lambda, n, &f, spec.t_c).map_err(protocol_err)?; n],
        ),
        GainRule::Explicit { kappa } => {
            let ks = resolve_gains(kappa, n);
            if ks.len() != n {
                return Err(config_err("gain.kappa", format!("{} values for {n} agents", ks.len())));
            }
            ("explicit", ks)
        }
    };
    let gain = GainInfo {
        rule: rule.to_string(),
        kappa_min: kappa.iter().cloned().fold(f64::INFINITY, f64::min),
        kappa_max: kappa.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        certified_bound: bound,
        lambda: stats.lambda,
    };
    if gain.below_bound() {
        warn!(
            "gain {} is below the certified bound {}; no settling claim is made",
            gain.kappa_min,
            bound.unwrap_or_default()
        );
    }
    let protocol = ProtocolConfig::new(spec.protocol, kappa, f, Some(spec.t_c)).map_err(protocol_err)?;
    info!(
        "consensus: {n} agents, {} graphs, lambda = {}, kappa = {}",
        net.family().len(),
        stats.lambda,
        gain.kappa_min
    );
    Ok(PreparedConsensus {
        net,
        protocol,
        x0,
        stats,
        ctx: SummaryContext {
            t_c: spec.t_c,
            integrator: spec.integrator.to_core(),
            gain,
        },
    })
}

#[derive(Debug, Clone)]
pub struct PreparedFormation {
    pub spec: DisplacementSpec,
    pub protocol: ProtocolConfig,
    pub z0: Vec<Point>,
    pub ctx: SummaryContext,
}

/// Algebraic connectivity and edge-count range over every connected graph on
/// `n` unit-weight vertices: the path is the least connected, the complete
/// graph has the most edges.
pub fn proximity_family_stats(n: usize) -> FamilyStats {
    FamilyStats {
        lambda: WeightedGraph::path(n).expect("n >= 1").algebraic_connectivity(),
        m_lo: n - 1,
        m_hi: n * (n - 1) / 2,
    }
}

/// Uniform positions in `[lo, hi]^2`, redrawn until the proximity graph is
/// connected. Returns the positions and the number of draws.
pub fn draw_connected_start<R: Rng>(
    n: usize,
    lo: f64,
    hi: f64,
    range: f64,
    rng: &mut R,
) -> Option<(Vec<Point>, usize)> {
    for draw in 1..=MAX_START_DRAWS {
        let z: Vec<Point> = (0..n)
            .map(|_| [rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)])
            .collect();
        if proximity_graph(&z, range, 1.0).ok()?.is_connected() {
            return Some((z, draw));
        }
    }
    None
}

pub fn prepare_formation(spec: &FormationSpec, seed: u64) -> Result<PreparedFormation, RunError> {
    let seeds = SeedStream::new(seed);
    let n = spec.agent_count();
    let dspec = DisplacementSpec::from_reference(spec.reference.clone())?;
    let stats = proximity_family_stats(n);
    let default_n = match spec.protocol {
        ProtocolKind::EdgeWise => stats.m_hi,
        ProtocolKind::NodeWise => n,
    };
    let f = spec.function.build(default_n)?;
    let bound = match spec.protocol {
        ProtocolKind::EdgeWise => Some(gain_theorem2(&stats, &f, spec.t_c).map_err(protocol_err)?),
        ProtocolKind::NodeWise => None,
    };
    let (rule, kappa) = match &spec.gain {
        FormationGain::Theorem2 => ("theorem2", vec![gain_theorem2(&stats, &f, spec.t_c).map_err(protocol_err)?; n]),
        FormationGain::Explicit { kappa } => ("explicit", resolve_gains(kappa, n)),
    };
    let z0 = match &spec.z0 {
        InitialPositions::Values(z) => {
            if !proximity_graph(z, spec.comm_range, 1.0).map_err(graph_err)?.is_connected() {
                return Err(config_err("z0", "initial proximity graph is disconnected"));
            }
            z.clone()
        }
        InitialPositions::Uniform { lo, hi } => {
            let (z, draws) = draw_connected_start(n, *lo, *hi, spec.comm_range, &mut seeds.rng("z0"))
                .ok_or_else(|| {
                    config_err(
                        "z0",
                        format!("no connected start in {MAX_START_DRAWS} draws; widen comm_range or shrink the region"),
                    )
                })?;
            info!("connected start after {draws} draws");
            z
        }
    };
    let gain = GainInfo {
        rule: rule.to_string(),
        kappa_min: kappa.iter().cloned().fold(f64::INFINITY, f64::min),
        kappa_max: kappa.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        certified_bound: bound,
        lambda: stats.lambda,
    };
    if gain.below_bound() {
        warn!("gain {} is below the certified bound; no settling claim is made", gain.kappa_min);
    }
    let protocol = ProtocolConfig::new(spec.protocol, kappa, f, Some(spec.t_c)).map_err(protocol_err)?;
    Ok(PreparedFormation {
        spec: dspec,
        protocol,
        z0,
        ctx: SummaryContext {
            t_c: spec.t_c,
            integrator: spec.integrator.to_core(),
            gain,
        },
    })
}

/// Recomputes the summary of a finished run from its trace file.
pub fn summarize_file(cfg: &ExperimentConfig, csv: &Path) -> Result<Report, RunError> {
    let file = File::open(csv).map_err(io_err(csv))?;
    let table_err = |source| RunError::Table {
        path: csv.to_path_buf(),
        source,
    };
    match &cfg.experiment {
        Experiment::Consensus(spec) => {
            let prepared = prepare_consensus(spec, cfg.seed)?;
            let table = ConsensusTable::read_csv(file).map_err(table_err)?;
            Ok(Report::Consensus {
                summary: summarize_consensus(&table, &prepared.ctx),
                run: RunInfo {
                    halted: false,
                    clamped: false,
                    floor_hit: false,
                    substeps: 0,
                },
            })
        }
        Experiment::Formation(spec) => {
            let prepared = prepare_formation(spec, cfg.seed)?;
            let table = FormationTable::read_csv(file).map_err(table_err)?;
            Ok(Report::Formation {
                summary: summarize_formation(&table, &prepared.spec, &prepared.ctx),
                run: RunInfo {
                    halted: false,
                    clamped: false,
                    floor_hit: false,
                    substeps: 0,
                },
            })
        }
        Experiment::Certify(_) => Err(config_err("mode", "certify runs write no trace")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertifyReport {
    pub functions: Vec<FunctionCertificate>,
    pub all_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionCertificate {
    pub label: String,
    pub integral: Option<f64>,
    pub residual: Option<f64>,
    pub quadrature_error: Option<String>,
    pub quadrature_passed: bool,
    pub inequality: Vec<InequalitySample>,
    pub inequality_passed: bool,
}

/// Worst relative violation of the inequality over random vectors of length
/// `n`; non-positive when it holds everywhere sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalitySample {
    pub n: usize,
    pub worst_violation: f64,
}

pub fn certify(spec: &CertifySpec, seed: u64) -> Result<CertifyReport, RunError> {
    let seeds = SeedStream::new(seed);
    let functions = spec.functions.clone().unwrap_or_else(crate::presets::certify_functions);
    let mut out = Vec::new();
    for (idx, fs) in functions.iter().enumerate() {
        // the quadrature does not depend on `n`
        let f = fs.build(10)?;
        let (integral, residual, quadrature_error, quadrature_passed) =
            match certify_assumption1(&f, spec.tail_cutoff, spec.quadrature_tol) {
                Ok(r) => (Some(r.integral()), Some(r.residual), None, r.passed()),
                Err(e) => (None, None, Some(e.to_string()), false),
            };
        let mut inequality = Vec::new();
        for &n in &spec.sizes {
            let fn_ = fs.build(n)?;
            let worst = check_inequality6(
                &fn_,
                n,
                spec.inequality_trials,
                seeds.derive_indexed("inequality", (idx * 1000 + n) as u64),
            );
            inequality.push(InequalitySample { n, worst_violation: worst });
        }
        let inequality_passed = inequality.iter().all(|s| s.worst_violation <= INEQUALITY_TOL);
        info!("{}: quadrature {quadrature_passed}, inequality {inequality_passed}", f.label());
        out.push(FunctionCertificate {
            label: f.label(),
            integral,
            residual,
            quadrature_error,
            quadrature_passed,
            inequality,
            inequality_passed,
        });
    }
    let all_passed = out.iter().all(|c| c.quadrature_passed && c.inequality_passed);
    Ok(CertifyReport {
        functions: out,
        all_passed,
    })
}
