//! Built-in experiments.
//!
//! The published examples give their graphs only as pictures, so the presets
//! draw seeded random connected graphs of the same size instead. Everything
//! else (initial states, function parameters, deadlines) follows the
//! examples.

use ptc_core::protocol::ProtocolKind;

use crate::config::{
    CertifySpec, ConsensusSpec, DisconnectPolicy, Experiment, ExperimentConfig, FormationGain,
    FormationSpec, FunctionSpec, GainRule, GraphSource, InitialPositions, InitialState, Integrator,
    Switching, SCHEMA_VERSION,
};

pub const PRESETS: [&str; 5] = ["example1", "example2", "example3", "example4", "certify"];

pub const EXAMPLE1_X0: [f64; 10] = [23.13, 18.33, 8.01, 20.45, 7.57, -22.77, 12.40, -9.22, 22.02, -10.66];
pub const EXAMPLE2_X0: [f64; 10] = [3.65, -8.99, -3.26, -0.03, 4.52, 13.53, 15.85, -0.53, -9.97, -13.91];

/// Power family with `beta = 1`; `n` follows the protocol.
const POWER_N: FunctionSpec = FunctionSpec::PowerN {
    a: 1.0,
    b: 2.0,
    p: 0.2,
    q: 1.1,
    n: None,
};

const EXP_HALF: FunctionSpec = FunctionSpec::ExpP { p: 0.5 };

fn integrator(horizon: f64) -> Integrator {
    Integrator {
        step: 1e-4,
        horizon,
        settle_tol: None,
        stability_factor: Some(ptc_core::sim::DEFAULT_STABILITY_FACTOR),
    }
}

fn wrap(name: &str, experiment: Experiment) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        seed: 1,
        experiment,
    }
}

/// Reference formation for the grid preset: a 4 x 5 grid with 0.3 m spacing.
pub fn grid_reference() -> Vec<[f64; 2]> {
    (0..20).map(|k| [(k % 5) as f64 * 0.3, (k / 5) as f64 * 0.3]).collect()
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let cfg = match name {
        // edge-wise protocol on four switching graphs
        "example1" => wrap(
            name,
            Experiment::Consensus(ConsensusSpec {
                graphs: GraphSource::Random { n: 10, count: 4 },
                switching: Switching::Random { min_dwell: 0.1 },
                protocol: ProtocolKind::EdgeWise,
                function: POWER_N,
                t_c: 1.0,
                gain: GainRule::Theorem2,
                x0: InitialState::Values(EXAMPLE1_X0.to_vec()),
                integrator: integrator(1.0),
            }),
        ),
        // node-wise protocol on one static graph
        "example2" => wrap(
            name,
            Experiment::Consensus(ConsensusSpec {
                graphs: GraphSource::Random { n: 10, count: 1 },
                switching: Switching::Constant,
                protocol: ProtocolKind::NodeWise,
                function: EXP_HALF,
                t_c: 1.0,
                gain: GainRule::Theorem3,
                x0: InitialState::Values(EXAMPLE2_X0.to_vec()),
                integrator: integrator(1.0),
            }),
        ),
        // node-wise protocol switching among four graphs, gain sized for
        // the least connected one
        "example3" => wrap(
            name,
            Experiment::Consensus(ConsensusSpec {
                graphs: GraphSource::Random { n: 10, count: 4 },
                switching: Switching::Random { min_dwell: 0.1 },
                protocol: ProtocolKind::NodeWise,
                function: EXP_HALF,
                t_c: 1.0,
                gain: GainRule::Theorem3,
                x0: InitialState::Values(EXAMPLE2_X0.to_vec()),
                integrator: integrator(1.0),
            }),
        ),
        "example4" => wrap(
            name,
            Experiment::Formation(FormationSpec {
                reference: grid_reference(),
                comm_range: 0.5,
                protocol: ProtocolKind::EdgeWise,
                function: POWER_N,
                t_c: 1.0,
                gain: FormationGain::Theorem2,
                z0: InitialPositions::Uniform { lo: 1.0, hi: 3.0 },
                integrator: integrator(1.0),
                on_disconnect: DisconnectPolicy::Continue,
            }),
        ),
        "certify" => wrap(
            name,
            Experiment::Certify(CertifySpec {
                functions: Some(certify_functions()),
                tail_cutoff: ptc_core::ptcfun::DEFAULT_TAIL_CUTOFF,
                quadrature_tol: 1e-3,
                inequality_trials: 10_000,
                sizes: vec![1, 2, 5, 10, 50],
            }),
        ),
        _ => return None,
    };
    Some(cfg)
}

/// Both exponential families, the power family at two parameter sets and the
/// `beta = 1` power family at the same two.
pub fn certify_functions() -> Vec<FunctionSpec> {
    vec![
        FunctionSpec::ExpP { p: 0.5 },
        FunctionSpec::ExpSqrt,
        FunctionSpec::PowerK { a: 1.0, b: 2.0, p: 0.2, q: 1.1, k: 1.0 },
        FunctionSpec::PowerK { a: 1.0, b: 1.0, p: 0.5, q: 1.5, k: 1.0 },
        POWER_N,
        FunctionSpec::PowerN { a: 1.0, b: 1.0, p: 0.5, q: 1.5, n: None },
    ]
}
