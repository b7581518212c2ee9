use proptest::prelude::*;
use ptc_core::formation::{
    drift_formation, pairwise_formation_error, simulate_formation, simulate_formation_with,
    DisplacementSpec, FormationTrace, OnDisconnect, Point,
};
use ptc_core::graph::{proximity_graph, SwitchedNetwork, SwitchingSignal, WeightedGraph};
use ptc_core::protocol::{gain_theorem2, pt_map, FamilyStats, ProtocolConfig, ProtocolKind};
use ptc_core::ptcfun::{make_power_k, make_power_n, reference_catalog};
use ptc_core::rng::SeedStream;
use ptc_core::sim::{simulate, IntegratorConfig};
use rand::Rng;

const RANGE: f64 = 1.2;

/// `n` agents on a line with spacing 0.3.
fn line_spec(n: usize) -> DisplacementSpec {
    DisplacementSpec::from_reference((0..n).map(|k| [0.3 * k as f64, 0.0]).collect()).unwrap()
}

/// Uniform positions in `[0, 2]^2`, redrawn until the proximity graph is connected.
fn connected_start(seed: u64, n: usize, range: f64) -> Vec<Point> {
    let mut rng = SeedStream::new(seed).rng("z0");
    loop {
        let z: Vec<Point> = (0..n).map(|_| [rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)]).collect();
        if proximity_graph(&z, range, 1.0).unwrap().is_connected() {
            return z;
        }
    }
}

/// Gain sized for every connected unit-weight graph on `n` vertices: the
/// path has the smallest algebraic connectivity, the complete graph the
/// most edges.
fn worst_case_config(kind: ProtocolKind, n: usize) -> ProtocolConfig {
    let stats = FamilyStats {
        lambda: WeightedGraph::path(n).unwrap().algebraic_connectivity(),
        m_lo: n - 1,
        m_hi: n * (n - 1) / 2,
    };
    let f = make_power_n(1.0, 2.0, 0.2, 1.1, stats.m_hi).unwrap();
    let k = gain_theorem2(&stats, &f, 1.0).unwrap();
    ProtocolConfig::uniform(kind, n, k, f, Some(1.0)).unwrap()
}

/// The switched network a formation trace actually ran on.
fn replay_network(trace: &FormationTrace, step: f64) -> SwitchedNetwork {
    let mut breakpoints = vec![trace.times[0]];
    let mut indices = vec![trace.sigma[0]];
    for k in 1..trace.sigma.len() - 1 {
        if trace.sigma[k] != trace.sigma[k - 1] {
            breakpoints.push(trace.times[k]);
            indices.push(trace.sigma[k]);
        }
    }
    let signal = SwitchingSignal::new(breakpoints, indices, step).unwrap();
    SwitchedNetwork::new(trace.graphs.clone(), signal).unwrap()
}

#[test]
fn formation_is_consensus_on_each_coordinate() {
    let n = 6;
    let spec = line_spec(n);
    let f = make_power_k(1.0, 1.0, 0.5, 1.5, 1.0).unwrap();
    let cfg = ProtocolConfig::uniform(ProtocolKind::EdgeWise, n, 0.2, f, None).unwrap();
    // plain fixed steps and no early halt, so both runs do the same arithmetic
    let icfg = IntegratorConfig::new(1e-3, 0.3)
        .with_stability_factor(None)
        .with_settle_tol(1e-300);
    let mut checked = 0;
    for seed in 0..200 {
        let z0 = connected_start(seed, n, RANGE);
        let trace = simulate_formation(&z0, &spec, &cfg, &icfg, RANGE).unwrap();
        if !trace.certified || trace.graphs.len() < 2 {
            continue;
        }
        let net = replay_network(&trace, icfg.step);
        let [x0, y0] = spec.shifted(&z0);
        let tx = simulate(&net, &cfg, &x0, &icfg).unwrap();
        let ty = simulate(&net, &cfg, &y0, &icfg).unwrap();
        assert_eq!(tx.times.len(), trace.times.len());
        for (k, z) in trace.positions.iter().enumerate() {
            for i in 0..n {
                let r = spec.reference()[i];
                assert!((z[i][0] - r[0] - tx.states[k][i]).abs() < 1e-9, "seed {seed} sample {k}");
                assert!((z[i][1] - r[1] - ty.states[k][i]).abs() < 1e-9, "seed {seed} sample {k}");
            }
        }
        checked += 1;
        if checked == 3 {
            return;
        }
    }
    panic!("only {checked} switching certified runs in 200 seeds");
}

#[test]
fn certified_runs_reach_the_formation_by_the_deadline() {
    let n = 6;
    let spec = line_spec(n);
    let icfg = IntegratorConfig::for_deadline(1.0, 1.0);
    for kind in [ProtocolKind::EdgeWise, ProtocolKind::NodeWise] {
        let cfg = worst_case_config(kind, n);
        let mut certified = 0;
        for seed in 0..500 {
            let z0 = connected_start(1000 + seed, n, RANGE);
            let trace = simulate_formation_with(&z0, &spec, &cfg, &icfg, RANGE, OnDisconnect::Stop).unwrap();
            if !trace.certified {
                continue;
            }
            let err = pairwise_formation_error(trace.positions_at(1.0), &spec);
            assert!(err < 1e-3, "{kind:?} seed {seed}: {err}");
            certified += 1;
            if certified == 5 {
                break;
            }
        }
        assert_eq!(certified, 5, "{kind:?}");
    }
}

#[test]
fn edgewise_keeps_the_centroid_even_when_disconnected() {
    let n = 6;
    let spec = line_spec(n);
    let cfg = worst_case_config(ProtocolKind::EdgeWise, n);
    let icfg = IntegratorConfig::for_deadline(1.0, 1.0);
    let centroid = |z: &[Point]| {
        let s = z.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
        [s[0] / z.len() as f64, s[1] / z.len() as f64]
    };
    for seed in 0..5 {
        let z0 = connected_start(2000 + seed, n, RANGE);
        let c0 = centroid(&z0);
        let trace = simulate_formation(&z0, &spec, &cfg, &icfg, RANGE).unwrap();
        for z in &trace.positions {
            let c = centroid(z);
            assert!((c[0] - c0[0]).abs() < 1e-7 && (c[1] - c0[1]).abs() < 1e-7, "seed {seed}");
        }
    }
}

#[test]
fn translating_the_start_translates_the_run() {
    let n = 6;
    let spec = line_spec(n);
    let shift = [0.5, -0.25];
    let icfg = IntegratorConfig::new(1e-3, 0.5).with_settle_tol(1e-8);
    for fi in 0..5 {
        let f = reference_catalog(15).swap_remove(fi);
        let cfg = ProtocolConfig::uniform(ProtocolKind::EdgeWise, n, 1.0, f, None).unwrap();
        let z0 = connected_start(3000 + fi as u64, n, RANGE);
        let moved: Vec<Point> = z0.iter().map(|p| [p[0] + shift[0], p[1] + shift[1]]).collect();
        let a = simulate_formation(&z0, &spec, &cfg, &icfg, RANGE).unwrap();
        let b = simulate_formation(&moved, &spec, &cfg, &icfg, RANGE).unwrap();
        assert_eq!(a.times.len(), b.times.len(), "{}", cfg.ptc().label());
        for (za, zb) in a.positions.iter().zip(&b.positions) {
            for (p, q) in za.iter().zip(zb) {
                assert!((q[0] - p[0] - shift[0]).abs() < 1e-9 && (q[1] - p[1] - shift[1]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn grid_preset_gain() {
    // twenty agents, worst case over every connected proximity graph
    let stats = FamilyStats {
        lambda: WeightedGraph::path(20).unwrap().algebraic_connectivity(),
        m_lo: 19,
        m_hi: 190,
    };
    let f = make_power_n(1.0, 2.0, 0.2, 1.1, 190).unwrap();
    let k = gain_theorem2(&stats, &f, 1.0).unwrap();
    let lambda = 2.0 * (1.0 - (std::f64::consts::PI / 20.0).cos());
    assert!((k - 1.0 / lambda).abs() < 1e-9);
    assert!((k - 40.6119).abs() < 1e-4);
}

fn arb_positions() -> impl Strategy<Value = (Vec<Point>, Vec<Point>, f64, usize)> {
    (2..10usize).prop_flat_map(|n| {
        (
            prop::collection::vec([-3.0..3.0f64, -3.0..3.0f64], n),
            prop::collection::vec([-3.0..3.0f64, -3.0..3.0f64], n),
            0.1..10.0f64,
            0..5usize,
        )
    })
}

proptest! {
    #[test]
    fn drift_matches_neighbour_sums((z, zstar, k, fi) in arb_positions(), range in 0.5..6.0f64) {
        let n = z.len();
        let g = proximity_graph(&z, range, 1.0).unwrap();
        let spec = DisplacementSpec::from_reference(zstar.clone()).unwrap();
        let f = reference_catalog(g.edge_count().max(1)).swap_remove(fi);
        let adj = g.adjacency_lists();
        for kind in [ProtocolKind::EdgeWise, ProtocolKind::NodeWise] {
            let cfg = ProtocolConfig::uniform(kind, n, k, f.clone(), None).unwrap();
            let u = drift_formation(&z, &g, &spec, &cfg).unwrap();
            for i in 0..n {
                for c in 0..2 {
                    // the mismatch between measured and desired offsets
                    let gap = |j: usize| (z[j][c] - z[i][c]) - (zstar[j][c] - zstar[i][c]);
                    let want = match kind {
                        ProtocolKind::EdgeWise => k * adj[i].iter().map(|&j| pt_map(gap(j), &f)).sum::<f64>(),
                        ProtocolKind::NodeWise => k * pt_map(adj[i].iter().map(|&j| gap(j)).sum(), &f),
                    };
                    prop_assert!((u[i][c] - want).abs() <= 1e-12 * (1.0 + want.abs()),
                        "{:?} agent {} coord {}: {} vs {}", kind, i, c, u[i][c], want);
                }
            }
        }
    }
}
