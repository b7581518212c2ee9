//! Random switching signals and random connected graphs for experiments.

use rand::Rng;

use crate::graph::{SwitchingSignal, WeightedGraph};
use crate::rng::StreamRng;
use rand::SeedableRng;

/// Piecewise-constant signal on `[t0, horizon)` with dwell times uniform in
/// `[min_dwell, 3 min_dwell]` and indices uniform over `0..family_size`.
pub fn make_random_switching(
    family_size: usize,
    t0: f64,
    horizon: f64,
    min_dwell: f64,
    seed: u64,
) -> SwitchingSignal {
    assert!(family_size >= 1, "family must not be empty");
    assert!(min_dwell > 0.0, "dwell time must be positive");
    let mut rng = StreamRng::seed_from_u64(seed);
    let mut breakpoints = Vec::new();
    let mut indices = Vec::new();
    let mut t = t0;
    loop {
        breakpoints.push(t);
        indices.push(rng.gen_range(0..family_size));
        t += rng.gen_range(min_dwell..=3.0 * min_dwell);
        if t >= horizon {
            break;
        }
    }
    SwitchingSignal::new(breakpoints, indices, min_dwell).expect("dwell times respect the minimum")
}

/// Erdos-Renyi graph with edge probability `min(1, 2 ln(n) / n)` and unit
/// weights, redrawn until connected.
pub fn random_connected_graph<R: Rng>(n: usize, rng: &mut R) -> WeightedGraph {
    assert!(n >= 1);
    if n == 1 {
        return WeightedGraph::empty(1).expect("one vertex");
    }
    let p = (2.0 * (n as f64).ln() / n as f64).min(1.0);
    loop {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(p) {
                    edges.push((i, j, 1.0));
                }
            }
        }
        let g = WeightedGraph::new(n, edges).expect("valid by construction");
        if g.is_connected() {
            return g;
        }
    }
}

/// `count` independent random connected graphs on `n` vertices.
pub fn random_family<R: Rng>(n: usize, count: usize, rng: &mut R) -> Vec<WeightedGraph> {
    (0..count).map(|_| random_connected_graph(n, rng)).collect()
}
