//! Weighted undirected graphs, their incidence and Laplacian matrices,
//! connectivity and algebraic connectivity.
//!
//! Edges are stored as unordered pairs `(i, j)` with `i < j`, sorted
//! lexicographically. That order is the column order of the incidence matrix,
//! and each column carries `+sqrt(a_ij)` at the smaller endpoint and
//! `-sqrt(a_ij)` at the larger one, so matrices are reproducible bit for bit.

mod eigen;
mod io;
mod matrix;
mod switched;

use std::collections::VecDeque;

use thiserror::Error;

pub use eigen::symmetric_eigenvalues;
pub use io::{parse_edge_list, read_edge_list, write_edge_list};
pub use matrix::Matrix;
pub use switched::{SwitchedNetwork, SwitchingSignal};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph needs at least one vertex")]
    NoVertices,
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("edge ({i}, {j}) references a vertex outside 0..{n}")]
    VertexOutOfRange { i: usize, j: usize, n: usize },
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({i}, {j}) has non-positive or non-finite weight {weight}")]
    BadWeight { i: usize, j: usize, weight: f64 },
    #[error("graph family is empty")]
    EmptyFamily,
    #[error("graph {index} has {found} vertices, expected {expected}")]
    VertexCountMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("graph {0} of the family is disconnected")]
    Disconnected(usize),
    #[error("invalid switching signal: {0}")]
    Signal(String),
    #[error("edge list line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// One undirected edge with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

impl Edge {
    pub fn sqrt_weight(&self) -> f64 {
        self.weight.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
}

impl WeightedGraph {
    /// Validates and canonicalizes an edge list. Endpoints may be given in
    /// either order.
    pub fn new<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if n == 0 {
            return Err(GraphError::NoVertices);
        }
        let mut out = Vec::new();
        for (i, j, weight) in edges {
            if i >= n || j >= n {
                return Err(GraphError::VertexOutOfRange { i, j, n });
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            if !(weight.is_finite() && weight > 0.0) {
                return Err(GraphError::BadWeight { i, j, weight });
            }
            out.push(Edge {
                i: i.min(j),
                j: i.max(j),
                weight,
            });
        }
        out.sort_by(|a, b| (a.i, a.j).cmp(&(b.i, b.j)));
        if let Some(w) = out.windows(2).find(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(GraphError::DuplicateEdge(w[0].i, w[0].j));
        }
        Ok(Self { n, edges: out })
    }

    pub fn empty(n: usize) -> Result<Self, GraphError> {
        Self::new(n, std::iter::empty())
    }

    /// Path `0 - 1 - ... - (n-1)` with unit weights.
    pub fn path(n: usize) -> Result<Self, GraphError> {
        Self::new(n, (1..n).map(|i| (i - 1, i, 1.0)))
    }

    /// Complete graph with unit weights.
    pub fn complete(n: usize) -> Result<Self, GraphError> {
        Self::new(
            n,
            (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j, 1.0))),
        )
    }

    /// Cycle with unit weights; needs `n >= 3`.
    pub fn cycle(n: usize) -> Result<Self, GraphError> {
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n, 1.0)))
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in canonical (incidence-column) order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Sum of incident edge weights at every vertex.
    pub fn weighted_degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.n];
        for e in &self.edges {
            deg[e.i] += e.weight;
            deg[e.j] += e.weight;
        }
        deg
    }

    /// `n x m` incidence matrix `D` with `Q = D D^T`.
    pub fn incidence_matrix(&self) -> Matrix {
        let mut d = Matrix::zeros(self.n, self.edges.len());
        for (col, e) in self.edges.iter().enumerate() {
            let s = e.sqrt_weight();
            d[(e.i, col)] = s;
            d[(e.j, col)] = -s;
        }
        d
    }

    /// Weighted Laplacian, assembled directly from the edge list.
    pub fn laplacian(&self) -> Matrix {
        let mut q = Matrix::zeros(self.n, self.n);
        for e in &self.edges {
            q[(e.i, e.i)] += e.weight;
            q[(e.j, e.j)] += e.weight;
            q[(e.i, e.j)] -= e.weight;
            q[(e.j, e.i)] -= e.weight;
        }
        q
    }

    /// `Q x` without forming `Q`.
    pub fn laplacian_apply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        out.iter_mut().for_each(|v| *v = 0.0);
        for e in &self.edges {
            let diff = e.weight * (x[e.i] - x[e.j]);
            out[e.i] += diff;
            out[e.j] -= diff;
        }
    }

    /// Laplacian eigenvalues in ascending order.
    pub fn laplacian_spectrum(&self) -> Vec<f64> {
        symmetric_eigenvalues(&self.laplacian())
    }

    /// Second-smallest Laplacian eigenvalue; `0.0` for disconnected graphs
    /// and for the single-vertex graph.
    pub fn algebraic_connectivity(&self) -> f64 {
        if self.n < 2 || !self.is_connected() {
            return 0.0;
        }
        self.laplacian_spectrum()[1].max(0.0)
    }

    pub fn is_connected(&self) -> bool {
        self.components().0 == 1
    }

    /// Number of connected components and the component label of every
    /// vertex, labels numbered in order of their smallest vertex.
    pub fn components(&self) -> (usize, Vec<usize>) {
        let adj = self.adjacency_lists();
        let mut label = vec![usize::MAX; self.n];
        let mut count = 0;
        for root in 0..self.n {
            if label[root] != usize::MAX {
                continue;
            }
            label[root] = count;
            let mut queue = VecDeque::from([root]);
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if label[w] == usize::MAX {
                        label[w] = count;
                        queue.push_back(w);
                    }
                }
            }
            count += 1;
        }
        (count, label)
    }

    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        adj
    }
}

/// Graph joining every pair of points at Euclidean distance `<= range`,
/// all edges carrying `weight`.
pub fn proximity_graph(
    positions: &[[f64; 2]],
    range: f64,
    weight: f64,
) -> Result<WeightedGraph, GraphError> {
    let n = positions.len();
    let r2 = range * range;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = positions[j][0] - positions[i][0];
            let dy = positions[j][1] - positions[i][1];
            if dx * dx + dy * dy <= r2 {
                edges.push((i, j, weight));
            }
        }
    }
    WeightedGraph::new(n, edges)
}

/// `||x||_r = (sum |x_i|^r)^(1/r)` for `r > 0`.
pub fn lp_norm(x: &[f64], r: f64) -> f64 {
    let max = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return 0.0;
    }
    // factor out the max entry so large r does not overflow
    let s: f64 = x.iter().map(|v| (v.abs() / max).powf(r)).sum();
    max * s.powf(1.0 / r)
}
