//! Plain-text edge lists.
//!
//! ```text
//! # comment
//! n 4
//! 0 1 1.0
//! 1 2 0.5   # trailing comments are allowed
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{GraphError, WeightedGraph};

pub fn parse_edge_list(text: &str) -> Result<WeightedGraph, GraphError> {
    let mut n: Option<usize> = None;
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: String| GraphError::Parse { line: line_no, msg };
        if fields[0] == "n" {
            if n.is_some() {
                return Err(err("duplicate vertex-count header".into()));
            }
            if fields.len() != 2 {
                return Err(err("expected `n <count>`".into()));
            }
            n = Some(
                fields[1]
                    .parse()
                    .map_err(|e| err(format!("bad vertex count: {e}")))?,
            );
            continue;
        }
        if n.is_none() {
            return Err(err("edge before the `n <count>` header".into()));
        }
        if fields.len() != 3 {
            return Err(err(format!("expected `i j a_ij`, got {} fields", fields.len())));
        }
        let i: usize = fields[0]
            .parse()
            .map_err(|e| err(format!("bad vertex index: {e}")))?;
        let j: usize = fields[1]
            .parse()
            .map_err(|e| err(format!("bad vertex index: {e}")))?;
        let a: f64 = fields[2]
            .parse()
            .map_err(|e| err(format!("bad weight: {e}")))?;
        edges.push((i, j, a));
    }
    let n = n.ok_or(GraphError::Parse {
        line: 0,
        msg: "missing `n <count>` header".into(),
    })?;
    WeightedGraph::new(n, edges)
}

pub fn read_edge_list(path: &Path) -> Result<WeightedGraph, GraphError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| GraphError::Io(format!("{}: {e}", path.display())))?;
    parse_edge_list(&text)
}

/// Serializes with full round-trip precision for the weights.
pub fn write_edge_list(g: &WeightedGraph) -> String {
    let mut s = format!("n {}\n", g.vertex_count());
    for e in g.edges() {
        let _ = writeln!(s, "{} {} {:?}", e.i, e.j, e.weight);
    }
    s
}
