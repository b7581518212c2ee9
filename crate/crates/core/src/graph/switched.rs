use super::{GraphError, WeightedGraph};

/// Relative slack when comparing dwell times, so grid-snapped breakpoints
/// that land a rounding error short of `min_dwell` are still accepted.
const DWELL_SLACK: f64 = 1e-9;

/// Piecewise-constant switching signal.
///
/// `indices[k]` is active on `[breakpoints[k], breakpoints[k + 1])`; the last
/// index stays active forever.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSignal {
    breakpoints: Vec<f64>,
    indices: Vec<usize>,
    min_dwell: f64,
}

impl SwitchingSignal {
    pub fn new(
        breakpoints: Vec<f64>,
        indices: Vec<usize>,
        min_dwell: f64,
    ) -> Result<Self, GraphError> {
        let bad = |m: &str| Err(GraphError::Signal(m.to_string()));
        if breakpoints.is_empty() {
            return bad("no breakpoints");
        }
        if breakpoints.len() != indices.len() {
            return bad("breakpoints and indices differ in length");
        }
        if !(min_dwell > 0.0) {
            return bad("minimum dwell time must be positive");
        }
        if breakpoints.iter().any(|t| !t.is_finite()) {
            return bad("non-finite breakpoint");
        }
        for w in breakpoints.windows(2) {
            let gap = w[1] - w[0];
            if gap < min_dwell * (1.0 - DWELL_SLACK) {
                return Err(GraphError::Signal(format!(
                    "breakpoints {} and {} are closer than the dwell time {min_dwell}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self {
            breakpoints,
            indices,
            min_dwell,
        })
    }

    /// A signal that never switches.
    pub fn constant(t0: f64, index: usize) -> Self {
        Self {
            breakpoints: vec![t0],
            indices: vec![index],
            min_dwell: f64::INFINITY,
        }
    }

    pub fn t0(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn min_dwell(&self) -> f64 {
        self.min_dwell
    }

    /// Number of constant pieces.
    pub fn interval_count(&self) -> usize {
        self.breakpoints.len()
    }

    /// Active index at time `t`; times before `t0` map to the first piece.
    pub fn index_at(&self, t: f64) -> usize {
        let k = self.breakpoints.partition_point(|&b| b <= t);
        self.indices[k.saturating_sub(1)]
    }

    /// Moves every breakpoint onto the grid `t0 + k * step`, keeping the
    /// spacing of consecutive breakpoints at least the dwell time.
    pub fn snapped(&self, step: f64) -> Self {
        assert!(step > 0.0, "grid step must be positive");
        let t0 = self.t0();
        let dwell_steps = if self.min_dwell.is_finite() {
            (self.min_dwell / step - DWELL_SLACK).ceil().max(1.0) as i64
        } else {
            1
        };
        let mut prev: Option<i64> = None;
        let mut breakpoints = Vec::with_capacity(self.breakpoints.len());
        for &b in &self.breakpoints {
            let mut k = ((b - t0) / step).round() as i64;
            if let Some(p) = prev {
                k = k.max(p + dwell_steps);
            }
            prev = Some(k);
            breakpoints.push(t0 + k as f64 * step);
        }
        Self {
            breakpoints,
            indices: self.indices.clone(),
            min_dwell: self.min_dwell,
        }
    }
}

/// A family of connected graphs on a common vertex set plus the signal
/// selecting the active member.
#[derive(Debug, Clone)]
pub struct SwitchedNetwork {
    family: Vec<WeightedGraph>,
    signal: SwitchingSignal,
}

impl SwitchedNetwork {
    pub fn new(family: Vec<WeightedGraph>, signal: SwitchingSignal) -> Result<Self, GraphError> {
        let Some(first) = family.first() else {
            return Err(GraphError::EmptyFamily);
        };
        let n = first.vertex_count();
        for (index, g) in family.iter().enumerate() {
            if g.vertex_count() != n {
                return Err(GraphError::VertexCountMismatch {
                    index,
                    expected: n,
                    found: g.vertex_count(),
                });
            }
            if !g.is_connected() {
                return Err(GraphError::Disconnected(index));
            }
        }
        if let Some(&bad) = signal.indices().iter().find(|&&i| i >= family.len()) {
            return Err(GraphError::Signal(format!(
                "index {bad} outside a family of {} graphs",
                family.len()
            )));
        }
        Ok(Self { family, signal })
    }

    /// A single connected graph that is active from `t0` on.
    pub fn fixed(g: WeightedGraph, t0: f64) -> Result<Self, GraphError> {
        Self::new(vec![g], SwitchingSignal::constant(t0, 0))
    }

    pub fn family(&self) -> &[WeightedGraph] {
        &self.family
    }

    pub fn signal(&self) -> &SwitchingSignal {
        &self.signal
    }

    pub fn vertex_count(&self) -> usize {
        self.family[0].vertex_count()
    }

    pub fn graph_at(&self, t: f64) -> (usize, &WeightedGraph) {
        let idx = self.signal.index_at(t);
        (idx, &self.family[idx])
    }

    pub fn with_signal(&self, signal: SwitchingSignal) -> Result<Self, GraphError> {
        Self::new(self.family.clone(), signal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_lookup() {
        let s = SwitchingSignal::new(vec![0.0, 0.5, 1.0], vec![2, 0, 1], 0.5).unwrap();
        assert_eq!(s.index_at(-1.0), 2);
        assert_eq!(s.index_at(0.0), 2);
        assert_eq!(s.index_at(0.49), 2);
        assert_eq!(s.index_at(0.5), 0);
        assert_eq!(s.index_at(7.0), 1);
    }

    #[test]
    fn rejects_short_dwell() {
        assert!(SwitchingSignal::new(vec![0.0, 0.05], vec![0, 1], 0.1).is_err());
        assert!(SwitchingSignal::new(vec![0.0, 1.0], vec![0], 0.1).is_err());
        assert!(SwitchingSignal::new(vec![0.0], vec![0], 0.0).is_err());
    }

    #[test]
    fn snapping_keeps_dwell() {
        let s = SwitchingSignal::new(vec![0.0, 0.10004, 0.20013, 0.31], vec![0, 1, 0, 1], 0.1)
            .unwrap();
        let snapped = s.snapped(0.03);
        for w in snapped.breakpoints().windows(2) {
            assert!(w[1] - w[0] >= 0.1 - 1e-12, "{:?}", snapped.breakpoints());
        }
        for b in snapped.breakpoints() {
            let k = b / 0.03;
            assert!((k - k.round()).abs() < 1e-9);
        }
        // revalidates
        SwitchingSignal::new(snapped.breakpoints().to_vec(), vec![0, 1, 0, 1], 0.1).unwrap();
    }

    #[test]
    fn network_validation() {
        let p3 = WeightedGraph::path(3).unwrap();
        let disc = WeightedGraph::new(3, [(0, 1, 1.0)]).unwrap();
        assert_eq!(
            SwitchedNetwork::fixed(disc, 0.0).unwrap_err(),
            GraphError::Disconnected(0)
        );
        let k4 = WeightedGraph::complete(4).unwrap();
        assert!(matches!(
            SwitchedNetwork::new(vec![p3.clone(), k4], SwitchingSignal::constant(0.0, 0)),
            Err(GraphError::VertexCountMismatch { .. })
        ));
        assert!(SwitchedNetwork::new(vec![p3], SwitchingSignal::constant(0.0, 1)).is_err());
        assert_eq!(
            SwitchedNetwork::new(vec![], SwitchingSignal::constant(0.0, 0)).unwrap_err(),
            GraphError::EmptyFamily
        );
    }
}
