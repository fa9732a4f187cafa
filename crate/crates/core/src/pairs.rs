//! Target distances and the admissible pair set shared by losses and metrics.

/// Targets below this are excluded: their `d^-2` weight diverges.
pub const MIN_TARGET: f64 = 1e-6;

/// A symmetric table of target distances; `None` marks a pair with no target.
pub trait Targets {
    fn node_count(&self) -> usize;
    fn target(&self, i: usize, j: usize) -> Option<f64>;
}

/// One weighted term `weight * (|X_i - X_j| - target)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub target: f64,
    pub weight: f64,
}

impl Pair {
    pub fn stress_weighted(i: usize, j: usize, target: f64) -> Self {
        Pair {
            i,
            j,
            target,
            weight: target.powi(-2),
        }
    }
}

/// Pairs `i < j` whose target is present, finite and at least [`MIN_TARGET`],
/// each weighted by `target^-2`.
pub fn admissible_pairs<T: Targets + ?Sized>(targets: &T) -> Vec<Pair> {
    let n = targets.node_count();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            if let Some(d) = targets.target(i, j) {
                if d.is_finite() && d >= MIN_TARGET {
                    out.push(Pair::stress_weighted(i, j, d));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Table(Vec<Vec<Option<f64>>>);

    impl Targets for Table {
        fn node_count(&self) -> usize {
            self.0.len()
        }
        fn target(&self, i: usize, j: usize) -> Option<f64> {
            self.0[i][j]
        }
    }

    #[test]
    fn skips_missing_and_tiny_targets() {
        let t = Table(vec![
            vec![Some(0.0), Some(2.0), None],
            vec![Some(2.0), Some(0.0), Some(1e-9)],
            vec![None, Some(1e-9), Some(0.0)],
        ]);
        let pairs = admissible_pairs(&t);
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].i, pairs[0].j), (0, 1));
        assert_eq!(pairs[0].weight, 0.25);
    }
}
