//! Layout quality against graph-theoretic distances.
//!
//! All metrics range over the same admissible pairs as the optimizer
//! (finite targets of at least [`MIN_TARGET`](crate::pairs::MIN_TARGET)).

use crate::error::{Error, Result};
use crate::layout::{pair_loss, Layout};
use crate::pairs::{admissible_pairs, Pair, Targets};

fn checked_pairs<T: Targets + ?Sized>(x: &Layout, d: &T) -> Result<Vec<Pair>> {
    if x.len() != d.node_count() {
        return Err(Error::DimensionMismatch {
            expected: d.node_count(),
            found: x.len(),
        });
    }
    Ok(admissible_pairs(d))
}

fn alpha_from_pairs(x: &Layout, pairs: &[Pair]) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for p in pairs {
        let dist = x.distance(p.i, p.j);
        num += dist / p.target;
        den += dist * dist / (p.target * p.target);
    }
    if den == 0.0 || !den.is_finite() {
        return Err(Error::DegenerateLayout);
    }
    Ok(num / den)
}

fn sns_from_pairs(x: &Layout, pairs: &[Pair], alpha: f64) -> f64 {
    pairs
        .iter()
        .map(|p| {
            let r = alpha * x.distance(p.i, p.j) - p.target;
            p.weight * r * r
        })
        .sum()
}

/// Scale `α` minimizing `Σ d^-2 (α |X_i - X_j| - d)^2`, in closed form
/// `Σ d^-1 |ΔX| / Σ d^-2 |ΔX|^2`.
pub fn alpha_min<T: Targets + ?Sized>(x: &Layout, d: &T) -> Result<f64> {
    alpha_from_pairs(x, &checked_pairs(x, d)?)
}

/// Weighted stress of the layout rescaled by [`alpha_min`].
pub fn sns<T: Targets + ?Sized>(x: &Layout, d: &T) -> Result<f64> {
    let pairs = checked_pairs(x, d)?;
    let alpha = alpha_from_pairs(x, &pairs)?;
    Ok(sns_from_pairs(x, &pairs, alpha))
}

/// Stress of the layout as drawn. The weighted form uses `d^-2` weights and
/// equals the optimizer's stress loss; the unweighted form uses unit weights.
pub fn raw_stress<T: Targets + ?Sized>(x: &Layout, d: &T, weighted: bool) -> Result<f64> {
    let mut pairs = checked_pairs(x, d)?;
    if !weighted {
        pairs.iter_mut().for_each(|p| p.weight = 1.0);
    }
    Ok(pair_loss(x, &pairs))
}

/// Weighted raw stress divided by the number of evaluated pairs. This is a
/// local convention; returns 0 when no pair is admissible.
pub fn normalized_stress<T: Targets + ?Sized>(x: &Layout, d: &T) -> Result<f64> {
    let pairs = checked_pairs(x, d)?;
    if pairs.is_empty() {
        return Ok(0.0);
    }
    Ok(pair_loss(x, &pairs) / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressReport {
    pub raw_stress: f64,
    pub sns: f64,
    pub alpha_min: f64,
    pub pairs_evaluated: usize,
}

impl StressReport {
    pub fn evaluate<T: Targets + ?Sized>(x: &Layout, d: &T) -> Result<Self> {
        let pairs = checked_pairs(x, d)?;
        let alpha = alpha_from_pairs(x, &pairs)?;
        Ok(StressReport {
            raw_stress: pair_loss(x, &pairs),
            sns: sns_from_pairs(x, &pairs, alpha),
            alpha_min: alpha,
            pairs_evaluated: pairs.len(),
        })
    }

    pub const CSV_HEADER: &'static str = "graph_id,n,p,method,raw_stress,sns,alpha_min,pairs";

    pub fn csv_row(&self, graph_id: &str, n: usize, p: Option<f64>, method: &str) -> String {
        let p = p.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{graph_id},{n},{p},{method},{},{},{},{}",
            self.raw_stress, self.sns, self.alpha_min, self.pairs_evaluated
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{bfs_all_pairs, generate_er, path_graph, DistanceMatrix};

    fn line(n: usize) -> Layout {
        Layout::new((0..n).map(|i| [i as f64, 0.0]).collect()).unwrap()
    }

    #[test]
    fn perfect_layout() {
        let d = bfs_all_pairs(&path_graph(5).unwrap());
        let x = line(5);
        assert!((alpha_min(&x, &d).unwrap() - 1.0).abs() < 1e-15);
        assert!(sns(&x, &d).unwrap().abs() < 1e-20);
        assert!(raw_stress(&x, &d, true).unwrap().abs() < 1e-20);
        assert!(raw_stress(&x, &d, false).unwrap().abs() < 1e-20);
    }

    #[test]
    fn alpha_scales_inversely() {
        let d = bfs_all_pairs(&generate_er(12, 0.4, 2).unwrap());
        let x = Layout::random(12, 8);
        let a = alpha_min(&x, &d).unwrap();
        for c in [0.1, 3.0, 250.0] {
            let ac = alpha_min(&x.scaled(c), &d).unwrap();
            assert!((ac * c - a).abs() < 1e-12 * a);
        }
    }

    #[test]
    fn sns_ignores_scale() {
        let d = bfs_all_pairs(&generate_er(15, 0.3, 1).unwrap());
        let x = Layout::random(15, 2);
        let base = sns(&x, &d).unwrap();
        for c in [0.1, 10.0] {
            assert!((sns(&x.scaled(c), &d).unwrap() - base).abs() < 1e-9);
        }
    }

    #[test]
    fn doubled_unit_pair_unweighted() {
        let d = DistanceMatrix::from_fn(2, |i, j| Some(if i == j { 0.0 } else { 1.0 }));
        let x = Layout::new(vec![[0.0, 0.0], [2.0, 0.0]]).unwrap();
        assert_eq!(raw_stress(&x, &d, false).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_layout_errors() {
        let d = bfs_all_pairs(&path_graph(3).unwrap());
        let x = Layout::new(vec![[1.0, 1.0]; 3]).unwrap();
        assert!(matches!(alpha_min(&x, &d), Err(Error::DegenerateLayout)));
        assert!(matches!(sns(&x, &d), Err(Error::DegenerateLayout)));
        // no admissible pairs at all
        let empty = bfs_all_pairs(&crate::graph::Graph::empty(3).unwrap());
        assert!(matches!(
            sns(&Layout::random(3, 0), &empty),
            Err(Error::DegenerateLayout)
        ));
    }

    #[test]
    fn raw_matches_layout_stress_loss() {
        let d = bfs_all_pairs(&generate_er(20, 0.2, 9).unwrap());
        let x = Layout::random(20, 4);
        let a = raw_stress(&x, &d, true).unwrap();
        let b = crate::layout::stress_loss(&x, &d).unwrap();
        assert!((a - b).abs() <= 1e-12 * b.max(1.0));
    }

    #[test]
    fn report_and_csv() {
        let d = bfs_all_pairs(&path_graph(3).unwrap());
        let r = StressReport::evaluate(&line(3), &d).unwrap();
        assert_eq!(r.pairs_evaluated, 3);
        assert_eq!(
            r.csv_row("g0", 3, Some(0.5), "sp_sgd"),
            "g0,3,0.5,sp_sgd,0,0,1,3"
        );
        assert!(r.sns <= r.raw_stress + 1e-15);
        assert!(normalized_stress(&line(3), &d).unwrap().abs() < 1e-15);
    }
}
