//! 2-D layouts, stress-type criteria and the stochastic gradient optimizer.
//!
//! Every shipped criterion is a sum of pair terms
//! `weight * (|X_i - X_j| - target)^2`:
//!
//! * cosine stress and shortest-path stress use `target = d_ij` and
//!   `weight = d_ij^-2` over the admissible pairs,
//! * ideal edge length uses `target = l` and `weight = l^-2` over the edges,
//!   which is `((|X_i - X_j| - l) / l)^2`.
//!
//! A composite objective is `Σ_c α_c L_c(X)`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::embed::DissimilarityMatrix;
use crate::error::{invalid, Error, Result};
use crate::graph::{DistanceMatrix, Graph};
use crate::pairs::{admissible_pairs, Pair, Targets};
use crate::seed;

/// Node positions, one `[x, y]` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    positions: Vec<[f64; 2]>,
}

impl Layout {
    pub fn new(positions: Vec<[f64; 2]>) -> Result<Self> {
        if let Some(i) = positions
            .iter()
            .position(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(Error::NonFinite(format!("position of node {i}")));
        }
        Ok(Layout { positions })
    }

    /// I.i.d. uniform positions in the unit square.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed::derive(seed, &[seed::stream::INIT]));
        let positions = (0..n)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        Layout { positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.positions[i], self.positions[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    pub fn scaled(&self, c: f64) -> Layout {
        self.map(|p| [c * p[0], c * p[1]])
    }

    pub fn map(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Layout {
        Layout {
            positions: self.positions.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.len());
        for p in &self.positions {
            let _ = writeln!(out, "{} {}", p[0], p[1]);
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| err(1, "missing node count".into()))?;
        let n: usize = header
            .trim()
            .parse()
            .map_err(|_| err(1, format!("invalid node count {header:?}")))?;
        let mut positions = Vec::with_capacity(n);
        for (idx, line) in lines {
            let v: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err(idx + 1, "invalid coordinate".into()))?;
            let [x, y] = v[..] else {
                return Err(err(idx + 1, format!("expected \"x y\", found {line:?}")));
            };
            positions.push([x, y]);
        }
        if positions.len() != n {
            return Err(err(
                0,
                format!("expected {n} positions, found {}", positions.len()),
            ));
        }
        Layout::new(positions)
    }

    pub fn to_json(&self) -> LayoutJson {
        LayoutJson {
            n: self.len(),
            positions: self.positions.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if is_json(path) {
            fs::write(path, serde_json::to_string(&self.to_json())? + "\n")?;
        } else {
            fs::write(path, self.to_text())?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        if is_json(path) {
            let json: LayoutJson = serde_json::from_str(&text)?;
            if json.positions.len() != json.n {
                return Err(Error::DimensionMismatch {
                    expected: json.n,
                    found: json.positions.len(),
                });
            }
            Layout::new(json.positions)
        } else {
            Layout::parse(&text, path)
        }
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

/// `{"n": int, "positions": [[x, y], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutJson {
    pub n: usize,
    pub positions: Vec<[f64; 2]>,
}

/// `Σ weight (|X_i - X_j| - target)^2` over `pairs`.
pub fn pair_loss(x: &Layout, pairs: &[Pair]) -> f64 {
    pairs
        .iter()
        .map(|p| {
            let r = x.distance(p.i, p.j) - p.target;
            p.weight * r * r
        })
        .sum()
}

/// Adds `scale * ∇ pair_loss` into `grad`. The derivative of `|X_i - X_j|`
/// is taken as zero when the two points coincide.
pub fn add_pair_gradient(x: &Layout, pairs: &[Pair], scale: f64, grad: &mut [[f64; 2]]) {
    for p in pairs {
        let (a, b) = (x.positions[p.i], x.positions[p.j]);
        let delta = [a[0] - b[0], a[1] - b[1]];
        let dist = delta[0].hypot(delta[1]);
        if dist == 0.0 {
            continue;
        }
        let coeff = scale * 2.0 * p.weight * (dist - p.target) / dist;
        for k in 0..2 {
            grad[p.i][k] += coeff * delta[k];
            grad[p.j][k] -= coeff * delta[k];
        }
    }
}

fn check_len(x: &Layout, n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x.len(),
        });
    }
    Ok(())
}

/// Weighted stress `Σ_{i<j} d_ij^-2 (|X_i - X_j| - d_ij)^2` over admissible
/// pairs of `targets`.
pub fn stress_loss<T: Targets + ?Sized>(x: &Layout, targets: &T) -> Result<f64> {
    check_len(x, targets.node_count())?;
    Ok(pair_loss(x, &admissible_pairs(targets)))
}

pub fn stress_gradient<T: Targets + ?Sized>(x: &Layout, targets: &T) -> Result<Vec<[f64; 2]>> {
    check_len(x, targets.node_count())?;
    let mut grad = vec![[0.0; 2]; x.len()];
    add_pair_gradient(x, &admissible_pairs(targets), 1.0, &mut grad);
    Ok(grad)
}

fn edge_pairs(g: &Graph, length: f64) -> Vec<Pair> {
    g.edges()
        .iter()
        .map(|&(i, j)| Pair {
            i,
            j,
            target: length,
            weight: length.powi(-2),
        })
        .collect()
}

/// `Σ_{(i,j) ∈ E} ((|X_i - X_j| - l) / l)^2`.
pub fn ideal_edge_length_loss(x: &Layout, g: &Graph, length: f64) -> Result<f64> {
    check_len(x, g.node_count())?;
    if !(length > 0.0 && length.is_finite()) {
        return Err(invalid("ideal edge length must be positive"));
    }
    Ok(pair_loss(x, &edge_pairs(g, length)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    CosineStress,
    SpStress,
    IdealEdgeLength,
}

/// One weighted term `α_c L_c` of a composite objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    kind: CriterionKind,
    weight: f64,
    n: usize,
    pairs: Vec<Pair>,
}

impl Criterion {
    fn build(kind: CriterionKind, weight: f64, n: usize, pairs: Vec<Pair>) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(invalid(format!(
                "criterion weight {weight} must be nonnegative"
            )));
        }
        Ok(Criterion {
            kind,
            weight,
            n,
            pairs,
        })
    }

    pub fn cosine_stress(targets: &DissimilarityMatrix, weight: f64) -> Result<Self> {
        Self::build(
            CriterionKind::CosineStress,
            weight,
            targets.len(),
            admissible_pairs(targets),
        )
    }

    /// Unreachable pairs carry no target and are skipped.
    pub fn sp_stress(targets: &DistanceMatrix, weight: f64) -> Result<Self> {
        Self::build(
            CriterionKind::SpStress,
            weight,
            targets.len(),
            admissible_pairs(targets),
        )
    }

    pub fn ideal_edge_length(g: &Graph, length: f64, weight: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(invalid("ideal edge length must be positive"));
        }
        Self::build(
            CriterionKind::IdealEdgeLength,
            weight,
            g.node_count(),
            edge_pairs(g, length),
        )
    }

    pub fn kind(&self) -> CriterionKind {
        self.kind
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    /// Unweighted `L_c(X)`.
    pub fn raw_loss(&self, x: &Layout) -> f64 {
        pair_loss(x, &self.pairs)
    }

    /// `α_c L_c(X)`.
    pub fn loss(&self, x: &Layout) -> f64 {
        self.weight * self.raw_loss(x)
    }
}

pub fn composite_loss(criteria: &[Criterion], x: &Layout) -> f64 {
    criteria.iter().map(|c| c.loss(x)).sum()
}

pub fn composite_gradient(criteria: &[Criterion], x: &Layout) -> Vec<[f64; 2]> {
    let mut grad = vec![[0.0; 2]; x.len()];
    for c in criteria {
        add_pair_gradient(x, &c.pairs, c.weight, &mut grad);
    }
    grad
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// `η_t = η_0 / (1 + t / horizon)`; `None` uses `iterations / 4`.
    InverseTime {
        horizon: Option<usize>,
    },
    /// Exponential decay from `1 / w_min` to `epsilon / w_max` over the run,
    /// where `w` ranges over the effective term weights `α_c w_ij`. The
    /// configured learning rate is ignored.
    WeightAnnealed {
        epsilon: f64,
    },
}

/// How a batch gradient is turned into a position update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `X_i -= η g_i`.
    Plain,
    /// `X_i -= η g_i / h_i`, with `h_i = Σ 2 α_c w_ij` over the batch terms
    /// touching node `i` (the largest curvature of those terms along any
    /// direction). Makes `η` independent of the target scale.
    Diagonal,
    /// Terms of the batch are applied one at a time in random order, each as
    /// a gradient step of size `η / 4` on that term alone, clipped so the pair
    /// never overshoots its own target (`η α w ≤ 1`).
    PerTerm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub step_rule: StepRule,
    /// Terms sampled per criterion per step, without replacement.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            iterations: 200,
            learning_rate: 0.1,
            schedule: Schedule::WeightAnnealed { epsilon: 0.1 },
            step_rule: StepRule::PerTerm,
            batch_size: 1024,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    /// Full-batch gradient descent with a fixed step.
    pub fn gradient_descent(iterations: usize, learning_rate: f64) -> Self {
        OptimizerConfig {
            iterations,
            learning_rate,
            schedule: Schedule::Constant,
            step_rule: StepRule::Plain,
            batch_size: usize::MAX,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        match self.schedule {
            Schedule::InverseTime { horizon: Some(0) } => {
                Err(invalid("decay horizon must be at least 1"))
            }
            Schedule::WeightAnnealed { epsilon } if !(epsilon > 0.0 && epsilon <= 1.0) => {
                Err(invalid("annealing epsilon must lie in (0, 1]"))
            }
            _ => Ok(()),
        }
    }

    /// Step size at step `t`; `weights` is the `(min, max)` effective term
    /// weight, used only by [`Schedule::WeightAnnealed`].
    pub fn rate_at(&self, t: usize, weights: (f64, f64)) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::InverseTime { horizon } => {
                let horizon = horizon.unwrap_or(self.iterations / 4).max(1) as f64;
                self.learning_rate / (1.0 + t as f64 / horizon)
            }
            Schedule::WeightAnnealed { epsilon } => {
                let (w_min, w_max) = weights;
                let start = 1.0 / w_min;
                let end = epsilon / w_max;
                if self.iterations <= 1 {
                    return start;
                }
                let decay = (start / end).ln() / (self.iterations - 1) as f64;
                start * (-decay * t as f64).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    /// Number of steps taken before the loss was evaluated.
    pub iteration: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    pub layout: Layout,
    /// Full composite loss at the start, after every epoch and at the end.
    pub trace: Vec<TracePoint>,
}

impl Optimized {
    pub fn initial_loss(&self) -> f64 {
        self.trace.first().map_or(f64::NAN, |p| p.loss)
    }

    pub fn final_loss(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |p| p.loss)
    }
}

/// A sampled term with its criterion weight folded in.
#[derive(Debug, Clone, Copy)]
struct Term {
    pair: Pair,
    alpha: f64,
}

impl Term {
    fn weight(&self) -> f64 {
        self.alpha * self.pair.weight
    }
}

/// Minimizes `Σ α_c L_c` by minibatch stochastic gradient descent.
///
/// Each step draws up to `batch_size` terms from every criterion uniformly
/// without replacement and applies them according to `cfg.step_rule` at the
/// scheduled rate. An epoch is `ceil(terms / batch_size)` steps for the
/// largest criterion; the full loss is recorded once per epoch.
pub fn optimize_layout(
    criteria: &[Criterion],
    n: usize,
    cfg: &OptimizerConfig,
    init: Option<Layout>,
) -> Result<Optimized> {
    cfg.validate()?;
    if criteria.is_empty() {
        return Err(invalid("at least one criterion is required"));
    }
    if let Some(c) = criteria.iter().find(|c| c.n != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: c.n,
        });
    }
    let mut x = match init {
        Some(layout) => {
            check_len(&layout, n)?;
            layout
        }
        None => Layout::random(n, cfg.seed),
    };
    let mut rng = seed::rng(seed::derive(cfg.seed, &[seed::stream::BATCH]));

    let active: Vec<&Criterion> = criteria
        .iter()
        .filter(|c| c.weight > 0.0 && !c.pairs.is_empty())
        .collect();
    let weights = active
        .iter()
        .flat_map(|c| c.pairs.iter().map(move |p| c.weight * p.weight))
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), w| {
            (lo.min(w), hi.max(w))
        });
    let largest = active.iter().map(|c| c.pairs.len()).max().unwrap_or(0);
    let epoch = largest.div_ceil(cfg.batch_size).max(1);
    let mut trace = vec![TracePoint {
        iteration: 0,
        loss: composite_loss(criteria, &x),
    }];

    let mut grad = vec![[0.0; 2]; n];
    let mut curvature = vec![0.0; n];
    let mut batch: Vec<Term> = Vec::new();
    for t in 0..cfg.iterations {
        batch.clear();
        for c in &active {
            let take = c.pairs.len().min(cfg.batch_size);
            batch.extend(
                index::sample(&mut rng, c.pairs.len(), take)
                    .iter()
                    .map(|k| Term {
                        pair: c.pairs[k],
                        alpha: c.weight,
                    }),
            );
        }
        let eta = cfg.rate_at(t, weights);
        match cfg.step_rule {
            StepRule::PerTerm => {
                batch.shuffle(&mut rng);
                for term in &batch {
                    per_term_step(&mut x, term, eta);
                }
            }
            StepRule::Plain | StepRule::Diagonal => {
                grad.iter_mut().for_each(|g| *g = [0.0; 2]);
                curvature.iter_mut().for_each(|h| *h = 0.0);
                for term in &batch {
                    add_pair_gradient(&x, std::slice::from_ref(&term.pair), term.alpha, &mut grad);
                    curvature[term.pair.i] += 2.0 * term.weight();
                    curvature[term.pair.j] += 2.0 * term.weight();
                }
                for (i, pos) in x.positions.iter_mut().enumerate() {
                    let scale = match cfg.step_rule {
                        StepRule::Diagonal if curvature[i] > 0.0 => eta / curvature[i],
                        StepRule::Diagonal => 0.0,
                        _ => eta,
                    };
                    pos[0] -= scale * grad[i][0];
                    pos[1] -= scale * grad[i][1];
                }
            }
        }
        if let Some(i) = x
            .positions
            .iter()
            .position(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(Error::NonFinite(format!(
                "position of node {i} at iteration {t}"
            )));
        }
        if (t + 1) % epoch == 0 || t + 1 == cfg.iterations {
            trace.push(TracePoint {
                iteration: t + 1,
                loss: composite_loss(criteria, &x),
            });
        }
    }
    Ok(Optimized { layout: x, trace })
}

fn per_term_step(x: &mut Layout, term: &Term, eta: f64) {
    let Pair { i, j, target, .. } = term.pair;
    let (a, b) = (x.positions[i], x.positions[j]);
    let delta = [a[0] - b[0], a[1] - b[1]];
    let dist = delta[0].hypot(delta[1]);
    if dist == 0.0 {
        return;
    }
    let mu = (eta * term.weight()).min(1.0);
    let r = mu * (dist - target) / (2.0 * dist);
    for (k, d) in delta.iter().enumerate() {
        x.positions[i][k] -= r * d;
        x.positions[j][k] += r * d;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{bfs_all_pairs, path_graph};

    fn tri() -> Layout {
        Layout::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap()
    }

    fn constant(n: usize, d: f64) -> DistanceMatrix {
        DistanceMatrix::from_fn(n, |i, j| Some(if i == j { 0.0 } else { d }))
    }

    #[test]
    fn hand_evaluated_stress() {
        let want = (2f64.sqrt() - 1.0).powi(2);
        assert!((stress_loss(&tri(), &constant(3, 1.0)).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.17157).abs() < 1e-5);
        let want = (1.0 + 1.0 + (2f64.sqrt() - 2.0).powi(2)) / 4.0;
        assert!((stress_loss(&tri(), &constant(3, 2.0)).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn perfect_layout_has_zero_loss_and_gradient() {
        let g = path_graph(4).unwrap();
        let x = Layout::new((0..4).map(|i| [i as f64, 0.0]).collect()).unwrap();
        let d = bfs_all_pairs(&g);
        assert!(stress_loss(&x, &d).unwrap().abs() < 1e-15);
        assert!(stress_gradient(&x, &d)
            .unwrap()
            .iter()
            .all(|g| g[0].abs() < 1e-15 && g[1].abs() < 1e-15));
    }

    #[test]
    fn coincident_pair_has_zero_gradient() {
        let x = Layout::new(vec![[0.5, 0.5], [0.5, 0.5]]).unwrap();
        let grad = stress_gradient(&x, &constant(2, 1.0)).unwrap();
        assert_eq!(grad, vec![[0.0; 2]; 2]);
        assert_eq!(stress_loss(&x, &constant(2, 1.0)).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(matches!(
            stress_loss(&tri(), &constant(4, 1.0)),
            Err(Error::DimensionMismatch {
                expected: 4,
                found: 3
            })
        ));
    }

    #[test]
    fn ideal_edge_length_cases() {
        let g = path_graph(3).unwrap();
        let l = 1.5;
        let x = Layout::new(vec![[0.0, 0.0], [l, 0.0], [l, l]]).unwrap();
        assert!(ideal_edge_length_loss(&x, &g, l).unwrap().abs() < 1e-15);
        let single = Graph::from_edges(2, [(0, 1)]).unwrap();
        let x = Layout::new(vec![[0.0, 0.0], [2.0 * l, 0.0]]).unwrap();
        assert!((ideal_edge_length_loss(&x, &single, l).unwrap() - 1.0).abs() < 1e-15);
        let x = Layout::new(vec![[0.0, 0.0], [l, 0.0], [l, 3.0 * l]]).unwrap();
        assert!((ideal_edge_length_loss(&x, &g, l).unwrap() - 4.0).abs() < 1e-12);
        assert!(ideal_edge_length_loss(&x, &g, 0.0).is_err());
    }

    #[test]
    fn composite_is_linear_in_weights() {
        let g = path_graph(4).unwrap();
        let x = Layout::random(4, 3);
        let d = bfs_all_pairs(&g);
        let a = Criterion::sp_stress(&d, 0.7).unwrap();
        let b = Criterion::ideal_edge_length(&g, 2.0, 1.3).unwrap();
        let want =
            0.7 * stress_loss(&x, &d).unwrap() + 1.3 * ideal_edge_length_loss(&x, &g, 2.0).unwrap();
        assert!((composite_loss(&[a, b], &x) - want).abs() < 1e-12);
    }

    #[test]
    fn negative_weight_rejected() {
        assert!(Criterion::sp_stress(&constant(2, 1.0), -1.0).is_err());
    }

    #[test]
    fn single_pair_converges_to_target() {
        let c = Criterion::sp_stress(&constant(2, 1.0), 1.0).unwrap();
        let out = optimize_layout(&[c], 2, &OptimizerConfig::default(), None).unwrap();
        assert!((out.layout.distance(0, 1) - 1.0).abs() < 1e-3);
        assert!(out.final_loss() <= out.initial_loss());
    }

    #[test]
    fn optimizer_rejects_bad_input() {
        let cfg = OptimizerConfig::default();
        assert!(optimize_layout(&[], 2, &cfg, None).is_err());
        let c = Criterion::sp_stress(&constant(3, 1.0), 1.0).unwrap();
        assert!(optimize_layout(std::slice::from_ref(&c), 4, &cfg, None).is_err());
        let bad = OptimizerConfig {
            batch_size: 0,
            ..cfg
        };
        assert!(optimize_layout(std::slice::from_ref(&c), 3, &bad, None).is_err());
        assert!(optimize_layout(&[c], 3, &cfg, Some(Layout::random(2, 0))).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let c = Criterion::sp_stress(&constant(3, 1.0), 1.0).unwrap();
        let cfg = OptimizerConfig {
            learning_rate: 1e200,
            schedule: Schedule::Constant,
            step_rule: StepRule::Plain,
            iterations: 50,
            ..OptimizerConfig::default()
        };
        assert!(matches!(
            optimize_layout(&[c], 3, &cfg, None),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn schedule_values() {
        let cfg = OptimizerConfig {
            iterations: 400,
            ..OptimizerConfig::default()
        };
        let cfg = OptimizerConfig {
            schedule: Schedule::InverseTime { horizon: None },
            ..cfg
        };
        assert_eq!(cfg.rate_at(0, (1.0, 1.0)), 0.1);
        assert!((cfg.rate_at(100, (1.0, 1.0)) - 0.05).abs() < 1e-15);
        let c = OptimizerConfig {
            schedule: Schedule::Constant,
            ..cfg
        };
        assert_eq!(c.rate_at(399, (1.0, 1.0)), 0.1);
        let a = OptimizerConfig {
            schedule: Schedule::WeightAnnealed { epsilon: 0.01 },
            ..cfg
        };
        assert!((a.rate_at(0, (0.25, 4.0)) - 4.0).abs() < 1e-12);
        assert!((a.rate_at(399, (0.25, 4.0)) - 0.0025).abs() < 1e-12);
    }

    #[test]
    fn layout_text_round_trip() {
        let x = Layout::random(7, 11);
        let back = Layout::parse(&x.to_text(), Path::new("x")).unwrap();
        assert_eq!(back, x);
        assert!(Layout::parse("2\n0 0\n", Path::new("x")).is_err());
        assert!(Layout::new(vec![[f64::NAN, 0.0]]).is_err());
    }

    #[test]
    fn minibatches_are_deterministic() {
        let g = crate::graph::generate_er(60, 0.1, 4).unwrap();
        let d = bfs_all_pairs(&g);
        let c = Criterion::sp_stress(&d, 1.0).unwrap();
        let cfg = OptimizerConfig {
            batch_size: 64,
            iterations: 120,
            seed: 5,
            ..OptimizerConfig::default()
        };
        let a = optimize_layout(std::slice::from_ref(&c), 60, &cfg, None).unwrap();
        let b = optimize_layout(&[c], 60, &cfg, None).unwrap();
        assert_eq!(a, b);
        assert!(a.final_loss() < a.initial_loss());
        assert!(a.trace.len() > 2);
    }
}
