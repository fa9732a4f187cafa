//! Skip-gram node embeddings trained with negative sampling, and the cosine
//! dissimilarities derived from them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pairs::Targets;
use crate::seed;
use crate::walks::WalkCorpus;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial step size, decayed linearly to `min_learning_rate`.
    pub learning_rate: f64,
    pub min_learning_rate: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dim: 8,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_learning_rate: 1e-4,
        }
    }
}

impl EmbedConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negatives == 0 || self.epochs == 0 {
            return Err(invalid(
                "dim, window, negatives and epochs must be at least 1",
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0)
            || !(self.min_learning_rate.is_finite() && self.min_learning_rate >= 0.0)
        {
            return Err(invalid("learning rates must be positive"));
        }
        Ok(())
    }
}

/// Center (input) and context (output) vectors, row-major `n x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    dim: usize,
    center: Vec<f64>,
    context: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(n: usize, dim: usize, center: Vec<f64>, context: Vec<f64>) -> Result<Self> {
        if center.len() != n * dim {
            return Err(Error::DimensionMismatch {
                expected: n * dim,
                found: center.len(),
            });
        }
        if context.len() != n * dim {
            return Err(Error::DimensionMismatch {
                expected: n * dim,
                found: context.len(),
            });
        }
        if let Some(pos) = center.iter().chain(&context).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding entry {pos}")));
        }
        Ok(EmbeddingMatrix {
            n,
            dim,
            center,
            context,
        })
    }

    /// Center vectors only; context vectors are zero.
    pub fn from_center_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let center: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), dim, center, vec![0.0; rows.len() * dim])
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.center[i * self.dim..(i + 1) * self.dim]
    }

    pub fn context(&self, i: usize) -> &[f64] {
        &self.context[i * self.dim..(i + 1) * self.dim]
    }

    pub fn center_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.center[i * self.dim..(i + 1) * self.dim]
    }

    pub fn context_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.context[i * self.dim..(i + 1) * self.dim]
    }

    pub fn center_data(&self) -> &[f64] {
        &self.center
    }

    /// Center vectors scaled to unit length; zero rows stay zero.
    pub fn normalized_centers(&self) -> Vec<f64> {
        let mut out = self.center.clone();
        for row in out.chunks_mut(self.dim) {
            let norm = dot(row, row).sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `log σ(x)` without overflow for large negative `x`.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Negative-sampling objective for one (center, context) occurrence:
/// `log σ(c_u · v_w) + Σ_k log σ(-c_k · v_w)`.
pub fn pair_objective(
    e: &EmbeddingMatrix,
    center: usize,
    context: usize,
    negatives: &[usize],
) -> f64 {
    let v = e.center(center);
    let mut total = log_sigmoid(dot(e.context(context), v));
    for &k in negatives {
        total += log_sigmoid(-dot(e.context(k), v));
    }
    total
}

/// Gradient of [`pair_objective`] with respect to every parameter it touches.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    pub center: Vec<f64>,
    /// Context-row gradients, one entry per distinct row in first-seen order.
    pub contexts: Vec<(usize, Vec<f64>)>,
}

pub fn pair_gradient(
    e: &EmbeddingMatrix,
    center: usize,
    context: usize,
    negatives: &[usize],
) -> PairGradient {
    let v = e.center(center);
    let mut grad_center = vec![0.0; e.dim];
    let mut contexts: Vec<(usize, Vec<f64>)> = Vec::new();
    let targets = std::iter::once((context, 1.0)).chain(negatives.iter().map(|&k| (k, 0.0)));
    for (t, label) in targets {
        let c = e.context(t);
        let g = label - sigmoid(dot(c, v));
        for (acc, ci) in grad_center.iter_mut().zip(c) {
            *acc += g * ci;
        }
        let slot = match contexts.iter().position(|(row, _)| *row == t) {
            Some(p) => p,
            None => {
                contexts.push((t, vec![0.0; e.dim]));
                contexts.len() - 1
            }
        };
        for (acc, vi) in contexts[slot].1.iter_mut().zip(v) {
            *acc += g * vi;
        }
    }
    PairGradient {
        center: grad_center,
        contexts,
    }
}

/// One gradient-ascent step of size `lr` on [`pair_objective`]. All partial
/// derivatives are taken at the pre-step parameters.
pub fn ascent_step(
    e: &mut EmbeddingMatrix,
    center: usize,
    context: usize,
    negatives: &[usize],
    lr: f64,
    scratch: &mut Vec<f64>,
) {
    let dim = e.dim;
    scratch.clear();
    scratch.resize(dim + 1 + negatives.len(), 0.0);
    let (grad_center, coeffs) = scratch.split_at_mut(dim);
    {
        let v = e.center(center);
        let targets = std::iter::once((context, 1.0)).chain(negatives.iter().map(|&k| (k, 0.0)));
        for (slot, (t, label)) in targets.enumerate() {
            let c = e.context(t);
            let g = label - sigmoid(dot(c, v));
            coeffs[slot] = g;
            for (acc, ci) in grad_center.iter_mut().zip(c) {
                *acc += g * ci;
            }
        }
    }
    let v_start = center * dim;
    let targets = std::iter::once(context).chain(negatives.iter().copied());
    for (slot, t) in targets.enumerate() {
        let g = lr * coeffs[slot];
        let c_start = t * dim;
        for k in 0..dim {
            e.context[c_start + k] += g * e.center[v_start + k];
        }
    }
    for (vk, gk) in e.center[v_start..v_start + dim]
        .iter_mut()
        .zip(grad_center.iter())
    {
        *vk += lr * gk;
    }
}

/// Trains skip-gram with negative sampling over the walk corpus.
///
/// Every center position pairs with each context within `window` positions
/// and performs one ascent step against `negatives` draws from the unigram
/// distribution raised to 3/4. Draws that hit the positive context are
/// dropped. Center vectors start uniform in `[-0.5/d, 0.5/d]`, context
/// vectors at zero.
pub fn train_skipgram(
    corpus: &WalkCorpus,
    cfg: &EmbedConfig,
    seed: u64,
) -> Result<EmbeddingMatrix> {
    cfg.validate()?;
    if corpus.walks.is_empty() || corpus.token_count() == 0 {
        return Err(invalid("walk corpus is empty"));
    }
    let n = corpus.node_count;
    let dim = cfg.dim;
    let mut rng = seed::rng(seed::derive(seed, &[seed::stream::EMBED]));

    let half = 0.5 / dim as f64;
    let center: Vec<f64> = (0..n * dim)
        .map(|_| rng.random_range(-half..half))
        .collect();
    let mut e = EmbeddingMatrix {
        n,
        dim,
        center,
        context: vec![0.0; n * dim],
    };

    let mut counts = vec![0.0f64; n];
    for walk in &corpus.walks {
        for &v in walk {
            if v >= n {
                return Err(invalid(format!("walk visits node {v} outside 0..{n}")));
            }
            counts[v] += 1.0;
        }
    }
    let noise = WeightedIndex::new(counts.iter().map(|c| c.powf(0.75)))
        .map_err(|err| invalid(format!("negative-sampling table: {err}")))?;

    let total = (cfg.epochs * corpus.token_count()) as f64;
    let mut processed = 0usize;
    let mut negatives = Vec::with_capacity(cfg.negatives);
    let mut scratch = Vec::new();
    for _ in 0..cfg.epochs {
        for walk in &corpus.walks {
            for (pos, &w) in walk.iter().enumerate() {
                let progress = processed as f64 / total;
                let lr = (cfg.learning_rate
                    - (cfg.learning_rate - cfg.min_learning_rate) * progress)
                    .max(cfg.min_learning_rate);
                processed += 1;
                let lo = pos.saturating_sub(cfg.window);
                let hi = (pos + cfg.window).min(walk.len() - 1);
                for (cpos, &u) in walk.iter().enumerate().take(hi + 1).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    negatives.clear();
                    for _ in 0..cfg.negatives {
                        let k = noise.sample(&mut rng);
                        if k != u {
                            negatives.push(k);
                        }
                    }
                    ascent_step(&mut e, w, u, &negatives, lr, &mut scratch);
                }
            }
        }
    }
    if e.center.iter().chain(&e.context).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("skip-gram parameters".into()));
    }
    Ok(e)
}

/// Full-softmax log-likelihood `Σ log P(u | w)` of the corpus's (center,
/// context) occurrences, where `P(u | w) ∝ exp(c_u · v_w)` over all nodes.
/// Quadratic in `n`; meant for checking training on tiny graphs.
pub fn softmax_log_likelihood(e: &EmbeddingMatrix, corpus: &WalkCorpus, window: usize) -> f64 {
    let n = e.n;
    let log_partition: Vec<f64> = (0..n)
        .map(|w| {
            let scores: Vec<f64> = (0..n).map(|u| dot(e.context(u), e.center(w))).collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
        })
        .collect();
    let mut total = 0.0;
    for walk in &corpus.walks {
        for (pos, &w) in walk.iter().enumerate() {
            let lo = pos.saturating_sub(window);
            let hi = (pos + window).min(walk.len() - 1);
            for (cpos, &u) in walk.iter().enumerate().take(hi + 1).skip(lo) {
                if cpos != pos {
                    total += dot(e.context(u), e.center(w)) - log_partition[w];
                }
            }
        }
    }
    total
}

/// Symmetric `n x n` table of `1 - cos(v_i, v_j)`, clamped to `[0, 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DissimilarityMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

impl Targets for DissimilarityMatrix {
    fn node_count(&self) -> usize {
        self.n
    }

    fn target(&self, i: usize, j: usize) -> Option<f64> {
        Some(self.get(i, j))
    }
}

/// Cosine dissimilarity of the center vectors.
pub fn cosine_dissimilarity(e: &EmbeddingMatrix) -> Result<DissimilarityMatrix> {
    let n = e.n;
    let norms: Vec<f64> = (0..n)
        .map(|i| dot(e.center(i), e.center(i)).sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroNormRow(i));
    }
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let cos = dot(e.center(i), e.center(j)) / (norms[i] * norms[j]);
            let d = (1.0 - cos).clamp(0.0, 2.0);
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    Ok(DissimilarityMatrix { n, values })
}

fn format_rows(n: usize, dim: usize, data: &[f64]) -> String {
    let mut out = format!("{n} {dim}\n");
    for row in data.chunks(dim.max(1)).take(n) {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

fn parse_rows(text: &str, path: &Path) -> Result<(usize, usize, Vec<f64>)> {
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
        .ok_or_else(|| err(1, "missing \"n d\" header".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| err(1, format!("invalid header {header:?}")))?;
    let [n, dim] = dims[..] else {
        return Err(err(1, format!("invalid header {header:?}")));
    };
    let mut data = Vec::with_capacity(n * dim);
    let mut rows = 0;
    for (idx, line) in lines {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err(idx + 1, "invalid number".into()))?;
        if row.len() != dim {
            return Err(err(
                idx + 1,
                format!("expected {dim} values, found {}", row.len()),
            ));
        }
        data.extend(row);
        rows += 1;
    }
    if rows != n {
        return Err(err(0, format!("expected {n} rows, found {rows}")));
    }
    Ok((n, dim, data))
}

/// Sibling path holding the context vectors.
pub fn context_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ctx");
    PathBuf::from(s)
}

pub fn save_embedding(e: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_rows(e.n, e.dim, &e.center))?;
    fs::write(context_path(path), format_rows(e.n, e.dim, &e.context))?;
    Ok(())
}

/// Loads center vectors and, when the sibling file exists, context vectors.
pub fn load_embedding(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let (n, dim, center) = parse_rows(&fs::read_to_string(path)?, path)?;
    let ctx_path = context_path(path);
    let context = if ctx_path.exists() {
        let (cn, cd, ctx) = parse_rows(&fs::read_to_string(&ctx_path)?, &ctx_path)?;
        if (cn, cd) != (n, dim) {
            return Err(Error::DimensionMismatch {
                expected: n * dim,
                found: cn * cd,
            });
        }
        ctx
    } else {
        vec![0.0; n * dim]
    };
    EmbeddingMatrix::new(n, dim, center, context)
}
