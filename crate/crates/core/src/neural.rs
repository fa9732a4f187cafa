//! Per-node residual MLP mapping embedding vectors to 2-D positions.
//!
//! Each node is an independent row: `input affine -> depth x residual block ->
//! output affine`, where a block computes `h + dropout(relu(bn(h W + b)))`.
//! Batch-norm statistics are taken over all rows of a training batch, so
//! nodes interact only through those statistics. The network is trained on
//! scale-normalized stress against hop distances, with the optimal scale
//! held fixed inside each step.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{EmbedConfig, EmbeddingMatrix};
use crate::error::{invalid, Error, Result};
use crate::graph::{bfs_all_pairs, generate_er, Graph};
use crate::layout::Layout;
use crate::methods::embed_graph;
use crate::metrics;
use crate::pairs::{admissible_pairs, Pair};
use crate::seed::{self, Rng};
use crate::walks::WalkConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_width: usize,
    /// Number of residual blocks.
    pub depth: usize,
    pub dropout: f64,
    /// Running statistics follow `r <- momentum * r + (1 - momentum) * batch`.
    pub norm_momentum: f64,
    pub norm_epsilon: f64,
    pub batch_norm: bool,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            input_dim: 8,
            hidden_width: 64,
            depth: 8,
            dropout: 0.3,
            norm_momentum: 0.9,
            norm_epsilon: 1e-5,
            batch_norm: true,
        }
    }
}

impl MlpConfig {
    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_width == 0 {
            return Err(invalid("input and hidden widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid("dropout rate must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.norm_momentum)
            || !(self.norm_epsilon.is_finite() && self.norm_epsilon >= 0.0)
        {
            return Err(invalid("invalid batch-norm settings"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

#[derive(Debug, Clone)]
struct BlockCache {
    input: Array2<f64>,
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
    pre_activation: Array2<f64>,
    mask: Array2<f64>,
}

#[derive(Debug, Clone)]
struct ForwardCache {
    input: Array2<f64>,
    blocks: Vec<BlockCache>,
    last_hidden: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    config: MlpConfig,
    pub input_weight: Array2<f64>,
    pub input_bias: Array1<f64>,
    pub blocks: Vec<Block>,
    pub output_weight: Array2<f64>,
    pub output_bias: Array1<f64>,
    cache: Option<ForwardCache>,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.input_weight == other.input_weight
            && self.input_bias == other.input_bias
            && self.blocks == other.blocks
            && self.output_weight == other.output_weight
            && self.output_bias == other.output_bias
    }
}

/// Gradients for every trainable parameter, shaped like [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub input_weight: Array2<f64>,
    pub input_bias: Array1<f64>,
    pub blocks: Vec<BlockGradients>,
    pub output_weight: Array2<f64>,
    pub output_bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGradients {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl MlpGradients {
    /// Slices in the same order as [`Mlp::trainable_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = vec![slice(&self.input_weight), slice1(&self.input_bias)];
        for b in &self.blocks {
            out.extend([
                slice(&b.weight),
                slice1(&b.bias),
                slice1(&b.gamma),
                slice1(&b.beta),
            ]);
        }
        out.extend([slice(&self.output_weight), slice1(&self.output_bias)]);
        out
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn uniform(rng: &mut Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

/// Forward-pass mode.
pub enum Mode<'a> {
    /// Running batch-norm statistics, no dropout. Pure.
    Eval,
    /// Batch statistics and dropout masks drawn from the generator; caches
    /// activations for [`Mlp::backward`] and updates running statistics.
    Train(&'a mut Rng),
}

impl Mlp {
    /// Glorot-uniform affine layers around He-uniform block weights; zero
    /// biases, unit batch-norm scale.
    pub fn new(config: MlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed::derive(seed, &[seed::stream::INIT]));
        let (d, w) = (config.input_dim, config.hidden_width);
        let input_weight = uniform(&mut rng, d, w, (6.0 / (d + w) as f64).sqrt());
        let blocks = (0..config.depth)
            .map(|_| Block {
                weight: uniform(&mut rng, w, w, (6.0 / w as f64).sqrt()),
                bias: Array1::zeros(w),
                gamma: Array1::ones(w),
                beta: Array1::zeros(w),
                running_mean: Array1::zeros(w),
                running_var: Array1::ones(w),
            })
            .collect();
        let output_weight = uniform(&mut rng, w, 2, (6.0 / (w + 2) as f64).sqrt());
        Ok(Mlp {
            config,
            input_weight,
            input_bias: Array1::zeros(w),
            blocks,
            output_weight,
            output_bias: Array1::zeros(2),
            cache: None,
        })
    }

    /// Every parameter and running statistic set to zero.
    pub fn zeroed(config: MlpConfig) -> Result<Self> {
        let mut m = Self::new(config, 0)?;
        m.input_weight.fill(0.0);
        m.output_weight.fill(0.0);
        for b in &mut m.blocks {
            b.weight.fill(0.0);
            b.gamma.fill(0.0);
            b.running_var.fill(0.0);
        }
        Ok(m)
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    /// Trainable parameters in declaration order.
    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.input_weight.as_slice_mut().expect("standard layout"),
            self.input_bias.as_slice_mut().expect("standard layout"),
        ];
        for b in &mut self.blocks {
            out.push(b.weight.as_slice_mut().expect("standard layout"));
            out.push(b.bias.as_slice_mut().expect("standard layout"));
            out.push(b.gamma.as_slice_mut().expect("standard layout"));
            out.push(b.beta.as_slice_mut().expect("standard layout"));
        }
        out.push(self.output_weight.as_slice_mut().expect("standard layout"));
        out.push(self.output_bias.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn parameter_count(&mut self) -> usize {
        self.trainable_mut().iter().map(|s| s.len()).sum()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                found: x.ncols(),
            });
        }
        Ok(())
    }

    /// Eval-mode forward pass over rows of `x`.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let eps = self.config.norm_epsilon;
        let mut h = x.dot(&self.input_weight) + &self.input_bias;
        for b in &self.blocks {
            let mut u = h.dot(&b.weight) + &b.bias;
            if self.config.batch_norm {
                let inv_std = b.running_var.mapv(|v| 1.0 / (v + eps).sqrt());
                u = (u - &b.running_mean) * &inv_std * &b.gamma + &b.beta;
            }
            u.mapv_inplace(|v| v.max(0.0));
            h += &u;
        }
        Ok(h.dot(&self.output_weight) + &self.output_bias)
    }

    /// Training forward pass with dropout masks drawn from `rng`.
    pub fn forward_train(&mut self, x: ArrayView2<f64>, rng: &mut Rng) -> Result<Array2<f64>> {
        let (rows, w, p) = (x.nrows(), self.config.hidden_width, self.config.dropout);
        let keep = 1.0 - p;
        let masks = (0..self.config.depth)
            .map(|_| {
                Array2::from_shape_fn((rows, w), |_| {
                    if p == 0.0 || rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        self.forward_train_with_masks(x, masks)
    }

    /// Training forward pass with caller-supplied dropout masks; each mask is
    /// multiplied into its block's activations (already scaled by `1/keep`).
    pub fn forward_train_with_masks(
        &mut self,
        x: ArrayView2<f64>,
        masks: Vec<Array2<f64>>,
    ) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let rows = x.nrows();
        if masks.len() != self.blocks.len()
            || masks
                .iter()
                .any(|m| m.dim() != (rows, self.config.hidden_width))
        {
            return Err(invalid(
                "one dropout mask of shape rows x width per block is required",
            ));
        }
        let (eps, momentum) = (self.config.norm_epsilon, self.config.norm_momentum);
        let mut h = x.dot(&self.input_weight) + &self.input_bias;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (b, mask) in self.blocks.iter_mut().zip(masks) {
            let z = h.dot(&b.weight) + &b.bias;
            let (normalized, inv_std, u) = if self.config.batch_norm {
                let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                let centered = &z - &mean;
                let var = centered
                    .mapv(|v| v * v)
                    .mean_axis(Axis(0))
                    .expect("non-empty batch");
                let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
                let normalized = centered * &inv_std;
                let u = &normalized * &b.gamma + &b.beta;
                let unbiased = if rows > 1 {
                    &var * (rows as f64 / (rows - 1) as f64)
                } else {
                    var.clone()
                };
                b.running_mean = &b.running_mean * momentum + &mean * (1.0 - momentum);
                b.running_var = &b.running_var * momentum + &unbiased * (1.0 - momentum);
                (normalized, inv_std, u)
            } else {
                (z.clone(), Array1::ones(z.ncols()), z)
            };
            let activated = u.mapv(|v| v.max(0.0)) * &mask;
            let input = h.clone();
            h += &activated;
            caches.push(BlockCache {
                input,
                normalized,
                inv_std,
                pre_activation: u,
                mask,
            });
        }
        let out = h.dot(&self.output_weight) + &self.output_bias;
        self.cache = Some(ForwardCache {
            input: x.to_owned(),
            blocks: caches,
            last_hidden: h,
        });
        Ok(out)
    }

    /// Reverse-mode gradients of `Σ grad_out ⊙ output` for the cached
    /// training forward pass.
    pub fn backward(&self, grad_out: ArrayView2<f64>) -> Result<MlpGradients> {
        let cache = self.cache.as_ref().ok_or(Error::NoForwardCache)?;
        if grad_out.dim() != (cache.input.nrows(), 2) {
            return Err(Error::DimensionMismatch {
                expected: cache.input.nrows(),
                found: grad_out.nrows(),
            });
        }
        let rows = cache.input.nrows() as f64;
        let output_weight = cache.last_hidden.t().dot(&grad_out);
        let output_bias = grad_out.sum_axis(Axis(0));
        let mut dh = grad_out.dot(&self.output_weight.t());

        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (b, c) in self.blocks.iter().zip(&cache.blocks).rev() {
            let relu_gate = c.pre_activation.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let du = &dh * &c.mask * &relu_gate;
            let (gamma, beta, dz) = if self.config.batch_norm {
                let gamma = (&du * &c.normalized).sum_axis(Axis(0));
                let beta = du.sum_axis(Axis(0));
                let dxhat = &du * &b.gamma;
                let sum_dxhat = dxhat.sum_axis(Axis(0));
                let sum_dxhat_xhat = (&dxhat * &c.normalized).sum_axis(Axis(0));
                let dz = (dxhat * rows - &sum_dxhat - &c.normalized * &sum_dxhat_xhat) * &c.inv_std
                    / rows;
                (gamma, beta, dz)
            } else {
                (
                    Array1::zeros(b.gamma.len()),
                    Array1::zeros(b.beta.len()),
                    du,
                )
            };
            block_grads.push(BlockGradients {
                weight: c.input.t().dot(&dz),
                bias: dz.sum_axis(Axis(0)),
                gamma,
                beta,
            });
            dh = dh + dz.dot(&b.weight.t());
        }
        block_grads.reverse();
        Ok(MlpGradients {
            input_weight: cache.input.t().dot(&dh),
            input_bias: dh.sum_axis(Axis(0)),
            blocks: block_grads,
            output_weight,
            output_bias,
        })
    }

    /// Positions for every node of an embedding.
    pub fn forward_embedding(&mut self, e: &EmbeddingMatrix, mode: Mode<'_>) -> Result<Layout> {
        let x = node_features(e);
        let y = match mode {
            Mode::Eval => self.predict(x.view())?,
            Mode::Train(rng) => self.forward_train(x.view(), rng)?,
        };
        rows_to_layout(&y)
    }
}

/// Unit-normalized center vectors, centered and expressed in the principal
/// axes of the graph's point cloud (descending variance), one row per node.
///
/// Skip-gram embeddings are only defined up to rotation, so raw coordinates
/// mean nothing across graphs. Each axis is oriented so the projections have
/// non-negative third moment, breaking the remaining sign ambiguity.
pub fn node_features(e: &EmbeddingMatrix) -> Array2<f64> {
    let (n, d) = (e.node_count(), e.dim());
    let raw = Array2::from_shape_vec((n, d), e.normalized_centers()).expect("n x d data");
    let centered = &raw - &raw.mean_axis(Axis(0)).expect("non-empty embedding");
    let cov = centered.t().dot(&centered);
    let eigen = nalgebra::SymmetricEigen::new(nalgebra::DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .total_cmp(&eigen.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let mut axes = Array2::zeros((d, d));
    for (col, &k) in order.iter().enumerate() {
        let v = eigen.eigenvectors.column(k);
        let skew: f64 = centered
            .rows()
            .into_iter()
            .map(|r| (0..d).map(|i| r[i] * v[i]).sum::<f64>().powi(3))
            .sum();
        let sign = if skew < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            axes[[i, col]] = sign * v[i];
        }
    }
    centered.dot(&axes)
}

fn rows_to_layout(y: &Array2<f64>) -> Result<Layout> {
    Layout::new(y.rows().into_iter().map(|r| [r[0], r[1]]).collect())
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            learning_rate,
            beta1,
            beta2,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        let total: usize = grads.iter().map(|g| g.len()).sum();
        if self.first.len() != total {
            self.first = vec![0.0; total];
            self.second = vec![0.0; total];
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let mut k = 0;
        for (p, g) in params.into_iter().zip(grads) {
            for (pi, gi) in p.iter_mut().zip(g) {
                self.first[k] = self.beta1 * self.first[k] + (1.0 - self.beta1) * gi;
                self.second[k] = self.beta2 * self.second[k] + (1.0 - self.beta2) * gi * gi;
                let m = self.first[k] / c1;
                let v = self.second[k] / c2;
                *pi -= self.learning_rate * m / (v.sqrt() + self.epsilon);
                k += 1;
            }
        }
    }
}

/// Scale-normalized stress of predicted positions and its gradient with the
/// optimal scale held fixed. Returns `(loss, alpha)`; a fully collapsed
/// prediction uses `alpha = 1`.
pub fn sns_loss_and_gradient(
    y: ArrayView2<f64>,
    pairs: &[Pair],
    grad: &mut [[f64; 2]],
) -> (f64, f64) {
    let dist = |i: usize, j: usize| (y[[i, 0]] - y[[j, 0]]).hypot(y[[i, 1]] - y[[j, 1]]);
    let (mut num, mut den) = (0.0, 0.0);
    for p in pairs {
        let r = dist(p.i, p.j);
        num += r / p.target;
        den += r * r * p.weight;
    }
    let alpha = if den > 0.0 { num / den } else { 1.0 };
    let mut loss = 0.0;
    for p in pairs {
        let delta = [y[[p.i, 0]] - y[[p.j, 0]], y[[p.i, 1]] - y[[p.j, 1]]];
        let r = delta[0].hypot(delta[1]);
        let resid = alpha * r - p.target;
        loss += p.weight * resid * resid;
        if r > 0.0 {
            let coeff = 2.0 * p.weight * resid * alpha / r;
            for k in 0..2 {
                grad[p.i][k] += coeff * delta[k];
                grad[p.j][k] -= coeff * delta[k];
            }
        }
    }
    (loss, alpha)
}

/// Graph sizes and edge probabilities sampled uniformly for training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFamily {
    pub sizes: Vec<usize>,
    pub probabilities: Vec<f64>,
}

impl GraphFamily {
    pub fn mixed_nodes() -> Self {
        GraphFamily {
            sizes: vec![18, 19, 21, 22],
            probabilities: vec![0.5],
        }
    }

    pub fn mixed_edges() -> Self {
        GraphFamily {
            sizes: vec![20],
            probabilities: vec![0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.probabilities.is_empty() {
            return Err(invalid(
                "graph family needs at least one size and one probability",
            ));
        }
        if self.sizes.contains(&0) || self.probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("graph family has an invalid size or probability"));
        }
        Ok(())
    }

    pub fn sample(&self, seed: u64) -> Result<Graph> {
        self.validate()?;
        let mut rng = seed::rng(seed);
        let n = self.sizes[rng.random_range(0..self.sizes.len())];
        let p = self.probabilities[rng.random_range(0..self.probabilities.len())];
        generate_er(n, p, seed::derive(seed, &[seed::stream::GRAPH]))
    }
}

/// Walk and skip-gram settings used to featurize every graph.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EmbedPipeline {
    pub walks: WalkConfig,
    pub embed: EmbedConfig,
}

/// A graph prepared for training or evaluation.
#[derive(Debug, Clone)]
pub struct Sample {
    pub graph: Graph,
    pub features: Array2<f64>,
    pub pairs: Vec<Pair>,
}

impl Sample {
    pub fn prepare(graph: Graph, pipeline: &EmbedPipeline, seed: u64) -> Result<Self> {
        let e = embed_graph(&graph, &pipeline.walks, &pipeline.embed, seed)?;
        let pairs = admissible_pairs(&bfs_all_pairs(&graph));
        Ok(Sample {
            graph,
            features: node_features(&e),
            pairs,
        })
    }
}

/// Samples `count` graphs of `family`. Instance `k` is a pure function of
/// `(seed, split, k)`, so the result does not depend on thread scheduling.
pub fn prepare_samples(
    family: &GraphFamily,
    pipeline: &EmbedPipeline,
    count: usize,
    split: u64,
    seed: u64,
) -> Result<Vec<Sample>> {
    family.validate()?;
    (0..count)
        .into_par_iter()
        .map(|k| {
            let instance = seed::derive(seed, &[seed::stream::GRAPH, split, k as u64]);
            Sample::prepare(family.sample(instance)?, pipeline, instance)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub steps: usize,
    pub graphs_per_step: usize,
    pub eval_every: usize,
    /// Stop after this many evaluations without improvement.
    pub patience: Option<usize>,
    /// Training graphs embedded once up front and drawn from at every step.
    pub pool_size: usize,
    pub validation_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            steps: 10_000,
            graphs_per_step: 128,
            eval_every: 1000,
            patience: Some(3),
            pool_size: 1024,
            validation_size: 64,
        }
    }
}

impl TrainConfig {
    /// 500 steps of 16 graphs, evaluated every 50 steps.
    pub fn desk() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            steps: 500,
            graphs_per_step: 16,
            eval_every: 50,
            patience: None,
            pool_size: 256,
            validation_size: 32,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(invalid("learning rate must be positive"));
        }
        if self.eval_every == 0 || self.steps < self.eval_every {
            return Err(invalid("eval_every must be in 1..=steps"));
        }
        if self.graphs_per_step == 0 || self.pool_size == 0 || self.validation_size == 0 {
            return Err(invalid("batch, pool and validation sizes must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationPoint {
    pub step: usize,
    pub mean_sns: f64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    /// Checkpoint with the lowest validation SNS.
    pub model: Mlp,
    pub best_step: usize,
    pub trace: Vec<ValidationPoint>,
    /// Mean training loss per step.
    pub train_loss: Vec<f64>,
}

pub fn trace_csv(trace: &[ValidationPoint]) -> String {
    let mut out = String::from("step,mean_val_sns\n");
    for p in trace {
        let _ = writeln!(out, "{},{}", p.step, p.mean_sns);
    }
    out
}

/// Mean eval-mode SNS over `samples`; a collapsed prediction counts as
/// infinitely bad.
pub fn mean_sns(model: &Mlp, samples: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let layout = rows_to_layout(&model.predict(s.features.view())?)?;
        let d = bfs_all_pairs(&s.graph);
        total += match metrics::sns(&layout, &d) {
            Ok(v) => v,
            Err(Error::DegenerateLayout) => f64::INFINITY,
            Err(e) => return Err(e),
        };
    }
    Ok(total / samples.len() as f64)
}

/// One optimization step on `batch`; returns the mean per-graph loss.
pub fn train_step(
    model: &mut Mlp,
    adam: &mut Adam,
    batch: &[&Sample],
    rng: &mut Rng,
) -> Result<f64> {
    let dim = model.config.input_dim;
    let rows: usize = batch.iter().map(|s| s.features.nrows()).sum();
    let mut x = Array2::zeros((rows, dim));
    let mut offset = 0;
    for s in batch {
        let n = s.features.nrows();
        x.slice_mut(ndarray::s![offset..offset + n, ..])
            .assign(&s.features);
        offset += n;
    }
    let y = model.forward_train(x.view(), rng)?;
    let mut grad = vec![[0.0; 2]; rows];
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    offset = 0;
    for s in batch {
        let n = s.features.nrows();
        let view = y.slice(ndarray::s![offset..offset + n, ..]);
        let (l, _) = sns_loss_and_gradient(view, &s.pairs, &mut grad[offset..offset + n]);
        loss += l * scale;
        offset += n;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    let grad_out = Array2::from_shape_fn((rows, 2), |(r, k)| grad[r][k] * scale);
    let grads = model.backward(grad_out.view())?;
    model.clear_cache();
    adam.step(model.trainable_mut(), grads.slices());
    Ok(loss)
}

/// Trains a fresh model on graphs from `family`, keeping the checkpoint with
/// the best validation SNS (evaluated at step 0 and every `eval_every`).
pub fn train_model(
    family: &GraphFamily,
    pipeline: &EmbedPipeline,
    model_config: &MlpConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Trained> {
    cfg.validate()?;
    if model_config.input_dim != pipeline.embed.dim {
        return Err(Error::DimensionMismatch {
            expected: model_config.input_dim,
            found: pipeline.embed.dim,
        });
    }
    let pool = prepare_samples(family, pipeline, cfg.pool_size, 0, seed)?;
    let validation = prepare_samples(family, pipeline, cfg.validation_size, 1, seed)?;
    let mut model = Mlp::new(*model_config, seed)?;
    let mut adam = Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2);
    let mut dropout_rng = seed::rng(seed::derive(seed, &[seed::stream::DROPOUT]));
    let mut batch_rng = seed::rng(seed::derive(seed, &[seed::stream::BATCH]));

    let initial = mean_sns(&model, &validation)?;
    let mut trace = vec![ValidationPoint {
        step: 0,
        mean_sns: initial,
    }];
    let (mut best, mut best_sns, mut best_step) = (model.clone(), initial, 0);
    let mut stale = 0;
    let mut train_loss = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let take = cfg.graphs_per_step.min(pool.len());
        let batch: Vec<&Sample> = index::sample(&mut batch_rng, pool.len(), take)
            .iter()
            .map(|k| &pool[k])
            .collect();
        let loss =
            train_step(&mut model, &mut adam, &batch, &mut dropout_rng).map_err(|e| match e {
                Error::NonFinite(what) => Error::NonFinite(format!("{what} at step {step}")),
                other => other,
            })?;
        train_loss.push(loss);
        if step % cfg.eval_every == 0 {
            let val = mean_sns(&model, &validation)?;
            trace.push(ValidationPoint {
                step,
                mean_sns: val,
            });
            if val < best_sns {
                best = model.clone();
                best_sns = val;
                best_step = step;
                stale = 0;
            } else {
                stale += 1;
                if cfg.patience.is_some_and(|p| stale >= p) {
                    break;
                }
            }
        }
    }
    Ok(Trained {
        model: best,
        best_step,
        trace,
        train_loss,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingBreakdown {
    /// Walks and skip-gram training for the graph.
    pub embed_time: f64,
    /// Feature normalization and the eval-mode forward pass.
    pub forward_time: f64,
    pub total_time: f64,
}

/// Embeds `g`, predicts positions in eval mode and times each phase.
pub fn predict_with_timing(
    model: &Mlp,
    g: &Graph,
    pipeline: &EmbedPipeline,
    seed: u64,
) -> Result<(Layout, TimingBreakdown)> {
    let start = Instant::now();
    let e = embed_graph(g, &pipeline.walks, &pipeline.embed, seed)?;
    let embedded = Instant::now();
    let y = model.predict(node_features(&e).view())?;
    let forwarded = Instant::now();
    let layout = rows_to_layout(&y)?;
    let done = Instant::now();
    Ok((
        layout,
        TimingBreakdown {
            embed_time: (embedded - start).as_secs_f64(),
            forward_time: (forwarded - embedded).as_secs_f64(),
            total_time: (done - start).as_secs_f64(),
        },
    ))
}

const MAGIC: &[u8; 8] = b"WLKMLP\0\0";
const VERSION: u32 = 1;

impl Mlp {
    /// Versioned little-endian checkpoint: magic, version, shape and
    /// normalization settings, then every parameter block in declaration
    /// order (per block: weight, bias, gamma, beta, running mean, running
    /// variance) as `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [c.input_dim, c.hidden_width, c.depth] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for v in [c.dropout, c.norm_momentum, c.norm_epsilon] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(u8::from(c.batch_norm));
        let mut put = |data: &[f64]| {
            data.iter()
                .for_each(|v| out.extend_from_slice(&v.to_le_bytes()))
        };
        put(slice(&self.input_weight));
        put(slice1(&self.input_bias));
        for b in &self.blocks {
            put(slice(&b.weight));
            put(slice1(&b.bias));
            put(slice1(&b.gamma));
            put(slice1(&b.beta));
            put(slice1(&b.running_mean));
            put(slice1(&b.running_var));
        }
        put(slice(&self.output_weight));
        put(slice1(&self.output_bias));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(&mut r)?);
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = usize::try_from(u64::from_le_bytes(take(&mut r)?))
                .map_err(|_| Error::Checkpoint("dimension overflow".into()))?;
        }
        let mut floats = [0f64; 3];
        for f in &mut floats {
            *f = f64::from_le_bytes(take(&mut r)?);
        }
        let [flag] = take::<1>(&mut r)?;
        let config = MlpConfig {
            input_dim: dims[0],
            hidden_width: dims[1],
            depth: dims[2],
            dropout: floats[0],
            norm_momentum: floats[1],
            norm_epsilon: floats[2],
            batch_norm: flag != 0,
        };
        let (d, w) = (config.input_dim, config.hidden_width);
        let expected = 8 * (d * w + w + config.depth * (w * w + 5 * w) + 2 * w + 2);
        if r.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} parameter bytes, found {}",
                r.len()
            )));
        }
        let mut model = Mlp::zeroed(config)?;
        let mut fill = |dst: &mut [f64]| -> Result<()> {
            for v in dst {
                *v = f64::from_le_bytes(take(&mut r)?);
            }
            Ok(())
        };
        fill(model.input_weight.as_slice_mut().expect("standard layout"))?;
        fill(model.input_bias.as_slice_mut().expect("standard layout"))?;
        for b in &mut model.blocks {
            fill(b.weight.as_slice_mut().expect("standard layout"))?;
            fill(b.bias.as_slice_mut().expect("standard layout"))?;
            fill(b.gamma.as_slice_mut().expect("standard layout"))?;
            fill(b.beta.as_slice_mut().expect("standard layout"))?;
            fill(b.running_mean.as_slice_mut().expect("standard layout"))?;
            fill(b.running_var.as_slice_mut().expect("standard layout"))?;
        }
        fill(model.output_weight.as_slice_mut().expect("standard layout"))?;
        fill(model.output_bias.as_slice_mut().expect("standard layout"))?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint("truncated".into()))
}

fn take<const N: usize>(r: &mut &[u8]) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny(depth: usize, width: usize, batch_norm: bool, dropout: f64) -> MlpConfig {
        MlpConfig {
            input_dim: 3,
            hidden_width: width,
            depth,
            dropout,
            batch_norm,
            ..MlpConfig::default()
        }
    }

    #[test]
    fn zero_parameters_give_origin() {
        let m = Mlp::zeroed(MlpConfig::default()).unwrap();
        let x = Array2::from_shape_fn((5, 8), |(i, j)| (i * 8 + j) as f64 * 0.1 - 1.0);
        let y = m.predict(x.view()).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identical_rows_identical_outputs() {
        let m = Mlp::new(MlpConfig::default(), 1).unwrap();
        let row = Array1::from_shape_fn(8, |k| (k as f64).sin());
        let x = Array2::from_shape_fn((4, 8), |(_, k)| row[k]);
        let y = m.predict(x.view()).unwrap();
        for r in 1..4 {
            assert_eq!(y.row(r), y.row(0));
        }
    }

    #[test]
    fn hand_computed_single_block() {
        let cfg = MlpConfig {
            input_dim: 2,
            hidden_width: 2,
            depth: 1,
            dropout: 0.0,
            batch_norm: false,
            ..MlpConfig::default()
        };
        let mut m = Mlp::zeroed(cfg).unwrap();
        m.input_weight = array![[1.0, 2.0], [-1.0, 0.5]];
        m.input_bias = array![0.1, -0.2];
        m.blocks[0].weight = array![[0.5, -1.0], [1.5, 0.25]];
        m.blocks[0].bias = array![0.0, 0.3];
        m.output_weight = array![[1.0, 0.0], [2.0, -1.0]];
        m.output_bias = array![0.05, 0.0];
        let x = array![[0.4, -0.6]];
        // h0 = x W_in + b = [0.4 + 0.6 + 0.1, 0.8 - 0.3 - 0.2] = [1.1, 0.3]
        // z  = h0 W + b   = [0.55 + 0.45, -1.1 + 0.075 + 0.3] = [1.0, -0.725]
        // h1 = h0 + relu(z) = [2.1, 0.3]
        // y  = h1 W_out + b = [2.1 + 0.6 + 0.05, -0.3]
        let y = m.predict(x.view()).unwrap();
        assert!((y[[0, 0]] - 2.75).abs() < 1e-10);
        assert!((y[[0, 1]] + 0.3).abs() < 1e-10);
    }

    #[test]
    fn residual_identity_with_zero_blocks() {
        let mut m = Mlp::new(MlpConfig::default(), 4).unwrap();
        for b in &mut m.blocks {
            b.weight.fill(0.0);
            b.bias.fill(0.0);
            b.beta.fill(0.0);
            b.gamma.fill(1.0);
            b.running_mean.fill(0.0);
            b.running_var.fill(1.0);
        }
        let x = Array2::from_shape_fn((6, 8), |(i, j)| ((i + 2 * j) as f64).cos());
        let want = x.dot(&m.input_weight) + &m.input_bias;
        let want = want.dot(&m.output_weight) + &m.output_bias;
        let got = m.predict(x.view()).unwrap();
        assert!((&got - &want).iter().all(|v| v.abs() < 1e-12));
        let mut rng = seed::rng(0);
        let got = m.forward_train(x.view(), &mut rng).unwrap();
        assert!((&got - &want).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn backward_requires_forward() {
        let m = Mlp::new(tiny(2, 4, true, 0.0), 0).unwrap();
        let g = Array2::zeros((3, 2));
        assert!(matches!(m.backward(g.view()), Err(Error::NoForwardCache)));
    }

    #[test]
    fn zero_upstream_gradient() {
        let mut m = Mlp::new(tiny(2, 4, true, 0.3), 0).unwrap();
        let x = Array2::from_shape_fn((3, 3), |(i, j)| (i as f64) - (j as f64) * 0.5);
        m.forward_train(x.view(), &mut seed::rng(1)).unwrap();
        let grads = m.backward(Array2::zeros((3, 2)).view()).unwrap();
        assert!(grads.slices().iter().all(|s| s.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn dropped_units_get_no_gradient() {
        let mut m = Mlp::new(tiny(1, 4, false, 0.5), 2).unwrap();
        let x = Array2::from_shape_fn((3, 3), |(i, j)| 0.3 * i as f64 + 0.7 * j as f64 + 0.1);
        // Column 1 dropped for every row: its weights get no gradient through the branch.
        let mask = Array2::from_shape_fn((3, 4), |(_, c)| if c == 1 { 0.0 } else { 2.0 });
        m.forward_train_with_masks(x.view(), vec![mask]).unwrap();
        let grads = m.backward(Array2::ones((3, 2)).view()).unwrap();
        let b = &grads.blocks[0];
        assert!(b.weight.column(1).iter().all(|v| *v == 0.0));
        assert_eq!(b.bias[1], 0.0);
        assert!(b.weight.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn dimension_mismatch() {
        let m = Mlp::new(MlpConfig::default(), 0).unwrap();
        assert!(matches!(
            m.predict(Array2::zeros((2, 5)).view()),
            Err(Error::DimensionMismatch {
                expected: 8,
                found: 5
            })
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = Mlp::new(tiny(3, 5, true, 0.3), 9).unwrap();
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i * j) as f64 - 1.0);
        m.forward_train(x.view(), &mut seed::rng(0)).unwrap();
        let back = Mlp::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(
            back.predict(x.view()).unwrap(),
            m.predict(x.view()).unwrap()
        );
        let mut bytes = m.to_bytes();
        bytes.pop();
        assert!(Mlp::from_bytes(&bytes).is_err());
        bytes[0] = b'X';
        assert!(Mlp::from_bytes(&bytes).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = vec![1.0, -2.0];
        let mut adam = Adam::new(0.1, 0.9, 0.999);
        adam.step(vec![&mut p[..]], vec![&[3.0, -0.5][..]]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 1.9).abs() < 1e-6);
    }

    #[test]
    fn sns_gradient_at_optimal_scale() {
        let y = array![[0.0, 0.0], [2.0, 0.0], [2.0, 2.0]];
        let pairs = vec![
            Pair::stress_weighted(0, 1, 1.0),
            Pair::stress_weighted(1, 2, 1.0),
            Pair::stress_weighted(0, 2, 2.0),
        ];
        let mut g = vec![[0.0; 2]; 3];
        let (loss, alpha) = sns_loss_and_gradient(y.view(), &pairs, &mut g);
        let layout = rows_to_layout(&y.to_owned()).unwrap();
        let d = crate::graph::DistanceMatrix::from_fn(3, |i, j| {
            Some([[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]][i][j])
        });
        assert!((loss - metrics::sns(&layout, &d).unwrap()).abs() < 1e-12);
        assert!((alpha - metrics::alpha_min(&layout, &d).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(Mlp::new(
            MlpConfig {
                dropout: 1.0,
                ..MlpConfig::default()
            },
            0
        )
        .is_err());
        assert!(Mlp::new(
            MlpConfig {
                hidden_width: 0,
                ..MlpConfig::default()
            },
            0
        )
        .is_err());
        let bad = TrainConfig {
            eval_every: 600,
            ..TrainConfig::desk()
        };
        assert!(bad.validate().is_err());
        assert!(GraphFamily {
            sizes: vec![],
            probabilities: vec![0.5]
        }
        .sample(0)
        .is_err());
    }
}
