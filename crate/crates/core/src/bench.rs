//! Benchmark grid over ER cells and layout methods.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::graph::{bfs_all_pairs, generate_er, Graph};
use crate::layout::{Layout, OptimizerConfig};
use crate::methods::{random_layout, sp_sgd_layout, word2vec_layout, Method, Word2VecConfig};
use crate::metrics::StressReport;
use crate::neural::{predict_with_timing, EmbedPipeline, Mlp};
use crate::render::{render_grid, RenderStyle};
use crate::seed;

pub const CSV_HEADER: &str =
    "n,p,method,instances,mean_raw_stress,mean_sns,std_sns,mean_time_s,excluded";

/// A trained model and the featurization it expects.
#[derive(Debug, Clone)]
pub struct NeuralSetup {
    pub model: Mlp,
    pub pipeline: EmbedPipeline,
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub sizes: Vec<usize>,
    pub probabilities: Vec<f64>,
    pub instances: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub word2vec: Word2VecConfig,
    pub sp_sgd: OptimizerConfig,
    /// Required when `methods` contains [`Method::Neural`].
    pub neural: Option<NeuralSetup>,
    /// Record wall-clock times. Off leaves the time column empty so the CSV
    /// is byte-reproducible.
    pub timing: bool,
}

impl BenchSpec {
    pub fn new(
        sizes: Vec<usize>,
        probabilities: Vec<f64>,
        instances: usize,
        methods: Vec<Method>,
        seed: u64,
    ) -> Self {
        BenchSpec {
            sizes,
            probabilities,
            instances,
            methods,
            seed,
            word2vec: Word2VecConfig::default(),
            sp_sgd: OptimizerConfig::default(),
            neural: None,
            timing: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 {
            return Err(invalid("instances must be at least 1"));
        }
        if self.sizes.is_empty() || self.probabilities.is_empty() || self.methods.is_empty() {
            return Err(invalid(
                "sizes, probabilities and methods must be non-empty",
            ));
        }
        if self.probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("probabilities must lie in [0, 1]"));
        }
        if self.methods.contains(&Method::Neural) && self.neural.is_none() {
            return Err(invalid("the neural method needs a trained model"));
        }
        self.word2vec.optimizer.validate()?;
        self.sp_sgd.validate()
    }

    /// Seed of instance `index` in cell `(n, p)`; independent of the method list.
    pub fn instance_seed(&self, n: usize, p: f64, index: usize) -> u64 {
        seed::derive(self.seed, &[n as u64, p.to_bits(), index as u64])
    }

    pub fn instance_graph(&self, n: usize, p: f64, index: usize) -> Result<Graph> {
        generate_er(
            n,
            p,
            seed::derive(self.instance_seed(n, p, index), &[seed::stream::GRAPH]),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub p: f64,
    pub method: Method,
    /// Instances that produced a layout and metrics.
    pub instances: usize,
    pub mean_raw_stress: f64,
    pub mean_sns: f64,
    /// Sample standard deviation; zero for a single instance.
    pub std_sns: f64,
    pub mean_time_s: Option<f64>,
    pub excluded: usize,
}

/// First instance of every cell and method, kept for drawing.
#[derive(Debug, Clone)]
pub struct Example {
    pub n: usize,
    pub p: f64,
    pub method: Method,
    pub graph: Graph,
    pub layout: Layout,
    pub sns: f64,
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub examples: Vec<Example>,
}

struct Outcome {
    raw_stress: f64,
    sns: f64,
    time: f64,
    layout: Layout,
}

pub fn run_method(spec: &BenchSpec, method: Method, g: &Graph, seed: u64) -> Result<(Layout, f64)> {
    let start = Instant::now();
    let layout = match method {
        Method::Word2vec => word2vec_layout(g, &spec.word2vec, seed)?,
        Method::SpSgd => sp_sgd_layout(g, &spec.sp_sgd, seed)?,
        Method::Random => random_layout(g, seed),
        Method::Neural => {
            let setup = spec
                .neural
                .as_ref()
                .ok_or_else(|| invalid("the neural method needs a trained model"))?;
            let (layout, timing) = predict_with_timing(&setup.model, g, &setup.pipeline, seed)?;
            return Ok((layout, timing.total_time));
        }
    };
    Ok((layout, start.elapsed().as_secs_f64()))
}

fn run_instance(
    spec: &BenchSpec,
    n: usize,
    p: f64,
    index: usize,
) -> Result<(Graph, Vec<Result<Outcome>>)> {
    let g = spec.instance_graph(n, p, index)?;
    let d = bfs_all_pairs(&g);
    let base = spec.instance_seed(n, p, index);
    let outcomes = spec
        .methods
        .iter()
        .map(|&m| {
            let (layout, time) = run_method(spec, m, &g, seed::derive(base, &[m.tag()]))?;
            let report = StressReport::evaluate(&layout, &d)?;
            Ok(Outcome {
                raw_stress: report.raw_stress,
                sns: report.sns,
                time,
                layout,
            })
        })
        .collect();
    Ok((g, outcomes))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Runs every method on the same instances of every `(n, p)` cell. Instances
/// run in parallel; rows come out in `(n, p, method)` order and aggregate in
/// instance order, so results do not depend on scheduling. A failed method
/// run is excluded from its row's means and counted in `excluded`.
pub fn run_bench(spec: &BenchSpec) -> Result<BenchResult> {
    spec.validate()?;
    let cells: Vec<(usize, f64)> = spec
        .sizes
        .iter()
        .flat_map(|&n| spec.probabilities.iter().map(move |&p| (n, p)))
        .collect();
    let jobs: Vec<(usize, f64, usize)> = cells
        .iter()
        .flat_map(|&(n, p)| (0..spec.instances).map(move |k| (n, p, k)))
        .collect();
    let results: Vec<(Graph, Vec<Result<Outcome>>)> = jobs
        .par_iter()
        .map(|&(n, p, k)| run_instance(spec, n, p, k))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut examples = Vec::new();
    for (c, &(n, p)) in cells.iter().enumerate() {
        let cell = &results[c * spec.instances..(c + 1) * spec.instances];
        for (mi, &method) in spec.methods.iter().enumerate() {
            let ok: Vec<&Outcome> = cell
                .iter()
                .filter_map(|(_, o)| o[mi].as_ref().ok())
                .collect();
            let sns: Vec<f64> = ok.iter().map(|o| o.sns).collect();
            let raw: Vec<f64> = ok.iter().map(|o| o.raw_stress).collect();
            let times: Vec<f64> = ok.iter().map(|o| o.time).collect();
            let std_sns = if sns.len() > 1 {
                let m = mean(&sns);
                (sns.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (sns.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            rows.push(BenchRow {
                n,
                p,
                method,
                instances: ok.len(),
                mean_raw_stress: mean(&raw),
                mean_sns: mean(&sns),
                std_sns,
                mean_time_s: spec.timing.then(|| mean(&times)),
                excluded: spec.instances - ok.len(),
            });
            let (g, outcomes) = &cell[0];
            if let Ok(o) = &outcomes[mi] {
                examples.push(Example {
                    n,
                    p,
                    method,
                    graph: g.clone(),
                    layout: o.layout.clone(),
                    sns: o.sns,
                });
            }
        }
    }
    Ok(BenchResult { rows, examples })
}

impl BenchResult {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let time = r.mean_time_s.map(|t| t.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.n,
                r.p,
                r.method,
                r.instances,
                r.mean_raw_stress,
                r.mean_sns,
                r.std_sns,
                time,
                r.excluded
            );
        }
        out
    }

    pub fn row(&self, n: usize, p: f64, method: Method) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.p == p && r.method == method)
    }

    /// One row of drawings per cell, one column per method.
    pub fn render(&self, columns: usize, style: &RenderStyle) -> Result<String> {
        let captions: Vec<String> = self
            .examples
            .iter()
            .map(|e| format!("{} n={} p={} sns={:.2}", e.method, e.n, e.p, e.sns))
            .collect();
        let items: Vec<(&Graph, &Layout, &str)> = self
            .examples
            .iter()
            .zip(&captions)
            .map(|(e, c)| (&e.graph, &e.layout, c.as_str()))
            .collect();
        render_grid(&items, columns, style)
    }
}
