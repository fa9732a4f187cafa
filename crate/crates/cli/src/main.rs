use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use walklayout::bench::{run_bench, BenchSpec, NeuralSetup};
use walklayout::embed::{save_embedding, EmbedConfig};
use walklayout::graph::{bfs_all_pairs, generate_er, read_graph, write_edge_list, write_json};
use walklayout::layout::{Layout, OptimizerConfig};
use walklayout::methods::{
    embed_graph, random_layout, sp_sgd_layout, word2vec_layout, Method, Word2VecConfig,
};
use walklayout::metrics::StressReport;
use walklayout::neural::{
    predict_with_timing, trace_csv, train_model, EmbedPipeline, GraphFamily, Mlp, MlpConfig,
    TrainConfig,
};
use walklayout::render::{render_svg, RenderStyle};
use walklayout::seed;
use walklayout::walks::WalkConfig;
use walklayout::Result;

/// Graph layout from random-walk embeddings, with baselines and a benchmark harness.
#[derive(Parser)]
#[command(name = "walklayout", version)]
struct Cli {
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, env = "WALKLAYOUT_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample Erdős–Rényi graphs into a directory.
    Gen(GenArgs),
    /// Random walks and skip-gram embedding for one graph.
    Embed(EmbedArgs),
    /// Compute a layout with one method.
    Layout(LayoutArgs),
    /// Stress metrics of a layout against hop distances, as CSV.
    Eval(EvalArgs),
    /// Draw a layout as SVG.
    Render(RenderArgs),
    /// Run every method over a grid of ER cells.
    Bench(BenchArgs),
    /// Train the neural layout model.
    Train(TrainArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = GraphFormat::Edges)]
    format: GraphFormat,
    /// Output directory.
    #[arg(long, default_value = "graphs")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphFormat {
    Edges,
    Json,
}

#[derive(Args, Clone)]
struct PipelineArgs {
    #[arg(long, default_value_t = 40)]
    walk_length: usize,
    #[arg(long, default_value_t = 10)]
    walks_per_node: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
}

impl PipelineArgs {
    fn pipeline(&self) -> EmbedPipeline {
        EmbedPipeline {
            walks: WalkConfig {
                walk_length: self.walk_length,
                walks_per_node: self.walks_per_node,
            },
            embed: EmbedConfig {
                dim: self.dim,
                window: self.window,
                negatives: self.negatives,
                epochs: self.epochs,
                ..EmbedConfig::default()
            },
        }
    }
}

#[derive(Args)]
struct EmbedArgs {
    /// Edge list, or JSON with a `.json` extension.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Center vectors; context vectors go next to it with a `.ctx` suffix.
    #[arg(long, default_value = "embedding.txt")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutMethod {
    Word2vec,
    #[value(name = "sp_sgd")]
    SpSgd,
    Neural,
    Random,
}

#[derive(Args)]
struct LayoutArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_enum, default_value_t = LayoutMethod::Word2vec)]
    method: LayoutMethod,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// SGD epochs for word2vec and sp_sgd.
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    /// Checkpoint for the neural method.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Text layout, or JSON with a `.json` extension.
    #[arg(long, default_value = "layout.txt")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    layout: PathBuf,
    /// Label for the method column.
    #[arg(long, default_value = "")]
    method: String,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    layout: PathBuf,
    #[arg(long, default_value_t = 400.0)]
    size: f64,
    #[arg(long, default_value_t = 5.0)]
    radius: f64,
    #[arg(long, default_value_t = 1.0)]
    stroke: f64,
    #[arg(long, default_value_t = 20.0)]
    margin: f64,
    #[arg(long)]
    labels: bool,
    #[arg(long, default_value = "layout.svg")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "20")]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.2")]
    probs: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long, value_delimiter = ',', default_value = "word2vec,sp_sgd,random")]
    methods: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint, required when the methods include neural.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Leave the time column empty so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
    /// Also draw the first instance of every cell and method.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 500 steps of 16 graphs at depth 8.
    Desk,
    /// 10,000 steps of 128 graphs at depth 80.
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    /// n in {18, 19, 21, 22}, p = 0.5.
    MixedNodes,
    /// n = 20, p in {0.1, ..., 0.9} without 0.5.
    MixedEdges,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value_t = Family::MixedNodes)]
    family: Family,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    graphs_per_step: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, default_value = "model.bin")]
    out: PathBuf,
    /// Validation trace CSV; defaults to the model path with `.trace.csv`.
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn load_layout(path: &Path) -> Result<Layout> {
    Layout::load(path)
}

fn run(cli: Cli) -> Result<()> {
    let out = |p: &Path| cli.out_dir.join(p);
    match cli.command {
        Command::Gen(a) => {
            let dir = out(&a.out);
            fs::create_dir_all(&dir)?;
            for k in 0..a.count {
                let g = generate_er(a.n, a.p, seed::derive(a.seed, &[k as u64]))?;
                match a.format {
                    GraphFormat::Edges => {
                        write_edge_list(&g, dir.join(format!("graph_{k:03}.edges")))?
                    }
                    GraphFormat::Json => write_json(&g, dir.join(format!("graph_{k:03}.json")))?,
                }
            }
        }
        Command::Embed(a) => {
            let g = read_graph(&a.graph)?;
            let p = a.pipeline.pipeline();
            let e = embed_graph(&g, &p.walks, &p.embed, a.seed)?;
            let path = out(&a.out);
            create_parent(&path)?;
            save_embedding(&e, path)?;
        }
        Command::Layout(a) => {
            let g = read_graph(&a.graph)?;
            let p = a.pipeline.pipeline();
            let optimizer = OptimizerConfig {
                iterations: a.iterations,
                ..OptimizerConfig::default()
            };
            let layout = match a.method {
                LayoutMethod::Word2vec => {
                    let cfg = Word2VecConfig {
                        walks: p.walks,
                        embed: p.embed,
                        optimizer,
                        ..Word2VecConfig::default()
                    };
                    word2vec_layout(&g, &cfg, a.seed)?
                }
                LayoutMethod::SpSgd => sp_sgd_layout(&g, &optimizer, a.seed)?,
                LayoutMethod::Random => random_layout(&g, a.seed),
                LayoutMethod::Neural => {
                    let path = a.model.ok_or_else(|| {
                        walklayout::Error::InvalidArgument(
                            "--model is required for the neural method".into(),
                        )
                    })?;
                    let model = Mlp::load(path)?;
                    predict_with_timing(&model, &g, &neural_pipeline(&model, p), a.seed)?.0
                }
            };
            let path = out(&a.out);
            create_parent(&path)?;
            layout.save(path)?;
        }
        Command::Eval(a) => {
            let g = read_graph(&a.graph)?;
            let x = load_layout(&a.layout)?;
            let report = StressReport::evaluate(&x, &bfs_all_pairs(&g))?;
            let id = a
                .graph
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let csv = format!(
                "{}\n{}\n",
                StressReport::CSV_HEADER,
                report.csv_row(&id, g.node_count(), None, &a.method)
            );
            match a.out {
                Some(p) => {
                    let path = out(&p);
                    create_parent(&path)?;
                    fs::write(path, csv)?;
                }
                None => print!("{csv}"),
            }
        }
        Command::Render(a) => {
            let g = read_graph(&a.graph)?;
            let x = load_layout(&a.layout)?;
            let style = RenderStyle {
                size: a.size,
                node_radius: a.radius,
                stroke_width: a.stroke,
                margin: a.margin,
                labels: a.labels,
            };
            let path = out(&a.out);
            create_parent(&path)?;
            fs::write(path, render_svg(&g, &x, &style)?)?;
        }
        Command::Bench(a) => {
            let methods = a
                .methods
                .iter()
                .map(|m| m.parse())
                .collect::<Result<Vec<Method>>>()?;
            let p = a.pipeline.pipeline();
            let mut spec = BenchSpec::new(a.sizes, a.probs, a.instances, methods, a.seed);
            spec.word2vec.walks = p.walks;
            spec.word2vec.embed = p.embed;
            spec.timing = !a.no_timing;
            if let Some(path) = a.model {
                let model = Mlp::load(path)?;
                let pipeline = neural_pipeline(&model, p);
                spec.neural = Some(NeuralSetup { model, pipeline });
            }
            let result = run_bench(&spec)?;
            let path = out(&a.out);
            create_parent(&path)?;
            fs::write(path, result.to_csv())?;
            if let Some(svg) = a.svg {
                let path = out(&svg);
                create_parent(&path)?;
                fs::write(
                    path,
                    result.render(spec.methods.len(), &RenderStyle::default())?,
                )?;
            }
        }
        Command::Train(a) => {
            let family = match a.family {
                Family::MixedNodes => GraphFamily::mixed_nodes(),
                Family::MixedEdges => GraphFamily::mixed_edges(),
            };
            let (mut cfg, depth) = match a.preset {
                Preset::Desk => (TrainConfig::desk(), 8),
                Preset::Full => (TrainConfig::default(), 80),
            };
            cfg.steps = a.steps.unwrap_or(cfg.steps);
            cfg.graphs_per_step = a.graphs_per_step.unwrap_or(cfg.graphs_per_step);
            cfg.eval_every = a.eval_every.unwrap_or(cfg.eval_every);
            cfg.learning_rate = a.lr.unwrap_or(cfg.learning_rate);
            let pipeline = a.pipeline.pipeline();
            let model_cfg = MlpConfig {
                input_dim: pipeline.embed.dim,
                depth: a.depth.unwrap_or(depth),
                ..MlpConfig::default()
            };
            let trained = train_model(&family, &pipeline, &model_cfg, &cfg, a.seed)?;
            let path = out(&a.out);
            create_parent(&path)?;
            trained.model.save(&path)?;
            let trace = match a.trace {
                Some(t) => out(&t),
                None => path.with_extension("trace.csv"),
            };
            create_parent(&trace)?;
            fs::write(trace, trace_csv(&trained.trace))?;
        }
    }
    Ok(())
}

/// The embedding dimension always follows the checkpoint.
fn neural_pipeline(model: &Mlp, mut p: EmbedPipeline) -> EmbedPipeline {
    p.embed.dim = model.config().input_dim;
    p
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
