//! End-to-end layout methods built from the individual stages.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embed::{
    cosine_dissimilarity, train_skipgram, DissimilarityMatrix, EmbedConfig, EmbeddingMatrix,
};
use crate::error::{invalid, Error, Result};
use crate::graph::{bfs_all_pairs, Graph};
use crate::layout::{optimize_layout, Criterion, Layout, OptimizerConfig, TracePoint};
use crate::seed;
use crate::walks::{generate_walks, WalkConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Word2vec,
    SpSgd,
    Random,
    Neural,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Word2vec,
        Method::SpSgd,
        Method::Random,
        Method::Neural,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Word2vec => "word2vec",
            Method::SpSgd => "sp_sgd",
            Method::Random => "random",
            Method::Neural => "neural",
        }
    }

    /// Stable per-method key for seed derivation.
    pub fn tag(self) -> u64 {
        match self {
            Method::Word2vec => 1,
            Method::SpSgd => 2,
            Method::Random => 3,
            Method::Neural => 4,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                invalid(format!(
                    "unknown method {s:?} (expected word2vec, sp_sgd, random or neural)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Word2VecConfig {
    pub walks: WalkConfig,
    pub embed: EmbedConfig,
    pub optimizer: OptimizerConfig,
    /// Rescale the optimized layout so the mean drawn edge length is 1, the
    /// hop distance of every edge. Cosine targets live on `[0, 2]`, so without
    /// this the drawing has no relation to graph units.
    pub unit_edge_scale: bool,
}

impl Default for Word2VecConfig {
    fn default() -> Self {
        Word2VecConfig {
            walks: WalkConfig::default(),
            embed: EmbedConfig::default(),
            optimizer: OptimizerConfig::default(),
            unit_edge_scale: true,
        }
    }
}

/// Walks and skip-gram for one graph, with substreams derived from `seed`.
pub fn embed_graph(
    g: &Graph,
    walks: &WalkConfig,
    embed: &EmbedConfig,
    seed: u64,
) -> Result<EmbeddingMatrix> {
    let corpus = generate_walks(g, walks, seed::derive(seed, &[seed::stream::WALKS]))?;
    train_skipgram(&corpus, embed, seed::derive(seed, &[seed::stream::EMBED]))
}

#[derive(Debug, Clone)]
pub struct Word2VecRun {
    pub embedding: EmbeddingMatrix,
    pub dissimilarity: DissimilarityMatrix,
    pub layout: Layout,
    pub trace: Vec<TracePoint>,
}

/// Walks, skip-gram, cosine dissimilarity, then cosine-stress SGD.
pub fn word2vec_run(g: &Graph, cfg: &Word2VecConfig, seed: u64) -> Result<Word2VecRun> {
    let embedding = embed_graph(g, &cfg.walks, &cfg.embed, seed)?;
    let dissimilarity = cosine_dissimilarity(&embedding)?;
    let criterion = Criterion::cosine_stress(&dissimilarity, 1.0)?;
    let opt = OptimizerConfig {
        seed: seed::derive(seed, &[seed::stream::LAYOUT]),
        ..cfg.optimizer
    };
    let out = optimize_layout(&[criterion], g.node_count(), &opt, None)?;
    let layout = if cfg.unit_edge_scale {
        unit_edge_scaled(&out.layout, g)
    } else {
        out.layout
    };
    Ok(Word2VecRun {
        embedding,
        dissimilarity,
        layout,
        trace: out.trace,
    })
}

pub fn word2vec_layout(g: &Graph, cfg: &Word2VecConfig, seed: u64) -> Result<Layout> {
    Ok(word2vec_run(g, cfg, seed)?.layout)
}

/// Layout scaled so its edges average unit length; unchanged when the graph
/// has no edges or every edge is drawn with zero length.
pub fn unit_edge_scaled(x: &Layout, g: &Graph) -> Layout {
    if g.edge_count() == 0 {
        return x.clone();
    }
    let mean = g
        .edges()
        .iter()
        .map(|&(i, j)| x.distance(i, j))
        .sum::<f64>()
        / g.edge_count() as f64;
    if mean > 0.0 && mean.is_finite() {
        x.scaled(1.0 / mean)
    } else {
        x.clone()
    }
}

/// Baseline: SGD on weighted stress against BFS hop distances.
pub fn sp_sgd_layout(g: &Graph, cfg: &OptimizerConfig, seed: u64) -> Result<Layout> {
    let d = bfs_all_pairs(g);
    let criterion = Criterion::sp_stress(&d, 1.0)?;
    let opt = OptimizerConfig {
        seed: seed::derive(seed, &[seed::stream::LAYOUT]),
        ..*cfg
    };
    Ok(optimize_layout(&[criterion], g.node_count(), &opt, None)?.layout)
}

/// Baseline: i.i.d. uniform positions in the unit square.
pub fn random_layout(g: &Graph, seed: u64) -> Layout {
    Layout::random(g.node_count(), seed)
}
