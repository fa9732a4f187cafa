//! Uniform random walks used as the training corpus for skip-gram.

use std::fmt::Write as _;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::Graph;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Steps per walk; a full walk visits `walk_length + 1` nodes.
    pub walk_length: usize,
    pub walks_per_node: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            walk_length: 40,
            walks_per_node: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkCorpus {
    pub walks: Vec<Vec<usize>>,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub node_count: usize,
}

impl WalkCorpus {
    pub fn token_count(&self) -> usize {
        self.walks.iter().map(Vec::len).sum()
    }

    /// One walk per line, space separated.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for walk in &self.walks {
            let mut first = true;
            for v in walk {
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
}

/// Generates `walks_per_node` walks from every node.
///
/// Walks are emitted in rounds: round `r` starts one walk at each node
/// `0..n` in order. Walk `(start, r)` draws from its own substream keyed by
/// `(seed, start, r)`. A walk that reaches a node without neighbors stops.
pub fn generate_walks(g: &Graph, cfg: &WalkConfig, seed: u64) -> Result<WalkCorpus> {
    if cfg.walk_length == 0 || cfg.walks_per_node == 0 {
        return Err(invalid("walk_length and walks_per_node must be at least 1"));
    }
    let n = g.node_count();
    let mut walks = Vec::with_capacity(n * cfg.walks_per_node);
    for round in 0..cfg.walks_per_node {
        for start in 0..n {
            walks.push(single_walk(
                g,
                start,
                cfg.walk_length,
                walk_seed(seed, start, round),
            ));
        }
    }
    Ok(WalkCorpus {
        walks,
        walk_length: cfg.walk_length,
        walks_per_node: cfg.walks_per_node,
        node_count: n,
    })
}

fn walk_seed(seed: u64, start: usize, round: usize) -> u64 {
    seed::derive(seed, &[seed::stream::WALKS, start as u64, round as u64])
}

fn single_walk(g: &Graph, start: usize, steps: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed);
    let mut walk = Vec::with_capacity(steps + 1);
    walk.push(start);
    let mut current = start;
    for _ in 0..steps {
        let nbrs = g.neighbors(current);
        if nbrs.is_empty() {
            break;
        }
        current = nbrs[rng.random_range(0..nbrs.len())];
        walk.push(current);
    }
    walk
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_er;

    fn cfg(walk_length: usize, walks_per_node: usize) -> WalkConfig {
        WalkConfig {
            walk_length,
            walks_per_node,
        }
    }

    #[test]
    fn single_edge_alternates() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let c = generate_walks(&g, &cfg(3, 1), 5).unwrap();
        assert_eq!(c.walks, vec![vec![0, 1, 0, 1], vec![1, 0, 1, 0]]);
    }

    #[test]
    fn edgeless_walks_are_single_nodes() {
        let g = Graph::empty(4).unwrap();
        let c = generate_walks(&g, &cfg(10, 3), 5).unwrap();
        assert_eq!(c.walks.len(), 12);
        assert!(c.walks.iter().all(|w| w.len() == 1));
    }

    #[test]
    fn starts_edges_and_determinism() {
        let g = generate_er(30, 0.15, 3).unwrap();
        let c = generate_walks(&g, &cfg(12, 4), 77).unwrap();
        assert_eq!(c, generate_walks(&g, &cfg(12, 4), 77).unwrap());
        assert_ne!(c, generate_walks(&g, &cfg(12, 4), 78).unwrap());
        let mut starts = vec![0; 30];
        for (idx, walk) in c.walks.iter().enumerate() {
            assert_eq!(walk[0], idx % 30);
            starts[walk[0]] += 1;
            assert!(walk.len() <= 13);
            if walk.len() < 13 {
                assert_eq!(g.degree(*walk.last().unwrap()), 0);
            }
            for pair in walk.windows(2) {
                assert!(g.has_edge(pair[0], pair[1]));
            }
        }
        assert!(starts.iter().all(|&s| s == 4));
    }

    #[test]
    fn rejects_zero_parameters() {
        let g = Graph::empty(2).unwrap();
        assert!(generate_walks(&g, &cfg(0, 1), 0).is_err());
        assert!(generate_walks(&g, &cfg(1, 0), 0).is_err());
    }

    #[test]
    fn text_dump() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let c = generate_walks(&g, &cfg(2, 1), 0).unwrap();
        assert_eq!(c.to_text(), "0 1 0\n1 0 1\n");
    }
}
