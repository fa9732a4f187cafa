//! Undirected simple graphs, Erdős–Rényi sampling, BFS distances and I/O.

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pairs::Targets;
use crate::seed;

/// Undirected simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adjacency: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from an edge list. Edge orientation is irrelevant;
    /// self-loops, duplicates and out-of-range endpoints are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(invalid("graph must have at least one node"));
        }
        let mut seen = HashSet::new();
        let mut normalized = Vec::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(invalid(format!("edge ({a}, {b}) out of range for n = {n}")));
            }
            if a == b {
                return Err(invalid(format!("self-loop at node {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(invalid(format!("duplicate edge ({}, {})", e.0, e.1)));
            }
            normalized.push(e);
        }
        Ok(Self::from_normalized(n, normalized))
    }

    fn from_normalized(n: usize, mut edges: Vec<(usize, usize)>) -> Self {
        edges.sort_unstable();
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j) in &edges {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Graph {
            n,
            adjacency,
            edges,
        }
    }

    pub fn empty(n: usize) -> Result<Self> {
        Self::from_edges(n, [])
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(i, j)` with `i < j`, lexicographically sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a < self.n && self.adjacency[a].binary_search(&b).is_ok()
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            n: self.n,
            edges: self.edges.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }

    pub fn from_json(json: &GraphJson) -> Result<Self> {
        Self::from_edges(json.n, json.edges.iter().map(|e| (e[0], e[1])))
    }
}

/// Interchange form `{"n": int, "edges": [[i, j], ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

/// Samples G(n, p). Candidate edges are visited in lexicographic `(i, j)`
/// order and each consumes exactly one uniform draw.
pub fn generate_er(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("edge probability {p} outside [0, 1]")));
    }
    let mut rng = seed::rng(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Ok(Graph::from_normalized(n, edges))
}

/// All-pairs hop distances; `None` marks unreachable pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<Option<f64>>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Self {
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(f(i, j));
            }
        }
        DistanceMatrix { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.n + j]
    }

    pub fn is_connected(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }
}

impl Targets for DistanceMatrix {
    fn node_count(&self) -> usize {
        self.n
    }

    fn target(&self, i: usize, j: usize) -> Option<f64> {
        self.get(i, j)
    }
}

/// Unweighted shortest-path lengths from one BFS per source.
pub fn bfs_all_pairs(g: &Graph) -> DistanceMatrix {
    let n = g.node_count();
    let mut values = vec![None; n * n];
    let mut queue = VecDeque::new();
    let mut hops = vec![usize::MAX; n];
    for s in 0..n {
        hops.fill(usize::MAX);
        hops[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            for &u in g.neighbors(v) {
                if hops[u] == usize::MAX {
                    hops[u] = hops[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        for (t, &h) in hops.iter().enumerate() {
            if h != usize::MAX {
                values[s * n + t] = Some(h as f64);
            }
        }
    }
    DistanceMatrix { n, values }
}

/// Parses the edge-list text format: optional `n <count>` header, then one
/// `i j` pair per line (0-based). Blank lines and `#` comments are ignored.
/// Without a header the node count is one past the largest index.
pub fn parse_edge_list(text: &str, path: &Path) -> Result<Graph> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut declared_n = None;
    let mut edges: Vec<(usize, usize, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] == "n" {
            if declared_n.is_some() || !edges.is_empty() {
                return Err(err(
                    lineno,
                    "node-count header must be the first entry".into(),
                ));
            }
            if fields.len() != 2 {
                return Err(err(lineno, format!("malformed header {line:?}")));
            }
            let n: usize = fields[1]
                .parse()
                .map_err(|_| err(lineno, format!("invalid node count {:?}", fields[1])))?;
            if n == 0 {
                return Err(err(lineno, "node count must be positive".into()));
            }
            declared_n = Some(n);
            continue;
        }
        if fields.len() != 2 {
            return Err(err(lineno, format!("expected \"i j\", found {line:?}")));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| err(lineno, format!("invalid node index {s:?}")))
        };
        let (a, b) = (parse(fields[0])?, parse(fields[1])?);
        if a == b {
            return Err(err(lineno, format!("self-loop at node {a}")));
        }
        if let Some(n) = declared_n {
            if a >= n || b >= n {
                return Err(err(lineno, format!("node index out of range for n = {n}")));
            }
        }
        edges.push((lineno, a, b));
    }
    let n = match declared_n {
        Some(n) => n,
        None => edges
            .iter()
            .map(|&(_, a, b)| a.max(b) + 1)
            .max()
            .ok_or_else(|| err(0, "no header and no edges".into()))?,
    };
    let mut seen = HashSet::new();
    for &(lineno, a, b) in &edges {
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(err(lineno, format!("duplicate edge ({a}, {b})")));
        }
    }
    Graph::from_edges(n, edges.into_iter().map(|(_, a, b)| (a, b)))
}

pub fn format_edge_list(g: &Graph) -> String {
    let mut out = format!("n {}\n", g.node_count());
    for &(i, j) in g.edges() {
        let _ = writeln!(out, "{i} {j}");
    }
    out
}

pub fn read_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    parse_edge_list(&fs::read_to_string(path)?, path)
}

pub fn write_edge_list(g: &Graph, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_edge_list(g))?;
    Ok(())
}

pub fn read_json(path: impl AsRef<Path>) -> Result<Graph> {
    let json: GraphJson = serde_json::from_str(&fs::read_to_string(path)?)?;
    Graph::from_json(&json)
}

pub fn write_json(g: &Graph, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serde_json::to_string(&g.to_json())? + "\n")?;
    Ok(())
}

/// Reads either format, choosing JSON by a `.json` extension.
pub fn read_graph(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "json") {
        read_json(path)
    } else {
        read_edge_list(path)
    }
}

/// Path graph `0 - 1 - ... - (n-1)`.
pub fn path_graph(n: usize) -> Result<Graph> {
    Graph::from_edges(n, (1..n).map(|i| (i - 1, i)))
}

/// Two `k`-cliques on `0..k` and `k..2k` joined by the bridge `(k-1, k)`.
pub fn two_cliques_with_bridge(k: usize) -> Result<Graph> {
    let mut edges = Vec::new();
    for offset in [0, k] {
        for i in 0..k {
            for j in (i + 1)..k {
                edges.push((offset + i, offset + j));
            }
        }
    }
    edges.push((k - 1, k));
    Graph::from_edges(2 * k, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Graph> {
        parse_edge_list(text, Path::new("test.edges"))
    }

    #[test]
    fn er_extremes() {
        let g = generate_er(2, 1.0, 123).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        let g = generate_er(5, 0.0, 123).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.node_count(), 5);
    }

    #[test]
    fn er_rejects_bad_arguments() {
        assert!(generate_er(0, 0.5, 1).is_err());
        assert!(generate_er(4, 1.5, 1).is_err());
        assert!(generate_er(4, -0.1, 1).is_err());
        assert!(generate_er(4, f64::NAN, 1).is_err());
    }

    #[test]
    fn er_mean_edge_count_matches_binomial() {
        // 1000 seeds, each graph has Binomial(190, 0.5) edges.
        let seeds = 1000;
        let counts: Vec<f64> = (0..seeds)
            .map(|s| generate_er(20, 0.5, s).unwrap().edge_count() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / seeds as f64;
        let trials = 190.0;
        let std_err = (trials * 0.25 / seeds as f64).sqrt();
        assert!((mean - 95.0).abs() < 3.0 * std_err, "mean {mean}");
    }

    #[test]
    fn er_adjacency_is_symmetric() {
        for seed in 0..20 {
            let g = generate_er(25, 0.3, seed).unwrap();
            for v in 0..25 {
                for &u in g.neighbors(v) {
                    assert!(g.neighbors(u).contains(&v));
                    assert_ne!(u, v);
                }
            }
        }
    }

    #[test]
    fn bfs_small_cases() {
        let d = bfs_all_pairs(&path_graph(3).unwrap());
        assert_eq!(d.get(0, 2), Some(2.0));
        assert_eq!(d.get(2, 0), Some(2.0));
        assert_eq!(d.get(1, 1), Some(0.0));

        let d = bfs_all_pairs(&Graph::empty(3).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(d.get(i, j).is_some(), i == j);
            }
        }
        assert!(!d.is_connected());
    }

    #[test]
    fn minimal_edge_list() {
        let g = parse("n 2\n0 1\n").unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn headerless_edge_list_infers_n() {
        let g = parse("0 3\n# comment\n\n1 2\n").unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn self_loop_reports_line() {
        match parse("n 3\n0 1\n0 0\n") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("self-loop"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_and_out_of_range_lines() {
        assert!(matches!(
            parse("n 2\n0\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse("n 2\n0 x\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse("n 2\n0 1\n1 2\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse("0 1\n1 0\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse("0 1\nn 3\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = generate_er(20, 0.5, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.edges");
        write_edge_list(&g, &path).unwrap();
        assert_eq!(read_edge_list(&path).unwrap(), g);

        let path = dir.path().join("g.json");
        write_json(&g, &path).unwrap();
        assert_eq!(read_graph(&path).unwrap(), g);
    }

    #[test]
    fn isolated_trailing_nodes_survive_round_trip() {
        let g = Graph::from_edges(6, [(0, 1)]).unwrap();
        let back = parse(&format_edge_list(&g)).unwrap();
        assert_eq!(back.node_count(), 6);
    }

    #[test]
    fn from_edges_validates() {
        assert!(Graph::from_edges(3, [(0, 0)]).is_err());
        assert!(Graph::from_edges(3, [(0, 3)]).is_err());
        assert!(Graph::from_edges(3, [(0, 1), (1, 0)]).is_err());
        let g = Graph::from_edges(3, [(2, 0)]).unwrap();
        assert_eq!(g.edges(), &[(0, 2)]);
        assert!(g.has_edge(2, 0));
    }

    #[test]
    fn bridge_graph_shape() {
        let g = two_cliques_with_bridge(5).unwrap();
        assert_eq!(g.node_count(), 10);
        assert_eq!(g.edge_count(), 2 * 10 + 1);
        assert!(g.has_edge(4, 5));
    }
}
