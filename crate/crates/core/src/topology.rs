//! Undirected communication graphs.
//!
//! Every constructor returns a connected graph with canonical `(i, j)`, `i < j`
//! edges and no self-loops. Self-loops are implicit in mixing matrices.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from an arbitrary edge collection.
    ///
    /// Rejects self-loops, out-of-range indices, duplicate edges (in either
    /// orientation) and disconnected graphs.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize("topology needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            for idx in [a, b] {
                if idx >= n {
                    return Err(Error::IndexOutOfRange { index: idx, n });
                }
            }
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop at node {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !set.insert(e) {
                return Err(Error::InvalidParameter(format!("duplicate edge ({}, {})", e.0, e.1)));
            }
        }
        let topo = Self::from_canonical(n, set);
        if !topo.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(topo)
    }

    fn from_canonical(n: usize, set: BTreeSet<(usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(i, j) in &set {
            adj[i].push(j);
            adj[j].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Topology {
            n,
            edges: set.into_iter().collect(),
            adj,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Canonical edge list, sorted lexicographically.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && i < self.n && self.adj[i].binary_search(&j).is_ok()
    }

    /// Whether `(i, j)` may carry weight in a mixing matrix: an edge or the diagonal.
    pub fn in_support(&self, i: usize, j: usize) -> bool {
        i == j || self.has_edge(i, j)
    }

    /// Sorted neighbor list of node `i`.
    pub fn neighbors(&self, i: usize) -> Result<&[usize]> {
        self.adj
            .get(i)
            .map(Vec::as_slice)
            .ok_or(Error::IndexOutOfRange { index: i, n: self.n })
    }

    /// Number of nodes reached by breadth-first search from node 0.
    pub fn bfs_reach(&self) -> usize {
        bfs_count(self.n, &self.adj)
    }

    pub fn is_connected(&self) -> bool {
        self.bfs_reach() == self.n
    }

    /// Serializes to the edge-list text format: `n=<int>` followed by one `i j` per line.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("n={}\n", self.n);
        for &(i, j) in &self.edges {
            let _ = writeln!(s, "{i} {j}");
        }
        s
    }

    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty edge list".into()))?;
        let n: usize = header
            .strip_prefix("n=")
            .ok_or_else(|| Error::Parse(format!("expected `n=<int>` header, got `{header}`")))?
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad node count in `{header}`")))?;
        let mut edges = Vec::new();
        for line in lines {
            let mut parts = line.split_whitespace();
            let (a, b) = match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => (a, b),
                _ => return Err(Error::Parse(format!("expected `i j`, got `{line}`"))),
            };
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad node index `{s}`")))
            };
            edges.push((parse(a)?, parse(b)?));
        }
        Self::from_edges(n, edges)
    }

    pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_edge_list(&std::fs::read_to_string(path)?)
    }
}

fn bfs_count(n: usize, adj: &[Vec<usize>]) -> usize {
    if n == 0 {
        return 0;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count
}

/// Disjoint node groups covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliquePartition {
    cliques: Vec<Vec<usize>>,
    n: usize,
}

impl CliquePartition {
    pub fn new(cliques: Vec<Vec<usize>>) -> Result<Self> {
        let n: usize = cliques.iter().map(Vec::len).sum();
        if n == 0 {
            return Err(Error::InvalidSize("partition covers no nodes".into()));
        }
        let mut seen = vec![false; n];
        for clique in &cliques {
            if clique.is_empty() {
                return Err(Error::InvalidParameter("empty clique".into()));
            }
            for &v in clique {
                if v >= n {
                    return Err(Error::IndexOutOfRange { index: v, n });
                }
                if std::mem::replace(&mut seen[v], true) {
                    return Err(Error::InvalidParameter(format!("node {v} in two cliques")));
                }
            }
        }
        Ok(CliquePartition { cliques, n })
    }

    pub fn cliques(&self) -> &[Vec<usize>] {
        &self.cliques
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Index of the clique holding each node.
    pub fn membership(&self) -> Vec<usize> {
        let mut m = vec![0; self.n];
        for (k, clique) in self.cliques.iter().enumerate() {
            for &v in clique {
                m[v] = k;
            }
        }
        m
    }
}

pub fn build_ring(n: usize) -> Result<Topology> {
    if n < 3 {
        return Err(Error::InvalidSize(format!("ring needs n >= 3, got {n}")));
    }
    Topology::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)))
}

/// Path graph `0 - 1 - ... - (n-1)`.
pub fn build_path(n: usize) -> Result<Topology> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("path needs n >= 2, got {n}")));
    }
    Topology::from_edges(n, (0..n - 1).map(|i| (i, i + 1)))
}

/// Row-major 2D grid with wraparound in both directions.
pub fn build_torus(rows: usize, cols: usize) -> Result<Topology> {
    if rows < 3 || cols < 3 {
        return Err(Error::InvalidSize(format!(
            "torus needs rows, cols >= 3, got {rows}x{cols}"
        )));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::with_capacity(2 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            edges.push((id(r, c), id(r, (c + 1) % cols)));
            edges.push((id(r, c), id((r + 1) % rows, c)));
        }
    }
    Topology::from_edges(rows * cols, edges)
}

pub fn build_complete(n: usize) -> Result<Topology> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("complete graph needs n >= 2, got {n}")));
    }
    Topology::from_edges(n, complete_edges(n))
}

fn complete_edges(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Thins a complete graph by removing edges in a seeded random order, skipping any
/// removal that would disconnect the graph, until `⌈keep_fraction·n(n−1)/2⌉` edges
/// remain or the shuffled pass is exhausted.
pub fn build_random_connected(n: usize, keep_fraction: f64, seed: u64) -> Result<Topology> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "keep_fraction must be in (0, 1], got {keep_fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidSize(format!("random graph needs n >= 2, got {n}")));
    }
    let total = n * (n - 1) / 2;
    let target = (keep_fraction * total as f64).ceil() as usize;
    let mut order: Vec<(usize, usize)> = complete_edges(n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut adj: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).collect())
        .collect();
    let mut count = total;
    for &(i, j) in &order {
        if count <= target {
            break;
        }
        adj[i].retain(|&v| v != j);
        adj[j].retain(|&v| v != i);
        if bfs_count(n, &adj) == n {
            count -= 1;
        } else {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    let set: BTreeSet<(usize, usize)> = adj
        .iter()
        .enumerate()
        .flat_map(|(i, list)| list.iter().filter(move |&&j| i < j).map(move |&j| (i, j)))
        .collect();
    Ok(Topology::from_canonical(n, set))
}

/// Union of complete subgraphs on each clique plus the given inter-clique edges.
pub fn build_from_cliques(
    partition: &CliquePartition,
    inter_edges: &[(usize, usize)],
) -> Result<Topology> {
    let member = partition.membership();
    let n = partition.n();
    let mut edges = Vec::new();
    for clique in partition.cliques() {
        for (a, &u) in clique.iter().enumerate() {
            for &v in &clique[a + 1..] {
                edges.push((u, v));
            }
        }
    }
    for &(u, v) in inter_edges {
        if u >= n || v >= n {
            return Err(Error::IndexOutOfRange { index: u.max(v), n });
        }
        if member[u] == member[v] {
            return Err(Error::InvalidParameter(format!(
                "inter-clique edge ({u}, {v}) lies inside one clique"
            )));
        }
        edges.push((u, v));
    }
    Topology::from_edges(n, edges)
}
