//! Undirected loop-free graphs over cluster indices: sparsity-pattern
//! projections, graph powers, chordality testing and maximal-clique
//! enumeration.
//!
//! Vertices are 0-based in the API; the JSON form uses 1-based indices.

use crate::error::{Error, Result};
use crate::matfun::SymMatrix;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::{BTreeSet, VecDeque};

/// Undirected loop-free graph with canonically stored edges (i < j).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

/// Which part of a sparsity pattern a projection keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternMode {
    /// `[A]_{G,0}`: keep the diagonal and the entries on the edge set.
    Onto,
    /// `[A]_{G,c}`: keep only the off-diagonal entries outside the edge set.
    Complement,
}

impl Graph {
    /// Builds a graph, normalizing edge orientation and rejecting
    /// self-loops and out-of-range endpoints.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one vertex".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a},{b}) out of range for {n} vertices"
                )));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self { n, edges: set })
    }

    pub fn empty(n: usize) -> Self {
        Self { n, edges: BTreeSet::new() }
    }

    pub fn complete(n: usize) -> Self {
        let mut edges = BTreeSet::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.insert((i, j));
            }
        }
        Self { n, edges }
    }

    /// Path 0–1–…–(n-1).
    pub fn path(n: usize) -> Self {
        let edges = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        Self { n, edges }
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn is_complete(&self) -> bool {
        self.edges.len() == self.n * (self.n - 1) / 2
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for &(a, b) in &self.edges {
            if a == v {
                out.push(b);
            } else if b == v {
                out.push(a);
            }
        }
        out.sort_unstable();
        out
    }

    fn adjacency(&self) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].insert(b);
            adj[b].insert(a);
        }
        adj
    }

    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.n];
        let mut comps = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(v) = queue.pop_front() {
                comp.push(v);
                for &u in &adj[v] {
                    if !seen[u] {
                        seen[u] = true;
                        queue.push_back(u);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }
}

/// Graph power: connects every pair within graph distance `h`.
///
/// `h = 0` yields the empty edge set, `h = 1` returns the graph unchanged,
/// and `h` at or above the diameter yields the complete graph on each
/// connected component.
pub fn graph_power(g: &Graph, h: usize) -> Graph {
    let n = g.n_vertices();
    let mut edges = BTreeSet::new();
    if h == 0 {
        return Graph { n, edges };
    }
    let adj = g.adjacency();
    for start in 0..n {
        // BFS truncated at depth h.
        let mut dist = vec![usize::MAX; n];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            if dist[v] == h {
                continue;
            }
            for &u in &adj[v] {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        for v in start + 1..n {
            if dist[v] != usize::MAX && dist[v] <= h {
                edges.insert((start, v));
            }
        }
    }
    Graph { n, edges }
}

/// Projects a symmetric matrix onto a sparsity pattern or its complement.
pub fn project_pattern(a: &SymMatrix, g: &Graph, mode: PatternMode) -> Result<SymMatrix> {
    if a.dim() != g.n_vertices() {
        return Err(Error::DimensionMismatch(format!(
            "matrix dim {} vs graph on {} vertices",
            a.dim(),
            g.n_vertices()
        )));
    }
    let n = a.dim();
    let mut out = SymMatrix::zeros(n);
    match mode {
        PatternMode::Onto => {
            for i in 0..n {
                out.set(i, i, a.get(i, i));
            }
            for (i, j) in g.edges() {
                out.set(i, j, a.get(i, j));
            }
        }
        PatternMode::Complement => {
            for i in 0..n {
                for j in 0..i {
                    if !g.has_edge(i, j) {
                        out.set(i, j, a.get(i, j));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Maximum cardinality search. Returns the visit order; its reverse is a
/// perfect elimination ordering iff the graph is chordal.
fn mcs_order(adj: &[BTreeSet<usize>], vertices: &[usize]) -> Vec<usize> {
    let n = adj.len();
    let mut in_order = vec![false; n];
    let mut active = vec![false; n];
    let mut cardinality = vec![0usize; n];
    for &v in vertices {
        active[v] = true;
    }
    let mut order = Vec::with_capacity(vertices.len());
    for _ in 0..vertices.len() {
        let v = vertices
            .iter()
            .copied()
            .filter(|&u| !in_order[u])
            .max_by(|&a, &b| cardinality[a].cmp(&cardinality[b]).then(b.cmp(&a)))
            .unwrap();
        order.push(v);
        in_order[v] = true;
        for &u in &adj[v] {
            if active[u] && !in_order[u] {
                cardinality[u] += 1;
            }
        }
    }
    order
}

/// Checks that a reversed MCS order is a perfect elimination ordering.
fn is_peo(adj: &[BTreeSet<usize>], elimination: &[usize]) -> bool {
    let n = adj.len();
    let mut position = vec![usize::MAX; n];
    for (pos, &v) in elimination.iter().enumerate() {
        position[v] = pos;
    }
    for (pos, &v) in elimination.iter().enumerate() {
        let later: Vec<usize> =
            adj[v].iter().copied().filter(|&u| position[u] != usize::MAX && position[u] > pos).collect();
        for (ai, &a) in later.iter().enumerate() {
            for &b in &later[ai + 1..] {
                if !adj[a].contains(&b) {
                    return false;
                }
            }
        }
    }
    true
}

/// Minimum-degree elimination fill-in, used to complete non-chordal graphs.
fn min_degree_fill(adj: &mut Vec<BTreeSet<usize>>, vertices: &[usize]) {
    let mut work = adj.clone();
    let mut eliminated = vec![false; adj.len()];
    let in_comp: BTreeSet<usize> = vertices.iter().copied().collect();
    for _ in 0..vertices.len() {
        let v = vertices
            .iter()
            .copied()
            .filter(|&u| !eliminated[u])
            .min_by_key(|&u| (work[u].len(), u))
            .unwrap();
        eliminated[v] = true;
        let nbrs: Vec<usize> =
            work[v].iter().copied().filter(|&u| !eliminated[u] && in_comp.contains(&u)).collect();
        for (ai, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[ai + 1..] {
                if !work[a].contains(&b) {
                    work[a].insert(b);
                    work[b].insert(a);
                    adj[a].insert(b);
                    adj[b].insert(a);
                }
            }
        }
        for &u in &nbrs {
            work[u].remove(&v);
        }
        work[v].clear();
    }
}

/// Maximal cliques from a perfect elimination ordering, Tarjan–Yannakakis
/// style, followed by a subset filter for robustness.
fn cliques_from_peo(adj: &[BTreeSet<usize>], elimination: &[usize]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut position = vec![usize::MAX; n];
    for (pos, &v) in elimination.iter().enumerate() {
        position[v] = pos;
    }
    let mut candidates: Vec<BTreeSet<usize>> = Vec::new();
    for (pos, &v) in elimination.iter().enumerate() {
        let mut c: BTreeSet<usize> = adj[v]
            .iter()
            .copied()
            .filter(|&u| position[u] != usize::MAX && position[u] > pos)
            .collect();
        c.insert(v);
        candidates.push(c);
    }
    let mut maximal: Vec<BTreeSet<usize>> = Vec::new();
    'outer: for c in candidates {
        for other in &maximal {
            if c.is_subset(other) {
                continue 'outer;
            }
        }
        maximal.retain(|other| !other.is_subset(&c));
        maximal.push(c);
    }
    let mut out: Vec<Vec<usize>> = maximal.into_iter().map(|c| c.into_iter().collect()).collect();
    out.sort();
    out
}

/// Chordality test and maximal-clique enumeration.
///
/// Non-chordal graphs are chordally completed with a minimum-degree
/// elimination heuristic first; `is_chordal` then reports `false` while the
/// cliques come from the completion. Disconnected graphs are handled per
/// connected component and the clique lists concatenated.
pub fn maximal_cliques(g: &Graph) -> (bool, Vec<Vec<usize>>) {
    let mut adj = g.adjacency();
    let mut chordal = true;
    let mut cliques = Vec::new();
    for comp in g.connected_components() {
        let order = mcs_order(&adj, &comp);
        let elimination: Vec<usize> = order.iter().rev().copied().collect();
        if is_peo(&adj, &elimination) {
            cliques.extend(cliques_from_peo(&adj, &elimination));
        } else {
            chordal = false;
            min_degree_fill(&mut adj, &comp);
            let order = mcs_order(&adj, &comp);
            let elimination: Vec<usize> = order.iter().rev().copied().collect();
            debug_assert!(is_peo(&adj, &elimination));
            cliques.extend(cliques_from_peo(&adj, &elimination));
        }
    }
    cliques.sort();
    cliques.dedup();
    (chordal, cliques)
}

/// The chordal graph whose edges are the union of the given cliques.
pub fn graph_from_cliques(n: usize, cliques: &[Vec<usize>]) -> Graph {
    let mut edges = BTreeSet::new();
    for c in cliques {
        for (ai, &a) in c.iter().enumerate() {
            for &b in &c[ai + 1..] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
    }
    Graph { n, edges }
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl Serialize for Graph {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        // 1-based vertex indices on the wire.
        let edges = self.edges.iter().map(|&(a, b)| [a + 1, b + 1]).collect();
        GraphJson { n: self.n, edges }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Graph {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = GraphJson::deserialize(deserializer)?;
        for &[a, b] in &raw.edges {
            if a == 0 || b == 0 {
                return Err(D::Error::custom("graph JSON uses 1-based vertex indices"));
            }
        }
        Graph::new(raw.n, raw.edges.iter().map(|&[a, b]| (a - 1, b - 1)))
            .map_err(D::Error::custom)
    }
}
