//! Similarity graphs and maximal clique enumeration.

use fixedbitset::FixedBitSet;

use crate::providers::{check_dimensions, EmbeddingVector};
use crate::Result;

/// Simple undirected graph over `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimilarityGraph {
    adj: Vec<FixedBitSet>,
}

impl SimilarityGraph {
    pub fn new(n: usize) -> Self {
        SimilarityGraph {
            adj: vec![FixedBitSet::with_capacity(n); n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::new(n);
        for &(u, v) in edges {
            g.add_edge(u, v);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    /// Self-loops are ignored.
    pub fn add_edge(&mut self, u: usize, v: usize) {
        if u != v {
            self.adj[u].insert(v);
            self.adj[v].insert(u);
        }
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].contains(v)
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[u].ones()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|a| a.count_ones(..)).sum::<usize>() / 2
    }
}

/// Connects every pair whose cosine similarity is at least `threshold`.
pub fn build_similarity_graph(embeddings: &[EmbeddingVector], threshold: f64) -> Result<SimilarityGraph> {
    check_dimensions(embeddings)?;
    let n = embeddings.len();
    let mut g = SimilarityGraph::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if embeddings[i].cosine(&embeddings[j]) >= threshold {
                g.add_edge(i, j);
            }
        }
    }
    Ok(g)
}

/// All maximal cliques (Bron–Kerbosch with Tomita pivoting). Each clique is
/// sorted ascending and the list is sorted lexicographically.
pub fn enumerate_maximal_cliques(graph: &SimilarityGraph) -> Vec<Vec<usize>> {
    let n = graph.len();
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut r = Vec::new();
    let mut all = FixedBitSet::with_capacity(n);
    all.insert_range(..);
    expand(graph, &mut r, all, FixedBitSet::with_capacity(n), &mut out);
    for c in &mut out {
        c.sort_unstable();
    }
    out.sort();
    out
}

fn expand(g: &SimilarityGraph, r: &mut Vec<usize>, mut p: FixedBitSet, mut x: FixedBitSet, out: &mut Vec<Vec<usize>>) {
    if p.is_clear() {
        if x.is_clear() {
            out.push(r.clone());
        }
        return;
    }
    let pivot = p
        .union(&x)
        .max_by_key(|&u| (p.intersection_count(&g.adj[u]), std::cmp::Reverse(u)))
        .expect("P is non-empty");
    let candidates: Vec<usize> = p.difference(&g.adj[pivot]).collect();
    for v in candidates {
        r.push(v);
        expand(g, r, &p & &g.adj[v], &x & &g.adj[v], out);
        r.pop();
        p.set(v, false);
        x.insert(v);
    }
}

/// Keeps cliques of at least `min_size` vertices and makes them disjoint.
///
/// Cliques are visited largest first (ties in lexicographic order); each
/// vertex stays with the first clique that claims it. A clique left with
/// fewer than `min_size` unclaimed vertices is dropped. The result is in
/// visiting order.
pub fn filter_cliques(cliques: &[Vec<usize>], min_size: usize) -> Vec<Vec<usize>> {
    let mut kept: Vec<&Vec<usize>> = cliques.iter().filter(|c| c.len() >= min_size).collect();
    kept.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    let mut claimed = std::collections::HashSet::new();
    let mut out = Vec::new();
    for c in kept {
        let free: Vec<usize> = c.iter().copied().filter(|v| !claimed.contains(v)).collect();
        if free.len() >= min_size {
            claimed.extend(free.iter().copied());
            out.push(free);
        }
    }
    out
}
