use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected simple graph on nodes `0..p`, stored as a dense symmetric
/// adjacency matrix.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    p: usize,
    adj: Vec<bool>,
    n_edges: usize,
}

impl Graph {
    pub fn empty(p: usize) -> Self {
        Graph { p, adj: vec![false; p * p], n_edges: 0 }
    }

    pub fn complete(p: usize) -> Self {
        let mut g = Graph::empty(p);
        for i in 0..p {
            for j in (i + 1)..p {
                g.add_edge(i, j);
            }
        }
        g
    }

    /// Builds a graph from 0-based pairs. Self-loops and out-of-range nodes
    /// are rejected; duplicates are rejected too.
    pub fn from_edges(p: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Graph::empty(p);
        for &(i, j) in edges {
            if i == j {
                return Err(Error::input(format!("self-loop at node {}", i + 1)));
            }
            if i >= p || j >= p {
                return Err(Error::input(format!("edge ({}, {}) outside 1..={p}", i + 1, j + 1)));
            }
            if g.has_edge(i, j) {
                return Err(Error::input(format!("duplicate edge ({}, {})", i + 1, j + 1)));
            }
            g.add_edge(i, j);
        }
        Ok(g)
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    #[inline]
    pub fn max_edges(&self) -> usize {
        self.p * self.p.saturating_sub(1) / 2
    }

    pub fn is_complete(&self) -> bool {
        self.n_edges == self.max_edges()
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.p + j]
    }

    /// Sets the edge state; returns whether anything changed.
    pub fn set_edge(&mut self, i: usize, j: usize, present: bool) -> bool {
        debug_assert!(i != j);
        if self.has_edge(i, j) == present {
            return false;
        }
        self.adj[i * self.p + j] = present;
        self.adj[j * self.p + i] = present;
        if present {
            self.n_edges += 1;
        } else {
            self.n_edges -= 1;
        }
        true
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> bool {
        self.set_edge(i, j, true)
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) -> bool {
        self.set_edge(i, j, false)
    }

    pub fn toggle(&mut self, i: usize, j: usize) {
        let present = self.has_edge(i, j);
        self.set_edge(i, j, !present);
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let row = &self.adj[i * self.p..(i + 1) * self.p];
        row.iter().enumerate().filter_map(|(j, &e)| e.then_some(j))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i * self.p..(i + 1) * self.p].iter().filter(|&&e| e).count()
    }

    /// Edges as 0-based pairs with i < j, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_edges);
        for i in 0..self.p {
            for j in (i + 1)..self.p {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Disjoint union: nodes of `other` are appended after ours.
    pub fn disjoint_union(&self, other: &Graph) -> Graph {
        let mut g = Graph::empty(self.p + other.p);
        for (i, j) in self.edges() {
            g.add_edge(i, j);
        }
        for (i, j) in other.edges() {
            g.add_edge(i + self.p, j + self.p);
        }
        g
    }

    /// Packed upper-triangle bits, used as a cache key.
    pub fn key(&self) -> Vec<u64> {
        let mut words = vec![0u64; self.max_edges().div_ceil(64).max(1)];
        let mut bit = 0usize;
        for i in 0..self.p {
            for j in (i + 1)..self.p {
                if self.has_edge(i, j) {
                    words[bit / 64] |= 1 << (bit % 64);
                }
                bit += 1;
            }
        }
        words
    }
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph").field("p", &self.p).field("edges", &self.edges()).finish()
    }
}

/// Serialized form: node count and 1-based edge list.
#[derive(Serialize, Deserialize)]
struct GraphRepr {
    p: usize,
    edges: Vec<[usize; 2]>,
}

impl Serialize for Graph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GraphRepr { p: self.p, edges: self.edges().into_iter().map(|(i, j)| [i + 1, j + 1]).collect() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Graph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = GraphRepr::deserialize(d)?;
        let mut pairs = Vec::with_capacity(repr.edges.len());
        for [i, j] in repr.edges {
            if i == 0 || j == 0 {
                return Err(serde::de::Error::custom("edge labels are 1-based"));
            }
            pairs.push((i.min(j) - 1, i.max(j) - 1));
        }
        Graph::from_edges(repr.p, &pairs).map_err(serde::de::Error::custom)
    }
}
