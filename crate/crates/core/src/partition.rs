//! Partitions of the node set and the label bookkeeping shared by the
//! Gibbs samplers.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set partition of `0..p`, stored as canonical labels `0..K` in order of
/// first appearance. Two `Partition`s compare equal iff they are the same
/// set partition.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    labels: Vec<usize>,
    n_blocks: usize,
}

impl Partition {
    /// Canonicalizes arbitrary labels (any integers, e.g. 1-based).
    pub fn new(labels: &[usize]) -> Self {
        let mut map: Vec<(usize, usize)> = Vec::new();
        let mut out = Vec::with_capacity(labels.len());
        for &l in labels {
            let idx = match map.iter().find(|(from, _)| *from == l) {
                Some(&(_, to)) => to,
                None => {
                    let to = map.len();
                    map.push((l, to));
                    to
                }
            };
            out.push(idx);
        }
        Partition { labels: out, n_blocks: map.len() }
    }

    pub fn single_block(p: usize) -> Self {
        Partition { labels: vec![0; p], n_blocks: usize::from(p > 0) }
    }

    pub fn singletons(p: usize) -> Self {
        Partition { labels: (0..p).collect(), n_blocks: p }
    }

    /// Parses `"single"`, `"singletons"` or a comma-separated label list.
    pub fn parse(spec: &str, p: usize) -> Result<Self> {
        match spec.trim() {
            "single" => Ok(Partition::single_block(p)),
            "singletons" => Ok(Partition::singletons(p)),
            list => {
                let labels = list
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::input(format!("bad partition label list {list:?}: {e}")))?;
                if labels.len() != p {
                    return Err(Error::input(format!("partition has {} labels, expected {p}", labels.len())));
                }
                Ok(Partition::new(&labels))
            }
        }
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    /// Canonical 0-based labels.
    #[inline]
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Labels in the external 1..K convention.
    pub fn one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l + 1).collect()
    }

    #[inline]
    pub fn same_block(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_blocks];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Number of unordered pairs sharing a block.
    pub fn within_pairs(&self) -> usize {
        self.sizes().iter().map(|&s| s * s.saturating_sub(1) / 2).sum()
    }

    /// Restriction to a subset of nodes (re-canonicalized).
    pub fn restrict(&self, nodes: &[usize]) -> Partition {
        let labels: Vec<usize> = nodes.iter().map(|&i| self.labels[i]).collect();
        Partition::new(&labels)
    }
}

impl fmt::Debug for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Partition{:?}", self.one_based())
    }
}

/// Comma-separated 1-based labels, the form accepted by [`Partition::parse`].
impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.one_based().iter().map(usize::to_string).collect();
        f.write_str(&labels.join(","))
    }
}

impl Serialize for Partition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let labels = Vec::<usize>::deserialize(d)?;
        Ok(Partition::new(&labels))
    }
}

/// All set partitions of `0..p` (Bell(p) of them), as restricted growth
/// strings in lexicographic order.
pub fn set_partitions(p: usize) -> Vec<Partition> {
    let mut out = Vec::new();
    if p == 0 {
        out.push(Partition::new(&[]));
        return out;
    }
    let mut labels = vec![0usize; p];
    fn rec(pos: usize, max_label: usize, labels: &mut Vec<usize>, out: &mut Vec<Partition>) {
        if pos == labels.len() {
            out.push(Partition { labels: labels.clone(), n_blocks: max_label + 1 });
            return;
        }
        for l in 0..=(max_label + 1) {
            labels[pos] = l;
            rec(pos + 1, max_label.max(l), labels, out);
        }
    }
    rec(1, 0, &mut labels, &mut out);
    out
}

/// Table sizes of a Chinese-restaurant seating with contiguous labels.
///
/// Removing the last customer of a table keeps labels contiguous by moving
/// the highest label into the vacated slot; callers apply the returned
/// [`Vacated`] to their own label arrays and per-table parameters.
#[derive(Clone, Debug, Default)]
pub struct Tables {
    sizes: Vec<usize>,
}

/// Result of a removal that emptied a table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Vacated {
    /// The label that became empty.
    pub slot: usize,
    /// The previous highest label, now renamed to `slot` (equal to `slot`
    /// when the emptied table was already the last one).
    pub moved: usize,
}

impl Vacated {
    /// Applies the rename to a label array.
    pub fn relabel(&self, labels: &mut [usize]) {
        if self.moved != self.slot {
            for l in labels.iter_mut() {
                if *l == self.moved {
                    *l = self.slot;
                }
            }
        }
    }

    /// Applies the removal to a per-table parameter vector.
    pub fn apply<T>(&self, params: &mut Vec<T>) {
        params.swap_remove(self.slot);
    }
}

impl Tables {
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a usize>, n_tables: usize) -> Self {
        let mut sizes = vec![0; n_tables];
        for &l in labels {
            sizes[l] += 1;
        }
        debug_assert!(sizes.iter().all(|&s| s > 0), "labels not contiguous");
        Tables { sizes }
    }

    #[inline]
    pub fn n_tables(&self) -> usize {
        self.sizes.len()
    }

    #[inline]
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn add(&mut self, label: usize) {
        if label == self.sizes.len() {
            self.sizes.push(1);
        } else {
            self.sizes[label] += 1;
        }
    }

    pub fn remove(&mut self, label: usize) -> Option<Vacated> {
        self.sizes[label] -= 1;
        if self.sizes[label] > 0 {
            return None;
        }
        let moved = self.sizes.len() - 1;
        self.sizes.swap_remove(label);
        Some(Vacated { slot: label, moved })
    }
}

/// Canonical relabelling map (old label → new label) by order of first
/// appearance in `labels`.
pub fn first_appearance_map<'a>(labels: impl IntoIterator<Item = &'a usize>, n_labels: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; n_labels];
    let mut next = 0;
    for &l in labels {
        if map[l] == usize::MAX {
            map[l] = next;
            next += 1;
        }
    }
    debug_assert_eq!(next, n_labels, "unused label");
    map
}

/// Permutes per-label parameters according to `map` (old → new).
pub fn permute_params<T: Clone>(params: &[T], map: &[usize]) -> Vec<T> {
    let mut out = params.to_vec();
    for (old, &new) in map.iter().enumerate() {
        out[new] = params[old].clone();
    }
    out
}
