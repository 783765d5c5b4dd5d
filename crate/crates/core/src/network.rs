//! The fixed interference network and the dependency structure it induces.
//!
//! A [`Network`] stores, for every unit `i`, the sorted list of units whose
//! exposures enter `i`'s summary (its friends `F_i`) together with edge weights.
//! Undirected networks store each edge in both rows. Networks are immutable once
//! built.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod generate;

pub use generate::{
    erdos_renyi, scale_free, scale_free_with, watts_strogatz, NetworkKind,
    DEFAULT_SCALE_FREE_EDGE_MULTIPLIER,
};

/// One entry of a unit's friend list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub node: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    rows: Vec<Vec<Neighbor>>,
    // For directed networks, reverse[j] lists the units whose friend list contains j.
    reverse: Option<Vec<Vec<usize>>>,
    directed: bool,
}

impl Network {
    /// A network with `n` nodes and no edges.
    pub fn edgeless(n: usize) -> Self {
        Self {
            rows: vec![Vec::new(); n],
            reverse: None,
            directed: false,
        }
    }

    /// Builds a network from `(src, dst, weight)` triples.
    ///
    /// Undirected edges are listed once and stored symmetrically. Self-loops,
    /// repeated edges, out-of-range endpoints and non-positive or non-finite
    /// weights are rejected.
    pub fn from_edges<I>(n: usize, edges: I, directed: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for (src, dst, weight) in edges {
            if src >= n || dst >= n {
                return Err(Error::InvalidNetwork(format!(
                    "edge ({src}, {dst}) references a node outside 0..{n}"
                )));
            }
            if src == dst {
                return Err(Error::InvalidNetwork(format!("self-loop at node {src}")));
            }
            if !weight.is_finite() || weight <= 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "edge ({src}, {dst}) has weight {weight}; weights must be finite and positive"
                )));
            }
            if rows[src].insert(dst, weight).is_some() {
                return Err(Error::InvalidNetwork(format!(
                    "edge ({src}, {dst}) listed more than once"
                )));
            }
            if !directed && rows[dst].insert(src, weight).is_some() {
                return Err(Error::InvalidNetwork(format!(
                    "edge ({src}, {dst}) listed more than once"
                )));
            }
        }
        let rows: Vec<Vec<Neighbor>> = rows
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|(node, weight)| Neighbor { node, weight })
                    .collect()
            })
            .collect();
        let reverse = directed.then(|| {
            let mut reverse = vec![Vec::new(); n];
            for (i, row) in rows.iter().enumerate() {
                for nb in row {
                    reverse[nb.node].push(i);
                }
            }
            reverse
        });
        Ok(Self {
            rows,
            reverse,
            directed,
        })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Friends of `i` with their weights, sorted by node index.
    ///
    /// Panics if `i` is out of range; use [`Network::degree`] for a checked
    /// lookup.
    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.rows[i]
    }

    /// `|F_i|`, the number of friends of node `i`.
    pub fn degree(&self, i: usize) -> Result<usize> {
        self.rows.get(i).map(Vec::len).ok_or(Error::NodeOutOfRange {
            index: i,
            n: self.n(),
        })
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.rows.iter().map(Vec::len).collect()
    }

    /// Maximum degree; 0 for an edgeless (or empty) network.
    pub fn k_max(&self) -> usize {
        self.rows.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        self.rows.iter().map(Vec::len).sum::<usize>() as f64 / self.n() as f64
    }

    /// Number of edges: unordered pairs for undirected networks, arcs otherwise.
    pub fn edge_count(&self) -> usize {
        let stored: usize = self.rows.iter().map(Vec::len).sum();
        if self.directed {
            stored
        } else {
            stored / 2
        }
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let row = self.rows.get(i)?;
        row.binary_search_by_key(&j, |nb| nb.node)
            .ok()
            .map(|pos| row[pos].weight)
    }

    /// Edges as `(src, dst, weight)`; undirected edges appear once with `src < dst`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(move |(i, row)| {
            row.iter()
                .filter(move |nb| self.directed || i < nb.node)
                .map(move |nb| (i, nb.node, nb.weight))
        })
    }

    /// Units that list `j` among their friends.
    fn dependents(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        let (undirected, directed) = match &self.reverse {
            Some(reverse) => (None, Some(reverse[j].iter().copied())),
            None => (Some(self.rows[j].iter().map(|nb| nb.node)), None),
        };
        undirected
            .into_iter()
            .flatten()
            .chain(directed.into_iter().flatten())
    }

    /// The dependency structure `G`.
    ///
    /// Unit `i`'s estimating-function term is a function of the variables of
    /// `{i} ∪ F_i`. Two units are dependent when those sets intersect: they are
    /// the same unit, one is a friend of the other, or they share a friend.
    pub fn dependency(&self) -> DependencyStructure {
        let n = self.n();
        let mut mark = vec![usize::MAX; n];
        let mut closures = Vec::with_capacity(n);
        for i in 0..n {
            let mut closure = Vec::new();
            let sources = std::iter::once(i).chain(self.rows[i].iter().map(|nb| nb.node));
            for u in sources {
                for j in std::iter::once(u).chain(self.dependents(u)) {
                    if mark[j] != i {
                        mark[j] = i;
                        closure.push(j);
                    }
                }
            }
            closure.sort_unstable();
            closures.push(closure);
        }
        DependencyStructure { closures }
    }

    /// Parses the `src,dst[,weight]` edge-list format.
    ///
    /// Blank lines and everything after `#` are ignored. When `n` is `None` the
    /// node count is one more than the largest id seen.
    pub fn parse_edge_list(text: &str, n: Option<usize>, directed: bool) -> Result<Self> {
        let mut edges = Vec::new();
        let mut max_id = None::<usize>;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(Error::InvalidNetwork(format!(
                    "line {}: expected `src,dst[,weight]`, found {:?}",
                    lineno + 1,
                    raw
                )));
            }
            let parse_id = |s: &str| {
                s.parse::<usize>().map_err(|_| {
                    Error::InvalidNetwork(format!(
                        "line {}: {s:?} is not a non-negative integer node id",
                        lineno + 1
                    ))
                })
            };
            let src = parse_id(fields[0])?;
            let dst = parse_id(fields[1])?;
            let weight = match fields.get(2) {
                Some(w) => w.parse::<f64>().map_err(|_| {
                    Error::InvalidNetwork(format!("line {}: bad weight {w:?}", lineno + 1))
                })?,
                None => 1.0,
            };
            max_id = Some(max_id.map_or(src.max(dst), |m| m.max(src).max(dst)));
            edges.push((src, dst, weight));
        }
        let n = match n {
            Some(n) => n,
            None => max_id.map_or(0, |m| m + 1),
        };
        Self::from_edges(n, edges, directed)
    }

    pub fn read_edge_list(
        path: impl AsRef<Path>,
        n: Option<usize>,
        directed: bool,
    ) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_edge_list(&text, n, directed)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# nodes={}\n", self.n());
        for (src, dst, weight) in self.edges() {
            if weight == 1.0 {
                let _ = writeln!(out, "{src},{dst}");
            } else {
                let _ = writeln!(out, "{src},{dst},{weight}");
            }
        }
        out
    }

    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }
}

/// The pairs `(i, j)` with `G(i, j) = 1`, stored per node as a sorted closure
/// that always contains the node itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyStructure {
    closures: Vec<Vec<usize>>,
}

impl DependencyStructure {
    /// The diagonal-only structure of `n` independent units.
    pub fn independent(n: usize) -> Self {
        Self {
            closures: (0..n).map(|i| vec![i]).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.closures.len()
    }

    pub fn dependent_on(&self, i: usize) -> &[usize] {
        &self.closures[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.closures
            .get(i)
            .is_some_and(|c| c.binary_search(&j).is_ok())
    }

    /// Number of ordered pairs with `G(i, j) = 1`, diagonal included.
    pub fn pair_count(&self) -> usize {
        self.closures.iter().map(Vec::len).sum()
    }
}
