//! Random network families: Erdős–Rényi, Watts–Strogatz and the static
//! scale-free model of Goh, Kahng and Kim.
//!
//! All generators are single-threaded and draw from one seeded stream, so a
//! given `(parameters, seed)` always yields the same network.

use std::collections::{BTreeSet, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Default number of edges per node (times two) for the static scale-free model.
pub const DEFAULT_SCALE_FREE_EDGE_MULTIPLIER: f64 = 2.0;

/// Each unordered pair is an edge independently with probability `p`.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Network> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "edge probability {p} outside [0, 1]"
        )));
    }
    let mut edges = Vec::new();
    if p == 1.0 {
        for i in 0..n {
            for j in i + 1..n {
                edges.push((j, i, 1.0));
            }
        }
    } else if p > 0.0 {
        // Geometric skipping over the lower triangle (Batagelj & Brandes).
        let mut rng = rng_from_seed(seed, "erdos_renyi");
        let log_q = (1.0 - p).ln();
        let mut v: usize = 1;
        let mut w: i64 = -1;
        while v < n {
            let r: f64 = rng.random();
            w += 1 + ((1.0 - r).ln() / log_q).floor() as i64;
            while w >= v as i64 && v < n {
                w -= v as i64;
                v += 1;
            }
            if v < n {
                edges.push((v, w as usize, 1.0));
            }
        }
    }
    Network::from_edges(n, edges, false)
}

/// Ring lattice where each node links to its `k` nearest neighbours, then
/// each lattice edge `(i, i + j)` is rewired to a uniformly chosen new endpoint
/// with probability `beta`. Rewiring never creates self-loops or duplicate
/// edges, so the edge count stays `n * k / 2`.
pub fn watts_strogatz(n: usize, k: usize, beta: f64, seed: u64) -> Result<Network> {
    if !k.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("K = {k} must be even")));
    }
    if k >= n {
        return Err(Error::InvalidParameter(format!(
            "K = {k} must be smaller than n = {n}"
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!(
            "rewiring probability {beta} outside [0, 1]"
        )));
    }
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for i in 0..n {
        for j in 1..=k / 2 {
            let t = (i + j) % n;
            adj[i].insert(t);
            adj[t].insert(i);
        }
    }
    let mut rng = rng_from_seed(seed, "watts_strogatz");
    for j in 1..=k / 2 {
        for u in 0..n {
            let v = (u + j) % n;
            if rng.random::<f64>() >= beta || !adj[u].contains(&v) {
                continue;
            }
            if adj[u].len() >= n - 1 {
                continue;
            }
            let mut w = rng.random_range(0..n);
            while w == u || adj[u].contains(&w) {
                w = rng.random_range(0..n);
            }
            adj[u].remove(&v);
            adj[v].remove(&u);
            adj[u].insert(w);
            adj[w].insert(u);
        }
    }
    let edges = adj.iter().enumerate().flat_map(|(i, row)| {
        row.iter()
            .filter(move |&&j| i < j)
            .map(move |&j| (i, j, 1.0))
    });
    Network::from_edges(n, edges.collect::<Vec<_>>(), false)
}

/// Static scale-free network with degree exponent `lambda` and the default
/// edge multiplier (mean degree 2).
pub fn scale_free(n: usize, lambda: f64, seed: u64) -> Result<Network> {
    scale_free_with(n, lambda, DEFAULT_SCALE_FREE_EDGE_MULTIPLIER, seed)
}

/// Static scale-free model: node `i` (1-based) carries fitness `i^(-1/(lambda-1))`,
/// and `m * n / 2` edges are drawn by picking both endpoints proportionally to
/// fitness, rejecting self-loops and duplicates.
///
/// The target edge count is capped at `n(n-1)/2`. Sampling gives up after
/// `100 * target + 10_000` rejected draws, which only matters for targets
/// close to the complete graph.
pub fn scale_free_with(n: usize, lambda: f64, m: f64, seed: u64) -> Result<Network> {
    if lambda.is_nan() || lambda <= 2.0 {
        return Err(Error::InvalidParameter(format!(
            "scale-free exponent {lambda} must exceed 2"
        )));
    }
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "scale-free model needs n >= 3, got {n}"
        )));
    }
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "edge multiplier {m} must be positive"
        )));
    }
    let alpha = 1.0 / (lambda - 1.0);
    let mut cumulative = Vec::with_capacity(n);
    let mut total = 0.0;
    for i in 1..=n {
        total += (i as f64).powf(-alpha);
        cumulative.push(total);
    }
    let max_edges = n * (n - 1) / 2;
    let target = ((m * n as f64 / 2.0).round() as usize).min(max_edges);
    let mut rng = rng_from_seed(seed, "scale_free");
    let draw = |rng: &mut crate::rng::StreamRng| {
        let u = rng.random::<f64>() * total;
        cumulative.partition_point(|&c| c <= u).min(n - 1)
    };
    let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(target * 2);
    let mut edges = Vec::with_capacity(target);
    let mut rejected = 0usize;
    let max_rejections = 100 * target + 10_000;
    while edges.len() < target && rejected < max_rejections {
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let key = (a.min(b), a.max(b));
        if a == b || !seen.insert(key) {
            rejected += 1;
            continue;
        }
        edges.push((key.0, key.1, 1.0));
    }
    Network::from_edges(n, edges, false)
}

/// Serializable description of a network family; `n` and the seed are supplied
/// when the network is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkKind {
    /// Erdős–Rényi with `p = mean_degree / n`.
    ErdosRenyi {
        #[serde(default = "default_er_mean_degree")]
        mean_degree: f64,
    },
    WattsStrogatz {
        #[serde(default = "default_ws_k")]
        k: usize,
        #[serde(default = "default_ws_beta")]
        beta: f64,
    },
    ScaleFree {
        #[serde(default = "default_sf_lambda")]
        lambda: f64,
        #[serde(default = "default_sf_m")]
        m: f64,
    },
    Edgeless,
}

fn default_er_mean_degree() -> f64 {
    3.0
}
fn default_ws_k() -> usize {
    6
}
fn default_ws_beta() -> f64 {
    0.5
}
fn default_sf_lambda() -> f64 {
    3.5
}
fn default_sf_m() -> f64 {
    DEFAULT_SCALE_FREE_EDGE_MULTIPLIER
}

impl NetworkKind {
    pub fn build(&self, n: usize, seed: u64) -> Result<Network> {
        match *self {
            NetworkKind::ErdosRenyi { mean_degree } => {
                erdos_renyi(n, (mean_degree / n as f64).min(1.0), seed)
            }
            NetworkKind::WattsStrogatz { k, beta } => watts_strogatz(n, k, beta, seed),
            NetworkKind::ScaleFree { lambda, m } => scale_free_with(n, lambda, m, seed),
            NetworkKind::Edgeless => Ok(Network::edgeless(n)),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            NetworkKind::ErdosRenyi { .. } => "erdos_renyi",
            NetworkKind::WattsStrogatz { .. } => "watts_strogatz",
            NetworkKind::ScaleFree { .. } => "scale_free",
            NetworkKind::Edgeless => "edgeless",
        }
    }
}
