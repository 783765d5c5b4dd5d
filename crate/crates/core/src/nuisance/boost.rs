//! Histogram gradient boosting with shallow trees, for squared error and
//! logistic loss. Leaves take a regularized Newton step `-G / (H + λ)`.

use ndarray::ArrayView2;

use super::learners::{expit, Model, P_EPS};

const MAX_BINS: usize = 255;
const L2: f64 = 1.0;
const MIN_LEAF: usize = 5;
const MIN_HESSIAN: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub(crate) enum Loss {
    Squared,
    Logistic,
}

#[derive(Debug, Clone)]
pub(crate) struct BoostParams {
    rounds: usize,
    learning_rate: f64,
    max_depth: usize,
}

impl BoostParams {
    pub(crate) fn new(rounds: usize, learning_rate: f64, max_depth: usize) -> Self {
        Self {
            rounds,
            learning_rate,
            max_depth,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }
}

pub(crate) struct Boosted {
    base: f64,
    /// Optional starting model whose raw score replaces the constant start.
    init: Option<Box<dyn Model>>,
    trees: Vec<Tree>,
    loss: Loss,
}

fn raw_score(loss: Loss, v: f64) -> f64 {
    match loss {
        Loss::Squared => v,
        Loss::Logistic => {
            let p = v.clamp(P_EPS, 1.0 - P_EPS);
            (p / (1.0 - p)).ln()
        }
    }
}

impl Model for Boosted {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let start: Vec<f64> = match &self.init {
            Some(m) => m
                .predict(x)
                .into_iter()
                .map(|v| raw_score(self.loss, v))
                .collect(),
            None => vec![self.base; x.nrows()],
        };
        let mut buf = vec![0.0; x.ncols()];
        x.outer_iter()
            .zip(start)
            .map(|(row, f0)| {
                for (b, v) in buf.iter_mut().zip(row.iter()) {
                    *b = *v;
                }
                let f = f0 + self.trees.iter().map(|t| t.predict_row(&buf)).sum::<f64>();
                match self.loss {
                    Loss::Squared => f,
                    Loss::Logistic => expit(f),
                }
            })
            .collect()
    }
}

/// Quantile cut points for one feature; value `x` goes to bin
/// `#{cuts < x}`, so splitting after bin `t` means `x <= cuts[t]`.
fn cut_points(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut cuts: Vec<f64> = (1..MAX_BINS)
        .map(|q| sorted[(q * n / MAX_BINS).min(n - 1)])
        .collect();
    cuts.dedup();
    // The largest value never needs a cut above it.
    if cuts.last() == sorted.last() {
        cuts.pop();
    }
    cuts
}

struct Binned {
    bins: Vec<Vec<u8>>,
    cuts: Vec<Vec<f64>>,
}

impl Binned {
    fn new(x: ArrayView2<'_, f64>) -> Self {
        let mut bins = Vec::with_capacity(x.ncols());
        let mut cuts = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let values: Vec<f64> = col.to_vec();
            let c = cut_points(&values);
            bins.push(
                values
                    .iter()
                    .map(|v| c.partition_point(|cut| cut < v) as u8)
                    .collect(),
            );
            cuts.push(c);
        }
        Self { bins, cuts }
    }
}

struct Grower<'a> {
    data: &'a Binned,
    grad: &'a [f64],
    hess: &'a [f64],
    max_depth: usize,
    nodes: Vec<Node>,
    // (row indices, leaf value) for each finished leaf.
    leaves: Vec<(Vec<usize>, f64)>,
}

impl Grower<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(0.0));
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &i| {
            (g + self.grad[i], h + self.hess[i])
        });
        let split = if depth < self.max_depth && rows.len() >= 2 * MIN_LEAF {
            self.best_split(&rows, g, h)
        } else {
            None
        };
        match split {
            None => {
                let value = -g / (h + L2);
                self.nodes[id] = Node::Leaf(value);
                self.leaves.push((rows, value));
            }
            Some((feature, bin)) => {
                let col = &self.data.bins[feature];
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.into_iter().partition(|&i| col[i] as usize <= bin);
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                self.nodes[id] = Node::Split {
                    feature,
                    threshold: self.data.cuts[feature][bin],
                    left,
                    right,
                };
            }
        }
        id
    }

    fn best_split(&self, rows: &[usize], g: f64, h: f64) -> Option<(usize, usize)> {
        let parent = g * g / (h + L2);
        let mut best: Option<(f64, usize, usize)> = None;
        for (f, col) in self.data.bins.iter().enumerate() {
            let nb = self.data.cuts[f].len() + 1;
            if nb < 2 {
                continue;
            }
            let mut hg = vec![0.0; nb];
            let mut hh = vec![0.0; nb];
            let mut hc = vec![0usize; nb];
            for &i in rows {
                let b = col[i] as usize;
                hg[b] += self.grad[i];
                hh[b] += self.hess[i];
                hc[b] += 1;
            }
            let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
            for t in 0..nb - 1 {
                gl += hg[t];
                hl += hh[t];
                cl += hc[t];
                let cr = rows.len() - cl;
                if cl < MIN_LEAF {
                    continue;
                }
                if cr < MIN_LEAF {
                    break;
                }
                let (gr, hr) = (g - gl, h - hl);
                if hl < MIN_HESSIAN || hr < MIN_HESSIAN {
                    continue;
                }
                let gain = gl * gl / (hl + L2) + gr * gr / (hr + L2) - parent;
                if gain > 1e-12 && best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, f, t));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Boosts from the constant that best fits `y`, or from the raw score of
/// `init` when given.
pub(crate) fn fit(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    params: &BoostParams,
    loss: Loss,
    init: Option<Box<dyn Model>>,
) -> Boosted {
    let n = y.len();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let base = raw_score(loss, ybar);
    let data = Binned::new(x);
    let mut f = match &init {
        Some(m) => m
            .predict(x)
            .into_iter()
            .map(|v| raw_score(loss, v))
            .collect(),
        None => vec![base; n],
    };
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.rounds);
    for _ in 0..params.rounds {
        for i in 0..n {
            match loss {
                Loss::Squared => {
                    grad[i] = f[i] - y[i];
                    hess[i] = 1.0;
                }
                Loss::Logistic => {
                    let p = expit(f[i]);
                    grad[i] = p - y[i];
                    hess[i] = p * (1.0 - p);
                }
            }
        }
        let mut grower = Grower {
            data: &data,
            grad: &grad,
            hess: &hess,
            max_depth: params.max_depth,
            nodes: Vec::new(),
            leaves: Vec::new(),
        };
        grower.grow((0..n).collect(), 0);
        let Grower {
            mut nodes, leaves, ..
        } = grower;
        for node in &mut nodes {
            if let Node::Leaf(v) = node {
                *v *= params.learning_rate;
            }
        }
        for (rows, value) in leaves {
            let step = value * params.learning_rate;
            for i in rows {
                f[i] += step;
            }
        }
        trees.push(Tree { nodes });
    }
    Boosted {
        base,
        init,
        trees,
        loss,
    }
}
