//! Candidate learners for the outcome regression and the natural-vs-shifted
//! classifier. Every learner kind has a regression and a classification form.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::boost::{self, BoostParams, Loss};
use crate::error::{Error, Result};

/// Probability bounds used for log-loss and for odds.
pub(crate) const P_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    /// Constant prediction (intercept-only logistic for classification).
    MeanOnly,
    /// Least squares (unpenalized logistic regression for classification).
    Linear,
    Ridge {
        lambda: f64,
    },
    Knn {
        k: usize,
    },
    BoostedStumps {
        rounds: usize,
        learning_rate: f64,
        max_depth: usize,
        /// Start boosting from a linear (logistic) fit instead of a constant.
        #[serde(default)]
        linear_start: bool,
    },
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerSpec::MeanOnly => write!(f, "mean_only"),
            LearnerSpec::Linear => write!(f, "linear"),
            LearnerSpec::Ridge { lambda } => write!(f, "ridge({lambda})"),
            LearnerSpec::Knn { k } => write!(f, "knn({k})"),
            LearnerSpec::BoostedStumps {
                rounds,
                learning_rate,
                max_depth,
                linear_start,
            } => {
                let start = if *linear_start { ",linear" } else { "" };
                write!(f, "boosted({rounds},{learning_rate},{max_depth}{start})")
            }
        }
    }
}

impl LearnerSpec {
    pub fn boosted(rounds: usize, learning_rate: f64, max_depth: usize) -> Self {
        LearnerSpec::BoostedStumps {
            rounds,
            learning_rate,
            max_depth,
            linear_start: false,
        }
    }

    /// Boosting on top of a linear fit.
    pub fn boosted_linear(rounds: usize, learning_rate: f64, max_depth: usize) -> Self {
        LearnerSpec::BoostedStumps {
            rounds,
            learning_rate,
            max_depth,
            linear_start: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidLearner(msg));
        match *self {
            LearnerSpec::Ridge { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => {
                bad(format!("ridge lambda must be >= 0, got {lambda}"))
            }
            LearnerSpec::Knn { k: 0 } => bad("knn needs k >= 1".into()),
            LearnerSpec::BoostedStumps {
                rounds,
                learning_rate,
                max_depth,
                ..
            } => {
                if rounds == 0 {
                    bad("boosting needs rounds >= 1".into())
                } else if !(learning_rate > 0.0 && learning_rate <= 1.0) {
                    bad(format!(
                        "learning rate must lie in (0, 1], got {learning_rate}"
                    ))
                } else if max_depth == 0 {
                    bad("boosting needs max_depth >= 1".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Default regression library.
    pub fn default_regression_library() -> Vec<LearnerSpec> {
        vec![
            LearnerSpec::MeanOnly,
            LearnerSpec::Linear,
            LearnerSpec::Ridge { lambda: 1.0 },
            LearnerSpec::Knn { k: 10 },
            LearnerSpec::boosted(200, 0.1, 3),
        ]
    }

    /// Default classification library.
    pub fn default_classification_library() -> Vec<LearnerSpec> {
        vec![
            LearnerSpec::MeanOnly,
            LearnerSpec::Linear,
            LearnerSpec::boosted(200, 0.1, 3),
        ]
    }
}

/// A fitted learner. Classifiers return `P(label = 1 | x)`.
pub trait Model: Send + Sync {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64>;
}

pub fn fit_regressor(
    spec: &LearnerSpec,
    x: ArrayView2<'_, f64>,
    y: &[f64],
) -> Result<Box<dyn Model>> {
    spec.validate()?;
    check_shapes(x, y)?;
    Ok(match *spec {
        LearnerSpec::MeanOnly => Box::new(Constant(mean(y))),
        LearnerSpec::Linear => Box::new(LinearModel::fit(x, y, 0.0)),
        LearnerSpec::Ridge { lambda } => Box::new(LinearModel::fit(x, y, lambda)),
        LearnerSpec::Knn { k } => Box::new(Knn::fit(x, y, k)),
        LearnerSpec::BoostedStumps {
            rounds,
            learning_rate,
            max_depth,
            linear_start,
        } => {
            let init =
                linear_start.then(|| Box::new(LinearModel::fit(x, y, 1e-6)) as Box<dyn Model>);
            Box::new(boost::fit(
                x,
                y,
                &BoostParams::new(rounds, learning_rate, max_depth),
                Loss::Squared,
                init,
            ))
        }
    })
}

/// Fits a binary classifier; `labels` must be 0 or 1.
pub fn fit_classifier(
    spec: &LearnerSpec,
    x: ArrayView2<'_, f64>,
    labels: &[f64],
) -> Result<Box<dyn Model>> {
    spec.validate()?;
    check_shapes(x, labels)?;
    if labels.iter().any(|&l| l != 0.0 && l != 1.0) {
        return Err(Error::InvalidLearner(
            "classification labels must be 0 or 1".into(),
        ));
    }
    Ok(match *spec {
        LearnerSpec::MeanOnly => Box::new(Constant(mean(labels).clamp(P_EPS, 1.0 - P_EPS))),
        LearnerSpec::Linear => Box::new(Logistic::fit(x, labels, 1e-6)),
        LearnerSpec::Ridge { lambda } => Box::new(Logistic::fit(x, labels, lambda.max(1e-6))),
        LearnerSpec::Knn { k } => Box::new(Knn::fit(x, labels, k)),
        LearnerSpec::BoostedStumps {
            rounds,
            learning_rate,
            max_depth,
            linear_start,
        } => {
            let init =
                linear_start.then(|| Box::new(Logistic::fit(x, labels, 1e-6)) as Box<dyn Model>);
            Box::new(boost::fit(
                x,
                labels,
                &BoostParams::new(rounds, learning_rate, max_depth),
                Loss::Logistic,
                init,
            ))
        }
    })
}

fn check_shapes(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            what: "learner targets".into(),
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::InvalidLearner("no training rows".into()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct Constant(f64);

impl Model for Constant {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        vec![self.0; x.nrows()]
    }
}

/// Per-column centering and scaling fitted on training rows. Columns with no
/// spread are dropped.
#[derive(Debug, Clone)]
struct Standardizer {
    keep: Vec<usize>,
    center: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows() as f64;
        let mut keep = Vec::new();
        let mut center = Vec::new();
        let mut scale = Vec::new();
        for (j, col) in x.axis_iter(Axis(1)).enumerate() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd > 1e-12 * (1.0 + m.abs()) {
                keep.push(j);
                center.push(m);
                scale.push(sd);
            }
        }
        Self {
            keep,
            center,
            scale,
        }
    }

    fn p(&self) -> usize {
        self.keep.len()
    }

    /// Standardized design with a leading intercept column.
    fn design(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.p() + 1));
        out.column_mut(0).fill(1.0);
        for (c, &j) in self.keep.iter().enumerate() {
            let src = x.column(j);
            let mut dst = out.column_mut(c + 1);
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d = (s - self.center[c]) / self.scale[c];
            }
        }
        out
    }

    fn transform_row(&self, row: ndarray::ArrayView1<'_, f64>, out: &mut [f64]) {
        for (c, &j) in self.keep.iter().enumerate() {
            out[c] = (row[j] - self.center[c]) / self.scale[c];
        }
    }
}

/// Solves `a x = b` for symmetric positive definite `a` by Cholesky.
pub(crate) fn cholesky_solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let p = a.nrows();
    let mut l = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 1e-12 * a[[i, i]].abs().max(1e-300) || !s.is_finite() {
                    return None;
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    let mut z = Array1::<f64>::zeros(p);
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * z[k];
        }
        z[i] = s / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(p);
    for i in (0..p).rev() {
        let mut s = z[i];
        for k in i + 1..p {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Some(x)
}

/// Solves a penalized normal system, adding ridge to the non-intercept
/// diagonal until the factorization succeeds.
fn solve_with_fallback(mut xtx: Array2<f64>, xty: &Array1<f64>, lambda: f64) -> Array1<f64> {
    let p = xtx.nrows();
    for j in 1..p {
        xtx[[j, j]] += lambda;
    }
    if let Some(b) = cholesky_solve(&xtx, xty) {
        return b;
    }
    let scale = (1..p).map(|j| xtx[[j, j]]).fold(1.0_f64, f64::max);
    let mut jitter = 1e-8 * scale;
    loop {
        let mut a = xtx.clone();
        for j in 0..p {
            a[[j, j]] += jitter;
        }
        if let Some(b) = cholesky_solve(&a, xty) {
            return b;
        }
        jitter *= 10.0;
    }
}

/// Least squares on standardized features, optionally ridge-penalized.
struct LinearModel {
    std: Standardizer,
    beta: Array1<f64>,
}

impl LinearModel {
    fn fit(x: ArrayView2<'_, f64>, y: &[f64], lambda: f64) -> Self {
        let std = Standardizer::fit(x);
        let d = std.design(x);
        let yv = Array1::from(y.to_vec());
        let xtx = d.t().dot(&d);
        let xty = d.t().dot(&yv);
        let beta = solve_with_fallback(xtx, &xty, lambda);
        Self { std, beta }
    }
}

impl Model for LinearModel {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        self.std.design(x).dot(&self.beta).to_vec()
    }
}

/// Logistic regression by penalized IRLS.
struct Logistic {
    std: Standardizer,
    beta: Array1<f64>,
}

impl Logistic {
    fn fit(x: ArrayView2<'_, f64>, y: &[f64], lambda: f64) -> Self {
        let std = Standardizer::fit(x);
        let d = std.design(x);
        let p = d.ncols();
        let yv = Array1::from(y.to_vec());
        let mut beta = Array1::<f64>::zeros(p);
        let ybar = mean(y).clamp(1e-6, 1.0 - 1e-6);
        beta[0] = (ybar / (1.0 - ybar)).ln();

        let objective = |b: &Array1<f64>| -> f64 {
            let eta = d.dot(b);
            let ll: f64 = eta.iter().zip(y).map(|(&e, &t)| t * e - softplus(e)).sum();
            let pen: f64 = b.iter().skip(1).map(|v| v * v).sum::<f64>();
            ll - 0.5 * lambda * pen
        };
        let mut current = objective(&beta);
        for _ in 0..100 {
            let eta = d.dot(&beta);
            let prob = eta.mapv(expit);
            let w = prob.mapv(|q| (q * (1.0 - q)).max(1e-10));
            let mut grad = d.t().dot(&(&yv - &prob));
            for j in 1..p {
                grad[j] -= lambda * beta[j];
            }
            let dw = &d * &w.view().insert_axis(Axis(1));
            let hess = d.t().dot(&dw);
            let step = solve_with_fallback(hess, &grad, lambda);
            let mut t = 1.0;
            let mut improved = false;
            for _ in 0..30 {
                let cand = &beta + &(&step * t);
                let val = objective(&cand);
                if val >= current - 1e-12 * current.abs() {
                    beta = cand;
                    improved = val > current + 1e-12 * current.abs().max(1.0);
                    current = val;
                    break;
                }
                t *= 0.5;
            }
            let size = step.iter().fold(0.0_f64, |m, v| m.max(v.abs())) * t;
            if !improved || size < 1e-8 {
                break;
            }
        }
        Self { std, beta }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Model for Logistic {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        self.std
            .design(x)
            .dot(&self.beta)
            .iter()
            .map(|&e| expit(e))
            .collect()
    }
}

/// k nearest neighbours in standardized Euclidean distance. Ties in distance
/// are broken by training row order.
struct Knn {
    std: Standardizer,
    train: Vec<f64>,
    y: Vec<f64>,
    k: usize,
}

impl Knn {
    fn fit(x: ArrayView2<'_, f64>, y: &[f64], k: usize) -> Self {
        let std = Standardizer::fit(x);
        let p = std.p();
        let mut train = vec![0.0; x.nrows() * p];
        for (i, row) in x.outer_iter().enumerate() {
            std.transform_row(row, &mut train[i * p..(i + 1) * p]);
        }
        Self {
            std,
            train,
            y: y.to_vec(),
            k: k.min(y.len()),
        }
    }
}

impl Model for Knn {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let p = self.std.p();
        let n = self.y.len();
        let mut q = vec![0.0; p];
        let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
        x.outer_iter()
            .map(|row| {
                self.std.transform_row(row, &mut q);
                dist.clear();
                for i in 0..n {
                    let t = &self.train[i * p..(i + 1) * p];
                    let d: f64 = t.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
                    dist.push((d, i));
                }
                let cmp =
                    |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                if self.k < n {
                    dist.select_nth_unstable_by(self.k - 1, cmp);
                }
                dist[..self.k].iter().map(|&(_, i)| self.y[i]).sum::<f64>() / self.k as f64
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_matches_known_solution() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let b = array![2.0, 1.0];
        let x = cholesky_solve(&a, &b).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12);
        assert!(x[1].abs() < 1e-12);
        assert!(cholesky_solve(&array![[1.0, 1.0], [1.0, 1.0]], &b).is_none());
    }

    #[test]
    fn ols_recovers_exact_line() {
        let x = Array2::from_shape_fn((20, 2), |(i, j)| {
            (i * (j + 1)) as f64 + (j as f64) * 0.3 * (i % 3) as f64
        });
        let y: Vec<f64> = x
            .outer_iter()
            .map(|r| 1.5 + 2.0 * r[0] - 0.5 * r[1])
            .collect();
        let m = fit_regressor(&LearnerSpec::Linear, x.view(), &y).unwrap();
        for (p, t) in m.predict(x.view()).iter().zip(&y) {
            assert!((p - t).abs() < 1e-8);
        }
    }

    #[test]
    fn collinear_and_constant_columns_do_not_crash() {
        let x = Array2::from_shape_fn((10, 3), |(i, j)| match j {
            0 => i as f64,
            1 => 2.0 * i as f64,
            _ => 7.0,
        });
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let m = fit_regressor(&LearnerSpec::Linear, x.view(), &y).unwrap();
        let pred = m.predict(x.view());
        assert!(pred.iter().zip(&y).all(|(p, t)| (p - t).abs() < 1e-4));
    }

    #[test]
    fn constant_target_gives_constant_predictions() {
        let x = Array2::from_shape_fn((30, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        let y = vec![4.0; 30];
        for spec in LearnerSpec::default_regression_library() {
            let m = fit_regressor(&spec, x.view(), &y).unwrap();
            for p in m.predict(x.view()) {
                assert!((p - 4.0).abs() < 1e-9, "{spec}: {p}");
            }
        }
    }

    #[test]
    fn logistic_tracks_true_probabilities() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(3, "logit");
        let n = 4000;
        let x = Array2::from_shape_fn((n, 1), |_| rng.random::<f64>() * 4.0 - 2.0);
        let y: Vec<f64> = x
            .column(0)
            .iter()
            .map(|&v| f64::from(rng.random::<f64>() < expit(0.5 + 1.5 * v)))
            .collect();
        let m = fit_classifier(&LearnerSpec::Linear, x.view(), &y).unwrap();
        let probe = array![[-1.0], [0.0], [1.0]];
        for (p, v) in m.predict(probe.view()).iter().zip([-1.0, 0.0, 1.0]) {
            assert!((p - expit(0.5 + 1.5 * v)).abs() < 0.05);
        }
    }

    #[test]
    fn knn_averages_nearest_targets() {
        let x = array![[0.0], [1.0], [2.0], [10.0]];
        let y = [1.0, 2.0, 3.0, 100.0];
        let m = fit_regressor(&LearnerSpec::Knn { k: 2 }, x.view(), &y).unwrap();
        assert_eq!(m.predict(array![[0.4]].view()), vec![1.5]);
    }

    #[test]
    fn spec_validation_and_serde() {
        assert!(LearnerSpec::Ridge { lambda: -1.0 }.validate().is_err());
        assert!(LearnerSpec::Knn { k: 0 }.validate().is_err());
        assert!(LearnerSpec::boosted(0, 0.1, 3).validate().is_err());
        let s: LearnerSpec = serde_json::from_str(r#"{"kind":"ridge","lambda":2.0}"#).unwrap();
        assert_eq!(s, LearnerSpec::Ridge { lambda: 2.0 });
        let lib: Vec<LearnerSpec> =
            serde_json::from_str(r#"[{"kind":"mean_only"},{"kind":"boosted_stumps","rounds":5,"learning_rate":0.1,"max_depth":2}]"#)
                .unwrap();
        assert_eq!(lib.len(), 2);
    }
}
