//! Point estimates, estimating-function values, the dependence-aware
//! variance and Wald intervals.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::network::DependencyStructure;
use crate::nuisance::expit;
use crate::nuisance::NuisanceFit;

/// Maximum damped-Newton iterations for the fluctuation.
pub const MAX_FLUCTUATION_ITERATIONS: usize = 100;
/// Required accuracy of the solved estimating equation after targeting.
pub const EIF_EQUATION_TOLERANCE: f64 = 1e-6;
const Y_MARGIN: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Plugin,
    OneStep,
    Tmle,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Plugin => "plugin",
            Method::OneStep => "one-step",
            Method::Tmle => "tmle",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TmleMode {
    /// Logistic fluctuation with clever covariate `ρ̂`.
    Covariate,
    /// Intercept-only fluctuation weighted by `ρ̂`.
    #[default]
    WeightedIntercept,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `mean(φ) − ψ̂`; zero by construction for the one-step estimator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eif_residual: Option<f64>,
    pub clip_count: usize,
    pub variance_floored: bool,
    /// Degrees of strata flagged by the positivity check.
    pub positivity_flags: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tmle_mode: Option<TmleMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

/// A point estimate with its variance and interval.
///
/// `variance` is `σ̂²`, scaled so that `Var(ψ̂) ≈ σ̂²/n`; the interval is
/// `ψ̂ ± z·sqrt(σ̂²/n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub method: Method,
    pub psi: f64,
    pub variance: Option<f64>,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub alpha: f64,
    pub n: usize,
    pub k_max: usize,
    pub diagnostics: Diagnostics,
}

impl Estimate {
    pub fn covers(&self, truth: f64) -> Option<bool> {
        self.ci.map(|(lo, hi)| lo <= truth && truth <= hi)
    }

    pub fn ci_width(&self) -> Option<f64> {
        self.ci.map(|(lo, hi)| hi - lo)
    }
}

/// Everything the variance step needs besides the estimating function.
#[derive(Debug, Clone, Copy)]
pub struct InferenceContext<'a> {
    pub dependency: &'a DependencyStructure,
    pub degrees: &'a [usize],
    pub alpha: f64,
    /// Width of degree bins used for centering; 1 keeps raw degrees.
    pub degree_bin: usize,
}

impl<'a> InferenceContext<'a> {
    pub fn new(dependency: &'a DependencyStructure, degrees: &'a [usize]) -> Self {
        Self {
            dependency,
            degrees,
            alpha: 0.05,
            degree_bin: 1,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    fn k_max(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EifComponents {
    pub phi: Vec<f64>,
    pub centered: Vec<f64>,
    /// Mean of `φ` per degree stratum (or degree bin).
    pub strata_means: BTreeMap<usize, f64>,
}

/// Per-unit estimating function `ρ̂(Y − m̂_nat) + m̂_shift`.
pub fn phi(nf: &NuisanceFit, y: &[f64]) -> Result<Vec<f64>> {
    phi_with(&nf.rho, &nf.m_natural, &nf.m_shifted, y)
}

fn phi_with(rho: &[f64], m_nat: &[f64], m_shift: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != rho.len() {
        return Err(Error::LengthMismatch {
            what: "outcome".into(),
            expected: rho.len(),
            found: y.len(),
        });
    }
    (0..y.len())
        .map(|i| {
            let v = rho[i] * (y[i] - m_nat[i]) + m_shift[i];
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteEif { unit: i })
            }
        })
        .collect()
}

/// Centers `φ` within degree strata. Strata with fewer than two units are
/// centered at the overall mean instead.
pub fn center_by_degree(phi: Vec<f64>, degrees: &[usize], degree_bin: usize) -> EifComponents {
    let bin = degree_bin.max(1);
    let n = phi.len();
    let overall = phi.iter().sum::<f64>() / n as f64;
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (v, &k) in phi.iter().zip(degrees) {
        let e = sums.entry(k / bin).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    let strata_means: BTreeMap<usize, f64> = sums
        .into_iter()
        .map(|(k, (s, c))| (k, if c >= 2 { s / c as f64 } else { overall }))
        .collect();
    let centered = phi
        .iter()
        .zip(degrees)
        .map(|(v, k)| v - strata_means[&(k / bin)])
        .collect();
    EifComponents {
        phi,
        centered,
        strata_means,
    }
}

pub fn eif_components(nf: &NuisanceFit, y: &[f64], degrees: &[usize]) -> Result<EifComponents> {
    Ok(center_by_degree(phi(nf, y)?, degrees, 1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    /// Estimated `Var(ψ̂) = (1/n²) Σ G(i,j) φᵢφⱼ`.
    pub var_psi: f64,
    pub floored: bool,
}

impl VarianceEstimate {
    /// `σ̂² = n·Var(ψ̂)`.
    pub fn sigma2(&self, n: usize) -> f64 {
        self.var_psi * n as f64
    }
}

/// Dependence-aware variance of the estimator over pairs with `G(i,j) = 1`.
/// A non-positive double sum is replaced by its diagonal part and flagged.
pub fn variance(eif: &EifComponents, dep: &DependencyStructure) -> VarianceEstimate {
    let c = &eif.centered;
    let n = c.len();
    let partial: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| c[i] * dep.dependent_on(i).iter().map(|&j| c[j]).sum::<f64>())
        .collect();
    let total: f64 = partial.iter().sum();
    let n2 = (n as f64) * (n as f64);
    if total > 0.0 {
        VarianceEstimate {
            var_psi: total / n2,
            floored: false,
        }
    } else {
        let diag: f64 = c.iter().map(|v| v * v).sum();
        VarianceEstimate {
            var_psi: diag / n2,
            floored: diag > 0.0 || total < 0.0,
        }
    }
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Wald interval `ψ ± z_{1−α/2}·sqrt(σ²/n)`.
pub fn confidence_interval(psi: f64, sigma2: f64, n: usize, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let half = normal_quantile(1.0 - alpha / 2.0) * (sigma2.max(0.0) / n as f64).sqrt();
    Ok((psi - half, psi + half))
}

fn with_inference(
    method: Method,
    psi: f64,
    phi: Vec<f64>,
    ctx: &InferenceContext<'_>,
    mut diagnostics: Diagnostics,
) -> Result<Estimate> {
    let n = phi.len();
    let eif = center_by_degree(phi, ctx.degrees, ctx.degree_bin);
    let v = variance(&eif, ctx.dependency);
    let sigma2 = v.sigma2(n);
    let ci = confidence_interval(psi, sigma2, n, ctx.alpha)?;
    diagnostics.variance_floored = v.floored;
    Ok(Estimate {
        method,
        psi,
        variance: Some(sigma2),
        se: Some(v.var_psi.sqrt()),
        ci: Some(ci),
        alpha: ctx.alpha,
        n,
        k_max: ctx.k_max(),
        diagnostics,
    })
}

fn check_context(nf: &NuisanceFit, ctx: &InferenceContext<'_>) -> Result<()> {
    if ctx.degrees.len() != nf.n() || ctx.dependency.n() != nf.n() {
        return Err(Error::LengthMismatch {
            what: "network units".into(),
            expected: nf.n(),
            found: ctx.degrees.len(),
        });
    }
    Ok(())
}

/// Substitution estimate `mean(m̂_shift)`; no variance is attached.
pub fn plugin(nf: &NuisanceFit) -> Estimate {
    let n = nf.n();
    Estimate {
        method: Method::Plugin,
        psi: nf.m_shifted.iter().sum::<f64>() / n as f64,
        variance: None,
        se: None,
        ci: None,
        alpha: 0.05,
        n,
        k_max: 0,
        diagnostics: Diagnostics {
            clip_count: nf.clip_count,
            ..Diagnostics::default()
        },
    }
}

/// One-step estimate `mean(φ̂)`.
pub fn one_step(nf: &NuisanceFit, y: &[f64], ctx: &InferenceContext<'_>) -> Result<Estimate> {
    check_context(nf, ctx)?;
    let phi = phi(nf, y)?;
    let psi = phi.iter().sum::<f64>() / phi.len() as f64;
    let diagnostics = Diagnostics {
        eif_residual: Some(0.0),
        clip_count: nf.clip_count,
        ..Diagnostics::default()
    };
    with_inference(Method::OneStep, psi, phi, ctx, diagnostics)
}

/// Result of the logistic fluctuation step.
#[derive(Debug, Clone)]
pub struct Targeted {
    pub psi: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub m_natural: Vec<f64>,
    pub m_shifted: Vec<f64>,
    pub phi: Vec<f64>,
    /// `mean(φ*) − ψ̂`.
    pub residual: f64,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Solves `Σ wᵢhᵢ(yᵢ − expit(oᵢ + ε hᵢ)) = 0` by damped Newton on the
/// binomial log-likelihood.
fn solve_fluctuation(y: &[f64], offset: &[f64], h: &[f64], w: &[f64]) -> Result<(f64, usize)> {
    let n = y.len() as f64;
    let loglik = |eps: f64| -> f64 {
        (0..y.len())
            .map(|i| {
                let eta = offset[i] + eps * h[i];
                // y·η − log(1 + e^η)
                let sp = if eta > 0.0 {
                    eta + (-eta).exp().ln_1p()
                } else {
                    eta.exp().ln_1p()
                };
                w[i] * (y[i] * eta - sp)
            })
            .sum()
    };
    let score_info = |eps: f64| -> (f64, f64) {
        let mut s = 0.0;
        let mut info = 0.0;
        for i in 0..y.len() {
            let p = expit(offset[i] + eps * h[i]);
            s += w[i] * h[i] * (y[i] - p);
            info += w[i] * h[i] * h[i] * p * (1.0 - p);
        }
        (s, info)
    };
    let mut eps = 0.0;
    let mut ll = loglik(eps);
    for it in 0..MAX_FLUCTUATION_ITERATIONS {
        let (s, info) = score_info(eps);
        if (s / n).abs() <= 1e-12 {
            return Ok((eps, it));
        }
        if info.is_nan() || info <= 0.0 || !s.is_finite() {
            return Err(Error::FluctuationDiverged {
                iterations: it,
                score: s / n,
            });
        }
        let step = s / info;
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = eps + t * step;
            let val = loglik(cand);
            // Near the optimum the log-likelihood is flat to rounding, so a
            // smaller score also counts as progress.
            if val.is_finite() && (val >= ll || score_info(cand).0.abs() < s.abs()) {
                eps = cand;
                ll = val;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            // No ascent possible at machine precision: the score is as small as it gets.
            return Ok((eps, it + 1));
        }
    }
    let (s, _) = score_info(eps);
    if (s / n).abs() <= 1e-10 {
        Ok((eps, MAX_FLUCTUATION_ITERATIONS))
    } else {
        Err(Error::FluctuationDiverged {
            iterations: MAX_FLUCTUATION_ITERATIONS,
            score: s / n,
        })
    }
}

/// Targets the outcome regression so the estimating equation is solved.
pub fn target(nf: &NuisanceFit, y: &[f64], mode: TmleMode) -> Result<Targeted> {
    let n = nf.n();
    if y.len() != n {
        return Err(Error::LengthMismatch {
            what: "outcome".into(),
            expected: n,
            found: y.len(),
        });
    }
    let y_min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = y_max - y_min;
    if range == 0.0 {
        let phi = vec![y_min; n];
        return Ok(Targeted {
            psi: y_min,
            epsilon: 0.0,
            iterations: 0,
            m_natural: phi.clone(),
            m_shifted: phi.clone(),
            phi,
            residual: 0.0,
        });
    }
    let lo = y_min - Y_MARGIN * range;
    let hi = y_max + Y_MARGIN * range;
    let scale = hi - lo;
    let to_unit = |v: f64| (v.clamp(y_min, y_max) - lo) / scale;
    let ys: Vec<f64> = y.iter().map(|&v| (v - lo) / scale).collect();
    let off_nat: Vec<f64> = nf.m_natural.iter().map(|&m| logit(to_unit(m))).collect();
    let off_shift: Vec<f64> = nf.m_shifted.iter().map(|&m| logit(to_unit(m))).collect();

    let ones = vec![1.0; n];
    let (h_nat, h_shift, w): (&[f64], &[f64], &[f64]) = match mode {
        TmleMode::Covariate => (&nf.rho, &nf.rho_shifted, &ones),
        TmleMode::WeightedIntercept => (&ones, &ones, &nf.rho),
    };
    let (epsilon, iterations) = solve_fluctuation(&ys, &off_nat, h_nat, w)?;
    let back = |u: f64| lo + scale * u;
    let m_natural: Vec<f64> = (0..n)
        .map(|i| back(expit(off_nat[i] + epsilon * h_nat[i])))
        .collect();
    let m_shifted: Vec<f64> = (0..n)
        .map(|i| back(expit(off_shift[i] + epsilon * h_shift[i])))
        .collect();
    let psi = m_shifted.iter().sum::<f64>() / n as f64;
    let phi = phi_with(&nf.rho, &m_natural, &m_shifted, y)?;
    let residual = phi.iter().sum::<f64>() / n as f64 - psi;
    if residual.abs() > EIF_EQUATION_TOLERANCE {
        return Err(Error::FluctuationDiverged {
            iterations,
            score: residual,
        });
    }
    Ok(Targeted {
        psi,
        epsilon,
        iterations,
        m_natural,
        m_shifted,
        phi,
        residual,
    })
}

/// Targeted maximum likelihood estimate.
pub fn tmle(
    nf: &NuisanceFit,
    y: &[f64],
    mode: TmleMode,
    ctx: &InferenceContext<'_>,
) -> Result<Estimate> {
    check_context(nf, ctx)?;
    let t = target(nf, y, mode)?;
    let diagnostics = Diagnostics {
        eif_residual: Some(t.residual),
        clip_count: nf.clip_count,
        epsilon: Some(t.epsilon),
        tmle_mode: Some(mode),
        iterations: Some(t.iterations),
        ..Diagnostics::default()
    };
    with_inference(Method::Tmle, t.psi, t.phi, ctx, diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Network;

    fn fit(m_nat: Vec<f64>, m_shift: Vec<f64>, rho: Vec<f64>) -> NuisanceFit {
        let r2 = rho.clone();
        NuisanceFit::from_parts(m_nat, m_shift, rho, r2).unwrap()
    }

    #[test]
    fn hand_centering_example() {
        let eif = center_by_degree(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2], 1);
        assert_eq!(eif.centered, vec![-0.5, 0.5, -0.5, 0.5]);
        assert_eq!(eif.strata_means[&1], 1.5);
    }

    #[test]
    fn singleton_stratum_uses_overall_mean() {
        let eif = center_by_degree(vec![1.0, 3.0, 8.0], &[1, 1, 5], 1);
        assert_eq!(eif.strata_means[&5], 4.0);
        assert_eq!(eif.centered[2], 4.0);
    }

    #[test]
    fn path_variance_is_floored() {
        let net = Network::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)], false).unwrap();
        let eif = EifComponents {
            phi: vec![1.0, -1.0, 0.0],
            centered: vec![1.0, -1.0, 0.0],
            strata_means: BTreeMap::new(),
        };
        let v = variance(&eif, &net.dependency());
        assert!(v.floored);
        assert!((v.var_psi - 2.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn edgeless_variance_is_diagonal() {
        let c = vec![1.0, -2.0, 0.5, 0.5];
        let eif = EifComponents {
            phi: c.clone(),
            centered: c,
            strata_means: BTreeMap::new(),
        };
        let v = variance(&eif, &Network::edgeless(4).dependency());
        assert!((v.var_psi - 5.5 / 16.0).abs() < 1e-15);
        assert!(!v.floored);
    }

    #[test]
    fn interval_examples() {
        let (lo, hi) = confidence_interval(0.0, 100.0, 100, 0.05).unwrap();
        assert!((hi - 1.959_963_985).abs() < 1e-8 && (lo + hi).abs() < 1e-15);
        assert_eq!(confidence_interval(2.0, 0.0, 10, 0.05).unwrap(), (2.0, 2.0));
        let (_, hi) = confidence_interval(0.0, 1.0, 1, 0.3173).unwrap();
        assert!((hi - 1.0).abs() < 1e-3);
        assert!(confidence_interval(0.0, 1.0, 1, 1.0).is_err());
        assert!(confidence_interval(0.0, 1.0, 1, 0.0).is_err());
    }

    #[test]
    fn identity_one_step_is_sample_mean() {
        let y = vec![1.0, 4.0, 2.5, 7.0];
        let m = vec![0.3, 2.0, 9.0, -1.0];
        let nf = fit(m.clone(), m, vec![1.0; 4]);
        let net = Network::edgeless(4);
        let dep = net.dependency();
        let degrees = net.degrees();
        let est = one_step(&nf, &y, &InferenceContext::new(&dep, &degrees)).unwrap();
        assert!((est.psi - 3.625).abs() < 1e-12);
        let (lo, hi) = est.ci.unwrap();
        assert!(lo <= est.psi && est.psi <= hi);
    }

    #[test]
    fn non_finite_eif_names_unit() {
        let nf = fit(vec![0.0, 0.0], vec![0.0, f64::NAN], vec![1.0, 1.0]);
        assert!(matches!(
            phi(&nf, &[1.0, 1.0]),
            Err(Error::NonFiniteEif { unit: 1 })
        ));
    }

    #[test]
    fn tmle_solves_equation_in_both_modes() {
        let y = vec![0.5, 2.0, 3.0, 1.0, 4.0, 2.2];
        let m_nat = vec![1.0, 1.5, 2.5, 1.5, 3.0, 2.0];
        let m_shift = vec![1.4, 2.0, 3.5, 1.6, 3.8, 2.9];
        let rho = vec![0.8, 1.2, 0.5, 2.0, 1.1, 0.9];
        let rho_s = vec![1.1, 0.7, 1.5, 0.6, 1.3, 1.0];
        let nf = NuisanceFit::from_parts(m_nat, m_shift, rho, rho_s).unwrap();
        for mode in [TmleMode::Covariate, TmleMode::WeightedIntercept] {
            let t = target(&nf, &y, mode).unwrap();
            assert!(t.residual.abs() < 1e-9, "{mode:?}: {}", t.residual);
            assert!(t.psi >= 0.5 && t.psi <= 4.0);
        }
    }

    #[test]
    fn tmle_constant_outcome() {
        let nf = fit(vec![0.0; 3], vec![5.0; 3], vec![2.0; 3]);
        let t = target(&nf, &[3.0; 3], TmleMode::Covariate).unwrap();
        assert_eq!(t.psi, 3.0);
        assert_eq!(t.epsilon, 0.0);
    }

    #[test]
    fn tmle_identity_returns_mean() {
        let y = vec![1.0, 3.0, 2.0, 8.0];
        let m = vec![2.0, 2.0, 3.0, 5.0];
        let nf = fit(m.clone(), m, vec![1.0; 4]);
        let t = target(&nf, &y, TmleMode::WeightedIntercept).unwrap();
        assert!((t.psi - 3.5).abs() < 1e-8);
    }

    #[test]
    fn estimate_json_shape() {
        let nf = fit(vec![0.0; 3], vec![0.0; 3], vec![1.0; 3]);
        let net = Network::edgeless(3);
        let dep = net.dependency();
        let degrees = net.degrees();
        let est = one_step(
            &nf,
            &[1.0, 2.0, 3.0],
            &InferenceContext::new(&dep, &degrees),
        )
        .unwrap();
        let v: serde_json::Value = serde_json::to_value(&est).unwrap();
        for key in [
            "method",
            "psi",
            "variance",
            "se",
            "ci",
            "alpha",
            "n",
            "k_max",
            "diagnostics",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["method"], "one-step");
        assert!(v["diagnostics"].get("variance_floored").is_some());
    }
}
