//! Closed-form quantities of the simulation DGPs: exact estimand values,
//! the true nuisance functions and the efficiency bound.
//!
//! Both DGPs draw `A_i ~ N(μ_i, 1)` independently given the covariates, so
//! under an additive or multiplicative policy `d(A_i)` and the neighbor sum
//! `Σ_{j∈F_i} d(A_j)` are again Gaussian and independent of each other.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Continuous, ContinuousCDF, DiscreteCDF, Gamma, Normal, Poisson};

use super::{m_as, DgpSpec, L1_CUTS, L2_CUTS, L3_CUTS};
use crate::data::{Column, CovariateLookup, Frame};
use crate::error::{Error, Result};
use crate::estimate::phi;
use crate::network::Network;
use crate::nuisance::NuisanceFit;
use crate::policy::{Policy, PolicyKind};
use crate::rng::SeedStream;

#[derive(Debug, Clone, Copy)]
enum Shift {
    Add(f64),
    Mul(f64),
}

impl Shift {
    fn of(policy: &Policy) -> Result<Self> {
        match policy.kind() {
            PolicyKind::Additive => Ok(Shift::Add(policy.delta())),
            PolicyKind::Multiplicative => Ok(Shift::Mul(policy.delta())),
            PolicyKind::PiecewiseAdditive => Err(Error::BoundUnavailable(
                "closed forms cover additive and multiplicative policies only".into(),
            )),
        }
    }

    /// Law of `Σ d(A_j)` over `k` units when the natural sum is `N(mu, k·sd²)`.
    fn sum_law(self, mu: f64, sd: f64, k: usize) -> (f64, f64) {
        let s = sd * (k as f64).sqrt();
        match self {
            Shift::Add(d) => (mu + k as f64 * d, s),
            Shift::Mul(d) => (d * mu, d * s),
        }
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// `P(X > t)` for `X ~ N(mu, sd²)`.
fn upper(t: f64, mu: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return f64::from(u8::from(mu > t));
    }
    std_normal().sf((t - mu) / sd)
}

fn expected_m_a(mu: f64, sd: f64) -> f64 {
    -2.0 * upper(-2.0, mu, sd) - upper(1.0, mu, sd) + 3.0 * upper(3.0, mu, sd)
}

fn expected_m_as(mu: f64, sd: f64, k: usize) -> f64 {
    if k == 0 {
        return m_as(0.0);
    }
    3.0 * upper(0.0, mu, sd) + upper(6.0, mu, sd) + upper(12.0, mu, sd)
}

/// Distribution of `−m_L` on `0..=18` for the synthetic DGP.
pub(crate) fn neg_m_l_pmf() -> Vec<f64> {
    let beta = Beta::new(3.0, 2.0).expect("valid beta");
    let pois = Poisson::new(100.0).expect("valid poisson");
    let gamma = Gamma::new(2.0, 0.25).expect("valid gamma");
    let cdfs: [Box<dyn Fn(f64) -> f64>; 3] = [
        Box::new(move |t| beta.cdf(t)),
        Box::new(move |t| pois.cdf(t as u64)),
        Box::new(move |t| gamma.cdf(t)),
    ];
    let cuts = [L1_CUTS, L2_CUTS, L3_CUTS];
    // Score magnitude per band: ≤t1 → 0, (t1,t2] → 2, (t2,t3] → 3, >t3 → 1.
    let mut sum = vec![1.0];
    for (cdf, t) in cdfs.iter().zip(cuts) {
        let (f1, f2, f3) = (cdf(t[0]), cdf(t[1]), cdf(t[2]));
        let mut pmf = [0.0; 4];
        pmf[0] = f1;
        pmf[2] = f2 - f1;
        pmf[3] = f3 - f2;
        pmf[1] = 1.0 - f3;
        sum = convolve(&sum, &pmf);
    }
    let mut out = vec![0.0; 19];
    for (s, p) in sum.iter().enumerate() {
        out[s] += 0.4 * p;
        out[2 * s] += 0.6 * p;
    }
    out
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Marginal expected counterfactual outcome of a synthetic-DGP unit with `k` friends.
fn synthetic_degree_truth(shift: Shift, pmf: &[f64], k: usize, pmf_k: &[f64]) -> f64 {
    let own: f64 = pmf
        .iter()
        .enumerate()
        .map(|(v, p)| {
            let m = -(v as f64);
            let (mu, sd) = shift.sum_law(m - 5.0, 1.0, 1);
            p * m * (1.0 + 0.2 * expected_m_a(mu, sd))
        })
        .sum();
    if k == 0 {
        return own + 5.0;
    }
    let mean_ml: f64 = pmf.iter().enumerate().map(|(v, p)| -(v as f64) * p).sum();
    let spill: f64 = pmf_k
        .iter()
        .enumerate()
        .map(|(w, p)| {
            let (mu, sd) = shift.sum_law(-(w as f64) - 5.0 * k as f64, 1.0, k);
            p * expected_m_as(mu, sd, k)
        })
        .sum();
    own + mean_ml * spill + 5.0
}

fn expected_shifted_exposure(
    policy: &Policy,
    shift: Option<Shift>,
    mu: f64,
    l: &impl CovariateLookup,
) -> f64 {
    match shift {
        Some(Shift::Add(d)) => mu + d,
        Some(Shift::Mul(d)) => d * mu,
        None => {
            let region = policy.region().expect("piecewise policy has a region");
            let mult = match policy.multiplier_column() {
                Some(c) => l.covariate(c).unwrap_or(f64::NAN),
                None => 1.0,
            };
            let lo = region.lower.unwrap_or(f64::NEG_INFINITY);
            let hi = region.upper.unwrap_or(f64::INFINITY);
            let n = std_normal();
            mu + policy.delta() * mult * (n.cdf(hi - mu) - n.cdf(lo - mu))
        }
    }
}

/// Per-unit expected outcome under the induced policy, `E[Y_i(d(A_i), s_i(d(A)))]`.
///
/// With `covariates = None` the expectation also runs over the covariate
/// distribution; otherwise it is conditional on the given covariates.
/// Piecewise policies are supported for the linear DGP given covariates.
pub fn unit_truths(
    dgp: &DgpSpec,
    policy: &Policy,
    net: &Network,
    covariates: Option<&[Column]>,
) -> Result<Vec<f64>> {
    let n = net.n();
    let degrees = net.degrees();
    match (dgp, covariates) {
        (DgpSpec::Synthetic, None) => {
            let shift = Shift::of(policy)?;
            let pmf = neg_m_l_pmf();
            let k_max = net.k_max();
            let mut by_degree = Vec::with_capacity(k_max + 1);
            let mut pmf_k = vec![1.0];
            for k in 0..=k_max {
                by_degree.push(synthetic_degree_truth(shift, &pmf, k, &pmf_k));
                pmf_k = convolve(&pmf_k, &pmf);
            }
            Ok(degrees.iter().map(|&k| by_degree[k]).collect())
        }
        (DgpSpec::Synthetic, Some(cov)) => {
            let shift = Shift::of(policy)?;
            let terms = dgp.terms(cov, net)?;
            Ok((0..n)
                .map(|i| {
                    let ml = terms.base[i];
                    let (mu, sd) = shift.sum_law(terms.exposure_mean[i], 1.0, 1);
                    let k = degrees[i];
                    let mu_sum: f64 = net
                        .neighbors(i)
                        .iter()
                        .map(|b| terms.exposure_mean[b.node])
                        .sum();
                    let (ms, ss) = shift.sum_law(mu_sum, 1.0, k);
                    ml * (1.0 + 0.2 * expected_m_a(mu, sd) + expected_m_as(ms, ss, k)) + 5.0
                })
                .collect())
        }
        (DgpSpec::Linear(p), None) => {
            let shift = Shift::of(policy).map_err(|_| {
                Error::BoundUnavailable(
                    "marginal closed form needs an additive or multiplicative policy; pass covariates or use Monte Carlo".into(),
                )
            })?;
            let mean_s = p.coefficient * p.n_covariates as f64 * p.covariate_mean;
            let mu = mean_s + p.exposure_intercept;
            let ed = match shift {
                Shift::Add(d) => mu + d,
                Shift::Mul(d) => d * mu,
            };
            Ok(degrees
                .iter()
                .map(|&k| {
                    let k1 = 1.0 + k as f64;
                    ed * k1 + mean_s * k1 + p.outcome_intercept
                })
                .collect())
        }
        (DgpSpec::Linear(_), Some(cov)) => {
            let shift = Shift::of(policy).ok();
            let terms = dgp.terms(cov, net)?;
            let frame = Frame::new(cov.to_vec(), vec![0.0; n], None)?;
            let ed: Vec<f64> = (0..n)
                .map(|i| {
                    expected_shifted_exposure(policy, shift, terms.exposure_mean[i], &frame.row(i))
                })
                .collect();
            Ok((0..n)
                .map(|i| {
                    let spill: f64 = net.neighbors(i).iter().map(|b| ed[b.node]).sum();
                    ed[i] + spill + terms.base[i]
                })
                .collect())
        }
    }
}

/// Exact `ψ_n`: the average of [`unit_truths`].
pub fn exact_truth(
    dgp: &DgpSpec,
    policy: &Policy,
    net: &Network,
    covariates: Option<&[Column]>,
) -> Result<f64> {
    let t = unit_truths(dgp, policy, net, covariates)?;
    Ok(t.iter().sum::<f64>() / t.len() as f64)
}

fn log_normal_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    Normal::new(mu, sd).expect("positive sd").ln_pdf(x)
}

/// Density ratio of the shifted to the natural law at `x`, where the natural
/// law is `N(mu, sd²)` for a sum over `k` units.
fn ratio_at(shift: Shift, x: f64, mu: f64, sd: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let (ms, ss) = match shift {
        Shift::Add(d) => (mu + k as f64 * d, sd),
        Shift::Mul(d) => (d * mu, d * sd),
    };
    (log_normal_pdf(x, ms, ss) - log_normal_pdf(x, mu, sd)).exp()
}

/// The true nuisances for an observed draw: `m` given `(A_i, A_i^s, L)` at
/// natural and shifted exposures, and the joint density ratio of
/// `(d(A_i), Σ_j d(A_j))` to `(A_i, A_i^s)` given the covariates.
pub fn true_nuisances(
    dgp: &DgpSpec,
    policy: &Policy,
    net: &Network,
    frame: &Frame,
) -> Result<NuisanceFit> {
    let shift = Shift::of(policy)?;
    let n = net.n();
    let terms = dgp.terms(frame.covariates(), net)?;
    let a = frame.exposure();
    let a_d: Vec<f64> = (0..n).map(|i| policy.apply(a[i], &frame.row(i))).collect();
    let sum = |v: &[f64]| crate::data::SummarySpec::neighbor_sum().apply(net, v);
    let a_s = sum(a)?;
    let a_s_d = sum(&a_d)?;
    let degrees = net.degrees();
    let mut m_nat = Vec::with_capacity(n);
    let mut m_shift = Vec::with_capacity(n);
    let mut rho = Vec::with_capacity(n);
    let mut rho_shift = Vec::with_capacity(n);
    for i in 0..n {
        let base = terms.base[i];
        m_nat.push(dgp.outcome_mean(base, a[i], a_s[i]));
        m_shift.push(dgp.outcome_mean(base, a_d[i], a_s_d[i]));
        let mu = terms.exposure_mean[i];
        let k = degrees[i];
        let mu_sum: f64 = net
            .neighbors(i)
            .iter()
            .map(|b| terms.exposure_mean[b.node])
            .sum();
        let sd_sum = terms.exposure_sd * (k as f64).sqrt();
        let r = |x: f64, s: f64| {
            ratio_at(shift, x, mu, terms.exposure_sd, 1) * ratio_at(shift, s, mu_sum, sd_sum, k)
        };
        rho.push(r(a[i], a_s[i]));
        rho_shift.push(r(a_d[i], a_s_d[i]));
    }
    NuisanceFit::from_parts(m_nat, m_shift, rho, rho_shift)
}

/// Monte Carlo average of the dependence-aware variance of the true
/// estimating function, centered at the exact per-unit means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    /// Bound on `Var(ψ̂)`.
    pub var_psi: f64,
    /// Monte Carlo standard error of `var_psi`.
    pub mc_se: f64,
    pub reps: usize,
}

pub fn efficiency_bound(
    dgp: &DgpSpec,
    policy: &Policy,
    net: &Network,
    reps: usize,
    seed: u64,
) -> Result<BoundEstimate> {
    if reps == 0 {
        return Err(Error::Config(
            "efficiency bound needs at least one replicate".into(),
        ));
    }
    let truths = unit_truths(dgp, policy, net, None)?;
    let dep = net.dependency();
    let stream = SeedStream::new(seed);
    let n = net.n();
    let n2 = (n as f64) * (n as f64);
    let mut values = Vec::with_capacity(reps);
    for r in 0..reps {
        let mut rng = stream.rng("efficiency_bound", &[r as u64]);
        let frame = super::simulate(dgp, net, &mut rng)?;
        let nf = true_nuisances(dgp, policy, net, &frame)?;
        let y = frame.outcome().expect("simulated frames carry an outcome");
        let c: Vec<f64> = phi(&nf, y)?
            .iter()
            .zip(&truths)
            .map(|(p, t)| p - t)
            .collect();
        let total: f64 = (0..n)
            .map(|i| c[i] * dep.dependent_on(i).iter().map(|&j| c[j]).sum::<f64>())
            .sum();
        values.push(total / n2);
    }
    let mean = values.iter().sum::<f64>() / reps as f64;
    let mc_se = if reps > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / ((reps - 1) * reps) as f64).sqrt()
    } else {
        f64::NAN
    };
    if mean.is_nan() || mean <= 0.0 {
        return Err(Error::BoundUnavailable(format!(
            "non-positive bound estimate {mean}"
        )));
    }
    Ok(BoundEstimate {
        var_psi: mean,
        mc_se,
        reps,
    })
}
