//! Simulation: the two data-generating processes, ground truth under the
//! induced policy, oracle nuisances, the efficiency bound and benchmark sweeps.

use rand::Rng;
use rand_distr::{Bernoulli, Beta, Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Column, Frame, SummarySpec};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::policy::Policy;
use crate::rng::{SeedStream, StreamRng};

mod benchmark;
mod oracle;

pub use benchmark::{
    run_benchmark, Aggregate, BenchMethod, BenchmarkConfig, BenchmarkRecord, BenchmarkResult,
    TruthMode,
};
pub use oracle::{efficiency_bound, exact_truth, true_nuisances, unit_truths, BoundEstimate};

/// Truncation point of the outcome noise, in standard deviations.
pub const TRUNCATION_SDS: f64 = 6.0;
const TRUNCATION_ATTEMPTS: usize = 1000;

/// Parameters of the linear-Gaussian network DGP.
///
/// `L_k ~ N(μ_L, 1)`, `A ~ N(βΣ_k L_k + α_A, 1)` and
/// `Y ~ TruncN(A + A^s + βΣ_k L_k + βΣ_k L_k^s + α_Y, 1)` with neighbor sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearDgp {
    pub n_covariates: usize,
    pub covariate_mean: f64,
    pub coefficient: f64,
    pub exposure_intercept: f64,
    pub outcome_intercept: f64,
}

impl Default for LinearDgp {
    fn default() -> Self {
        Self {
            n_covariates: 16,
            covariate_mean: 0.0,
            coefficient: 1.0,
            exposure_intercept: -50.0,
            outcome_intercept: -50.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DgpSpec {
    /// Nonlinear threshold DGP with four mixed-type covariates.
    #[default]
    Synthetic,
    Linear(LinearDgp),
}

/// Per-unit structural quantities that do not depend on the exposures.
#[derive(Debug, Clone)]
pub struct StructuralTerms {
    pub exposure_mean: Vec<f64>,
    pub exposure_sd: f64,
    /// `m_L` for the synthetic DGP; `βΣL + βΣL^s + α_Y` for the linear one.
    pub base: Vec<f64>,
    pub outcome_sd: f64,
}

/// Threshold contribution of one covariate: `−2·1(x>t1) − 1(x>t2) + 2·1(x>t3)`.
pub(crate) fn threshold_score(x: f64, t: [f64; 3]) -> f64 {
    -2.0 * f64::from(u8::from(x > t[0])) - f64::from(u8::from(x > t[1]))
        + 2.0 * f64::from(u8::from(x > t[2]))
}

pub(crate) const L1_CUTS: [f64; 3] = [0.3, 0.5, 0.7];
pub(crate) const L2_CUTS: [f64; 3] = [90.0, 100.0, 110.0];
pub(crate) const L3_CUTS: [f64; 3] = [5.0, 10.0, 15.0];

/// `m_L` of the synthetic DGP.
pub fn m_l(l1: f64, l2: f64, l3: f64, l4: f64) -> f64 {
    (1.0 + l4)
        * (threshold_score(l1, L1_CUTS)
            + threshold_score(l2, L2_CUTS)
            + threshold_score(l3, L3_CUTS))
}

/// `m_A(a) = −2·1(a>−2) − 1(a>1) + 3·1(a>3)`.
pub fn m_a(a: f64) -> f64 {
    -2.0 * f64::from(u8::from(a > -2.0)) - f64::from(u8::from(a > 1.0))
        + 3.0 * f64::from(u8::from(a > 3.0))
}

/// `m_{A_s}(s) = 3·1(s>0) + 1(s>6) + 1(s>12)`.
pub fn m_as(s: f64) -> f64 {
    3.0 * f64::from(u8::from(s > 0.0))
        + f64::from(u8::from(s > 6.0))
        + f64::from(u8::from(s > 12.0))
}

fn structural_sum(net: &Network, values: &[f64]) -> Vec<f64> {
    SummarySpec::neighbor_sum()
        .apply(net, values)
        .expect("values sized to the network")
}

impl DgpSpec {
    pub fn linear() -> Self {
        DgpSpec::Linear(LinearDgp::default())
    }

    pub fn covariate_names(&self) -> Vec<String> {
        match self {
            DgpSpec::Synthetic => (1..=4).map(|k| format!("L{k}")).collect(),
            DgpSpec::Linear(p) => (1..=p.n_covariates).map(|k| format!("L{k}")).collect(),
        }
    }

    pub fn draw_covariates(&self, n: usize, rng: &mut StreamRng) -> Vec<Column> {
        let names = self.covariate_names();
        match self {
            DgpSpec::Synthetic => {
                let beta = Beta::new(3.0, 2.0).expect("valid beta");
                let pois = Poisson::new(100.0).expect("valid poisson");
                let gamma = Gamma::new(2.0, 4.0).expect("valid gamma");
                let bern = Bernoulli::new(0.6).expect("valid bernoulli");
                let mut cols: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(n)).collect();
                for _ in 0..n {
                    cols[0].push(beta.sample(rng));
                    cols[1].push(pois.sample(rng));
                    cols[2].push(gamma.sample(rng));
                    cols[3].push(f64::from(u8::from(bern.sample(rng))));
                }
                names
                    .into_iter()
                    .zip(cols)
                    .map(|(n, v)| Column::new(n, v))
                    .collect()
            }
            DgpSpec::Linear(p) => {
                let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); p.n_covariates];
                for _ in 0..n {
                    for c in cols.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        c.push(p.covariate_mean + z);
                    }
                }
                names
                    .into_iter()
                    .zip(cols)
                    .map(|(n, v)| Column::new(n, v))
                    .collect()
            }
        }
    }

    pub fn terms(&self, covariates: &[Column], net: &Network) -> Result<StructuralTerms> {
        let n = net.n();
        let names = self.covariate_names();
        let get = |k: usize| -> Result<&[f64]> {
            let c = covariates
                .iter()
                .find(|c| c.name == names[k])
                .ok_or_else(|| Error::MissingColumn(names[k].clone()))?;
            if c.values.len() != n {
                return Err(Error::LengthMismatch {
                    what: format!("covariate {}", c.name),
                    expected: n,
                    found: c.values.len(),
                });
            }
            Ok(&c.values)
        };
        match self {
            DgpSpec::Synthetic => {
                let (l1, l2, l3, l4) = (get(0)?, get(1)?, get(2)?, get(3)?);
                let ml: Vec<f64> = (0..n).map(|i| m_l(l1[i], l2[i], l3[i], l4[i])).collect();
                Ok(StructuralTerms {
                    exposure_mean: ml.iter().map(|m| m - 5.0).collect(),
                    exposure_sd: 1.0,
                    base: ml,
                    outcome_sd: 2.0,
                })
            }
            DgpSpec::Linear(p) => {
                let mut s = vec![0.0; n];
                for k in 0..p.n_covariates {
                    for (acc, v) in s.iter_mut().zip(get(k)?) {
                        *acc += p.coefficient * v;
                    }
                }
                let s_s = structural_sum(net, &s);
                Ok(StructuralTerms {
                    exposure_mean: s.iter().map(|v| v + p.exposure_intercept).collect(),
                    exposure_sd: 1.0,
                    base: s
                        .iter()
                        .zip(&s_s)
                        .map(|(a, b)| a + b + p.outcome_intercept)
                        .collect(),
                    outcome_sd: 1.0,
                })
            }
        }
    }

    /// `E[Y_i | A_i = a, A_i^s = a_s, L]` given the unit's structural base term.
    pub fn outcome_mean(&self, base: f64, a: f64, a_s: f64) -> f64 {
        match self {
            DgpSpec::Synthetic => base * (1.0 + 0.2 * m_a(a) + m_as(a_s)) + 5.0,
            DgpSpec::Linear(_) => a + a_s + base,
        }
    }
}

/// Normal draw truncated at `±6` standard deviations: rejection with a
/// capped number of attempts, then clamping.
pub fn truncated_normal(mean: f64, sd: f64, rng: &mut StreamRng) -> f64 {
    for _ in 0..TRUNCATION_ATTEMPTS {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= TRUNCATION_SDS {
            return mean + sd * z;
        }
    }
    let z: f64 = rng.sample(StandardNormal);
    mean + sd * z.clamp(-TRUNCATION_SDS, TRUNCATION_SDS)
}

/// Draws exposures and outcomes for given covariates.
pub fn simulate_with_covariates(
    dgp: &DgpSpec,
    net: &Network,
    covariates: Vec<Column>,
    rng: &mut StreamRng,
) -> Result<Frame> {
    let terms = dgp.terms(&covariates, net)?;
    let a: Vec<f64> = terms
        .exposure_mean
        .iter()
        .map(|&mu| {
            let z: f64 = rng.sample(StandardNormal);
            mu + terms.exposure_sd * z
        })
        .collect();
    let a_s = structural_sum(net, &a);
    let y: Vec<f64> = (0..net.n())
        .map(|i| {
            truncated_normal(
                dgp.outcome_mean(terms.base[i], a[i], a_s[i]),
                terms.outcome_sd,
                rng,
            )
        })
        .collect();
    Frame::new(covariates, a, Some(y))
}

pub fn simulate(dgp: &DgpSpec, net: &Network, rng: &mut StreamRng) -> Result<Frame> {
    let covariates = dgp.draw_covariates(net.n(), rng);
    simulate_with_covariates(dgp, net, covariates, rng)
}

/// One draw from the synthetic threshold DGP.
pub fn dgp_synthetic(net: &Network, seed: u64) -> Result<Frame> {
    simulate(
        &DgpSpec::Synthetic,
        net,
        &mut SeedStream::new(seed).rng("dgp", &[]),
    )
}

/// One draw from the linear-Gaussian DGP.
pub fn dgp_linear(net: &Network, params: &LinearDgp, seed: u64) -> Result<Frame> {
    simulate(
        &DgpSpec::Linear(params.clone()),
        net,
        &mut SeedStream::new(seed).rng("dgp", &[]),
    )
}

/// Monte Carlo ground truth with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub psi: f64,
    pub mc_se: f64,
    pub reps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Averages `(1/n)Σ Y_i(d(A_i), s_i(d(A)))` over `reps` fresh draws of
/// `(L, A, Y)` on the fixed network.
pub fn ground_truth(
    dgp: &DgpSpec,
    policy: &Policy,
    net: &Network,
    reps: usize,
    seed: u64,
) -> Result<GroundTruth> {
    if reps == 0 {
        return Err(Error::Config(
            "ground truth needs at least one replicate".into(),
        ));
    }
    let stream = SeedStream::new(seed);
    let n = net.n();
    let mut means = Vec::with_capacity(reps);
    for r in 0..reps {
        let mut rng = stream.rng("ground_truth", &[r as u64]);
        let covariates = dgp.draw_covariates(n, &mut rng);
        let terms = dgp.terms(&covariates, net)?;
        let frame = Frame::new(covariates, vec![0.0; n], None)?;
        let mut a_d = Vec::with_capacity(n);
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let a = terms.exposure_mean[i] + terms.exposure_sd * z;
            let row = frame.row(i);
            policy.check_invertible(&row, i)?;
            a_d.push(policy.apply(a, &row));
        }
        let a_s_d = structural_sum(net, &a_d);
        let total: f64 = (0..n)
            .map(|i| {
                truncated_normal(
                    dgp.outcome_mean(terms.base[i], a_d[i], a_s_d[i]),
                    terms.outcome_sd,
                    &mut rng,
                )
            })
            .sum();
        means.push(total / n as f64);
    }
    let psi = means.iter().sum::<f64>() / reps as f64;
    let mc_se = if reps > 1 {
        let var = means.iter().map(|m| (m - psi).powi(2)).sum::<f64>() / (reps - 1) as f64;
        (var / reps as f64).sqrt()
    } else {
        f64::NAN
    };
    let warning = (reps < 100)
        .then(|| format!("only {reps} Monte Carlo replicates; the standard error is unreliable"));
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(GroundTruth {
        psi,
        mc_se,
        reps,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m_l_hand_values() {
        // L1=0.4 passes only 0.3, L2=95 only 90, L3=6 only 5: three times −2.
        assert_eq!(m_l(0.4, 95.0, 6.0, 0.0), -6.0);
        assert_eq!(m_l(0.3, 90.0, 5.0, 0.0), 0.0);
        assert_eq!(m_l(0.8, 120.0, 20.0, 1.0), -6.0);
        assert_eq!(m_l(0.6, 105.0, 12.0, 1.0), -18.0);
    }

    #[test]
    fn exposure_and_outcome_functions() {
        assert_eq!(m_a(-3.0), 0.0);
        assert_eq!(m_a(0.0), -2.0);
        assert_eq!(m_a(2.0), -3.0);
        assert_eq!(m_a(4.0), 0.0);
        assert_eq!(m_as(0.0), 0.0);
        assert_eq!(m_as(7.0), 4.0);
        assert_eq!(m_as(13.0), 5.0);
    }

    #[test]
    fn truncation_bounds_hold() {
        let mut rng = SeedStream::new(1).rng("t", &[]);
        for _ in 0..10_000 {
            let v = truncated_normal(3.0, 2.0, &mut rng);
            assert!((v - 3.0).abs() <= 12.0);
        }
    }

    #[test]
    fn synthetic_frame_shape_and_determinism() {
        let net = crate::network::erdos_renyi(100, 0.03, 2).unwrap();
        let f = dgp_synthetic(&net, 5).unwrap();
        assert_eq!(f.n(), 100);
        assert_eq!(
            f.covariate_names().collect::<Vec<_>>(),
            vec!["L1", "L2", "L3", "L4"]
        );
        assert_eq!(f, dgp_synthetic(&net, 5).unwrap());
        assert_ne!(f, dgp_synthetic(&net, 6).unwrap());
    }

    #[test]
    fn isolated_node_linear_mean() {
        let net = Network::edgeless(1);
        let dgp = DgpSpec::linear();
        let cov: Vec<Column> = (1..=16)
            .map(|k| Column::new(format!("L{k}"), vec![0.5]))
            .collect();
        let terms = dgp.terms(&cov, &net).unwrap();
        assert!((terms.exposure_mean[0] - (8.0 - 50.0)).abs() < 1e-12);
        assert!((dgp.outcome_mean(terms.base[0], 1.0, 0.0) - (1.0 + 8.0 - 50.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_coefficients_center_exposure() {
        let dgp = DgpSpec::Linear(LinearDgp {
            coefficient: 0.0,
            ..LinearDgp::default()
        });
        let net = Network::edgeless(3);
        let mut rng = SeedStream::new(0).rng("c", &[]);
        let cov = dgp.draw_covariates(3, &mut rng);
        let t = dgp.terms(&cov, &net).unwrap();
        assert!(t.exposure_mean.iter().all(|&m| m == -50.0));
    }
}
