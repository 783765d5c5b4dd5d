//! Replicated comparison of estimators across networks and sample sizes.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    efficiency_bound, ground_truth, simulate, simulate_with_covariates, unit_truths, DgpSpec,
};
use crate::data::{summarize, Column, Frame, SummarySpec};
use crate::error::{Error, Result};
use crate::estimate::{confidence_interval, one_step, tmle, Estimate, InferenceContext, TmleMode};
use crate::network::{DependencyStructure, Network, NetworkKind};
use crate::nuisance::{fit_nuisances, FeatureConfig, NuisanceConfig, NuisanceFit, PurityAudit};
use crate::policy::Policy;
use crate::rng::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMethod {
    /// TMLE with the network summary and dependence-aware variance.
    NetworkTmle,
    /// As above with the clever-covariate fluctuation.
    NetworkTmleCovariate,
    NetworkOnestep,
    /// TMLE that ignores the network: own exposure only, independent units.
    IidTmle,
    /// OLS of `Y` on `(1, A, L)` with an independent-units sandwich variance.
    LinearRegression,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 5] = [
        BenchMethod::NetworkTmle,
        BenchMethod::NetworkTmleCovariate,
        BenchMethod::NetworkOnestep,
        BenchMethod::IidTmle,
        BenchMethod::LinearRegression,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            BenchMethod::NetworkTmle => "network-tmle",
            BenchMethod::NetworkTmleCovariate => "network-tmle-covariate",
            BenchMethod::NetworkOnestep => "network-onestep",
            BenchMethod::IidTmle => "iid-tmle",
            BenchMethod::LinearRegression => "linear-regression",
        }
    }

    fn uses_network_fit(&self) -> bool {
        matches!(
            self,
            BenchMethod::NetworkTmle
                | BenchMethod::NetworkTmleCovariate
                | BenchMethod::NetworkOnestep
        )
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Source of the per-cell estimand value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthMode {
    /// Closed form; conditional on the covariates when they are held fixed.
    #[default]
    Exact,
    MonteCarlo {
        reps: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(default = "default_networks")]
    pub networks: Vec<NetworkKind>,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<BenchMethod>,
    #[serde(default)]
    pub dgp: DgpSpec,
    #[serde(default = "default_policy")]
    pub policy: Policy,
    #[serde(default = "SummarySpec::neighbor_sum")]
    pub summary: SummarySpec,
    #[serde(default)]
    pub nuisance: NuisanceConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    /// Draw covariates once per cell and reuse them in every replicate.
    #[serde(default)]
    pub fixed_covariates: bool,
    #[serde(default)]
    pub truth: TruthMode,
    /// Replicates for the efficiency bound of each cell; skipped when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_reps: Option<usize>,
}

fn default_networks() -> Vec<NetworkKind> {
    vec![
        NetworkKind::ErdosRenyi { mean_degree: 3.0 },
        NetworkKind::WattsStrogatz { k: 6, beta: 0.5 },
        NetworkKind::ScaleFree {
            lambda: 3.5,
            m: crate::network::DEFAULT_SCALE_FREE_EDGE_MULTIPLIER,
        },
    ]
}
fn default_n_grid() -> Vec<usize> {
    vec![500, 1000, 2000, 4000, 8000]
}
fn default_reps() -> usize {
    200
}
fn default_methods() -> Vec<BenchMethod> {
    BenchMethod::ALL.to_vec()
}
fn default_policy() -> Policy {
    Policy::additive(0.25).expect("finite delta")
}
fn default_alpha() -> f64 {
    0.05
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            networks: default_networks(),
            n_grid: default_n_grid(),
            reps: default_reps(),
            methods: default_methods(),
            dgp: DgpSpec::default(),
            policy: default_policy(),
            summary: SummarySpec::neighbor_sum(),
            nuisance: NuisanceConfig::default(),
            alpha: default_alpha(),
            seed: 0,
            fixed_covariates: false,
            truth: TruthMode::default(),
            bound_reps: None,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.networks.is_empty() || self.n_grid.is_empty() || self.methods.is_empty() {
            return Err(Error::Config(
                "networks, n_grid and methods must be non-empty".into(),
            ));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be positive".into()));
        }
        if let Some(&n) = self.n_grid.iter().find(|&&n| n < 4) {
            return Err(Error::Config(format!("sample size {n} is too small")));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        if self.fixed_covariates && matches!(self.truth, TruthMode::MonteCarlo { .. }) {
            return Err(Error::Config(
                "Monte Carlo truth redraws covariates; use exact truth with fixed covariates"
                    .into(),
            ));
        }
        for l in self
            .nuisance
            .outcome_library
            .iter()
            .chain(&self.nuisance.ratio_library)
        {
            l.validate()?;
        }
        Ok(())
    }

    fn learner_label(&self, method: BenchMethod) -> String {
        if method == BenchMethod::LinearRegression {
            return "ols".into();
        }
        match self.nuisance.outcome_library.as_slice() {
            [only] => only.to_string(),
            _ => "super-learner".into(),
        }
    }
}

/// One estimator on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub network: String,
    pub n: usize,
    pub rep: usize,
    pub method: BenchMethod,
    pub learner: String,
    pub truth: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<f64>,
    /// `σ̂²`, so that `σ̂²/n` estimates `Var(ψ̂)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covered: Option<bool>,
    /// `mean(φ*) − ψ̂` for targeted estimates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eif_residual: Option<f64>,
    pub clip_count: usize,
    pub variance_floored: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Summary of one (network, n, method) cell over its replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub network: String,
    pub n: usize,
    pub k_max: usize,
    pub method: BenchMethod,
    pub learner: String,
    pub truth: f64,
    pub reps: usize,
    pub failures: usize,
    pub mean_psi: f64,
    pub bias: f64,
    pub bias_pct: f64,
    /// Empirical variance of `ψ̂` across replicates.
    pub variance: f64,
    /// Mean of the estimated `σ̂²/n`.
    pub mean_estimated_variance: f64,
    pub mse: f64,
    pub coverage_pct: f64,
    pub ci_width: f64,
    /// `√n · bias / log n`.
    pub scaled_bias: f64,
    /// `n · MSE / log² n`.
    pub scaled_mse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub efficiency_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub config: BenchmarkConfig,
    pub records: Vec<BenchmarkRecord>,
    pub aggregates: Vec<Aggregate>,
    pub purity: PurityAudit,
}

impl BenchmarkResult {
    pub fn aggregate(&self, network: &str, n: usize, method: BenchMethod) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.network == network && a.n == n && a.method == method)
    }

    /// Writes `records.jsonl`, `aggregates.json` and `table.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("records.jsonl");
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        for r in &self.records {
            serde_json::to_writer(&mut f, r)?;
            f.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("aggregates.json");
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::to_writer_pretty(f, &self.aggregates)?;
        self.write_table(dir.join("table.csv"))
    }

    /// The comparison table: `method, learner, bias_pct, variance, coverage_pct, ci_width`.
    pub fn write_table(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record([
            "network",
            "n",
            "method",
            "learner",
            "bias_pct",
            "variance",
            "coverage_pct",
            "ci_width",
        ])?;
        for a in &self.aggregates {
            w.write_record([
                a.network.clone(),
                a.n.to_string(),
                a.method.label().to_string(),
                a.learner.clone(),
                format!("{:.4}", a.bias_pct),
                format!("{:.6e}", a.variance),
                format!("{:.2}", a.coverage_pct),
                format!("{:.6}", a.ci_width),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(())
    }
}

struct Cell {
    label: String,
    n: usize,
    net: Network,
    covariates: Option<Vec<Column>>,
    truth: f64,
    bound: Option<f64>,
}

pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkResult> {
    cfg.validate()?;
    let stream = SeedStream::new(cfg.seed);
    let mut records = Vec::new();
    let mut aggregates = Vec::new();
    let mut purity = PurityAudit::default();
    let mut cell_id = 0u64;
    for kind in &cfg.networks {
        for &n in &cfg.n_grid {
            let cell = build_cell(cfg, &stream, kind, n, cell_id)?;
            log::info!(
                "benchmark cell {} n={n} truth={:.6}",
                cell.label,
                cell.truth
            );
            let per_rep: Vec<(Vec<BenchmarkRecord>, PurityAudit)> = (0..cfg.reps)
                .into_par_iter()
                .map(|rep| run_replicate(cfg, &stream, &cell, cell_id, rep))
                .collect::<Result<_>>()?;
            let mut cell_records = Vec::with_capacity(cfg.reps * cfg.methods.len());
            for (r, p) in per_rep {
                cell_records.extend(r);
                purity.checked += p.checked;
                purity.violations += p.violations;
            }
            for &m in &cfg.methods {
                aggregates.push(aggregate(cfg, &cell, m, &cell_records));
            }
            records.extend(cell_records);
            cell_id += 1;
        }
    }
    Ok(BenchmarkResult {
        config: cfg.clone(),
        records,
        aggregates,
        purity,
    })
}

fn build_cell(
    cfg: &BenchmarkConfig,
    stream: &SeedStream,
    kind: &NetworkKind,
    n: usize,
    id: u64,
) -> Result<Cell> {
    let net_seed: u64 = stream.rng("network", &[id]).random();
    let net = kind.build(n, net_seed)?;
    let covariates = cfg.fixed_covariates.then(|| {
        cfg.dgp
            .draw_covariates(n, &mut stream.rng("covariates", &[id]))
    });
    let truth = match cfg.truth {
        TruthMode::Exact => {
            let t = unit_truths(&cfg.dgp, &cfg.policy, &net, covariates.as_deref())?;
            t.iter().sum::<f64>() / n as f64
        }
        TruthMode::MonteCarlo { reps } => {
            let seed: u64 = stream.rng("truth", &[id]).random();
            ground_truth(&cfg.dgp, &cfg.policy, &net, reps, seed)?.psi
        }
    };
    let bound = match cfg.bound_reps {
        Some(reps) => {
            let seed: u64 = stream.rng("bound", &[id]).random();
            Some(efficiency_bound(&cfg.dgp, &cfg.policy, &net, reps, seed)?.var_psi)
        }
        None => None,
    };
    Ok(Cell {
        label: kind.label().to_string(),
        n,
        net,
        covariates,
        truth,
        bound,
    })
}

fn run_replicate(
    cfg: &BenchmarkConfig,
    stream: &SeedStream,
    cell: &Cell,
    cell_id: u64,
    rep: usize,
) -> Result<(Vec<BenchmarkRecord>, PurityAudit)> {
    let mut rng = stream.rng("replicate", &[cell_id, rep as u64]);
    let frame = match &cell.covariates {
        Some(c) => simulate_with_covariates(&cfg.dgp, &cell.net, c.clone(), &mut rng)?,
        None => simulate(&cfg.dgp, &cell.net, &mut rng)?,
    };
    let fold_seed: u64 = rng.random();
    let mut purity = PurityAudit::default();
    let mut network_fit: Option<std::result::Result<NuisanceFit, String>> = None;
    let mut records = Vec::with_capacity(cfg.methods.len());
    let y = frame.outcome().expect("simulated frames carry an outcome");
    let degrees = cell.net.degrees();
    let dep = cell.net.dependency();
    let ctx = InferenceContext::new(&dep, &degrees).with_alpha(cfg.alpha);
    for &method in &cfg.methods {
        let outcome: std::result::Result<Estimate, String> = if method.uses_network_fit() {
            let fit = network_fit.get_or_insert_with(|| {
                let r = summarize(&frame, &cell.net, &cfg.summary, &cfg.policy)
                    .and_then(|sf| fit_nuisances(&sf, &cfg.policy, &cfg.nuisance, fold_seed));
                if let Ok(nf) = &r {
                    purity.checked += nf.purity.checked;
                    purity.violations += nf.purity.violations;
                }
                r.map_err(|e| e.to_string())
            });
            match fit {
                Ok(nf) => match method {
                    BenchMethod::NetworkTmle => tmle(nf, y, TmleMode::WeightedIntercept, &ctx),
                    BenchMethod::NetworkTmleCovariate => tmle(nf, y, TmleMode::Covariate, &ctx),
                    _ => one_step(nf, y, &ctx),
                }
                .map_err(|e| e.to_string()),
                Err(e) => Err(e.clone()),
            }
        } else if method == BenchMethod::IidTmle {
            iid_tmle(cfg, &frame, fold_seed)
                .map(|(est, p)| {
                    purity.checked += p.checked;
                    purity.violations += p.violations;
                    est
                })
                .map_err(|e| e.to_string())
        } else {
            ols_shift(&frame, &cfg.policy, cfg.alpha).map_err(|e| e.to_string())
        };
        records.push(record(cfg, cell, rep, method, outcome));
    }
    Ok((records, purity))
}

fn record(
    cfg: &BenchmarkConfig,
    cell: &Cell,
    rep: usize,
    method: BenchMethod,
    outcome: std::result::Result<Estimate, String>,
) -> BenchmarkRecord {
    let mut r = BenchmarkRecord {
        network: cell.label.clone(),
        n: cell.n,
        rep,
        method,
        learner: cfg.learner_label(method),
        truth: cell.truth,
        psi: None,
        variance: None,
        ci: None,
        covered: None,
        eif_residual: None,
        clip_count: 0,
        variance_floored: false,
        error: None,
    };
    match outcome {
        Ok(est) => {
            r.psi = Some(est.psi);
            r.variance = est.variance;
            r.ci = est.ci;
            r.covered = est.covers(cell.truth);
            r.eif_residual = est.diagnostics.eif_residual;
            r.clip_count = est.diagnostics.clip_count;
            r.variance_floored = est.diagnostics.variance_floored;
        }
        Err(e) => {
            log::warn!("{} rep {rep} {method}: {e}", cell.label);
            r.error = Some(e);
        }
    }
    r
}

/// The network-blind comparator: units treated as independent, the only
/// exposure feature is the unit's own `A`.
fn iid_tmle(cfg: &BenchmarkConfig, frame: &Frame, seed: u64) -> Result<(Estimate, PurityAudit)> {
    let n = frame.n();
    let net = Network::edgeless(n);
    let spec = SummarySpec::neighbor_sum()
        .with_self(true)
        .with_covariates(Vec::new());
    let sf = summarize(frame, &net, &spec, &cfg.policy)?;
    let nuisance = NuisanceConfig {
        features: FeatureConfig {
            own_exposure: false,
            degree: false,
        },
        ..cfg.nuisance.clone()
    };
    let nf = fit_nuisances(&sf, &cfg.policy, &nuisance, seed)?;
    let y = frame.outcome().expect("simulated frames carry an outcome");
    let dep = DependencyStructure::independent(n);
    let degrees = vec![0; n];
    let ctx = InferenceContext::new(&dep, &degrees).with_alpha(cfg.alpha);
    let est = tmle(&nf, y, TmleMode::WeightedIntercept, &ctx)?;
    Ok((est, nf.purity))
}

/// `ψ = Ȳ + β̂_A · mean(d(A) − A)` from OLS of `Y` on `(1, A, L)`, with the
/// delta-method variance for independent units.
pub(crate) fn ols_shift(frame: &Frame, policy: &Policy, alpha: f64) -> Result<Estimate> {
    let n = frame.n();
    let y = frame
        .outcome()
        .ok_or_else(|| Error::MissingColumn("outcome".into()))?;
    let a = frame.exposure();
    let covs = frame.covariates();
    let p = 2 + covs.len();
    let x = Array2::from_shape_fn((n, p), |(i, j)| match j {
        0 => 1.0,
        1 => a[i],
        _ => covs[j - 2].values[i],
    });
    let xtx = x.t().dot(&x);
    let xty = x.t().dot(&Array1::from(y.to_vec()));
    let beta = crate::nuisance::least_squares(&xtx, &xty)
        .ok_or_else(|| Error::Config("singular design in linear regression".into()))?;
    let resid: Vec<f64> = (0..n).map(|i| y[i] - x.row(i).dot(&beta)).collect();
    let shift: Vec<f64> = (0..n)
        .map(|i| policy.apply(a[i], &frame.row(i)) - a[i])
        .collect();
    let nf = n as f64;
    let ybar = y.iter().sum::<f64>() / nf;
    let dbar = shift.iter().sum::<f64>() / nf;
    let psi = ybar + beta[1] * dbar;
    // Influence of β̂_A: the A-row of (X'X/n)⁻¹ times x_i e_i.
    let mut e1 = Array1::zeros(p);
    e1[1] = 1.0;
    let row_a = crate::nuisance::least_squares(&(&xtx / nf), &e1)
        .ok_or_else(|| Error::Config("singular design in linear regression".into()))?;
    let inf: Vec<f64> = (0..n)
        .map(|i| {
            let if_beta = x.row(i).dot(&row_a) * resid[i];
            (y[i] - ybar) + beta[1] * (shift[i] - dbar) + dbar * if_beta
        })
        .collect();
    let sigma2 = inf.iter().map(|v| v * v).sum::<f64>() / nf;
    let ci = confidence_interval(psi, sigma2, n, alpha)?;
    Ok(Estimate {
        method: crate::estimate::Method::Plugin,
        psi,
        variance: Some(sigma2),
        se: Some((sigma2 / nf).sqrt()),
        ci: Some(ci),
        alpha,
        n,
        k_max: 0,
        diagnostics: Default::default(),
    })
}

fn aggregate(
    cfg: &BenchmarkConfig,
    cell: &Cell,
    method: BenchMethod,
    records: &[BenchmarkRecord],
) -> Aggregate {
    let rows: Vec<&BenchmarkRecord> = records.iter().filter(|r| r.method == method).collect();
    let ok: Vec<&BenchmarkRecord> = rows.iter().copied().filter(|r| r.psi.is_some()).collect();
    let m = ok.len() as f64;
    let psis: Vec<f64> = ok.iter().filter_map(|r| r.psi).collect();
    let mean_psi = psis.iter().sum::<f64>() / m;
    let bias = mean_psi - cell.truth;
    let variance = if ok.len() > 1 {
        psis.iter().map(|p| (p - mean_psi).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        f64::NAN
    };
    let mse = psis.iter().map(|p| (p - cell.truth).powi(2)).sum::<f64>() / m;
    let n = cell.n as f64;
    let mean_of = |f: &dyn Fn(&BenchmarkRecord) -> Option<f64>| {
        let v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let covered = ok.iter().filter(|r| r.covered == Some(true)).count() as f64;
    let ln = n.ln();
    Aggregate {
        network: cell.label.clone(),
        n: cell.n,
        k_max: cell.net.k_max(),
        method,
        learner: cfg.learner_label(method),
        truth: cell.truth,
        reps: ok.len(),
        failures: rows.len() - ok.len(),
        mean_psi,
        bias,
        bias_pct: 100.0 * bias / cell.truth.abs(),
        variance,
        mean_estimated_variance: mean_of(&|r| r.variance.map(|v| v / n)),
        mse,
        coverage_pct: 100.0 * covered / m,
        ci_width: mean_of(&|r| r.ci.map(|(lo, hi)| hi - lo)),
        scaled_bias: n.sqrt() * bias / ln,
        scaled_mse: n * mse / (ln * ln),
        efficiency_bound: cell.bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::LearnerSpec;

    fn small() -> BenchmarkConfig {
        BenchmarkConfig {
            networks: vec![NetworkKind::ErdosRenyi { mean_degree: 3.0 }],
            n_grid: vec![200],
            reps: 4,
            dgp: DgpSpec::Linear(super::super::LinearDgp {
                n_covariates: 2,
                ..Default::default()
            }),
            nuisance: NuisanceConfig {
                outcome_library: vec![LearnerSpec::Linear],
                ratio_library: vec![LearnerSpec::Linear],
                folds: 2,
                ..NuisanceConfig::default()
            },
            ..BenchmarkConfig::default()
        }
    }

    #[test]
    fn runs_and_is_deterministic() {
        let cfg = small();
        let a = run_benchmark(&cfg).unwrap();
        let b = run_benchmark(&cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records.len(), 4 * BenchMethod::ALL.len());
        assert_eq!(a.aggregates.len(), BenchMethod::ALL.len());
        assert!(a.records.iter().all(|r| r.error.is_none()));
        assert_eq!(a.purity.violations, 0);
        assert!(a.purity.checked > 0);
        let lr = a
            .aggregate("erdos_renyi", 200, BenchMethod::LinearRegression)
            .unwrap();
        assert_eq!(lr.learner, "ols");
        assert_eq!(
            a.aggregate("erdos_renyi", 200, BenchMethod::NetworkTmle)
                .unwrap()
                .learner,
            "linear"
        );
    }

    #[test]
    fn ols_recovers_the_own_effect_without_spillover() {
        let net = Network::edgeless(2000);
        let dgp = DgpSpec::Linear(super::super::LinearDgp {
            n_covariates: 2,
            ..Default::default()
        });
        let frame = simulate(&dgp, &net, &mut SeedStream::new(3).rng("x", &[])).unwrap();
        let policy = Policy::additive(1.0).unwrap();
        let est = ols_shift(&frame, &policy, 0.05).unwrap();
        let ybar = frame.outcome().unwrap().iter().sum::<f64>() / 2000.0;
        assert!((est.psi - ybar - 1.0).abs() < 0.1, "{}", est.psi - ybar);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = small();
        cfg.reps = 0;
        assert!(run_benchmark(&cfg).is_err());
        let mut cfg = small();
        cfg.fixed_covariates = true;
        cfg.truth = TruthMode::MonteCarlo { reps: 10 };
        assert!(cfg.validate().is_err());
        let parsed: BenchmarkConfig =
            serde_json::from_str(r#"{"reps": 3, "methods": ["iid-tmle"]}"#).unwrap();
        assert_eq!(parsed.methods, vec![BenchMethod::IidTmle]);
        assert!(serde_json::from_str::<BenchmarkConfig>(r#"{"repz": 3}"#).is_err());
    }
}
