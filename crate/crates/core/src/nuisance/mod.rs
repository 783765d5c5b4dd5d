//! Cross-fitted nuisance estimation: the outcome regression `m` and the
//! combined weight `ρ = r·w`, the latter from a classifier that separates
//! natural from policy-shifted feature rows.

use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SummarizedFrame;
use crate::error::{Error, Result};
use crate::policy::Policy;

mod boost;
mod folds;
mod learners;

pub use folds::{make_folds, FoldPlan};
pub use learners::{fit_classifier, fit_regressor, LearnerSpec, Model};

pub(crate) use learners::cholesky_solve as least_squares;
pub(crate) use learners::expit;
use learners::P_EPS;

/// Folds whose training complement is smaller than this trigger a fallback to K=2.
pub const MIN_TRAINING_ROWS: usize = 20;

static PURITY_CHECKS: AtomicUsize = AtomicUsize::new(0);
static PURITY_VIOLATIONS: AtomicUsize = AtomicUsize::new(0);

/// Process-wide `(checked predictions, violations)` of the cross-fit audit.
pub fn purity_totals() -> (usize, usize) {
    (
        PURITY_CHECKS.load(Ordering::Relaxed),
        PURITY_VIOLATIONS.load(Ordering::Relaxed),
    )
}

/// Which columns enter the nuisance feature matrix besides the exposure
/// summary and covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    /// The unit's own exposure `A_i` (shifted alongside the summary).
    #[serde(default = "yes")]
    pub own_exposure: bool,
    #[serde(default = "yes")]
    pub degree: bool,
}

fn yes() -> bool {
    true
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            own_exposure: true,
            degree: true,
        }
    }
}

/// Feature matrix `[A, A^s, L.., degree]`, or its shifted counterpart
/// `[d(A), s(d(A)), L.., degree]`.
pub fn design(sf: &SummarizedFrame, cfg: &FeatureConfig, shifted: bool) -> Array2<f64> {
    let (a, a_s) = if shifted {
        (&sf.a_d, &sf.a_s_d)
    } else {
        (&sf.a, &sf.a_s)
    };
    let mut cols: Vec<&[f64]> = Vec::new();
    if cfg.own_exposure {
        cols.push(a);
    }
    cols.push(a_s);
    for c in &sf.covariates {
        cols.push(&c.values);
    }
    let p = cols.len() + usize::from(cfg.degree);
    Array2::from_shape_fn((sf.n, p), |(i, j)| {
        if j < cols.len() {
            cols[j][i]
        } else {
            sf.degrees[i] as f64
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRisk {
    pub learner: String,
    pub risk: f64,
}

/// Outcome of discrete super-learner selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub selected: LearnerSpec,
    pub index: usize,
    pub risks: Vec<CandidateRisk>,
}

/// Counts of out-of-fold predictions checked against the exact training rows
/// of the model that produced them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurityAudit {
    pub checked: usize,
    pub violations: usize,
}

impl PurityAudit {
    fn merge(self, other: PurityAudit) -> PurityAudit {
        PurityAudit {
            checked: self.checked + other.checked,
            violations: self.violations + other.violations,
        }
    }
}

struct FoldOutput {
    held: Vec<usize>,
    natural: Vec<f64>,
    shifted: Vec<f64>,
    audit: PurityAudit,
}

/// Fits every (learner, fold) pair, training on the fold complement and
/// predicting the held-out rows at natural and shifted features. Results come
/// back in (learner, fold) order regardless of scheduling.
fn cross_fit<F>(plan: &FoldPlan, n_learners: usize, fit: F) -> Result<Vec<Vec<FoldOutput>>>
where
    F: Fn(usize, &[usize], &[usize]) -> Result<(Vec<f64>, Vec<f64>)> + Sync,
{
    let k = plan.k();
    let tasks: Vec<(usize, usize)> = (0..n_learners)
        .flat_map(|l| (0..k).map(move |f| (l, f)))
        .collect();
    let outputs: Vec<Result<FoldOutput>> = tasks
        .par_iter()
        .map(|&(l, f)| {
            let train = plan.training(f);
            let held = plan.members(f);
            let (natural, shifted) = fit(l, &train, &held)?;
            let mut seen = vec![false; plan.n()];
            for &i in &train {
                seen[i] = true;
            }
            let audit = PurityAudit {
                checked: held.len(),
                violations: held.iter().filter(|&&i| seen[i]).count(),
            };
            Ok(FoldOutput {
                held,
                natural,
                shifted,
                audit,
            })
        })
        .collect();
    let mut by_learner: Vec<Vec<FoldOutput>> =
        (0..n_learners).map(|_| Vec::with_capacity(k)).collect();
    for ((l, _), out) in tasks.into_iter().zip(outputs) {
        by_learner[l].push(out?);
    }
    Ok(by_learner)
}

/// Scatters per-fold predictions back to unit order.
fn assemble(n: usize, folds: &[FoldOutput]) -> (Vec<f64>, Vec<f64>, PurityAudit) {
    let mut nat = vec![f64::NAN; n];
    let mut shift = vec![f64::NAN; n];
    let mut audit = PurityAudit::default();
    for f in folds {
        for (j, &i) in f.held.iter().enumerate() {
            nat[i] = f.natural[j];
            shift[i] = f.shifted[j];
        }
        audit = audit.merge(f.audit);
    }
    (nat, shift, audit)
}

fn record_audit(audit: PurityAudit) {
    PURITY_CHECKS.fetch_add(audit.checked, Ordering::Relaxed);
    PURITY_VIOLATIONS.fetch_add(audit.violations, Ordering::Relaxed);
}

fn pick(library: &[LearnerSpec], risks: &[f64]) -> Selection {
    let mut index = 0;
    for (l, &r) in risks.iter().enumerate() {
        if r < risks[index] || (risks[index].is_nan() && !r.is_nan()) {
            index = l;
        }
    }
    Selection {
        selected: library[index].clone(),
        index,
        risks: library
            .iter()
            .zip(risks)
            .map(|(s, &risk)| CandidateRisk {
                learner: s.to_string(),
                risk,
            })
            .collect(),
    }
}

fn check_inputs(
    x_nat: ArrayView2<'_, f64>,
    x_shift: ArrayView2<'_, f64>,
    plan: &FoldPlan,
) -> Result<()> {
    if x_nat.dim() != x_shift.dim() {
        return Err(Error::LengthMismatch {
            what: "shifted feature rows".into(),
            expected: x_nat.nrows(),
            found: x_shift.nrows(),
        });
    }
    if plan.n() != x_nat.nrows() {
        return Err(Error::InvalidFolds(format!(
            "fold plan covers {} units, data has {}",
            plan.n(),
            x_nat.nrows()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MeanFit {
    pub natural: Vec<f64>,
    pub shifted: Vec<f64>,
    pub selection: Selection,
    pub purity: PurityAudit,
}

/// Discrete super learner for `E[Y | features]`, selected by cross-validated
/// MSE with ties going to the lowest library index.
pub fn fit_conditional_mean(
    x_nat: ArrayView2<'_, f64>,
    x_shift: ArrayView2<'_, f64>,
    y: &[f64],
    library: &[LearnerSpec],
    plan: &FoldPlan,
) -> Result<MeanFit> {
    if library.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    check_inputs(x_nat, x_shift, plan)?;
    if y.len() != x_nat.nrows() {
        return Err(Error::LengthMismatch {
            what: "outcome".into(),
            expected: x_nat.nrows(),
            found: y.len(),
        });
    }
    let n = y.len();
    let outputs = cross_fit(plan, library.len(), |l, train, held| {
        let xt = x_nat.select(Axis(0), train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = fit_regressor(&library[l], xt.view(), &yt)?;
        Ok((
            model.predict(x_nat.select(Axis(0), held).view()),
            model.predict(x_shift.select(Axis(0), held).view()),
        ))
    })?;
    let assembled: Vec<_> = outputs.iter().map(|f| assemble(n, f)).collect();
    let risks: Vec<f64> = assembled
        .iter()
        .map(|(nat, _, _)| nat.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n as f64)
        .collect();
    let selection = pick(library, &risks);
    let audit = assembled
        .iter()
        .fold(PurityAudit::default(), |a, (_, _, b)| a.merge(*b));
    record_audit(audit);
    let (natural, shifted, _) = assembled
        .into_iter()
        .nth(selection.index)
        .expect("index in range");
    Ok(MeanFit {
        natural,
        shifted,
        selection,
        purity: audit,
    })
}

#[derive(Debug, Clone)]
pub struct RatioFit {
    /// `ρ̂` at each unit's natural features.
    pub natural: Vec<f64>,
    /// `ρ̂` at each unit's shifted features.
    pub shifted: Vec<f64>,
    pub selection: Option<Selection>,
    pub clip_count: usize,
    pub purity: PurityAudit,
}

impl RatioFit {
    /// The exact weight of an identity policy.
    pub fn identity(n: usize) -> Self {
        Self {
            natural: vec![1.0; n],
            shifted: vec![1.0; n],
            selection: None,
            clip_count: 0,
            purity: PurityAudit::default(),
        }
    }
}

/// Classifier-odds estimate of the shifted-to-natural density ratio of the
/// feature rows. Each fold trains on its complement stacked twice, natural
/// rows labelled 0 and shifted rows labelled 1, and the candidate with the
/// lowest cross-validated log-loss is kept.
pub fn fit_density_ratio(
    x_nat: ArrayView2<'_, f64>,
    x_shift: ArrayView2<'_, f64>,
    library: &[LearnerSpec],
    plan: &FoldPlan,
    clip: (f64, f64),
) -> Result<RatioFit> {
    if library.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    if !(clip.0 > 0.0 && clip.0 < clip.1) {
        return Err(Error::Config(format!(
            "clip bounds must satisfy 0 < lo < hi, got ({}, {})",
            clip.0, clip.1
        )));
    }
    check_inputs(x_nat, x_shift, plan)?;
    let n = x_nat.nrows();
    let outputs = cross_fit(plan, library.len(), |l, train, held| {
        let mut xt = x_nat.select(Axis(0), train);
        xt.append(Axis(0), x_shift.select(Axis(0), train).view())
            .expect("matching widths");
        let mut labels = vec![0.0; train.len()];
        labels.resize(2 * train.len(), 1.0);
        let model = fit_classifier(&library[l], xt.view(), &labels)?;
        Ok((
            model.predict(x_nat.select(Axis(0), held).view()),
            model.predict(x_shift.select(Axis(0), held).view()),
        ))
    })?;
    let assembled: Vec<_> = outputs.iter().map(|f| assemble(n, f)).collect();
    let risks: Vec<f64> = assembled
        .iter()
        .map(|(p0, p1, _)| {
            let loss: f64 = p0
                .iter()
                .zip(p1)
                .map(|(&a, &b)| {
                    -(1.0 - a.clamp(P_EPS, 1.0 - P_EPS)).ln() - b.clamp(P_EPS, 1.0 - P_EPS).ln()
                })
                .sum();
            loss / (2 * n) as f64
        })
        .collect();
    let selection = pick(library, &risks);
    let audit = assembled
        .iter()
        .fold(PurityAudit::default(), |a, (_, _, b)| a.merge(*b));
    record_audit(audit);
    let (p_nat, p_shift, _) = assembled
        .into_iter()
        .nth(selection.index)
        .expect("index in range");
    let mut clip_count = 0;
    let mut odds = |p: &f64| {
        let raw = if *p >= 1.0 {
            f64::INFINITY
        } else {
            p / (1.0 - p)
        };
        let clipped = if raw.is_nan() {
            clip.0
        } else {
            raw.clamp(clip.0, clip.1)
        };
        if clipped != raw {
            clip_count += 1;
        }
        clipped
    };
    let natural: Vec<f64> = p_nat.iter().map(&mut odds).collect();
    let shifted: Vec<f64> = p_shift.iter().map(&mut odds).collect();
    Ok(RatioFit {
        natural,
        shifted,
        selection: Some(selection),
        clip_count,
        purity: audit,
    })
}

/// Learner libraries, fold count, clipping and feature layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuisanceConfig {
    #[serde(default = "LearnerSpec::default_regression_library")]
    pub outcome_library: Vec<LearnerSpec>,
    #[serde(default = "LearnerSpec::default_classification_library")]
    pub ratio_library: Vec<LearnerSpec>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_clip")]
    pub clip: (f64, f64),
    #[serde(default)]
    pub features: FeatureConfig,
}

fn default_folds() -> usize {
    5
}

fn default_clip() -> (f64, f64) {
    (1e-3, 1e3)
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            outcome_library: LearnerSpec::default_regression_library(),
            ratio_library: LearnerSpec::default_classification_library(),
            folds: default_folds(),
            clip: default_clip(),
            features: FeatureConfig::default(),
        }
    }
}

/// Cross-fitted nuisances for every unit.
#[derive(Debug, Clone)]
pub struct NuisanceFit {
    pub m_natural: Vec<f64>,
    pub m_shifted: Vec<f64>,
    pub rho: Vec<f64>,
    /// `ρ̂` evaluated at shifted features; used by the covariate-mode TMLE update.
    pub rho_shifted: Vec<f64>,
    pub outcome_selection: Option<Selection>,
    pub ratio_selection: Option<Selection>,
    pub clip_count: usize,
    pub folds: usize,
    pub purity: PurityAudit,
}

impl NuisanceFit {
    /// Assembles a fit from externally supplied nuisance values, for example
    /// the true functions of a simulation.
    pub fn from_parts(
        m_natural: Vec<f64>,
        m_shifted: Vec<f64>,
        rho: Vec<f64>,
        rho_shifted: Vec<f64>,
    ) -> Result<Self> {
        let n = m_natural.len();
        for (what, v) in [
            ("m_shifted", &m_shifted),
            ("rho", &rho),
            ("rho_shifted", &rho_shifted),
        ] {
            if v.len() != n {
                return Err(Error::LengthMismatch {
                    what: what.into(),
                    expected: n,
                    found: v.len(),
                });
            }
        }
        Ok(Self {
            m_natural,
            m_shifted,
            rho,
            rho_shifted,
            outcome_selection: None,
            ratio_selection: None,
            clip_count: 0,
            folds: 0,
            purity: PurityAudit::default(),
        })
    }

    pub fn n(&self) -> usize {
        self.m_natural.len()
    }
}

/// Fits both nuisances on a summarized frame with an outcome.
pub fn fit_nuisances(
    sf: &SummarizedFrame,
    policy: &Policy,
    cfg: &NuisanceConfig,
    seed: u64,
) -> Result<NuisanceFit> {
    let y = sf
        .outcome
        .as_deref()
        .ok_or_else(|| Error::MissingColumn("outcome".into()))?;
    let n = sf.n;
    let mut plan = make_folds(n, cfg.folds, seed)?;
    if plan.min_training_size() < MIN_TRAINING_ROWS && plan.k() != 2 {
        log::warn!(
            "fold complements below {MIN_TRAINING_ROWS} rows with K={}; falling back to K=2",
            plan.k()
        );
        plan = make_folds(n, 2, seed)?;
    }
    let x_nat = design(sf, &cfg.features, false);
    let x_shift = design(sf, &cfg.features, true);
    let m = fit_conditional_mean(x_nat.view(), x_shift.view(), y, &cfg.outcome_library, &plan)?;
    let r = if policy.is_identity() {
        RatioFit::identity(n)
    } else {
        fit_density_ratio(
            x_nat.view(),
            x_shift.view(),
            &cfg.ratio_library,
            &plan,
            cfg.clip,
        )?
    };
    if r.clip_count > 0 {
        log::debug!(
            "{} density-ratio values clipped to {:?}",
            r.clip_count,
            cfg.clip
        );
    }
    Ok(NuisanceFit {
        m_natural: m.natural,
        m_shifted: m.shifted,
        rho: r.natural,
        rho_shifted: r.shifted,
        outcome_selection: Some(m.selection),
        ratio_selection: r.selection,
        clip_count: r.clip_count,
        folds: plan.k(),
        purity: m.purity.merge(r.purity),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{summarize, Column, Frame, SummarySpec};
    use crate::network::Network;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn line_data(n: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
        let mut rng = crate::rng::rng_from_seed(seed, "line");
        let noise = Normal::new(0.0, 0.01).unwrap();
        let x = Array2::from_shape_fn((n, 1), |_| rng.random::<f64>() * 10.0);
        let y = x
            .column(0)
            .iter()
            .map(|&v| 2.0 * v + noise.sample(&mut rng))
            .collect();
        (x, y)
    }

    #[test]
    fn selects_linear_on_linear_data() {
        let (x, y) = line_data(200, 1);
        let plan = make_folds(200, 5, 2).unwrap();
        let lib = [LearnerSpec::MeanOnly, LearnerSpec::Linear];
        let fit = fit_conditional_mean(x.view(), x.view(), &y, &lib, &plan).unwrap();
        assert_eq!(fit.selection.index, 1);
        assert!(fit.selection.risks[1].risk < fit.selection.risks[0].risk);
        assert_eq!(fit.purity.violations, 0);
        assert_eq!(fit.purity.checked, 400);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let lib = [LearnerSpec::MeanOnly, LearnerSpec::Linear];
        assert_eq!(pick(&lib, &[1.0, 1.0]).index, 0);
        assert_eq!(pick(&lib, &[2.0, 1.0]).index, 1);
    }

    #[test]
    fn empty_library_is_an_error() {
        let (x, y) = line_data(30, 1);
        let plan = make_folds(30, 3, 0).unwrap();
        assert!(matches!(
            fit_conditional_mean(x.view(), x.view(), &y, &[], &plan),
            Err(Error::EmptyLibrary)
        ));
        assert!(fit_density_ratio(x.view(), x.view(), &[], &plan, (1e-3, 1e3)).is_err());
    }

    #[test]
    fn linear_fit_shift_difference_is_coefficient_times_degree() {
        let n = 300;
        let net = crate::network::erdos_renyi(n, 0.02, 5).unwrap();
        let mut rng = crate::rng::rng_from_seed(4, "frame");
        let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let a_s = SummarySpec::neighbor_sum().apply(&net, &a).unwrap();
        let y: Vec<f64> = a_s
            .iter()
            .map(|s| 1.5 * s + rng.random::<f64>() * 0.1)
            .collect();
        let frame = Frame::new(vec![], a, Some(y)).unwrap();
        let policy = Policy::additive(1.0).unwrap();
        let sf = summarize(&frame, &net, &SummarySpec::neighbor_sum(), &policy).unwrap();
        let cfg = FeatureConfig {
            own_exposure: false,
            degree: false,
        };
        let x0 = design(&sf, &cfg, false);
        let x1 = design(&sf, &cfg, true);
        let plan = make_folds(n, 5, 0).unwrap();
        let m = fit_conditional_mean(
            x0.view(),
            x1.view(),
            sf.outcome.as_deref().unwrap(),
            &[LearnerSpec::Linear],
            &plan,
        )
        .unwrap();
        // Each fold's slope is close to 1.5; the difference must be exactly slope × degree.
        let slopes: Vec<f64> = (0..n)
            .filter(|&i| sf.degrees[i] > 0)
            .map(|i| (m.shifted[i] - m.natural[i]) / sf.degrees[i] as f64)
            .collect();
        for f in 0..5 {
            let members = plan.members(f);
            let s: Vec<f64> = members
                .iter()
                .filter(|&&i| sf.degrees[i] > 0)
                .map(|&i| (m.shifted[i] - m.natural[i]) / sf.degrees[i] as f64)
                .collect();
            for w in s.windows(2) {
                assert!((w[0] - w[1]).abs() < 1e-8);
            }
        }
        assert!(slopes.iter().all(|s| (s - 1.5).abs() < 0.05));
        for i in 0..n {
            if sf.degrees[i] == 0 {
                assert!((m.shifted[i] - m.natural[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn identity_policy_short_circuits_ratio() {
        let n = 60;
        let net = Network::edgeless(n);
        let frame = Frame::new(
            vec![Column::new("L", (0..n).map(|i| i as f64).collect())],
            (0..n).map(|i| (i % 7) as f64).collect(),
            Some((0..n).map(|i| (i % 5) as f64).collect()),
        )
        .unwrap();
        let policy = Policy::multiplicative(1.0).unwrap();
        let spec = SummarySpec::neighbor_sum().with_self(true);
        let sf = summarize(&frame, &net, &spec, &policy).unwrap();
        let fit = fit_nuisances(&sf, &policy, &NuisanceConfig::default(), 1).unwrap();
        assert!(fit.rho.iter().all(|&r| r == 1.0));
        assert_eq!(fit.m_natural, fit.m_shifted);
        assert_eq!(fit.purity.violations, 0);
    }

    #[test]
    fn ratio_is_clipped_and_counted() {
        // Perfectly separable natural vs shifted rows drive odds to the bounds.
        let n = 100;
        let x0 = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let x1 = Array2::from_shape_fn((n, 1), |(i, _)| 1000.0 + i as f64);
        let plan = make_folds(n, 5, 0).unwrap();
        let lib = [LearnerSpec::boosted(50, 0.5, 2)];
        let r = fit_density_ratio(x0.view(), x1.view(), &lib, &plan, (0.01, 100.0)).unwrap();
        assert!(r
            .natural
            .iter()
            .chain(&r.shifted)
            .all(|&v| (0.01..=100.0).contains(&v)));
        assert!(r.clip_count > 0);
    }

    #[test]
    fn small_n_falls_back_to_two_folds() {
        let n = 22;
        let net = Network::edgeless(n);
        let frame = Frame::new(
            vec![],
            (0..n).map(|i| i as f64).collect(),
            Some((0..n).map(|i| (2 * i) as f64).collect()),
        )
        .unwrap();
        let policy = Policy::additive(0.5).unwrap();
        let sf = summarize(
            &frame,
            &net,
            &SummarySpec::neighbor_sum().with_self(true),
            &policy,
        )
        .unwrap();
        let cfg = NuisanceConfig {
            outcome_library: vec![LearnerSpec::Linear],
            ratio_library: vec![LearnerSpec::Linear],
            ..NuisanceConfig::default()
        };
        let fit = fit_nuisances(&sf, &policy, &cfg, 3).unwrap();
        assert_eq!(fit.folds, 2);
    }
}
