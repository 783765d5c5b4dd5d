//! Modified treatment policies `d(a, l; δ)`.
//!
//! Three families are shipped:
//!
//! * additive: `d(a) = a + δ`
//! * multiplicative: `d(a) = δ · a`, with `δ > 0`
//! * piecewise additive: `d(a, l) = a + δ · l` when `a` lies in an interval
//!   region, `a` otherwise. `l` is read from an optional multiplier covariate
//!   and is 1 when no multiplier is configured.
//!
//! Every shipped family is monotone nondecreasing in `a` and has derivative 1
//! or δ on each piece, which is what makes the induced weight available in
//! closed form for weighted-linear summaries.

use serde::{Deserialize, Serialize};

use crate::data::{CovariateLookup, SummarySpec};
use crate::error::{Error, Result};
use crate::network::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Additive,
    Multiplicative,
    PiecewiseAdditive,
}

/// Closed interval on the exposure scale; a missing bound is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default)]
    pub upper: Option<f64>,
}

impl Region {
    pub fn new(lower: Option<f64>, upper: Option<f64>) -> Self {
        Self { lower, upper }
    }

    fn lo(&self) -> f64 {
        self.lower.unwrap_or(f64::NEG_INFINITY)
    }

    fn hi(&self) -> f64 {
        self.upper.unwrap_or(f64::INFINITY)
    }

    pub fn contains(&self, a: f64) -> bool {
        a >= self.lo() && a <= self.hi()
    }

    /// Whether shifting the region by `shift` keeps its image disjoint from
    /// the unshifted complement, so the piecewise map stays one-to-one.
    fn shift_is_invertible(&self, shift: f64) -> bool {
        if shift == 0.0 {
            true
        } else if shift > 0.0 {
            self.upper.is_none()
        } else {
            self.lower.is_none()
        }
    }
}

/// Wire form of a policy, matching the JSON policy config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier_column: Option<String>,
}

/// A validated modified treatment policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicySpec", into = "PolicySpec")]
pub struct Policy {
    kind: PolicyKind,
    delta: f64,
    region: Option<Region>,
    multiplier_column: Option<String>,
}

impl TryFrom<PolicySpec> for Policy {
    type Error = Error;

    fn try_from(spec: PolicySpec) -> Result<Self> {
        let PolicySpec {
            kind,
            delta,
            region,
            multiplier_column,
        } = spec;
        if !delta.is_finite() {
            return Err(Error::InvalidPolicy(format!("delta {delta} is not finite")));
        }
        match kind {
            PolicyKind::Additive | PolicyKind::Multiplicative => {
                if region.is_some() || multiplier_column.is_some() {
                    return Err(Error::InvalidPolicy(
                        "region and multiplier_column only apply to piecewise_additive".into(),
                    ));
                }
                if kind == PolicyKind::Multiplicative && delta <= 0.0 {
                    return Err(Error::InvalidPolicy(format!(
                        "multiplicative policy needs delta > 0, got {delta}"
                    )));
                }
            }
            PolicyKind::PiecewiseAdditive => {
                let region = region.ok_or_else(|| {
                    Error::InvalidPolicy("piecewise_additive requires a region".into())
                })?;
                if region.lower.is_some_and(|x| !x.is_finite())
                    || region.upper.is_some_and(|x| !x.is_finite())
                {
                    return Err(Error::InvalidPolicy("region bounds must be finite".into()));
                }
                if region.lo() > region.hi() {
                    return Err(Error::InvalidPolicy(format!(
                        "region lower bound {} exceeds upper bound {}",
                        region.lo(),
                        region.hi()
                    )));
                }
                if multiplier_column.is_none() && !region.shift_is_invertible(delta) {
                    return Err(Error::InvalidPolicy(format!(
                        "shifting region [{}, {}] by {delta} overlaps the unshifted exposures; \
                         the policy would not be invertible",
                        region.lo(),
                        region.hi()
                    )));
                }
            }
        }
        Ok(Policy {
            kind,
            delta,
            region,
            multiplier_column,
        })
    }
}

impl From<Policy> for PolicySpec {
    fn from(p: Policy) -> Self {
        PolicySpec {
            kind: p.kind,
            delta: p.delta,
            region: p.region,
            multiplier_column: p.multiplier_column,
        }
    }
}

impl Policy {
    pub fn additive(delta: f64) -> Result<Self> {
        PolicySpec {
            kind: PolicyKind::Additive,
            delta,
            region: None,
            multiplier_column: None,
        }
        .try_into()
    }

    pub fn multiplicative(delta: f64) -> Result<Self> {
        PolicySpec {
            kind: PolicyKind::Multiplicative,
            delta,
            region: None,
            multiplier_column: None,
        }
        .try_into()
    }

    pub fn piecewise_additive(
        delta: f64,
        region: Region,
        multiplier_column: Option<String>,
    ) -> Result<Self> {
        PolicySpec {
            kind: PolicyKind::PiecewiseAdditive,
            delta,
            region: Some(region),
            multiplier_column,
        }
        .try_into()
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn region(&self) -> Option<Region> {
        self.region
    }

    pub fn multiplier_column(&self) -> Option<&str> {
        self.multiplier_column.as_deref()
    }

    /// The same policy family with a different δ.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        PolicySpec {
            delta,
            ..PolicySpec::from(self.clone())
        }
        .try_into()
    }

    /// True when `d` is the identity map for every unit.
    pub fn is_identity(&self) -> bool {
        match self.kind {
            PolicyKind::Additive | PolicyKind::PiecewiseAdditive => self.delta == 0.0,
            PolicyKind::Multiplicative => self.delta == 1.0,
        }
    }

    fn multiplier<L: CovariateLookup + ?Sized>(&self, l: &L) -> f64 {
        match &self.multiplier_column {
            None => 1.0,
            Some(name) => l.covariate(name).unwrap_or(f64::NAN),
        }
    }

    /// `d(a, l; δ)`.
    pub fn apply<L: CovariateLookup + ?Sized>(&self, a: f64, l: &L) -> f64 {
        match self.kind {
            PolicyKind::Additive => a + self.delta,
            PolicyKind::Multiplicative => self.delta * a,
            PolicyKind::PiecewiseAdditive => {
                let region = self
                    .region
                    .expect("validated piecewise policy has a region");
                if region.contains(a) {
                    a + self.delta * self.multiplier(l)
                } else {
                    a
                }
            }
        }
    }

    /// `d⁻¹(a, l; δ)`; on the gap left by a shifted region the identity is
    /// returned, since such points have no preimage.
    pub fn inverse<L: CovariateLookup + ?Sized>(&self, a: f64, l: &L) -> f64 {
        match self.kind {
            PolicyKind::Additive => a - self.delta,
            PolicyKind::Multiplicative => a / self.delta,
            PolicyKind::PiecewiseAdditive => {
                let region = self
                    .region
                    .expect("validated piecewise policy has a region");
                let shift = self.delta * self.multiplier(l);
                if region.contains(a - shift) {
                    a - shift
                } else {
                    a
                }
            }
        }
    }

    /// `∂d/∂a` at `a`.
    pub fn derivative<L: CovariateLookup + ?Sized>(&self, _a: f64, _l: &L) -> f64 {
        match self.kind {
            PolicyKind::Additive | PolicyKind::PiecewiseAdditive => 1.0,
            PolicyKind::Multiplicative => self.delta,
        }
    }

    /// Checks that the policy is one-to-one for a unit with covariates `l`.
    pub fn check_invertible<L: CovariateLookup + ?Sized>(&self, l: &L, unit: usize) -> Result<()> {
        if self.kind != PolicyKind::PiecewiseAdditive {
            return Ok(());
        }
        let shift = self.delta * self.multiplier(l);
        if !shift.is_finite() {
            return Err(Error::NonInvertiblePolicy {
                unit,
                reason: format!(
                    "multiplier column {:?} missing or non-finite",
                    self.multiplier_column.as_deref().unwrap_or("")
                ),
            });
        }
        let region = self
            .region
            .expect("validated piecewise policy has a region");
        if region.shift_is_invertible(shift) {
            Ok(())
        } else {
            Err(Error::NonInvertiblePolicy {
                unit,
                reason: format!("shift {shift} maps the region onto unshifted exposures"),
            })
        }
    }
}

/// The induced-policy weight `w(A, L, i)` for a weighted-linear summary.
///
/// For `s_i(a) = Σ_j W_ij a_j` the weight is the ratio of the coarea of
/// `s_i ∘ d⁻¹` to that of `s_i`. Slope-1 pieces leave the Jacobian unchanged
/// (weight 1); the multiplicative policy scales it by `1/δ`. Units whose
/// summary is identically zero get weight 1.
pub fn induced_weight(policy: &Policy, spec: &SummarySpec, net: &Network, i: usize) -> Result<f64> {
    let degree = net.degree(i)?;
    if !spec.is_linear() {
        return Err(Error::AnalyticWeightUnavailable(
            "summary is not weighted-linear; supply a constant weight override".into(),
        ));
    }
    if degree == 0 && !spec.include_self {
        return Ok(1.0);
    }
    Ok(match policy.kind {
        PolicyKind::Additive | PolicyKind::PiecewiseAdditive => 1.0,
        PolicyKind::Multiplicative => 1.0 / policy.delta,
    })
}
