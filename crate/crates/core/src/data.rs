//! Observed data, network summaries and the summarized frame consumed by the
//! nuisance and estimation layers.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::policy::Policy;

/// Anything that can look up a named covariate value for one unit.
pub trait CovariateLookup {
    fn covariate(&self, name: &str) -> Option<f64>;
}

impl CovariateLookup for [(&str, f64)] {
    fn covariate(&self, name: &str) -> Option<f64> {
        self.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }
}

impl CovariateLookup for BTreeMap<String, f64> {
    fn covariate(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

/// A named numeric column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

impl Column {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

/// Observations `(L_i, A_i, Y_i)` for `n` units, aligned with network node ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    covariates: Vec<Column>,
    exposure: Vec<f64>,
    outcome: Option<Vec<f64>>,
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(row) => Err(Error::InvalidCell {
            row: row + 1,
            column: name.to_string(),
            reason: format!("non-finite value {}", values[row]),
        }),
    }
}

impl Frame {
    pub fn new(
        covariates: Vec<Column>,
        exposure: Vec<f64>,
        outcome: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = exposure.len();
        check_finite("exposure", &exposure)?;
        for c in &covariates {
            if c.values.len() != n {
                return Err(Error::LengthMismatch {
                    what: format!("covariate {}", c.name),
                    expected: n,
                    found: c.values.len(),
                });
            }
            check_finite(&c.name, &c.values)?;
        }
        for (i, c) in covariates.iter().enumerate() {
            if covariates[..i].iter().any(|d| d.name == c.name) {
                return Err(Error::Config(format!(
                    "duplicate covariate name {}",
                    c.name
                )));
            }
        }
        if let Some(y) = &outcome {
            if y.len() != n {
                return Err(Error::LengthMismatch {
                    what: "outcome".into(),
                    expected: n,
                    found: y.len(),
                });
            }
            check_finite("outcome", y)?;
        }
        Ok(Self {
            covariates,
            exposure,
            outcome,
        })
    }

    pub fn n(&self) -> usize {
        self.exposure.len()
    }

    pub fn exposure(&self) -> &[f64] {
        &self.exposure
    }

    pub fn outcome(&self) -> Option<&[f64]> {
        self.outcome.as_deref()
    }

    pub fn covariates(&self) -> &[Column] {
        &self.covariates
    }

    pub fn covariate(&self, name: &str) -> Option<&[f64]> {
        self.covariates
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    pub fn covariate_names(&self) -> impl Iterator<Item = &str> {
        self.covariates.iter().map(|c| c.name.as_str())
    }

    pub fn row(&self, i: usize) -> CovariateRow<'_> {
        CovariateRow {
            frame: self,
            index: i,
        }
    }

    /// Replaces the outcome column.
    pub fn with_outcome(mut self, outcome: Vec<f64>) -> Result<Self> {
        if outcome.len() != self.n() {
            return Err(Error::LengthMismatch {
                what: "outcome".into(),
                expected: self.n(),
                found: outcome.len(),
            });
        }
        check_finite("outcome", &outcome)?;
        self.outcome = Some(outcome);
        Ok(self)
    }

    /// Writes the frame as CSV with columns `L.., A[, Y]`.
    pub fn write_csv(&self, path: impl AsRef<Path>, schema: &FrameSchema) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let mut header: Vec<&str> = self.covariate_names().collect();
        header.push(&schema.exposure);
        if self.outcome.is_some() {
            header.push(schema.outcome.as_deref().unwrap_or("Y"));
        }
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self
                .covariates
                .iter()
                .map(|c| c.values[i].to_string())
                .collect();
            rec.push(self.exposure[i].to_string());
            if let Some(y) = &self.outcome {
                rec.push(y[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Covariates of a single unit.
#[derive(Debug, Clone, Copy)]
pub struct CovariateRow<'a> {
    frame: &'a Frame,
    index: usize,
}

impl CovariateRow<'_> {
    pub fn index(&self) -> usize {
        self.index
    }
}

impl CovariateLookup for CovariateRow<'_> {
    fn covariate(&self, name: &str) -> Option<f64> {
        self.frame.covariate(name).map(|v| v[self.index])
    }
}

/// Column roles for reading a CSV into a [`Frame`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSchema {
    pub exposure: String,
    #[serde(default)]
    pub outcome: Option<String>,
    /// Covariate columns; when empty every remaining column is a covariate.
    #[serde(default)]
    pub covariates: Vec<String>,
}

impl Default for FrameSchema {
    fn default() -> Self {
        Self {
            exposure: "A".into(),
            outcome: Some("Y".into()),
            covariates: Vec::new(),
        }
    }
}

/// Reads a CSV with a header row. Data rows are numbered from 1 in errors.
pub fn load_frame(path: impl AsRef<Path>, schema: &FrameSchema) -> Result<Frame> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_frame(&text, schema)
}

pub fn parse_frame(text: &str, schema: &FrameSchema) -> Result<Frame> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let a_col = find(&schema.exposure)?;
    let y_col = schema.outcome.as_deref().map(find).transpose()?;
    let cov_cols: Vec<(String, usize)> = if schema.covariates.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != a_col && Some(*j) != y_col)
            .map(|(j, h)| (h.clone(), j))
            .collect()
    } else {
        schema
            .covariates
            .iter()
            .map(|c| Ok((c.clone(), find(c)?)))
            .collect::<Result<_>>()?
    };

    let mut a = Vec::new();
    let mut y = Vec::new();
    let mut cov: Vec<Vec<f64>> = vec![Vec::new(); cov_cols.len()];
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let cell = |j: usize| -> Result<f64> {
            let raw = record.get(j).unwrap_or("");
            let name = &headers[j];
            if raw.is_empty() {
                return Err(Error::InvalidCell {
                    row,
                    column: name.clone(),
                    reason: "empty cell".into(),
                });
            }
            let v: f64 = raw.parse().map_err(|_| Error::InvalidCell {
                row,
                column: name.clone(),
                reason: format!("cannot parse {raw:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidCell {
                    row,
                    column: name.clone(),
                    reason: format!("non-finite value {raw}"),
                });
            }
            Ok(v)
        };
        a.push(cell(a_col)?);
        if let Some(j) = y_col {
            y.push(cell(j)?);
        }
        for (k, (_, j)) in cov_cols.iter().enumerate() {
            cov[k].push(cell(*j)?);
        }
    }
    let covariates = cov_cols
        .into_iter()
        .zip(cov)
        .map(|((name, _), values)| Column { name, values })
        .collect();
    Frame::new(covariates, a, y_col.map(|_| y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryKind {
    /// `Σ_{j∈F_i} a_j`
    NeighborSum,
    /// `Σ_{j∈F_i} w_ij a_j` with network edge weights.
    NeighborWeightedSum,
    /// `(1/|F_i|) Σ_{j∈F_i} a_j`
    NeighborMean,
}

/// A weighted-linear network summary `s_i(a) = Σ_j W_ij a_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummarySpec {
    pub kind: SummaryKind,
    /// Add the unit's own value with weight 1.
    #[serde(default)]
    pub include_self: bool,
    /// Rescale each unit's weights to sum to 1.
    #[serde(default)]
    pub normalize: bool,
    /// Covariates to summarize; `None` summarizes all of them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summarize: Option<Vec<String>>,
}

impl SummarySpec {
    pub fn new(kind: SummaryKind) -> Self {
        Self {
            kind,
            include_self: false,
            normalize: false,
            summarize: None,
        }
    }

    pub fn neighbor_sum() -> Self {
        Self::new(SummaryKind::NeighborSum)
    }

    pub fn with_self(mut self, include_self: bool) -> Self {
        self.include_self = include_self;
        self
    }

    pub fn with_covariates(mut self, names: Vec<String>) -> Self {
        self.summarize = Some(names);
        self
    }

    /// All shipped kinds are weighted-linear.
    pub fn is_linear(&self) -> bool {
        true
    }

    /// The weights `(j, W_ij)` for unit `i`. Empty for an isolated unit
    /// without a self term, whose summary is then 0.
    pub fn weights(&self, net: &Network, i: usize) -> Vec<(usize, f64)> {
        let nbrs = net.neighbors(i);
        let mut w: Vec<(usize, f64)> = match self.kind {
            SummaryKind::NeighborSum => nbrs.iter().map(|b| (b.node, 1.0)).collect(),
            SummaryKind::NeighborWeightedSum => nbrs.iter().map(|b| (b.node, b.weight)).collect(),
            SummaryKind::NeighborMean => {
                let k = nbrs.len() as f64;
                nbrs.iter().map(|b| (b.node, 1.0 / k)).collect()
            }
        };
        if self.include_self {
            w.push((i, 1.0));
        }
        if self.normalize {
            let total: f64 = w.iter().map(|(_, x)| x).sum();
            if total > 0.0 {
                for e in &mut w {
                    e.1 /= total;
                }
            }
        }
        w
    }

    /// Applies the summary to a full vector of unit values.
    pub fn apply(&self, net: &Network, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != net.n() {
            return Err(Error::LengthMismatch {
                what: "summary input".into(),
                expected: net.n(),
                found: values.len(),
            });
        }
        Ok((0..net.n())
            .map(|i| {
                self.weights(net, i)
                    .iter()
                    .map(|&(j, w)| w * values[j])
                    .sum()
            })
            .collect())
    }

    fn summarized_names<'a>(&'a self, frame: &'a Frame) -> Result<Vec<&'a str>> {
        match &self.summarize {
            None => Ok(frame.covariate_names().collect()),
            Some(names) => names
                .iter()
                .map(|n| {
                    frame
                        .covariate(n)
                        .map(|_| n.as_str())
                        .ok_or_else(|| Error::MissingColumn(n.clone()))
                })
                .collect(),
        }
    }
}

impl Default for SummarySpec {
    fn default() -> Self {
        Self::neighbor_sum()
    }
}

/// Per-unit quantities under the natural and the shifted exposure.
///
/// `a_s_d` is the summary of the shifted exposures `s_i(d(A))`, and
/// `a_s_dinv` the summary of `d⁻¹(A)`, used when a ratio has to be evaluated
/// on the pre-image side.
#[derive(Debug, Clone)]
pub struct SummarizedFrame {
    pub n: usize,
    pub a: Vec<f64>,
    pub a_d: Vec<f64>,
    pub a_dinv: Vec<f64>,
    pub a_s: Vec<f64>,
    pub a_s_d: Vec<f64>,
    pub a_s_dinv: Vec<f64>,
    /// Raw covariates followed by summarized covariates (suffix `_s`).
    pub covariates: Vec<Column>,
    pub degrees: Vec<usize>,
    pub outcome: Option<Vec<f64>>,
}

impl SummarizedFrame {
    pub fn covariate(&self, name: &str) -> Option<&[f64]> {
        self.covariates
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }
}

/// Computes exposure and covariate summaries and their images under the policy.
pub fn summarize(
    frame: &Frame,
    net: &Network,
    spec: &SummarySpec,
    policy: &Policy,
) -> Result<SummarizedFrame> {
    let n = frame.n();
    if net.n() != n {
        return Err(Error::LengthMismatch {
            what: "frame rows".into(),
            expected: net.n(),
            found: n,
        });
    }
    if let Some(col) = policy.multiplier_column() {
        if frame.covariate(col).is_none() {
            return Err(Error::MissingColumn(col.to_string()));
        }
    }
    let a = frame.exposure().to_vec();
    let mut a_d = Vec::with_capacity(n);
    let mut a_dinv = Vec::with_capacity(n);
    for (i, &ai) in a.iter().enumerate() {
        let row = frame.row(i);
        policy.check_invertible(&row, i)?;
        a_d.push(policy.apply(ai, &row));
        a_dinv.push(policy.inverse(ai, &row));
    }
    let a_s = spec.apply(net, &a)?;
    let a_s_d = spec.apply(net, &a_d)?;
    let a_s_dinv = spec.apply(net, &a_dinv)?;

    let mut covariates = frame.covariates().to_vec();
    for name in spec.summarized_names(frame)? {
        let values = frame.covariate(name).expect("name checked above");
        covariates.push(Column::new(format!("{name}_s"), spec.apply(net, values)?));
    }
    Ok(SummarizedFrame {
        n,
        a,
        a_d,
        a_dinv,
        a_s,
        a_s_d,
        a_s_dinv,
        covariates,
        degrees: net.degrees(),
        outcome: frame.outcome().map(<[f64]>::to_vec),
    })
}

/// Support overlap for one degree stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumPositivity {
    pub degree: usize,
    pub units: usize,
    /// Units whose shifted summary falls outside the observed summary range.
    pub outside: usize,
    pub share_outside: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub tolerance: f64,
    pub strata: Vec<StratumPositivity>,
}

impl PositivityReport {
    pub fn any_flagged(&self) -> bool {
        self.strata.iter().any(|s| s.flagged)
    }
}

/// Compares the shifted summaries with the range of observed summaries in
/// each degree stratum and flags strata where more than `tolerance` of the
/// units leave it.
pub fn check_positivity(sf: &SummarizedFrame, tolerance: f64) -> PositivityReport {
    let mut by_degree: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &k) in sf.degrees.iter().enumerate() {
        by_degree.entry(k).or_default().push(i);
    }
    let strata = by_degree
        .into_iter()
        .map(|(degree, units)| {
            let (lo, hi) = units
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    (lo.min(sf.a_s[i]), hi.max(sf.a_s[i]))
                });
            let outside = units
                .iter()
                .filter(|&&i| sf.a_s_d[i] < lo || sf.a_s_d[i] > hi)
                .count();
            let share = outside as f64 / units.len() as f64;
            StratumPositivity {
                degree,
                units: units.len(),
                outside,
                share_outside: share,
                flagged: share > tolerance,
            }
        })
        .collect();
    PositivityReport { tolerance, strata }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Network {
        Network::from_edges(3, [(0, 1, 1.0), (1, 2, 2.0)], false).unwrap()
    }

    fn frame3() -> Frame {
        Frame::new(
            vec![Column::new("L1", vec![1.0, 2.0, 3.0])],
            vec![1.0, 2.0, 4.0],
            Some(vec![0.0, 0.0, 0.0]),
        )
        .unwrap()
    }

    #[test]
    fn summary_kinds() {
        let net = path3();
        let v = [1.0, 2.0, 4.0];
        let sum = SummarySpec::new(SummaryKind::NeighborSum)
            .apply(&net, &v)
            .unwrap();
        assert_eq!(sum, vec![2.0, 5.0, 2.0]);
        let wsum = SummarySpec::new(SummaryKind::NeighborWeightedSum)
            .apply(&net, &v)
            .unwrap();
        assert_eq!(wsum, vec![2.0, 9.0, 4.0]);
        let mean = SummarySpec::new(SummaryKind::NeighborMean)
            .apply(&net, &v)
            .unwrap();
        assert_eq!(mean, vec![2.0, 2.5, 2.0]);
        let selfsum = SummarySpec::neighbor_sum()
            .with_self(true)
            .apply(&net, &v)
            .unwrap();
        assert_eq!(selfsum, vec![3.0, 7.0, 6.0]);
        let mut norm = SummarySpec::new(SummaryKind::NeighborWeightedSum);
        norm.normalize = true;
        let out = norm.apply(&net, &v).unwrap();
        assert!((out[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_unit_summary_is_zero() {
        let net = Network::edgeless(2);
        let out = SummarySpec::neighbor_sum()
            .apply(&net, &[3.0, 4.0])
            .unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn summarize_applies_policy_before_summary() {
        let net = path3();
        let frame = frame3();
        let p = Policy::multiplicative(2.0).unwrap();
        let sf = summarize(&frame, &net, &SummarySpec::neighbor_sum(), &p).unwrap();
        assert_eq!(sf.a_d, vec![2.0, 4.0, 8.0]);
        assert_eq!(sf.a_s_d, vec![4.0, 10.0, 4.0]);
        assert_eq!(sf.a_s_dinv, vec![1.0, 2.5, 1.0]);
        assert_eq!(sf.covariate("L1_s").unwrap(), &[2.0, 4.0, 2.0]);
        assert_eq!(sf.degrees, vec![1, 2, 1]);
    }

    #[test]
    fn summarize_checks_lengths_and_columns() {
        let frame = frame3();
        let p = Policy::additive(1.0).unwrap();
        assert!(summarize(&frame, &Network::edgeless(4), &SummarySpec::default(), &p).is_err());
        let spec = SummarySpec::default().with_covariates(vec!["nope".into()]);
        assert!(matches!(
            summarize(&frame, &path3(), &spec, &p),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn csv_errors_name_row_and_column() {
        let schema = FrameSchema::default();
        let text = "L1,A,Y\n1,2,3\n4,,6\n";
        match parse_frame(text, &schema) {
            Err(Error::InvalidCell { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "A");
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = "L1,A\n1,2\n";
        assert!(matches!(parse_frame(text, &schema), Err(Error::MissingColumn(c)) if c == "Y"));
        let f = parse_frame("L1,L2,A,Y\n1,2,3,4\n", &schema).unwrap();
        assert_eq!(f.covariate_names().collect::<Vec<_>>(), vec!["L1", "L2"]);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let frame = frame3();
        let schema = FrameSchema::default();
        frame.write_csv(&path, &schema).unwrap();
        assert_eq!(load_frame(&path, &schema).unwrap(), frame);
    }

    #[test]
    fn positivity_flags_shift_past_support() {
        let net = Network::edgeless(4);
        let frame = Frame::new(vec![], vec![0.0, 1.0, 2.0, 3.0], None).unwrap();
        let spec = SummarySpec::neighbor_sum().with_self(true);
        let sf = summarize(&frame, &net, &spec, &Policy::additive(2.0).unwrap()).unwrap();
        let report = check_positivity(&sf, 0.25);
        assert_eq!(report.strata.len(), 1);
        assert_eq!(report.strata[0].outside, 2);
        assert!(report.any_flagged());
    }
}
