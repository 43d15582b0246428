//! Split conformal prediction and conformalized quantile regression, with
//! the two multivariate calibration schemes used for 24-hour targets:
//!
//! * average-marginal (AMV): one adjusted quantile from the score pool of
//!   all `|I2| * d` (sample, dimension) pairs, shared by every dimension —
//!   guarantees coverage averaged over dimensions;
//! * individual (IMV): one adjusted quantile per output dimension —
//!   guarantees coverage for every dimension separately.
//!
//! All calibration functions are pure in their score inputs: permutation
//! of calibration rows cannot change any output. The adjusted quantile is
//! the k-th smallest score with `k = ceil(beta * n)`, the "higher" order
//! statistic convention that preserves the finite-sample guarantee, and
//! `beta > 1` yields an infinite (always-covering) interval rather than
//! an error.

use crate::data::Matrix;
use crate::exec::{self, Execution};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("empty score set")]
    EmptyScores,
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("beta must be positive, got {0}")]
    BadBeta(f64),
    #[error("score set has kind {got}, expected {expected}")]
    WrongKind {
        expected: &'static str,
        got: &'static str,
    },
    #[error("inconsistent dimensions: {0}")]
    DimMismatch(String),
    #[error("empty input list")]
    EmptyInput,
}

/// What a nonconformity score measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreKind {
    /// `|y - mu(x)|` for point predictors.
    Absolute,
    /// `mu_lower(x) - y`; positive when the lower model over-predicts.
    Lower,
    /// `y - mu_upper(x)`; positive when the upper model under-predicts.
    Upper,
}

impl ScoreKind {
    fn name(self) -> &'static str {
        match self {
            ScoreKind::Absolute => "absolute",
            ScoreKind::Lower => "lower",
            ScoreKind::Upper => "upper",
        }
    }
}

/// Finite nonconformity scores of one kind, optionally tagged with the
/// output dimension they came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreSet {
    pub scores: Vec<f64>,
    pub kind: ScoreKind,
    pub dim_tag: Option<usize>,
}

impl ScoreSet {
    pub fn new(kind: ScoreKind, scores: Vec<f64>) -> Result<Self, ConformalError> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(ConformalError::NonFiniteScore(i));
        }
        Ok(ScoreSet {
            scores,
            kind,
            dim_tag: None,
        })
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim_tag = Some(dim);
        self
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn expect_kind(&self, kind: ScoreKind) -> Result<(), ConformalError> {
        if self.kind != kind {
            return Err(ConformalError::WrongKind {
                expected: kind.name(),
                got: self.kind.name(),
            });
        }
        Ok(())
    }
}

/// Calibration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    SplitCp,
    Cqr,
    AmvCqr,
    ImvCqr,
    AmvPoint,
    ImvPoint,
    RoA,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::SplitCp => "Split-CP",
            Method::Cqr => "CQR",
            Method::AmvCqr => "AMV-CQR",
            Method::ImvCqr => "IMV-CQR",
            Method::AmvPoint => "AMV-Point",
            Method::ImvPoint => "IMV-Point",
            Method::RoA => "RO-A",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "split_cp" | "splitcp" => Some(Method::SplitCp),
            "cqr" => Some(Method::Cqr),
            "amv_cqr" => Some(Method::AmvCqr),
            "imv_cqr" => Some(Method::ImvCqr),
            "amv_point" => Some(Method::AmvPoint),
            "imv_point" => Some(Method::ImvPoint),
            "ro_a" | "roa" => Some(Method::RoA),
            _ => None,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Calibrated quantile: one scalar shared across dimensions (AMV family)
/// or a per-dimension vector (IMV family). Values may be `+inf` but never
/// NaN.
#[derive(Debug, Clone, PartialEq)]
pub enum QValue {
    Scalar(f64),
    PerDim(Vec<f64>),
}

impl QValue {
    /// Value applied to dimension `j`.
    pub fn at(&self, j: usize) -> f64 {
        match self {
            QValue::Scalar(q) => *q,
            QValue::PerDim(v) => v[j],
        }
    }

    fn assert_not_nan(&self) {
        match self {
            QValue::Scalar(q) => debug_assert!(!q.is_nan()),
            QValue::PerDim(v) => debug_assert!(v.iter().all(|q| !q.is_nan())),
        }
    }
}

fn ser_f64_inf<S: Serializer>(v: f64, s: S) -> Result<S::Ok, S::Error> {
    if v == f64::INFINITY {
        s.serialize_str("inf")
    } else if v == f64::NEG_INFINITY {
        s.serialize_str("-inf")
    } else {
        s.serialize_f64(v)
    }
}

fn de_f64_inf(v: &serde_json::Value) -> Result<f64, String> {
    match v {
        serde_json::Value::Number(n) => n.as_f64().ok_or_else(|| "bad number".to_string()),
        serde_json::Value::String(s) if s == "inf" => Ok(f64::INFINITY),
        serde_json::Value::String(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
        other => Err(format!("expected number or \"inf\", got {other}")),
    }
}

impl Serialize for QValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(1))?;
        match self {
            QValue::Scalar(q) => {
                map.serialize_entry("scalar", &InfWrap(*q))?;
            }
            QValue::PerDim(v) => {
                let wrapped: Vec<InfWrap> = v.iter().map(|&q| InfWrap(q)).collect();
                map.serialize_entry("per_dim", &wrapped)?;
            }
        }
        map.end()
    }
}

struct InfWrap(f64);

impl Serialize for InfWrap {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ser_f64_inf(self.0, s)
    }
}

impl<'de> Deserialize<'de> for QValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        let obj = v
            .as_object()
            .ok_or_else(|| D::Error::custom("expected object"))?;
        if let Some(q) = obj.get("scalar") {
            return Ok(QValue::Scalar(de_f64_inf(q).map_err(D::Error::custom)?));
        }
        if let Some(arr) = obj.get("per_dim").and_then(|a| a.as_array()) {
            let vals: Result<Vec<f64>, String> = arr.iter().map(de_f64_inf).collect();
            return Ok(QValue::PerDim(vals.map_err(D::Error::custom)?));
        }
        Err(D::Error::custom("expected 'scalar' or 'per_dim'"))
    }
}

/// Where the calibration scores came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_hash: String,
    pub seed: u64,
}

/// Output of a calibration routine: everything needed to turn new
/// predictions into intervals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub method: Method,
    pub q_lower: QValue,
    pub q_upper: QValue,
    /// Per-side miscoverage budgets; for symmetric methods both carry the
    /// full alpha (one shared quantile covers both sides).
    pub alpha_l: f64,
    pub alpha_h: f64,
    pub calibration_size: usize,
    #[serde(default)]
    pub provenance: Provenance,
}

impl CalibrationResult {
    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration result serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Per-dimension closed interval bounds, in the target's raw units.
/// `lower[j] <= upper[j]` whenever both are finite; entries may be
/// infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalVector {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl IntervalVector {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, y: &[f64]) -> Vec<bool> {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(y)
            .map(|((&lo, &hi), &v)| lo <= v && v <= hi)
            .collect()
    }

    /// Per-dimension widths (`inf` for degenerate full-line intervals).
    pub fn widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| hi - lo)
            .collect()
    }

    /// Clamp lower endpoints at zero (physical floor for PV power).
    /// Coverage is unharmed: the truth is nonnegative, so raising the
    /// lower bound toward zero never evicts it.
    pub fn clamp_lower_at_zero(&mut self) {
        for (lo, hi) in self.lower.iter_mut().zip(self.upper.iter_mut()) {
            if *lo < 0.0 {
                *lo = 0.0;
            }
            if *hi < *lo {
                *hi = *lo;
            }
        }
    }
}

/// The `k = ceil(beta * n)`-th smallest score, or `+inf` when `beta > 1`.
/// Pure and order-insensitive in `scores`.
pub fn adjusted_quantile(scores: &ScoreSet, beta: f64) -> Result<f64, ConformalError> {
    if scores.is_empty() {
        return Err(ConformalError::EmptyScores);
    }
    if !(beta > 0.0) {
        return Err(ConformalError::BadBeta(beta));
    }
    if beta > 1.0 {
        return Ok(f64::INFINITY);
    }
    let n = scores.len();
    let k = ((beta * n as f64).ceil() as usize).clamp(1, n);
    let mut sorted = scores.scores.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[k - 1])
}

fn check_alpha(alpha: f64) -> Result<(), ConformalError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ConformalError::BadAlpha(alpha));
    }
    Ok(())
}

/// Split conformal prediction from absolute residuals: one symmetric
/// quantile at `beta = (1 - alpha)(1 + 1/|I2|)`.
pub fn split_cp_calibrate(
    residuals: &ScoreSet,
    alpha: f64,
) -> Result<CalibrationResult, ConformalError> {
    residuals.expect_kind(ScoreKind::Absolute)?;
    check_alpha(alpha)?;
    let n = residuals.len();
    let beta = (1.0 - alpha) * (1.0 + 1.0 / n as f64);
    let q = adjusted_quantile(residuals, beta)?;
    Ok(CalibrationResult {
        method: Method::SplitCp,
        q_lower: QValue::Scalar(q),
        q_upper: QValue::Scalar(q),
        alpha_l: alpha,
        alpha_h: alpha,
        calibration_size: n,
        provenance: Provenance::default(),
    })
}

/// Univariate CQR: separate adjusted quantiles for the lower-model and
/// upper-model score lists, each at `(1 - alpha_side)(1 + 1/|I2|)`.
pub fn cqr_calibrate(
    lower_scores: &ScoreSet,
    upper_scores: &ScoreSet,
    alpha_l: f64,
    alpha_h: f64,
) -> Result<CalibrationResult, ConformalError> {
    lower_scores.expect_kind(ScoreKind::Lower)?;
    upper_scores.expect_kind(ScoreKind::Upper)?;
    check_alpha(alpha_l)?;
    check_alpha(alpha_h)?;
    if lower_scores.len() != upper_scores.len() {
        return Err(ConformalError::DimMismatch(format!(
            "lower has {} scores, upper has {}",
            lower_scores.len(),
            upper_scores.len()
        )));
    }
    let n = lower_scores.len();
    let factor = 1.0 + 1.0 / n as f64;
    let q_l = adjusted_quantile(lower_scores, (1.0 - alpha_l) * factor)?;
    let q_h = adjusted_quantile(upper_scores, (1.0 - alpha_h) * factor)?;
    Ok(CalibrationResult {
        method: Method::Cqr,
        q_lower: QValue::Scalar(q_l),
        q_upper: QValue::Scalar(q_h),
        alpha_l,
        alpha_h,
        calibration_size: n,
        provenance: Provenance::default(),
    })
}

fn validate_by_dim(sets: &[ScoreSet], kind: ScoreKind) -> Result<usize, ConformalError> {
    if sets.is_empty() {
        return Err(ConformalError::EmptyInput);
    }
    let n = sets[0].len();
    for (j, s) in sets.iter().enumerate() {
        s.expect_kind(kind)?;
        if s.is_empty() {
            return Err(ConformalError::EmptyScores);
        }
        if s.len() != n {
            return Err(ConformalError::DimMismatch(format!(
                "dimension {j} has {} scores, dimension 0 has {n}",
                s.len()
            )));
        }
    }
    Ok(n)
}

fn flatten(sets: &[ScoreSet], kind: ScoreKind) -> Result<ScoreSet, ConformalError> {
    let pool: Vec<f64> = sets.iter().flat_map(|s| s.scores.iter().copied()).collect();
    ScoreSet::new(kind, pool)
}

/// Average-marginal multivariate CQR: all `|I2| * d` scores of each side
/// are pooled, and one quantile at `(1 - alpha_side)(1 + 1/(|I2| d))` is
/// shared by every dimension.
pub fn amv_cqr_calibrate(
    lower_by_dim: &[ScoreSet],
    upper_by_dim: &[ScoreSet],
    alpha_l: f64,
    alpha_h: f64,
) -> Result<CalibrationResult, ConformalError> {
    check_alpha(alpha_l)?;
    check_alpha(alpha_h)?;
    let n = validate_by_dim(lower_by_dim, ScoreKind::Lower)?;
    let n_up = validate_by_dim(upper_by_dim, ScoreKind::Upper)?;
    let d = lower_by_dim.len();
    if upper_by_dim.len() != d || n_up != n {
        return Err(ConformalError::DimMismatch(
            "lower/upper pools disagree".into(),
        ));
    }
    let factor = 1.0 + 1.0 / (n as f64 * d as f64);
    let q_l = adjusted_quantile(
        &flatten(lower_by_dim, ScoreKind::Lower)?,
        (1.0 - alpha_l) * factor,
    )?;
    let q_h = adjusted_quantile(
        &flatten(upper_by_dim, ScoreKind::Upper)?,
        (1.0 - alpha_h) * factor,
    )?;
    Ok(CalibrationResult {
        method: Method::AmvCqr,
        q_lower: QValue::Scalar(q_l),
        q_upper: QValue::Scalar(q_h),
        alpha_l,
        alpha_h,
        calibration_size: n,
        provenance: Provenance::default(),
    })
}

/// Individual multivariate CQR: each output dimension is calibrated
/// separately at `(1 - alpha_side)(1 + 1/|I2|)`.
pub fn imv_cqr_calibrate(
    lower_by_dim: &[ScoreSet],
    upper_by_dim: &[ScoreSet],
    alpha_l: f64,
    alpha_h: f64,
) -> Result<CalibrationResult, ConformalError> {
    check_alpha(alpha_l)?;
    check_alpha(alpha_h)?;
    if lower_by_dim.is_empty() || lower_by_dim.len() != upper_by_dim.len() {
        return Err(ConformalError::DimMismatch(
            "lower/upper dimension counts differ".into(),
        ));
    }
    let mut q_l = Vec::with_capacity(lower_by_dim.len());
    let mut q_h = Vec::with_capacity(upper_by_dim.len());
    for (lo, hi) in lower_by_dim.iter().zip(upper_by_dim) {
        lo.expect_kind(ScoreKind::Lower)?;
        hi.expect_kind(ScoreKind::Upper)?;
        if lo.is_empty() || hi.is_empty() {
            return Err(ConformalError::EmptyScores);
        }
        q_l.push(adjusted_quantile(
            lo,
            (1.0 - alpha_l) * (1.0 + 1.0 / lo.len() as f64),
        )?);
        q_h.push(adjusted_quantile(
            hi,
            (1.0 - alpha_h) * (1.0 + 1.0 / hi.len() as f64),
        )?);
    }
    let n = lower_by_dim[0].len();
    Ok(CalibrationResult {
        method: Method::ImvCqr,
        q_lower: QValue::PerDim(q_l),
        q_upper: QValue::PerDim(q_h),
        alpha_l,
        alpha_h,
        calibration_size: n,
        provenance: Provenance::default(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiMode {
    Amv,
    Imv,
}

/// Point-prediction conformal baseline: absolute residuals give one
/// symmetric quantile (identical lower and upper offsets), pooled for
/// `Amv` or per-dimension for `Imv`.
pub fn point_cp_calibrate(
    abs_by_dim: &[ScoreSet],
    alpha: f64,
    mode: MultiMode,
) -> Result<CalibrationResult, ConformalError> {
    check_alpha(alpha)?;
    let n = validate_by_dim(abs_by_dim, ScoreKind::Absolute)?;
    let d = abs_by_dim.len();
    let (method, q) = match mode {
        MultiMode::Amv => {
            let beta = (1.0 - alpha) * (1.0 + 1.0 / (n as f64 * d as f64));
            let q = adjusted_quantile(&flatten(abs_by_dim, ScoreKind::Absolute)?, beta)?;
            (Method::AmvPoint, QValue::Scalar(q))
        }
        MultiMode::Imv => {
            let beta = (1.0 - alpha) * (1.0 + 1.0 / n as f64);
            let qs: Result<Vec<f64>, _> = abs_by_dim
                .iter()
                .map(|s| adjusted_quantile(s, beta))
                .collect();
            (Method::ImvPoint, QValue::PerDim(qs?))
        }
    };
    Ok(CalibrationResult {
        method,
        q_lower: q.clone(),
        q_upper: q,
        alpha_l: alpha,
        alpha_h: alpha,
        calibration_size: n,
        provenance: Provenance::default(),
    })
}

/// Interval construction: `[mu_lower - q_lower, mu_upper + q_upper]` per
/// dimension. Point methods pass the same prediction for both sides.
/// Crossed intervals (possible with quantile crossing and negative
/// calibrated q's) collapse to their midpoint, a conservative zero-width
/// set.
pub fn build_intervals(
    result: &CalibrationResult,
    mu_lower: &[f64],
    mu_upper: &[f64],
) -> IntervalVector {
    debug_assert_eq!(mu_lower.len(), mu_upper.len());
    result.q_lower.assert_not_nan();
    result.q_upper.assert_not_nan();
    let d = mu_lower.len();
    let mut lower = Vec::with_capacity(d);
    let mut upper = Vec::with_capacity(d);
    for j in 0..d {
        let mut lo = mu_lower[j] - result.q_lower.at(j);
        let mut hi = mu_upper[j] + result.q_upper.at(j);
        if lo > hi {
            let mid = 0.5 * (lo + hi);
            lo = mid;
            hi = mid;
        }
        lower.push(lo);
        upper.push(hi);
    }
    IntervalVector { lower, upper }
}

/// Fraction of samples covered per dimension (closed intervals: endpoint
/// hits count) and the average across dimensions.
pub fn empirical_coverage(
    intervals: &[IntervalVector],
    truths: &[Vec<f64>],
) -> Result<(Vec<f64>, f64), ConformalError> {
    if intervals.is_empty() || intervals.len() != truths.len() {
        return Err(ConformalError::DimMismatch(format!(
            "{} intervals vs {} truths",
            intervals.len(),
            truths.len()
        )));
    }
    let d = intervals[0].dim();
    let mut hits = vec![0usize; d];
    for (iv, y) in intervals.iter().zip(truths) {
        if iv.dim() != d || y.len() != d {
            return Err(ConformalError::DimMismatch("inconsistent dimension".into()));
        }
        for (j, covered) in iv.contains(y).into_iter().enumerate() {
            if covered {
                hits[j] += 1;
            }
        }
    }
    let n = intervals.len() as f64;
    let per_dim: Vec<f64> = hits.into_iter().map(|h| h as f64 / n).collect();
    let average = per_dim.iter().sum::<f64>() / d as f64;
    Ok((per_dim, average))
}

/// CQR nonconformity scores per output dimension: lower-side
/// `mu_lower(x) - y` and upper-side `y - mu_upper(x)`.
pub fn cqr_scores_by_dim(
    preds_lower: &Matrix,
    preds_upper: &Matrix,
    targets: &Matrix,
) -> (Vec<ScoreSet>, Vec<ScoreSet>) {
    let (n, d) = (targets.n_rows(), targets.n_cols());
    let mut lower = Vec::with_capacity(d);
    let mut upper = Vec::with_capacity(d);
    for j in 0..d {
        let lo: Vec<f64> = (0..n)
            .map(|i| preds_lower.get(i, j) - targets.get(i, j))
            .collect();
        let hi: Vec<f64> = (0..n)
            .map(|i| targets.get(i, j) - preds_upper.get(i, j))
            .collect();
        lower.push(
            ScoreSet::new(ScoreKind::Lower, lo)
                .expect("finite predictions")
                .with_dim(j),
        );
        upper.push(
            ScoreSet::new(ScoreKind::Upper, hi)
                .expect("finite predictions")
                .with_dim(j),
        );
    }
    (lower, upper)
}

/// Absolute residual scores `|y - mu(x)|` per output dimension.
pub fn abs_scores_by_dim(preds: &Matrix, targets: &Matrix) -> Vec<ScoreSet> {
    let (n, d) = (targets.n_rows(), targets.n_cols());
    (0..d)
        .map(|j| {
            let s: Vec<f64> = (0..n)
                .map(|i| (targets.get(i, j) - preds.get(i, j)).abs())
                .collect();
            ScoreSet::new(ScoreKind::Absolute, s)
                .expect("finite predictions")
                .with_dim(j)
        })
        .collect()
}

/// Summary of repeated coverage measurements.
#[derive(Debug, Clone)]
pub struct TrialStats {
    pub per_trial: Vec<f64>,
    pub mean: f64,
    /// Monte-Carlo standard error of the mean.
    pub std_error: f64,
}

/// Run `n_trials` independent coverage experiments. Each trial receives
/// its own RNG seed derived from `(master_seed, trial index)`, so results
/// do not depend on the execution strategy.
pub fn coverage_trials<F>(
    exec: Execution,
    master_seed: u64,
    n_trials: usize,
    trial: F,
) -> TrialStats
where
    F: Fn(u64) -> f64 + Sync + Send,
{
    let per_trial = exec::map_indexed(exec, n_trials, |i| {
        trial(exec::derive_seed(master_seed, i as u64))
    });
    summarize_trials(per_trial)
}

pub fn summarize_trials(per_trial: Vec<f64>) -> TrialStats {
    let n = per_trial.len() as f64;
    let mean = per_trial.iter().sum::<f64>() / n;
    let var = per_trial.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    TrialStats {
        per_trial,
        mean,
        std_error: (var / n).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(kind: ScoreKind, v: &[f64]) -> ScoreSet {
        ScoreSet::new(kind, v.to_vec()).unwrap()
    }

    #[test]
    fn adjusted_quantile_examples() {
        let s = scores(
            ScoreKind::Absolute,
            &[1., 2., 3., 4., 5., 6., 7., 8., 9., 10.],
        );
        let beta = (1.0 - 0.1) * (1.0 + 1.0 / 10.0); // 0.99 -> k = 10
        assert_eq!(adjusted_quantile(&s, beta).unwrap(), 10.0);

        let single = scores(ScoreKind::Absolute, &[5.0]);
        assert_eq!(adjusted_quantile(&single, 0.5).unwrap(), 5.0);

        let three = scores(ScoreKind::Absolute, &[1.0, 2.0, 3.0]);
        assert_eq!(adjusted_quantile(&three, 1.2).unwrap(), f64::INFINITY);

        let empty = ScoreSet::new(ScoreKind::Absolute, vec![]).unwrap();
        assert!(adjusted_quantile(&empty, 0.5).is_err());
    }

    #[test]
    fn adjusted_quantile_is_order_insensitive() {
        let a = scores(ScoreKind::Lower, &[3.0, 1.0, 2.0, 5.0, 4.0]);
        let b = scores(ScoreKind::Lower, &[5.0, 4.0, 3.0, 2.0, 1.0]);
        for beta in [0.2, 0.45, 0.7, 0.95, 1.0] {
            assert_eq!(
                adjusted_quantile(&a, beta).unwrap(),
                adjusted_quantile(&b, beta).unwrap()
            );
        }
    }

    #[test]
    fn split_cp_examples() {
        let r = scores(ScoreKind::Absolute, &[0.1, 0.2, 0.3, 0.4]);
        let cal = split_cp_calibrate(&r, 0.25).unwrap();
        assert_eq!(cal.q_lower, QValue::Scalar(0.4)); // beta = 0.75 * 1.25 = 0.9375, k = 4
        assert_eq!(cal.q_upper, QValue::Scalar(0.4));

        // Tiny calibration set with tiny alpha degenerates to +inf.
        let cal = split_cp_calibrate(&r, 0.01).unwrap();
        assert_eq!(cal.q_lower, QValue::Scalar(f64::INFINITY));

        let flat = scores(ScoreKind::Absolute, &[0.7; 6]);
        let cal = split_cp_calibrate(&flat, 0.3).unwrap();
        assert_eq!(cal.q_lower, QValue::Scalar(0.7));
    }

    #[test]
    fn cqr_examples() {
        // Scores may be negative when the quantile model already covers.
        let lo = scores(ScoreKind::Lower, &[-0.1, 0.0, 0.1, 0.2]);
        let hi = scores(ScoreKind::Upper, &[-0.1, 0.0, 0.1, 0.2]);
        let cal = cqr_calibrate(&lo, &hi, 0.25, 0.25).unwrap();
        assert_eq!(cal.q_lower, QValue::Scalar(0.2)); // beta = 0.9375, k = 4
        assert_eq!(cal.q_lower, cal.q_upper); // symmetric inputs, equal alphas

        let lo = scores(ScoreKind::Lower, &[-0.5, -0.4, -0.3, -0.2]);
        let hi = scores(ScoreKind::Upper, &[-0.5, -0.4, -0.3, -0.2]);
        let cal = cqr_calibrate(&lo, &hi, 0.25, 0.25).unwrap();
        assert!(
            cal.q_lower.at(0) <= 0.0,
            "conservative model keeps q nonpositive"
        );
    }

    #[test]
    fn amv_reduces_to_cqr_in_one_dimension() {
        let lo = [scores(ScoreKind::Lower, &[0.3, -0.2, 0.9, 0.1])];
        let hi = [scores(ScoreKind::Upper, &[0.5, 0.0, -0.1, 0.2])];
        let amv = amv_cqr_calibrate(&lo, &hi, 0.2, 0.2).unwrap();
        let cqr = cqr_calibrate(&lo[0], &hi[0], 0.2, 0.2).unwrap();
        assert_eq!(amv.q_lower, cqr.q_lower);
        assert_eq!(amv.q_upper, cqr.q_upper);
    }

    #[test]
    fn amv_pools_scores_across_dimensions() {
        let lo = [
            scores(ScoreKind::Lower, &[1.0, 2.0]),
            scores(ScoreKind::Lower, &[3.0, 4.0]),
        ];
        let hi = [
            scores(ScoreKind::Upper, &[1.0, 2.0]),
            scores(ScoreKind::Upper, &[3.0, 4.0]),
        ];
        let cal = amv_cqr_calibrate(&lo, &hi, 0.5, 0.5).unwrap();
        // pool {1,2,3,4}, beta = 0.5 * (1 + 1/4) = 0.625, k = 3
        assert_eq!(cal.q_lower, QValue::Scalar(3.0));

        let flat = [
            scores(ScoreKind::Lower, &[0.4; 3]),
            scores(ScoreKind::Lower, &[0.4; 3]),
        ];
        let flat_up = [
            scores(ScoreKind::Upper, &[0.4; 3]),
            scores(ScoreKind::Upper, &[0.4; 3]),
        ];
        let cal = amv_cqr_calibrate(&flat, &flat_up, 0.3, 0.3).unwrap();
        assert_eq!(cal.q_lower, QValue::Scalar(0.4));
    }

    #[test]
    fn imv_examples() {
        let lo = [
            scores(ScoreKind::Lower, &[1.0, 2.0, 3.0, 4.0]),
            scores(ScoreKind::Lower, &[10.0, 20.0, 30.0, 40.0]),
        ];
        let hi = [
            scores(ScoreKind::Upper, &[1.0, 2.0, 3.0, 4.0]),
            scores(ScoreKind::Upper, &[10.0, 20.0, 30.0, 40.0]),
        ];
        let cal = imv_cqr_calibrate(&lo, &hi, 0.25, 0.25).unwrap();
        assert_eq!(cal.q_lower, QValue::PerDim(vec![4.0, 40.0]));

        let same = [
            scores(ScoreKind::Lower, &[0.1, 0.9, 0.5]),
            scores(ScoreKind::Lower, &[0.1, 0.9, 0.5]),
        ];
        let same_up = [
            scores(ScoreKind::Upper, &[0.1, 0.9, 0.5]),
            scores(ScoreKind::Upper, &[0.1, 0.9, 0.5]),
        ];
        let cal = imv_cqr_calibrate(&same, &same_up, 0.2, 0.2).unwrap();
        assert_eq!(cal.q_lower.at(0), cal.q_lower.at(1));
    }

    #[test]
    fn imv_degenerates_per_dimension_only() {
        // dim 0 has one score: beta = 0.75 * 2 = 1.5 > 1 -> +inf there only.
        let lo = [
            scores(ScoreKind::Lower, &[0.5]),
            scores(ScoreKind::Lower, &[1.0, 2.0, 3.0, 4.0]),
        ];
        let hi = [
            scores(ScoreKind::Upper, &[0.5]),
            scores(ScoreKind::Upper, &[1.0, 2.0, 3.0, 4.0]),
        ];
        let cal = imv_cqr_calibrate(&lo, &hi, 0.25, 0.25).unwrap();
        assert_eq!(cal.q_lower.at(0), f64::INFINITY);
        assert!(cal.q_lower.at(1).is_finite());
    }

    #[test]
    fn point_cp_examples() {
        // d = 1: AMV == IMV == split CP.
        let abs = [scores(ScoreKind::Absolute, &[0.3, 0.1, 0.7, 0.2])];
        let amv = point_cp_calibrate(&abs, 0.25, MultiMode::Amv).unwrap();
        let imv = point_cp_calibrate(&abs, 0.25, MultiMode::Imv).unwrap();
        let split = split_cp_calibrate(&abs[0], 0.25).unwrap();
        assert_eq!(amv.q_lower.at(0), split.q_lower.at(0));
        assert_eq!(imv.q_lower.at(0), split.q_lower.at(0));

        let abs = [scores(ScoreKind::Absolute, &[1.0, 2.0, 3.0, 4.0])];
        let imv = point_cp_calibrate(&abs, 0.25, MultiMode::Imv).unwrap();
        assert_eq!(imv.q_lower, QValue::PerDim(vec![4.0]));
        // Symmetric by construction.
        assert_eq!(imv.q_lower, imv.q_upper);
    }

    #[test]
    fn build_intervals_examples() {
        let cal = CalibrationResult {
            method: Method::Cqr,
            q_lower: QValue::Scalar(0.2),
            q_upper: QValue::Scalar(0.3),
            alpha_l: 0.05,
            alpha_h: 0.05,
            calibration_size: 10,
            provenance: Provenance::default(),
        };
        let iv = build_intervals(&cal, &[1.0], &[3.0]);
        assert!((iv.lower[0] - 0.8).abs() < 1e-15);
        assert!((iv.upper[0] - 3.3).abs() < 1e-15);

        let split = CalibrationResult {
            method: Method::SplitCp,
            q_lower: QValue::Scalar(0.5),
            q_upper: QValue::Scalar(0.5),
            alpha_l: 0.1,
            alpha_h: 0.1,
            calibration_size: 10,
            provenance: Provenance::default(),
        };
        let iv = build_intervals(&split, &[2.0], &[2.0]);
        assert_eq!((iv.lower[0], iv.upper[0]), (1.5, 2.5));

        let degenerate = CalibrationResult {
            q_lower: QValue::Scalar(f64::INFINITY),
            q_upper: QValue::Scalar(f64::INFINITY),
            ..cal
        };
        let iv = build_intervals(&degenerate, &[2.0], &[2.0]);
        assert_eq!(iv.lower[0], f64::NEG_INFINITY);
        assert_eq!(iv.upper[0], f64::INFINITY);
    }

    #[test]
    fn crossed_intervals_collapse_to_midpoint() {
        let cal = CalibrationResult {
            method: Method::Cqr,
            q_lower: QValue::Scalar(-1.0), // negative q pulls the lower bound up
            q_upper: QValue::Scalar(-1.0),
            alpha_l: 0.05,
            alpha_h: 0.05,
            calibration_size: 10,
            provenance: Provenance::default(),
        };
        // lower = 2 - (-1) = 3, upper = 2.5 + (-1) = 1.5 -> midpoint 2.25
        let iv = build_intervals(&cal, &[2.0], &[2.5]);
        assert_eq!(iv.lower[0], iv.upper[0]);
        assert!((iv.lower[0] - 2.25).abs() < 1e-15);
    }

    #[test]
    fn coverage_examples() {
        let inf = IntervalVector {
            lower: vec![f64::NEG_INFINITY; 2],
            upper: vec![f64::INFINITY; 2],
        };
        let (per_dim, avg) =
            empirical_coverage(&[inf.clone(), inf], &[vec![1.0, -5.0], vec![0.0, 9.9]]).unwrap();
        assert_eq!(per_dim, vec![1.0, 1.0]);
        assert_eq!(avg, 1.0);

        // Endpoints count as covered (closed interval convention).
        let iv = IntervalVector {
            lower: vec![1.0],
            upper: vec![2.0],
        };
        let (per_dim, _) = empirical_coverage(&[iv.clone()], &[vec![2.0]]).unwrap();
        assert_eq!(per_dim, vec![1.0]);

        let (per_dim, _) = empirical_coverage(&[iv.clone(), iv], &[vec![1.5], vec![2.5]]).unwrap();
        assert_eq!(per_dim, vec![0.5]);

        assert!(empirical_coverage(&[], &[]).is_err());
    }

    #[test]
    fn q_values_serialize_with_inf_sentinel() {
        let cal = CalibrationResult {
            method: Method::ImvCqr,
            q_lower: QValue::PerDim(vec![1.5, f64::INFINITY]),
            q_upper: QValue::Scalar(f64::INFINITY),
            alpha_l: 0.05,
            alpha_h: 0.05,
            calibration_size: 4,
            provenance: Provenance {
                dataset_hash: "abc123".into(),
                seed: 7,
            },
        };
        let text = cal.to_json();
        assert!(text.contains("\"inf\""));
        assert!(text.contains("abc123"));
        let back = CalibrationResult::from_json(&text).unwrap();
        assert_eq!(back.q_lower, cal.q_lower);
        assert_eq!(back.q_upper, cal.q_upper);
        assert_eq!(back.provenance, cal.provenance);
        assert_eq!(back.method, Method::ImvCqr);
    }

    #[test]
    fn wrong_score_kind_rejected() {
        let lo = scores(ScoreKind::Lower, &[1.0]);
        assert!(split_cp_calibrate(&lo, 0.1).is_err());
        let abs = scores(ScoreKind::Absolute, &[1.0]);
        assert!(cqr_calibrate(&abs, &abs, 0.05, 0.05).is_err());
    }
}
