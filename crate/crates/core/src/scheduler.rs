//! Method orchestration: calibrate a chosen uncertainty-set scheme, turn
//! a new day's covariates into a per-hour PV box, robustify the schedule
//! LP against the box's lower edge, and solve.
//!
//! The feasibility chain is the whole point: a schedule built against
//! the interval's lower endpoint stays feasible on any day whose realized
//! PV the interval covers, so the miscoverage budget alpha caps the
//! violation probability.
//!
//! Methods:
//! * `AmvCqr` / `ImvCqr`: conformalized quantile regression with pooled
//!   (average-marginal) or per-hour (individual) calibration;
//! * `AmvPoint` / `ImvPoint`: symmetric conformal bands around a point
//!   predictor;
//! * `RoA`: a static per-hour box from empirical calibration quantiles —
//!   the interval ignores the covariates entirely (stored as offsets
//!   around a zero center so the same interval algebra applies).

use crate::conformal::{
    abs_scores_by_dim, adjusted_quantile, amv_cqr_calibrate, build_intervals, cqr_scores_by_dim,
    imv_cqr_calibrate, point_cp_calibrate, CalibrationResult, ConformalError, IntervalVector,
    Method, MultiMode, QValue, ScoreKind, ScoreSet,
};
use crate::data::Matrix;
use crate::dcmodel::{
    build_schedule_lp, DataCenterParams, DcError, EssParams, MarketSeries, ScheduleOutcome,
    ScheduleSolution, WorkloadTrace,
};
use crate::quantile::{QuantileError, QuantileModel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchedError {
    #[error("invalid method spec: {0}")]
    BadSpec(String),
    #[error("method {0} needs the {1} model, which is missing")]
    MissingModel(Method, &'static str),
    #[error("calibration is for {got}, expected {expected}")]
    WrongCalibration { expected: Method, got: Method },
    #[error("schedule infeasible; tightest slots {tight_slots:?}")]
    Infeasible { tight_slots: Vec<usize> },
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Quantile(#[from] QuantileError),
    #[error(transparent)]
    Dc(#[from] DcError),
}

/// Which uncertainty-set method to run, at what miscoverage budget.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    pub alpha: f64,
    /// Lower/upper split of alpha for the CQR methods.
    pub alpha_split: (f64, f64),
}

impl MethodSpec {
    /// Spec with the default even split `alpha_l = alpha_h = alpha / 2`.
    pub fn new(method: Method, alpha: f64) -> Self {
        MethodSpec {
            method,
            alpha,
            alpha_split: (alpha / 2.0, alpha / 2.0),
        }
    }

    pub fn validate(&self) -> Result<(), SchedError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SchedError::BadSpec(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        let (al, ah) = self.alpha_split;
        if matches!(self.method, Method::AmvCqr | Method::ImvCqr | Method::Cqr)
            && (al - (self.alpha - ah)).abs() > 1e-12
        {
            return Err(SchedError::BadSpec(format!(
                "alpha split {al} + {ah} must sum to alpha {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// The trained predictors a method may draw on.
#[derive(Debug, Clone, Default)]
pub struct ModelSet {
    pub lower: Option<QuantileModel>,
    pub upper: Option<QuantileModel>,
    pub point: Option<QuantileModel>,
}

impl ModelSet {
    fn lower_for(&self, m: Method) -> Result<&QuantileModel, SchedError> {
        self.lower
            .as_ref()
            .ok_or(SchedError::MissingModel(m, "lower-quantile"))
    }

    fn upper_for(&self, m: Method) -> Result<&QuantileModel, SchedError> {
        self.upper
            .as_ref()
            .ok_or(SchedError::MissingModel(m, "upper-quantile"))
    }

    fn point_for(&self, m: Method) -> Result<&QuantileModel, SchedError> {
        self.point
            .as_ref()
            .ok_or(SchedError::MissingModel(m, "point"))
    }
}

/// Calibrate `spec.method` on the calibration split.
///
/// For `RoA` the stored q values encode the static per-hour box
/// `[empirical alpha/2 quantile, empirical 1 - alpha/2 quantile]` of the
/// calibration PV itself (no conformal adjustment, no covariates), as
/// offsets around a zero center.
pub fn calibrate_method(
    spec: &MethodSpec,
    models: &ModelSet,
    cal_x: &Matrix,
    cal_y: &Matrix,
) -> Result<CalibrationResult, SchedError> {
    spec.validate()?;
    let (alpha_l, alpha_h) = spec.alpha_split;
    match spec.method {
        Method::AmvCqr | Method::ImvCqr => {
            let lo = models.lower_for(spec.method)?.predict_rows(cal_x)?;
            let hi = models.upper_for(spec.method)?.predict_rows(cal_x)?;
            let (ls, us) = cqr_scores_by_dim(&lo, &hi, cal_y);
            let cal = if spec.method == Method::AmvCqr {
                amv_cqr_calibrate(&ls, &us, alpha_l, alpha_h)?
            } else {
                imv_cqr_calibrate(&ls, &us, alpha_l, alpha_h)?
            };
            Ok(cal)
        }
        Method::AmvPoint | Method::ImvPoint => {
            let mu = models.point_for(spec.method)?.predict_rows(cal_x)?;
            let scores = abs_scores_by_dim(&mu, cal_y);
            let mode = if spec.method == Method::AmvPoint {
                MultiMode::Amv
            } else {
                MultiMode::Imv
            };
            Ok(point_cp_calibrate(&scores, spec.alpha, mode)?)
        }
        Method::RoA => {
            let d = cal_y.n_cols();
            let mut q_lower = Vec::with_capacity(d);
            let mut q_upper = Vec::with_capacity(d);
            for j in 0..d {
                let col: Vec<f64> = (0..cal_y.n_rows()).map(|i| cal_y.get(i, j)).collect();
                let set = ScoreSet::new(ScoreKind::Absolute, col)?;
                let lo = adjusted_quantile(&set, spec.alpha / 2.0)?;
                let hi = adjusted_quantile(&set, 1.0 - spec.alpha / 2.0)?;
                // Interval algebra reads [0 - q_lower, 0 + q_upper].
                q_lower.push(-lo);
                q_upper.push(hi);
            }
            Ok(CalibrationResult {
                method: Method::RoA,
                q_lower: QValue::PerDim(q_lower),
                q_upper: QValue::PerDim(q_upper),
                alpha_l: spec.alpha,
                alpha_h: spec.alpha,
                calibration_size: cal_y.n_rows(),
                provenance: Default::default(),
            })
        }
        other => Err(SchedError::BadSpec(format!(
            "{other} is not a scheduling method"
        ))),
    }
}

/// Covariate-conditional PV uncertainty box for one new day, with lower
/// endpoints clamped at zero (PV cannot be negative; the clamp can only
/// move the bound toward the truth's support).
pub fn build_uncertainty_set(
    spec: &MethodSpec,
    calibration: &CalibrationResult,
    models: &ModelSet,
    x_new: &[f64],
) -> Result<IntervalVector, SchedError> {
    if calibration.method != spec.method {
        return Err(SchedError::WrongCalibration {
            expected: spec.method,
            got: calibration.method,
        });
    }
    let mut interval = match spec.method {
        Method::AmvCqr | Method::ImvCqr => {
            let lo = models.lower_for(spec.method)?.predict(x_new)?;
            let hi = models.upper_for(spec.method)?.predict(x_new)?;
            build_intervals(calibration, &lo, &hi)
        }
        Method::AmvPoint | Method::ImvPoint => {
            let mu = models.point_for(spec.method)?.predict(x_new)?;
            build_intervals(calibration, &mu, &mu)
        }
        Method::RoA => {
            // Static box: the covariates play no role.
            let d = match &calibration.q_lower {
                QValue::PerDim(v) => v.len(),
                QValue::Scalar(_) => {
                    return Err(SchedError::BadSpec(
                        "RO-A calibration must be per-dim".into(),
                    ))
                }
            };
            let zeros = vec![0.0; d];
            build_intervals(calibration, &zeros, &zeros)
        }
        other => {
            return Err(SchedError::BadSpec(format!(
                "{other} is not a scheduling method"
            )))
        }
    };
    interval.clamp_lower_at_zero();
    Ok(interval)
}

/// One scheduled day: the uncertainty box used and the solved schedule.
#[derive(Debug, Clone)]
pub struct RobustSchedule {
    pub interval: IntervalVector,
    pub solution: ScheduleSolution,
}

/// Build the day's uncertainty set, robustify the schedule LP at its
/// lower edge, and solve. Infeasibility propagates with the most binding
/// slots listed.
#[allow(clippy::too_many_arguments)]
pub fn robust_schedule(
    spec: &MethodSpec,
    calibration: &CalibrationResult,
    models: &ModelSet,
    x_new: &[f64],
    params: &DataCenterParams,
    ess: &EssParams,
    trace: &WorkloadTrace,
    market: &MarketSeries,
) -> Result<RobustSchedule, SchedError> {
    let interval = build_uncertainty_set(spec, calibration, models, x_new)?;
    let built = build_schedule_lp(params, ess, trace, market, &interval.lower)?;
    match built.solve()? {
        ScheduleOutcome::Solved(solution) => Ok(RobustSchedule { interval, solution }),
        ScheduleOutcome::Infeasible { tight_slots } => Err(SchedError::Infeasible { tight_slots }),
    }
}
