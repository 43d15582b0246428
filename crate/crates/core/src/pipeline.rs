//! End-to-end benchmark engine: generate data, train quantile models,
//! calibrate every requested method at every miscoverage level, solve one
//! robust schedule per test day, validate against realized PV, and
//! aggregate cost, carbon, coverage, width, and violation statistics.
//!
//! Day solves run data-parallel; aggregation is in day-index order and
//! every random stream is derived from the master seed, so the emitted
//! report is byte-identical across runs and thread counts.

use crate::conformal::{CalibrationResult, Method, Provenance};
use crate::data::Matrix;
use crate::dataio::{generate, SynthConfig, SynthOutput};
use crate::dcmodel::{validate_schedule, DataCenterParams, DcError, EssParams};
use crate::exec::{self, Execution};
use crate::quantile::{crossing_rate, train_on_rows, QuantileError, TrainConfig};
use crate::scheduler::{build_uncertainty_set, calibrate_method, MethodSpec, ModelSet, SchedError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    DataIo(#[from] crate::dataio::DataIoError),
    #[error(transparent)]
    Quantile(#[from] QuantileError),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Dc(#[from] DcError),
    #[error("config: {0}")]
    BadConfig(String),
}

/// Full benchmark configuration; serializable as the CLI config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub tau_low: f64,
    pub tau_high: f64,
    pub methods: Vec<Method>,
    pub alphas: Vec<f64>,
    pub params: DataCenterParams,
    pub ess: EssParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            synth: SynthConfig::default(),
            train: TrainConfig::default(),
            tau_low: 0.1,
            tau_high: 0.9,
            methods: vec![
                Method::AmvCqr,
                Method::ImvCqr,
                Method::AmvPoint,
                Method::ImvPoint,
                Method::RoA,
            ],
            alphas: vec![0.1],
            params: DataCenterParams::default(),
            ess: EssParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.methods.is_empty() {
            return Err(PipelineError::BadConfig("methods list is empty".into()));
        }
        if self.alphas.is_empty() {
            return Err(PipelineError::BadConfig("alphas list is empty".into()));
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a < 1.0) {
                return Err(PipelineError::BadConfig(format!(
                    "alpha {a} outside (0, 1)"
                )));
            }
        }
        for &t in [self.tau_low, self.tau_high].iter() {
            if !(t > 0.0 && t < 1.0) {
                return Err(PipelineError::BadConfig(format!("tau {t} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Train the lower, upper, and point models on the proper training split.
/// Per-model seeds derive from the configured training seed.
pub fn train_models(data: &SynthOutput, cfg: &PipelineConfig) -> Result<ModelSet, PipelineError> {
    let (tx, ty) = data.dataset.train_view();
    let mk = |tau: f64, salt: u64| -> Result<_, QuantileError> {
        let mut tc = cfg.train.clone();
        tc.seed = exec::derive_seed(cfg.train.seed, salt);
        train_on_rows(&tx, &ty, tau, &tc)
    };
    Ok(ModelSet {
        lower: Some(mk(cfg.tau_low, 0)?),
        upper: Some(mk(cfg.tau_high, 1)?),
        point: Some(mk(0.5, 2)?),
    })
}

/// SHA-256 of the calibration targets, hex-encoded; identifies the data
/// a calibration was computed from.
pub fn dataset_hash(m: &Matrix) -> String {
    let mut hasher = Sha256::new();
    for i in 0..m.n_rows() {
        for &v in m.row(i) {
            hasher.update(v.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Aggregate results for one (method, alpha) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: Method,
    pub alpha: f64,
    pub n_days: usize,
    pub n_infeasible: usize,
    pub mean_cost: f64,
    pub mean_carbon: f64,
    pub mean_width: f64,
    /// Average over hours of per-hour empirical coverage on test days.
    pub coverage_avg: f64,
    /// Per-hour empirical coverage of the uncertainty sets on test days.
    pub per_hour_coverage: Vec<f64>,
    /// Realized balance violations per hour across test days.
    pub per_hour_violations: Vec<usize>,
    /// Hour-averaged violation rate.
    pub violation_avg: f64,
    /// Worst single-hour violation rate.
    pub violation_max: f64,
    /// Fraction of days with at least one violated hour.
    pub daily_any_rate: f64,
    /// Headline rate: hour-averaged for average-marginal methods, worst
    /// hour for individual methods and the static box baseline.
    pub violation_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub master_seed: u64,
    pub n_test_days: usize,
    /// Lower-above-upper rate of the raw quantile models on test
    /// covariates (diagnostic; the conformal layer works on raw outputs).
    pub quantile_crossing_rate: f64,
    pub rows: Vec<MethodRow>,
}

impl BenchmarkReport {
    /// Headline table: one row per (method, coverage level).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,coverage_level,mean_cost_usd,carbon_kwh,violation_rate,mean_width_kw\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.method,
                1.0 - r.alpha,
                r.mean_cost,
                r.mean_carbon,
                r.violation_rate,
                r.mean_width
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plot-ready series for one method: coverage level vs mean cost.
    pub fn plot_csv(&self, method: Method) -> String {
        let mut rows: Vec<&MethodRow> = self.rows.iter().filter(|r| r.method == method).collect();
        rows.sort_by(|a, b| (1.0 - a.alpha).total_cmp(&(1.0 - b.alpha)));
        let mut out = String::from("coverage_level,mean_cost_usd\n");
        for r in rows {
            out.push_str(&format!("{},{}\n", 1.0 - r.alpha, r.mean_cost));
        }
        out
    }

    pub fn row(&self, method: Method, alpha: f64) -> Option<&MethodRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && (r.alpha - alpha).abs() < 1e-12)
    }
}

/// Everything a benchmark run produces.
pub struct BenchmarkRun {
    pub report: BenchmarkReport,
    pub models: ModelSet,
    pub calibrations: Vec<(MethodSpec, CalibrationResult)>,
}

struct DayMetrics {
    infeasible: bool,
    cost: f64,
    carbon: f64,
    width_mean: f64,
    covered: Vec<bool>,
    violated: Vec<bool>,
}

/// Run the full benchmark loop: methods x alphas x test days.
pub fn run_benchmark(
    cfg: &PipelineConfig,
    exec_mode: Execution,
) -> Result<BenchmarkRun, PipelineError> {
    cfg.validate()?;
    let data = generate(&cfg.synth)?;
    let models = train_models(&data, cfg)?;
    run_benchmark_with(cfg, exec_mode, &data, models)
}

/// Benchmark with pre-trained models (lets callers reuse checkpoints).
pub fn run_benchmark_with(
    cfg: &PipelineConfig,
    exec_mode: Execution,
    data: &SynthOutput,
    models: ModelSet,
) -> Result<BenchmarkRun, PipelineError> {
    cfg.validate()?;
    let (cal_x, cal_y) = data.dataset.calibration_view();
    let (test_x, test_y) = data.dataset.test_view();
    let n_days = test_x.n_rows();
    if n_days == 0 {
        return Err(PipelineError::BadConfig("no test days".into()));
    }
    let hours = data.dataset.output_dim();
    let provenance_hash = dataset_hash(&cal_y);

    let xing = crossing_rate(
        models.lower.as_ref().expect("trained"),
        models.upper.as_ref().expect("trained"),
        &test_x,
    )?;

    let mut rows = Vec::new();
    let mut calibrations = Vec::new();
    for &method in &cfg.methods {
        for &alpha in &cfg.alphas {
            let spec = MethodSpec::new(method, alpha);
            let calibration =
                calibrate_method(&spec, &models, &cal_x, &cal_y)?.with_provenance(Provenance {
                    dataset_hash: provenance_hash.clone(),
                    seed: cfg.synth.seed,
                });

            let metrics: Vec<DayMetrics> = exec::map_indexed(exec_mode, n_days, |i| {
                day_metrics(&spec, &calibration, &models, cfg, data, &test_x, &test_y, i)
            });

            rows.push(aggregate(method, alpha, hours, &metrics));
            calibrations.push((spec, calibration));
        }
    }

    Ok(BenchmarkRun {
        report: BenchmarkReport {
            master_seed: cfg.synth.seed,
            n_test_days: n_days,
            quantile_crossing_rate: xing,
            rows,
        },
        models,
        calibrations,
    })
}

#[allow(clippy::too_many_arguments)]
fn day_metrics(
    spec: &MethodSpec,
    calibration: &CalibrationResult,
    models: &ModelSet,
    cfg: &PipelineConfig,
    data: &SynthOutput,
    test_x: &Matrix,
    test_y: &Matrix,
    day: usize,
) -> DayMetrics {
    let hours = test_y.n_cols();
    let x = test_x.row(day);
    let realized = test_y.row(day);
    let skip = |width_mean: f64, covered: Vec<bool>| DayMetrics {
        infeasible: true,
        cost: 0.0,
        carbon: 0.0,
        width_mean,
        covered,
        violated: vec![false; hours],
    };
    let interval = match build_uncertainty_set(spec, calibration, models, x) {
        Ok(iv) => iv,
        Err(_) => return skip(0.0, vec![false; hours]),
    };
    let covered = interval.contains(realized);
    let width_mean = interval.widths().iter().sum::<f64>() / hours as f64;

    let built = match crate::dcmodel::build_schedule_lp(
        &cfg.params,
        &cfg.ess,
        &data.trace,
        &data.market,
        &interval.lower,
    ) {
        Ok(b) => b,
        Err(_) => return skip(width_mean, covered),
    };
    match built.solve() {
        Ok(crate::dcmodel::ScheduleOutcome::Solved(sol)) => {
            let report = validate_schedule(&sol, realized).expect("horizon matches");
            DayMetrics {
                infeasible: false,
                cost: sol.total_cost(),
                carbon: sol.carbon_energy,
                width_mean,
                covered,
                violated: report.violation_flags,
            }
        }
        _ => skip(width_mean, covered),
    }
}

fn aggregate(method: Method, alpha: f64, hours: usize, metrics: &[DayMetrics]) -> MethodRow {
    let n_days = metrics.len();
    let feasible: Vec<&DayMetrics> = metrics.iter().filter(|m| !m.infeasible).collect();
    let n_feas = feasible.len().max(1) as f64;
    let mean_cost = feasible.iter().map(|m| m.cost).sum::<f64>() / n_feas;
    let mean_carbon = feasible.iter().map(|m| m.carbon).sum::<f64>() / n_feas;
    let mean_width = metrics.iter().map(|m| m.width_mean).sum::<f64>() / n_days as f64;

    let mut per_hour_cov = vec![0usize; hours];
    let mut per_hour_violations = vec![0usize; hours];
    let mut any_days = 0usize;
    for m in metrics {
        let mut any = false;
        for h in 0..hours {
            if m.covered[h] {
                per_hour_cov[h] += 1;
            }
            if m.violated[h] {
                per_hour_violations[h] += 1;
                any = true;
            }
        }
        if any {
            any_days += 1;
        }
    }
    let per_hour_coverage: Vec<f64> = per_hour_cov
        .iter()
        .map(|&c| c as f64 / n_days as f64)
        .collect();
    let coverage_avg = per_hour_coverage.iter().sum::<f64>() / hours as f64;
    let rates: Vec<f64> = per_hour_violations
        .iter()
        .map(|&v| v as f64 / n_days as f64)
        .collect();
    let violation_avg = rates.iter().sum::<f64>() / hours as f64;
    let violation_max = rates.iter().cloned().fold(0.0, f64::max);
    let violation_rate = match method {
        Method::AmvCqr | Method::AmvPoint => violation_avg,
        _ => violation_max,
    };
    MethodRow {
        method,
        alpha,
        n_days,
        n_infeasible: n_days - feasible.len(),
        mean_cost,
        mean_carbon,
        mean_width,
        coverage_avg,
        per_hour_coverage,
        per_hour_violations,
        violation_avg,
        violation_max,
        daily_any_rate: any_days as f64 / n_days as f64,
        violation_rate,
    }
}
