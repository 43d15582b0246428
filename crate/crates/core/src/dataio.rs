//! Synthetic day-ahead data with controllable heteroscedasticity, plus
//! CSV ingestion for user-supplied series.
//!
//! PV days follow a squared-half-sine clear-sky dome scaled by a seasonal
//! factor; randomness enters through a per-day cloud attenuation and
//! per-hour multiplicative noise, both proportional to `noise_scale`, so
//! `noise_scale = 0` reproduces the clear-sky model exactly and night
//! hours are identically zero. With `heteroscedastic` set, the noise
//! standard deviation scales with the irradiance level, which is what
//! makes covariate-adaptive intervals worth their keep.
//!
//! Covariates per sample: the previous day's 24 PV values, a day-of-year
//! sine/cosine pair, and the 24-hour deterministic clear-sky profile.
//! Each sample draws its own day-of-year and its own two-step cloud
//! chain (previous day then target day), so samples are i.i.d. — the
//! exchangeability behind every coverage guarantee — while
//! `day_correlation` still makes the previous-day covariate informative
//! about the target day within a sample.
//!
//! All emitted values are quantized to 9 significant decimal digits at
//! generation time, so CSV round trips are exact.

use crate::data::{Dataset, Matrix, SplitIndices};
use crate::dcmodel::{MarketSeries, WorkloadTrace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataIoError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("unknown profile preset '{0}'")]
    UnknownPreset(String),
    #[error("profile must have 24 entries, got {0}")]
    BadProfileLength(usize),
    #[error("{path} line {line}: {msg}")]
    BadRow {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("data: {0}")]
    Data(#[from] crate::data::DataError),
}

/// A named preset or an explicit 24-hour vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Profile {
    Named(String),
    Explicit(Vec<f64>),
}

impl Profile {
    fn resolve(&self, presets: &[(&str, [f64; 24])]) -> Result<Vec<f64>, DataIoError> {
        match self {
            Profile::Named(name) => presets
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v.to_vec())
                .ok_or_else(|| DataIoError::UnknownPreset(name.clone())),
            Profile::Explicit(v) => {
                if v.len() != 24 {
                    return Err(DataIoError::BadProfileLength(v.len()));
                }
                Ok(v.clone())
            }
        }
    }
}

const PRICE_PRESETS: [(&str, [f64; 24]); 3] = [
    (
        "diurnal",
        [
            0.04, 0.04, 0.04, 0.04, 0.04, 0.04, 0.07, 0.07, 0.07, 0.07, 0.07, 0.07, 0.07, 0.07,
            0.07, 0.07, 0.07, 0.13, 0.13, 0.13, 0.13, 0.13, 0.05, 0.05,
        ],
    ),
    (
        "two_tier",
        [
            0.20, 0.20, 0.20, 0.20, 0.20, 0.20, 0.20, 0.20, 0.20, 0.20, 0.20, 0.20, 0.05, 0.05,
            0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05,
        ],
    ),
    (
        "flat",
        [
            0.08, 0.08, 0.08, 0.08, 0.08, 0.08, 0.08, 0.08, 0.08, 0.08, 0.08, 0.08, 0.08, 0.08,
            0.08, 0.08, 0.08, 0.08, 0.08, 0.08, 0.08, 0.08, 0.08, 0.08,
        ],
    ),
];

const CBEP_PRESETS: [(&str, [f64; 24]); 2] = [
    (
        // Solar-heavy grid: carbon share dips at midday, peaks overnight.
        "duck",
        [
            0.70, 0.70, 0.70, 0.70, 0.70, 0.68, 0.60, 0.55, 0.48, 0.40, 0.36, 0.34, 0.34, 0.36,
            0.40, 0.48, 0.58, 0.66, 0.72, 0.74, 0.74, 0.73, 0.72, 0.71,
        ],
    ),
    (
        "flat",
        [
            0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5,
            0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5,
        ],
    ),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    /// Number of emitted samples (days with covariates).
    pub n_days: usize,
    pub n_train: usize,
    pub n_cal: usize,
    pub noise_scale: f64,
    pub heteroscedastic: bool,
    /// Peak clear-sky PV output, kW.
    pub pv_capacity_kw: f64,
    /// Correlation between a sample's previous-day and target-day cloud
    /// states. Samples stay i.i.d. regardless; this only controls how
    /// predictive the previous-day covariate is.
    pub day_correlation: f64,
    pub price_profile: Profile,
    pub cbep_profile: Profile,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_days: 100,
            n_train: 40,
            n_cal: 30,
            noise_scale: 0.15,
            heteroscedastic: true,
            pv_capacity_kw: 600.0,
            day_correlation: 0.6,
            price_profile: Profile::Named("diurnal".into()),
            cbep_profile: Profile::Named("duck".into()),
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), DataIoError> {
        if self.n_days < 3 {
            return Err(DataIoError::BadConfig(
                "n_days must be >= 3 to fill all splits".into(),
            ));
        }
        if self.n_train + self.n_cal >= self.n_days {
            return Err(DataIoError::BadConfig(
                "n_train + n_cal must leave at least one test day".into(),
            ));
        }
        if self.noise_scale < 0.0 || self.pv_capacity_kw <= 0.0 {
            return Err(DataIoError::BadConfig(
                "noise_scale >= 0, capacity > 0".into(),
            ));
        }
        if !(-1.0..1.0).contains(&self.day_correlation) {
            return Err(DataIoError::BadConfig(
                "day_correlation must lie in (-1, 1)".into(),
            ));
        }
        Ok(())
    }
}

pub const HOURS: usize = 24;
const SUNRISE: f64 = 6.0;
const SUNSET: f64 = 18.0;

/// Squared half-sine clear-sky dome, 0 outside daylight.
pub fn clear_sky_shape(hour: usize) -> f64 {
    let h = hour as f64 + 0.5;
    if h <= SUNRISE || h >= SUNSET {
        return 0.0;
    }
    let x = (h - SUNRISE) / (SUNSET - SUNRISE);
    (std::f64::consts::PI * x).sin().powi(2)
}

pub fn season_factor(doy: usize) -> f64 {
    let doy = (doy % 365) as f64;
    0.75 + 0.25 * (std::f64::consts::TAU * (doy - 80.0) / 365.0).sin()
}

/// Deterministic clear-sky PV profile for a day of year, kW.
pub fn clear_sky_day(doy: usize, capacity_kw: f64) -> Vec<f64> {
    (0..HOURS)
        .map(|h| capacity_kw * season_factor(doy) * clear_sky_shape(h))
        .collect()
}

/// Quantize to 9 significant decimal digits: the value written to CSV is
/// the value held in memory, so text round trips are exact.
pub fn quantize_sig9(v: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    format!("{:.8e}", v)
        .parse()
        .expect("formatted float reparses")
}

/// One synthetic PV day (kW per hour) given a day of year and a cloud
/// state in [0, 1].
fn pv_day(
    cfg: &SynthConfig,
    doy: usize,
    cloud: f64,
    rng: &mut ChaCha8Rng,
    normal: &Normal<f64>,
) -> Vec<f64> {
    let depth = (1.5 * cfg.noise_scale).min(0.85);
    let atten = 1.0 - depth * cloud;
    let sigma_ref = 0.3 * cfg.pv_capacity_kw;
    (0..HOURS)
        .map(|h| {
            let clear = cfg.pv_capacity_kw * season_factor(doy) * clear_sky_shape(h);
            if clear <= 0.0 {
                return 0.0;
            }
            let base = clear * atten;
            let noisy = if cfg.noise_scale == 0.0 {
                base
            } else if cfg.heteroscedastic {
                base * (1.0 + cfg.noise_scale * normal.sample(rng))
            } else {
                base + cfg.noise_scale * sigma_ref * normal.sample(rng)
            };
            quantize_sig9(noisy.max(0.0))
        })
        .collect()
}

/// Everything one benchmark run needs: the covariate/target dataset, the
/// day-of-year per sample, and fixed market and workload day profiles.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    /// Day of year drawn for each sample (useful for diagnostics).
    pub doy: Vec<usize>,
    pub market: MarketSeries,
    pub trace: WorkloadTrace,
}

/// Generate a synthetic dataset of i.i.d. samples. Deterministic per
/// seed: two runs with the same config produce identical bytes
/// everywhere downstream.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput, DataIoError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let squash = |z: f64| 1.0 / (1.0 + (-1.7 * z).exp());
    let rho = cfg.day_correlation;

    let mut doys = Vec::with_capacity(cfg.n_days);
    let mut features = Vec::with_capacity(cfg.n_days);
    let mut targets = Vec::with_capacity(cfg.n_days);
    for _ in 0..cfg.n_days {
        let doy = rng.gen_range(0..365usize);
        let z_prev: f64 = normal.sample(&mut rng);
        let z_tgt = rho * z_prev + (1.0 - rho * rho).sqrt() * normal.sample(&mut rng);
        let prev = pv_day(cfg, (doy + 364) % 365, squash(z_prev), &mut rng, &normal);
        let target = pv_day(cfg, doy, squash(z_tgt), &mut rng, &normal);

        let mut row = Vec::with_capacity(2 * HOURS + 2);
        row.extend_from_slice(&prev);
        row.push(quantize_sig9(
            (std::f64::consts::TAU * doy as f64 / 365.0).sin(),
        ));
        row.push(quantize_sig9(
            (std::f64::consts::TAU * doy as f64 / 365.0).cos(),
        ));
        for v in clear_sky_day(doy, cfg.pv_capacity_kw) {
            row.push(quantize_sig9(v));
        }
        doys.push(doy);
        features.push(row);
        targets.push(target);
    }

    let dataset = Dataset::new(
        Matrix::from_rows(&features)?,
        Matrix::from_rows(&targets)?,
        SplitIndices::contiguous(cfg.n_days, cfg.n_train, cfg.n_cal)?,
    )?;

    let market = MarketSeries {
        price: cfg.price_profile.resolve(&PRICE_PRESETS)?,
        cbep: cfg.cbep_profile.resolve(&CBEP_PRESETS)?,
    };
    Ok(SynthOutput {
        dataset,
        doy: doys,
        market,
        trace: default_workload(),
    })
}

/// Benchmark workload: a diurnal inflexible stream plus three deferrable
/// classes with increasing delay tolerance.
pub fn default_workload() -> WorkloadTrace {
    let bump = |base: f64, peak: f64, center: f64| -> Vec<f64> {
        (0..HOURS)
            .map(|h| {
                let x = (h as f64 - center) / 12.0 * std::f64::consts::PI;
                quantize_sig9(base + (peak - base) * (0.5 + 0.5 * x.cos()).powi(2))
            })
            .collect()
    };
    WorkloadTrace {
        inflexible: bump(900.0, 1800.0, 14.0),
        flexible_arrivals: vec![
            bump(80.0, 220.0, 10.0),
            bump(100.0, 280.0, 12.0),
            bump(120.0, 340.0, 15.0),
        ],
        delay_tolerance: vec![2, 5, 7],
    }
}

// ---------------------------------------------------------------------------
// CSV schemas (bit-exact headers):
//   pv.csv       day,hour,pv_kw
//   market.csv   hour,price_usd_per_kwh,cbep
//   workload.csv hour,inflexible,flex_c1,flex_c2,flex_c3
// UTF-8, LF line endings, '.' decimal separator.
// ---------------------------------------------------------------------------

pub fn write_pv_csv(path: &Path, pv_days: &Matrix) -> Result<(), DataIoError> {
    let mut out = String::from("day,hour,pv_kw\n");
    for d in 0..pv_days.n_rows() {
        for h in 0..pv_days.n_cols() {
            out.push_str(&format!("{d},{h},{}\n", pv_days.get(d, h)));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_market_csv(path: &Path, market: &MarketSeries) -> Result<(), DataIoError> {
    let mut out = String::from("hour,price_usd_per_kwh,cbep\n");
    for h in 0..market.price.len() {
        out.push_str(&format!("{h},{},{}\n", market.price[h], market.cbep[h]));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_workload_csv(path: &Path, trace: &WorkloadTrace) -> Result<(), DataIoError> {
    if trace.n_classes() != 3 {
        return Err(DataIoError::BadConfig(
            "workload.csv schema carries 3 flexible classes".into(),
        ));
    }
    let mut out = String::from("hour,inflexible,flex_c1,flex_c2,flex_c3\n");
    for h in 0..trace.horizon() {
        out.push_str(&format!(
            "{h},{},{},{},{}\n",
            trace.inflexible[h],
            trace.flexible_arrivals[0][h],
            trace.flexible_arrivals[1][h],
            trace.flexible_arrivals[2][h]
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn field<'a>(
    rec: &'a csv::StringRecord,
    idx: usize,
    path: &str,
    line: usize,
) -> Result<&'a str, DataIoError> {
    let v = rec.get(idx).unwrap_or("");
    if v.trim().is_empty() {
        return Err(DataIoError::BadRow {
            path: path.into(),
            line,
            msg: format!("missing value in column {idx}"),
        });
    }
    Ok(v)
}

fn parse_field(
    rec: &csv::StringRecord,
    idx: usize,
    path: &str,
    line: usize,
) -> Result<f64, DataIoError> {
    let raw = field(rec, idx, path, line)?;
    let v: f64 = raw.parse().map_err(|_| DataIoError::BadRow {
        path: path.into(),
        line,
        msg: format!("'{raw}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(DataIoError::BadRow {
            path: path.into(),
            line,
            msg: "non-finite value".into(),
        });
    }
    Ok(v)
}

/// Read `pv.csv` into a day-by-hour matrix. Rows must arrive in
/// `(day, hour)` order with 24 hours per day, nonnegative generation.
pub fn ingest_pv_csv(path: &Path) -> Result<Matrix, DataIoError> {
    let name = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut days: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let rec = rec?;
        let day = parse_field(&rec, 0, &name, line)? as usize;
        let hour = parse_field(&rec, 1, &name, line)? as usize;
        let pv = parse_field(&rec, 2, &name, line)?;
        if pv < 0.0 {
            return Err(DataIoError::BadRow {
                path: name,
                line,
                msg: format!("negative PV {pv}"),
            });
        }
        if day == days.len() && hour == 0 {
            days.push(Vec::with_capacity(HOURS));
        }
        let Some(current) = days.get_mut(day) else {
            return Err(DataIoError::BadRow {
                path: name,
                line,
                msg: format!("day {day} out of order"),
            });
        };
        if hour != current.len() {
            return Err(DataIoError::BadRow {
                path: name,
                line,
                msg: format!("expected hour {}, got {hour}", current.len()),
            });
        }
        current.push(pv);
    }
    if days.is_empty() {
        return Err(DataIoError::BadRow {
            path: name,
            line: 1,
            msg: "no data rows".into(),
        });
    }
    if let Some(d) = days.iter().position(|d| d.len() != HOURS) {
        return Err(DataIoError::BadRow {
            path: name,
            line: 0,
            msg: format!("day {d} has {} hours, expected {HOURS}", days[d].len()),
        });
    }
    Ok(Matrix::from_rows(&days)?)
}

/// Assemble a covariate/target dataset from ingested PV days: features
/// are the previous day's profile (zeros for the first day) plus a
/// day-of-year encoding from the row index. One sample per PV day.
pub fn dataset_from_pv_days(
    pv_days: &Matrix,
    n_train: usize,
    n_cal: usize,
) -> Result<Dataset, DataIoError> {
    let n = pv_days.n_rows();
    let mut features = Vec::with_capacity(n);
    for d in 0..n {
        let mut row = Vec::with_capacity(HOURS + 2);
        if d == 0 {
            row.extend(std::iter::repeat(0.0).take(HOURS));
        } else {
            row.extend_from_slice(pv_days.row(d - 1));
        }
        let doy = (d % 365) as f64;
        row.push((std::f64::consts::TAU * doy / 365.0).sin());
        row.push((std::f64::consts::TAU * doy / 365.0).cos());
        features.push(row);
    }
    Ok(Dataset::new(
        Matrix::from_rows(&features)?,
        pv_days.clone(),
        SplitIndices::contiguous(n, n_train, n_cal)?,
    )?)
}

pub fn ingest_market_csv(path: &Path) -> Result<MarketSeries, DataIoError> {
    let name = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut price = Vec::new();
    let mut cbep = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let p = parse_field(&rec, 1, &name, line)?;
        let c = parse_field(&rec, 2, &name, line)?;
        if !(0.0..=1.0).contains(&c) {
            return Err(DataIoError::BadRow {
                path: name,
                line,
                msg: format!("cbep {c} outside [0, 1]"),
            });
        }
        price.push(p);
        cbep.push(c);
    }
    if price.len() != HOURS {
        return Err(DataIoError::BadRow {
            path: name,
            line: 0,
            msg: format!("expected {HOURS} hourly rows, got {}", price.len()),
        });
    }
    Ok(MarketSeries { price, cbep })
}

/// Read `workload.csv`; delay tolerances come from the caller (they are
/// configuration, not part of the hourly schema).
pub fn ingest_workload_csv(
    path: &Path,
    delay_tolerance: Vec<usize>,
) -> Result<WorkloadTrace, DataIoError> {
    let name = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut inflexible = Vec::new();
    let mut flex: Vec<Vec<f64>> = vec![Vec::new(); 3];
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let infl = parse_field(&rec, 1, &name, line)?;
        if infl < 0.0 {
            return Err(DataIoError::BadRow {
                path: name,
                line,
                msg: "negative workload".into(),
            });
        }
        inflexible.push(infl);
        for c in 0..3 {
            let v = parse_field(&rec, 2 + c, &name, line)?;
            if v < 0.0 {
                return Err(DataIoError::BadRow {
                    path: name,
                    line,
                    msg: "negative workload".into(),
                });
            }
            flex[c].push(v);
        }
    }
    if inflexible.len() != HOURS {
        return Err(DataIoError::BadRow {
            path: name,
            line: 0,
            msg: format!("expected {HOURS} hourly rows, got {}", inflexible.len()),
        });
    }
    if delay_tolerance.len() != 3 {
        return Err(DataIoError::BadConfig(
            "need one delay tolerance per flexible class".into(),
        ));
    }
    Ok(WorkloadTrace {
        inflexible,
        flexible_arrivals: flex,
        delay_tolerance,
    })
}
