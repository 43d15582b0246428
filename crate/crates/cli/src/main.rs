//! Command-line pipeline: synth -> train -> calibrate -> schedule /
//! benchmark -> evaluate, all driven by one JSON config with flag
//! overrides and a single master seed.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use confsched_core::conformal::{CalibrationResult, Method, Provenance};
use confsched_core::dataio::{
    ingest_pv_csv, write_market_csv, write_pv_csv, write_workload_csv, SynthOutput,
};
use confsched_core::dcmodel::{
    schedule_summary_json, schedule_to_csv, validate_schedule, ScheduleSolution,
};
use confsched_core::exec::derive_seed;
use confsched_core::pipeline::{
    dataset_hash, run_benchmark_with, train_models, BenchmarkRun, PipelineConfig,
};
use confsched_core::quantile::QuantileModel;
use confsched_core::scheduler::{calibrate_method, robust_schedule, MethodSpec, ModelSet};
use confsched_core::Execution;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "confsched",
    about = "Conformal uncertainty sets and robust day-ahead data-center scheduling",
    version
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalArgs {
    /// JSON config file; omitted fields fall back to defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; every random stream in the run derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (stable relative paths under it).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Miscoverage levels, e.g. --alpha 0.05,0.1.
    #[arg(long, global = true, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Methods: amv_cqr, imv_cqr, amv_point, imv_point, ro_a.
    #[arg(long, global = true, value_delimiter = ',')]
    method: Vec<String>,
    /// Certificate price sweep, $/kWh, e.g. --lambda-c 0,0.05,0.1,0.2.
    #[arg(long = "lambda-c", global = true, value_delimiter = ',')]
    lambda_c: Vec<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic data (pv.csv, market.csv, workload.csv + dataset artifact).
    Synth,
    /// Train lower/upper/point quantile models on the training split.
    Train,
    /// Calibrate each requested method at each alpha; writes calibration JSON.
    Calibrate,
    /// Solve the robust schedule for one test day, using the first
    /// configured method and alpha.
    Schedule {
        /// Test-day index (into the test split).
        #[arg(long, default_value_t = 0)]
        day: usize,
    },
    /// Full method-comparison benchmark over all test days.
    Benchmark,
    /// Re-validate an emitted schedule CSV against realized PV.
    Evaluate {
        /// Schedule CSV produced by `schedule`.
        #[arg(long)]
        schedule: PathBuf,
        /// pv.csv with realized generation.
        #[arg(long)]
        pv: PathBuf,
        /// Day row of the pv file to validate against.
        #[arg(long, default_value_t = 0)]
        day: usize,
    },
}

/// On-disk dataset artifact written by `synth` and read by every later
/// stage.
#[derive(Serialize, Deserialize)]
struct SynthArtifact {
    config: PipelineConfig,
    dataset: confsched_core::data::Dataset,
    doy: Vec<usize>,
    market: confsched_core::dcmodel::MarketSeries,
    trace: confsched_core::dcmodel::WorkloadTrace,
}

impl SynthArtifact {
    fn to_output(&self) -> SynthOutput {
        SynthOutput {
            dataset: self.dataset.clone(),
            doy: self.doy.clone(),
            market: self.market.clone(),
            trace: self.trace.clone(),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            // One machine-parsable line on stderr.
            eprintln!("error: {e:#}");
            let usage = e.to_string().starts_with("usage:");
            std::process::exit(if usage { 2 } else { 1 });
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Synth => cmd_synth(&cli.global, &cfg),
        Command::Train => cmd_train(&cli.global, &cfg),
        Command::Calibrate => cmd_calibrate(&cli.global, &cfg),
        Command::Schedule { day } => cmd_schedule(&cli.global, &cfg, day),
        Command::Benchmark => cmd_benchmark(&cli.global, &cfg),
        Command::Evaluate { schedule, pv, day } => cmd_evaluate(&cli.global, &schedule, &pv, day),
    }
}

/// Defaults -> config file -> flag overrides, in that order.
fn load_config(g: &GlobalArgs) -> Result<PipelineConfig> {
    let mut value = serde_json::to_value(PipelineConfig::default())?;
    if let Some(path) = &g.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("config: cannot read {}", path.display()))?;
        let overlay: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("config: {}", path.display()))?;
        merge(&mut value, overlay);
    }
    let mut cfg: PipelineConfig = serde_json::from_value(value).context("config")?;

    if let Some(seed) = g.seed {
        cfg.synth.seed = derive_seed(seed, 1);
        cfg.train.seed = derive_seed(seed, 2);
    }
    if !g.alpha.is_empty() {
        for &a in &g.alpha {
            if !(a > 0.0 && a < 1.0) {
                bail!("usage: --alpha values must lie in (0, 1), got {a}");
            }
        }
        cfg.alphas = g.alpha.clone();
    }
    if !g.method.is_empty() {
        let mut methods = Vec::new();
        for m in &g.method {
            let parsed = Method::parse(m)
                .ok_or_else(|| anyhow!("usage: unknown method '{m}' (expected amv_cqr, imv_cqr, amv_point, imv_point, ro_a)"))?;
            methods.push(parsed);
        }
        cfg.methods = methods;
    }
    if cfg.methods.is_empty() {
        bail!("usage: methods list is empty");
    }
    if cfg.alphas.is_empty() {
        bail!("usage: alphas list is empty");
    }
    Ok(cfg)
}

/// Deep-merge JSON objects (overlay wins elsewhere).
fn merge(base: &mut serde_json::Value, overlay: serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("cannot create {}", path.display()))
}

fn method_slug(m: Method) -> String {
    m.label().to_ascii_lowercase().replace('-', "_")
}

fn artifact_path(g: &GlobalArgs) -> PathBuf {
    g.out.join("data").join("dataset.json")
}

fn load_artifact(g: &GlobalArgs) -> Result<SynthArtifact> {
    let path = artifact_path(g);
    let text = std::fs::read_to_string(&path).with_context(|| {
        format!(
            "missing dataset artifact {}; run the 'synth' stage first",
            path.display()
        )
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn model_paths(g: &GlobalArgs) -> [(PathBuf, &'static str); 3] {
    let dir = g.out.join("models");
    [
        (dir.join("q_low.json"), "lower"),
        (dir.join("q_high.json"), "upper"),
        (dir.join("q_mid.json"), "point"),
    ]
}

fn load_models(g: &GlobalArgs) -> Result<ModelSet> {
    let mut set = ModelSet::default();
    for (path, role) in model_paths(g) {
        let model = QuantileModel::load_json(&path).with_context(|| {
            format!(
                "missing {role} model {}; run the 'train' stage first",
                path.display()
            )
        })?;
        match role {
            "lower" => set.lower = Some(model),
            "upper" => set.upper = Some(model),
            _ => set.point = Some(model),
        }
    }
    Ok(set)
}

fn cmd_synth(g: &GlobalArgs, cfg: &PipelineConfig) -> Result<()> {
    let data = confsched_core::dataio::generate(&cfg.synth).context("synth")?;
    let dir = g.out.join("data");
    ensure_dir(&dir)?;
    write_pv_csv(&dir.join("pv.csv"), &data.dataset.targets).context("synth: pv.csv")?;
    write_market_csv(&dir.join("market.csv"), &data.market).context("synth: market.csv")?;
    write_workload_csv(&dir.join("workload.csv"), &data.trace).context("synth: workload.csv")?;
    let artifact = SynthArtifact {
        config: cfg.clone(),
        dataset: data.dataset,
        doy: data.doy,
        market: data.market,
        trace: data.trace,
    };
    std::fs::write(artifact_path(g), serde_json::to_string(&artifact)?)?;
    println!(
        "synth: {} samples ({} train / {} cal / {} test) -> {}",
        artifact.dataset.n_samples(),
        artifact.dataset.splits.train.len(),
        artifact.dataset.splits.calibration.len(),
        artifact.dataset.splits.test.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_train(g: &GlobalArgs, cfg: &PipelineConfig) -> Result<()> {
    let artifact = load_artifact(g)?;
    let data = artifact.to_output();
    let models = train_models(&data, cfg).context("train")?;
    let dir = g.out.join("models");
    ensure_dir(&dir)?;
    for (path, role) in model_paths(g) {
        let model = match role {
            "lower" => models.lower.as_ref(),
            "upper" => models.upper.as_ref(),
            _ => models.point.as_ref(),
        }
        .expect("trained");
        model
            .save_json(&path)
            .with_context(|| format!("train: write {}", path.display()))?;
        println!("train: tau {:.3} -> {}", model.tau, path.display());
    }
    let (tx, _) = data.dataset.train_view();
    let xr = confsched_core::quantile::crossing_rate(
        models.lower.as_ref().unwrap(),
        models.upper.as_ref().unwrap(),
        &tx,
    )?;
    println!("train: quantile crossing rate on training split: {xr:.4}");
    Ok(())
}

fn cmd_calibrate(g: &GlobalArgs, cfg: &PipelineConfig) -> Result<()> {
    let artifact = load_artifact(g)?;
    let models = load_models(g)?;
    let (cal_x, cal_y) = artifact.dataset.calibration_view();
    let hash = dataset_hash(&cal_y);
    let dir = g.out.join("calibration");
    ensure_dir(&dir)?;
    for &method in &cfg.methods {
        for &alpha in &cfg.alphas {
            let spec = MethodSpec::new(method, alpha);
            let cal = calibrate_method(&spec, &models, &cal_x, &cal_y)
                .with_context(|| format!("calibrate: {method} alpha {alpha}"))?
                .with_provenance(Provenance {
                    dataset_hash: hash.clone(),
                    seed: cfg.synth.seed,
                });
            let path = dir.join(format!("{}_alpha{}.json", method_slug(method), alpha));
            std::fs::write(&path, cal.to_json())?;
            println!("calibrate: {method} alpha {alpha} -> {}", path.display());
        }
    }
    Ok(())
}

fn calibration_path(g: &GlobalArgs, method: Method, alpha: f64) -> PathBuf {
    g.out
        .join("calibration")
        .join(format!("{}_alpha{}.json", method_slug(method), alpha))
}

fn cmd_schedule(g: &GlobalArgs, cfg: &PipelineConfig, day: usize) -> Result<()> {
    let artifact = load_artifact(g)?;
    let models = load_models(g)?;
    let method = *cfg.methods.first().expect("validated nonempty");
    let alpha = *cfg.alphas.first().expect("validated nonempty");
    let spec = MethodSpec::new(method, alpha);
    let cal_file = calibration_path(g, method, alpha);
    let cal_text = std::fs::read_to_string(&cal_file).with_context(|| {
        format!(
            "missing calibration {}; run the 'calibrate' stage first",
            cal_file.display()
        )
    })?;
    let calibration = CalibrationResult::from_json(&cal_text)?;

    let (test_x, test_y) = artifact.dataset.test_view();
    if day >= test_x.n_rows() {
        bail!(
            "usage: --day {day} out of range (test split has {} days)",
            test_x.n_rows()
        );
    }
    let rs = robust_schedule(
        &spec,
        &calibration,
        &models,
        test_x.row(day),
        &cfg.params,
        &cfg.ess,
        &artifact.trace,
        &artifact.market,
    )
    .with_context(|| format!("schedule: {method} alpha {alpha} day {day}"))?;
    let validation = validate_schedule(&rs.solution, test_y.row(day))?;

    let dir = g.out.join("schedules");
    ensure_dir(&dir)?;
    let stem = format!("day{day}_{}_alpha{alpha}", method_slug(method));
    let csv_path = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv_path, schedule_to_csv(&rs.solution, Some(&validation)))?;
    std::fs::write(
        dir.join(format!("{stem}.json")),
        schedule_summary_json(&rs.solution, Some(&validation)),
    )?;
    println!(
        "schedule: day {day} {method} alpha {alpha}: cost {:.2} $, carbon {:.1} kWh, {} violated hours -> {}",
        rs.solution.total_cost(),
        rs.solution.carbon_energy,
        validation.n_violations,
        csv_path.display()
    );
    Ok(())
}

fn cmd_benchmark(g: &GlobalArgs, cfg: &PipelineConfig) -> Result<()> {
    let artifact = load_artifact(g)?;
    let models = load_models(g)?;
    let data = artifact.to_output();
    let dir = g.out.join("benchmark");
    ensure_dir(&dir)?;

    let lambda_sweep: Vec<f64> = if g.lambda_c.is_empty() {
        vec![cfg.params.lambda_c]
    } else {
        g.lambda_c.clone()
    };

    let mut sweep_rows = String::from("lambda_c,method,coverage_level,mean_cost_usd,carbon_kwh\n");
    let mut first_run: Option<BenchmarkRun> = None;
    for &lambda_c in &lambda_sweep {
        let mut run_cfg = cfg.clone();
        run_cfg.params.lambda_c = lambda_c;
        let run = run_benchmark_with(&run_cfg, Execution::default(), &data, models.clone())
            .context("benchmark")?;
        for r in &run.report.rows {
            sweep_rows.push_str(&format!(
                "{},{},{},{},{}\n",
                lambda_c,
                r.method,
                1.0 - r.alpha,
                r.mean_cost,
                r.mean_carbon
            ));
        }
        if first_run.is_none() {
            first_run = Some(run);
        }
    }
    let run = first_run.expect("at least one lambda value");

    std::fs::write(dir.join("report.csv"), run.report.to_csv())?;
    std::fs::write(dir.join("report.json"), run.report.to_json())?;
    for &method in &cfg.methods {
        std::fs::write(
            dir.join(format!("plot_{}.csv", method_slug(method))),
            run.report.plot_csv(method),
        )?;
    }
    if lambda_sweep.len() > 1 {
        std::fs::write(dir.join("teac_sweep.csv"), &sweep_rows)?;
    }

    print!("{}", run.report.to_csv());
    println!(
        "benchmark: {} test days, quantile crossing rate {:.4} -> {}",
        run.report.n_test_days,
        run.report.quantile_crossing_rate,
        dir.display()
    );
    Ok(())
}

fn cmd_evaluate(g: &GlobalArgs, schedule_csv: &Path, pv_csv: &Path, day: usize) -> Result<()> {
    let mut solution = read_schedule_csv(schedule_csv)
        .with_context(|| format!("evaluate: cannot read {}", schedule_csv.display()))?;
    // The CSV holds decisions only; committed costs live in the sibling
    // JSON summary when the schedule came from the `schedule` stage.
    if let Some(summary) = read_sibling_summary(schedule_csv) {
        solution.cost_energy = summary.0;
        solution.cost_teac = summary.1;
        solution.carbon_energy = summary.2;
    }
    let pv = ingest_pv_csv(pv_csv).context("evaluate: pv")?;
    if day >= pv.n_rows() {
        bail!(
            "usage: --day {day} out of range (pv file has {} days)",
            pv.n_rows()
        );
    }
    let report = validate_schedule(&solution, pv.row(day))?;
    let dir = g.out.join("evaluation");
    ensure_dir(&dir)?;
    let out = dir.join("evaluation.json");
    std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
    println!(
        "evaluate: {} violated hours of {}, committed cost {:.2} $ -> {}",
        report.n_violations,
        solution.grid_power.len(),
        report.realized_cost,
        out.display()
    );
    Ok(())
}

fn read_sibling_summary(schedule_csv: &Path) -> Option<(f64, f64, f64)> {
    let json_path = schedule_csv.with_extension("json");
    let text = std::fs::read_to_string(json_path).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    Some((
        v.get("cost_energy")?.as_f64()?,
        v.get("cost_teac")?.as_f64()?,
        v.get("carbon_energy")?.as_f64()?,
    ))
}

/// Parse a schedule CSV (as written by `schedule`) back into the columns
/// validation needs.
fn read_schedule_csv(path: &Path) -> Result<ScheduleSolution> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty schedule file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    let idx = |name: &str| -> Result<usize> {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| anyhow!("missing column {name}"))
    };
    let n_classes = cols.iter().filter(|c| c.starts_with("flex_c")).count();
    let (i_fs, i_ij, i_is) = (
        idx("flex_servers")?,
        idx("inflex_jobs")?,
        idx("inflex_servers")?,
    );
    let (i_grid, i_ess, i_lvl) = (idx("grid_kw")?, idx("ess_kw")?, idx("ess_kwh")?);
    let (i_dc, i_pv) = (idx("dc_power_kw")?, idx("pv_lower_kw")?);

    let mut sol = ScheduleSolution {
        flex_processed: vec![Vec::new(); n_classes],
        flex_servers: Vec::new(),
        inflex_processed: Vec::new(),
        inflex_servers: Vec::new(),
        grid_power: Vec::new(),
        ess_power: Vec::new(),
        ess_level: Vec::new(),
        dc_power_kw: Vec::new(),
        pv_lower: Vec::new(),
        cost_energy: 0.0,
        cost_teac: 0.0,
        carbon_energy: 0.0,
        lp_objective: 0.0,
        lp_iterations: 0,
    };
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> Result<f64> {
            fields
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| anyhow!("line {}: bad field {i}", ln + 2))
        };
        for c in 0..n_classes {
            sol.flex_processed[c].push(get(1 + c)?);
        }
        sol.flex_servers.push(get(i_fs)?);
        sol.inflex_processed.push(get(i_ij)?);
        sol.inflex_servers.push(get(i_is)?);
        sol.grid_power.push(get(i_grid)?);
        sol.ess_power.push(get(i_ess)?);
        sol.ess_level.push(get(i_lvl)?);
        sol.dc_power_kw.push(get(i_dc)?);
        sol.pv_lower.push(get(i_pv)?);
    }
    Ok(sol)
}
