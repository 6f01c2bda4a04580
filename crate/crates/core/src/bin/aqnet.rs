use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use aqnet::calibration::{calibrate, CorrectionCoefficients, QaThresholds};
use aqnet::domain::{
    descriptive_stats, generate_synthetic_field, standard_location_sets, synthetic_collocated, synthetic_monitors,
    SynthFieldConfig, Weighting,
};
use aqnet::experiment::{
    run_experiment, run_sweep, with_workers, write_results_csv, write_sweep_csv, write_sweep_errors_csv,
    write_trials_csv, ErrorModelSpec, ExperimentConfig, ExperimentInputs, LcsCount, Scenario, ScenarioLabel,
    SweepSpec,
};
use aqnet::ingest;
use aqnet::placement::PlacementStrategy;

#[derive(Parser)]
#[command(name = "aqnet", version, about = "Monte Carlo simulator for low-cost air-quality sensor networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic grid, daily field, monitors, roads and collocated data.
    Synth(SynthArgs),
    /// Build a residual table from collocated monitor/sensor days.
    Calibrate(CalibrateArgs),
    /// Run one scenario for all its trials.
    Simulate(SimulateArgs),
    /// Run the cross product of a sweep spec.
    Sweep(SweepArgs),
    /// Descriptive statistics of grid attributes by location set.
    Stats(StatsArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// JSON synth config; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 20)]
    monitors: usize,
    /// Collocated pairs to emit (0 skips the file).
    #[arg(long, default_value_t = 10)]
    collocated_pairs: usize,
    #[arg(long, default_value_t = 120)]
    collocated_days: usize,
    /// Write the field as long CSV instead of binary.
    #[arg(long)]
    csv_field: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    collocated: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Fit report `{n_accepted, rmse, r2}`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// JSON with any of `slope_pm`, `slope_rh`, `intercept`.
    #[arg(long)]
    coefficients: Option<PathBuf>,
    /// JSON QA thresholds override.
    #[arg(long)]
    thresholds: Option<PathBuf>,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    per_trial_out: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<PlacementStrategy>,
    #[arg(long)]
    n_lcs: Option<LcsCount>,
    /// e.g. `none`, `nondiff:0.1`, `diff:0.25`, `empirical`.
    #[arg(long)]
    error_model: Option<ErrorModelSpec>,
    #[command(flatten)]
    common: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Failed scenarios, one per line; written only when some fail.
    #[arg(long)]
    errors_out: Option<PathBuf>,
    #[arg(long)]
    per_trial_out: Option<PathBuf>,
    #[command(flatten)]
    common: Overrides,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    field: PathBuf,
    #[arg(long)]
    roads: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Report z-scores and SD ratios against the overall population.
    #[arg(long)]
    normalize: bool,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Synth(a) => synth(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Stats(a) => stats(a),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let mut cfg: SynthFieldConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthFieldConfig::default(),
    };
    if let Some(v) = a.nx {
        cfg.n_grids_x = v;
    }
    if let Some(v) = a.ny {
        cfg.n_grids_y = v;
    }
    if let Some(v) = a.days {
        cfg.n_days = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    std::fs::create_dir_all(&a.out_dir)?;
    let out = generate_synthetic_field(&cfg)?;
    let dir = &a.out_dir;
    ingest::save_grid(dir.join("grid.csv"), &out.cells)?;
    if a.csv_field {
        ingest::save_field_csv(dir.join("field.csv"), &out.field)?;
    } else {
        ingest::save_field_binary(dir.join("field.aqf"), &out.field)?;
    }
    ingest::save_roads(dir.join("roads.csv"), &out.roads)?;
    let monitors = synthetic_monitors(&out.cells, a.monitors.min(out.cells.len()), cfg.seed)?;
    ingest::save_instruments(dir.join("monitors.csv"), &monitors)?;
    if a.collocated_pairs > 0 {
        let obs = synthetic_collocated(a.collocated_pairs, a.collocated_days, cfg.seed);
        ingest::save_collocated(dir.join("collocated.csv"), &obs)?;
    }
    info!(
        "wrote {} grids x {} days, {} monitors to {}",
        out.cells.len(),
        out.field.n_days(),
        monitors.len(),
        dir.display()
    );
    Ok(())
}

fn calibrate_cmd(a: CalibrateArgs) -> anyhow::Result<()> {
    let coeffs: CorrectionCoefficients = match &a.coefficients {
        Some(p) => read_json(p)?,
        None => CorrectionCoefficients::default(),
    };
    let th: QaThresholds = match &a.thresholds {
        Some(p) => read_json(p)?,
        None => QaThresholds::default(),
    };
    let obs = ingest::load_collocated(&a.collocated)?;
    let (table, report) = calibrate(&obs, &th, &coeffs)?;
    table.save(&a.out)?;
    for (why, n) in &report.rejected {
        info!("rejected {n} days: {why:?}");
    }
    info!(
        "accepted {} of {} days, rmse {:.3}",
        report.fit.n_accepted, report.n_total, report.fit.rmse
    );
    if let Some(p) = &a.report {
        serde_json::to_writer_pretty(create(p)?, &report.fit)?;
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::from_json_file(&a.config)?;
    if let Some(v) = a.strategy {
        cfg.strategy = v;
    }
    if let Some(v) = a.n_lcs {
        cfg.n_lcs = v;
    }
    if let Some(v) = a.error_model {
        cfg.error_model = v;
    }
    if let Some(v) = a.common.trials {
        cfg.trials = v;
    }
    if let Some(v) = a.common.base_seed {
        cfg.base_seed = v;
    }
    cfg.validate()?;
    let inputs = ExperimentInputs::load(&cfg.inputs, &config_dir(&a.config))?;
    let model = cfg.error_model.resolve(inputs.residual_table.as_ref())?;
    let scenario = Scenario::new(cfg.strategy, cfg.n_lcs, model);
    let label = ScenarioLabel::of(&scenario);
    info!("{} / {} / {}: {} trials", label.strategy, label.n_lcs, label.error_model, cfg.trials);
    let result = with_workers(a.common.workers, || {
        run_experiment(&inputs, &scenario, &cfg.weightings, cfg.trials, cfg.base_seed)
    })??;
    write_results_csv(create(&a.out)?, &[(label.clone(), result.averaged.as_slice())])?;
    if let Some(p) = &a.per_trial_out {
        write_trials_csv(create(p)?, &[(label, result.per_trial.as_slice())])?;
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> anyhow::Result<()> {
    let mut spec = SweepSpec::from_json_file(&a.spec)?;
    if let Some(v) = a.common.trials {
        spec.trials = v;
    }
    if let Some(v) = a.common.base_seed {
        spec.base_seed = v;
    }
    spec.validate()?;
    let inputs = ExperimentInputs::load(&spec.inputs, &config_dir(&a.spec))?;
    info!("{} scenarios x {} trials", spec.scenarios().len(), spec.trials);
    let results = with_workers(a.common.workers, || run_sweep(&inputs, &spec))??;
    write_sweep_csv(create(&a.out)?, &results)?;
    if let Some(p) = &a.per_trial_out {
        let rows: Vec<_> = results
            .outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().ok().map(|r| (o.label.clone(), r.per_trial.as_slice())))
            .collect();
        write_trials_csv(create(p)?, &rows)?;
    }
    let failed = results.failures().count();
    if failed > 0 {
        let p = a.errors_out.clone().unwrap_or_else(|| a.out.with_extension("errors.csv"));
        write_sweep_errors_csv(create(&p)?, &results)?;
        log::warn!("{failed} scenarios failed; see {}", p.display());
        if failed == results.outcomes.len() {
            bail!("every scenario failed");
        }
    }
    Ok(())
}

fn stats(a: StatsArgs) -> anyhow::Result<()> {
    let mut cells = ingest::load_grid(&a.grid)?;
    if let Some(r) = &a.roads {
        ingest::fill_road_lengths(&mut cells, &ingest::load_roads(r)?, 500.0);
    }
    let field = ingest::load_field(&a.field)?;
    let masks = aqnet::domain::compute_quintile_masks(&cells, Weighting::Unweighted)?;
    let sets = standard_location_sets(&cells, &masks);
    let table = descriptive_stats(&cells, &field, &sets, &Weighting::ALL, a.normalize)?;
    for d in &table.diagnostics {
        log::warn!("{d}");
    }
    table.write_csv(create(&a.out)?)?;
    Ok(())
}
