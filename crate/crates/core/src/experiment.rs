//! Trial, experiment and sweep orchestration.
//!
//! One trial: place sensors, add the reference monitors, assign every grid to
//! its nearest instrument, realize each instrument's daily readings, and score
//! what each grid was shown against its true value. Experiments average trials;
//! sweeps run the cross product of strategies, sensor counts and error models.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aqi::AqiBreakpoints;
use crate::assignment::{assign_all, snap_to_grid, AssignmentMap, Instrument, InstrumentKind};
use crate::domain::{compute_quintile_masks, DistanceMetric, GridCell, Site, SubgroupMasks, TruePm25Field, Weighting};
use crate::error::{Error, Result};
use crate::error_models::{simulate_measurement, ErrorModel, ResidualTable, DEFAULT_REFERENCE_MEAN};
use crate::ingest;
use crate::metrics::{compute_metrics, MetricsInput, MetricsReport, MetricsRow, ShownField, Subset, METRIC_NAMES};
use crate::placement::{select_sites, PlacementStrategy};
use crate::rng::{stream, tag};

pub const DEFAULT_TRIALS: usize = 50;

/// Header of the averaged results table.
pub const RESULTS_HEADER: &str = "strategy,n_lcs,error_model,subset,weighting,trials,mae,p95_abs_err,under_pct,over_pct,gap2plus_pct,uhm_pct,error_sd,mean_dist_km,mean_dist_gap2plus_km";
/// Header of the per-trial table.
pub const TRIALS_HEADER: &str = "strategy,n_lcs,error_model,subset,weighting,trial,mae,p95_abs_err,under_pct,over_pct,gap2plus_pct,uhm_pct,error_sd,mean_dist_km,mean_dist_gap2plus_km";

/// Number of sensors to deploy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "LcsCountRaw", into = "LcsCountRaw")]
pub enum LcsCount {
    Count(usize),
    /// Every eligible grid of the strategy's pool.
    AllPool,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LcsCountRaw {
    N(usize),
    S(String),
}

impl TryFrom<LcsCountRaw> for LcsCount {
    type Error = Error;
    fn try_from(r: LcsCountRaw) -> Result<Self> {
        match r {
            LcsCountRaw::N(n) => Ok(LcsCount::Count(n)),
            LcsCountRaw::S(s) => s.parse(),
        }
    }
}

impl From<LcsCount> for LcsCountRaw {
    fn from(c: LcsCount) -> Self {
        match c {
            LcsCount::Count(n) => LcsCountRaw::N(n),
            LcsCount::AllPool => LcsCountRaw::S("all".into()),
        }
    }
}

impl std::str::FromStr for LcsCount {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" | "ALL_POOL" | "all_pool" => Ok(LcsCount::AllPool),
            n => n
                .parse()
                .map(LcsCount::Count)
                .map_err(|_| Error::Config(format!("n_lcs must be a count or \"all\", got {s:?}"))),
        }
    }
}

impl fmt::Display for LcsCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LcsCount::Count(n) => write!(f, "{n}"),
            LcsCount::AllPool => f.write_str("all"),
        }
    }
}

/// Serializable description of an error model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ErrorModelSpec {
    None {
        #[serde(default)]
        clamp_nonnegative: bool,
    },
    NonDifferential {
        accuracy: f64,
        #[serde(default = "default_reference_mean")]
        reference_mean: f64,
        #[serde(default)]
        clamp_nonnegative: bool,
    },
    Differential {
        accuracy: f64,
        #[serde(default)]
        clamp_nonnegative: bool,
    },
    /// Draws from the residual table named by `residual_table_path`.
    Empirical {
        #[serde(default)]
        clamp_nonnegative: bool,
    },
}

fn default_reference_mean() -> f64 {
    DEFAULT_REFERENCE_MEAN
}

impl ErrorModelSpec {
    pub fn resolve(&self, table: Option<&Arc<ResidualTable>>) -> Result<ErrorModel> {
        Ok(match *self {
            ErrorModelSpec::None { clamp_nonnegative } => ErrorModel::none().with_clamp(clamp_nonnegative),
            ErrorModelSpec::NonDifferential { accuracy, reference_mean, clamp_nonnegative } => {
                ErrorModel::non_differential_with_reference(accuracy, reference_mean)?.with_clamp(clamp_nonnegative)
            }
            ErrorModelSpec::Differential { accuracy, clamp_nonnegative } => {
                ErrorModel::differential(accuracy)?.with_clamp(clamp_nonnegative)
            }
            ErrorModelSpec::Empirical { clamp_nonnegative } => {
                let t = table.ok_or_else(|| {
                    Error::Config("the empirical error model needs `residual_table_path`".into())
                })?;
                ErrorModel::empirical(Arc::clone(t)).with_clamp(clamp_nonnegative)
            }
        })
    }
}

/// Shorthand used on the command line: `none`, `nondiff:0.1`, `diff:0.25`,
/// `empirical`, each optionally suffixed with `+clamp`.
impl std::str::FromStr for ErrorModelSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (body, clamp) = match s.trim().strip_suffix("+clamp") {
            Some(b) => (b, true),
            None => (s.trim(), false),
        };
        let bad = || Error::Config(format!("unrecognized error model {s:?} (try none, nondiff:0.1, diff:0.25, empirical)"));
        let accuracy = |a: &str| a.parse::<f64>().map_err(|_| bad());
        Ok(match body.split_once(':') {
            None if body == "none" => ErrorModelSpec::None { clamp_nonnegative: clamp },
            None if body == "empirical" => ErrorModelSpec::Empirical { clamp_nonnegative: clamp },
            Some(("nondiff", a)) => ErrorModelSpec::NonDifferential {
                accuracy: accuracy(a)?,
                reference_mean: DEFAULT_REFERENCE_MEAN,
                clamp_nonnegative: clamp,
            },
            Some(("diff", a)) => ErrorModelSpec::Differential { accuracy: accuracy(a)?, clamp_nonnegative: clamp },
            _ => return Err(bad()),
        })
    }
}

/// One point of the design: where, how many, and how noisy.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub strategy: PlacementStrategy,
    pub n_lcs: LcsCount,
    pub error_model: ErrorModel,
}

impl Scenario {
    pub fn new(strategy: PlacementStrategy, n_lcs: LcsCount, error_model: ErrorModel) -> Self {
        Scenario { strategy, n_lcs, error_model }
    }
}

/// Loaded, validated, immutable inputs shared by every trial.
#[derive(Debug, Clone)]
pub struct ExperimentInputs {
    pub cells: Vec<GridCell>,
    pub field: TruePm25Field,
    pub monitors: Vec<Site>,
    /// Grid each monitor measures (its location snapped to the nearest centroid).
    pub monitor_hosts: Vec<usize>,
    pub masks: SubgroupMasks,
    pub breakpoints: AqiBreakpoints,
    pub metric: DistanceMetric,
    pub residual_table: Option<Arc<ResidualTable>>,
}

impl ExperimentInputs {
    pub fn new(
        cells: Vec<GridCell>,
        field: TruePm25Field,
        monitors: Vec<Site>,
        breakpoints: AqiBreakpoints,
        quintile_weighting: Weighting,
        metric: DistanceMetric,
    ) -> Result<Self> {
        crate::domain::validate_grid(&cells)?;
        if field.n_grids() != cells.len() {
            return Err(Error::Shape(format!(
                "field covers {} grids but the grid file has {}",
                field.n_grids(),
                cells.len()
            )));
        }
        let masks = if cells.len() >= 5 {
            compute_quintile_masks(&cells, quintile_weighting)?
        } else {
            log::warn!("fewer than 5 grids; subgroup rows will be empty");
            SubgroupMasks::none(cells.len())
        };
        let monitor_hosts = if monitors.is_empty() {
            Vec::new()
        } else {
            let pts: Vec<_> = monitors.iter().map(|m| m.location).collect();
            snap_to_grid(&cells, &pts, metric)?
        };
        Ok(ExperimentInputs {
            cells,
            field,
            monitors,
            monitor_hosts,
            masks,
            breakpoints,
            metric,
            residual_table: None,
        })
    }

    pub fn with_masks(mut self, masks: SubgroupMasks) -> Self {
        self.masks = masks;
        self
    }

    pub fn with_residual_table(mut self, table: ResidualTable) -> Self {
        self.residual_table = Some(Arc::new(table));
        self
    }

    pub fn load(spec: &InputSpec, base_dir: &Path) -> Result<Self> {
        let at = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
        let mut cells = ingest::load_grid(at(&spec.grid_path))?;
        if let Some(roads) = &spec.roads_path {
            let segs = ingest::load_roads(at(roads))?;
            ingest::fill_road_lengths(&mut cells, &segs, 500.0);
        }
        let field = ingest::load_field(at(&spec.field_path))?;
        let monitors = match &spec.monitors_path {
            Some(p) => ingest::load_instruments(at(p))?,
            None => Vec::new(),
        };
        let mut inputs = ExperimentInputs::new(
            cells,
            field,
            monitors,
            spec.aqi_breakpoints.unwrap_or_default(),
            spec.quintile_weighting,
            spec.distance_metric,
        )?;
        if let Some(p) = &spec.residual_table_path {
            inputs = inputs.with_residual_table(ResidualTable::load(at(p))?);
        }
        Ok(inputs)
    }

    fn n_days(&self) -> usize {
        self.field.n_days()
    }

    fn sensor_count(&self, scenario: &Scenario) -> usize {
        match scenario.n_lcs {
            LcsCount::Count(n) => n,
            LcsCount::AllPool => scenario.strategy.eligible_count(&self.cells),
        }
    }
}

/// Input file locations and shared settings, as they appear in JSON configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub grid_path: PathBuf,
    pub field_path: PathBuf,
    #[serde(default)]
    pub monitors_path: Option<PathBuf>,
    #[serde(default)]
    pub residual_table_path: Option<PathBuf>,
    /// Optional `x1,y1,x2,y2` road file; replaces the grid's road column.
    #[serde(default)]
    pub roads_path: Option<PathBuf>,
    #[serde(default)]
    pub aqi_breakpoints: Option<AqiBreakpoints>,
    #[serde(default = "default_quintile_weighting")]
    pub quintile_weighting: Weighting,
    #[serde(default)]
    pub distance_metric: DistanceMetric,
}

fn default_quintile_weighting() -> Weighting {
    Weighting::Unweighted
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

fn default_weightings() -> Vec<Weighting> {
    Weighting::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub strategy: PlacementStrategy,
    pub n_lcs: LcsCount,
    pub error_model: ErrorModelSpec,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_weightings")]
    pub weightings: Vec<Weighting>,
    #[serde(flatten)]
    pub inputs: InputSpec,
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.weightings.is_empty() {
            return Err(Error::Config("at least one weighting must be emitted".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub strategies: Vec<PlacementStrategy>,
    pub n_lcs: Vec<LcsCount>,
    pub error_models: Vec<ErrorModelSpec>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_weightings")]
    pub weightings: Vec<Weighting>,
    #[serde(flatten)]
    pub inputs: InputSpec,
}

impl SweepSpec {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: Self = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() || self.n_lcs.is_empty() || self.error_models.is_empty() {
            return Err(Error::Config("sweep lists must be nonempty".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.weightings.is_empty() {
            return Err(Error::Config("at least one weighting must be emitted".into()));
        }
        Ok(())
    }

    /// Scenario descriptors in output order: strategy, then count, then error model.
    pub fn scenarios(&self) -> Vec<(PlacementStrategy, LcsCount, ErrorModelSpec)> {
        let mut out = Vec::with_capacity(self.strategies.len() * self.n_lcs.len() * self.error_models.len());
        for &s in &self.strategies {
            for &n in &self.n_lcs {
                for e in &self.error_models {
                    out.push((s, n, e.clone()));
                }
            }
        }
        out
    }
}

fn strategy_code(s: PlacementStrategy) -> u64 {
    PlacementStrategy::ALL.iter().position(|p| *p == s).unwrap_or(0) as u64
}

/// Grids hosting a sensor in this trial, ascending.
///
/// Pool strategies draw uniformly by giving every pool member weight one, so
/// for a fixed trial stream the sites chosen for `n` are a subset of those
/// chosen for any larger `n`.
pub fn place_sensors(inputs: &ExperimentInputs, scenario: &Scenario, base_seed: u64, trial: u64) -> Result<Vec<usize>> {
    let n = inputs.sensor_count(scenario);
    if n == 0 {
        return Ok(Vec::new());
    }
    let strategy = scenario.strategy;
    let mut rng = stream(&[base_seed, trial, tag::PLACEMENT, strategy_code(strategy)]);
    select_sites(strategy, n, &inputs.cells, &mut rng).map(|p| p.selected)
}

/// Monitors first (ids `0..m`), then one sensor per selected grid centroid.
pub fn build_instruments(inputs: &ExperimentInputs, sensor_grids: &[usize]) -> Vec<Instrument> {
    let mut out: Vec<Instrument> = inputs
        .monitors
        .iter()
        .zip(&inputs.monitor_hosts)
        .enumerate()
        .map(|(i, (m, &host))| Instrument {
            id: i as u64,
            kind: InstrumentKind::ReferenceMonitor,
            location: m.location,
            host_grid: host,
        })
        .collect();
    let m = out.len() as u64;
    out.extend(sensor_grids.iter().enumerate().map(|(k, &g)| Instrument {
        id: m + k as u64,
        kind: InstrumentKind::LowCostSensor,
        location: inputs.cells[g].centroid,
        host_grid: g,
    }));
    out
}

/// Daily readings per instrument. Monitors report their host grid's true
/// value; each sensor adds error drawn from a stream keyed by
/// (seed, trial, host grid), one draw per day in order.
pub fn realize_readings(
    inputs: &ExperimentInputs,
    instruments: &[Instrument],
    assignment: &AssignmentMap,
    model: &ErrorModel,
    base_seed: u64,
    trial: u64,
) -> Result<ShownField> {
    let n_days = inputs.n_days();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = instruments
        .par_iter()
        .map(|inst| {
            let truth: Vec<f64> = (0..n_days).map(|d| inputs.field.get(inst.host_grid, d)).collect();
            match inst.kind {
                InstrumentKind::ReferenceMonitor => (truth, vec![0.0; n_days]),
                InstrumentKind::LowCostSensor => {
                    let mut rng = stream(&[base_seed, trial, tag::MEASUREMENT, inst.host_grid as u64]);
                    let reading: Vec<f64> = truth.iter().map(|&t| simulate_measurement(t, model, &mut rng)).collect();
                    let err = reading.iter().zip(&truth).map(|(r, t)| r - t).collect();
                    (reading, err)
                }
            }
        })
        .collect();
    let mut readings = Vec::with_capacity(instruments.len() * n_days);
    let mut errors = Vec::with_capacity(instruments.len() * n_days);
    for (r, e) in rows {
        readings.extend(r);
        errors.extend(e);
    }
    let lcs_row = instruments.iter().map(|i| i.kind == InstrumentKind::LowCostSensor).collect();
    ShownField::new(n_days, assignment.instrument.clone(), readings, errors, lcs_row)
}

/// Everything one trial produced, for inspection.
#[derive(Debug, Clone)]
pub struct TrialArtifacts {
    pub sensor_grids: Vec<usize>,
    pub instruments: Vec<Instrument>,
    pub assignment: AssignmentMap,
    pub shown: ShownField,
    pub report: MetricsReport,
}

pub fn run_trial_detailed(
    inputs: &ExperimentInputs,
    scenario: &Scenario,
    weightings: &[Weighting],
    base_seed: u64,
    trial: u64,
) -> Result<TrialArtifacts> {
    let sensor_grids = place_sensors(inputs, scenario, base_seed, trial)?;
    let instruments = build_instruments(inputs, &sensor_grids);
    let assignment = assign_all(&inputs.cells, &instruments, inputs.metric)?;
    let shown = realize_readings(inputs, &instruments, &assignment, &scenario.error_model, base_seed, trial)?;
    let report = compute_metrics(
        &MetricsInput {
            field: &inputs.field,
            shown: &shown,
            distance_m: &assignment.distance_m,
            cells: &inputs.cells,
            masks: &inputs.masks,
            breakpoints: &inputs.breakpoints,
        },
        weightings,
    )?;
    Ok(TrialArtifacts { sensor_grids, instruments, assignment, shown, report })
}

pub fn run_trial(
    inputs: &ExperimentInputs,
    scenario: &Scenario,
    weightings: &[Weighting],
    base_seed: u64,
    trial: u64,
) -> Result<MetricsReport> {
    run_trial_detailed(inputs, scenario, weightings, base_seed, trial).map(|a| a.report)
}

/// Trial-averaged row: mean of each metric over the trials where it was
/// defined, with the number of contributing trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AveragedRow {
    pub subset: Subset,
    pub weighting: Weighting,
    pub trials: usize,
    pub values: [Option<f64>; 9],
    pub contributing: [usize; 9],
}

impl AveragedRow {
    pub fn as_metrics(&self) -> MetricsRow {
        MetricsRow::from_values(self.subset, self.weighting, self.values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub averaged: Vec<AveragedRow>,
    pub per_trial: Vec<MetricsReport>,
}

/// Mean per metric across reports, skipping nulls.
pub fn average_reports(reports: &[MetricsReport]) -> Vec<AveragedRow> {
    let Some(first) = reports.first() else {
        return Vec::new();
    };
    first
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut sums = [0.0; 9];
            let mut counts = [0usize; 9];
            for r in reports {
                for (k, v) in r.rows[i].values().iter().enumerate() {
                    if let Some(v) = v {
                        sums[k] += v;
                        counts[k] += 1;
                    }
                }
            }
            AveragedRow {
                subset: row.subset,
                weighting: row.weighting,
                trials: reports.len(),
                values: std::array::from_fn(|k| (counts[k] > 0).then(|| sums[k] / counts[k] as f64)),
                contributing: counts,
            }
        })
        .collect()
}

pub fn run_experiment(
    inputs: &ExperimentInputs,
    scenario: &Scenario,
    weightings: &[Weighting],
    trials: usize,
    base_seed: u64,
) -> Result<ExperimentResult> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let per_trial: Vec<MetricsReport> = (0..trials as u64)
        .into_par_iter()
        .map(|t| run_trial(inputs, scenario, weightings, base_seed, t))
        .collect::<Result<_>>()?;
    Ok(ExperimentResult { averaged: average_reports(&per_trial), per_trial })
}

/// Runs `f` on a dedicated pool of `workers` threads, or the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot build a {n}-thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Labels identifying a scenario in result tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioLabel {
    pub strategy: String,
    pub n_lcs: String,
    pub error_model: String,
}

impl ScenarioLabel {
    pub fn of(scenario: &Scenario) -> Self {
        ScenarioLabel {
            strategy: scenario.strategy.label().to_string(),
            n_lcs: scenario.n_lcs.to_string(),
            error_model: scenario.error_model.label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioOutcome {
    pub label: ScenarioLabel,
    pub result: std::result::Result<ExperimentResult, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResults {
    pub outcomes: Vec<ScenarioOutcome>,
}

impl SweepResults {
    pub fn failures(&self) -> impl Iterator<Item = (&ScenarioLabel, &str)> {
        self.outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().err().map(|e| (&o.label, e.as_str())))
    }
}

/// Runs every scenario of the sweep. A failing scenario is recorded and the
/// sweep continues. Trials of all scenarios are scheduled together; output
/// order follows the sweep lists.
pub fn run_sweep(inputs: &ExperimentInputs, spec: &SweepSpec) -> Result<SweepResults> {
    spec.validate()?;
    let scenarios: Vec<std::result::Result<Scenario, (ScenarioLabel, String)>> = spec
        .scenarios()
        .into_iter()
        .map(|(strategy, n, e)| match e.resolve(inputs.residual_table.as_ref()) {
            Ok(model) => Ok(Scenario::new(strategy, n, model)),
            Err(err) => Err((
                ScenarioLabel { strategy: strategy.label().into(), n_lcs: n.to_string(), error_model: format!("{e:?}") },
                err.to_string(),
            )),
        })
        .collect();

    let jobs: Vec<(usize, u64)> = scenarios
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_ok())
        .flat_map(|(i, _)| (0..spec.trials as u64).map(move |t| (i, t)))
        .collect();
    let results: Vec<Result<MetricsReport>> = jobs
        .par_iter()
        .map(|&(i, t)| {
            let sc = scenarios[i].as_ref().expect("filtered");
            run_trial(inputs, sc, &spec.weightings, spec.base_seed, t)
        })
        .collect();

    let mut by_scenario: Vec<Vec<Result<MetricsReport>>> = (0..scenarios.len()).map(|_| Vec::new()).collect();
    for (&(i, _), r) in jobs.iter().zip(results) {
        by_scenario[i].push(r);
    }
    let outcomes = scenarios
        .into_iter()
        .zip(by_scenario)
        .map(|(sc, trials)| match sc {
            Err((label, e)) => ScenarioOutcome { label, result: Err(e) },
            Ok(sc) => {
                let label = ScenarioLabel::of(&sc);
                let result = trials
                    .into_iter()
                    .collect::<Result<Vec<_>>>()
                    .map(|per_trial| ExperimentResult { averaged: average_reports(&per_trial), per_trial })
                    .map_err(|e| e.to_string());
                if let Err(e) = &result {
                    log::warn!("scenario {}/{}/{} failed: {e}", label.strategy, label.n_lcs, label.error_model);
                }
                ScenarioOutcome { label, result }
            }
        })
        .collect();
    Ok(SweepResults { outcomes })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_row<W: Write>(w: &mut W, label: &ScenarioLabel, row_head: [&str; 2], count: usize, values: &[Option<f64>; 9]) -> Result<()> {
    let mut line = format!(
        "{},{},{},{},{},{}",
        label.strategy, label.n_lcs, label.error_model, row_head[0], row_head[1], count
    );
    for v in values {
        line.push(',');
        line.push_str(&fmt_opt(*v));
    }
    line.push('\n');
    w.write_all(line.as_bytes())?;
    Ok(())
}

/// Averaged rows for each scenario, in order, under [`RESULTS_HEADER`].
pub fn write_results_csv<W: Write>(mut w: W, rows: &[(ScenarioLabel, &[AveragedRow])]) -> Result<()> {
    writeln!(w, "{RESULTS_HEADER}")?;
    for (label, avg) in rows {
        for r in avg.iter() {
            write_row(&mut w, label, [r.subset.label(), r.weighting.label()], r.trials, &r.values)?;
        }
    }
    Ok(())
}

/// Per-trial rows under [`TRIALS_HEADER`].
pub fn write_trials_csv<W: Write>(mut w: W, rows: &[(ScenarioLabel, &[MetricsReport])]) -> Result<()> {
    writeln!(w, "{TRIALS_HEADER}")?;
    for (label, reports) in rows {
        for (t, rep) in reports.iter().enumerate() {
            for r in &rep.rows {
                write_row(&mut w, label, [r.subset.label(), r.weighting.label()], t, &r.values())?;
            }
        }
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(w: W, sweep: &SweepResults) -> Result<()> {
    let rows: Vec<(ScenarioLabel, &[AveragedRow])> = sweep
        .outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok().map(|r| (o.label.clone(), r.averaged.as_slice())))
        .collect();
    write_results_csv(w, &rows)
}

/// Failed scenarios as `strategy,n_lcs,error_model,error`.
pub fn write_sweep_errors_csv<W: Write>(w: W, sweep: &SweepResults) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["strategy", "n_lcs", "error_model", "error"])?;
    for (label, e) in sweep.failures() {
        out.write_record([label.strategy.as_str(), &label.n_lcs, &label.error_model, e])?;
    }
    out.flush()?;
    Ok(())
}

/// Column names of the numeric metrics, for consumers of the CSV.
pub fn metric_columns() -> &'static [&'static str] {
    &METRIC_NAMES
}
