//! Error, misclassification and proximity metrics for one realized scenario,
//! stratified by subgroup and weighted by population density or not.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aqi::{misclass, AqiBreakpoints, MisclassKind};
use crate::domain::{GridCell, SubgroupMasks, TruePm25Field, Weighting};
use crate::error::{Error, Result};
use crate::quantile::weighted_nearest_rank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Overall,
    Q5Nonwhite,
    Q5Poverty,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::Overall, Subset::Q5Nonwhite, Subset::Q5Poverty];

    pub fn label(self) -> &'static str {
        match self {
            Subset::Overall => "overall",
            Subset::Q5Nonwhite => "q5_nonwhite",
            Subset::Q5Poverty => "q5_poverty",
        }
    }

    pub fn contains(self, grid: usize, masks: &SubgroupMasks) -> bool {
        match self {
            Subset::Overall => true,
            Subset::Q5Nonwhite => masks.q5_nonwhite[grid],
            Subset::Q5Poverty => masks.q5_poverty[grid],
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Values shown to each grid on each day, with the serving instrument's
/// measurement error.
///
/// Grids share rows: every grid served by the same instrument points at that
/// instrument's daily readings.
#[derive(Debug, Clone, PartialEq)]
pub struct ShownField {
    n_days: usize,
    source: Vec<u32>,
    readings: Vec<f64>,
    errors: Vec<f64>,
    lcs_row: Vec<bool>,
}

impl ShownField {
    /// `source[g]` selects the row of `readings`/`errors` (row-major, `n_days`
    /// wide) that grid `g` sees; `lcs_row[r]` marks rows produced by low-cost
    /// sensors.
    pub fn new(
        n_days: usize,
        source: Vec<u32>,
        readings: Vec<f64>,
        errors: Vec<f64>,
        lcs_row: Vec<bool>,
    ) -> Result<Self> {
        let rows = lcs_row.len();
        if readings.len() != rows * n_days || errors.len() != rows * n_days {
            return Err(Error::Shape(format!(
                "{rows} rows x {n_days} days but {} readings and {} errors",
                readings.len(),
                errors.len()
            )));
        }
        if let Some(s) = source.iter().find(|&&s| s as usize >= rows) {
            return Err(Error::Shape(format!("source row {s} out of range ({rows} rows)")));
        }
        Ok(ShownField { n_days, source, readings, errors, lcs_row })
    }

    /// One private row per grid.
    pub fn dense(n_days: usize, shown: Vec<f64>, errors: Vec<f64>, lcs_served: Vec<bool>) -> Result<Self> {
        let source = (0..lcs_served.len() as u32).collect();
        Self::new(n_days, source, shown, errors, lcs_served)
    }

    pub fn n_grids(&self) -> usize {
        self.source.len()
    }

    pub fn n_days(&self) -> usize {
        self.n_days
    }

    #[inline]
    pub fn shown(&self, grid: usize, day: usize) -> f64 {
        self.readings[self.source[grid] as usize * self.n_days + day]
    }

    #[inline]
    pub fn error(&self, grid: usize, day: usize) -> f64 {
        self.errors[self.source[grid] as usize * self.n_days + day]
    }

    #[inline]
    pub fn lcs_served(&self, grid: usize) -> bool {
        self.lcs_row[self.source[grid] as usize]
    }
}

/// One (subset, weighting) row. `None` marks an empty denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub subset: Subset,
    pub weighting: Weighting,
    pub mae: Option<f64>,
    pub p95_abs_err: Option<f64>,
    pub under_pct: Option<f64>,
    pub over_pct: Option<f64>,
    pub gap2plus_pct: Option<f64>,
    pub uhm_pct: Option<f64>,
    pub error_sd: Option<f64>,
    pub mean_dist_km: Option<f64>,
    pub mean_dist_gap2plus_km: Option<f64>,
}

/// Names of the numeric columns, in results-table order.
pub const METRIC_NAMES: [&str; 9] = [
    "mae",
    "p95_abs_err",
    "under_pct",
    "over_pct",
    "gap2plus_pct",
    "uhm_pct",
    "error_sd",
    "mean_dist_km",
    "mean_dist_gap2plus_km",
];

impl MetricsRow {
    pub fn empty(subset: Subset, weighting: Weighting) -> Self {
        MetricsRow {
            subset,
            weighting,
            mae: None,
            p95_abs_err: None,
            under_pct: None,
            over_pct: None,
            gap2plus_pct: None,
            uhm_pct: None,
            error_sd: None,
            mean_dist_km: None,
            mean_dist_gap2plus_km: None,
        }
    }

    pub fn values(&self) -> [Option<f64>; 9] {
        [
            self.mae,
            self.p95_abs_err,
            self.under_pct,
            self.over_pct,
            self.gap2plus_pct,
            self.uhm_pct,
            self.error_sd,
            self.mean_dist_km,
            self.mean_dist_gap2plus_km,
        ]
    }

    pub fn from_values(subset: Subset, weighting: Weighting, v: [Option<f64>; 9]) -> Self {
        MetricsRow {
            subset,
            weighting,
            mae: v[0],
            p95_abs_err: v[1],
            under_pct: v[2],
            over_pct: v[3],
            gap2plus_pct: v[4],
            uhm_pct: v[5],
            error_sd: v[6],
            mean_dist_km: v[7],
            mean_dist_gap2plus_km: v[8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Subset-major, then weighting in the requested order.
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn get(&self, subset: Subset, weighting: Weighting) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.subset == subset && r.weighting == weighting)
    }
}

pub struct MetricsInput<'a> {
    pub field: &'a TruePm25Field,
    pub shown: &'a ShownField,
    /// Per-grid distance to the serving instrument, meters.
    pub distance_m: &'a [f64],
    pub cells: &'a [GridCell],
    pub masks: &'a SubgroupMasks,
    pub breakpoints: &'a AqiBreakpoints,
}

/// Weighted sums for one subset under one weighting.
#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    w: f64,
    abs_err: f64,
    under: f64,
    over: f64,
    gap2: f64,
    unhealthy: f64,
    uhm: f64,
    lcs_w: f64,
    lcs_err: f64,
    dist: f64,
    gap2_dist: f64,
}

impl Sums {
    fn add(&mut self, o: &Sums) {
        self.w += o.w;
        self.abs_err += o.abs_err;
        self.under += o.under;
        self.over += o.over;
        self.gap2 += o.gap2;
        self.unhealthy += o.unhealthy;
        self.uhm += o.uhm;
        self.lcs_w += o.lcs_w;
        self.lcs_err += o.lcs_err;
        self.dist += o.dist;
        self.gap2_dist += o.gap2_dist;
    }
}

type Partial = [[Sums; 2]; 3];

/// Grids per reduction chunk. Fixed so sums do not depend on thread count.
const CHUNK: usize = 512;

fn check_shapes(input: &MetricsInput<'_>) -> Result<()> {
    let n = input.cells.len();
    let ok = input.field.n_grids() == n
        && input.shown.n_grids() == n
        && input.shown.n_days() == input.field.n_days()
        && input.distance_m.len() == n
        && input.masks.q5_nonwhite.len() == n
        && input.masks.q5_poverty.len() == n;
    if ok {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "metrics inputs disagree: {n} cells, field {}x{}, shown {}x{}, {} distances",
            input.field.n_grids(),
            input.field.n_days(),
            input.shown.n_grids(),
            input.shown.n_days(),
            input.distance_m.len()
        )))
    }
}

pub fn compute_metrics(input: &MetricsInput<'_>, weightings: &[Weighting]) -> Result<MetricsReport> {
    check_shapes(input)?;
    let n_grids = input.cells.len();
    let n_days = input.field.n_days();
    let bp = input.breakpoints;
    let weight_of = |g: usize| [input.cells[g].pop_density, 1.0];

    // First pass: additive sums, chunked and reduced in chunk order.
    let partials: Vec<Partial> = (0..n_grids.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc: Partial = Default::default();
            for g in c * CHUNK..((c + 1) * CHUNK).min(n_grids) {
                let member = Subset::ALL.map(|s| s.contains(g, input.masks));
                let ws = weight_of(g);
                let lcs = input.shown.lcs_served(g);
                let dist_km = input.distance_m[g] / 1000.0;
                let mut day = Sums::default();
                for d in 0..n_days {
                    let truth = input.field.get(g, d);
                    let shown = input.shown.shown(g, d);
                    let tc = bp.classify(truth);
                    let sc = bp.classify(shown);
                    let m = misclass(tc, sc);
                    let gap2 = m.gap >= 2;
                    day.w += 1.0;
                    day.abs_err += (shown - truth).abs();
                    day.under += f64::from(m.kind == MisclassKind::Under);
                    day.over += f64::from(m.kind == MisclassKind::Over);
                    day.gap2 += f64::from(gap2);
                    if !tc.is_healthy() {
                        day.unhealthy += 1.0;
                        day.uhm += f64::from(sc.is_healthy());
                    }
                    if lcs {
                        day.lcs_w += 1.0;
                        day.lcs_err += input.shown.error(g, d);
                    }
                    day.dist += dist_km;
                    if gap2 {
                        day.gap2_dist += dist_km;
                    }
                }
                // Scale the unit-weight day counts by each weighting.
                for (s, &inside) in member.iter().enumerate() {
                    if !inside {
                        continue;
                    }
                    for (k, &w) in ws.iter().enumerate() {
                        let a = &mut acc[s][k];
                        a.w += w * day.w;
                        a.abs_err += w * day.abs_err;
                        a.under += w * day.under;
                        a.over += w * day.over;
                        a.gap2 += w * day.gap2;
                        a.unhealthy += w * day.unhealthy;
                        a.uhm += w * day.uhm;
                        a.lcs_w += w * day.lcs_w;
                        a.lcs_err += w * day.lcs_err;
                        a.dist += w * day.dist;
                        a.gap2_dist += w * day.gap2_dist;
                    }
                }
            }
            acc
        })
        .collect();
    let mut totals: Partial = Default::default();
    for p in &partials {
        for s in 0..3 {
            for k in 0..2 {
                totals[s][k].add(&p[s][k]);
            }
        }
    }

    // Second pass: spread of LCS errors about the weighted mean.
    let lcs_mean: [[f64; 2]; 3] =
        std::array::from_fn(|s| std::array::from_fn(|k| totals[s][k].lcs_err / totals[s][k].lcs_w));
    let sq_partials: Vec<[[f64; 2]; 3]> = (0..n_grids.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = [[0.0; 2]; 3];
            for g in c * CHUNK..((c + 1) * CHUNK).min(n_grids) {
                if !input.shown.lcs_served(g) {
                    continue;
                }
                let ws = weight_of(g);
                for (s, subset) in Subset::ALL.iter().enumerate() {
                    if !subset.contains(g, input.masks) {
                        continue;
                    }
                    for (k, &w) in ws.iter().enumerate() {
                        let m = lcs_mean[s][k];
                        let ss: f64 = (0..n_days)
                            .map(|d| {
                                let e = input.shown.error(g, d) - m;
                                e * e
                            })
                            .sum();
                        acc[s][k] += w * ss;
                    }
                }
            }
            acc
        })
        .collect();
    let mut sq = [[0.0; 2]; 3];
    for p in &sq_partials {
        for s in 0..3 {
            for k in 0..2 {
                sq[s][k] += p[s][k];
            }
        }
    }

    let mut rows = Vec::with_capacity(3 * weightings.len());
    for (s, &subset) in Subset::ALL.iter().enumerate() {
        // Gather |error| with weights for the exact weighted percentile.
        let mut gathered: Vec<(f64, f64)> = Vec::new();
        let needs_gather = weightings.iter().any(|w| {
            let k = weighting_slot(*w);
            totals[s][k].w > 0.0
        });
        if needs_gather {
            for g in (0..n_grids).filter(|&g| subset.contains(g, input.masks)) {
                let w = input.cells[g].pop_density;
                for d in 0..n_days {
                    gathered.push(((input.shown.shown(g, d) - input.field.get(g, d)).abs(), w));
                }
            }
            gathered.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        for &weighting in weightings {
            let k = weighting_slot(weighting);
            let t = &totals[s][k];
            if t.w <= 0.0 {
                log::debug!("{subset}/{}: zero total weight, metrics null", weighting.label());
                rows.push(MetricsRow::empty(subset, weighting));
                continue;
            }
            let p95 = match weighting {
                Weighting::PopulationDensity => weighted_nearest_rank(&gathered, 0.95),
                Weighting::Unweighted => {
                    let unit: Vec<(f64, f64)> = gathered.iter().map(|&(v, _)| (v, 1.0)).collect();
                    weighted_nearest_rank(&unit, 0.95)
                }
            };
            let pct = |x: f64| 100.0 * x / t.w;
            rows.push(MetricsRow {
                subset,
                weighting,
                mae: Some(t.abs_err / t.w),
                p95_abs_err: p95,
                under_pct: Some(pct(t.under)),
                over_pct: Some(pct(t.over)),
                gap2plus_pct: Some(pct(t.gap2)),
                uhm_pct: (t.unhealthy > 0.0).then(|| 100.0 * t.uhm / t.unhealthy),
                error_sd: (t.lcs_w > 0.0).then(|| (sq[s][k] / t.lcs_w).max(0.0).sqrt()),
                mean_dist_km: Some(t.dist / t.w),
                mean_dist_gap2plus_km: (t.gap2 > 0.0).then(|| t.gap2_dist / t.gap2),
            });
        }
    }
    Ok(MetricsReport { rows })
}

fn weighting_slot(w: Weighting) -> usize {
    match w {
        Weighting::PopulationDensity => 0,
        Weighting::Unweighted => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Point;

    fn cells(pops: &[f64]) -> Vec<GridCell> {
        pops.iter()
            .enumerate()
            .map(|(id, &p)| GridCell {
                id,
                centroid: Point::new(id as f64 * 1000.0, 0.0),
                pop_density: p,
                pct_poverty: 0.1,
                pct_nonwhite: 0.1,
                ces_score: 1.0,
                pollution_score: 1.0,
                road_length_500m: 0.0,
                has_school: false,
                has_purpleair: false,
            })
            .collect()
    }

    fn run(
        truth: Vec<f32>,
        shown: Vec<f64>,
        pops: &[f64],
        n_days: usize,
        lcs: Vec<bool>,
    ) -> MetricsReport {
        let n = pops.len();
        let field = TruePm25Field::new(n, n_days, truth.clone()).unwrap();
        let errors: Vec<f64> = shown.iter().zip(&truth).map(|(s, t)| s - f64::from(*t)).collect();
        let sf = ShownField::dense(n_days, shown, errors, lcs).unwrap();
        let c = cells(pops);
        let masks = SubgroupMasks::none(n);
        let dist = vec![1000.0; n];
        let bp = AqiBreakpoints::default();
        compute_metrics(
            &MetricsInput { field: &field, shown: &sf, distance_m: &dist, cells: &c, masks: &masks, breakpoints: &bp },
            &Weighting::ALL,
        )
        .unwrap()
    }

    #[test]
    fn identity_has_zero_error() {
        let truth = vec![5.0, 40.0, 60.0, 10.0];
        let shown: Vec<f64> = truth.iter().map(|&v| f64::from(v)).collect();
        let r = run(truth, shown, &[2.0, 3.0], 2, vec![false, false]);
        let row = r.get(Subset::Overall, Weighting::PopulationDensity).unwrap();
        assert_eq!(row.mae, Some(0.0));
        assert_eq!(row.p95_abs_err, Some(0.0));
        assert_eq!((row.under_pct, row.over_pct, row.gap2plus_pct), (Some(0.0), Some(0.0), Some(0.0)));
        assert_eq!(row.uhm_pct, Some(0.0));
        assert_eq!(row.error_sd, None);
        assert_eq!(row.mean_dist_gap2plus_km, None);
        assert_eq!(row.mean_dist_km, Some(1.0));
    }

    #[test]
    fn weighted_and_unweighted_mae() {
        let r = run(vec![10.0, 10.0], vec![12.0, 6.0], &[1.0, 3.0], 1, vec![true, true]);
        assert_eq!(r.get(Subset::Overall, Weighting::PopulationDensity).unwrap().mae, Some(3.5));
        assert_eq!(r.get(Subset::Overall, Weighting::Unweighted).unwrap().mae, Some(3.0));
    }

    #[test]
    fn orange_shown_yellow() {
        let r = run(vec![50.0, 50.0], vec![30.0, 50.0], &[1.0], 2, vec![true]);
        let row = r.get(Subset::Overall, Weighting::Unweighted).unwrap();
        assert_eq!(row.uhm_pct, Some(50.0));
        assert_eq!(row.under_pct, Some(50.0));
        assert_eq!(row.over_pct, Some(0.0));
        assert_eq!(row.gap2plus_pct, Some(0.0));
        // Errors {-20, 0}: mean -10, SD 10.
        assert_eq!(row.error_sd, Some(10.0));
    }

    #[test]
    fn zero_weight_subset_is_null() {
        let r = run(vec![5.0], vec![6.0], &[0.0], 1, vec![false]);
        let row = r.get(Subset::Overall, Weighting::PopulationDensity).unwrap();
        assert_eq!(*row, MetricsRow::empty(Subset::Overall, Weighting::PopulationDensity));
        let q5 = r.get(Subset::Q5Poverty, Weighting::Unweighted).unwrap();
        assert!(q5.mae.is_none());
        assert!(r.get(Subset::Overall, Weighting::Unweighted).unwrap().mae.is_some());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let field = TruePm25Field::new(2, 1, vec![1.0, 2.0]).unwrap();
        let sf = ShownField::dense(1, vec![1.0], vec![0.0], vec![false]).unwrap();
        let c = cells(&[1.0, 1.0]);
        let masks = SubgroupMasks::none(2);
        let bp = AqiBreakpoints::default();
        let input = MetricsInput { field: &field, shown: &sf, distance_m: &[0.0, 0.0], cells: &c, masks: &masks, breakpoints: &bp };
        assert!(compute_metrics(&input, &Weighting::ALL).is_err());
    }
}
