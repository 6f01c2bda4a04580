//! Synthetic stand-in for a gridded daily PM2.5 product plus census attributes.
//!
//! value(g, d) = clamp(base(d) + sum_k A_k exp(-|c_g - h_k|^2 / (2 l_k^2)) + noise(g, d), 0, cap)
//!
//! where base(d) is a seasonal cosine plus an AR(1) perturbation. Every grid
//! draws from its own counter-derived stream, so the output does not depend on
//! the order in which cells are evaluated.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{GridCell, Point, Site, TruePm25Field};
use crate::calibration::CorrectionCoefficients;
use crate::error::{Error, Result};
use crate::ingest::CollocatedDailyObs;
use crate::ingest::{road_length_in_buffer, RoadSegment};
use crate::placement::weighted_sample_without_replacement;
use crate::rng::{stream, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthFieldConfig {
    pub n_grids_x: usize,
    pub n_grids_y: usize,
    pub cell_size_m: f64,
    pub n_days: usize,
    pub n_hotspots: usize,
    /// Nominal peak of one hotspot (µg/m³); each hotspot scales it by U(0.5, 1.5).
    pub hotspot_amplitude: f64,
    /// Nominal Gaussian length scale (m); each hotspot scales it by U(0.5, 1.5).
    pub hotspot_length_scale_m: f64,
    pub baseline_mean: f64,
    pub seasonal_amplitude: f64,
    pub ar_coefficient: f64,
    /// SD of the per-grid daily noise and of the AR(1) innovations.
    pub daily_noise_sd: f64,
    pub cap: f64,
    /// Expected share of grids flagged with a PurpleAir sensor.
    pub purpleair_fraction: f64,
    /// Expected share of grids flagged with a school.
    pub school_fraction: f64,
    /// Number of straight major roads crossing the domain.
    pub n_roads: usize,
    pub seed: u64,
}

impl Default for SynthFieldConfig {
    fn default() -> Self {
        SynthFieldConfig {
            n_grids_x: 100,
            n_grids_y: 100,
            cell_size_m: 1000.0,
            n_days: 60,
            n_hotspots: 12,
            hotspot_amplitude: 25.0,
            hotspot_length_scale_m: 4000.0,
            baseline_mean: 7.0,
            seasonal_amplitude: 3.0,
            ar_coefficient: 0.7,
            daily_noise_sd: 2.0,
            cap: super::DEFAULT_CAP,
            purpleair_fraction: 0.05,
            school_fraction: 0.08,
            n_roads: 8,
            seed: 2016,
        }
    }
}

impl SynthFieldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic field: {m}")));
        if self.n_grids_x == 0 || self.n_grids_y == 0 {
            return bad("grid has zero area");
        }
        if self.n_days == 0 {
            return bad("n_days must be at least 1");
        }
        for (name, v) in [
            ("cell_size_m", self.cell_size_m),
            ("hotspot_length_scale_m", self.hotspot_length_scale_m),
            ("cap", self.cap),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("hotspot_amplitude", self.hotspot_amplitude),
            ("baseline_mean", self.baseline_mean),
            ("seasonal_amplitude", self.seasonal_amplitude),
            ("daily_noise_sd", self.daily_noise_sd),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(&format!("{name} must be nonnegative, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.ar_coefficient) {
            return bad("ar_coefficient must lie in [0, 1)");
        }
        for (name, v) in [
            ("purpleair_fraction", self.purpleair_fraction),
            ("school_fraction", self.school_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn n_grids(&self) -> usize {
        self.n_grids_x * self.n_grids_y
    }

    fn extent(&self) -> (f64, f64) {
        (
            self.n_grids_x as f64 * self.cell_size_m,
            self.n_grids_y as f64 * self.cell_size_m,
        )
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub cells: Vec<GridCell>,
    pub field: TruePm25Field,
    pub roads: Vec<RoadSegment>,
}

struct Hotspot {
    center: Point,
    amplitude: f64,
    length_scale: f64,
}

impl Hotspot {
    fn shape(&self, p: &Point) -> f64 {
        (-p.dist_sq(&self.center) / (2.0 * self.length_scale * self.length_scale)).exp()
    }
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("sd validated nonnegative")
}

fn draw_roads(cfg: &SynthFieldConfig) -> Vec<RoadSegment> {
    let (w, h) = cfg.extent();
    let mut rng = stream(&[cfg.seed, tag::SYNTH_ROADS]);
    let mut roads = Vec::with_capacity(cfg.n_roads);
    while roads.len() < cfg.n_roads {
        // Two uniform points on the domain boundary.
        let edge_point = |rng: &mut crate::rng::SimRng| {
            let t: f64 = rng.random();
            match rng.random_range(0..4) {
                0 => Point::new(t * w, 0.0),
                1 => Point::new(t * w, h),
                2 => Point::new(0.0, t * h),
                _ => Point::new(w, t * h),
            }
        };
        let a = edge_point(&mut rng);
        let b = edge_point(&mut rng);
        if let Ok(seg) = RoadSegment::new(a, b) {
            roads.push(seg);
        }
    }
    roads
}

pub fn generate_synthetic_field(cfg: &SynthFieldConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let (w, h) = cfg.extent();

    let mut hot_rng = stream(&[cfg.seed, tag::SYNTH_HOTSPOT]);
    let hotspots: Vec<Hotspot> = (0..cfg.n_hotspots)
        .map(|_| Hotspot {
            center: Point::new(hot_rng.random::<f64>() * w, hot_rng.random::<f64>() * h),
            amplitude: cfg.hotspot_amplitude * hot_rng.random_range(0.5..1.5),
            length_scale: cfg.hotspot_length_scale_m * hot_rng.random_range(0.5..1.5),
        })
        .collect();

    // Seasonal cosine (peak on day 0) with an AR(1) perturbation started from
    // its stationary distribution.
    let mut base_rng = stream(&[cfg.seed, tag::SYNTH_BASELINE]);
    let innov = normal(cfg.daily_noise_sd);
    let phi = cfg.ar_coefficient;
    let mut ar = if cfg.daily_noise_sd > 0.0 {
        innov.sample(&mut base_rng) / (1.0 - phi * phi).sqrt()
    } else {
        0.0
    };
    let mut baseline = Vec::with_capacity(cfg.n_days);
    for d in 0..cfg.n_days {
        if d > 0 {
            ar = phi * ar + innov.sample(&mut base_rng);
        }
        let season = (2.0 * std::f64::consts::PI * d as f64 / 365.25).cos();
        baseline.push(cfg.baseline_mean + cfg.seasonal_amplitude * season + ar);
    }

    let centroids: Vec<Point> = (0..cfg.n_grids())
        .map(|id| {
            let (i, j) = (id % cfg.n_grids_x, id / cfg.n_grids_x);
            Point::new(
                (i as f64 + 0.5) * cfg.cell_size_m,
                (j as f64 + 0.5) * cfg.cell_size_m,
            )
        })
        .collect();

    let cap = cfg.cap as f32;
    let noise = normal(cfg.daily_noise_sd);
    let mut values = Vec::with_capacity(cfg.n_grids() * cfg.n_days);
    let mut proximity = Vec::with_capacity(cfg.n_grids());
    for (id, c) in centroids.iter().enumerate() {
        let spatial: f64 = hotspots.iter().map(|hs| hs.amplitude * hs.shape(c)).sum();
        proximity.push(hotspots.iter().map(|hs| hs.shape(c)).sum::<f64>());
        let mut rng = stream(&[cfg.seed, tag::SYNTH_NOISE, id as u64]);
        for b in &baseline {
            let eps = if cfg.daily_noise_sd > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            values.push(((b + spatial + eps) as f32).clamp(0.0, cap));
        }
    }
    let field = TruePm25Field::new(cfg.n_grids(), cfg.n_days, values)?;

    let roads = draw_roads(cfg);
    let cells = synth_census(cfg, &centroids, &proximity, &roads);
    Ok(SynthOutput { cells, field, roads })
}

fn synth_census(
    cfg: &SynthFieldConfig,
    centroids: &[Point],
    proximity: &[f64],
    roads: &[RoadSegment],
) -> Vec<GridCell> {
    let (w, h) = cfg.extent();
    let max_prox = proximity.iter().cloned().fold(0.0, f64::max);
    let center = Point::new(w / 2.0, h / 2.0);
    let urban_scale = 0.25 * w.max(h);
    let n01 = normal(1.0);

    let mut cells: Vec<GridCell> = centroids
        .iter()
        .enumerate()
        .map(|(id, &c)| {
            let mut rng = stream(&[cfg.seed, tag::SYNTH_CENSUS, id as u64]);
            let prox = if max_prox > 0.0 { proximity[id] / max_prox } else { 0.0 };
            let urban = (-c.dist_sq(&center) / (2.0 * urban_scale * urban_scale)).exp();
            let mut z = || n01.sample(&mut rng);
            let pollution_score = (10.0 + 60.0 * prox + 5.0 * z()).max(0.0);
            let pct_poverty = (0.08 + 0.25 * prox + 0.07 * z()).clamp(0.0, 1.0);
            let pct_nonwhite = (0.30 + 0.35 * prox + 0.15 * z()).clamp(0.0, 1.0);
            let pop_density = (300f64.ln() + 3.0 * urban + 0.5 * prox + 0.8 * z()).exp();
            let ces_score = pollution_score * (0.4 + pct_poverty + 0.3 * pct_nonwhite);
            GridCell {
                id,
                centroid: c,
                pop_density,
                pct_poverty,
                pct_nonwhite,
                ces_score,
                pollution_score,
                road_length_500m: road_length_in_buffer(roads, c, 500.0),
                has_school: false,
                has_purpleair: false,
            }
        })
        .collect();

    // Siting flags favour dense areas; PurpleAir additionally avoids poverty.
    let mean_pop = cells.iter().map(|c| c.pop_density).sum::<f64>() / cells.len() as f64;
    for cell in &mut cells {
        let mut rng = stream(&[cfg.seed, tag::SYNTH_CENSUS, cell.id as u64, 1]);
        let rel = cell.pop_density / mean_pop;
        let p_school = (cfg.school_fraction * rel).min(1.0);
        let p_pa = (cfg.purpleair_fraction * rel * (1.5 - 2.0 * cell.pct_poverty).max(0.1)).min(1.0);
        cell.has_school = rng.random_bool(p_school);
        cell.has_purpleair = rng.random_bool(p_pa);
    }
    cells
}

/// Reference monitor sites at population-weighted random grid centroids.
pub fn synthetic_monitors(cells: &[GridCell], n: usize, seed: u64) -> Result<Vec<Site>> {
    let weights: Vec<f64> = cells.iter().map(|c| c.pop_density).collect();
    let mut rng = stream(&[seed, tag::SYNTH_MONITORS]);
    let picked = weighted_sample_without_replacement(&weights, n, &mut rng)?;
    Ok(picked
        .into_iter()
        .enumerate()
        .map(|(i, g)| Site {
            id: i as u64,
            location: cells[g].centroid,
        })
        .collect())
}

/// Collocated monitor / two-channel sensor days whose sensor readings invert
/// the default correction, with multiplicative noise and occasional QA faults
/// (short monitor days, low completeness, a drifting channel).
pub fn synthetic_collocated(n_pairs: usize, n_days: usize, seed: u64) -> Vec<CollocatedDailyObs> {
    let c = CorrectionCoefficients::default();
    let mut out = Vec::with_capacity(n_pairs * n_days);
    for p in 0..n_pairs {
        let mut rng = stream(&[seed, tag::SYNTH_COLLOCATED, p as u64]);
        let level: f64 = rng.random_range(4.0..14.0);
        for d in 0..n_days {
            let z: f64 = rng.sample(StandardNormal);
            let monitor = (level.ln() + 0.6 * z).exp();
            let rh = rng.random_range(15.0..90.0);
            let noise: f64 = rng.sample(StandardNormal);
            let pa = ((monitor - c.intercept - c.slope_rh * rh) / c.slope_pm * (1.0 + 0.15 * noise)).max(0.0);
            let split: f64 = rng.sample(StandardNormal);
            let mut b = pa * (1.0 + 0.03 * split);
            if rng.random_bool(0.03) {
                b = pa * 2.5 + 10.0;
            }
            let short = rng.random_bool(0.03);
            let (ca, cb) = if rng.random_bool(0.03) { (0.5, 0.6) } else { (1.0, 0.99) };
            out.push(CollocatedDailyObs {
                pair_id: p as u64,
                day: d as u32,
                monitor_pm25: monitor,
                monitor_hours: if short { 12.0 } else { 24.0 },
                pa_a_pm25: pa,
                pa_b_pm25: b,
                completeness_a: ca,
                completeness_b: cb,
                rh,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthFieldConfig {
        SynthFieldConfig {
            n_grids_x: 12,
            n_grids_y: 9,
            n_days: 20,
            ..Default::default()
        }
    }

    #[test]
    fn constant_field() {
        let cfg = SynthFieldConfig {
            hotspot_amplitude: 0.0,
            seasonal_amplitude: 0.0,
            daily_noise_sd: 0.0,
            baseline_mean: 5.0,
            ..small()
        };
        let out = generate_synthetic_field(&cfg).unwrap();
        assert!(out.field.values().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic_field(&small()).unwrap();
        let b = generate_synthetic_field(&small()).unwrap();
        assert_eq!(a.field, b.field);
        assert_eq!(a.cells, b.cells);
        let c = generate_synthetic_field(&SynthFieldConfig { seed: 7, ..small() }).unwrap();
        assert_ne!(a.field, c.field);
    }

    #[test]
    fn capped() {
        let cfg = SynthFieldConfig {
            baseline_mean: 200.0,
            cap: 112.0,
            ..small()
        };
        let out = generate_synthetic_field(&cfg).unwrap();
        assert_eq!(out.field.max(), 112.0);
        assert!(out.field.values().iter().all(|&v| (0.0..=112.0).contains(&v)));
    }

    #[test]
    fn rejects_degenerate_configs() {
        for cfg in [
            SynthFieldConfig { n_grids_x: 0, ..small() },
            SynthFieldConfig { cell_size_m: 0.0, ..small() },
            SynthFieldConfig { hotspot_length_scale_m: -1.0, ..small() },
            SynthFieldConfig { ar_coefficient: 1.0, ..small() },
        ] {
            assert!(generate_synthetic_field(&cfg).is_err());
        }
    }

    #[test]
    fn pollution_score_tracks_hotspots() {
        let out = generate_synthetic_field(&SynthFieldConfig {
            n_grids_x: 40,
            n_grids_y: 40,
            n_days: 5,
            ..Default::default()
        })
        .unwrap();
        let annual: Vec<f64> = (0..out.cells.len()).map(|g| out.field.annual_mean(g)).collect();
        let ps: Vec<f64> = out.cells.iter().map(|c| c.pollution_score).collect();
        let n = ps.len() as f64;
        let (ma, mp) = (annual.iter().sum::<f64>() / n, ps.iter().sum::<f64>() / n);
        let cov: f64 = annual.iter().zip(&ps).map(|(a, p)| (a - ma) * (p - mp)).sum();
        assert!(cov > 0.0);
        assert!(out.cells.iter().any(|c| c.road_length_500m > 0.0));
        assert!(out.cells.iter().any(|c| c.has_purpleair));
        assert!(out.cells.iter().any(|c| c.has_school));
    }

    #[test]
    fn monitors_sit_on_distinct_centroids() {
        let out = generate_synthetic_field(&small()).unwrap();
        let m = synthetic_monitors(&out.cells, 10, 1).unwrap();
        assert_eq!(m.len(), 10);
        for s in &m {
            assert!(out.cells.iter().any(|c| c.centroid == s.location));
        }
    }
}
