//! Domain types shared by every stage of the simulator.

mod quintile;
mod stats;
mod synth;

pub use quintile::{compute_quintile_masks, quintile_mask, SubgroupMasks};
pub use stats::{
    descriptive_stats, standard_location_sets, ColumnStat, LocationSet, StatColumn, StatsRow,
    StatsTable,
};
pub use synth::{
    generate_synthetic_field, synthetic_collocated, synthetic_monitors, SynthFieldConfig, SynthOutput,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planar position in meters (easting, northing), or degrees (lon, lat) when
/// used with [`DistanceMetric::Haversine`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Squared planar distance. Every exact nearest-neighbor comparison in the
    /// crate goes through this one expression.
    #[inline]
    pub fn dist_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        self.dist_sq(other).sqrt()
    }
}

pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// Euclidean distance on projected coordinates in meters.
    #[default]
    Planar,
    /// Great-circle distance; points hold (longitude, latitude) in degrees.
    Haversine,
}

impl DistanceMetric {
    pub fn distance(self, a: &Point, b: &Point) -> f64 {
        match self {
            DistanceMetric::Planar => a.dist(b),
            DistanceMetric::Haversine => haversine_m(a, b),
        }
    }
}

pub fn haversine_m(a: &Point, b: &Point) -> f64 {
    let (lat1, lat2) = (a.y.to_radians(), b.y.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.x - a.x).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// One 1 km grid cell with its census and siting attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub id: usize,
    pub centroid: Point,
    /// Persons per square mile.
    pub pop_density: f64,
    pub pct_poverty: f64,
    pub pct_nonwhite: f64,
    pub ces_score: f64,
    pub pollution_score: f64,
    /// Meters of major road within 500 m of the centroid.
    pub road_length_500m: f64,
    pub has_school: bool,
    pub has_purpleair: bool,
}

impl GridCell {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.centroid.is_finite() {
            return Err("centroid is not finite".into());
        }
        for (name, v) in [("pct_poverty", self.pct_poverty), ("pct_nonwhite", self.pct_nonwhite)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        for (name, v) in [
            ("pop_density", self.pop_density),
            ("ces_score", self.ces_score),
            ("pollution_score", self.pollution_score),
            ("road_length_500m", self.road_length_500m),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} = {v} must be finite and nonnegative"));
            }
        }
        Ok(())
    }
}

/// Checks the id and range invariants of a grid.
pub fn validate_grid(cells: &[GridCell]) -> Result<()> {
    for (i, c) in cells.iter().enumerate() {
        if c.id != i {
            return Err(Error::Config(format!(
                "grid ids must be dense and ordered: position {i} holds id {}",
                c.id
            )));
        }
        c.validate()
            .map_err(|m| Error::Config(format!("grid {}: {m}", c.id)))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    PopulationDensity,
    Unweighted,
}

impl Weighting {
    pub const ALL: [Weighting; 2] = [Weighting::PopulationDensity, Weighting::Unweighted];

    pub fn weight(self, cell: &GridCell) -> f64 {
        match self {
            Weighting::PopulationDensity => cell.pop_density,
            Weighting::Unweighted => 1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Weighting::PopulationDensity => "pop_density",
            Weighting::Unweighted => "unweighted",
        }
    }
}

/// A fixed instrument location from an input file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: u64,
    pub location: Point,
}

/// Dense grid-by-day matrix of "true" daily PM2.5 (µg/m³), row-major by grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TruePm25Field {
    n_grids: usize,
    n_days: usize,
    values: Vec<f32>,
}

pub const DEFAULT_CAP: f64 = 112.0;

impl TruePm25Field {
    pub fn new(n_grids: usize, n_days: usize, values: Vec<f32>) -> Result<Self> {
        if n_grids.checked_mul(n_days) != Some(values.len()) {
            return Err(Error::Shape(format!(
                "{} values for {n_grids} grids x {n_days} days",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Config(format!(
                "field value {v} at grid {} day {} is not a finite nonnegative concentration",
                i / n_days.max(1),
                i % n_days.max(1)
            )));
        }
        Ok(TruePm25Field {
            n_grids,
            n_days,
            values,
        })
    }

    pub fn n_grids(&self) -> usize {
        self.n_grids
    }

    pub fn n_days(&self) -> usize {
        self.n_days
    }

    #[inline]
    pub fn get(&self, grid: usize, day: usize) -> f64 {
        f64::from(self.values[grid * self.n_days + day])
    }

    pub fn row(&self, grid: usize) -> &[f32] {
        &self.values[grid * self.n_days..(grid + 1) * self.n_days]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn annual_mean(&self, grid: usize) -> f64 {
        let row = self.row(grid);
        row.iter().map(|&v| f64::from(v)).sum::<f64>() / row.len().max(1) as f64
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .fold(0.0_f64, |m, &v| m.max(f64::from(v)))
    }
}
