//! File formats: grid, field, instrument and collocation CSVs, the dense
//! `AQF1` binary field, and road segments.

mod field;
mod roads;

pub use field::{load_field, save_field_binary, save_field_csv, FIELD_MAGIC};
pub use roads::{fill_road_lengths, load_roads, road_length_in_buffer, save_roads, RoadSegment};

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{GridCell, Point, Site};
use crate::error::{Error, Result};

pub const GRID_HEADER: [&str; 11] = [
    "grid_id",
    "x_m",
    "y_m",
    "pop_density",
    "pct_poverty",
    "pct_nonwhite",
    "ces_score",
    "pollution_score",
    "road_length_500m",
    "school",
    "purpleair",
];
pub const TRACT_NONWHITE_COLUMN: &str = "tract_pct_nonwhite";
pub const INSTRUMENT_HEADER: [&str; 3] = ["instrument_id", "x_m", "y_m"];
pub const COLLOCATED_HEADER: [&str; 9] = [
    "pair_id",
    "day",
    "monitor_pm25",
    "monitor_hours",
    "pa_a_pm25",
    "pa_b_pm25",
    "completeness_a",
    "completeness_b",
    "rh",
];

/// One day of a collocated reference monitor and two-channel PurpleAir unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollocatedDailyObs {
    pub pair_id: u64,
    pub day: u32,
    pub monitor_pm25: f64,
    pub monitor_hours: f64,
    pub pa_a_pm25: f64,
    pub pa_b_pm25: f64,
    pub completeness_a: f64,
    pub completeness_b: f64,
    pub rh: f64,
}

impl CollocatedDailyObs {
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("monitor_pm25", self.monitor_pm25),
            ("pa_a_pm25", self.pa_a_pm25),
            ("pa_b_pm25", self.pa_b_pm25),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} = {v} must be a nonnegative concentration"));
            }
        }
        if !(0.0..=24.0).contains(&self.monitor_hours) {
            return Err(format!("monitor_hours = {} is outside [0, 24]", self.monitor_hours));
        }
        for (name, v) in [
            ("completeness_a", self.completeness_a),
            ("completeness_b", self.completeness_b),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if !(0.0..=100.0).contains(&self.rh) {
            return Err(format!("rh = {} is outside [0, 100]", self.rh));
        }
        Ok(())
    }
}

/// Column lookup over a CSV header with line-numbered field parsing.
struct Columns<'a> {
    path: &'a Path,
    index: HashMap<String, usize>,
}

impl<'a> Columns<'a> {
    fn new(path: &'a Path, headers: &csv::StringRecord, required: &[&str]) -> Result<Self> {
        let index: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        if let Some(missing) = required.iter().find(|h| !index.contains_key(**h)) {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("missing column `{missing}` (expected {})", required.join(",")),
            });
        }
        Ok(Columns { path, index })
    }

    fn has(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    fn raw<'r>(&self, rec: &'r csv::StringRecord, name: &str) -> &'r str {
        self.index
            .get(name)
            .and_then(|&i| rec.get(i))
            .map(str::trim)
            .unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, rec: &csv::StringRecord, name: &str) -> Result<T> {
        let raw = self.raw(rec, name);
        raw.parse().map_err(|_| {
            Error::parse(self.path, line_of(rec), format!("cannot parse {name} = {raw:?}"))
        })
    }

    fn parse_bool(&self, rec: &csv::StringRecord, name: &str) -> Result<bool> {
        match self.raw(rec, name).to_ascii_lowercase().as_str() {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            other => Err(Error::parse(
                self.path,
                line_of(rec),
                format!("{name} = {other:?} is not a boolean (0/1/true/false)"),
            )),
        }
    }
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?)
}

/// Reads the grid CSV. A blank `pct_nonwhite` falls back to the optional
/// `tract_pct_nonwhite` column; rows lacking both are rejected.
pub fn load_grid(path: impl AsRef<Path>) -> Result<Vec<GridCell>> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers()?.clone();
    let cols = Columns::new(path, &headers, &GRID_HEADER)?;
    let has_tract = cols.has(TRACT_NONWHITE_COLUMN);

    let mut cells: Vec<GridCell> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let pct_nonwhite = if cols.raw(&rec, "pct_nonwhite").is_empty() {
            if has_tract && !cols.raw(&rec, TRACT_NONWHITE_COLUMN).is_empty() {
                cols.parse(&rec, TRACT_NONWHITE_COLUMN)?
            } else {
                return Err(Error::parse(
                    path,
                    line,
                    "pct_nonwhite is missing and no tract_pct_nonwhite fallback is present",
                ));
            }
        } else {
            cols.parse(&rec, "pct_nonwhite")?
        };
        let cell = GridCell {
            id: cols.parse(&rec, "grid_id")?,
            centroid: Point::new(cols.parse(&rec, "x_m")?, cols.parse(&rec, "y_m")?),
            pop_density: cols.parse(&rec, "pop_density")?,
            pct_poverty: cols.parse(&rec, "pct_poverty")?,
            pct_nonwhite,
            ces_score: cols.parse(&rec, "ces_score")?,
            pollution_score: cols.parse(&rec, "pollution_score")?,
            road_length_500m: cols.parse(&rec, "road_length_500m")?,
            has_school: cols.parse_bool(&rec, "school")?,
            has_purpleair: cols.parse_bool(&rec, "purpleair")?,
        };
        cell.validate()
            .map_err(|m| Error::parse(path, line, format!("grid {}: {m}", cell.id)))?;
        cells.push(cell);
    }

    cells.sort_by_key(|c| c.id);
    for (i, pair) in cells.windows(2).enumerate() {
        if pair[0].id == pair[1].id {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("duplicate grid_id {} (sorted position {})", pair[0].id, i + 1),
            });
        }
    }
    if let Some((i, c)) = cells.iter().enumerate().find(|(i, c)| c.id != *i) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("grid ids must be dense in [0, n): expected {i}, found {}", c.id),
        });
    }
    Ok(cells)
}

pub fn save_grid(path: impl AsRef<Path>, cells: &[GridCell]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(GRID_HEADER)?;
    for c in cells {
        w.write_record([
            c.id.to_string(),
            c.centroid.x.to_string(),
            c.centroid.y.to_string(),
            c.pop_density.to_string(),
            c.pct_poverty.to_string(),
            c.pct_nonwhite.to_string(),
            c.ces_score.to_string(),
            c.pollution_score.to_string(),
            c.road_length_500m.to_string(),
            u8::from(c.has_school).to_string(),
            u8::from(c.has_purpleair).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `instrument_id,x_m,y_m`. An empty file (header only) is valid.
pub fn load_instruments(path: impl AsRef<Path>) -> Result<Vec<Site>> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let cols = Columns::new(path, &headers, &INSTRUMENT_HEADER)?;
    let mut sites = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let site = Site {
            id: cols.parse(&rec, "instrument_id")?,
            location: Point::new(cols.parse(&rec, "x_m")?, cols.parse(&rec, "y_m")?),
        };
        if !site.location.is_finite() {
            return Err(Error::parse(path, line_of(&rec), "coordinates must be finite"));
        }
        if !seen.insert(site.id) {
            return Err(Error::parse(
                path,
                line_of(&rec),
                format!("duplicate instrument_id {}", site.id),
            ));
        }
        sites.push(site);
    }
    Ok(sites)
}

pub fn save_instruments(path: impl AsRef<Path>, sites: &[Site]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(INSTRUMENT_HEADER)?;
    for s in sites {
        w.write_record([
            s.id.to_string(),
            s.location.x.to_string(),
            s.location.y.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_collocated(path: impl AsRef<Path>) -> Result<Vec<CollocatedDailyObs>> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers()?.clone();
    let cols = Columns::new(path, &headers, &COLLOCATED_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let obs = CollocatedDailyObs {
            pair_id: cols.parse(&rec, "pair_id")?,
            day: cols.parse(&rec, "day")?,
            monitor_pm25: cols.parse(&rec, "monitor_pm25")?,
            monitor_hours: cols.parse(&rec, "monitor_hours")?,
            pa_a_pm25: cols.parse(&rec, "pa_a_pm25")?,
            pa_b_pm25: cols.parse(&rec, "pa_b_pm25")?,
            completeness_a: cols.parse(&rec, "completeness_a")?,
            completeness_b: cols.parse(&rec, "completeness_b")?,
            rh: cols.parse(&rec, "rh")?,
        };
        obs.validate()
            .map_err(|m| Error::parse(path, line_of(&rec), m))?;
        out.push(obs);
    }
    Ok(out)
}

pub fn save_collocated(path: impl AsRef<Path>, obs: &[CollocatedDailyObs]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(COLLOCATED_HEADER)?;
    for o in obs {
        w.write_record([
            o.pair_id.to_string(),
            o.day.to_string(),
            o.monitor_pm25.to_string(),
            o.monitor_hours.to_string(),
            o.pa_a_pm25.to_string(),
            o.pa_b_pm25.to_string(),
            o.completeness_a.to_string(),
            o.completeness_b.to_string(),
            o.rh.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
