use std::path::Path;

use super::{line_of, open_csv, Columns};
use crate::domain::{GridCell, Point};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadSegment {
    a: Point,
    b: Point,
}

impl RoadSegment {
    pub fn new(a: Point, b: Point) -> std::result::Result<Self, String> {
        if !(a.is_finite() && b.is_finite()) {
            return Err("segment endpoints must be finite".into());
        }
        if a == b {
            return Err("segment endpoints coincide".into());
        }
        Ok(RoadSegment { a, b })
    }

    pub fn a(&self) -> Point {
        self.a
    }

    pub fn b(&self) -> Point {
        self.b
    }

    pub fn length(&self) -> f64 {
        self.a.dist(&self.b)
    }

    /// Length of the part of this segment inside the closed disk.
    pub fn length_in_disk(&self, center: Point, radius: f64) -> f64 {
        // |a + t(b - a) - c|^2 = r^2 solved for t, intersected with [0, 1].
        let (dx, dy) = (self.b.x - self.a.x, self.b.y - self.a.y);
        let (fx, fy) = (self.a.x - center.x, self.a.y - center.y);
        let qa = dx * dx + dy * dy;
        let qb = 2.0 * (fx * dx + fy * dy);
        let qc = fx * fx + fy * fy - radius * radius;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc <= 0.0 {
            return 0.0;
        }
        let root = disc.sqrt();
        let t0 = ((-qb - root) / (2.0 * qa)).max(0.0);
        let t1 = ((-qb + root) / (2.0 * qa)).min(1.0);
        if t1 <= t0 {
            0.0
        } else {
            (t1 - t0) * qa.sqrt()
        }
    }
}

/// Total road length inside the disk of `radius` meters around `center`.
pub fn road_length_in_buffer(segments: &[RoadSegment], center: Point, radius: f64) -> f64 {
    segments.iter().map(|s| s.length_in_disk(center, radius)).sum()
}

/// Reads a `x1,y1,x2,y2` segment CSV.
pub fn load_roads(path: impl AsRef<Path>) -> Result<Vec<RoadSegment>> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers()?.clone();
    let cols = Columns::new(path, &headers, &["x1", "y1", "x2", "y2"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let a = Point::new(cols.parse(&rec, "x1")?, cols.parse(&rec, "y1")?);
        let b = Point::new(cols.parse(&rec, "x2")?, cols.parse(&rec, "y2")?);
        out.push(RoadSegment::new(a, b).map_err(|m| Error::parse(path, line_of(&rec), m))?);
    }
    Ok(out)
}

pub fn save_roads(path: impl AsRef<Path>, segments: &[RoadSegment]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x1", "y1", "x2", "y2"])?;
    for s in segments {
        w.serialize((s.a().x, s.a().y, s.b().x, s.b().y))?;
    }
    w.flush()?;
    Ok(())
}

/// Overwrites each cell's `road_length_500m` with the buffered length.
pub fn fill_road_lengths(cells: &mut [GridCell], segments: &[RoadSegment], radius: f64) {
    for c in cells {
        c.road_length_500m = road_length_in_buffer(segments, c.centroid, radius);
    }
}
