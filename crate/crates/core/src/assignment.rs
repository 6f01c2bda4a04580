//! Exact nearest-instrument assignment.
//!
//! A static k-d tree answers nearest queries; ties on distance go to the
//! lowest instrument id, so results never depend on insertion order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DistanceMetric, GridCell, Point, EARTH_RADIUS_M};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InstrumentKind {
    ReferenceMonitor,
    LowCostSensor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Instrument {
    pub id: u64,
    pub kind: InstrumentKind,
    pub location: Point,
    /// Grid whose true value this instrument measures.
    pub host_grid: usize,
}

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum KdNode {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

/// Static k-d tree over `K`-dimensional points tagged with ids.
#[derive(Debug, Clone)]
struct KdTree<const K: usize> {
    points: Vec<[f64; K]>,
    ids: Vec<u64>,
    /// Position of each stored point in the caller's original order.
    slots: Vec<u32>,
    nodes: Vec<KdNode>,
}

#[inline]
fn sq_dist<const K: usize>(a: &[f64; K], b: &[f64; K]) -> f64 {
    let mut s = 0.0;
    for k in 0..K {
        let d = a[k] - b[k];
        s += d * d;
    }
    s
}

#[derive(Debug, Clone, Copy)]
struct Best {
    d2: f64,
    id: u64,
    slot: u32,
}

impl Best {
    #[inline]
    fn beats(&self, d2: f64, id: u64) -> bool {
        d2 < self.d2 || (d2 == self.d2 && id < self.id)
    }
}

impl<const K: usize> KdTree<K> {
    fn build(points: Vec<[f64; K]>, ids: Vec<u64>) -> Self {
        let n = points.len();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(2 * n / LEAF_SIZE + 1);
        Self::build_rec(&points, &mut order, 0, n, &mut nodes);
        KdTree {
            points: order.iter().map(|&i| points[i as usize]).collect(),
            ids: order.iter().map(|&i| ids[i as usize]).collect(),
            slots: order,
            nodes,
        }
    }

    fn build_rec(points: &[[f64; K]], order: &mut [u32], lo: usize, hi: usize, nodes: &mut Vec<KdNode>) -> u32 {
        let me = nodes.len() as u32;
        if hi - lo <= LEAF_SIZE {
            nodes.push(KdNode::Leaf { start: lo as u32, end: hi as u32 });
            return me;
        }
        // Split on the axis of largest spread.
        let slice = &mut order[lo..hi];
        let mut axis = 0;
        let mut best_spread = f64::NEG_INFINITY;
        #[allow(clippy::needless_range_loop)]
        for k in 0..K {
            let (mn, mx) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), &i| {
                let v = points[i as usize][k];
                (mn.min(v), mx.max(v))
            });
            if mx - mn > best_spread {
                best_spread = mx - mn;
                axis = k;
            }
        }
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| points[a as usize][axis].total_cmp(&points[b as usize][axis]));
        let value = points[slice[mid] as usize][axis];
        nodes.push(KdNode::Leaf { start: 0, end: 0 });
        let left = Self::build_rec(points, order, lo, lo + mid, nodes);
        let right = Self::build_rec(points, order, lo + mid, hi, nodes);
        nodes[me as usize] = KdNode::Split { axis: axis as u8, value, left, right };
        me
    }

    fn nearest(&self, q: &[f64; K]) -> Best {
        let mut best = Best { d2: f64::INFINITY, id: u64::MAX, slot: u32::MAX };
        self.search(0, q, &mut best);
        best
    }

    fn search(&self, node: u32, q: &[f64; K], best: &mut Best) {
        match self.nodes[node as usize] {
            KdNode::Leaf { start, end } => {
                for i in start as usize..end as usize {
                    let d2 = sq_dist(&self.points[i], q);
                    if best.beats(d2, self.ids[i]) {
                        *best = Best { d2, id: self.ids[i], slot: self.slots[i] };
                    }
                }
            }
            KdNode::Split { axis, value, left, right } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // `<=` keeps equal-distance candidates reachable for the id tie-break.
                if diff * diff <= best.d2 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Result of one nearest query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest {
    /// Position in the slice the index was built from.
    pub index: usize,
    pub id: u64,
    /// Meters.
    pub distance: f64,
}

fn unit_vector(p: &Point) -> [f64; 3] {
    let (lon, lat) = (p.x.to_radians(), p.y.to_radians());
    [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
}

/// Exact nearest-neighbor index over a fixed point set.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    metric: DistanceMetric,
    locations: Vec<Point>,
    tree: Tree,
}

#[derive(Debug, Clone)]
enum Tree {
    Planar(KdTree<2>),
    // Chord length on the unit sphere orders points like great-circle distance.
    Sphere(KdTree<3>),
}

impl SpatialIndex {
    pub fn build(points: &[(u64, Point)], metric: DistanceMetric) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::NoInstruments);
        }
        if let Some((id, _)) = points.iter().find(|(_, p)| !p.is_finite()) {
            return Err(Error::Config(format!("point {id} has non-finite coordinates")));
        }
        let ids: Vec<u64> = points.iter().map(|(id, _)| *id).collect();
        let tree = match metric {
            DistanceMetric::Planar => Tree::Planar(KdTree::build(points.iter().map(|(_, p)| [p.x, p.y]).collect(), ids)),
            DistanceMetric::Haversine => Tree::Sphere(KdTree::build(points.iter().map(|(_, p)| unit_vector(p)).collect(), ids)),
        };
        Ok(SpatialIndex {
            metric,
            locations: points.iter().map(|(_, p)| *p).collect(),
            tree,
        })
    }

    pub fn for_instruments(instruments: &[Instrument], metric: DistanceMetric) -> Result<Self> {
        let pts: Vec<(u64, Point)> = instruments.iter().map(|i| (i.id, i.location)).collect();
        Self::build(&pts, metric)
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn nearest(&self, q: &Point) -> Nearest {
        match &self.tree {
            Tree::Planar(t) => {
                let b = t.nearest(&[q.x, q.y]);
                Nearest { index: b.slot as usize, id: b.id, distance: b.d2.sqrt() }
            }
            Tree::Sphere(t) => {
                let b = t.nearest(&unit_vector(q));
                let index = b.slot as usize;
                // Convert the winning chord back to an arc length.
                let chord = b.d2.sqrt();
                let distance = 2.0 * EARTH_RADIUS_M * (chord / 2.0).min(1.0).asin();
                debug_assert!((distance - self.metric.distance(q, &self.locations[index])).abs() < 1e-3);
                Nearest { index, id: b.id, distance }
            }
        }
    }
}

/// Nearest instrument and its distance for every grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMap {
    /// Index into the instrument slice passed to [`assign_all`].
    pub instrument: Vec<u32>,
    pub distance_m: Vec<f64>,
}

impl AssignmentMap {
    pub fn len(&self) -> usize {
        self.instrument.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrument.is_empty()
    }
}

pub fn assign_all(cells: &[GridCell], instruments: &[Instrument], metric: DistanceMetric) -> Result<AssignmentMap> {
    let index = SpatialIndex::for_instruments(instruments, metric)?;
    let hits: Vec<Nearest> = cells
        .par_iter()
        .with_min_len(4096)
        .map(|c| index.nearest(&c.centroid))
        .collect();
    Ok(AssignmentMap {
        instrument: hits.iter().map(|h| h.index as u32).collect(),
        distance_m: hits.iter().map(|h| h.distance).collect(),
    })
}

/// Grid cell whose centroid is nearest to each point (lowest grid id on ties).
pub fn snap_to_grid(cells: &[GridCell], points: &[Point], metric: DistanceMetric) -> Result<Vec<usize>> {
    let centroids: Vec<(u64, Point)> = cells.iter().map(|c| (c.id as u64, c.centroid)).collect();
    let index = SpatialIndex::build(&centroids, metric)?;
    Ok(points.iter().map(|p| cells[index.nearest(p).index].id).collect())
}

/// Weighted mean distance in kilometers over masked grids; `None` when the
/// mask holds no weight.
pub fn mean_distance(assignment: &AssignmentMap, weights: &[f64], mask: &[bool]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for ((d, w), m) in assignment.distance_m.iter().zip(weights).zip(mask) {
        if *m {
            num += w * d;
            den += w;
        }
    }
    (den > 0.0).then(|| num / den / 1000.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn brute(points: &[(u64, Point)], q: &Point) -> (u64, f64) {
        let mut best = (u64::MAX, f64::INFINITY);
        for (id, p) in points {
            let d2 = p.dist_sq(q);
            if d2 < best.1 || (d2 == best.1 && *id < best.0) {
                best = (*id, d2);
            }
        }
        (best.0, best.1.sqrt())
    }

    #[test]
    fn single_instrument_and_self_query() {
        let pts = vec![(7, Point::new(3.0, 4.0))];
        let idx = SpatialIndex::build(&pts, DistanceMetric::Planar).unwrap();
        let n = idx.nearest(&Point::new(0.0, 0.0));
        assert_eq!((n.id, n.distance), (7, 5.0));
        assert_eq!(idx.nearest(&Point::new(3.0, 4.0)).distance, 0.0);
        assert!(SpatialIndex::build(&[], DistanceMetric::Planar).is_err());
    }

    #[test]
    fn matches_linear_scan_including_grid_ties() {
        let mut rng = stream(&[11]);
        for case in 0..20 {
            let n = 1 + case * 37;
            // Integer lattice coordinates produce many exact ties.
            let pts: Vec<(u64, Point)> = (0..n)
                .map(|i| (i as u64 * 3 % 1000, Point::new(rng.random_range(0..20) as f64, rng.random_range(0..20) as f64)))
                .enumerate()
                .map(|(k, (id, p))| (id * 1000 + k as u64, p))
                .collect();
            let idx = SpatialIndex::build(&pts, DistanceMetric::Planar).unwrap();
            for _ in 0..300 {
                let q = Point::new(rng.random_range(-2..22) as f64 + 0.5 * rng.random_range(0..2) as f64, rng.random_range(-2..22) as f64);
                let got = idx.nearest(&q);
                assert_eq!((got.id, got.distance), brute(&pts, &q));
                assert_eq!(pts[got.index].0, got.id);
            }
        }
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let mut rng = stream(&[12]);
        let mut pts: Vec<(u64, Point)> = (0..300)
            .map(|i| (i, Point::new(rng.random_range(0..10) as f64, rng.random_range(0..10) as f64)))
            .collect();
        let a = SpatialIndex::build(&pts, DistanceMetric::Planar).unwrap();
        pts.reverse();
        let b = SpatialIndex::build(&pts, DistanceMetric::Planar).unwrap();
        for x in 0..12 {
            for y in 0..12 {
                let q = Point::new(x as f64 - 0.5, y as f64);
                assert_eq!(a.nearest(&q).id, b.nearest(&q).id);
            }
        }
    }

    #[test]
    fn haversine_matches_scan() {
        let mut rng = stream(&[13]);
        let pts: Vec<(u64, Point)> = (0..500)
            .map(|i| (i, Point::new(rng.random_range(-124.0..-114.0), rng.random_range(32.5..42.0))))
            .collect();
        let idx = SpatialIndex::build(&pts, DistanceMetric::Haversine).unwrap();
        for _ in 0..500 {
            let q = Point::new(rng.random_range(-124.0..-114.0), rng.random_range(32.5..42.0));
            let got = idx.nearest(&q);
            let (best_id, best_d) = pts
                .iter()
                .map(|(id, p)| (*id, crate::domain::haversine_m(&q, p)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!((got.distance - best_d).abs() < 1e-3);
            if got.id != best_id {
                // Only acceptable when the two are numerically tied.
                let alt = crate::domain::haversine_m(&q, &pts[got.index].1);
                assert!((alt - best_d).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn mean_distance_examples() {
        let a = AssignmentMap { instrument: vec![0, 0], distance_m: vec![1000.0, 1000.0] };
        assert_eq!(mean_distance(&a, &[5.0, 0.5], &[true, true]), Some(1.0));
        let a = AssignmentMap { instrument: vec![0, 0], distance_m: vec![1000.0, 3000.0] };
        assert_eq!(mean_distance(&a, &[3.0, 1.0], &[true, true]), Some(1.5));
        assert_eq!(mean_distance(&a, &[3.0, 1.0], &[false, false]), None);
    }
}
