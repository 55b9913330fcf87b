//! Uniform-grid nearest-neighbour index over record origins.
//!
//! Cells are visited in order of a haversine lower bound, so the search is
//! exact: it returns the same record as an exhaustive scan, including the
//! (lat, lon) tie-break.

use std::cmp::Ordering;

use super::geo::{box_lower_bound_km, haversine_km};
use super::{AccessRecord, GeoPoint};

/// Slack absorbing rounding in the lower bound.
const BOUND_SLACK_KM: f64 = 1e-9;
const TARGET_PER_CELL: usize = 8;

#[derive(Debug)]
struct Cell {
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
    members: Vec<u32>,
}

#[derive(Debug)]
pub(crate) struct GridIndex {
    records: Vec<AccessRecord>,
    cells: Vec<Cell>,
}

/// Total order used by both the index and brute-force scans.
pub(crate) fn closer(a: (f64, &AccessRecord), b: (f64, &AccessRecord)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then_with(|| a.1.origin.lexicographic_cmp(&b.1.origin))
}

impl GridIndex {
    pub(crate) fn build(records: Vec<AccessRecord>) -> Self {
        if records.is_empty() {
            return Self { records, cells: Vec::new() };
        }
        let (mut lat_lo, mut lat_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut lon_lo, mut lon_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in &records {
            lat_lo = lat_lo.min(r.origin.lat);
            lat_hi = lat_hi.max(r.origin.lat);
            lon_lo = lon_lo.min(r.origin.lon);
            lon_hi = lon_hi.max(r.origin.lon);
        }
        let side = ((records.len() / TARGET_PER_CELL) as f64).sqrt().ceil().max(1.0) as usize;
        let lat_step = ((lat_hi - lat_lo) / side as f64).max(f64::MIN_POSITIVE);
        let lon_step = ((lon_hi - lon_lo) / side as f64).max(f64::MIN_POSITIVE);
        let slot = |v: f64, lo: f64, step: f64| (((v - lo) / step) as usize).min(side - 1);

        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); side * side];
        for (i, r) in records.iter().enumerate() {
            let row = slot(r.origin.lat, lat_lo, lat_step);
            let col = slot(r.origin.lon, lon_lo, lon_step);
            buckets[row * side + col].push(i as u32);
        }

        // Cell bounds are taken from the members themselves, which keeps the
        // lower bound tight and immune to bucketing round-off.
        let cells = buckets
            .into_iter()
            .filter(|b| !b.is_empty())
            .map(|members| {
                let mut cell = Cell {
                    lat_min: f64::INFINITY,
                    lat_max: f64::NEG_INFINITY,
                    lon_min: f64::INFINITY,
                    lon_max: f64::NEG_INFINITY,
                    members,
                };
                for &m in &cell.members {
                    let p = records[m as usize].origin;
                    cell.lat_min = cell.lat_min.min(p.lat);
                    cell.lat_max = cell.lat_max.max(p.lat);
                    cell.lon_min = cell.lon_min.min(p.lon);
                    cell.lon_max = cell.lon_max.max(p.lon);
                }
                cell
            })
            .collect();
        Self { records, cells }
    }

    pub(crate) fn records(&self) -> &[AccessRecord] {
        &self.records
    }

    pub(crate) fn nearest(&self, q: GeoPoint) -> Option<(f64, &AccessRecord)> {
        let mut order: Vec<(f64, usize)> = self
            .cells
            .iter()
            .enumerate()
            .map(|(i, c)| (box_lower_bound_km(q, c.lat_min, c.lat_max, c.lon_min, c.lon_max), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut best: Option<(f64, &AccessRecord)> = None;
        for (bound, ci) in order {
            if let Some((d, _)) = best {
                if bound > d + BOUND_SLACK_KM {
                    break;
                }
            }
            for &m in &self.cells[ci].members {
                let r = &self.records[m as usize];
                let cand = (haversine_km(q, r.origin), r);
                best = match best {
                    Some(b) if closer(b, cand) != Ordering::Greater => Some(b),
                    _ => Some(cand),
                };
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{Category, TravelMode};

    fn rec(lat: f64, lon: f64) -> AccessRecord {
        AccessRecord {
            origin: GeoPoint { lat, lon },
            category: Category::Hospital,
            mode: TravelMode::Walk,
            distance_km: 1.0,
            time_min: 1.0,
        }
    }

    #[test]
    fn empty_index_has_no_neighbour() {
        let idx = GridIndex::build(Vec::new());
        assert!(idx.nearest(GeoPoint { lat: 0.0, lon: 0.0 }).is_none());
    }

    #[test]
    fn equidistant_tie_prefers_smaller_lat_lon() {
        let idx = GridIndex::build(vec![rec(43.0, -2.5), rec(43.0, -2.7)]);
        let (_, r) = idx.nearest(GeoPoint { lat: 43.0, lon: -2.6 }).unwrap();
        assert_eq!(r.origin.lon, -2.7);
    }

    #[test]
    fn far_query_outside_grid() {
        let recs: Vec<_> = (0..100).map(|i| rec(43.0 + i as f64 * 0.001, -2.6)).collect();
        let idx = GridIndex::build(recs);
        let (_, r) = idx.nearest(GeoPoint { lat: 50.0, lon: -2.6 }).unwrap();
        assert!((r.origin.lat - 43.099).abs() < 1e-12);
    }
}
