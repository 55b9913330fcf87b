use std::fmt;

use serde::{Deserialize, Serialize};

use super::StoreError;

/// IUGG mean Earth radius.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// A WGS-84 coordinate in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, StoreError> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(StoreError::InvalidCoordinate(format!("latitude {lat} out of range")));
        }
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(StoreError::InvalidCoordinate(format!("longitude {lon} out of range")));
        }
        Ok(Self { lat, lon })
    }

    /// Key with exact bit identity, used for duplicate detection.
    pub(crate) fn bits(&self) -> (u64, u64) {
        (self.lat.to_bits(), self.lon.to_bits())
    }

    /// Orders by latitude then longitude; the nearest-origin tie-break.
    pub(crate) fn lexicographic_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.lat
            .total_cmp(&other.lat)
            .then(self.lon.total_cmp(&other.lon))
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lat, self.lon)
    }
}

fn hav(theta: f64) -> f64 {
    let s = (theta / 2.0).sin();
    s * s
}

/// Great-circle distance between two points using the haversine formula.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let h = hav(phi2 - phi1) + phi1.cos() * phi2.cos() * hav((b.lon - a.lon).to_radians());
    2.0 * EARTH_RADIUS_KM * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Lower bound on the haversine distance from `q` to any point inside the
/// latitude/longitude box. Never exceeds the true minimum (up to rounding).
pub(crate) fn box_lower_bound_km(
    q: GeoPoint,
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
) -> f64 {
    let dlat = if q.lat < lat_min {
        lat_min - q.lat
    } else if q.lat > lat_max {
        q.lat - lat_max
    } else {
        0.0
    };
    let dlon = if q.lon >= lon_min && q.lon <= lon_max {
        0.0
    } else {
        let angular = |x: f64| {
            let d = (q.lon - x).abs() % 360.0;
            d.min(360.0 - d)
        };
        angular(lon_min).min(angular(lon_max))
    };
    let max_abs_lat = lat_min.abs().max(lat_max.abs()).min(90.0);
    let cos_min = max_abs_lat.to_radians().cos().max(0.0);
    let h = hav(dlat.to_radians())
        + q.lat.to_radians().cos() * cos_min * hav(dlon.to_radians());
    2.0 * EARTH_RADIUS_KM * h.clamp(0.0, 1.0).sqrt().asin()
}
