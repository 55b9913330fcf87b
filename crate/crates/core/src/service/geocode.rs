use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::overpass::{OverpassClient, OverpassError};
use crate::store::{canonicalize_name, GeoPoint, Store, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeocodeSource {
    Gazetteer,
    Overpass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geocoded {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub source: GeocodeSource,
    /// Distance from the queried point, for point input.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_km: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeocodeInput<'a> {
    Text(&'a str),
    Point(GeoPoint),
}

/// Resolves map clicks and typed place names against the gazetteer, with an
/// optional Overpass fallback for text.
pub struct Geocoder {
    store: Arc<Store>,
    radius_km: f64,
    overpass: Option<OverpassClient>,
}

/// Why a place could not be resolved, phrased for the end user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocationNotFound(pub String);

impl Geocoder {
    pub fn new(store: Arc<Store>, radius_km: f64, overpass: Option<OverpassClient>) -> Self {
        Self { store, radius_km, overpass }
    }

    pub fn geocode(&self, input: GeocodeInput<'_>) -> Result<Geocoded, LocationNotFound> {
        match input {
            GeocodeInput::Point(p) => self.geocode_point(p),
            GeocodeInput::Text(t) => self.geocode_text(t),
        }
    }

    fn geocode_point(&self, point: GeoPoint) -> Result<Geocoded, LocationNotFound> {
        match self.store.nearest_place(point) {
            Some((d, e)) if d <= self.radius_km => Ok(Geocoded {
                name: e.name.clone(),
                lat: e.point.lat,
                lon: e.point.lon,
                source: GeocodeSource::Gazetteer,
                distance_km: Some(d),
            }),
            _ => Err(LocationNotFound(format!(
                "No known place lies within {} km of ({:.5}, {:.5}). Try clicking closer to a town.",
                self.radius_km, point.lat, point.lon
            ))),
        }
    }

    fn geocode_text(&self, text: &str) -> Result<Geocoded, LocationNotFound> {
        match self.store.resolve_location(text) {
            Ok(e) => {
                return Ok(Geocoded {
                    name: e.name.clone(),
                    lat: e.point.lat,
                    lon: e.point.lon,
                    source: GeocodeSource::Gazetteer,
                    distance_km: None,
                })
            }
            Err(StoreError::AmbiguousLocation { candidates, .. }) => {
                return Err(LocationNotFound(format!(
                    "\"{text}\" matches several places: {}. Please be more specific.",
                    candidates.join(", ")
                )))
            }
            Err(_) => {}
        }
        let not_found = || LocationNotFound(format!("Sorry, I could not find a place called \"{text}\"."));
        let Some(client) = &self.overpass else {
            return Err(not_found());
        };
        match client.lookup(text) {
            Ok(e) => Ok(Geocoded {
                name: e.name,
                lat: e.point.lat,
                lon: e.point.lon,
                source: GeocodeSource::Overpass,
                distance_km: None,
            }),
            Err(OverpassError::NotFound(_)) => Err(not_found()),
            Err(e) => {
                log::warn!("overpass lookup for {text:?} failed: {e}");
                Err(not_found())
            }
        }
    }

    /// Gazetteer names mentioned in free text, longest first, without
    /// overlaps, in order of appearance.
    pub fn mentions(&self, text: &str) -> Vec<String> {
        let hay = canonicalize_name(text);
        let bytes = hay.as_bytes();
        let boundary = |i: usize| {
            i == 0 || i >= hay.len() || !hay[..i].chars().next_back().is_some_and(char::is_alphanumeric)
        };
        let after = |i: usize| i >= hay.len() || !hay[i..].chars().next().is_some_and(char::is_alphanumeric);
        let mut names: Vec<(String, &str)> =
            self.store.gazetteer().iter().map(|e| (e.canonical_name(), e.name.as_str())).collect();
        names.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        let mut taken = vec![false; bytes.len()];
        let mut found: Vec<(usize, String)> = Vec::new();
        for (key, name) in names {
            if key.is_empty() {
                continue;
            }
            for (i, _) in hay.match_indices(key.as_str()) {
                let end = i + key.len();
                if boundary(i) && after(end) && !taken[i..end].iter().any(|&t| t) {
                    taken[i..end].iter_mut().for_each(|t| *t = true);
                    found.push((i, name.to_string()));
                }
            }
        }
        found.sort();
        let mut out: Vec<String> = Vec::new();
        for (_, n) in found {
            if !out.contains(&n) {
                out.push(n);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::service::overpass::{overpass_query, FixtureOverpass, OverpassFixture};

    fn store() -> Arc<Store> {
        let data = "lat,lon,category,mode,distance_km,time_min\n43.1525,-2.6076,hospital,drive,0.402,0.537\n";
        let gaz = "name,lat,lon,population\nDurango,43.1689,-2.6324,\n\"Abadiño, Durango\",43.1525,-2.6076,\nIurreta,43.1789,-2.6324,\n";
        Arc::new(Store::ingest(data.as_bytes(), gaz.as_bytes()).unwrap().0)
    }

    #[test]
    fn point_at_entry_resolves_to_it() {
        let g = Geocoder::new(store(), 3.0, None);
        let r = g.geocode(GeocodeInput::Point(GeoPoint::new(43.1525, -2.6076).unwrap())).unwrap();
        assert_eq!(r.name, "Abadiño, Durango");
        assert_eq!(r.distance_km, Some(0.0));
        assert!(g.geocode(GeocodeInput::Point(GeoPoint::new(40.0, 0.0).unwrap())).is_err());
    }

    #[test]
    fn text_prefers_gazetteer() {
        let g = Geocoder::new(store(), 3.0, None);
        let r = g.geocode(GeocodeInput::Text("durango")).unwrap();
        assert_eq!((r.name.as_str(), r.source), ("Durango", GeocodeSource::Gazetteer));
        assert!(g.geocode(GeocodeInput::Text("Ermodo Kalea")).is_err());
    }

    #[test]
    fn text_falls_back_to_overpass() {
        let fx = FixtureOverpass::new([OverpassFixture {
            query: overpass_query("Ermodo Kalea"),
            response: serde_json::json!({"elements": [
                {"type": "way", "center": {"lat": 43.17, "lon": -2.631}, "tags": {"name": "Ermodo Kalea"}}
            ]}),
        }]);
        let g = Geocoder::new(store(), 3.0, Some(OverpassClient::new(Box::new(fx))));
        let r = g.geocode(GeocodeInput::Text("Ermodo Kalea")).unwrap();
        assert_eq!((r.name.as_str(), r.source, r.lat), ("Ermodo Kalea", GeocodeSource::Overpass, 43.17));
    }

    #[test]
    fn mentions_prefer_longest_names() {
        let g = Geocoder::new(store(), 3.0, None);
        assert_eq!(g.mentions("Nearest hospital from Abadiño, Durango?"), ["Abadiño, Durango"]);
        assert_eq!(g.mentions("Durango or Iurreta"), ["Durango", "Iurreta"]);
        assert!(g.mentions("Durangoaldea").is_empty());
    }
}
