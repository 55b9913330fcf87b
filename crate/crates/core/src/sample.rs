//! Deterministic synthetic region for demos, tests and benchmarks.
//!
//! Places are scattered around real municipality centres of the Durango
//! area; service locations are random; travel distance is the straight-line
//! distance times a per-mode detour factor and time follows from a per-mode
//! speed. Two records are pinned so the demo reproduces the worked example:
//! the nearest hospital by car from "Durango" and from "Abadiño, Durango" is
//! 0.402 km and 0.537 min away.

use std::collections::HashSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::store::{
    haversine_km, write_dataset, write_gazetteer, AccessRecord, Category, GazetteerEntry, GeoPoint, Store, StoreError,
    TravelMode,
};

pub const DATASET_FILE: &str = "dataset.csv";
pub const GAZETTEER_FILE: &str = "gazetteer.csv";

/// (name, lat, lon, population)
const MUNICIPALITIES: [(&str, f64, f64, u64); 18] = [
    ("Durango", 43.1706, -2.6316, 30_800),
    ("Iurreta", 43.1790, -2.6330, 4_300),
    ("Amorebieta-Etxano", 43.2193, -2.7336, 19_600),
    ("Elorrio", 43.1291, -2.5421, 7_500),
    ("Berriz", 43.1757, -2.5747, 4_800),
    ("Garai", 43.1930, -2.6080, 340),
    ("Zaldibar", 43.1700, -2.5450, 3_000),
    ("Mañaria", 43.1370, -2.6610, 500),
    ("Izurtza", 43.1560, -2.6380, 290),
    ("Atxondo", 43.1290, -2.5870, 1_450),
    ("Otxandio", 43.0400, -2.6550, 1_400),
    ("Dima", 43.1090, -2.7160, 1_400),
    ("Igorre", 43.1650, -2.7770, 4_200),
    ("Lemoa", 43.2080, -2.7750, 3_500),
    ("Bedia", 43.2090, -2.8000, 1_100),
    ("Galdakao", 43.2300, -2.8420, 29_000),
    ("Ermua", 43.1870, -2.5010, 15_800),
    ("Mallabia", 43.1900, -2.5290, 1_200),
];

const BARRIOS: [&str; 40] = [
    "Andra Mari", "San Agustin", "Santa Ana", "Zumalakarregi", "Tabira", "Landako", "Intxaurrondo", "Olleria",
    "Kurutziaga", "Mikeldi", "Arripausueta", "Larrinaga", "Goiuria", "Zelaieta", "Muntsaratz", "Traña", "Matiena",
    "Gaztañaga", "Astola", "Aramotz", "Ibarra", "Elexalde", "Goikoetxea", "Bekoetxea", "Urkiola", "Mendiola",
    "Arriandi", "Olakueta", "Ugarte", "Etxebarria", "Zubiaur", "Lariz", "Errotaberri", "Altamira", "Santa Apolonia",
    "Berdio", "Murueta", "Olabarri", "San Roke", "Lekunberri",
];

/// Pinned example place and its nearest hospital by car.
pub const EXAMPLE_PLACE: &str = "Abadiño, Durango";
pub const EXAMPLE_POINT: (f64, f64) = (43.1525, -2.6076);
pub const EXAMPLE_HOSPITAL_DRIVE: (f64, f64) = (0.402, 0.537);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSpec {
    pub seed: u64,
    /// Gazetteer size, at most 739 (the example place, 18 towns, 720 barrios).
    pub locations: usize,
    /// Spacing of the extra record origins laid over the region.
    pub grid_step_km: f64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self { seed: 17, locations: 358, grid_step_km: 1.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub records: Vec<AccessRecord>,
    pub gazetteer: Vec<GazetteerEntry>,
}

/// Detour factor over the straight line and mean speed in km/h.
fn mode_profile(mode: TravelMode) -> (f64, f64) {
    match mode {
        TravelMode::Walk => (1.25, 4.8),
        TravelMode::Bike => (1.2, 15.0),
        TravelMode::Drive => (1.35, 38.0),
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn point(lat: f64, lon: f64) -> GeoPoint {
    GeoPoint::new(lat, lon).expect("sample coordinates are in range")
}

/// Offsets a point by up to `radius_km` in a random direction.
fn jitter(rng: &mut ChaCha8Rng, lat: f64, lon: f64, radius_km: f64) -> GeoPoint {
    let r = radius_km * rng.random::<f64>().sqrt();
    let theta = rng.random::<f64>() * std::f64::consts::TAU;
    let dlat = r * theta.sin() / 111.2;
    let dlon = r * theta.cos() / (111.2 * lat.to_radians().cos());
    point(round6(lat + dlat), round6(lon + dlon))
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn gazetteer(rng: &mut ChaCha8Rng, n: usize) -> Vec<GazetteerEntry> {
    let mut out = vec![GazetteerEntry {
        name: EXAMPLE_PLACE.into(),
        point: point(EXAMPLE_POINT.0, EXAMPLE_POINT.1),
        population: Some(7_600),
    }];
    for (name, lat, lon, pop) in MUNICIPALITIES {
        out.push(GazetteerEntry { name: name.into(), point: point(lat, lon), population: Some(pop) });
    }
    let per_town: Vec<Vec<&str>> = MUNICIPALITIES
        .iter()
        .map(|_| {
            let mut b = BARRIOS.to_vec();
            b.shuffle(rng);
            b
        })
        .collect();
    // Round-robin over towns so any prefix of the list is spread out.
    let mut round = 0;
    while out.len() < n && round < BARRIOS.len() {
        for (i, (town, lat, lon, pop)) in MUNICIPALITIES.iter().enumerate() {
            if out.len() >= n {
                break;
            }
            let barrio = per_town[i][round];
            let population = (pop / 20).max(50) + rng.random_range(0..400);
            out.push(GazetteerEntry {
                name: format!("{barrio}, {town}"),
                point: jitter(rng, *lat, *lon, 2.5),
                population: Some(population),
            });
        }
        round += 1;
    }
    out.truncate(n);
    out
}

fn services(rng: &mut ChaCha8Rng, category: Category) -> Vec<GeoPoint> {
    let towns = &MUNICIPALITIES;
    match category {
        // Regional hospitals sit in the larger towns only.
        Category::Hospital => ["Durango", "Galdakao", "Amorebieta-Etxano", "Ermua"]
            .iter()
            .map(|n| {
                let (_, lat, lon, _) = towns.iter().find(|t| t.0 == *n).expect("known town");
                jitter(rng, *lat, *lon, 0.8)
            })
            .collect(),
        Category::Supermarket => towns
            .iter()
            .flat_map(|(_, lat, lon, pop)| {
                let k = 1 + (*pop / 6_000) as usize;
                (0..k).map(|_| (*lat, *lon)).collect::<Vec<_>>()
            })
            .map(|(lat, lon)| jitter(rng, lat, lon, 1.2))
            .collect(),
        Category::Pharmacy => towns
            .iter()
            .filter(|t| t.3 >= 400)
            .flat_map(|(_, lat, lon, pop)| {
                let k = 1 + (*pop / 4_000) as usize;
                (0..k).map(|_| (*lat, *lon)).collect::<Vec<_>>()
            })
            .map(|(lat, lon)| jitter(rng, lat, lon, 1.0))
            .collect(),
    }
}

/// Builds the synthetic region. Same `SampleSpec`, same output.
pub fn synth_sample(spec: &SampleSpec) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gazetteer = gazetteer(&mut rng, spec.locations.max(1));

    let mut origins: Vec<GeoPoint> = gazetteer.iter().map(|e| e.point).collect();
    let (lat0, lat1) = (43.03, 43.24);
    let (lon0, lon1) = (-2.85, -2.49);
    let dlat = spec.grid_step_km / 111.2;
    let dlon = spec.grid_step_km / (111.2 * 43.15f64.to_radians().cos());
    let mut lat = lat0;
    while lat <= lat1 {
        let mut lon = lon0;
        while lon <= lon1 {
            origins.push(point(round6(lat), round6(lon)));
            lon += dlon;
        }
        lat += dlat;
    }
    let mut seen = HashSet::new();
    origins.retain(|p| seen.insert((p.lat.to_bits(), p.lon.to_bits())));

    let pinned: Vec<GeoPoint> = gazetteer
        .iter()
        .filter(|e| e.name == EXAMPLE_PLACE || e.name == "Durango")
        .map(|e| e.point)
        .collect();

    let mut records = Vec::new();
    for &category in Category::ALL {
        let sites = services(&mut rng, category);
        for &origin in &origins {
            let straight = sites.iter().map(|s| haversine_km(origin, *s)).fold(f64::INFINITY, f64::min);
            for &mode in TravelMode::ALL {
                let (detour, speed) = mode_profile(mode);
                let (mut distance_km, mut time_min) = {
                    let d = round3(straight * detour);
                    (d, round3(d / speed * 60.0))
                };
                if category == Category::Hospital && mode == TravelMode::Drive && pinned.contains(&origin) {
                    (distance_km, time_min) = EXAMPLE_HOSPITAL_DRIVE;
                }
                records.push(AccessRecord { origin, category, mode, distance_km, time_min });
            }
        }
    }
    Sample { records, gazetteer }
}

impl Sample {
    pub fn store(&self) -> Result<Store, StoreError> {
        Store::from_parts(self.records.clone(), self.gazetteer.clone())
    }

    /// Writes `dataset.csv` and `gazetteer.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), StoreError> {
        let io = |e: std::io::Error| StoreError::Io(e.to_string());
        std::fs::create_dir_all(dir).map_err(io)?;
        write_dataset(BufWriter::new(File::create(dir.join(DATASET_FILE)).map_err(io)?), &self.records)?;
        write_gazetteer(BufWriter::new(File::create(dir.join(GAZETTEER_FILE)).map_err(io)?), &self.gazetteer)
    }
}
