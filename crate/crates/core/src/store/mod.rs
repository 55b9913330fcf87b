//! Accessibility dataset, gazetteer and the query API that tool calls target.

mod geo;
mod index;
mod ingest;
mod tools;
mod types;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

pub use geo::{haversine_km, GeoPoint, EARTH_RADIUS_KM};
pub use ingest::{
    write_dataset, write_gazetteer, IngestOptions, IngestReport, Rejection, SourceKind,
    DATASET_COLUMNS, GAZETTEER_COLUMNS,
};
pub use tools::{ExecError, ExecMode, StoreExecutor, ToolExecutor};
pub use types::{
    canonicalize_name, AccessRecord, Category, ClosestResult, GazetteerEntry, Metric, TravelMode,
};

use index::GridIndex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("invalid coordinate: {0}")]
    InvalidCoordinate(String),
    #[error("unknown {kind} value {value:?}")]
    UnknownValue { kind: &'static str, value: String },
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
    #[error("location not found: {0:?}")]
    LocationNotFound(String),
    #[error("ambiguous location {query:?}; candidates: {}", candidates.join(" | "))]
    AmbiguousLocation { query: String, candidates: Vec<String> },
    #[error("no data for {category} by {mode}")]
    NoDataForQuery { category: Category, mode: TravelMode },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A gazetteer entry together with its nearest-record metric value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdHit {
    pub name: String,
    pub point: GeoPoint,
    pub population: Option<u64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeComparison {
    /// Ascending by value, ties in walk < bike < drive order.
    pub ranking: Vec<(TravelMode, f64)>,
    /// Modes with no data for the category.
    pub missing: Vec<TravelMode>,
}

const MAX_AMBIGUOUS_CANDIDATES: usize = 10;

/// Immutable, indexed view of the dataset and gazetteer.
#[derive(Debug)]
pub struct Store {
    indices: HashMap<(Category, TravelMode), GridIndex>,
    gazetteer: Vec<GazetteerEntry>,
    by_canonical: BTreeMap<String, usize>,
    record_count: usize,
}

impl Store {
    pub fn ingest<D: Read, G: Read>(
        dataset: D,
        gazetteer: G,
    ) -> Result<(Self, IngestReport), StoreError> {
        Self::ingest_with(dataset, gazetteer, IngestOptions::default())
    }

    pub fn ingest_with<D: Read, G: Read>(
        dataset: D,
        gazetteer: G,
        opts: IngestOptions,
    ) -> Result<(Self, IngestReport), StoreError> {
        let mut report = IngestReport::default();
        let records = ingest::read_dataset(dataset, opts, &mut report)?;
        let entries = ingest::read_gazetteer(gazetteer, opts, &mut report)?;
        let store = Self::build(records, entries)?;
        log::info!(
            "ingested {} records ({} rejected), {} places ({} rejected)",
            report.records_accepted,
            report.records_rejected,
            report.gazetteer_accepted,
            report.gazetteer_rejected
        );
        Ok((store, report))
    }

    pub fn open(
        dataset: impl AsRef<Path>,
        gazetteer: impl AsRef<Path>,
    ) -> Result<(Self, IngestReport), StoreError> {
        let open = |p: &Path| {
            File::open(p).map_err(|e| StoreError::Io(format!("{}: {e}", p.display())))
        };
        Self::ingest(open(dataset.as_ref())?, open(gazetteer.as_ref())?)
    }

    /// Builds a store from already-parsed rows. Rows must satisfy the same
    /// key-uniqueness rules as file ingest; violations are errors here.
    pub fn from_parts(
        records: Vec<AccessRecord>,
        gazetteer: Vec<GazetteerEntry>,
    ) -> Result<Self, StoreError> {
        let mut seen = std::collections::HashSet::new();
        for r in &records {
            if r.distance_km < 0.0 || r.time_min < 0.0 {
                return Err(StoreError::InvalidArgument("negative distance or time".into()));
            }
            if !seen.insert((r.origin.bits(), r.category, r.mode)) {
                return Err(StoreError::InvalidArgument(format!(
                    "duplicate key {} {} {}",
                    r.origin, r.category, r.mode
                )));
            }
        }
        Self::build(records, gazetteer)
    }

    fn build(records: Vec<AccessRecord>, gazetteer: Vec<GazetteerEntry>) -> Result<Self, StoreError> {
        if records.is_empty() {
            return Err(StoreError::EmptyDataset);
        }
        let record_count = records.len();
        let mut grouped: HashMap<(Category, TravelMode), Vec<AccessRecord>> = HashMap::new();
        for r in records {
            grouped.entry((r.category, r.mode)).or_default().push(r);
        }
        let indices = grouped
            .into_iter()
            .map(|(k, v)| (k, GridIndex::build(v)))
            .collect();

        let mut gazetteer = gazetteer;
        gazetteer.sort_by_cached_key(|e| e.canonical_name());
        let mut by_canonical = BTreeMap::new();
        for (i, e) in gazetteer.iter().enumerate() {
            if by_canonical.insert(e.canonical_name(), i).is_some() {
                return Err(StoreError::InvalidArgument(format!(
                    "duplicate gazetteer name {:?}",
                    e.name
                )));
            }
        }
        Ok(Self { indices, gazetteer, by_canonical, record_count })
    }

    pub fn record_count(&self) -> usize {
        self.record_count
    }

    /// Gazetteer entries sorted by canonical name.
    pub fn gazetteer(&self) -> &[GazetteerEntry] {
        &self.gazetteer
    }

    /// All records for one (category, mode) pair, in no particular order.
    pub fn records(&self, category: Category, mode: TravelMode) -> &[AccessRecord] {
        self.indices
            .get(&(category, mode))
            .map(|i| i.records())
            .unwrap_or(&[])
    }

    /// Exact match on the canonical name, else a unique canonical prefix.
    pub fn resolve_location(&self, name: &str) -> Result<&GazetteerEntry, StoreError> {
        let key = canonicalize_name(name);
        if key.is_empty() {
            return Err(StoreError::LocationNotFound(name.to_string()));
        }
        if let Some(&i) = self.by_canonical.get(&key) {
            return Ok(&self.gazetteer[i]);
        }
        let matches: Vec<usize> = self
            .by_canonical
            .range(key.clone()..)
            .take_while(|(k, _)| k.starts_with(&key))
            .map(|(_, &i)| i)
            .take(MAX_AMBIGUOUS_CANDIDATES + 1)
            .collect();
        match matches.as_slice() {
            [] => Err(StoreError::LocationNotFound(name.to_string())),
            [only] => Ok(&self.gazetteer[*only]),
            many => Err(StoreError::AmbiguousLocation {
                query: name.to_string(),
                candidates: many
                    .iter()
                    .take(MAX_AMBIGUOUS_CANDIDATES)
                    .map(|&i| self.gazetteer[i].name.clone())
                    .collect(),
            }),
        }
    }

    /// Record for (category, mode) whose origin is nearest to `point`.
    pub fn nearest_record(
        &self,
        category: Category,
        mode: TravelMode,
        point: GeoPoint,
    ) -> Result<&AccessRecord, StoreError> {
        self.indices
            .get(&(category, mode))
            .and_then(|idx| idx.nearest(point))
            .map(|(_, r)| r)
            .ok_or(StoreError::NoDataForQuery { category, mode })
    }

    pub fn closest_at(
        &self,
        category: Category,
        mode: TravelMode,
        point: GeoPoint,
    ) -> Result<ClosestResult, StoreError> {
        let r = self.nearest_record(category, mode, point)?;
        Ok(ClosestResult { distance: r.distance_km, time: r.time_min, matched_origin: r.origin })
    }

    pub fn get_closest_distance_time(
        &self,
        category: Category,
        mode: TravelMode,
        location: &str,
    ) -> Result<ClosestResult, StoreError> {
        let entry = self.resolve_location(location)?;
        self.closest_at(category, mode, entry.point)
    }

    pub fn list_within_threshold(
        &self,
        category: Category,
        mode: TravelMode,
        metric: Metric,
        threshold: f64,
        population_max: Option<u64>,
    ) -> Result<Vec<ThresholdHit>, StoreError> {
        if threshold.is_nan() || threshold < 0.0 {
            return Err(StoreError::InvalidArgument(format!("threshold {threshold} must be >= 0")));
        }
        let Some(index) = self.indices.get(&(category, mode)) else {
            return Ok(Vec::new());
        };
        // Entries are stored in canonical-name order and the sort is stable,
        // so equal values stay ordered by canonical name.
        let mut hits: Vec<ThresholdHit> = self
            .gazetteer
            .iter()
            .filter(|e| match population_max {
                Some(max) => e.population.is_some_and(|p| p <= max),
                None => true,
            })
            .filter_map(|e| {
                let (_, r) = index.nearest(e.point)?;
                let value = r.metric(metric);
                (value <= threshold).then(|| ThresholdHit {
                    name: e.name.clone(),
                    point: e.point,
                    population: e.population,
                    value,
                })
            })
            .collect();
        hits.sort_by(|a, b| a.value.total_cmp(&b.value));
        Ok(hits)
    }

    pub fn compare_modes(
        &self,
        category: Category,
        location: &str,
        metric: Metric,
    ) -> Result<ModeComparison, StoreError> {
        let entry = self.resolve_location(location)?;
        let mut ranking = Vec::new();
        let mut missing = Vec::new();
        for &mode in TravelMode::ALL {
            match self.closest_at(category, mode, entry.point) {
                Ok(c) => ranking.push((mode, c.metric(metric))),
                Err(StoreError::NoDataForQuery { .. }) => missing.push(mode),
                Err(e) => return Err(e),
            }
        }
        if ranking.is_empty() {
            return Err(StoreError::NoDataForQuery { category, mode: TravelMode::Walk });
        }
        // Stable sort over modes visited in precedence order.
        ranking.sort_by(|a, b| a.1.total_cmp(&b.1));
        Ok(ModeComparison { ranking, missing })
    }

    /// Nearest gazetteer entry to a point; ties go to the canonical-name order.
    pub fn nearest_place(&self, point: GeoPoint) -> Option<(f64, &GazetteerEntry)> {
        self.gazetteer
            .iter()
            .map(|e| (haversine_km(point, e.point), e))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }
}
