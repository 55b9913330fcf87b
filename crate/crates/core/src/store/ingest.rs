use std::collections::HashSet;
use std::io::Read;

use log::warn;
use serde::Serialize;

use super::types::canonicalize_name;
use super::{AccessRecord, Category, GazetteerEntry, GeoPoint, StoreError, TravelMode};

pub const DATASET_COLUMNS: [&str; 6] = ["lat", "lon", "category", "mode", "distance_km", "time_min"];
pub const GAZETTEER_COLUMNS: [&str; 4] = ["name", "lat", "lon", "population"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Dataset,
    Gazetteer,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub source: SourceKind,
    /// 1-based line number in the source, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestReport {
    pub records_accepted: usize,
    pub records_rejected: usize,
    pub gazetteer_accepted: usize,
    pub gazetteer_rejected: usize,
    pub rejections: Vec<Rejection>,
}

impl IngestReport {
    fn reject(&mut self, source: SourceKind, line: u64, reason: String) {
        warn!("rejected {source:?} line {line}: {reason}");
        match source {
            SourceKind::Dataset => self.records_rejected += 1,
            SourceKind::Gazetteer => self.gazetteer_rejected += 1,
        }
        self.rejections.push(Rejection { source, line, reason });
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub delimiter: u8,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self { delimiter: b',' }
    }
}

/// Maps each required column name onto its position in the header.
fn column_positions(
    headers: &csv::StringRecord,
    required: &[&str],
) -> Result<Vec<usize>, StoreError> {
    required
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name))
                .ok_or_else(|| StoreError::MissingColumn(name.to_string()))
        })
        .collect()
}

fn reader<R: Read>(src: R, opts: IngestOptions) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(src)
}

fn line_of(row: &Result<csv::StringRecord, csv::Error>, index: usize) -> u64 {
    row.as_ref()
        .ok()
        .and_then(|r| r.position())
        .map(|p| p.line())
        .unwrap_or(index as u64 + 2)
}

fn parse_f64(field: &str, what: &str) -> Result<f64, String> {
    let v: f64 = field
        .parse()
        .map_err(|_| format!("unparsable {what} {field:?}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite {what} {field:?}"))
    }
}

fn parse_record(row: &csv::StringRecord, cols: &[usize]) -> Result<AccessRecord, String> {
    let lat = parse_f64(&row[cols[0]], "lat")?;
    let lon = parse_f64(&row[cols[1]], "lon")?;
    let origin = GeoPoint::new(lat, lon).map_err(|e| e.to_string())?;
    let category: Category = row[cols[2]].parse().map_err(|e: StoreError| e.to_string())?;
    let mode: TravelMode = row[cols[3]].parse().map_err(|e: StoreError| e.to_string())?;
    let distance_km = parse_f64(&row[cols[4]], "distance_km")?;
    let time_min = parse_f64(&row[cols[5]], "time_min")?;
    if distance_km < 0.0 || time_min < 0.0 {
        return Err("negative distance or time".into());
    }
    Ok(AccessRecord { origin, category, mode, distance_km, time_min })
}

fn parse_entry(row: &csv::StringRecord, cols: &[usize]) -> Result<GazetteerEntry, String> {
    let name = row[cols[0]].trim();
    if name.is_empty() {
        return Err("empty name".into());
    }
    let lat = parse_f64(&row[cols[1]], "lat")?;
    let lon = parse_f64(&row[cols[2]], "lon")?;
    let point = GeoPoint::new(lat, lon).map_err(|e| e.to_string())?;
    let pop = row[cols[3]].trim();
    let population = if pop.is_empty() {
        None
    } else {
        Some(pop.parse::<u64>().map_err(|_| format!("unparsable population {pop:?}"))?)
    };
    Ok(GazetteerEntry { name: name.to_string(), point, population })
}

pub(crate) fn read_dataset<R: Read>(
    src: R,
    opts: IngestOptions,
    report: &mut IngestReport,
) -> Result<Vec<AccessRecord>, StoreError> {
    let mut rdr = reader(src, opts);
    let headers = rdr.headers().map_err(|e| StoreError::Csv(e.to_string()))?.clone();
    let cols = column_positions(&headers, &DATASET_COLUMNS)?;
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = line_of(&row, i);
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                report.reject(SourceKind::Dataset, line, e.to_string());
                continue;
            }
        };
        if row.len() != headers.len() {
            report.reject(
                SourceKind::Dataset,
                line,
                format!("expected {} fields, found {}", headers.len(), row.len()),
            );
            continue;
        }
        match parse_record(&row, &cols) {
            Ok(r) => records.push((line, r)),
            Err(reason) => report.reject(SourceKind::Dataset, line, reason),
        }
    }
    let mut seen = HashSet::new();
    let mut accepted = Vec::with_capacity(records.len());
    for (line, r) in records {
        if seen.insert((r.origin.bits(), r.category, r.mode)) {
            accepted.push(r);
        } else {
            report.reject(
                SourceKind::Dataset,
                line,
                format!("duplicate key {} {} {}", r.origin, r.category, r.mode),
            );
        }
    }
    report.records_accepted = accepted.len();
    Ok(accepted)
}

pub(crate) fn read_gazetteer<R: Read>(
    src: R,
    opts: IngestOptions,
    report: &mut IngestReport,
) -> Result<Vec<GazetteerEntry>, StoreError> {
    let mut rdr = reader(src, opts);
    let headers = rdr.headers().map_err(|e| StoreError::Csv(e.to_string()))?.clone();
    let cols = column_positions(&headers, &GAZETTEER_COLUMNS)?;
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = line_of(&row, i);
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                report.reject(SourceKind::Gazetteer, line, e.to_string());
                continue;
            }
        };
        if row.len() != headers.len() {
            report.reject(
                SourceKind::Gazetteer,
                line,
                format!("expected {} fields, found {}", headers.len(), row.len()),
            );
            continue;
        }
        match parse_entry(&row, &cols) {
            Ok(e) if !seen.insert(canonicalize_name(&e.name)) => {
                report.reject(SourceKind::Gazetteer, line, format!("duplicate name {:?}", e.name))
            }
            Ok(e) => entries.push(e),
            Err(reason) => report.reject(SourceKind::Gazetteer, line, reason),
        }
    }
    report.gazetteer_accepted = entries.len();
    Ok(entries)
}

/// Writes a gazetteer in the ingest column format.
pub fn write_gazetteer<W: std::io::Write>(
    out: W,
    entries: &[GazetteerEntry],
) -> Result<(), StoreError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| StoreError::Csv(e.to_string());
    w.write_record(GAZETTEER_COLUMNS).map_err(io)?;
    for e in entries {
        let pop = e.population.map(|p| p.to_string()).unwrap_or_default();
        w.write_record([e.name.clone(), e.point.lat.to_string(), e.point.lon.to_string(), pop])
            .map_err(io)?;
    }
    w.flush().map_err(|e| StoreError::Io(e.to_string()))
}

/// Writes access records in the ingest column format.
pub fn write_dataset<W: std::io::Write>(
    out: W,
    records: &[AccessRecord],
) -> Result<(), StoreError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| StoreError::Csv(e.to_string());
    w.write_record(DATASET_COLUMNS).map_err(io)?;
    for r in records {
        w.write_record([
            r.origin.lat.to_string(),
            r.origin.lon.to_string(),
            r.category.to_string(),
            r.mode.to_string(),
            r.distance_km.to_string(),
            r.time_min.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| StoreError::Io(e.to_string()))
}
