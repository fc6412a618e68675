//! Places CSV / JSONL readers and writers.
//!
//! Structural problems (wrong header, wrong field count, non-numeric
//! coordinates, unknown category) abort the import with the offending line.
//! Rows that parse but fail validation (coordinates out of range, bad
//! website, repeated id) are skipped and reported as diagnostics.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{parse_website, DatasetError, Place, PlaceCategory, PlaceSet};
use crate::geo::GeoCoordinate;

pub const CSV_HEADER: [&str; 7] = ["id", "name", "lat", "lon", "category", "checkins", "website"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlacesFormat {
    Csv,
    Jsonl,
}

impl PlacesFormat {
    /// Guess from a file extension (`.jsonl`/`.ndjson` are JSONL, anything else CSV).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => PlacesFormat::Jsonl,
            _ => PlacesFormat::Csv,
        }
    }
}

impl FromStr for PlacesFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(PlacesFormat::Csv),
            "jsonl" => Ok(PlacesFormat::Jsonl),
            other => Err(format!("unknown places format {other:?} (expected csv or jsonl)")),
        }
    }
}

/// A rejected row.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    /// 1-based data row (the header is not counted).
    pub row: u64,
    /// 1-based physical line in the file.
    pub line: u64,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "row {} (line {}): {}", self.row, self.line, self.message)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ImportOutcome {
    pub places: PlaceSet,
    pub diagnostics: Vec<Diagnostic>,
}

/// JSONL record; also the serde view of a place.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaceRecord {
    pub id: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub category: PlaceCategory,
    pub checkins: u64,
    #[serde(default)]
    pub website: Option<String>,
}

impl From<&Place> for PlaceRecord {
    fn from(p: &Place) -> Self {
        PlaceRecord {
            id: p.id.clone(),
            name: p.name.clone(),
            lat: p.geo.lat(),
            lon: p.geo.lon(),
            category: p.category,
            checkins: p.checkins,
            website: p.website.as_ref().map(|u| u.to_string()),
        }
    }
}

impl PlaceRecord {
    /// Value-level validation; `Err` carries the diagnostic message.
    pub fn into_place(self) -> Result<Place, String> {
        let geo = GeoCoordinate::new(self.lat, self.lon).map_err(|e| e.to_string())?;
        let website = match self.website.as_deref() {
            None | Some("") => None,
            Some(w) => Some(parse_website(w).map_err(|e| e.to_string())?),
        };
        Ok(Place {
            id: self.id,
            name: self.name,
            geo,
            category: self.category,
            checkins: self.checkins,
            website,
        })
    }
}

pub fn import_places(path: &Path, format: PlacesFormat) -> Result<ImportOutcome, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let label = path.display().to_string();
    match format {
        PlacesFormat::Csv => read_csv(file, &label),
        PlacesFormat::Jsonl => read_jsonl(BufReader::new(file), &label),
    }
}

struct Collector {
    places: Vec<Place>,
    seen: std::collections::HashSet<String>,
    diagnostics: Vec<Diagnostic>,
}

impl Collector {
    fn new() -> Self {
        Self {
            places: Vec::new(),
            seen: Default::default(),
            diagnostics: Vec::new(),
        }
    }

    fn push(&mut self, row: u64, line: u64, record: PlaceRecord) {
        if self.seen.contains(&record.id) {
            self.diagnostics.push(Diagnostic {
                row,
                line,
                message: format!("duplicate place id {:?}", record.id),
            });
            return;
        }
        match record.into_place() {
            Ok(p) => {
                self.seen.insert(p.id.clone());
                self.places.push(p);
            }
            Err(message) => self.diagnostics.push(Diagnostic { row, line, message }),
        }
    }

    fn finish(self) -> ImportOutcome {
        ImportOutcome {
            places: PlaceSet::new(self.places).expect("ids deduplicated during import"),
            diagnostics: self.diagnostics,
        }
    }
}

pub fn read_csv<R: Read>(reader: R, label: &str) -> Result<ImportOutcome, DatasetError> {
    let schema = |line: u64, message: String| DatasetError::Schema {
        path: label.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| schema(1, e.to_string()))?.clone();
    if headers.is_empty() {
        return Ok(ImportOutcome::default());
    }
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(schema(
            1,
            format!("expected header {:?}, found {:?}", CSV_HEADER.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out = Collector::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k as u64 + 1;
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(row + 1);
            schema(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(row + 1);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let id = field(0);
        if id.is_empty() {
            return Err(schema(line, "empty id".into()));
        }
        let num = |i: usize| -> Result<f64, DatasetError> {
            field(i)
                .trim()
                .parse::<f64>()
                .map_err(|_| schema(line, format!("{} is not a number: {:?}", CSV_HEADER[i], field(i))))
        };
        let lat = num(2)?;
        let lon = num(3)?;
        let category = field(4)
            .parse::<PlaceCategory>()
            .map_err(|e| schema(line, e.to_string()))?;
        let checkins = field(5)
            .trim()
            .parse::<u64>()
            .map_err(|_| schema(line, format!("checkins is not a non-negative integer: {:?}", field(5))))?;
        let website = Some(field(6).to_string()).filter(|w| !w.is_empty());
        out.push(
            row,
            line,
            PlaceRecord {
                id: id.to_string(),
                name: field(1).to_string(),
                lat,
                lon,
                category,
                checkins,
                website,
            },
        );
    }
    Ok(out.finish())
}

pub fn read_jsonl<R: BufRead>(reader: R, label: &str) -> Result<ImportOutcome, DatasetError> {
    let mut out = Collector::new();
    let mut row = 0;
    for (k, line) in reader.lines().enumerate() {
        let lineno = k as u64 + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: label.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        let rec: PlaceRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Schema {
            path: label.to_string(),
            line: lineno,
            message: e.to_string(),
        })?;
        out.push(row, lineno, rec);
    }
    Ok(out.finish())
}

pub fn write_csv<W: Write>(places: &PlaceSet, writer: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for p in places.iter() {
        w.write_record([
            p.id.as_str(),
            p.name.as_str(),
            &p.geo.lat().to_string(),
            &p.geo.lon().to_string(),
            p.category.as_str(),
            &p.checkins.to_string(),
            p.website.as_ref().map(|u| u.as_str()).unwrap_or(""),
        ])?;
    }
    w.flush().map_err(|source| DatasetError::Io {
        path: "<csv writer>".into(),
        source,
    })?;
    Ok(())
}

pub fn write_jsonl<W: Write>(places: &PlaceSet, mut writer: W) -> Result<(), DatasetError> {
    let io = |source| DatasetError::Io {
        path: "<jsonl writer>".into(),
        source,
    };
    for p in places.iter() {
        let line = serde_json::to_string(&PlaceRecord::from(p)).expect("place record serializes");
        writeln!(writer, "{line}").map_err(io)?;
    }
    writer.flush().map_err(io)
}

pub fn export_places(places: &PlaceSet, path: &Path, format: PlacesFormat) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let w = BufWriter::new(file);
    match format {
        PlacesFormat::Csv => write_csv(places, w),
        PlacesFormat::Jsonl => write_jsonl(places, w),
    }
}
