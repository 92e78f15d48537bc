//! Line-delimited JSON readers and writers.
//!
//! * transactions: `{"user_id", "merchant", "store_id"}`
//! * seeds: `{"merchant", "store_id", "lat", "lon"}`
//! * results: `{"merchant", "store_id", "lat", "lon", "objective", "n_neighbors", "method"}`
//!
//! Identifier fields accept JSON strings or integers. Blank lines are ignored.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, project, unproject, GeoPoint, PlanarPoint, Region};
use crate::sharing::{StoreRef, TransactionRecord};
use crate::solver::InferenceResult;

/// Ingestion fails when more than this fraction of lines is malformed.
pub const MAX_MALFORMED_FRACTION: f64 = 0.10;

/// Seeds closer than this are treated as the same location.
pub const SEED_CONFLICT_M: f64 = 1.0;

fn ident<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Ident {
        Text(String),
        Signed(i64),
        Unsigned(u64),
    }
    Ok(match Ident::deserialize(d)? {
        Ident::Text(s) => s,
        Ident::Signed(i) => i.to_string(),
        Ident::Unsigned(u) => u.to_string(),
    })
}

#[derive(Deserialize)]
struct TransactionLine {
    #[serde(deserialize_with = "ident")]
    user_id: String,
    #[serde(deserialize_with = "ident")]
    merchant: String,
    #[serde(deserialize_with = "ident")]
    store_id: String,
}

#[derive(Serialize)]
struct TransactionOut<'a> {
    user_id: &'a str,
    merchant: &'a str,
    store_id: &'a str,
}

#[derive(Serialize, Deserialize)]
struct SeedLine {
    #[serde(deserialize_with = "ident")]
    merchant: String,
    #[serde(deserialize_with = "ident")]
    store_id: String,
    lat: f64,
    lon: f64,
}

/// One row of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultLine {
    pub merchant: String,
    pub store_id: String,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub objective: Option<f64>,
    pub n_neighbors: usize,
    pub method: String,
}

/// Counts gathered while streaming a transactions file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub lines: usize,
    pub records: usize,
    pub malformed: usize,
    first_malformed: Option<(usize, String)>,
}

/// Streaming transaction reader. Malformed lines are skipped and counted;
/// call [`TransactionReader::finish`] once the iterator is drained to apply
/// the malformed-line limit.
pub struct TransactionReader<R> {
    path: PathBuf,
    lines: std::io::Lines<R>,
    line_no: usize,
    stats: IngestStats,
    io_error: Option<std::io::Error>,
}

impl<R: BufRead> TransactionReader<R> {
    pub fn new(path: impl Into<PathBuf>, reader: R) -> Self {
        Self {
            path: path.into(),
            lines: reader.lines(),
            line_no: 0,
            stats: IngestStats::default(),
            io_error: None,
        }
    }

    fn reject(&mut self, reason: String) {
        self.stats.malformed += 1;
        if self.stats.first_malformed.is_none() {
            self.stats.first_malformed = Some((self.line_no, reason));
        }
    }

    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    pub fn finish(self) -> Result<IngestStats> {
        if let Some(e) = self.io_error {
            return Err(Error::io(self.path, e));
        }
        let s = self.stats;
        if s.lines > 0 && s.malformed as f64 > MAX_MALFORMED_FRACTION * s.lines as f64 {
            let (first_line, first_reason) = s.first_malformed.clone().unwrap_or_default();
            return Err(Error::TooManyMalformed {
                path: self.path,
                malformed: s.malformed,
                total: s.lines,
                first_line,
                first_reason,
            });
        }
        Ok(s)
    }
}

impl<R: BufRead> Iterator for TransactionReader<R> {
    type Item = TransactionRecord;

    fn next(&mut self) -> Option<TransactionRecord> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => {
                    self.io_error = Some(e);
                    return None;
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            self.stats.lines += 1;
            match serde_json::from_str::<TransactionLine>(&line) {
                Ok(t) => {
                    let rec = TransactionRecord::new(t.user_id, t.merchant, t.store_id);
                    if let Some(field) = rec.missing_field() {
                        self.reject(format!("empty {field}"));
                        continue;
                    }
                    self.stats.records += 1;
                    return Some(rec);
                }
                Err(e) => self.reject(e.to_string()),
            }
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn load_transactions(path: impl AsRef<Path>) -> Result<TransactionReader<BufReader<File>>> {
    let path = path.as_ref();
    Ok(TransactionReader::new(path, open(path)?))
}

/// Reads seed locations and projects them into the region plane.
///
/// Exact duplicates collapse; two entries for one store more than a meter
/// apart are an error, as is any unparsable line.
pub fn read_seed_locations(
    path: &Path,
    reader: impl BufRead,
    region: &Region,
) -> Result<BTreeMap<StoreRef, PlanarPoint>> {
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::BadRecord {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };
        let seed: SeedLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if seed.merchant.is_empty() || seed.store_id.is_empty() {
            return Err(bad("empty merchant or store_id".into()));
        }
        let geo = GeoPoint::new(seed.lat, seed.lon).map_err(|e| bad(e.to_string()))?;
        let p = project(geo, region);
        let store = StoreRef::new(seed.merchant, seed.store_id);
        if let Some(&prev) = out.get(&store) {
            let d = dist(prev, p);
            if d > SEED_CONFLICT_M {
                return Err(Error::SeedConflict {
                    path: path.to_path_buf(),
                    line: line_no,
                    store,
                    distance: d,
                });
            }
            continue;
        }
        out.insert(store, p);
    }
    Ok(out)
}

pub fn load_seed_locations(
    path: impl AsRef<Path>,
    region: &Region,
) -> Result<BTreeMap<StoreRef, PlanarPoint>> {
    let path = path.as_ref();
    read_seed_locations(path, open(path)?, region)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_lines<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for row in rows {
        serde_json::to_writer(&mut w, &row).map_err(|e| Error::Internal(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_transactions(path: &Path, records: &[TransactionRecord]) -> Result<()> {
    write_lines(
        path,
        records.iter().map(|r| TransactionOut {
            user_id: &r.user_id,
            merchant: &r.merchant,
            store_id: &r.store_id,
        }),
    )
}

/// Writes planar locations as geographic seed lines, in store-key order.
pub fn write_seeds(
    path: &Path,
    locations: &BTreeMap<StoreRef, PlanarPoint>,
    region: &Region,
) -> Result<()> {
    let rows = locations
        .iter()
        .map(|(s, &p)| {
            let g = unproject(p, region)?;
            Ok(SeedLine {
                merchant: s.merchant.clone(),
                store_id: s.store_id.clone(),
                lat: g.lat(),
                lon: g.lon(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_lines(path, rows)
}

pub fn result_line(r: &InferenceResult, region: &Region) -> Result<ResultLine> {
    let geo = r.solution.location.map(|p| unproject(p, region)).transpose()?;
    Ok(ResultLine {
        merchant: r.store.merchant.clone(),
        store_id: r.store.store_id.clone(),
        lat: geo.map(|g| g.lat()),
        lon: geo.map(|g| g.lon()),
        objective: r.solution.objective,
        n_neighbors: r.solution.n_neighbors,
        method: r.solution.method.as_str().to_string(),
    })
}

/// Serialises one result without a trailing newline.
pub fn to_json_line(line: &ResultLine) -> Result<String> {
    serde_json::to_string(line).map_err(|e| Error::Internal(e.to_string()))
}

/// Writes results sorted by store key.
pub fn write_results(path: &Path, results: &[InferenceResult], region: &Region) -> Result<()> {
    let mut sorted: Vec<&InferenceResult> = results.iter().collect();
    sorted.sort_by(|a, b| a.store.cmp(&b.store));
    let rows = sorted
        .into_iter()
        .map(|r| result_line(r, region))
        .collect::<Result<Vec<_>>>()?;
    write_lines(path, rows)
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultLine>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::BadRecord {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}
