use super::ingest::{aggregate, parse_milan_tsv, select_active, IngestStats};
use super::{DataError, Result, Series};
use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Opens a file for line reading, decompressing gzip content transparently.
pub fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    let mut file = BufReader::new(File::open(path).map_err(io_err(path))?);
    let magic = file.fill_buf().map_err(io_err(path))?;
    if magic.starts_with(&[0x1f, 0x8b]) {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(file))
    }
}

fn wildcard_match(pattern: &[u8], name: &[u8]) -> bool {
    match (pattern.first(), name.first()) {
        (None, None) => true,
        (Some(b'*'), _) => {
            wildcard_match(&pattern[1..], name)
                || (!name.is_empty() && wildcard_match(pattern, &name[1..]))
        }
        (Some(b'?'), Some(_)) => wildcard_match(&pattern[1..], &name[1..]),
        (Some(p), Some(n)) if p == n => wildcard_match(&pattern[1..], &name[1..]),
        _ => false,
    }
}

fn list_dir(dir: &Path, pattern: Option<&str>) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if !path.is_file() {
            continue;
        }
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let keep = match pattern {
            Some(p) => wildcard_match(p.as_bytes(), name.as_bytes()),
            None => !name.starts_with('.'),
        };
        if keep {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Resolves files, directories and `dir/*.txt`-style name patterns to a
/// sorted file list. Fails when an input resolves to nothing.
pub fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        let name = input.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let found = if name.contains(['*', '?']) {
            let dir = input
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            list_dir(dir, Some(name))?
        } else if input.is_dir() {
            list_dir(input, None)?
        } else {
            vec![input.clone()]
        };
        if found.is_empty() {
            return Err(DataError::NoInputFiles(input.display().to_string()));
        }
        out.extend(found);
    }
    if out.is_empty() {
        return Err(DataError::NoInputFiles("(no inputs given)".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestSummary {
    pub files: usize,
    pub stats: IngestStats,
    pub cells_seen: usize,
    pub cells_kept: usize,
}

impl IngestSummary {
    pub fn cells_dropped(&self) -> usize {
        self.cells_seen - self.cells_kept
    }
}

/// Parses every input, aggregates over country codes and keeps active cells.
pub fn ingest_paths(inputs: &[PathBuf], coverage: f64) -> Result<(Vec<Series>, IngestSummary)> {
    let files = expand_inputs(inputs)?;
    let mut summary = IngestSummary {
        files: files.len(),
        ..Default::default()
    };
    let mut records = Vec::new();
    for path in &files {
        let (recs, stats) = parse_milan_tsv(open_input(path)?, &path.display().to_string())?;
        records.extend(recs);
        summary.stats.merge(stats);
    }
    let cells = aggregate(&records);
    summary.cells_seen = cells.len();
    let kept = select_active(&cells, coverage)?;
    summary.cells_kept = kept.len();
    Ok((kept, summary))
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    square_id: u64,
    interval_ms: i64,
    sms_in: f64,
}

/// Writes the canonical `square_id,interval_ms,sms_in` file. Excluded
/// positions are omitted, so they reappear as long gaps on reading.
pub fn write_series_csv<W: Write>(writer: W, series: &[Series]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["square_id", "interval_ms", "sms_in"])
        .map_err(|e| DataError::Csv(e.to_string()))?;
    for s in series {
        for (i, (&v, &skip)) in s.values.iter().zip(&s.excluded).enumerate() {
            if skip {
                continue;
            }
            w.write_record(&[
                s.square_id.to_string(),
                s.timestamp(i).to_string(),
                v.to_string(),
            ])
            .map_err(|e| DataError::Csv(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| DataError::Csv(e.to_string()))
}

/// Reads a canonical series file, one [`Series`] per cell in id order.
/// Missing intervals are forward-filled under the usual exclusion rule.
pub fn read_series_csv<R: Read>(reader: R) -> Result<Vec<Series>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r
        .headers()
        .map_err(|e| DataError::Csv(e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["square_id", "interval_ms", "sms_in"] {
        return Err(DataError::Csv(format!(
            "expected header square_id,interval_ms,sms_in, found {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut cells: BTreeMap<u64, BTreeMap<i64, f64>> = BTreeMap::new();
    for (n, row) in r.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| DataError::Csv(format!("row {}: {e}", n + 2)))?;
        if row.interval_ms.rem_euclid(super::INTERVAL_MS) != 0 {
            return Err(DataError::Csv(format!(
                "row {}: interval {} off the 10-minute grid",
                n + 2,
                row.interval_ms
            )));
        }
        if cells
            .entry(row.square_id)
            .or_default()
            .insert(row.interval_ms, row.sms_in)
            .is_some()
        {
            return Err(DataError::Csv(format!(
                "row {}: duplicate interval for cell {}",
                n + 2,
                row.square_id
            )));
        }
    }
    Ok(cells
        .into_iter()
        .map(|(id, points)| {
            let points: Vec<(i64, f64)> = points.into_iter().collect();
            let end = points[points.len() - 1].0;
            Series::fill_from(id, &points, end)
        })
        .collect())
}
