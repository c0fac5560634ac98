use super::{DataError, Result, Series, INTERVAL_MS};
use std::collections::BTreeMap;
use std::io::BufRead;

/// Fraction of malformed lines tolerated per input.
pub const MALFORMED_LIMIT: f64 = 0.01;

const SAMPLE_LINES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRecord {
    pub square_id: u64,
    pub interval_ms: i64,
    pub country_code: i64,
    pub sms_in: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestStats {
    /// Non-blank lines seen.
    pub lines: usize,
    pub records: usize,
    /// Lines without an SMS-in value.
    pub skipped: usize,
    pub malformed: usize,
    /// `line N: reason` for the first few malformed lines.
    pub samples: Vec<String>,
}

impl IngestStats {
    pub fn merge(&mut self, other: IngestStats) {
        self.lines += other.lines;
        self.records += other.records;
        self.skipped += other.skipped;
        self.malformed += other.malformed;
        let room = SAMPLE_LINES.saturating_sub(self.samples.len());
        self.samples.extend(other.samples.into_iter().take(room));
    }
}

fn parse_line(line: &str) -> std::result::Result<Option<RawRecord>, String> {
    let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
    if fields.len() < 4 || fields.len() > 8 {
        return Err(format!(
            "expected 8 tab-separated fields, found {}",
            fields.len()
        ));
    }
    let square_id = fields[0]
        .parse::<u64>()
        .map_err(|_| format!("bad square_id `{}`", fields[0]))?;
    let interval_ms = fields[1]
        .parse::<i64>()
        .map_err(|_| format!("bad interval `{}`", fields[1]))?;
    if interval_ms.rem_euclid(INTERVAL_MS) != 0 {
        return Err(format!(
            "interval {interval_ms} is not on the 10-minute grid"
        ));
    }
    let country_code = if fields[2].is_empty() {
        0
    } else {
        fields[2]
            .parse::<i64>()
            .map_err(|_| format!("bad country code `{}`", fields[2]))?
    };
    if fields[3].is_empty() {
        return Ok(None);
    }
    let sms_in = fields[3]
        .parse::<f64>()
        .map_err(|_| format!("bad sms_in `{}`", fields[3]))?;
    if !sms_in.is_finite() || sms_in < 0.0 {
        return Err(format!("sms_in {sms_in} is not a nonnegative number"));
    }
    Ok(Some(RawRecord {
        square_id,
        interval_ms,
        country_code,
        sms_in,
    }))
}

/// Reads Milan-layout records; `source_name` labels errors.
///
/// Lines with an empty SMS-in field are skipped. Other bad lines are counted
/// and fail the whole input once they exceed [`MALFORMED_LIMIT`].
pub fn parse_milan_tsv<R: BufRead>(
    reader: R,
    source_name: &str,
) -> Result<(Vec<RawRecord>, IngestStats)> {
    let mut stats = IngestStats::default();
    let mut records = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DataError::Io {
            path: source_name.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        match parse_line(&line) {
            Ok(Some(r)) => records.push(r),
            Ok(None) => stats.skipped += 1,
            Err(reason) => {
                stats.malformed += 1;
                if stats.samples.len() < SAMPLE_LINES {
                    stats.samples.push(format!("line {}: {reason}", n + 1));
                }
            }
        }
    }
    stats.records = records.len();
    if stats.malformed as f64 > MALFORMED_LIMIT * stats.lines as f64 {
        return Err(DataError::Malformed {
            source_name: source_name.to_string(),
            malformed: stats.malformed,
            lines: stats.lines,
            samples: stats.samples,
        });
    }
    Ok((records, stats))
}

/// Per-cell observations summed over country codes.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSeries {
    pub square_id: u64,
    /// Strictly increasing intervals with their summed SMS-in.
    pub points: Vec<(i64, f64)>,
    /// Observed intervals over the intervals of the whole input's time span.
    pub coverage: f64,
    /// Last interval of the whole input.
    pub end_ms: i64,
}

/// Groups records by cell and interval, summing SMS-in over country codes.
///
/// Coverage is measured against the span from the earliest to the latest
/// interval across all cells.
pub fn aggregate(records: &[RawRecord]) -> Vec<CellSeries> {
    let mut cells: BTreeMap<u64, BTreeMap<i64, f64>> = BTreeMap::new();
    for r in records {
        *cells
            .entry(r.square_id)
            .or_default()
            .entry(r.interval_ms)
            .or_insert(0.0) += r.sms_in;
    }
    let (lo, hi) = records.iter().fold((i64::MAX, i64::MIN), |(lo, hi), r| {
        (lo.min(r.interval_ms), hi.max(r.interval_ms))
    });
    let expected = if records.is_empty() {
        1
    } else {
        ((hi - lo) / INTERVAL_MS + 1) as usize
    };
    cells
        .into_iter()
        .map(|(square_id, points)| {
            let points: Vec<(i64, f64)> = points.into_iter().collect();
            CellSeries {
                square_id,
                coverage: points.len() as f64 / expected as f64,
                points,
                end_ms: hi,
            }
        })
        .collect()
}

/// Keeps cells with `coverage ≥ threshold` and forward-fills their gaps.
///
/// Each kept series starts at the cell's first observation; later gaps take
/// the preceding value.
pub fn select_active(series: &[CellSeries], threshold: f64) -> Result<Vec<Series>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(DataError::Invalid(format!(
            "coverage threshold {threshold} not in (0, 1]"
        )));
    }
    let kept: Vec<Series> = series
        .iter()
        .filter(|c| c.coverage >= threshold)
        .map(|c| Series::fill_from(c.square_id, &c.points, c.end_ms))
        .collect();
    if kept.is_empty() {
        let best = series.iter().map(|c| c.coverage).fold(0.0, f64::max);
        return Err(DataError::EmptySelection { threshold, best });
    }
    Ok(kept)
}
