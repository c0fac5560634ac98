//! Univariate SMS-in series: ingestion, gap handling, splitting, scaling and
//! windowing into supervised pairs.

mod ingest;
mod io;
mod series;
mod synth;

pub use ingest::{
    aggregate, parse_milan_tsv, select_active, CellSeries, IngestStats, RawRecord, MALFORMED_LIMIT,
};
pub use io::{
    expand_inputs, ingest_paths, open_input, read_series_csv, write_series_csv, IngestSummary,
};
pub use series::{
    chronological_split, make_windows, pool, Normalizer, Segment, Split, SplitTag, Splits,
    WindowDataset, DEFAULT_FRACTIONS,
};
pub use synth::{synthesize, SynthKind, MIN_SYNTH_LEN};

use thiserror::Error;

/// Milliseconds between consecutive samples.
pub const INTERVAL_MS: i64 = 600_000;

/// Forward-filled runs longer than this many intervals are excluded from windows.
pub const MAX_FILL_RUN: usize = 6;

pub const DEFAULT_COVERAGE: f64 = 0.95;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}: {malformed} of {lines} lines malformed (limit 1%); first: {}", samples.join("; "))]
    Malformed {
        source_name: String,
        malformed: usize,
        lines: usize,
        samples: Vec<String>,
    },
    #[error("no input files in {0}")]
    NoInputFiles(String),
    #[error("no cells reach coverage {threshold} (best {best:.4})")]
    EmptySelection { threshold: f64, best: f64 },
    #[error("{segment} segment has {len} points, needs at least {need} for T={t}")]
    SegmentTooShort {
        segment: SplitTag,
        len: usize,
        need: usize,
        t: usize,
    },
    #[error("invalid split fractions {0:?}: {1}")]
    Fractions((f64, f64, f64), &'static str),
    #[error("normalizer needs max > min, got min = max = {0}")]
    Degenerate(f64),
    #[error("synthetic series needs length ≥ {MIN_SYNTH_LEN}, got {0}")]
    SynthLength(usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("series csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// A cell's series on the regular 10-minute grid.
///
/// `excluded[i]` marks positions inside a forward-filled run longer than
/// [`MAX_FILL_RUN`]; no window may touch them.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub square_id: u64,
    pub start_ms: i64,
    pub values: Vec<f64>,
    pub excluded: Vec<bool>,
}

impl Series {
    /// Gap-free series starting at `start_ms`.
    pub fn dense(square_id: u64, start_ms: i64, values: Vec<f64>) -> Self {
        let excluded = vec![false; values.len()];
        Self {
            square_id,
            start_ms,
            values,
            excluded,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> i64 {
        self.start_ms + index as i64 * INTERVAL_MS
    }

    /// Builds the grid series from sorted `(interval, value)` observations,
    /// forward-filling missing intervals up to `end_ms` inclusive.
    pub fn fill_from(square_id: u64, points: &[(i64, f64)], end_ms: i64) -> Self {
        let Some(&(start_ms, _)) = points.first() else {
            return Self::dense(square_id, 0, Vec::new());
        };
        let len = ((end_ms.max(points[points.len() - 1].0) - start_ms) / INTERVAL_MS) as usize + 1;
        let mut values = Vec::with_capacity(len);
        let mut filled = Vec::with_capacity(len);
        let mut next = points.iter().peekable();
        let mut last = 0.0;
        for i in 0..len {
            let t = start_ms + i as i64 * INTERVAL_MS;
            match next.peek() {
                Some(&&(pt, v)) if pt == t => {
                    last = v;
                    next.next();
                    values.push(v);
                    filled.push(false);
                }
                _ => {
                    values.push(last);
                    filled.push(true);
                }
            }
        }
        let mut excluded = vec![false; len];
        let mut i = 0;
        while i < len {
            if !filled[i] {
                i += 1;
                continue;
            }
            let run_start = i;
            while i < len && filled[i] {
                i += 1;
            }
            if i - run_start > MAX_FILL_RUN {
                excluded[run_start..i].fill(true);
            }
        }
        Self {
            square_id,
            start_ms,
            values,
            excluded,
        }
    }
}

#[cfg(test)]
mod tests;
