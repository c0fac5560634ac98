use super::{DataError, Result, Series};
use serde::{Deserialize, Serialize};
use std::fmt;

pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.70, 0.15, 0.15);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        })
    }
}

/// Contiguous index range `[start, end)` of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub tag: SplitTag,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Split {
    pub train: Segment,
    pub val: Segment,
    pub test: Segment,
}

/// Cuts a series of length `n` at `floor(n·f₁)` and `floor(n·(f₁+f₂))`.
///
/// Every segment must hold at least `t + 1` points. An empty validation
/// segment is accepted only when `allow_empty_val` is set (no early stopping).
pub fn chronological_split(
    len: usize,
    fractions: (f64, f64, f64),
    t: usize,
    allow_empty_val: bool,
) -> Result<Split> {
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(DataError::Fractions(
            fractions,
            "each fraction must lie in [0, 1]",
        ));
    }
    if (a + b + c - 1.0).abs() > 1e-9 {
        return Err(DataError::Fractions(fractions, "fractions must sum to 1"));
    }
    // The small slack keeps e.g. 100·0.85 from landing on 84.999…
    let cut = |f: f64| ((len as f64 * f + 1e-9).floor() as usize).min(len);
    let (i, j) = (cut(a), cut(a + b));
    let split = Split {
        train: Segment {
            tag: SplitTag::Train,
            start: 0,
            end: i,
        },
        val: Segment {
            tag: SplitTag::Val,
            start: i,
            end: j,
        },
        test: Segment {
            tag: SplitTag::Test,
            start: j,
            end: len,
        },
    };
    for seg in [split.train, split.val, split.test] {
        if seg.tag == SplitTag::Val && seg.is_empty() && b == 0.0 {
            if allow_empty_val {
                continue;
            }
            return Err(DataError::Invalid(
                "an empty validation split requires early stopping to be disabled".into(),
            ));
        }
        if seg.len() < t + 1 {
            return Err(DataError::SegmentTooShort {
                segment: seg.tag,
                len: seg.len(),
                need: t + 1,
                t,
            });
        }
    }
    Ok(split)
}

/// Min-max scaling fitted on training values.
///
/// Values outside the fitted range map outside `[0, 1]`; they are not clipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: f64,
    pub max: f64,
}

impl Normalizer {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(DataError::Invalid(
                "cannot fit a normalizer on no values".into(),
            ));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(DataError::Degenerate(min));
        }
        Ok(Self { min, max })
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn transform(&self, x: f64) -> f64 {
        (x - self.min) / self.range()
    }

    pub fn inverse(&self, y: f64) -> f64 {
        y * self.range() + self.min
    }

    pub fn transform_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.transform(x)).collect()
    }
}

/// Supervised `(window, next value)` pairs from one split.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDataset {
    pub t: usize,
    pub tag: SplitTag,
    /// Row-major `len × t` inputs.
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    /// Series index of each target.
    pub target_index: Vec<usize>,
    /// Timestamp of each target.
    pub target_ms: Vec<i64>,
    /// Source cell of each sample.
    pub square_id: Vec<u64>,
}

impl WindowDataset {
    fn empty(t: usize, tag: SplitTag) -> Self {
        Self {
            t,
            tag,
            inputs: Vec::new(),
            targets: Vec::new(),
            target_index: Vec::new(),
            target_ms: Vec::new(),
            square_id: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn window(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.t..(i + 1) * self.t]
    }

    pub fn windows(&self) -> Vec<&[f64]> {
        self.inputs.chunks_exact(self.t).collect()
    }
}

/// Stride-1 windows over `values[segment]`, with `values` already scaled.
///
/// A sample is dropped when its window or target touches an excluded position.
pub fn make_windows(
    series: &Series,
    values: &[f64],
    segment: Segment,
    t: usize,
) -> Result<WindowDataset> {
    if t == 0 {
        return Err(DataError::Invalid(
            "window length must be at least 1".into(),
        ));
    }
    if segment.len() < t + 1 {
        return Err(DataError::SegmentTooShort {
            segment: segment.tag,
            len: segment.len(),
            need: t + 1,
            t,
        });
    }
    let mut ds = WindowDataset::empty(t, segment.tag);
    let mut blocked_until = segment.start;
    for target in segment.start + t..segment.end {
        for i in blocked_until.max(target - t)..=target {
            if series.excluded[i] {
                blocked_until = i + 1;
            }
        }
        if blocked_until > target - t {
            continue;
        }
        ds.inputs.extend_from_slice(&values[target - t..target]);
        ds.targets.push(values[target]);
        ds.target_index.push(target);
        ds.target_ms.push(series.timestamp(target));
        ds.square_id.push(series.square_id);
    }
    Ok(ds)
}

/// Concatenates same-split datasets from several cells.
pub fn pool(parts: Vec<WindowDataset>) -> Result<WindowDataset> {
    let mut it = parts.into_iter();
    let mut out = it
        .next()
        .ok_or_else(|| DataError::Invalid("nothing to pool".into()))?;
    for p in it {
        if p.t != out.t || p.tag != out.tag {
            return Err(DataError::Invalid(
                "pooled datasets must share T and split".into(),
            ));
        }
        out.inputs.extend(p.inputs);
        out.targets.extend(p.targets);
        out.target_index.extend(p.target_index);
        out.target_ms.extend(p.target_ms);
        out.square_id.extend(p.square_id);
    }
    Ok(out)
}

/// Split, per-cell normalizer and the three window sets of one series.
#[derive(Debug, Clone)]
pub struct Splits {
    pub split: Split,
    pub normalizer: Normalizer,
    pub train: WindowDataset,
    pub val: WindowDataset,
    pub test: WindowDataset,
}

impl Splits {
    /// Splits `series`, fits the normalizer on the training segment and windows
    /// all three segments.
    pub fn build(
        series: &Series,
        fractions: (f64, f64, f64),
        t: usize,
        allow_empty_val: bool,
    ) -> Result<Self> {
        let split = chronological_split(series.len(), fractions, t, allow_empty_val)?;
        let normalizer = Normalizer::fit(&series.values[split.train.start..split.train.end])?;
        let scaled = normalizer.transform_all(&series.values);
        let val = if split.val.is_empty() {
            WindowDataset::empty(t, SplitTag::Val)
        } else {
            make_windows(series, &scaled, split.val, t)?
        };
        Ok(Self {
            train: make_windows(series, &scaled, split.train, t)?,
            val,
            test: make_windows(series, &scaled, split.test, t)?,
            split,
            normalizer,
        })
    }
}
