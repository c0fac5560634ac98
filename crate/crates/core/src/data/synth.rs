use super::{DataError, Result, Series};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

pub const MIN_SYNTH_LEN: usize = 200;

/// Start of the synthetic grid (2013-11-01T00:00:00+01:00).
const SYNTH_START_MS: i64 = 1_383_260_400_000;

/// Closed-form generators, with `ε_t ~ N(0, noise_sd²)` i.i.d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthKind {
    /// `x_t = sin(2πt/period) + ε_t`.
    Sinusoid { period: f64 },
    /// `x_t = sin(2πt/period) + slope·t/len + ε_t`.
    SinusoidTrend { period: f64, slope: f64 },
    /// `x_t = phi·x_{t−1} + ε_t`, started from the stationary law.
    Ar1 { phi: f64 },
}

impl SynthKind {
    /// One day of 10-minute intervals.
    pub const DAILY: f64 = 144.0;
    /// Period used when none is given.
    pub const DEFAULT_PERIOD: f64 = 24.0;

    pub fn name(&self) -> &'static str {
        match self {
            SynthKind::Sinusoid { .. } => "sinusoid",
            SynthKind::SinusoidTrend { .. } => "sinusoid+trend",
            SynthKind::Ar1 { .. } => "ar1",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = DataError;

    /// `sinusoid`, `sinusoid+trend` or `ar1`, with default coefficients.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sinusoid" => Ok(SynthKind::Sinusoid {
                period: Self::DEFAULT_PERIOD,
            }),
            "sinusoid+trend" | "sinusoid_trend" => Ok(SynthKind::SinusoidTrend {
                period: Self::DEFAULT_PERIOD,
                slope: 1.0,
            }),
            "ar1" => Ok(SynthKind::Ar1 { phi: 0.9 }),
            other => Err(DataError::Invalid(format!(
                "unknown synthetic kind `{other}`; valid: sinusoid, sinusoid+trend, ar1"
            ))),
        }
    }
}

/// Deterministic synthetic series for a given seed (square id 0).
pub fn synthesize(kind: SynthKind, len: usize, noise_sd: f64, seed: u64) -> Result<Series> {
    if len < MIN_SYNTH_LEN {
        return Err(DataError::SynthLength(len));
    }
    let noise = Normal::new(0.0, noise_sd)
        .map_err(|e| DataError::Invalid(format!("noise_sd {noise_sd}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eps = || {
        if noise_sd == 0.0 {
            0.0
        } else {
            noise.sample(&mut rng)
        }
    };
    let values: Vec<f64> = match kind {
        SynthKind::Sinusoid { period } => (0..len)
            .map(|t| (2.0 * PI * t as f64 / period).sin() + eps())
            .collect(),
        SynthKind::SinusoidTrend { period, slope } => (0..len)
            .map(|t| (2.0 * PI * t as f64 / period).sin() + slope * t as f64 / len as f64 + eps())
            .collect(),
        SynthKind::Ar1 { phi } => {
            if !(phi.abs() < 1.0) {
                return Err(DataError::Invalid(format!(
                    "AR(1) coefficient {phi} must satisfy |phi| < 1"
                )));
            }
            let mut x = eps() / (1.0 - phi * phi).sqrt();
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                out.push(x);
                x = phi * x + eps();
            }
            out
        }
    };
    Ok(Series::dense(0, SYNTH_START_MS, values))
}
