//! Time-series representation, train/test splitting and network input
//! preparation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::math;

/// Sampling frequency of a series.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Frequency {
    Yearly,
    Quarterly,
    Monthly,
    Other(String),
}

impl Frequency {
    /// Default forecast horizon (6 / 8 / 18).
    pub fn default_horizon(&self) -> Option<usize> {
        match self {
            Frequency::Yearly => Some(6),
            Frequency::Quarterly => Some(8),
            Frequency::Monthly => Some(18),
            Frequency::Other(_) => None,
        }
    }

    /// Default seasonal period (1 / 4 / 12).
    pub fn default_period(&self) -> Option<usize> {
        match self {
            Frequency::Yearly => Some(1),
            Frequency::Quarterly => Some(4),
            Frequency::Monthly => Some(12),
            Frequency::Other(_) => None,
        }
    }

    /// Default network input length (32 / 64 / 128).
    pub fn default_input_length(&self) -> Option<usize> {
        match self {
            Frequency::Yearly => Some(32),
            Frequency::Quarterly => Some(64),
            Frequency::Monthly => Some(128),
            Frequency::Other(_) => None,
        }
    }

    /// λ defaults for the orthogonality term, one per frequency.
    pub fn default_lambda(&self) -> Option<f64> {
        match self {
            Frequency::Yearly => Some(1e-1),
            Frequency::Quarterly => Some(5e-3),
            Frequency::Monthly => Some(1e-2),
            Frequency::Other(_) => None,
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Frequency::Yearly => "yearly",
            Frequency::Quarterly => "quarterly",
            Frequency::Monthly => "monthly",
            Frequency::Other(label) => label,
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Frequency {
    type Err = core::convert::Infallible;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "yearly" | "y" => Frequency::Yearly,
            "quarterly" | "q" => Frequency::Quarterly,
            "monthly" | "m" => Frequency::Monthly,
            _ => Frequency::Other(String::from(s)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub id: String,
    pub frequency: Frequency,
    pub values: Vec<f64>,
    pub horizon: usize,
    pub seasonal_period: usize,
}

impl TimeSeries {
    /// Builds a series and checks its invariants: horizon and period at
    /// least 1, every value finite, length at least `max(3, s + 2)`.
    pub fn new(
        id: impl Into<String>,
        frequency: Frequency,
        values: Vec<f64>,
        horizon: usize,
        seasonal_period: usize,
    ) -> Result<Self> {
        if horizon == 0 || seasonal_period == 0 {
            return Err(Error::InvalidArgument(
                "horizon and seasonal period must be positive".into(),
            ));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!(
                "non-finite observation at position {bad}"
            )));
        }
        let min_len = core::cmp::max(3, seasonal_period + 2);
        if values.len() < min_len {
            return Err(Error::InsufficientHistory {
                method: "series",
                needed: min_len,
                got: values.len(),
            });
        }
        Ok(Self {
            id: id.into(),
            frequency,
            values,
            horizon,
            seasonal_period,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A series cut into the fitting window and the held-out horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSeries {
    pub train: Vec<f64>,
    pub test: Vec<f64>,
}

/// Fixed-length standardized network input.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedInput {
    pub data: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

/// Holds out the last `horizon` observations as the test window.
pub fn split_train_test(series: &TimeSeries) -> Result<SplitSeries> {
    let n = series.values.len();
    if n <= series.horizon {
        return Err(Error::SeriesTooShort {
            len: n,
            horizon: series.horizon,
        });
    }
    let (train, test) = series.values.split_at(n - series.horizon);
    Ok(SplitSeries {
        train: train.to_vec(),
        test: test.to_vec(),
    })
}

/// Z-scores `values` with the population standard deviation.
///
/// A constant input maps to all zeros with `sd = 0`.
pub fn standardize(values: &[f64]) -> PreparedInput {
    let mean = math::mean(values);
    let var = if values.is_empty() {
        0.0
    } else {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64
    };
    let sd = math::sqrt(var);
    let data = if sd > 0.0 {
        values.iter().map(|v| (v - mean) / sd).collect()
    } else {
        vec![0.0; values.len()]
    };
    PreparedInput {
        data,
        mean,
        sd: if sd > 0.0 { sd } else { 0.0 },
    }
}

/// Pre-pads with zeros or drops the oldest observations to reach length `len`.
pub fn pad_or_truncate(values: &[f64], len: usize) -> Vec<f64> {
    if values.len() >= len {
        values[values.len() - len..].to_vec()
    } else {
        let mut out = vec![0.0; len - values.len()];
        out.extend_from_slice(values);
        out
    }
}

/// Standardizes the fitting window, then pads or truncates it to `len`.
pub fn prepare_input(train: &[f64], len: usize) -> PreparedInput {
    let z = standardize(train);
    PreparedInput {
        data: pad_or_truncate(&z.data, len),
        mean: z.mean,
        sd: z.sd,
    }
}
