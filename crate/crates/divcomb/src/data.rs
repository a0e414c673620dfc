//! Wide-CSV ingestion and the seeded synthetic corpus generator.

use std::io::{Read, Write};
use std::path::Path;

use divcomb_core::series::{Frequency, TimeSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{AppError, Result};

/// Frequency, horizon and seasonal period applied to every ingested row.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesShape {
    pub frequency: Frequency,
    pub horizon: usize,
    pub seasonal_period: usize,
}

/// One parsed CSV row before series validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    /// 1-based line number.
    pub row: usize,
    pub id: String,
    pub values: Vec<f64>,
}

/// Reads one series per row: id, then observations. Trailing empty fields
/// are dropped; blank lines are skipped.
pub fn read_wide_rows<R: Read>(reader: R) -> Result<Vec<RawRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map_or(out.len() + 1, |p| p.line() as usize);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let id = record[0].trim().to_string();
        let fields: Vec<&str> = record.iter().skip(1).map(str::trim).collect();
        let used = fields.iter().rposition(|f| !f.is_empty()).map_or(0, |i| i + 1);
        if used == 0 {
            return Err(AppError::EmptySeries { row, id });
        }
        let values = fields[..used]
            .iter()
            .enumerate()
            .map(|(i, f)| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| AppError::Parse {
                        row,
                        column: i + 2,
                        message: format!("{f:?} is not a finite number"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(RawRow { row, id, values });
    }
    Ok(out)
}

/// [`read_wide_rows`] followed by series validation against `shape`.
pub fn read_wide_csv<R: Read>(reader: R, shape: &SeriesShape) -> Result<Vec<TimeSeries>> {
    read_wide_rows(reader)?
        .into_iter()
        .map(|r| {
            TimeSeries::new(
                r.id,
                shape.frequency.clone(),
                r.values,
                shape.horizon,
                shape.seasonal_period,
            )
            .map_err(|e| AppError::Parse {
                row: r.row,
                column: 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn load_wide_csv(path: &Path, shape: &SeriesShape) -> Result<Vec<TimeSeries>> {
    let file = std::fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    read_wide_csv(std::io::BufReader::new(file), shape)
}

pub fn write_wide_csv<W: Write>(writer: W, series: &[TimeSeries]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    for s in series {
        let mut row = vec![s.id.clone()];
        row.extend(s.values.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| AppError::io("<csv>", e))?;
    Ok(())
}

fn length_range(frequency: &Frequency) -> (usize, usize) {
    match frequency {
        Frequency::Yearly => (20, 60),
        Frequency::Quarterly => (40, 120),
        Frequency::Monthly => (80, 240),
        Frequency::Other(_) => (30, 90),
    }
}

/// `n` seeded series mixing trend (none, linear, damped), optional
/// sinusoidal seasonality of period `s`, and Gaussian AR(1) noise.
pub fn generate_synthetic(n: usize, frequency: &Frequency, seed: u64) -> Result<Vec<TimeSeries>> {
    let (horizon, period) = match (frequency.default_horizon(), frequency.default_period()) {
        (Some(h), Some(s)) => (h, s),
        _ => {
            return Err(AppError::Config(format!(
                "no synthetic defaults for frequency {frequency}"
            )))
        }
    };
    let prefix = frequency.as_str().chars().next().unwrap_or('S').to_ascii_uppercase();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let (lo, hi) = length_range(frequency);
    (0..n)
        .map(|i| {
            let len = rng.random_range(lo..=hi);
            let level = rng.random_range(50.0..2000.0);
            let trend_kind = rng.random_range(0..3);
            let slope = level * rng.random_range(-0.03..0.08);
            let damping: f64 = rng.random_range(0.8..0.98);
            let seasonal = period > 1 && rng.random_bool(0.7);
            let amplitude = if seasonal { level * rng.random_range(0.05..0.35) } else { 0.0 };
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let phi = rng.random_range(0.0..0.98);
            let sigma = level * rng.random_range(0.005..0.08);
            let mut noise = 0.0;
            let mut drift = 0.0;
            let mut values = Vec::with_capacity(len);
            for t in 0..len {
                drift += match trend_kind {
                    0 => 0.0,
                    1 => slope,
                    _ => slope * damping.powi(t as i32),
                };
                let season =
                    amplitude * (std::f64::consts::TAU * t as f64 / period as f64 + phase).sin();
                noise = phi * noise + sigma * std_normal.sample(&mut rng);
                values.push(level + drift + season + noise);
            }
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            if min < 10.0 {
                for v in &mut values {
                    *v += 10.0 - min;
                }
            }
            TimeSeries::new(format!("{prefix}{}", i + 1), frequency.clone(), values, horizon, period)
                .map_err(AppError::from)
        })
        .collect()
}
