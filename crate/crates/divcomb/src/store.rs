//! Metadata persisted as one CSV file per concern under `metadata/`.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use divcomb_core::net::TrainingSample;
use divcomb_core::record::MetadataRecord;
use divcomb_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

/// Run-level facts stored next to the per-series files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub frequency: String,
    pub horizon: usize,
    pub seasonal_period: usize,
    pub input_length: usize,
    pub pool: Vec<String>,
    pub tau: Option<f64>,
    pub records: usize,
    pub skipped: Vec<Skipped>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub id: String,
    pub code: String,
    pub reason: String,
}

fn writer(dir: &Path, name: &str, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| AppError::io(&path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header)?;
    Ok(w)
}

fn finish(mut w: csv::Writer<BufWriter<File>>) -> Result<()> {
    w.flush().map_err(|e| AppError::io("<metadata>", e))
}

fn num(v: f64) -> String {
    v.to_string()
}

/// Writes every record plus `summary.json` into `dir`.
pub fn write_metadata(dir: &Path, summary: &Summary, records: &[MetadataRecord]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let methods = &summary.pool;
    let mut forecasts = writer(dir, "forecasts.csv", &["series_id", "h", "method", "value"])?;
    let mut errors = writer(dir, "errors.csv", &["series_id", "h", "method", "value"])?;
    let mut actuals = writer(dir, "actuals.csv", &["series_id", "h", "value"])?;
    let mut q = writer(dir, "q.csv", &["series_id", "row", "col", "value"])?;
    let mut c = writer(dir, "c.csv", &["series_id", "method", "value"])?;
    let mut alpha = writer(dir, "alpha.csv", &["series_id", "alpha", "tau"])?;
    let mut xstar = writer(dir, "xstar.csv", &["series_id", "method", "value"])?;
    let mut labels = writer(dir, "labels.csv", &["series_id", "method", "label"])?;
    let mut header = vec!["series_id".to_string(), "mean".into(), "sd".into()];
    header.extend((0..summary.input_length).map(|t| format!("x{t}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut inputs = writer(dir, "inputs.csv", &header_refs)?;

    for r in records {
        let id = r.id.as_str();
        for h in 0..r.forecasts.rows() {
            let hs = (h + 1).to_string();
            for (m, name) in methods.iter().enumerate() {
                forecasts.write_record([id, &hs, name, &num(r.forecasts[(h, m)])])?;
                errors.write_record([id, &hs, name, &num(r.errors[(h, m)])])?;
            }
            actuals.write_record([id, &hs, &num(r.test[h])])?;
        }
        let lb = &r.labels;
        for i in 0..lb.q.rows() {
            for j in 0..lb.q.cols() {
                q.write_record([id, &i.to_string(), &j.to_string(), &num(lb.q[(i, j)])])?;
            }
        }
        for (m, name) in methods.iter().enumerate() {
            c.write_record([id, name, &num(lb.c[m])])?;
            xstar.write_record([id, name, &num(lb.x_star[m])])?;
            labels.write_record([id, name, &lb.labels[m].to_string()])?;
        }
        alpha.write_record([id, &num(lb.alpha), &num(lb.tau)])?;
        let mut row = vec![r.id.clone(), num(r.input.mean), num(r.input.sd)];
        row.extend(r.input.data.iter().map(|&v| num(v)));
        inputs.write_record(&row)?;
    }
    for w in [forecasts, errors, actuals, q, c, alpha, xstar, labels, inputs] {
        finish(w)?;
    }
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| AppError::io(&path, e))
}

fn reader(dir: &Path, name: &str) -> Result<csv::Reader<File>> {
    let path = dir.join(name);
    let file = File::open(&path).map_err(|e| AppError::io(&path, e))?;
    Ok(csv::Reader::from_reader(file))
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, file: &str) -> Result<T> {
    let row = rec.position().map_or(0, |p| p.line() as usize);
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| AppError::Parse {
            row,
            column: i + 1,
            message: format!("bad field in {file}"),
        })
}

pub fn read_summary(dir: &Path) -> Result<Summary> {
    let path = dir.join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(|e| AppError::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads the training view of a metadata directory: inputs, pool
/// forecasts, actuals and labels, in the order of `inputs.csv`.
pub fn read_training_samples(dir: &Path) -> Result<(Summary, Vec<(String, TrainingSample)>)> {
    let summary = read_summary(dir)?;
    let (h, m) = (summary.horizon, summary.pool.len());
    let method_index: HashMap<&str, usize> =
        summary.pool.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

    let mut order = Vec::new();
    let mut inputs: HashMap<String, Vec<f64>> = HashMap::new();
    for rec in reader(dir, "inputs.csv")?.records() {
        let rec = rec?;
        let id = rec[0].to_string();
        let data = (3..rec.len())
            .map(|i| parse_field(&rec, i, "inputs.csv"))
            .collect::<Result<Vec<f64>>>()?;
        order.push(id.clone());
        inputs.insert(id, data);
    }
    let mut forecasts: HashMap<String, Matrix> = HashMap::new();
    for rec in reader(dir, "forecasts.csv")?.records() {
        let rec = rec?;
        let hh: usize = parse_field(&rec, 1, "forecasts.csv")?;
        let mi = *method_index.get(&rec[2]).ok_or_else(|| AppError::Parse {
            row: rec.position().map_or(0, |p| p.line() as usize),
            column: 3,
            message: format!("unknown method {:?}", &rec[2]),
        })?;
        let entry = forecasts
            .entry(rec[0].to_string())
            .or_insert_with(|| Matrix::zeros(h, m));
        if hh == 0 || hh > h {
            return Err(AppError::Parse {
                row: rec.position().map_or(0, |p| p.line() as usize),
                column: 2,
                message: format!("step {hh} outside horizon {h}"),
            });
        }
        entry[(hh - 1, mi)] = parse_field(&rec, 3, "forecasts.csv")?;
    }
    let mut actuals: HashMap<String, Vec<f64>> = HashMap::new();
    for rec in reader(dir, "actuals.csv")?.records() {
        let rec = rec?;
        let v: f64 = parse_field(&rec, 2, "actuals.csv")?;
        actuals.entry(rec[0].to_string()).or_default().push(v);
    }
    let mut labels: HashMap<String, Vec<u8>> = HashMap::new();
    for rec in reader(dir, "labels.csv")?.records() {
        let rec = rec?;
        let v: u8 = parse_field(&rec, 2, "labels.csv")?;
        labels.entry(rec[0].to_string()).or_default().push(v);
    }
    let corrupt = |id: &str, what: &str| AppError::CorruptFile(format!("metadata for {id} lacks {what}"));
    let samples = order
        .into_iter()
        .map(|id| {
            let sample = TrainingSample {
                input: inputs.remove(&id).ok_or_else(|| corrupt(&id, "inputs"))?,
                forecasts: forecasts.remove(&id).ok_or_else(|| corrupt(&id, "forecasts"))?,
                actual: actuals.remove(&id).ok_or_else(|| corrupt(&id, "actuals"))?,
                labels: labels.remove(&id).ok_or_else(|| corrupt(&id, "labels"))?,
            };
            Ok((id, sample))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((summary, samples))
}
