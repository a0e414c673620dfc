//! Offline (metadata + training) and online (weights + combination) phases,
//! evaluation against the pool and the simple average, and Grad-CAM export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use divcomb_core::explain::{self, Heatmap, LABEL_THRESHOLD};
use divcomb_core::metrics::{self, CollectionScore, ScoreInput};
use divcomb_core::net::{self, MetaNet, NetConfig, TrainReport, TrainingSample};
use divcomb_core::pool;
use divcomb_core::record::{self, MetadataRecord};
use divcomb_core::series::{self, Frequency, TimeSeries};
use divcomb_core::stats::{self, McbResult};
use divcomb_core::Matrix;
use rayon::prelude::*;

use crate::config::Settings;
use crate::error::{AppError, Result};
use crate::model_file::ModelContainer;
use crate::store::{Skipped, Summary};

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub records: Vec<MetadataRecord>,
    pub skipped: Vec<Skipped>,
}

fn skippable(e: &divcomb_core::Error) -> bool {
    matches!(
        e,
        divcomb_core::Error::DegenerateBenchmark | divcomb_core::Error::DegenerateScale
    )
}

/// Offline steps per series (split, pool forecasts, Q/c, QP labels), run in
/// parallel and merged in input order. Series with a degenerate benchmark
/// are skipped and reported.
pub fn prepare(series: &[TimeSeries], settings: &Settings) -> Result<Prepared> {
    if series.is_empty() {
        return Err(AppError::EmptyDataset);
    }
    let results: Vec<_> = series
        .par_iter()
        .map(|s| record::build_record(s, &settings.pool, settings.input_length, settings.tau))
        .collect();
    let mut records = Vec::with_capacity(series.len());
    let mut skipped = Vec::new();
    for (s, r) in series.iter().zip(results) {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) if skippable(&e) => {
                log::warn!("skipping {}: {e}", s.id);
                skipped.push(Skipped {
                    id: s.id.clone(),
                    code: e.code().to_string(),
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    if records.is_empty() {
        return Err(AppError::EmptyDataset);
    }
    Ok(Prepared { records, skipped })
}

pub fn summary(settings: &Settings, prepared: &Prepared) -> Summary {
    Summary {
        frequency: settings.frequency.to_string(),
        horizon: settings.horizon,
        seasonal_period: settings.seasonal_period,
        input_length: settings.input_length,
        pool: settings.pool_names(),
        tau: settings.tau,
        records: prepared.records.len(),
        skipped: prepared.skipped.clone(),
    }
}

/// Initializes the network from `settings.seed` and trains it.
pub fn train_model(samples: &[TrainingSample], settings: &Settings) -> Result<(ModelContainer, TrainReport)> {
    if samples.is_empty() {
        return Err(AppError::EmptyDataset);
    }
    let cfg = NetConfig::new(settings.input_length, settings.pool.len());
    let mut net = MetaNet::init(cfg, settings.seed)?;
    let report = net::train(&mut net, samples, &settings.train)?;
    let container = ModelContainer {
        net,
        frequency: settings.frequency.clone(),
        horizon: settings.horizon,
        seasonal_period: settings.seasonal_period,
        pool: settings.pool.clone(),
        train: settings.train.clone(),
        tau: settings.tau,
    };
    Ok((container, report))
}

pub fn check_frequency(model: &ModelContainer, frequency: &Frequency) -> Result<()> {
    if &model.frequency == frequency {
        Ok(())
    } else {
        Err(AppError::FrequencyMismatch {
            model: model.frequency.to_string(),
            data: frequency.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesForecast {
    pub id: String,
    pub forecast: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Online phase: weights from the full history, pool forecasts beyond its
/// end, convex combination.
pub fn forecast(model: &ModelContainer, series: &[TimeSeries]) -> Result<Vec<SeriesForecast>> {
    if series.is_empty() {
        return Err(AppError::EmptyDataset);
    }
    for s in series {
        check_frequency(model, &s.frequency)?;
    }
    let inputs: Vec<(Matrix, series::PreparedInput)> = series
        .par_iter()
        .map(|s| record::online_inputs(s, &model.pool, model.net.config().input_len))
        .collect::<std::result::Result<_, _>>()?;
    let refs: Vec<&[f64]> = inputs.iter().map(|(_, p)| p.data.as_slice()).collect();
    let weights = model.net.predict_weights_batch(&refs)?;
    series
        .iter()
        .zip(inputs)
        .zip(weights)
        .map(|((s, (f, _)), w)| {
            Ok(SeriesForecast {
                id: s.id.clone(),
                forecast: net::combine(&f, &w)?,
                weights: w,
            })
        })
        .collect()
}

pub const DNN_LABEL: &str = "dnn-mtl";
pub const AVERAGE_LABEL: &str = "average";

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub methods: Vec<String>,
    pub scores: Vec<CollectionScore>,
    pub ids: Vec<String>,
    /// `N × k` sOWA table, columns in `methods` order.
    pub sowa: Matrix,
    pub mcb: Option<McbResult>,
    pub excluded: Vec<Skipped>,
}

impl Evaluation {
    pub fn score(&self, method: &str) -> Option<&CollectionScore> {
        self.methods.iter().position(|m| m == method).map(|i| &self.scores[i])
    }
}

struct EvalItem {
    train: Vec<f64>,
    test: Vec<f64>,
    naive: Vec<f64>,
    forecasts: Matrix,
    input: Vec<f64>,
    period: usize,
}

/// Holds out the last `H` points of every series and scores the trained
/// combination, the simple average and each pool member on them.
pub fn evaluate(model: &ModelContainer, series: &[TimeSeries]) -> Result<Evaluation> {
    if series.is_empty() {
        return Err(AppError::EmptyDataset);
    }
    for s in series {
        check_frequency(model, &s.frequency)?;
    }
    let input_len = model.net.config().input_len;
    let prepared: Vec<std::result::Result<EvalItem, divcomb_core::Error>> = series
        .par_iter()
        .map(|s| {
            let split = series::split_train_test(s)?;
            let naive = pool::naive(&split.train, s.horizon);
            metrics::score_series(&ScoreInput {
                actual: &split.test,
                predicted: &naive,
                naive: &naive,
                train: &split.train,
                period: s.seasonal_period,
            })?;
            let fc = pool::pool_forecasts(&split.train, &model.pool, s.seasonal_period, s.horizon)?;
            Ok(EvalItem {
                input: series::prepare_input(&split.train, input_len).data,
                train: split.train,
                test: split.test,
                naive,
                forecasts: fc.matrix,
                period: s.seasonal_period,
            })
        })
        .collect();
    let mut items = Vec::new();
    let mut ids = Vec::new();
    let mut excluded = Vec::new();
    for (s, r) in series.iter().zip(prepared) {
        match r {
            Ok(item) => {
                items.push(item);
                ids.push(s.id.clone());
            }
            Err(e) if skippable(&e) => excluded.push(Skipped {
                id: s.id.clone(),
                code: e.code().to_string(),
                reason: e.to_string(),
            }),
            Err(e) => return Err(e.into()),
        }
    }
    if items.is_empty() {
        return Err(AppError::EmptyDataset);
    }
    let refs: Vec<&[f64]> = items.iter().map(|i| i.input.as_slice()).collect();
    let weights = model.net.predict_weights_batch(&refs)?;
    let m = model.pool.len();
    let mut methods = vec![DNN_LABEL.to_string(), AVERAGE_LABEL.to_string()];
    methods.extend(pool::pool_names(&model.pool));
    // predictions[method][series]
    let mut predictions: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(items.len()); methods.len()];
    for (item, w) in items.iter().zip(&weights) {
        predictions[0].push(net::combine(&item.forecasts, w)?);
        predictions[1].push(net::combine(&item.forecasts, &vec![1.0 / m as f64; m])?);
        for j in 0..m {
            predictions[2 + j].push(item.forecasts.column(j));
        }
    }
    let mut scores = Vec::with_capacity(methods.len());
    let mut sowa = Matrix::zeros(items.len(), methods.len());
    for (k, preds) in predictions.iter().enumerate() {
        let inputs: Vec<ScoreInput> = items
            .iter()
            .zip(preds)
            .map(|(item, p)| ScoreInput {
                actual: &item.test,
                predicted: p,
                naive: &item.naive,
                train: &item.train,
                period: item.period,
            })
            .collect();
        scores.push(metrics::owa(&inputs)?);
        for (i, input) in inputs.iter().enumerate() {
            sowa[(i, k)] = metrics::score_series(input)?.sowa;
        }
    }
    let mcb = if items.len() >= 2 {
        match stats::nemenyi_mcb(&sowa, true, 0.05) {
            Ok(r) => Some(r),
            Err(divcomb_core::Error::UnsupportedK(k)) => {
                log::warn!("no Nemenyi critical value for {k} methods; rank intervals omitted");
                None
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };
    Ok(Evaluation {
        methods,
        scores,
        ids,
        sowa,
        mcb,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesExplanation {
    pub id: String,
    /// Network input the heatmaps align with.
    pub input: Vec<f64>,
    pub heatmaps: Vec<Heatmap>,
}

/// Grad-CAM for each method the classifier selects (or `method` when
/// given). If no probability reaches 0.5, the most probable method is used.
pub fn explain(model: &ModelContainer, series: &[TimeSeries], method: Option<usize>) -> Result<Vec<SeriesExplanation>> {
    let m = model.pool.len();
    if let Some(j) = method.filter(|&j| j >= m) {
        return Err(AppError::Config(format!("method index {j} outside pool of {m}")));
    }
    let input_len = model.net.config().input_len;
    series
        .par_iter()
        .map(|s| {
            check_frequency(model, &s.frequency)?;
            let input = series::prepare_input(&s.values, input_len).data;
            let chosen: Vec<usize> = match method {
                Some(j) => vec![j],
                None => {
                    let labels = explain::predict_labels(&model.net, &input, LABEL_THRESHOLD)?;
                    let on: Vec<usize> = (0..m).filter(|&j| labels[j] == 1).collect();
                    if on.is_empty() {
                        let probs = model.net.forward(&[&input], net::Fusion::MultiTask)?.remove(0).o_cls;
                        vec![(0..m).fold(0, |b, j| if probs[j] > probs[b] { j } else { b })]
                    } else {
                        on
                    }
                }
            };
            let heatmaps = chosen
                .into_iter()
                .map(|j| {
                    let mut h = explain::gradcam(&model.net, &input, j)?;
                    h.series_id = s.id.clone();
                    Ok(h)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SeriesExplanation {
                id: s.id.clone(),
                input,
                heatmaps,
            })
        })
        .collect()
}

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header)?;
    Ok(w)
}

fn close(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn write_forecasts(dir: &Path, pool_names: &[String], out: &[SeriesForecast]) -> Result<()> {
    let fpath = dir.join("forecasts.csv");
    let wpath = dir.join("weights.csv");
    let mut f = csv_writer(&fpath, &["series_id", "h", "forecast"])?;
    let mut w = csv_writer(&wpath, &["series_id", "method", "weight"])?;
    for s in out {
        for (h, v) in s.forecast.iter().enumerate() {
            f.write_record([s.id.as_str(), &(h + 1).to_string(), &v.to_string()])?;
        }
        for (name, v) in pool_names.iter().zip(&s.weights) {
            w.write_record([s.id.as_str(), name, &v.to_string()])?;
        }
    }
    close(f, &fpath)?;
    close(w, &wpath)
}

pub fn write_evaluation(dir: &Path, eval: &Evaluation) -> Result<()> {
    let spath = dir.join("scores.csv");
    let mut s = csv_writer(&spath, &["method", "owa", "mean_sowa", "sd_sowa"])?;
    for (name, sc) in eval.methods.iter().zip(&eval.scores) {
        s.write_record([name.as_str(), &sc.owa.to_string(), &sc.mean_sowa.to_string(), &sc.sd_sowa.to_string()])?;
    }
    close(s, &spath)?;
    let ppath = dir.join("sowa.csv");
    let mut p = csv_writer(&ppath, &["series_id", "method", "sowa"])?;
    for (i, id) in eval.ids.iter().enumerate() {
        for (k, name) in eval.methods.iter().enumerate() {
            p.write_record([id.as_str(), name, &eval.sowa[(i, k)].to_string()])?;
        }
    }
    close(p, &ppath)?;
    if let Some(mcb) = &eval.mcb {
        let rpath = dir.join("ranks.csv");
        let mut r = csv_writer(&rpath, &["method", "mean_rank", "lower", "upper"])?;
        for iv in &mcb.intervals {
            r.write_record([
                eval.methods[iv.method].as_str(),
                &iv.mean_rank.to_string(),
                &iv.lower.to_string(),
                &iv.upper.to_string(),
            ])?;
        }
        close(r, &rpath)?;
    }
    Ok(())
}

pub fn write_heatmaps(dir: &Path, pool_names: &[String], out: &[SeriesExplanation]) -> Result<()> {
    let path = dir.join("heatmaps.csv");
    let mut w = csv_writer(&path, &["series_id", "method", "timestep", "value"])?;
    for s in out {
        for h in &s.heatmaps {
            for (t, v) in h.values.iter().enumerate() {
                w.write_record([s.id.as_str(), &pool_names[h.method_index], &t.to_string(), &v.to_string()])?;
            }
        }
    }
    close(w, &path)
}

/// Self-contained SVG: heat bands behind the normalized input, one panel
/// per explained method.
pub fn render_svg(exp: &SeriesExplanation, pool_names: &[String]) -> String {
    let (width, panel) = (640.0, 120.0);
    let n = exp.input.len().max(1);
    let step = width / n as f64;
    let height = panel * exp.heatmaps.len().max(1) as f64;
    let lo = exp.input.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = exp.input.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    );
    for (p, h) in exp.heatmaps.iter().enumerate() {
        let top = p as f64 * panel;
        for (t, v) in h.values.iter().enumerate() {
            svg.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{top}\" width=\"{:.2}\" height=\"{panel}\" fill=\"rgb(220,40,30)\" fill-opacity=\"{v:.3}\"/>\n",
                t as f64 * step,
                step
            ));
        }
        let points: Vec<String> = exp
            .input
            .iter()
            .enumerate()
            .map(|(t, x)| {
                let y = top + panel - 10.0 - (x - lo) / span * (panel - 30.0);
                format!("{:.2},{:.2}", (t as f64 + 0.5) * step, y)
            })
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"6\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"12\">{} / {}</text>\n",
            top + 14.0,
            exp.id,
            pool_names[h.method_index]
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_svgs(dir: &Path, pool_names: &[String], out: &[SeriesExplanation]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    for s in out {
        let safe: String = s
            .id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        let path = dir.join(format!("{safe}.svg"));
        let mut f = File::create(&path).map_err(|e| AppError::io(&path, e))?;
        f.write_all(render_svg(s, pool_names).as_bytes())
            .map_err(|e| AppError::io(&path, e))?;
    }
    Ok(())
}

pub fn write_history(path: &Path, report: &TrainReport) -> Result<()> {
    let mut w = csv_writer(path, &["epoch", "train_loss", "val_loss"])?;
    for r in &report.history {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.val_loss.map_or_else(String::new, |v| v.to_string()),
        ])?;
    }
    close(w, path)
}
