use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use divcomb::config::{ConfigFile, PoolList};
use divcomb::data::{self, SeriesShape};
use divcomb::error::{AppError, Result};
use divcomb::model_file::ModelContainer;
use divcomb::{pipeline, store};
use divcomb_core::series::{Frequency, TimeSeries};

#[derive(Parser)]
#[command(name = "divcomb", version, about = "Diversity-aware forecast combination")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus as wide CSV.
    Synth {
        #[arg(long)]
        frequency: String,
        #[arg(short, long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Split, forecast with the pool and label every series.
    Prepare {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "metadata")]
        metadata: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train the meta-network on a metadata directory.
    Train {
        #[arg(long, default_value = "metadata")]
        metadata: PathBuf,
        #[arg(long, default_value = "model.bin")]
        model: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score the model, the simple average and every pool member on held-out windows.
    Evaluate {
        #[arg(long, default_value = "model.bin")]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Frequency of `data`; must match the model.
        #[arg(long)]
        frequency: Option<String>,
    },
    /// Combine pool forecasts beyond the end of each series.
    Forecast {
        #[arg(long, default_value = "model.bin")]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        frequency: Option<String>,
    },
    /// Export Grad-CAM heatmaps.
    Explain {
        #[arg(long, default_value = "model.bin")]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        frequency: Option<String>,
        /// Pool member to explain instead of the predicted labels.
        #[arg(long)]
        method: Option<String>,
        /// Also write one SVG per series under `<out>/svg`.
        #[arg(long)]
        svg: bool,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    frequency: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seasonal_period: Option<usize>,
    #[arg(long)]
    input_length: Option<usize>,
    /// Comma-separated method names.
    #[arg(long)]
    pool: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tau: Option<f64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ConfigFile> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        Ok(file.merged(ConfigFile {
            frequency: self.frequency.clone(),
            horizon: self.horizon,
            seasonal_period: self.seasonal_period,
            input_length: self.input_length,
            pool: self.pool.clone().map(PoolList::Joined),
            lambda: self.lambda,
            lr: self.lr,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            tau: self.tau,
        }))
    }
}

fn model_series(model: &ModelContainer, data: &Path, frequency: Option<&str>) -> Result<Vec<TimeSeries>> {
    if let Some(f) = frequency {
        let f: Frequency = f.parse().unwrap_or_else(|never| match never {});
        pipeline::check_frequency(model, &f)?;
    }
    let shape = SeriesShape {
        frequency: model.frequency.clone(),
        horizon: model.horizon,
        seasonal_period: model.seasonal_period,
    };
    data::load_wide_csv(data, &shape)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            frequency,
            n,
            seed,
            output,
        } => {
            let f: Frequency = frequency.parse().unwrap_or_else(|never| match never {});
            let series = data::generate_synthetic(n, &f, seed)?;
            let file = std::fs::File::create(&output).map_err(|e| AppError::io(&output, e))?;
            data::write_wide_csv(std::io::BufWriter::new(file), &series)?;
            log::info!("wrote {} series to {}", series.len(), output.display());
        }
        Command::Prepare { data, metadata, config } => {
            let settings = config.load()?.resolve()?;
            let shape = SeriesShape {
                frequency: settings.frequency.clone(),
                horizon: settings.horizon,
                seasonal_period: settings.seasonal_period,
            };
            let series = data::load_wide_csv(&data, &shape)?;
            let prepared = pipeline::prepare(&series, &settings)?;
            let summary = pipeline::summary(&settings, &prepared);
            store::write_metadata(&metadata, &summary, &prepared.records)?;
            log::info!(
                "{} records written, {} series skipped",
                summary.records,
                summary.skipped.len()
            );
        }
        Command::Train { metadata, model, config } => {
            let (summary, samples) = store::read_training_samples(&metadata)?;
            // data-shaping keys come from the metadata, training keys from config
            let from_summary = ConfigFile {
                frequency: Some(summary.frequency.clone()),
                horizon: Some(summary.horizon),
                seasonal_period: Some(summary.seasonal_period),
                input_length: Some(summary.input_length),
                pool: Some(PoolList::List(summary.pool.clone())),
                tau: summary.tau,
                ..ConfigFile::default()
            };
            let settings = config.load()?.merged(from_summary).resolve()?;
            let samples: Vec<_> = samples.into_iter().map(|(_, s)| s).collect();
            let (container, report) = pipeline::train_model(&samples, &settings)?;
            container.save(&model)?;
            pipeline::write_history(&model.with_extension("history.csv"), &report)?;
            log::info!(
                "trained {} epochs (best {} at loss {:.6}); model saved to {}",
                report.history.len(),
                report.best_epoch,
                report.best_loss,
                model.display()
            );
        }
        Command::Evaluate {
            model,
            data,
            out,
            frequency,
        } => {
            let model = ModelContainer::load(&model)?;
            let series = model_series(&model, &data, frequency.as_deref())?;
            let eval = pipeline::evaluate(&model, &series)?;
            create_dir(&out)?;
            pipeline::write_evaluation(&out, &eval)?;
            for s in &eval.excluded {
                log::warn!("excluded {}: {}", s.id, s.reason);
            }
            for (name, sc) in eval.methods.iter().zip(&eval.scores) {
                println!("{name}\t{:.4}\t{:.4}\t{:.4}", sc.owa, sc.mean_sowa, sc.sd_sowa);
            }
        }
        Command::Forecast {
            model,
            data,
            out,
            frequency,
        } => {
            let model = ModelContainer::load(&model)?;
            let series = model_series(&model, &data, frequency.as_deref())?;
            let result = pipeline::forecast(&model, &series)?;
            create_dir(&out)?;
            let names = divcomb_core::pool::pool_names(&model.pool);
            pipeline::write_forecasts(&out, &names, &result)?;
        }
        Command::Explain {
            model,
            data,
            out,
            frequency,
            method,
            svg,
        } => {
            let model = ModelContainer::load(&model)?;
            let series = model_series(&model, &data, frequency.as_deref())?;
            let names = divcomb_core::pool::pool_names(&model.pool);
            let index = match method {
                Some(m) => Some(
                    names
                        .iter()
                        .position(|n| *n == m)
                        .ok_or_else(|| AppError::Config(format!("{m} is not in the model pool")))?,
                ),
                None => None,
            };
            let result = pipeline::explain(&model, &series, index)?;
            create_dir(&out)?;
            pipeline::write_heatmaps(&out, &names, &result)?;
            if svg {
                pipeline::write_svgs(&out.join("svg"), &names, &result)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {}", e.code(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
