use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use serde::Serialize;

use solarload::scene::format::Dataset;
use solarload::spatial::training::{dataset_samples, leave_one_out, train_regressor, LooReport, Sample, TrainConfig};
use solarload::spatial::{Architecture, CROP_SIZE};

use crate::report::{ensure_parent, write_json, Table};

pub const LOO_SCHEMA: &str = "solarload.loo/1";

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directories, one simulated identity each
    #[arg(long = "dataset", required = true, num_args = 1..)]
    pub datasets: Vec<PathBuf>,
    /// Output model file
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for initialisation, shuffling and augmentation
    #[arg(long)]
    pub seed: u64,
    /// Training epochs [epochs]
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Mini-batch size [samples]
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Adam learning rate [-]
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// Use every n-th frame of each dataset [frames]
    #[arg(long, default_value_t = 15)]
    pub frame_stride_frames: usize,
    /// Number of trailing datasets held out for model selection [datasets]
    #[arg(long, default_value_t = 2)]
    pub validation_datasets: usize,
    /// Crop side length [px]
    #[arg(long, default_value_t = CROP_SIZE)]
    pub crop_px: usize,
    /// Also run leave-one-identity-out over all datasets and write the report here
    #[arg(long)]
    pub loo_report: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct LooOutput<'a> {
    schema: &'static str,
    datasets: Vec<String>,
    config: TrainConfig,
    report: &'a LooReport,
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let n = args.datasets.len();
    if args.validation_datasets == 0 || args.validation_datasets >= n {
        bail!("--validation-datasets must be between 1 and {} for {n} datasets", n.saturating_sub(1));
    }
    let datasets: Vec<Dataset> = args.datasets.iter().map(|d| Dataset::open(d)).collect::<Result<_, _>>()?;
    ensure_parent(&args.out)?;
    if let Some(path) = &args.loo_report {
        ensure_parent(path)?;
    }

    let arch = Architecture::with_input(args.crop_px);
    arch.validate()?;
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let mut samples: Vec<Sample> = Vec::new();
    for (id, ds) in datasets.iter().enumerate() {
        samples.extend(dataset_samples(id, ds, args.frame_stride_frames, args.crop_px)?);
    }
    let split = n - args.validation_datasets;
    let (train, val): (Vec<Sample>, Vec<Sample>) = samples.iter().cloned().partition(|s| s.identity < split);
    let model = train_regressor(&train, &val, arch, &cfg)?;
    model.save(&args.out)?;

    let info = &model.training;
    let mut table = Table::new(&["quantity", "value"]);
    table.row(vec!["train_samples".into(), info.train_samples.to_string()]);
    table.row(vec!["validation_samples".into(), info.validation_samples.to_string()]);
    table.row(vec!["best_epoch".into(), info.best_epoch.to_string()]);
    table.row(vec!["validation_mae_c".into(), format!("{:.4}", info.validation_mae_c)]);

    if let Some(path) = &args.loo_report {
        let report = leave_one_out(&samples, args.validation_datasets, arch, &cfg)?;
        write_json(
            path,
            &LooOutput {
                schema: LOO_SCHEMA,
                datasets: args.datasets.iter().map(|d| d.display().to_string()).collect(),
                config: cfg,
                report: &report,
            },
        )?;
        table.row(vec!["loo_test_mae_c".into(), format!("{:.4}", report.test_mae)]);
        table.row(vec!["loo_uncorrected_mae_c".into(), format!("{:.4}", report.uncorrected_mae)]);
        table.row(vec!["loo_validation_fever_mae_c".into(), format!("{:.4}", report.validation_fever_mae)]);
    }
    print!("{}", table.render());
    Ok(())
}
