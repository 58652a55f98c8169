use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use solarload::scene::format::{write_frames, Dataset, FRAMES_FILE};
use solarload::spatial::{correct_frame, CorrectionOptions, Method, RegressorModel};

use crate::report::{fmt_opt, write_json, Table};

pub const CORRECT_SCHEMA: &str = "solarload.correct/1";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Args)]
pub struct CorrectArgs {
    /// Dataset directory written by `simulate`
    #[arg(long)]
    pub dataset: PathBuf,
    /// Index of the frame to correct [frames]
    #[arg(long)]
    pub frame: usize,
    /// Correction method: linear or learned
    #[arg(long, default_value = "linear")]
    pub method: Method,
    /// Regressor model file (learned method)
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output directory for the corrected frame and the JSON report
    #[arg(long)]
    pub out: PathBuf,
    /// Incidence bins for the linear solve [bins]
    #[arg(long, default_value_t = 8)]
    pub bins: usize,
    /// Crop centre column for the learned method [px]; face centre when omitted
    #[arg(long, requires = "crop_y_px")]
    pub crop_x_px: Option<usize>,
    /// Crop centre row for the learned method [px]
    #[arg(long, requires = "crop_x_px")]
    pub crop_y_px: Option<usize>,
    /// Kernel repetitions for the timing estimate; the median is reported [runs]
    #[arg(long, default_value_t = 5)]
    pub timing_runs: usize,
}

#[derive(Debug, Serialize)]
struct CorrectReport {
    schema: &'static str,
    dataset: String,
    frame: usize,
    timestamp_s: f64,
    method: Method,
    beta_f_c: f64,
    t_bar_c: Option<f64>,
    condition: Option<f64>,
    clamped: bool,
    facial_mean_before_c: f64,
    facial_mean_after_c: f64,
    facial_mean_truth_c: f64,
    kernel_ms: f64,
}

pub fn run(args: &CorrectArgs) -> Result<()> {
    let ds = Dataset::open(&args.dataset)?;
    let model = match (args.method, &args.model) {
        (Method::Learned, None) => bail!("--method learned needs --model"),
        (Method::Linear, Some(_)) => bail!("--model only applies to --method learned"),
        (_, Some(path)) => Some(RegressorModel::load(path)?),
        (_, None) => None,
    };
    if args.timing_runs == 0 {
        bail!("--timing-runs must be at least 1");
    }
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let face = ds.face()?;
    let frame = ds.frame(args.frame)?;
    let options = CorrectionOptions {
        bins: args.bins,
        crop_center: args.crop_x_px.zip(args.crop_y_px),
    };
    let mut times = Vec::with_capacity(args.timing_runs);
    let mut result = None;
    for _ in 0..args.timing_runs {
        let start = Instant::now();
        let c = correct_frame(&frame, Some(&face), model.as_ref(), args.method, &options)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        result = Some(c);
    }
    let c = result.expect("at least one run");
    times.sort_by(f64::total_cmp);
    let kernel_ms = times[times.len() / 2];

    write_frames(&args.out.join(FRAMES_FILE), std::slice::from_ref(&c.corrected))?;
    let report = CorrectReport {
        schema: CORRECT_SCHEMA,
        dataset: args.dataset.display().to_string(),
        frame: args.frame,
        timestamp_s: frame.timestamp,
        method: args.method,
        beta_f_c: c.beta_f,
        t_bar_c: c.t_bar,
        condition: c.condition,
        clamped: c.clamped,
        facial_mean_before_c: c.facial_mean_before,
        facial_mean_after_c: c.facial_mean_after,
        facial_mean_truth_c: face.facial_mean(&ds.truth_baseline()?),
        kernel_ms,
    };
    write_json(&args.out.join(REPORT_FILE), &report)?;

    let mut table = Table::new(&["quantity", "value"]);
    table.row(vec!["beta_f_c".into(), format!("{:.4}", report.beta_f_c)]);
    table.row(vec!["t_bar_c".into(), fmt_opt(report.t_bar_c, 4)]);
    table.row(vec!["condition".into(), fmt_opt(report.condition, 2)]);
    table.row(vec!["clamped".into(), report.clamped.to_string()]);
    table.row(vec!["facial_mean_before_c".into(), format!("{:.4}", report.facial_mean_before_c)]);
    table.row(vec!["facial_mean_after_c".into(), format!("{:.4}", report.facial_mean_after_c)]);
    table.row(vec!["facial_mean_truth_c".into(), format!("{:.4}", report.facial_mean_truth_c)]);
    table.row(vec!["kernel_ms".into(), format!("{:.3}", report.kernel_ms)]);
    print!("{}", table.render());
    Ok(())
}
