use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use serde::Serialize;

use solarload::radiometry::CoreMap;
use solarload::transient::{correct_core, fit_cooling, fit_heating, FitResult, TransientTrace};

use crate::report::{ensure_parent, write_json};

pub const FIT_SCHEMA: &str = "solarload.fit/1";

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TracePhase {
    Cooling,
    Heating,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Trace CSV with header time_s,temp_c[,weight]
    #[arg(long)]
    pub trace: PathBuf,
    /// Keep only the first window of the trace before fitting [s]
    #[arg(long)]
    pub window_s: Option<f64>,
    /// Which transient the trace records
    #[arg(long, value_enum, default_value = "cooling")]
    pub phase: TracePhase,
    /// Intercept of the skin-to-core map [C]
    #[arg(long, default_value_t = CoreMap::default().b0)]
    pub core_b0_c: f64,
    /// Slope of the skin-to-core map [-]
    #[arg(long, default_value_t = CoreMap::default().b1)]
    pub core_b1: f64,
    /// Also write the fit as JSON
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct FitReport {
    schema: &'static str,
    samples: usize,
    fit: FitResult,
    t_core_c: f64,
}

pub fn run(args: &FitArgs) -> Result<()> {
    let map = CoreMap::new(args.core_b0_c, args.core_b1)?;
    let mut trace = TransientTrace::from_csv_file(&args.trace)?;
    if let Some(w) = args.window_s {
        trace = trace.window(w)?;
    }
    let fit = match args.phase {
        TracePhase::Cooling => fit_cooling(&trace)?,
        TracePhase::Heating => fit_heating(&trace)?,
    };
    let t_core = correct_core(&fit, &map);
    println!("samples={}", trace.len());
    println!("window_s={:.3}", fit.window_s);
    println!("t_skin_star_c={:.6}", fit.t_skin_star);
    println!("beta_peak_c={:.6}", fit.beta_peak);
    println!("rate_per_s={:.6e}", fit.rate);
    println!("weighted_rmse_c={:.6e}", fit.weighted_rmse);
    println!("at_boundary={}", fit.at_boundary);
    println!("t_core_c={t_core:.6}");
    if let Some(path) = &args.json {
        ensure_parent(path)?;
        write_json(
            path,
            &FitReport {
                schema: FIT_SCHEMA,
                samples: trace.len(),
                fit,
                t_core_c: t_core,
            },
        )?;
    }
    Ok(())
}
