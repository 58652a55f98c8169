use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use solarload::bioheat::TissueParams;
use solarload::c_to_k;
use solarload::radiometry::RadiometricScene;
use solarload::scene::format::{write_dataset, DatasetMeta};
use solarload::scene::noise::SensorNoise;
use solarload::scene::{FaceConfig, FacePreset, RenderConfig, Schedule};

use crate::report::{write_json, Table};

pub const SWEEP_SCHEMA: &str = "solarload.sweep/1";

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output dataset directory; with --melanin-sweep, the parent of one subdirectory per level
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for face texture and sensor noise
    #[arg(long)]
    pub seed: u64,
    /// Frame width [px]
    #[arg(long, default_value_t = 160)]
    pub width_px: usize,
    /// Frame height [px]
    #[arg(long, default_value_t = 120)]
    pub height_px: usize,
    /// Face geometry: ellipsoid or mesh-file
    #[arg(long, default_value = "ellipsoid")]
    pub preset: String,
    /// Normal-map file for --preset mesh-file
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Epidermal melanin absorption coefficient [1/m]
    #[arg(long, default_value_t = 1500.0)]
    pub melanin_mu_per_m: f64,
    /// Core body temperature [C]
    #[arg(long, default_value_t = 37.0)]
    pub core_temp_c: f64,
    /// Standard deviation of the smooth skin-temperature texture [C]
    #[arg(long, default_value_t = 0.3)]
    pub texture_c: f64,
    /// Background temperature [C]
    #[arg(long, default_value_t = 22.0)]
    pub background_c: f64,
    /// Solar irradiance during the exposure [W/m^2]
    #[arg(long, default_value_t = 1000.0)]
    pub e_sun_wm2: f64,
    /// Indoor rest before exposure [s]
    #[arg(long, default_value_t = 60.0)]
    pub rest_s: f64,
    /// Sun exposure [s]
    #[arg(long, default_value_t = 300.0)]
    pub load_s: f64,
    /// Indoor cool-down after exposure [s]
    #[arg(long, default_value_t = 300.0)]
    pub cool_s: f64,
    /// Frame rate [Hz]
    #[arg(long, default_value_t = 1.0)]
    pub fps_hz: f64,
    /// Per-pixel read noise standard deviation [C]
    #[arg(long, default_value_t = 0.05)]
    pub read_sigma_c: f64,
    /// Random-walk step of the global sensor offset [C per frame]
    #[arg(long, default_value_t = 0.005)]
    pub drift_step_sigma_c: f64,
    /// Frames between flat-field recalibrations [frames]
    #[arg(long, default_value_t = 150)]
    pub recalib_period_frames: usize,
    /// Offset spike at a recalibration [C]
    #[arg(long, default_value_t = 1.0)]
    pub recalib_spike_c: f64,
    /// Disable all sensor noise
    #[arg(long)]
    pub no_noise: bool,
    /// Skin emissivity [-]
    #[arg(long, default_value_t = 0.98)]
    pub emissivity: f64,
    /// Atmospheric transmittance [-]
    #[arg(long, default_value_t = 1.0)]
    pub tau_atm: f64,
    /// Reflected ambient temperature [C]
    #[arg(long, default_value_t = 22.0)]
    pub ambient_c: f64,
    /// Atmosphere temperature [C]
    #[arg(long, default_value_t = 22.0)]
    pub atmosphere_c: f64,
    /// Tissue layer parameters as JSON (replaces the built-in four-layer model)
    #[arg(long)]
    pub tissue_json: Option<PathBuf>,
    /// Render this many melanin levels, geometrically spaced over the sweep range [levels]
    #[arg(long)]
    pub melanin_sweep: Option<usize>,
    /// Lowest melanin level of a sweep [1/m]
    #[arg(long, default_value_t = 800.0)]
    pub sweep_min_mu_per_m: f64,
    /// Highest melanin level of a sweep [1/m]
    #[arg(long, default_value_t = 6000.0)]
    pub sweep_max_mu_per_m: f64,
}

#[derive(Debug, Serialize)]
struct SweepIndex {
    schema: &'static str,
    seed: u64,
    levels: Vec<SweepLevel>,
}

#[derive(Debug, Serialize)]
struct SweepLevel {
    dir: String,
    melanin_mu_per_m: f64,
    melanin_index: f64,
    beta_peak_c: f64,
}

impl SimulateArgs {
    fn configs(&self) -> Result<(FaceConfig, RenderConfig)> {
        let mut tissue = match &self.tissue_json {
            Some(path) => TissueParams::from_json_file(path)?,
            None => TissueParams::default(),
        };
        tissue.irradiance_wm2 = self.e_sun_wm2;
        let noise = if self.no_noise {
            SensorNoise::off()
        } else {
            SensorNoise {
                read_sigma: self.read_sigma_c,
                drift_step_sigma: self.drift_step_sigma_c,
                recalib_period: self.recalib_period_frames,
                recalib_spike: self.recalib_spike_c,
                seed: self.seed,
            }
        };
        let render = RenderConfig {
            schedule: Schedule {
                rest_s: self.rest_s,
                load_s: self.load_s,
                cool_s: self.cool_s,
            },
            fps: self.fps_hz,
            noise,
            radiometry: RadiometricScene::new(
                self.emissivity,
                self.tau_atm,
                c_to_k(self.ambient_c),
                c_to_k(self.atmosphere_c),
            )?,
            tissue,
        };
        render.validate()?;
        let face = FaceConfig {
            width: self.width_px,
            height: self.height_px,
            preset: FacePreset::parse(&self.preset, self.mesh.clone())?,
            melanin_mu_per_m: self.melanin_mu_per_m,
            core_temp_c: self.core_temp_c,
            seed: self.seed,
            texture_c: self.texture_c,
            background_c: self.background_c,
            ..FaceConfig::default()
        };
        Ok((face, render))
    }
}

pub fn run(args: &SimulateArgs) -> Result<()> {
    let (face, render) = args.configs()?;
    if args.out.exists() && !args.out.is_dir() {
        bail!("{} exists and is not a directory", args.out.display());
    }
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let Some(levels) = args.melanin_sweep else {
        let meta = write_dataset(&args.out, &face, &render)?;
        print_summary(&[(args.out.display().to_string(), meta)]);
        return Ok(());
    };
    if levels == 0 {
        bail!("--melanin-sweep needs at least one level");
    }
    if !(args.sweep_min_mu_per_m > 0.0 && args.sweep_max_mu_per_m >= args.sweep_min_mu_per_m) {
        bail!("sweep range must satisfy 0 < min <= max");
    }
    let mut written = Vec::with_capacity(levels);
    let mut index = SweepIndex {
        schema: SWEEP_SCHEMA,
        seed: args.seed,
        levels: Vec::with_capacity(levels),
    };
    for i in 0..levels {
        let frac = if levels > 1 { i as f64 / (levels - 1) as f64 } else { 0.0 };
        let mu = args.sweep_min_mu_per_m * (args.sweep_max_mu_per_m / args.sweep_min_mu_per_m).powf(frac);
        let name = format!("level_{i:02}");
        let level_face = FaceConfig {
            melanin_mu_per_m: mu,
            ..face.clone()
        };
        let meta = write_dataset(&args.out.join(&name), &level_face, &render)?;
        index.levels.push(SweepLevel {
            dir: name.clone(),
            melanin_mu_per_m: mu,
            melanin_index: meta.melanin_index,
            beta_peak_c: meta.response.beta_peak_c,
        });
        written.push((args.out.join(&name).display().to_string(), meta));
    }
    write_json(&args.out.join("sweep.json"), &index)?;
    print_summary(&written);
    Ok(())
}

fn print_summary(written: &[(String, DatasetMeta)]) {
    let mut table = Table::new(&["dataset", "frames", "melanin_mu_per_m", "mi", "beta_peak_c"]);
    for (dir, meta) in written {
        table.row(vec![
            dir.clone(),
            meta.count.to_string(),
            format!("{:.1}", meta.face.melanin_mu_per_m),
            format!("{:.1}", meta.melanin_index),
            format!("{:.4}", meta.response.beta_peak_c),
        ]);
    }
    print!("{}", table.render());
}
