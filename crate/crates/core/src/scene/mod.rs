//! Synthetic faces and thermal frame sequences with known ground truth.
//!
//! A face is a set of per-pixel maps (surface normal, melanin, thermoneutral
//! skin temperature, background mask). Rendering applies the solar loading
//! model
//!
//! ```text
//! T(x, t) = T_skin(x) + beta_peak(mu(x)) * f(t) * max(0, l . n(x))
//! ```
//!
//! where `beta_peak` and the heating/cooling rates inside `f` come from a
//! bio-heat simulation at the pixel's melanin level. Each pixel then goes
//! through the radiometric chain, sensor noise is injected in the intensity
//! domain and the chain is inverted, as a camera ISP would.

pub mod format;
pub mod mesh;
pub mod noise;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use noise::SensorNoise;

use crate::bioheat::{solar_response, SolarResponse, TissueParams};
use crate::numeric::median;
use crate::radiometry::{self, CoreMap, RadiometricScene};
use crate::{c_to_k, k_to_c, Error, Result};

/// Physiological bounds on thermoneutral skin temperature [C].
pub const SKIN_TEMP_BOUNDS_C: (f64, f64) = (27.0, 43.0);

/// Red remittance of melanin-free skin; chosen so that melanin coefficients
/// of 800..6000 m^-1 span a melanin index of about 35..80.
const BASE_RED_REFLECTANCE: f64 = 0.524;

/// Fraction of red light returned through an epidermis with the given
/// melanin coefficient (two passes of Beer-Lambert attenuation).
pub fn red_reflectance(melanin_mu_per_m: f64, epidermis_thickness_m: f64) -> f64 {
    BASE_RED_REFLECTANCE * (-2.0 * melanin_mu_per_m * epidermis_thickness_m).exp()
}

/// Melanin index a colorimeter would report for the given melanin level.
pub fn melanin_index_for(melanin_mu_per_m: f64, epidermis_thickness_m: f64) -> f64 {
    radiometry::melanin_index(red_reflectance(melanin_mu_per_m, epidermis_thickness_m))
        .expect("reflectance lies in (0, 1]")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FacePreset {
    Ellipsoid,
    Mesh { path: PathBuf },
}

impl FacePreset {
    /// Resolves a preset identifier (`ellipsoid` or `mesh-file`).
    pub fn parse(name: &str, mesh_path: Option<PathBuf>) -> Result<Self> {
        match (name, mesh_path) {
            ("ellipsoid", _) => Ok(FacePreset::Ellipsoid),
            ("mesh-file" | "mesh", Some(path)) => Ok(FacePreset::Mesh { path }),
            ("mesh-file" | "mesh", None) => Err(Error::Config("mesh preset needs a mesh path".into())),
            (other, _) => Err(Error::Config(format!("unknown face preset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceConfig {
    pub width: usize,
    pub height: usize,
    pub preset: FacePreset,
    pub melanin_mu_per_m: f64,
    pub core_temp_c: f64,
    pub seed: u64,
    /// Standard deviation of the smooth perfusion texture [C]; 0 gives a
    /// spatially homogeneous baseline.
    pub texture_c: f64,
    /// Direction towards the sun in image coordinates (x right, y down,
    /// z towards the camera). Normalised on use.
    pub light_dir: [f64; 3],
    /// Background (wall) temperature [C].
    pub background_c: f64,
    pub core_map: CoreMap,
}

impl Default for FaceConfig {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            preset: FacePreset::Ellipsoid,
            melanin_mu_per_m: 1500.0,
            core_temp_c: 37.0,
            seed: 0,
            texture_c: 0.3,
            light_dir: [0.0, -0.3, 1.0],
            background_c: 22.0,
            core_map: CoreMap::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceModel {
    pub width: usize,
    pub height: usize,
    /// Unit normals; `[0, 0, 0]` on background pixels.
    pub normal_map: Vec<[f64; 3]>,
    /// Melanin absorption coefficient [m^-1]; 0 on background.
    pub melanin_map: Vec<f64>,
    /// Thermoneutral temperature [C]; the wall temperature on background.
    pub baseline_temp_map: Vec<f64>,
    pub background_mask: Vec<bool>,
    pub light_dir: [f64; 3],
    pub core_temp: f64,
    /// Pixel at the face centre `(x, y)`.
    pub center: (usize, usize),
}

impl FaceModel {
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// `max(0, l . n)` per pixel, 0 on background.
    pub fn cos_incidence_map(&self) -> Vec<f64> {
        self.normal_map
            .iter()
            .zip(&self.background_mask)
            .map(|(n, bg)| if *bg { 0.0 } else { dot(&self.light_dir, n).max(0.0) })
            .collect()
    }

    /// Signed `l . n` per pixel (background 0).
    pub fn signed_incidence_map(&self) -> Vec<f64> {
        self.normal_map
            .iter()
            .zip(&self.background_mask)
            .map(|(n, bg)| if *bg { 0.0 } else { dot(&self.light_dir, n) })
            .collect()
    }

    pub fn foreground_indices(&self) -> Vec<usize> {
        (0..self.pixels()).filter(|&i| !self.background_mask[i]).collect()
    }

    /// Mean of `map` over face pixels.
    pub fn facial_mean(&self, map: &[f64]) -> f64 {
        let (sum, n) = map
            .iter()
            .zip(&self.background_mask)
            .filter(|(_, bg)| !**bg)
            .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
        sum / n.max(1) as f64
    }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn unit(v: [f64; 3]) -> Result<[f64; 3]> {
    let len = dot(&v, &v).sqrt();
    if !(len > 0.0 && len.is_finite()) {
        return Err(Error::Config(format!("light direction {v:?} cannot be normalised")));
    }
    Ok([v[0] / len, v[1] / len, v[2] / len])
}

/// Builds a face from its configuration. Identical configurations give
/// bit-identical faces.
pub fn make_face(config: &FaceConfig) -> Result<FaceModel> {
    let (w, h) = (config.width, config.height);
    if w < 8 || h < 8 {
        return Err(Error::Config(format!("frame {w}x{h} too small")));
    }
    if !(config.melanin_mu_per_m >= 0.0) {
        return Err(Error::Config("melanin must be non-negative".into()));
    }
    let light_dir = unit(config.light_dir)?;
    let (normals, center): (Vec<Option<[f64; 3]>>, (usize, usize)) = match &config.preset {
        FacePreset::Ellipsoid => ellipsoid_normals(w, h),
        FacePreset::Mesh { path } => {
            let m = mesh::Mesh::from_obj_file(path)?;
            let r = mesh::rasterize(&m, w, h, 0.7);
            (r.normals, r.center)
        }
    };
    if normals.iter().all(|n| n.is_none()) {
        return Err(Error::Config("face covers no pixels".into()));
    }
    let skin = config.core_map.skin_for_core(config.core_temp_c);
    let texture = smooth_texture(w, h, config.seed, config.texture_c);
    let (lo, hi) = SKIN_TEMP_BOUNDS_C;
    let mut normal_map = Vec::with_capacity(w * h);
    let mut melanin_map = Vec::with_capacity(w * h);
    let mut baseline = Vec::with_capacity(w * h);
    let mut mask = Vec::with_capacity(w * h);
    for (i, n) in normals.iter().enumerate() {
        match n {
            Some(n) => {
                normal_map.push(*n);
                melanin_map.push(config.melanin_mu_per_m);
                baseline.push((skin + texture[i]).clamp(lo, hi));
                mask.push(false);
            }
            None => {
                normal_map.push([0.0; 3]);
                melanin_map.push(0.0);
                baseline.push(config.background_c);
                mask.push(true);
            }
        }
    }
    Ok(FaceModel {
        width: w,
        height: h,
        normal_map,
        melanin_map,
        baseline_temp_map: baseline,
        background_mask: mask,
        light_dir,
        core_temp: config.core_temp_c,
        center,
    })
}

/// Ellipsoid head centred at pixel `(w/2, h/2)`; semi-axes scale with the
/// frame (0.175 w horizontally, 0.32 h vertically, depth equal to width).
fn ellipsoid_normals(w: usize, h: usize) -> (Vec<Option<[f64; 3]>>, (usize, usize)) {
    let (cx, cy) = (w / 2, h / 2);
    let ax = 0.175 * w as f64;
    let ay = 0.32 * h as f64;
    let az = ax;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let u = (x as f64 - cx as f64) / ax;
            let v = (y as f64 - cy as f64) / ay;
            let r2 = u * u + v * v;
            if r2 < 1.0 {
                let g = [u / ax, v / ay, (1.0 - r2).sqrt() / az];
                let len = dot(&g, &g).sqrt();
                out.push(Some([g[0] / len, g[1] / len, g[2] / len]));
            } else {
                out.push(None);
            }
        }
    }
    (out, (cx, cy))
}

/// Zero-mean smooth field: a sum of six low-frequency plane waves with
/// seeded orientation and phase, scaled to standard deviation `amplitude`.
fn smooth_texture(w: usize, h: usize, seed: u64, amplitude: f64) -> Vec<f64> {
    if amplitude == 0.0 {
        return vec![0.0; w * h];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7465_7874_7572_6531);
    let scale = w.max(h) as f64;
    let waves: Vec<(f64, f64, f64)> = (0..6)
        .map(|_| {
            let cycles = rng.random_range(0.5..2.5);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let k = std::f64::consts::TAU * cycles / scale;
            (k * angle.cos(), k * angle.sin(), phase)
        })
        .collect();
    // Each unit plane wave has variance 1/2; six independent ones give 3.
    let norm = amplitude / 3.0_f64.sqrt();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let s: f64 = waves.iter().map(|(kx, ky, p)| (kx * x as f64 + ky * y as f64 + p).sin()).sum();
            out.push(norm * s);
        }
    }
    out
}

/// A reported (post-ISP) thermal frame in degrees Celsius.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalFrame {
    pub width: usize,
    pub height: usize,
    pub temps: Vec<f64>,
    pub timestamp: f64,
    pub calib_event: bool,
}

impl ThermalFrame {
    pub fn new(width: usize, height: usize, temps: Vec<f64>, timestamp: f64) -> Result<Self> {
        if temps.len() != width * height {
            return Err(Error::Shape {
                expected: format!("{} pixels", width * height),
                got: format!("{}", temps.len()),
            });
        }
        if temps.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("frame contains non-finite temperatures".into()));
        }
        Ok(Self {
            width,
            height,
            temps,
            timestamp,
            calib_event: false,
        })
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.temps[y * self.width + x]
    }

    /// Mean over pixels where `mask` is true.
    pub fn masked_mean(&self, mask: &[bool]) -> Option<f64> {
        let (s, n) = self
            .temps
            .iter()
            .zip(mask)
            .filter(|(_, m)| **m)
            .fold((0.0, 0usize), |(s, n), (t, _)| (s + t, n + 1));
        (n > 0).then(|| s / n as f64)
    }
}

/// Adds a constant fever offset to face pixels only.
pub fn inject_fever(frame: &ThermalFrame, background_mask: &[bool], offset: f64) -> ThermalFrame {
    let mut out = frame.clone();
    for (t, bg) in out.temps.iter_mut().zip(background_mask) {
        if !*bg {
            *t += offset;
        }
    }
    out
}

/// Fever offset used for augmentation and robustness checks [C].
pub const FEVER_OFFSET_C: f64 = 1.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Thermoneutral period before the sun [s].
    pub rest_s: f64,
    pub load_s: f64,
    pub cool_s: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            rest_s: 60.0,
            load_s: 300.0,
            cool_s: 300.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Rest,
    Load,
    Cool,
}

impl Schedule {
    pub fn total_s(&self) -> f64 {
        self.rest_s + self.load_s + self.cool_s
    }

    pub fn cool_start_s(&self) -> f64 {
        self.rest_s + self.load_s
    }

    pub fn phase(&self, t: f64) -> Phase {
        if t < self.rest_s {
            Phase::Rest
        } else if t < self.cool_start_s() {
            Phase::Load
        } else {
            Phase::Cool
        }
    }

    /// Fraction of peak loading at time `t`: exponential rise normalised to
    /// reach 1 at the end of the loading phase, then exponential decay.
    pub fn loading_fraction(&self, t: f64, heating_rate: f64, cooling_rate: f64) -> f64 {
        match self.phase(t) {
            Phase::Rest => 0.0,
            Phase::Load => {
                let tau = t - self.rest_s;
                (-heating_rate * tau).exp_m1() / (-heating_rate * self.load_s).exp_m1()
            }
            Phase::Cool => (-cooling_rate * (t - self.cool_start_s())).exp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rest_s >= 0.0) || !(self.load_s > 0.0) || !(self.cool_s > 0.0) {
            return Err(Error::Config("schedule needs rest >= 0 and positive load/cool durations".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub schedule: Schedule,
    pub fps: f64,
    pub noise: SensorNoise,
    pub radiometry: RadiometricScene,
    /// Tissue column used for the per-melanin solar response; its melanin
    /// value is replaced by each pixel's.
    pub tissue: TissueParams,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            schedule: Schedule::default(),
            fps: 1.0,
            noise: SensorNoise::default(),
            radiometry: RadiometricScene::default(),
            tissue: TissueParams::default(),
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.fps > 0.0) {
            return Err(Error::Config("fps must be positive".into()));
        }
        self.noise.validate()?;
        self.radiometry.validate()?;
        self.tissue.validate()
    }

    pub fn frame_count(&self) -> usize {
        (self.schedule.total_s() * self.fps).round() as usize
    }
}

/// Renders frames of one face on demand; frame `k` depends only on `k`,
/// the face and the configuration.
pub struct SequenceRenderer {
    face: FaceModel,
    config: RenderConfig,
    cos_map: Vec<f64>,
    /// Index into `responses` per pixel (`None` for background).
    response_of_pixel: Vec<Option<usize>>,
    responses: Vec<SolarResponse>,
    offsets: Vec<f64>,
}

impl SequenceRenderer {
    pub fn new(face: FaceModel, config: RenderConfig) -> Result<Self> {
        config.validate()?;
        let mut by_melanin: BTreeMap<u64, usize> = BTreeMap::new();
        let mut responses = Vec::new();
        let mut response_of_pixel = Vec::with_capacity(face.pixels());
        for i in 0..face.pixels() {
            if face.background_mask[i] {
                response_of_pixel.push(None);
                continue;
            }
            let mu = face.melanin_map[i];
            let idx = match by_melanin.get(&mu.to_bits()) {
                Some(&idx) => idx,
                None => {
                    let tissue = TissueParams {
                        melanin_mu_per_m: mu,
                        ..config.tissue.clone()
                    };
                    let r = solar_response(&tissue, config.schedule.load_s, config.schedule.cool_s)?;
                    responses.push(r);
                    by_melanin.insert(mu.to_bits(), responses.len() - 1);
                    responses.len() - 1
                }
            };
            response_of_pixel.push(Some(idx));
        }
        let offsets = config.noise.frame_offsets(config.frame_count());
        Ok(Self {
            cos_map: face.cos_incidence_map(),
            face,
            config,
            response_of_pixel,
            responses,
            offsets,
        })
    }

    pub fn face(&self) -> &FaceModel {
        &self.face
    }

    pub fn config(&self) -> &RenderConfig {
        &self.config
    }

    pub fn frame_count(&self) -> usize {
        self.offsets.len()
    }

    pub fn frame_time(&self, k: usize) -> f64 {
        k as f64 / self.config.fps
    }

    /// Solar responses of the distinct melanin levels on the face.
    pub fn responses(&self) -> &[SolarResponse] {
        &self.responses
    }

    /// Peak-bias scale `beta_peak * f(t)` of the first face response at frame `k`.
    pub fn bias_scale(&self, k: usize) -> f64 {
        let r = &self.responses[0];
        r.beta_peak_c * self.config.schedule.loading_fraction(self.frame_time(k), r.heating_rate, r.cooling_rate)
    }

    /// Ground-truth solar bias map at frame `k` [C].
    pub fn bias_map(&self, k: usize) -> Vec<f64> {
        let t = self.frame_time(k);
        let schedule = &self.config.schedule;
        let scales: Vec<f64> = self
            .responses
            .iter()
            .map(|r| r.beta_peak_c * schedule.loading_fraction(t, r.heating_rate, r.cooling_rate))
            .collect();
        self.response_of_pixel
            .iter()
            .zip(&self.cos_map)
            .map(|(r, c)| r.map_or(0.0, |idx| scales[idx] * c))
            .collect()
    }

    /// Reported frame and ground-truth bias map at frame `k`.
    pub fn render_frame(&self, k: usize) -> Result<(ThermalFrame, Vec<f64>)> {
        let bias = self.bias_map(k);
        let scene = &self.config.radiometry;
        let read = self.config.noise.read_noise(k, self.face.pixels());
        let offset = self.offsets[k];
        let mut temps = Vec::with_capacity(self.face.pixels());
        for i in 0..self.face.pixels() {
            let t_true = c_to_k(self.face.baseline_temp_map[i] + bias[i]);
            let mut intensity = radiometry::forward_chain(t_true, scene);
            let n = offset + read[i];
            if n != 0.0 {
                intensity += radiometry::forward_chain_slope(t_true, scene) * n;
            }
            temps.push(k_to_c(radiometry::invert_chain(intensity, scene)?));
        }
        let mut frame = ThermalFrame::new(self.face.width, self.face.height, temps, self.frame_time(k))?;
        frame.calib_event = self.config.noise.is_calibration_frame(k);
        Ok((frame, bias))
    }
}

/// Ground truth stored alongside a rendered sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub baseline: Vec<f64>,
    pub bias: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct RenderedSequence {
    pub frames: Vec<ThermalFrame>,
    pub truth: GroundTruth,
    pub responses: Vec<SolarResponse>,
}

/// Renders every frame of the schedule into memory.
pub fn render_sequence(face: &FaceModel, config: &RenderConfig) -> Result<RenderedSequence> {
    let renderer = SequenceRenderer::new(face.clone(), config.clone())?;
    let mut frames = Vec::with_capacity(renderer.frame_count());
    let mut bias = Vec::with_capacity(renderer.frame_count());
    for k in 0..renderer.frame_count() {
        let (f, b) = renderer.render_frame(k)?;
        frames.push(f);
        bias.push(b);
    }
    Ok(RenderedSequence {
        frames,
        truth: GroundTruth {
            baseline: face.baseline_temp_map.clone(),
            bias,
        },
        responses: renderer.responses().to_vec(),
    })
}

/// Flat-field event detector settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDetector {
    /// Jump threshold in units of the running median absolute deviation.
    pub threshold_mads: f64,
    /// Frames over which the weight ramps from 0 back to 1.
    pub settle_frames: usize,
    /// Number of trailing frame-to-frame deltas in the running statistics.
    pub window: usize,
    /// Lower bound on the deviation scale [C], so a perfectly constant
    /// background does not turn rounding noise into events.
    pub min_scale_c: f64,
}

impl Default for CalibrationDetector {
    fn default() -> Self {
        Self {
            threshold_mads: 5.0,
            settle_frames: 30,
            window: 60,
            min_scale_c: 1e-6,
        }
    }
}

const MIN_HISTORY: usize = 8;

fn median_and_mad(values: &[f64]) -> (f64, f64) {
    let m = median(values);
    (m, median(&values.iter().map(|v| (v - m).abs()).collect::<Vec<_>>()))
}

/// Per-frame fitting weight in [0, 1] derived from the background
/// (pseudo-reference wall) mean.
///
/// A frame is flagged when its background delta departs from the running
/// median delta by more than `threshold_mads` running MADs. Flagged frames
/// get weight 0; later frames ramp linearly back to 1 over `settle_frames`.
pub fn detect_calibration_weights(
    frames: &[ThermalFrame],
    background_mask: &[bool],
    detector: &CalibrationDetector,
) -> Result<Vec<f64>> {
    if !background_mask.iter().any(|b| *b) {
        return Err(Error::InsufficientData("background mask is empty".into()));
    }
    let means: Vec<f64> = frames
        .iter()
        .map(|f| f.masked_mean(background_mask).unwrap_or(f64::NAN))
        .collect();
    background_weights(&means, detector)
}

/// Same as [`detect_calibration_weights`] on a precomputed series of
/// background means.
pub fn background_weights(means: &[f64], detector: &CalibrationDetector) -> Result<Vec<f64>> {
    let n = means.len();
    let mut weights = vec![1.0; n];
    let mut last_flag: Option<usize> = None;
    let deltas: Vec<f64> = means.windows(2).map(|w| w[1] - w[0]).collect();
    let finite: Vec<f64> = deltas.iter().copied().filter(|d| d.is_finite()).collect();
    let global = if finite.is_empty() { (0.0, 0.0) } else { median_and_mad(&finite) };
    for k in 1..n {
        let d = deltas[k - 1];
        let from = (k - 1).saturating_sub(detector.window);
        let history = &deltas[from..k - 1];
        // Too little history for a running estimate: fall back to the whole series.
        let (center, mad) = if history.len() < MIN_HISTORY { global } else { median_and_mad(history) };
        let scale = mad.max(detector.min_scale_c);
        if !d.is_finite() || (d - center).abs() > detector.threshold_mads * scale {
            last_flag = Some(k);
        }
        weights[k] = match last_flag {
            Some(f) if detector.settle_frames > 0 => ((k - f) as f64 / detector.settle_frames as f64).min(1.0),
            Some(f) => {
                if k == f {
                    0.0
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_config() -> RenderConfig {
        RenderConfig {
            schedule: Schedule {
                rest_s: 10.0,
                load_s: 300.0,
                cool_s: 300.0,
            },
            fps: 0.1,
            noise: SensorNoise::off(),
            ..RenderConfig::default()
        }
    }

    fn small_face(seed: u64) -> FaceModel {
        make_face(&FaceConfig {
            width: 64,
            height: 64,
            seed,
            ..FaceConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn ellipsoid_normals_are_unit_and_frontal_at_center() {
        let face = make_face(&FaceConfig {
            width: 64,
            height: 64,
            light_dir: [0.0, 0.0, 1.0],
            ..FaceConfig::default()
        })
        .unwrap();
        for i in face.foreground_indices() {
            let n = face.normal_map[i];
            assert!((dot(&n, &n).sqrt() - 1.0).abs() < 1e-6);
        }
        let (cx, cy) = face.center;
        let c = face.cos_incidence_map()[cy * 64 + cx];
        assert_eq!(c, 1.0);
    }

    #[test]
    fn faces_are_deterministic() {
        assert_eq!(small_face(5), small_face(5));
        assert_ne!(small_face(5).baseline_temp_map, small_face(6).baseline_temp_map);
    }

    #[test]
    fn unknown_preset_is_config_error() {
        assert!(matches!(FacePreset::parse("sphere", None), Err(Error::Config(_))));
        assert!(matches!(FacePreset::parse("mesh-file", None), Err(Error::Config(_))));
    }

    #[test]
    fn baseline_respects_physiological_bounds() {
        let face = make_face(&FaceConfig {
            texture_c: 5.0,
            ..FaceConfig::default()
        })
        .unwrap();
        for i in face.foreground_indices() {
            let t = face.baseline_temp_map[i];
            assert!((27.0..=43.0).contains(&t));
        }
    }

    #[test]
    fn noiseless_render_recovers_bias_and_converges() {
        let face = small_face(1);
        let cfg = RenderConfig {
            schedule: Schedule {
                rest_s: 0.0,
                load_s: 300.0,
                cool_s: 6000.0,
            },
            ..quiet_config()
        };
        let r = SequenceRenderer::new(face.clone(), cfg).unwrap();
        let beta = r.responses()[0].beta_peak_c;
        let cos = face.cos_incidence_map();
        // Cooling onset at t = 300 s is frame 30.
        let (frame, bias) = r.render_frame(30).unwrap();
        for i in 0..face.pixels() {
            assert!((bias[i] - beta * cos[i]).abs() < 1e-12);
            assert!((frame.temps[i] - face.baseline_temp_map[i] - bias[i]).abs() < 1e-6);
        }
        let (late, _) = r.render_frame(r.frame_count() - 1).unwrap();
        for i in 0..face.pixels() {
            assert!((late.temps[i] - face.baseline_temp_map[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn pixels_facing_away_are_unloaded() {
        let face = make_face(&FaceConfig {
            width: 64,
            height: 64,
            light_dir: [1.0, 0.0, 0.2],
            ..FaceConfig::default()
        })
        .unwrap();
        let r = SequenceRenderer::new(face.clone(), quiet_config()).unwrap();
        let bias = r.bias_map(31);
        let signed = face.signed_incidence_map();
        let mut away = 0;
        for i in face.foreground_indices() {
            if signed[i] <= 0.0 {
                away += 1;
                assert_eq!(bias[i], 0.0);
            }
        }
        assert!(away > 0);
    }

    #[test]
    fn darker_face_has_higher_mean_bias() {
        let mean_bias = |mu: f64| {
            let face = make_face(&FaceConfig {
                width: 64,
                height: 64,
                melanin_mu_per_m: mu,
                ..FaceConfig::default()
            })
            .unwrap();
            let r = SequenceRenderer::new(face.clone(), quiet_config()).unwrap();
            face.facial_mean(&r.bias_map(31))
        };
        assert!(mean_bias(4000.0) > mean_bias(800.0));
    }

    #[test]
    fn fever_shifts_face_only() {
        let face = small_face(2);
        let r = SequenceRenderer::new(face.clone(), quiet_config()).unwrap();
        let (frame, bias) = r.render_frame(20).unwrap();
        assert_eq!(inject_fever(&frame, &face.background_mask, 0.0), frame);
        let hot = inject_fever(&frame, &face.background_mask, 1.6);
        let fg: Vec<bool> = face.background_mask.iter().map(|b| !b).collect();
        let delta = hot.masked_mean(&fg).unwrap() - frame.masked_mean(&fg).unwrap();
        assert!((delta - 1.6).abs() < 1e-9);
        assert_eq!(hot.masked_mean(&face.background_mask), frame.masked_mean(&face.background_mask));
        // Labels come from the renderer, not the frame.
        assert_eq!(r.render_frame(20).unwrap().1, bias);
    }

    #[test]
    fn render_is_deterministic_with_noise() {
        let face = small_face(3);
        let cfg = RenderConfig {
            noise: SensorNoise::default().with_seed(11),
            ..quiet_config()
        };
        let a = render_sequence(&face, &cfg).unwrap();
        let b = render_sequence(&face, &cfg).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn weights_for_constant_background() {
        let w = background_weights(&vec![22.0; 100], &CalibrationDetector::default()).unwrap();
        assert!(w.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn weights_drop_at_spike_and_recover() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut means: Vec<f64> = (0..200).map(|_| 22.0 + 0.001 * rng.random_range(-1.0..1.0)).collect();
        means[100] += 2.0;
        let det = CalibrationDetector::default();
        let w = background_weights(&means, &det).unwrap();
        assert_eq!(w[100], 0.0);
        assert!(w[..100].iter().all(|v| *v == 1.0));
        assert!(w[101] < 1.0);
        assert_eq!(w[101 + det.settle_frames], 1.0);
        assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(w[110] > w[105]);
    }

    #[test]
    fn weights_need_background() {
        let frame = ThermalFrame::new(2, 1, vec![30.0, 31.0], 0.0).unwrap();
        assert!(detect_calibration_weights(&[frame], &[false, false], &CalibrationDetector::default()).is_err());
    }

    #[test]
    fn detector_flags_rendered_recalibrations() {
        let face = small_face(4);
        let cfg = RenderConfig {
            noise: SensorNoise {
                recalib_period: 20,
                ..SensorNoise::default()
            }
            .with_seed(9),
            fps: 0.5,
            ..quiet_config()
        };
        let seq = render_sequence(&face, &cfg).unwrap();
        let w = detect_calibration_weights(&seq.frames, &face.background_mask, &CalibrationDetector::default()).unwrap();
        for (k, f) in seq.frames.iter().enumerate() {
            if f.calib_event {
                assert_eq!(w[k], 0.0, "frame {k}");
            }
        }
    }

    #[test]
    fn melanin_index_mapping_spans_cohort_range() {
        let mi_light = melanin_index_for(800.0, 1e-4);
        let mi_dark = melanin_index_for(6000.0, 1e-4);
        assert!((mi_light - 35.0).abs() < 1.0, "{mi_light}");
        assert!((mi_dark - 80.0).abs() < 1.0, "{mi_dark}");
    }
}
