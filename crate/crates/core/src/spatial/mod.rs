//! Single-shot solar-loading correction from one thermal frame.
//!
//! With a spatially homogeneous steady-state temperature `T_bar`, every face
//! pixel satisfies `T(x) = T_bar + B * max(0, l . n(x))`, where `B` is the
//! bias at normal incidence at the time of the frame. Two or more regions
//! with different incidence angles determine `(T_bar, B)` by least squares.
//! Alternatively a trained regressor estimates `B` from a crop of the frame.

pub mod regressor;
pub mod training;

use serde::{Deserialize, Serialize};

pub use regressor::{Architecture, RegressorModel, CROP_SIZE};

use crate::scene::{FaceModel, ThermalFrame};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionObservation {
    pub temp: f64,
    pub cos_incidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialSolveResult {
    pub t_bar: f64,
    /// Bias at normal incidence for this instant [C].
    pub beta_f: f64,
    /// 2-norm condition number of the weighted design matrix.
    pub condition: f64,
    /// The unconstrained solution had negative loading and was clamped.
    pub clamped: bool,
}

/// Least-squares `(T_bar, B)` from at least two regions with unit weights.
pub fn solve_two_point(observations: &[RegionObservation]) -> Result<SpatialSolveResult> {
    solve_weighted(observations, &vec![1.0; observations.len()])
}

/// Weighted least squares of `T_i = T_bar + B * max(0, c_i)`.
pub fn solve_weighted(observations: &[RegionObservation], weights: &[f64]) -> Result<SpatialSolveResult> {
    if observations.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} observations, need at least 2",
            observations.len()
        )));
    }
    if weights.len() != observations.len() {
        return Err(Error::Shape {
            expected: format!("{} weights", observations.len()),
            got: weights.len().to_string(),
        });
    }
    for o in observations {
        if !o.temp.is_finite() || !(-1.0..=1.0).contains(&o.cos_incidence) {
            return Err(Error::Domain(format!("invalid observation {o:?}")));
        }
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::Domain("weights must be finite and non-negative".into()));
    }
    let (mut sw, mut swc, mut swcc, mut swt, mut swct) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut c_min, mut c_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (o, &w) in observations.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let c = o.cos_incidence.max(0.0);
        c_min = c_min.min(c);
        c_max = c_max.max(c);
        sw += w;
        swc += w * c;
        swcc += w * c * c;
        swt += w * o.temp;
        swct += w * c * o.temp;
    }
    if !(c_max - c_min > 1e-12) {
        return Err(Error::RankDeficient(
            "all observations share the same clamped incidence".into(),
        ));
    }
    // Centred form keeps the solve well behaved for large temperatures.
    let c_bar = swc / sw;
    let t_mean = swt / sw;
    let scc = swcc - sw * c_bar * c_bar;
    let sct = swct - sw * c_bar * t_mean;
    let mut beta = sct / scc;
    let mut t_bar = t_mean - beta * c_bar;
    let clamped = beta < 0.0;
    if clamped {
        beta = 0.0;
        t_bar = t_mean;
    }
    // Eigenvalues of the 2x2 normal matrix [[sw, swc], [swc, swcc]].
    let tr = sw + swcc;
    let det = sw * swcc - swc * swc;
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    let (l_max, l_min) = (0.5 * tr + disc, (0.5 * tr - disc).max(f64::MIN_POSITIVE));
    Ok(SpatialSolveResult {
        t_bar,
        beta_f: beta,
        condition: (l_max / l_min).sqrt().max(1.0),
        clamped,
    })
}

/// Foreground observations: bin means over equal-width incidence bins on
/// `[0, max cos]`, weighted by pixel count. Empty bins are skipped.
pub fn binned_observations(frame: &ThermalFrame, face: &FaceModel, bins: usize) -> Result<(Vec<RegionObservation>, Vec<f64>)> {
    check_frame(frame, face)?;
    if bins < 2 {
        return Err(Error::Config("need at least two incidence bins".into()));
    }
    let cos = face.cos_incidence_map();
    let fg = face.foreground_indices();
    let c_max = fg.iter().map(|&i| cos[i]).fold(0.0, f64::max);
    if c_max <= 0.0 {
        return Err(Error::RankDeficient("no face pixel faces the light".into()));
    }
    let mut sum_t = vec![0.0; bins];
    let mut sum_c = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for &i in &fg {
        let b = ((cos[i] / c_max * bins as f64) as usize).min(bins - 1);
        sum_t[b] += frame.temps[i];
        sum_c[b] += cos[i];
        count[b] += 1;
    }
    let mut obs = Vec::new();
    let mut weights = Vec::new();
    for b in 0..bins {
        if count[b] > 0 {
            let n = count[b] as f64;
            obs.push(RegionObservation {
                temp: sum_t[b] / n,
                cos_incidence: sum_c[b] / n,
            });
            weights.push(n);
        }
    }
    Ok((obs, weights))
}

fn check_frame(frame: &ThermalFrame, face: &FaceModel) -> Result<()> {
    if frame.width != face.width || frame.height != face.height {
        return Err(Error::Shape {
            expected: format!("{}x{} frame", face.width, face.height),
            got: format!("{}x{}", frame.width, frame.height),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Linear,
    Learned,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Method::Linear),
            "learned" => Ok(Method::Learned),
            other => Err(Error::Config(format!("unknown method '{other}' (expected linear or learned)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionOptions {
    /// Number of incidence bins for the linear method.
    pub bins: usize,
    /// Crop centre `(x, y)` for the learned method; the face centre when unset.
    pub crop_center: Option<(usize, usize)>,
}

impl Default for CorrectionOptions {
    fn default() -> Self {
        Self {
            bins: 8,
            crop_center: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub corrected: ThermalFrame,
    /// Estimated bias at normal incidence [C].
    pub beta_f: f64,
    /// Steady-state temperature from the linear solve.
    pub t_bar: Option<f64>,
    pub condition: Option<f64>,
    pub clamped: bool,
    pub facial_mean_before: f64,
    pub facial_mean_after: f64,
}

/// Subtracts the estimated bias field `beta_f * max(0, l . n)` from face
/// pixels. Background pixels are copied unchanged.
pub fn correct_frame(
    frame: &ThermalFrame,
    face: Option<&FaceModel>,
    model: Option<&RegressorModel>,
    method: Method,
    options: &CorrectionOptions,
) -> Result<Correction> {
    let face = face.ok_or_else(|| Error::Config("correction needs face normals and mask".into()))?;
    check_frame(frame, face)?;
    let (beta_f, t_bar, condition, clamped) = match method {
        Method::Linear => {
            let (obs, w) = binned_observations(frame, face, options.bins)?;
            let s = solve_weighted(&obs, &w)?;
            (s.beta_f, Some(s.t_bar), Some(s.condition), s.clamped)
        }
        Method::Learned => {
            let model = model.ok_or_else(|| Error::Config("learned method needs a model".into()))?;
            let center = options.crop_center.unwrap_or(face.center);
            let crop = extract_crop(&frame.temps, frame.width, frame.height, center, model.arch.input)?;
            (model.forward(&crop)?, None, None, false)
        }
    };
    Ok(apply_bias(frame, face, beta_f, t_bar, condition, clamped))
}

fn apply_bias(
    frame: &ThermalFrame,
    face: &FaceModel,
    beta_f: f64,
    t_bar: Option<f64>,
    condition: Option<f64>,
    clamped: bool,
) -> Correction {
    let mut corrected = frame.clone();
    if beta_f != 0.0 {
        let cos = face.cos_incidence_map();
        for i in face.foreground_indices() {
            corrected.temps[i] -= beta_f * cos[i];
        }
    }
    Correction {
        facial_mean_before: face.facial_mean(&frame.temps),
        facial_mean_after: face.facial_mean(&corrected.temps),
        corrected,
        beta_f,
        t_bar,
        condition,
        clamped,
    }
}

/// Square crop of side `size` centred at `center` (top-left at
/// `center - size / 2`).
pub fn extract_crop<T: Copy>(values: &[T], width: usize, height: usize, center: (usize, usize), size: usize) -> Result<Vec<T>> {
    let (cx, cy) = center;
    let x0 = cx.checked_sub(size / 2);
    let y0 = cy.checked_sub(size / 2);
    match (x0, y0) {
        (Some(x0), Some(y0)) if x0 + size <= width && y0 + size <= height => {
            let mut out = Vec::with_capacity(size * size);
            for y in y0..y0 + size {
                out.extend_from_slice(&values[y * width + x0..y * width + x0 + size]);
            }
            Ok(out)
        }
        _ => Err(Error::Shape {
            expected: format!("{size}x{size} crop at ({cx}, {cy}) inside {width}x{height}"),
            got: "crop outside the frame".into(),
        }),
    }
}
