//! Simulated training data, Adam training loop and the leave-one-identity-out
//! protocol for the bias regressor.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::regressor::{flip_horizontal, Architecture, RegressorModel, TrainingInfo};
use super::extract_crop;
use crate::scene::format::Dataset;
use crate::scene::{make_face, FaceConfig, RenderConfig, SequenceRenderer, FEVER_OFFSET_C};
use crate::{Error, Result};

/// One training example: a crop, which of its pixels belong to the face,
/// and the bias at normal incidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub crop: Vec<f64>,
    pub face_mask: Vec<bool>,
    pub label: f64,
    pub identity: usize,
}

impl Sample {
    /// Crop with the requested augmentations applied. Neither changes the
    /// label.
    pub fn augmented(&self, side: usize, flip: bool, fever_c: f64) -> Vec<f64> {
        let mut crop = self.crop.clone();
        if fever_c != 0.0 {
            for (v, face) in crop.iter_mut().zip(&self.face_mask) {
                if *face {
                    *v += fever_c;
                }
            }
        }
        if flip {
            crop = flip_horizontal(&crop, side);
        }
        crop
    }
}

/// Face configurations for `count` simulated identities spanning light to
/// dark skin (melanin 800..6000 m^-1) and core temperatures of 36.3..37.5 C.
pub fn cohort(count: usize, seed: u64, width: usize, height: usize) -> Vec<FaceConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x636f_686f_7274);
    (0..count)
        .map(|i| {
            let frac = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.5 };
            FaceConfig {
                width,
                height,
                melanin_mu_per_m: 800.0 * (6000.0_f64 / 800.0).powf(frac),
                core_temp_c: rng.random_range(36.3..37.5),
                seed: rng.random(),
                ..FaceConfig::default()
            }
        })
        .collect()
}

/// Renders every `stride`-th frame of one identity and cuts crops at the
/// face centre.
pub fn identity_samples(
    identity: usize,
    face: &FaceConfig,
    render: &RenderConfig,
    stride: usize,
    side: usize,
) -> Result<Vec<Sample>> {
    let model = make_face(face)?;
    let renderer = SequenceRenderer::new(model.clone(), render.clone())?;
    let (w, h) = (model.width, model.height);
    let face_pixels: Vec<bool> = model.background_mask.iter().map(|b| !b).collect();
    let face_mask = extract_crop(&face_pixels, w, h, model.center, side)?;
    let mut out = Vec::new();
    for k in (0..renderer.frame_count()).step_by(stride.max(1)) {
        let (frame, _) = renderer.render_frame(k)?;
        out.push(Sample {
            crop: extract_crop(&frame.temps, w, h, model.center, side)?,
            face_mask: face_mask.clone(),
            label: renderer.bias_scale(k),
            identity,
        });
    }
    Ok(out)
}

/// Samples from a stored dataset. Labels are recomputed from the stored
/// solar response and schedule, exactly as the renderer derives them.
pub fn dataset_samples(identity: usize, dataset: &Dataset, stride: usize, side: usize) -> Result<Vec<Sample>> {
    let meta = &dataset.meta;
    let face = dataset.face()?;
    let face_pixels: Vec<bool> = face.background_mask.iter().map(|b| !b).collect();
    let face_mask = extract_crop(&face_pixels, face.width, face.height, face.center, side)?;
    let r = &meta.response;
    let mut out = Vec::new();
    for k in (0..dataset.frame_count()).step_by(stride.max(1)) {
        let frame = dataset.frame(k)?;
        out.push(Sample {
            crop: extract_crop(&frame.temps, frame.width, frame.height, face.center, side)?,
            face_mask: face_mask.clone(),
            label: r.beta_peak_c * meta.schedule.loading_fraction(frame.timestamp, r.heating_rate, r.cooling_rate),
            identity,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub flip_probability: f64,
    pub fever_probability: f64,
    pub fever_offset_c: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            flip_probability: 0.5,
            fever_probability: 0.5,
            fever_offset_c: FEVER_OFFSET_C,
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Mean absolute error of the model's bias estimates, optionally with a
/// fever offset added to the face pixels of every crop.
pub fn mean_abs_error(model: &RegressorModel, samples: &[Sample], fever_c: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples to evaluate".into()));
    }
    let side = model.arch.input;
    let mut total = 0.0;
    for s in samples {
        total += (model.forward(&s.augmented(side, false, fever_c))? - s.label).abs();
    }
    Ok(total / samples.len() as f64)
}

/// Mean `|f(x) - f(flip x)|` over the samples.
pub fn mean_flip_gap(model: &RegressorModel, samples: &[Sample]) -> Result<f64> {
    let side = model.arch.input;
    let mut total = 0.0;
    for s in samples {
        total += (model.forward(&s.crop)? - model.forward(&flip_horizontal(&s.crop, side))?).abs();
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Trains with Adam on squared error, applying random flips and fever
/// offsets, and returns the parameters with the best validation MAE.
pub fn train_regressor(train: &[Sample], validation: &[Sample], arch: Architecture, cfg: &TrainConfig) -> Result<RegressorModel> {
    if train.is_empty() || validation.is_empty() {
        return Err(Error::InsufficientData("training and validation sets must be non-empty".into()));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Config("batch size and learning rate must be positive".into()));
    }
    let side = arch.input;
    let mut model = RegressorModel::init(arch, cfg.seed)?;
    let mut best = model.clone();
    let mut best_mae = mean_abs_error(&model, validation, 0.0)?;
    let mut best_epoch = 0;
    let mut adam = Adam::new(model.params.len(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x7472_6169_6e));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grads = vec![0.0; model.params.len()];
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            for &idx in batch {
                let s = &train[idx];
                let flip = rng.random_bool(cfg.flip_probability);
                let fever = if rng.random_bool(cfg.fever_probability) {
                    cfg.fever_offset_c
                } else {
                    0.0
                };
                let crop = s.augmented(side, flip, fever);
                let acts = model.forward_cached(&crop)?;
                let err = acts.output - s.label;
                epoch_loss += err * err;
                model.backward_into(&acts, 2.0 * err / batch.len() as f64, &mut grads);
            }
            adam.step(&mut model.params, &grads);
        }
        let val_mae = mean_abs_error(&model, validation, 0.0)?;
        if !epoch_loss.is_finite() || !val_mae.is_finite() || !model.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("loss diverged (train loss {epoch_loss}, validation MAE {val_mae})"),
            });
        }
        if val_mae < best_mae {
            best_mae = val_mae;
            best = model.clone();
            best_epoch = epoch;
        }
    }
    best.training = TrainingInfo {
        seed: cfg.seed,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        best_epoch,
        validation_mae_c: best_mae,
        train_samples: train.len(),
        validation_samples: validation.len(),
    };
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub test_identity: usize,
    pub validation_identities: Vec<usize>,
    /// Regressor MAE on the held-out identity [C].
    pub test_mae: f64,
    /// MAE of predicting no bias on the held-out identity [C].
    pub uncorrected_mae: f64,
    pub validation_mae: f64,
    pub validation_fever_mae: f64,
    pub validation_flip_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub folds: Vec<FoldResult>,
    pub test_mae: f64,
    pub uncorrected_mae: f64,
    pub validation_mae: f64,
    pub validation_fever_mae: f64,
    pub validation_flip_gap: f64,
}

/// Leave-one-identity-out: each identity is the test set once, the next
/// `validation_count` identities (cyclically) form the validation set and
/// the rest train the model. Fold `i` trains with seed `cfg.seed + i`.
pub fn leave_one_out(
    samples: &[Sample],
    validation_count: usize,
    arch: Architecture,
    cfg: &TrainConfig,
) -> Result<LooReport> {
    let mut ids: Vec<usize> = samples.iter().map(|s| s.identity).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < validation_count + 2 {
        return Err(Error::InsufficientData(format!(
            "{} identities cannot supply a test, {validation_count} validation and a training identity",
            ids.len()
        )));
    }
    let mut folds = Vec::with_capacity(ids.len());
    for (fold, &test_id) in ids.iter().enumerate() {
        let val_ids: Vec<usize> = (1..=validation_count).map(|j| ids[(fold + j) % ids.len()]).collect();
        let pick = |pred: &dyn Fn(usize) -> bool| -> Vec<Sample> {
            samples.iter().filter(|s| pred(s.identity)).cloned().collect()
        };
        let test = pick(&|id| id == test_id);
        let val = pick(&|id| val_ids.contains(&id));
        let train = pick(&|id| id != test_id && !val_ids.contains(&id));
        let fold_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(fold as u64),
            ..*cfg
        };
        let model = train_regressor(&train, &val, arch, &fold_cfg)?;
        folds.push(FoldResult {
            test_identity: test_id,
            validation_identities: val_ids,
            test_mae: mean_abs_error(&model, &test, 0.0)?,
            uncorrected_mae: test.iter().map(|s| s.label.abs()).sum::<f64>() / test.len() as f64,
            validation_mae: model.training.validation_mae_c,
            validation_fever_mae: mean_abs_error(&model, &val, cfg.fever_offset_c)?,
            validation_flip_gap: mean_flip_gap(&model, &val)?,
        });
    }
    let avg = |f: &dyn Fn(&FoldResult) -> f64| folds.iter().map(f).sum::<f64>() / folds.len() as f64;
    Ok(LooReport {
        test_mae: avg(&|f| f.test_mae),
        uncorrected_mae: avg(&|f| f.uncorrected_mae),
        validation_mae: avg(&|f| f.validation_mae),
        validation_fever_mae: avg(&|f| f.validation_fever_mae),
        validation_flip_gap: avg(&|f| f.validation_flip_gap),
        folds,
    })
}
