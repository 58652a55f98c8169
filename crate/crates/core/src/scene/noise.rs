//! Synthetic thermal sensor noise: Gaussian read noise, a random-walk offset
//! drift, and periodic flat-field recalibrations that reset the drift and
//! leave a decaying spike behind.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Frames over which a recalibration spike decays by `e`.
const SPIKE_DECAY_FRAMES: f64 = 2.0;
/// Spike contributions below this fraction of the initial spike are dropped.
const SPIKE_CUTOFF: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorNoise {
    /// Per-pixel, per-frame Gaussian noise [C].
    pub read_sigma: f64,
    /// Random-walk increment of the global offset per frame [C].
    pub drift_step_sigma: f64,
    /// Frames between flat-field recalibrations.
    pub recalib_period: usize,
    /// Offset injected at a recalibration frame [C].
    pub recalib_spike: f64,
    pub seed: u64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self {
            read_sigma: 0.05,
            drift_step_sigma: 0.005,
            recalib_period: 150,
            recalib_spike: 1.0,
            seed: 0,
        }
    }
}

impl SensorNoise {
    pub fn off() -> Self {
        Self {
            read_sigma: 0.0,
            drift_step_sigma: 0.0,
            recalib_period: usize::MAX,
            recalib_spike: 0.0,
            seed: 0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.read_sigma >= 0.0) || !(self.drift_step_sigma >= 0.0) {
            return Err(Error::Config("noise sigmas must be non-negative".into()));
        }
        if self.recalib_period < 1 {
            return Err(Error::Config("recalibration period must be at least one frame".into()));
        }
        if !self.recalib_spike.is_finite() {
            return Err(Error::Config("recalibration spike must be finite".into()));
        }
        Ok(())
    }

    pub fn is_calibration_frame(&self, frame: usize) -> bool {
        frame > 0 && frame % self.recalib_period == 0
    }

    /// Independent random stream for one frame; the same `(seed, frame)`
    /// always yields the same stream regardless of rendering order.
    pub fn frame_rng(&self, frame: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(frame as u64 + 1);
        rng
    }

    /// Global offset of every frame in `0..count` (drift plus recalibration
    /// spike) [C].
    pub fn frame_offsets(&self, count: usize) -> Vec<f64> {
        let mut offsets = Vec::with_capacity(count);
        let mut drift = 0.0;
        let mut last_calibration: Option<usize> = None;
        let step = Normal::new(0.0, self.drift_step_sigma.max(0.0)).expect("finite sigma");
        for k in 0..count {
            if self.is_calibration_frame(k) {
                drift = 0.0;
                last_calibration = Some(k);
            } else if k > 0 && self.drift_step_sigma > 0.0 {
                drift += step.sample(&mut self.frame_rng(k));
            }
            let spike = match last_calibration {
                Some(c) => {
                    let decay = (-((k - c) as f64) / SPIKE_DECAY_FRAMES).exp();
                    if decay > SPIKE_CUTOFF {
                        self.recalib_spike * decay
                    } else {
                        0.0
                    }
                }
                None => 0.0,
            };
            offsets.push(drift + spike);
        }
        offsets
    }

    /// Per-pixel read noise for one frame. The first draw of each frame
    /// stream is reserved for the drift increment.
    pub fn read_noise(&self, frame: usize, pixels: usize) -> Vec<f64> {
        if self.read_sigma == 0.0 {
            return vec![0.0; pixels];
        }
        let mut rng = self.frame_rng(frame);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let _drift_draw: f64 = unit.sample(&mut rng);
        (0..pixels).map(|_| self.read_sigma * unit.sample(&mut rng)).collect()
    }
}
