//! Small convolutional regressor for the single-shot solar-loading bias.
//!
//! Architecture (valid 3x3 convolutions, stride 1, ReLU, 2x2 max pooling):
//!
//! ```text
//! crop s x s -> conv 1->8 -> relu -> pool -> conv 8->16 -> relu -> pool
//!            -> flatten -> fc 64 -> relu -> fc 16 -> relu -> fc 1
//! ```
//!
//! The input crop is shifted to zero mean before the first layer. All
//! parameters live in one flat vector in this order: conv1 weights
//! `[8][1][3][3]`, conv1 bias `[8]`, conv2 weights `[16][8][3][3]`, conv2
//! bias `[16]`, fc1 weights `[64][flat]`, fc1 bias `[64]`, fc2 weights
//! `[16][64]`, fc2 bias `[16]`, fc3 weights `[1][16]`, fc3 bias `[1]`, where
//! `flat = 16 * p * p` and `p` is the side after the second pooling stage.
//!
//! Model files: a little-endian `u32` header length, the JSON header, then
//! the parameters as little-endian `f32` in the order above.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CROP_SIZE: usize = 50;
pub const MODEL_FORMAT: &str = "solarload.regressor/1";
const KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub fc1: usize,
    pub fc2: usize,
    pub kernel: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self::with_input(CROP_SIZE)
    }
}

/// Offsets of each parameter block in the flat vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    w4: usize,
    b4: usize,
    w5: usize,
    b5: usize,
    total: usize,
}

impl Architecture {
    pub fn with_input(input: usize) -> Self {
        Self {
            input,
            conv1: 8,
            conv2: 16,
            fc1: 64,
            fc2: 16,
            kernel: KERNEL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel != KERNEL {
            return Err(Error::Config(format!("only {KERNEL}x{KERNEL} kernels are supported")));
        }
        let c1 = self.input.checked_sub(2).unwrap_or(0);
        if c1 < 2 || c1 % 2 != 0 || (c1 / 2).checked_sub(2).unwrap_or(0) < 2 || (c1 / 2 - 2) % 2 != 0 {
            return Err(Error::Config(format!(
                "input side {} does not divide evenly through the conv/pool stages",
                self.input
            )));
        }
        if self.conv1 == 0 || self.conv2 == 0 || self.fc1 == 0 || self.fc2 == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    fn side1(&self) -> usize {
        self.input - 2
    }
    fn pool1(&self) -> usize {
        self.side1() / 2
    }
    fn side2(&self) -> usize {
        self.pool1() - 2
    }
    fn pool2(&self) -> usize {
        self.side2() / 2
    }

    /// Length of the flattened feature vector entering the first affine stage.
    pub fn flat(&self) -> usize {
        self.conv2 * self.pool2() * self.pool2()
    }

    fn layout(&self) -> Layout {
        let k2 = self.kernel * self.kernel;
        let w1 = 0;
        let b1 = w1 + self.conv1 * k2;
        let w2 = b1 + self.conv1;
        let b2 = w2 + self.conv2 * self.conv1 * k2;
        let w3 = b2 + self.conv2;
        let b3 = w3 + self.fc1 * self.flat();
        let w4 = b3 + self.fc1;
        let b4 = w4 + self.fc2 * self.fc1;
        let w5 = b4 + self.fc2;
        let b5 = w5 + self.fc2;
        Layout {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            w4,
            b4,
            w5,
            b5,
            total: b5 + 1,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }
}

/// Training provenance stored in the model header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingInfo {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub best_epoch: usize,
    pub validation_mae_c: f64,
    pub train_samples: usize,
    pub validation_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    architecture: Architecture,
    nonlinearity: String,
    pooling: String,
    input_normalization: String,
    parameter_count: usize,
    training: TrainingInfo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressorModel {
    pub arch: Architecture,
    pub params: Vec<f64>,
    pub training: TrainingInfo,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    input: Vec<f64>,
    /// Pooled conv1 output after ReLU, and the argmax index into the
    /// pre-pool map for each pooled cell.
    p1: Vec<f64>,
    p1_arg: Vec<usize>,
    c1_pos: Vec<bool>,
    p2: Vec<f64>,
    p2_arg: Vec<usize>,
    c2_pos: Vec<bool>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    pub output: f64,
}

impl RegressorModel {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            arch,
            params: vec![0.0; arch.param_count()],
            training: TrainingInfo::default(),
        })
    }

    /// He-normal weights, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = arch.layout();
        let k2 = (arch.kernel * arch.kernel) as f64;
        let blocks = [
            (l.w1, l.b1, k2),
            (l.w2, l.b2, k2 * arch.conv1 as f64),
            (l.w3, l.b3, arch.flat() as f64),
            (l.w4, l.b4, arch.fc1 as f64),
            (l.w5, l.b5, arch.fc2 as f64),
        ];
        for (start, end, fan_in) in blocks {
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive fan-in");
            for p in &mut model.params[start..end] {
                *p = normal.sample(&mut rng);
            }
        }
        Ok(model)
    }

    fn check_crop(&self, crop: &[f64]) -> Result<()> {
        let n = self.arch.input * self.arch.input;
        if crop.len() != n {
            return Err(Error::Shape {
                expected: format!("{0}x{0} crop ({n} values)", self.arch.input),
                got: format!("{} values", crop.len()),
            });
        }
        Ok(())
    }

    /// Bias estimate for a crop of temperatures [C].
    pub fn forward(&self, crop: &[f64]) -> Result<f64> {
        Ok(self.forward_cached(crop)?.output)
    }

    pub fn forward_cached(&self, crop: &[f64]) -> Result<Activations> {
        self.check_crop(crop)?;
        let a = &self.arch;
        let l = a.layout();
        let p = &self.params;
        let mean = crop.iter().sum::<f64>() / crop.len() as f64;
        let input: Vec<f64> = crop.iter().map(|v| v - mean).collect();

        let c1 = conv_valid(&input, 1, a.input, &p[l.w1..l.b1], &p[l.b1..l.w2], a.conv1);
        let (c1_pos, r1) = relu(&c1);
        let (p1, p1_arg) = max_pool(&r1, a.conv1, a.side1());
        let c2 = conv_valid(&p1, a.conv1, a.pool1(), &p[l.w2..l.b2], &p[l.b2..l.w3], a.conv2);
        let (c2_pos, r2) = relu(&c2);
        let (p2, p2_arg) = max_pool(&r2, a.conv2, a.side2());
        let h1 = dense(&p2, &p[l.w3..l.b3], &p[l.b3..l.w4], a.fc1)
            .into_iter()
            .map(|v| v.max(0.0))
            .collect::<Vec<_>>();
        let h2 = dense(&h1, &p[l.w4..l.b4], &p[l.b4..l.w5], a.fc2)
            .into_iter()
            .map(|v| v.max(0.0))
            .collect::<Vec<_>>();
        let output = dense(&h2, &p[l.w5..l.b5], &p[l.b5..l.total], 1)[0];
        Ok(Activations {
            input,
            p1,
            p1_arg,
            c1_pos,
            p2,
            p2_arg,
            c2_pos,
            h1,
            h2,
            output,
        })
    }

    /// Accumulates `d_output * d(output)/d(params)` into `grads`.
    pub fn backward_into(&self, acts: &Activations, d_output: f64, grads: &mut [f64]) {
        let a = &self.arch;
        let l = a.layout();
        let p = &self.params;

        // fc3
        grads[l.b5] += d_output;
        let mut dh2 = vec![0.0; a.fc2];
        for j in 0..a.fc2 {
            grads[l.w5 + j] += d_output * acts.h2[j];
            dh2[j] = if acts.h2[j] > 0.0 { d_output * p[l.w5 + j] } else { 0.0 };
        }
        // fc2
        let mut dh1 = vec![0.0; a.fc1];
        for o in 0..a.fc2 {
            let g = dh2[o];
            if g == 0.0 {
                continue;
            }
            grads[l.b4 + o] += g;
            let row = l.w4 + o * a.fc1;
            for i in 0..a.fc1 {
                grads[row + i] += g * acts.h1[i];
                dh1[i] += g * p[row + i];
            }
        }
        for i in 0..a.fc1 {
            if acts.h1[i] <= 0.0 {
                dh1[i] = 0.0;
            }
        }
        // fc1
        let flat = a.flat();
        let mut dp2 = vec![0.0; flat];
        for o in 0..a.fc1 {
            let g = dh1[o];
            if g == 0.0 {
                continue;
            }
            grads[l.b3 + o] += g;
            let row = l.w3 + o * flat;
            let (gw, w) = (&mut grads[row..row + flat], &p[row..row + flat]);
            for i in 0..flat {
                gw[i] += g * acts.p2[i];
                dp2[i] += g * w[i];
            }
        }
        // pool2 + relu2
        let side2 = a.side2();
        let mut dc2 = vec![0.0; a.conv2 * side2 * side2];
        for (k, &arg) in acts.p2_arg.iter().enumerate() {
            if acts.c2_pos[arg] {
                dc2[arg] += dp2[k];
            }
        }
        // conv2
        let dp1 = conv_backward(
            &acts.p1,
            a.conv1,
            a.pool1(),
            &p[l.w2..l.b2],
            a.conv2,
            &dc2,
            &mut grads[l.w2..l.w3],
            true,
        );
        // pool1 + relu1
        let side1 = a.side1();
        let mut dc1 = vec![0.0; a.conv1 * side1 * side1];
        for (k, &arg) in acts.p1_arg.iter().enumerate() {
            if acts.c1_pos[arg] {
                dc1[arg] += dp1[k];
            }
        }
        conv_backward(
            &acts.input,
            1,
            a.input,
            &p[l.w1..l.b1],
            a.conv1,
            &dc1,
            &mut grads[l.w1..l.w2],
            false,
        );
    }

    /// Gradient of `(output - target)^2` with respect to every parameter,
    /// and the loss itself.
    pub fn backward(&self, crop: &[f64], target: f64) -> Result<(Vec<f64>, f64)> {
        let acts = self.forward_cached(crop)?;
        let mut grads = vec![0.0; self.params.len()];
        let err = acts.output - target;
        self.backward_into(&acts, 2.0 * err, &mut grads);
        Ok((grads, err * err))
    }

    /// Model whose output on a horizontally flipped crop equals this
    /// model's output on the original crop.
    pub fn mirrored(&self) -> Self {
        let a = &self.arch;
        let l = a.layout();
        let mut out = self.clone();
        let k = a.kernel;
        let flip_kernels = |params: &mut [f64], src: &[f64], count: usize| {
            for c in 0..count {
                for y in 0..k {
                    for x in 0..k {
                        params[c * k * k + y * k + x] = src[c * k * k + y * k + (k - 1 - x)];
                    }
                }
            }
        };
        flip_kernels(&mut out.params[l.w1..l.b1], &self.params[l.w1..l.b1], a.conv1);
        flip_kernels(&mut out.params[l.w2..l.b2], &self.params[l.w2..l.b2], a.conv2 * a.conv1);
        let s = a.pool2();
        let flat = a.flat();
        for o in 0..a.fc1 {
            for c in 0..a.conv2 {
                for y in 0..s {
                    for x in 0..s {
                        let dst = l.w3 + o * flat + c * s * s + y * s + x;
                        let src = l.w3 + o * flat + c * s * s + y * s + (s - 1 - x);
                        out.params[dst] = self.params[src];
                    }
                }
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            format: MODEL_FORMAT.into(),
            architecture: self.arch,
            nonlinearity: "relu".into(),
            pooling: "max 2x2".into(),
            input_normalization: "mean-shift".into(),
            parameter_count: self.params.len(),
            training: self.training.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut bytes = Vec::with_capacity(4 + json.len() + 4 * self.params.len());
        bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&json);
        for p in &self.params {
            bytes.extend_from_slice(&(*p as f32).to_le_bytes());
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message,
        };
        if bytes.len() < 4 {
            return Err(bad("file too short for a header".into()));
        }
        let len = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
        let body = bytes.get(4..4 + len).ok_or_else(|| bad("truncated header".into()))?;
        let header: Header = serde_json::from_slice(body)?;
        if header.format != MODEL_FORMAT {
            return Err(bad(format!("unsupported model format '{}'", header.format)));
        }
        header.architecture.validate()?;
        let expected = header.architecture.param_count();
        let block = &bytes[4 + len..];
        if header.parameter_count != expected || block.len() != 4 * expected {
            return Err(Error::Shape {
                expected: format!("{expected} parameters"),
                got: format!("{} bytes of parameters", block.len()),
            });
        }
        let params: Vec<f64> = block
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if params.iter().any(|p| !p.is_finite()) {
            return Err(bad("non-finite parameter".into()));
        }
        Ok(Self {
            arch: header.architecture,
            params,
            training: header.training,
        })
    }
}

fn relu(values: &[f64]) -> (Vec<bool>, Vec<f64>) {
    let pos: Vec<bool> = values.iter().map(|v| *v > 0.0).collect();
    let out = values.iter().map(|v| v.max(0.0)).collect();
    (pos, out)
}

/// Valid 3x3 convolution of `channels` planes of `side x side`.
fn conv_valid(input: &[f64], channels: usize, side: usize, weights: &[f64], bias: &[f64], outputs: usize) -> Vec<f64> {
    let o_side = side - 2;
    let plane = o_side * o_side;
    let mut out = vec![0.0; outputs * plane];
    for o in 0..outputs {
        let dst = &mut out[o * plane..(o + 1) * plane];
        dst.iter_mut().for_each(|v| *v = bias[o]);
        for c in 0..channels {
            let src = &input[c * side * side..(c + 1) * side * side];
            let w = &weights[(o * channels + c) * 9..(o * channels + c + 1) * 9];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wk = w[ky * 3 + kx];
                    for y in 0..o_side {
                        let row = &src[(y + ky) * side + kx..(y + ky) * side + kx + o_side];
                        let d = &mut dst[y * o_side..(y + 1) * o_side];
                        for (dv, sv) in d.iter_mut().zip(row) {
                            *dv += wk * sv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of a valid 3x3 convolution. Weight (and trailing bias)
/// gradients are accumulated into `grads` (weights then biases); the input
/// gradient is returned when requested.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    channels: usize,
    side: usize,
    weights: &[f64],
    outputs: usize,
    d_out: &[f64],
    grads: &mut [f64],
    want_input: bool,
) -> Vec<f64> {
    let o_side = side - 2;
    let plane = o_side * o_side;
    let n_w = outputs * channels * 9;
    let mut d_in = if want_input {
        vec![0.0; channels * side * side]
    } else {
        Vec::new()
    };
    for o in 0..outputs {
        let g = &d_out[o * plane..(o + 1) * plane];
        grads[n_w + o] += g.iter().sum::<f64>();
        for c in 0..channels {
            let src = &input[c * side * side..(c + 1) * side * side];
            let base = (o * channels + c) * 9;
            for ky in 0..3 {
                for kx in 0..3 {
                    let mut acc = 0.0;
                    for y in 0..o_side {
                        let row = &src[(y + ky) * side + kx..(y + ky) * side + kx + o_side];
                        let gr = &g[y * o_side..(y + 1) * o_side];
                        acc += row.iter().zip(gr).map(|(a, b)| a * b).sum::<f64>();
                    }
                    grads[base + ky * 3 + kx] += acc;
                    if want_input {
                        let wk = weights[base + ky * 3 + kx];
                        let dst = &mut d_in[c * side * side..(c + 1) * side * side];
                        for y in 0..o_side {
                            let gr = &g[y * o_side..(y + 1) * o_side];
                            let row = &mut dst[(y + ky) * side + kx..(y + ky) * side + kx + o_side];
                            for (r, gv) in row.iter_mut().zip(gr) {
                                *r += wk * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    d_in
}

/// 2x2 max pooling; returns pooled values and flat argmax indices.
fn max_pool(input: &[f64], channels: usize, side: usize) -> (Vec<f64>, Vec<usize>) {
    let half = side / 2;
    let mut out = Vec::with_capacity(channels * half * half);
    let mut arg = Vec::with_capacity(channels * half * half);
    for c in 0..channels {
        for y in 0..half {
            for x in 0..half {
                let mut best_idx = c * side * side + 2 * y * side + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = c * side * side + (2 * y + dy) * side + 2 * x + dx;
                    if input[idx] > input[best_idx] {
                        best_idx = idx;
                    }
                }
                out.push(input[best_idx]);
                arg.push(best_idx);
            }
        }
    }
    (out, arg)
}

fn dense(input: &[f64], weights: &[f64], bias: &[f64], outputs: usize) -> Vec<f64> {
    let n = input.len();
    (0..outputs)
        .map(|o| bias[o] + weights[o * n..(o + 1) * n].iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
        .collect()
}

/// Mirrors a square crop left to right.
pub fn flip_horizontal(crop: &[f64], side: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(crop.len());
    for y in 0..side {
        for x in 0..side {
            out.push(crop[y * side + side - 1 - x]);
        }
    }
    out
}
