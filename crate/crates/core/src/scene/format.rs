//! On-disk dataset layout.
//!
//! A dataset directory holds:
//!
//! - `meta.json`: frame geometry, schedule, seeds and every parameter needed
//!   to regenerate the face and the sequence;
//! - `frames.bin`: reported temperatures [C] as little-endian `f32`,
//!   row-major within a frame, frames back to back;
//! - `truth.bin`: same layout, the thermoneutral baseline map first and then
//!   one solar-bias map per frame;
//! - `events.csv`: `frame,calib_event` with `calib_event` 0 or 1.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{make_face, melanin_index_for, FaceConfig, FaceModel, RenderConfig, Schedule, SequenceRenderer, ThermalFrame};
use crate::bioheat::SolarResponse;
use crate::{Error, Result};

pub const SCHEMA: &str = "solarload.dataset/1";
pub const META_FILE: &str = "meta.json";
pub const FRAMES_FILE: &str = "frames.bin";
pub const TRUTH_FILE: &str = "truth.bin";
pub const EVENTS_FILE: &str = "events.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema: String,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub count: usize,
    pub schedule: Schedule,
    pub seed: u64,
    pub face: FaceConfig,
    pub render: RenderConfig,
    /// Melanin index of the face (colorimeter convention).
    pub melanin_index: f64,
    /// Solar response at the face melanin level, normal incidence.
    pub response: SolarResponse,
}

impl DatasetMeta {
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

/// Renders a face and streams the sequence into `dir`, one frame at a time.
pub fn write_dataset(dir: &Path, face_config: &FaceConfig, render: &RenderConfig) -> Result<DatasetMeta> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let face = make_face(face_config)?;
    let renderer = SequenceRenderer::new(face, render.clone())?;
    let face = renderer.face();
    let meta = DatasetMeta {
        schema: SCHEMA.to_string(),
        width: face.width,
        height: face.height,
        fps: render.fps,
        count: renderer.frame_count(),
        schedule: render.schedule,
        seed: face_config.seed,
        face: face_config.clone(),
        render: render.clone(),
        melanin_index: melanin_index_for(face_config.melanin_mu_per_m, render.tissue.epidermis_thickness_m()),
        response: renderer.responses()[0],
    };

    let mut frames = Writer::create(&dir.join(FRAMES_FILE))?;
    let mut truth = Writer::create(&dir.join(TRUTH_FILE))?;
    let mut events = Writer::create(&dir.join(EVENTS_FILE))?;
    truth.floats(&face.baseline_temp_map)?;
    events.text("frame,calib_event\n")?;
    for k in 0..renderer.frame_count() {
        let (frame, bias) = renderer.render_frame(k)?;
        frames.floats(&frame.temps)?;
        truth.floats(&bias)?;
        events.text(&format!("{k},{}\n", u8::from(frame.calib_event)))?;
    }
    frames.finish()?;
    truth.finish()?;
    events.finish()?;
    write_meta(dir, &meta)?;
    Ok(meta)
}

pub fn write_meta(dir: &Path, meta: &DatasetMeta) -> Result<()> {
    let path = dir.join(META_FILE);
    let mut text = serde_json::to_string_pretty(meta)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Writes frames in the `frames.bin` layout.
pub fn write_frames(path: &Path, frames: &[ThermalFrame]) -> Result<()> {
    let mut w = Writer::create(path)?;
    for f in frames {
        w.floats(&f.temps)?;
    }
    w.finish()
}

struct Writer {
    path: PathBuf,
    inner: BufWriter<File>,
}

impl Writer {
    fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            inner: BufWriter::new(file),
        })
    }

    fn floats(&mut self, values: &[f64]) -> Result<()> {
        let mut bytes = Vec::with_capacity(values.len() * 4);
        for v in values {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        self.inner.write_all(&bytes).map_err(|e| Error::io(&self.path, e))
    }

    fn text(&mut self, s: &str) -> Result<()> {
        self.inner.write_all(s.as_bytes()).map_err(|e| Error::io(&self.path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Read access to a dataset directory. Frames are read on demand.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(META_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: DatasetMeta = serde_json::from_str(&text)?;
        if meta.schema != SCHEMA {
            return Err(Error::Config(format!(
                "{}: unsupported schema '{}', expected '{SCHEMA}'",
                path.display(),
                meta.schema
            )));
        }
        let expected = (meta.pixels() * meta.count * 4) as u64;
        let frames = dir.join(FRAMES_FILE);
        let len = std::fs::metadata(&frames).map_err(|e| Error::io(&frames, e))?.len();
        if len != expected {
            return Err(Error::Shape {
                expected: format!("{expected} bytes in {}", frames.display()),
                got: len.to_string(),
            });
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            meta,
        })
    }

    /// Regenerates the face from the stored configuration.
    pub fn face(&self) -> Result<FaceModel> {
        make_face(&self.meta.face)
    }

    pub fn frame_count(&self) -> usize {
        self.meta.count
    }

    pub fn frame(&self, k: usize) -> Result<ThermalFrame> {
        self.check_index(k)?;
        let temps = self.read_block(FRAMES_FILE, k)?;
        let mut frame = ThermalFrame::new(self.meta.width, self.meta.height, temps, k as f64 / self.meta.fps)?;
        frame.calib_event = self.meta.render.noise.is_calibration_frame(k);
        Ok(frame)
    }

    pub fn frames(&self) -> Result<Vec<ThermalFrame>> {
        (0..self.meta.count).map(|k| self.frame(k)).collect()
    }

    pub fn truth_baseline(&self) -> Result<Vec<f64>> {
        self.read_block(TRUTH_FILE, 0)
    }

    pub fn truth_bias(&self, k: usize) -> Result<Vec<f64>> {
        self.check_index(k)?;
        self.read_block(TRUTH_FILE, k + 1)
    }

    pub fn events(&self) -> Result<Vec<bool>> {
        read_events(&self.dir.join(EVENTS_FILE))
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.meta.count {
            return Err(Error::Config(format!("frame {k} out of range (dataset has {})", self.meta.count)));
        }
        Ok(())
    }

    fn read_block(&self, file: &str, block: usize) -> Result<Vec<f64>> {
        let path = self.dir.join(file);
        let n = self.meta.pixels();
        let mut f = File::open(&path).map_err(|e| Error::io(&path, e))?;
        f.seek(SeekFrom::Start((block * n * 4) as u64)).map_err(|e| Error::io(&path, e))?;
        let mut bytes = vec![0u8; n * 4];
        f.read_exact(&mut bytes).map_err(|e| Error::io(&path, e))?;
        Ok(decode_f32(&bytes))
    }
}

/// Decodes little-endian `f32` values to `f64`.
pub fn decode_f32(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect()
}

/// Reads a whole file of little-endian `f32` frames of `pixels` each.
pub fn read_frames(path: &Path, width: usize, height: usize) -> Result<Vec<ThermalFrame>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let n = width * height * 4;
    if n == 0 || bytes.len() % n != 0 {
        return Err(Error::Shape {
            expected: format!("a multiple of {n} bytes in {}", path.display()),
            got: bytes.len().to_string(),
        });
    }
    bytes
        .chunks_exact(n)
        .enumerate()
        .map(|(k, c)| ThermalFrame::new(width, height, decode_f32(c), k as f64))
        .collect()
}

pub fn read_events(path: &Path) -> Result<Vec<bool>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = idx + 1;
        if idx == 0 {
            if line.trim() != "frame,calib_event" {
                return Err(parse_err(line_no, format!("unexpected header '{line}'")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (frame, flag) = line
            .split_once(',')
            .ok_or_else(|| parse_err(line_no, "expected two fields".into()))?;
        let frame: usize = frame.trim().parse().map_err(|e| parse_err(line_no, format!("bad frame index: {e}")))?;
        if frame != out.len() {
            return Err(parse_err(line_no, format!("frame {frame} out of order")));
        }
        match flag.trim() {
            "0" => out.push(false),
            "1" => out.push(true),
            other => return Err(parse_err(line_no, format!("calib_event must be 0 or 1, got '{other}'"))),
        }
    }
    Ok(out)
}
