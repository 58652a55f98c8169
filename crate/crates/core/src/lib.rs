//! Solar-loading aware skin thermometry.
//!
//! The crate covers the whole chain from physics to correction:
//!
//! * [`radiometry`]: Planck / Stefan-Boltzmann emission, the three-path
//!   radiometric chain and its inversion, the skin-to-core map and the
//!   melanin index.
//! * [`bioheat`]: an explicit finite-difference solver for the 1-D Pennes
//!   bio-heat equation with a melanin-dependent solar source.
//! * [`scene`]: a synthetic face and thermal-frame generator with a drifting,
//!   periodically recalibrated sensor. Its ground truth stands in for
//!   measured subjects.
//! * [`transient`]: steady-state extrapolation from a cooling time series.
//! * [`spatial`]: single-shot correction, either by a linear solve on surface
//!   normals or by a small convolutional regressor.
//! * [`stats`]: error metrics and the equity statistics (two-sample KS,
//!   paired t).

pub mod bioheat;
pub mod error;
pub mod numeric;
pub mod radiometry;
pub mod scene;
pub mod spatial;
pub mod stats;
pub mod transient;

pub use error::{Error, Result};

/// Offset between the Celsius and Kelvin scales.
pub const KELVIN_OFFSET: f64 = 273.15;

#[inline]
pub fn c_to_k(celsius: f64) -> f64 {
    celsius + KELVIN_OFFSET
}

#[inline]
pub fn k_to_c(kelvin: f64) -> f64 {
    kelvin - KELVIN_OFFSET
}
