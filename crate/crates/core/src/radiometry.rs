//! Forward and inverse thermal radiometric chain.
//!
//! Temperatures are kelvin throughout this module unless a name says `_c`.
//! Physical constants use the rounded values common in thermography texts
//! (h = 6.63e-34, k = 1.38e-23, c = 3e8, sigma = 5.67e-8); with those values
//! the integral of Planck's law sits about 0.5% below `sigma * T^4`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Planck constant [J s].
pub const PLANCK: f64 = 6.63e-34;
/// Boltzmann constant [J K^-1].
pub const BOLTZMANN: f64 = 1.38e-23;
/// Speed of light [m s^-1].
pub const LIGHT_SPEED: f64 = 3e8;
/// Stefan-Boltzmann constant [W m^-2 K^-4].
pub const STEFAN_BOLTZMANN: f64 = 5.67e-8;

/// Emissivity of human skin.
pub const SKIN_EMISSIVITY: f64 = 0.98;

/// Scene parameters of the three-path chain (skin emission, reflected
/// ambient, atmospheric path).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiometricScene {
    pub emissivity: f64,
    pub tau_atm: f64,
    /// Reflected ambient temperature [K].
    pub t_amb: f64,
    /// Atmospheric temperature [K].
    pub t_atm: f64,
}

impl Default for RadiometricScene {
    fn default() -> Self {
        Self {
            emissivity: SKIN_EMISSIVITY,
            tau_atm: 1.0,
            t_amb: crate::c_to_k(22.0),
            t_atm: crate::c_to_k(22.0),
        }
    }
}

impl RadiometricScene {
    pub fn new(emissivity: f64, tau_atm: f64, t_amb: f64, t_atm: f64) -> Result<Self> {
        let scene = Self {
            emissivity,
            tau_atm,
            t_amb,
            t_atm,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.emissivity > 0.0 && self.emissivity <= 1.0) {
            return Err(Error::Domain(format!("emissivity {} outside (0, 1]", self.emissivity)));
        }
        if !(self.tau_atm > 0.0 && self.tau_atm <= 1.0) {
            return Err(Error::Domain(format!("tau_atm {} outside (0, 1]", self.tau_atm)));
        }
        if !(self.t_amb > 0.0) || !(self.t_atm > 0.0) {
            return Err(Error::Domain(format!(
                "ambient/atmospheric temperatures must be positive kelvin, got {} / {}",
                self.t_amb, self.t_atm
            )));
        }
        Ok(())
    }

    /// Intensity contributed by everything except skin emission.
    fn background_intensity(&self) -> f64 {
        STEFAN_BOLTZMANN * self.tau_atm * (1.0 - self.emissivity) * self.t_amb.powi(4)
            + STEFAN_BOLTZMANN * (1.0 - self.tau_atm) * self.t_atm.powi(4)
    }
}

/// Planck spectral radiant exitance [W m^-2 per metre of wavelength].
pub fn planck_exitance(wavelength: f64, temperature: f64, emissivity: f64) -> Result<f64> {
    if !(wavelength > 0.0) {
        return Err(Error::Domain(format!("wavelength must be positive, got {wavelength}")));
    }
    if !(temperature > 0.0) {
        return Err(Error::Domain(format!("temperature must be positive, got {temperature}")));
    }
    let exponent = PLANCK * LIGHT_SPEED / (wavelength * BOLTZMANN * temperature);
    let prefactor = 2.0 * std::f64::consts::PI * emissivity * PLANCK * LIGHT_SPEED * LIGHT_SPEED / wavelength.powi(5);
    // exp_m1 keeps the long-wavelength tail accurate; overflow yields 0.
    Ok(prefactor / exponent.exp_m1())
}

/// Total grey-body exitance `eps * sigma * T^4` [W m^-2].
pub fn stefan_boltzmann(temperature: f64, emissivity: f64) -> Result<f64> {
    if !(temperature >= 0.0) {
        return Err(Error::Domain(format!("temperature must be non-negative, got {temperature}")));
    }
    Ok(emissivity * STEFAN_BOLTZMANN * temperature.powi(4))
}

/// Fourth-root inversion of [`stefan_boltzmann`] for a single emitter.
pub fn stefan_boltzmann_temperature(intensity: f64, emissivity: f64) -> Result<f64> {
    if !(intensity >= 0.0) || !(emissivity > 0.0) {
        return Err(Error::Domain(format!(
            "need intensity >= 0 and emissivity > 0, got {intensity} / {emissivity}"
        )));
    }
    Ok((intensity / (emissivity * STEFAN_BOLTZMANN)).powf(0.25))
}

/// Sensor intensity produced by skin at `t_skin` through the three-path chain.
pub fn forward_chain(t_skin: f64, scene: &RadiometricScene) -> f64 {
    STEFAN_BOLTZMANN * scene.tau_atm * scene.emissivity * t_skin.powi(4) + scene.background_intensity()
}

/// Derivative of [`forward_chain`] with respect to skin temperature.
pub fn forward_chain_slope(t_skin: f64, scene: &RadiometricScene) -> f64 {
    4.0 * STEFAN_BOLTZMANN * scene.tau_atm * scene.emissivity * t_skin.powi(3)
}

/// Skin temperature that explains the sensor intensity `i_sensor`.
///
/// Fails with [`Error::InfeasibleInversion`] when the reflected ambient and
/// atmospheric terms alone exceed the reading.
pub fn invert_chain(i_sensor: f64, scene: &RadiometricScene) -> Result<f64> {
    let radicand = if scene.tau_atm == 1.0 {
        (i_sensor / STEFAN_BOLTZMANN - (1.0 - scene.emissivity) * scene.t_amb.powi(4)) / scene.emissivity
    } else {
        (i_sensor / STEFAN_BOLTZMANN
            - scene.tau_atm * (1.0 - scene.emissivity) * scene.t_amb.powi(4)
            - (1.0 - scene.tau_atm) * scene.t_atm.powi(4))
            / (scene.tau_atm * scene.emissivity)
    };
    if radicand < 0.0 || radicand.is_nan() {
        return Err(Error::InfeasibleInversion { radicand });
    }
    Ok(radicand.sqrt().sqrt())
}

/// Linear skin-to-core map `core = b0 + b1 * skin` (both in degrees Celsius).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreMap {
    pub b0: f64,
    pub b1: f64,
}

impl CoreMap {
    pub fn new(b0: f64, b1: f64) -> Result<Self> {
        if !(b1 > 0.0) {
            return Err(Error::Domain(format!("core map slope must be positive, got {b1}")));
        }
        Ok(Self { b0, b1 })
    }

    pub fn identity() -> Self {
        Self { b0: 0.0, b1: 1.0 }
    }

    /// Inverse map: skin temperature at thermoneutral steady state for a core temperature.
    pub fn skin_for_core(&self, t_core_c: f64) -> f64 {
        (t_core_c - self.b0) / self.b1
    }

    /// Least-squares line through `(skin, core)` pairs.
    pub fn fit(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::InsufficientData("core map fit needs at least two pairs".into()));
        }
        let n = pairs.len() as f64;
        let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx == 0.0 {
            return Err(Error::RankDeficient("all skin temperatures identical".into()));
        }
        let b1 = sxy / sxx;
        Self::new(my - b1 * mx, b1)
    }
}

impl Default for CoreMap {
    /// Synthetic coefficients from a least-squares fit of steady-state surface
    /// against blood temperature of the default bio-heat tissue column
    /// (air at 22 C). Not a manufacturer calibration.
    fn default() -> Self {
        Self {
            b0: DEFAULT_CORE_B0,
            b1: DEFAULT_CORE_B1,
        }
    }
}

// Frozen from `bioheat::fit_core_map(&TissueParams::default(), ..)`; a unit
// test in `bioheat` re-derives them.
pub(crate) const DEFAULT_CORE_B0: f64 = -6.741_172_795_953;
pub(crate) const DEFAULT_CORE_B1: f64 = 1.306_416_945_268;

/// `b0 + b1 * t_skin`, degrees Celsius.
pub fn core_map(t_skin_c: f64, map: &CoreMap) -> f64 {
    map.b0 + map.b1 * t_skin_c
}

/// Melanin index `100 * log10(1 / i_r)` from the reflected red fraction.
pub fn melanin_index(reflected_red: f64) -> Result<f64> {
    if !(reflected_red > 0.0 && reflected_red <= 1.0) {
        return Err(Error::Domain(format!(
            "reflected red fraction must lie in (0, 1], got {reflected_red}"
        )));
    }
    Ok(-100.0 * reflected_red.log10())
}
