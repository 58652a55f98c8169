//! One-dimensional Pennes bio-heat solver with a melanin-dependent solar source.
//!
//! The column is discretised into cells of equal thickness `depth_step`; node
//! `i` owns the cell `[i * dx, (i + 1) * dx)`, so the surface node sits at
//! index 0 and the core node at the last index. Time stepping is explicit
//! (forward Euler in time, flux-form central differences in space); a step
//! larger than the positivity bound is refused instead of being taken.
//!
//! Node balance (per unit area):
//!
//! ```text
//! rho_i c_i dx dT_i/dt = F_{i-1/2} - F_{i+1/2}
//!                        + dx * rho_b c_b w_i (T_blood - T_i)
//!                        + q_abs * d_i
//! ```
//!
//! with `F_{i+1/2} = k_{i+1/2} (T_i - T_{i+1}) / dx` (harmonic-mean interface
//! conductivity), `F_{-1/2} = h (T_air - T_0)` at a convective surface,
//! `q_abs = E_sun * max(0, l.n) * alpha` and `d_i` the Beer-Lambert share of
//! the absorbed flux deposited in cell `i` (the shares sum to one).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numeric::{brent_minimize, solve_tridiagonal};
use crate::radiometry::CoreMap;
use crate::{c_to_k, k_to_c, Error, Result};

/// Physically admissible node temperature range during simulation [K].
pub const TEMPERATURE_RANGE_K: (f64, f64) = (250.0, 350.0);

/// A homogeneous tissue layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub name: String,
    pub thickness_m: f64,
    /// W m^-1 K^-1
    pub conductivity: f64,
    /// kg m^-3
    pub density: f64,
    /// J kg^-1 K^-1
    pub specific_heat: f64,
    /// Volumetric blood perfusion [s^-1].
    pub perfusion_rate: f64,
    /// Solar attenuation coefficient of the layer [m^-1]. Ignored for the
    /// first (epidermal) layer, whose coefficient is the melanin coefficient.
    #[serde(default)]
    pub solar_mu_per_m: f64,
}

/// Tissue column, blood and environment parameters.
///
/// The defaults are plausible literature-range values for facial skin, not
/// measured data: a four-layer column (epidermis 0.1 mm, dermis 1.5 mm, fat
/// 4.4 mm, muscle/core 24 mm), blood at 37 C, still air at 22 C with a
/// combined convective/linearised radiative coefficient of 10 W m^-2 K^-1,
/// and 1000 W m^-2 of sunlight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TissueParams {
    pub layers: Vec<Layer>,
    pub depth_step_m: f64,
    pub blood_temp_c: f64,
    pub blood_density: f64,
    pub blood_specific_heat: f64,
    /// W m^-2 K^-1
    pub convection_coeff: f64,
    pub air_temp_c: f64,
    /// W m^-2
    pub irradiance_wm2: f64,
    /// Epidermal melanin absorption coefficient [m^-1].
    pub melanin_mu_per_m: f64,
    /// Explicit time step [s].
    pub dt_s: f64,
}

impl Default for TissueParams {
    fn default() -> Self {
        let layer = |name: &str, thickness_mm: f64, k: f64, rho: f64, c: f64, w: f64, mu: f64| Layer {
            name: name.to_string(),
            thickness_m: thickness_mm * 1e-3,
            conductivity: k,
            density: rho,
            specific_heat: c,
            perfusion_rate: w,
            solar_mu_per_m: mu,
        };
        Self {
            layers: vec![
                layer("epidermis", 0.1, 0.21, 1100.0, 3600.0, 0.0, 0.0),
                layer("dermis", 1.5, 0.37, 1090.0, 3400.0, 0.002, 1000.0),
                layer("fat", 4.4, 0.20, 1000.0, 3000.0, 0.0003, 0.0),
                layer("muscle", 24.0, 0.50, 1050.0, 3700.0, 0.0007, 0.0),
            ],
            depth_step_m: 1e-4,
            blood_temp_c: 37.0,
            blood_density: 1060.0,
            blood_specific_heat: 3770.0,
            convection_coeff: 10.0,
            air_temp_c: 22.0,
            irradiance_wm2: 1000.0,
            melanin_mu_per_m: 1500.0,
            dt_s: 0.02,
        }
    }
}

impl TissueParams {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("tissue needs at least one layer".into()));
        }
        for l in &self.layers {
            let ok = l.thickness_m > 0.0
                && l.conductivity > 0.0
                && l.density > 0.0
                && l.specific_heat > 0.0
                && l.perfusion_rate >= 0.0
                && l.solar_mu_per_m >= 0.0;
            if !ok {
                return Err(Error::Config(format!("layer '{}' has non-physical coefficients", l.name)));
            }
        }
        if !(self.depth_step_m > 0.0) || !(self.dt_s > 0.0) {
            return Err(Error::Config("depth step and time step must be positive".into()));
        }
        if !(self.blood_density > 0.0 && self.blood_specific_heat > 0.0) {
            return Err(Error::Config("blood properties must be positive".into()));
        }
        if !(self.convection_coeff >= 0.0) || !(self.irradiance_wm2 >= 0.0) || !(self.melanin_mu_per_m >= 0.0) {
            return Err(Error::Config("convection, irradiance and melanin must be non-negative".into()));
        }
        Ok(())
    }

    pub fn epidermis_thickness_m(&self) -> f64 {
        self.layers[0].thickness_m
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let params: Self = serde_json::from_str(&text)?;
        params.validate()?;
        Ok(params)
    }

    /// Absorbed fraction of sunlight for the configured melanin level.
    pub fn absorbed_fraction(&self) -> f64 {
        absorbed_fraction(self.melanin_mu_per_m, self.epidermis_thickness_m())
    }

    /// Solar source at normal incidence for these parameters.
    pub fn normal_source(&self) -> SolarSource {
        SolarSource {
            irradiance: self.irradiance_wm2,
            cos_incidence: 1.0,
            absorbed_fraction: self.absorbed_fraction(),
        }
    }
}

/// Fraction of incident solar energy absorbed by an epidermis of the given
/// thickness and melanin absorption coefficient (Beer-Lambert).
pub fn absorbed_fraction(melanin_mu_per_m: f64, epidermis_thickness_m: f64) -> f64 {
    let optical_depth = melanin_mu_per_m.max(0.0) * epidermis_thickness_m.max(0.0);
    -(-optical_depth).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarSource {
    /// W m^-2
    pub irradiance: f64,
    /// `max(0, l . n)`
    pub cos_incidence: f64,
    pub absorbed_fraction: f64,
}

impl SolarSource {
    pub fn off() -> Self {
        Self {
            irradiance: 0.0,
            cos_incidence: 0.0,
            absorbed_fraction: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.irradiance >= 0.0)
            || !(0.0..=1.0).contains(&self.cos_incidence)
            || !(0.0..=1.0).contains(&self.absorbed_fraction)
        {
            return Err(Error::Domain(format!("invalid solar source {self:?}")));
        }
        Ok(())
    }

    /// Absorbed flux [W m^-2].
    pub fn absorbed_flux(&self) -> f64 {
        self.irradiance * self.cos_incidence * self.absorbed_fraction
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SurfaceBoundary {
    /// Flux `h (T_air - T_surface)`; `h = 0` is an insulated surface.
    Convective { h: f64, air_temp: f64 },
    /// Surface node held at its current value.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoreBoundary {
    /// Last node clamped (to blood temperature for physiological columns).
    Fixed,
    Insulated,
}

/// Depth-discretised tissue column. Temperatures in kelvin.
#[derive(Debug, Clone, PartialEq)]
pub struct TissueGrid {
    pub depth_step: f64,
    pub node_temps: Vec<f64>,
    pub conductivity: Vec<f64>,
    pub density: Vec<f64>,
    pub specific_heat: Vec<f64>,
    pub perfusion_rate: Vec<f64>,
    pub blood_temp: f64,
    /// `rho_b * c_b` [J m^-3 K^-1].
    pub blood_heat_capacity: f64,
    pub melanin_mu: f64,
    /// Share of the absorbed solar flux deposited in each cell; sums to 1
    /// (or is all zero when nothing attenuates).
    pub deposition: Vec<f64>,
    pub surface: SurfaceBoundary,
    pub core: CoreBoundary,
}

impl TissueGrid {
    /// Builds the layered column from `params`, initialised uniformly at blood
    /// temperature with a convective surface and a clamped core.
    pub fn from_params(params: &TissueParams) -> Result<Self> {
        params.validate()?;
        let dx = params.depth_step_m;
        let total: f64 = params.layers.iter().map(|l| l.thickness_m).sum();
        let n = (total / dx).round() as usize;
        if n < 3 {
            return Err(Error::Config(format!("column resolves to only {n} cells")));
        }
        let mut layer_of_cell = Vec::with_capacity(n);
        for i in 0..n {
            let center = (i as f64 + 0.5) * dx;
            let mut acc = 0.0;
            let mut idx = params.layers.len() - 1;
            for (j, l) in params.layers.iter().enumerate() {
                acc += l.thickness_m;
                if center < acc {
                    idx = j;
                    break;
                }
            }
            layer_of_cell.push(idx);
        }
        let pick = |f: &dyn Fn(&Layer) -> f64| -> Vec<f64> { layer_of_cell.iter().map(|&j| f(&params.layers[j])).collect() };
        let attenuation: Vec<f64> = layer_of_cell
            .iter()
            .map(|&j| if j == 0 { params.melanin_mu_per_m } else { params.layers[j].solar_mu_per_m })
            .collect();
        let blood = c_to_k(params.blood_temp_c);
        Ok(Self {
            depth_step: dx,
            node_temps: vec![blood; n],
            conductivity: pick(&|l| l.conductivity),
            density: pick(&|l| l.density),
            specific_heat: pick(&|l| l.specific_heat),
            perfusion_rate: pick(&|l| l.perfusion_rate),
            blood_temp: blood,
            blood_heat_capacity: params.blood_density * params.blood_specific_heat,
            melanin_mu: params.melanin_mu_per_m,
            deposition: beer_lambert_shares(&attenuation, dx),
            surface: SurfaceBoundary::Convective {
                h: params.convection_coeff,
                air_temp: c_to_k(params.air_temp_c),
            },
            core: CoreBoundary::Fixed,
        })
    }

    /// Uniform column, mainly for verification.
    pub fn uniform(n: usize, dx: f64, conductivity: f64, density: f64, specific_heat: f64, temp: f64) -> Self {
        Self {
            depth_step: dx,
            node_temps: vec![temp; n],
            conductivity: vec![conductivity; n],
            density: vec![density; n],
            specific_heat: vec![specific_heat; n],
            perfusion_rate: vec![0.0; n],
            blood_temp: temp,
            blood_heat_capacity: 0.0,
            melanin_mu: 0.0,
            deposition: vec![0.0; n],
            surface: SurfaceBoundary::Fixed,
            core: CoreBoundary::Fixed,
        }
    }

    pub fn len(&self) -> usize {
        self.node_temps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_temps.is_empty()
    }

    pub fn surface_temp(&self) -> f64 {
        self.node_temps[0]
    }

    /// Thermal energy per unit area relative to 0 K, `sum rho c T dx`.
    pub fn thermal_energy(&self) -> f64 {
        (0..self.len())
            .map(|i| self.density[i] * self.specific_heat[i] * self.node_temps[i] * self.depth_step)
            .sum()
    }

    fn interface_conductance(&self, i: usize) -> f64 {
        let (a, b) = (self.conductivity[i], self.conductivity[i + 1]);
        2.0 * a * b / (a + b) / self.depth_step
    }

    /// Largest admissible explicit step: every node's update must be a convex
    /// combination of old values. For a uniform unperfused interior this is
    /// `rho c dx^2 / (2 k)`.
    pub fn stable_dt(&self) -> f64 {
        let n = self.len();
        let dx = self.depth_step;
        let mut limit = f64::INFINITY;
        for i in 0..n {
            if (i == 0 && self.surface == SurfaceBoundary::Fixed) || (i == n - 1 && self.core == CoreBoundary::Fixed) {
                continue;
            }
            let mut out = 0.0;
            if i > 0 {
                out += self.interface_conductance(i - 1);
            } else if let SurfaceBoundary::Convective { h, .. } = self.surface {
                out += h;
            }
            if i + 1 < n {
                out += self.interface_conductance(i);
            }
            out += dx * self.blood_heat_capacity * self.perfusion_rate[i];
            if out > 0.0 {
                limit = limit.min(self.density[i] * self.specific_heat[i] * dx / out);
            }
        }
        limit
    }

    /// One explicit step in place.
    pub fn advance(&mut self, source: &SolarSource, dt: f64) -> Result<()> {
        let limit = self.stable_dt();
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(Error::Stability { dt, limit });
        }
        let n = self.len();
        let dx = self.depth_step;
        let q_abs = source.absorbed_flux();
        let old = &self.node_temps;
        let mut flux = vec![0.0; n + 1];
        flux[0] = match self.surface {
            SurfaceBoundary::Convective { h, air_temp } => h * (air_temp - old[0]),
            SurfaceBoundary::Fixed => 0.0,
        };
        for i in 0..n - 1 {
            flux[i + 1] = self.interface_conductance(i) * (old[i] - old[i + 1]);
        }
        let mut next = old.clone();
        for i in 0..n {
            if (i == 0 && self.surface == SurfaceBoundary::Fixed) || (i == n - 1 && self.core == CoreBoundary::Fixed) {
                continue;
            }
            let perfusion = dx * self.blood_heat_capacity * self.perfusion_rate[i] * (self.blood_temp - old[i]);
            let net = flux[i] - flux[i + 1] + perfusion + q_abs * self.deposition[i];
            next[i] = old[i] + dt * net / (self.density[i] * self.specific_heat[i] * dx);
        }
        let (lo, hi) = TEMPERATURE_RANGE_K;
        if next.iter().any(|t| !(lo..=hi).contains(t)) {
            return Err(Error::Domain(format!("node temperature left [{lo}, {hi}] K")));
        }
        self.node_temps = next;
        Ok(())
    }

    /// Functional form of [`TissueGrid::advance`].
    pub fn step(&self, source: &SolarSource, dt: f64) -> Result<TissueGrid> {
        let mut g = self.clone();
        g.advance(source, dt)?;
        Ok(g)
    }

    /// Replaces the node temperatures by the exact discrete steady state
    /// under `source` (tridiagonal solve of the same discretisation).
    pub fn solve_steady_state(&mut self, source: &SolarSource) -> Result<()> {
        let n = self.len();
        let dx = self.depth_step;
        let q_abs = source.absorbed_flux();
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let fixed = (i == 0 && self.surface == SurfaceBoundary::Fixed) || (i == n - 1 && self.core == CoreBoundary::Fixed);
            if fixed {
                diag[i] = 1.0;
                rhs[i] = self.node_temps[i];
                continue;
            }
            if i > 0 {
                let g = self.interface_conductance(i - 1);
                lower[i] = -g;
                diag[i] += g;
            } else if let SurfaceBoundary::Convective { h, air_temp } = self.surface {
                diag[i] += h;
                rhs[i] += h * air_temp;
            }
            if i + 1 < n {
                let g = self.interface_conductance(i);
                upper[i] = -g;
                diag[i] += g;
            }
            let perf = dx * self.blood_heat_capacity * self.perfusion_rate[i];
            diag[i] += perf;
            rhs[i] += perf * self.blood_temp + q_abs * self.deposition[i];
        }
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs)
            .ok_or_else(|| Error::Domain("steady-state system is singular".into()))?;
        self.node_temps = x;
        Ok(())
    }
}

/// Share of absorbed light per cell for piecewise-constant attenuation.
fn beer_lambert_shares(mu: &[f64], dx: f64) -> Vec<f64> {
    let mut transmitted = 1.0;
    let mut absorbed: Vec<f64> = mu
        .iter()
        .map(|&m| {
            let a = transmitted * -(-m * dx).exp_m1();
            transmitted *= (-m * dx).exp();
            a
        })
        .collect();
    let total: f64 = absorbed.iter().sum();
    if total > 0.0 {
        absorbed.iter_mut().for_each(|a| *a /= total);
    }
    absorbed
}

/// Uniformly sampled time series, temperatures in degrees Celsius.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times_s: Vec<f64>,
    pub temps_c: Vec<f64>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }

    /// Samples with `from <= t < to`.
    pub fn slice_time(&self, from: f64, to: f64) -> TimeSeries {
        let mut out = TimeSeries::default();
        for (t, v) in self.times_s.iter().zip(&self.temps_c) {
            if *t >= from && *t < to {
                out.times_s.push(*t);
                out.temps_c.push(*v);
            }
        }
        out
    }

    /// `time_s,temp_c` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time_s,temp_c")?;
        for (t, v) in self.times_s.iter().zip(&self.temps_c) {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CycleOutput {
    /// Surface temperature at every step, starting at t = 0.
    pub surface: TimeSeries,
    /// Number of samples in the loading phase.
    pub load_samples: usize,
    pub initial_profile_c: Vec<f64>,
    /// Depth profile at the time of maximum surface temperature.
    pub peak_profile_c: Vec<f64>,
    pub final_profile_c: Vec<f64>,
    /// Largest excursion of the deepest non-clamped node from its start value [K].
    pub deep_node_drift: f64,
}

impl CycleOutput {
    pub fn peak_surface_c(&self) -> f64 {
        self.surface.temps_c.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn loading(&self) -> TimeSeries {
        TimeSeries {
            times_s: self.surface.times_s[..self.load_samples].to_vec(),
            temps_c: self.surface.temps_c[..self.load_samples].to_vec(),
        }
    }

    pub fn cooling(&self) -> TimeSeries {
        TimeSeries {
            times_s: self.surface.times_s[self.load_samples..].to_vec(),
            temps_c: self.surface.temps_c[self.load_samples..].to_vec(),
        }
    }
}

/// Runs a loading phase with `source` on for `load_duration` seconds and a
/// cooling phase with the source off for `cool_duration` seconds.
pub fn simulate_cycle(
    grid: &TissueGrid,
    source: &SolarSource,
    load_duration: f64,
    cool_duration: f64,
    dt: f64,
) -> Result<CycleOutput> {
    if !(load_duration > 0.0) || !(cool_duration > 0.0) {
        return Err(Error::Domain("cycle durations must be positive".into()));
    }
    source.validate()?;
    let mut g = grid.clone();
    let n = g.len();
    let deep = if g.core == CoreBoundary::Fixed { n.saturating_sub(2) } else { n - 1 };
    let deep_start = g.node_temps[deep];
    let load_steps = (load_duration / dt).round() as usize;
    let cool_steps = (cool_duration / dt).round() as usize;
    let off = SolarSource::off();

    let to_c = |v: &[f64]| v.iter().map(|t| k_to_c(*t)).collect::<Vec<_>>();
    let initial_profile_c = to_c(&g.node_temps);
    let mut surface = TimeSeries::default();
    let mut peak = (f64::NEG_INFINITY, initial_profile_c.clone());
    let mut drift: f64 = 0.0;
    for k in 0..(load_steps + cool_steps) {
        let t = k as f64 * dt;
        let s = k_to_c(g.surface_temp());
        surface.times_s.push(t);
        surface.temps_c.push(s);
        if s > peak.0 {
            peak = (s, to_c(&g.node_temps));
        }
        drift = drift.max((g.node_temps[deep] - deep_start).abs());
        g.advance(if k < load_steps { source } else { &off }, dt)?;
    }
    Ok(CycleOutput {
        surface,
        load_samples: load_steps,
        initial_profile_c,
        peak_profile_c: peak.1,
        final_profile_c: to_c(&g.node_temps),
        deep_node_drift: drift,
    })
}

/// Least-squares fit of `asymptote + amplitude * exp(-rate * (t - t0))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub amplitude: f64,
    pub rate: f64,
    pub asymptote: f64,
    /// Time origin `t0` (first sample time).
    pub t0: f64,
    pub max_deviation: f64,
    pub rmse: f64,
}

impl ExponentialFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.asymptote + self.amplitude * (-self.rate * (t - self.t0)).exp()
    }
}

/// Linear least squares for `(asymptote, amplitude)` at a fixed rate;
/// returns the coefficients and the residual sum of squares.
fn project_rate(times: &[f64], temps: &[f64], t0: f64, rate: f64) -> (f64, f64, f64) {
    let n = times.len() as f64;
    let e: Vec<f64> = times.iter().map(|t| (-rate * (t - t0)).exp()).collect();
    let me = e.iter().sum::<f64>() / n;
    let my = temps.iter().sum::<f64>() / n;
    let see: f64 = e.iter().map(|v| (v - me).powi(2)).sum();
    let sey: f64 = e.iter().zip(temps).map(|(a, y)| (a - me) * (y - my)).sum();
    let amplitude = if see > 0.0 { sey / see } else { 0.0 };
    let asymptote = my - amplitude * me;
    let sse = e
        .iter()
        .zip(temps)
        .map(|(a, y)| (y - asymptote - amplitude * a).powi(2))
        .sum();
    (asymptote, amplitude, sse)
}

/// Fits the exponential surrogate used to approximate heating and cooling
/// curves. The rate is searched on a log grid over `[1e-6, 10] s^-1` and then
/// polished with Brent's method; the amplitude may take either sign (heating
/// curves have a negative amplitude around the loaded asymptote).
pub fn fit_exponential_surrogate(series: &TimeSeries) -> Result<ExponentialFit> {
    let n = series.len();
    if n < 3 || series.temps_c.len() != n {
        return Err(Error::InsufficientData(format!("exponential fit needs >= 3 samples, got {n}")));
    }
    let times = &series.times_s;
    let temps = &series.temps_c;
    let t0 = times[0];
    let (lo, hi) = ((1e-6_f64).ln(), (10.0_f64).ln());
    let grid = 240;
    let mut best = (0usize, f64::INFINITY);
    let at = |k: usize| lo + (hi - lo) * k as f64 / grid as f64;
    for k in 0..=grid {
        let sse = project_rate(times, temps, t0, at(k).exp()).2;
        if sse < best.1 {
            best = (k, sse);
        }
    }
    let a = at(best.0.saturating_sub(1));
    let b = at((best.0 + 1).min(grid));
    let (log_rate, _) = brent_minimize(|lr| project_rate(times, temps, t0, lr.exp()).2, a, b, 1e-13, 500);
    let rate = log_rate.exp();
    let (asymptote, amplitude, sse) = project_rate(times, temps, t0, rate);
    if !(asymptote.is_finite() && amplitude.is_finite() && sse.is_finite()) {
        return Err(Error::Fit {
            message: "exponential surrogate did not converge".into(),
            residual: sse,
        });
    }
    let mut fit = ExponentialFit {
        amplitude,
        rate,
        asymptote,
        t0,
        max_deviation: 0.0,
        rmse: (sse / n as f64).sqrt(),
    };
    fit.max_deviation = times
        .iter()
        .zip(temps)
        .map(|(t, y)| (fit.eval(*t) - y).abs())
        .fold(0.0, f64::max);
    Ok(fit)
}

/// Solar response of one tissue column at normal incidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarResponse {
    pub melanin_mu_per_m: f64,
    /// Steady-state surface temperature before loading [C].
    pub baseline_surface_c: f64,
    /// Largest surface rise over the cycle [C].
    pub beta_peak_c: f64,
    /// Heating-rate of the exponential surrogate [s^-1].
    pub heating_rate: f64,
    /// Cooling-rate of the exponential surrogate [s^-1].
    pub cooling_rate: f64,
    pub heating_fit_deviation_c: f64,
    pub cooling_fit_deviation_c: f64,
}

/// Simulates a load/cool cycle from the sun-free steady state and summarises
/// it by the peak bias and exponential surrogate rates.
pub fn solar_response(params: &TissueParams, load_s: f64, cool_s: f64) -> Result<SolarResponse> {
    let mut grid = TissueGrid::from_params(params)?;
    grid.solve_steady_state(&SolarSource::off())?;
    let cycle = simulate_cycle(&grid, &params.normal_source(), load_s, cool_s, params.dt_s)?;
    let base = k_to_c(grid.surface_temp());
    let heating = fit_exponential_surrogate(&cycle.loading())?;
    let cooling = fit_exponential_surrogate(&cycle.cooling())?;
    Ok(SolarResponse {
        melanin_mu_per_m: params.melanin_mu_per_m,
        baseline_surface_c: base,
        beta_peak_c: cycle.peak_surface_c() - base,
        heating_rate: heating.rate,
        cooling_rate: cooling.rate,
        heating_fit_deviation_c: heating.max_deviation,
        cooling_fit_deviation_c: cooling.max_deviation,
    })
}

/// Sun-free steady-state surface temperature for the given blood (core)
/// temperature [C].
pub fn steady_surface_c(params: &TissueParams, core_temp_c: f64) -> Result<f64> {
    let mut p = params.clone();
    p.blood_temp_c = core_temp_c;
    let mut grid = TissueGrid::from_params(&p)?;
    grid.solve_steady_state(&SolarSource::off())?;
    Ok(k_to_c(grid.surface_temp()))
}

/// Fits the linear skin-to-core map on thermoneutral simulator pairs.
pub fn fit_core_map(params: &TissueParams, core_temps_c: &[f64]) -> Result<CoreMap> {
    let pairs = core_temps_c
        .iter()
        .map(|&core| steady_surface_c(params, core).map(|skin| (skin, core)))
        .collect::<Result<Vec<_>>>()?;
    CoreMap::fit(&pairs)
}
