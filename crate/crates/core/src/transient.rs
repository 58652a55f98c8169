//! Steady-state skin temperature from a single-point time series.
//!
//! The cooling trace is modelled as `T(t) = T_bar + beta * exp(-r * (t - t0))`
//! with `t0` the first sample time, and fitted by weighted least squares over
//! the box `T_bar in [27, 43]`, `beta in [0, 20]`, `r in [1e-4, 1e-1]`. For a
//! given `(beta, r)` the optimal `T_bar` is a weighted mean, so the search
//! runs over two parameters: a 41 x 41 grid followed by a bounded simplex
//! refinement in `(beta, ln r)`.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numeric::nelder_mead_box;
use crate::radiometry::{core_map, CoreMap};
use crate::{Error, Result};

pub const T_BAR_BOUNDS_C: (f64, f64) = (27.0, 43.0);
pub const BETA_BOUNDS_C: (f64, f64) = (0.0, 20.0);
pub const RATE_BOUNDS: (f64, f64) = (1e-4, 1e-1);
/// Shortest weighted duration accepted for a fit [s].
pub const MIN_EFFECTIVE_WINDOW_S: f64 = 30.0;
const GRID: usize = 41;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientTrace {
    pub times: Vec<f64>,
    pub temps: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TransientTrace {
    pub fn new(times: Vec<f64>, temps: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if times.len() != temps.len() || times.len() != weights.len() {
            return Err(Error::Shape {
                expected: format!("{} temps and weights", times.len()),
                got: format!("{} temps, {} weights", temps.len(), weights.len()),
            });
        }
        if times.len() < 3 {
            return Err(Error::InsufficientData(format!("{} samples, need at least 3", times.len())));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("times must be finite and strictly increasing".into()));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::Domain("weights must lie in [0, 1]".into()));
        }
        if temps.iter().zip(&weights).any(|(t, w)| *w > 0.0 && !t.is_finite()) {
            return Err(Error::Domain("weighted temperatures must be finite".into()));
        }
        Ok(Self { times, temps, weights })
    }

    /// Trace with unit weights.
    pub fn unweighted(times: Vec<f64>, temps: Vec<f64>) -> Result<Self> {
        let n = times.len();
        Self::new(times, temps, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Samples within `window_s` seconds of the first one.
    pub fn window(&self, window_s: f64) -> Result<Self> {
        let t0 = self.times[0];
        let n = self.times.iter().take_while(|t| **t - t0 <= window_s + 1e-9).count();
        Self::new(
            self.times[..n].to_vec(),
            self.temps[..n].to_vec(),
            self.weights[..n].to_vec(),
        )
    }

    /// Weight-averaged duration: trapezoidal integral of the weights over time.
    pub fn effective_duration(&self) -> f64 {
        self.times
            .windows(2)
            .zip(self.weights.windows(2))
            .map(|(t, w)| 0.5 * (w[0] + w[1]) * (t[1] - t[0]))
            .sum()
    }

    /// Reads `time_s,temp_c[,weight]` CSV; a missing weight column means 1.
    pub fn from_csv_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let (mut times, mut temps, mut weights) = (Vec::new(), Vec::new(), Vec::new());
        let mut columns = 0;
        for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line_no = idx + 1;
            let line = line.trim();
            if idx == 0 {
                columns = match line {
                    "time_s,temp_c,weight" => 3,
                    "time_s,temp_c" => 2,
                    other => return Err(err(line_no, format!("unexpected header '{other}'"))),
                };
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != columns {
                return Err(err(line_no, format!("expected {columns} fields, found {}", fields.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(line_no, format!("bad number '{s}': {e}")));
            times.push(num(fields[0])?);
            temps.push(num(fields[1])?);
            weights.push(if columns == 3 { num(fields[2])? } else { 1.0 });
        }
        Self::new(times, temps, weights)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time_s,temp_c,weight")?;
        for i in 0..self.len() {
            writeln!(w, "{},{},{}", self.times[i], self.temps[i], self.weights[i])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Steady-state skin temperature estimate [C].
    pub t_skin_star: f64,
    /// Bias amplitude at the first sample [C].
    pub beta_peak: f64,
    /// Exponential rate [s^-1]; 0 when no loading is detected.
    pub rate: f64,
    pub weighted_rmse: f64,
    /// Span of the trace [s].
    pub window_s: f64,
    /// Some parameter ended on the edge of its box.
    pub at_boundary: bool,
}

/// Which branch of the transient model to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    /// `T_bar + beta * exp(-r t)`
    Cooling,
    /// `T_bar + beta * (1 - exp(-r t))`
    Heating,
}

/// Fits the cooling branch.
pub fn fit_cooling(trace: &TransientTrace) -> Result<FitResult> {
    fit(trace, Branch::Cooling)
}

/// Fits the heating branch; `t_skin_star` is the pre-loading level and
/// `beta_peak` the asymptotic rise. Used to validate simulations.
pub fn fit_heating(trace: &TransientTrace) -> Result<FitResult> {
    fit(trace, Branch::Heating)
}

/// Core temperature from a fitted steady-state skin temperature.
pub fn correct_core(fit: &FitResult, map: &CoreMap) -> f64 {
    core_map(fit.t_skin_star, map)
}

struct Problem {
    tau: Vec<f64>,
    temps: Vec<f64>,
    weights: Vec<f64>,
    weight_sum: f64,
    branch: Branch,
}

impl Problem {
    fn shape(&self, tau: f64, rate: f64) -> f64 {
        let g = (-rate * tau).exp();
        match self.branch {
            Branch::Cooling => g,
            Branch::Heating => 1.0 - g,
        }
    }

    /// Optimal clamped `T_bar` and weighted sum of squares at `(beta, rate)`.
    fn evaluate(&self, beta: f64, rate: f64) -> (f64, f64) {
        let h: Vec<f64> = self.tau.iter().map(|t| self.shape(*t, rate)).collect();
        let mut acc = 0.0;
        for i in 0..self.tau.len() {
            acc += self.weights[i] * (self.temps[i] - beta * h[i]);
        }
        let t_bar = (acc / self.weight_sum).clamp(T_BAR_BOUNDS_C.0, T_BAR_BOUNDS_C.1);
        let mut ss = 0.0;
        for i in 0..self.tau.len() {
            let r = self.temps[i] - t_bar - beta * h[i];
            ss += self.weights[i] * r * r;
        }
        (t_bar, ss)
    }
}

fn fit(trace: &TransientTrace, branch: Branch) -> Result<FitResult> {
    let effective = trace.effective_duration();
    let active: Vec<usize> = (0..trace.len()).filter(|&i| trace.weights[i] > 0.0).collect();
    if active.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} samples with positive weight, need at least 3",
            active.len()
        )));
    }
    if effective < MIN_EFFECTIVE_WINDOW_S {
        return Err(Error::InsufficientData(format!(
            "effective window {effective:.1} s is shorter than {MIN_EFFECTIVE_WINDOW_S} s"
        )));
    }
    let t0 = trace.times[0];
    // Zero-weight samples are dropped so their values cannot leak in.
    let problem = Problem {
        tau: active.iter().map(|&i| trace.times[i] - t0).collect(),
        temps: active.iter().map(|&i| trace.temps[i]).collect(),
        weights: active.iter().map(|&i| trace.weights[i]).collect(),
        weight_sum: active.iter().map(|&i| trace.weights[i]).sum(),
        branch,
    };

    let (ln_lo, ln_hi) = (RATE_BOUNDS.0.ln(), RATE_BOUNDS.1.ln());
    let mut best = (f64::INFINITY, 0.0, 0.0);
    // Ascending beta, then ascending rate, with strict improvement: ties keep
    // the smallest beta and then the smallest rate.
    for i in 0..GRID {
        let beta = BETA_BOUNDS_C.0 + (BETA_BOUNDS_C.1 - BETA_BOUNDS_C.0) * i as f64 / (GRID - 1) as f64;
        for j in 0..GRID {
            let ln_r = ln_lo + (ln_hi - ln_lo) * j as f64 / (GRID - 1) as f64;
            let (_, ss) = problem.evaluate(beta, ln_r.exp());
            if ss < best.0 {
                best = (ss, beta, ln_r);
            }
        }
    }

    let lower = [BETA_BOUNDS_C.0, ln_lo];
    let upper = [BETA_BOUNDS_C.1, ln_hi];
    let mut x = vec![best.1, best.2];
    let mut value = best.0;
    let mut step = [0.5, 0.2];
    // Restarting from the current optimum guards against simplex collapse.
    for _ in 0..4 {
        let m = nelder_mead_box(
            |p| problem.evaluate(p[0], p[1].exp()).1,
            &x,
            &step,
            &lower,
            &upper,
            1e-12,
            0.0,
            4000,
        );
        if m.value <= value {
            x = m.x;
            value = m.value;
        }
        step = [step[0] * 0.1, step[1] * 0.1];
    }

    let (mut beta, mut rate) = (x[0], x[1].exp());
    // A vanishing amplitude leaves the rate unidentified.
    if beta <= 1e-12 {
        let (_, ss0) = problem.evaluate(0.0, RATE_BOUNDS.0);
        if ss0 <= value {
            value = ss0;
            beta = 0.0;
        }
    }
    if beta == 0.0 {
        rate = 0.0;
    }
    let (t_bar, ss) = problem.evaluate(beta, if rate > 0.0 { rate } else { RATE_BOUNDS.0 });
    debug_assert!(ss <= value * (1.0 + 1e-12) + 1e-300);
    let near = |v: f64, edge: f64, span: f64| (v - edge).abs() <= 1e-9 * span;
    let beta_span = BETA_BOUNDS_C.1 - BETA_BOUNDS_C.0;
    let at_boundary = near(beta, BETA_BOUNDS_C.0, beta_span)
        || near(beta, BETA_BOUNDS_C.1, beta_span)
        || (beta > 0.0 && (near(x[1], ln_lo, ln_hi - ln_lo) || near(x[1], ln_hi, ln_hi - ln_lo)))
        || near(t_bar, T_BAR_BOUNDS_C.0, 16.0)
        || near(t_bar, T_BAR_BOUNDS_C.1, 16.0);
    if !ss.is_finite() {
        return Err(Error::Fit {
            message: "objective is not finite at the optimum".into(),
            residual: ss,
        });
    }
    Ok(FitResult {
        t_skin_star: t_bar,
        beta_peak: beta,
        rate,
        weighted_rmse: (ss / problem.weight_sum).sqrt(),
        window_s: trace.times[trace.len() - 1] - t0,
        at_boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exponential(t_bar: f64, beta: f64, rate: f64, window: f64, dt: f64) -> TransientTrace {
        let n = (window / dt).round() as usize + 1;
        let times: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let temps = times.iter().map(|t| t_bar + beta * (-rate * t).exp()).collect();
        TransientTrace::unweighted(times, temps).unwrap()
    }

    #[test]
    fn recovers_noiseless_exponential() {
        let fit = fit_cooling(&exponential(34.0, 4.0, 0.01, 300.0, 1.0)).unwrap();
        assert!((fit.t_skin_star - 34.0).abs() < 1e-4, "{fit:?}");
        assert!((fit.beta_peak - 4.0).abs() < 1e-4, "{fit:?}");
        assert!((fit.rate - 0.01).abs() < 1e-4, "{fit:?}");
        assert!(fit.weighted_rmse < 1e-8, "{fit:?}");
        assert!(!fit.at_boundary);
        assert_eq!(fit.window_s, 300.0);
    }

    #[test]
    fn constant_trace_prefers_no_loading() {
        let times: Vec<f64> = (0..=300).map(f64::from).collect();
        let trace = TransientTrace::unweighted(times, vec![34.0; 301]).unwrap();
        let fit = fit_cooling(&trace).unwrap();
        assert_eq!(fit.beta_peak, 0.0);
        assert_eq!(fit.rate, 0.0);
        assert!((fit.t_skin_star - 34.0).abs() < 1e-12);
    }

    #[test]
    fn heating_branch_recovers_parameters() {
        let times: Vec<f64> = (0..=300).map(f64::from).collect();
        let temps = times.iter().map(|t| 33.0 + 3.0 * (1.0 - (-0.02 * t).exp())).collect();
        let fit = fit_heating(&TransientTrace::unweighted(times, temps).unwrap()).unwrap();
        assert!((fit.t_skin_star - 33.0).abs() < 1e-4);
        assert!((fit.beta_peak - 3.0).abs() < 1e-4);
        assert!((fit.rate - 0.02).abs() < 1e-4);
    }

    #[test]
    fn refuses_short_or_unweighted_traces() {
        let short = exponential(34.0, 4.0, 0.01, 20.0, 1.0);
        assert!(matches!(fit_cooling(&short), Err(Error::InsufficientData(_))));
        let mut zero = exponential(34.0, 4.0, 0.01, 300.0, 1.0);
        zero.weights.iter_mut().for_each(|w| *w = 0.0);
        assert!(matches!(fit_cooling(&zero), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn rejects_malformed_traces() {
        assert!(TransientTrace::unweighted(vec![0.0, 1.0], vec![1.0, 2.0]).is_err());
        assert!(TransientTrace::unweighted(vec![0.0, 2.0, 1.0], vec![1.0; 3]).is_err());
        assert!(TransientTrace::new(vec![0.0, 1.0, 2.0], vec![1.0; 3], vec![1.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn large_amplitude_hits_the_box() {
        let fit = fit_cooling(&exponential(30.0, 30.0, 0.01, 300.0, 1.0)).unwrap();
        assert!(fit.at_boundary);
        assert_eq!(fit.beta_peak, 20.0);
    }

    #[test]
    fn core_correction() {
        let fit = fit_cooling(&exponential(34.0, 4.0, 0.01, 300.0, 1.0)).unwrap();
        assert_eq!(correct_core(&fit, &CoreMap::identity()), fit.t_skin_star);
        let shifted = FitResult { t_skin_star: 34.0, ..fit };
        assert_eq!(correct_core(&shifted, &CoreMap::new(3.0, 1.0).unwrap()), 37.0);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let trace = exponential(34.0, 4.0, 0.01, 60.0, 2.0);
        let path = dir.path().join("trace.csv");
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        std::fs::write(&path, buf).unwrap();
        assert_eq!(TransientTrace::from_csv_file(&path).unwrap(), trace);

        std::fs::write(&path, "time_s,temp_c,weight\n0,34,1\n1,abc,1\n").unwrap();
        match TransientTrace::from_csv_file(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn noisy(seed: u64) -> TransientTrace {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let times: Vec<f64> = (0..=120).map(|i| 2.5 * i as f64).collect();
        let temps = times
            .iter()
            .map(|t| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let u = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                34.5 + 2.5 * (-0.012 * t).exp() + 0.1 * u
            })
            .collect();
        let weights = (0..=120).map(|i| if i % 17 == 5 { 0.0 } else { 1.0 }).collect();
        TransientTrace::new(times, temps, weights).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn shift_equivariance(seed in 0u64..1000, c in -3.0f64..3.0) {
            let trace = noisy(seed);
            let base = fit_cooling(&trace).unwrap();
            let mut shifted = trace.clone();
            shifted.temps.iter_mut().for_each(|t| *t += c);
            let fit = fit_cooling(&shifted).unwrap();
            prop_assert!((fit.t_skin_star - base.t_skin_star - c).abs() < 1e-6);
            prop_assert!((fit.beta_peak - base.beta_peak).abs() < 1e-5);
            prop_assert!((fit.rate - base.rate).abs() < 1e-7);
        }

        #[test]
        fn time_origin_invariance(seed in 0u64..1000, t0 in 0.0f64..5000.0) {
            let trace = noisy(seed);
            let base = fit_cooling(&trace).unwrap();
            let mut moved = trace.clone();
            moved.times.iter_mut().for_each(|t| *t += t0);
            let fit = fit_cooling(&moved).unwrap();
            prop_assert!((fit.t_skin_star - base.t_skin_star).abs() < 1e-6);
            prop_assert!((fit.rate - base.rate).abs() < 1e-7);
        }

        #[test]
        fn zero_weight_samples_are_ignored(seed in 0u64..1000, junk in -1e6f64..1e6) {
            let trace = noisy(seed);
            let base = fit_cooling(&trace).unwrap();
            let mut perturbed = trace.clone();
            perturbed.temps[5] = junk;
            prop_assert_eq!(fit_cooling(&perturbed).unwrap(), base);
        }
    }
}
