//! Error metrics and equity statistics.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// Mean absolute percentage error [%]; `None` when a truth value is 0.
    pub mape: Option<f64>,
}

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::Shape {
            expected: "equal, non-empty lengths".into(),
            got: format!("{} predictions, {} truths", pred.len(), truth.len()),
        });
    }
    Ok(())
}

/// MAE, RMSE and MAPE of `pred` against `truth`.
pub fn error_metrics(pred: &[f64], truth: &[f64]) -> Result<ErrorMetrics> {
    check_pair(pred, truth)?;
    let n = pred.len() as f64;
    let mae = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    let rmse = (pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n).sqrt();
    Ok(ErrorMetrics {
        mae,
        rmse,
        mape: mape(pred, truth).ok(),
    })
}

/// Mean absolute percentage error [%].
pub fn mape(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    if truth.iter().any(|t| *t == 0.0) {
        return Err(Error::Domain("MAPE is undefined for a zero truth value".into()));
    }
    let n = pred.len() as f64;
    Ok(100.0 * pred.iter().zip(truth).map(|(p, t)| ((p - t) / t).abs()).sum::<f64>() / n)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)).sqrt()
}

/// Pearson correlation coefficient; `None` when either input is constant.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Shape {
            expected: "equal lengths of at least 2".into(),
            got: format!("{} and {}", x.len(), y.len()),
        });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

// ---------------------------------------------------------------------------
// Special functions

/// Natural log of the gamma function (Lanczos, g = 7, n = 9), `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Student-t cumulative distribution with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    if t * t < df {
        // Near the centre use the complementary form to avoid cancellation in 1 - x.
        let body = 0.5 * regularized_incomplete_beta(0.5, df / 2.0, t * t / (df + t * t));
        return 0.5 + t.signum() * body;
    }
    let tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided tail probability `P(|T| >= |t|)`, computed without cancellation.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Quantile of the Student-t distribution, `0 < p < 1`, by bisection.
pub fn student_t_quantile(p: f64, df: f64) -> f64 {
    let (mut lo, mut hi) = (-1.0, 1.0);
    while student_t_cdf(lo, df) > p {
        lo *= 2.0;
    }
    while student_t_cdf(hi, df) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * mid.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Survival function of the Kolmogorov distribution,
/// `Q(lambda) = P(sqrt(n) D > lambda)` as `n -> infinity`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // Theta-function form converges fast for small arguments.
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut sum = 0.0;
        for j in 1..=50 {
            let k = (2 * j - 1) as f64;
            let term = (-k * k * pi2 / (8.0 * lambda * lambda)).exp();
            sum += term;
            if term < 1e-20 * sum {
                break;
            }
        }
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = (-2.0 * j * j * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-20 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Hypothesis tests

/// Alternative hypothesis, phrased on the empirical CDFs `F_a`, `F_b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    /// `F_a != F_b`; statistic `sup |F_a - F_b|`.
    TwoSided,
    /// `F_a > F_b` somewhere (sample `a` tends to be smaller); statistic
    /// `sup (F_a - F_b)`.
    Greater,
    /// `F_a < F_b` somewhere (sample `a` tends to be larger); statistic
    /// `sup (F_b - F_a)`.
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov-Smirnov test with asymptotic p-values.
///
/// Two-sided p uses the Kolmogorov distribution at
/// `(sqrt(n) + 0.12 + 0.11 / sqrt(n)) D` with `n = n_a n_b / (n_a + n_b)`;
/// one-sided p is the bound `exp(-2 n D^2)`.
pub fn ks_two_sample(a: &[f64], b: &[f64], alternative: Alternative) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("both samples must be non-empty".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Domain("samples contain NaN".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let (mut d_plus, mut d_minus) = (0.0_f64, 0.0_f64);
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(p), Some(q)) => p.min(*q),
            (Some(p), None) => *p,
            (None, Some(q)) => *q,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        let diff = i as f64 / na - j as f64 / nb;
        d_plus = d_plus.max(diff);
        d_minus = d_minus.max(-diff);
    }
    let n_eff = na * nb / (na + nb);
    let (statistic, p_value) = match alternative {
        Alternative::TwoSided => {
            let d = d_plus.max(d_minus);
            let s = n_eff.sqrt();
            (d, kolmogorov_survival((s + 0.12 + 0.11 / s) * d))
        }
        Alternative::Greater => (d_plus, (-2.0 * n_eff * d_plus * d_plus).exp()),
        Alternative::Less => (d_minus, (-2.0 * n_eff * d_minus * d_minus).exp()),
    };
    Ok(KsResult {
        statistic,
        p_value: p_value.clamp(0.0, 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTResult {
    pub mean_difference: f64,
    pub t_statistic: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// 95% confidence interval of the mean difference.
    pub ci95: (f64, f64),
}

/// Paired t-test on `a - b`.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<PairedTResult> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Shape {
            expected: "paired samples of equal length >= 2".into(),
            got: format!("{} and {}", a.len(), b.len()),
        });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let df = n - 1.0;
    let m = mean(&d);
    let sd = std_dev(&d);
    let se = sd / n.sqrt();
    if se == 0.0 {
        let (t, p) = if m == 0.0 {
            (0.0, 1.0)
        } else {
            (m.signum() * f64::INFINITY, 0.0)
        };
        return Ok(PairedTResult {
            mean_difference: m,
            t_statistic: t,
            df,
            p_value: p,
            ci95: (m, m),
        });
    }
    let t = m / se;
    let q = student_t_quantile(0.975, df);
    Ok(PairedTResult {
        mean_difference: m,
        t_statistic: t,
        df,
        p_value: student_t_two_sided_p(t, df),
        ci95: (m - q * se, m + q * se),
    })
}

// ---------------------------------------------------------------------------
// Stratification

/// Melanin index separating dark from light skin.
pub const MI_THRESHOLD: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub count: usize,
    pub mae: f64,
    /// Mean signed error [C].
    pub mean_error: f64,
}

impl GroupSummary {
    fn of(errors: &[f64]) -> Option<Self> {
        (!errors.is_empty()).then(|| Self {
            count: errors.len(),
            mae: errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64,
            mean_error: mean(errors),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratifiedReport {
    pub threshold: f64,
    /// `MI >= threshold`.
    pub dark: Option<GroupSummary>,
    pub light: Option<GroupSummary>,
    /// Dark minus light mean error; absent unless both groups are present.
    pub mean_bias_difference: Option<f64>,
}

/// Splits signed errors by melanin index and compares the groups.
pub fn stratified_bias(errors: &[f64], melanin_index: &[f64], threshold: f64) -> Result<StratifiedReport> {
    if errors.len() != melanin_index.len() {
        return Err(Error::Shape {
            expected: format!("{} melanin indices", errors.len()),
            got: melanin_index.len().to_string(),
        });
    }
    let (dark, light): (Vec<(f64, f64)>, Vec<(f64, f64)>) = errors
        .iter()
        .copied()
        .zip(melanin_index.iter().copied())
        .partition(|(_, mi)| *mi >= threshold);
    let dark = GroupSummary::of(&dark.iter().map(|(e, _)| *e).collect::<Vec<_>>());
    let light = GroupSummary::of(&light.iter().map(|(e, _)| *e).collect::<Vec<_>>());
    Ok(StratifiedReport {
        threshold,
        dark,
        light,
        mean_bias_difference: match (dark, light) {
            (Some(d), Some(l)) => Some(d.mean_error - l.mean_error),
            _ => None,
        },
    })
}

/// Predictions and truths of one group.
#[derive(Debug, Clone, Copy)]
pub struct GroupData<'a> {
    pub pred: &'a [f64],
    pub truth: &'a [f64],
}

impl GroupData<'_> {
    pub fn errors(&self) -> Vec<f64> {
        self.pred.iter().zip(self.truth).map(|(p, t)| p - t).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquityReport {
    pub dark: ErrorMetrics,
    pub light: ErrorMetrics,
    /// Dark minus light mean signed error [C].
    pub mean_bias_difference: f64,
    /// One-sided test that dark-group errors are larger.
    pub ks: KsResult,
    /// Paired test of dark against light errors; present when the groups
    /// have equal size.
    pub paired: Option<PairedTResult>,
}

/// Compares signed errors of a dark and a light group.
pub fn equity_report(dark: GroupData<'_>, light: GroupData<'_>) -> Result<EquityReport> {
    let de = dark.errors();
    let le = light.errors();
    let paired = if de.len() == le.len() && de.len() >= 2 {
        Some(paired_t(&de, &le)?)
    } else {
        None
    };
    Ok(EquityReport {
        dark: error_metrics(dark.pred, dark.truth)?,
        light: error_metrics(light.pred, light.truth)?,
        mean_bias_difference: mean(&de) - mean(&le),
        ks: ks_two_sample(&le, &de, Alternative::Greater)?,
        paired,
    })
}

/// Dark against light comparison built from signed errors alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorComparison {
    pub dark: GroupSummary,
    pub light: GroupSummary,
    /// Dark minus light mean signed error [C].
    pub mean_bias_difference: f64,
    /// One-sided test that dark-group errors are larger.
    pub ks: KsResult,
    pub ks_two_sided: KsResult,
    /// Present when the groups have equal size.
    pub paired: Option<PairedTResult>,
}

pub fn compare_errors(dark: &[f64], light: &[f64]) -> Result<ErrorComparison> {
    let (Some(d), Some(l)) = (GroupSummary::of(dark), GroupSummary::of(light)) else {
        return Err(Error::InsufficientData("both groups need at least one error".into()));
    };
    let paired = if dark.len() == light.len() && dark.len() >= 2 {
        Some(paired_t(dark, light)?)
    } else {
        None
    };
    Ok(ErrorComparison {
        dark: d,
        light: l,
        mean_bias_difference: d.mean_error - l.mean_error,
        ks: ks_two_sample(light, dark, Alternative::Greater)?,
        ks_two_sided: ks_two_sample(light, dark, Alternative::TwoSided)?,
        paired,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::integrate;
    use proptest::prelude::*;

    #[test]
    fn metrics_examples() {
        let m = error_metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((m.mae, m.rmse, m.mape), (0.0, 0.0, Some(0.0)));
        let m = error_metrics(&[2.0, 3.0], &[1.0, 2.0]).unwrap();
        assert_eq!((m.mae, m.rmse), (1.0, 1.0));
        let m = error_metrics(&[2.0, 4.0], &[1.0, 2.0]).unwrap();
        assert_eq!(m.mae, 1.5);
        assert!((m.rmse - 2.5_f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.mape, Some(100.0));
    }

    #[test]
    fn mape_zero_truth_is_domain_error() {
        assert!(matches!(mape(&[1.0], &[0.0]), Err(Error::Domain(_))));
        let m = error_metrics(&[1.0], &[0.0]).unwrap();
        assert_eq!((m.mae, m.mape), (1.0, None));
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0_f64;
        for n in 1..20 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12, "{n}");
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    /// Student-t CDF by direct quadrature of the density.
    fn t_cdf_by_quadrature(t: f64, df: f64) -> f64 {
        let ln_norm = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
        let pdf = |x: f64| (ln_norm - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
        let body = integrate(pdf, 0.0, t.abs(), 1e-15, 1e-14);
        if t >= 0.0 {
            0.5 + body
        } else {
            0.5 - body
        }
    }

    #[test]
    fn t_cdf_matches_quadrature() {
        for df in [1.0, 2.0, 4.0, 7.5, 20.0, 100.0] {
            for t in [-6.0, -2.3, -0.4, 0.0, 0.7, 1.96, 3.1, 9.0] {
                let a = student_t_cdf(t, df);
                let b = t_cdf_by_quadrature(t, df);
                assert!((a - b).abs() < 1e-10, "df {df} t {t}: {a} vs {b}");
            }
        }
        // Cauchy special case.
        assert!((student_t_cdf(1.0, 1.0) - 0.75).abs() < 1e-14);
    }

    #[test]
    fn t_quantile_inverts_cdf() {
        for df in [2.0, 4.0, 20.0] {
            for p in [0.025, 0.5, 0.9, 0.975] {
                let q = student_t_quantile(p, df);
                assert!((student_t_cdf(q, df) - p).abs() < 1e-12, "df {df} p {p} q {q} {}", student_t_cdf(q, df) - p);
            }
        }
        assert!((student_t_quantile(0.975, 4.0) - 2.776_445_105_197_799).abs() < 1e-9);
    }

    #[test]
    fn kolmogorov_series_agree_at_switch() {
        // Both representations are exact; compare them near the switch point.
        for lambda in [0.9, 0.99, 1.0, 1.01, 1.1] {
            let pi2 = std::f64::consts::PI.powi(2);
            let theta: f64 = (1..=50)
                .map(|j| {
                    let k = (2 * j - 1) as f64;
                    (-k * k * pi2 / (8.0 * lambda * lambda)).exp()
                })
                .sum();
            let from_theta = 1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * theta;
            let alt: f64 = (1..=100)
                .map(|j| {
                    let j = j as f64;
                    2.0 * (-1.0_f64).powi(j as i32 - 1) * (-2.0 * j * j * lambda * lambda).exp()
                })
                .sum();
            assert!((from_theta - alt).abs() < 1e-14);
            assert!((kolmogorov_survival(lambda) - alt).abs() < 1e-14);
        }
    }

    #[test]
    fn ks_examples() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], Alternative::TwoSided).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::TwoSided).unwrap();
        assert_eq!(r.statistic, 1.0);
        let g = ks_two_sample(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::Greater).unwrap();
        let l = ks_two_sample(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::Less).unwrap();
        assert_eq!((g.statistic, l.statistic), (1.0, 0.0));
        assert!((g.p_value - (-3.0_f64).exp()).abs() < 1e-15);
        assert!(ks_two_sample(&[], &[1.0], Alternative::TwoSided).is_err());
    }

    #[test]
    fn ks_handles_ties() {
        let r = ks_two_sample(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0], Alternative::TwoSided).unwrap();
        assert!((r.statistic - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn paired_t_examples() {
        let a = [1.0, 2.0, 3.0];
        let r = paired_t(&a, &a).unwrap();
        assert_eq!((r.t_statistic, r.p_value, r.ci95), (0.0, 1.0, (0.0, 0.0)));
        let r = paired_t(&[2.0, 3.0, 4.0], &a).unwrap();
        assert_eq!(r.p_value, 0.0);
        assert!(r.t_statistic.is_infinite());
        assert!(paired_t(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn paired_t_reference_vector() {
        let d = [1.1, 0.9, 1.0, 1.2, 0.8];
        let zeros = [0.0; 5];
        let r = paired_t(&d, &zeros).unwrap();
        // mean 1, sample sd sqrt(0.025), se sqrt(0.005)
        let se = 0.005_f64.sqrt();
        assert!((r.t_statistic - 1.0 / se).abs() < 1e-9);
        let p_ref = 2.0 * (1.0 - t_cdf_by_quadrature(1.0 / se, 4.0));
        assert!((r.p_value - p_ref).abs() < 1e-9, "{} vs {p_ref}", r.p_value);
        let q = 2.776_445_105_197_799;
        assert!((r.ci95.0 - (1.0 - q * se)).abs() < 1e-9);
        assert!((r.ci95.1 - (1.0 + q * se)).abs() < 1e-9);
    }

    #[test]
    fn stratified_examples() {
        let mi = [30.0, 40.0, 50.0, 60.0];
        let r = stratified_bias(&[0.5; 4], &mi, MI_THRESHOLD).unwrap();
        assert_eq!(r.mean_bias_difference, Some(0.0));
        let r = stratified_bias(&[0.1, 0.2, 0.82, 0.92], &mi, MI_THRESHOLD).unwrap();
        assert!((r.mean_bias_difference.unwrap() - 0.72).abs() < 1e-12);
        assert_eq!(r.dark.unwrap().count, 2);
        let r = stratified_bias(&[0.1; 4], &mi, 100.0).unwrap();
        assert!(r.dark.is_none() && r.light.is_some() && r.mean_bias_difference.is_none());
    }

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), Some(1.0));
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).unwrap(), None);
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae(pairs in proptest::collection::vec((-50.0f64..50.0, 1.0f64..50.0), 1..40)) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = error_metrics(&p, &t).unwrap();
            prop_assert!(m.rmse >= m.mae - 1e-12);
        }

        #[test]
        fn metrics_permutation_invariant(pairs in proptest::collection::vec((-50.0f64..50.0, 1.0f64..50.0), 2..30), rot in 0usize..30) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let k = rot % p.len();
            let mut p2 = p.clone();
            let mut t2 = t.clone();
            p2.rotate_left(k);
            t2.rotate_left(k);
            let a = error_metrics(&p, &t).unwrap();
            let b = error_metrics(&p2, &t2).unwrap();
            prop_assert!((a.mae - b.mae).abs() < 1e-12);
            prop_assert!((a.rmse - b.rmse).abs() < 1e-12);
        }

        #[test]
        fn ks_two_sided_symmetric(a in proptest::collection::vec(-5.0f64..5.0, 1..30), b in proptest::collection::vec(-5.0f64..5.0, 1..30)) {
            let x = ks_two_sample(&a, &b, Alternative::TwoSided).unwrap();
            let y = ks_two_sample(&b, &a, Alternative::TwoSided).unwrap();
            prop_assert_eq!(x, y);
            prop_assert!((0.0..=1.0).contains(&x.statistic));
            prop_assert!((0.0..=1.0).contains(&x.p_value));
        }

        #[test]
        fn paired_t_antisymmetric(pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..30)) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let x = paired_t(&a, &b).unwrap();
            let y = paired_t(&b, &a).unwrap();
            prop_assert!((x.t_statistic + y.t_statistic).abs() < 1e-9 * x.t_statistic.abs().max(1.0));
            prop_assert!((x.p_value - y.p_value).abs() < 1e-12);
        }
    }
}
