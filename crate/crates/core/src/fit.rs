//! Power-law envelope fits `v ~ C t^p` on a time window.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::TimeSeries;
use crate::error::{KgzError, Result};

pub const MIN_FIT_POINTS: usize = 8;
pub const BOOTSTRAP_SAMPLES: usize = 2000;
pub const DEFAULT_FIT_SEED: u64 = 0x6b67_7a66;

/// Fitted exponent with its 95% bootstrap interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitResult {
    pub exponent: f64,
    pub interval: (f64, f64),
    pub window: (f64, f64),
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    pub points: usize,
}

impl fmt::Display for FitResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "slope {:.4} (95% [{:.4}, {:.4}]) on t in [{}, {}], {} points, rms {:.2e}",
            self.exponent, self.interval.0, self.interval.1, self.window.0, self.window.1, self.points, self.residual
        )
    }
}

/// Ordinary least squares `y = a + b x`; returns `(b, a)` or `None` when all
/// `x` coincide.
pub fn least_squares(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 1e-14 * x.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE) {
        return None;
    }
    let b = sxy / sxx;
    Some((b, my - b * mx))
}

/// Log-log slope of positive samples; no window or bootstrap.
pub fn loglog_slope(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.iter().chain(values).any(|v| !(*v > 0.0)) {
        return Err(KgzError::Fit("log-log slope needs positive times and values".into()));
    }
    let x: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    least_squares(&x, &y)
        .map(|(b, _)| b)
        .ok_or_else(|| KgzError::Fit("need at least two distinct times".into()))
}

pub fn fit_envelope(series: &TimeSeries, t1: f64, t2: f64) -> Result<FitResult> {
    fit_envelope_seeded(series, t1, t2, DEFAULT_FIT_SEED)
}

/// Least-squares slope of `log v` against `log t` over `[t1, t2]`, with a
/// percentile bootstrap over resampled points.
pub fn fit_envelope_seeded(series: &TimeSeries, t1: f64, t2: f64, seed: u64) -> Result<FitResult> {
    if !(t1 > 0.0) || t2 < 2.0 * t1 {
        return Err(KgzError::Fit(format!("window [{t1}, {t2}] must satisfy 0 < t1 and t2 >= 2 t1")));
    }
    let w = series.window(t1, t2);
    if w.len() < MIN_FIT_POINTS {
        return Err(KgzError::Fit(format!("{} points in [{t1}, {t2}], need {MIN_FIT_POINTS}", w.len())));
    }
    if let Some((t, v)) = w.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(KgzError::Fit(format!("nonpositive value {v} at t = {t}")));
    }
    let x: Vec<f64> = w.times.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = w.values.iter().map(|v| v.ln()).collect();
    let (b, a) = least_squares(&x, &y).ok_or_else(|| KgzError::Fit("degenerate time window".into()))?;
    let rms = (x.iter().zip(&y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum::<f64>() / x.len() as f64).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.len();
    let mut slopes = Vec::with_capacity(BOOTSTRAP_SAMPLES);
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    while slopes.len() < BOOTSTRAP_SAMPLES {
        for j in 0..n {
            let i = rng.gen_range(0..n);
            bx[j] = x[i];
            by[j] = y[i];
        }
        if let Some((s, _)) = least_squares(&bx, &by) {
            slopes.push(s);
        }
    }
    slopes.sort_by(f64::total_cmp);
    let pick = |q: f64| slopes[((q * (slopes.len() - 1) as f64).round() as usize).min(slopes.len() - 1)];
    Ok(FitResult {
        exponent: b,
        interval: (pick(0.025).min(b), pick(0.975).max(b)),
        window: (t1, t2),
        residual: rms,
        points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(f: impl Fn(f64) -> f64) -> TimeSeries {
        let t: Vec<f64> = (0..=60).map(|i| 1.0 + 0.5 * i as f64).collect();
        let v = t.iter().map(|&t| f(t)).collect();
        TimeSeries::new(t, v)
    }

    #[test]
    fn exact_power_law() {
        let r = fit_envelope(&series(|t| 3.0 / t), 5.0, 28.0).unwrap();
        assert!((r.exponent + 1.0).abs() < 1e-12);
        assert!((r.interval.0 + 1.0).abs() < 1e-12 && (r.interval.1 + 1.0).abs() < 1e-12);
        assert!(r.residual < 1e-12);
        assert_eq!(r.window, (5.0, 28.0));
    }

    #[test]
    fn constant_has_zero_slope() {
        let r = fit_envelope(&series(|_| 0.7), 2.0, 20.0).unwrap();
        assert!(r.exponent.abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_windows_and_values() {
        let s = series(|t| 1.0 / t);
        assert!(matches!(fit_envelope(&s, 10.0, 15.0), Err(KgzError::Fit(_))));
        assert!(matches!(fit_envelope(&s, 29.0, 60.0), Err(KgzError::Fit(_))));
        assert!(matches!(fit_envelope(&series(|t| t - 6.0), 3.0, 20.0), Err(KgzError::Fit(_))));
        assert!(matches!(fit_envelope(&s, 0.0, 20.0), Err(KgzError::Fit(_))));
    }

    #[test]
    fn bootstrap_is_seeded_and_brackets_noisy_slope() {
        let s = series(|t| t.powf(-0.5) * (1.0 + 0.05 * (7.0 * t).sin()));
        let a = fit_envelope_seeded(&s, 2.0, 30.0, 1).unwrap();
        let b = fit_envelope_seeded(&s, 2.0, 30.0, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.interval.0 <= a.exponent && a.exponent <= a.interval.1);
        assert!(a.interval.1 - a.interval.0 > 0.0);
        assert!((a.exponent + 0.5).abs() < 0.05);
    }
}
