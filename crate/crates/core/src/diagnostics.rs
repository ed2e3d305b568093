//! Convergence checks on single-chain traces.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MIN_TRACE_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSeries<F> {
    pub name: String,
    pub values: Vec<F>,
}

fn mean<F: Scalar>(x: &[F]) -> F {
    x.iter().copied().sum::<F>() / F::from_count(x.len())
}

/// Variance of the window mean from non-overlapping batch means, with about
/// `√n` batches.
fn batch_mean_variance<F: Scalar>(x: &[F]) -> F {
    let n = x.len();
    let b = ((n as f64).sqrt().floor() as usize).max(2);
    let size = n / b;
    let used = &x[n - b * size..];
    let means: Vec<F> = used.chunks(size).map(mean).collect();
    let m = mean(&means);
    let s2 = means.iter().map(|v| (*v - m).powi(2)).sum::<F>() / F::from_count(b - 1);
    s2 / F::from_count(b)
}

/// Geweke z-score comparing the means of an early and a late window.
pub fn geweke_z<F: Scalar>(series: &[F], frac_first: F, frac_last: F) -> Result<F> {
    let n = series.len();
    let n1 = (F::from_count(n) * frac_first).floor().to_f64_lossy() as usize;
    let n2 = (F::from_count(n) * frac_last).floor().to_f64_lossy() as usize;
    if n1 < 10 || n2 < 10 || n1 + n2 > n {
        return Err(Error::InsufficientSamples {
            needed: MIN_TRACE_LEN.max(100),
            found: n,
        });
    }
    let first = &series[..n1];
    let last = &series[n - n2..];
    let v = batch_mean_variance(first) + batch_mean_variance(last);
    if !(v > F::zero()) {
        return Err(Error::Degenerate(
            "series is constant within a window".into(),
        ));
    }
    Ok((mean(first) - mean(last)) / v.sqrt())
}

/// Biased autocorrelation for lags `0..=max_lag`.
pub fn autocorrelation<F: Scalar>(series: &[F], max_lag: usize) -> Result<Vec<F>> {
    let n = series.len();
    if max_lag * 2 >= n {
        return Err(Error::InsufficientSamples {
            needed: 2 * max_lag + 1,
            found: n,
        });
    }
    let m = mean(series);
    let d: Vec<F> = series.iter().map(|v| *v - m).collect();
    let c0: F = d.iter().map(|v| *v * *v).sum();
    if !(c0 > F::zero()) {
        return Err(Error::Degenerate("series is constant".into()));
    }
    Ok((0..=max_lag)
        .map(|k| {
            if k == 0 {
                F::one()
            } else {
                d[..n - k]
                    .iter()
                    .zip(&d[k..])
                    .map(|(a, b)| *a * *b)
                    .sum::<F>()
                    / c0
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterDiagnostic {
    pub parameter: String,
    /// `None` when the diagnostic is undefined for this series.
    pub geweke_z: Option<f64>,
    pub pass: Option<bool>,
    pub acf: Vec<f64>,
    pub note: Option<String>,
}

/// Geweke score (pass at `|z| < 2`) and the first ACF lags for each series.
pub fn diagnose(series: &[TraceSeries<f64>], acf_lags: usize) -> Vec<ParameterDiagnostic> {
    series
        .iter()
        .map(|s| {
            let (z, note) = match geweke_z(&s.values, 0.1, 0.5) {
                Ok(z) => (Some(z), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let lags = acf_lags.min(s.values.len().saturating_sub(1) / 2);
            let acf = autocorrelation(&s.values, lags).unwrap_or_default();
            ParameterDiagnostic {
                parameter: s.name.clone(),
                geweke_z: z,
                pass: z.map(|z| z.abs() < 2.0),
                acf,
                note,
            }
        })
        .collect()
}
