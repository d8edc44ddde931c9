//! Bath response function
//!
//! `alpha(t) = (1/pi) Int J(w) [coth(beta w / 2) cos(w t) - i sin(w t)] dw`
//!
//! evaluated by adaptive quadrature over the frequency window of the bath.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{integrate, QuadOptions, QuadratureError};
use crate::spectral::SpectralDensity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResponseError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("response envelope does not stay below threshold before t_max = {0}")]
    NoDecay(f64),
    #[error("response function vanishes at t = 0")]
    ZeroResponse,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// `coth(x)` that stays accurate near zero and saturates for large arguments.
pub fn coth_safe(x: f64) -> f64 {
    let ax = x.abs();
    if ax > 20.0 {
        x.signum()
    } else if ax < 1e-4 {
        1.0 / x + x / 3.0
    } else {
        1.0 / x.tanh()
    }
}

/// `coth(beta w / 2)`.
pub fn thermal_factor(beta: f64, omega: f64) -> f64 {
    coth_safe(0.5 * beta * omega)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseValue {
    pub value: Complex64,
    pub error: f64,
}

/// `alpha(t)`; negative `t` returns `conj(alpha(|t|))`.
pub fn response_at(t: f64, spec: &SpectralDensity, beta: f64, tol: f64) -> Result<ResponseValue, ResponseError> {
    if !(beta > 0.0) {
        return Err(ResponseError::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    if !(tol > 0.0) {
        return Err(ResponseError::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    if !t.is_finite() {
        return Err(ResponseError::InvalidArgument(format!("t must be finite, got {t}")));
    }
    if spec.is_zero() {
        return Ok(ResponseValue {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
        });
    }
    let tau = t.abs();
    let (lo, hi) = spec.integration_range();
    let opts = QuadOptions::new(tol)
        .max_panel_width((hi - lo) / 8.0)
        .oscillation_rate(tau);
    let r = integrate(
        |w| {
            let j = spec.eval(w);
            if j == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let (s, c) = (w * tau).sin_cos();
            Complex64::new(j * thermal_factor(beta, w) * c, -j * s) / PI
        },
        lo,
        hi,
        opts,
    )?;
    let value = if t < 0.0 { r.value.conj() } else { r.value };
    Ok(ResponseValue { value, error: r.error })
}

/// Samples of `alpha(t)` on an increasing time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSamples {
    pub times: Vec<f64>,
    pub values: Vec<Complex64>,
    pub quad_error: Vec<f64>,
}

/// Samples `alpha` on `times`; the samples are computed concurrently and
/// agree bit for bit with a serial evaluation.
pub fn sample_response(
    times: &[f64],
    spec: &SpectralDensity,
    beta: f64,
    tol: f64,
) -> Result<ResponseSamples, ResponseError> {
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ResponseError::InvalidArgument(
            "sample times must be strictly increasing".into(),
        ));
    }
    let values: Vec<ResponseValue> = times
        .par_iter()
        .map(|&t| response_at(t, spec, beta, tol))
        .collect::<Result<_, _>>()?;
    Ok(ResponseSamples {
        times: times.to_vec(),
        values: values.iter().map(|v| v.value).collect(),
        quad_error: values.iter().map(|v| v.error).collect(),
    })
}

/// Smallest `t` on a grid of step `1/(4 omega_c)` after which
/// `|alpha| < threshold |alpha(0)|` for every sampled time up to `t_max`.
pub fn memory_time(
    spec: &SpectralDensity,
    beta: f64,
    threshold: f64,
    t_max: f64,
    tol: f64,
) -> Result<f64, ResponseError> {
    let (_, hi) = spec.integration_range();
    let omega_c = match spec.window.upper {
        Some(u) => u,
        None => hi,
    };
    let step = 1.0 / (4.0 * omega_c);
    memory_time_from(|t| Ok(response_at(t, spec, beta, tol)?.value), step, threshold, t_max)
}

/// [`memory_time`] for an arbitrary response function sampled with `step`.
pub fn memory_time_from<F>(alpha: F, step: f64, threshold: f64, t_max: f64) -> Result<f64, ResponseError>
where
    F: Fn(f64) -> Result<Complex64, ResponseError> + Sync,
{
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ResponseError::InvalidArgument(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    if !(t_max > 0.0 && step > 0.0) {
        return Err(ResponseError::InvalidArgument("t_max and step must be positive".into()));
    }
    let n = (t_max / step).floor() as usize;
    let moduli: Vec<f64> = (0..=n)
        .into_par_iter()
        .map(|i| alpha(i as f64 * step).map(|a| a.norm()))
        .collect::<Result<_, _>>()?;
    let a0 = moduli[0];
    if a0 == 0.0 {
        return Err(ResponseError::ZeroResponse);
    }
    let limit = threshold * a0;
    let last_above = moduli.iter().rposition(|&m| m >= limit).unwrap_or(0);
    if last_above == n {
        return Err(ResponseError::NoDecay(t_max));
    }
    Ok((last_above + 1) as f64 * step)
}
