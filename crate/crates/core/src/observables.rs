//! Decoherence and relaxation times, plus the exact pure-dephasing solution
//! used to validate the propagator.

use std::f64::consts::E;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Trajectory;
use crate::quadrature::{integrate_real, QuadOptions, QuadratureError};
use crate::response::{response_at, ResponseError};
use crate::spectral::SpectralDensity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("initial coherence |rho12(0)| = {0:e} is too small")]
    ZeroInitialCoherence(f64),
    #[error("population never settles within the horizon")]
    NoDecay,
    #[error("initial population already at its long-time value (distance {0:e})")]
    DegenerateTarget(f64),
    #[error("trajectory too short: {0}")]
    TooShort(String),
    #[error(transparent)]
    Response(#[from] ResponseError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Fraction of the trajectory averaged to find the long-time population.
pub const TAIL_FRACTION: f64 = 0.2;

/// A 1/e crossing located between two samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub time: f64,
    /// Sample index at or after which the criterion holds.
    pub index: usize,
    /// Relative position of the crossing inside the bracketing interval.
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DecayTimes {
    pub tau2: Option<f64>,
    pub tau1: Option<f64>,
    pub tau2_crossing: Option<Crossing>,
    pub tau1_crossing: Option<Crossing>,
    /// Long-time population used as the relaxation target.
    pub tau1_target: Option<f64>,
}

fn interpolate(times: &[f64], i: usize, y0: f64, y1: f64, level: f64) -> Crossing {
    let frac = if y1 != y0 { ((y0 - level) / (y0 - y1)).clamp(0.0, 1.0) } else { 1.0 };
    Crossing {
        time: times[i - 1] + frac * (times[i] - times[i - 1]),
        index: i,
        fraction: frac,
    }
}

/// First time `|c(t)|` falls to `|c(0)|/e`, linearly interpolated.
pub fn coherence_crossing(times: &[f64], coherence: &[Complex64]) -> Result<Option<Crossing>, ObservableError> {
    if times.len() != coherence.len() || times.is_empty() {
        return Err(ObservableError::TooShort("need matching, non-empty series".into()));
    }
    let c0 = coherence[0].norm();
    if c0 < 1e-14 {
        return Err(ObservableError::ZeroInitialCoherence(c0));
    }
    let level = c0 / E;
    for i in 1..coherence.len() {
        let (y0, y1) = (coherence[i - 1].norm(), coherence[i].norm());
        if y1 <= level {
            return Ok(Some(interpolate(times, i, y0, y1, level)));
        }
    }
    Ok(None)
}

/// Decoherence time of a trajectory, or `None` when `|rho12|` never reaches 1/e.
pub fn coherence_time(traj: &Trajectory) -> Result<Option<f64>, ObservableError> {
    Ok(coherence_crossing(&traj.times, &traj.rho12())?.map(|c| c.time))
}

/// Relaxation of a population series toward its tail average.
///
/// Returns the first time after which `|p(t) - p_inf|` stays below
/// `|p(0) - p_inf| / e`, interpolated inside the last violating interval,
/// together with `p_inf`.
pub fn relaxation_crossing(times: &[f64], population: &[f64]) -> Result<(Crossing, f64), ObservableError> {
    let n = population.len();
    if times.len() != n {
        return Err(ObservableError::TooShort("need matching series".into()));
    }
    let tail_len = ((n as f64) * TAIL_FRACTION).floor() as usize;
    if tail_len < 1 || n < 3 {
        return Err(ObservableError::TooShort(format!("{n} samples leave no tail window")));
    }
    let tail_start = n - tail_len;
    let target = population[tail_start..].iter().sum::<f64>() / tail_len as f64;
    let d0 = (population[0] - target).abs();
    if d0 < 1e-6 {
        return Err(ObservableError::DegenerateTarget(d0));
    }
    let level = d0 / E;
    let last_violation = population
        .iter()
        .rposition(|p| (p - target).abs() >= level)
        .expect("the first sample always violates");
    let settle = last_violation + 1;
    if settle >= tail_start {
        return Err(ObservableError::NoDecay);
    }
    let y0 = (population[settle - 1] - target).abs();
    let y1 = (population[settle] - target).abs();
    Ok((interpolate(times, settle, y0, y1, level), target))
}

/// Relaxation time of a trajectory's upper population.
pub fn relaxation_time(traj: &Trajectory) -> Result<f64, ObservableError> {
    Ok(relaxation_crossing(&traj.times, &traj.rho11())?.0.time)
}

/// Collects both times; failures to decay are recorded as absent values.
pub fn decay_times(coherence_run: Option<&Trajectory>, population_run: Option<&Trajectory>) -> DecayTimes {
    let mut out = DecayTimes::default();
    if let Some(t) = coherence_run {
        if let Ok(Some(c)) = coherence_crossing(&t.times, &t.rho12()) {
            out.tau2 = Some(c.time);
            out.tau2_crossing = Some(c);
        }
    }
    if let Some(t) = population_run {
        if let Ok((c, target)) = relaxation_crossing(&t.times, &t.rho11()) {
            out.tau1 = Some(c.time);
            out.tau1_crossing = Some(c);
            out.tau1_target = Some(target);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// pure dephasing

/// Tolerance of the dephasing exponent's time quadrature.
pub const DEPHASING_TOL: f64 = 1e-8;

/// Tolerance of each `alpha(u)` evaluation inside the dephasing quadrature.
const RESPONSE_TOL: f64 = 1e-11;

/// `Phi(t) = 4 Int_0^t (t - u) Re alpha(u) du`.
pub fn dephasing_exponent(spec: &SpectralDensity, beta: f64, t: f64) -> Result<f64, ObservableError> {
    if t == 0.0 || spec.is_zero() {
        return Ok(0.0);
    }
    let (_, hi) = spec.integration_range();
    let tol = RESPONSE_TOL;
    let err = std::cell::Cell::new(None);
    let (value, _) = integrate_real(
        |u| match response_at(u, spec, beta, tol) {
            Ok(a) => (t - u) * a.value.re,
            Err(e) => {
                err.set(Some(e));
                0.0
            }
        },
        0.0,
        t,
        QuadOptions::new(DEPHASING_TOL / 4.0).oscillation_rate(hi),
    )?;
    if let Some(e) = err.take() {
        return Err(e.into());
    }
    Ok(4.0 * value)
}

/// Exact coherence of the unbiased-tunneling-free qubit (`Delta = 0`):
/// `rho12(0) exp(-i eps t) exp(-Phi(t))`.
pub fn dephasing_oracle(
    spec: &SpectralDensity,
    beta: f64,
    eps_bias: f64,
    rho12_0: Complex64,
    t: f64,
) -> Result<Complex64, ObservableError> {
    let phi = dephasing_exponent(spec, beta, t)?;
    Ok(rho12_0 * Complex64::new(0.0, -eps_bias * t).exp() * (-phi).exp())
}

/// [`dephasing_oracle`] on an increasing time series, accumulating
/// `Int Re alpha` and `Int u Re alpha` interval by interval.
pub fn dephasing_oracle_series(
    spec: &SpectralDensity,
    beta: f64,
    eps_bias: f64,
    rho12_0: Complex64,
    times: &[f64],
) -> Result<Vec<Complex64>, ObservableError> {
    use rayon::prelude::*;
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(ObservableError::TooShort("times must be non-negative and increasing".into()));
    }
    if spec.is_zero() {
        return Ok(times
            .iter()
            .map(|&t| rho12_0 * Complex64::new(0.0, -eps_bias * t).exp())
            .collect());
    }
    let (_, hi) = spec.integration_range();
    let tol = RESPONSE_TOL;
    let n = times.len().max(1) as f64;
    let mut edges = Vec::with_capacity(times.len() + 1);
    edges.push(0.0);
    edges.extend_from_slice(times);
    // per interval: (Int Re alpha, Int u Re alpha)
    let pieces: Vec<(f64, f64)> = edges
        .par_windows(2)
        .map(|w| -> Result<(f64, f64), ObservableError> {
            let (a, b) = (w[0], w[1]);
            if a == b {
                return Ok((0.0, 0.0));
            }
            let err = std::sync::Mutex::new(None);
            let r = crate::quadrature::integrate(
                |u| match response_at(u, spec, beta, tol) {
                    Ok(v) => Complex64::new(v.value.re, u * v.value.re),
                    Err(e) => {
                        *err.lock().unwrap() = Some(e);
                        Complex64::new(0.0, 0.0)
                    }
                },
                a,
                b,
                QuadOptions::new(DEPHASING_TOL / (4.0 * n)).oscillation_rate(hi),
            )?;
            if let Some(e) = err.into_inner().unwrap() {
                return Err(e.into());
            }
            Ok((r.value.re, r.value.im))
        })
        .collect::<Result<_, _>>()?;
    let mut zeroth = 0.0;
    let mut first = 0.0;
    Ok(times
        .iter()
        .zip(&pieces)
        .map(|(&t, &(p0, p1))| {
            zeroth += p0;
            first += p1;
            let phi = 4.0 * (t * zeroth - first);
            rho12_0 * Complex64::new(0.0, -eps_bias * t).exp() * (-phi).exp()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::FrequencyWindow;

    fn grid(dt: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn exponential_coherence() {
        let dt = 0.006;
        let times = grid(dt, 3000);
        let c: Vec<_> = times.iter().map(|t| Complex64::new(0.5 * (-t / 3.0).exp(), 0.0)).collect();
        let tau = coherence_crossing(&times, &c).unwrap().unwrap().time;
        assert!((tau - 3.0).abs() < dt);
    }

    #[test]
    fn constant_coherence_never_crosses() {
        let times = grid(0.01, 100);
        let c = vec![Complex64::new(0.3, 0.2); times.len()];
        assert_eq!(coherence_crossing(&times, &c).unwrap(), None);
    }

    #[test]
    fn zero_coherence_rejected() {
        let times = grid(0.01, 3);
        let c = vec![Complex64::new(0.0, 0.0); 4];
        assert!(matches!(
            coherence_crossing(&times, &c),
            Err(ObservableError::ZeroInitialCoherence(_))
        ));
    }

    #[test]
    fn exponential_relaxation() {
        let dt = 0.01;
        let times = grid(dt, 20000);
        let p: Vec<_> = times.iter().map(|t| 0.4 + 0.3 * (-t / 5.0).exp()).collect();
        let (c, target) = relaxation_crossing(&times, &p).unwrap();
        assert!((target - 0.4).abs() < 1e-6);
        assert!((c.time - 5.0).abs() < dt, "{}", c.time);
    }

    #[test]
    fn constant_population_is_degenerate() {
        let times = grid(0.01, 100);
        let p = vec![0.5; times.len()];
        assert!(matches!(
            relaxation_crossing(&times, &p),
            Err(ObservableError::DegenerateTarget(_))
        ));
    }

    #[test]
    fn persistent_oscillation_does_not_settle() {
        let times = grid(0.01, 2000);
        let p: Vec<_> = times.iter().map(|t| 0.5 + 0.4 * (3.0 * t).cos()).collect();
        assert_eq!(relaxation_crossing(&times, &p), Err(ObservableError::NoDecay));
    }

    #[test]
    fn oracle_trivial_limits() {
        let zero = SpectralDensity::ohmic(0.0, 100.0, FrequencyWindow::new(11.0, 100.0));
        let c0 = Complex64::new(0.5, 0.0);
        let v = dephasing_oracle(&zero, 100.0, 10.0, c0, 0.7).unwrap();
        assert!((v - c0 * Complex64::new(0.0, -7.0).exp()).norm() < 1e-15);
        let ohm = SpectralDensity::ohmic(0.01, 100.0, FrequencyWindow::new(11.0, 100.0));
        assert_eq!(dephasing_oracle(&ohm, 100.0, 10.0, c0, 0.0).unwrap(), c0);
    }

    #[test]
    fn series_matches_pointwise() {
        let ohm = SpectralDensity::ohmic(0.01, 100.0, FrequencyWindow::new(11.0, 100.0));
        let times = [0.0, 0.05, 0.2, 0.45];
        let c0 = Complex64::new(0.5, 0.0);
        let series = dephasing_oracle_series(&ohm, 100.0, 10.0, c0, &times).unwrap();
        for (t, s) in times.iter().zip(&series) {
            let p = dephasing_oracle(&ohm, 100.0, 10.0, c0, *t).unwrap();
            assert!((p - s).norm() < 1e-8, "{t}: {p} vs {s}");
        }
    }
}
