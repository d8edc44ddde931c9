//! Bath spectral densities: the Ohmic bath and the effective bath seen by a
//! qubit that couples through an intermediate harmonic oscillator.
//!
//! All frequencies are in units of the qubit tunneling frequency with
//! `hbar = 1`. Both densities are multiplied by a hard frequency window
//! `[lower, upper]`; outside it they vanish identically.
//!
//! The [`MappingParams`] half of this module rebuilds the effective density
//! from the oscillator equations of motion (the response kernel `K(omega)`),
//! which is how the closed form of [`EffectiveShape`] is cross-checked.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("singular mapping denominator |M Omega0^2 + L| = {0:e} at the requested frequency")]
    SingularDenominator(f64),
    #[error("invalid spectral argument: {0}")]
    InvalidArgument(String),
}

/// `J(omega) = (pi/2) xi omega exp(-omega/omega_c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhmicShape {
    pub xi: f64,
    pub omega_c: f64,
}

impl OhmicShape {
    pub fn density(&self, omega: f64) -> f64 {
        0.5 * PI * self.xi * omega * (-omega / self.omega_c).exp()
    }
}

/// `J(omega) = (pi/2) (lambda kappa)^2 xi omega Omega0^4 / ((omega^2 - Omega0^2)^2 + 4 Gamma^2 omega^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveShape {
    pub xi: f64,
    pub lambda_kappa: f64,
    pub big_omega0: f64,
    pub gamma_damp: f64,
}

impl EffectiveShape {
    pub fn density(&self, omega: f64) -> f64 {
        let w2 = omega * omega;
        let o2 = self.big_omega0 * self.big_omega0;
        let detune = w2 - o2;
        let denom = detune * detune + 4.0 * self.gamma_damp * self.gamma_damp * w2;
        0.5 * PI * self.lambda_kappa * self.lambda_kappa * self.xi * omega * o2 * o2 / denom
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Ohmic(OhmicShape),
    Effective(EffectiveShape),
}

/// Hard frequency window. `upper = None` leaves the density untruncated above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyWindow {
    pub lower: f64,
    pub upper: Option<f64>,
}

impl FrequencyWindow {
    pub const OFF: FrequencyWindow = FrequencyWindow {
        lower: 0.0,
        upper: None,
    };

    pub fn new(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper: Some(upper),
        }
    }

    pub fn contains(&self, omega: f64) -> bool {
        omega >= self.lower && self.upper.is_none_or(|u| omega <= u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub shape: Shape,
    pub window: FrequencyWindow,
}

impl SpectralDensity {
    pub fn ohmic(xi: f64, omega_c: f64, window: FrequencyWindow) -> Self {
        Self {
            shape: Shape::Ohmic(OhmicShape { xi, omega_c }),
            window,
        }
    }

    pub fn effective(
        xi: f64,
        lambda_kappa: f64,
        big_omega0: f64,
        gamma_damp: f64,
        window: FrequencyWindow,
    ) -> Self {
        Self {
            shape: Shape::Effective(EffectiveShape {
                xi,
                lambda_kappa,
                big_omega0,
                gamma_damp,
            }),
            window,
        }
    }

    /// Windowed density; zero outside the window and for `omega < 0`.
    pub fn eval(&self, omega: f64) -> f64 {
        if omega < 0.0 || !self.window.contains(omega) {
            return 0.0;
        }
        match &self.shape {
            Shape::Ohmic(s) => s.density(omega),
            Shape::Effective(s) => s.density(omega),
        }
    }

    pub fn with_window(mut self, window: FrequencyWindow) -> Self {
        self.window = window;
        self
    }

    /// True when the density vanishes for every frequency.
    pub fn is_zero(&self) -> bool {
        let xi = match &self.shape {
            Shape::Ohmic(s) => s.xi,
            Shape::Effective(s) => s.xi * s.lambda_kappa * s.lambda_kappa,
        };
        xi == 0.0 || self.window.upper.is_some_and(|u| u <= self.window.lower)
    }

    /// Finite frequency interval carrying the density for integration.
    ///
    /// Without a hard upper edge the Ohmic density is cut where
    /// `exp(-omega/omega_c)` falls below `1e-26`; the effective density decays
    /// only as `omega^-2` and is cut at `1e3` times its largest scale.
    pub fn integration_range(&self) -> (f64, f64) {
        let lower = self.window.lower.max(0.0);
        let upper = match (self.window.upper, &self.shape) {
            (Some(u), _) => u,
            (None, Shape::Ohmic(s)) => 60.0 * s.omega_c,
            (None, Shape::Effective(s)) => 1e3 * s.big_omega0.max(s.gamma_damp).max(lower),
        };
        (lower, upper.max(lower))
    }
}

/// Ohmic density of `spec` at `omega`, honouring its window.
pub fn j_ohmic(omega: f64, shape: &OhmicShape, window: &FrequencyWindow) -> f64 {
    SpectralDensity {
        shape: Shape::Ohmic(*shape),
        window: *window,
    }
    .eval(omega)
}

/// Effective density of the mapped oscillator model at `omega`, honouring its window.
pub fn j_effective(omega: f64, shape: &EffectiveShape, window: &FrequencyWindow) -> f64 {
    SpectralDensity {
        shape: Shape::Effective(*shape),
        window: *window,
    }
    .eval(omega)
}

/// Microscopic parameters of the qubit–oscillator–bath chain used to derive
/// the effective density from the equations of motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappingParams {
    pub mass_m: f64,
    pub mu: f64,
    pub eta_fric: f64,
    pub kappa: f64,
    pub lambda_disp: f64,
    pub big_omega0: f64,
}

impl MappingParams {
    /// Gauge with `M = mu = kappa = 1` reproducing `shape`.
    ///
    /// `Gamma = kappa^2 eta / 2M` fixes `eta = 2 Gamma`, which in turn fixes
    /// the mapping's own `xi = 2 eta / pi`; `lambda` absorbs the ratio to the
    /// requested `xi` so that the products entering the density agree.
    pub fn gauge_from(shape: &EffectiveShape) -> Self {
        let eta = 2.0 * shape.gamma_damp;
        let xi_map = 2.0 * eta / PI;
        Self {
            mass_m: 1.0,
            mu: 1.0,
            eta_fric: eta,
            kappa: 1.0,
            lambda_disp: shape.lambda_kappa * (shape.xi / xi_map).sqrt(),
            big_omega0: shape.big_omega0,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.kappa * self.kappa * self.eta_fric / (2.0 * self.mass_m)
    }

    pub fn xi(&self) -> f64 {
        2.0 * self.eta_fric / PI
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }
}

/// Optional finite bath cutoff in `L(omega)`; `None` is the infinite-cutoff form.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LOptions {
    pub cutoff: Option<f64>,
}

/// `L(z) = -M z^2 + i eta kappa^2 z [exp(-z/omega_c)]`, analytic in complex `z`.
pub fn l_of_omega_complex(z: Complex64, mp: &MappingParams, opts: LOptions) -> Complex64 {
    let damping = Complex64::new(0.0, mp.eta_fric * mp.kappa * mp.kappa) * z;
    let damping = match opts.cutoff {
        Some(wc) => damping * (-z / wc).exp(),
        None => damping,
    };
    -z * z * mp.mass_m + damping
}

pub fn l_of_omega(omega: f64, mp: &MappingParams, opts: LOptions) -> Complex64 {
    l_of_omega_complex(Complex64::new(omega, 0.0), mp, opts)
}

/// Response kernel `K(z) = -mu z^2 + M Omega0^2 lambda^2 L / (M Omega0^2 + L)`.
pub fn k_of_omega(z: Complex64, mp: &MappingParams, opts: LOptions) -> Result<Complex64, SpectralError> {
    let stiffness = mp.mass_m * mp.big_omega0 * mp.big_omega0;
    let l = l_of_omega_complex(z, mp, opts);
    let denom = l + stiffness;
    if denom.norm() < 1e-14 {
        return Err(SpectralError::SingularDenominator(denom.norm()));
    }
    Ok(-z * z * mp.mu + stiffness * mp.lambda_disp * mp.lambda_disp * l / denom)
}

/// Default imaginary offset for [`j_eff_from_mapping`].
pub const DEFAULT_EPSILON_IM: f64 = 1e-8;

/// `Im K(omega - i eps)` extrapolated to `eps -> 0+` with one Richardson
/// step (`2 f(eps/2) - f(eps)`), using the infinite-cutoff `L`.
pub fn j_eff_from_mapping(omega: f64, mp: &MappingParams, epsilon_im: f64) -> Result<f64, SpectralError> {
    if !(omega > 0.0) {
        return Err(SpectralError::InvalidArgument(format!(
            "mapping check needs omega > 0, got {omega}"
        )));
    }
    if !(epsilon_im > 0.0) {
        return Err(SpectralError::InvalidArgument(format!(
            "epsilon_im must be positive, got {epsilon_im}"
        )));
    }
    let im_k = |eps: f64| -> Result<f64, SpectralError> {
        Ok(k_of_omega(Complex64::new(omega, -eps), mp, LOptions::default())?.im)
    };
    let coarse = im_k(epsilon_im)?;
    let fine = im_k(0.5 * epsilon_im)?;
    Ok(2.0 * fine - coarse)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1_effective() -> EffectiveShape {
        EffectiveShape {
            xi: 0.01,
            lambda_kappa: 1050.0,
            big_omega0: 10.0,
            gamma_damp: 52.0,
        }
    }

    #[test]
    fn ohmic_values() {
        let shape = OhmicShape {
            xi: 0.01,
            omega_c: 100.0,
        };
        let w = FrequencyWindow::new(11.0, 100.0);
        assert_eq!(j_ohmic(0.0, &shape, &FrequencyWindow::OFF), 0.0);
        let expected = 0.5 * PI * 0.01 * 100.0 * (-1.0f64).exp();
        assert!((j_ohmic(100.0, &shape, &w) - expected).abs() < 1e-15);
        assert!((expected - 0.5779).abs() < 1e-4);
        assert_eq!(j_ohmic(5.0, &shape, &w), 0.0);
        assert_eq!(j_ohmic(100.5, &shape, &w), 0.0);
    }

    #[test]
    fn effective_value_at_oscillator_frequency() {
        let s = fig1_effective();
        assert_eq!(j_effective(0.0, &s, &FrequencyWindow::OFF), 0.0);
        let v = j_effective(10.0, &s, &FrequencyWindow::OFF);
        let expected = 0.5 * PI * 1050.0f64.powi(2) * 0.01 * 1000.0 / (4.0 * 52.0 * 52.0);
        assert!((v - expected).abs() < 1e-9 * expected);
        assert!((v - 1601.15).abs() < 0.01);
        // outside the default window
        assert_eq!(j_effective(10.0, &s, &FrequencyWindow::new(11.0, 100.0)), 0.0);
    }

    #[test]
    fn effective_tail_goes_as_inverse_cube() {
        let s = fig1_effective();
        let w = 1e4 * s.big_omega0;
        let lhs = j_effective(w, &s, &FrequencyWindow::OFF) * w.powi(3);
        let rhs = 0.5 * PI * s.lambda_kappa.powi(2) * s.xi * s.big_omega0.powi(4);
        assert!((lhs / rhs - 1.0).abs() < 0.01);
    }

    #[test]
    fn l_forms() {
        let mp = MappingParams::gauge_from(&fig1_effective());
        assert_eq!(l_of_omega(0.0, &mp, LOptions::default()), Complex64::new(0.0, 0.0));
        for w in [0.5, 3.0, 42.0] {
            let l = l_of_omega(w, &mp, LOptions::default());
            assert!((l.im - mp.eta_fric * mp.kappa.powi(2) * w).abs() < 1e-12 * l.im);
            assert!((l.re + mp.mass_m * w * w).abs() < 1e-12 * w * w);
        }
        let wc = 100.0;
        let inf = l_of_omega(wc, &mp, LOptions::default());
        let fin = l_of_omega(wc, &mp, LOptions { cutoff: Some(wc) });
        assert!((fin.im / inf.im - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn gauge_identities() {
        let s = fig1_effective();
        let mp = MappingParams::gauge_from(&s);
        assert!((mp.gamma() - 52.0).abs() < 1e-12);
        let product = mp.lambda_disp.powi(2) * mp.kappa.powi(2) * mp.xi();
        assert!((product / (s.lambda_kappa.powi(2) * s.xi) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mapping_vanishes_at_zero_frequency() {
        let mp = MappingParams::gauge_from(&fig1_effective());
        let v = j_eff_from_mapping(1e-9, &mp, DEFAULT_EPSILON_IM).unwrap();
        assert!(v.abs() < 1e-3, "{v}");
        assert!(j_eff_from_mapping(0.0, &mp, 1e-8).is_err());
    }

    #[test]
    fn mapping_does_not_depend_on_probe_mass() {
        let mp = MappingParams::gauge_from(&fig1_effective());
        for w in [12.0, 50.0] {
            let a = j_eff_from_mapping(w, &mp, 1e-6).unwrap();
            let b = j_eff_from_mapping(w, &mp.with_mu(37.0), 1e-6).unwrap();
            assert!((a - b).abs() < 1e-9 * a.abs(), "{a} {b}");
        }
    }

    #[test]
    fn singular_denominator_detected() {
        // zero friction puts the pole of L + M Omega0^2 on the real axis
        let mp = MappingParams {
            mass_m: 1.0,
            mu: 1.0,
            eta_fric: 0.0,
            kappa: 1.0,
            lambda_disp: 1.0,
            big_omega0: 2.0,
        };
        let err = k_of_omega(Complex64::new(2.0, 0.0), &mp, LOptions::default()).unwrap_err();
        assert!(matches!(err, SpectralError::SingularDenominator(_)));
    }

    #[test]
    fn window_edges() {
        let d = SpectralDensity::ohmic(0.01, 100.0, FrequencyWindow::new(11.0, 100.0));
        assert_eq!(d.eval(10.999), 0.0);
        assert!(d.eval(11.0) > 0.0);
        assert!(d.eval(100.0) > 0.0);
        assert_eq!(d.eval(100.0001), 0.0);
        assert_eq!(d.integration_range(), (11.0, 100.0));
    }
}
