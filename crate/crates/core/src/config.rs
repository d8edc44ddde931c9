//! Simulation parameters, their validation, and the figure presets.
//!
//! Units: `hbar = k_B = 1`. Frequencies are measured in units of the qubit
//! tunneling frequency, times in its inverse, and temperature in `hbar Delta / k_B`.
//! The absolute scale `delta_ref_hz` only affects reporting.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{FrequencyWindow, SpectralDensity};

pub type Mat2 = [[Complex64; 2]; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("field `{field}` out of range: {bound}")]
    OutOfRange { field: String, bound: String },
    #[error("inconsistent bath: {0}")]
    InconsistentBath(String),
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("unknown preset `{0}` (expected fig1..fig5)")]
    UnknownPreset(String),
}

fn out_of_range(field: &str, bound: impl Into<String>) -> ConfigError {
    ConfigError::OutOfRange {
        field: field.to_string(),
        bound: bound.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub epsilon: f64,
    pub delta: f64,
    pub delta_ref_hz: f64,
}

impl SystemParams {
    pub const DEFAULT_DELTA_REF_HZ: f64 = 5e9;

    pub fn new(epsilon: f64, delta: f64) -> Self {
        Self {
            epsilon,
            delta,
            delta_ref_hz: Self::DEFAULT_DELTA_REF_HZ,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.epsilon.is_finite() {
            return Err(out_of_range("system.epsilon", "must be finite"));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(out_of_range("system.delta", "delta >= 0"));
        }
        if !(self.delta_ref_hz > 0.0 && self.delta_ref_hz.is_finite()) {
            return Err(out_of_range("system.delta_ref_hz", "delta_ref_hz > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BathModel {
    Ohmic,
    Effective {
        lambda_kappa: f64,
        big_omega0: f64,
        gamma_damp: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    #[serde(flatten)]
    pub model: BathModel,
    pub xi: f64,
    pub omega_c: f64,
    pub omega_0: f64,
    pub temperature: f64,
}

impl BathSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(out_of_range("bath.xi", "xi >= 0"));
        }
        if !(self.omega_c > 0.0 && self.omega_c.is_finite()) {
            return Err(out_of_range("bath.omega_c", "omega_c > 0"));
        }
        if !(self.omega_0 >= 0.0 && self.omega_0 < self.omega_c) {
            return Err(out_of_range("bath.omega_0", "0 <= omega_0 < omega_c"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(out_of_range("bath.temperature", "temperature > 0"));
        }
        if let BathModel::Effective {
            lambda_kappa,
            big_omega0,
            gamma_damp,
        } = self.model
        {
            if !(lambda_kappa >= 0.0 && lambda_kappa.is_finite()) {
                return Err(out_of_range("bath.lambda_kappa", "lambda_kappa >= 0"));
            }
            if !(big_omega0 > 0.0 && big_omega0.is_finite()) {
                return Err(out_of_range("bath.big_omega0", "big_omega0 > 0"));
            }
            if !(gamma_damp > 0.0 && gamma_damp.is_finite()) {
                return Err(out_of_range("bath.gamma_damp", "gamma_damp > 0"));
            }
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        1.0 / self.temperature
    }

    pub fn window(&self) -> FrequencyWindow {
        FrequencyWindow::new(self.omega_0, self.omega_c)
    }

    /// Windowed spectral density of this bath.
    pub fn spectral_density(&self) -> SpectralDensity {
        match self.model {
            BathModel::Ohmic => SpectralDensity::ohmic(self.xi, self.omega_c, self.window()),
            BathModel::Effective {
                lambda_kappa,
                big_omega0,
                gamma_damp,
            } => SpectralDensity::effective(self.xi, lambda_kappa, big_omega0, gamma_damp, self.window()),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.model {
            BathModel::Ohmic => "ohmic",
            BathModel::Effective { .. } => "effective",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
    pub k_max: usize,
}

impl TimeGrid {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(out_of_range("grid.dt", "dt > 0"));
        }
        if self.n_steps < 1 {
            return Err(out_of_range("grid.n_steps", "n_steps >= 1"));
        }
        if self.k_max < 1 || self.k_max > self.n_steps {
            return Err(out_of_range("grid.k_max", "1 <= k_max <= n_steps"));
        }
        Ok(())
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.n_steps)
    }

    /// Step count covering `horizon` (the default horizon is 10 time units).
    pub fn steps_for(horizon: f64, dt: f64) -> usize {
        // guard against 10/0.006 landing a hair above an integer
        let n = horizon / dt;
        let rounded = n.round();
        if (n - rounded).abs() < 1e-9 * rounded.max(1.0) {
            rounded as usize
        } else {
            n.ceil() as usize
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    Amplitudes([Complex64; 2]),
    Matrix(Mat2),
}

impl InitialState {
    /// Real amplitudes `(sqrt(a), sqrt(1-a))`.
    pub fn from_population(upper: f64) -> Self {
        InitialState::Amplitudes([
            Complex64::new(upper.sqrt(), 0.0),
            Complex64::new((1.0 - upper).sqrt(), 0.0),
        ])
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            InitialState::Amplitudes(c) => {
                let norm = c[0].norm_sqr() + c[1].norm_sqr();
                if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
                    return Err(out_of_range("initial.amplitudes", "|c0|^2 + |c1|^2 = 1 within 1e-12"));
                }
            }
            InitialState::Matrix(m) => {
                let herm = (m[0][1] - m[1][0].conj()).norm()
                    + m[0][0].im.abs()
                    + m[1][1].im.abs();
                if !herm.is_finite() || herm > 1e-12 {
                    return Err(out_of_range("initial.matrix", "hermitian within 1e-12"));
                }
                let tr = m[0][0].re + m[1][1].re;
                if (tr - 1.0).abs() > 1e-12 {
                    return Err(out_of_range("initial.matrix", "trace 1 within 1e-12"));
                }
                let (lo, hi) = hermitian_eigenvalues(m);
                if lo < -1e-12 || hi > 1.0 + 1e-12 {
                    return Err(out_of_range("initial.matrix", "eigenvalues in [0, 1]"));
                }
            }
        }
        Ok(())
    }

    pub fn density_matrix(&self) -> Mat2 {
        match self {
            InitialState::Amplitudes(c) => [
                [c[0] * c[0].conj(), c[0] * c[1].conj()],
                [c[1] * c[0].conj(), c[1] * c[1].conj()],
            ],
            InitialState::Matrix(m) => *m,
        }
    }
}

/// Eigenvalues of the hermitian part of a 2x2 matrix, ascending.
pub fn hermitian_eigenvalues(m: &Mat2) -> (f64, f64) {
    let a = m[0][0].re;
    let d = m[1][1].re;
    let b = 0.5 * (m[0][1] + m[1][0].conj());
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    (mean - radius, mean + radius)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub system: SystemParams,
    pub bath: BathSpec,
    pub grid: TimeGrid,
    pub initial: InitialState,
    pub normalize_trace: bool,
    pub label: String,
}

/// Largest admissible `dt * omega_c`; above [`DT_OMEGA_C_WARN`] a warning is logged.
pub const DT_OMEGA_C_MAX: f64 = 1.0;
pub const DT_OMEGA_C_WARN: f64 = 0.6;
/// Default `dt * omega_c`.
pub const DEFAULT_DT_OMEGA_C: f64 = 0.6;
pub const DEFAULT_HORIZON: f64 = 10.0;

impl Scenario {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.system.validate()?;
        self.bath.validate()?;
        self.grid.validate()?;
        self.initial.validate()?;
        let product = self.grid.dt * self.bath.omega_c;
        if product > DT_OMEGA_C_MAX * (1.0 + 1e-12) {
            return Err(out_of_range("grid.dt", "dt * omega_c <= 1"));
        }
        if product > DT_OMEGA_C_WARN * (1.0 + 1e-12) {
            log::warn!(
                "scenario `{}`: dt * omega_c = {product:.3} exceeds {DT_OMEGA_C_WARN}",
                self.label
            );
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        self.bath.beta()
    }

    pub fn spectral_density(&self) -> SpectralDensity {
        self.bath.spectral_density()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.grid.n_steps).map(|k| self.grid.time(k)).collect()
    }
}

// ---------------------------------------------------------------------------
// external config document

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    epsilon: Option<f64>,
    delta: Option<f64>,
    delta_ref_hz: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBath {
    kind: Option<String>,
    xi: Option<f64>,
    omega_c: Option<f64>,
    omega_0: Option<f64>,
    temperature: Option<f64>,
    lambda_kappa: Option<f64>,
    big_omega0: Option<f64>,
    gamma_damp: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    dt: Option<f64>,
    n_steps: Option<usize>,
    k_max: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    amplitudes: Option<[[f64; 2]; 2]>,
    matrix: Option<[[[f64; 2]; 2]; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: Option<RawSystem>,
    bath: Option<RawBath>,
    grid: Option<RawGrid>,
    initial: Option<RawInitial>,
    normalize_trace: Option<bool>,
    label: Option<String>,
}

fn required<T>(value: Option<T>, field: &str) -> Result<T, ConfigError> {
    value.ok_or_else(|| ConfigError::MissingField(field.to_string()))
}

/// Parses and validates a JSON config document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    validate_scenario(&value)
}

/// Validates a parsed config document and fills defaults.
pub fn validate_scenario(raw: &serde_json::Value) -> Result<Scenario, ConfigError> {
    let raw: RawConfig =
        serde_json::from_value(raw.clone()).map_err(|e| ConfigError::Parse(e.to_string()))?;

    let rs = required(raw.system, "system")?;
    let system = SystemParams {
        epsilon: required(rs.epsilon, "system.epsilon")?,
        delta: rs.delta.unwrap_or(1.0),
        delta_ref_hz: rs.delta_ref_hz.unwrap_or(SystemParams::DEFAULT_DELTA_REF_HZ),
    };

    let rb = required(raw.bath, "bath")?;
    let kind = required(rb.kind, "bath.kind")?;
    let effective_fields = [
        ("bath.lambda_kappa", rb.lambda_kappa),
        ("bath.big_omega0", rb.big_omega0),
        ("bath.gamma_damp", rb.gamma_damp),
    ];
    let model = match kind.as_str() {
        "ohmic" => {
            if let Some((name, _)) = effective_fields.iter().find(|(_, v)| v.is_some()) {
                return Err(ConfigError::InconsistentBath(format!(
                    "`{name}` only applies to kind = effective"
                )));
            }
            BathModel::Ohmic
        }
        "effective" => BathModel::Effective {
            lambda_kappa: required(rb.lambda_kappa, "bath.lambda_kappa")?,
            big_omega0: required(rb.big_omega0, "bath.big_omega0")?,
            gamma_damp: required(rb.gamma_damp, "bath.gamma_damp")?,
        },
        other => {
            return Err(out_of_range(
                "bath.kind",
                format!("one of ohmic, effective (got `{other}`)"),
            ))
        }
    };
    let bath = BathSpec {
        model,
        xi: required(rb.xi, "bath.xi")?,
        omega_c: required(rb.omega_c, "bath.omega_c")?,
        omega_0: rb.omega_0.unwrap_or(0.0),
        temperature: required(rb.temperature, "bath.temperature")?,
    };
    // range-check the bath before its omega_c feeds the dt default
    bath.validate()?;

    let rg = required(raw.grid, "grid")?;
    let dt = rg.dt.unwrap_or(DEFAULT_DT_OMEGA_C / bath.omega_c);
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(out_of_range("grid.dt", "dt > 0"));
    }
    let grid = TimeGrid {
        dt,
        n_steps: rg.n_steps.unwrap_or_else(|| TimeGrid::steps_for(DEFAULT_HORIZON, dt)),
        k_max: required(rg.k_max, "grid.k_max")?,
    };

    let ri = required(raw.initial, "initial")?;
    let initial = match (ri.amplitudes, ri.matrix) {
        (Some(a), None) => InitialState::Amplitudes([
            Complex64::new(a[0][0], a[0][1]),
            Complex64::new(a[1][0], a[1][1]),
        ]),
        (None, Some(m)) => InitialState::Matrix([
            [Complex64::new(m[0][0][0], m[0][0][1]), Complex64::new(m[0][1][0], m[0][1][1])],
            [Complex64::new(m[1][0][0], m[1][0][1]), Complex64::new(m[1][1][0], m[1][1][1])],
        ]),
        (None, None) => return Err(ConfigError::MissingField("initial.amplitudes".into())),
        (Some(_), Some(_)) => {
            return Err(ConfigError::Parse(
                "initial: give either `amplitudes` or `matrix`, not both".into(),
            ))
        }
    };

    let scenario = Scenario {
        system,
        bath,
        grid,
        initial,
        normalize_trace: raw.normalize_trace.unwrap_or(true),
        label: raw.label.unwrap_or_else(|| "run".to_string()),
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Serializes a scenario back into the external document format.
pub fn scenario_to_document(s: &Scenario) -> serde_json::Value {
    let mut bath = serde_json::json!({
        "kind": s.bath.kind_name(),
        "xi": s.bath.xi,
        "omega_c": s.bath.omega_c,
        "omega_0": s.bath.omega_0,
        "temperature": s.bath.temperature,
    });
    if let BathModel::Effective {
        lambda_kappa,
        big_omega0,
        gamma_damp,
    } = s.bath.model
    {
        bath["lambda_kappa"] = lambda_kappa.into();
        bath["big_omega0"] = big_omega0.into();
        bath["gamma_damp"] = gamma_damp.into();
    }
    let initial = match s.initial {
        InitialState::Amplitudes(c) => serde_json::json!({
            "amplitudes": [[c[0].re, c[0].im], [c[1].re, c[1].im]],
        }),
        InitialState::Matrix(m) => serde_json::json!({
            "matrix": [
                [[m[0][0].re, m[0][0].im], [m[0][1].re, m[0][1].im]],
                [[m[1][0].re, m[1][0].im], [m[1][1].re, m[1][1].im]],
            ],
        }),
    };
    serde_json::json!({
        "system": {
            "epsilon": s.system.epsilon,
            "delta": s.system.delta,
            "delta_ref_hz": s.system.delta_ref_hz,
        },
        "bath": bath,
        "grid": { "dt": s.grid.dt, "n_steps": s.grid.n_steps, "k_max": s.grid.k_max },
        "initial": initial,
        "normalize_trace": s.normalize_trace,
        "label": s.label,
    })
}

// ---------------------------------------------------------------------------
// figure presets

/// Bath parameters shared by all figures.
pub mod fig {
    pub const XI: f64 = 0.01;
    pub const OMEGA_C: f64 = 100.0;
    pub const OMEGA_0: f64 = 11.0;
    pub const TEMPERATURE: f64 = 0.01;
    pub const LAMBDA_KAPPA: f64 = 1050.0;
    pub const BIG_OMEGA0: f64 = 10.0;
    /// 2.6e11 rad/s over the 5e9 rad/s tunneling scale.
    pub const GAMMA_DAMP: f64 = 52.0;
    /// Bias for coherence runs.
    pub const EPSILON_COHERENCE: f64 = 10.0;
    /// Bias for population runs.
    pub const EPSILON_POPULATION: f64 = 1.0;
    pub const K_MAX: usize = 3;
    pub const K_MAX_SWEEP: [usize; 3] = [2, 3, 4];
    pub const LAMBDA_KAPPA_SWEEP: [f64; 3] = [700.0, 1050.0, 1500.0];
    pub const BIG_OMEGA0_SWEEP: [f64; 3] = [8.0, 9.0, 10.0];
    /// Upper-level populations of the seven initial states.
    pub const INITIAL_POPULATIONS: [(f64, f64); 7] = [
        (1.0, 2.0),
        (3.0, 4.0),
        (6.0, 7.0),
        (12.0, 13.0),
        (29.0, 30.0),
        (59.0, 60.0),
        (1.0, 1.0),
    ];
}

/// Which reduced-density element a preset run is meant to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    /// Off-diagonal element, biased far from resonance.
    Coherence,
    /// Upper population, unbiased-ish (`epsilon = Delta`).
    Population,
}

impl Observable {
    pub const BOTH: [Observable; 2] = [Observable::Coherence, Observable::Population];

    pub fn epsilon(self) -> f64 {
        match self {
            Observable::Coherence => fig::EPSILON_COHERENCE,
            Observable::Population => fig::EPSILON_POPULATION,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Observable::Coherence => "rho12",
            Observable::Population => "rho11",
        }
    }
}

/// Ohmic bath of the figures.
pub fn fig_ohmic_bath() -> BathSpec {
    BathSpec {
        model: BathModel::Ohmic,
        xi: fig::XI,
        omega_c: fig::OMEGA_C,
        omega_0: fig::OMEGA_0,
        temperature: fig::TEMPERATURE,
    }
}

/// Effective (mapped oscillator) bath of the figures.
pub fn fig_effective_bath(lambda_kappa: f64, big_omega0: f64) -> BathSpec {
    BathSpec {
        model: BathModel::Effective {
            lambda_kappa,
            big_omega0,
            gamma_damp: fig::GAMMA_DAMP,
        },
        ..fig_ohmic_bath()
    }
}

/// The seven initial states, `|xi_1>` .. `|xi_7>`.
pub fn fig_initial_states() -> Vec<InitialState> {
    fig::INITIAL_POPULATIONS
        .iter()
        .map(|&(num, den)| {
            let upper = num / den;
            let lower = 1.0 - upper;
            // keep exact zeros for |xi_7>
            InitialState::Amplitudes([
                Complex64::new(upper.sqrt(), 0.0),
                Complex64::new(if lower > 0.0 { (1.0 / den).sqrt() } else { 0.0 }, 0.0),
            ])
        })
        .collect()
}

/// A figure scenario on the default grid.
pub fn fig_scenario(
    label: String,
    bath: BathSpec,
    observable: Observable,
    k_max: usize,
    initial: InitialState,
) -> Scenario {
    let dt = DEFAULT_DT_OMEGA_C / bath.omega_c;
    Scenario {
        system: SystemParams::new(observable.epsilon(), 1.0),
        bath,
        grid: TimeGrid {
            dt,
            n_steps: TimeGrid::steps_for(DEFAULT_HORIZON, dt),
            k_max,
        },
        initial,
        normalize_trace: true,
        label,
    }
}

pub const PRESET_NAMES: [&str; 5] = ["fig1", "fig2", "fig3", "fig4", "fig5"];

/// Scenario list for a figure preset with its default sweep.
pub fn figure_preset(name: &str) -> Result<Vec<Scenario>, ConfigError> {
    figure_preset_with_sweep(name, None)
}

/// Scenario list for a figure preset; `sweep` overrides the lambda-kappa
/// values of fig4 or the oscillator frequencies of fig5.
pub fn figure_preset_with_sweep(name: &str, sweep: Option<&[f64]>) -> Result<Vec<Scenario>, ConfigError> {
    let xi1 = fig_initial_states()[0];
    let mut out = Vec::new();
    match name {
        "fig1" => {
            out.push(fig_scenario(
                "fig1_sb".into(),
                fig_ohmic_bath(),
                Observable::Coherence,
                fig::K_MAX,
                xi1,
            ));
            out.push(fig_scenario(
                "fig1_sib".into(),
                fig_effective_bath(fig::LAMBDA_KAPPA, fig::BIG_OMEGA0),
                Observable::Coherence,
                fig::K_MAX,
                xi1,
            ));
        }
        "fig2" => {
            for (model, bath) in [
                ("sb", fig_ohmic_bath()),
                ("sib", fig_effective_bath(fig::LAMBDA_KAPPA, fig::BIG_OMEGA0)),
            ] {
                for k_max in fig::K_MAX_SWEEP {
                    for obs in Observable::BOTH {
                        out.push(fig_scenario(
                            format!("fig2_{model}_k{k_max}_{}", obs.tag()),
                            bath,
                            obs,
                            k_max,
                            xi1,
                        ));
                    }
                }
            }
        }
        "fig3" => {
            for (model, bath) in [
                ("sb", fig_ohmic_bath()),
                ("sib", fig_effective_bath(fig::LAMBDA_KAPPA, fig::BIG_OMEGA0)),
            ] {
                for (i, state) in fig_initial_states().into_iter().enumerate() {
                    for obs in Observable::BOTH {
                        out.push(fig_scenario(
                            format!("fig3_{model}_xi{}_{}", i + 1, obs.tag()),
                            bath,
                            obs,
                            fig::K_MAX,
                            state,
                        ));
                    }
                }
            }
        }
        "fig4" => {
            let values = sweep.unwrap_or(&fig::LAMBDA_KAPPA_SWEEP);
            for &lk in values {
                for obs in Observable::BOTH {
                    out.push(fig_scenario(
                        format!("fig4_sib_lk{}_{}", format_sweep_value(lk), obs.tag()),
                        fig_effective_bath(lk, fig::BIG_OMEGA0),
                        obs,
                        fig::K_MAX,
                        xi1,
                    ));
                }
            }
        }
        "fig5" => {
            let values = sweep.unwrap_or(&fig::BIG_OMEGA0_SWEEP);
            for &w in values {
                for obs in Observable::BOTH {
                    out.push(fig_scenario(
                        format!("fig5_sib_w{}_{}", format_sweep_value(w), obs.tag()),
                        fig_effective_bath(fig::LAMBDA_KAPPA, w),
                        obs,
                        fig::K_MAX,
                        xi1,
                    ));
                }
            }
        }
        other => return Err(ConfigError::UnknownPreset(other.to_string())),
    }
    for s in &out {
        s.validate()?;
    }
    Ok(out)
}

fn format_sweep_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}").replace('.', "p")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn fig1_doc() -> serde_json::Value {
        json!({
            "system": {"epsilon": 10.0},
            "bath": {
                "kind": "effective", "xi": 0.01, "omega_c": 100.0, "omega_0": 11.0,
                "temperature": 0.01, "lambda_kappa": 1050.0, "big_omega0": 10.0, "gamma_damp": 52.0
            },
            "grid": {"k_max": 3},
            "initial": {"amplitudes": [[std::f64::consts::FRAC_1_SQRT_2, 0.0], [std::f64::consts::FRAC_1_SQRT_2, 0.0]]}
        })
    }

    #[test]
    fn fig1_parameters_validate() {
        let s = validate_scenario(&fig1_doc()).unwrap();
        assert!(matches!(s.bath.model, BathModel::Effective { gamma_damp, .. } if gamma_damp == 52.0));
        assert_eq!(s.beta(), 100.0);
        assert!(s.normalize_trace);
    }

    #[test]
    fn dt_defaults_from_cutoff() {
        let mut doc = fig1_doc();
        doc["bath"] = json!({"kind": "ohmic", "xi": 0.01, "omega_c": 100.0, "omega_0": 11.0, "temperature": 0.01});
        let s = validate_scenario(&doc).unwrap();
        assert_eq!(s.grid.dt, 0.006);
        assert_eq!(s.grid.n_steps, 1667);
    }

    #[test]
    fn lower_cutoff_above_upper_is_rejected() {
        let mut doc = fig1_doc();
        doc["bath"]["omega_0"] = json!(200.0);
        match validate_scenario(&doc) {
            Err(ConfigError::OutOfRange { field, .. }) => assert_eq!(field, "bath.omega_0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn effective_fields_on_ohmic_bath() {
        let mut doc = fig1_doc();
        doc["bath"]["kind"] = json!("ohmic");
        assert!(matches!(validate_scenario(&doc), Err(ConfigError::InconsistentBath(_))));
    }

    #[test]
    fn missing_and_unknown_fields() {
        let mut doc = fig1_doc();
        doc["bath"].as_object_mut().unwrap().remove("xi");
        assert_eq!(
            validate_scenario(&doc),
            Err(ConfigError::MissingField("bath.xi".into()))
        );
        let mut doc = fig1_doc();
        doc["bath"].as_object_mut().unwrap().remove("gamma_damp");
        assert_eq!(
            validate_scenario(&doc),
            Err(ConfigError::MissingField("bath.gamma_damp".into()))
        );
        let mut doc = fig1_doc();
        doc["grid"]["stride"] = json!(2);
        assert!(matches!(validate_scenario(&doc), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn time_step_limits() {
        let mut doc = fig1_doc();
        doc["grid"]["dt"] = json!(0.02);
        assert!(matches!(validate_scenario(&doc), Err(ConfigError::OutOfRange { .. })));
        doc["grid"]["dt"] = json!(0.008);
        assert!(validate_scenario(&doc).is_ok());
        doc["grid"]["k_max"] = json!(0);
        assert!(matches!(validate_scenario(&doc), Err(ConfigError::OutOfRange { .. })));
    }

    #[test]
    fn non_normalized_amplitudes() {
        let mut doc = fig1_doc();
        doc["initial"]["amplitudes"] = json!([[0.8, 0.0], [0.8, 0.0]]);
        assert!(matches!(validate_scenario(&doc), Err(ConfigError::OutOfRange { .. })));
    }

    #[test]
    fn matrix_initial_state() {
        let mut doc = fig1_doc();
        doc["initial"] = json!({"matrix": [[[0.5, 0.0], [0.0, 0.25]], [[0.0, -0.25], [0.5, 0.0]]]});
        assert!(validate_scenario(&doc).is_ok());
        doc["initial"] = json!({"matrix": [[[1.5, 0.0], [0.0, 0.0]], [[0.0, 0.0], [-0.5, 0.0]]]});
        assert!(validate_scenario(&doc).is_err());
    }

    #[test]
    fn fig2_preset_shape() {
        let list = figure_preset("fig2").unwrap();
        assert_eq!(list.len(), 12);
        let coherence = list.iter().filter(|s| s.system.epsilon == 10.0).count();
        let population = list.iter().filter(|s| s.system.epsilon == 1.0).count();
        assert_eq!((coherence, population), (6, 6));
        let mut kmax: Vec<_> = list.iter().map(|s| s.grid.k_max).collect();
        kmax.sort();
        kmax.dedup();
        assert_eq!(kmax, vec![2, 3, 4]);
    }

    #[test]
    fn fig3_contains_all_initial_states() {
        let list = figure_preset("fig3").unwrap();
        let target = (6.0f64 / 7.0).sqrt();
        assert!(list.iter().any(|s| matches!(s.initial,
            InitialState::Amplitudes(c) if (c[0].re - target).abs() < 1e-15
                && (c[1].re - (1.0f64 / 7.0).sqrt()).abs() < 1e-15)));
        assert!(list.iter().all(|s| s.grid.k_max == 3));
        assert_eq!(list.len(), 28);
    }

    #[test]
    fn unknown_preset() {
        assert_eq!(figure_preset("fig0"), Err(ConfigError::UnknownPreset("fig0".into())));
    }

    #[test]
    fn presets_are_deterministic() {
        for name in PRESET_NAMES {
            assert_eq!(figure_preset(name).unwrap(), figure_preset(name).unwrap());
        }
    }

    #[test]
    fn document_round_trip() {
        for name in PRESET_NAMES {
            for s in figure_preset(name).unwrap() {
                let back = validate_scenario(&scenario_to_document(&s)).unwrap();
                assert_eq!(back, s);
            }
        }
    }
}
