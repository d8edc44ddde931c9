//! Discretized influence functional.
//!
//! Each grid point `t_k = k dt` owns a window `W_k = [t_k - dt/2, t_k + dt/2]`,
//! clipped to `[0, dt/2]` at `k = 0`. The coefficient coupling points `k` and
//! `k - m` is the double integral of the bath response over their windows,
//!
//! ```text
//! eta_m = Int_{W_k} dtau Int_{W_{k-m}} dtau' alpha(tau - tau'),   m >= 1
//! eta_0 = Int_{W_k} dtau Int_{W_k, tau' < tau} dtau' alpha(tau - tau')
//! ```
//!
//! and depends only on `m` away from the `t = 0` edge. A path pair
//! `(s+, s-)` picks up the weight [`pair_weight`] for every coupled pair of
//! points.
//!
//! The double time integrals are carried out analytically inside the
//! frequency integral defining `alpha`, leaving one oscillatory quadrature
//! per coefficient.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::TimeGrid;
use crate::quadrature::{integrate, QuadOptions, QuadratureError};
use crate::response::thermal_factor;
use crate::spectral::SpectralDensity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfluenceError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("invalid influence request: {0}")]
    InvalidArgument(String),
    #[error("non-finite influence coefficient for {0}")]
    NonFinite(String),
}

/// Time interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn width(&self) -> f64 {
        self.end - self.start
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.start + self.end)
    }
}

/// Full window around grid point `k`; half window at `k = 0`.
pub fn point_window(k: usize, dt: f64) -> Window {
    if k == 0 {
        Window {
            start: 0.0,
            end: 0.5 * dt,
        }
    } else {
        let t = k as f64 * dt;
        Window {
            start: t - 0.5 * dt,
            end: t + 0.5 * dt,
        }
    }
}

/// Window of point `k` when `k` is the readout time: it ends at `t_k`.
pub fn terminal_window(k: usize, dt: f64) -> Window {
    let t = k as f64 * dt;
    Window {
        start: (t - 0.5 * dt).max(0.0),
        end: t,
    }
}

/// Double integrals of a stationary kernel over window pairs.
pub trait PairIntegrator: Sync {
    /// `Int_late Int_early kernel(tau - tau')` for disjoint windows, `late` after `early`.
    fn rectangle(&self, late: Window, early: Window) -> Result<Complex64, InfluenceError>;
    /// `Int_0^L dtau Int_0^tau dtau' kernel(tau - tau')`.
    fn triangle(&self, width: f64) -> Result<Complex64, InfluenceError>;
}

/// `sin(x)/x` without cancellation near zero.
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// `(x - sin x) / x^2` without cancellation near zero.
fn sine_defect(x: f64) -> f64 {
    if x.abs() < 0.1 {
        let x2 = x * x;
        x / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0 * (1.0 - x2 / 110.0))))
    } else {
        (x - x.sin()) / (x * x)
    }
}

/// Frequency-domain integrator for the bath response of a spectral density.
#[derive(Debug, Clone, Copy)]
pub struct SpectralPairIntegrator<'a> {
    pub spec: &'a SpectralDensity,
    pub beta: f64,
    pub tol: f64,
}

impl SpectralPairIntegrator<'_> {
    fn integrate_kernel<F>(&self, kernel: F, reach: f64) -> Result<Complex64, InfluenceError>
    where
        F: Fn(f64) -> (f64, f64),
    {
        if self.spec.is_zero() {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let (lo, hi) = self.spec.integration_range();
        let opts = QuadOptions::new(self.tol)
            .max_panel_width((hi - lo) / 8.0)
            .oscillation_rate(reach);
        let r = integrate(
            |w| {
                let j = self.spec.eval(w);
                if j == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let (c, s) = kernel(w);
                Complex64::new(j * thermal_factor(self.beta, w) * c, -j * s) / PI
            },
            lo,
            hi,
            opts,
        )?;
        Ok(r.value)
    }
}

impl PairIntegrator for SpectralPairIntegrator<'_> {
    fn rectangle(&self, late: Window, early: Window) -> Result<Complex64, InfluenceError> {
        // Int Int exp(i w (tau - tau')) = |A||B| sinc(w|A|/2) sinc(w|B|/2) exp(i w (mid_A - mid_B))
        let (wa, wb) = (late.width(), early.width());
        let sep = late.mid() - early.mid();
        let area = wa * wb;
        if area == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        self.integrate_kernel(
            |w| {
                let amp = area * sinc(0.5 * w * wa) * sinc(0.5 * w * wb);
                let (s, c) = (w * sep).sin_cos();
                (amp * c, amp * s)
            },
            late.end - early.start,
        )
    }

    fn triangle(&self, width: f64) -> Result<Complex64, InfluenceError> {
        // Int_0^L (L - u) exp(i w u) du
        if width == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let l2 = width * width;
        self.integrate_kernel(
            |w| {
                let x = w * width;
                let sh = sinc(0.5 * x);
                (0.5 * l2 * sh * sh, l2 * sine_defect(x))
            },
            width,
        )
    }
}

/// Influence coefficients for one time grid and bath.
///
/// Index `m` of every vector is the step separation; entry 0 of the
/// separation-indexed edge vectors is unused and kept at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaTable {
    pub k_max: usize,
    pub dt: f64,
    /// `interior[m]`: full windows `m` steps apart; `interior[0]` is the self term.
    pub interior: Vec<Complex64>,
    /// `left_edge[m]`: full window at step `m` against the half window at `t = 0`.
    pub left_edge: Vec<Complex64>,
    /// Self term of the half window at `t = 0` (also the self term of a
    /// readout point's clipped window).
    pub self_edge: Complex64,
    /// `terminal[m]`: clipped readout window against the full window `m` steps earlier.
    pub terminal: Vec<Complex64>,
    /// `terminal_left[m]`: clipped readout window at step `m` against the `t = 0` half window.
    pub terminal_left: Vec<Complex64>,
}

impl EtaTable {
    /// Coefficient between a late point and the point `m` steps earlier,
    /// which is the initial point when `early_is_origin`.
    pub fn coupling(&self, m: usize, early_is_origin: bool) -> Complex64 {
        if early_is_origin {
            self.left_edge[m]
        } else {
            self.interior[m]
        }
    }

    /// Same as [`EtaTable::coupling`] with the late point's window clipped at readout.
    pub fn terminal_coupling(&self, m: usize, early_is_origin: bool) -> Complex64 {
        if early_is_origin {
            self.terminal_left[m]
        } else {
            self.terminal[m]
        }
    }

    pub fn all_finite(&self) -> bool {
        self.interior
            .iter()
            .chain(&self.left_edge)
            .chain(&self.terminal)
            .chain(&self.terminal_left)
            .chain(std::iter::once(&self.self_edge))
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

#[derive(Debug, Clone, Copy)]
enum Entry {
    Interior(usize),
    LeftEdge(usize),
    Terminal(usize),
    TerminalLeft(usize),
    SelfInterior,
    SelfEdge,
}

/// Assembles an [`EtaTable`] from any pair integrator.
pub fn build_eta_with<I: PairIntegrator>(integrator: &I, dt: f64, k_max: usize) -> Result<EtaTable, InfluenceError> {
    if !(dt > 0.0) || k_max == 0 {
        return Err(InfluenceError::InvalidArgument(format!(
            "need dt > 0 and k_max >= 1 (dt = {dt}, k_max = {k_max})"
        )));
    }
    let mut entries = vec![Entry::SelfInterior, Entry::SelfEdge];
    for m in 1..=k_max {
        entries.extend([
            Entry::Interior(m),
            Entry::LeftEdge(m),
            Entry::Terminal(m),
            Entry::TerminalLeft(m),
        ]);
    }
    let values: Vec<Complex64> = entries
        .par_iter()
        .map(|e| match *e {
            Entry::SelfInterior => integrator.triangle(dt),
            Entry::SelfEdge => integrator.triangle(0.5 * dt),
            // the grid is stationary, so anchor interior pairs away from t = 0
            Entry::Interior(m) => integrator.rectangle(point_window(m + 1, dt), point_window(1, dt)),
            Entry::LeftEdge(m) => integrator.rectangle(point_window(m, dt), point_window(0, dt)),
            Entry::Terminal(m) => integrator.rectangle(terminal_window(m + 1, dt), point_window(1, dt)),
            Entry::TerminalLeft(m) => integrator.rectangle(terminal_window(m, dt), point_window(0, dt)),
        })
        .collect::<Result<_, _>>()?;

    let zero = Complex64::new(0.0, 0.0);
    let mut table = EtaTable {
        k_max,
        dt,
        interior: vec![zero; k_max + 1],
        left_edge: vec![zero; k_max + 1],
        self_edge: zero,
        terminal: vec![zero; k_max + 1],
        terminal_left: vec![zero; k_max + 1],
    };
    for (e, v) in entries.iter().zip(values) {
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(InfluenceError::NonFinite(format!("{e:?}")));
        }
        match *e {
            Entry::SelfInterior => table.interior[0] = v,
            Entry::SelfEdge => table.self_edge = v,
            Entry::Interior(m) => table.interior[m] = v,
            Entry::LeftEdge(m) => table.left_edge[m] = v,
            Entry::Terminal(m) => table.terminal[m] = v,
            Entry::TerminalLeft(m) => table.terminal_left[m] = v,
        }
    }
    Ok(table)
}

/// Default absolute tolerance for each coefficient's frequency quadrature.
pub const DEFAULT_ETA_TOL: f64 = 1e-12;

/// Influence coefficients of `spec` at inverse temperature `beta` on `grid`.
pub fn build_eta(spec: &SpectralDensity, beta: f64, grid: &TimeGrid, tol: f64) -> Result<EtaTable, InfluenceError> {
    if !(beta > 0.0) || !(tol > 0.0) {
        return Err(InfluenceError::InvalidArgument(format!(
            "need beta > 0 and tol > 0 (beta = {beta}, tol = {tol})"
        )));
    }
    let integrator = SpectralPairIntegrator { spec, beta, tol };
    build_eta_with(&integrator, grid.dt, grid.k_max)
}

/// Feynman–Vernon weight coupling a late path pair to an earlier one:
/// `exp{-(s+_late - s-_late) (eta s+_early - conj(eta) s-_early)}`.
pub fn pair_weight(eta: Complex64, late: PairState, early: PairState) -> Complex64 {
    let diff = (late.s_plus() - late.s_minus()) as f64;
    if diff == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let arg = eta * early.s_plus() as f64 - eta.conj() * early.s_minus() as f64;
    (-arg * diff).exp()
}

/// Forward/backward `sigma_z` path values at one time point.
///
/// Index bijection: `0 <-> (+,+)`, `1 <-> (+,-)`, `2 <-> (-,+)`, `3 <-> (-,-)`,
/// i.e. `index = 2 * row + column` of the density matrix with `s = +1` as row 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairState(u8);

impl PairState {
    pub const ALL: [PairState; 4] = [PairState(0), PairState(1), PairState(2), PairState(3)];

    pub fn from_index(index: usize) -> Self {
        assert!(index < 4, "pair-state index {index} out of range");
        PairState(index as u8)
    }

    pub fn from_spins(s_plus: i8, s_minus: i8) -> Self {
        let row = u8::from(s_plus < 0);
        let col = u8::from(s_minus < 0);
        PairState(2 * row + col)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Density-matrix row (forward branch).
    pub fn row(self) -> usize {
        (self.0 >> 1) as usize
    }

    /// Density-matrix column (backward branch).
    pub fn col(self) -> usize {
        (self.0 & 1) as usize
    }

    pub fn s_plus(self) -> i8 {
        1 - 2 * self.row() as i8
    }

    pub fn s_minus(self) -> i8 {
        1 - 2 * self.col() as i8
    }

    pub fn is_diagonal(self) -> bool {
        self.row() == self.col()
    }
}

// ---------------------------------------------------------------------------
// on-disk cache

const CACHE_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache encoding: {0}")]
    Encoding(#[from] serde_json::Error),
    #[error(transparent)]
    Influence(#[from] InfluenceError),
}

#[derive(Serialize)]
struct CacheKey<'a> {
    format: u32,
    spec: &'a SpectralDensity,
    beta: f64,
    dt: f64,
    k_max: usize,
    tol: f64,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    key_hash: String,
    table_hash: String,
    table: EtaTable,
}

/// Content hash of the inputs that determine an [`EtaTable`].
pub fn eta_key_hash(spec: &SpectralDensity, beta: f64, grid: &TimeGrid, tol: f64) -> String {
    let key = CacheKey {
        format: CACHE_FORMAT,
        spec,
        beta,
        dt: grid.dt,
        k_max: grid.k_max,
        tol,
    };
    let bytes = serde_json::to_vec(&key).expect("cache key serializes");
    hex::encode(Sha256::digest(bytes))
}

fn table_hash(table: &EtaTable) -> Result<String, serde_json::Error> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(table)?)))
}

/// What [`EtaCache::get_or_build`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    Hit,
    Miss,
    /// A file existed but failed its hash checks and was rebuilt.
    Corrupt,
}

/// Directory of serialized tables keyed by input hash.
#[derive(Debug, Clone)]
pub struct EtaCache {
    dir: PathBuf,
}

impl EtaCache {
    pub const ENV_VAR: &'static str = "QSD_CACHE_DIR";

    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// Cache under `$QSD_CACHE_DIR`, or `fallback` when the variable is unset.
    pub fn from_env_or(fallback: impl Into<PathBuf>) -> Self {
        match std::env::var_os(Self::ENV_VAR) {
            Some(dir) if !dir.is_empty() => Self::new(dir),
            _ => Self::new(fallback),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key_hash: &str) -> PathBuf {
        self.dir.join(format!("eta-{key_hash}.json"))
    }

    fn load(&self, key_hash: &str) -> Option<Result<EtaTable, ()>> {
        let text = fs::read(self.path_for(key_hash)).ok()?;
        let parsed: Result<CacheFile, _> = serde_json::from_slice(&text);
        Some(match parsed {
            Ok(file)
                if file.key_hash == key_hash
                    && table_hash(&file.table).ok().as_deref() == Some(file.table_hash.as_str()) =>
            {
                Ok(file.table)
            }
            _ => Err(()),
        })
    }

    fn store(&self, key_hash: &str, table: &EtaTable) -> Result<(), CacheError> {
        fs::create_dir_all(&self.dir)?;
        let file = CacheFile {
            key_hash: key_hash.to_string(),
            table_hash: table_hash(table)?,
            table: table.clone(),
        };
        let path = self.path_for(key_hash);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, serde_json::to_vec(&file)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    /// Returns the cached table for these inputs, building and storing it on a
    /// miss or when the stored file fails verification.
    pub fn get_or_build(
        &self,
        spec: &SpectralDensity,
        beta: f64,
        grid: &TimeGrid,
        tol: f64,
    ) -> Result<(EtaTable, String, CacheOutcome), CacheError> {
        let key = eta_key_hash(spec, beta, grid, tol);
        let outcome = match self.load(&key) {
            Some(Ok(table)) => return Ok((table, key, CacheOutcome::Hit)),
            Some(Err(())) => {
                log::warn!("eta cache entry {key} failed verification; rebuilding");
                CacheOutcome::Corrupt
            }
            None => CacheOutcome::Miss,
        };
        let table = build_eta(spec, beta, grid, tol)?;
        self.store(&key, &table)?;
        Ok((table, key, outcome))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::FrequencyWindow;

    struct ConstantKernel(Complex64);

    impl PairIntegrator for ConstantKernel {
        fn rectangle(&self, late: Window, early: Window) -> Result<Complex64, InfluenceError> {
            assert!(late.start >= early.end - 1e-15, "windows overlap");
            Ok(self.0 * late.width() * early.width())
        }
        fn triangle(&self, width: f64) -> Result<Complex64, InfluenceError> {
            Ok(self.0 * width * width * 0.5)
        }
    }

    #[test]
    fn constant_kernel_gives_window_areas() {
        let c = Complex64::new(0.3, -1.2);
        let dt = 0.05;
        let t = build_eta_with(&ConstantKernel(c), dt, 4).unwrap();
        let close = |a: Complex64, b: Complex64| (a - b).norm() < 1e-15;
        assert!(close(t.interior[0], c * dt * dt / 2.0));
        for m in 1..=4 {
            assert!(close(t.interior[m], c * dt * dt));
            assert!(close(t.left_edge[m], c * dt * dt / 2.0));
            assert!(close(t.terminal[m], c * dt * dt / 2.0));
            assert!(close(t.terminal_left[m], c * dt * dt / 4.0));
        }
        assert!(close(t.self_edge, c * dt * dt / 8.0));
    }

    #[test]
    fn zero_bath_gives_zero_table() {
        let spec = SpectralDensity::ohmic(0.0, 100.0, FrequencyWindow::new(11.0, 100.0));
        let grid = TimeGrid { dt: 0.006, n_steps: 10, k_max: 3 };
        let t = build_eta(&spec, 100.0, &grid, 1e-12).unwrap();
        assert!(t.interior.iter().chain(&t.left_edge).all(|z| *z == Complex64::new(0.0, 0.0)));
        assert_eq!(t.self_edge, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn series_branches_agree() {
        for x in [5e-5_f64, 9e-2, 0.11, 0.3] {
            assert!((sinc(x) - x.sin() / x).abs() < 1e-15);
            // (x - sin x)/x^2 = sum_k (-1)^k x^(2k+1) / (2k+3)!
            let mut term = x / 6.0;
            let mut reference = 0.0;
            for k in 0..12 {
                reference += term;
                term *= -x * x / (((2 * k + 4) * (2 * k + 5)) as f64);
            }
            assert!((sine_defect(x) - reference).abs() < 1e-12 * reference.abs(), "{x}");
        }
    }

    #[test]
    fn pair_weight_cases() {
        let pp = PairState::from_spins(1, 1);
        let pm = PairState::from_spins(1, -1);
        let eta = Complex64::new(0.2, 0.7);
        for early in PairState::ALL {
            assert_eq!(pair_weight(eta, pp, early), Complex64::new(1.0, 0.0));
        }
        let w = pair_weight(Complex64::new(0.05, 0.0), pm, pm);
        assert!((w - Complex64::new((-0.2f64).exp(), 0.0)).norm() < 1e-15);
        let gamma = 0.3;
        let w = pair_weight(Complex64::new(0.0, gamma), pm, pp);
        assert!((w - Complex64::new(0.0, -4.0 * gamma).exp()).norm() < 1e-15);
        assert!((w.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pair_state_bijection() {
        let expected = [(1, 1), (1, -1), (-1, 1), (-1, -1)];
        for (i, (sp, sm)) in expected.into_iter().enumerate() {
            let u = PairState::from_index(i);
            assert_eq!((u.s_plus(), u.s_minus()), (sp, sm));
            assert_eq!(PairState::from_spins(sp, sm), u);
        }
    }

    #[test]
    fn table_is_stationary_and_decays() {
        let spec = SpectralDensity::ohmic(0.01, 100.0, FrequencyWindow::new(11.0, 100.0));
        let dt = 0.006;
        let t = build_eta(&spec, 100.0, &TimeGrid { dt, n_steps: 10, k_max: 4 }, 1e-13).unwrap();
        // a pair anchored elsewhere on the grid gives the same interior coefficient
        let integ = SpectralPairIntegrator { spec: &spec, beta: 100.0, tol: 1e-13 };
        let shifted = integ.rectangle(point_window(9, dt), point_window(7, dt)).unwrap();
        assert!((shifted - t.interior[2]).norm() < 1e-13);
        assert!(t.interior[0].re >= 0.0);
        assert!(t.all_finite());
    }

    #[test]
    fn cache_round_trip_and_corruption() {
        let dir = std::env::temp_dir().join(format!("qsd-eta-cache-test-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let cache = EtaCache::new(&dir);
        let spec = SpectralDensity::ohmic(0.01, 100.0, FrequencyWindow::new(11.0, 100.0));
        let grid = TimeGrid { dt: 0.006, n_steps: 10, k_max: 2 };
        let (a, key, o1) = cache.get_or_build(&spec, 100.0, &grid, 1e-12).unwrap();
        assert_eq!(o1, CacheOutcome::Miss);
        let (b, _, o2) = cache.get_or_build(&spec, 100.0, &grid, 1e-12).unwrap();
        assert_eq!(o2, CacheOutcome::Hit);
        assert_eq!(a, b);

        // flip a digit inside the stored table
        let path = cache.path_for(&key);
        let text = fs::read_to_string(&path).unwrap();
        let pos = text.find("\"interior\":[[").unwrap() + 13;
        let mut bytes = text.into_bytes();
        bytes[pos] = if bytes[pos] == b'1' { b'2' } else { b'1' };
        fs::write(&path, bytes).unwrap();
        let (c, _, o3) = cache.get_or_build(&spec, 100.0, &grid, 1e-12).unwrap();
        assert_eq!(o3, CacheOutcome::Corrupt);
        assert_eq!(c, a);

        fs::write(&path, b"not json").unwrap();
        let (_, _, o4) = cache.get_or_build(&spec, 100.0, &grid, 1e-12).unwrap();
        assert_eq!(o4, CacheOutcome::Corrupt);
        let _ = fs::remove_dir_all(&dir);
    }
}
