//! Iterative tensor multiplication over the truncated path sum.
//!
//! The propagation state is the augmented tensor
//! `A(u_k, u_{k-1}, ..., u_{k-o+1})` over the `o <= k_max` most recent pair
//! states, stored row-major with axis 0 the most recent step. One step
//! appends the new point `u_{k+1}`, multiplies in the bare propagator and all
//! influence weights that couple `u_{k+1}` to retained points, and (once the
//! tensor holds `k_max` points) sums out the oldest point after its last
//! coupling has been applied.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{hermitian_eigenvalues, Mat2, Scenario, SystemParams};
use crate::influence::{pair_weight, EtaTable, PairState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("augmented tensor needs {needed} entries, budget is {budget}")]
    MemoryBudgetExceeded { needed: u128, budget: usize },
    #[error("non-finite tensor entry at step {0}")]
    NonFiniteTensor(usize),
    #[error("influence table does not match the grid: {0}")]
    TableMismatch(String),
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Bare system propagator over one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreePropagator(pub Mat2);

impl FreePropagator {
    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    /// `max |K K^dagger - I|`.
    pub fn unitarity_defect(&self) -> f64 {
        let k = &self.0;
        let prod = mat_mul(k, &dagger(k));
        let mut worst: f64 = 0.0;
        for (i, row) in prod.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((v - target).norm());
            }
        }
        worst
    }
}

/// `exp(-i dt [(eps/2) sigma_z + (Delta/2) sigma_x])` via
/// `exp(-i theta n.sigma) = cos(theta) I - i sin(theta) n.sigma`.
pub fn free_propagator(sys: &SystemParams, dt: f64) -> FreePropagator {
    let (eps, delta) = (sys.epsilon, sys.delta);
    let norm = (eps * eps + delta * delta).sqrt();
    if norm == 0.0 {
        return FreePropagator([[ONE, ZERO], [ZERO, ONE]]);
    }
    let theta = 0.5 * dt * norm;
    let (nz, nx) = (eps / norm, delta / norm);
    let (s, c) = theta.sin_cos();
    let minus_i_sin = Complex64::new(0.0, -s);
    FreePropagator([
        [Complex64::new(c, 0.0) + minus_i_sin * nz, minus_i_sin * nx],
        [minus_i_sin * nx, Complex64::new(c, 0.0) - minus_i_sin * nz],
    ])
}

/// Gibbs state `exp(-beta H0) / Z` in the `sigma_z` basis.
pub fn thermal_reference(sys: &SystemParams, beta: f64) -> Mat2 {
    // exp(-beta w n.sigma) / Z = (I - tanh(beta w) n.sigma) / 2, w = |(eps, Delta)| / 2
    let (eps, delta) = (sys.epsilon, sys.delta);
    let norm = (eps * eps + delta * delta).sqrt();
    if norm == 0.0 {
        return [[Complex64::new(0.5, 0.0), ZERO], [ZERO, Complex64::new(0.5, 0.0)]];
    }
    let th = (0.5 * beta * norm).tanh();
    let (nz, nx) = (eps / norm, delta / norm);
    [
        [Complex64::new(0.5 * (1.0 - th * nz), 0.0), Complex64::new(-0.5 * th * nx, 0.0)],
        [Complex64::new(-0.5 * th * nx, 0.0), Complex64::new(0.5 * (1.0 + th * nz), 0.0)],
    ]
}

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn dagger(a: &Mat2) -> Mat2 {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

/// Complex tensor over the most recent pair states; axis 0 is the newest.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedTensor {
    pub order: usize,
    pub data: Vec<Complex64>,
}

impl AugmentedTensor {
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Sampled reduced density matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub rho: Vec<Mat2>,
    /// Trace of each readout before optional normalization.
    pub raw_trace: Vec<Complex64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn rho11(&self) -> Vec<f64> {
        self.rho.iter().map(|r| r[0][0].re).collect()
    }

    pub fn rho12(&self) -> Vec<Complex64> {
        self.rho.iter().map(|r| r[0][1]).collect()
    }

    pub fn max_trace_drift(&self) -> f64 {
        self.raw_trace.iter().map(|t| (t - ONE).norm()).fold(0.0, f64::max)
    }

    pub fn max_hermiticity_defect(&self) -> f64 {
        self.rho
            .iter()
            .map(|r| (r[0][1] - r[1][0].conj()).norm().max(r[0][0].im.abs()).max(r[1][1].im.abs()))
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.rho
            .iter()
            .map(|r| hermitian_eigenvalues(r).0)
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineOptions {
    /// Largest admissible number of tensor entries.
    pub memory_budget: usize,
    /// Spread each step over rayon workers (results are bitwise identical).
    pub parallel: bool,
    /// Remove the half window beyond the readout time from the newest point.
    pub terminal_clip: bool,
    /// Tensor size below which steps stay serial even when `parallel` is set.
    pub parallel_threshold: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            memory_budget: 1 << 26,
            parallel: true,
            terminal_clip: true,
            parallel_threshold: 1 << 12,
        }
    }
}

/// Path-sum propagator holding the augmented tensor between steps.
#[derive(Debug, Clone)]
pub struct ItmPropagator<'a> {
    eta: &'a EtaTable,
    free: FreePropagator,
    opts: EngineOptions,
    k_max: usize,
    /// Index of the newest retained point.
    step: usize,
    tensor: AugmentedTensor,
    scratch: Vec<Complex64>,
    prefix: Vec<Complex64>,
    /// After a steady step: the new tensor with the coupling to the
    /// summed-out point taken over the clipped readout window.
    clipped: Vec<Complex64>,
    clipped_valid: bool,
}

fn weights_4x4(f: impl Fn(PairState, PairState) -> Complex64) -> [[Complex64; 4]; 4] {
    let mut out = [[ZERO; 4]; 4];
    for late in PairState::ALL {
        for early in PairState::ALL {
            out[late.index()][early.index()] = f(late, early);
        }
    }
    out
}

/// `kron(v_0, v_1, ...)` with `v_0` on the most significant axis.
fn kron_into(out: &mut Vec<Complex64>, factors: &[[Complex64; 4]]) {
    out.clear();
    out.push(ONE);
    for f in factors {
        let prev = std::mem::take(out);
        out.reserve(prev.len() * 4);
        for p in &prev {
            out.extend(f.iter().map(|w| p * w));
        }
    }
}

impl<'a> ItmPropagator<'a> {
    pub fn new(scenario: &Scenario, eta: &'a EtaTable, opts: EngineOptions) -> Result<Self, EngineError> {
        let grid = &scenario.grid;
        if eta.k_max != grid.k_max || (eta.dt - grid.dt).abs() > 1e-15 * grid.dt {
            return Err(EngineError::TableMismatch(format!(
                "table (dt = {}, k_max = {}) vs grid (dt = {}, k_max = {})",
                eta.dt, eta.k_max, grid.dt, grid.k_max
            )));
        }
        let needed = 4u128.pow(grid.k_max.min(64) as u32);
        // tensor, output buffer and (with clipping) the readout copy
        let copies = if opts.terminal_clip { 3 } else { 2 };
        if needed.saturating_mul(copies) > opts.memory_budget as u128 {
            return Err(EngineError::MemoryBudgetExceeded {
                needed: needed.saturating_mul(copies),
                budget: opts.memory_budget,
            });
        }
        let rho0 = scenario.initial.density_matrix();
        let data = PairState::ALL
            .iter()
            .map(|&u| rho0[u.row()][u.col()] * pair_weight(eta.self_edge, u, u))
            .collect();
        Ok(Self {
            eta,
            free: free_propagator(&scenario.system, grid.dt),
            opts,
            k_max: grid.k_max,
            step: 0,
            tensor: AugmentedTensor { order: 1, data },
            scratch: Vec::new(),
            prefix: Vec::new(),
            clipped: Vec::new(),
            clipped_valid: false,
        })
    }

    pub fn tensor(&self) -> &AugmentedTensor {
        &self.tensor
    }

    pub fn current_step(&self) -> usize {
        self.step
    }

    pub fn free_propagator(&self) -> &FreePropagator {
        &self.free
    }

    /// Weight tables coupling the incoming point to the point `m` steps back,
    /// for `m = 1..=count`; the bare propagator and self term ride on `m = 1`.
    fn step_weights(&self, count: usize) -> Vec<[[Complex64; 4]; 4]> {
        let new_index = self.step + 1;
        let k = &self.free.0;
        let eta0 = self.eta.interior[0];
        (1..=count)
            .map(|m| {
                let eta = self.eta.coupling(m, new_index == m);
                weights_4x4(|late, early| {
                    let mut w = pair_weight(eta, late, early);
                    if m == 1 {
                        w *= k[late.row()][early.row()] * k[late.col()][early.col()].conj();
                        w *= pair_weight(eta0, late, late);
                    }
                    w
                })
            })
            .collect()
    }

    /// Advances by one time step.
    pub fn advance(&mut self) -> Result<(), EngineError> {
        let order = self.tensor.order;
        let growing = order < self.k_max;
        let weights = self.step_weights(order);
        let parallel = self.opts.parallel && self.tensor.data.len() * 4 >= self.opts.parallel_threshold;

        if growing {
            // new[u * 4^o + idx] = A[idx] * prod_m T_m(u, axis_{m-1}(idx))
            let block = self.tensor.data.len();
            self.scratch.clear();
            self.scratch.resize(block * 4, ZERO);
            for u in 0..4 {
                let rows: Vec<[Complex64; 4]> = weights.iter().map(|w| w[u]).collect();
                kron_into(&mut self.prefix, &rows);
                let src = &self.tensor.data;
                let pre = &self.prefix;
                let dst = &mut self.scratch[u * block..(u + 1) * block];
                if parallel {
                    dst.par_iter_mut()
                        .zip(src.par_iter().zip(pre.par_iter()))
                        .for_each(|(d, (a, p))| *d = a * p);
                } else {
                    for ((d, a), p) in dst.iter_mut().zip(src).zip(pre) {
                        *d = a * p;
                    }
                }
            }
            self.tensor.order += 1;
        } else {
            // new[u * 4^(o-1) + r] = P_u(r) * sum_old A[4 r + old] T_o(u, old)
            let block = self.tensor.data.len() / 4;
            self.scratch.clear();
            self.scratch.resize(block * 4, ZERO);
            let clip = self.opts.terminal_clip;
            if clip {
                self.clipped.clear();
                self.clipped.resize(block * 4, ZERO);
            }
            let origin = self.step + 1 == order;
            let d = self.eta.terminal_coupling(order, origin) - self.eta.coupling(order, origin);
            let (leading, last) = weights.split_at(order - 1);
            for u in 0..4 {
                let rows: Vec<[Complex64; 4]> = leading.iter().map(|w| w[u]).collect();
                kron_into(&mut self.prefix, &rows);
                let t = last[0][u];
                let late = PairState::from_index(u);
                let tc: [Complex64; 4] = std::array::from_fn(|e| t[e] * pair_weight(d, late, PairState::from_index(e)));
                let src = &self.tensor.data;
                let pre = &self.prefix;
                let dst = &mut self.scratch[u * block..(u + 1) * block];
                if clip {
                    let dst_c = &mut self.clipped[u * block..(u + 1) * block];
                    let contract = |(r, (d, dc)): (usize, (&mut Complex64, &mut Complex64))| {
                        let a = &src[4 * r..4 * r + 4];
                        *d = pre[r] * (a[0] * t[0] + a[1] * t[1] + a[2] * t[2] + a[3] * t[3]);
                        *dc = pre[r] * (a[0] * tc[0] + a[1] * tc[1] + a[2] * tc[2] + a[3] * tc[3]);
                    };
                    if parallel {
                        dst.par_iter_mut().zip(dst_c.par_iter_mut()).enumerate().for_each(contract);
                    } else {
                        dst.iter_mut().zip(dst_c.iter_mut()).enumerate().for_each(contract);
                    }
                } else {
                    let contract = |(r, d): (usize, &mut Complex64)| {
                        let a = &src[4 * r..4 * r + 4];
                        *d = pre[r] * (a[0] * t[0] + a[1] * t[1] + a[2] * t[2] + a[3] * t[3]);
                    };
                    if parallel {
                        dst.par_iter_mut().enumerate().for_each(contract);
                    } else {
                        dst.iter_mut().enumerate().for_each(contract);
                    }
                }
            }
        }
        self.clipped_valid = !growing && self.opts.terminal_clip;
        std::mem::swap(&mut self.tensor.data, &mut self.scratch);
        self.step += 1;
        if !self.tensor.all_finite() {
            return Err(EngineError::NonFiniteTensor(self.step));
        }
        Ok(())
    }

    /// Reduced density matrix at the current step, before normalization.
    pub fn readout(&mut self) -> Mat2 {
        let order = self.tensor.order;
        let block = self.tensor.data.len() / 4;
        let k = self.step;
        let mut rho = [[ZERO; 2]; 2];
        let data = if self.clipped_valid { &self.clipped } else { &self.tensor.data };
        for u in PairState::ALL {
            let slice = &data[u.index() * block..(u.index() + 1) * block];
            let value: Complex64 = if self.opts.terminal_clip {
                // swap full-window couplings of the newest point for clipped ones
                let self_fix = if k == 0 {
                    pair_weight(-self.eta.self_edge, u, u)
                } else {
                    pair_weight(self.eta.self_edge - self.eta.interior[0], u, u)
                };
                let rows: Vec<[Complex64; 4]> = (1..order)
                    .map(|m| {
                        let origin = k == m;
                        let d = self.eta.terminal_coupling(m, origin) - self.eta.coupling(m, origin);
                        let mut row = [ZERO; 4];
                        for early in PairState::ALL {
                            row[early.index()] = pair_weight(d, u, early);
                        }
                        row
                    })
                    .collect();
                kron_into(&mut self.prefix, &rows);
                let s: Complex64 = slice.iter().zip(&self.prefix).map(|(a, c)| a * c).sum();
                s * self_fix
            } else if k == 0 {
                slice[0] * pair_weight(-self.eta.self_edge, u, u)
            } else {
                slice.iter().sum()
            };
            rho[u.row()][u.col()] = value;
        }
        rho
    }
}

/// Runs the full trajectory of a scenario with default engine options.
pub fn itm_propagate(scenario: &Scenario, eta: &EtaTable) -> Result<Trajectory, EngineError> {
    itm_propagate_with(scenario, eta, EngineOptions::default())
}

pub fn itm_propagate_with(scenario: &Scenario, eta: &EtaTable, opts: EngineOptions) -> Result<Trajectory, EngineError> {
    let mut prop = ItmPropagator::new(scenario, eta, opts)?;
    let n = scenario.grid.n_steps;
    let mut traj = Trajectory {
        times: Vec::with_capacity(n + 1),
        rho: Vec::with_capacity(n + 1),
        raw_trace: Vec::with_capacity(n + 1),
    };
    for k in 0..=n {
        if k > 0 {
            prop.advance()?;
        }
        let mut rho = prop.readout();
        let trace = rho[0][0] + rho[1][1];
        if scenario.normalize_trace && trace.norm() > 0.0 {
            for row in rho.iter_mut() {
                for v in row.iter_mut() {
                    *v /= trace;
                }
            }
        }
        if k % 256 == 0 {
            log::trace!("{}: step {k}, raw trace drift {:.3e}", scenario.label, (trace - ONE).norm());
        }
        traj.times.push(scenario.grid.time(k));
        traj.rho.push(rho);
        traj.raw_trace.push(trace);
    }
    Ok(traj)
}

/// Median wall time of a steady-phase step (the tensor already holds
/// `k_max` points), measured over `samples` consecutive steps.
pub fn steady_step_time(scenario: &Scenario, eta: &EtaTable, samples: usize) -> Result<Duration, EngineError> {
    let opts = EngineOptions {
        parallel: false,
        ..EngineOptions::default()
    };
    let mut prop = ItmPropagator::new(scenario, eta, opts)?;
    while prop.tensor.order < scenario.grid.k_max {
        prop.advance()?;
    }
    // one untimed steady step sizes the scratch buffer
    prop.advance()?;
    let mut times = Vec::with_capacity(samples);
    for _ in 0..samples.max(1) {
        let start = Instant::now();
        prop.advance()?;
        times.push(start.elapsed());
    }
    times.sort();
    Ok(times[times.len() / 2])
}
