//! Reference computations shared by the integration tests. None of them go
//! through the frequency-domain kernels or the path-sum engine.
#![allow(dead_code)]

use num_complex::Complex64;
use qsd_core::config::Mat2;
use qsd_core::influence::EtaTable;
use qsd_core::response::response_at;
use qsd_core::SpectralDensity;
use rayon::prelude::*;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn mat_max_diff(a: &Mat2, b: &Mat2) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            worst = worst.max((a[i][j] - b[i][j]).norm());
        }
    }
    worst
}

fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Dense matrix exponential by scaling and squaring of a Taylor series.
pub fn expm(a: &Mat2) -> Mat2 {
    let norm: f64 = a.iter().flatten().map(|z| z.norm()).sum();
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.1 {
        scale *= 0.5;
        squarings += 1;
    }
    let x = a.map(|row| row.map(|z| z * scale));
    let mut result = [[ONE, ZERO], [ZERO, ONE]];
    let mut term = result;
    for k in 1..30 {
        term = mul(&term, &x).map(|row| row.map(|z| z / k as f64));
        for i in 0..2 {
            for j in 0..2 {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = mul(&result, &result);
    }
    result
}

/// `(eps/2) sigma_z + (Delta/2) sigma_x`.
pub fn qubit_hamiltonian(eps: f64, delta: f64) -> Mat2 {
    [[c(0.5 * eps, 0.0), c(0.5 * delta, 0.0)], [c(0.5 * delta, 0.0), c(-0.5 * eps, 0.0)]]
}

/// `(xi/2) omega_c^2 / (1 + i omega_c t)^2`: zero-temperature Ohmic response
/// without frequency window.
pub fn ohmic_response_closed_form(xi: f64, omega_c: f64, t: f64) -> Complex64 {
    let d = c(1.0, omega_c * t);
    c(0.5 * xi * omega_c * omega_c, 0.0) / (d * d)
}

/// A response function sampled on the lattice `u = d h`, `d = 0, 1, ...`, with
/// double integrals over lattice-aligned regions evaluated by the piecewise
/// linear rule on the triangulated square grid of the `(tau, tau')` plane.
pub struct LatticeKernel {
    pub h: f64,
    pub alpha: Vec<Complex64>,
}

impl LatticeKernel {
    pub fn from_fn(h: f64, n: usize, f: impl Fn(f64) -> Complex64 + Sync) -> Self {
        let alpha = (0..=n).into_par_iter().map(|d| f(d as f64 * h)).collect();
        Self { h, alpha }
    }

    pub fn from_spectral(spec: &SpectralDensity, beta: f64, h: f64, n: usize, tol: f64) -> Self {
        Self::from_fn(h, n, |u| response_at(u, spec, beta, tol).unwrap().value)
    }

    fn cell(&self, d: usize) -> Complex64 {
        // the square with lower-left difference d, split along tau - tau' = d h
        self.alpha[d] * 4.0 + self.alpha[d + 1] + self.alpha[d - 1]
    }

    /// `Int_[a, a+na] Int_[b, b+nb] alpha(tau - tau')` in lattice units, `a >= b + nb`.
    pub fn rectangle(&self, a: usize, na: usize, b: usize, nb: usize) -> Complex64 {
        assert!(a >= b + nb, "windows must be ordered and disjoint");
        let mut sum = ZERO;
        // offset d = i - j of cell (i, j), i < na, j < nb
        for d in -(nb as i64 - 1)..=(na as i64 - 1) {
            let lo = d.max(0);
            let hi = (na as i64).min(nb as i64 + d);
            let count = hi - lo;
            if count <= 0 {
                continue;
            }
            let diff = (a as i64 - b as i64 + d) as usize;
            sum += self.cell(diff) * count as f64;
        }
        sum * (self.h * self.h / 6.0)
    }

    /// `Int_0^L dtau Int_0^tau dtau' alpha(tau - tau')` with `L = n h`.
    pub fn triangle(&self, n: usize) -> Complex64 {
        let mut sum = (self.alpha[0] * 2.0 + self.alpha[1]) * n as f64;
        for d in 1..n {
            sum += self.cell(d) * (n - d) as f64;
        }
        sum * (self.h * self.h / 6.0)
    }
}

/// Every coefficient of an influence table recomputed on a time lattice with
/// `2 q` points per step.
pub fn brute_force_eta(spec: &SpectralDensity, beta: f64, dt: f64, k_max: usize, q: usize) -> EtaTable {
    let h = dt / (2 * q) as f64;
    // windows are measured in half steps; the farthest lattice difference
    // is between the end of interior point k_max + 1 and t = 0
    let span = (2 * k_max + 4) * q;
    let kernel = LatticeKernel::from_spectral(spec, beta, h, span + 1, 1e-10);
    let full = 2 * q;
    let half = q;
    // lattice start of the full window around grid point m >= 1
    let start = |m: usize| (2 * m - 1) * q;
    let mut t = EtaTable {
        k_max,
        dt,
        interior: vec![ZERO; k_max + 1],
        left_edge: vec![ZERO; k_max + 1],
        self_edge: kernel.triangle(half),
        terminal: vec![ZERO; k_max + 1],
        terminal_left: vec![ZERO; k_max + 1],
    };
    t.interior[0] = kernel.triangle(full);
    for m in 1..=k_max {
        t.interior[m] = kernel.rectangle(start(m + 1), full, start(1), full);
        t.left_edge[m] = kernel.rectangle(start(m), full, 0, half);
        t.terminal[m] = kernel.rectangle(start(m + 1), half, start(1), full);
        t.terminal_left[m] = kernel.rectangle(start(m), half, 0, half);
    }
    t
}

/// Largest entrywise distance between two tables of the same shape.
pub fn eta_max_diff(a: &EtaTable, b: &EtaTable) -> f64 {
    assert_eq!(a.k_max, b.k_max);
    let mut worst = (a.self_edge - b.self_edge).norm();
    for (x, y) in [
        (&a.interior, &b.interior),
        (&a.left_edge, &b.left_edge),
        (&a.terminal, &b.terminal),
        (&a.terminal_left, &b.terminal_left),
    ] {
        for (u, v) in x.iter().zip(y) {
            worst = worst.max((u - v).norm());
        }
    }
    worst
}

/// `4 Int_0^t Int_0^tau Re alpha(tau - tau')` on a lattice of `n` cells.
pub fn dephasing_exponent_riemann(spec: &SpectralDensity, beta: f64, t: f64, n: usize) -> f64 {
    let h = t / n as f64;
    let kernel = LatticeKernel::from_spectral(spec, beta, h, n + 1, 1e-11);
    4.0 * kernel.triangle(n).re
}

/// `(1/pi) Int J(w) [coth(beta w / 2) cos(w t) - i sin(w t)] dw` by the
/// trapezoid rule on `n` points over the support of `J`.
pub fn trapezoid_response(spec: &SpectralDensity, beta: f64, t: f64, n: usize) -> Complex64 {
    let (lo, hi) = spec.integration_range();
    let h = (hi - lo) / (n - 1) as f64;
    let f = |w: f64| {
        let j = spec.eval(w);
        if j == 0.0 {
            return ZERO;
        }
        let coth = 1.0 / (0.5 * beta * w).tanh();
        c(j * coth * (w * t).cos(), -j * (w * t).sin())
    };
    let inner: Complex64 = (1..n - 1).into_par_iter().map(|i| f(lo + i as f64 * h)).sum();
    (inner + (f(lo) + f(hi)) * 0.5) * h / std::f64::consts::PI
}
