//! Reduced dynamics of a qubit in an Ohmic bath, coupled either directly or
//! through an intermediate harmonic oscillator, computed with the
//! quasiadiabatic propagator path integral and iterative tensor
//! multiplication.
//!
//! Pipeline: [`spectral`] densities feed the bath [`response`] function,
//! which is integrated into the [`influence`] coefficient table; the
//! [`engine`] propagates the augmented path tensor and the [`observables`]
//! module extracts decoherence and relaxation times.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod engine;
pub mod influence;
pub mod observables;
pub mod quadrature;
pub mod response;
pub mod spectral;

use thiserror::Error;

pub use config::{BathModel, BathSpec, InitialState, Scenario, SystemParams, TimeGrid};
pub use engine::{itm_propagate, EngineOptions, Trajectory};
pub use influence::{build_eta, EtaTable};
pub use spectral::SpectralDensity;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Spectral(#[from] spectral::SpectralError),
    #[error(transparent)]
    Response(#[from] response::ResponseError),
    #[error(transparent)]
    Influence(#[from] influence::InfluenceError),
    #[error(transparent)]
    Cache(#[from] influence::CacheError),
    #[error(transparent)]
    Engine(#[from] engine::EngineError),
    #[error(transparent)]
    Observable(#[from] observables::ObservableError),
}

impl Error {
    /// True for failures of the numerics rather than of the input or I/O.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::Config(_) | Error::Cache(influence::CacheError::Io(_) | influence::CacheError::Encoding(_))
        )
    }
}

/// Builds the influence table for a scenario and runs it.
pub fn simulate(scenario: &Scenario, opts: EngineOptions) -> Result<(EtaTable, Trajectory), Error> {
    let eta = build_eta(
        &scenario.spectral_density(),
        scenario.beta(),
        &scenario.grid,
        influence::DEFAULT_ETA_TOL,
    )?;
    let traj = engine::itm_propagate_with(scenario, &eta, opts)?;
    Ok((eta, traj))
}
