//! Error types shared across the crate.

use thiserror::Error;

/// Rejected generator or network parameters.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{what} must be finite, got {value}")]
    NotFinite { what: &'static str, value: f64 },
    #[error("{what} must be positive, got {value}")]
    NotPositive { what: &'static str, value: f64 },
    #[error("{what} must be non-negative, got {value}")]
    Negative { what: &'static str, value: f64 },
    /// The transformed inductance matrix loses positive definiteness.
    #[error("inductance matrix not positive definite: {why}")]
    IndefiniteInductance { why: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquilibriumError {
    /// The algebraic steady-state system has no solution for these inputs.
    #[error("no equilibrium: {why}")]
    NoEquilibrium { why: String },
    /// A coefficient needed for an inversion is numerically zero.
    #[error("degenerate coefficient in {what}: {why}")]
    Degenerate { what: &'static str, why: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertificateError {
    #[error("operating point inconsistent: {what} residual {residual:.3e} exceeds {limit:.1e}")]
    InconsistentOperatingPoint {
        what: String,
        residual: f64,
        limit: f64,
    },
    #[error("certificate needs positive damping, got D = {d}")]
    NonPositiveDamping { d: f64 },
    #[error(transparent)]
    Network(Box<NetworkError>),
}

impl From<NetworkError> for CertificateError {
    fn from(e: NetworkError) -> Self {
        CertificateError::Network(Box::new(e))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("network description invalid: {why}")]
    Description { why: String },
    #[error("bus {bus} is isolated: {why}")]
    IsolatedBus { bus: String, why: String },
    #[error("bus incidence algebra singular at {element}: {why}")]
    SingularAlgebra { element: String, why: String },
    #[error("steady-state solve failed: {why} (last residual {residual:.3e})")]
    SteadyStateDiverged { why: String, residual: f64 },
    #[error("initial condition infeasible: {why}")]
    InfeasibleInitialState { why: String },
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {what}")]
    InvalidConfig { what: String },
    #[error("state blew up at t = {t:.6} s (|x| = {norm:.3e}); aborting run")]
    BlowUp { t: f64, norm: f64 },
    #[error(transparent)]
    Network(#[from] NetworkError),
}
