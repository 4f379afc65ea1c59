//! Transient stability toolkit for multi-machine power networks built on a
//! port-Hamiltonian formulation of the synchronous generator.
//!
//! The crate models each generator from first principles (cylindrical rotor,
//! single field winding, no saliency, motor sign convention) in its own rotor
//! frame, assembles multi-machine networks of RL lines and static loads,
//! computes synchronous operating points, and checks decentralized stability
//! certificates that bound the admissible steady-state stator flux against the
//! available mechanical and electrical damping. A fixed-step RK4 simulator with
//! seeded batch sampling backs the certificates up with trajectory evidence.
//!
//! Layout:
//!
//! * [`machine`]: generator parameters, rotor-frame dynamics, transforms,
//!   energy functions.
//! * [`equilibrium`]: closed-form steady-state currents, consistent torque and
//!   field current, synchronous-speed uniqueness analysis.
//! * [`certificates`]: dissipation matrix, single- and multi-machine stability
//!   certificates, series-compensation sizing.
//! * [`network`]: network description, operating-point solver, composite
//!   dynamics, energy and power-balance monitors.
//! * [`simulator`]: RK4 integration, initial-condition sampling, convergence
//!   metrics, batch execution (data-parallel with the `parallel` feature).
//!
//! With the default `parallel` feature, batch simulation fans out over a rayon
//! worker pool; disabling it leaves a sequential fallback with the same API.

pub mod certificates;
pub mod equilibrium;
pub mod error;
pub mod machine;
pub mod network;
pub mod simulator;

pub use error::{CertificateError, EquilibriumError, NetworkError, ParamError, SimError};

/// Builds the global worker pool used by batch simulation.
///
/// `jobs = 0` or a second call leaves the pool untouched. Without the
/// `parallel` feature this is a no-op and batch runs stay sequential.
#[cfg(feature = "parallel")]
pub fn configure_threads(jobs: usize) {
    if jobs == 0 {
        return;
    }
    // Ignore the error from a pool that is already running; thread count is a
    // performance knob, not a correctness one.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_jobs: usize) {}
