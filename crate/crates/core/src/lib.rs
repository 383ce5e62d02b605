//! Kinematically coupled Lie-splitting solver for a 2D incompressible fluid in
//! a channel whose upper wall is a viscoelastic (or elastic) Koiter shell,
//! with an energy ledger that checks the scheme's discrete energy identities.
//!
//! One time step is a structure sub-step ([`shell::StructureSolver`])
//! followed by the monolithic fluid–shell-velocity sub-step
//! ([`coupling::CoupledProblem::fluid_step`]); [`driver::run`] threads the
//! state and [`energy::EnergyLedger::verify`] audits the result.

pub mod ale;
pub mod config;
pub mod coupling;
pub mod driver;
pub mod energy;
pub mod error;
pub mod export;
pub mod fluid;
pub mod linalg;
pub mod materials;
pub mod quadrature;
pub mod shell;
pub mod waveform;

pub use driver::{run, ExitStatus, RunConfig, RunOutput, WallMode};
pub use energy::{EnergyLedger, Tolerances, Verdict};

/// Environment variable that sets the number of assembly workers.
pub const WORKERS_ENV: &str = "FSI_WORKERS";

/// Sizes the global worker pool from [`WORKERS_ENV`] if it is set. Results do
/// not depend on the worker count. Returns the count in effect.
pub fn init_workers_from_env() -> usize {
    if let Some(n) = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // a second initialization keeps the existing pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    rayon::current_num_threads()
}
