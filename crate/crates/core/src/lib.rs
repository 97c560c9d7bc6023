//! Semiclassical and quantum simulation of adiabatic photon transfer along
//! coupled-cavity chains terminated by a two-level system.

pub mod chaos;
pub mod csv;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod ode;
pub mod quantum;
pub mod scans;
pub mod stationary;

pub use dynamics::{eom_rhs, integrate, propagate, Couplings, SemiclassicalSystem, Trajectory};
pub use error::{Error, Result};
pub use model::{
    conserved_total, mixing_angle_from, validate, ChainParams, Diagnostic, PulseProtocol,
    SemiclassicalState, REFERENCE_DETUNING, REFERENCE_EXCITATION,
};
pub use num_complex::Complex64;
pub use ode::{IntegratorOptions, Stats};
pub use stationary::{
    continue_branch, find_ssp, solve_sp, sp_residual, ContinuationOptions, SpBranch, SpSolution,
};
pub use chaos::{benettin, chaos_window, lambda_max_at, ChaosWindow, LyapunovSeries, LyapunovSettings};
pub use scans::{bounds_95, efficiency_scan, scan_options, linear_dark_state, transfer_efficiency, Bounds, EfficiencyCurve, Start};
