//! Shared fixtures for the benchmarks.

use stirap_core::{find_ssp, stationary::default_grid, ChainParams, ContinuationOptions, PulseProtocol, SpBranch};

/// Three-cavity chain at the reference detuning with 20 photons.
pub fn reference(g: f64, sweep_rate: f64) -> (ChainParams, PulseProtocol) {
    (ChainParams::three_cavity(0.5, g, 20.0), PulseProtocol::three_cavity(sweep_rate))
}

pub fn branch(params: &ChainParams, protocol: &PulseProtocol) -> SpBranch {
    find_ssp(params, protocol, &default_grid(protocol, 0.01), &ContinuationOptions::default()).expect("branch")
}
