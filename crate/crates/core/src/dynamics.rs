//! Semiclassical equations of motion and their time integration.
//!
//! Per cavity `j` (rotating frame of the source cavity):
//!
//! ```text
//! dz_j/dt = -i D_j z_j + i (J_{j-1} z_{j-1} + J_j z_{j+1}) - (kappa/2) z_j
//! ```
//!
//! with the terminal cavity carrying the extra `-i g s`, and the qubit
//!
//! ```text
//! ds/dt  = -i D_q s + 2 i g c sz - (gamma/2) s
//! dsz/dt = -i g (s* c - c* s) - gamma (sz + 1/2)
//! ```
//!
//! where `c` is the terminal amplitude and `D_q` the terminal detuning.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::csv;
use crate::error::{Error, Result};
use crate::model::{ChainParams, PulseProtocol, SemiclassicalState};
use crate::ode::{self, IntegratorOptions, OdeSystem, Stats};

/// Where the bond couplings come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Couplings {
    /// Time-dependent Gaussian pulses.
    Pulsed(PulseProtocol),
    /// Couplings held fixed, e.g. the protocol frozen at one `ttilde`.
    Frozen(Vec<f64>),
}

impl Couplings {
    pub fn frozen_at(protocol: &PulseProtocol, ttilde: f64) -> Self {
        Couplings::Frozen(protocol.couplings_at_ttilde(ttilde))
    }

    #[inline]
    fn value(&self, bond: usize, t: f64) -> f64 {
        match self {
            Couplings::Pulsed(p) => {
                let x = t / p.tau - p.centers[bond];
                p.amplitude * (-x * x).exp()
            }
            Couplings::Frozen(j) => j[bond],
        }
    }
}

/// The semiclassical vector field on the flat layout
/// `[Re z_1, Im z_1, ..., Re s, Im s, sz]`.
#[derive(Debug, Clone)]
pub struct SemiclassicalSystem<'a> {
    params: &'a ChainParams,
    couplings: Couplings,
}

impl<'a> SemiclassicalSystem<'a> {
    pub fn new(params: &'a ChainParams, couplings: Couplings) -> Self {
        Self { params, couplings }
    }

    pub fn params(&self) -> &ChainParams {
        self.params
    }
}

impl OdeSystem for SemiclassicalSystem<'_> {
    fn dim(&self) -> usize {
        self.params.flat_dim()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        semiclassical_rhs(self.params, &self.couplings, t, y, dy);
    }
}

/// Flat-layout right-hand side.
pub fn semiclassical_rhs(params: &ChainParams, couplings: &Couplings, t: f64, y: &[f64], dy: &mut [f64]) {
    let n = params.n_cavities;
    let half_kappa = 0.5 * params.kappa;
    let mut j_prev = 0.0;
    for j in 0..n {
        let j_next = if j + 1 < n { couplings.value(j, t) } else { 0.0 };
        let re = y[2 * j];
        let im = y[2 * j + 1];
        let mut sr = 0.0;
        let mut si = 0.0;
        if j > 0 {
            sr += j_prev * y[2 * j - 2];
            si += j_prev * y[2 * j - 1];
        }
        if j + 1 < n {
            sr += j_next * y[2 * j + 2];
            si += j_next * y[2 * j + 3];
        }
        let d = params.detuning[j];
        dy[2 * j] = d * im - si - half_kappa * re;
        dy[2 * j + 1] = -d * re + sr - half_kappa * im;
        j_prev = j_next;
    }
    let g = params.g_terminal();
    let (cr, ci) = (y[2 * n - 2], y[2 * n - 1]);
    let (s_re, s_im, sz) = (y[2 * n], y[2 * n + 1], y[2 * n + 2]);
    // -i g s on the terminal cavity
    dy[2 * n - 2] += g * s_im;
    dy[2 * n - 1] -= g * s_re;
    let dq = params.qubit_detuning();
    let half_gamma = 0.5 * params.gamma;
    dy[2 * n] = dq * s_im - 2.0 * g * sz * ci - half_gamma * s_re;
    dy[2 * n + 1] = -dq * s_re + 2.0 * g * sz * cr - half_gamma * s_im;
    dy[2 * n + 2] = 2.0 * g * (s_re * ci - s_im * cr) - params.gamma * (sz + 0.5);
}

/// Time derivative of `state` under the pulsed protocol at time `t`.
pub fn eom_rhs(
    state: &SemiclassicalState,
    params: &ChainParams,
    protocol: &PulseProtocol,
    t: f64,
) -> Result<SemiclassicalState> {
    if !state.is_finite() || !t.is_finite() {
        return Err(Error::NonFinite { t });
    }
    if state.n_cavities() != params.n_cavities {
        return Err(Error::DimensionMismatch {
            expected: params.n_cavities,
            got: state.n_cavities(),
        });
    }
    let y = state.to_flat();
    let mut dy = vec![0.0; y.len()];
    semiclassical_rhs(params, &Couplings::Pulsed(protocol.clone()), t, &y, &mut dy);
    Ok(SemiclassicalState::from_flat(&dy))
}

/// Sampled solution of the semiclassical equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub tau: f64,
    pub times: Vec<f64>,
    pub states: Vec<SemiclassicalState>,
    pub stats: Stats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn ttilde(&self, i: usize) -> f64 {
        self.times[i] / self.tau
    }

    pub fn ttildes(&self) -> Vec<f64> {
        self.times.iter().map(|t| t / self.tau).collect()
    }

    pub fn initial(&self) -> &SemiclassicalState {
        &self.states[0]
    }

    pub fn last(&self) -> &SemiclassicalState {
        self.states.last().expect("trajectory has at least one sample")
    }

    /// Photon-number series of cavity `j`.
    pub fn photon_series(&self, j: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.amps[j].norm_sqr()).collect()
    }

    pub fn conserved_series(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.conserved_total()).collect()
    }

    /// Largest `|conserved(t) - conserved(0)|`.
    pub fn max_conservation_drift(&self) -> f64 {
        let c0 = self.states[0].conserved_total();
        self.states
            .iter()
            .map(|s| (s.conserved_total() - c0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest excess of `|s|^2 + sz^2` over 1/4.
    pub fn max_spin_excess(&self) -> f64 {
        self.states
            .iter()
            .map(|s| s.spin_length_sq() - 0.25)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Columns `t, ttilde, n_1..n_k, re_s, im_s, sz, conserved`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let k = self.states.first().map_or(0, |s| s.n_cavities());
        let mut header = vec!["t".to_string(), "ttilde".to_string()];
        header.extend((1..=k).map(|i| format!("n_{i}")));
        header.extend(["re_s", "im_s", "sz", "conserved"].map(String::from));
        csv::write_header(w, &header)?;
        let mut row = Vec::with_capacity(k + 6);
        for (t, s) in self.times.iter().zip(&self.states) {
            row.clear();
            row.push(*t);
            row.push(t / self.tau);
            row.extend(s.photon_numbers());
            row.extend([s.s.re, s.s.im, s.sz, s.conserved_total()]);
            csv::write_row(w, &row)?;
        }
        Ok(())
    }
}

/// Options with the protocol-dependent defaults filled in: `max_step = tau/50`
/// and samples every `tau/100`.
pub fn resolved_options(protocol: &PulseProtocol, options: &IntegratorOptions) -> IntegratorOptions {
    let mut o = options.clone();
    if o.max_step.is_none() {
        o.max_step = Some(protocol.tau / 50.0);
    }
    if o.sample_dt.is_none() {
        o.sample_dt = Some(protocol.tau / 100.0);
    }
    o
}

/// Integrate the pulsed equations over `t_span`, sampling the dense output.
pub fn integrate(
    state0: &SemiclassicalState,
    params: &ChainParams,
    protocol: &PulseProtocol,
    t_span: (f64, f64),
    options: &IntegratorOptions,
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    let t_end = protocol.t_end();
    let slack = 1e-9 * t_end.max(1.0);
    if !(t0 >= -slack && t1 <= t_end + slack && t0 < t1) {
        return Err(Error::Invalid(format!(
            "t_span ({t0}, {t1}) must be increasing and lie within [0, {t_end}]"
        )));
    }
    if state0.n_cavities() != params.n_cavities {
        return Err(Error::DimensionMismatch {
            expected: params.n_cavities,
            got: state0.n_cavities(),
        });
    }
    let opts = resolved_options(protocol, options);
    let dt = opts.sample_dt.unwrap_or(protocol.tau / 100.0);
    let mut samples = Vec::new();
    let mut t = t0;
    let mut i = 0usize;
    while t < t1 {
        samples.push(t);
        i += 1;
        t = t0 + i as f64 * dt;
    }
    samples.push(t1);

    let sys = SemiclassicalSystem::new(params, Couplings::Pulsed(protocol.clone()));
    let mut times = Vec::with_capacity(samples.len());
    let mut states = Vec::with_capacity(samples.len());
    let (_, stats) = ode::integrate(&sys, t0, &state0.to_flat(), t1, &opts, &samples, |t, y| {
        times.push(t);
        states.push(SemiclassicalState::from_flat(y));
    })?;
    if states.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite { t: t1 });
    }
    Ok(Trajectory {
        tau: protocol.tau,
        times,
        states,
        stats,
    })
}

/// Final state only; works in either time direction and for frozen couplings.
pub fn propagate(
    state0: &SemiclassicalState,
    params: &ChainParams,
    couplings: Couplings,
    t0: f64,
    t1: f64,
    options: &IntegratorOptions,
) -> Result<SemiclassicalState> {
    let sys = SemiclassicalSystem::new(params, couplings);
    let (y, _) = ode::integrate(&sys, t0, &state0.to_flat(), t1, options, &[], |_, _| {})?;
    Ok(SemiclassicalState::from_flat(&y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::REFERENCE_DETUNING;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Hand-written three-cavity right-hand side in complex arithmetic.
    fn oracle_rhs(
        st: &SemiclassicalState,
        j1: f64,
        j2: f64,
        delta: f64,
        g: f64,
        kappa: f64,
        gamma: f64,
    ) -> SemiclassicalState {
        let i = c(0.0, 1.0);
        let (a, b, cc) = (st.amps[0], st.amps[1], st.amps[2]);
        let (s, sz) = (st.s, st.sz);
        let da = i * j1 * b - 0.5 * kappa * a;
        let db = -i * delta * b + i * (j1 * a + j2 * cc) - 0.5 * kappa * b;
        let dc = -i * g * s + i * j2 * b - 0.5 * kappa * cc;
        let ds = 2.0 * i * g * cc * sz - 0.5 * gamma * s;
        let dsz = (-i * g * (s.conj() * cc - cc.conj() * s)).re - gamma * (sz + 0.5);
        SemiclassicalState {
            amps: vec![da, db, dc],
            s: ds,
            sz: dsz,
        }
    }

    #[test]
    fn matches_complex_oracle() {
        let params = ChainParams::three_cavity(0.37, 0.23, 20.0).with_dissipation(0.01, 0.02);
        let protocol = PulseProtocol::three_cavity(0.05);
        let st = SemiclassicalState {
            amps: vec![c(1.0, -0.3), c(0.2, 0.7), c(-1.1, 0.4)],
            s: c(0.2, -0.3),
            sz: -0.1,
        };
        for t in [0.0, 40.0, 61.3, 90.0] {
            let got = eom_rhs(&st, &params, &protocol, t).unwrap();
            let j1 = protocol.pulse_value(0, t).unwrap();
            let j2 = protocol.pulse_value(1, t).unwrap();
            let want = oracle_rhs(&st, j1, j2, 0.37, 0.23, 0.01, 0.02);
            for (x, y) in got.amps.iter().zip(&want.amps) {
                assert!((x - y).norm() < 1e-14);
            }
            assert!((got.s - want.s).norm() < 1e-14);
            assert!((got.sz - want.sz).abs() < 1e-14);
        }
    }

    #[test]
    fn source_state_derivative_at_origin() {
        let params = ChainParams::three_cavity(REFERENCE_DETUNING, 0.2, 20.0);
        let protocol = PulseProtocol::three_cavity(0.0202);
        let st = SemiclassicalState::source_filled(3, 20.0);
        let d = eom_rhs(&st, &params, &protocol, 0.0).unwrap();
        assert_eq!(d.amps[0].norm(), 0.0);
        assert_eq!(d.s.norm(), 0.0);
        assert_eq!(d.sz, 0.0);
        // hand evaluation: |db/dt| = J1(0) sqrt(20)
        let expected = (-(3.697f64).powi(2)).exp() * 20f64.sqrt();
        assert!((d.amps[1].norm() - expected).abs() < 1e-18);
        assert!((d.amps[1].norm() - 5.2e-6).abs() < 0.05e-6);
    }

    #[test]
    fn decoupled_resonant_frame_is_static() {
        let params = ChainParams::three_cavity(0.0, 0.0, 20.0);
        let st = SemiclassicalState {
            amps: vec![c(1.0, 2.0), c(-0.5, 0.1), c(0.3, 0.3)],
            s: c(0.1, 0.2),
            sz: 0.3,
        };
        let y = st.to_flat();
        let mut dy = vec![1.0; y.len()];
        semiclassical_rhs(&params, &Couplings::Frozen(vec![0.0, 0.0]), 0.0, &y, &mut dy);
        assert!(dy.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pure_cavity_decay() {
        let params = ChainParams::three_cavity(0.0, 0.0, 20.0).with_dissipation(0.3, 0.0);
        let st = SemiclassicalState {
            amps: vec![c(1.5, -0.5), c(0.0, 0.0), c(0.0, 0.0)],
            s: c(0.0, 0.0),
            sz: -0.5,
        };
        let y = st.to_flat();
        let mut dy = vec![0.0; y.len()];
        semiclassical_rhs(&params, &Couplings::Frozen(vec![0.0, 0.0]), 0.0, &y, &mut dy);
        let d = SemiclassicalState::from_flat(&dy);
        assert!((d.amps[0] - (-0.15) * st.amps[0]).norm() < 1e-15);
    }

    #[test]
    fn non_finite_state_is_an_error() {
        let params = ChainParams::three_cavity(0.0, 0.2, 20.0);
        let protocol = PulseProtocol::three_cavity(0.02);
        let mut st = SemiclassicalState::source_filled(3, 20.0);
        st.sz = f64::NAN;
        assert!(matches!(
            eom_rhs(&st, &params, &protocol, 1.0),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn trajectory_csv_layout() {
        let params = ChainParams::three_cavity(REFERENCE_DETUNING, 0.2, 20.0);
        let protocol = PulseProtocol::three_cavity(0.2);
        let st = SemiclassicalState::source_filled(3, 20.0);
        let traj = integrate(&st, &params, &protocol, (0.0, 10.0), &IntegratorOptions::default()).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,ttilde,n_1,n_2,n_3,re_s,im_s,sz,conserved"
        );
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(first.len(), 9);
        assert_eq!(first[0], 0.0);
        assert_eq!(first[2], traj.states[0].amps[0].norm_sqr());
        assert_eq!(text.lines().count(), traj.len() + 1);
        assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*traj.times.last().unwrap(), 10.0);
    }

    #[test]
    fn span_outside_protocol_rejected() {
        let params = ChainParams::three_cavity(REFERENCE_DETUNING, 0.2, 20.0);
        let protocol = PulseProtocol::three_cavity(0.2);
        let st = SemiclassicalState::source_filled(3, 20.0);
        let res = integrate(&st, &params, &protocol, (0.0, protocol.t_end() * 2.0), &IntegratorOptions::default());
        assert!(matches!(res, Err(Error::Invalid(_))));
    }
}
