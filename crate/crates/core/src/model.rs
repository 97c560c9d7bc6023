//! Chain parameters, the Gaussian tunnelling protocol and the semiclassical
//! phase-space point.
//!
//! All frequencies and rates are in units of the pulse amplitude `K`, all
//! times in units of `1/K`. The protocol coordinate is `ttilde = t / tau`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pulse centres `t_i / tau` of the three-cavity protocol, source bond first.
pub const THREE_CAVITY_CENTERS: [f64; 2] = [3.697, 2.4242];

/// Gap between neighbouring pulse centres of the three-cavity protocol.
pub const CENTER_SPACING: f64 = THREE_CAVITY_CENTERS[0] - THREE_CAVITY_CENTERS[1];

/// Interior-cavity detuning (units of K) under which the stationary states
/// quoted for the `g_c = 0.2K` three-cavity chain are reproduced.
pub const REFERENCE_DETUNING: f64 = 0.5;

/// Total excitation used throughout the reference runs.
pub const REFERENCE_EXCITATION: f64 = 20.0;

/// Static model parameters of an `n`-cavity chain with one qubit in the
/// terminal cavity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub n_cavities: usize,
    /// Per-cavity frequency offset from the rotating frame.
    pub detuning: Vec<f64>,
    /// Per-cavity light-matter coupling. Only the terminal entry may be nonzero.
    pub g: Vec<f64>,
    /// Conserved total excitation `sum n_i + sz + 1/2`.
    #[serde(rename = "N")]
    pub n_total: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub gamma: f64,
}

impl ChainParams {
    /// Chain whose interior cavities share the detuning `delta` and whose
    /// terminal cavity couples to the qubit with strength `g_terminal`.
    pub fn chain(n_cavities: usize, delta: f64, g_terminal: f64, n_total: f64) -> Self {
        let mut detuning = vec![0.0; n_cavities];
        let mut g = vec![0.0; n_cavities];
        if n_cavities >= 2 {
            for d in &mut detuning[1..n_cavities - 1] {
                *d = delta;
            }
        }
        if let Some(last) = g.last_mut() {
            *last = g_terminal;
        }
        Self {
            n_cavities,
            detuning,
            g,
            n_total,
            kappa: 0.0,
            gamma: 0.0,
        }
    }

    /// Three-cavity chain `[0, delta, 0]` with `g = [0, 0, g_c]`.
    pub fn three_cavity(delta: f64, g_c: f64, n_total: f64) -> Self {
        Self::chain(3, delta, g_c, n_total)
    }

    pub fn with_dissipation(mut self, kappa: f64, gamma: f64) -> Self {
        self.kappa = kappa;
        self.gamma = gamma;
        self
    }

    pub fn with_g_terminal(mut self, g_terminal: f64) -> Self {
        if let Some(last) = self.g.last_mut() {
            *last = g_terminal;
        }
        self
    }

    /// Coupling of the terminal cavity to the qubit.
    pub fn g_terminal(&self) -> f64 {
        self.g.last().copied().unwrap_or(0.0)
    }

    /// Qubit detuning; the qubit is resonant with the cavity that hosts it.
    pub fn qubit_detuning(&self) -> f64 {
        self.detuning.last().copied().unwrap_or(0.0)
    }

    pub fn is_hermitian(&self) -> bool {
        self.kappa == 0.0 && self.gamma == 0.0
    }

    /// Length of the flat real state vector: `(Re, Im)` per cavity, `(Re, Im)`
    /// of the qubit coherence and the inversion.
    pub fn flat_dim(&self) -> usize {
        2 * self.n_cavities + 3
    }
}

/// Gaussian tunnelling pulses `J_i(t) = K exp(-((t - c_i tau) / tau)^2)`, one
/// per bond, bond 0 joining the source to its neighbour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseProtocol {
    #[serde(rename = "K", default = "default_amplitude")]
    pub amplitude: f64,
    pub tau: f64,
    /// Dimensionless pulse centres `t_i / tau`.
    pub centers: Vec<f64>,
    /// Dimensionless end time; `max(centers) + 3` when absent.
    #[serde(default)]
    pub t_end_factor: Option<f64>,
    /// Require the counter-intuitive ordering (terminal bond first).
    #[serde(default = "default_true")]
    pub counter_intuitive: bool,
}

fn default_amplitude() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl PulseProtocol {
    pub fn new(tau: f64, centers: Vec<f64>) -> Self {
        Self {
            amplitude: 1.0,
            tau,
            centers,
            t_end_factor: None,
            counter_intuitive: true,
        }
    }

    /// Three-cavity counter-intuitive protocol at sweep rate `1/tau`.
    pub fn three_cavity(sweep_rate: f64) -> Self {
        Self::new(1.0 / sweep_rate, THREE_CAVITY_CENTERS.to_vec())
    }

    /// Counter-intuitive protocol for `n_cavities`: the terminal bond peaks at
    /// the three-cavity `t_2` and each bond closer to the source peaks one
    /// [`CENTER_SPACING`] later.
    pub fn chain(n_cavities: usize, sweep_rate: f64) -> Self {
        let bonds = n_cavities.saturating_sub(1);
        let last = THREE_CAVITY_CENTERS[1];
        let centers = (0..bonds)
            .map(|i| last + CENTER_SPACING * (bonds - 1 - i) as f64)
            .collect();
        Self::new(1.0 / sweep_rate, centers)
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        Self {
            tau,
            ..self.clone()
        }
    }

    pub fn with_sweep_rate(&self, sweep_rate: f64) -> Self {
        self.with_tau(1.0 / sweep_rate)
    }

    pub fn sweep_rate(&self) -> f64 {
        1.0 / self.tau
    }

    pub fn bonds(&self) -> usize {
        self.centers.len()
    }

    pub fn ttilde_end(&self) -> f64 {
        self.t_end_factor.unwrap_or_else(|| {
            self.centers.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0
        })
    }

    pub fn t_end(&self) -> f64 {
        self.ttilde_end() * self.tau
    }

    pub fn ttilde(&self, t: f64) -> f64 {
        t / self.tau
    }

    /// `J_bond(t)`.
    pub fn pulse_value(&self, bond: usize, t: f64) -> Result<f64> {
        let center = self.centers.get(bond).ok_or(Error::InvalidBond {
            bond,
            bonds: self.bonds(),
        })?;
        Ok(self.gaussian(*center, t / self.tau))
    }

    /// All bond couplings at protocol coordinate `ttilde`.
    pub fn couplings_at_ttilde(&self, ttilde: f64) -> Vec<f64> {
        self.centers.iter().map(|&c| self.gaussian(c, ttilde)).collect()
    }

    pub fn fill_couplings(&self, t: f64, out: &mut [f64]) {
        let tt = t / self.tau;
        for (o, &c) in out.iter_mut().zip(&self.centers) {
            *o = self.gaussian(c, tt);
        }
    }

    #[inline]
    fn gaussian(&self, center: f64, ttilde: f64) -> f64 {
        let x = ttilde - center;
        self.amplitude * (-x * x).exp()
    }

    /// STIRAP mixing angle `theta` with `cos(theta) = J_2 / sqrt(J_1^2 + J_2^2)`.
    pub fn mixing_angle(&self, t: f64) -> Result<f64> {
        if self.bonds() != 2 {
            return Err(Error::NotThreeCavity {
                bonds: self.bonds(),
            });
        }
        let j1 = self.pulse_value(0, t)?;
        let j2 = self.pulse_value(1, t)?;
        mixing_angle_from(j1, j2).ok_or(Error::MixingAngleUndefined { t })
    }
}

/// `theta = atan2(J_1, J_2)`, or `None` when both couplings vanish.
pub fn mixing_angle_from(j1: f64, j2: f64) -> Option<f64> {
    if j1.hypot(j2) == 0.0 {
        None
    } else {
        Some(j1.atan2(j2))
    }
}

/// Semiclassical phase-space point: cavity amplitudes, qubit coherence
/// `<s^->` and inversion `<s^z>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiclassicalState {
    pub amps: Vec<Complex64>,
    pub s: Complex64,
    pub sz: f64,
}

impl SemiclassicalState {
    /// All photons in the source cavity, qubit in its ground state.
    pub fn source_filled(n_cavities: usize, n_photons: f64) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); n_cavities];
        amps[0] = Complex64::new(n_photons.sqrt(), 0.0);
        Self {
            amps,
            s: Complex64::new(0.0, 0.0),
            sz: -0.5,
        }
    }

    pub fn n_cavities(&self) -> usize {
        self.amps.len()
    }

    pub fn photon_numbers(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn photon_total(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `sum n_i + sz + 1/2`.
    pub fn conserved_total(&self) -> f64 {
        self.photon_total() + self.sz + 0.5
    }

    /// `|s|^2 + sz^2`, equal to 1/4 for a pure spin.
    pub fn spin_length_sq(&self) -> f64 {
        self.s.norm_sqr() + self.sz * self.sz
    }

    pub fn is_finite(&self) -> bool {
        self.amps.iter().all(|a| a.re.is_finite() && a.im.is_finite())
            && self.s.re.is_finite()
            && self.s.im.is_finite()
            && self.sz.is_finite()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 * self.amps.len() + 3);
        for a in &self.amps {
            y.push(a.re);
            y.push(a.im);
        }
        y.push(self.s.re);
        y.push(self.s.im);
        y.push(self.sz);
        y
    }

    pub fn from_flat(y: &[f64]) -> Self {
        let n = (y.len() - 3) / 2;
        let amps = (0..n)
            .map(|i| Complex64::new(y[2 * i], y[2 * i + 1]))
            .collect();
        Self {
            amps,
            s: Complex64::new(y[2 * n], y[2 * n + 1]),
            sz: y[2 * n + 2],
        }
    }

    /// Multiply every amplitude and the coherence by `e^{i phi}`.
    pub fn rotate_phase(&self, phi: f64) -> Self {
        let r = Complex64::from_polar(1.0, phi);
        Self {
            amps: self.amps.iter().map(|a| a * r).collect(),
            s: self.s * r,
            sz: self.sz,
        }
    }
}

/// `sum |amp_i|^2 + sz + 1/2`.
pub fn conserved_total(state: &SemiclassicalState) -> f64 {
    state.conserved_total()
}

/// One violated invariant, keyed by the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Collects every invariant violation of `params` and `protocol`.
pub fn validate(params: &ChainParams, protocol: &PulseProtocol) -> Result<(), Vec<Diagnostic>> {
    let mut out = Vec::new();
    let n = params.n_cavities;
    if n < 3 {
        out.push(Diagnostic::new("n_cavities", "n_cavities >= 3 violated"));
    }
    if params.detuning.len() != n {
        out.push(Diagnostic::new(
            "detuning",
            format!("length {} != n_cavities {}", params.detuning.len(), n),
        ));
    }
    if params.detuning.iter().any(|d| !d.is_finite()) {
        out.push(Diagnostic::new("detuning", "entries must be finite"));
    }
    if params.g.len() != n {
        out.push(Diagnostic::new(
            "g",
            format!("length {} != n_cavities {}", params.g.len(), n),
        ));
    } else if params
        .g
        .iter()
        .take(n.saturating_sub(1))
        .any(|&g| g != 0.0)
    {
        out.push(Diagnostic::new(
            "g",
            "only the terminal cavity may host the qubit (non-terminal g must be 0)",
        ));
    }
    if params.g.iter().any(|g| !g.is_finite()) {
        out.push(Diagnostic::new("g", "entries must be finite"));
    }
    if !(params.n_total > 0.0 && params.n_total.is_finite()) {
        out.push(Diagnostic::new("N", "N > 0 violated"));
    }
    if !(params.kappa >= 0.0) {
        out.push(Diagnostic::new("kappa", "kappa >= 0 violated"));
    }
    if !(params.gamma >= 0.0) {
        out.push(Diagnostic::new("gamma", "gamma >= 0 violated"));
    }
    if !(protocol.tau > 0.0 && protocol.tau.is_finite()) {
        out.push(Diagnostic::new("tau", "tau > 0 violated"));
    }
    if !(protocol.amplitude > 0.0 && protocol.amplitude.is_finite()) {
        out.push(Diagnostic::new("K", "K > 0 violated"));
    }
    if protocol.centers.len() + 1 != n {
        out.push(Diagnostic::new(
            "centers",
            format!(
                "length {} != n_cavities - 1 = {}",
                protocol.centers.len(),
                n.saturating_sub(1)
            ),
        ));
    }
    if protocol.centers.iter().any(|c| !c.is_finite()) {
        out.push(Diagnostic::new("centers", "entries must be finite"));
    }
    if protocol.counter_intuitive && protocol.centers.windows(2).any(|w| w[0] <= w[1]) {
        out.push(Diagnostic::new(
            "centers",
            "counter-intuitive ordering violated: centers must strictly decrease from source bond to terminal bond",
        ));
    }
    if let Some(end) = protocol.t_end_factor {
        if !(end > 0.0 && end.is_finite()) {
            out.push(Diagnostic::new("t_end_factor", "t_end_factor > 0 violated"));
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
