//! Maximal Lyapunov exponent of the frozen-coupling dynamics around the
//! special stationary branch, by the two-trajectory resetting method, and the
//! resulting chaotic window in `ttilde`.

use std::f64::consts::TAU;
use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csv;
use crate::dynamics::{semiclassical_rhs, Couplings};
use crate::error::{Error, Result};
use crate::model::{ChainParams, PulseProtocol, SemiclassicalState};
use crate::ode::{Dopri5, IntegratorOptions, OdeSystem};
use crate::stationary::{find_ssp, uniform_grid, ContinuationOptions, SpBranch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSettings {
    /// Initial and reset separation in the scaled metric.
    pub delta0: f64,
    /// Interval between resets (units 1/K).
    pub xi: f64,
    pub m_max: usize,
    /// Averaging window for the plateau estimate, in elapsed time `M xi`.
    pub plateau: (f64, f64),
    pub seed: u64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for LyapunovSettings {
    fn default() -> Self {
        Self {
            delta0: 1e-7,
            xi: 0.5,
            m_max: 4000,
            plateau: (500.0, 1500.0),
            seed: 0,
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

impl LyapunovSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.delta0 > 0.0
            && self.delta0.is_finite()
            && self.xi > 0.0
            && self.xi.is_finite()
            && self.m_max > 0
            && self.plateau.0 < self.plateau.1
            && self.plateau.0 >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid Lyapunov settings {self:?}")))
        }
    }

    /// Resolution of a finite-time estimate: `1 / T_1`.
    pub fn resolution(&self) -> f64 {
        1.0 / self.plateau.0.max(self.xi)
    }
}

/// Running estimate `lambda_M = (1/(M xi)) sum_j ln(d_j / delta0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSeries {
    pub ttilde: f64,
    pub times: Vec<f64>,
    pub lambda: Vec<f64>,
    pub settings: LyapunovSettings,
    /// Largest deviation of the post-reset separation from `delta0`.
    pub max_reset_error: f64,
    /// Largest drift of the conserved total over both copies.
    pub max_conservation_drift: f64,
}

impl LyapunovSeries {
    pub fn plateau_mean(&self) -> f64 {
        let (a, b) = self.settings.plateau;
        let sel: Vec<f64> = self
            .times
            .iter()
            .zip(&self.lambda)
            .filter(|(t, _)| **t >= a && **t <= b)
            .map(|(_, l)| *l)
            .collect();
        if sel.is_empty() {
            *self.lambda.last().unwrap_or(&f64::NAN)
        } else {
            sel.iter().sum::<f64>() / sel.len() as f64
        }
    }

    pub fn tail(&self) -> f64 {
        *self.lambda.last().unwrap_or(&f64::NAN)
    }

    /// Columns `KMxi, lambda_M`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        csv::write_header(w, &["KMxi".to_string(), "lambda_M".to_string()])?;
        for (t, l) in self.times.iter().zip(&self.lambda) {
            csv::write_row(w, &[*t, *l])?;
        }
        Ok(())
    }
}

/// Scaled metric weights: cavity components `1/sqrt(N)`, spin components 1.
fn metric_weights(params: &ChainParams) -> Vec<f64> {
    let w = 1.0 / params.n_total.max(1.0).sqrt();
    let mut out = vec![w; 2 * params.n_cavities];
    out.extend([1.0, 1.0, 1.0]);
    out
}

fn metric_norm(diff: impl Iterator<Item = f64>, weights: &[f64]) -> f64 {
    diff.zip(weights).map(|(d, w)| (d * w).powi(2)).sum::<f64>().sqrt()
}

/// Scaled-metric distance between two states.
pub fn state_distance(a: &SemiclassicalState, b: &SemiclassicalState, params: &ChainParams) -> f64 {
    let w = metric_weights(params);
    let (fa, fb) = (a.to_flat(), b.to_flat());
    metric_norm(fa.iter().zip(&fb).map(|(x, y)| x - y), &w)
}

/// Random direction orthogonal (in flat coordinates) to the gradients of the
/// conserved total and of the spin length at `state`, scaled to `size` in the
/// metric.
pub fn constrained_perturbation(
    state: &SemiclassicalState,
    params: &ChainParams,
    size: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let y = state.to_flat();
    let n = y.len();
    let k = params.n_cavities;
    let mut g1 = vec![0.0; n];
    for i in 0..2 * k {
        g1[i] = 2.0 * y[i];
    }
    g1[n - 1] = 1.0;
    let mut g2 = vec![0.0; n];
    g2[n - 3] = 2.0 * y[n - 3];
    g2[n - 2] = 2.0 * y[n - 2];
    g2[n - 1] = 2.0 * y[n - 1];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for g in [g1, g2] {
        let mut g = g;
        for b in &basis {
            let c = dot(&g, b);
            g.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let nrm = dot(&g, &g).sqrt();
        if nrm > 1e-14 {
            g.iter_mut().for_each(|x| *x /= nrm);
            basis.push(g);
        }
    }
    let w = metric_weights(params);
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let m = metric_norm(v.iter().copied(), &w);
        if m > 1e-12 {
            v.iter_mut().for_each(|x| *x *= size / m);
            return v;
        }
    }
}

/// Reference and perturbed copies advanced together so both see the same
/// step sequence.
struct Pair<'a> {
    params: &'a ChainParams,
    couplings: Couplings,
    half: usize,
}

impl OdeSystem for Pair<'_> {
    fn dim(&self) -> usize {
        2 * self.half
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let (y0, y1) = y.split_at(self.half);
        let (d0, d1) = dy.split_at_mut(self.half);
        semiclassical_rhs(self.params, &self.couplings, t, y0, d0);
        semiclassical_rhs(self.params, &self.couplings, t, y1, d1);
    }
}

fn flat_conserved(y: &[f64], k: usize) -> f64 {
    y[..2 * k].iter().map(|v| v * v).sum::<f64>() + y[2 * k + 2] + 0.5
}

/// Two-trajectory estimate with resetting under the couplings frozen at
/// `ttilde`.
pub fn benettin(
    state0: &SemiclassicalState,
    ttilde: f64,
    params: &ChainParams,
    protocol: &PulseProtocol,
    settings: &LyapunovSettings,
) -> Result<LyapunovSeries> {
    settings.validate()?;
    if !state0.is_finite() {
        return Err(Error::NonFinite { t: 0.0 });
    }
    let half = params.flat_dim();
    let k = params.n_cavities;
    let w = metric_weights(params);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let dv = constrained_perturbation(state0, params, settings.delta0, &mut rng);
    let y_ref = state0.to_flat();
    let mut y: Vec<f64> = y_ref.clone();
    y.extend(y_ref.iter().zip(&dv).map(|(a, b)| a + b));

    let sys = Pair {
        params,
        couplings: Couplings::frozen_at(protocol, ttilde),
        half,
    };
    let opts = IntegratorOptions::default().with_tolerances(settings.rtol, settings.atol);
    let mut stepper = Dopri5::new(&sys, 0.0, &y, 1.0, &opts)?;
    let c_ref = flat_conserved(&y[..half], k);
    let c_pert = flat_conserved(&y[half..], k);

    let mut times = Vec::with_capacity(settings.m_max);
    let mut lambda = Vec::with_capacity(settings.m_max);
    let mut sum = 0.0;
    let mut max_reset_error: f64 = 0.0;
    let mut max_drift: f64 = 0.0;
    for j in 1..=settings.m_max {
        let target = j as f64 * settings.xi;
        while stepper.t() < target {
            stepper.step(target)?;
        }
        y.copy_from_slice(stepper.y());
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: target });
        }
        max_drift = max_drift
            .max((flat_conserved(&y[..half], k) - c_ref).abs())
            .max((flat_conserved(&y[half..], k) - c_pert).abs());
        let (a, b) = y.split_at_mut(half);
        let d = metric_norm(a.iter().zip(b.iter()).map(|(p, q)| q - p), &w);
        if !(d > 0.0) {
            return Err(Error::DegenerateSeparation { interval: j });
        }
        sum += (d / settings.delta0).ln();
        times.push(target);
        lambda.push(sum / target);
        let scale = settings.delta0 / d;
        for (p, q) in a.iter().zip(b.iter_mut()) {
            *q = p + scale * (*q - p);
        }
        let d_new = metric_norm(a.iter().zip(b.iter()).map(|(p, q)| q - p), &w);
        max_reset_error = max_reset_error.max((d_new - settings.delta0).abs());
        stepper.set_state(&y);
    }
    Ok(LyapunovSeries {
        ttilde,
        times,
        lambda,
        settings: settings.clone(),
        max_reset_error,
        max_conservation_drift: max_drift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub ttilde: f64,
    /// Mean of `lambda_M` over the plateau window.
    pub plateau: f64,
    /// `lambda_M` at `M_max`.
    pub tail: f64,
}

/// Finite-time maximal exponent at `ttilde`, started at the branch solution.
pub fn lambda_max_at(
    ttilde: f64,
    branch: &SpBranch,
    params: &ChainParams,
    protocol: &PulseProtocol,
    settings: &LyapunovSettings,
) -> Result<LyapunovEstimate> {
    let sp = branch.solution_at(ttilde, params, protocol)?;
    let series = benettin(&sp.to_state(), ttilde, params, protocol, settings)?;
    Ok(LyapunovEstimate {
        ttilde,
        plateau: series.plateau_mean(),
        tail: series.tail(),
    })
}

/// Fine branch grid used before sampling `lambda_max`.
pub const BRANCH_GRID_STEP: f64 = 0.01;

/// `lambda_max` over `grid`; grid points where the branch solution cannot be
/// converged (inside a fold gap) are returned separately.
fn profile(
    params: &ChainParams,
    protocol: &PulseProtocol,
    grid: &[f64],
    settings: &LyapunovSettings,
) -> Result<(Vec<LyapunovEstimate>, Vec<f64>)> {
    let end = grid.iter().cloned().fold(protocol.ttilde_end(), f64::max);
    let branch = find_ssp(
        params,
        protocol,
        &uniform_grid(0.0, end, BRANCH_GRID_STEP),
        &ContinuationOptions::default(),
    )?;
    let res: Vec<Result<Option<LyapunovEstimate>>> = grid
        .par_iter()
        .map(|&t| match lambda_max_at(t, &branch, params, protocol, settings) {
            Ok(e) => Ok(Some(e)),
            Err(Error::NoConvergence { .. } | Error::SingularJacobian { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut out = Vec::with_capacity(grid.len());
    let mut skipped = Vec::new();
    for (t, r) in grid.iter().zip(res) {
        match r? {
            Some(e) => out.push(e),
            None => skipped.push(*t),
        }
    }
    Ok((out, skipped))
}

/// Noise floor of the finite-time estimator: the largest `|lambda|` of the
/// linear (`g = 0`) system over `grid`, but never below the resolution
/// `1/T_1` of the plateau average.
pub fn calibrate_noise_floor(
    params: &ChainParams,
    protocol: &PulseProtocol,
    grid: &[f64],
    settings: &LyapunovSettings,
) -> Result<f64> {
    let linear = params.clone().with_g_terminal(0.0);
    let (prof, _) = profile(&linear, protocol, grid, settings)?;
    let max = prof.iter().map(|e| e.plateau.abs()).fold(0.0, f64::max);
    Ok(max.max(settings.resolution()))
}

/// Multiple of the noise floor above which a point counts as chaotic.
pub const THRESHOLD_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosWindow {
    pub ttilde_left: Option<f64>,
    pub ttilde_right: Option<f64>,
    pub lambda_max_peak: f64,
    pub ttilde_peak: f64,
    pub noise_floor: f64,
    pub threshold: f64,
    pub profile: Vec<LyapunovEstimate>,
    /// Grid points without a converged branch solution.
    pub skipped: Vec<f64>,
}

impl ChaosWindow {
    pub fn is_empty(&self) -> bool {
        self.ttilde_left.is_none()
    }

    pub fn contains(&self, ttilde: f64) -> bool {
        matches!((self.ttilde_left, self.ttilde_right), (Some(l), Some(r)) if l <= ttilde && ttilde <= r)
    }

    /// Columns `ttilde, lambda_max, lambda_tail`.
    pub fn write_profile_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        csv::write_header(
            w,
            &["ttilde", "lambda_max", "lambda_tail"].map(String::from),
        )?;
        for e in &self.profile {
            csv::write_row(w, &[e.ttilde, e.plateau, e.tail])?;
        }
        Ok(())
    }
}

/// Window from a profile: the contiguous above-threshold run containing the
/// peak, edges placed by linear interpolation of the threshold crossing.
pub fn window_from_profile(profile: Vec<LyapunovEstimate>, noise_floor: f64) -> ChaosWindow {
    let threshold = THRESHOLD_FACTOR * noise_floor;
    let (ip, peak) = profile
        .iter()
        .enumerate()
        .map(|(i, e)| (i, e.plateau))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let ttilde_peak = profile.get(ip).map_or(f64::NAN, |e| e.ttilde);
    let mut left = None;
    let mut right = None;
    if !profile.is_empty() && peak >= threshold {
        let above = |i: usize| profile[i].plateau >= threshold;
        let mut lo = ip;
        while lo > 0 && above(lo - 1) {
            lo -= 1;
        }
        let mut hi = ip;
        while hi + 1 < profile.len() && above(hi + 1) {
            hi += 1;
        }
        let cross = |a: &LyapunovEstimate, b: &LyapunovEstimate| {
            let w = (threshold - a.plateau) / (b.plateau - a.plateau);
            a.ttilde + w * (b.ttilde - a.ttilde)
        };
        let l = if lo > 0 {
            cross(&profile[lo - 1], &profile[lo])
        } else {
            profile[lo].ttilde
        };
        let r = if hi + 1 < profile.len() {
            cross(&profile[hi], &profile[hi + 1])
        } else {
            profile[hi].ttilde
        };
        if l < r {
            left = Some(l);
            right = Some(r);
        } else {
            // a single grid point: half a spacing either side
            let h = 0.5 * profile.get(1).map_or(0.0, |p| p.ttilde - profile[0].ttilde);
            left = Some(profile[ip].ttilde - h);
            right = Some(profile[ip].ttilde + h);
        }
    }
    ChaosWindow {
        ttilde_left: left,
        ttilde_right: right,
        lambda_max_peak: peak,
        ttilde_peak,
        noise_floor,
        threshold,
        profile,
        skipped: Vec::new(),
    }
}

/// `lambda_max` profile over `grid` and the chaotic window it implies. A
/// known `noise_floor` skips the linear-system calibration.
pub fn chaos_window(
    params: &ChainParams,
    protocol: &PulseProtocol,
    grid: &[f64],
    settings: &LyapunovSettings,
    noise_floor: Option<f64>,
) -> Result<ChaosWindow> {
    let floor = match noise_floor {
        Some(f) => f,
        None => calibrate_noise_floor(params, protocol, grid, settings)?,
    };
    let (prof, skipped) = profile(params, protocol, grid, settings)?;
    Ok(ChaosWindow {
        skipped,
        ..window_from_profile(prof, floor)
    })
}

/// Occupation-fraction deviation that counts as leaving the branch.
pub const DEPARTURE_FRACTION: f64 = 0.05;

/// First `ttilde` at which a trajectory leaves the stationary branch: some
/// cavity's share of the trajectory's current excitation differs from its
/// share on the branch by more than `fraction`. Using shares keeps the test
/// meaningful when dissipation drains the total.
pub fn branch_departure(
    trajectory: &crate::dynamics::Trajectory,
    branch: &SpBranch,
    fraction: f64,
) -> Option<f64> {
    for (i, state) in trajectory.states.iter().enumerate() {
        let tt = trajectory.ttilde(i);
        let Some(sp) = branch.interpolate(tt) else {
            continue;
        };
        let total = state.conserved_total().max(f64::MIN_POSITIVE);
        let dev = state
            .photon_numbers()
            .iter()
            .zip(sp.photon_numbers())
            .map(|(n, m)| (n / total - m / branch.n_total).abs())
            .fold(0.0, f64::max);
        if dev > fraction {
            return Some(tt);
        }
    }
    None
}

/// One sample of the ensemble cloud; `None` where a phase is undefined.
pub type CloudPoint = Option<(f64, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCloud {
    pub ttilde: f64,
    pub times: Vec<f64>,
    /// `points[i][s]` is `(phi_source - phi_terminal in [0, 2pi), n_source - n_terminal)`.
    pub points: Vec<Vec<CloudPoint>>,
    /// Largest metric distance of any sample from the unperturbed reference
    /// at each output time.
    pub max_deviation: Vec<f64>,
    pub perturbation: f64,
}

impl EnsembleCloud {
    pub fn flagged(&self) -> usize {
        self.points.iter().flatten().filter(|p| p.is_none()).count()
    }

    /// Columns `t, sample_id, phase_diff, n_diff, flagged`; flagged rows carry
    /// `NaN` in place of the undefined values.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        csv::write_header(
            w,
            &["t", "sample_id", "phase_diff", "n_diff", "flagged"].map(String::from),
        )?;
        for (t, row) in self.times.iter().zip(&self.points) {
            for (id, p) in row.iter().enumerate() {
                let (ph, nd, f) = match p {
                    Some((ph, nd)) => (*ph, *nd, 0.0),
                    None => (f64::NAN, f64::NAN, 1.0),
                };
                csv::write_row(w, &[*t, id as f64, ph, nd, f])?;
            }
        }
        Ok(())
    }
}

fn cloud_point(y: &[f64], k: usize, min_amp: f64) -> CloudPoint {
    let (ar, ai) = (y[0], y[1]);
    let (cr, ci) = (y[2 * k - 2], y[2 * k - 1]);
    let (na, nc) = (ar * ar + ai * ai, cr * cr + ci * ci);
    if na.sqrt() < min_amp || nc.sqrt() < min_amp {
        return None;
    }
    let phase = (ai.atan2(ar) - ci.atan2(cr)).rem_euclid(TAU);
    Some((phase, na - nc))
}

/// Evolve `n_samples` constraint-compatible perturbations of the branch
/// solution at `ttilde` under the frozen couplings, recording the cloud at
/// `n_out + 1` evenly spaced times in `[0, horizon]`.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_spread(
    ttilde: f64,
    branch: &SpBranch,
    params: &ChainParams,
    protocol: &PulseProtocol,
    n_samples: usize,
    perturbation: f64,
    horizon: f64,
    n_out: usize,
    seed: u64,
) -> Result<EnsembleCloud> {
    if !(horizon > 0.0) || n_out == 0 || !(perturbation >= 0.0) {
        return Err(Error::Invalid("ensemble needs horizon > 0, n_out > 0, perturbation >= 0".into()));
    }
    let sp = branch.solution_at(ttilde, params, protocol)?;
    let base = sp.to_state();
    let k = params.n_cavities;
    let half = params.flat_dim();
    let w = metric_weights(params);
    let min_amp = 1e-9 * params.n_total.max(0.0).sqrt();
    let times: Vec<f64> = (0..=n_out).map(|i| horizon * i as f64 / n_out as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vec<f64>> = (0..n_samples)
        .map(|_| {
            let dv = constrained_perturbation(&base, params, perturbation, &mut rng);
            base.to_flat().iter().zip(&dv).map(|(a, b)| a + b).collect()
        })
        .collect();
    let couplings = Couplings::frozen_at(protocol, ttilde);
    let opts = IntegratorOptions::default().with_tolerances(1e-10, 1e-12);
    let runs: Vec<Result<Vec<(CloudPoint, f64)>>> = starts
        .par_iter()
        .map(|start| {
            let sys = Pair {
                params,
                couplings: couplings.clone(),
                half,
            };
            let mut y = base.to_flat();
            y.extend_from_slice(start);
            let mut out = Vec::with_capacity(times.len());
            let mut record = |_: f64, y: &[f64]| {
                let d = metric_norm(y[..half].iter().zip(&y[half..]).map(|(p, q)| q - p), &w);
                out.push((cloud_point(&y[half..], k, min_amp), d));
            };
            let mut stepper = Dopri5::new(&sys, 0.0, &y, 1.0, &opts)?;
            record(0.0, &y);
            let mut cursor = 1;
            stepper.advance_to(horizon, &times, &mut cursor, &mut record)?;
            Ok(out)
        })
        .collect();
    let runs: Vec<Vec<(CloudPoint, f64)>> = runs.into_iter().collect::<Result<_>>()?;
    let mut points = vec![Vec::with_capacity(n_samples); times.len()];
    let mut max_deviation = vec![0.0f64; times.len()];
    for run in &runs {
        for (i, (p, d)) in run.iter().enumerate() {
            points[i].push(*p);
            max_deviation[i] = max_deviation[i].max(*d);
        }
    }
    Ok(EnsembleCloud {
        ttilde,
        times,
        points,
        max_deviation,
        perturbation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::REFERENCE_DETUNING;
    use crate::stationary::SpSolution;

    fn setup(g: f64) -> (ChainParams, PulseProtocol) {
        (
            ChainParams::three_cavity(REFERENCE_DETUNING, g, 20.0),
            PulseProtocol::three_cavity(0.0202),
        )
    }

    #[test]
    fn perturbation_is_tangent_to_constraints() {
        let (params, _) = setup(0.2);
        let st = SpSolution {
            ttilde: 0.0,
            amps: vec![3.0, 0.4, -2.0],
            s: 0.3,
            sz: -0.4,
            mu: 0.0,
            residual_norm: 0.0,
        }
        .to_state();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dv = constrained_perturbation(&st, &params, 1e-3, &mut rng);
        let w = metric_weights(&params);
        assert!((metric_norm(dv.iter().copied(), &w) - 1e-3).abs() < 1e-15);
        let y = st.to_flat();
        let n = y.len();
        let dc: f64 = (0..6).map(|i| 2.0 * y[i] * dv[i]).sum::<f64>() + dv[n - 1];
        let ds = 2.0 * (y[n - 3] * dv[n - 3] + y[n - 2] * dv[n - 2] + y[n - 1] * dv[n - 1]);
        assert!(dc.abs() < 1e-15 && ds.abs() < 1e-15, "{dc} {ds}");
    }

    #[test]
    fn resets_restore_delta0() {
        let (params, protocol) = setup(0.2);
        let st = SemiclassicalState::source_filled(3, 20.0);
        let settings = LyapunovSettings {
            m_max: 200,
            ..Default::default()
        };
        let series = benettin(&st, 2.8, &params, &protocol, &settings).unwrap();
        assert_eq!(series.lambda.len(), 200);
        assert!(series.max_reset_error < 1e-12);
        assert!(series.max_conservation_drift < 1e-6 * 20.0);
        assert!(series.lambda.iter().all(|l| l.is_finite()));
        assert!((series.times[199] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn identical_copies_are_degenerate() {
        let (params, protocol) = setup(0.2);
        let st = SemiclassicalState::from_flat(&[3.0, 1.0, 2.0, -1.0, 1.5, 0.5, 0.3, 0.2, -0.3]);
        let settings = LyapunovSettings {
            delta0: 1e-300,
            m_max: 3,
            ..Default::default()
        };
        // an offset this small vanishes when added to O(1) coordinates
        assert!(matches!(
            benettin(&st, 2.0, &params, &protocol, &settings),
            Err(Error::DegenerateSeparation { interval: 1 })
        ));
    }

    #[test]
    fn bad_settings_rejected() {
        let (params, protocol) = setup(0.2);
        let st = SemiclassicalState::source_filled(3, 20.0);
        for s in [
            LyapunovSettings { delta0: 0.0, ..Default::default() },
            LyapunovSettings { xi: -1.0, ..Default::default() },
        ] {
            assert!(matches!(benettin(&st, 2.0, &params, &protocol, &s), Err(Error::Invalid(_))));
        }
    }

    fn est(t: f64, l: f64) -> LyapunovEstimate {
        LyapunovEstimate { ttilde: t, plateau: l, tail: l }
    }

    #[test]
    fn window_edges_interpolated_around_peak_run() {
        let prof = vec![
            est(0.0, 0.0),
            est(1.0, 0.01),
            est(2.0, 0.0),
            est(3.0, 0.0),
            est(4.0, 0.04),
            est(5.0, 0.05),
            est(6.0, 0.0),
        ];
        let w = window_from_profile(prof, 0.01 / 3.0);
        assert!((w.ttilde_left.unwrap() - 3.25).abs() < 1e-12);
        assert!((w.ttilde_right.unwrap() - 5.8).abs() < 1e-12);
        assert_eq!(w.lambda_max_peak, 0.05);
        assert_eq!(w.ttilde_peak, 5.0);
        assert!(w.contains(4.5) && !w.contains(1.0));
    }

    #[test]
    fn flat_profile_has_no_window() {
        let prof = (0..10).map(|i| est(i as f64, 1e-4)).collect();
        let w = window_from_profile(prof, 0.002);
        assert!(w.is_empty());
        assert!(w.lambda_max_peak < w.threshold);
    }

    #[test]
    fn phase_difference_wrapped_and_flagged() {
        // a = 1 (phase 0), c = i (phase pi/2): difference -pi/2 -> 3pi/2
        let y = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -0.5];
        let (ph, nd) = cloud_point(&y, 3, 1e-9).unwrap();
        assert!((ph - 1.5 * std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(nd, 0.0);
        let y = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -0.5];
        assert!(cloud_point(&y, 3, 1e-9).is_none());
    }
}
