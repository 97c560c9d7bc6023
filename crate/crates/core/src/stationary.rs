//! Stationary points of the frozen-coupling semiclassical equations and
//! continuation of the special branch that carries the excitation from the
//! source to the terminal cavity.
//!
//! At resonance every phase can be gauged to 0 or pi, so a stationary point
//! is described by real cavity amplitudes `x_1..x_k`, a real coherence `s`,
//! the inversion `sz` and the chemical potential `mu`; the state then evolves
//! as `e^{-i mu t}` times a constant. The unknown vector is
//! `[x_1, .., x_k, s, sz, mu]` and the residual has the same length.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::csv;
use crate::error::{Error, Result};
use crate::model::{ChainParams, PulseProtocol, SemiclassicalState};

/// A converged stationary point at protocol coordinate `ttilde`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpSolution {
    pub ttilde: f64,
    pub amps: Vec<f64>,
    pub s: f64,
    pub sz: f64,
    pub mu: f64,
    pub residual_norm: f64,
}

impl SpSolution {
    /// Source cavity filled with `n_total` photons, qubit in the ground state.
    pub fn source_seed(n_cavities: usize, n_total: f64, ttilde: f64) -> Self {
        let mut amps = vec![0.0; n_cavities];
        amps[0] = n_total.max(0.0).sqrt();
        Self {
            ttilde,
            amps,
            s: 0.0,
            sz: -0.5,
            mu: 0.0,
            residual_norm: f64::NAN,
        }
    }

    /// Gauge-rotate a complex state so the source amplitude is real and
    /// non-negative, then keep the real parts.
    pub fn from_state(state: &SemiclassicalState, mu: f64, ttilde: f64) -> Self {
        let phase = if state.amps[0].norm() > 0.0 {
            -state.amps[0].arg()
        } else {
            0.0
        };
        let r = state.rotate_phase(phase);
        Self {
            ttilde,
            amps: r.amps.iter().map(|z| z.re).collect(),
            s: r.s.re,
            sz: r.sz,
            mu,
            residual_norm: f64::NAN,
        }
    }

    pub fn n_cavities(&self) -> usize {
        self.amps.len()
    }

    pub fn unknowns(&self) -> Vec<f64> {
        let mut x = self.amps.clone();
        x.extend([self.s, self.sz, self.mu]);
        x
    }

    fn from_unknowns(x: &[f64], ttilde: f64, residual_norm: f64) -> Self {
        let k = x.len() - 3;
        Self {
            ttilde,
            amps: x[..k].to_vec(),
            s: x[k],
            sz: x[k + 1],
            mu: x[k + 2],
            residual_norm,
        }
    }

    pub fn photon_numbers(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a * a).collect()
    }

    pub fn conserved_total(&self) -> f64 {
        self.amps.iter().map(|a| a * a).sum::<f64>() + self.sz + 0.5
    }

    pub fn spin_length_sq(&self) -> f64 {
        self.s * self.s + self.sz * self.sz
    }

    /// Excitation that can end up in the terminal cavity: `N - 1/2 - sz`.
    pub fn transferable(&self) -> f64 {
        self.conserved_total() - 0.5 - self.sz
    }

    pub fn to_state(&self) -> SemiclassicalState {
        SemiclassicalState {
            amps: self.amps.iter().map(|&a| Complex64::new(a, 0.0)).collect(),
            s: Complex64::new(self.s, 0.0),
            sz: self.sz,
        }
    }

    /// Distance used for the continuation trust region: amplitudes scaled by
    /// `1/sqrt(N)`, spin components as is, `mu` ignored.
    pub fn distance(&self, other: &SpSolution, n_total: f64) -> f64 {
        let scale = 1.0 / n_total.max(1.0).sqrt();
        let amp = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).abs() * scale)
            .fold(0.0, f64::max);
        amp.max((self.s - other.s).abs()).max((self.sz - other.sz).abs())
    }
}

/// Stationary residuals for unknowns `x` with couplings `j`.
///
/// Cavity rows read `(mu - D_j) x_j + sum J x_neighbour` (minus `g s` on the
/// terminal cavity), written with the opposite overall sign on interior
/// cavities. The qubit row is `2 g c sz + (mu - D_q) s`, followed by the two
/// constraints. With `g = 0` the qubit row degenerates and is replaced by `s`.
pub fn residual_with_couplings(x: &[f64], j: &[f64], params: &ChainParams, out: &mut [f64]) {
    let k = params.n_cavities;
    let (s, sz, mu) = (x[k], x[k + 1], x[k + 2]);
    let g = params.g_terminal();
    for i in 0..k {
        let mut r = (mu - params.detuning[i]) * x[i];
        if i > 0 {
            r += j[i - 1] * x[i - 1];
        }
        if i + 1 < k {
            r += j[i] * x[i + 1];
        }
        if i + 1 == k {
            r -= g * s;
        }
        out[i] = if i > 0 && i + 1 < k { -r } else { r };
    }
    out[k] = if g == 0.0 {
        s
    } else {
        2.0 * g * x[k - 1] * sz + (mu - params.qubit_detuning()) * s
    };
    out[k + 1] = x[..k].iter().map(|a| a * a).sum::<f64>() + sz + 0.5 - params.n_total;
    out[k + 2] = s * s + sz * sz - 0.25;
}

/// Residual vector of a candidate at `ttilde`.
pub fn sp_residual(
    candidate: &SpSolution,
    ttilde: f64,
    params: &ChainParams,
    protocol: &PulseProtocol,
) -> Vec<f64> {
    let j = protocol.couplings_at_ttilde(ttilde);
    let x = candidate.unknowns();
    let mut r = vec![0.0; x.len()];
    residual_with_couplings(&x, &j, params, &mut r);
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Convergence when the residual max-norm drops below `tol * max(N, 1)`.
    pub tol: f64,
    pub min_damping: f64,
    pub fd_step: f64,
    pub max_condition: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-10,
            min_damping: 1.0 / (1u64 << 20) as f64,
            fd_step: 1e-6,
            max_condition: 1e15,
        }
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn condition_number(j: &DMatrix<f64>) -> f64 {
    let sv = j.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Central-difference Jacobian. The stationary residuals are at most
/// quadratic, for which central differences are exact up to rounding.
fn jacobian<F: Fn(&[f64], &mut [f64])>(f: &F, x: &[f64], m: usize, h: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    for c in 0..n {
        let hc = h * x[c].abs().max(1.0);
        xp[c] = x[c] + hc;
        f(&xp, &mut fp);
        xp[c] = x[c] - hc;
        f(&xp, &mut fm);
        xp[c] = x[c];
        for r in 0..m {
            jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * hc);
        }
    }
    jac
}

/// Damped Newton on a square system. Returns the root and its residual
/// max-norm.
fn newton<F: Fn(&[f64], &mut [f64])>(
    f: F,
    x0: &[f64],
    tol: f64,
    opts: &NewtonOptions,
) -> Result<(Vec<f64>, f64)> {
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite Newton guess".into()));
    }
    let m = x0.len();
    let mut x = x0.to_vec();
    let mut r = vec![0.0; m];
    f(&x, &mut r);
    let mut xt = vec![0.0; m];
    let mut rt = vec![0.0; m];
    for _ in 0..opts.max_iter {
        let res = max_norm(&r);
        let jac = jacobian(&f, &x, m, opts.fd_step);
        let dx = jac.clone().lu().solve(&DVector::from_column_slice(&r));
        let dx = match dx {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => {
                return Err(Error::SingularJacobian {
                    condition: condition_number(&jac),
                })
            }
        };
        if res < tol {
            // one polishing step, kept only if it helps
            for i in 0..m {
                xt[i] = x[i] - dx[i];
            }
            f(&xt, &mut rt);
            if max_norm(&rt) < res {
                return Ok((xt, max_norm(&rt)));
            }
            return Ok((x, res));
        }
        let cond = condition_number(&jac);
        if !(cond < opts.max_condition) {
            return Err(Error::SingularJacobian { condition: cond });
        }
        let base = norm2(&r);
        let mut lam = 1.0;
        loop {
            for i in 0..m {
                xt[i] = x[i] - lam * dx[i];
            }
            f(&xt, &mut rt);
            if rt.iter().all(|v| v.is_finite()) && norm2(&rt) < base {
                break;
            }
            lam *= 0.5;
            if lam < opts.min_damping {
                return Err(Error::NoConvergence {
                    iterations: opts.max_iter,
                    residual: res,
                });
            }
        }
        std::mem::swap(&mut x, &mut xt);
        std::mem::swap(&mut r, &mut rt);
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: max_norm(&r),
    })
}

fn tolerance(params: &ChainParams, opts: &NewtonOptions) -> f64 {
    opts.tol * params.n_total.max(1.0)
}

/// Newton-solve the stationary equations at `ttilde` starting from `guess`.
pub fn solve_sp(
    guess: &SpSolution,
    ttilde: f64,
    params: &ChainParams,
    protocol: &PulseProtocol,
) -> Result<SpSolution> {
    solve_sp_with(guess, ttilde, params, protocol, &NewtonOptions::default())
}

pub fn solve_sp_with(
    guess: &SpSolution,
    ttilde: f64,
    params: &ChainParams,
    protocol: &PulseProtocol,
    opts: &NewtonOptions,
) -> Result<SpSolution> {
    if guess.n_cavities() != params.n_cavities {
        return Err(Error::DimensionMismatch {
            expected: params.n_cavities,
            got: guess.n_cavities(),
        });
    }
    let j = protocol.couplings_at_ttilde(ttilde);
    let (x, res) = newton(
        |x: &[f64], out: &mut [f64]| residual_with_couplings(x, &j, params, out),
        &guess.unknowns(),
        tolerance(params, opts),
        opts,
    )?;
    Ok(SpSolution::from_unknowns(&x, ttilde, res))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    /// Largest accepted step-to-step distance (see [`SpSolution::distance`]).
    pub trust: f64,
    /// Smallest `ttilde` step before falling back to pseudo-arclength.
    pub min_step: f64,
    /// When the branch folds back, look for the continuation on the far
    /// side of the fold instead of giving up. Narrow nonlinear avoided
    /// crossings late in the protocol produce such folds.
    pub jump_folds: bool,
    /// Largest distance accepted for a fold jump.
    pub jump_trust: f64,
    pub newton: NewtonOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            trust: 0.1,
            min_step: 1e-4,
            jump_folds: true,
            jump_trust: 0.5,
            newton: NewtonOptions::default(),
        }
    }
}

/// Outcome of the terminal and dark-state checks on a candidate SSP branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SspCheck {
    /// `n_terminal / (N - 1/2 - sz)` at the last branch point.
    pub terminal_fraction: f64,
    /// Largest interior-cavity occupation along the branch.
    pub max_intermediate: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpBranch {
    pub label: String,
    pub n_total: f64,
    pub points: Vec<SpSolution>,
    /// Step-to-step distance into each point (0 for the first).
    pub steps: Vec<f64>,
    /// `ttilde` values reached by jumping across a fold.
    pub jumps: Vec<f64>,
    pub ssp: Option<SspCheck>,
}

impl SpBranch {
    /// Largest step-to-step distance.
    pub fn continuity(&self) -> f64 {
        self.steps.iter().cloned().fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ttildes(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.ttilde).collect()
    }

    pub fn first(&self) -> &SpSolution {
        &self.points[0]
    }

    pub fn last(&self) -> &SpSolution {
        self.points.last().expect("branch has at least the seed")
    }

    /// Linear interpolation of the unknowns; `None` outside the branch.
    pub fn interpolate(&self, ttilde: f64) -> Option<SpSolution> {
        let idx = self.points.partition_point(|p| p.ttilde < ttilde);
        if idx < self.points.len() && self.points[idx].ttilde == ttilde {
            return Some(self.points[idx].clone());
        }
        if idx == 0 || idx == self.points.len() {
            return None;
        }
        let (a, b) = (&self.points[idx - 1], &self.points[idx]);
        let w = (ttilde - a.ttilde) / (b.ttilde - a.ttilde);
        let x: Vec<f64> = a
            .unknowns()
            .iter()
            .zip(b.unknowns())
            .map(|(p, q)| p + w * (q - p))
            .collect();
        Some(SpSolution::from_unknowns(&x, ttilde, f64::NAN))
    }

    /// Converged branch solution at an arbitrary `ttilde` inside the branch.
    /// Newton starts from the interpolated point, then from each neighbour.
    pub fn solution_at(
        &self,
        ttilde: f64,
        params: &ChainParams,
        protocol: &PulseProtocol,
    ) -> Result<SpSolution> {
        let guess = self.interpolate(ttilde).ok_or_else(|| {
            Error::Invalid(format!("ttilde {ttilde} outside the branch range"))
        })?;
        if guess.residual_norm.is_finite() {
            return Ok(guess);
        }
        let idx = self.points.partition_point(|p| p.ttilde < ttilde);
        let mut err = match solve_sp(&guess, ttilde, params, protocol) {
            Ok(sol) => return Ok(sol),
            Err(e) => e,
        };
        for p in [&self.points[idx - 1], &self.points[idx]] {
            match solve_sp(p, ttilde, params, protocol) {
                Ok(sol) => return Ok(sol),
                Err(e) => err = e,
            }
        }
        Err(err)
    }

    /// Columns `ttilde, n_1..n_k, s, sz, mu, residual_norm, continuity`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let k = self.points.first().map_or(0, |p| p.n_cavities());
        let mut header = vec!["ttilde".to_string()];
        header.extend((1..=k).map(|i| format!("n_{i}")));
        header.extend(["s", "sz", "mu", "residual_norm", "continuity"].map(String::from));
        csv::write_header(w, &header)?;
        for (p, d) in self.points.iter().zip(&self.steps) {
            let mut row = vec![p.ttilde];
            row.extend(p.photon_numbers());
            row.extend([p.s, p.sz, p.mu, p.residual_norm, *d]);
            csv::write_row(w, &row)?;
        }
        Ok(())
    }
}

struct Tracker<'a> {
    params: &'a ChainParams,
    protocol: &'a PulseProtocol,
    opts: &'a ContinuationOptions,
    points: Vec<SpSolution>,
    steps: Vec<f64>,
    jumps: Vec<f64>,
}

impl Tracker<'_> {
    fn current(&self) -> &SpSolution {
        self.points.last().unwrap()
    }

    fn predict(&self, t: f64) -> SpSolution {
        let cur = self.current();
        if self.points.len() < 2 || self.jumps.last() == Some(&cur.ttilde) {
            return SpSolution { ttilde: t, ..cur.clone() };
        }
        let prev = &self.points[self.points.len() - 2];
        let w = (t - cur.ttilde) / (cur.ttilde - prev.ttilde);
        let x: Vec<f64> = cur
            .unknowns()
            .iter()
            .zip(prev.unknowns())
            .map(|(c, p)| c + w * (c - p))
            .collect();
        SpSolution::from_unknowns(&x, t, f64::NAN)
    }

    fn accept(&mut self, sol: SpSolution) {
        let d = sol.distance(self.current(), self.params.n_total);
        self.points.push(sol);
        self.steps.push(d);
    }

    fn try_step(&self, t: f64) -> Option<SpSolution> {
        let guess = self.predict(t);
        let sol = solve_sp_with(&guess, t, self.params, self.protocol, &self.opts.newton).ok()?;
        let d = sol.distance(self.current(), self.params.n_total);
        (d <= self.opts.trust).then_some(sol)
    }

    /// Pseudo-arclength step of length `ds` along the secant direction in
    /// `(unknowns, ttilde)` space. Succeeds only if `ttilde` still advances.
    fn arclength(&self, ds: f64) -> Option<SpSolution> {
        if self.points.len() < 2 {
            return None;
        }
        let cur = self.current();
        let prev = &self.points[self.points.len() - 2];
        let mut y0 = cur.unknowns();
        y0.push(cur.ttilde);
        let mut yp = prev.unknowns();
        yp.push(prev.ttilde);
        let mut v: Vec<f64> = y0.iter().zip(&yp).map(|(a, b)| a - b).collect();
        let nv = norm2(&v);
        if nv == 0.0 {
            return None;
        }
        v.iter_mut().for_each(|c| *c /= nv);
        let pred: Vec<f64> = y0.iter().zip(&v).map(|(a, b)| a + ds * b).collect();
        let m = pred.len();
        let params = self.params;
        let protocol = self.protocol;
        let f = |y: &[f64], out: &mut [f64]| {
            let j = protocol.couplings_at_ttilde(y[m - 1]);
            residual_with_couplings(&y[..m - 1], &j, params, &mut out[..m - 1]);
            out[m - 1] = y.iter().zip(&pred).zip(&v).map(|((a, b), c)| (a - b) * c).sum();
        };
        let (y, res) = newton(f, &pred, tolerance(params, &self.opts.newton), &self.opts.newton).ok()?;
        let t = y[m - 1];
        if t <= cur.ttilde {
            return None;
        }
        let sol = SpSolution::from_unknowns(&y[..m - 1], t, res);
        (sol.distance(cur, params.n_total) <= self.opts.trust).then_some(sol)
    }

    /// Zeroth-order guesses at growing distances past the fold.
    fn jump(&self, limit: f64) -> Option<SpSolution> {
        let cur = self.current();
        let mut dt = 0.005;
        while dt <= 0.2 {
            let t = (cur.ttilde + dt).min(limit);
            let guess = SpSolution { ttilde: t, ..cur.clone() };
            if let Ok(sol) = solve_sp_with(&guess, t, self.params, self.protocol, &self.opts.newton) {
                if sol.distance(cur, self.params.n_total) <= self.opts.jump_trust {
                    return Some(sol);
                }
            }
            if t >= limit {
                break;
            }
            dt *= 2.0;
        }
        None
    }

    fn advance_to(&mut self, target: f64, limit: f64) -> Result<()> {
        let mut h = target - self.current().ttilde;
        while self.current().ttilde < target {
            let t_cur = self.current().ttilde;
            let t = (t_cur + h).min(target);
            if let Some(sol) = self.try_step(t) {
                self.accept(sol);
                // regrow towards the remaining interval after refinement
                h = (2.0 * h).min(target - self.current().ttilde);
                continue;
            }
            h *= 0.5;
            if h < self.opts.min_step {
                match self.arclength(self.opts.min_step) {
                    Some(sol) if sol.ttilde <= target => {
                        self.accept(sol);
                        h = self.opts.min_step;
                    }
                    _ => match self.jump(limit).filter(|_| self.opts.jump_folds) {
                        Some(sol) => {
                            self.jumps.push(sol.ttilde);
                            self.accept(sol);
                            h = (target - self.current().ttilde).max(self.opts.min_step);
                        }
                        None => return Err(Error::BranchLost { last_good: t_cur }),
                    },
                }
            }
        }
        Ok(())
    }
}

/// Predictor-corrector continuation of `seed` over increasing `ttilde_grid`
/// values beyond the seed. Refinement points are kept in the branch.
pub fn continue_branch(
    seed: &SpSolution,
    ttilde_grid: &[f64],
    params: &ChainParams,
    protocol: &PulseProtocol,
    opts: &ContinuationOptions,
) -> Result<SpBranch> {
    if !seed.residual_norm.is_finite() || seed.residual_norm > tolerance(params, &opts.newton) {
        return Err(Error::Invalid("continuation seed is not a converged solution".into()));
    }
    let mut tr = Tracker {
        params,
        protocol,
        opts,
        points: vec![seed.clone()],
        steps: vec![0.0],
        jumps: Vec::new(),
    };
    let limit = ttilde_grid.iter().cloned().fold(seed.ttilde, f64::max);
    for &t in ttilde_grid.iter().filter(|&&t| t > seed.ttilde) {
        if t > tr.current().ttilde {
            tr.advance_to(t, limit)?;
        }
    }
    Ok(SpBranch {
        label: String::from("branch"),
        n_total: params.n_total,
        points: tr.points,
        steps: tr.steps,
        jumps: tr.jumps,
        ssp: None,
    })
}

/// Evenly spaced grid from 0 to the protocol end with roughly `step` spacing.
pub fn default_grid(protocol: &PulseProtocol, step: f64) -> Vec<f64> {
    uniform_grid(0.0, protocol.ttilde_end(), step)
}

/// Evenly spaced grid covering `[start, end]` with spacing at most `step`.
pub fn uniform_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step).ceil().max(1.0) as usize;
    (0..=n).map(|i| start + (end - start) * i as f64 / n as f64).collect()
}

/// Fraction of `N` allowed in interior cavities along a dark-state branch.
pub const NEGLIGIBLE_INTERMEDIATE: f64 = 0.02;
/// Required terminal share of the transferable excitation at the branch end.
pub const TERMINAL_FRACTION: f64 = 0.99;

/// Seed at the source-filled state at the first grid point, continue over the
/// grid and check the dark-state character of the branch.
pub fn find_ssp(
    params: &ChainParams,
    protocol: &PulseProtocol,
    ttilde_grid: &[f64],
    opts: &ContinuationOptions,
) -> Result<SpBranch> {
    let t0 = ttilde_grid.first().copied().unwrap_or(0.0);
    let guess = SpSolution::source_seed(params.n_cavities, params.n_total, t0);
    let seed = solve_sp_with(&guess, t0, params, protocol, &opts.newton)?;
    let mut branch = continue_branch(&seed, ttilde_grid, params, protocol, opts)?;
    branch.label = String::from("ssp");
    let k = params.n_cavities;
    let last = branch.last();
    let avail = last.transferable();
    let terminal_fraction = if avail > 0.0 {
        last.amps[k - 1].powi(2) / avail
    } else {
        0.0
    };
    let max_intermediate = branch
        .points
        .iter()
        .flat_map(|p| p.amps[1..k - 1].iter().map(|a| a * a))
        .fold(0.0, f64::max);
    branch.ssp = Some(SspCheck {
        terminal_fraction,
        max_intermediate,
        passed: terminal_fraction > TERMINAL_FRACTION
            && max_intermediate < NEGLIGIBLE_INTERMEDIATE * params.n_total,
    });
    Ok(branch)
}

/// Newton from `n_seeds` random constraint-satisfying guesses at `ttilde`;
/// returns the distinct converged solutions sorted by `mu`.
pub fn multistart(
    ttilde: f64,
    params: &ChainParams,
    protocol: &PulseProtocol,
    n_seeds: usize,
    seed: u64,
) -> Vec<SpSolution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = params.n_cavities;
    let mut found: Vec<SpSolution> = Vec::new();
    for _ in 0..n_seeds {
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let (s, sz) = (0.5 * theta.sin(), -0.5 * theta.cos());
        let radius = (params.n_total - 0.5 - sz).max(0.0).sqrt();
        let mut amps: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = norm2(&amps).max(f64::MIN_POSITIVE);
        amps.iter_mut().for_each(|a| *a *= radius / norm);
        let guess = SpSolution {
            ttilde,
            amps,
            s,
            sz,
            mu: rng.random_range(-2.0..2.0),
            residual_norm: f64::NAN,
        };
        if let Ok(sol) = solve_sp(&guess, ttilde, params, protocol) {
            // the reduced equations are symmetric under a global sign flip
            let sol = if sol.amps[0] < 0.0 || (sol.amps[0] == 0.0 && sol.s < 0.0) {
                SpSolution {
                    amps: sol.amps.iter().map(|a| -a).collect(),
                    s: -sol.s,
                    ..sol
                }
            } else {
                sol
            };
            let dup = found
                .iter()
                .any(|f| f.distance(&sol, params.n_total) < 1e-6 && (f.mu - sol.mu).abs() < 1e-6);
            if !dup {
                found.push(sol);
            }
        }
    }
    found.sort_by(|a, b| a.mu.total_cmp(&b.mu));
    found
}
