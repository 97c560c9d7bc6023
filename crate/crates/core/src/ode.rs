//! Dormand–Prince 5(4) embedded Runge–Kutta integrator with PI step-size
//! control and the standard fourth-order continuous extension.
//!
//! The stepper is stateful so callers can advance to a sequence of stop
//! times, edit the state in between (see [`Dopri5::set_state`]) and read
//! dense output from the last accepted step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A first-order system `dy/dt = f(t, y)` on a flat real vector.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on |h|. Callers substitute their own default when `None`.
    #[serde(default)]
    pub max_step: Option<f64>,
    #[serde(default)]
    pub initial_step: Option<f64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Spacing of dense-output samples in trajectory exports.
    #[serde(default)]
    pub sample_dt: Option<f64>,
}

fn default_max_steps() -> usize {
    100_000_000
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-11,
            atol: 1e-13,
            max_step: None,
            initial_step: None,
            max_steps: default_max_steps(),
            sample_dt: None,
        }
    }
}

impl IntegratorOptions {
    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = Some(h);
        self
    }

    pub fn with_sample_dt(mut self, dt: f64) -> Self {
        self.sample_dt = Some(dt);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::Invalid("integrator tolerances must be > 0".into()));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::Invalid("max_step must be > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const ALPHA: f64 = 0.7 / 5.0;
const BETA: f64 = 0.4 / 5.0;

pub struct Dopri5<'a, S: OdeSystem + ?Sized> {
    sys: &'a S,
    opts: IntegratorOptions,
    dir: f64,
    t: f64,
    y: Vec<f64>,
    h: f64,
    err_old: f64,
    k: [Vec<f64>; 7],
    y_stage: Vec<f64>,
    y_new: Vec<f64>,
    // Continuous extension of the last accepted step.
    t_old: f64,
    h_last: f64,
    cont: [Vec<f64>; 5],
    stats: Stats,
}

impl<'a, S: OdeSystem + ?Sized> Dopri5<'a, S> {
    /// `direction` is the sign of the integration direction.
    pub fn new(sys: &'a S, t0: f64, y0: &[f64], direction: f64, opts: &IntegratorOptions) -> Result<Self> {
        opts.validate()?;
        let n = sys.dim();
        if y0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y0.len(),
            });
        }
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t0 });
        }
        let zeros = || vec![0.0; n];
        let mut this = Self {
            sys,
            opts: opts.clone(),
            dir: if direction < 0.0 { -1.0 } else { 1.0 },
            t: t0,
            y: y0.to_vec(),
            h: 0.0,
            err_old: 1e-4,
            k: [zeros(), zeros(), zeros(), zeros(), zeros(), zeros(), zeros()],
            y_stage: zeros(),
            y_new: zeros(),
            t_old: t0,
            h_last: 0.0,
            cont: [y0.to_vec(), zeros(), zeros(), zeros(), zeros()],
            stats: Stats::default(),
        };
        this.sys.rhs(t0, &this.y, &mut this.k[0]);
        this.stats.rhs_evals += 1;
        this.h = match opts.initial_step {
            Some(h) => h.abs(),
            None => this.initial_step(),
        };
        Ok(this)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn stats(&self) -> Stats {
        self.stats
    }

    /// Replace the current state (same time) and refresh the FSAL stage.
    pub fn set_state(&mut self, y: &[f64]) {
        self.y.copy_from_slice(y);
        self.sys.rhs(self.t, &self.y, &mut self.k[0]);
        self.stats.rhs_evals += 1;
        self.t_old = self.t;
        self.h_last = 0.0;
        self.cont[0].copy_from_slice(y);
        for c in &mut self.cont[1..] {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn max_step(&self) -> f64 {
        self.opts.max_step.unwrap_or(f64::INFINITY)
    }

    fn scaled_norm(&self, v: &[f64], y: &[f64]) -> f64 {
        let n = v.len() as f64;
        let s: f64 = v
            .iter()
            .zip(y)
            .map(|(vi, yi)| {
                let sc = self.opts.atol + self.opts.rtol * yi.abs();
                (vi / sc).powi(2)
            })
            .sum();
        (s / n).sqrt()
    }

    fn initial_step(&mut self) -> f64 {
        let d0 = self.scaled_norm(&self.y, &self.y);
        let d1 = self.scaled_norm(&self.k[0], &self.y);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(self.max_step());
        for ((ys, y), f) in self.y_stage.iter_mut().zip(&self.y).zip(&self.k[0]) {
            *ys = y + self.dir * h0 * f;
        }
        self.sys.rhs(self.t + self.dir * h0, &self.y_stage, &mut self.k[1]);
        self.stats.rhs_evals += 1;
        let diff: Vec<f64> = self.k[1].iter().zip(&self.k[0]).map(|(a, b)| a - b).collect();
        let d2 = self.scaled_norm(&diff, &self.y) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.max_step())
    }

    /// Take one accepted step without passing `t_bound`.
    pub fn step(&mut self, t_bound: f64) -> Result<()> {
        let n = self.y.len();
        let remaining = (t_bound - self.t) * self.dir;
        if remaining <= 0.0 {
            return Ok(());
        }
        let mut h = self.h.min(self.max_step());
        let mut facmax = FAC_MAX;
        loop {
            let mut last = false;
            if h >= remaining {
                h = remaining;
                last = true;
            }
            let hs = self.dir * h;
            if h.abs() <= 16.0 * f64::EPSILON * self.t.abs().max(1.0) || h < 1e-300 {
                return Err(Error::StepUnderflow { t: self.t, h });
            }
            if self.stats.accepted + self.stats.rejected >= self.opts.max_steps {
                return Err(Error::TooManySteps {
                    t: self.t,
                    steps: self.opts.max_steps,
                });
            }
            let t = self.t;
            self.stage(hs, &[A21], 1, t + C2 * hs);
            self.stage(hs, &[A31, A32], 2, t + C3 * hs);
            self.stage(hs, &[A41, A42, A43], 3, t + C4 * hs);
            self.stage(hs, &[A51, A52, A53, A54], 4, t + C5 * hs);
            self.stage(hs, &[A61, A62, A63, A64, A65], 5, t + hs);
            for i in 0..n {
                let k = &self.k;
                self.y_new[i] = self.y[i]
                    + hs * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
            }
            let t_new = if last { t_bound } else { t + hs };
            self.sys.rhs(t_new, &self.y_new, &mut self.k[6]);
            self.stats.rhs_evals += 6;

            let mut acc = 0.0;
            let mut finite = true;
            for i in 0..n {
                let k = &self.k;
                let e = hs
                    * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i]
                        + E7 * k[6][i]);
                let sc = self.opts.atol + self.opts.rtol * self.y[i].abs().max(self.y_new[i].abs());
                let r = e / sc;
                acc += r * r;
                finite &= self.y_new[i].is_finite() && k[6][i].is_finite();
            }
            let err = (acc / n as f64).sqrt();
            if !finite || !err.is_finite() {
                self.stats.rejected += 1;
                h *= FAC_MIN;
                facmax = 1.0;
                continue;
            }
            if err <= 1.0 {
                // continuous extension
                for i in 0..n {
                    let k = &self.k;
                    let ydiff = self.y_new[i] - self.y[i];
                    let bspl = hs * k[0][i] - ydiff;
                    self.cont[0][i] = self.y[i];
                    self.cont[1][i] = ydiff;
                    self.cont[2][i] = bspl;
                    self.cont[3][i] = ydiff - hs * k[6][i] - bspl;
                    self.cont[4][i] = hs
                        * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i]
                            + D7 * k[6][i]);
                }
                self.t_old = t;
                self.h_last = hs;
                std::mem::swap(&mut self.y, &mut self.y_new);
                self.k.swap(0, 6);
                self.t = t_new;
                self.stats.accepted += 1;

                let err_c = err.max(1e-10);
                let fac = SAFETY * err_c.powf(-ALPHA) * self.err_old.powf(BETA);
                let fac = fac.clamp(FAC_MIN, facmax);
                self.err_old = err_c;
                if !last {
                    self.h = (h * fac).min(self.max_step());
                } else {
                    // keep the pre-clipping estimate for the next call
                    self.h = self.h.max(h).min(self.max_step());
                }
                return Ok(());
            }
            self.stats.rejected += 1;
            let fac = (SAFETY * err.powf(-0.2)).max(FAC_MIN);
            h *= fac;
            facmax = 1.0;
        }
    }

    fn stage(&mut self, hs: f64, a: &[f64], idx: usize, t: f64) {
        let n = self.y.len();
        for i in 0..n {
            let mut acc = 0.0;
            for (j, aj) in a.iter().enumerate() {
                acc += aj * self.k[j][i];
            }
            self.y_stage[i] = self.y[i] + hs * acc;
        }
        self.sys.rhs(t, &self.y_stage, &mut self.k[idx]);
    }

    /// Dense output inside the last accepted step.
    pub fn interpolate(&self, t: f64, out: &mut [f64]) {
        if self.h_last == 0.0 {
            out.copy_from_slice(&self.y);
            return;
        }
        let theta = (t - self.t_old) / self.h_last;
        let theta1 = 1.0 - theta;
        for (i, o) in out.iter_mut().enumerate() {
            let c = &self.cont;
            *o = c[0][i] + theta * (c[1][i] + theta1 * (c[2][i] + theta * (c[3][i] + theta1 * c[4][i])));
        }
    }

    /// Advance to exactly `t_target`, calling `observe` at every requested
    /// sample time that falls inside `(t, t_target]`. `samples` must be
    /// ordered along the integration direction; consumed entries are skipped
    /// via `cursor`.
    pub fn advance_to<F: FnMut(f64, &[f64])>(
        &mut self,
        t_target: f64,
        samples: &[f64],
        cursor: &mut usize,
        mut observe: F,
    ) -> Result<()> {
        let mut buf = vec![0.0; self.y.len()];
        while (t_target - self.t) * self.dir > 0.0 {
            self.step(t_target)?;
            while *cursor < samples.len() && (self.t - samples[*cursor]) * self.dir >= 0.0 {
                let ts = samples[*cursor];
                if ts == self.t {
                    observe(ts, &self.y);
                } else {
                    self.interpolate(ts, &mut buf);
                    observe(ts, &buf);
                }
                *cursor += 1;
            }
        }
        Ok(())
    }
}

/// Integrate from `t0` to `t1` and return the final state. `samples` (ordered
/// along the direction of integration, within `[t0, t1]`) are reported to
/// `observe` from the dense output.
pub fn integrate<S, F>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t1: f64,
    opts: &IntegratorOptions,
    samples: &[f64],
    mut observe: F,
) -> Result<(Vec<f64>, Stats)>
where
    S: OdeSystem + ?Sized,
    F: FnMut(f64, &[f64]),
{
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut cursor = 0;
    while cursor < samples.len() && (samples[cursor] - t0) * dir <= 0.0 {
        if samples[cursor] == t0 {
            observe(t0, y0);
        }
        cursor += 1;
    }
    let mut stepper = Dopri5::new(sys, t0, y0, dir, opts)?;
    stepper.advance_to(t1, samples, &mut cursor, &mut observe)?;
    Ok((stepper.y().to_vec(), stepper.stats()))
}
