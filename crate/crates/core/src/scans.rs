//! Transfer efficiency, efficiency-versus-sweep-rate scans and the 95% bounds
//! on the sweep rate.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::ChaosWindow;
use crate::csv;
use crate::dynamics::{resolved_options, Couplings, SemiclassicalSystem};
use crate::error::{Error, Result};
use crate::model::{mixing_angle_from, ChainParams, PulseProtocol, SemiclassicalState};
use crate::ode::{self, IntegratorOptions};
use crate::stationary::{solve_sp, SpSolution};

/// Efficiency level regarded as a successful transfer.
pub const EFFICIENCY_TARGET: f64 = 0.95;

/// Looser tolerances for efficiency scans, whose cost is dominated by the
/// slowest rates.
pub fn scan_options() -> IntegratorOptions {
    IntegratorOptions::default().with_tolerances(1e-9, 1e-11)
}

/// Protocol-end window (in `ttilde`) over which the tail mean is taken.
pub const TAIL_WINDOW: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Start {
    /// Stationary solution at `ttilde`, seeded from the source-filled state.
    Stationary { ttilde: f64 },
    /// An explicit state at `ttilde`.
    State {
        state: SemiclassicalState,
        ttilde: f64,
    },
}

impl Start {
    pub fn ttilde(&self) -> f64 {
        match self {
            Start::Stationary { ttilde } | Start::State { ttilde, .. } => *ttilde,
        }
    }
}

/// How the efficiency was normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// Source occupation at the start (runs starting at `ttilde = 0`).
    SourceOccupation,
    /// `N - 1/2 - sz` at the start: all excitation not held by the qubit.
    Transferable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    /// `n_terminal(t_end) / denominator`.
    pub value: f64,
    /// Mean of `n_terminal / denominator` over the final [`TAIL_WINDOW`].
    pub tail_mean: f64,
    pub denominator: f64,
    pub convention: Denominator,
    /// `n_terminal(t_end) / n_source(start)` whatever the convention.
    pub per_source: f64,
    pub final_state: SemiclassicalState,
}

fn start_state(
    start: &Start,
    params: &ChainParams,
    protocol: &PulseProtocol,
) -> Result<SemiclassicalState> {
    match start {
        Start::Stationary { ttilde } => {
            let seed = SpSolution::source_seed(params.n_cavities, params.n_total, *ttilde);
            Ok(solve_sp(&seed, *ttilde, params, protocol)?.to_state())
        }
        Start::State { state, .. } => Ok(state.clone()),
    }
}

/// Integrate from the start to the protocol end and report the terminal
/// share of the excitation.
pub fn transfer_efficiency(
    params: &ChainParams,
    protocol: &PulseProtocol,
    start: &Start,
    options: &IntegratorOptions,
) -> Result<Efficiency> {
    let state0 = start_state(start, params, protocol)?;
    let (denominator, convention) = if start.ttilde() == 0.0 {
        (state0.amps[0].norm_sqr(), Denominator::SourceOccupation)
    } else {
        (
            state0.conserved_total() - 0.5 - state0.sz,
            Denominator::Transferable,
        )
    };
    if !(denominator > 0.0) {
        return Err(Error::Invalid("start state has no excitation to transfer".into()));
    }
    let t0 = start.ttilde() * protocol.tau;
    let t1 = protocol.t_end();
    if !(t0 < t1) {
        return Err(Error::Invalid(format!("start {t0} is not before the protocol end {t1}")));
    }
    let opts = resolved_options(protocol, options);
    let tail_start = (t1 - TAIL_WINDOW * protocol.tau).max(t0);
    let n_tail = 400;
    let samples: Vec<f64> = (0..=n_tail)
        .map(|i| tail_start + (t1 - tail_start) * i as f64 / n_tail as f64)
        .collect();
    let k = params.n_cavities;
    let mut tail_sum = 0.0;
    let mut tail_count = 0usize;
    let sys = SemiclassicalSystem::new(params, Couplings::Pulsed(protocol.clone()));
    let (y, _) = ode::integrate(&sys, t0, &state0.to_flat(), t1, &opts, &samples, |_, y| {
        tail_sum += y[2 * k - 2].powi(2) + y[2 * k - 1].powi(2);
        tail_count += 1;
    })?;
    let final_state = SemiclassicalState::from_flat(&y);
    if !final_state.is_finite() {
        return Err(Error::NonFinite { t: t1 });
    }
    Ok(Efficiency {
        value: final_state.amps[k - 1].norm_sqr() / denominator,
        tail_mean: tail_sum / tail_count.max(1) as f64 / denominator,
        denominator,
        convention,
        per_source: final_state.amps[k - 1].norm_sqr() / state0.amps[0].norm_sqr(),
        final_state,
    })
}

/// Which efficiency figure a curve (and its bounds) is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Final,
    TailMean,
}

impl Statistic {
    pub fn pick(self, e: &Efficiency) -> f64 {
        match self {
            Statistic::Final => e.value,
            Statistic::TailMean => e.tail_mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyCurve {
    pub rates: Vec<f64>,
    /// The efficiency used for bounds, per [`Statistic`]; `NaN` on failure.
    pub efficiency: Vec<f64>,
    pub final_value: Vec<f64>,
    pub tail_mean: Vec<f64>,
    pub statistic: Statistic,
    pub g: f64,
    pub n_total: f64,
    pub failures: Vec<(f64, String)>,
}

impl EfficiencyCurve {
    /// Columns `inv_tau, T, T_final, T_tail`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        csv::write_header(w, &["inv_tau", "T", "T_final", "T_tail"].map(String::from))?;
        for i in 0..self.rates.len() {
            csv::write_row(
                w,
                &[self.rates[i], self.efficiency[i], self.final_value[i], self.tail_mean[i]],
            )?;
        }
        Ok(())
    }
}

/// `per_decade` log-spaced rates per decade from `lo` to `hi` inclusive.
pub fn rate_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    let n = ((b - a) * per_decade as f64).round().max(1.0) as usize;
    (0..=n).map(|i| 10f64.powf(a + (b - a) * i as f64 / n as f64)).collect()
}

/// Default scan grid: 60 points per decade over `[1e-5, 1e-1]`.
pub fn default_rate_grid() -> Vec<f64> {
    rate_grid(1e-5, 1e-1, 60)
}

/// Independent runs from the stationary solution at `ttilde = 0`, one per
/// rate; results come back in grid order.
pub fn efficiency_scan(
    params: &ChainParams,
    protocol: &PulseProtocol,
    rates: &[f64],
    statistic: Statistic,
    options: &IntegratorOptions,
) -> Result<EfficiencyCurve> {
    if rates.windows(2).any(|w| !(w[0] < w[1])) || rates.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Invalid("rate grid must be positive and strictly increasing".into()));
    }
    let runs: Vec<Result<Efficiency>> = rates
        .par_iter()
        .map(|&r| {
            transfer_efficiency(
                params,
                &protocol.with_sweep_rate(r),
                &Start::Stationary { ttilde: 0.0 },
                options,
            )
        })
        .collect();
    let mut curve = EfficiencyCurve {
        rates: rates.to_vec(),
        efficiency: Vec::with_capacity(rates.len()),
        final_value: Vec::with_capacity(rates.len()),
        tail_mean: Vec::with_capacity(rates.len()),
        statistic,
        g: params.g_terminal(),
        n_total: params.n_total,
        failures: Vec::new(),
    };
    for (r, run) in rates.iter().zip(runs) {
        match run {
            Ok(e) => {
                curve.efficiency.push(statistic.pick(&e));
                curve.final_value.push(e.value);
                curve.tail_mean.push(e.tail_mean);
            }
            Err(err) => {
                curve.efficiency.push(f64::NAN);
                curve.final_value.push(f64::NAN);
                curve.tail_mean.push(f64::NAN);
                curve.failures.push((*r, err.to_string()));
            }
        }
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    /// Smallest rate of the efficient region; `None` when it reaches the
    /// slow end of the grid.
    pub inv_tau_slow: Option<f64>,
    /// Largest rate of the efficient region.
    pub inv_tau_fast: Option<f64>,
    /// The efficient region runs into the fast end of the grid.
    pub fast_at_edge: bool,
    pub diagnostics: Vec<String>,
}

/// Relative bracket width at which bisection stops.
pub const BISECTION_TOL: f64 = 0.01;

fn bisect_log<F: Fn(f64) -> Result<f64>>(
    mut lo: f64,
    mut hi: f64,
    lo_efficient: bool,
    eval: &F,
) -> Result<(f64, f64)> {
    while hi / lo - 1.0 > BISECTION_TOL {
        let mid = (lo * hi).sqrt();
        let ok = eval(mid)? >= EFFICIENCY_TARGET;
        if ok == lo_efficient {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

/// 95% bounds from a curve. The efficient region is the longest contiguous
/// run of grid points with efficiency at or above the target. When `refine`
/// is given (efficiency at an arbitrary rate), each bracketing grid interval
/// is bisected in `log(rate)` to 1% relative width.
pub fn bounds_95(
    curve: &EfficiencyCurve,
    refine: Option<&(dyn Fn(f64) -> Result<f64> + Sync)>,
) -> Result<Bounds> {
    let ok: Vec<bool> = curve.efficiency.iter().map(|t| *t >= EFFICIENCY_TARGET).collect();
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < ok.len() {
        if ok[i] {
            let s = i;
            while i + 1 < ok.len() && ok[i + 1] {
                i += 1;
            }
            if best.is_none_or(|(a, b)| i - s > b - a) {
                best = Some((s, i));
            }
        }
        i += 1;
    }
    let mut diagnostics = Vec::new();
    let Some((lo, hi)) = best else {
        diagnostics.push(format!("no grid point reaches T >= {EFFICIENCY_TARGET}"));
        return Ok(Bounds {
            inv_tau_slow: None,
            inv_tau_fast: None,
            fast_at_edge: false,
            diagnostics,
        });
    };
    let runs = count_runs(&ok);
    if runs > 1 {
        diagnostics.push(format!("{runs} separate efficient runs; bounds use the longest"));
    }
    let r = &curve.rates;
    let inv_tau_slow = if lo == 0 {
        diagnostics.push("no slow falloff on the grid".into());
        None
    } else {
        Some(match refine {
            Some(f) => bisect_log(r[lo - 1], r[lo], false, &f)?.1,
            None => r[lo],
        })
    };
    let fast_at_edge = hi + 1 == r.len();
    let inv_tau_fast = if fast_at_edge {
        diagnostics.push("fast falloff not bracketed: bound at the grid edge".into());
        Some(r[hi])
    } else {
        Some(match refine {
            Some(f) => bisect_log(r[hi], r[hi + 1], true, &f)?.0,
            None => r[hi],
        })
    };
    Ok(Bounds {
        inv_tau_slow,
        inv_tau_fast,
        fast_at_edge,
        diagnostics,
    })
}

fn count_runs(ok: &[bool]) -> usize {
    ok.iter()
        .enumerate()
        .filter(|(i, v)| **v && (*i == 0 || !ok[i - 1]))
        .count()
}

/// Efficiency at a single rate, as used for bisection refinement.
pub fn efficiency_at(
    params: &ChainParams,
    protocol: &PulseProtocol,
    rate: f64,
    statistic: Statistic,
    options: &IntegratorOptions,
) -> Result<f64> {
    let e = transfer_efficiency(
        params,
        &protocol.with_sweep_rate(rate),
        &Start::Stationary { ttilde: 0.0 },
        options,
    )?;
    Ok(statistic.pick(&e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub g: f64,
    pub inv_tau_slow: Option<f64>,
    pub lambda_max_peak: f64,
    pub window_empty: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    /// `inv_tau_slow` nondecreasing in `g` over the rows that have one.
    pub monotone: bool,
    pub passed: bool,
}

/// Check `inv_tau_slow < lambda_max_peak` for each coupling and that the
/// slow bound does not decrease with `g`. A missing slow bound with an empty
/// window holds vacuously.
pub fn check_bound_inequality(entries: &[(f64, Bounds, ChaosWindow)]) -> BoundReport {
    let mut rows: Vec<BoundRow> = entries
        .iter()
        .map(|(g, b, w)| {
            let holds = match b.inv_tau_slow {
                Some(slow) => slow < w.lambda_max_peak,
                None => w.is_empty() || *g == 0.0,
            };
            BoundRow {
                g: *g,
                inv_tau_slow: b.inv_tau_slow,
                lambda_max_peak: w.lambda_max_peak,
                window_empty: w.is_empty(),
                holds,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.g.total_cmp(&b.g));
    let slows: Vec<f64> = rows.iter().filter(|r| r.g > 0.0).filter_map(|r| r.inv_tau_slow).collect();
    let monotone = slows.windows(2).all(|w| w[0] <= w[1])
        && rows.iter().filter(|r| r.g > 0.0).all(|r| r.inv_tau_slow.is_some());
    let passed = monotone && rows.iter().all(|r| r.holds);
    BoundReport {
        rows,
        monotone,
        passed,
    }
}

/// Occupations `(N cos^2 theta, 0, N sin^2 theta)` of the linear dark state.
pub fn linear_dark_state(j1: f64, j2: f64, n_total: f64) -> Result<(f64, f64, f64)> {
    let theta = mixing_angle_from(j1, j2).ok_or(Error::MixingAngleUndefined { t: f64::NAN })?;
    let c = theta.cos();
    let s = theta.sin();
    Ok((n_total * c * c, 0.0, n_total * s * s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(rates: Vec<f64>, t: Vec<f64>) -> EfficiencyCurve {
        EfficiencyCurve {
            final_value: t.clone(),
            tail_mean: t.clone(),
            efficiency: t,
            rates,
            statistic: Statistic::Final,
            g: 0.2,
            n_total: 20.0,
            failures: vec![],
        }
    }

    #[test]
    fn dark_state_limits() {
        let (a, b, c) = linear_dark_state(0.0, 1.0, 20.0).unwrap();
        assert_eq!((a, b, c), (20.0, 0.0, 0.0));
        let (a, _, c) = linear_dark_state(0.3, 0.3, 20.0).unwrap();
        assert!((a - 10.0).abs() < 1e-12 && (c - 10.0).abs() < 1e-12);
        let (a, _, c) = linear_dark_state(2.0, 0.0, 20.0).unwrap();
        assert!(a.abs() < 1e-12 && (c - 20.0).abs() < 1e-12);
        assert!(linear_dark_state(0.0, 0.0, 20.0).is_err());
    }

    #[test]
    fn grid_spacing() {
        let g = default_rate_grid();
        assert_eq!(g.len(), 241);
        assert!((g[0] - 1e-5).abs() < 1e-18 && (g[240] - 0.1).abs() < 1e-14);
        assert!((g[60] - 1e-4).abs() < 1e-16);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn monotone_synthetic_curve_gives_single_slow_bound() {
        let rates = rate_grid(1e-4, 1e-1, 10);
        let t: Vec<f64> = rates.iter().map(|r| 0.5 + (r.log10() + 4.0) / 6.0).collect();
        let curve = synthetic(rates.clone(), t.clone());
        let b = bounds_95(&curve, None).unwrap();
        let first = t.iter().position(|v| *v >= 0.95).unwrap();
        assert_eq!(b.inv_tau_slow, Some(rates[first]));
        assert!(b.fast_at_edge);
        assert_eq!(b.inv_tau_fast, Some(*rates.last().unwrap()));
    }

    #[test]
    fn bisection_refines_to_one_percent() {
        // T crosses 0.95 at 1e-3 (slow) and 3e-2 (fast)
        let f = |r: f64| -> Result<f64> { Ok(if (1e-3..=3e-2).contains(&r) { 0.99 } else { 0.5 }) };
        let rates = rate_grid(1e-4, 1e-1, 5);
        let t: Vec<f64> = rates.iter().map(|r| f(*r).unwrap()).collect();
        let b = bounds_95(&synthetic(rates, t), Some(&f)).unwrap();
        let slow = b.inv_tau_slow.unwrap();
        let fast = b.inv_tau_fast.unwrap();
        assert!(slow >= 1e-3 && slow / 1e-3 - 1.0 <= 0.0101, "{slow}");
        assert!(fast <= 3e-2 && 3e-2 / fast - 1.0 <= 0.0101, "{fast}");
        assert!(!b.fast_at_edge);
    }

    #[test]
    fn flat_curve_has_no_slow_bound() {
        let rates = rate_grid(1e-5, 1e-1, 2);
        let mut t = vec![1.0; rates.len()];
        *t.last_mut().unwrap() = 0.3;
        let b = bounds_95(&synthetic(rates.clone(), t), None).unwrap();
        assert_eq!(b.inv_tau_slow, None);
        assert_eq!(b.inv_tau_fast, Some(rates[rates.len() - 2]));
    }

    #[test]
    fn longest_run_wins() {
        let rates: Vec<f64> = (1..=8).map(|i| i as f64 * 1e-3).collect();
        let t = vec![0.96, 0.5, 0.97, 0.98, 0.99, 0.5, 0.96, 0.2];
        let b = bounds_95(&synthetic(rates, t), None).unwrap();
        assert_eq!(b.inv_tau_slow, Some(3e-3));
        assert_eq!(b.inv_tau_fast, Some(5e-3));
        assert!(b.diagnostics.iter().any(|d| d.contains("3 separate")));
    }

    fn window(peak: f64, empty: bool) -> ChaosWindow {
        ChaosWindow {
            ttilde_left: (!empty).then_some(2.0),
            ttilde_right: (!empty).then_some(3.0),
            lambda_max_peak: peak,
            ttilde_peak: 2.5,
            noise_floor: 0.002,
            threshold: 0.006,
            profile: vec![],
            skipped: vec![],
        }
    }

    fn bounds(slow: Option<f64>) -> Bounds {
        Bounds {
            inv_tau_slow: slow,
            inv_tau_fast: Some(0.05),
            fast_at_edge: false,
            diagnostics: vec![],
        }
    }

    #[test]
    fn bound_report() {
        let rep = check_bound_inequality(&[
            (0.0, bounds(None), window(1e-4, true)),
            (0.2, bounds(Some(0.01)), window(0.04, false)),
            (0.1, bounds(Some(0.005)), window(0.02, false)),
        ]);
        assert!(rep.passed && rep.monotone);
        assert_eq!(rep.rows[0].g, 0.0);
        let rep = check_bound_inequality(&[
            (0.1, bounds(Some(0.03)), window(0.02, false)),
            (0.2, bounds(Some(0.01)), window(0.04, false)),
        ]);
        assert!(!rep.passed && !rep.monotone && !rep.rows[0].holds);
    }
}
