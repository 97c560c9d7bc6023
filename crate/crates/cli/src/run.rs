//! Dispatch from a configuration to the simulation modules.

use std::time::Instant;

use serde_json::{json, Value};
use stirap_core::chaos::{branch_departure, ensemble_spread, DEPARTURE_FRACTION};
use stirap_core::quantum::{self, build_basis, coherent_initial_state, compare_semiclassical, fock_state, ProductBasis};
use stirap_core::scans::{efficiency_at, rate_grid, EFFICIENCY_TARGET, TAIL_WINDOW};
use stirap_core::stationary::{default_grid, multistart, uniform_grid};
use stirap_core::{
    benettin, bounds_95, chaos_window, efficiency_scan, find_ssp, integrate, propagate, scan_options, ChainParams,
    ChaosWindow, Complex64, ContinuationOptions, Couplings, EfficiencyCurve, IntegratorOptions,
    SemiclassicalState, SpBranch, Stats, Trajectory,
};

use crate::config::{
    EnsembleSettings, Experiment, ExperimentConfig, QuantumInitial, Run, ScanSettings, StartSpec, WindowSettings,
};
use crate::error::{CliError, Result};
use crate::output::{OutputSet, RunManifest};

/// Branch grid spacing used whenever a run needs the stationary branch.
const BRANCH_STEP: f64 = 0.01;
/// Samples recorded over a post-protocol hold.
const HOLD_SAMPLES: usize = 400;

/// Validate, compute, write the outputs and finally the manifest. On error
/// every file written by this run is removed.
pub fn run(mut config: ExperimentConfig) -> Result<RunManifest> {
    config.propagate_seed();
    config.validate()?;
    let mut out = OutputSet::open(&config.out, config.format)?;
    let clock = Instant::now();
    match execute(&config, &mut out) {
        Ok(assertion) => {
            let manifest = RunManifest {
                outputs: out.records()?,
                config,
                version: env!("CARGO_PKG_VERSION").to_string(),
                wall_time_s: clock.elapsed().as_secs_f64(),
                assertion,
            };
            out.finish(&manifest)?;
            Ok(manifest)
        }
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

fn execute(cfg: &ExperimentConfig, out: &mut OutputSet) -> Result<Option<String>> {
    let mut runs = Vec::new();
    let mut assertion = None;
    match &cfg.experiment {
        Experiment::Sweep {
            hold_after,
            hermitian_reference,
            window,
            ..
        } => {
            for r in cfg.runs() {
                runs.push(sweep(cfg, &r, *hold_after, *hermitian_reference, window.as_ref(), out)?);
            }
        }
        Experiment::Branch { step, multistart: n } => {
            for r in cfg.runs() {
                runs.push(branch(cfg, &r, *step, *n, out)?);
            }
        }
        Experiment::Lyapunov {
            ttilde,
            lyapunov,
            ensemble,
        } => {
            for r in cfg.runs() {
                let b = ssp(&r)?;
                let mut estimates = Vec::new();
                for tt in ttilde {
                    let sp = b.solution_at(*tt, &hermitian(&r.params), &r.protocol)?;
                    let series = benettin(&sp.to_state(), *tt, &r.params, &r.protocol, lyapunov)?;
                    out.table(&format!("{}_lyapunov_t{tt:.4}", r.label), &series, |mut w| series.write_csv(&mut w))?;
                    estimates.push(json!({
                        "ttilde": tt,
                        "plateau": series.plateau_mean(),
                        "tail": series.tail(),
                        "max_reset_error": series.max_reset_error,
                        "max_conservation_drift": series.max_conservation_drift,
                    }));
                }
                let clouds = match ensemble {
                    Some(e) => ensembles(cfg, &r, &b, e, out)?,
                    None => Value::Null,
                };
                runs.push(json!({ "label": r.label, "estimates": estimates, "ensembles": clouds }));
            }
        }
        Experiment::Window(w) => {
            for r in cfg.runs() {
                let win = window(&r, w, out)?;
                runs.push(json!({ "label": r.label, "g": r.params.g_terminal(), "window": win }));
            }
        }
        Experiment::Ensemble(e) => {
            for r in cfg.runs() {
                let b = ssp(&r)?;
                runs.push(json!({ "label": r.label, "ensembles": ensembles(cfg, &r, &b, e, out)? }));
            }
        }
        Experiment::Scan(s) => {
            for r in cfg.runs() {
                let (curve, bounds) = scan(cfg, &r, s, out)?;
                runs.push(json!({
                    "label": r.label,
                    "g": r.params.g_terminal(),
                    "bounds": bounds,
                    "failures": curve.failures,
                }));
            }
        }
        Experiment::Quantum {
            initial,
            compare,
            onset_fraction,
            window: w,
        } => {
            for r in cfg.runs() {
                runs.push(quantum_run(cfg, &r, initial, *compare, *onset_fraction, w.as_ref(), out)?);
            }
        }
        Experiment::BoundCheck {
            couplings,
            scan: s,
            window: w,
        } => {
            let mut entries = Vec::new();
            for g in couplings {
                let r = Run {
                    label: format!("g{g}"),
                    params: cfg.params.clone().with_g_terminal(*g),
                    protocol: cfg.protocol.clone(),
                    start: None,
                };
                let (_, bounds) = scan(cfg, &r, s, out)?;
                let win = window(&r, w, out)?;
                runs.push(json!({ "label": r.label, "g": g, "bounds": bounds, "window": summary_window(&win) }));
                entries.push((*g, bounds, win));
            }
            let report = stirap_core::scans::check_bound_inequality(&entries);
            if !report.passed {
                assertion = Some(format!(
                    "bound inequality violated: {}",
                    serde_json::to_string(&report.rows).unwrap_or_default()
                ));
            }
            runs.push(json!({ "label": "report", "report": report }));
        }
    }
    out.json("summary", &json!({ "name": cfg.name, "kind": cfg.kind().name(), "runs": runs }))?;
    Ok(assertion)
}

fn hermitian(p: &ChainParams) -> ChainParams {
    p.clone().with_dissipation(0.0, 0.0)
}

/// The stationary branch of the closed system over the whole protocol.
fn ssp(r: &Run) -> Result<SpBranch> {
    Ok(find_ssp(
        &hermitian(&r.params),
        &r.protocol,
        &default_grid(&r.protocol, BRANCH_STEP),
        &ContinuationOptions::default(),
    )?)
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn start_state(start: &StartSpec, b: &SpBranch, r: &Run) -> Result<SemiclassicalState> {
    let herm = hermitian(&r.params);
    Ok(match start {
        StartSpec::Ssp { ttilde } if *ttilde == 0.0 => b.first().to_state(),
        StartSpec::Ssp { ttilde } => b.solution_at(*ttilde, &herm, &r.protocol)?.to_state(),
        StartSpec::Source => SemiclassicalState::source_filled(r.params.n_cavities, r.params.n_total),
        StartSpec::Occupations { ttilde, occupations, sz } => {
            let sp = b.solution_at(*ttilde, &herm, &r.protocol)?;
            SemiclassicalState {
                amps: occupations
                    .iter()
                    .zip(&sp.amps)
                    .map(|(n, a)| Complex64::new(sign(*a) * n.sqrt(), 0.0))
                    .collect(),
                s: Complex64::new(sign(sp.s) * (0.25 - sz * sz).max(0.0).sqrt(), 0.0),
                sz: *sz,
            }
        }
        StartSpec::State { state, .. } => state.clone(),
    })
}

fn semiclassical_options(cfg: &ExperimentConfig) -> IntegratorOptions {
    cfg.integrator.clone().unwrap_or_default()
}

/// Constant couplings at the protocol end for `duration`, sampled evenly.
fn hold(state: &SemiclassicalState, r: &Run, duration: f64, opts: &IntegratorOptions) -> Result<Trajectory> {
    let couplings = Couplings::frozen_at(&r.protocol, r.protocol.ttilde_end());
    let t0 = r.protocol.t_end();
    let mut times = vec![t0];
    let mut states = vec![state.clone()];
    for i in 1..=HOLD_SAMPLES {
        let (a, b) = (times[i - 1], t0 + duration * i as f64 / HOLD_SAMPLES as f64);
        let next = propagate(&states[i - 1], &r.params, couplings.clone(), a, b, opts)?;
        times.push(b);
        states.push(next);
    }
    Ok(Trajectory {
        tau: r.protocol.tau,
        times,
        states,
        stats: Stats::default(),
    })
}

/// Largest pointwise occupation difference, raw and as shares of each
/// trajectory's own total (scaled back to photons at `N`).
fn deviation(a: &Trajectory, b: &Trajectory, n_total: f64) -> (f64, f64) {
    let (mut raw, mut share) = (0.0f64, 0.0f64);
    for (x, y) in a.states.iter().zip(&b.states) {
        let (tx, ty) = (x.conserved_total(), y.conserved_total());
        for (nx, ny) in x.photon_numbers().iter().zip(y.photon_numbers()) {
            raw = raw.max((nx - ny).abs());
            share = share.max((nx / tx - ny / ty).abs() * n_total);
        }
    }
    (raw, share)
}

fn summary_window(w: &ChaosWindow) -> Value {
    json!({
        "ttilde_left": w.ttilde_left,
        "ttilde_right": w.ttilde_right,
        "lambda_max_peak": w.lambda_max_peak,
        "ttilde_peak": w.ttilde_peak,
        "noise_floor": w.noise_floor,
        "threshold": w.threshold,
        "skipped": w.skipped,
    })
}

fn window(r: &Run, w: &WindowSettings, out: &mut OutputSet) -> Result<ChaosWindow> {
    let grid = uniform_grid(0.0, r.protocol.ttilde_end(), w.grid_step);
    let win = chaos_window(&hermitian(&r.params), &r.protocol, &grid, &w.lyapunov, w.noise_floor)?;
    out.table(&format!("{}_window_profile", r.label), &win, |mut w| win.write_profile_csv(&mut w))?;
    Ok(win)
}

fn sweep(
    cfg: &ExperimentConfig,
    r: &Run,
    hold_after: Option<f64>,
    hermitian_reference: bool,
    win: Option<&WindowSettings>,
    out: &mut OutputSet,
) -> Result<Value> {
    let opts = semiclassical_options(cfg);
    let start = r.start.as_ref().ok_or_else(|| CliError::Validation("sweep without a start".into()))?;
    let b = ssp(r)?;
    out.table(&format!("{}_branch", r.label), &b, |mut w| b.write_csv(&mut w))?;
    let s0 = start_state(start, &b, r)?;
    let t0 = start.ttilde() * r.protocol.tau;
    let traj = integrate(&s0, &r.params, &r.protocol, (t0, r.protocol.t_end()), &opts)?;
    out.table(&format!("{}_trajectory", r.label), &traj, |mut w| traj.write_csv(&mut w))?;

    let k = r.params.n_cavities;
    let (denominator, convention) = if start.ttilde() == 0.0 {
        (s0.amps[0].norm_sqr(), "source_occupation")
    } else {
        (s0.conserved_total() - 0.5 - s0.sz, "transferable")
    };
    let tail_from = r.protocol.ttilde_end() - TAIL_WINDOW;
    let tail: Vec<f64> = (0..traj.len())
        .filter(|&i| traj.ttilde(i) >= tail_from)
        .map(|i| traj.states[i].amps[k - 1].norm_sqr())
        .collect();
    let last = traj.last();
    let efficiency = last.amps[k - 1].norm_sqr() / denominator;

    let mut summary = json!({
        "label": r.label,
        "g": r.params.g_terminal(),
        "sweep_rate": r.protocol.sweep_rate(),
        "kappa": r.params.kappa,
        "gamma": r.params.gamma,
        "start_ttilde": start.ttilde(),
        "final_occupations": last.photon_numbers(),
        "final_sz": last.sz,
        "efficiency": efficiency,
        "efficiency_tail_mean": tail.iter().sum::<f64>() / tail.len().max(1) as f64 / denominator,
        "denominator": denominator,
        "convention": convention,
        "efficient": efficiency >= EFFICIENCY_TARGET,
        "branch_departure": branch_departure(&traj, &b, DEPARTURE_FRACTION),
        "max_conservation_drift": traj.max_conservation_drift(),
        "max_spin_excess": traj.max_spin_excess(),
        "integrator_stats": traj.stats,
    });
    if hermitian_reference {
        let reference = integrate(&s0, &hermitian(&r.params), &r.protocol, (t0, r.protocol.t_end()), &opts)?;
        out.table(&format!("{}_hermitian", r.label), &reference, |mut w| reference.write_csv(&mut w))?;
        let (raw, share) = deviation(&traj, &reference, r.params.n_total);
        summary["hermitian_deviation"] = json!({ "max_abs": raw, "max_share": share, "n_total": r.params.n_total });
    }
    if let Some(h) = hold_after {
        let held = hold(last, r, h, &opts)?;
        out.table(&format!("{}_hold", r.label), &held, |mut w| held.write_csv(&mut w))?;
        let end = held.last();
        summary["hold"] = json!({
            "duration": h,
            "final_occupations": end.photon_numbers(),
            "final_sz": end.sz,
        });
    }
    if let Some(w) = win {
        summary["window"] = summary_window(&window(r, w, out)?);
    }
    Ok(summary)
}

fn branch(cfg: &ExperimentConfig, r: &Run, step: f64, n_starts: usize, out: &mut OutputSet) -> Result<Value> {
    let b = find_ssp(
        &r.params,
        &r.protocol,
        &default_grid(&r.protocol, step),
        &ContinuationOptions::default(),
    )?;
    out.table(&format!("{}_branch", r.label), &b, |mut w| b.write_csv(&mut w))?;
    let t0 = b.first().ttilde;
    let others: Vec<Value> = multistart(t0, &r.params, &r.protocol, n_starts, cfg.seed)
        .iter()
        .map(|s| json!({ "occupations": s.photon_numbers(), "s": s.s, "sz": s.sz, "mu": s.mu }))
        .collect();
    Ok(json!({
        "label": r.label,
        "g": r.params.g_terminal(),
        "points": b.len(),
        "first": b.first().photon_numbers(),
        "last": b.last().photon_numbers(),
        "ssp": b.ssp,
        "fold_jumps": b.jumps,
        "multistart": others,
    }))
}

fn ensembles(cfg: &ExperimentConfig, r: &Run, b: &SpBranch, e: &EnsembleSettings, out: &mut OutputSet) -> Result<Value> {
    let herm = hermitian(&r.params);
    let mut res = Vec::new();
    for tt in &e.ttilde {
        let cloud = ensemble_spread(*tt, b, &herm, &r.protocol, e.samples, e.perturbation, e.horizon, e.n_out, cfg.seed)?;
        out.table(&format!("{}_ensemble_t{tt:.4}", r.label), &cloud, |mut w| cloud.write_csv(&mut w))?;
        res.push(json!({
            "ttilde": tt,
            "max_deviation": cloud.max_deviation.iter().cloned().fold(0.0, f64::max),
            "perturbation": e.perturbation,
            "flagged": cloud.flagged(),
        }));
    }
    Ok(Value::Array(res))
}

fn scan(
    cfg: &ExperimentConfig,
    r: &Run,
    s: &ScanSettings,
    out: &mut OutputSet,
) -> Result<(EfficiencyCurve, stirap_core::Bounds)> {
    let opts = cfg.integrator.clone().unwrap_or_else(scan_options);
    let curve = efficiency_scan(&r.params, &r.protocol, &rate_grid(s.lo, s.hi, s.per_decade), s.statistic, &opts)?;
    out.table(&format!("{}_efficiency", r.label), &curve, |mut w| curve.write_csv(&mut w))?;
    let refine = |rate: f64| efficiency_at(&r.params, &r.protocol, rate, s.statistic, &opts);
    let bounds = if s.refine {
        bounds_95(&curve, Some(&refine))?
    } else {
        bounds_95(&curve, None)?
    };
    Ok((curve, bounds))
}

fn quantum_run(
    cfg: &ExperimentConfig,
    r: &Run,
    initial: &QuantumInitial,
    compare: bool,
    onset_fraction: f64,
    win: Option<&WindowSettings>,
    out: &mut OutputSet,
) -> Result<Value> {
    let k = r.params.n_cavities;
    let span = (0.0, r.protocol.t_end());
    let qopts = quantum::quantum_options();
    let (series, dim, s0) = match initial {
        QuantumInitial::Fock { occupations, qubit } => {
            let m = occupations.iter().sum::<u32>() + qubit;
            let basis = build_basis(k, m)?;
            let psi = fock_state(&basis, occupations, *qubit)?;
            let s0 = SemiclassicalState {
                amps: occupations.iter().map(|n| Complex64::new((*n as f64).sqrt(), 0.0)).collect(),
                s: Complex64::new(0.0, 0.0),
                sz: *qubit as f64 - 0.5,
            };
            let series = quantum::propagate(&psi, &basis, &r.params, &r.protocol, span, &qopts)?;
            (series, stirap_core::quantum::FockBasis::dim(&basis), s0)
        }
        QuantumInitial::Coherent { cutoff } => {
            let s0 = SemiclassicalState::source_filled(k, r.params.n_total);
            let cutoff = cutoff.unwrap_or_else(|| ProductBasis::required_cutoff(&s0.amps));
            let (basis, psi) = coherent_initial_state(&s0.amps, cutoff)?;
            let series = quantum::propagate(&psi, &basis, &r.params, &r.protocol, span, &qopts)?;
            (series, stirap_core::quantum::FockBasis::dim(&basis), s0)
        }
    };
    out.table(&format!("{}_quantum", r.label), &series, |mut w| series.write_csv(&mut w))?;
    let n_end: Vec<f64> = series.n.iter().map(|n| *n.last().unwrap_or(&f64::NAN)).collect();
    let mut summary = json!({
        "label": r.label,
        "g": r.params.g_terminal(),
        "sweep_rate": r.protocol.sweep_rate(),
        "dimension": dim,
        "final_occupations": n_end,
        "final_sz": series.sz.last(),
        "max_norm_drift": series.max_norm_drift(),
    });
    if compare {
        let traj = integrate(&s0, &r.params, &r.protocol, span, &semiclassical_options(cfg))?;
        out.table(&format!("{}_semiclassical", r.label), &traj, |mut w| traj.write_csv(&mut w))?;
        let report = compare_semiclassical(&series, &traj, s0.conserved_total(), onset_fraction)?;
        summary["semiclassical_final_occupations"] = json!(traj.last().photon_numbers());
        summary["comparison"] = json!(report);
    }
    if let Some(w) = win {
        summary["window"] = summary_window(&window(r, w, out)?);
    }
    Ok(summary)
}
