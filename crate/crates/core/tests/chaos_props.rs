use stirap_core::chaos::{branch_departure, ensemble_spread, DEPARTURE_FRACTION, THRESHOLD_FACTOR};
use stirap_core::stationary::uniform_grid;
use stirap_core::*;

const GRID_STEP: f64 = 0.1;

fn setup(g: f64, rate: f64) -> (ChainParams, PulseProtocol, SpBranch) {
    let params = ChainParams::three_cavity(0.5, g, 20.0);
    let protocol = PulseProtocol::three_cavity(rate);
    let grid = uniform_grid(0.0, protocol.ttilde_end(), 0.01);
    let branch = find_ssp(&params, &protocol, &grid, &ContinuationOptions::default()).unwrap();
    (params, protocol, branch)
}

fn floor() -> f64 {
    LyapunovSettings::default().resolution()
}

#[test]
fn resets_keep_separation_and_invariants() {
    let (params, protocol, branch) = setup(0.2, 0.0202);
    for tt in [1.5, 2.8] {
        let sp = branch.solution_at(tt, &params, &protocol).unwrap();
        let series = benettin(&sp.to_state(), tt, &params, &protocol, &LyapunovSettings::default()).unwrap();
        assert!(series.max_reset_error < 1e-12, "{}", series.max_reset_error);
        assert!(series.max_conservation_drift < 1e-6 * params.n_total);
    }
}

#[test]
fn estimate_independent_of_delta0_and_seed() {
    let (params, protocol, branch) = setup(0.2, 0.0202);
    for tt in [1.5, 2.8, 4.0] {
        let base = LyapunovSettings::default();
        let reference = lambda_max_at(tt, &branch, &params, &protocol, &base).unwrap().plateau;
        let variants = [
            LyapunovSettings { delta0: 1e-8, ..base.clone() },
            LyapunovSettings { seed: 1, ..base.clone() },
            LyapunovSettings { delta0: 1e-8, seed: 1, ..base.clone() },
        ];
        for v in variants {
            let l = lambda_max_at(tt, &branch, &params, &protocol, &v).unwrap().plateau;
            assert!((l - reference).abs() < 2.0 * floor(), "t~={tt} {l} vs {reference}");
        }
    }
}

#[test]
fn linear_profile_stays_below_threshold() {
    let (params, protocol, _) = setup(0.0, 0.0202);
    let grid = uniform_grid(0.0, protocol.ttilde_end(), GRID_STEP);
    let w = chaos_window(&params, &protocol, &grid, &LyapunovSettings::default(), None).unwrap();
    assert!(w.is_empty());
    assert!(w.profile.iter().all(|e| e.plateau < THRESHOLD_FACTOR * w.noise_floor));
}

#[test]
fn slow_sweep_leaves_branch_inside_the_window() {
    let (params, protocol, branch) = setup(0.2, 1.2121e-4);
    let grid = uniform_grid(0.0, protocol.ttilde_end(), GRID_STEP);
    let w = chaos_window(&params, &protocol, &grid, &LyapunovSettings::default(), None).unwrap();
    let left = w.ttilde_left.expect("window");
    let traj = integrate(&branch.first().to_state(), &params, &protocol, (0.0, protocol.t_end()), &IntegratorOptions::default()).unwrap();
    let dep = branch_departure(&traj, &branch, DEPARTURE_FRACTION).expect("departure");
    assert!(dep >= left - GRID_STEP, "departure {dep}, window from {left}");
}

#[test]
fn ensembles_spread_only_inside_the_window() {
    let (params, protocol, branch) = setup(0.2, 0.0202);
    let pert = 1e-3;
    for (tt, chaotic) in [(1.5, false), (2.8, true), (4.0, false)] {
        let cloud = ensemble_spread(tt, &branch, &params, &protocol, 10, pert, 2000.0, 100, 5).unwrap();
        let worst = cloud.max_deviation.iter().cloned().fold(0.0, f64::max);
        if chaotic {
            assert!(worst > 100.0 * pert, "t~={tt} {worst}");
        } else {
            assert!(worst < 10.0 * pert, "t~={tt} {worst}");
        }
    }
}

#[test]
fn ensemble_is_reproducible_from_seed() {
    let (params, protocol, branch) = setup(0.2, 0.0202);
    let a = ensemble_spread(2.8, &branch, &params, &protocol, 4, 1e-3, 200.0, 20, 9).unwrap();
    let b = ensemble_spread(2.8, &branch, &params, &protocol, 4, 1e-3, 200.0, 20, 9).unwrap();
    assert_eq!(a, b);
}
