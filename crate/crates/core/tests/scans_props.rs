use stirap_core::scans::{efficiency_at, rate_grid, Statistic, EFFICIENCY_TARGET};
use stirap_core::*;

fn three(g: f64) -> (ChainParams, PulseProtocol) {
    (ChainParams::three_cavity(0.5, g, 20.0), PulseProtocol::three_cavity(0.0202))
}

fn refined_slow_bound(g: f64, per_decade: usize) -> f64 {
    let (params, protocol) = three(g);
    let opts = scan_options();
    let curve = efficiency_scan(&params, &protocol, &rate_grid(1e-3, 1e-1, per_decade), Statistic::TailMean, &opts).unwrap();
    let refine = |r: f64| efficiency_at(&params, &protocol, r, Statistic::TailMean, &opts);
    bounds_95(&curve, Some(&refine)).unwrap().inv_tau_slow.expect("slow bound")
}

#[test]
fn linear_chain_is_efficient_at_every_slow_rate() {
    let (params, protocol) = three(0.0);
    let grid = rate_grid(1e-5, 1e-1, 5);
    let curve = efficiency_scan(&params, &protocol, &grid, Statistic::Final, &scan_options()).unwrap();
    assert!(curve.failures.is_empty());
    let b = bounds_95(&curve, None).unwrap();
    assert!(b.inv_tau_slow.is_none());
    let fast = b.inv_tau_fast.unwrap();
    for (r, t) in curve.rates.iter().zip(&curve.efficiency) {
        if *r <= fast {
            assert!(*t >= EFFICIENCY_TARGET, "rate {r}: T = {t}");
        }
    }
}

#[test]
fn efficiency_is_terminal_share_of_the_trajectory() {
    let (params, protocol) = three(0.2);
    let opts = IntegratorOptions::default();
    let e = transfer_efficiency(&params, &protocol, &Start::Stationary { ttilde: 0.0 }, &opts).unwrap();
    let seed = stationary::SpSolution::source_seed(3, 20.0, 0.0);
    let s0 = solve_sp(&seed, 0.0, &params, &protocol).unwrap().to_state();
    let traj = integrate(&s0, &params, &protocol, (0.0, protocol.t_end()), &opts).unwrap();
    let want = traj.last().photon_numbers()[2] / s0.photon_numbers()[0];
    assert!((e.value - want).abs() < 1e-8, "{} vs {want}", e.value);
    assert!(e.value > EFFICIENCY_TARGET);
}

#[test]
fn restart_from_a_mid_protocol_state() {
    let (params, protocol) = three(0.2);
    let protocol = protocol.with_sweep_rate(1.2121e-4);
    let state = SemiclassicalState {
        amps: vec![
            Complex64::new(12.8592f64.sqrt(), 0.0),
            Complex64::new(-(0.0073f64.sqrt()), 0.0),
            Complex64::new(-(6.6399f64.sqrt()), 0.0),
        ],
        s: Complex64::new(0.4999, 0.0),
        sz: -0.0065,
    };
    let e = transfer_efficiency(&params, &protocol, &Start::State { state: state.clone(), ttilde: 2.9394 }, &scan_options()).unwrap();
    assert!((e.denominator - (state.conserved_total() - 0.5 - state.sz)).abs() < 1e-12);
    assert!(e.per_source > 1.0);
}

/// Bounds from a grid and from the twice denser grid agree to 1%, and the
/// slow bound does not decrease with the coupling.
#[test]
fn slow_bounds_are_reproducible_and_ordered() {
    let mut slows = Vec::new();
    for g in [0.1, 0.2, 0.4] {
        let coarse = refined_slow_bound(g, 20);
        let dense = refined_slow_bound(g, 40);
        assert!((coarse - dense).abs() < 0.01 * dense, "g={g}: {coarse} vs {dense}");
        slows.push(dense);
    }
    assert!(slows.windows(2).all(|w| w[0] <= w[1]), "{slows:?}");
}
