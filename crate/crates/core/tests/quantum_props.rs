use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stirap_core::quantum::*;
use stirap_core::*;

fn random_vector(dim: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hamiltonian_is_hermitian(m in 1u32..8, g in 0.0f64..0.5, delta in -1.0f64..1.0, t in 0.0f64..330.0, seed in 0u64..1000) {
        let params = ChainParams::three_cavity(delta, g, m as f64);
        let protocol = PulseProtocol::three_cavity(0.0202);
        let b = build_basis(3, m).unwrap();
        let (phi, psi) = (random_vector(b.dim(), seed), random_vector(b.dim(), seed + 1));
        let hpsi = apply_hamiltonian(&psi, &b, &params, &protocol, t).unwrap();
        let hphi = apply_hamiltonian(&phi, &b, &params, &protocol, t).unwrap();
        prop_assert!((dot(&phi, &hpsi) - dot(&psi, &hphi).conj()).norm() < 1e-12 * (1.0 + m as f64) * b.dim() as f64);
    }

    #[test]
    fn sector_size_matches_count(k in 1usize..5, m in 0u32..12) {
        let b = build_basis(k, m).unwrap();
        prop_assert_eq!(b.dim() as u64, ExcitationBasis::count(k, m).unwrap());
    }
}

#[test]
fn sector_run_preserves_norm() {
    let params = ChainParams::three_cavity(0.5, 0.2, 20.0);
    let protocol = PulseProtocol::three_cavity(0.0303);
    let b = build_basis(3, 20).unwrap();
    let psi = fock_state(&b, &[20, 0, 0], 0).unwrap();
    let run = quantum::propagate(&psi, &b, &params, &protocol, (0.0, protocol.t_end()), &quantum_options()).unwrap();
    assert!(run.max_norm_drift() < 1e-8, "{}", run.max_norm_drift());
    for c in run.conserved() {
        assert!((c - 20.0).abs() < 1e-6 * 20.0);
    }
}

#[test]
fn product_basis_conserves_mean_excitation() {
    let params = ChainParams::three_cavity(0.5, 0.3, 4.0);
    let protocol = PulseProtocol::three_cavity(0.05);
    let alphas = [Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
    let cutoff = ProductBasis::required_cutoff(&alphas);
    let (basis, psi) = coherent_initial_state(&alphas, cutoff).unwrap();
    let run = quantum::propagate(&psi, &basis, &params, &protocol, (0.0, protocol.t_end()), &quantum_options()).unwrap();
    assert!(run.max_norm_drift() < 1e-8);
    let c = run.conserved();
    for v in &c {
        assert!((v - c[0]).abs() < 1e-6 * 4.0, "{v} vs {}", c[0]);
    }
}

#[test]
fn quantum_csv_layout() {
    let params = ChainParams::three_cavity(0.5, 0.2, 2.0);
    let protocol = PulseProtocol::three_cavity(0.1);
    let b = build_basis(3, 2).unwrap();
    let psi = fock_state(&b, &[2, 0, 0], 0).unwrap();
    let run = quantum::propagate(&psi, &b, &params, &protocol, (0.0, 10.0), &quantum_options()).unwrap();
    let mut buf = Vec::new();
    run.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,ttilde,n_1,n_2,n_3,sz,norm");
    assert_eq!(lines.count(), run.times.len());
    let mut dump = Vec::new();
    b.dump(&mut dump).unwrap();
    assert_eq!(String::from_utf8(dump).unwrap().lines().next().unwrap(), "0 0 0 1 1");
}
