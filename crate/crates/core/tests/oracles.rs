//! Library results against independently computed references.

mod common;

use common::{expm_hermitian_pade, random_pulse, reference_propagator, rng, system};
use trotterq::linalg::max_abs_diff;
use trotterq::pauli::{build_heisenberg_square, build_random_ising};
use trotterq::propagator::{expm_hermitian, Propagator, PropagatorMode};
use trotterq::vqa::{energy, exact_ground_state, ground_state_infidelity, AnsatzOrder, AnsatzSpec, VqaProblem};

#[test]
fn direct_propagation_matches_pade_products() {
    let mut r = rng(3);
    for (n, seed) in [(2, 1), (3, 2), (4, 3)] {
        let h = build_random_ising(n, seed).unwrap();
        let pulse = random_pulse(&mut r, n, 6, 0.3, 2.0);
        let u = Propagator::new(&h, PropagatorMode::Direct, pulse.tau)
            .unwrap()
            .evolve(&pulse)
            .unwrap();
        let reference = reference_propagator(&h, &pulse);
        assert!(max_abs_diff(&u, &reference) < 1e-10, "n={n}");
    }
}

#[test]
fn direct_propagation_matches_pade_on_the_nmr_register() {
    let h = system("nmr4");
    let pulse = random_pulse(&mut rng(9), 4, 5, 2.5e-5, 1000.0);
    let u = Propagator::new(&h, PropagatorMode::Direct, pulse.tau)
        .unwrap()
        .evolve(&pulse)
        .unwrap();
    assert!(max_abs_diff(&u, &reference_propagator(&h, &pulse)) < 1e-10);
}

#[test]
fn spectral_exponential_matches_pade() {
    let h = build_heisenberg_square(1.3, -0.4).unwrap();
    for t in [1e-3, 0.2, 2.5] {
        let a = expm_hermitian(&h, t).unwrap();
        assert!(max_abs_diff(&a, &expm_hermitian_pade(h.dense(), t)) < 1e-11, "t={t}");
    }
}

#[test]
fn heisenberg_ground_energy_is_pinned() {
    // numpy.linalg.eigh on the same 16x16 matrix
    let g = exact_ground_state(&build_heisenberg_square(100.0, 100.0).unwrap()).unwrap();
    assert!((g.energy + 800.0).abs() < 1e-9, "{}", g.energy);
    assert_eq!(g.degeneracy(), 1);
}

#[test]
fn ansatz_energies_match_numpy_reference() {
    // Parameters linspace(-1.3, 1.7, 36), M = 2, tau = 5 ms, drive = nmr4.
    // Reference: scipy.linalg.expm on dense matrices, built independently.
    let frozen = [
        (AnsatzOrder::First, -6.006668248521692, 0.8612526323608652),
        (AnsatzOrder::Second, -19.368641544912805, 0.8787620538378182),
        (AnsatzOrder::Fourth, 74.65452238522313, 0.9464184772823353),
    ];
    let h_s = system("nmr4");
    let h_p = build_heisenberg_square(100.0, 100.0).unwrap();
    let params: Vec<f64> = (0..36).map(|k| -1.3 + 3.0 * k as f64 / 35.0).collect();
    for (order, e_ref, inf_ref) in frozen {
        let spec = AnsatzSpec {
            order,
            layers: 2,
            tau: 0.005,
            n: 4,
        };
        let prob = VqaProblem::new(h_p.clone(), &h_s, spec).unwrap();
        let e = energy(&prob, &params).unwrap();
        let inf = ground_state_infidelity(&prob, &params).unwrap();
        assert!((e - e_ref).abs() < 1e-8, "order {order}: {e} vs {e_ref}");
        assert!((inf - inf_ref).abs() < 1e-10, "order {order}: {inf} vs {inf_ref}");
    }
}
