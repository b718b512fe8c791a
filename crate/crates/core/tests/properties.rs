use ndarray::Array3;
use proptest::prelude::*;

use trotterq::grape::{basis_state, ghz_state, rotation_target, Objective};
use trotterq::linalg::unitarity_error;
use trotterq::pauli::{build_heisenberg_square, build_random_ising, Hamiltonian};
use trotterq::propagator::{propagator_infidelity, third_order_radicand, Branch, Propagator, PropagatorMode, TrotterScheme};
use trotterq::vqa::nelder_mead::{nelder_mead, NelderMeadConfig};
use trotterq::vqa::{energy, AnsatzOrder, AnsatzSpec, VqaProblem};
use trotterq::{ControlPulse, Pauli};

fn mode() -> impl Strategy<Value = PropagatorMode> {
    prop_oneof![Just(PropagatorMode::Direct), (1u8..=4).prop_map(PropagatorMode::Trotter)]
}

fn pulse(n: usize) -> impl Strategy<Value = ControlPulse> {
    (1usize..=4, 0.01f64..0.5).prop_flat_map(move |(slices, tau)| {
        prop::collection::vec(-5.0f64..5.0, slices * n * 2).prop_map(move |v| {
            ControlPulse::new(tau, Array3::from_shape_vec((slices, n, 2), v).unwrap()).unwrap()
        })
    })
}

fn instance() -> impl Strategy<Value = (Hamiltonian, ControlPulse, PropagatorMode)> {
    (2usize..=4, any::<u64>(), mode())
        .prop_flat_map(|(n, seed, m)| (Just(build_random_ising(n, seed).unwrap()), pulse(n), Just(m)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propagators_are_unitary((h, p, m) in instance()) {
        let u = Propagator::new(&h, m, p.tau).unwrap().evolve(&p).unwrap();
        prop_assert!(unitarity_error(&u) <= 1e-9);
    }

    #[test]
    fn free_evolution_is_exact_at_every_order((h, p, m) in instance()) {
        let still = ControlPulse::zeros(h.n(), p.slices(), p.tau).unwrap();
        let u = Propagator::new(&h, m, p.tau).unwrap().evolve(&still).unwrap();
        let u0 = Propagator::new(&h, PropagatorMode::Direct, p.tau).unwrap().evolve(&still).unwrap();
        prop_assert!(propagator_infidelity(&u, &u0).unwrap() < 1e-12);
    }

    #[test]
    fn control_only_evolution_is_exact_at_every_order((h, p, m) in instance()) {
        let zero = Hamiltonian::zero(h.n());
        let u = Propagator::new(&zero, m, p.tau).unwrap().evolve(&p).unwrap();
        let u0 = Propagator::new(&zero, PropagatorMode::Direct, p.tau).unwrap().evolve(&p).unwrap();
        prop_assert!(propagator_infidelity(&u, &u0).unwrap() < 1e-12);
    }

    #[test]
    fn fidelities_lie_in_the_unit_interval((h, p, m) in instance(), axis in 0usize..3, angle in -4.0f64..4.0) {
        let n = h.n();
        let u = Propagator::new(&h, m, p.tau).unwrap().evolve(&p).unwrap();
        let letter = [Pauli::X, Pauli::Y, Pauli::Z][axis];
        let objectives = [
            Objective::state(basis_state(n, 0).unwrap(), ghz_state(n)).unwrap(),
            Objective::gate(rotation_target(n, n - 1, letter, angle).unwrap()).unwrap(),
        ];
        for o in objectives {
            let f = o.fidelity(&u).unwrap();
            prop_assert!((0.0..=1.0).contains(&f), "{f}");
        }
    }

    #[test]
    fn third_order_coefficients_sum_to_one(gamma in -2.0f64..2.0, upper in any::<bool>()) {
        let branch = if upper { Branch::Upper } else { Branch::Lower };
        match TrotterScheme::third_order(gamma, branch) {
            Ok(s) => {
                prop_assert!(third_order_radicand(gamma) >= 0.0);
                let scale = s.alphas.iter().chain(&s.betas).fold(1.0f64, |m, c| m.max(c.abs()));
                prop_assert!((s.alphas.iter().sum::<f64>() - 1.0).abs() < 1e-12 * scale);
                prop_assert!((s.betas.iter().sum::<f64>() - 1.0).abs() < 1e-12 * scale);
            }
            Err(e) => prop_assert!(matches!(e, trotterq::Error::Domain { .. }), "{e}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ansatz_energy_respects_the_variational_bound(
        order in prop_oneof![Just(AnsatzOrder::First), Just(AnsatzOrder::Second), Just(AnsatzOrder::Fourth)],
        layers in 0usize..=2,
        seed in any::<u64>(),
    ) {
        let h_p = build_heisenberg_square(1.0, 0.5).unwrap();
        let h_s = build_random_ising(4, seed).unwrap();
        let spec = AnsatzSpec { order, layers, tau: 0.3, n: 4 };
        let count = spec.parameter_count();
        let prob = VqaProblem::new(h_p, &h_s, spec).unwrap();
        let params = trotterq::vqa::initial_parameters(count, 3.0, seed);
        let e = energy(&prob, &params).unwrap();
        prop_assert!(e >= prob.ground.energy - 1e-9, "{e}");
    }

    #[test]
    fn nelder_mead_best_value_never_increases(
        center in prop::collection::vec(-2.0f64..2.0, 2..6),
        start in prop::collection::vec(-2.0f64..2.0, 6),
    ) {
        let d = center.len();
        let f = |x: &[f64]| x.iter().zip(&center).map(|(a, c)| (a - c).powi(2) * (1.0 + a.sin().powi(2))).sum::<f64>();
        let config = NelderMeadConfig { max_iters: 200, ..Default::default() };
        let r = nelder_mead(f, &start[..d], &config).unwrap();
        prop_assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(*r.trace.last().unwrap(), r.value);
    }
}
