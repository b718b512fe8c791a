//! Variational ground-state search with Trotter-shaped ansätze.

mod ansatz;
pub mod nelder_mead;

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use ansatz::{
    build_ansatz_unitary, rotation_gate_xyx, rotation_layer, Ansatz, AnsatzOrder, AnsatzSpec,
};
pub use nelder_mead::{nelder_mead, NelderMeadConfig, NelderMeadResult};

use crate::error::{Error, Result};
use crate::linalg::{eigh, inner, CMatrix, CVector};
use crate::pauli::Hamiltonian;
use crate::stats::Summary;

/// Relative gap below which eigenvalues count as degenerate with the ground energy.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct GroundState {
    pub energy: f64,
    /// Orthonormal basis of the ground space, one column per state.
    pub states: CMatrix,
}

impl GroundState {
    pub fn degeneracy(&self) -> usize {
        self.states.ncols()
    }

    pub fn is_degenerate(&self) -> bool {
        self.degeneracy() > 1
    }

    /// `<ψ|P|ψ>` with `P` the ground-space projector.
    pub fn overlap(&self, psi: &CVector) -> f64 {
        self.states
            .columns()
            .into_iter()
            .map(|g| inner(g, psi.view()).norm_sqr())
            .sum()
    }
}

/// Lowest eigenvalue and its eigenspace by dense diagonalization.
pub fn exact_ground_state(h: &Hamiltonian) -> Result<GroundState> {
    let (values, vectors) = eigh(h.dense())?;
    let e0 = values[0];
    let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let g = values
        .iter()
        .take_while(|v| *v - e0 <= DEGENERACY_TOL * scale)
        .count();
    Ok(GroundState {
        energy: e0,
        states: vectors.slice(ndarray::s![.., ..g]).to_owned(),
    })
}

/// `H_P`, an ansatz over `H_S`, and the reference ground space.
pub struct VqaProblem {
    pub h_p: Hamiltonian,
    pub ansatz: Ansatz,
    pub ground: GroundState,
}

impl VqaProblem {
    pub fn new(h_p: Hamiltonian, h_s: &Hamiltonian, spec: AnsatzSpec) -> Result<Self> {
        if h_p.n() != spec.n {
            return Err(Error::Dimension(format!(
                "H_P has {} qubits but the ansatz has {}",
                h_p.n(),
                spec.n
            )));
        }
        let ansatz = Ansatz::new(spec, h_s)?;
        let ground = exact_ground_state(&h_p)?;
        Ok(Self {
            h_p,
            ansatz,
            ground,
        })
    }

    fn expectation(&self, psi: &CVector) -> f64 {
        inner(psi.view(), self.h_p.dense().dot(psi).view()).re
    }
}

/// `Tr(H_P U ρ₀ U†)` with `ρ₀ = |0…0><0…0|`.
pub fn energy(problem: &VqaProblem, params: &[f64]) -> Result<f64> {
    Ok(problem.expectation(&problem.ansatz.state(params)?))
}

/// `1 - Tr(P_g U ρ₀ U†)` with `P_g` the ground-space projector.
pub fn ground_state_infidelity(problem: &VqaProblem, params: &[f64]) -> Result<f64> {
    let psi = problem.ansatz.state(params)?;
    Ok((1.0 - problem.ground.overlap(&psi)).clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VqaConfig {
    pub nelder_mead: NelderMeadConfig,
    pub seeds: Vec<u64>,
    /// Initial angles are uniform in `[-init_range, init_range]`.
    pub init_range: f64,
}

impl Default for VqaConfig {
    fn default() -> Self {
        Self {
            nelder_mead: NelderMeadConfig::default(),
            seeds: (0..5).collect(),
            init_range: PI / 8.0,
        }
    }
}

impl VqaConfig {
    pub fn validate(&self) -> Result<()> {
        self.nelder_mead.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Validation("seeds must not be empty".into()));
        }
        if !(self.init_range.is_finite() && self.init_range >= 0.0) {
            return Err(Error::Validation(format!(
                "init_range must be >= 0, got {}",
                self.init_range
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VqaRun {
    pub seed: u64,
    pub order: AnsatzOrder,
    pub layers: usize,
    pub tau: f64,
    /// Best energy after each simplex iteration.
    pub energies: Vec<f64>,
    pub final_energy: f64,
    pub infidelity: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
    pub params: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VqaReport {
    pub ground_energy: f64,
    pub ground_degeneracy: usize,
    pub runs: Vec<VqaRun>,
    pub energy: Option<Summary>,
    pub infidelity: Option<Summary>,
}

pub fn initial_parameters(count: usize, range: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| if range > 0.0 { rng.gen_range(-range..=range) } else { 0.0 })
        .collect()
}

/// One Nelder-Mead run per seed.
pub fn run_vqa(problem: &VqaProblem, config: &VqaConfig) -> Result<VqaReport> {
    config.validate()?;
    let spec = problem.ansatz.spec();
    let mut runs = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let clock = Instant::now();
        let x0 = initial_parameters(spec.parameter_count(), config.init_range, seed);
        let objective = |x: &[f64]| match problem.ansatz.state(x) {
            Ok(psi) => problem.expectation(&psi),
            Err(_) => f64::INFINITY,
        };
        let nm = nelder_mead(objective, &x0, &config.nelder_mead)?;
        let infidelity = ground_state_infidelity(problem, &nm.x)?;
        log::info!(
            "order {} M={} tau={} seed {seed}: E = {:.6}, 1-F = {:.3e}",
            spec.order,
            spec.layers,
            spec.tau,
            nm.value,
            infidelity
        );
        runs.push(VqaRun {
            seed,
            order: spec.order,
            layers: spec.layers,
            tau: spec.tau,
            energies: nm.trace,
            final_energy: nm.value,
            infidelity,
            iterations: nm.iterations,
            evaluations: nm.evaluations,
            converged: nm.converged,
            wall_time_s: clock.elapsed().as_secs_f64(),
            params: nm.x,
        });
    }
    let energies: Vec<f64> = runs.iter().map(|r| r.final_energy).collect();
    let infids: Vec<f64> = runs.iter().map(|r| r.infidelity).collect();
    Ok(VqaReport {
        ground_energy: problem.ground.energy,
        ground_degeneracy: problem.ground.degeneracy(),
        energy: Summary::of(&energies),
        infidelity: Summary::of(&infids),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gate_to_matrix, max_abs_diff, unitarity_error, C64};
    use crate::pauli::{build_heisenberg_square, PauliString};
    use crate::propagator::expm_hermitian;
    use ndarray::{array, Array2};

    fn z1() -> Hamiltonian {
        Hamiltonian::new(1, vec![PauliString::parse(1.0, "Z").unwrap()]).unwrap()
    }

    fn spec(order: AnsatzOrder, layers: usize, tau: f64, n: usize) -> AnsatzSpec {
        AnsatzSpec { order, layers, tau, n }
    }

    #[test]
    fn rotation_layer_examples() {
        let id = rotation_layer(Array2::zeros((2, 3)).view()).unwrap();
        assert!(max_abs_diff(&id, &CMatrix::eye(4)) < 1e-15);
        let u = rotation_layer(array![[PI, 0.0, 0.0]].view()).unwrap();
        // exp(-iπX/2) = -iX
        let expect = array![
            [C64::new(0.0, 0.0), C64::new(0.0, -1.0)],
            [C64::new(0.0, -1.0), C64::new(0.0, 0.0)]
        ];
        assert!(max_abs_diff(&u, &expect) < 1e-15);
    }

    #[test]
    fn rotation_layer_matches_dense_exponentials() {
        let th = array![[0.3, -1.2, 0.7], [2.1, 0.4, -0.9]];
        let u = rotation_layer(th.view()).unwrap();
        let mut expect = CMatrix::eye(4);
        for q in 0..2 {
            let mut g = CMatrix::eye(4);
            for (k, p) in ["X", "Y", "X"].iter().enumerate() {
                let mut letters = String::from("II");
                letters.replace_range(q..q + 1, p);
                let h = Hamiltonian::new(2, vec![PauliString::parse(0.5, &letters).unwrap()]).unwrap();
                g = g.dot(&expm_hermitian(&h, th[[q, k]]).unwrap());
            }
            expect = expect.dot(&g);
        }
        assert!(max_abs_diff(&u, &expect) < 1e-13);
    }

    #[test]
    fn zero_parameters_collapse_to_free_evolution() {
        let h = build_heisenberg_square(1.0, 0.3).unwrap();
        let (tau, layers) = (0.37, 3);
        let free = expm_hermitian(&h, tau * layers as f64).unwrap();
        for order in AnsatzOrder::ALL {
            let s = spec(order, layers, tau, 4);
            let u = build_ansatz_unitary(&s, &h, &vec![0.0; s.parameter_count()]).unwrap();
            assert!(max_abs_diff(&u, &free) < 1e-12, "order {order}");
        }
    }

    #[test]
    fn parameter_count_is_enforced() {
        for order in AnsatzOrder::ALL {
            let s = spec(order, 2, 0.1, 3);
            assert_eq!(s.parameter_count(), 27);
            let h = Hamiltonian::zero(3);
            assert!(build_ansatz_unitary(&s, &h, &[0.0; 26]).is_err());
            assert!(build_ansatz_unitary(&s, &h, &[0.0; 27]).is_ok());
        }
        assert!(AnsatzOrder::from_number(3).is_err());
    }

    #[test]
    fn second_order_single_qubit_by_hand() {
        let h = z1();
        let tau = 0.8;
        let p = [0.2, -0.5, 1.1, 0.9, 0.3, -0.4];
        let s = spec(AnsatzOrder::Second, 1, tau, 1);
        let u = build_ansatz_unitary(&s, &h, &p).unwrap();
        let us = expm_hermitian(&h, tau / 2.0).unwrap();
        let r0 = gate_to_matrix(&rotation_gate_xyx(p[0], p[1], p[2]));
        let r1 = gate_to_matrix(&rotation_gate_xyx(p[3], p[4], p[5]));
        let expect = us.dot(&r1).dot(&us).dot(&r0);
        assert!(max_abs_diff(&u, &expect) < 1e-14);
    }

    #[test]
    fn fourth_order_middle_layer_is_tied() {
        let h = z1();
        let tau = 0.6;
        let p = [0.1, 0.2, 0.3, 0.5, -0.7, 0.4];
        let s = spec(AnsatzOrder::Fourth, 1, tau, 1);
        let u = build_ansatz_unitary(&s, &h, &p).unwrap();
        let c = 2f64.cbrt();
        let b1 = 1.0 / (2.0 - c);
        let (a1, a2) = (b1 / 2.0, (1.0 - b1) / 2.0);
        let e = |t: f64| expm_hermitian(&h, t).unwrap();
        let r = |k: f64| gate_to_matrix(&rotation_gate_xyx(k * p[3], k * p[4], k * p[5]));
        let r0 = gate_to_matrix(&rotation_gate_xyx(p[0], p[1], p[2]));
        let expect = e(a1 * tau)
            .dot(&r(1.0))
            .dot(&e(a2 * tau))
            .dot(&r(-c))
            .dot(&e(a2 * tau))
            .dot(&r(1.0))
            .dot(&e(a1 * tau))
            .dot(&r0);
        assert!(max_abs_diff(&u, &expect) < 1e-14);
    }

    #[test]
    fn circuits_are_unitary() {
        let h = build_heisenberg_square(1.0, 1.0).unwrap();
        for order in AnsatzOrder::ALL {
            let s = spec(order, 3, 0.2, 4);
            let p = initial_parameters(s.parameter_count(), 3.0, 8);
            let u = build_ansatz_unitary(&s, &h, &p).unwrap();
            assert!(unitarity_error(&u) < 1e-9);
        }
    }

    #[test]
    fn zero_parameter_energy_is_diagonal_expectation() {
        let h_p = build_heisenberg_square(100.0, 100.0).unwrap();
        let h_s = Hamiltonian::new(
            4,
            vec![
                PauliString::parse(3.0, "ZIII").unwrap(),
                PauliString::parse(-2.0, "IZZI").unwrap(),
            ],
        )
        .unwrap();
        for order in AnsatzOrder::ALL {
            let prob = VqaProblem::new(h_p.clone(), &h_s, spec(order, 2, 0.01, 4)).unwrap();
            let e = energy(&prob, &vec![0.0; prob.ansatz.parameter_count()]).unwrap();
            assert!((e - 800.0).abs() < 1e-9, "{e}");
        }
    }

    #[test]
    fn ground_state_of_z_is_one() {
        let g = exact_ground_state(&z1()).unwrap();
        assert!((g.energy + 1.0).abs() < 1e-15);
        assert_eq!(g.degeneracy(), 1);
        assert!((g.states[[1, 0]].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_ground_space_is_kept_whole() {
        let h = Hamiltonian::new(2, vec![PauliString::parse(1.0, "ZI").unwrap()]).unwrap();
        let g = exact_ground_state(&h).unwrap();
        assert!(g.is_degenerate());
        assert_eq!(g.degeneracy(), 2);
    }

    #[test]
    fn infidelity_matches_brute_force() {
        let h_p = Hamiltonian::new(
            2,
            vec![
                PauliString::parse(1.0, "XX").unwrap(),
                PauliString::parse(0.5, "ZI").unwrap(),
                PauliString::parse(-0.3, "IY").unwrap(),
            ],
        )
        .unwrap();
        let h_s = Hamiltonian::new(2, vec![PauliString::parse(0.7, "ZZ").unwrap()]).unwrap();
        let prob = VqaProblem::new(h_p.clone(), &h_s, spec(AnsatzOrder::Second, 2, 0.4, 2)).unwrap();
        let p = initial_parameters(prob.ansatz.parameter_count(), 2.0, 4);
        let u = prob.ansatz.unitary(&p).unwrap();
        let psi = u.column(0).to_owned();
        let (vals, vecs) = eigh(h_p.dense()).unwrap();
        assert!((vals[0] - prob.ground.energy).abs() < 1e-12);
        let f = inner(vecs.column(0), psi.view()).norm_sqr();
        let got = ground_state_infidelity(&prob, &p).unwrap();
        assert!((got - (1.0 - f)).abs() < 1e-12);
        let e = energy(&prob, &p).unwrap();
        assert!(e >= vals[0] - 1e-9 && e <= vals[vals.len() - 1] + 1e-9);
    }

    #[test]
    fn zero_layers_is_a_product_state_search() {
        let h_p = Hamiltonian::new(
            2,
            vec![
                PauliString::parse(1.0, "XI").unwrap(),
                PauliString::parse(-1.0, "IZ").unwrap(),
            ],
        )
        .unwrap();
        let prob = VqaProblem::new(h_p, &Hamiltonian::zero(2), spec(AnsatzOrder::First, 0, 0.1, 2)).unwrap();
        let cfg = VqaConfig {
            seeds: vec![1, 1],
            ..VqaConfig::default()
        };
        let rep = run_vqa(&prob, &cfg).unwrap();
        assert!((rep.runs[0].final_energy + 2.0).abs() < 1e-8);
        assert_eq!(rep.runs[0].energies, rep.runs[1].energies);
        assert!(rep.runs[0].energies.windows(2).all(|w| w[1] <= w[0]));
    }
}
