//! Pauli strings, Pauli-sum Hamiltonians and the model Hamiltonians used by the
//! optimizers.
//!
//! Coefficients are angular frequencies (rad/s) and qubit 0 is the leftmost
//! Kronecker factor.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use ndarray::{Array1, Array3, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{fnv1a, CMatrix, C64, I, ONE, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    fn flips(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    /// Matrix element `<row|P|col>` where `col_bit` is the column's bit and the
    /// row bit is implied by `flips`.
    fn element(self, col_bit: bool) -> C64 {
        match (self, col_bit) {
            (Pauli::I, _) | (Pauli::X, _) => ONE,
            (Pauli::Y, false) => I,
            (Pauli::Y, true) => -I,
            (Pauli::Z, false) => ONE,
            (Pauli::Z, true) => -ONE,
        }
    }
}

/// The standard 2x2 Pauli matrix.
pub fn pauli_matrix(letter: Pauli) -> CMatrix {
    let v = match letter {
        Pauli::I => [ONE, ZERO, ZERO, ONE],
        Pauli::X => [ZERO, ONE, ONE, ZERO],
        Pauli::Y => [ZERO, -I, I, ZERO],
        Pauli::Z => [ONE, ZERO, ZERO, -ONE],
    };
    CMatrix::from_shape_vec((2, 2), v.to_vec()).expect("2x2")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliString {
    pub coefficient: f64,
    pub letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(coefficient: f64, letters: Vec<Pauli>) -> Result<Self> {
        if !coefficient.is_finite() {
            return Err(Error::Validation(format!(
                "Pauli coefficient must be finite, got {coefficient}"
            )));
        }
        if letters.is_empty() {
            return Err(Error::InvalidSize("Pauli string needs at least one letter".into()));
        }
        Ok(Self {
            coefficient,
            letters,
        })
    }

    /// Parse letters such as `"ZIZ"`.
    pub fn parse(coefficient: f64, letters: &str) -> Result<Self> {
        let letters = letters
            .chars()
            .map(|c| {
                Pauli::from_char(c)
                    .ok_or_else(|| Error::Validation(format!("unknown Pauli letter {c:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(coefficient, letters)
    }

    /// `coefficient * P_qubit` on an n-qubit register.
    pub fn single(n: usize, qubit: usize, letter: Pauli, coefficient: f64) -> Self {
        let mut letters = vec![Pauli::I; n];
        letters[qubit] = letter;
        Self {
            coefficient,
            letters,
        }
    }

    /// `coefficient * P_a P_b` on an n-qubit register.
    pub fn pair(n: usize, a: usize, b: usize, letter: Pauli, coefficient: f64) -> Self {
        let mut letters = vec![Pauli::I; n];
        letters[a] = letter;
        letters[b] = letter;
        Self {
            coefficient,
            letters,
        }
    }

    pub fn n(&self) -> usize {
        self.letters.len()
    }

    pub fn is_diagonal(&self) -> bool {
        self.letters.iter().all(|p| matches!(p, Pauli::I | Pauli::Z))
    }

    /// Bit mask of flipped qubits (X or Y), in basis-index convention.
    pub(crate) fn flip_mask(&self) -> usize {
        let n = self.n();
        self.letters
            .iter()
            .enumerate()
            .filter(|(_, p)| p.flips())
            .fold(0, |acc, (q, _)| acc | (1 << (n - 1 - q)))
    }

    /// Matrix element `<col ^ mask| P |col>` without the coefficient.
    pub(crate) fn phase_for_column(&self, col: usize) -> C64 {
        let n = self.n();
        self.letters
            .iter()
            .enumerate()
            .fold(ONE, |acc, (q, p)| acc * p.element(col >> (n - 1 - q) & 1 == 1))
    }

    /// Add `scale * coefficient * P` into `out`.
    pub(crate) fn accumulate_into(&self, out: &mut CMatrix, scale: f64) {
        let mask = self.flip_mask();
        let c = self.coefficient * scale;
        for col in 0..out.ncols() {
            out[[col ^ mask, col]] += self.phase_for_column(col) * c;
        }
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let letters: String = self.letters.iter().map(|p| p.as_char()).collect();
        write!(f, "{}*{}", self.coefficient, letters)
    }
}

/// `coefficient * (letter_1 ⊗ ... ⊗ letter_n)`.
pub fn string_to_matrix(s: &PauliString, n: usize) -> Result<CMatrix> {
    if s.letters.len() != n {
        return Err(Error::Dimension(format!(
            "Pauli string has {} letters but the register has {n} qubits",
            s.letters.len()
        )));
    }
    let dim = 1usize << n;
    let mut out = CMatrix::zeros((dim, dim));
    s.accumulate_into(&mut out, 1.0);
    Ok(out)
}

/// A real-weighted sum of Pauli strings with a lazily built dense matrix.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    n: usize,
    terms: Vec<PauliString>,
    dense: OnceLock<CMatrix>,
}

impl Hamiltonian {
    pub fn new(n: usize, terms: Vec<PauliString>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize("Hamiltonian needs at least one qubit".into()));
        }
        if let Some(bad) = terms.iter().find(|t| t.letters.len() != n) {
            return Err(Error::Dimension(format!(
                "term {bad} does not act on {n} qubits"
            )));
        }
        if let Some(bad) = terms.iter().find(|t| !t.coefficient.is_finite()) {
            return Err(Error::Validation(format!("term {bad} has a non-finite coefficient")));
        }
        Ok(Self {
            n,
            terms,
            dense: OnceLock::new(),
        })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            n,
            terms: Vec::new(),
            dense: OnceLock::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn terms(&self) -> &[PauliString] {
        &self.terms
    }

    /// Dense `2^n x 2^n` matrix, built on first access.
    pub fn dense(&self) -> &CMatrix {
        self.dense.get_or_init(|| {
            let dim = self.dim();
            let mut out = CMatrix::zeros((dim, dim));
            for t in &self.terms {
                t.accumulate_into(&mut out, 1.0);
            }
            out
        })
    }

    /// True when every term is built from `I` and `Z` only.
    pub fn is_diagonal(&self) -> bool {
        self.terms.iter().all(PauliString::is_diagonal)
    }

    /// Real diagonal for Z-only Hamiltonians, evaluated term by term.
    pub fn diagonal(&self) -> Option<Array1<f64>> {
        if !self.is_diagonal() {
            return None;
        }
        let mut diag = Array1::<f64>::zeros(self.dim());
        for t in &self.terms {
            for (idx, d) in diag.iter_mut().enumerate() {
                *d += t.coefficient * t.phase_for_column(idx).re;
            }
        }
        Some(diag)
    }

    /// Identity of the operator, derived from its exact term list.
    pub fn fingerprint(&self) -> u64 {
        let bytes = self.terms.iter().flat_map(|t| {
            t.coefficient
                .to_bits()
                .to_le_bytes()
                .into_iter()
                .chain(t.letters.iter().map(|p| p.as_char() as u8))
        });
        fnv1a((self.n as u64).to_le_bytes().into_iter().chain(bytes))
    }

    /// `self + other` as a new Hamiltonian (term lists concatenated).
    pub fn plus(&self, other: &Hamiltonian) -> Result<Hamiltonian> {
        if self.n != other.n {
            return Err(Error::Dimension(format!(
                "cannot add {}-qubit and {}-qubit Hamiltonians",
                self.n, other.n
            )));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Hamiltonian::new(self.n, terms)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelTag {
    RandomIsing,
    Nmr,
    HeisenbergSquare,
}

impl FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-ising" => Ok(ModelTag::RandomIsing),
            "nmr" => Ok(ModelTag::Nmr),
            "heisenberg-square" => Ok(ModelTag::HeisenbergSquare),
            other => Err(Error::Validation(format!("unknown model tag {other:?}"))),
        }
    }
}

/// Physical description of a spin register.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinSystemSpec {
    pub n: usize,
    /// Larmor frequencies in rad/s.
    pub larmor: Vec<f64>,
    /// Symmetric coupling matrix in Hz, zero diagonal.
    pub couplings: Vec<Vec<f64>>,
    pub model: ModelTag,
}

impl SpinSystemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidSize("spin system needs n >= 1".into()));
        }
        if self.larmor.len() != self.n {
            return Err(Error::Validation(format!(
                "larmor has {} entries, expected {}",
                self.larmor.len(),
                self.n
            )));
        }
        if let Some(w) = self.larmor.iter().find(|w| !w.is_finite()) {
            return Err(Error::Validation(format!("larmor frequency {w} is not finite")));
        }
        if self.couplings.len() != self.n || self.couplings.iter().any(|r| r.len() != self.n) {
            return Err(Error::Validation(format!(
                "couplings must be a {0}x{0} matrix",
                self.n
            )));
        }
        for i in 0..self.n {
            if self.couplings[i][i] != 0.0 {
                return Err(Error::Validation(format!(
                    "couplings diagonal entry ({0},{0}) must be zero",
                    i + 1
                )));
            }
            for j in 0..i {
                let (a, b) = (self.couplings[i][j], self.couplings[j][i]);
                if !a.is_finite() || a != b {
                    return Err(Error::Validation(format!(
                        "couplings matrix is not symmetric at ({}, {}): {b} vs {a}",
                        j + 1,
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Nearest-neighbour ZZ chain with coefficients uniform in `[0, 1]`.
pub fn build_random_ising(n: usize, seed: u64) -> Result<Hamiltonian> {
    if n < 2 {
        return Err(Error::InvalidSize(format!(
            "random Ising chain needs n >= 2, got {n}"
        )));
    }
    let mut rng = rng_for(seed);
    let terms = (0..n - 1)
        .map(|j| PauliString::pair(n, j, j + 1, Pauli::Z, rng.gen_range(0.0..=1.0)))
        .collect();
    Hamiltonian::new(n, terms)
}

/// `M x n x 2` control amplitudes uniform in `[-1, 1]`; last axis is (x, y).
pub fn build_random_control(n: usize, slices: usize, seed: u64) -> Result<Array3<f64>> {
    if n == 0 || slices == 0 {
        return Err(Error::InvalidSize(format!(
            "random control needs n >= 1 and M >= 1, got n={n}, M={slices}"
        )));
    }
    let mut rng = rng_for(seed);
    Ok(Array3::from_shape_simple_fn((slices, n, 2), || {
        rng.gen_range(-1.0..=1.0)
    }))
}

/// `-Σ ω_i Z_i / 2 + Σ_{i<j} π J_ij Z_i Z_j / 2`.
pub fn build_nmr_hamiltonian(spec: &SpinSystemSpec) -> Result<Hamiltonian> {
    spec.validate()?;
    let n = spec.n;
    let mut terms: Vec<PauliString> = spec
        .larmor
        .iter()
        .enumerate()
        .map(|(i, w)| PauliString::single(n, i, Pauli::Z, -w / 2.0))
        .collect();
    for i in 0..n {
        for j in i + 1..n {
            let jij = spec.couplings[i][j];
            if jij != 0.0 {
                terms.push(PauliString::pair(n, i, j, Pauli::Z, PI * jij / 2.0));
            }
        }
    }
    Hamiltonian::new(n, terms)
}

/// Edges of the 2x2 square plaquette, sites numbered row-major (0-based).
pub const SQUARE_EDGES: [(usize, usize); 4] = [(0, 1), (1, 3), (3, 2), (2, 0)];

/// `J Σ_<ij> (XX + YY + ZZ) + Bz Σ_i Z_i` on the 4-site plaquette.
pub fn build_heisenberg_square(j: f64, bz: f64) -> Result<Hamiltonian> {
    let n = 4;
    let mut terms = Vec::with_capacity(16);
    for &(a, b) in &SQUARE_EDGES {
        for p in [Pauli::X, Pauli::Y, Pauli::Z] {
            terms.push(PauliString::pair(n, a, b, p, j));
        }
    }
    for site in 0..n {
        terms.push(PauliString::single(n, site, Pauli::Z, bz));
    }
    Hamiltonian::new(n, terms)
}

/// `Σ_j (u_x^j X_j + u_y^j Y_j)` from an `n x 2` amplitude array.
pub fn control_hamiltonian(amplitudes: ArrayView2<f64>) -> Result<Hamiltonian> {
    if amplitudes.ncols() != 2 {
        return Err(Error::Dimension(format!(
            "control amplitudes must be n x 2, got {:?}",
            amplitudes.dim()
        )));
    }
    let n = amplitudes.nrows();
    let mut terms = Vec::with_capacity(2 * n);
    for (j, row) in amplitudes.outer_iter().enumerate() {
        if row[0] != 0.0 {
            terms.push(PauliString::single(n, j, Pauli::X, row[0]));
        }
        if row[1] != 0.0 {
            terms.push(PauliString::single(n, j, Pauli::Y, row[1]));
        }
    }
    Hamiltonian::new(n, terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{is_diagonal, is_hermitian, kron, max_abs_diff};
    use ndarray::array;

    fn kron_oracle(s: &PauliString) -> CMatrix {
        let mut m = CMatrix::eye(1);
        for p in &s.letters {
            m = kron(&m, &pauli_matrix(*p));
        }
        m.mapv(|z| z * s.coefficient)
    }

    #[test]
    fn pauli_matrices() {
        let x = pauli_matrix(Pauli::X);
        assert_eq!(x, array![[ZERO, ONE], [ONE, ZERO]]);
        assert_eq!(pauli_matrix(Pauli::I), CMatrix::eye(2));
        let y = pauli_matrix(Pauli::Y);
        assert_eq!(y.dot(&y), CMatrix::eye(2));
        for p in [Pauli::X, Pauli::Y, Pauli::Z] {
            let m = pauli_matrix(p);
            assert!(is_hermitian(&m, 0.0));
            assert_eq!(m.dot(&m), CMatrix::eye(2));
        }
    }

    #[test]
    fn zz_string_is_the_expected_diagonal() {
        let s = PauliString::parse(1.0, "ZZ").unwrap();
        let m = string_to_matrix(&s, 2).unwrap();
        let d: Vec<f64> = m.diag().iter().map(|z| z.re).collect();
        assert_eq!(d, vec![1.0, -1.0, -1.0, 1.0]);
        assert!(is_diagonal(&m));
    }

    #[test]
    fn strings_match_the_kronecker_oracle() {
        for (c, l) in [(2.0, "XI"), (0.7, "ZIZ"), (-1.3, "YXZ"), (0.4, "IYIY")] {
            let s = PauliString::parse(c, l).unwrap();
            let m = string_to_matrix(&s, l.len()).unwrap();
            assert!(max_abs_diff(&m, &kron_oracle(&s)) < 1e-15, "{l}");
        }
    }

    #[test]
    fn length_mismatch_is_a_dimension_error() {
        let s = PauliString::parse(1.0, "ZZ").unwrap();
        assert!(matches!(string_to_matrix(&s, 3), Err(Error::Dimension(_))));
    }

    #[test]
    fn random_ising_structure_and_determinism() {
        let h = build_random_ising(2, 11).unwrap();
        assert_eq!(h.terms().len(), 1);
        assert!((0.0..=1.0).contains(&h.terms()[0].coefficient));

        let h7 = build_random_ising(7, 3).unwrap();
        assert_eq!(h7.terms().len(), 6);
        assert!(is_diagonal(h7.dense()));

        let a = build_random_ising(4, 99).unwrap();
        let b = build_random_ising(4, 99).unwrap();
        let bits = |h: &Hamiltonian| -> Vec<u64> {
            h.terms().iter().map(|t| t.coefficient.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert!(matches!(build_random_ising(1, 0), Err(Error::InvalidSize(_))));
    }

    #[test]
    fn random_control_range_and_shape() {
        let u = build_random_control(1, 1, 5).unwrap();
        assert_eq!(u.len(), 2);
        let u = build_random_control(5, 40, 5).unwrap();
        assert!(u.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(u, build_random_control(5, 40, 5).unwrap());
        assert!(build_random_control(0, 3, 1).is_err());
    }

    fn spec(n: usize, larmor: Vec<f64>, couplings: Vec<Vec<f64>>) -> SpinSystemSpec {
        SpinSystemSpec {
            n,
            larmor,
            couplings,
            model: ModelTag::Nmr,
        }
    }

    #[test]
    fn nmr_single_spin() {
        let h = build_nmr_hamiltonian(&spec(1, vec![2.0 * PI * 100.0], vec![vec![0.0]])).unwrap();
        assert_eq!(h.terms().len(), 1);
        assert!((h.terms()[0].coefficient + PI * 100.0).abs() < 1e-12);
        assert_eq!(h.terms()[0].letters, vec![Pauli::Z]);
    }

    #[test]
    fn nmr_pure_coupling() {
        let h = build_nmr_hamiltonian(&spec(
            2,
            vec![0.0, 0.0],
            vec![vec![0.0, 10.0], vec![10.0, 0.0]],
        ))
        .unwrap();
        let zz = h
            .terms()
            .iter()
            .find(|t| t.letters == vec![Pauli::Z, Pauli::Z])
            .unwrap();
        assert!((zz.coefficient - 5.0 * PI).abs() < 1e-12);
        assert!(is_diagonal(h.dense()));
    }

    #[test]
    fn nmr_rejects_asymmetric_couplings() {
        let bad = spec(2, vec![0.0, 0.0], vec![vec![0.0, 10.0], vec![9.0, 0.0]]);
        assert!(matches!(build_nmr_hamiltonian(&bad), Err(Error::Validation(_))));
    }

    #[test]
    fn heisenberg_square_terms_and_reference_expectation() {
        let h = build_heisenberg_square(100.0, 100.0).unwrap();
        assert_eq!(h.terms().len(), 16);
        // <0000|H|0000>: each edge ZZ contributes +J, each site Z contributes +Bz.
        assert!((h.dense()[[0, 0]].re - 800.0).abs() < 1e-12);
        assert!(is_hermitian(h.dense(), 1e-12));
    }

    #[test]
    fn heisenberg_without_coupling_counts_spins() {
        let bz = 3.0;
        let h = build_heisenberg_square(0.0, bz).unwrap();
        assert!(is_diagonal(h.dense()));
        for idx in 0..16usize {
            let ones = idx.count_ones() as f64;
            let expect = bz * ((4.0 - ones) - ones);
            assert!((h.dense()[[idx, idx]].re - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn control_hamiltonian_cases() {
        let zero = control_hamiltonian(array![[0.0, 0.0], [0.0, 0.0]].view()).unwrap();
        assert!(zero.dense().iter().all(|z| *z == ZERO));

        let x = control_hamiltonian(array![[1.0, 0.0]].view()).unwrap();
        assert_eq!(*x.dense(), pauli_matrix(Pauli::X));

        let amps = array![[0.3, -0.8], [1.2, 0.5]];
        let h = control_hamiltonian(amps.view()).unwrap();
        let i2 = CMatrix::eye(2);
        let px = pauli_matrix(Pauli::X);
        let py = pauli_matrix(Pauli::Y);
        let oracle = kron(&px, &i2).mapv(|z| z * 0.3)
            + kron(&py, &i2).mapv(|z| z * -0.8)
            + kron(&i2, &px).mapv(|z| z * 1.2)
            + kron(&i2, &py).mapv(|z| z * 0.5);
        assert!(max_abs_diff(h.dense(), &oracle) < 1e-15);
    }

    #[test]
    fn diagonal_fast_path_agrees_with_dense() {
        let h = build_random_ising(5, 4).unwrap();
        let d = h.diagonal().unwrap();
        for (i, v) in d.iter().enumerate() {
            assert!((h.dense()[[i, i]].re - v).abs() < 1e-14);
        }
        assert!(build_heisenberg_square(1.0, 0.0).unwrap().diagonal().is_none());
    }

    #[test]
    fn fingerprints_track_terms() {
        let a = build_random_ising(4, 1).unwrap();
        assert_eq!(a.fingerprint(), build_random_ising(4, 1).unwrap().fingerprint());
        assert_ne!(a.fingerprint(), build_random_ising(4, 2).unwrap().fingerprint());
    }

    mod props {
        use super::*;
        use proptest::prelude::{any, prop, prop_assert, prop_oneof, proptest, Just, ProptestConfig, Strategy};

        fn letter() -> impl Strategy<Value = Pauli> {
            prop_oneof![Just(Pauli::I), Just(Pauli::X), Just(Pauli::Y), Just(Pauli::Z)]
        }

        fn term(n: usize) -> impl Strategy<Value = PauliString> {
            (-3.0..3.0f64, prop::collection::vec(letter(), n))
                .prop_map(|(c, l)| PauliString::new(c, l).unwrap())
        }

        fn hamiltonian() -> impl Strategy<Value = (usize, Vec<PauliString>)> {
            (1usize..=5).prop_flat_map(|n| (Just(n), prop::collection::vec(term(n), 1..6)))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn dense_matrix_is_linear_in_terms((n, terms) in hamiltonian()) {
                let h = Hamiltonian::new(n, terms.clone()).unwrap();
                let dim = 1 << n;
                let mut sum = CMatrix::zeros((dim, dim));
                for t in &terms {
                    sum = sum + kron_oracle(t);
                }
                prop_assert!(max_abs_diff(h.dense(), &sum) < 1e-12);
                prop_assert!(is_hermitian(h.dense(), 1e-12));
            }

            #[test]
            fn z_only_hamiltonians_are_exactly_diagonal(
                n in 1usize..=5,
                coeffs in prop::collection::vec(-2.0..2.0f64, 1..5),
                seed in any::<u64>(),
            ) {
                let mut rng = rng_for(seed);
                let terms = coeffs.iter().map(|&c| {
                    let letters = (0..n).map(|_| if rng.gen_bool(0.5) { Pauli::Z } else { Pauli::I }).collect();
                    PauliString::new(c, letters).unwrap()
                }).collect();
                let h = Hamiltonian::new(n, terms).unwrap();
                prop_assert!(is_diagonal(h.dense()));
            }
        }
    }
}
