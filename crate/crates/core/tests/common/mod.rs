#![allow(dead_code)]

use std::path::PathBuf;

use ndarray_linalg::Inverse;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trotterq::cli::GrapeExperiment;
use trotterq::config::{self, SystemConfig};
use trotterq::linalg::CMatrix;
use trotterq::pauli::Hamiltonian;
use trotterq::pulse::ControlPulse;

pub fn presets() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("presets")
}

pub fn system(name: &str) -> Hamiltonian {
    SystemConfig::from_file(&presets().join("systems").join(format!("{name}.toml")))
        .and_then(|s| s.hamiltonian())
        .unwrap()
}

/// A shipped GRAPE preset with overrides applied and its system inlined.
pub fn grape_preset(name: &str, overrides: &[&str]) -> (GrapeExperiment, Hamiltonian) {
    let set: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    let loaded = config::load::<GrapeExperiment>(&presets().join(format!("{name}.toml")), &set).unwrap();
    let mut exp = loaded.config;
    exp.system = exp.system.resolve(&loaded.base_dir).unwrap();
    let h = exp.system.hamiltonian().unwrap();
    (exp, h)
}

fn one_norm(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(A)` by a [6/6] Padé approximant with scaling and squaring.
///
/// Shares nothing with the library's eigendecomposition path.
pub fn expm_pade(a: &CMatrix) -> CMatrix {
    const C: [f64; 7] = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15840.0,
        1.0 / 665280.0,
    ];
    let norm = one_norm(a);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let x = a.mapv(|z| z / 2f64.powi(s));
    let dim = a.nrows();
    let mut p = CMatrix::eye(dim);
    let mut q = CMatrix::eye(dim);
    let mut xk = CMatrix::eye(dim);
    for (k, c) in C.iter().enumerate().skip(1) {
        xk = xk.dot(&x);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        p = p + xk.mapv(|z| z * *c);
        q = q + xk.mapv(|z| z * (*c * sign));
    }
    let mut r = q.inv().unwrap().dot(&p);
    for _ in 0..s {
        r = r.dot(&r);
    }
    r
}

/// `exp(-i H t)` through [`expm_pade`].
pub fn expm_hermitian_pade(h: &CMatrix, t: f64) -> CMatrix {
    expm_pade(&h.mapv(|z| z * C64::new(0.0, -t)))
}

/// Slice-by-slice product of exact slice exponentials, built independently.
pub fn reference_propagator(h_s: &Hamiltonian, pulse: &ControlPulse) -> CMatrix {
    let n = h_s.n();
    let dim = 1usize << n;
    let x = trotterq::pauli::pauli_matrix(trotterq::Pauli::X);
    let y = trotterq::pauli::pauli_matrix(trotterq::Pauli::Y);
    let embed = |op: &CMatrix, q: usize| {
        let mut m = CMatrix::eye(1);
        for k in 0..n {
            let f = if k == q { op.clone() } else { CMatrix::eye(2) };
            m = trotterq::linalg::kron(&m, &f);
        }
        m
    };
    let mut u = CMatrix::eye(dim);
    for m in 0..pulse.slices() {
        let amps = pulse.slice(m);
        let mut h = h_s.dense().clone();
        for q in 0..n {
            h = h + embed(&x, q).mapv(|z| z * amps[[q, 0]]) + embed(&y, q).mapv(|z| z * amps[[q, 1]]);
        }
        u = expm_hermitian_pade(&h, pulse.tau).dot(&u);
    }
    u
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_pulse(rng: &mut ChaCha8Rng, n: usize, slices: usize, tau: f64, scale: f64) -> ControlPulse {
    let amps = ndarray::Array3::from_shape_simple_fn((slices, n, 2), || rng.gen_range(-scale..=scale));
    ControlPulse::new(tau, amps).unwrap()
}
