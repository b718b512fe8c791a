//! Dense complex matrix helpers.
//!
//! Basis convention: qubit 0 is the leftmost Kronecker factor, i.e. the most
//! significant bit of a computational-basis index.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, ShapeBuilder, Zip};
use ndarray_linalg::{Eigh, EigValsh, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = Array2<C64>;
pub type CVector = Array1<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// A 2x2 complex matrix stored row-major: `[g00, g01, g10, g11]`.
pub type Gate2 = [C64; 4];

pub const GATE_IDENTITY: Gate2 = [ONE, ZERO, ZERO, ONE];

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::eye(dim)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.t().mapv(|z| z.conj())
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = CMatrix::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == ZERO {
                continue;
            }
            out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc])
                .zip_mut_with(b, |o, &bv| *o = aij * bv);
        }
    }
    out
}

pub fn gate_to_matrix(g: &Gate2) -> CMatrix {
    CMatrix::from_shape_vec((2, 2), g.to_vec()).expect("2x2")
}

pub fn gate_mul(a: &Gate2, b: &Gate2) -> Gate2 {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

pub fn gate_dagger(g: &Gate2) -> Gate2 {
    [g[0].conj(), g[2].conj(), g[1].conj(), g[3].conj()]
}

/// Kronecker product of one 2x2 gate per qubit, qubit 0 leftmost.
pub fn kron_gates(gates: &[Gate2]) -> CMatrix {
    let mut out = identity(1);
    for g in gates {
        out = kron(&out, &gate_to_matrix(g));
    }
    out
}

pub fn qubit_count(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::Dimension(format!("{dim} is not a power of two")));
    }
    Ok(dim.trailing_zeros() as usize)
}

#[inline]
fn bit_of(n: usize, qubit: usize) -> usize {
    1 << (n - 1 - qubit)
}

/// `m <- G_q m` for a gate acting on one qubit.
pub fn apply_gate_left(m: &mut CMatrix, n: usize, qubit: usize, g: &Gate2) {
    let mask = bit_of(n, qubit);
    let dim = m.nrows();
    for r0 in 0..dim {
        if r0 & mask != 0 {
            continue;
        }
        let r1 = r0 | mask;
        let (mut row0, mut row1) = m.multi_slice_mut((s![r0, ..], s![r1, ..]));
        Zip::from(&mut row0).and(&mut row1).for_each(|a, b| {
            let (x, y) = (*a, *b);
            *a = g[0] * x + g[1] * y;
            *b = g[2] * x + g[3] * y;
        });
    }
}

/// `m <- m G_q` for a gate acting on one qubit.
pub fn apply_gate_right(m: &mut CMatrix, n: usize, qubit: usize, g: &Gate2) {
    let mask = bit_of(n, qubit);
    let dim = m.ncols();
    for c0 in 0..dim {
        if c0 & mask != 0 {
            continue;
        }
        let c1 = c0 | mask;
        let (mut col0, mut col1) = m.multi_slice_mut((s![.., c0], s![.., c1]));
        Zip::from(&mut col0).and(&mut col1).for_each(|a, b| {
            let (x, y) = (*a, *b);
            *a = x * g[0] + y * g[2];
            *b = x * g[1] + y * g[3];
        });
    }
}

/// `v <- G_q v`.
pub fn apply_gate_vec(v: &mut CVector, n: usize, qubit: usize, g: &Gate2) {
    let mask = bit_of(n, qubit);
    for i0 in 0..v.len() {
        if i0 & mask != 0 {
            continue;
        }
        let i1 = i0 | mask;
        let (x, y) = (v[i0], v[i1]);
        v[i0] = g[0] * x + g[1] * y;
        v[i1] = g[2] * x + g[3] * y;
    }
}

/// Conjugated inner product `<a|b>`.
pub fn inner(a: ArrayView1<C64>, b: ArrayView1<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `Tr(a b†)` without forming the product.
pub fn trace_a_bdag(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

/// `Tr(a b)` without forming the product.
pub fn trace_of_product(a: ArrayView2<C64>, b: ArrayView2<C64>) -> C64 {
    let mut acc = ZERO;
    for (i, row) in a.outer_iter().enumerate() {
        acc += row
            .iter()
            .zip(b.column(i).iter())
            .map(|(x, y)| x * y)
            .sum::<C64>();
    }
    acc
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest entry of `|H - H†|`.
pub fn hermiticity_error(h: &CMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for ((i, j), z) in h.indexed_iter() {
        worst = worst.max((z - h[[j, i]].conj()).norm());
    }
    worst
}

pub fn is_hermitian(h: &CMatrix, rel_tol: f64) -> bool {
    h.is_square() && hermiticity_error(h) <= rel_tol * max_abs(h).max(f64::MIN_POSITIVE)
}

/// Largest entry of `|U†U - I|`.
pub fn unitarity_error(u: &CMatrix) -> f64 {
    let prod = dagger(u).dot(u);
    let mut worst = 0.0_f64;
    for ((i, j), z) in prod.indexed_iter() {
        let target = if i == j { ONE } else { ZERO };
        worst = worst.max((z - target).norm());
    }
    worst
}

pub fn is_diagonal(m: &CMatrix) -> bool {
    m.indexed_iter().all(|((i, j), z)| i == j || *z == ZERO)
}

/// Spectral norm (largest singular value).
pub fn operator_norm(a: &CMatrix) -> Result<f64> {
    let gram = dagger(a).dot(a);
    let vals = fortran_copy(&gram).eigvalsh(UPLO::Lower)?;
    let top = vals.iter().cloned().fold(0.0_f64, f64::max);
    Ok(top.max(0.0).sqrt())
}

/// Column-major copy; the LAPACK wrappers read row-major complex input as its
/// conjugate.
fn fortran_copy(h: &CMatrix) -> CMatrix {
    let mut f = CMatrix::zeros(h.raw_dim().f());
    f.assign(h);
    f
}

/// Eigendecomposition `H = V diag(w) V†` of a Hermitian matrix, ascending eigenvalues.
pub fn eigh(h: &CMatrix) -> Result<(Array1<f64>, CMatrix)> {
    let (w, v) = fortran_copy(h).eigh(UPLO::Lower)?;
    Ok((w, v.as_standard_layout().into_owned()))
}

pub fn eigvalsh(h: &CMatrix) -> Result<Array1<f64>> {
    Ok(fortran_copy(h).eigvalsh(UPLO::Lower)?)
}

/// Multiply `m` from the left by `diag(d)` in place.
pub fn scale_rows(m: &mut CMatrix, d: &CVector) {
    for (mut row, &di) in m.axis_iter_mut(Axis(0)).zip(d.iter()) {
        row.mapv_inplace(|z| z * di);
    }
}

/// Multiply `m` from the right by `diag(d)` in place.
pub fn scale_cols(m: &mut CMatrix, d: &CVector) {
    for (mut col, &di) in m.axis_iter_mut(Axis(1)).zip(d.iter()) {
        col.mapv_inplace(|z| z * di);
    }
}

/// `sin(x)/x` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Global phase aligned distance `min_φ ||a - e^{iφ} b||_max`, handy in tests.
pub fn phase_aligned_max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    let overlap = trace_a_bdag(a, b);
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        ONE
    };
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - phase * y).norm()))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).norm()))
}

/// Stable 64-bit FNV-1a over a byte stream; used to fingerprint operators.
pub(crate) fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
