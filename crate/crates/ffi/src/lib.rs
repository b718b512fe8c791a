//! C interface to trotterq.
//!
//! Objects are opaque handles created by `tq_*_new`-style functions and
//! released with the matching `tq_*_free`. Every fallible call returns a
//! [`TqStatus`]; on failure `tq_last_error()` describes what went wrong on the
//! calling thread. Complex arrays are interleaved `(re, im)` pairs, matrices
//! row-major, and control amplitudes are laid out `[slice][qubit][x, y]`.
//! Qubit 0 is the most significant bit of a basis index.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64;

use trotterq::grape::{random_initial_pulse, run_grape, GrapeProblem, RunStatus};
use trotterq::pauli::{build_heisenberg_square, build_nmr_hamiltonian, build_random_ising, ModelTag};
use trotterq::propagator::{cache_system_segments, propagator_infidelity};
use trotterq::{ControlPulse, Error, GrapeConfig, Hamiltonian, Objective, Propagator, PropagatorMode, SegmentCache, SpinSystemSpec};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TqStatus {
    Ok = 0,
    NullPointer = 1,
    Dimension = 2,
    InvalidSize = 3,
    Validation = 4,
    Domain = 5,
    Config = 6,
    Linalg = 7,
    Refused = 8,
    Io = 9,
    Panic = 10,
    Other = 11,
}

impl From<&Error> for TqStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Dimension(_) => TqStatus::Dimension,
            Error::InvalidSize(_) => TqStatus::InvalidSize,
            Error::Validation(_) => TqStatus::Validation,
            Error::Domain { .. } => TqStatus::Domain,
            Error::Config(_) => TqStatus::Config,
            Error::Linalg(_) => TqStatus::Linalg,
            Error::Refused(_) => TqStatus::Refused,
            Error::Io(_) => TqStatus::Io,
            _ => TqStatus::Other,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(TqStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(TqStatus::from(&e), e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn null(what: &str) -> Failure {
    Failure(TqStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Outcome) -> TqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TqStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            TqStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> std::result::Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> std::result::Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn mode_of(order: u32) -> std::result::Result<PropagatorMode, Failure> {
    let mode = if order == 0 {
        PropagatorMode::Direct
    } else {
        PropagatorMode::Trotter(u8::try_from(order).unwrap_or(u8::MAX))
    };
    Ok(mode.validate()?)
}

fn pulse_from(amps: &[f64], n: usize, slices: usize, tau: f64) -> std::result::Result<ControlPulse, Failure> {
    let a = Array3::from_shape_vec((slices, n, 2), amps.to_vec())
        .map_err(|e| Failure(TqStatus::Dimension, e.to_string()))?;
    Ok(ControlPulse::new(tau, a)?)
}

fn complex_vec(v: &[f64]) -> Array1<Complex64> {
    v.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

fn complex_matrix(v: &[f64], dim: usize) -> std::result::Result<Array2<Complex64>, Failure> {
    Array2::from_shape_vec((dim, dim), complex_vec(v).to_vec())
        .map_err(|e| Failure(TqStatus::Dimension, e.to_string()))
}

fn write_complex(src: impl IntoIterator<Item = Complex64>, dst: &mut [f64]) {
    for (z, c) in src.into_iter().zip(dst.chunks_exact_mut(2)) {
        c[0] = z.re;
        c[1] = z.im;
    }
}

/// Message for the last failed call on this thread, or null after a success.
///
/// The pointer stays valid until the next `tq_*` call on the same thread.
#[no_mangle]
pub extern "C" fn tq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opaque system Hamiltonian.
pub struct TqHamiltonian(Hamiltonian);

fn emit_hamiltonian(h: Hamiltonian, out: *mut *mut TqHamiltonian) -> Outcome {
    let slot = unsafe { output(out, 1, "out") }?;
    slot[0] = Box::into_raw(Box::new(TqHamiltonian(h)));
    Ok(())
}

/// Seeded random Ising Hamiltonian on `n >= 2` qubits.
///
/// # Safety
/// `out` must point to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn tq_hamiltonian_random_ising(n: usize, seed: u64, out: *mut *mut TqHamiltonian) -> TqStatus {
    guard(|| emit_hamiltonian(build_random_ising(n, seed)?, out))
}

/// NMR Hamiltonian from Larmor frequencies and J couplings, both in Hz.
///
/// `couplings_hz` is a symmetric `n x n` row-major matrix with zero diagonal.
///
/// # Safety
/// `larmor_hz` must hold `n` values, `couplings_hz` `n * n`, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tq_hamiltonian_nmr(
    n: usize,
    larmor_hz: *const f64,
    couplings_hz: *const f64,
    out: *mut *mut TqHamiltonian,
) -> TqStatus {
    guard(|| {
        let larmor = input(larmor_hz, n, "larmor_hz")?;
        let j = input(couplings_hz, n * n, "couplings_hz")?;
        let spec = SpinSystemSpec {
            n,
            larmor: larmor.iter().map(|f| 2.0 * std::f64::consts::PI * f).collect(),
            couplings: j.chunks(n.max(1)).map(<[f64]>::to_vec).collect(),
            model: ModelTag::Nmr,
        };
        emit_hamiltonian(build_nmr_hamiltonian(&spec)?, out)
    })
}

/// Four-qubit Heisenberg square with coupling `j` and field `bz`.
///
/// # Safety
/// `out` must point to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn tq_hamiltonian_heisenberg_square(j: f64, bz: f64, out: *mut *mut TqHamiltonian) -> TqStatus {
    guard(|| emit_hamiltonian(build_heisenberg_square(j, bz)?, out))
}

/// Number of qubits, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tq_hamiltonian_qubits(h: *const TqHamiltonian) -> usize {
    h.as_ref().map_or(0, |h| h.0.n())
}

/// # Safety
/// `h` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tq_hamiltonian_free(h: *mut TqHamiltonian) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Opaque propagator: a system Hamiltonian, a mode and a slice duration.
pub struct TqPropagator {
    h_s: Hamiltonian,
    mode: PropagatorMode,
    tau: f64,
    cache: Option<SegmentCache>,
}

/// Builds a propagator. `order` 0 is exact propagation, 1 to 4 a Trotter order.
///
/// The handle keeps its own copy of the Hamiltonian.
///
/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tq_propagator_new(
    h: *const TqHamiltonian,
    order: u32,
    tau: f64,
    out: *mut *mut TqPropagator,
) -> TqStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        let mode = mode_of(order)?;
        let cache = match mode.scheme()? {
            Some(s) => Some(cache_system_segments(&h.0, tau, &s)?),
            None => {
                Propagator::new(&h.0, mode, tau)?;
                None
            }
        };
        let slot = output(out, 1, "out")?;
        slot[0] = Box::into_raw(Box::new(TqPropagator {
            h_s: h.0.clone(),
            mode,
            tau,
            cache,
        }));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tq_propagator_free(p: *mut TqPropagator) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Full propagator of a pulse with `slices` slices.
///
/// `amplitudes` holds `slices * n * 2` values in rad/s; `out` receives
/// `2 * 4^n` doubles.
///
/// # Safety
/// `p` must be a live handle and both buffers must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn tq_propagator_evolve(
    p: *const TqPropagator,
    amplitudes: *const f64,
    slices: usize,
    out: *mut f64,
) -> TqStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("p"))?;
        let n = p.h_s.n();
        let pulse = pulse_from(input(amplitudes, slices * n * 2, "amplitudes")?, n, slices, p.tau)?;
        let prop = Propagator::with_cache(&p.h_s, p.mode, p.cache.clone(), p.tau)?;
        let u = prop.evolve(&pulse)?;
        write_complex(u.iter().copied(), output(out, 2 * u.len(), "out")?);
        Ok(())
    })
}

/// Phase-insensitive infidelity `1 - |tr(A^dagger B)|^2 / d^2` of two `dim x dim` unitaries.
///
/// # Safety
/// `a` and `b` must hold `2 * dim * dim` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tq_propagator_infidelity(a: *const f64, b: *const f64, dim: usize, out: *mut f64) -> TqStatus {
    guard(|| {
        let a = complex_matrix(input(a, 2 * dim * dim, "a")?, dim)?;
        let b = complex_matrix(input(b, 2 * dim * dim, "b")?, dim)?;
        output(out, 1, "out")?[0] = propagator_infidelity(&a, &b)?;
        Ok(())
    })
}

/// GRAPE settings. `order` follows `tq_propagator_new`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct TqGrapeOptions {
    pub order: u32,
    pub slices: usize,
    pub tau: f64,
    /// Scale of the random initial amplitudes, rad/s.
    pub initial_amplitude: f64,
    pub seed: u64,
    pub max_iters: usize,
    pub stop_fidelity: f64,
}

/// Outcome of one optimization.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct TqGrapeResult {
    pub iterations: usize,
    /// 0 converged, 1 iteration limit, 2 stalled.
    pub status: u32,
    /// Fidelity under the optimization mode.
    pub estimated_fidelity: f64,
    /// Fidelity under exact propagation.
    pub true_fidelity: f64,
    pub wall_time_s: f64,
}

/// State-to-state GRAPE from `initial` to `target` (each `2 * 2^n` doubles).
///
/// The optimized amplitudes (`slices * n * 2` doubles) go to `amplitudes_out`
/// when it is non-null.
///
/// # Safety
/// All non-null buffers must have the stated lengths; `h`, `options` and
/// `result` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tq_grape_state_transfer(
    h: *const TqHamiltonian,
    initial: *const f64,
    target: *const f64,
    options: *const TqGrapeOptions,
    amplitudes_out: *mut f64,
    result: *mut TqGrapeResult,
) -> TqStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        let o = *options.as_ref().ok_or_else(|| null("options"))?;
        let n = h.0.n();
        let dim = h.0.dim();
        let objective = Objective::state(
            complex_vec(input(initial, 2 * dim, "initial")?),
            complex_vec(input(target, 2 * dim, "target")?),
        )?;
        let config = GrapeConfig {
            mode: mode_of(o.order)?,
            stop_fidelity: o.stop_fidelity,
            max_iters: o.max_iters,
            seed: o.seed,
            ..GrapeConfig::default()
        };
        let problem = GrapeProblem {
            h_s: &h.0,
            objective: &objective,
            initial: random_initial_pulse(n, o.slices, o.tau, o.initial_amplitude, o.seed)?,
        };
        let trace = run_grape(problem, &config)?;
        let slot = output(result, 1, "result")?;
        slot[0] = TqGrapeResult {
            iterations: trace.iterations(),
            status: match trace.status {
                RunStatus::Converged => 0,
                RunStatus::MaxIterations => 1,
                RunStatus::Stalled => 2,
            },
            estimated_fidelity: trace.estimated_fidelity,
            true_fidelity: trace.true_fidelity,
            wall_time_s: trace.wall_time_s,
        };
        if !amplitudes_out.is_null() {
            let flat = trace.final_pulse.as_flat();
            output(amplitudes_out, flat.len(), "amplitudes_out")?.copy_from_slice(&flat);
        }
        Ok(())
    })
}
