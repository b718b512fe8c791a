use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use trotterq_ffi::*;

fn last_error() -> String {
    let p = tq_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn ising(n: usize) -> *mut TqHamiltonian {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { tq_hamiltonian_random_ising(n, 7, &mut h) }, TqStatus::Ok);
    h
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(tq_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn trotter_propagators_approach_the_exact_one() {
    let h = ising(3);
    assert_eq!(unsafe { tq_hamiltonian_qubits(h) }, 3);
    let slices = 4;
    let amps: Vec<f64> = (0..slices * 3 * 2).map(|k| ((k * 37 % 11) as f64 - 5.0) * 0.2).collect();
    let mut unitaries = Vec::new();
    for order in 0..=4 {
        let mut p = ptr::null_mut();
        assert_eq!(unsafe { tq_propagator_new(h, order, 0.01, &mut p) }, TqStatus::Ok);
        let mut u = vec![0.0; 2 * 64];
        assert_eq!(unsafe { tq_propagator_evolve(p, amps.as_ptr(), slices, u.as_mut_ptr()) }, TqStatus::Ok);
        unsafe { tq_propagator_free(p) };
        unitaries.push(u);
    }
    let mut errs = Vec::new();
    for u in &unitaries[1..] {
        let mut inf = -1.0;
        let s = unsafe { tq_propagator_infidelity(u.as_ptr(), unitaries[0].as_ptr(), 8, &mut inf) };
        assert_eq!(s, TqStatus::Ok);
        errs.push(inf);
    }
    assert!(errs.iter().all(|e| (0.0..1e-4).contains(e)), "{errs:?}");
    assert!(errs[3] < errs[0], "{errs:?}");
    unsafe { tq_hamiltonian_free(h) };
}

#[test]
fn errors_map_to_codes_and_messages() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { tq_hamiltonian_random_ising(1, 0, &mut h) }, TqStatus::InvalidSize);
    assert!(h.is_null());
    assert!(!last_error().is_empty());

    let h = ising(2);
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { tq_propagator_new(h, 5, 0.1, &mut p) }, TqStatus::Validation);
    assert!(last_error().contains('5'));
    assert_eq!(unsafe { tq_propagator_new(h, 1, -1.0, &mut p) }, TqStatus::Validation);
    assert_eq!(unsafe { tq_propagator_new(ptr::null(), 1, 0.1, &mut p) }, TqStatus::NullPointer);
    assert!(last_error().contains('h'));
    assert!(p.is_null());

    // success clears the message
    assert_eq!(unsafe { tq_propagator_new(h, 2, 0.1, &mut p) }, TqStatus::Ok);
    assert!(tq_last_error().is_null());
    let amps = [0.0; 4];
    assert_eq!(unsafe { tq_propagator_evolve(p, ptr::null(), 1, ptr::null_mut()) }, TqStatus::NullPointer);
    assert_eq!(unsafe { tq_propagator_evolve(p, amps.as_ptr(), 1, ptr::null_mut()) }, TqStatus::NullPointer);
    unsafe {
        tq_propagator_free(p);
        tq_hamiltonian_free(h);
        tq_hamiltonian_free(ptr::null_mut());
        tq_propagator_free(ptr::null_mut());
    }
}

#[test]
fn nmr_and_heisenberg_constructors() {
    let larmor = [-500.0, 300.0];
    let j = [0.0, 40.0, 40.0, 0.0];
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { tq_hamiltonian_nmr(2, larmor.as_ptr(), j.as_ptr(), &mut h) }, TqStatus::Ok);
    assert_eq!(unsafe { tq_hamiltonian_qubits(h) }, 2);
    unsafe { tq_hamiltonian_free(h) };

    let asym = [0.0, 40.0, 10.0, 0.0];
    let mut bad = ptr::null_mut();
    assert_ne!(unsafe { tq_hamiltonian_nmr(2, larmor.as_ptr(), asym.as_ptr(), &mut bad) }, TqStatus::Ok);

    let mut sq = ptr::null_mut();
    assert_eq!(unsafe { tq_hamiltonian_heisenberg_square(1.0, 1.0, &mut sq) }, TqStatus::Ok);
    assert_eq!(unsafe { tq_hamiltonian_qubits(sq) }, 4);
    unsafe { tq_hamiltonian_free(sq) };
}

#[test]
fn grape_prepares_a_bell_pair() {
    let h = ising(2);
    let mut initial = vec![0.0; 8];
    initial[0] = 1.0;
    let mut target = vec![0.0; 8];
    target[0] = std::f64::consts::FRAC_1_SQRT_2;
    target[6] = std::f64::consts::FRAC_1_SQRT_2;
    let options = TqGrapeOptions {
        order: 0,
        slices: 60,
        tau: 0.1,
        initial_amplitude: 1.0,
        seed: 3,
        max_iters: 500,
        stop_fidelity: 0.999,
    };
    let mut amps = vec![0.0; 60 * 2 * 2];
    let mut result = TqGrapeResult::default();
    let s = unsafe {
        tq_grape_state_transfer(h, initial.as_ptr(), target.as_ptr(), &options, amps.as_mut_ptr(), &mut result)
    };
    assert_eq!(s, TqStatus::Ok, "{}", last_error());
    assert!(result.true_fidelity >= 0.999, "{result:?}");
    assert_eq!(result.estimated_fidelity, result.true_fidelity);
    assert!(amps.iter().any(|a| *a != 0.0));

    let bad = TqGrapeOptions { stop_fidelity: 1.5, ..options };
    let s = unsafe { tq_grape_state_transfer(h, initial.as_ptr(), target.as_ptr(), &bad, ptr::null_mut(), &mut result) };
    assert_eq!(s, TqStatus::Validation);
    unsafe { tq_hamiltonian_free(h) };
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/trotterq.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["tq_last_error", "tq_propagator_evolve", "tq_grape_state_transfer", "TQ_STATUS_PANIC"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"]).arg(&header).output() else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
