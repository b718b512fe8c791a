//! Fidelities and their exact gradients with respect to every control amplitude.

use ndarray::{Array2, Array3};

use super::Objective;
use crate::error::{Error, Result};
use crate::linalg::{
    apply_gate_vec, dagger, inner, kron_gates, scale_cols, sinc, trace_of_product, CMatrix,
    CVector, Gate2, C64, I, ZERO,
};
use crate::pauli::{Pauli, PauliString};
use crate::propagator::{
    rotation_gate_with_derivatives, PropagatorMode, Propagator, SegmentCache, SliceOp, Spectral,
};
use crate::pulse::ControlPulse;
use crate::Hamiltonian;

/// Evaluates `f_l` and `∂f_l/∂u` for one `(H_S, objective, mode, τ)`.
pub struct Evaluator<'a> {
    prop: Propagator<'a>,
    objective: &'a Objective,
    controls: Vec<[PauliString; 2]>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        h_s: &'a Hamiltonian,
        objective: &'a Objective,
        mode: PropagatorMode,
        tau: f64,
    ) -> Result<Self> {
        Self::from_propagator(Propagator::new(h_s, mode, tau)?, objective)
    }

    pub fn with_cache(
        h_s: &'a Hamiltonian,
        objective: &'a Objective,
        mode: PropagatorMode,
        cache: Option<SegmentCache>,
        tau: f64,
    ) -> Result<Self> {
        Self::from_propagator(Propagator::with_cache(h_s, mode, cache, tau)?, objective)
    }

    fn from_propagator(prop: Propagator<'a>, objective: &'a Objective) -> Result<Self> {
        let n = prop.n();
        if objective.dim() != prop.h_s().dim() {
            return Err(Error::Dimension(format!(
                "objective has dimension {} but H_S has {}",
                objective.dim(),
                prop.h_s().dim()
            )));
        }
        let controls = (0..n)
            .map(|j| {
                [
                    PauliString::single(n, j, Pauli::X, 1.0),
                    PauliString::single(n, j, Pauli::Y, 1.0),
                ]
            })
            .collect();
        Ok(Self {
            prop,
            objective,
            controls,
        })
    }

    pub fn propagator(&self) -> &Propagator<'a> {
        &self.prop
    }

    pub fn mode(&self) -> PropagatorMode {
        self.prop.mode()
    }

    fn check(&self, pulse: &ControlPulse) -> Result<()> {
        pulse.validate()?;
        if pulse.n() != self.prop.n() {
            return Err(Error::Dimension(format!(
                "pulse drives {} qubits but H_S has {}",
                pulse.n(),
                self.prop.n()
            )));
        }
        Ok(())
    }

    pub fn fidelity(&self, pulse: &ControlPulse) -> Result<f64> {
        self.check(pulse)?;
        match self.objective {
            Objective::State { initial, target } => {
                let out = self.prop.evolve_state(pulse, initial)?;
                Ok(inner(target.view(), out.view()).norm_sqr().min(1.0))
            }
            Objective::Gate { .. } => self.objective.fidelity(&self.prop.evolve(pulse)?),
        }
    }

    pub fn fidelity_and_gradient(&self, pulse: &ControlPulse) -> Result<(f64, Array3<f64>)> {
        self.check(pulse)?;
        let (a, da) = match (self.objective, self.prop.mode()) {
            (Objective::State { initial, target }, PropagatorMode::Direct) => {
                self.state_direct(pulse, initial, target)?
            }
            (Objective::State { initial, target }, PropagatorMode::Trotter(_)) => {
                self.state_trotter(pulse, initial, target)?
            }
            (Objective::Gate { target }, PropagatorMode::Direct) => {
                self.gate_direct(pulse, target)?
            }
            (Objective::Gate { target }, PropagatorMode::Trotter(_)) => {
                self.gate_trotter(pulse, target)?
            }
        };
        let norm = self.objective.normalization();
        let f = (a.norm_sqr() / norm).min(1.0);
        let grad = da.mapv(|d| 2.0 * (a.conj() * d).re / norm);
        Ok((f, grad))
    }

    /// `Σ_c E_{c⊕mask, c} K_{c⊕mask, c}` for a Pauli string `E`.
    fn pauli_contract(e: &PauliString, k: &CMatrix) -> C64 {
        let mask = e.flip_mask();
        (0..k.ncols())
            .map(|c| e.phase_for_column(c) * k[[c ^ mask, c]])
            .sum()
    }

    /// Divided differences of `λ ↦ exp(-iλτ)` over the slice spectrum.
    fn divided_differences(spec: &Spectral, tau: f64) -> CMatrix {
        let l = &spec.values;
        Array2::from_shape_fn((l.len(), l.len()), |(a, b)| {
            let mean = 0.5 * (l[a] + l[b]);
            let half = 0.5 * tau * (l[a] - l[b]);
            -I * tau * C64::from_polar(1.0, -tau * mean) * sinc(half)
        })
    }

    /// Given `W` in the eigenbasis, `da` for every control direction of the slice.
    fn direct_components(&self, spec: &Spectral, w: &CMatrix, out: &mut [C64]) {
        let v = &spec.vectors;
        let k = v.mapv(|z| z.conj()).dot(w).dot(&v.t());
        for (j, pair) in self.controls.iter().enumerate() {
            out[2 * j] = Self::pauli_contract(&pair[0], &k);
            out[2 * j + 1] = Self::pauli_contract(&pair[1], &k);
        }
    }

    fn state_direct(
        &self,
        pulse: &ControlPulse,
        initial: &CVector,
        target: &CVector,
    ) -> Result<(C64, Array3<C64>)> {
        let tau = self.prop.tau();
        let slices = pulse.slices();
        let mut spectra = Vec::with_capacity(slices);
        let mut states = Vec::with_capacity(slices + 1);
        states.push(initial.clone());
        for m in 0..slices {
            let spec = self.prop.slice_spectral(pulse.slice(m))?;
            let mut v = dagger(&spec.vectors).dot(&states[m]);
            v *= &spec.phases(tau);
            states.push(spec.vectors.dot(&v));
            spectra.push(spec);
        }
        let a = inner(target.view(), states[slices].view());
        let mut da = Array3::from_elem(pulse.amplitudes.raw_dim(), ZERO);
        let mut chi = target.clone();
        let mut buf = vec![ZERO; 2 * self.prop.n()];
        for m in (0..slices).rev() {
            let spec = &spectra[m];
            let vd = dagger(&spec.vectors);
            let phi_t = vd.dot(&states[m]);
            let chi_t = vd.dot(&chi);
            let g = Self::divided_differences(spec, tau);
            let w = Array2::from_shape_fn(g.raw_dim(), |(p, q)| chi_t[p].conj() * g[[p, q]] * phi_t[q]);
            self.direct_components(spec, &w, &mut buf);
            store(&mut da, m, &buf);
            // χ <- U_m† χ
            let mut c = chi_t;
            c *= &spec.phases(-tau);
            chi = spec.vectors.dot(&c);
        }
        Ok((a, da))
    }

    fn gate_direct(&self, pulse: &ControlPulse, target: &CMatrix) -> Result<(C64, Array3<C64>)> {
        let tau = self.prop.tau();
        let slices = pulse.slices();
        let dim = target.nrows();
        let mut spectra = Vec::with_capacity(slices);
        let mut before = Vec::with_capacity(slices + 1);
        before.push(CMatrix::eye(dim));
        for m in 0..slices {
            let spec = self.prop.slice_spectral(pulse.slice(m))?;
            let u = spec.exp(tau);
            before.push(u.dot(&before[m]));
            spectra.push(spec);
        }
        let mut after = dagger(target);
        let a = trace_of_product(after.view(), before[slices].view());
        let mut da = Array3::from_elem(pulse.amplitudes.raw_dim(), ZERO);
        let mut buf = vec![ZERO; 2 * self.prop.n()];
        for m in (0..slices).rev() {
            let spec = &spectra[m];
            let v = &spec.vectors;
            let c = before[m].dot(&after);
            let c_hat = dagger(v).dot(&c).dot(v);
            let g = Self::divided_differences(spec, tau);
            let w = Array2::from_shape_fn(g.raw_dim(), |(p, q)| g[[p, q]] * c_hat[[q, p]]);
            self.direct_components(spec, &w, &mut buf);
            store(&mut da, m, &buf);
            let mut vd = v.clone();
            scale_cols(&mut vd, &spec.phases(tau));
            after = after.dot(&vd).dot(&dagger(v));
        }
        Ok((a, da))
    }

    fn state_trotter(
        &self,
        pulse: &ControlPulse,
        initial: &CVector,
        target: &CVector,
    ) -> Result<(C64, Array3<C64>)> {
        let n = self.prop.n();
        let slices = pulse.slices();
        let mut states = Vec::with_capacity(slices + 1);
        states.push(initial.clone());
        for m in 0..slices {
            let mut v = states[m].clone();
            for op in self.prop.slice_ops(pulse.slice(m))?.iter().rev() {
                op.apply_vec(&mut v);
            }
            states.push(v);
        }
        let a = inner(target.view(), states[slices].view());
        let mut da = Array3::from_elem(pulse.amplitudes.raw_dim(), ZERO);
        let mut chi = target.clone();
        let mut buf = vec![ZERO; 2 * n];
        for m in (0..slices).rev() {
            let amps = pulse.slice(m);
            let ops = self.prop.slice_ops(amps)?;
            let k = ops.len();
            // right[c] = ops[c+1] ... ops[k-1] φ_m
            let mut right: Vec<Option<CVector>> = vec![None; k];
            let mut r = states[m].clone();
            for c in (0..k).rev() {
                if matches!(ops[c], SliceOp::Control { .. }) {
                    right[c] = Some(r.clone());
                }
                ops[c].apply_vec(&mut r);
            }
            buf.iter_mut().for_each(|z| *z = ZERO);
            let mut l = chi;
            for c in 0..k {
                if let (SliceOp::Control { beta, .. }, Some(rc)) = (&ops[c], &right[c]) {
                    let s = beta * self.prop.tau();
                    let derivs: Vec<(Gate2, Gate2, Gate2)> = amps
                        .outer_iter()
                        .map(|row| rotation_gate_with_derivatives(row[0], row[1], s))
                        .collect();
                    for j in 0..n {
                        let mut t = rc.clone();
                        for (q, (g, _, _)) in derivs.iter().enumerate() {
                            if q != j {
                                apply_gate_vec(&mut t, n, q, g);
                            }
                        }
                        let mut tx = t.clone();
                        apply_gate_vec(&mut tx, n, j, &derivs[j].1);
                        apply_gate_vec(&mut t, n, j, &derivs[j].2);
                        buf[2 * j] += inner(l.view(), tx.view());
                        buf[2 * j + 1] += inner(l.view(), t.view());
                    }
                }
                ops[c].apply_adjoint_vec(&mut l);
            }
            store(&mut da, m, &buf);
            chi = l;
        }
        Ok((a, da))
    }

    fn gate_trotter(&self, pulse: &ControlPulse, target: &CMatrix) -> Result<(C64, Array3<C64>)> {
        let n = self.prop.n();
        let slices = pulse.slices();
        let dim = target.nrows();
        let mut before = Vec::with_capacity(slices + 1);
        before.push(CMatrix::eye(dim));
        for m in 0..slices {
            let mut u = before[m].clone();
            self.prop.apply_slice(pulse.slice(m), &mut u)?;
            before.push(u);
        }
        let mut after = dagger(target);
        let a = trace_of_product(after.view(), before[slices].view());
        let mut da = Array3::from_elem(pulse.amplitudes.raw_dim(), ZERO);
        let mut buf = vec![ZERO; 2 * n];
        for m in (0..slices).rev() {
            let amps = pulse.slice(m);
            let ops = self.prop.slice_ops(amps)?;
            let k = ops.len();
            // a = Tr(U_m P) with P = A_m B; for control c, Tr(F_c D_c) with
            // D_c = (ops[c+1] .. ops[k-1]) P (ops[0] .. ops[c-1]).
            let mut q = before[m].dot(&after);
            buf.iter_mut().for_each(|z| *z = ZERO);
            for c in (0..k).rev() {
                if let SliceOp::Control { beta, .. } = &ops[c] {
                    let mut d = q.clone();
                    for op in &ops[..c] {
                        op.apply_right(&mut d);
                    }
                    let s = beta * self.prop.tau();
                    let derivs: Vec<(Gate2, Gate2, Gate2)> = amps
                        .outer_iter()
                        .map(|row| rotation_gate_with_derivatives(row[0], row[1], s))
                        .collect();
                    let mut gates: Vec<Gate2> = derivs.iter().map(|t| t.0).collect();
                    for j in 0..n {
                        gates[j] = derivs[j].1;
                        buf[2 * j] += trace_of_product(kron_gates(&gates).view(), d.view());
                        gates[j] = derivs[j].2;
                        buf[2 * j + 1] += trace_of_product(kron_gates(&gates).view(), d.view());
                        gates[j] = derivs[j].0;
                    }
                }
                ops[c].apply_left(&mut q);
            }
            store(&mut da, m, &buf);
            for op in &ops {
                op.apply_right(&mut after);
            }
        }
        Ok((a, da))
    }
}

fn store(da: &mut Array3<C64>, m: usize, buf: &[C64]) {
    for (idx, v) in buf.iter().enumerate() {
        da[[m, idx / 2, idx % 2]] = *v;
    }
}

/// `∂f/∂u` at `pulse`, shaped like the amplitudes.
pub fn gradient(
    pulse: &ControlPulse,
    objective: &Objective,
    h_s: &Hamiltonian,
    mode: PropagatorMode,
) -> Result<Array3<f64>> {
    Ok(Evaluator::new(h_s, objective, mode, pulse.tau)?
        .fidelity_and_gradient(pulse)?
        .1)
}

/// Central finite differences of `f` in every amplitude. Slow; for checks.
pub fn finite_difference_gradient(
    pulse: &ControlPulse,
    objective: &Objective,
    h_s: &Hamiltonian,
    mode: PropagatorMode,
    step: f64,
) -> Result<Array3<f64>> {
    let ev = Evaluator::new(h_s, objective, mode, pulse.tau)?;
    let mut out = Array3::zeros(pulse.amplitudes.raw_dim());
    let mut probe = pulse.clone();
    for (idx, v) in pulse.amplitudes.indexed_iter() {
        probe.amplitudes[idx] = v + step;
        let up = raw_fidelity(&ev, &probe)?;
        probe.amplitudes[idx] = v - step;
        let down = raw_fidelity(&ev, &probe)?;
        probe.amplitudes[idx] = *v;
        out[idx] = (up - down) / (2.0 * step);
    }
    Ok(out)
}

// Unclamped, so differences near f = 1 stay smooth.
fn raw_fidelity(ev: &Evaluator<'_>, pulse: &ControlPulse) -> Result<f64> {
    match ev.objective {
        Objective::State { initial, target } => {
            let out = ev.prop.evolve_state(pulse, initial)?;
            Ok(inner(target.view(), out.view()).norm_sqr())
        }
        Objective::Gate { target } => {
            let u = ev.prop.evolve(pulse)?;
            Ok(crate::linalg::trace_a_bdag(&u, target).norm_sqr() / ev.objective.normalization())
        }
    }
}
