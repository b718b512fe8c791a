//! Gradient pulse search over piecewise-constant controls.

mod gradient;
pub mod lbfgs;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use gradient::{finite_difference_gradient, gradient, Evaluator};
use lbfgs::{backtrack, dot, norm, LbfgsMemory, LineSearchConfig};

use crate::error::{Error, Result};
use crate::linalg::{
    apply_gate_left, inner, trace_a_bdag, unitarity_error, CMatrix, CVector, Gate2, C64, ONE,
    ZERO,
};
use crate::pauli::{pauli_matrix, Hamiltonian, Pauli};
use crate::propagator::PropagatorMode;
use crate::pulse::ControlPulse;

const STATE_NORM_TOL: f64 = 1e-12;
const UNITARY_TOL: f64 = 1e-10;

/// What the search maximizes.
#[derive(Clone, Debug)]
pub enum Objective {
    /// `|<ψ_t|U|ψ_0>|²`
    State { initial: CVector, target: CVector },
    /// `|Tr(U U_t†)|² / d²`
    Gate { target: CMatrix },
}

impl Objective {
    pub fn state(initial: CVector, target: CVector) -> Result<Self> {
        if initial.len() != target.len() || !initial.len().is_power_of_two() {
            return Err(Error::Dimension(format!(
                "state lengths {} and {} must match and be a power of two",
                initial.len(),
                target.len()
            )));
        }
        for (name, v) in [("initial", &initial), ("target", &target)] {
            let norm = inner(v.view(), v.view()).re.sqrt();
            if (norm - 1.0).abs() > STATE_NORM_TOL {
                return Err(Error::Validation(format!(
                    "{name} state has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Objective::State { initial, target })
    }

    pub fn gate(target: CMatrix) -> Result<Self> {
        if !target.is_square() || !target.nrows().is_power_of_two() {
            return Err(Error::Dimension(format!(
                "gate target is {:?}",
                target.dim()
            )));
        }
        let err = unitarity_error(&target);
        if err > UNITARY_TOL {
            return Err(Error::Validation(format!(
                "gate target is not unitary (max |U U† - I| = {err:e})"
            )));
        }
        Ok(Objective::Gate { target })
    }

    pub fn dim(&self) -> usize {
        match self {
            Objective::State { target, .. } => target.len(),
            Objective::Gate { target } => target.nrows(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Objective::State { .. } => "state",
            Objective::Gate { .. } => "gate",
        }
    }

    pub(crate) fn normalization(&self) -> f64 {
        match self {
            Objective::State { .. } => 1.0,
            Objective::Gate { target } => (target.nrows() * target.nrows()) as f64,
        }
    }

    /// Fidelity of a full propagator against this objective.
    pub fn fidelity(&self, u: &CMatrix) -> Result<f64> {
        match self {
            Objective::State { .. } => state_fidelity(u, self),
            Objective::Gate { .. } => gate_fidelity(u, self),
        }
    }
}

fn check_square(u: &CMatrix, dim: usize) -> Result<()> {
    if u.dim() != (dim, dim) {
        return Err(Error::Dimension(format!(
            "propagator is {:?}, objective needs {dim}x{dim}",
            u.dim()
        )));
    }
    Ok(())
}

pub fn state_fidelity(u: &CMatrix, objective: &Objective) -> Result<f64> {
    let Objective::State { initial, target } = objective else {
        return Err(Error::Validation("state fidelity needs a state objective".into()));
    };
    check_square(u, target.len())?;
    let out = u.dot(initial);
    Ok(inner(target.view(), out.view()).norm_sqr().clamp(0.0, 1.0))
}

pub fn gate_fidelity(u: &CMatrix, objective: &Objective) -> Result<f64> {
    let Objective::Gate { target } = objective else {
        return Err(Error::Validation("gate fidelity needs a gate objective".into()));
    };
    check_square(u, target.nrows())?;
    let d = target.nrows() as f64;
    Ok((trace_a_bdag(u, target).norm_sqr() / (d * d)).clamp(0.0, 1.0))
}

/// `(|0…0> + |1…1>) / √2`.
pub fn ghz_state(n: usize) -> CVector {
    let dim = 1usize << n;
    let mut v = CVector::from_elem(dim, ZERO);
    let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    v[0] = a;
    v[dim - 1] += a;
    v
}

pub fn basis_state(n: usize, index: usize) -> Result<CVector> {
    let dim = 1usize << n;
    if index >= dim {
        return Err(Error::Validation(format!(
            "basis index {index} out of range for {n} qubits"
        )));
    }
    let mut v = CVector::from_elem(dim, ZERO);
    v[index] = ONE;
    Ok(v)
}

/// `exp(-i θ σ / 2)` on one qubit (0-based), identity elsewhere.
pub fn rotation_target(n: usize, qubit: usize, axis: Pauli, angle: f64) -> Result<CMatrix> {
    if qubit >= n {
        return Err(Error::Validation(format!(
            "qubit {qubit} out of range for {n} qubits"
        )));
    }
    if axis == Pauli::I {
        return Err(Error::Validation("rotation axis must be X, Y or Z".into()));
    }
    let s = pauli_matrix(axis);
    let (c, sn) = ((angle / 2.0).cos(), (angle / 2.0).sin());
    let g: Gate2 = [
        C64::new(c, 0.0) + C64::new(0.0, -sn) * s[[0, 0]],
        C64::new(0.0, -sn) * s[[0, 1]],
        C64::new(0.0, -sn) * s[[1, 0]],
        C64::new(c, 0.0) + C64::new(0.0, -sn) * s[[1, 1]],
    ];
    let mut u = CMatrix::eye(1 << n);
    apply_gate_left(&mut u, n, qubit, &g);
    Ok(u)
}

/// One stage of a hybrid schedule: `mode` is in force from iteration `start`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridStage {
    pub start: usize,
    pub mode: PropagatorMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HybridSchedule {
    pub stages: Vec<HybridStage>,
}

impl HybridSchedule {
    pub fn new(stages: Vec<HybridStage>) -> Result<Self> {
        let s = Self { stages };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self.stages.first() {
            Some(first) if first.start == 1 => {}
            _ => {
                return Err(Error::Validation(
                    "hybrid schedule must start at iteration 1".into(),
                ))
            }
        }
        if self.stages.windows(2).any(|w| w[1].start <= w[0].start) {
            return Err(Error::Validation(
                "hybrid schedule start iterations must be strictly increasing".into(),
            ));
        }
        for st in &self.stages {
            st.mode.validate()?;
        }
        Ok(())
    }

    pub fn mode_at(&self, iteration: usize) -> PropagatorMode {
        self.stages
            .iter()
            .take_while(|s| s.start <= iteration)
            .last()
            .unwrap_or(&self.stages[0])
            .mode
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrapeConfig {
    pub mode: PropagatorMode,
    pub stop_fidelity: f64,
    pub max_iters: usize,
    pub lbfgs_memory: usize,
    pub line_search: LineSearchConfig,
    /// Box bound on every amplitude, applied by projection after each step.
    pub amplitude_bound: Option<f64>,
    pub seed: u64,
    pub hybrid: Option<HybridSchedule>,
}

impl Default for GrapeConfig {
    fn default() -> Self {
        Self {
            mode: PropagatorMode::Direct,
            stop_fidelity: 0.999,
            max_iters: 1000,
            lbfgs_memory: 10,
            line_search: LineSearchConfig::default(),
            amplitude_bound: None,
            seed: 0,
            hybrid: None,
        }
    }
}

impl GrapeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.stop_fidelity > 0.0 && self.stop_fidelity <= 1.0) {
            return Err(Error::Validation(format!(
                "stop_fidelity must be in (0, 1], got {}",
                self.stop_fidelity
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Validation("max_iters must be >= 1".into()));
        }
        let ls = &self.line_search;
        if !(ls.armijo > 0.0 && ls.armijo < 1.0)
            || !(ls.backtrack_factor > 0.0 && ls.backtrack_factor < 1.0)
            || !(ls.initial_step > 0.0)
        {
            return Err(Error::Validation(format!("invalid line search settings {ls:?}")));
        }
        if let Some(b) = self.amplitude_bound {
            if !(b > 0.0) {
                return Err(Error::Validation(format!("amplitude bound must be positive, got {b}")));
            }
        }
        self.mode.validate()?;
        if let Some(h) = &self.hybrid {
            h.validate()?;
        }
        Ok(())
    }

    pub fn initial_mode(&self) -> PropagatorMode {
        self.hybrid.as_ref().map_or(self.mode, |h| h.mode_at(1))
    }
}

pub struct GrapeProblem<'a> {
    pub h_s: &'a Hamiltonian,
    pub objective: &'a Objective,
    pub initial: ControlPulse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIterations,
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub fidelity: f64,
    /// Norm of `∂f/∂u` in s/rad.
    pub gradient_norm: f64,
    pub mode: PropagatorMode,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunTrace {
    pub config: GrapeConfig,
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
    /// Iterations at which the hybrid schedule changed the mode.
    pub switches: Vec<HybridStage>,
    pub final_pulse: ControlPulse,
    /// `f_l` of the final pulse under the mode in force at the end.
    pub estimated_fidelity: f64,
    /// `f` of the final pulse under the exact propagator.
    pub true_fidelity: f64,
    pub wall_time_s: f64,
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}

/// Direct-mode re-evaluation, independent of how the pulse was found.
pub fn true_fidelity(pulse: &ControlPulse, objective: &Objective, h_s: &Hamiltonian) -> Result<f64> {
    Evaluator::new(h_s, objective, PropagatorMode::Direct, pulse.tau)?.fidelity(pulse)
}

// The optimizer works in per-slice rotation angles `x = u τ`, so step
// lengths do not depend on the time scale of the problem.
struct Point {
    pulse: ControlPulse,
    fidelity: f64,
    /// `∂f/∂x`
    grad: Vec<f64>,
}

impl Point {
    fn at(ev: &Evaluator<'_>, pulse: ControlPulse) -> Result<Self> {
        let (fidelity, g) = ev.fidelity_and_gradient(&pulse)?;
        let tau = pulse.tau;
        Ok(Self {
            pulse,
            fidelity,
            grad: g.iter().map(|v| v / tau).collect(),
        })
    }

    fn angles(&self) -> Vec<f64> {
        self.pulse.amplitudes.iter().map(|u| u * self.pulse.tau).collect()
    }
}

/// Maximizes `f_l` by L-BFGS on `1 - f_l`.
pub fn run_grape(problem: GrapeProblem<'_>, config: &GrapeConfig) -> Result<RunTrace> {
    config.validate()?;
    let GrapeProblem {
        h_s,
        objective,
        initial,
    } = problem;
    initial.validate()?;
    let tau = initial.tau;
    let clock = Instant::now();

    let mut mode = config.initial_mode();
    let mut ev = Evaluator::new(h_s, objective, mode, tau)?;
    let mut start = initial;
    if let Some(b) = config.amplitude_bound {
        start.project(b);
    }
    let mut cur = Point::at(&ev, start)?;
    let mut memory = LbfgsMemory::new(config.lbfgs_memory);
    let mut records = Vec::new();
    let mut switches = Vec::new();
    let mut status = RunStatus::MaxIterations;

    for p in 1..=config.max_iters {
        if let Some(h) = &config.hybrid {
            let want = h.mode_at(p);
            if want != mode {
                mode = want;
                ev = Evaluator::new(h_s, objective, mode, tau)?;
                memory.clear();
                cur = Point::at(&ev, cur.pulse)?;
                switches.push(HybridStage { start: p, mode });
                log::info!("iteration {p}: switching to {mode}");
            }
        }
        records.push(IterationRecord {
            iteration: p,
            fidelity: cur.fidelity,
            gradient_norm: norm(&cur.grad) * tau,
            mode,
            wall_time_s: clock.elapsed().as_secs_f64(),
        });
        log::debug!("iteration {p}: f_l = {:.9}", cur.fidelity);
        if cur.fidelity > config.stop_fidelity {
            status = RunStatus::Converged;
            break;
        }
        if p == config.max_iters {
            break;
        }
        let next = match line_step(&ev, &cur, &memory, config)? {
            Some(next) => Some(next),
            None if !memory.is_empty() => {
                memory.clear();
                line_step(&ev, &cur, &memory, config)?
            }
            None => None,
        };
        let Some(next) = next else {
            status = RunStatus::Stalled;
            log::info!("iteration {p}: line search failed, stopping");
            break;
        };
        let s: Vec<f64> = next
            .angles()
            .iter()
            .zip(cur.angles())
            .map(|(a, b)| a - b)
            .collect();
        // gradient of the cost 1 - f is -g
        let y: Vec<f64> = cur.grad.iter().zip(&next.grad).map(|(a, b)| a - b).collect();
        memory.push(s, y);
        cur = next;
    }

    let estimated_fidelity = ev.fidelity(&cur.pulse)?;
    let true_fidelity = if mode == PropagatorMode::Direct {
        estimated_fidelity
    } else {
        true_fidelity(&cur.pulse, objective, h_s)?
    };
    Ok(RunTrace {
        config: config.clone(),
        records,
        status,
        switches,
        final_pulse: cur.pulse,
        estimated_fidelity,
        true_fidelity,
        wall_time_s: clock.elapsed().as_secs_f64(),
    })
}

fn line_step(
    ev: &Evaluator<'_>,
    cur: &Point,
    memory: &LbfgsMemory,
    config: &GrapeConfig,
) -> Result<Option<Point>> {
    let cost_grad: Vec<f64> = cur.grad.iter().map(|g| -g).collect();
    let d = memory.direction(&cost_grad);
    let slope = dot(&cost_grad, &d);
    let x0 = cur.angles();
    let tau = cur.pulse.tau;
    let accepted = backtrack(&config.line_search, 1.0 - cur.fidelity, slope, |t| {
        let trial: Vec<f64> = x0.iter().zip(&d).map(|(x, di)| (x + t * di) / tau).collect();
        let mut pulse = cur.pulse.with_flat(&trial);
        if let Some(b) = config.amplitude_bound {
            pulse.project(b);
        }
        let pt = Point::at(ev, pulse)?;
        Ok((1.0 - pt.fidelity, pt))
    })?;
    Ok(accepted.map(|a| a.payload))
}

/// Uniform random initial amplitudes in `[-u0, u0]`.
pub fn random_initial_pulse(n: usize, slices: usize, tau: f64, u0: f64, seed: u64) -> Result<ControlPulse> {
    ControlPulse::random(n, slices, tau, u0, seed)
}
