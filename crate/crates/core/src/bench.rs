//! Wall-clock sweeps of direct vs Trotterized propagation, and error-order fits.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{operator_norm, CMatrix};
use crate::pauli::{build_random_control, build_random_ising, Hamiltonian};
use crate::propagator::{propagator_infidelity, EvolveOptions, Propagator, PropagatorMode, TrotterScheme};
use crate::pulse::ControlPulse;
use crate::stats::{coefficient_of_variation, Summary};

/// Largest register the sweep builds without `allow_large`.
pub const MAX_QUBITS: usize = 12;

/// Errors below this are treated as rounding noise by [`fit_error_order`].
pub const ROUNDING_FLOOR: f64 = 1e-12;

pub const CSV_HEADER: [&str; 7] = [
    "variable", "value", "order", "repeat", "seed", "wall_time_s", "infidelity",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "n")]
    Qubits,
    #[serde(rename = "M")]
    Slices,
    #[serde(rename = "tau")]
    Tau,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            Self::Qubits => "n",
            Self::Slices => "M",
            Self::Tau => "tau",
        }
    }
}

fn default_n() -> usize {
    7
}
fn default_slices() -> usize {
    10
}
fn default_tau() -> f64 {
    0.1
}
fn default_repeats() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    /// Points of the swept variable; integers for `n` and `M`.
    pub values: Vec<f64>,
    /// Held fixed unless swept.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_slices")]
    pub slices: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub orders: Vec<PropagatorMode>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fuse_boundaries: bool,
    /// Also time Trotter propagation with the segment cache prebuilt.
    #[serde(default)]
    pub amortized: bool,
    #[serde(default)]
    pub allow_large: bool,
}

/// Concrete `(n, M, τ)` of one sweep point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub n: usize,
    pub slices: usize,
    pub tau: f64,
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v.fract() != 0.0 || v < 1.0 || !v.is_finite() {
        return Err(Error::Validation(format!(
            "{what} values must be positive integers, got {v}"
        )));
    }
    Ok(v as usize)
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Validation("values must not be empty".into()));
        }
        if self.orders.is_empty() {
            return Err(Error::Validation("orders must not be empty".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Validation("repeats must be >= 1".into()));
        }
        for m in &self.orders {
            m.validate()?;
        }
        for p in self.points()? {
            if p.n < 2 {
                return Err(Error::InvalidSize(format!("sweep needs n >= 2, got {}", p.n)));
            }
            if p.n > MAX_QUBITS && !self.allow_large {
                return Err(Error::Refused(format!(
                    "n = {} exceeds the {MAX_QUBITS}-qubit guard; set allow_large = true to run it",
                    p.n
                )));
            }
            if p.slices == 0 {
                return Err(Error::InvalidSize("slices must be >= 1".into()));
            }
            if !(p.tau.is_finite() && p.tau > 0.0) {
                return Err(Error::Validation(format!("tau must be positive, got {}", p.tau)));
            }
        }
        Ok(())
    }

    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        self.values
            .iter()
            .map(|&v| {
                let mut p = SweepPoint {
                    value: v,
                    n: self.n,
                    slices: self.slices,
                    tau: self.tau,
                };
                match self.variable {
                    SweepVariable::Qubits => p.n = as_count(v, "n")?,
                    SweepVariable::Slices => p.slices = as_count(v, "M")?,
                    SweepVariable::Tau => p.tau = v,
                }
                Ok(p)
            })
            .collect()
    }

    /// Seed shared by every order at one `(point, repeat)`.
    pub fn instance_seed(&self, point: usize, repeat: usize) -> u64 {
        self.seed
            .wrapping_add((point * self.repeats + repeat) as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variable: SweepVariable,
    pub value: f64,
    pub order: PropagatorMode,
    pub repeat: usize,
    pub seed: u64,
    pub wall_time_s: f64,
    /// Against the direct propagator of the same instance.
    pub infidelity: f64,
    /// Propagation only, segment cache prebuilt (`amortized` runs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amortized_wall_time_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    pub value: f64,
    pub order: PropagatorMode,
    pub wall_time: Summary,
    /// Repeat-to-repeat spread of the wall time.
    pub wall_time_cv: Option<f64>,
    pub infidelity: Summary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amortized_wall_time: Option<Summary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub cpu_model: String,
    pub os: String,
    pub arch: String,
    pub profile: String,
    pub crate_version: String,
    pub blas_threads: usize,
}

impl Fingerprint {
    pub fn current() -> Self {
        Self {
            cpu_model: cpu_model(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            profile: if cfg!(debug_assertions) { "debug" } else { "release" }.into(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            blas_threads: 1,
        }
    }
}

fn cpu_model() -> String {
    std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown".into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<SweepAggregate>,
    pub fingerprint: Fingerprint,
}

impl SweepResult {
    /// Median wall time for `order` at sweep value `value`.
    pub fn median_wall_time(&self, value: f64, order: PropagatorMode) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.value == value && a.order == order)
            .map(|a| a.wall_time.median)
    }
}

extern "C" {
    fn openblas_set_num_threads(num_threads: std::os::raw::c_int);
}

/// Pins OpenBLAS to one thread so timings are not skewed by a thread pool.
pub fn single_thread_blas() {
    // SAFETY: plain setter exported by the linked OpenBLAS.
    unsafe { openblas_set_num_threads(1) }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let v = f()?;
    Ok((v, t.elapsed().as_secs_f64()))
}

struct Instance {
    h_s: Hamiltonian,
    pulse: ControlPulse,
}

fn instance(p: &SweepPoint, seed: u64) -> Result<Instance> {
    let h_s = build_random_ising(p.n, seed)?;
    let amps = build_random_control(p.n, p.slices, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    Ok(Instance {
        h_s,
        pulse: ControlPulse::new(p.tau, amps)?,
    })
}

/// Trotter run: cache build plus propagation, and optionally propagation alone.
fn trotter_run(
    inst: &Instance,
    mode: PropagatorMode,
    opts: EvolveOptions,
    amortized: bool,
) -> Result<(CMatrix, f64, Option<f64>)> {
    let ((u, prop), total) = timed(|| {
        let prop = Propagator::new(&inst.h_s, mode, inst.pulse.tau)?;
        let u = prop.evolve_with(&inst.pulse, opts)?;
        Ok((u, prop))
    })?;
    let amort = if amortized {
        Some(timed(|| prop.evolve_with(&inst.pulse, opts))?.1)
    } else {
        None
    };
    Ok((u, total, amort))
}

/// Runs the sweep sequentially on one thread; the first repeat of every
/// `(point, order)` is preceded by an untimed warm-up run.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    single_thread_blas();
    let opts = EvolveOptions {
        fuse_boundaries: spec.fuse_boundaries,
    };
    let mut rows = Vec::new();
    for (pi, point) in spec.points()?.iter().enumerate() {
        log::info!(
            "bench point {}={} (n={}, M={}, tau={})",
            spec.variable.name(),
            point.value,
            point.n,
            point.slices,
            point.tau
        );
        for repeat in 0..spec.repeats {
            let seed = spec.instance_seed(pi, repeat);
            let inst = instance(point, seed)?;
            let direct = Propagator::new(&inst.h_s, PropagatorMode::Direct, point.tau)?;
            if repeat == 0 {
                direct.evolve(&inst.pulse)?;
            }
            let (u0, t_direct) = timed(|| direct.evolve(&inst.pulse))?;
            for &order in &spec.orders {
                let row = |wall_time_s, infidelity, amortized_wall_time_s| SweepRow {
                    variable: spec.variable,
                    value: point.value,
                    order,
                    repeat,
                    seed,
                    wall_time_s,
                    infidelity,
                    amortized_wall_time_s,
                };
                if order == PropagatorMode::Direct {
                    rows.push(row(t_direct, 0.0, None));
                    continue;
                }
                if repeat == 0 {
                    trotter_run(&inst, order, opts, false)?;
                }
                let (u, t, amort) = trotter_run(&inst, order, opts, spec.amortized)?;
                rows.push(row(t, propagator_infidelity(&u, &u0)?, amort));
            }
        }
    }
    Ok(SweepResult {
        spec: spec.clone(),
        aggregates: aggregate(&rows),
        rows,
        fingerprint: Fingerprint::current(),
    })
}

/// Per `(value, order)` medians in first-seen order.
pub fn aggregate(rows: &[SweepRow]) -> Vec<SweepAggregate> {
    let mut keys: Vec<(f64, PropagatorMode)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.value, r.order)) {
            keys.push((r.value, r.order));
        }
    }
    keys.into_iter()
        .filter_map(|(value, order)| {
            let sel: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.value == value && r.order == order)
                .collect();
            let times: Vec<f64> = sel.iter().map(|r| r.wall_time_s).collect();
            let inf: Vec<f64> = sel.iter().map(|r| r.infidelity).collect();
            let amort: Vec<f64> = sel.iter().filter_map(|r| r.amortized_wall_time_s).collect();
            Some(SweepAggregate {
                value,
                order,
                wall_time: Summary::of(&times)?,
                wall_time_cv: coefficient_of_variation(&times),
                infidelity: Summary::of(&inf)?,
                amortized_wall_time: Summary::of(&amort),
            })
        })
        .collect()
}

pub fn write_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.variable.name().to_string(),
            r.value.to_string(),
            r.order.to_string(),
            r.repeat.to_string(),
            r.seed.to_string(),
            r.wall_time_s.to_string(),
            r.infidelity.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    Json,
    Both,
}

/// Writes `<stem>.csv` and/or `<stem>.json` into `dir`, returning the paths.
pub fn emit(result: &SweepResult, dir: &Path, stem: &str, format: EmitFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if matches!(format, EmitFormat::Csv | EmitFormat::Both) {
        let path = dir.join(format!("{stem}.csv"));
        write_csv(&result.rows, std::fs::File::create(&path)?)?;
        written.push(path);
    }
    if matches!(format, EmitFormat::Json | EmitFormat::Both) {
        let path = dir.join(format!("{stem}.json"));
        serde_json::to_writer_pretty(std::fs::File::create(&path)?, result)?;
        written.push(path);
    }
    Ok(written)
}

/// `‖U_l − U_0‖₂` at one step size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub tau: f64,
    pub error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Ok,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    /// Samples above the rounding floor.
    pub used: usize,
    pub status: FitStatus,
}

/// Least-squares slope of `log error` against `log τ`.
pub fn fit_error_order(samples: &[ErrorSample]) -> Result<OrderFit> {
    let taus: Vec<f64> = samples.iter().map(|s| s.tau).collect();
    if samples.len() < 4 {
        return Err(Error::Validation(format!(
            "need at least 4 step sizes, got {}",
            samples.len()
        )));
    }
    if taus.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Validation("step sizes must be positive".into()));
    }
    let (lo, hi) = taus
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &t| (lo.min(t), hi.max(t)));
    if hi / lo < 10.0 * (1.0 - 1e-12) {
        return Err(Error::Validation(format!(
            "step sizes must span a decade, got {lo}..{hi}"
        )));
    }
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.error.is_finite() && s.error >= ROUNDING_FLOOR)
        .map(|s| (s.tau.ln(), s.error.ln()))
        .collect();
    if pts.len() < 3 {
        return Ok(OrderFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            used: pts.len(),
            status: FitStatus::Inconclusive,
        });
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(OrderFit {
        slope,
        intercept: my - slope * mx,
        used: pts.len(),
        status: FitStatus::Ok,
    })
}

/// Operator-norm errors of `mode` for `base` refined to each slice count.
///
/// Refinement repeats slices, so every entry describes the same control
/// function over the same total time.
pub fn error_scaling(
    h_s: &Hamiltonian,
    base: &ControlPulse,
    scheme: &TrotterScheme,
    slice_counts: &[usize],
) -> Result<Vec<ErrorSample>> {
    let m0 = base.slices();
    slice_counts
        .iter()
        .map(|&m| {
            if m % m0 != 0 {
                return Err(Error::Validation(format!(
                    "slice count {m} is not a multiple of {m0}"
                )));
            }
            let p = base.refine(m / m0)?;
            let u0 = Propagator::new(h_s, PropagatorMode::Direct, p.tau)?.evolve(&p)?;
            let ul = Propagator::with_scheme(h_s, scheme, p.tau)?.evolve(&p)?;
            Ok(ErrorSample {
                tau: p.tau,
                error: operator_norm(&(&ul - &u0))?,
            })
        })
        .collect()
}

/// Error samples per scheme order on one random Ising + control instance.
pub fn order_scaling_instance(
    n: usize,
    duration: f64,
    slice_counts: &[usize],
    schemes: &[TrotterScheme],
    seed: u64,
) -> Result<BTreeMap<u8, Vec<ErrorSample>>> {
    let m0 = *slice_counts
        .iter()
        .min()
        .ok_or_else(|| Error::Validation("slice counts must not be empty".into()))?;
    let h_s = build_random_ising(n, seed)?;
    let amps = build_random_control(n, m0, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let base = ControlPulse::new(duration / m0 as f64, amps)?;
    schemes
        .iter()
        .map(|s| Ok((s.order, error_scaling(&h_s, &base, s, slice_counts)?)))
        .collect()
}
