//! Slice and full-pulse propagators.
//!
//! A slice evolves under `H_S + H_C[m]` for a duration `tau`. The direct mode
//! exponentiates the full Hamiltonian through its eigendecomposition; the
//! Trotter modes split it into a product of system segments
//! `exp(-i α_k H_S τ)`, computed once per run, and control segments
//! `exp(-i β_k H_C[m] τ)`, which factor into single-qubit rotations.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{
    apply_gate_left, apply_gate_right, apply_gate_vec, dagger, gate_dagger, is_hermitian,
    kron_gates, max_abs, scale_cols, scale_rows, sinc, trace_a_bdag, CMatrix, CVector, Gate2, C64,
    I,
};
use crate::pauli::{control_hamiltonian, Hamiltonian};
use crate::pulse::ControlPulse;

const HERMITIAN_TOL: f64 = 1e-10;

/// Eigendecomposition `H = V diag(λ) V†` of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct Spectral {
    pub values: Array1<f64>,
    pub vectors: CMatrix,
}

impl Spectral {
    pub fn of(h: &CMatrix) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::Dimension(format!("matrix is {:?}, not square", h.dim())));
        }
        if !is_hermitian(h, HERMITIAN_TOL) {
            return Err(Error::Validation(format!(
                "matrix is not Hermitian (max |H - H†| = {:e}, max |H| = {:e})",
                crate::linalg::hermiticity_error(h),
                max_abs(h)
            )));
        }
        let (values, vectors) = crate::linalg::eigh(h)?;
        Ok(Self { values, vectors })
    }

    /// `exp(-i λ t)` for every eigenvalue.
    pub fn phases(&self, t: f64) -> CVector {
        self.values.mapv(|l| C64::from_polar(1.0, -l * t))
    }

    /// `exp(-i H t)`.
    pub fn exp(&self, t: f64) -> CMatrix {
        let mut vd = self.vectors.clone();
        scale_cols(&mut vd, &self.phases(t));
        vd.dot(&dagger(&self.vectors))
    }
}

/// `exp(-i H t)` of a Hermitian matrix.
pub fn expm_hermitian_matrix(h: &CMatrix, t: f64) -> Result<CMatrix> {
    if !t.is_finite() {
        return Err(Error::Validation(format!("duration must be finite, got {t}")));
    }
    Ok(Spectral::of(h)?.exp(t))
}

/// `exp(-i H t)`; Z-only Hamiltonians are exponentiated entrywise.
pub fn expm_hermitian(h: &Hamiltonian, t: f64) -> Result<CMatrix> {
    if !t.is_finite() {
        return Err(Error::Validation(format!("duration must be finite, got {t}")));
    }
    match h.diagonal() {
        Some(d) => Ok(CMatrix::from_diag(&d.mapv(|v| C64::from_polar(1.0, -v * t)))),
        None => expm_hermitian_matrix(h.dense(), t),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorKind {
    System,
    Control,
}

/// Sign choice in the order-3 coefficient family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    #[default]
    Upper,
    Lower,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Upper => 1.0,
            Branch::Lower => -1.0,
        }
    }
}

impl FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" | "+" => Ok(Branch::Upper),
            "lower" | "-" => Ok(Branch::Lower),
            _ => Err(Error::Validation(format!("unknown branch {s:?}"))),
        }
    }
}

pub const DEFAULT_GAMMA: f64 = 0.5;

/// A symmetric split-operator scheme for one slice.
///
/// `layout` lists the factors of the slice product from left to right; the
/// rightmost factor acts first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrotterScheme {
    pub order: u8,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub layout: Vec<(FactorKind, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch: Option<Branch>,
}

/// Radicand of `Γ²` in the order-3 family.
pub fn third_order_radicand(gamma: f64) -> f64 {
    (-12.0 * gamma.powi(3) + 45.0 * gamma.powi(2) - 48.0 * gamma + 16.0) / (-12.0 * gamma + 9.0)
}

fn interleave(alphas: &[f64], betas: &[f64]) -> Vec<(FactorKind, f64)> {
    let mut layout = Vec::with_capacity(alphas.len() + betas.len());
    for k in 0..alphas.len().max(betas.len()) {
        if let Some(&a) = alphas.get(k) {
            layout.push((FactorKind::System, a));
        }
        if let Some(&b) = betas.get(k) {
            layout.push((FactorKind::Control, b));
        }
    }
    layout
}

impl TrotterScheme {
    pub fn first_order() -> Self {
        Self::from_coefficients(1, vec![1.0], vec![1.0])
    }

    pub fn second_order() -> Self {
        Self {
            layout: vec![
                (FactorKind::System, 0.5),
                (FactorKind::Control, 1.0),
                (FactorKind::System, 0.5),
            ],
            ..Self::from_coefficients(2, vec![0.5, 0.5], vec![1.0])
        }
    }

    pub fn third_order(gamma: f64, branch: Branch) -> Result<Self> {
        let domain = |reason: &str, radicand: f64| Error::Domain {
            gamma,
            radicand,
            reason: reason.to_string(),
        };
        if !gamma.is_finite() {
            return Err(domain("gamma must be finite", f64::NAN));
        }
        let denom = -12.0 * gamma + 9.0;
        if denom == 0.0 {
            return Err(domain("radicand denominator vanishes at gamma = 3/4", f64::INFINITY));
        }
        let radicand = third_order_radicand(gamma);
        if radicand < 0.0 {
            return Err(domain("negative radicand makes Γ imaginary", radicand));
        }
        if gamma == 0.0 || 2.0 - 3.0 * gamma == 0.0 {
            return Err(domain("a coefficient denominator vanishes", radicand));
        }
        let big = radicand.sqrt();
        let s = branch.sign();
        let (gp, gm) = (gamma + s * big, gamma - s * big);
        if gp == 0.0 || gm == 0.0 {
            return Err(domain("gamma ± Γ vanishes", radicand));
        }
        let alphas = vec![1.0 - gamma, gp / 2.0, gm / 2.0];
        let betas = vec![
            (4.0 / 3.0 - gamma + s * big) / (2.0 * gamma * gp),
            (3.0 - 4.0 * gamma) / (2.0 * (2.0 - 3.0 * gamma)),
            1.0 - (3.0 * gamma - 4.0 / 3.0 - s * big) / (2.0 * gamma * gm),
        ];
        let mut scheme = Self::from_coefficients(3, alphas, betas);
        scheme.gamma = Some(gamma);
        scheme.branch = Some(branch);
        Ok(scheme)
    }

    pub fn fourth_order() -> Self {
        let b1 = 1.0 / (2.0 - 2f64.cbrt());
        let b2 = -(2f64.cbrt()) * b1;
        let a1 = b1 / 2.0;
        let a2 = (1.0 - b1) / 2.0;
        Self::from_coefficients(4, vec![a1, a2, a2, a1], vec![b1, b2, b1])
    }

    fn from_coefficients(order: u8, alphas: Vec<f64>, betas: Vec<f64>) -> Self {
        let layout = interleave(&alphas, &betas);
        Self {
            order,
            alphas,
            betas,
            layout,
            gamma: None,
            branch: None,
        }
    }

    /// Distinct system coefficients in first-appearance order.
    pub fn distinct_alphas(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for &a in &self.alphas {
            if !out.iter().any(|b| b.to_bits() == a.to_bits()) {
                out.push(a);
            }
        }
        out
    }

    /// Whether the slice product starts and ends with a system factor.
    pub fn is_system_bracketed(&self) -> bool {
        matches!(self.layout.first(), Some((FactorKind::System, _)))
            && matches!(self.layout.last(), Some((FactorKind::System, _)))
            && self.layout.len() > 1
    }
}

/// Scheme for an order, using `gamma` (default 1/2, upper branch) at order 3.
pub fn trotter_scheme(order: u8, gamma: Option<f64>) -> Result<TrotterScheme> {
    match order {
        1 => Ok(TrotterScheme::first_order()),
        2 => Ok(TrotterScheme::second_order()),
        3 => TrotterScheme::third_order(gamma.unwrap_or(DEFAULT_GAMMA), Branch::Upper),
        4 => Ok(TrotterScheme::fourth_order()),
        other => Err(Error::Validation(format!(
            "Trotter order must be 1, 2, 3 or 4, got {other}"
        ))),
    }
}

/// A cached `exp(-i α H_S τ)`.
#[derive(Clone, Debug)]
pub enum SystemFactor {
    Diagonal(CVector),
    Dense(CMatrix),
}

impl SystemFactor {
    pub fn new(h_s: &Hamiltonian, t: f64) -> Result<Self> {
        match h_s.diagonal() {
            Some(d) => Ok(SystemFactor::Diagonal(d.mapv(|v| C64::from_polar(1.0, -v * t)))),
            None => Ok(SystemFactor::Dense(expm_hermitian_matrix(h_s.dense(), t)?)),
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        match self {
            SystemFactor::Diagonal(d) => CMatrix::from_diag(d),
            SystemFactor::Dense(m) => m.clone(),
        }
    }

    pub fn apply_left(&self, m: &mut CMatrix) {
        match self {
            SystemFactor::Diagonal(d) => scale_rows(m, d),
            SystemFactor::Dense(f) => *m = f.dot(&*m),
        }
    }

    pub fn apply_right(&self, m: &mut CMatrix) {
        match self {
            SystemFactor::Diagonal(d) => scale_cols(m, d),
            SystemFactor::Dense(f) => *m = m.dot(f),
        }
    }

    pub fn apply_vec(&self, v: &mut CVector) {
        match self {
            SystemFactor::Diagonal(d) => v.zip_mut_with(d, |x, y| *x *= y),
            SystemFactor::Dense(f) => *v = f.dot(&*v),
        }
    }

    pub fn apply_adjoint_vec(&self, v: &mut CVector) {
        match self {
            SystemFactor::Diagonal(d) => v.zip_mut_with(d, |x, y| *x *= y.conj()),
            SystemFactor::Dense(f) => *v = f.t().mapv(|z| z.conj()).dot(&*v),
        }
    }
}

/// System segments for one `(H_S, τ, scheme)`, computed once and shared.
#[derive(Clone, Debug)]
pub struct SegmentCache {
    scheme: TrotterScheme,
    tau: f64,
    fingerprint: u64,
    coefficients: Vec<f64>,
    factors: Vec<SystemFactor>,
    /// Index into `factors` for each layout position holding a system factor.
    layout_index: Vec<Option<usize>>,
    boundary: Option<SystemFactor>,
}

pub fn cache_system_segments(
    h_s: &Hamiltonian,
    tau: f64,
    scheme: &TrotterScheme,
) -> Result<SegmentCache> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Validation(format!("tau must be positive, got {tau}")));
    }
    let coefficients = scheme.distinct_alphas();
    let factors = coefficients
        .iter()
        .map(|a| SystemFactor::new(h_s, a * tau))
        .collect::<Result<Vec<_>>>()?;
    let layout_index = scheme
        .layout
        .iter()
        .map(|(kind, c)| match kind {
            FactorKind::System => coefficients.iter().position(|a| a.to_bits() == c.to_bits()),
            FactorKind::Control => None,
        })
        .collect();
    Ok(SegmentCache {
        scheme: scheme.clone(),
        tau,
        fingerprint: h_s.fingerprint(),
        coefficients,
        factors,
        layout_index,
        boundary: None,
    })
}

impl SegmentCache {
    pub fn scheme(&self) -> &TrotterScheme {
        &self.scheme
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn distinct_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn factors(&self) -> &[SystemFactor] {
        &self.factors
    }

    pub fn matches(&self, h_s: &Hamiltonian, tau: f64, scheme: &TrotterScheme) -> bool {
        self.fingerprint == h_s.fingerprint()
            && self.tau.to_bits() == tau.to_bits()
            && self.scheme == *scheme
    }

    /// Adds the merged factor used when consecutive slices share a boundary segment.
    pub fn with_boundary_fusion(mut self, h_s: &Hamiltonian) -> Result<Self> {
        if self.fingerprint != h_s.fingerprint() {
            return Err(Error::Config("cache was built for a different H_S".into()));
        }
        if self.scheme.is_system_bracketed() && self.boundary.is_none() {
            let first = self.scheme.layout.first().map(|l| l.1).unwrap_or(0.0);
            let last = self.scheme.layout.last().map(|l| l.1).unwrap_or(0.0);
            self.boundary = Some(SystemFactor::new(h_s, (first + last) * self.tau)?);
        }
        Ok(self)
    }

    fn system_at(&self, position: usize) -> &SystemFactor {
        let idx = self.layout_index[position].expect("layout position holds a system factor");
        &self.factors[idx]
    }
}

/// Exact `exp(-i s (u_x X + u_y Y))` with `s = β τ`.
pub fn rotation_gate(ux: f64, uy: f64, s: f64) -> Gate2 {
    let omega = ux.hypot(uy);
    let theta = s * omega;
    let c = theta.cos();
    let k = s * sinc(theta);
    [
        C64::new(c, 0.0),
        C64::new(-k * uy, -k * ux),
        C64::new(k * uy, -k * ux),
        C64::new(c, 0.0),
    ]
}

/// The rotation together with its partial derivatives in `u_x` and `u_y`.
pub fn rotation_gate_with_derivatives(ux: f64, uy: f64, s: f64) -> (Gate2, Gate2, Gate2) {
    let omega = ux.hypot(uy);
    let theta = s * omega;
    let k = s * sinc(theta);
    // q = (s cos θ - k) / Ω², the derivative of k with respect to Ω divided by Ω
    let q = if theta.abs() < 1e-2 {
        let t2 = theta * theta;
        s * s * s * (-1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0)
    } else {
        (s * theta.cos() - k) / (omega * omega)
    };
    let gate = rotation_gate(ux, uy, s);
    let lower = C64::new(ux, uy); // u_x + i u_y
    let upper = lower.conj(); // u_x - i u_y
    let diag = |u: f64| C64::new(-s * k * u, 0.0);
    let dx = [
        diag(ux),
        -I * ux * q * upper - I * k,
        -I * ux * q * lower - I * k,
        diag(ux),
    ];
    let dy = [
        diag(uy),
        -I * uy * q * upper - C64::new(k, 0.0),
        -I * uy * q * lower + C64::new(k, 0.0),
        diag(uy),
    ];
    (gate, dx, dy)
}

/// One rotation gate per qubit for a control segment.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlRotations {
    pub gates: Vec<Gate2>,
}

impl ControlRotations {
    pub fn new(amplitudes: ArrayView2<f64>, beta_tau: f64) -> Self {
        let gates = amplitudes
            .outer_iter()
            .map(|row| rotation_gate(row[0], row[1], beta_tau))
            .collect();
        Self { gates }
    }

    pub fn n(&self) -> usize {
        self.gates.len()
    }

    pub fn to_dense(&self) -> CMatrix {
        kron_gates(&self.gates)
    }

    pub fn apply_left(&self, m: &mut CMatrix) {
        let n = self.n();
        for (q, g) in self.gates.iter().enumerate() {
            apply_gate_left(m, n, q, g);
        }
    }

    pub fn apply_right(&self, m: &mut CMatrix) {
        let n = self.n();
        for (q, g) in self.gates.iter().enumerate() {
            apply_gate_right(m, n, q, g);
        }
    }

    pub fn apply_vec(&self, v: &mut CVector) {
        let n = self.n();
        for (q, g) in self.gates.iter().enumerate() {
            apply_gate_vec(v, n, q, g);
        }
    }

    pub fn apply_adjoint_vec(&self, v: &mut CVector) {
        let n = self.n();
        for (q, g) in self.gates.iter().enumerate() {
            apply_gate_vec(v, n, q, &gate_dagger(g));
        }
    }
}

/// Dense `exp(-i βτ H_C)` as a Kronecker product of analytic single-qubit rotations.
pub fn control_factor(amplitudes: ArrayView2<f64>, beta_tau: f64) -> Result<CMatrix> {
    if amplitudes.ncols() != 2 || amplitudes.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "control amplitudes must be n x 2, got {:?}",
            amplitudes.dim()
        )));
    }
    if amplitudes.iter().any(|v| !v.is_finite()) || !beta_tau.is_finite() {
        return Err(Error::Validation("control inputs must be finite".into()));
    }
    Ok(ControlRotations::new(amplitudes, beta_tau).to_dense())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PropagatorMode {
    Direct,
    Trotter(u8),
}

impl PropagatorMode {
    pub fn validate(self) -> Result<Self> {
        match self {
            PropagatorMode::Trotter(o) if !(1..=4).contains(&o) => Err(Error::Validation(
                format!("Trotter order must be 1, 2, 3 or 4, got {o}"),
            )),
            m => Ok(m),
        }
    }

    pub fn scheme(self) -> Result<Option<TrotterScheme>> {
        match self {
            PropagatorMode::Direct => Ok(None),
            PropagatorMode::Trotter(o) => trotter_scheme(o, None).map(Some),
        }
    }
}

impl fmt::Display for PropagatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropagatorMode::Direct => write!(f, "direct"),
            PropagatorMode::Trotter(o) => write!(f, "trotter{o}"),
        }
    }
}

impl FromStr for PropagatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "direct" || t == "0" {
            return Ok(PropagatorMode::Direct);
        }
        let digits = t
            .strip_prefix("trotter")
            .or_else(|| t.strip_prefix("order"))
            .unwrap_or(&t);
        digits
            .parse::<u8>()
            .map_err(|_| Error::Validation(format!("unknown propagator mode {s:?}")))
            .and_then(|o| PropagatorMode::Trotter(o).validate())
    }
}

impl Serialize for PropagatorMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PropagatorMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Order(u8),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Text(t) => t,
            Raw::Order(o) => o.to_string(),
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// One factor of a slice product.
#[derive(Clone, Debug)]
pub enum SliceOp<'c> {
    System(&'c SystemFactor),
    Control { rotations: ControlRotations, beta: f64 },
    Exact(CMatrix),
}

impl SliceOp<'_> {
    pub fn apply_left(&self, m: &mut CMatrix) {
        match self {
            SliceOp::System(f) => f.apply_left(m),
            SliceOp::Control { rotations, .. } => rotations.apply_left(m),
            SliceOp::Exact(u) => *m = u.dot(&*m),
        }
    }

    pub fn apply_right(&self, m: &mut CMatrix) {
        match self {
            SliceOp::System(f) => f.apply_right(m),
            SliceOp::Control { rotations, .. } => rotations.apply_right(m),
            SliceOp::Exact(u) => *m = m.dot(u),
        }
    }

    pub fn apply_vec(&self, v: &mut CVector) {
        match self {
            SliceOp::System(f) => f.apply_vec(v),
            SliceOp::Control { rotations, .. } => rotations.apply_vec(v),
            SliceOp::Exact(u) => *v = u.dot(&*v),
        }
    }

    pub fn apply_adjoint_vec(&self, v: &mut CVector) {
        match self {
            SliceOp::System(f) => f.apply_adjoint_vec(v),
            SliceOp::Control { rotations, .. } => rotations.apply_adjoint_vec(v),
            SliceOp::Exact(u) => *v = u.t().mapv(|z| z.conj()).dot(&*v),
        }
    }
}

/// Per-slice propagation for one `(H_S, τ, mode)`.
#[derive(Clone, Debug)]
pub struct Propagator<'a> {
    h_s: &'a Hamiltonian,
    mode: PropagatorMode,
    tau: f64,
    cache: Option<SegmentCache>,
}

impl<'a> Propagator<'a> {
    /// Builds the segment cache for Trotter modes.
    pub fn new(h_s: &'a Hamiltonian, mode: PropagatorMode, tau: f64) -> Result<Self> {
        let cache = match mode.validate()?.scheme()? {
            Some(scheme) => Some(cache_system_segments(h_s, tau, &scheme)?),
            None => None,
        };
        Ok(Self {
            h_s,
            mode,
            tau,
            cache,
        })
    }

    /// Trotter propagator for an explicit scheme, e.g. order 3 at another `γ`.
    pub fn with_scheme(h_s: &'a Hamiltonian, scheme: &TrotterScheme, tau: f64) -> Result<Self> {
        let mode = PropagatorMode::Trotter(scheme.order).validate()?;
        Ok(Self {
            h_s,
            mode,
            tau,
            cache: Some(cache_system_segments(h_s, tau, scheme)?),
        })
    }

    /// Reuses a prebuilt cache; it must match `(H_S, τ, scheme)`.
    pub fn with_cache(
        h_s: &'a Hamiltonian,
        mode: PropagatorMode,
        cache: Option<SegmentCache>,
        tau: f64,
    ) -> Result<Self> {
        let cache = match mode.validate()?.scheme()? {
            None => None,
            Some(scheme) => {
                let c = cache.ok_or_else(|| {
                    Error::Config(format!("mode {mode} requires a segment cache"))
                })?;
                if !c.matches(h_s, tau, &scheme) {
                    return Err(Error::Config(format!(
                        "segment cache does not match (H_S, tau = {tau}, {mode})"
                    )));
                }
                Some(c)
            }
        };
        Ok(Self {
            h_s,
            mode,
            tau,
            cache,
        })
    }

    pub fn mode(&self) -> PropagatorMode {
        self.mode
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn h_s(&self) -> &Hamiltonian {
        self.h_s
    }

    pub fn cache(&self) -> Option<&SegmentCache> {
        self.cache.as_ref()
    }

    pub fn n(&self) -> usize {
        self.h_s.n()
    }

    fn check_amplitudes(&self, amplitudes: ArrayView2<f64>) -> Result<()> {
        if amplitudes.dim() != (self.n(), 2) {
            return Err(Error::Dimension(format!(
                "slice amplitudes are {:?}, expected ({}, 2)",
                amplitudes.dim(),
                self.n()
            )));
        }
        Ok(())
    }

    /// Spectral data of `H_S + H_C[m]` (direct mode).
    pub fn slice_spectral(&self, amplitudes: ArrayView2<f64>) -> Result<Spectral> {
        self.check_amplitudes(amplitudes)?;
        let mut h = self.h_s.dense().clone();
        for t in control_hamiltonian(amplitudes)?.terms() {
            t.accumulate_into(&mut h, 1.0);
        }
        Spectral::of(&h)
    }

    /// The slice product as factors in layout order (leftmost first).
    pub fn slice_ops(&self, amplitudes: ArrayView2<f64>) -> Result<Vec<SliceOp<'_>>> {
        self.check_amplitudes(amplitudes)?;
        match &self.cache {
            None => Ok(vec![SliceOp::Exact(
                self.slice_spectral(amplitudes)?.exp(self.tau),
            )]),
            Some(cache) => Ok(cache
                .scheme
                .layout
                .iter()
                .enumerate()
                .map(|(pos, (kind, c))| match kind {
                    FactorKind::System => SliceOp::System(cache.system_at(pos)),
                    FactorKind::Control => SliceOp::Control {
                        rotations: ControlRotations::new(amplitudes, c * self.tau),
                        beta: *c,
                    },
                })
                .collect()),
        }
    }

    /// `U <- U_m U`.
    pub fn apply_slice(&self, amplitudes: ArrayView2<f64>, u: &mut CMatrix) -> Result<()> {
        for op in self.slice_ops(amplitudes)?.iter().rev() {
            op.apply_left(u);
        }
        Ok(())
    }

    pub fn step(&self, amplitudes: ArrayView2<f64>) -> Result<CMatrix> {
        let mut u = CMatrix::eye(self.h_s.dim());
        self.apply_slice(amplitudes, &mut u)?;
        Ok(u)
    }

    /// Time-ordered product over the pulse, slice 0 rightmost.
    pub fn evolve(&self, pulse: &ControlPulse) -> Result<CMatrix> {
        self.evolve_with(pulse, EvolveOptions::default())
    }

    pub fn evolve_with(&self, pulse: &ControlPulse, opts: EvolveOptions) -> Result<CMatrix> {
        self.check_pulse(pulse)?;
        let mut u = CMatrix::eye(self.h_s.dim());
        let fuse = opts.fuse_boundaries
            && self
                .cache
                .as_ref()
                .is_some_and(|c| c.scheme.is_system_bracketed());
        if !fuse {
            for m in 0..pulse.slices() {
                self.apply_slice(pulse.slice(m), &mut u)?;
            }
            return Ok(u);
        }
        let cache = self.cache.as_ref().expect("fusion requires a cache");
        let boundary = match &cache.boundary {
            Some(b) => b.clone(),
            None => {
                let (first, last) = (cache.scheme.layout[0].1, cache.scheme.layout.last().unwrap().1);
                SystemFactor::new(self.h_s, (first + last) * self.tau)?
            }
        };
        let slices = pulse.slices();
        for m in 0..slices {
            let ops = self.slice_ops(pulse.slice(m))?;
            let last = ops.len() - 1;
            if m == 0 {
                ops[last].apply_left(&mut u);
            } else {
                boundary.apply_left(&mut u);
            }
            for op in ops[1..last].iter().rev() {
                op.apply_left(&mut u);
            }
            if m == slices - 1 {
                ops[0].apply_left(&mut u);
            }
        }
        Ok(u)
    }

    /// `U |ψ>` without forming `U`.
    pub fn evolve_state(&self, pulse: &ControlPulse, psi: &CVector) -> Result<CVector> {
        self.check_pulse(pulse)?;
        let mut v = psi.clone();
        for m in 0..pulse.slices() {
            for op in self.slice_ops(pulse.slice(m))?.iter().rev() {
                op.apply_vec(&mut v);
            }
        }
        Ok(v)
    }

    fn check_pulse(&self, pulse: &ControlPulse) -> Result<()> {
        pulse.validate()?;
        if pulse.n() != self.n() {
            return Err(Error::Dimension(format!(
                "pulse drives {} qubits but H_S has {}",
                pulse.n(),
                self.n()
            )));
        }
        if pulse.tau.to_bits() != self.tau.to_bits() {
            return Err(Error::Config(format!(
                "pulse slice duration {} differs from propagator tau {}",
                pulse.tau, self.tau
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EvolveOptions {
    /// Merge the trailing system segment of one slice with the leading one of
    /// the next. Changes the factorization, not the product.
    pub fuse_boundaries: bool,
}

/// One slice propagator `U_m`.
pub fn step(
    mode: PropagatorMode,
    cache: Option<&SegmentCache>,
    h_s: &Hamiltonian,
    amplitudes: ArrayView2<f64>,
    tau: f64,
) -> Result<CMatrix> {
    Propagator::with_cache(h_s, mode, cache.cloned(), tau)?.step(amplitudes)
}

/// Full-pulse propagator `U_M ... U_1`.
pub fn evolve(pulse: &ControlPulse, h_s: &Hamiltonian, mode: PropagatorMode) -> Result<CMatrix> {
    Propagator::new(h_s, mode, pulse.tau)?.evolve(pulse)
}

/// `1 - |Tr(U_l U_0†)|² / d²`, clamped into `[0, 1]`.
pub fn propagator_infidelity(u_l: &CMatrix, u_0: &CMatrix) -> Result<f64> {
    if u_l.dim() != u_0.dim() || !u_l.is_square() {
        return Err(Error::Dimension(format!(
            "cannot compare {:?} with {:?}",
            u_l.dim(),
            u_0.dim()
        )));
    }
    let d = u_l.nrows() as f64;
    let overlap = trace_a_bdag(u_l, u_0).norm_sqr() / (d * d);
    Ok((1.0 - overlap).clamp(0.0, 1.0))
}
