//! Rotation layers interleaved with free evolution, laid out like a Trotter slice.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{apply_gate_left, apply_gate_vec, gate_mul, CMatrix, CVector, Gate2, C64, ONE, ZERO};
use crate::pauli::Hamiltonian;
use crate::propagator::SystemFactor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AnsatzOrder {
    First,
    Second,
    Fourth,
}

impl AnsatzOrder {
    pub const ALL: [AnsatzOrder; 3] = [AnsatzOrder::First, AnsatzOrder::Second, AnsatzOrder::Fourth];

    pub fn from_number(order: u8) -> Result<Self> {
        match order {
            1 => Ok(Self::First),
            2 => Ok(Self::Second),
            4 => Ok(Self::Fourth),
            other => Err(Error::Validation(format!(
                "ansatz order must be 1, 2 or 4, got {other}"
            ))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Self::First => 1,
            Self::Second => 2,
            Self::Fourth => 4,
        }
    }
}

impl fmt::Display for AnsatzOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for AnsatzOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n: u8 = s
            .trim()
            .parse()
            .map_err(|_| Error::Validation(format!("invalid ansatz order {s:?}")))?;
        Self::from_number(n)
    }
}

impl Serialize for AnsatzOrder {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.number())
    }
}

impl<'de> Deserialize<'de> for AnsatzOrder {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let n = u8::deserialize(d)?;
        Self::from_number(n).map_err(serde::de::Error::custom)
    }
}

/// `R_x(a) R_y(b) R_x(c)` with `R_σ(θ) = exp(-i θ σ / 2)`.
pub fn rotation_gate_xyx(a: f64, b: f64, c: f64) -> Gate2 {
    let rx = |t: f64| {
        let (co, si) = ((t / 2.0).cos(), (t / 2.0).sin());
        [C64::new(co, 0.0), C64::new(0.0, -si), C64::new(0.0, -si), C64::new(co, 0.0)]
    };
    let ry = |t: f64| {
        let (co, si) = ((t / 2.0).cos(), (t / 2.0).sin());
        [C64::new(co, 0.0), C64::new(-si, 0.0), C64::new(si, 0.0), C64::new(co, 0.0)]
    };
    gate_mul(&gate_mul(&rx(a), &ry(b)), &rx(c))
}

fn layer_gates(thetas: ArrayView2<f64>, scale: f64) -> Vec<Gate2> {
    thetas
        .outer_iter()
        .map(|t| rotation_gate_xyx(scale * t[0], scale * t[1], scale * t[2]))
        .collect()
}

/// Dense `⊗_j R_x(θ¹_j) R_y(θ²_j) R_x(θ³_j)` for an `n × 3` angle array.
pub fn rotation_layer(thetas: ArrayView2<f64>) -> Result<CMatrix> {
    if thetas.ncols() != 3 || thetas.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "rotation layer needs n x 3 angles, got {:?}",
            thetas.dim()
        )));
    }
    if thetas.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("rotation angles must be finite".into()));
    }
    Ok(crate::linalg::kron_gates(&layer_gates(thetas, 1.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzSpec {
    pub order: AnsatzOrder,
    /// Number of blocks `M`; `0` leaves only the initial rotation layer.
    pub layers: usize,
    /// Free-evolution time per block, in seconds.
    pub tau: f64,
    pub n: usize,
}

impl AnsatzSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidSize("ansatz needs n >= 1".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Validation(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }

    /// `3 (M + 1) n` for every order.
    pub fn parameter_count(&self) -> usize {
        3 * (self.layers + 1) * self.n
    }
}

enum Step {
    Free(usize),
    Layer { scale: f64 },
}

/// An ansatz with its free-evolution segments precomputed.
pub struct Ansatz {
    spec: AnsatzSpec,
    segments: Vec<SystemFactor>,
    block: Vec<Step>,
}

/// `s = 1/(2 - ∛2)`; segment fractions `s/2`, `(1-s)/2` and the tied-layer factor `-∛2`.
fn fourth_order_constants() -> (f64, f64, f64) {
    let s = 1.0 / (2.0 - 2f64.cbrt());
    (s / 2.0, (1.0 - s) / 2.0, -(2f64.cbrt()))
}

impl Ansatz {
    pub fn new(spec: AnsatzSpec, h_s: &Hamiltonian) -> Result<Self> {
        spec.validate()?;
        if h_s.n() != spec.n {
            return Err(Error::Dimension(format!(
                "ansatz has {} qubits but H_S has {}",
                spec.n,
                h_s.n()
            )));
        }
        let tau = spec.tau;
        // Block steps in time order; every `Layer` uses the block's own angles.
        let (segments, block) = match spec.order {
            AnsatzOrder::First => (
                vec![SystemFactor::new(h_s, tau)?],
                vec![Step::Free(0), Step::Layer { scale: 1.0 }],
            ),
            AnsatzOrder::Second => (
                vec![SystemFactor::new(h_s, tau / 2.0)?],
                vec![Step::Free(0), Step::Layer { scale: 1.0 }, Step::Free(0)],
            ),
            AnsatzOrder::Fourth => {
                let (a1, a2, tie) = fourth_order_constants();
                (
                    vec![SystemFactor::new(h_s, a1 * tau)?, SystemFactor::new(h_s, a2 * tau)?],
                    vec![
                        Step::Free(0),
                        Step::Layer { scale: 1.0 },
                        Step::Free(1),
                        Step::Layer { scale: tie },
                        Step::Free(1),
                        Step::Layer { scale: 1.0 },
                        Step::Free(0),
                    ],
                )
            }
        };
        Ok(Self {
            spec,
            segments,
            block,
        })
    }

    pub fn spec(&self) -> &AnsatzSpec {
        &self.spec
    }

    pub fn parameter_count(&self) -> usize {
        self.spec.parameter_count()
    }

    fn check(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::Validation(format!(
                "ansatz takes {} parameters, got {}",
                self.parameter_count(),
                params.len()
            )));
        }
        Ok(())
    }

    /// Visits the circuit in time order.
    fn walk(&self, params: &[f64], mut visit: impl FnMut(Visit<'_>)) {
        let n = self.spec.n;
        let layer = |m: usize, scale: f64| {
            let chunk = &params[3 * n * m..3 * n * (m + 1)];
            let view = ArrayView2::from_shape((n, 3), chunk).expect("n x 3 chunk");
            layer_gates(view, scale)
        };
        visit(Visit::Gates(&layer(0, 1.0)));
        for m in 1..=self.spec.layers {
            for step in &self.block {
                match step {
                    Step::Free(k) => visit(Visit::Free(&self.segments[*k])),
                    Step::Layer { scale } => visit(Visit::Gates(&layer(m, *scale))),
                }
            }
        }
    }

    pub fn unitary(&self, params: &[f64]) -> Result<CMatrix> {
        self.check(params)?;
        let n = self.spec.n;
        let mut u = CMatrix::eye(1 << n);
        self.walk(params, |v| match v {
            Visit::Gates(gs) => {
                for (q, g) in gs.iter().enumerate() {
                    apply_gate_left(&mut u, n, q, g);
                }
            }
            Visit::Free(f) => f.apply_left(&mut u),
        });
        Ok(u)
    }

    /// `U(θ)|0…0>`.
    pub fn state(&self, params: &[f64]) -> Result<CVector> {
        self.check(params)?;
        let n = self.spec.n;
        let mut psi = CVector::from_elem(1 << n, ZERO);
        psi[0] = ONE;
        self.walk(params, |v| match v {
            Visit::Gates(gs) => {
                for (q, g) in gs.iter().enumerate() {
                    apply_gate_vec(&mut psi, n, q, g);
                }
            }
            Visit::Free(f) => f.apply_vec(&mut psi),
        });
        Ok(psi)
    }
}

enum Visit<'a> {
    Gates(&'a [Gate2]),
    Free(&'a SystemFactor),
}

/// Dense ansatz unitary for `spec` and `params`.
pub fn build_ansatz_unitary(spec: &AnsatzSpec, h_s: &Hamiltonian, params: &[f64]) -> Result<CMatrix> {
    Ansatz::new(spec.clone(), h_s)?.unitary(params)
}
