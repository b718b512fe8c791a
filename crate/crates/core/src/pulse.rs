use ndarray::{Array3, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-constant transverse controls.
///
/// `amplitudes[[m, j, 0]]` is `u_x` on qubit `j` during slice `m`, `[.., 1]` is
/// `u_y`; both in rad/s. Slice 0 is applied first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "PulseRecord", try_from = "PulseRecord")]
pub struct ControlPulse {
    pub tau: f64,
    pub amplitudes: Array3<f64>,
}

/// Serialized form: amplitudes nested as `[m][j][x|y]`.
#[derive(Serialize, Deserialize)]
struct PulseRecord {
    tau: f64,
    amplitudes: Vec<Vec<[f64; 2]>>,
}

impl From<ControlPulse> for PulseRecord {
    fn from(p: ControlPulse) -> Self {
        let amplitudes = p
            .amplitudes
            .outer_iter()
            .map(|slice| slice.outer_iter().map(|r| [r[0], r[1]]).collect())
            .collect();
        Self {
            tau: p.tau,
            amplitudes,
        }
    }
}

impl TryFrom<PulseRecord> for ControlPulse {
    type Error = Error;

    fn try_from(r: PulseRecord) -> Result<Self> {
        let m = r.amplitudes.len();
        let n = r.amplitudes.first().map_or(0, Vec::len);
        if r.amplitudes.iter().any(|s| s.len() != n) {
            return Err(Error::Dimension("ragged pulse amplitudes".into()));
        }
        let flat: Vec<f64> = r.amplitudes.iter().flatten().flatten().copied().collect();
        let amps = Array3::from_shape_vec((m, n, 2), flat)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        ControlPulse::new(r.tau, amps)
    }
}

impl ControlPulse {
    pub fn new(tau: f64, amplitudes: Array3<f64>) -> Result<Self> {
        let pulse = Self { tau, amplitudes };
        pulse.validate()?;
        Ok(pulse)
    }

    pub fn zeros(n: usize, slices: usize, tau: f64) -> Result<Self> {
        Self::new(tau, Array3::zeros((slices, n, 2)))
    }

    /// Uniform amplitudes in `[-scale, scale]`.
    pub fn random(n: usize, slices: usize, tau: f64, scale: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps = Array3::from_shape_simple_fn((slices, n, 2), || {
            if scale > 0.0 {
                rng.gen_range(-scale..=scale)
            } else {
                0.0
            }
        });
        Self::new(tau, amps)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n, two) = self.amplitudes.dim();
        if two != 2 || n == 0 {
            return Err(Error::Dimension(format!(
                "pulse amplitudes must be M x n x 2, got {:?}",
                self.amplitudes.dim()
            )));
        }
        if m == 0 {
            return Err(Error::InvalidSize("pulse needs at least one slice".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Validation(format!(
                "slice duration must be positive, got {}",
                self.tau
            )));
        }
        if self.amplitudes.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("pulse amplitudes must be finite".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.amplitudes.dim().1
    }

    pub fn slices(&self) -> usize {
        self.amplitudes.dim().0
    }

    pub fn duration(&self) -> f64 {
        self.tau * self.slices() as f64
    }

    pub fn slice(&self, m: usize) -> ArrayView2<'_, f64> {
        self.amplitudes.index_axis(ndarray::Axis(0), m)
    }

    pub fn as_flat(&self) -> Vec<f64> {
        self.amplitudes.iter().copied().collect()
    }

    pub fn with_flat(&self, flat: &[f64]) -> Self {
        let amplitudes = Array3::from_shape_vec(self.amplitudes.raw_dim(), flat.to_vec())
            .expect("flat vector length matches pulse shape");
        Self {
            tau: self.tau,
            amplitudes,
        }
    }

    /// Clamp every amplitude into `[-bound, bound]`.
    pub fn project(&mut self, bound: f64) {
        self.amplitudes.mapv_inplace(|v| v.clamp(-bound, bound));
    }

    /// Repeat each slice `factor` times, keeping the total duration.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidSize("refinement factor must be >= 1".into()));
        }
        let (m, n, _) = self.amplitudes.dim();
        let amps = Array3::from_shape_fn((m * factor, n, 2), |(k, j, g)| {
            self.amplitudes[[k / factor, j, g]]
        });
        Self::new(self.tau / factor as f64, amps)
    }

    /// CSV with columns `m,j,u_x,u_y` (1-based slice and qubit indices).
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["m", "j", "u_x", "u_y"])?;
        for (m, slice) in self.amplitudes.outer_iter().enumerate() {
            for (j, row) in slice.outer_iter().enumerate() {
                w.write_record([
                    (m + 1).to_string(),
                    (j + 1).to_string(),
                    format!("{:e}", row[0]),
                    format!("{:e}", row[1]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
