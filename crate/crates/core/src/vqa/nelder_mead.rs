//! Nelder-Mead simplex search with dimension-adaptive coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NelderMeadConfig {
    pub max_iters: usize,
    /// Offset of each initial vertex from `x0` along one axis.
    pub initial_scale: f64,
    /// Stop once the vertex values spread by at most this much...
    pub fatol: f64,
    /// ...and every vertex is within this distance (max-norm) of the best.
    pub xatol: f64,
    /// Coefficient overrides; `None` picks the adaptive value for the dimension.
    pub reflection: Option<f64>,
    pub expansion: Option<f64>,
    pub contraction: Option<f64>,
    pub shrink: Option<f64>,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            initial_scale: 0.1,
            fatol: 1e-12,
            xatol: 1e-9,
            reflection: None,
            expansion: None,
            contraction: None,
            shrink: None,
        }
    }
}

/// `(reflection, expansion, contraction, shrink)` for dimension `d`.
pub fn adaptive_coefficients(d: usize) -> (f64, f64, f64, f64) {
    let d = d as f64;
    (1.0, 1.0 + 2.0 / d, 0.75 - 1.0 / (2.0 * d), 1.0 - 1.0 / d)
}

impl NelderMeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Validation("max_iters must be >= 1".into()));
        }
        if !(self.initial_scale.is_finite() && self.initial_scale != 0.0) {
            return Err(Error::Validation(format!(
                "initial_scale must be finite and nonzero, got {}",
                self.initial_scale
            )));
        }
        if !(self.fatol >= 0.0 && self.xatol >= 0.0) {
            return Err(Error::Validation("tolerances must be >= 0".into()));
        }
        Ok(())
    }

    fn coefficients(&self, d: usize) -> (f64, f64, f64, f64) {
        let (r, e, c, s) = adaptive_coefficients(d.max(2));
        (
            self.reflection.unwrap_or(r),
            self.expansion.unwrap_or(e),
            self.contraction.unwrap_or(c),
            self.shrink.unwrap_or(s),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Best vertex value after each iteration (entry 0 is the initial simplex).
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0`. Non-finite values count as `+∞`.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    config: &NelderMeadConfig,
) -> Result<NelderMeadResult> {
    config.validate()?;
    if x0.is_empty() || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("x0 must be nonempty and finite".into()));
    }
    let d = x0.len();
    let (rho, chi, psi, sigma) = config.coefficients(d);
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut sim: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    sim.push(x0.to_vec());
    for k in 0..d {
        let mut v = x0.to_vec();
        v[k] += config.initial_scale;
        sim.push(v);
    }
    let mut fs: Vec<f64> = sim.iter().map(|x| eval(x)).collect();
    sort_simplex(&mut sim, &mut fs);
    let mut trace = vec![fs[0]];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iters {
        if stagnant(&sim, &fs, config) {
            converged = true;
            break;
        }
        iterations += 1;
        let worst = d;
        let centroid: Vec<f64> = (0..d)
            .map(|k| sim[..d].iter().map(|x| x[k]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&sim[worst])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(rho);
        let fr = eval(&xr);
        let mut shrink = false;
        if fr < fs[0] {
            let xe = along(rho * chi);
            let fe = eval(&xe);
            if fe < fr {
                (sim[worst], fs[worst]) = (xe, fe);
            } else {
                (sim[worst], fs[worst]) = (xr, fr);
            }
        } else if fr < fs[d - 1] {
            (sim[worst], fs[worst]) = (xr, fr);
        } else if fr < fs[worst] {
            let xc = along(psi * rho);
            let fc = eval(&xc);
            if fc <= fr {
                (sim[worst], fs[worst]) = (xc, fc);
            } else {
                shrink = true;
            }
        } else {
            let xcc = along(-psi);
            let fcc = eval(&xcc);
            if fcc < fs[worst] {
                (sim[worst], fs[worst]) = (xcc, fcc);
            } else {
                shrink = true;
            }
        }
        if shrink {
            let best = sim[0].clone();
            for j in 1..=d {
                for (x, b) in sim[j].iter_mut().zip(&best) {
                    *x = b + sigma * (*x - b);
                }
                fs[j] = eval(&sim[j]);
            }
        }
        sort_simplex(&mut sim, &mut fs);
        trace.push(fs[0]);
    }
    if !converged && stagnant(&sim, &fs, config) {
        converged = true;
    }
    Ok(NelderMeadResult {
        x: sim[0].clone(),
        value: fs[0],
        trace,
        iterations,
        evaluations,
        converged,
    })
}

fn sort_simplex(sim: &mut Vec<Vec<f64>>, fs: &mut Vec<f64>) {
    let mut idx: Vec<usize> = (0..fs.len()).collect();
    // stable, so ties keep the older vertex first
    idx.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]));
    *sim = idx.iter().map(|&i| sim[i].clone()).collect();
    *fs = idx.iter().map(|&i| fs[i]).collect();
}

fn stagnant(sim: &[Vec<f64>], fs: &[f64], config: &NelderMeadConfig) -> bool {
    let (x, f) = spread(sim, fs);
    x <= config.xatol && f <= config.fatol
}

/// `(max vertex distance from the best, max value gap)`.
fn spread(sim: &[Vec<f64>], fs: &[f64]) -> (f64, f64) {
    let x = sim[1..]
        .iter()
        .flat_map(|v| v.iter().zip(&sim[0]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    let f = fs[1..].iter().map(|v| (v - fs[0]).abs()).fold(0.0, f64::max);
    (x, f)
}
