use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the termination tolerance is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToleranceMode {
    /// `max |S̃ − S| ≤ δ · max |S|` on the grid.
    #[default]
    Relative,
    /// `max |S̃ − S| ≤ δ`.
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Max-norm tolerance δ.
    pub delta: f64,
    /// Upper bound on the number of support points.
    pub max_iterations: usize,
    /// Poles whose largest contribution on the grid, `|η|/min_j|ω_j − ξ|`,
    /// is below `residue_floor · max|S|` are spurious pole-zero pairs.
    /// Defaults to `δ²`.
    pub residue_floor: Option<f64>,
    pub tolerance_mode: ToleranceMode,
    /// Relative headroom granted to the pole-sum representation over the
    /// barycentric tolerance after filtering.
    pub post_filter_slack: f64,
}

impl FitConfig {
    pub fn new(delta: f64) -> Result<Self> {
        let cfg = Self {
            delta,
            max_iterations: 200,
            residue_floor: None,
            tolerance_mode: ToleranceMode::Relative,
            post_filter_slack: 0.1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("tolerance delta = {} outside (0, 1)", self.delta)));
        }
        if self.max_iterations < 2 {
            return Err(Error::invalid("max_iterations must be >= 2"));
        }
        if let Some(f) = self.residue_floor {
            if !(f >= 0.0) {
                return Err(Error::invalid("residue_floor must be >= 0"));
            }
        }
        if !(self.post_filter_slack >= 0.0) {
            return Err(Error::invalid("post_filter_slack must be >= 0"));
        }
        Ok(())
    }

    pub fn residue_floor(&self) -> f64 {
        self.residue_floor.unwrap_or(self.delta * self.delta)
    }
}

/// Barycentric rational approximant
/// `S̃(ω) = Σ_k W_k S_k / (ω − Ω_k) / Σ_k W_k / (ω − Ω_k)`
/// together with the grid it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct BarycentricModel {
    support: Vec<f64>,
    values: Vec<f64>,
    weights: Vec<f64>,
    grid: Vec<f64>,
    samples: Vec<f64>,
    scale: f64,
    tolerance: f64,
    fit_error: f64,
    residue_floor: f64,
    post_filter_slack: f64,
}

impl BarycentricModel {
    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Active-set size m.
    pub fn m(&self) -> usize {
        self.support.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// `max |S|` over the grid.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Absolute max-norm tolerance the fit was run against.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Achieved absolute max-norm error on the grid.
    pub fn fit_error(&self) -> f64 {
        self.fit_error
    }

    pub fn relative_error(&self) -> f64 {
        if self.scale > 0.0 {
            self.fit_error / self.scale
        } else {
            self.fit_error
        }
    }

    pub fn converged(&self) -> bool {
        self.fit_error <= self.tolerance
    }

    pub(crate) fn residue_floor(&self) -> f64 {
        self.residue_floor
    }

    pub(crate) fn post_filter_slack(&self) -> f64 {
        self.post_filter_slack
    }

    /// Approximant on the real axis; exact at support points.
    pub fn eval(&self, omega: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&s, &f), &w) in self.support.iter().zip(&self.values).zip(&self.weights) {
            if omega == s {
                return f;
            }
            let c = w / (omega - s);
            num += c * f;
            den += c;
        }
        num / den
    }

    /// `N(z) = Σ W_k S_k / (z − Ω_k)`.
    pub fn numerator(&self, z: Complex64) -> Complex64 {
        self.support
            .iter()
            .zip(&self.values)
            .zip(&self.weights)
            .map(|((&s, &f), &w)| (w * f) / (z - s))
            .sum()
    }

    /// `D(z) = Σ W_k / (z − Ω_k)`.
    pub fn denominator(&self, z: Complex64) -> Complex64 {
        self.support
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| w / (z - s))
            .sum()
    }

    /// `D′(z) = −Σ W_k / (z − Ω_k)²`.
    pub fn denominator_derivative(&self, z: Complex64) -> Complex64 {
        -self
            .support
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| {
                let d = z - s;
                w / (d * d)
            })
            .sum::<Complex64>()
    }

    /// Limit of the approximant as `|ω| → ∞`.
    pub fn value_at_infinity(&self) -> f64 {
        let wsum: f64 = self.weights.iter().sum();
        let wf: f64 = self.weights.iter().zip(&self.values).map(|(w, f)| w * f).sum();
        wf / wsum
    }

    /// Max-norm deviation from `values` on `grid`.
    pub fn max_error(&self, grid: &[f64], values: &[f64]) -> f64 {
        grid.iter()
            .zip(values)
            .map(|(&w, &s)| abs_error(self.eval(w), s))
            .fold(0.0, f64::max)
    }
}

fn abs_error(approx: f64, exact: f64) -> f64 {
    let e = (approx - exact).abs();
    // a pole sitting exactly on a grid point yields NaN or inf
    if e.is_nan() {
        f64::INFINITY
    } else {
        e
    }
}

/// Greedy adaptive barycentric fit.
///
/// Starts from the grid point deviating most from the mean, solves for the
/// weights as the smallest right singular vector of the Loewner matrix over
/// the non-support grid points, and adds the worst-approximated grid point
/// until the max-norm error meets the tolerance.
pub fn fit_barycentric(grid: &[f64], values: &[f64], cfg: &FitConfig) -> Result<BarycentricModel> {
    cfg.validate()?;
    if grid.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: values.len(),
        });
    }
    if grid.len() < 2 {
        return Err(Error::invalid("at least two grid points are required"));
    }
    if let Some(bad) = grid.iter().chain(values).find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite sample {bad}")));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateGridPoint(w[0]));
    }

    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tolerance = match cfg.tolerance_mode {
        ToleranceMode::Relative => cfg.delta * scale,
        ToleranceMode::Absolute => cfg.delta,
    };
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let first = argmax(values.iter().map(|v| (v - mean).abs()));

    let mut in_support = vec![false; grid.len()];
    let mut active: Vec<usize> = Vec::new();
    let mut next = first;
    let mut best: Option<BarycentricModel> = None;

    loop {
        active.push(next);
        in_support[next] = true;

        let support: Vec<f64> = active.iter().map(|&i| grid[i]).collect();
        let support_values: Vec<f64> = active.iter().map(|&i| values[i]).collect();
        let weights = loewner_weights(grid, values, &in_support, &support, &support_values)?;

        let mut model = BarycentricModel {
            support,
            values: support_values,
            weights,
            grid: grid.to_vec(),
            samples: values.to_vec(),
            scale,
            tolerance,
            fit_error: 0.0,
            residue_floor: cfg.residue_floor() * scale,
            post_filter_slack: cfg.post_filter_slack,
        };
        let errors: Vec<f64> = grid
            .iter()
            .zip(values)
            .map(|(&w, &s)| abs_error(model.eval(w), s))
            .collect();
        let worst = argmax(errors.iter().copied());
        model.fit_error = errors[worst];

        if model.fit_error <= tolerance {
            return Ok(model);
        }
        let improved = best.as_ref().map_or(true, |b| model.fit_error < b.fit_error);
        if improved {
            best = Some(model);
        }
        if active.len() >= cfg.max_iterations || in_support[worst] {
            let best = best.expect("at least one iterate");
            return Err(Error::NonConvergence {
                iterations: active.len(),
                error: best.fit_error,
                tolerance,
                best: Box::new(best),
            });
        }
        next = worst;
    }
}

/// Unit-norm weight vector minimising the linearised residual
/// `Σ_j |Σ_k W_k (S_j − S_k)/(ω_j − Ω_k)|²` over non-support points.
fn loewner_weights(
    grid: &[f64],
    values: &[f64],
    in_support: &[bool],
    support: &[f64],
    support_values: &[f64],
) -> Result<Vec<f64>> {
    let m = support.len();
    if m == 1 {
        return Ok(vec![1.0]);
    }
    let rows: Vec<usize> = (0..grid.len()).filter(|&i| !in_support[i]).collect();
    let loewner = Mat::<f64>::from_fn(rows.len(), m, |r, k| {
        let j = rows[r];
        (values[j] - support_values[k]) / (grid[j] - support[k])
    });

    let weights: Vec<f64> = if rows.len() >= m {
        let svd = loewner
            .thin_svd()
            .map_err(|e| Error::EigenSolver(format!("Loewner SVD failed: {e:?}")))?;
        let sv = svd.S().column_vector();
        let smallest = argmin((0..m).map(|k| sv[k]));
        let v = svd.V();
        (0..m).map(|k| v[(k, smallest)]).collect()
    } else {
        // fewer rows than unknowns: any null vector of the full V will do
        let svd = loewner
            .svd()
            .map_err(|e| Error::EigenSolver(format!("Loewner SVD failed: {e:?}")))?;
        let v = svd.V();
        (0..m).map(|k| v[(k, m - 1)]).collect()
    };

    // fix the sign so the largest component is positive
    let pivot = argmax(weights.iter().map(|w| w.abs()));
    let sign = if weights[pivot] < 0.0 { -1.0 } else { 1.0 };
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    Ok(weights.iter().map(|w| sign * w / norm).collect())
}

fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in it.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn argmin(it: impl Iterator<Item = f64>) -> usize {
    argmax(it.map(|v| -v))
}
