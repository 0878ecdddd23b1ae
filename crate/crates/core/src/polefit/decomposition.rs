use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::poles::PoleSet;
use crate::error::{Error, Result};

/// Relative slack on `Re C(0) ≥ 0` for round-off in nearly cancelling sums.
const VARIANCE_SLACK: f64 = 1e-12;

/// Bath correlation function as a sum of complex exponentials,
/// `C(t) = Σ_k d_k e^{−z_k t}` for `t ≥ 0`, with `Re z_k = γ_k > 0`.
///
/// Modes are stored in descending order of `γ_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialDecomposition {
    amplitudes: Vec<Complex64>,
    exponents: Vec<Complex64>,
}

impl ExponentialDecomposition {
    /// Validates decay rates and the sign of `Re C(0)`, then orders modes by
    /// descending decay rate.
    pub fn new(amplitudes: Vec<Complex64>, exponents: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != exponents.len() {
            return Err(Error::DimensionMismatch {
                expected: amplitudes.len(),
                found: exponents.len(),
            });
        }
        if amplitudes.is_empty() {
            return Err(Error::NoModes);
        }
        for (index, (d, z)) in amplitudes.iter().zip(&exponents).enumerate() {
            if ![d.re, d.im, z.re, z.im].iter().all(|v| v.is_finite()) {
                return Err(Error::invalid(format!("mode {index} is not finite")));
            }
            if !(z.re > 0.0) {
                return Err(Error::NonDecayingMode { index, gamma: z.re });
            }
        }
        let c0: f64 = amplitudes.iter().map(|d| d.re).sum();
        let mag: f64 = amplitudes.iter().map(|d| d.norm()).sum();
        if c0 < -VARIANCE_SLACK * mag {
            return Err(Error::NegativeVariance(c0));
        }
        let mut modes: Vec<(Complex64, Complex64)> = amplitudes.into_iter().zip(exponents).collect();
        modes.sort_by(|a, b| b.1.re.total_cmp(&a.1.re).then(a.1.im.total_cmp(&b.1.im)));
        Ok(Self {
            amplitudes: modes.iter().map(|m| m.0).collect(),
            exponents: modes.iter().map(|m| m.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// Amplitudes `d_k`.
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Exponents `z_k = γ_k + iω_k`.
    pub fn exponents(&self) -> &[Complex64] {
        &self.exponents
    }

    /// Decay rates `γ_k`.
    pub fn decay_rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.exponents.iter().map(|z| z.re)
    }

    /// Oscillation frequencies `ω_k`.
    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        self.exponents.iter().map(|z| z.im)
    }

    /// Largest `|z_k|`, which sets the stiffness of the hierarchy.
    pub fn max_rate(&self) -> f64 {
        self.exponents.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Same exponents with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.amplitudes.iter().map(|d| d * factor).collect(), self.exponents.clone())
    }

    /// `C(t)` for `t ≥ 0`.
    pub fn correlation(&self, t: f64) -> Result<Complex64> {
        eval_correlation(self, t)
    }
}

/// Maps each lower half-plane pole `ξ` with residue `η` to the mode
/// `d = −iη`, `z = iξ` (so `γ = −Im ξ`, `ω = Re ξ`).
///
/// The constant term of the fit corresponds to a `δ(t)` contribution and is
/// not part of the decomposition.
pub fn decomposition_from_poles(poles: &PoleSet) -> Result<ExponentialDecomposition> {
    if poles.is_empty() {
        return Err(Error::NoModes);
    }
    let i = Complex64::i();
    for (index, xi) in poles.poles.iter().enumerate() {
        if !(xi.im < 0.0) {
            return Err(Error::PoleNotInLowerHalfPlane {
                index,
                re: xi.re,
                im: xi.im,
            });
        }
    }
    ExponentialDecomposition::new(
        poles.residues.iter().map(|&eta| -i * eta).collect(),
        poles.poles.iter().map(|&xi| i * xi).collect(),
    )
}

/// `C(t) = Σ_k d_k e^{−z_k t}`.
pub fn eval_correlation(dec: &ExponentialDecomposition, t: f64) -> Result<Complex64> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    Ok(dec
        .amplitudes
        .iter()
        .zip(&dec.exponents)
        .map(|(&d, &z)| d * (-z * t).exp())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pole_set(poles: Vec<Complex64>, residues: Vec<Complex64>) -> PoleSet {
        PoleSet {
            poles,
            residues,
            constant: 0.0,
            fit_error: 0.0,
            tolerance: 0.0,
            dropped_froissart: 0,
            regularized_real: 0,
            conjugate_mismatch: 0.0,
        }
    }

    #[test]
    fn lorentzian_maps_to_single_real_exponential() {
        // S(ω) = 1/(ω² + 1): ξ = −i, η = i/2 → C(t) = e^{−t}/2
        let ps = pole_set(vec![Complex64::new(0.0, -1.0)], vec![Complex64::new(0.0, 0.5)]);
        let dec = decomposition_from_poles(&ps).unwrap();
        assert_eq!(dec.amplitudes()[0], Complex64::new(0.5, 0.0));
        assert_eq!(dec.exponents()[0], Complex64::new(1.0, 0.0));
        let c = dec.correlation(2.0).unwrap();
        assert!((c - Complex64::new(0.5 * (-2.0f64).exp(), 0.0)).norm() < 1e-16);
    }

    #[test]
    fn modes_sorted_by_descending_decay_rate() {
        let dec = ExponentialDecomposition::new(
            vec![Complex64::new(1.0, 0.0); 3],
            vec![
                Complex64::new(0.5, 1.0),
                Complex64::new(3.0, 0.0),
                Complex64::new(1.0, -2.0),
            ],
        )
        .unwrap();
        let rates: Vec<f64> = dec.decay_rates().collect();
        assert_eq!(rates, vec![3.0, 1.0, 0.5]);
    }

    #[test]
    fn rejects_bad_modes() {
        let one = Complex64::new(1.0, 0.0);
        assert!(matches!(
            ExponentialDecomposition::new(vec![one], vec![Complex64::new(0.0, 1.0)]),
            Err(Error::NonDecayingMode { index: 0, .. })
        ));
        assert!(matches!(
            ExponentialDecomposition::new(vec![-one], vec![one]),
            Err(Error::NegativeVariance(_))
        ));
        assert!(matches!(ExponentialDecomposition::new(vec![], vec![]), Err(Error::NoModes)));
        let upper = pole_set(vec![Complex64::new(0.0, 1.0)], vec![one]);
        assert!(matches!(
            decomposition_from_poles(&upper),
            Err(Error::PoleNotInLowerHalfPlane { .. })
        ));
    }

    #[test]
    fn negative_time_is_rejected() {
        let dec = ExponentialDecomposition::new(vec![Complex64::new(1.0, 0.0)], vec![Complex64::new(1.0, 0.0)]).unwrap();
        assert!(matches!(dec.correlation(-1.0), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn scaling_multiplies_correlation() {
        let dec = ExponentialDecomposition::new(
            vec![Complex64::new(0.3, 0.1), Complex64::new(0.2, -0.4)],
            vec![Complex64::new(1.0, 2.0), Complex64::new(0.4, -1.0)],
        )
        .unwrap();
        let s = dec.scaled(4.0).unwrap();
        let a = dec.correlation(0.7).unwrap() * 4.0;
        let b = s.correlation(0.7).unwrap();
        assert!((a - b).norm() < 1e-15);
    }
}
