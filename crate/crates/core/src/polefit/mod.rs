//! Free-pole decomposition of a sampled noise power.
//!
//! A greedy barycentric rational fit ([`fit_barycentric`]) is converted to
//! poles and residues ([`poles_and_residues`]), and the lower half-plane poles
//! become the exponential modes of the bath correlation function
//! ([`decomposition_from_poles`]).

mod barycentric;
mod decomposition;
mod poles;

pub use barycentric::{fit_barycentric, BarycentricModel, FitConfig, ToleranceMode};
pub use decomposition::{decomposition_from_poles, eval_correlation, ExponentialDecomposition};
pub use poles::{poles_and_residues, PoleSet};

use crate::error::{Error, Result};

/// Full pipeline from samples to a retained pole set.
pub fn fit_poles(grid: &[f64], values: &[f64], cfg: &FitConfig) -> Result<PoleSet> {
    let model = fit_barycentric(grid, values, cfg)?;
    poles_and_residues(&model)
}

/// Number of retained lower half-plane modes for each tolerance.
///
/// `deltas` must be strictly descending and inside `(0, 1)`; every other
/// setting is taken from `base`.
pub fn scan_k_vs_delta(
    grid: &[f64],
    values: &[f64],
    deltas: &[f64],
    base: &FitConfig,
) -> Result<Vec<(f64, usize)>> {
    if deltas.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
        return Err(Error::invalid("scan tolerances must lie in (0, 1)"));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("scan tolerances must be sorted in descending order"));
    }
    deltas
        .iter()
        .map(|&delta| {
            let cfg = FitConfig {
                delta,
                residue_floor: base.residue_floor,
                ..base.clone()
            };
            fit_poles(grid, values, &cfg)
                .map(|ps| (delta, ps.len()))
                .map_err(|e| Error::ScanEntry {
                    delta,
                    source: Box::new(e),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_on_exact_lorentzian_gives_one_mode() {
        let grid: Vec<f64> = (0..=200).map(|i| -10.0 + 0.1 * i as f64).collect();
        let values: Vec<f64> = grid.iter().map(|w| 1.0 / (w * w + 1.0)).collect();
        let scan = scan_k_vs_delta(&grid, &values, &[1e-2], &FitConfig::new(1e-2).unwrap()).unwrap();
        assert_eq!(scan, vec![(1e-2, 1)]);
    }

    #[test]
    fn scan_rejects_unsorted_tolerances() {
        let grid = [1.0, 2.0, 3.0];
        let values = [1.0, 2.0, 3.0];
        let cfg = FitConfig::new(1e-3).unwrap();
        assert!(scan_k_vs_delta(&grid, &values, &[1e-4, 1e-3], &cfg).is_err());
        assert!(scan_k_vs_delta(&grid, &values, &[1.5], &cfg).is_err());
    }

    #[test]
    fn scan_annotates_failures_with_delta() {
        // a constant fits with no poles, so the pole set is empty but valid;
        // a step needs more support points than allowed
        let grid: Vec<f64> = (0..50).map(|i| i as f64 - 24.5).collect();
        let values: Vec<f64> = grid.iter().map(|&w| if w < 0.0 { 0.0 } else { 1.0 }).collect();
        let cfg = FitConfig {
            max_iterations: 3,
            ..FitConfig::new(1e-3).unwrap()
        };
        match scan_k_vs_delta(&grid, &values, &[1e-3], &cfg) {
            Err(Error::ScanEntry { delta, source }) => {
                assert_eq!(delta, 1e-3);
                assert!(matches!(*source, Error::NonConvergence { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
