//! Reservoir spectral densities and thermal noise power.
//!
//! The noise power follows from the spectral density through the
//! fluctuation-dissipation relation `S(ω) = 2 [n(ω) + 1] J(ω)` with the Bose
//! function `n(ω) = 1 / (exp(βω) − 1)` and `J` extended antisymmetrically to
//! negative frequencies. At `T = 0` this collapses to `2 J(ω)` for `ω > 0` and
//! zero otherwise.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Subohmic (and ohmic, `s = 1`) spectral density with exponential cutoff,
/// `J(ω) = (π/2) α ω_c^{1−s} ω^s e^{−ω/ω_c}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubohmicParams {
    pub s: f64,
    pub alpha: f64,
    pub omega_c: f64,
}

impl SubohmicParams {
    pub fn new(s: f64, alpha: f64, omega_c: f64) -> Result<Self> {
        let p = Self { s, alpha, omega_c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s <= 1.0) {
            return Err(Error::invalid(format!("exponent s = {} outside (0, 1]", self.s)));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!("coupling alpha = {} must be >= 0", self.alpha)));
        }
        if !(self.omega_c > 0.0) || !self.omega_c.is_finite() {
            return Err(Error::invalid(format!("cutoff omega_c = {} must be > 0", self.omega_c)));
        }
        Ok(())
    }

    /// Spectral density on the non-negative half axis.
    pub fn spectral_density(&self, omega: f64) -> Result<f64> {
        if omega < 0.0 || omega.is_nan() {
            return Err(Error::Domain {
                what: "the subohmic spectral density",
                omega,
            });
        }
        if omega == 0.0 {
            return Ok(0.0);
        }
        Ok(FRAC_PI_2
            * self.alpha
            * self.omega_c.powf(1.0 - self.s)
            * omega.powf(self.s)
            * (-omega / self.omega_c).exp())
    }

    /// Spectral density with the antisymmetric extension `J(−ω) = −J(ω)`.
    pub fn spectral_density_odd(&self, omega: f64) -> f64 {
        // the magnitude is evaluated once so the extension is exact
        let magnitude = self
            .spectral_density(omega.abs())
            .expect("|omega| is non-negative");
        if omega < 0.0 {
            -magnitude
        } else {
            magnitude
        }
    }

    /// `lim_{ω→0} J(ω)/ω`, finite only for the ohmic case.
    fn ohmic_slope(&self) -> Option<f64> {
        (self.s == 1.0).then(|| FRAC_PI_2 * self.alpha)
    }
}

/// Two-band spectrum with steep (sixth power) band edges, defined for
/// `ω ≥ 0` and zero below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandgapParams {
    pub kappa: [f64; 2],
    pub xi: [f64; 2],
    pub omega: [f64; 2],
}

impl BandgapParams {
    pub fn new(kappa: [f64; 2], xi: [f64; 2], omega: [f64; 2]) -> Result<Self> {
        let p = Self { kappa, xi, omega };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kappa.iter().any(|&k| !(k >= 0.0)) {
            return Err(Error::invalid("band amplitudes kappa must be >= 0"));
        }
        if self.xi.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::invalid("band widths xi must be > 0"));
        }
        if self.omega.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::invalid("band centers must be > 0"));
        }
        if !(self.omega[0] < self.omega[1]) {
            return Err(Error::invalid("band centers must satisfy omega1 < omega2"));
        }
        Ok(())
    }

    pub fn noise_power(&self, omega: f64) -> f64 {
        if omega < 0.0 {
            return 0.0;
        }
        (0..2)
            .map(|b| {
                let (k, x, c) = (self.kappa[b], self.xi[b], self.omega[b]);
                let detune = omega * omega - c * c;
                k * x.powi(8) * omega / (detune.powi(6) + omega * omega * x.powi(10))
            })
            .sum()
    }
}

/// Lorentzian noise power `A / ((ω − ω₀)² + γ²)`, an exact single-pole
/// rational function used for validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianParams {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl LorentzianParams {
    pub fn new(amplitude: f64, center: f64, width: f64) -> Result<Self> {
        let p = Self {
            amplitude,
            center,
            width,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) {
            return Err(Error::invalid("Lorentzian amplitude must be >= 0"));
        }
        if !(self.width > 0.0) {
            return Err(Error::invalid("Lorentzian width must be > 0"));
        }
        if !self.center.is_finite() {
            return Err(Error::invalid("Lorentzian center must be finite"));
        }
        Ok(())
    }

    pub fn noise_power(&self, omega: f64) -> f64 {
        let x = omega - self.center;
        self.amplitude / (x * x + self.width * self.width)
    }
}

/// Sampled noise power, interpolated linearly in `log|ω|` on each half axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedSpectrum {
    /// (ln ω, S) for ω > 0, ascending.
    positive: Vec<(f64, f64)>,
    /// (ln |ω|, S) for ω < 0, ascending in |ω|.
    negative: Vec<(f64, f64)>,
}

impl TabulatedSpectrum {
    pub fn new(samples: &[(f64, f64)]) -> Result<Self> {
        let mut positive = Vec::new();
        let mut negative = Vec::new();
        for &(w, s) in samples {
            if !w.is_finite() || !s.is_finite() {
                return Err(Error::invalid("tabulated samples must be finite"));
            }
            if s < 0.0 {
                return Err(Error::invalid(format!("negative noise power {s} at omega = {w}")));
            }
            match w.partial_cmp(&0.0) {
                Some(std::cmp::Ordering::Greater) => positive.push((w.ln(), s)),
                Some(std::cmp::Ordering::Less) => negative.push(((-w).ln(), s)),
                _ => return Err(Error::invalid("tabulated spectrum may not contain omega = 0")),
            }
        }
        for half in [&mut positive, &mut negative] {
            half.sort_by(|a, b| a.0.total_cmp(&b.0));
            if half.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(Error::invalid("tabulated spectrum has duplicate frequencies"));
            }
        }
        if positive.len() + negative.len() < 2 {
            return Err(Error::invalid("tabulated spectrum needs at least two samples"));
        }
        Ok(Self { positive, negative })
    }

    pub fn noise_power(&self, omega: f64) -> Result<f64> {
        let half = if omega > 0.0 { &self.positive } else { &self.negative };
        let out_of_range = Error::Domain {
            what: "the tabulated spectrum (no extrapolation)",
            omega,
        };
        if omega == 0.0 || half.is_empty() {
            return Err(out_of_range);
        }
        let x = omega.abs().ln();
        let (first, last) = (half[0], half[half.len() - 1]);
        if x < first.0 || x > last.0 {
            // endpoints compare exactly after the round trip through ln
            return Err(out_of_range);
        }
        let hi = half.partition_point(|p| p.0 < x).min(half.len() - 1);
        if half[hi].0 == x {
            return Ok(half[hi].1);
        }
        let (a, b) = (half[hi - 1], half[hi]);
        let t = (x - a.0) / (b.0 - a.0);
        Ok(a.1 + t * (b.1 - a.1))
    }

    /// Frequency range covered on each half axis, as `(min |ω|, max |ω|)`.
    pub fn positive_range(&self) -> Option<(f64, f64)> {
        range_of(&self.positive)
    }

    pub fn negative_range(&self) -> Option<(f64, f64)> {
        range_of(&self.negative)
    }
}

fn range_of(half: &[(f64, f64)]) -> Option<(f64, f64)> {
    Some((half.first()?.0.exp(), half.last()?.0.exp()))
}

/// Closed-form or sampled reservoir model.
///
/// Only the subohmic family is defined through `J(ω)` and the
/// fluctuation-dissipation relation. The remaining variants are noise powers
/// given directly; temperature does not enter them (the bandgap model is a
/// zero-temperature spectrum).
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumModel {
    Subohmic(SubohmicParams),
    Bandgap(BandgapParams),
    Lorentzian(LorentzianParams),
    Tabulated(TabulatedSpectrum),
}

impl SpectrumModel {
    pub fn name(&self) -> &'static str {
        match self {
            SpectrumModel::Subohmic(_) => "subohmic",
            SpectrumModel::Bandgap(_) => "bandgap",
            SpectrumModel::Lorentzian(_) => "lorentzian",
            SpectrumModel::Tabulated(_) => "tabulated",
        }
    }
}

/// Temperature in energy units; `T = 0` selects the zero-point branch.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Temperature(f64);

impl Temperature {
    pub const ZERO: Temperature = Temperature(0.0);

    pub fn new(t: f64) -> Result<Self> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!("temperature {t} must be finite and >= 0")));
        }
        Ok(Self(t))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }

    /// Inverse temperature; infinite at `T = 0`.
    pub fn beta(self) -> f64 {
        1.0 / self.0
    }
}

/// Subohmic spectral density, failing for `ω < 0`.
pub fn eval_subohmic_j(p: &SubohmicParams, omega: f64) -> Result<f64> {
    p.spectral_density(omega)
}

/// Noise power `S_β(ω)` of a reservoir model.
pub fn noise_power(model: &SpectrumModel, temperature: Temperature, omega: f64) -> Result<f64> {
    match model {
        SpectrumModel::Subohmic(p) => subohmic_noise_power(p, temperature, omega),
        SpectrumModel::Bandgap(p) => Ok(p.noise_power(omega)),
        SpectrumModel::Lorentzian(p) => Ok(p.noise_power(omega)),
        SpectrumModel::Tabulated(t) => t.noise_power(omega),
    }
}

fn subohmic_noise_power(p: &SubohmicParams, temperature: Temperature, omega: f64) -> Result<f64> {
    if omega.is_nan() {
        return Err(Error::Domain {
            what: "the noise power",
            omega,
        });
    }
    if temperature.is_zero() {
        return Ok(if omega > 0.0 {
            2.0 * p.spectral_density(omega)?
        } else {
            0.0
        });
    }
    let beta = temperature.beta();
    if omega == 0.0 {
        // 2 (n + 1) J → 2 T J(ω)/ω
        return p
            .ohmic_slope()
            .map(|slope| 2.0 * temperature.value() * slope)
            .ok_or(Error::SingularAtOrigin);
    }
    // n(ω) + 1 = 1 / (1 − e^{−βω})
    let occupation = 1.0 / -(-beta * omega).exp_m1();
    Ok(2.0 * occupation * p.spectral_density_odd(omega))
}

/// Sample frequencies for fitting: log-spaced segments that exclude a
/// neighbourhood of `ω = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyDomain {
    pub segments: Vec<(f64, f64)>,
    pub points_per_decade: usize,
    pub grid: Vec<f64>,
}

impl FrequencyDomain {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn min_abs(&self) -> f64 {
        self.grid.iter().fold(f64::INFINITY, |m, w| m.min(w.abs()))
    }

    /// Evaluates the noise power on every grid point.
    pub fn sample(&self, model: &SpectrumModel, temperature: Temperature) -> Result<Vec<f64>> {
        self.grid
            .iter()
            .map(|&w| noise_power(model, temperature, w))
            .collect()
    }
}

/// Log-spaced grid on `[lo_mag, hi_mag]`, mirrored onto the negative axis when
/// `two_sided`. Both endpoints are grid points.
pub fn build_domain(
    lo_mag: f64,
    hi_mag: f64,
    points_per_decade: usize,
    two_sided: bool,
) -> Result<FrequencyDomain> {
    if !(lo_mag > 0.0 && hi_mag > lo_mag && hi_mag.is_finite()) {
        return Err(Error::invalid(format!(
            "domain bounds must satisfy 0 < lo < hi, got [{lo_mag}, {hi_mag}]"
        )));
    }
    if points_per_decade < 10 {
        return Err(Error::invalid(format!(
            "points_per_decade = {points_per_decade} must be >= 10"
        )));
    }
    let decades = (hi_mag / lo_mag).log10();
    // guard against 7.000000000001 decades rounding up to an extra interval
    let intervals = ((decades * points_per_decade as f64) - 1e-9).ceil().max(1.0) as usize;
    let (ln_lo, ln_hi) = (lo_mag.ln(), hi_mag.ln());
    let mut positive: Vec<f64> = (0..=intervals)
        .map(|i| (ln_lo + (ln_hi - ln_lo) * i as f64 / intervals as f64).exp())
        .collect();
    positive[0] = lo_mag;
    positive[intervals] = hi_mag;

    let mut segments = Vec::new();
    let mut grid = Vec::with_capacity(positive.len() * if two_sided { 2 } else { 1 });
    if two_sided {
        segments.push((-hi_mag, -lo_mag));
        grid.extend(positive.iter().rev().map(|w| -w));
    }
    segments.push((lo_mag, hi_mag));
    grid.append(&mut positive);
    Ok(FrequencyDomain {
        segments,
        points_per_decade,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flagship() -> SubohmicParams {
        SubohmicParams::new(0.5, 0.05, 20.0).unwrap()
    }

    #[test]
    fn subohmic_j_vanishes_at_origin() {
        assert_eq!(flagship().spectral_density(0.0).unwrap(), 0.0);
        assert_eq!(SubohmicParams::new(1.0, 0.3, 5.0).unwrap().spectral_density(0.0).unwrap(), 0.0);
    }

    #[test]
    fn subohmic_j_at_cutoff() {
        let p = flagship();
        let expected = FRAC_PI_2 * 0.05 * 20.0 * (-1.0f64).exp();
        let got = p.spectral_density(20.0).unwrap();
        assert!((got - expected).abs() <= 4.0 * f64::EPSILON * expected);
    }

    #[test]
    fn subohmic_j_at_unit_frequency() {
        // (π/2)·0.05·√20·e^{−1/20}, evaluated to 30 digits with mpmath
        let expected = 0.334_110_523_691_600_41;
        let got = flagship().spectral_density(1.0).unwrap();
        assert!((got - expected).abs() <= 2e-16, "{got}");
    }

    #[test]
    fn subohmic_j_rejects_negative_frequency() {
        assert!(matches!(eval_subohmic_j(&flagship(), -1.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn odd_extension_is_exact() {
        let p = flagship();
        for w in [1e-4, 0.3, 7.0, 123.0] {
            assert_eq!(p.spectral_density_odd(-w), -p.spectral_density_odd(w));
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(SubohmicParams::new(0.0, 0.1, 1.0).is_err());
        assert!(SubohmicParams::new(1.2, 0.1, 1.0).is_err());
        assert!(SubohmicParams::new(0.5, -0.1, 1.0).is_err());
        assert!(SubohmicParams::new(0.5, 0.1, 0.0).is_err());
        assert!(BandgapParams::new([2.0, 2.0], [1.0, 1.0], [4.0, 2.0]).is_err());
        assert!(BandgapParams::new([2.0, 2.0], [0.0, 1.0], [2.0, 4.0]).is_err());
        assert!(Temperature::new(-1.0).is_err());
    }

    #[test]
    fn zero_temperature_negative_frequency_is_zero() {
        let m = SpectrumModel::Subohmic(flagship());
        assert_eq!(noise_power(&m, Temperature::ZERO, -5.0).unwrap(), 0.0);
        assert_eq!(noise_power(&m, Temperature::ZERO, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn detailed_balance() {
        let m = SpectrumModel::Subohmic(flagship());
        let t = Temperature::new(0.7).unwrap();
        for w in [0.01, 0.5, 3.0, 15.0] {
            let ratio = noise_power(&m, t, -w).unwrap() / noise_power(&m, t, w).unwrap();
            let expected = (-w / 0.7f64).exp();
            assert!((ratio / expected - 1.0).abs() < 1e-14, "w = {w}");
        }
    }

    #[test]
    fn finite_temperature_origin_is_singular_for_subohmic() {
        let m = SpectrumModel::Subohmic(flagship());
        let t = Temperature::new(1.0).unwrap();
        assert!(matches!(noise_power(&m, t, 0.0), Err(Error::SingularAtOrigin)));
        let ohmic = SpectrumModel::Subohmic(SubohmicParams::new(1.0, 0.2, 10.0).unwrap());
        let s0 = noise_power(&ohmic, t, 0.0).unwrap();
        let near = noise_power(&ohmic, t, 1e-7).unwrap();
        assert!((s0 - near).abs() < 1e-6 * s0);
    }

    #[test]
    fn low_temperature_limit_matches_zero_point_branch() {
        let m = SpectrumModel::Subohmic(flagship());
        let t = Temperature::new(0.01).unwrap();
        for w in [0.6, 2.0, 40.0] {
            assert!(w / 0.01 > 50.0);
            let finite = noise_power(&m, t, w).unwrap();
            let zero = noise_power(&m, Temperature::ZERO, w).unwrap();
            assert!((finite - zero).abs() <= 1e-12 * zero);
        }
    }

    #[test]
    fn bandgap_at_lower_band_center() {
        let p = BandgapParams::new([2.0, 2.0], [1.0, 1.0], [2.0, 4.0]).unwrap();
        // first band collapses to κ/(ω₁ ξ²) = 1, second is 4/(12⁶ + 4)
        let expected = 1.0 + 4.0 / (12f64.powi(6) + 4.0);
        let got = p.noise_power(2.0);
        assert!((got - expected).abs() < 1e-15, "{got}");
        assert_eq!(p.noise_power(-1.0), 0.0);
    }

    #[test]
    fn tabulated_interpolates_in_log_frequency() {
        let t = TabulatedSpectrum::new(&[(1.0, 1.0), (100.0, 3.0), (-10.0, 2.0), (-1.0, 0.5)]).unwrap();
        assert_eq!(t.noise_power(1.0).unwrap(), 1.0);
        assert!((t.noise_power(10.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((t.noise_power(-(10f64.sqrt())).unwrap() - 1.25).abs() < 1e-14);
        assert!(t.noise_power(100.5).is_err());
        assert!(t.noise_power(0.5).is_err());
        assert!(TabulatedSpectrum::new(&[(1.0, 1.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn one_decade_grid() {
        let d = build_domain(1.0, 10.0, 10, false).unwrap();
        assert_eq!(d.len(), 11);
        assert_eq!(d.grid[0], 1.0);
        assert_eq!(d.grid[10], 10.0);
    }

    #[test]
    fn two_sided_grid_excludes_origin() {
        let d = build_domain(1e-2, 1e2, 100, true).unwrap();
        assert!(!d.grid.contains(&0.0));
        assert_eq!(d.min_abs(), 1e-2);
        assert_eq!(d.len(), 2 * 401);
        assert!(d.grid.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(d.segments, vec![(-1e2, -1e-2), (1e-2, 1e2)]);
    }

    #[test]
    fn flagship_domain_spans_seven_decades_per_side() {
        let d = build_domain(1e-4, 1e3, 100, true).unwrap();
        assert_eq!(d.len(), 2 * 701);
        assert_eq!(d.grid[0], -1e3);
        assert_eq!(*d.grid.last().unwrap(), 1e3);
        assert_eq!(d.min_abs(), 1e-4);
    }

    #[test]
    fn invalid_domains() {
        assert!(build_domain(0.0, 1.0, 10, false).is_err());
        assert!(build_domain(2.0, 1.0, 10, false).is_err());
        assert!(build_domain(1.0, 10.0, 5, false).is_err());
    }
}
