use num_complex::Complex64;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::spectrum::{SubohmicParams, Temperature};

/// Zero-temperature subohmic correlation function
/// `C(t) = (α ω_c^{1−s} Γ(1+s)/2) (1/ω_c + it)^{−(1+s)}`, principal branch.
pub fn closed_form_subohmic(p: &SubohmicParams, temperature: Temperature, t: f64) -> Result<Complex64> {
    p.validate()?;
    if !temperature.is_zero() {
        return Err(Error::Unsupported(
            "the closed-form correlation exists only at zero temperature".into(),
        ));
    }
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let prefactor = 0.5 * p.alpha * p.omega_c.powf(1.0 - p.s) * gamma(1.0 + p.s);
    let base = Complex64::new(1.0 / p.omega_c, t);
    Ok(prefactor * (-(1.0 + p.s) * base.ln()).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flagship() -> SubohmicParams {
        SubohmicParams::new(0.5, 0.05, 20.0).unwrap()
    }

    #[test]
    fn zero_time_value() {
        let c = closed_form_subohmic(&flagship(), Temperature::ZERO, 0.0).unwrap();
        // α Γ(3/2) ω_c² / 2 = 0.05 · (√π/2) · 400 / 2
        let expect = 0.05 * std::f64::consts::PI.sqrt() / 2.0 * 400.0 / 2.0;
        assert!((c.re - expect).abs() < 1e-12 * expect);
        assert_eq!(c.im, 0.0);
    }

    #[test]
    fn algebraic_tail() {
        let p = flagship();
        // log-log slope of |C| on [1e2, 1e3] is −(1+s)
        let a = closed_form_subohmic(&p, Temperature::ZERO, 1e2).unwrap().norm();
        let b = closed_form_subohmic(&p, Temperature::ZERO, 1e3).unwrap().norm();
        let slope = (b / a).log10();
        assert!((slope + 1.5).abs() < 1e-3, "{slope}");
    }

    #[test]
    fn tail_of_real_part_matches_prefactor_formula() {
        // Re C(t) → −(ξ_s/4) ω_c^{1−s} / t^{1+s}
        let p = flagship();
        let s = p.s;
        let xi_s = 2.0 * p.alpha * s * (1.0 - s) * gamma(s - 1.0) * ((1.0 + s) * std::f64::consts::FRAC_PI_2).cos();
        let t = 1e5;
        let c = closed_form_subohmic(&p, Temperature::ZERO, t).unwrap();
        let tail = -0.25 * xi_s * p.omega_c.powf(1.0 - s) / t.powf(1.0 + s);
        assert!((c.re / tail - 1.0).abs() < 1e-4);
    }

    #[test]
    fn finite_temperature_is_unsupported() {
        let r = closed_form_subohmic(&flagship(), Temperature::new(0.1).unwrap(), 1.0);
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }
}
