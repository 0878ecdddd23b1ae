//! Observables, steady states, two-time correlations and the analyses built
//! on them (long-time Shiba tail, localization, static susceptibility).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::hierarchy::{AdoVector, HierarchySpace, Integrator, Mat2, Propagator, SystemSpec};
use crate::polefit::ExponentialDecomposition;
use crate::spectrum::SubohmicParams;

/// `Tr[op·ρ₀]` for a Hermitian `op`.
pub fn expectation(state: &AdoVector, op: &Mat2) -> Result<f64> {
    if !op.is_hermitian(1e-12) {
        return Err(Error::invalid("observable must be Hermitian"));
    }
    Ok((*op * state.physical()).trace().re)
}

/// `⟨σ_z⟩` of a physical density matrix.
pub fn sigma_z(rho: &Mat2) -> f64 {
    (rho.0[0] - rho.0[3]).re
}

/// `⟨σ_x⟩` of a physical density matrix.
pub fn sigma_x(rho: &Mat2) -> f64 {
    2.0 * rho.0[1].re
}

/// Ground state of `H_S = (ε/2)σ_z + Δσ_x` as a density matrix.
pub fn bare_ground_state(sys: &SystemSpec) -> Mat2 {
    let (bz, bx) = (0.5 * sys.epsilon, sys.delta_x);
    let e = (bz * bz + bx * bx).sqrt();
    if e == 0.0 {
        return Mat2::identity() * 0.5;
    }
    (Mat2::identity() - (Mat2::sigma_z() * (bz / e) + Mat2::sigma_x() * (bx / e))) * 0.5
}

/// Time stepping used by the analyses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSpec {
    pub dt: f64,
    pub integrator: Integrator,
    pub blowup_bound: f64,
}

impl StepSpec {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("time step {dt} must be positive")));
        }
        Ok(Self {
            dt,
            integrator: Integrator::default(),
            blowup_bound: 1e6,
        })
    }
}

/// Advances `state` to exactly `target`, with steps no larger than `dt`.
fn advance_to(prop: &mut Propagator, state: &mut AdoVector, target: f64, spec: &StepSpec) -> Result<()> {
    let span = target - state.time();
    if span <= 0.0 {
        return Ok(());
    }
    let n = (span / spec.dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let start = state.time();
    for k in 1..=n {
        prop.step(state, h)?;
        state.set_time(start + k as f64 * h);
        if !state.data().iter().all(|x| x.re.abs() <= spec.blowup_bound && x.im.abs() <= spec.blowup_bound) {
            return Err(Error::Divergence {
                time: state.time(),
                bound: spec.blowup_bound,
            });
        }
    }
    state.set_time(target);
    Ok(())
}

/// Which criterion ended a relaxation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopCriterion {
    /// `‖dρ/dt‖_max` fell below the tolerance.
    Stationary,
    /// The time limit was reached first.
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub state: AdoVector,
    pub criterion: StopCriterion,
    /// `‖dρ/dt‖_max` over all blocks at the returned state.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxSpec {
    pub tol: f64,
    pub t_max: f64,
    /// Interval between stationarity checks.
    pub check_interval: f64,
    pub step: StepSpec,
}

impl RelaxSpec {
    pub fn new(tol: f64, t_max: f64, dt: f64) -> Result<Self> {
        let s = Self {
            tol,
            t_max,
            check_interval: 1.0,
            step: StepSpec::new(dt)?,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.t_max >= 0.0 && self.check_interval > 0.0) {
            return Err(Error::invalid("relaxation needs tol > 0, t_max >= 0 and a positive check interval"));
        }
        Ok(())
    }
}

/// Propagates `initial` until the full hierarchy is stationary or `t_max`
/// is reached; the result records which criterion fired.
pub fn relax_to_steady_state(
    space: &HierarchySpace,
    sys: &SystemSpec,
    dec: &ExponentialDecomposition,
    initial: &AdoVector,
    spec: &RelaxSpec,
) -> Result<SteadyState> {
    spec.validate()?;
    let mut prop = Propagator::new(space, sys, dec, spec.step.integrator)?;
    let mut state = initial.clone();
    state.set_time(0.0);
    loop {
        let residual = prop.derivative_norm(&state)?;
        if residual < spec.tol {
            return Ok(SteadyState {
                state,
                criterion: StopCriterion::Stationary,
                residual,
            });
        }
        if state.time() >= spec.t_max {
            return Ok(SteadyState {
                state,
                criterion: StopCriterion::TimeLimit,
                residual,
            });
        }
        let target = (state.time() + spec.check_interval).min(spec.t_max);
        advance_to(&mut prop, &mut state, target, &spec.step)?;
    }
}

/// Two-time correlation `⟨A(t) A(0)⟩` sampled on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult {
    pub times: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Symmetrized correlation (the real part for Hermitian `A`).
    pub symmetrized: Vec<f64>,
}

/// `⟨A(t)A(0)⟩ = Tr[A ρ₀(t)]` after left-multiplying every block of the
/// stationary hierarchy by `A` at `t = 0`.
pub fn two_time_correlation(
    space: &HierarchySpace,
    sys: &SystemSpec,
    dec: &ExponentialDecomposition,
    steady: &AdoVector,
    op: &Mat2,
    times: &[f64],
    step: &StepSpec,
) -> Result<CorrelationResult> {
    if times.iter().any(|&t| !(t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("correlation times must be non-negative and ascending"));
    }
    let mut prop = Propagator::new(space, sys, dec, step.integrator)?;
    let mut state = steady.clone();
    state.set_time(0.0);
    state.left_multiply(op);
    let mut values = Vec::with_capacity(times.len());
    for &t in times {
        advance_to(&mut prop, &mut state, t, step)?;
        values.push((*op * state.physical()).trace());
    }
    Ok(CorrelationResult {
        times: times.to_vec(),
        symmetrized: values.iter().map(|v| v.re).collect(),
        values,
    })
}

/// Average of `values` over the final `fraction` of the time span.
pub fn final_window_average(times: &[f64], values: &[f64], fraction: f64) -> Result<f64> {
    if times.len() != values.len() || times.is_empty() {
        return Err(Error::invalid("time and value series must be non-empty and of equal length"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid("window fraction must lie in (0, 1]"));
    }
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let start = t1 - fraction * (t1 - t0);
    let picked: Vec<f64> = times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t >= start - 1e-12 * t1.abs().max(1.0))
        .map(|(_, &v)| v)
        .collect();
    Ok(picked.iter().sum::<f64>() / picked.len() as f64)
}

/// Long-time prediction for the symmetrized `σ_z` correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShibaPrediction {
    pub s: f64,
    pub alpha: f64,
    pub omega_c: f64,
    /// `ξ_s = 2αs(1−s)Γ(s−1)cos((1+s)π/2)`.
    pub xi_s: f64,
    /// Static susceptibility `χ̄_z = 2 ∂⟨σ_z⟩/∂ε`.
    pub chi_bar: f64,
}

impl ShibaPrediction {
    pub fn new(p: &SubohmicParams, chi_bar: f64) -> Result<Self> {
        p.validate()?;
        if p.s >= 1.0 {
            return Err(Error::Unsupported("the tail prefactor is singular at s = 1".into()));
        }
        let s = p.s;
        let xi_s = 2.0 * p.alpha * s * (1.0 - s) * gamma(s - 1.0) * ((1.0 + s) * std::f64::consts::FRAC_PI_2).cos();
        Ok(Self {
            s,
            alpha: p.alpha,
            omega_c: p.omega_c,
            xi_s,
            chi_bar,
        })
    }

    /// Asymptotic `S_zz(t) = χ̄² Re C(t)` with the tail
    /// `Re C(t) → −(ξ_s/4) ω_c^{1−s} t^{−(1+s)}` of the correlation function
    /// whose transform is the noise power `2J(ω)`.
    pub fn tail(&self, t: f64) -> f64 {
        -self.chi_bar * self.chi_bar * 0.25 * self.xi_s * self.omega_c.powf(1.0 - self.s) / t.powf(1.0 + self.s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShibaReport {
    pub window: (f64, f64),
    /// Least-squares slope of `log|S_zz|` vs `log t`.
    pub exponent: f64,
    pub exponent_target: f64,
    pub exponent_deviation: f64,
    /// Fitted `c` in `|S_zz| ≈ c·t^{exponent}`.
    pub fitted_amplitude: f64,
    /// Mean of `S_zz(t)/tail(t)` over the window.
    pub amplitude_ratio: f64,
    pub amplitude_deviation: f64,
    /// Mean of `S_zz(t)/(χ̄² Re C(t))` over the window, when `Re C` is given.
    pub correlation_ratio: Option<f64>,
    pub samples: usize,
}

/// Fits the long-time tail of `result` on `window` and compares it with the
/// prediction. `re_c` optionally supplies `Re C(t)` (e.g. from the
/// decomposition) for the direct `χ̄² Re C(t)` comparison.
pub fn shiba_check(
    result: &CorrelationResult,
    pred: &ShibaPrediction,
    window: (f64, f64),
    re_c: Option<&dyn Fn(f64) -> f64>,
) -> Result<ShibaReport> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Window(format!("window [{lo}, {hi}] must satisfy 0 < lo < hi")));
    }
    let last = result.times.last().copied().unwrap_or(0.0);
    if hi > last * (1.0 + 1e-12) {
        return Err(Error::Window(format!("window end {hi} beyond the simulated horizon {last}")));
    }
    let picked: Vec<(f64, f64)> = result
        .times
        .iter()
        .zip(&result.symmetrized)
        .filter(|(&t, _)| t >= lo && t <= hi)
        .map(|(&t, &v)| (t, v))
        .collect();
    if picked.len() < 3 {
        return Err(Error::Window("fewer than three samples in the window".into()));
    }
    let sign = picked[0].1.signum();
    if picked.iter().any(|p| p.1.signum() != sign || p.1 == 0.0) {
        return Err(Error::Window("S_zz changes sign inside the window; transients have not decayed".into()));
    }

    let n = picked.len() as f64;
    let xs: Vec<f64> = picked.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = picked.iter().map(|p| p.1.abs().ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let exponent = sxy / sxx;
    let fitted_amplitude = (my - exponent * mx).exp();

    let target = -(1.0 + pred.s);
    let amplitude_ratio = picked.iter().map(|&(t, v)| v / pred.tail(t)).sum::<f64>() / n;
    let correlation_ratio = re_c.map(|c| {
        picked
            .iter()
            .map(|&(t, v)| v / (pred.chi_bar * pred.chi_bar * c(t)))
            .sum::<f64>()
            / n
    });
    Ok(ShibaReport {
        window,
        exponent,
        exponent_target: target,
        exponent_deviation: ((exponent - target) / target).abs(),
        fitted_amplitude,
        amplitude_ratio,
        amplitude_deviation: (amplitude_ratio - 1.0).abs(),
        correlation_ratio,
        samples: picked.len(),
    })
}

#[derive(Debug, Clone)]
pub struct SusceptibilityResult {
    pub chi_bar: f64,
    pub sigma_z_plus: f64,
    pub sigma_z_minus: f64,
    pub criteria: [StopCriterion; 2],
}

impl SusceptibilityResult {
    pub fn stationary(&self) -> bool {
        self.criteria.iter().all(|c| *c == StopCriterion::Stationary)
    }
}

/// `χ̄_z = 2[⟨σ_z⟩(ε + h/2) − ⟨σ_z⟩(ε − h/2)]/h` from two steady-state runs,
/// each started from the bare ground state at its own detuning.
pub fn static_susceptibility(
    space: &HierarchySpace,
    sys: &SystemSpec,
    dec: &ExponentialDecomposition,
    d_epsilon: f64,
    spec: &RelaxSpec,
) -> Result<SusceptibilityResult> {
    if !(d_epsilon > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let run = |eps: f64| -> Result<(f64, StopCriterion)> {
        let shifted = SystemSpec { epsilon: eps, ..*sys };
        let init = AdoVector::factorized(space, bare_ground_state(&shifted))?;
        let st = relax_to_steady_state(space, &shifted, dec, &init, spec)?;
        Ok((sigma_z(&st.state.physical()), st.criterion))
    };
    let (plus, minus) = rayon::join(|| run(sys.epsilon + 0.5 * d_epsilon), || run(sys.epsilon - 0.5 * d_epsilon));
    let ((plus, c1), (minus, c2)) = (plus?, minus?);
    Ok(SusceptibilityResult {
        chi_bar: 2.0 * (plus - minus) / d_epsilon,
        sigma_z_plus: plus,
        sigma_z_minus: minus,
        criteria: [c1, c2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{build_space, TruncationSpec};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn decoupled() -> ExponentialDecomposition {
        ExponentialDecomposition::new(vec![c(0.0, 0.0)], vec![c(1.0, 0.0)]).unwrap()
    }

    #[test]
    fn expectation_values() {
        let space = build_space(1, &TruncationSpec::depth(1)).unwrap();
        let st = |m: Mat2| AdoVector::factorized(&space, m).unwrap();
        assert_eq!(expectation(&st(Mat2::from_real(1.0, 0.0, 0.0, 0.0)), &Mat2::sigma_z()).unwrap(), 1.0);
        assert_eq!(expectation(&st(Mat2::identity() * 0.5), &Mat2::sigma_x()).unwrap(), 0.0);
        let bloch = (Mat2::identity() + Mat2::sigma_x() * 0.6) * 0.5;
        assert!((expectation(&st(bloch), &Mat2::sigma_x()).unwrap() - 0.6).abs() < 1e-15);
        assert!(expectation(&st(bloch), &Mat2::new(c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0))).is_err());
    }

    #[test]
    fn bare_ground_state_magnetization() {
        let sys = SystemSpec::new(0.8, 1.0).unwrap();
        let g = bare_ground_state(&sys);
        let e = (0.16f64 + 1.0).sqrt();
        assert!((sigma_z(&g) + 0.4 / e).abs() < 1e-15);
        assert!((g.trace().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unitary_dynamics_hits_time_limit() {
        let sys = SystemSpec::new(0.5, 1.0).unwrap();
        let space = build_space(1, &TruncationSpec::depth(1)).unwrap();
        let init = AdoVector::factorized(&space, Mat2::from_real(1.0, 0.0, 0.0, 0.0)).unwrap();
        let spec = RelaxSpec::new(1e-6, 5.0, 0.01).unwrap();
        let st = relax_to_steady_state(&space, &sys, &decoupled(), &init, &spec).unwrap();
        assert_eq!(st.criterion, StopCriterion::TimeLimit);
        assert!(st.residual > 0.1);
        assert_eq!(st.state.time(), 5.0);
    }

    #[test]
    fn identity_correlation_is_constant() {
        let sys = SystemSpec::new(0.0, 1.0).unwrap();
        let space = build_space(1, &TruncationSpec::depth(1)).unwrap();
        let steady = AdoVector::factorized(&space, Mat2::identity() * 0.5).unwrap();
        let times: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        let r = two_time_correlation(&space, &sys, &decoupled(), &steady, &Mat2::identity(), &times, &StepSpec::new(0.01).unwrap()).unwrap();
        assert!(r.values.iter().all(|v| (v - 1.0).norm() < 1e-12));
    }

    #[test]
    fn bare_sigma_z_correlation_is_cosine() {
        let sys = SystemSpec::new(0.0, 1.0).unwrap();
        let space = build_space(1, &TruncationSpec::depth(1)).unwrap();
        let steady = AdoVector::factorized(&space, Mat2::identity() * 0.5).unwrap();
        let times: Vec<f64> = (0..=40).map(|k| 0.25 * k as f64).collect();
        let r = two_time_correlation(&space, &sys, &decoupled(), &steady, &Mat2::sigma_z(), &times, &StepSpec::new(0.0025).unwrap()).unwrap();
        for (t, v) in r.times.iter().zip(&r.symmetrized) {
            assert!((v - (2.0 * t).cos()).abs() < 1e-9, "t = {t}: {v} vs {}", (2.0 * t).cos());
        }
    }

    #[test]
    fn shiba_fit_recovers_exact_power_law() {
        let p = SubohmicParams::new(0.5, 0.05, 20.0).unwrap();
        let pred = ShibaPrediction::new(&p, -1.0).unwrap();
        let times: Vec<f64> = (0..=100).map(|k| 10.0 + k as f64).collect();
        let sym: Vec<f64> = times.iter().map(|&t| pred.tail(t)).collect();
        let r = CorrelationResult {
            values: sym.iter().map(|&v| c(v, 0.0)).collect(),
            symmetrized: sym,
            times,
        };
        let rep = shiba_check(&r, &pred, (20.0, 100.0), None).unwrap();
        assert!((rep.exponent + 1.5).abs() < 1e-12);
        assert!(rep.amplitude_deviation < 1e-12);
        assert!(pred.xi_s > 0.0);
    }

    #[test]
    fn shiba_window_errors() {
        let p = SubohmicParams::new(0.5, 0.05, 20.0).unwrap();
        let pred = ShibaPrediction::new(&p, -1.0).unwrap();
        let times: Vec<f64> = (0..=100).map(|k| k as f64).collect();
        let sym: Vec<f64> = times.iter().map(|&t| (0.3 * t).cos()).collect();
        let r = CorrelationResult {
            values: sym.iter().map(|&v| c(v, 0.0)).collect(),
            symmetrized: sym,
            times,
        };
        assert!(matches!(shiba_check(&r, &pred, (20.0, 100.0), None), Err(Error::Window(_))));
        assert!(matches!(shiba_check(&r, &pred, (20.0, 200.0), None), Err(Error::Window(_))));
        let ohmic = SubohmicParams::new(1.0, 0.05, 20.0).unwrap();
        assert!(ShibaPrediction::new(&ohmic, -1.0).is_err());
    }

    #[test]
    fn bare_susceptibility() {
        let sys = SystemSpec::new(0.0, 1.0).unwrap();
        let space = build_space(1, &TruncationSpec::depth(1)).unwrap();
        let spec = RelaxSpec::new(1e-8, 1.0, 0.01).unwrap();
        let chi = |h: f64| static_susceptibility(&space, &sys, &decoupled(), h, &spec).unwrap();
        let r = chi(1e-3);
        // the bare ground state is stationary without coupling
        assert!(r.stationary());
        assert!((r.chi_bar + 1.0).abs() < 1e-6);
        // central difference error ∝ h²
        let e1 = (chi(0.4).chi_bar + 1.0).abs();
        let e2 = (chi(0.2).chi_bar + 1.0).abs();
        assert!((e1 / e2 - 4.0).abs() < 0.1, "{}", e1 / e2);
    }

    #[test]
    fn final_quarter_average() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64).collect();
        let vals: Vec<f64> = times.iter().map(|&t| if t >= 75.0 { 2.0 } else { 0.0 }).collect();
        assert_eq!(final_window_average(&times, &vals, 0.25).unwrap(), 2.0);
    }
}
