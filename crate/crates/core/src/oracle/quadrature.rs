use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{noise_power, SpectrumModel, Temperature};

/// Gauss–Kronrod 7/15 abscissae on `[−1, 1]` (non-negative half).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights for the odd Kronrod nodes (`XGK[1], XGK[3], XGK[5], XGK[7]`).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Refuse partitions that would not fit comfortably in memory.
const MAX_INITIAL_PANELS: usize = 20_000_000;

/// Settings of the adaptive Fourier quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper magnitude of the integration range; `None` picks the smallest
    /// cutoff whose tail bound is below a hundredth of `abs_tol`.
    pub cutoff: Option<f64>,
    /// Extra bisections allowed beyond the initial phase-bounded panels.
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-13,
            cutoff: None,
            max_subdivisions: 200_000,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::invalid("quadrature tolerances must be positive"));
        }
        if let Some(c) = self.cutoff {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::invalid("quadrature cutoff must be positive and finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: Complex64,
    /// Estimated absolute error, including the truncated tails.
    pub error: f64,
    /// Set when the requested tolerance could not be met.
    pub degraded: bool,
    /// Number of panels in the final partition.
    pub panels: usize,
}

/// `C(t) = (1/2π) ∫ S(ω) e^{−iωt} dω` by globally adaptive Gauss–Kronrod
/// quadrature on panels no wider than `π/(4t)`.
pub fn correlation_by_quadrature(
    model: &SpectrumModel,
    temperature: Temperature,
    t: f64,
    spec: &QuadratureSpec,
) -> Result<QuadratureResult> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    spec.validate()?;
    let s = |w: f64| noise_power(model, temperature, w);
    let (lo, hi) = support(model, temperature);

    let tail_tol = 0.01 * spec.abs_tol;
    let tail = |x: f64| -> Result<f64> {
        // |∫_X^∞ f e^{−iωt}| ≤ min(X, 2/t)·f(X) for monotonically decaying f ~ ω^{−p}, p ≥ 2
        let f = s(x)?.abs().max(if lo < 0.0 { s(-x)?.abs() } else { 0.0 });
        let reach = if t > 0.0 { x.min(2.0 / t) } else { x };
        Ok(f * reach / (2.0 * PI))
    };
    let tabulated = matches!(model, SpectrumModel::Tabulated(_));
    let cutoff = match spec.cutoff {
        _ if tabulated => f64::INFINITY,
        Some(c) => c,
        None => {
            let mut x = scale_of(model);
            while tail(x)? > tail_tol && x < 1e12 {
                x *= 1.25;
            }
            x
        }
    };
    let tail_error = if tabulated { 0.0 } else { tail(cutoff)? * if lo < 0.0 { 2.0 } else { 1.0 } };

    let segments: Vec<(f64, f64)> = match model {
        // sampled spectra are integrated over exactly the tabulated ranges
        SpectrumModel::Tabulated(tab) => tab
            .negative_range()
            .map(|(a, b)| (-b, -a))
            .into_iter()
            .chain(tab.positive_range())
            .collect(),
        _ => {
            let (hi, lo) = (hi.min(cutoff), lo.max(-cutoff));
            if lo < 0.0 && hi > 0.0 {
                vec![(lo, 0.0), (0.0, hi)]
            } else {
                vec![(lo, hi)]
            }
        }
    };

    let max_width = if t > 0.0 { PI / (4.0 * t) } else { f64::INFINITY };
    let f = |w: f64| -> Result<Complex64> { Ok(s(w)? * Complex64::from_polar(1.0, -w * t)) };

    let counts: Vec<usize> = segments
        .iter()
        .map(|&(a, b)| if b > a { ((b - a) / max_width).ceil().max(1.0) as usize } else { 0 })
        .collect();
    let n_total: usize = counts.iter().sum();
    if n_total > MAX_INITIAL_PANELS {
        return Err(Error::invalid(format!(
            "oscillatory range needs {n_total} initial panels at t = {t}; set an explicit cutoff"
        )));
    }
    // panels already far below their share of the tolerance are summed once
    // and never revisited, which keeps the heap small for long ranges
    let frozen_share = 0.1 * 2.0 * PI * spec.abs_tol / n_total.max(1) as f64;

    let mut heap = BinaryHeap::new();
    let mut total = Complex64::new(0.0, 0.0);
    let mut total_err = 0.0;
    let mut frozen_err = 0.0;
    let mut frozen = 0;
    for (&(a, b), &n) in segments.iter().zip(&counts) {
        if n == 0 {
            continue;
        }
        let h = (b - a) / n as f64;
        for i in 0..n {
            let pa = a + h * i as f64;
            let pb = if i + 1 == n { b } else { a + h * (i + 1) as f64 };
            let p = Panel::new(pa, pb, &f)?;
            total += p.value;
            total_err += p.error;
            if p.error <= frozen_share {
                frozen_err += p.error;
                frozen += 1;
            } else {
                heap.push(p);
            }
        }
    }

    let target = |v: Complex64| spec.abs_tol.max(spec.rel_tol * v.norm() / (2.0 * PI)) * 2.0 * PI;
    let mut splits = 0;
    let mut degraded = false;
    while total_err > target(total) {
        if splits >= spec.max_subdivisions {
            degraded = true;
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // interval exhausted at machine resolution
            degraded = true;
            heap.push(worst);
            break;
        }
        let left = Panel::new(worst.a, mid, &f)?;
        let right = Panel::new(mid, worst.b, &f)?;
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        splits += 1;
        if splits % 4096 == 0 {
            // resum to keep rounding drift out of the running error
            total_err = frozen_err + heap.iter().map(|p| p.error).sum::<f64>();
        }
    }
    total_err = frozen_err + heap.iter().map(|p| p.error).sum::<f64>();

    let value = total / (2.0 * PI);
    let error = total_err / (2.0 * PI) + tail_error;
    if error > spec.abs_tol.max(spec.rel_tol * value.norm()) {
        degraded = true;
    }
    Ok(QuadratureResult {
        value,
        error,
        degraded,
        panels: heap.len() + frozen,
    })
}

/// Frequency interval on which the model can be non-zero.
fn support(model: &SpectrumModel, temperature: Temperature) -> (f64, f64) {
    match model {
        SpectrumModel::Subohmic(_) if temperature.is_zero() => (0.0, f64::INFINITY),
        SpectrumModel::Subohmic(_) => (f64::NEG_INFINITY, f64::INFINITY),
        SpectrumModel::Bandgap(_) => (0.0, f64::INFINITY),
        SpectrumModel::Lorentzian(_) => (f64::NEG_INFINITY, f64::INFINITY),
        SpectrumModel::Tabulated(tab) => (
            tab.negative_range().map_or(0.0, |r| -r.1),
            tab.positive_range().map_or(0.0, |r| r.1),
        ),
    }
}

/// Frequency scale from which the automatic cutoff search starts.
fn scale_of(model: &SpectrumModel) -> f64 {
    match model {
        SpectrumModel::Subohmic(p) => p.omega_c,
        SpectrumModel::Bandgap(p) => p.omega[1] + p.xi[1],
        SpectrumModel::Lorentzian(p) => p.center.abs() + p.width,
        SpectrumModel::Tabulated(tab) => {
            let hi = tab.positive_range().map_or(0.0, |r| r.1);
            let lo = tab.negative_range().map_or(0.0, |r| r.1);
            hi.max(lo)
        }
    }
}

struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl Panel {
    fn new(a: f64, b: f64, f: &impl Fn(f64) -> Result<Complex64>) -> Result<Self> {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let fc = f(c)?;
        let mut kronrod = fc * WGK[7];
        let mut gauss = fc * WG[3];
        let mut fv1 = [Complex64::new(0.0, 0.0); 7];
        let mut fv2 = [Complex64::new(0.0, 0.0); 7];
        for j in 0..7 {
            let dx = h * XGK[j];
            let (f1, f2) = (f(c - dx)?, f(c + dx)?);
            fv1[j] = f1;
            fv2[j] = f2;
            kronrod += (f1 + f2) * WGK[j];
            if j % 2 == 1 {
                gauss += (f1 + f2) * WG[j / 2];
            }
        }
        // QUADPACK error heuristic
        let mean = kronrod * 0.5;
        let mut asc = WGK[7] * (fc - mean).norm();
        for j in 0..7 {
            asc += WGK[j] * ((fv1[j] - mean).norm() + (fv2[j] - mean).norm());
        }
        let asc = asc * h.abs();
        let raw = ((kronrod - gauss) * h).norm();
        let mut error = raw;
        if asc != 0.0 && raw != 0.0 {
            error = asc * (200.0 * raw / asc).powf(1.5).min(1.0);
        }
        let abs_sum = h.abs() * (WGK[7] * fc.norm() + (0..7).map(|j| WGK[j] * (fv1[j].norm() + fv2[j].norm())).sum::<f64>());
        let floor = 50.0 * f64::EPSILON * abs_sum;
        if floor > error {
            error = floor;
        }
        Ok(Self {
            a,
            b,
            value: kronrod * h,
            error,
        })
    }
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}
