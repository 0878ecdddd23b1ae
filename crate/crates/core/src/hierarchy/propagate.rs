use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::generator::{Generator, SystemSpec};
use super::mat2::Mat2;
use super::space::HierarchySpace;
use crate::error::{Error, Result};
use crate::polefit::ExponentialDecomposition;

/// Flat storage of all auxiliary density operators, block `i` occupying
/// entries `4i..4i+4` in row-major order. Block 0 is the physical density
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdoVector {
    data: Vec<Complex64>,
    time: f64,
}

impl AdoVector {
    pub fn zeros(space: &HierarchySpace) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); 4 * space.len()],
            time: 0.0,
        }
    }

    pub fn zeros_like(other: &AdoVector) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); other.data.len()],
            time: other.time,
        }
    }

    /// Factorized initial condition: physical block `rho`, all others zero.
    pub fn factorized(space: &HierarchySpace, rho: Mat2) -> Result<Self> {
        if !rho.is_hermitian(1e-12) {
            return Err(Error::invalid("initial density matrix is not Hermitian"));
        }
        if (rho.trace() - 1.0).norm() > 1e-12 {
            return Err(Error::invalid(format!("initial density matrix has trace {}", rho.trace())));
        }
        let mut v = Self::zeros(space);
        v.data[..4].copy_from_slice(&rho.0);
        Ok(v)
    }

    pub fn from_raw(data: Vec<Complex64>, time: f64) -> Result<Self> {
        if data.len() % 4 != 0 || data.is_empty() {
            return Err(Error::invalid("ADO storage length must be a positive multiple of 4"));
        }
        Ok(Self { data, time })
    }

    pub fn blocks(&self) -> usize {
        self.data.len() / 4
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn block(&self, i: usize) -> Mat2 {
        Mat2::from_slice(&self.data[4 * i..4 * i + 4])
    }

    pub fn set_block(&mut self, i: usize, m: Mat2) {
        self.data[4 * i..4 * i + 4].copy_from_slice(&m.0);
    }

    /// Physical reduced density matrix.
    pub fn physical(&self) -> Mat2 {
        self.block(0)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// `|Tr ρ − 1|` of the physical block.
    pub fn trace_residual(&self) -> f64 {
        (self.physical().trace() - 1.0).norm()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        self.physical().hermiticity_residual()
    }

    /// Left-multiplies every block by `op`.
    pub fn left_multiply(&mut self, op: &Mat2) {
        for chunk in self.data.chunks_mut(4) {
            let b = *op * Mat2::from_slice(chunk);
            chunk.copy_from_slice(&b.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Classical fourth-order Runge–Kutta on the full generator.
    Rk4,
    /// Fourth-order Runge–Kutta in the interaction picture of the diagonal
    /// damping, which is integrated exactly (Lawson scheme). Stable for
    /// fast-decaying modes, but its fixed point is offset from the true
    /// stationary state when `γ·dt` is of order one.
    IntegratingFactorRk4,
    /// Fourth-order exponential time differencing (Cox–Matthews) with the
    /// diagonal damping as the linear part. As stable as the Lawson scheme
    /// for fast-decaying modes and it keeps stationary states fixed.
    #[default]
    EtdRk4,
}

/// Step-halving error control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSpec {
    /// Max-norm tolerance on the difference between one full step and two
    /// half steps.
    pub tolerance: f64,
    /// Smallest step before giving up.
    pub dt_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationSpec {
    pub dt: f64,
    pub t_final: f64,
    /// Snapshot every `stride` steps of size `dt`.
    pub stride: usize,
    pub integrator: Integrator,
    pub adaptive: Option<AdaptiveSpec>,
    /// Any state entry above this magnitude aborts the run.
    pub blowup_bound: f64,
}

impl PropagationSpec {
    pub fn new(dt: f64, t_final: f64) -> Result<Self> {
        let s = Self {
            dt,
            t_final,
            stride: 1,
            integrator: Integrator::default(),
            adaptive: None,
            blowup_bound: 1e6,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("time step {} must be positive", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::invalid(format!("final time {} must be non-negative", self.t_final)));
        }
        if self.stride == 0 {
            return Err(Error::invalid("snapshot stride must be >= 1"));
        }
        if !(self.blowup_bound > 0.0) {
            return Err(Error::invalid("blow-up bound must be positive"));
        }
        if let Some(a) = self.adaptive {
            if !(a.tolerance > 0.0 && a.dt_min > 0.0 && a.dt_min <= self.dt) {
                return Err(Error::invalid("adaptive tolerance and dt_min must be positive with dt_min <= dt"));
            }
        }
        Ok(())
    }

    /// Number of `dt` steps; the last lands within `dt/2` of `t_final`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Physical density matrices at the snapshot times plus the final state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Mat2>,
    pub final_state: AdoVector,
    /// Accepted integrator steps.
    pub steps: usize,
    /// Steps rejected by the error control.
    pub rejected: usize,
}

/// Time stepper owning the generator and the stage buffers.
pub struct Propagator {
    gen: Generator,
    integrator: Integrator,
    k: [Vec<Complex64>; 4],
    tmp: Vec<Complex64>,
    cached_h: f64,
    e_half: Vec<Complex64>,
    e_full: Vec<Complex64>,
    etd: Vec<EtdCoefficients>,
    stage: Vec<Complex64>,
}

/// Per-block ETDRK4 weights for the scalar linear part `c = −damping`.
#[derive(Debug, Clone, Copy, Default)]
struct EtdCoefficients {
    /// `(h/2) φ₁(ch/2)`
    half: Complex64,
    /// `h(φ₁ − 3φ₂ + 4φ₃)(ch)`
    w1: Complex64,
    /// `h(φ₂ − 2φ₃)(ch)`
    w2: Complex64,
    /// `h(4φ₃ − φ₂)(ch)`
    w3: Complex64,
}

/// `φ₁, φ₂, φ₃` with `φ_k(z) = Σ_j z^j/(j+k)!`; the series avoids the
/// cancellation of the closed forms near `z = 0`.
fn phi123(z: Complex64) -> [Complex64; 3] {
    let one = Complex64::new(1.0, 0.0);
    if z.norm() < 1.0 {
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for (k, o) in out.iter_mut().enumerate() {
            // term_j = z^j/(j+k+1)!
            let mut term = one / (1..=k + 1).map(|i| i as f64).product::<f64>();
            for j in 0..30 {
                *o += term;
                term *= z / (j + k + 2) as f64;
            }
        }
        out
    } else {
        let e = z.exp();
        let p1 = (e - one) / z;
        let p2 = (e - one - z) / (z * z);
        let p3 = (e - one - z - 0.5 * z * z) / (z * z * z);
        [p1, p2, p3]
    }
}

impl Propagator {
    pub fn new(space: &HierarchySpace, sys: &SystemSpec, dec: &ExponentialDecomposition, integrator: Integrator) -> Result<Self> {
        Ok(Self::from_generator(Generator::new(space, sys, dec)?, integrator))
    }

    pub fn from_generator(gen: Generator, integrator: Integrator) -> Self {
        let n = 4 * gen.len();
        let zero = Complex64::new(0.0, 0.0);
        Self {
            integrator,
            k: std::array::from_fn(|_| vec![zero; n]),
            tmp: vec![zero; n],
            cached_h: f64::NAN,
            e_half: vec![zero; gen.len()],
            e_full: vec![zero; gen.len()],
            etd: Vec::new(),
            stage: Vec::new(),
            gen,
        }
    }

    pub fn generator(&self) -> &Generator {
        &self.gen
    }

    /// Max-norm of the full time derivative at `state`.
    pub fn derivative_norm(&mut self, state: &AdoVector) -> Result<f64> {
        self.gen.apply_into(state.data(), &mut self.tmp)?;
        Ok(self.tmp.iter().map(|x| x.norm()).fold(0.0, f64::max))
    }

    /// Advances `state` by `h` in place.
    pub fn step(&mut self, state: &mut AdoVector, h: f64) -> Result<()> {
        if state.data.len() != self.tmp.len() {
            return Err(Error::DimensionMismatch {
                expected: self.tmp.len() / 4,
                found: state.blocks(),
            });
        }
        match self.integrator {
            Integrator::Rk4 => self.step_rk4(&mut state.data, h)?,
            Integrator::IntegratingFactorRk4 => self.step_if_rk4(&mut state.data, h)?,
            Integrator::EtdRk4 => self.step_etd_rk4(&mut state.data, h)?,
        }
        state.time += h;
        Ok(())
    }

    fn step_rk4(&mut self, y: &mut [Complex64], h: f64) -> Result<()> {
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;
        self.gen.apply_into(y, k1)?;
        axpy_into(tmp, y, 0.5 * h, k1);
        self.gen.apply_into(tmp, k2)?;
        axpy_into(tmp, y, 0.5 * h, k2);
        self.gen.apply_into(tmp, k3)?;
        axpy_into(tmp, y, h, k3);
        self.gen.apply_into(tmp, k4)?;
        let c = h / 6.0;
        for i in 0..y.len() {
            y[i] += c * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
        Ok(())
    }

    fn step_if_rk4(&mut self, y: &mut [Complex64], h: f64) -> Result<()> {
        self.refresh_exponentials(h);
        let eh = &self.e_half;
        let ef = &self.e_full;
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;
        let n = y.len();

        self.gen.apply_coupling_into(y, k1)?;
        for i in 0..n {
            tmp[i] = eh[i / 4] * (y[i] + 0.5 * h * k1[i]);
        }
        self.gen.apply_coupling_into(tmp, k2)?;
        for i in 0..n {
            tmp[i] = eh[i / 4] * y[i] + 0.5 * h * k2[i];
        }
        self.gen.apply_coupling_into(tmp, k3)?;
        for i in 0..n {
            tmp[i] = ef[i / 4] * y[i] + h * eh[i / 4] * k3[i];
        }
        self.gen.apply_coupling_into(tmp, k4)?;
        let c = h / 6.0;
        for i in 0..n {
            let (a, b) = (ef[i / 4], eh[i / 4]);
            y[i] = a * y[i] + c * (a * k1[i] + 2.0 * b * (k2[i] + k3[i]) + k4[i]);
        }
        Ok(())
    }
}

impl Propagator {
    fn refresh_exponentials(&mut self, h: f64) {
        if h == self.cached_h {
            return;
        }
        let etd = self.integrator == Integrator::EtdRk4;
        if etd {
            self.etd.resize(self.gen.len(), EtdCoefficients::default());
        }
        for (i, g) in self.gen.damping().iter().enumerate() {
            let z = -g * h;
            self.e_half[i] = (0.5 * z).exp();
            self.e_full[i] = z.exp();
            if etd {
                let [half, _, _] = phi123(0.5 * z);
                let [p1, p2, p3] = phi123(z);
                self.etd[i] = EtdCoefficients {
                    half: 0.5 * h * half,
                    w1: h * (p1 - 3.0 * p2 + 4.0 * p3),
                    w2: h * (p2 - 2.0 * p3),
                    w3: h * (4.0 * p3 - p2),
                };
            }
        }
        self.cached_h = h;
    }

    fn step_etd_rk4(&mut self, y: &mut [Complex64], h: f64) -> Result<()> {
        self.refresh_exponentials(h);
        let n = y.len();
        if self.stage.len() != n {
            self.stage = vec![Complex64::new(0.0, 0.0); n];
        }
        let (eh, ef, w) = (&self.e_half, &self.e_full, &self.etd);
        let [nu, na, nb, nc] = &mut self.k;
        let tmp = &mut self.tmp;
        let a = &mut self.stage;

        self.gen.apply_coupling_into(y, nu)?;
        for i in 0..n {
            a[i] = eh[i / 4] * y[i] + w[i / 4].half * nu[i];
        }
        self.gen.apply_coupling_into(a, na)?;
        for i in 0..n {
            tmp[i] = eh[i / 4] * y[i] + w[i / 4].half * na[i];
        }
        self.gen.apply_coupling_into(tmp, nb)?;
        for i in 0..n {
            tmp[i] = eh[i / 4] * a[i] + w[i / 4].half * (2.0 * nb[i] - nu[i]);
        }
        self.gen.apply_coupling_into(tmp, nc)?;
        for i in 0..n {
            let c = w[i / 4];
            y[i] = ef[i / 4] * y[i] + c.w1 * nu[i] + 2.0 * c.w2 * (na[i] + nb[i]) + c.w3 * nc[i];
        }
        Ok(())
    }
}

fn axpy_into(out: &mut [Complex64], y: &[Complex64], a: f64, x: &[Complex64]) {
    for ((o, &yi), &xi) in out.iter_mut().zip(y).zip(x) {
        *o = yi + a * xi;
    }
}

fn check_bound(state: &AdoVector, bound: f64) -> Result<()> {
    let ok = state.data.iter().all(|x| x.re.abs() <= bound && x.im.abs() <= bound);
    if ok {
        Ok(())
    } else {
        Err(Error::Divergence {
            time: state.time,
            bound,
        })
    }
}

/// Propagates `initial` to `spec.t_final`, recording the physical block at
/// every snapshot.
pub fn propagate(
    space: &HierarchySpace,
    sys: &SystemSpec,
    dec: &ExponentialDecomposition,
    initial: &AdoVector,
    spec: &PropagationSpec,
) -> Result<Trajectory> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let traj = propagate_with(space, sys, dec, initial, spec, |s| {
        times.push(s.time());
        states.push(s.physical());
    })?;
    Ok(Trajectory { times, states, ..traj })
}

/// Propagates and hands every snapshot (including `t = 0`) to `observer`.
/// The returned trajectory carries the final state and step counts only.
pub fn propagate_with(
    space: &HierarchySpace,
    sys: &SystemSpec,
    dec: &ExponentialDecomposition,
    initial: &AdoVector,
    spec: &PropagationSpec,
    observer: impl FnMut(&AdoVector),
) -> Result<Trajectory> {
    spec.validate()?;
    if initial.blocks() != space.len() {
        return Err(Error::DimensionMismatch {
            expected: space.len(),
            found: initial.blocks(),
        });
    }
    let mut prop = Propagator::new(space, sys, dec, spec.integrator)?;
    run(&mut prop, initial.clone(), spec, observer)
}

/// Drives an existing propagator; the state's own time is the origin.
pub fn run(prop: &mut Propagator, mut state: AdoVector, spec: &PropagationSpec, mut observer: impl FnMut(&AdoVector)) -> Result<Trajectory> {
    spec.validate()?;
    let t0 = state.time;
    let n = spec.steps();
    let mut steps = 0;
    let mut rejected = 0;
    observer(&state);
    for step in 1..=n {
        let target = t0 + step as f64 * spec.dt;
        match spec.adaptive {
            None => {
                prop.step(&mut state, spec.dt)?;
                steps += 1;
            }
            Some(a) => {
                let (s, r) = adaptive_advance(prop, &mut state, target, spec.dt, &a)?;
                steps += s;
                rejected += r;
            }
        }
        state.time = target;
        check_bound(&state, spec.blowup_bound)?;
        if step % spec.stride == 0 || step == n {
            observer(&state);
        }
    }
    Ok(Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        final_state: state,
        steps,
        rejected,
    })
}

/// Advances to `target` with step halving; returns (accepted, rejected).
fn adaptive_advance(
    prop: &mut Propagator,
    state: &mut AdoVector,
    target: f64,
    dt_max: f64,
    spec: &AdaptiveSpec,
) -> Result<(usize, usize)> {
    let mut accepted = 0;
    let mut rejected = 0;
    let mut h = dt_max;
    while target - state.time > 1e-12 * dt_max {
        h = h.min(target - state.time);
        let mut full = state.clone();
        prop.step(&mut full, h)?;
        let mut half = state.clone();
        prop.step(&mut half, 0.5 * h)?;
        prop.step(&mut half, 0.5 * h)?;
        let err = full
            .data
            .iter()
            .zip(&half.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if err.is_finite() && err <= spec.tolerance {
            *state = half;
            accepted += 1;
            if err < spec.tolerance / 64.0 {
                h = (2.0 * h).min(dt_max);
            }
        } else {
            rejected += 1;
            h *= 0.5;
            if h < spec.dt_min {
                return Err(Error::Divergence {
                    time: state.time,
                    bound: spec.tolerance,
                });
            }
        }
    }
    Ok((accepted, rejected))
}
