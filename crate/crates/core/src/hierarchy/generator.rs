use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mat2::Mat2;
use super::space::HierarchySpace;
use super::AdoVector;
use crate::error::{Error, Result};
use crate::polefit::ExponentialDecomposition;

/// Below this many blocks the generator runs serially.
const PARALLEL_THRESHOLD: usize = 4096;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Two-level system `H_S = (ε/2)σ_z + Δσ_x` coupled to the bath through `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    /// Detuning ε.
    pub epsilon: f64,
    /// Tunnelling amplitude Δ.
    pub delta_x: f64,
    /// Hermitian system coupling operator (σ_z by default).
    pub coupling_op: Mat2,
}

impl SystemSpec {
    pub fn new(epsilon: f64, delta_x: f64) -> Result<Self> {
        Self::with_coupling(epsilon, delta_x, Mat2::sigma_z())
    }

    pub fn with_coupling(epsilon: f64, delta_x: f64, coupling_op: Mat2) -> Result<Self> {
        let s = Self {
            epsilon,
            delta_x,
            coupling_op,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.delta_x.is_finite()) {
            return Err(Error::invalid("system energies must be finite"));
        }
        if !self.coupling_op.is_hermitian(1e-14) {
            return Err(Error::invalid("coupling operator must be Hermitian"));
        }
        Ok(())
    }

    pub fn hilbert_dim(&self) -> usize {
        2
    }

    pub fn hamiltonian(&self) -> Mat2 {
        Mat2::sigma_z() * (0.5 * self.epsilon) + Mat2::sigma_x() * self.delta_x
    }
}

#[derive(Debug, Clone, Copy)]
enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy)]
struct RaiseTerm {
    target: u32,
    coef: Complex64,
}

#[derive(Debug, Clone, Copy)]
struct LowerTerm {
    target: u32,
    coef: Complex64,
    side: Side,
}

/// Hierarchy generator with all link coefficients precomputed.
///
/// For the block `ρ_{m,n}` the time derivative is
/// ```text
/// −i[H_S, ρ] − Σ_k (m_k z_k + n_k z_k*) ρ
///   − i Σ_k √((m_k+1) d_k)  [Q, ρ_{m_k+1}] − i Σ_k √((n_k+1) d_k*) [Q, ρ_{n_k+1}]
///   − i Σ_k √(m_k d_k) Q ρ_{m_k−1}         + i Σ_k √(n_k d_k*) ρ_{n_k−1} Q
/// ```
/// with the principal `√d_k` and `√d_k* ≡ (√d_k)*`, which keeps the exact
/// symmetry `ρ_{m,n}† = ρ_{n,m}`.
#[derive(Debug, Clone)]
pub struct Generator {
    hamiltonian: Mat2,
    coupling: Mat2,
    damping: Vec<Complex64>,
    raise_offsets: Vec<u32>,
    raise: Vec<RaiseTerm>,
    lower_offsets: Vec<u32>,
    lower: Vec<LowerTerm>,
}

impl Generator {
    pub fn new(space: &HierarchySpace, sys: &SystemSpec, dec: &ExponentialDecomposition) -> Result<Self> {
        sys.validate()?;
        let k = space.modes();
        if dec.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: dec.len(),
            });
        }
        let sqrt_d: Vec<Complex64> = dec.amplitudes().iter().map(|d| d.sqrt()).collect();
        let z = dec.exponents();

        let n = space.len();
        let mut damping = Vec::with_capacity(n);
        let mut raise_offsets = Vec::with_capacity(n + 1);
        let mut lower_offsets = Vec::with_capacity(n + 1);
        let mut raise = Vec::new();
        let mut lower = Vec::new();
        raise_offsets.push(0);
        lower_offsets.push(0);
        for i in 0..n {
            let occ = space.occupation(i);
            let mut g = Complex64::new(0.0, 0.0);
            for mode in 0..k {
                g += z[mode] * occ[mode] as f64 + z[mode].conj() * occ[k + mode] as f64;
            }
            damping.push(g);

            for link in space.raising(i) {
                let s = link.symbol as usize;
                let (mode, is_n) = (s % k, s >= k);
                let occ_after = (occ[s] as f64 + 1.0).sqrt();
                let root = if is_n { sqrt_d[mode].conj() } else { sqrt_d[mode] };
                raise.push(RaiseTerm {
                    target: link.target,
                    coef: -I * root * occ_after,
                });
            }
            for link in space.lowering(i) {
                let s = link.symbol as usize;
                let (mode, is_n) = (s % k, s >= k);
                let occ_here = (occ[s] as f64).sqrt();
                let term = if is_n {
                    LowerTerm {
                        target: link.target,
                        coef: I * sqrt_d[mode].conj() * occ_here,
                        side: Side::Right,
                    }
                } else {
                    LowerTerm {
                        target: link.target,
                        coef: -I * sqrt_d[mode] * occ_here,
                        side: Side::Left,
                    }
                };
                lower.push(term);
            }
            raise_offsets.push(raise.len() as u32);
            lower_offsets.push(lower.len() as u32);
        }

        Ok(Self {
            hamiltonian: sys.hamiltonian(),
            coupling: sys.coupling_op,
            damping,
            raise_offsets,
            raise,
            lower_offsets,
            lower,
        })
    }

    /// Number of blocks the generator acts on.
    pub fn len(&self) -> usize {
        self.damping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.damping.is_empty()
    }

    /// Diagonal damping rates `Σ_k (m_k z_k + n_k z_k*)` per block.
    pub fn damping(&self) -> &[Complex64] {
        &self.damping
    }

    /// Writes `dρ/dt` into `out`.
    pub fn apply_into(&self, state: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        self.apply_parts(state, out, true)
    }

    /// Off-diagonal part only (everything except the damping), for
    /// integrating-factor schemes.
    pub(crate) fn apply_coupling_into(&self, state: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        self.apply_parts(state, out, false)
    }

    fn apply_parts(&self, state: &[Complex64], out: &mut [Complex64], with_damping: bool) -> Result<()> {
        let len = 4 * self.len();
        if state.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                found: state.len(),
            });
        }
        if out.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                found: out.len(),
            });
        }
        let body = |(i, dst): (usize, &mut [Complex64])| {
            let block = self.block_derivative(state, i, with_damping);
            dst.copy_from_slice(&block.0);
        };
        if self.len() >= PARALLEL_THRESHOLD {
            out.par_chunks_mut(4).enumerate().for_each(body);
        } else {
            out.chunks_mut(4).enumerate().for_each(body);
        }
        Ok(())
    }

    fn block_derivative(&self, state: &[Complex64], i: usize, with_damping: bool) -> Mat2 {
        let block = |j: usize| Mat2::from_slice(&state[4 * j..4 * j + 4]);
        let rho = block(i);
        let q = self.coupling;

        let mut acc = self.hamiltonian.commutator(&rho).scale(-I);
        if with_damping {
            acc += rho.scale(-self.damping[i]);
        }

        // Σ c_j [Q, ρ_j] = [Q, Σ c_j ρ_j]
        let mut raised = Mat2::zero();
        for t in &self.raise[self.raise_offsets[i] as usize..self.raise_offsets[i + 1] as usize] {
            raised += block(t.target as usize).scale(t.coef);
        }
        acc += q.commutator(&raised);

        let mut left = Mat2::zero();
        let mut right = Mat2::zero();
        for t in &self.lower[self.lower_offsets[i] as usize..self.lower_offsets[i + 1] as usize] {
            let contrib = block(t.target as usize).scale(t.coef);
            match t.side {
                Side::Left => left += contrib,
                Side::Right => right += contrib,
            }
        }
        acc += q * left;
        acc += right * q;
        acc
    }
}

/// `dρ/dt` for every block of `state`.
pub fn apply_generator(
    space: &HierarchySpace,
    sys: &SystemSpec,
    dec: &ExponentialDecomposition,
    state: &AdoVector,
) -> Result<AdoVector> {
    if state.blocks() != space.len() {
        return Err(Error::DimensionMismatch {
            expected: space.len(),
            found: state.blocks(),
        });
    }
    let gen = Generator::new(space, sys, dec)?;
    let mut out = AdoVector::zeros_like(state);
    gen.apply_into(state.data(), out.data_mut())?;
    Ok(out)
}
