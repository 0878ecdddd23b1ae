use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// A 2×2 complex matrix stored row-major as `[a00, a01, a10, a11]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2(pub [Complex64; 4]);

impl Mat2 {
    pub const fn new(a00: Complex64, a01: Complex64, a10: Complex64, a11: Complex64) -> Self {
        Self([a00, a01, a10, a11])
    }

    pub fn from_real(a00: f64, a01: f64, a10: f64, a11: f64) -> Self {
        Self([a00.into(), a01.into(), a10.into(), a11.into()])
    }

    pub const fn zero() -> Self {
        Self([ZERO; 4])
    }

    pub const fn identity() -> Self {
        Self([ONE, ZERO, ZERO, ONE])
    }

    pub const fn sigma_x() -> Self {
        Self([ZERO, ONE, ONE, ZERO])
    }

    pub fn sigma_y() -> Self {
        Self([ZERO, -I, I, ZERO])
    }

    pub fn sigma_z() -> Self {
        Self([ONE, ZERO, ZERO, -ONE])
    }

    pub fn from_slice(s: &[Complex64]) -> Self {
        Self([s[0], s[1], s[2], s[3]])
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0] + self.0[3]
    }

    pub fn adjoint(&self) -> Self {
        let a = &self.0;
        Self([a[0].conj(), a[2].conj(), a[1].conj(), a[3].conj()])
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self(self.0.map(|x| x * c))
    }

    /// `‖A − A†‖_max`.
    pub fn hermiticity_residual(&self) -> f64 {
        let a = &self.0;
        [
            (a[0] - a[0].conj()).norm(),
            (a[1] - a[2].conj()).norm(),
            (a[3] - a[3].conj()).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_residual() <= tol
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// `[A, B] = AB − BA`.
    pub fn commutator(&self, other: &Mat2) -> Mat2 {
        *self * *other - *other * *self
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        Mat2(std::array::from_fn(|i| self.0[i] + rhs.0[i]))
    }
}

impl AddAssign for Mat2 {
    fn add_assign(&mut self, rhs: Mat2) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        Mat2(std::array::from_fn(|i| self.0[i] - rhs.0[i]))
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        Mat2(self.0.map(|x| -x))
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, b: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &b.0;
        Mat2([
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ])
    }
}

impl Mul<Complex64> for Mat2 {
    type Output = Mat2;
    fn mul(self, c: Complex64) -> Mat2 {
        self.scale(c)
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, c: f64) -> Mat2 {
        Mat2(self.0.map(|x| x * c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pauli_algebra() {
        let (x, y, z) = (Mat2::sigma_x(), Mat2::sigma_y(), Mat2::sigma_z());
        assert_eq!(x * x, Mat2::identity());
        assert_eq!(x * y, z.scale(I));
        assert_eq!(x.commutator(&y), z.scale(2.0 * I));
        assert_eq!(z.trace(), ZERO);
        assert!(y.is_hermitian(0.0));
        assert!(!Mat2::new(ZERO, I, I, ZERO).is_hermitian(1e-12));
    }
}
