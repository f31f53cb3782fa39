//! Small dense complex matrices.
//!
//! Everything in the two-qubit model lives in dimension 2 or 4, so matrices
//! are fixed-size, stack allocated and `Copy`. Entries are stored row-major.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Default absolute tolerance for elementwise comparisons.
pub const MATRIX_TOL: f64 = 1e-12;

/// Square complex matrix of dimension `N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexMatrix<const N: usize> {
    entries: [[C64; N]; N],
}

pub type Mat2 = ComplexMatrix<2>;
pub type Mat4 = ComplexMatrix<4>;

impl<const N: usize> ComplexMatrix<N> {
    pub const fn from_rows(entries: [[C64; N]; N]) -> Self {
        Self { entries }
    }

    pub fn from_real(rows: [[f64; N]; N]) -> Self {
        let mut m = Self::zeros();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m.entries[i][j] = C64::new(v, 0.0);
            }
        }
        m
    }

    pub fn zeros() -> Self {
        Self {
            entries: [[ZERO; N]; N],
        }
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.entries[i][i] = ONE;
        }
        m
    }

    pub fn diagonal(d: [C64; N]) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.entries[i][i] = d[i];
        }
        m
    }

    pub const fn rows(&self) -> usize {
        N
    }

    pub const fn cols(&self) -> usize {
        N
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.entries[i][j] = v;
    }

    pub fn as_rows(&self) -> &[[C64; N]; N] {
        &self.entries
    }

    /// Entries in row-major order.
    pub fn entries(&self) -> Vec<C64> {
        self.entries.iter().flatten().copied().collect()
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.entries[j][i] = self.entries[i][j].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..N).map(|i| self.entries[i][i]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = *self;
        m.entries.iter_mut().flatten().for_each(|e| *e *= s);
        m
    }

    /// `self * other * self†`.
    pub fn conjugate(&self, other: &Self) -> Self {
        *self * *other * self.dagger()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .flatten()
            .zip(other.entries.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.approx_eq(&self.dagger(), tol)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        (self.dagger() * *self).approx_eq(&Self::identity(), tol)
    }

    /// Real parts of the diagonal.
    pub fn real_diagonal(&self) -> [f64; N] {
        let mut d = [0.0; N];
        for (i, di) in d.iter_mut().enumerate() {
            *di = self.entries[i][i].re;
        }
        d
    }

    pub(crate) fn to_nalgebra(self) -> nalgebra::DMatrix<C64> {
        nalgebra::DMatrix::from_fn(N, N, |i, j| self.entries[i][j])
    }

    /// Eigenvalues of a Hermitian matrix, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let herm = (*self + self.dagger()).scale(C64::new(0.5, 0.0));
        let mut ev: Vec<f64> = herm
            .to_nalgebra()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Singular values, descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self.to_nalgebra().singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }
}

impl Mat2 {
    /// Kronecker product `self ⊗ other` in the interleaved order
    /// `|a b⟩ ↦ 2a + b`.
    pub fn kron(&self, other: &Mat2) -> Mat4 {
        let mut m = Mat4::zeros();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    for d in 0..2 {
                        m.entries[2 * a + c][2 * b + d] = self.entries[a][b] * other.entries[c][d];
                    }
                }
            }
        }
        m
    }
}

impl<const N: usize> Mul for ComplexMatrix<N> {
    type Output = Self;

    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for k in 0..N {
                let a = self.entries[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..N {
                    m.entries[i][j] += a * rhs.entries[k][j];
                }
            }
        }
        m
    }
}

impl<const N: usize> Add for ComplexMatrix<N> {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        let mut m = self;
        for i in 0..N {
            for j in 0..N {
                m.entries[i][j] += rhs.entries[i][j];
            }
        }
        m
    }
}

impl<const N: usize> Sub for ComplexMatrix<N> {
    type Output = Self;

    fn sub(self, rhs: Self) -> Self {
        let mut m = self;
        for i in 0..N {
            for j in 0..N {
                m.entries[i][j] -= rhs.entries[i][j];
            }
        }
        m
    }
}
