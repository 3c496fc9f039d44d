//! Complex dense linear-algebra aliases and helpers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Largest singular value.
pub fn spectral_norm(a: &CMat) -> f64 {
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Real trace of a Hermitian product `A A^H`, i.e. the squared Frobenius norm.
pub fn gram_trace(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Eigen-decomposition of a Hermitian matrix. Eigenvalues are real and clipped
/// at zero when `psd` is set, which removes round-off negatives of Gram
/// matrices.
pub struct HermitianEigen {
    pub values: DVector<f64>,
    pub vectors: CMat,
}

impl HermitianEigen {
    pub fn new(a: &CMat, psd: bool) -> Self {
        let n = a.nrows();
        let sym = (a + a.adjoint()) * c(0.5);
        let eig = sym.symmetric_eigen();
        let mut values = DVector::from_fn(n, |i, _| eig.eigenvalues[i]);
        if psd {
            values.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        Self {
            values,
            vectors: eig.eigenvectors,
        }
    }

    /// `V diag(f(λ)) V^H`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = c(f(self.values[j]));
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= s);
        }
        scaled * self.vectors.adjoint()
    }

    /// Coordinates of `x` in the eigenbasis.
    pub fn coords(&self, x: &CVec) -> CVec {
        self.vectors.adjoint() * x
    }
}

/// `x^H A x` for Hermitian `A`, returned as a real number.
pub fn quad_form(a: &CMat, x: &CVec) -> f64 {
    x.dotc(&(a * x)).re
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_map_reconstructs() {
        let a = CMat::from_fn(3, 3, |i, j| Complex64::new((i + j) as f64, i as f64 - j as f64));
        let h = &a * a.adjoint();
        let e = HermitianEigen::new(&h, true);
        let back = e.map(|v| v);
        assert!((back - &h).norm() < 1e-10 * h.norm());
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let d = CMat::from_diagonal(&CVec::from_vec(vec![c(0.5), c(-2.0), J]));
        assert!((spectral_norm(&d) - 2.0).abs() < 1e-12);
    }
}
