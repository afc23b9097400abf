//! Small dense complex linear algebra helpers shared by every module.
//!
//! Everything here works on `nalgebra::DMatrix<Complex64>`; dimensions in this
//! crate never exceed 16 (the Liouville space of two qubits), so no attempt is
//! made at blocking or sparsity.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `e^{i phase}`.
#[inline]
pub fn cis(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

/// Builds a matrix from real row-major entries.
pub fn real_matrix(rows: usize, cols: usize, entries: &[f64]) -> CMatrix {
    assert_eq!(entries.len(), rows * cols);
    CMatrix::from_fn(rows, cols, |i, j| c(entries[i * cols + j], 0.0))
}

pub fn basis_vector(dim: usize, index: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[index] = ONE;
    v
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    max_abs(&(a - b))
}

pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

pub fn unitarity_deviation(m: &CMatrix) -> f64 {
    max_abs_diff(&(m.adjoint() * m), &identity(m.ncols()))
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// Kronecker product; the first factor carries the slower-varying index.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Eigen-decomposition of the Hermitian part of `m`. Eigenvalues ascending.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Rebuilds `V diag(f(λ)) V†` from a Hermitian eigendecomposition.
pub fn hermitian_function(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (values, vectors) = hermitian_eigen(m);
    let d = CMatrix::from_diagonal(&CVector::from_iterator(
        values.len(),
        values.iter().map(|&v| c(f(v), 0.0)),
    ));
    &vectors * d * vectors.adjoint()
}

/// Principal square root of a positive semidefinite matrix; tiny negative
/// eigenvalues are treated as zero.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    hermitian_function(m, |v| v.max(0.0).sqrt())
}

/// Projects a Hermitian matrix onto the unit-trace PSD cone by clamping
/// negative eigenvalues to zero and renormalizing.
pub fn clamp_to_density(m: &CMatrix) -> CMatrix {
    let clamped = hermitian_function(m, |v| v.max(0.0));
    let tr = trace(&clamped).re;
    if tr <= f64::EPSILON {
        identity(m.nrows()) * c(1.0 / m.nrows() as f64, 0.0)
    } else {
        clamped * c(1.0 / tr, 0.0)
    }
}

fn norm_one(m: &CMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
///
/// The scaled matrix has 1-norm at most 1/2, where 20 Taylor terms are far
/// below double precision.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    let norm = norm_one(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * c(0.5f64.powi(squarings), 0.0);

    let mut result = identity(n);
    let mut term = identity(n);
    for k in 1..=24 {
        term = &term * &scaled * c(1.0 / k as f64, 0.0);
        result += &term;
        if max_abs(&term) < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Solves the dense linear system `m x = rhs` by SVD, reporting the
/// 2-norm condition number of `m`.
pub fn solve_with_condition(m: &CMatrix, rhs: &CVector) -> Result<(CVector, f64)> {
    let svd = m.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let min_sv = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if min_sv > 0.0 { max_sv / min_sv } else { f64::INFINITY };
    if !condition.is_finite() || condition > 1e12 {
        return Err(Error::SingularSystem { condition });
    }
    let x = svd.solve(rhs, 0.0).map_err(|_| Error::SingularSystem { condition })?;
    Ok((x, condition))
}

/// Column-stacking vectorization: `vec(ρ)[i + d j] = ρ[i, j]`.
pub fn vectorize(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &CVector, dim: usize) -> CMatrix {
    CMatrix::from_column_slice(dim, dim, v.as_slice())
}

pub fn pauli_x() -> CMatrix {
    real_matrix(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMatrix {
    real_matrix(2, 2, &[1.0, 0.0, 0.0, -1.0])
}

pub fn hadamard() -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    real_matrix(2, 2, &[s, s, s, -s])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn expm_of_pauli_x_rotation() {
        // exp(-i π σx) = -I
        let u = expm(&(pauli_x() * c(0.0, -PI)));
        assert!(max_abs_diff(&u, &(identity(2) * c(-1.0, 0.0))) < 1e-13);
        // exp(-i θ/2 σx) closed form
        let theta = 0.731;
        let u = expm(&(pauli_x() * c(0.0, -theta / 2.0)));
        let want = identity(2) * c((theta / 2.0).cos(), 0.0) + pauli_x() * c(0.0, -(theta / 2.0).sin());
        assert!(max_abs_diff(&u, &want) < 1e-14);
    }

    #[test]
    fn expm_matches_eigendecomposition_for_hermitian_generator() {
        let h = CMatrix::from_row_slice(
            3,
            3,
            &[c(0.3, 0.0), c(1.2, -0.4), c(0.0, 0.7), c(1.2, 0.4), c(-0.8, 0.0), c(2.1, 0.0), c(0.0, -0.7), c(2.1, 0.0), c(0.5, 0.0)],
        );
        let t = 3.7;
        let direct = expm(&(&h * c(0.0, -t)));
        let (vals, vecs) = hermitian_eigen(&h);
        let d = CMatrix::from_diagonal(&CVector::from_iterator(3, vals.iter().map(|&v| cis(-v * t))));
        let spectral = &vecs * d * vecs.adjoint();
        assert!(max_abs_diff(&direct, &spectral) < 1e-12);
    }

    #[test]
    fn vectorization_identity() {
        // vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)
        let a = CMatrix::from_fn(2, 2, |i, j| c(i as f64 + 0.5, j as f64 - 0.3));
        let b = CMatrix::from_fn(2, 2, |i, j| c(0.2 * j as f64, 1.0 - i as f64));
        let rho = CMatrix::from_fn(2, 2, |i, j| c((i + 2 * j) as f64, 0.1));
        let lhs = vectorize(&(&a * &rho * &b));
        let rhs = kron(&b.transpose(), &a) * vectorize(&rho);
        assert!((lhs - rhs).norm() < 1e-12);
    }
}
