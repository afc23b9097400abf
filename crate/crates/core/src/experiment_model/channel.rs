//! Quantum channels as column-stacking Liouville superoperators:
//! `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`.

use crate::linalg::{self, c, CMatrix};
use crate::state_algebra::DensityOperator;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    dim: usize,
    superop: CMatrix,
}

impl Channel {
    pub fn from_superoperator(superop: CMatrix) -> Result<Self> {
        let n = superop.nrows();
        let dim = (n as f64).sqrt().round() as usize;
        if dim * dim != n || superop.ncols() != n {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: n });
        }
        Ok(Self { dim, superop })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            superop: linalg::identity(dim * dim),
        }
    }

    /// `ρ ↦ U ρ U†`.
    pub fn unitary(u: &CMatrix) -> Self {
        Self {
            dim: u.nrows(),
            superop: linalg::kron(&u.map(|z| z.conj()), u),
        }
    }

    /// `ρ ↦ Σ K ρ K†`.
    pub fn from_kraus(kraus: &[CMatrix]) -> Result<Self> {
        let dim = kraus.first().map(|k| k.nrows()).ok_or(Error::DimensionMismatch { expected: 1, got: 0 })?;
        let mut superop = CMatrix::zeros(dim * dim, dim * dim);
        for k in kraus {
            if k.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch { expected: dim, got: k.nrows() });
            }
            superop += linalg::kron(&k.map(|z| z.conj()), k);
        }
        Ok(Self { dim, superop })
    }

    /// `ρ ↦ K ρ K† + tr((I − K†K) ρ) I/d` for a contraction `K`: population
    /// lost from the subspace returns as the maximally mixed state.
    pub fn leaky(k: &CMatrix) -> Self {
        let dim = k.nrows();
        let mut superop = linalg::kron(&k.map(|z| z.conj()), k);
        let lost = linalg::identity(dim) - k.adjoint() * k;
        let mixed = linalg::vectorize(&(linalg::identity(dim) * c(1.0 / dim as f64, 0.0)));
        let functional = linalg::vectorize(&lost.transpose());
        superop += mixed * functional.transpose();
        Self { dim, superop }
    }

    /// `ρ ↦ (1 − p) ρ + p I/d`.
    pub fn depolarizing(dim: usize, p: f64) -> Self {
        let mixed = linalg::vectorize(&(linalg::identity(dim) * c(1.0 / dim as f64, 0.0)));
        let trace = linalg::vectorize(&linalg::identity(dim));
        let superop = linalg::identity(dim * dim) * c(1.0 - p, 0.0) + mixed * trace.transpose() * c(p, 0.0);
        Self { dim, superop }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn superoperator(&self) -> &CMatrix {
        &self.superop
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &Channel) -> Result<Channel> {
        if next.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: next.dim });
        }
        Ok(Channel {
            dim: self.dim,
            superop: &next.superop * &self.superop,
        })
    }

    /// `self` applied `n` times.
    pub fn power(&self, n: usize) -> Channel {
        let mut out = Channel::identity(self.dim);
        for _ in 0..n {
            out.superop = &self.superop * out.superop;
        }
        out
    }

    /// Uniform average of channels of equal dimension.
    pub fn average(channels: &[Channel]) -> Result<Channel> {
        let first = channels.first().ok_or(Error::DimensionMismatch { expected: 1, got: 0 })?;
        let mut sum = CMatrix::zeros(first.superop.nrows(), first.superop.ncols());
        for ch in channels {
            if ch.dim != first.dim {
                return Err(Error::DimensionMismatch { expected: first.dim, got: ch.dim });
            }
            sum += &ch.superop;
        }
        Ok(Channel {
            dim: first.dim,
            superop: sum * c(1.0 / channels.len() as f64, 0.0),
        })
    }

    pub fn apply_matrix(&self, rho: &CMatrix) -> CMatrix {
        linalg::unvectorize(&(&self.superop * linalg::vectorize(rho)), self.dim)
    }

    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: rho.dim() });
        }
        let out = self.apply_matrix(rho.matrix());
        DensityOperator::new((&out + out.adjoint()) * c(0.5, 0.0))
    }

    /// `max |vec(I)ᵀ S − vec(I)ᵀ|`.
    pub fn trace_preservation_deviation(&self) -> f64 {
        let trace = linalg::vectorize(&linalg::identity(self.dim)).transpose();
        let row = &trace * &self.superop;
        (&row - &trace).iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Process (entanglement) fidelity to the unitary `u`: `tr(S_U† S)/d²`.
    pub fn process_fidelity_to(&self, u: &CMatrix) -> Result<f64> {
        if u.nrows() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: u.nrows() });
        }
        let target = Channel::unitary(u);
        let v = linalg::trace(&(target.superop.adjoint() * &self.superop));
        Ok(v.re / (self.dim * self.dim) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state_algebra::PureState;

    #[test]
    fn unitary_channel_matches_conjugation() {
        let u = linalg::hadamard();
        let rho = PureState::basis(2, 0).to_density();
        let out = Channel::unitary(&u).apply(&rho).unwrap();
        let expect = &u * rho.matrix() * u.adjoint();
        assert!(linalg::max_abs_diff(out.matrix(), &expect) < 1e-15);
        assert!((Channel::unitary(&u).process_fidelity_to(&u).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn depolarizing_not_gives_closed_form() {
        let p = 0.1;
        let ch = Channel::unitary(&linalg::pauli_x()).then(&Channel::depolarizing(2, p)).unwrap();
        let out = ch.apply(&PureState::basis(2, 0).to_density()).unwrap();
        assert!((out.matrix()[(0, 0)].re - p / 2.0).abs() < 1e-15);
        assert!((out.matrix()[(1, 1)].re - (1.0 - p / 2.0)).abs() < 1e-15);
        assert!(ch.trace_preservation_deviation() < 1e-15);
    }

    #[test]
    fn leaky_channel_is_trace_preserving() {
        let k = linalg::real_matrix(2, 2, &[0.9, 0.0, 0.0, 1.0]);
        let ch = Channel::leaky(&k);
        assert!(ch.trace_preservation_deviation() < 1e-15);
        let out = ch.apply(&PureState::basis(2, 0).to_density()).unwrap();
        let lost = 1.0 - 0.81;
        assert!((out.matrix()[(0, 0)].re - (0.81 + lost / 2.0)).abs() < 1e-15);
        assert!((out.matrix()[(1, 1)].re - lost / 2.0).abs() < 1e-15);
    }

    #[test]
    fn power_and_average() {
        let x = Channel::unitary(&linalg::pauli_x());
        assert!(linalg::max_abs_diff(x.power(2).superoperator(), Channel::identity(2).superoperator()) < 1e-15);
        let z = Channel::unitary(&linalg::pauli_z());
        let avg = Channel::average(&[Channel::identity(2), z]).unwrap();
        let plus = PureState::normalized(linalg::CVector::from_vec(vec![linalg::ONE, linalg::ONE])).unwrap();
        let out = avg.apply(&plus.to_density()).unwrap();
        assert!(out.matrix()[(0, 1)].norm() < 1e-15);
    }
}
