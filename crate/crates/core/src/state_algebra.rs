//! States, density operators and unitaries for dimensions up to 8, together
//! with the fidelity and entanglement metrics used throughout the crate.
//!
//! Basis conventions:
//! - single spin: `{|0⟩, |1⟩, |a⟩}` (indices 0, 1, 2), the qubit levels are
//!   the `m = -1, +1` Zeeman states and `|a⟩` is `m = 0`;
//! - electron-nuclear register: the nuclear spin (`{|↑⟩, |↓⟩}`, the control)
//!   is the first, slower-varying tensor factor. A register ket `|e, n⟩` is
//!   therefore stored at index `n * d_e + e`, e.g. the logical order is
//!   `{|0,↑⟩, |1,↑⟩, |0,↓⟩, |1,↓⟩}` and the full six-level order is
//!   `{|0,↑⟩, |1,↑⟩, |a,↑⟩, |0,↓⟩, |1,↓⟩, |a,↓⟩}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector, C64};

pub const NORM_TOL: f64 = 1e-10;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-9;
pub const UNITARY_TOL: f64 = 1e-9;

/// Electron level index within a spin manifold.
pub const LEVEL_0: usize = 0;
pub const LEVEL_1: usize = 1;
pub const LEVEL_A: usize = 2;

/// Nuclear (control) spin state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Nuclear {
    Up,
    Down,
}

impl Nuclear {
    pub fn index(self) -> usize {
        match self {
            Nuclear::Up => 0,
            Nuclear::Down => 1,
        }
    }
}

/// Index of `|electron, nuclear⟩` in a register whose electron factor has
/// dimension `electron_dim` (2 for the logical register, 3 with the ancilla).
pub fn register_index(electron: usize, nuclear: Nuclear, electron_dim: usize) -> usize {
    nuclear.index() * electron_dim + electron
}

/// A normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
}

impl PureState {
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        let deviation = (amplitudes.norm() - 1.0).abs();
        if deviation > NORM_TOL {
            return Err(Error::NotNormalized { deviation });
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes the input before validating it.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized { deviation: 1.0 });
        }
        Self::new(amplitudes / c(norm, 0.0))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        Self { amplitudes: linalg::basis_vector(dim, index) }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn projector(&self) -> CMatrix {
        &self.amplitudes * self.amplitudes.adjoint()
    }

    pub fn to_density(&self) -> DensityOperator {
        DensityOperator { matrix: self.projector() }
    }

    pub fn evolve(&self, u: &UnitaryOperator) -> Result<PureState> {
        check_dims(self.dim(), u.dim())?;
        PureState::normalized(u.matrix() * &self.amplitudes)
    }
}

/// A Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JsonMatrix", into = "JsonMatrix")]
pub struct DensityOperator {
    matrix: CMatrix,
}

impl DensityOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), got: matrix.ncols() });
        }
        let deviation = linalg::hermitian_deviation(&matrix);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let tr = linalg::trace(&matrix).re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::TraceNotOne { trace: tr });
        }
        let (values, _) = linalg::hermitian_eigen(&matrix);
        let min_eigenvalue = values[0];
        if min_eigenvalue < -POSITIVITY_TOL {
            return Err(Error::NotPositive { min_eigenvalue });
        }
        Ok(Self { matrix })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { matrix: linalg::identity(dim) * c(1.0 / dim as f64, 0.0) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigen(&self.matrix).0
    }

    pub fn purity(&self) -> f64 {
        linalg::trace(&(&self.matrix * &self.matrix)).re
    }

    /// `Tr(ρ O)` for a Hermitian observable, real part.
    pub fn expectation(&self, observable: &CMatrix) -> f64 {
        linalg::trace(&(&self.matrix * observable)).re
    }

    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn conjugate_by(&self, u: &UnitaryOperator) -> Result<DensityOperator> {
        check_dims(self.dim(), u.dim())?;
        let m = u.matrix() * &self.matrix * u.matrix().adjoint();
        Ok(DensityOperator { matrix: (&m + m.adjoint()) * c(0.5, 0.0) })
    }

    /// Convex combination `Σ w_k ρ_k`; weights must be nonnegative and sum to 1.
    pub fn mixture(parts: &[(f64, &DensityOperator)]) -> Result<DensityOperator> {
        let dim = parts.first().map(|(_, r)| r.dim()).ok_or(Error::DimensionMismatch { expected: 1, got: 0 })?;
        let mut m = CMatrix::zeros(dim, dim);
        for (w, r) in parts {
            check_dims(dim, r.dim())?;
            if *w < 0.0 {
                return Err(Error::OutOfRange { field: "mixture weight", value: *w, expected: ">= 0" });
            }
            m += r.matrix() * c(*w, 0.0);
        }
        DensityOperator::new(m)
    }
}

/// A unitary matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JsonMatrix", into = "JsonMatrix")]
pub struct UnitaryOperator {
    matrix: CMatrix,
}

impl UnitaryOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, UNITARY_TOL)
    }

    pub fn with_tolerance(matrix: CMatrix, tol: f64) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), got: matrix.ncols() });
        }
        let deviation = linalg::unitarity_deviation(&matrix);
        if !(deviation < tol) {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: linalg::identity(dim) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn adjoint(&self) -> UnitaryOperator {
        UnitaryOperator { matrix: self.matrix.adjoint() }
    }

    /// `self · other`: `other` acts first.
    pub fn then_after(&self, other: &UnitaryOperator) -> Result<UnitaryOperator> {
        check_dims(self.dim(), other.dim())?;
        Ok(UnitaryOperator { matrix: &self.matrix * &other.matrix })
    }

    pub fn determinant(&self) -> C64 {
        self.matrix.determinant()
    }
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Kronecker product for states, operators and raw matrices. The first factor
/// carries the slower-varying index.
pub trait TensorProduct<Rhs = Self> {
    type Output;
    fn tensor(&self, rhs: &Rhs) -> Self::Output;
}

impl TensorProduct for CMatrix {
    type Output = CMatrix;
    fn tensor(&self, rhs: &CMatrix) -> CMatrix {
        linalg::kron(self, rhs)
    }
}

impl TensorProduct for PureState {
    type Output = PureState;
    fn tensor(&self, rhs: &PureState) -> PureState {
        PureState { amplitudes: self.amplitudes.kronecker(&rhs.amplitudes) }
    }
}

impl TensorProduct for DensityOperator {
    type Output = DensityOperator;
    fn tensor(&self, rhs: &DensityOperator) -> DensityOperator {
        DensityOperator { matrix: linalg::kron(&self.matrix, &rhs.matrix) }
    }
}

impl TensorProduct for UnitaryOperator {
    type Output = UnitaryOperator;
    fn tensor(&self, rhs: &UnitaryOperator) -> UnitaryOperator {
        UnitaryOperator { matrix: linalg::kron(&self.matrix, &rhs.matrix) }
    }
}

/// Free-function form of [`TensorProduct::tensor`].
pub fn tensor_product<T: TensorProduct>(a: &T, b: &T) -> T::Output {
    a.tensor(b)
}

/// Traces out every subsystem except `keep`.
pub fn partial_trace(rho: &DensityOperator, subsystem_dims: &[usize], keep: usize) -> Result<DensityOperator> {
    let total: usize = subsystem_dims.iter().product();
    check_dims(rho.dim(), total)?;
    if keep >= subsystem_dims.len() {
        return Err(Error::DimensionMismatch { expected: subsystem_dims.len(), got: keep });
    }
    let dk = subsystem_dims[keep];
    // stride of the kept index in the flattened (row-major over subsystems) index
    let stride: usize = subsystem_dims[keep + 1..].iter().product();
    let env = total / dk;

    // Enumerate environment multi-indices as flattened offsets with the kept digit zeroed.
    let offsets: Vec<usize> = (0..env)
        .map(|e| {
            let high = e / stride;
            let low = e % stride;
            high * stride * dk + low
        })
        .collect();

    let m = rho.matrix();
    let reduced = CMatrix::from_fn(dk, dk, |i, j| offsets.iter().map(|&o| m[(o + i * stride, o + j * stride)]).sum());
    DensityOperator::new(reduced)
}

/// `⟨target|ρ|target⟩`.
pub fn state_fidelity(rho: &DensityOperator, target: &PureState) -> Result<f64> {
    check_dims(target.dim(), rho.dim())?;
    let v = target.amplitudes();
    let value = v.dotc(&(rho.matrix() * v));
    debug_assert!(value.im.abs() < 1e-10);
    Ok(value.re.clamp(0.0, 1.0))
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²` between two mixed states.
pub fn uhlmann_fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    check_dims(rho.dim(), sigma.dim())?;
    let s = linalg::psd_sqrt(rho.matrix());
    let inner = &s * sigma.matrix() * &s;
    let (values, _) = linalg::hermitian_eigen(&inner);
    let root_sum: f64 = values.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok((root_sum * root_sum).clamp(0.0, 1.0))
}

/// Wootters concurrence of a two-qubit density operator.
///
/// The `λ_i` (square roots of the eigenvalues of `ρ ρ̃`) are obtained from the
/// Hermitian form `√ρ ρ̃ √ρ`, which shares that spectrum.
pub fn concurrence(rho: &DensityOperator) -> Result<f64> {
    check_dims(4, rho.dim())?;
    let yy = linalg::kron(&linalg::pauli_y(), &linalg::pauli_y());
    let flipped = &yy * rho.matrix().map(|z| z.conj()) * &yy;
    let s = linalg::psd_sqrt(rho.matrix());
    let r = &s * flipped * &s;
    let (values, _) = linalg::hermitian_eigen(&r);
    let mut lambdas: Vec<f64> = values.iter().map(|v| v.max(0.0).sqrt()).collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0))
}

/// True iff `min_γ ‖u − e^{iγ} v‖_max < tol`, with `γ` aligned on the
/// largest-magnitude entry of `v`.
pub fn equal_up_to_global_phase(u: &CMatrix, v: &CMatrix, tol: f64) -> bool {
    global_phase_distance(u, v).is_some_and(|d| d < tol)
}

/// `‖u − e^{iγ} v‖_max` for the aligning phase `γ`; `None` on shape mismatch.
pub fn global_phase_distance(u: &CMatrix, v: &CMatrix) -> Option<f64> {
    if u.shape() != v.shape() {
        return None;
    }
    let (mut best, mut idx) = (0.0, 0);
    for (k, z) in v.iter().enumerate() {
        if z.norm() > best {
            best = z.norm();
            idx = k;
        }
    }
    if best == 0.0 {
        return Some(linalg::max_abs(u));
    }
    let a = u.as_slice()[idx];
    let b = v.as_slice()[idx];
    let phase = if a.norm() == 0.0 { c(1.0, 0.0) } else { (a / b) / (a / b).norm() };
    Some(linalg::max_abs_diff(u, &(v * phase)))
}

/// Row-major `[re, im]` pairs, the matrix wire format of every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JsonMatrix(pub Vec<Vec<[f64; 2]>>);

impl From<&CMatrix> for JsonMatrix {
    fn from(m: &CMatrix) -> Self {
        JsonMatrix((0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect())
    }
}

impl TryFrom<JsonMatrix> for CMatrix {
    type Error = Error;
    fn try_from(j: JsonMatrix) -> Result<CMatrix> {
        let rows = j.0.len();
        let cols = j.0.first().map_or(0, Vec::len);
        if j.0.iter().any(|r| r.len() != cols) {
            return Err(Error::Config("ragged matrix rows".into()));
        }
        Ok(CMatrix::from_fn(rows, cols, |i, k| c(j.0[i][k][0], j.0[i][k][1])))
    }
}

impl From<DensityOperator> for JsonMatrix {
    fn from(r: DensityOperator) -> Self {
        JsonMatrix::from(&r.matrix)
    }
}

impl TryFrom<JsonMatrix> for DensityOperator {
    type Error = Error;
    fn try_from(j: JsonMatrix) -> Result<Self> {
        DensityOperator::new(CMatrix::try_from(j)?)
    }
}

impl From<UnitaryOperator> for JsonMatrix {
    fn from(u: UnitaryOperator) -> Self {
        JsonMatrix::from(&u.matrix)
    }
}

impl TryFrom<JsonMatrix> for UnitaryOperator {
    type Error = Error;
    fn try_from(j: JsonMatrix) -> Result<Self> {
        UnitaryOperator::new(CMatrix::try_from(j)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, max_abs_diff, pauli_x, pauli_z, real_matrix};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn bell() -> PureState {
        // (|1,↑⟩ + |0,↓⟩)/√2
        let mut v = CVector::zeros(4);
        v[register_index(1, Nuclear::Up, 2)] = c(FRAC_1_SQRT_2, 0.0);
        v[register_index(0, Nuclear::Down, 2)] = c(FRAC_1_SQRT_2, 0.0);
        PureState::new(v).unwrap()
    }

    #[test]
    fn tensor_identities_and_basis_order() {
        let i4 = identity(2).tensor(&identity(2));
        assert_eq!(i4, identity(4));
        let up = PureState::basis(2, 0);
        let zero = PureState::basis(2, 0);
        assert_eq!(up.tensor(&zero).amplitudes(), &crate::linalg::basis_vector(4, 0));
    }

    #[test]
    fn cnot_assembled_from_projectors() {
        let up = real_matrix(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let down = real_matrix(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let cnot = up.tensor(&pauli_x()) + down.tensor(&identity(2));
        #[rustfmt::skip]
        let want = real_matrix(4, 4, &[
            0.0, 1.0, 0.0, 0.0,
            1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        ]);
        assert_eq!(cnot, want);
    }

    #[test]
    fn partial_trace_examples() {
        let rho = bell().to_density();
        for keep in 0..2 {
            let r = partial_trace(&rho, &[2, 2], keep).unwrap();
            assert!(max_abs_diff(r.matrix(), &(identity(2) * c(0.5, 0.0))) < 1e-12);
        }
        let prod = PureState::basis(2, 0).to_density().tensor(&PureState::basis(2, 0).to_density());
        let r = partial_trace(&prod, &[2, 2], 0).unwrap();
        assert!(max_abs_diff(r.matrix(), PureState::basis(2, 0).to_density().matrix()) < 1e-15);
        assert!(matches!(partial_trace(&prod, &[2, 3], 0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn fidelity_examples() {
        let psi = bell();
        assert!((state_fidelity(&psi.to_density(), &psi).unwrap() - 1.0).abs() < 1e-12);
        let mixed = DensityOperator::maximally_mixed(2);
        let q = PureState::normalized(CVector::from_vec(vec![c(0.3, 0.1), c(-0.2, 0.9)])).unwrap();
        assert!((state_fidelity(&mixed, &q).unwrap() - 0.5).abs() < 1e-12);
        let noisy = DensityOperator::new(psi.projector() * c(0.9, 0.0) + identity(4) * c(0.1 / 4.0, 0.0)).unwrap();
        assert!((state_fidelity(&noisy, &psi).unwrap() - 0.925).abs() < 1e-12);
        assert!(state_fidelity(&mixed, &psi).is_err());
    }

    #[test]
    fn concurrence_examples() {
        assert!((concurrence(&bell().to_density()).unwrap() - 1.0).abs() < 1e-7);
        let prod = PureState::normalized(CVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]))
            .unwrap()
            .tensor(&PureState::normalized(CVector::from_vec(vec![c(1.0, 0.0), c(1.0, 1.0)])).unwrap());
        assert!(concurrence(&prod.to_density()).unwrap() < 1e-7);
        let p = 0.9;
        let werner = DensityOperator::new(bell().projector() * c(p, 0.0) + identity(4) * c((1.0 - p) / 4.0, 0.0)).unwrap();
        let closed_form = f64::max(0.0, (3.0 * p - 1.0) / 2.0);
        assert!((concurrence(&werner).unwrap() - closed_form).abs() < 1e-9);
        assert!(concurrence(&DensityOperator::maximally_mixed(2)).is_err());
    }

    #[test]
    fn global_phase_examples() {
        let u = pauli_x();
        assert!(equal_up_to_global_phase(&u, &(&u * c(-1.0, 0.0)), 1e-12));
        assert!(!equal_up_to_global_phase(&pauli_x(), &pauli_z(), 1e-3));
        let h = crate::linalg::hadamard();
        assert!(equal_up_to_global_phase(&(&h * crate::linalg::cis(0.3)), &h, 1e-9));
    }

    #[test]
    fn constructors_reject_invalid_inputs() {
        assert!(matches!(
            PureState::new(CVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)])),
            Err(Error::NotNormalized { .. })
        ));
        assert!(matches!(
            DensityOperator::new(CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.0), c(0.2, 0.0), c(0.5, 0.0)])),
            Err(Error::NotHermitian { .. })
        ));
        assert!(matches!(DensityOperator::new(identity(2)), Err(Error::TraceNotOne { .. })));
        assert!(matches!(
            DensityOperator::new(real_matrix(2, 2, &[1.5, 0.0, 0.0, -0.5])),
            Err(Error::NotPositive { .. })
        ));
        assert!(matches!(UnitaryOperator::new(identity(2) * c(2.0, 0.0)), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn json_matrix_round_trip() {
        let rho = bell().to_density();
        let text = serde_json::to_string(&rho).unwrap();
        assert!(text.starts_with("[[[0.0,0.0]"));
        let back: DensityOperator = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rho);
    }
}
