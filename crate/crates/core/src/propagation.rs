//! Time-ordered propagation, the connection-matrix holonomy and the
//! parallel-transport diagnostics.
//!
//! Both routes use the fourth-order Magnus integrator with two Gauss-Legendre
//! nodes per step: for `dU/dt = G(t) U` each step contributes
//! `exp(Δt/2 (G₁ + G₂) + √3 Δt²/12 [G₂, G₁])`, with later steps multiplied on
//! the left. `G = −iH` for the Schrödinger route and `G = iA` for the
//! connection route; either way every factor is exactly unitary.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector};
use crate::state_algebra::{JsonMatrix, PureState, UnitaryOperator};

/// Fewest steps a grid may have.
pub const MIN_STEPS: usize = 100;
/// Default number of propagation steps for pulses up to 5 µs.
pub const DEFAULT_STEPS: usize = 2_000;
/// Hermiticity tolerance applied to each sampled Hamiltonian.
pub const SAMPLE_HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::EmptyGrid { t_start, t_end });
        }
        if n_steps < MIN_STEPS {
            return Err(Error::StepFloor { floor: MIN_STEPS, got: n_steps });
        }
        Ok(Self { t_start, t_end, n_steps })
    }

    /// `[0, duration]` with `n_steps` steps.
    pub fn over(duration: f64, n_steps: usize) -> Result<Self> {
        Self::new(0.0, duration, n_steps)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn step(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_steps as f64
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        self.t_start + (k as f64 + 0.5) * self.step()
    }

    /// Grid nodes `t_0 .. t_n` inclusive.
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.step();
        (0..=self.n_steps).map(move |k| if k == self.n_steps { self.t_end } else { self.t_start + k as f64 * h })
    }

    pub fn refined(&self, factor: usize) -> Self {
        Self { n_steps: self.n_steps * factor, ..*self }
    }
}

/// Time-ordered exponential of `dU/dt = G(t) U` over `grid`, starting from
/// the identity of dimension `dim`.
fn ordered_exponential<G>(generator: G, grid: &TimeGrid, dim: usize) -> Result<CMatrix>
where
    G: Fn(f64) -> Result<CMatrix>,
{
    let dt = grid.step();
    let offset = dt * 3f64.sqrt() / 6.0;
    let comm_weight = c(3f64.sqrt() * dt * dt / 12.0, 0.0);
    let mut u = linalg::identity(dim);
    for k in 0..grid.n_steps {
        let t = grid.midpoint(k);
        let g1 = generator(t - offset)?;
        let g2 = generator(t + offset)?;
        let comm = &g2 * &g1 - &g1 * &g2;
        let omega = (&g1 + &g2) * c(dt / 2.0, 0.0) + comm * comm_weight;
        u = linalg::expm(&omega) * u;
    }
    Ok(u)
}

/// Propagator `T exp(−i ∫ H dt)`.
///
/// Every sampled Hamiltonian is checked for Hermiticity.
pub fn propagate<F>(hamiltonian: F, grid: &TimeGrid) -> Result<UnitaryOperator>
where
    F: Fn(f64) -> Result<CMatrix>,
{
    let dim = hamiltonian(grid.t_start)?.nrows();
    let generator = |t: f64| {
        let h = hamiltonian(t)?;
        let deviation = linalg::hermitian_deviation(&h);
        let scale = linalg::max_abs(&h).max(1.0);
        if deviation > SAMPLE_HERMITIAN_TOL * scale {
            return Err(Error::NonHermitianSample { t, deviation });
        }
        Ok(h * c(0.0, -1.0))
    };
    let u = ordered_exponential(generator, grid, dim)?;
    UnitaryOperator::with_tolerance(u, 1e-8)
}

/// Largest `|⟨ξ_l|ξ_l'⟩ − δ_ll'|`.
fn orthonormality_deviation(frame: &[CVector]) -> f64 {
    let mut worst: f64 = 0.0;
    for (l, a) in frame.iter().enumerate() {
        for (m, b) in frame.iter().enumerate() {
            let want = if l == m { 1.0 } else { 0.0 };
            worst = worst.max((a.dotc(b) - c(want, 0.0)).norm());
        }
    }
    worst
}

/// `A_ll' = ⟨ξ_l(t)| i∂_t |ξ_l'(t)⟩` by a central difference of step `dt_fd`.
pub fn connection_matrix<F>(frame: F, t: f64, dt_fd: f64) -> Result<CMatrix>
where
    F: Fn(f64) -> Result<Vec<CVector>>,
{
    let here = frame(t)?;
    let deviation = orthonormality_deviation(&here);
    if deviation > 1e-9 {
        return Err(Error::FrameNotOrthonormal { t, deviation });
    }
    let ahead = frame(t + dt_fd)?;
    let behind = frame(t - dt_fd)?;
    let m = here.len();
    let scale = c(0.0, 1.0 / (2.0 * dt_fd));
    Ok(CMatrix::from_fn(m, m, |l, lp| here[l].dotc(&((&ahead[lp] - &behind[lp]) * scale))))
}

/// Propagator restricted to the computational subspace plus diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct HolonomyResult {
    pub u_full: JsonMatrix,
    pub u_logical: JsonMatrix,
    pub leakage: f64,
    /// `None` when the check was not run for this result.
    pub parallel_transport_residual: Option<f64>,
    pub cyclicity_residual: Option<f64>,
    #[serde(skip)]
    full: CMatrix,
    #[serde(skip)]
    logical: CMatrix,
}

impl HolonomyResult {
    fn from_parts(full: CMatrix, logical: CMatrix, leakage: f64) -> Self {
        Self {
            u_full: JsonMatrix::from(&full),
            u_logical: JsonMatrix::from(&logical),
            leakage,
            parallel_transport_residual: None,
            cyclicity_residual: None,
            full,
            logical,
        }
    }

    pub fn full(&self) -> &CMatrix {
        &self.full
    }

    pub fn logical(&self) -> &CMatrix {
        &self.logical
    }

    /// Max-norm deviation of the logical block from unitarity.
    pub fn logical_unitarity_deviation(&self) -> f64 {
        linalg::unitarity_deviation(&self.logical)
    }

    pub fn with_parallel_transport_residual(mut self, r: f64) -> Self {
        self.parallel_transport_residual = Some(r);
        self
    }
}

/// `T exp(i ∫ A dt)` from a cyclic moving frame, with finite-difference step
/// `(t_end − t_start)·10⁻⁶`.
pub fn holonomy_from_connection<F>(frame: F, grid: &TimeGrid) -> Result<HolonomyResult>
where
    F: Fn(f64) -> Result<Vec<CVector>>,
{
    holonomy_from_connection_with_step(frame, grid, (grid.t_end - grid.t_start) * 1e-6)
}

pub fn holonomy_from_connection_with_step<F>(frame: F, grid: &TimeGrid, dt_fd: f64) -> Result<HolonomyResult>
where
    F: Fn(f64) -> Result<Vec<CVector>>,
{
    let start = frame(grid.t_start)?;
    let end = frame(grid.t_end)?;
    let cyclicity = start.iter().zip(&end).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    if !(cyclicity < 1e-6) {
        return Err(Error::NonCyclicFrame { residual: cyclicity });
    }
    let u = ordered_exponential(|t| Ok(connection_matrix(&frame, t, dt_fd)? * c(0.0, 1.0)), grid, start.len())?;
    let mut result = HolonomyResult::from_parts(u.clone(), u, 0.0);
    result.cyclicity_residual = Some(cyclicity);
    Ok(result)
}

/// `max |⟨ξ_l(t)|H(t)|ξ_l'(t)⟩| / scale` over the grid nodes, where `scale`
/// is normally the peak Rabi frequency.
pub fn check_parallel_transport<H, F>(hamiltonian: H, frame: F, grid: &TimeGrid, scale: f64) -> Result<f64>
where
    H: Fn(f64) -> Result<CMatrix>,
    F: Fn(f64) -> Result<Vec<CVector>>,
{
    let mut worst: f64 = 0.0;
    for t in grid.nodes() {
        let h = hamiltonian(t)?;
        let xi = frame(t)?;
        for a in &xi {
            let ha = &h * a;
            for b in &xi {
                worst = worst.max(b.dotc(&ha).norm());
            }
        }
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

/// `⟨l|U|l'⟩` on the given logical basis and the leakage out of it.
pub fn logical_block(u: &UnitaryOperator, logical_basis: &[PureState]) -> Result<HolonomyResult> {
    for s in logical_basis {
        if s.dim() != u.dim() {
            return Err(Error::DimensionMismatch { expected: u.dim(), got: s.dim() });
        }
    }
    let basis: Vec<&CVector> = logical_basis.iter().map(PureState::amplitudes).collect();
    let frame: Vec<CVector> = basis.iter().map(|v| (*v).clone()).collect();
    let deviation = orthonormality_deviation(&frame);
    if deviation > 1e-9 {
        return Err(Error::FrameNotOrthonormal { t: f64::NAN, deviation });
    }
    let m = basis.len();
    let images: Vec<CVector> = basis.iter().map(|v| u.matrix() * *v).collect();
    let block = CMatrix::from_fn(m, m, |l, lp| basis[l].dotc(&images[lp]));
    let retained = (0..m)
        .map(|lp| (0..m).map(|l| block[(l, lp)].norm_sqr()).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let leakage = (1.0 - retained).clamp(0.0, 1.0);
    Ok(HolonomyResult::from_parts(u.matrix().clone(), block, leakage))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cis, identity, max_abs_diff, pauli_x};
    use crate::state_algebra::equal_up_to_global_phase;
    use std::f64::consts::PI;

    #[test]
    fn grid_validation() {
        assert!(matches!(TimeGrid::over(1.0, 99), Err(Error::StepFloor { .. })));
        assert!(matches!(TimeGrid::new(1.0, 1.0, 100), Err(Error::EmptyGrid { .. })));
        let g = TimeGrid::new(0.0, 2.0, 100).unwrap();
        assert_eq!(g.nodes().count(), 101);
        assert_eq!(g.nodes().last(), Some(2.0));
    }

    #[test]
    fn zero_hamiltonian_gives_identity() {
        let g = TimeGrid::over(1e-6, 100).unwrap();
        let u = propagate(|_| Ok(CMatrix::zeros(3, 3)), &g).unwrap();
        assert_eq!(u.matrix(), &identity(3));
    }

    #[test]
    fn constant_sigma_x_of_area_pi_gives_minus_identity() {
        let omega = 2.5e6;
        let g = TimeGrid::over(PI / omega, 1000).unwrap();
        let u = propagate(|_| Ok(pauli_x() * c(omega, 0.0)), &g).unwrap();
        assert!(max_abs_diff(u.matrix(), &(identity(2) * c(-1.0, 0.0))) < 1e-12);
    }

    #[test]
    fn non_hermitian_sample_is_rejected() {
        let g = TimeGrid::over(1.0, 100).unwrap();
        let bad = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(propagate(|_| Ok(bad.clone()), &g), Err(Error::NonHermitianSample { .. })));
    }

    #[test]
    fn connection_of_constant_and_phase_frames() {
        let fixed = |_t: f64| Ok(vec![crate::linalg::basis_vector(2, 0), crate::linalg::basis_vector(2, 1)]);
        let a = connection_matrix(fixed, 0.3, 1e-6).unwrap();
        assert!(crate::linalg::max_abs(&a) < 1e-15);
        let g = TimeGrid::over(1.0, 100).unwrap();
        let h = holonomy_from_connection(fixed, &g).unwrap();
        assert!(max_abs_diff(h.logical(), &identity(2)) < 1e-15);

        // ξ₀ = e^{iωt}|0⟩ → A = diag(−ω, 0)
        let omega = 3.0;
        let phased = move |t: f64| Ok(vec![crate::linalg::basis_vector(2, 0) * cis(omega * t), crate::linalg::basis_vector(2, 1)]);
        let a = connection_matrix(phased, 0.4, 1e-5).unwrap();
        let want = CMatrix::from_diagonal(&CVector::from_vec(vec![c(-omega, 0.0), c(0.0, 0.0)]));
        assert!(max_abs_diff(&a, &want) < 1e-8);
    }

    #[test]
    fn non_cyclic_and_non_orthonormal_frames_are_refused() {
        let g = TimeGrid::over(1.0, 100).unwrap();
        let drifting = |t: f64| Ok(vec![crate::linalg::basis_vector(2, 0) * cis(t), crate::linalg::basis_vector(2, 1)]);
        assert!(matches!(holonomy_from_connection(drifting, &g), Err(Error::NonCyclicFrame { .. })));
        let skew = |_t: f64| Ok(vec![crate::linalg::basis_vector(2, 0), crate::linalg::basis_vector(2, 0)]);
        assert!(matches!(connection_matrix(skew, 0.5, 1e-6), Err(Error::FrameNotOrthonormal { .. })));
    }

    #[test]
    fn identity_block_has_no_leakage() {
        let u = UnitaryOperator::identity(3);
        let basis = vec![PureState::basis(3, 0), PureState::basis(3, 1)];
        let r = logical_block(&u, &basis).unwrap();
        assert_eq!(r.logical(), &identity(2));
        assert_eq!(r.leakage, 0.0);
        assert!(equal_up_to_global_phase(r.logical(), &identity(2), 1e-15));
    }
}
