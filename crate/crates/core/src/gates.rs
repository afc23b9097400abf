//! Closed-form holonomic gates, the named gate set and their realization by
//! full propagation of the drive Hamiltonians.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c, cis, CMatrix};
use crate::propagation::{self, HolonomyResult, TimeGrid};
use crate::pulses::{
    register_logical_basis, DrivePerturbation, FrameConvention, LambdaDrive, LambdaParams, MovingFrame, PulseEnvelope,
    RegisterDrive,
};
use crate::state_algebra::{PureState, UnitaryOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    SingleQubit,
    Cnot,
}

/// One cyclic loop: the parameters fixing the Rabi ratio and the envelope
/// that drives it.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSpec {
    pub name: String,
    pub params: LambdaParams,
    pub pulse: PulseEnvelope,
    pub kind: GateKind,
}

impl GateSpec {
    pub fn single(name: impl Into<String>, params: LambdaParams, pulse: PulseEnvelope) -> Self {
        Self { name: name.into(), params, pulse, kind: GateKind::SingleQubit }
    }

    /// NOT gate, `(θ, φ) = (3π/4, 0)`.
    pub fn not(pulse: PulseEnvelope) -> Self {
        Self::single("N", LambdaParams::new(3.0 * PI / 4.0, 0.0).expect("in range"), pulse)
    }

    /// Rotation gate, `(θ, φ) = (3π/4, π/8)`.
    pub fn rotation(pulse: PulseEnvelope) -> Self {
        Self::single("A", LambdaParams::new(3.0 * PI / 4.0, PI / 8.0).expect("in range"), pulse)
    }

    /// Hadamard gate, `(θ, φ) = (5π/8, 0)`.
    pub fn hadamard(pulse: PulseEnvelope) -> Self {
        Self::single("H", LambdaParams::new(5.0 * PI / 8.0, 0.0).expect("in range"), pulse)
    }

    /// Register CNOT; the MW ratio `Ω₁/Ω₀ = −1` corresponds to `(3π/4, 0)`.
    pub fn cnot(pulse: PulseEnvelope) -> Self {
        Self {
            name: "CNOT".into(),
            params: LambdaParams::new(3.0 * PI / 4.0, 0.0).expect("in range"),
            pulse,
            kind: GateKind::Cnot,
        }
    }

    pub fn logical_dim(&self) -> usize {
        match self.kind {
            GateKind::SingleQubit => 2,
            GateKind::Cnot => 4,
        }
    }

    pub fn ideal(&self) -> UnitaryOperator {
        match self.kind {
            GateKind::SingleQubit => ideal_holonomy(&self.params),
            GateKind::Cnot => cnot_ideal(),
        }
    }
}

/// A gate addressable by name: a preset, the composite `T = N·A`, or raw loop
/// parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NamedGate {
    N,
    A,
    H,
    T,
    Cnot,
    Custom(LambdaParams),
}

impl NamedGate {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "N" => Ok(NamedGate::N),
            "A" => Ok(NamedGate::A),
            "H" => Ok(NamedGate::H),
            "T" => Ok(NamedGate::T),
            "CNOT" => Ok(NamedGate::Cnot),
            other => Err(Error::UnknownGate(other.to_string())),
        }
    }

    pub fn label(&self) -> String {
        match self {
            NamedGate::N => "N".into(),
            NamedGate::A => "A".into(),
            NamedGate::H => "H".into(),
            NamedGate::T => "T".into(),
            NamedGate::Cnot => "CNOT".into(),
            NamedGate::Custom(p) => format!("theta={},phi={}", p.theta(), p.phi()),
        }
    }

    /// Loops in the order they are applied.
    pub fn sequence(&self, pulse: PulseEnvelope) -> Vec<GateSpec> {
        match self {
            NamedGate::N => vec![GateSpec::not(pulse)],
            NamedGate::A => vec![GateSpec::rotation(pulse)],
            NamedGate::H => vec![GateSpec::hadamard(pulse)],
            // T = N·A: A acts first
            NamedGate::T => vec![GateSpec::rotation(pulse), GateSpec::not(pulse)],
            NamedGate::Cnot => vec![GateSpec::cnot(pulse)],
            NamedGate::Custom(p) => vec![GateSpec::single("custom", *p, pulse)],
        }
    }

    pub fn ideal(&self) -> UnitaryOperator {
        match self {
            NamedGate::T => t_gate(),
            NamedGate::Cnot => cnot_ideal(),
            other => other.sequence(PulseEnvelope::sine(1e-6, PI).expect("valid")).remove(0).ideal(),
        }
    }

    pub fn logical_dim(&self) -> usize {
        if matches!(self, NamedGate::Cnot) {
            4
        } else {
            2
        }
    }
}

/// `[[−cos2θ, −e^{iφ} sin2θ], [−e^{−iφ} sin2θ, cos2θ]]` on `{|0⟩, |1⟩}`.
pub fn ideal_holonomy(params: &LambdaParams) -> UnitaryOperator {
    let (s2, c2) = (2.0 * params.theta()).sin_cos();
    let m = CMatrix::from_row_slice(
        2,
        2,
        &[c(-c2, 0.0), -cis(params.phi()) * s2, -cis(-params.phi()) * s2, c(c2, 0.0)],
    );
    UnitaryOperator::new(m).expect("closed form is unitary")
}

/// `N·A = diag(e^{−iπ/8}, e^{iπ/8})`.
pub fn t_gate() -> UnitaryOperator {
    let n = ideal_holonomy(&LambdaParams::new(3.0 * PI / 4.0, 0.0).expect("in range"));
    let a = ideal_holonomy(&LambdaParams::new(3.0 * PI / 4.0, PI / 8.0).expect("in range"));
    n.then_after(&a).expect("same dimension")
}

/// `|↑⟩⟨↑| ⊗ X + |↓⟩⟨↓| ⊗ I` on `{|0,↑⟩, |1,↑⟩, |0,↓⟩, |1,↓⟩}`.
pub fn cnot_ideal() -> UnitaryOperator {
    let up = linalg::real_matrix(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let down = linalg::real_matrix(2, 2, &[0.0, 0.0, 0.0, 1.0]);
    let m = linalg::kron(&up, &linalg::pauli_x()) + linalg::kron(&down, &linalg::identity(2));
    UnitaryOperator::new(m).expect("permutation")
}

/// Propagates the gate's drive over `grid` and restricts to the logical
/// subspace, recording leakage and the parallel-transport residual.
pub fn realize(spec: &GateSpec, grid: &TimeGrid) -> Result<HolonomyResult> {
    let result = realize_perturbed(spec, grid, DrivePerturbation::default())?;
    let residual = parallel_transport_residual(spec, grid)?;
    Ok(result.with_parallel_transport_residual(residual))
}

/// Like [`realize`] with a quasi-static perturbation of the drive, without the
/// parallel-transport diagnostic.
pub fn realize_perturbed(spec: &GateSpec, grid: &TimeGrid, perturbation: DrivePerturbation) -> Result<HolonomyResult> {
    match spec.kind {
        GateKind::SingleQubit => {
            let drive = LambdaDrive::new(spec.params, spec.pulse).perturbed(perturbation);
            let u = propagation::propagate(|t| drive.hamiltonian(t), grid)?;
            propagation::logical_block(&u, &[PureState::basis(3, 0), PureState::basis(3, 1)])
        }
        GateKind::Cnot => {
            let drive = RegisterDrive::new(spec.pulse).perturbed(perturbation);
            let u = propagation::propagate(|t| drive.hamiltonian(t), grid)?;
            propagation::logical_block(&u, &register_logical_basis())
        }
    }
}

/// Parallel-transport residual of the gate's drive against its own moving
/// frame, relative to the peak Rabi frequency.
pub fn parallel_transport_residual(spec: &GateSpec, grid: &TimeGrid) -> Result<f64> {
    let scale = spec.pulse.peak();
    match spec.kind {
        GateKind::SingleQubit => {
            let drive = LambdaDrive::new(spec.params, spec.pulse);
            let frame = MovingFrame::lambda(&spec.params, &spec.pulse, FrameConvention::Evolved);
            propagation::check_parallel_transport(|t| drive.hamiltonian(t), |t| frame.at(t), grid, scale)
        }
        GateKind::Cnot => {
            let drive = RegisterDrive::new(spec.pulse);
            let frame = MovingFrame::register(&spec.pulse, FrameConvention::Evolved);
            propagation::check_parallel_transport(|t| drive.hamiltonian(t), |t| frame.at(t), grid, scale)
        }
    }
}

/// Realizes a named gate loop by loop and multiplies the logical blocks.
pub fn realize_named(gate: &NamedGate, pulse: PulseEnvelope, grid: &TimeGrid) -> Result<CMatrix> {
    let mut total: Option<CMatrix> = None;
    for spec in gate.sequence(pulse) {
        let block = realize(&spec, grid)?.logical().clone();
        total = Some(match total {
            None => block,
            Some(prev) => block * prev,
        });
    }
    Ok(total.expect("at least one loop"))
}

/// Fixes the global phase for serialization: the first diagonal entry with
/// modulus above 1e-9 is made real-positive; if the diagonal vanishes, the
/// first such entry in row-major order is used instead.
pub fn canonicalize_phase(m: &CMatrix) -> CMatrix {
    let n = m.nrows().min(m.ncols());
    let pivot = (0..n)
        .map(|k| m[(k, k)])
        .find(|z| z.norm() > 1e-9)
        .or_else(|| (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| (i, j))).map(|ij| m[ij]).find(|z| z.norm() > 1e-9));
    match pivot {
        Some(z) => m * (z.conj() / z.norm()),
        None => m.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hadamard, max_abs_diff, pauli_x, pauli_z, real_matrix, ONE};
    use crate::state_algebra::{concurrence, equal_up_to_global_phase, register_index, Nuclear, TensorProduct};
    use nalgebra::DVector;
    use std::f64::consts::FRAC_PI_8;

    #[test]
    fn closed_form_presets() {
        let n = ideal_holonomy(&LambdaParams::new(3.0 * PI / 4.0, 0.0).unwrap());
        assert!(max_abs_diff(n.matrix(), &pauli_x()) < 1e-15);
        let h = ideal_holonomy(&LambdaParams::new(5.0 * PI / 8.0, 0.0).unwrap());
        assert!(max_abs_diff(h.matrix(), &hadamard()) < 1e-15);
        for phi in [-2.0, 0.0, 1.0, PI] {
            let z = ideal_holonomy(&LambdaParams::new(PI / 2.0, phi).unwrap());
            assert!(max_abs_diff(z.matrix(), &pauli_z()) < 1e-15);
        }
        let a = ideal_holonomy(&LambdaParams::new(3.0 * PI / 4.0, FRAC_PI_8).unwrap());
        let want = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), cis(FRAC_PI_8), cis(-FRAC_PI_8), c(0.0, 0.0)]);
        assert!(max_abs_diff(a.matrix(), &want) < 1e-15);
    }

    #[test]
    fn t_gate_properties() {
        let t = t_gate();
        let want = CMatrix::from_diagonal(&DVector::from_vec(vec![cis(-FRAC_PI_8), cis(FRAC_PI_8)]));
        assert!(max_abs_diff(t.matrix(), &want) < 1e-15);
        let t4 = t.matrix() * t.matrix() * t.matrix() * t.matrix();
        let z_phased = CMatrix::from_diagonal(&DVector::from_vec(vec![cis(-PI / 2.0), cis(PI / 2.0)]));
        assert!(max_abs_diff(&t4, &z_phased) < 1e-14);
        assert!(equal_up_to_global_phase(&t4, &pauli_z(), 1e-14));
        assert!((t.determinant() - ONE).norm() < 1e-15);
        let standard = CMatrix::from_diagonal(&DVector::from_vec(vec![ONE, cis(PI / 4.0)]));
        assert!(equal_up_to_global_phase(t.matrix(), &standard, 1e-14));
    }

    #[test]
    fn cnot_examples() {
        let cnot = cnot_ideal();
        let ket = |e, n| PureState::basis(4, register_index(e, n, 2));
        let out = ket(0, Nuclear::Up).evolve(&cnot).unwrap();
        assert_eq!(out, ket(1, Nuclear::Up));
        let out = ket(0, Nuclear::Down).evolve(&cnot).unwrap();
        assert_eq!(out, ket(0, Nuclear::Down));
        let plus = PureState::normalized(DVector::from_vec(vec![ONE, ONE])).unwrap();
        let input = plus.tensor(&PureState::basis(2, 0));
        let bell = input.evolve(&cnot).unwrap();
        let want = PureState::normalized(DVector::from_vec(vec![c(0.0, 0.0), ONE, ONE, c(0.0, 0.0)])).unwrap();
        assert!((bell.amplitudes() - want.amplitudes()).norm() < 1e-15);
        assert!((concurrence(&bell.to_density()).unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn canonical_phase() {
        let x = pauli_x() * cis(0.7);
        assert!(max_abs_diff(&canonicalize_phase(&x), &pauli_x()) < 1e-15);
        let h = hadamard() * cis(-2.0);
        assert!(max_abs_diff(&canonicalize_phase(&h), &hadamard()) < 1e-15);
        let m = real_matrix(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        assert_eq!(canonicalize_phase(&m)[(0, 0)], ONE);
    }

    #[test]
    fn named_gate_parsing() {
        assert_eq!(NamedGate::parse("T").unwrap(), NamedGate::T);
        assert!(matches!(NamedGate::parse("X"), Err(Error::UnknownGate(_))));
        let seq = NamedGate::T.sequence(PulseEnvelope::sine(1e-6, PI).unwrap());
        assert_eq!(seq.iter().map(|s| s.name.as_str()).collect::<Vec<_>>(), ["A", "N"]);
    }
}
