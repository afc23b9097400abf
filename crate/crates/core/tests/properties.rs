mod common;

use std::f64::consts::PI;

use common::{haar_unitary, random_density, random_pure, rng};
use holonomic::experiment_model::{
    decay_curve, echo_member, fit_per_gate_error, shot_records, simulate_counts, Channel, FluorescenceCalibration,
    Readout,
};
use holonomic::gates::{realize, GateSpec};
use holonomic::linalg::{self, c, kron, CMatrix};
use holonomic::propagation::TimeGrid;
use holonomic::pulses::{PulseEnvelope, PulseShape};
use holonomic::state_algebra::{concurrence, equal_up_to_global_phase, uhlmann_fidelity, DensityOperator, PureState};
use holonomic::tomography::{
    linear_inversion, mle_project, process_fidelity, process_tomography, state_tomography, ProcessMatrix,
    TraceConstraint,
};
use proptest::prelude::*;

fn min_eigenvalue(m: &CMatrix) -> f64 {
    linalg::hermitian_eigen(m).0.into_iter().fold(f64::INFINITY, f64::min)
}

fn conj(u: &CMatrix, rho: &DensityOperator) -> DensityOperator {
    let m = u * rho.matrix() * u.adjoint();
    DensityOperator::new((&m + m.adjoint()) * c(0.5, 0.0)).unwrap()
}

/// Rotation `exp(-i a n·σ/2)` with axis from the two spherical angles.
fn su2(a: f64, pol: f64, az: f64) -> CMatrix {
    let n = [pol.sin() * az.cos(), pol.sin() * az.sin(), pol.cos()];
    let g = linalg::pauli_x() * c(n[0], 0.0) + linalg::pauli_y() * c(n[1], 0.0) + linalg::pauli_z() * c(n[2], 0.0);
    linalg::expm(&(g * c(0.0, -a / 2.0)))
}

#[test]
fn channels_stay_physical() {
    let mut r = rng(11);
    let mut channels = vec![Channel::depolarizing(2, 0.3), Channel::depolarizing(4, 1.0)];
    for d in [2usize, 4] {
        let us: Vec<Channel> = (0..5).map(|_| Channel::unitary(&haar_unitary(d, &mut r))).collect();
        channels.push(Channel::average(&us).unwrap());
        // Kraus set from the blocks of a 2d x 2d Haar unitary's first d columns
        let v = haar_unitary(2 * d, &mut r);
        let kraus = [v.view((0, 0), (d, d)).into_owned(), v.view((d, 0), (d, d)).into_owned()];
        channels.push(Channel::from_kraus(&kraus).unwrap());
        channels.push(Channel::leaky(&(haar_unitary(d, &mut r) * c(0.8, 0.0))));
    }
    for ch in &channels {
        assert!(ch.trace_preservation_deviation() < 1e-12);
        for _ in 0..100 {
            let rho = random_density(ch.dim(), &mut r);
            let out = ch.apply_matrix(rho.matrix());
            assert!((linalg::trace(&out).re - 1.0).abs() < 1e-12);
            assert!(linalg::hermitian_deviation(&out) < 1e-12);
            assert!(min_eigenvalue(&out) > -1e-12);
        }
    }
}

#[test]
fn random_unitary_process_round_trip() {
    let mut r = rng(12);
    for _ in 0..200 {
        let u = haar_unitary(2, &mut r);
        let ch = Channel::unitary(&u);
        let est = process_tomography(|rho| ch.apply(rho), TraceConstraint::Enforced).unwrap();
        let f = process_fidelity(&est.chi, &ProcessMatrix::from_unitary(&u).unwrap());
        assert!(f > 1.0 - 1e-6, "F_P = {f}");
    }
}

#[test]
fn real_chi_for_not_and_hadamard() {
    for u in [linalg::pauli_x(), linalg::hadamard()] {
        let chi = ProcessMatrix::from_unitary(&u).unwrap();
        assert!(chi.max_imaginary() < 1e-12);
        let ch = Channel::unitary(&u);
        let est = process_tomography(|rho| ch.apply(rho), TraceConstraint::Enforced).unwrap();
        assert!(est.chi.max_imaginary() < 1e-8);
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

#[test]
fn more_shots_better_state_estimates() {
    let mut r = rng(13);
    let (mut low, mut high) = (Vec::new(), Vec::new());
    for k in 0..50u64 {
        let psi = random_pure(2, &mut r);
        let rho = psi.to_density();
        for (shots, acc) in [(1_000u64, &mut low), (100_000, &mut high)] {
            let est = state_tomography(&shot_records(&rho, 1, shots, 100 + k).unwrap(), 1).unwrap();
            acc.push(1.0 - uhlmann_fidelity(&est, &rho).unwrap());
        }
    }
    let (l, h) = (median(low), median(high));
    assert!(h < l, "median infidelity {h} at 1e5 shots vs {l} at 1e3");
}

#[test]
fn mle_projection_is_physical() {
    let mut r = rng(14);
    for k in 0..100u64 {
        let n_qubits = 1 + (k % 2) as usize;
        let d = 1 << n_qubits;
        // near-pure states with few shots push the linear estimate outside the cone
        let psi = random_pure(d, &mut r);
        let records = shot_records(&psi.to_density(), n_qubits, 50, k).unwrap();
        let raw = linear_inversion(&records, n_qubits).unwrap();
        let out = mle_project(&raw, &records).unwrap();
        let m = out.state.matrix();
        assert!((linalg::trace(m).re - 1.0).abs() < 1e-9);
        assert!(linalg::hermitian_deviation(m) < 1e-12);
        assert!(min_eigenvalue(m) > -1e-12);
    }
}

#[test]
fn decay_fit_unbiased_without_error() {
    let cal = FluorescenceCalibration::default();
    let x = Channel::unitary(&linalg::pauli_x());
    let zero = PureState::basis(2, 0);
    let eps: Vec<f64> = (0..200u64)
        .map(|k| {
            let curve = decay_curve(
                &x,
                &linalg::pauli_x(),
                100,
                &zero,
                &cal,
                Readout::Counts { n_cycles: 1_000_000 },
                100,
                k,
            )
            .unwrap();
            fit_per_gate_error(&curve).unwrap().epsilon
        })
        .collect();
    let n = eps.len() as f64;
    let mean = eps.iter().sum::<f64>() / n;
    let sd = (eps.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 2.0 * sd / n.sqrt(), "mean {mean:e}, sd {sd:e}");
}

#[test]
fn echo_cancels_static_detuning() {
    let id = Channel::identity(2);
    let t = 20e-6;
    for delta in [-4.9e7f64, -1e6, -3e4, 0.0, 1e3, 7.7e5, 4.9e7] {
        assert!((delta * t).abs() <= 1e3);
        let f = echo_member(&id, t, delta).unwrap().process_fidelity_to(&linalg::identity(2)).unwrap();
        assert!((f - 1.0).abs() < 1e-9, "delta {delta}: {f}");
    }
}

#[test]
fn not_gate_independent_of_shape_and_duration() {
    let target = linalg::pauli_x();
    for tau in [0.2e-6, 1e-6, 5e-6] {
        for shape in PulseShape::ALL {
            let pulse = PulseEnvelope::with_override(shape, tau, PI).unwrap();
            let grid = TimeGrid::over(tau, 2000).unwrap();
            let u = realize(&GateSpec::not(pulse), &grid).unwrap();
            assert!(
                equal_up_to_global_phase(u.logical(), &target, 1e-6),
                "{} at {tau:e} s",
                shape.name()
            );
        }
    }
}

#[test]
fn concurrence_local_unitary_invariance() {
    let mut r = rng(15);
    for _ in 0..100 {
        let rho = random_density(4, &mut r);
        let local = kron(&haar_unitary(2, &mut r), &haar_unitary(2, &mut r));
        let a = concurrence(&rho).unwrap();
        let b = concurrence(&conj(&local, &rho)).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
    // pure product and Bell states as fixed points
    let mut r = rng(16);
    let bell = PureState::normalized(linalg::CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]))
        .unwrap()
        .to_density();
    let (a, b) = (random_pure(2, &mut r), random_pure(2, &mut r));
    let product = PureState::normalized(a.amplitudes().kronecker(b.amplitudes()))
        .unwrap()
        .to_density();
    assert!((concurrence(&bell).unwrap() - 1.0).abs() < 1e-9);
    assert!(concurrence(&product).unwrap() < 1e-6);
}

#[test]
fn simulated_counts_reproducible() {
    let cal = FluorescenceCalibration::default();
    let rho = random_density(6, &mut rng(17));
    let a = simulate_counts(&rho, &cal, 1_000_000, 42).unwrap();
    let b = simulate_counts(&rho, &cal, 1_000_000, 42).unwrap();
    let other = simulate_counts(&rho, &cal, 1_000_000, 43).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, other);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fidelity_unitary_invariance(seed in 0u64..1_000_000, a in 0.0..2.0 * PI, pol in 0.0..PI, az in 0.0..2.0 * PI) {
        let mut r = rng(seed);
        let rho = random_density(2, &mut r);
        let sigma = random_density(2, &mut r);
        let u = su2(a, pol, az);
        let f = uhlmann_fidelity(&rho, &sigma).unwrap();
        let g = uhlmann_fidelity(&conj(&u, &rho), &conj(&u, &sigma)).unwrap();
        prop_assert!((f - g).abs() < 1e-9);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&f));
    }

    #[test]
    fn fidelity_symmetric(seed in 0u64..1_000_000) {
        let mut r = rng(seed);
        let rho = random_density(4, &mut r);
        let sigma = random_density(4, &mut r);
        let f = uhlmann_fidelity(&rho, &sigma).unwrap();
        let g = uhlmann_fidelity(&sigma, &rho).unwrap();
        prop_assert!((f - g).abs() < 1e-9);
        prop_assert!((uhlmann_fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn depolarizing_composes(p in 0.0..1.0f64, q in 0.0..1.0f64) {
        let both = Channel::depolarizing(2, p).then(&Channel::depolarizing(2, q)).unwrap();
        let direct = Channel::depolarizing(2, 1.0 - (1.0 - p) * (1.0 - q));
        prop_assert!(linalg::max_abs_diff(both.superoperator(), direct.superoperator()) < 1e-12);
    }
}
