#![allow(dead_code)]

use holonomic::linalg::{c, CMatrix, CVector};
use holonomic::state_algebra::{DensityOperator, PureState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ginibre(d: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

/// Full-rank random density matrix `G G† / tr(G G†)`.
pub fn random_density(d: usize, rng: &mut ChaCha8Rng) -> DensityOperator {
    let g = ginibre(d, rng);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    let m = m * c(1.0 / tr, 0.0);
    DensityOperator::new((&m + m.adjoint()) * c(0.5, 0.0)).expect("Ginibre state is physical")
}

pub fn random_pure(d: usize, rng: &mut ChaCha8Rng) -> PureState {
    let v = CVector::from_fn(d, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    PureState::normalized(v).expect("nonzero")
}

/// Haar-random unitary: QR of a Ginibre matrix with the phases of `R`'s
/// diagonal moved into `Q`.
pub fn haar_unitary(d: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let qr = ginibre(d, rng).qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = CMatrix::from_diagonal(&CVector::from_fn(d, |i, _| {
        let z = r[(i, i)];
        z / z.norm()
    }));
    q * phases
}
