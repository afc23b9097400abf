//! Quasi-static noise ensembles, free-evolution waits and the Hahn echo.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::channel::Channel;
use super::stream_rng;
use crate::gates::{realize_perturbed, GateSpec};
use crate::linalg::{self, c, CMatrix};
use crate::propagation::{propagate, TimeGrid};
use crate::pulses::{DrivePerturbation, PulseEnvelope};
use crate::{Error, Result};

/// Quasi-static noise: each ensemble member draws one detuning and one Rabi
/// scale error that stay fixed for the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation of the qubit detuning, rad/s.
    pub detuning_sigma: f64,
    /// Standard deviation of the relative Rabi amplitude error.
    pub rabi_error_fraction: f64,
    /// Depolarizing probability appended to every gate.
    pub depolarizing_per_gate: f64,
    pub n_ensemble: usize,
    /// Weight of `I/d` mixed into every prepared input state.
    #[serde(default)]
    pub initial_mixture: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::noiseless()
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            detuning_sigma: 0.0,
            rabi_error_fraction: 0.0,
            depolarizing_per_gate: 0.0,
            n_ensemble: 1,
            initial_mixture: 0.0,
        }
    }

    pub fn depolarizing(p: f64) -> Self {
        Self {
            depolarizing_per_gate: p,
            ..Self::noiseless()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("detuning_sigma", self.detuning_sigma),
            ("rabi_error_fraction", self.rabi_error_fraction),
        ];
        for (field, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::OutOfRange { field, value: v, expected: ">= 0" });
            }
        }
        for (field, v) in [
            ("depolarizing_per_gate", self.depolarizing_per_gate),
            ("initial_mixture", self.initial_mixture),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange { field, value: v, expected: "0 <= value <= 1" });
            }
        }
        if self.n_ensemble == 0 {
            return Err(Error::OutOfRange {
                field: "n_ensemble",
                value: 0.0,
                expected: ">= 1",
            });
        }
        Ok(())
    }

    /// True when no member can differ from the unperturbed drive.
    pub fn is_static_free(&self) -> bool {
        self.detuning_sigma == 0.0 && self.rabi_error_fraction == 0.0
    }

    /// Perturbation of ensemble member `index`, drawn from its own stream.
    pub fn sample(&self, seed: u64, index: usize) -> DrivePerturbation {
        if self.is_static_free() {
            return DrivePerturbation::default();
        }
        let mut rng = stream_rng(seed, index as u64);
        let detuning = Normal::new(0.0, self.detuning_sigma).expect("validated").sample(&mut rng);
        let rabi_error = Normal::new(0.0, self.rabi_error_fraction).expect("validated").sample(&mut rng);
        DrivePerturbation { rabi_error, detuning }
    }

    fn members(&self) -> usize {
        if self.is_static_free() {
            1
        } else {
            self.n_ensemble
        }
    }
}

/// Ensemble-averaged logical channel of `spec`, followed by depolarizing
/// noise. Leakage out of the logical subspace is returned as `I/d`.
pub fn apply_noise_ensemble(spec: &GateSpec, noise: &NoiseModel, grid: &TimeGrid, seed: u64) -> Result<Channel> {
    noise.validate()?;
    let members = (0..noise.members())
        .into_par_iter()
        .map(|k| {
            let block = realize_perturbed(spec, grid, noise.sample(seed, k))?;
            Ok(Channel::leaky(block.logical()))
        })
        .collect::<Result<Vec<_>>>()?;
    Channel::average(&members)?.then(&Channel::depolarizing(spec.logical_dim(), noise.depolarizing_per_gate))
}

/// Lifts a single-qubit operator to the electron, which is the whole space
/// for `dim = 2` and the fast tensor factor of the register for `dim = 4`.
fn electron_operator(single: &CMatrix, dim: usize) -> Result<CMatrix> {
    match dim {
        2 => Ok(single.clone()),
        4 => Ok(linalg::kron(&linalg::identity(2), single)),
        _ => Err(Error::DimensionMismatch { expected: 4, got: dim }),
    }
}

/// Free evolution under a static detuning `δ`: `exp(i δ t Z_e / 2)`, so the
/// electron coherence `ρ_01` acquires `e^{iδt}`.
pub fn wait_unitary(dim: usize, delta: f64, t: f64) -> Result<CMatrix> {
    let half = delta * t / 2.0;
    let w = CMatrix::from_diagonal(&linalg::CVector::from_vec(vec![linalg::cis(half), linalg::cis(-half)]));
    electron_operator(&w, dim)
}

/// Ensemble-averaged free evolution of duration `t`.
pub fn wait_channel(dim: usize, t: f64, noise: &NoiseModel, seed: u64) -> Result<Channel> {
    noise.validate()?;
    let members = (0..noise.members())
        .map(|k| Ok(Channel::unitary(&wait_unitary(dim, noise.sample(seed, k).detuning, t)?)))
        .collect::<Result<Vec<_>>>()?;
    Channel::average(&members)
}

/// One echo member with static detuning `δ`, in order of application:
/// wait `t/2`, core, electron π flip, wait `t/2`, electron π flip.
pub fn echo_member(core: &Channel, t_wait: f64, delta: f64) -> Result<Channel> {
    let dim = core.dim();
    let x = Channel::unitary(&electron_operator(&linalg::pauli_x(), dim)?);
    let w = Channel::unitary(&wait_unitary(dim, delta, t_wait / 2.0)?);
    w.then(core)?.then(&x)?.then(&w)?.then(&x)
}

/// Hahn echo around `core`, averaged over the quasi-static detuning ensemble.
pub fn echo_sequence(core: &Channel, t_wait: f64, noise: &NoiseModel, seed: u64) -> Result<Channel> {
    if !(t_wait >= 0.0) {
        return Err(Error::OutOfRange {
            field: "t_wait",
            value: t_wait,
            expected: ">= 0",
        });
    }
    noise.validate()?;
    let members = (0..noise.members())
        .map(|k| echo_member(core, t_wait, noise.sample(seed, k).detuning))
        .collect::<Result<Vec<_>>>()?;
    Channel::average(&members)
}

/// Resonant dynamic NOT: `H = (1 + ε) Ω(t) σ_x / 2 + δ σ_z / 2` with pulse
/// area π, ensemble-averaged and followed by depolarizing noise.
pub fn dynamic_not_channel(pulse: &PulseEnvelope, noise: &NoiseModel, grid: &TimeGrid, seed: u64) -> Result<Channel> {
    noise.validate()?;
    let x = linalg::pauli_x();
    let z = linalg::pauli_z();
    let members = (0..noise.members())
        .into_par_iter()
        .map(|k| {
            let pert = noise.sample(seed, k);
            let h = |t: f64| -> Result<CMatrix> {
                let omega = pulse.value(t)? * (1.0 + pert.rabi_error);
                Ok(&x * c(omega / 2.0, 0.0) + &z * c(pert.detuning / 2.0, 0.0))
            };
            let u = propagate(h, grid)?;
            Ok(Channel::unitary(u.matrix()))
        })
        .collect::<Result<Vec<_>>>()?;
    Channel::average(&members)?.then(&Channel::depolarizing(2, noise.depolarizing_per_gate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::cnot_ideal;
    use crate::state_algebra::PureState;

    fn sine() -> PulseEnvelope {
        PulseEnvelope::sine(1e-6, std::f64::consts::PI).unwrap()
    }

    #[test]
    fn zero_noise_is_ideal_gate() {
        let grid = TimeGrid::over(1e-6, 400).unwrap();
        let spec = GateSpec::not(sine());
        let ch = apply_noise_ensemble(&spec, &NoiseModel::noiseless(), &grid, 1).unwrap();
        let ideal = Channel::unitary(spec.ideal().matrix());
        assert!(linalg::max_abs_diff(ch.superoperator(), ideal.superoperator()) < 1e-8);

        let cnot = apply_noise_ensemble(&GateSpec::cnot(sine()), &NoiseModel::noiseless(), &grid, 1).unwrap();
        assert!(cnot.process_fidelity_to(cnot_ideal().matrix()).unwrap() > 1.0 - 1e-10);
    }

    #[test]
    fn depolarizing_only_not_output() {
        let grid = TimeGrid::over(1e-6, 400).unwrap();
        let p = 0.2;
        let ch = apply_noise_ensemble(&GateSpec::not(sine()), &NoiseModel::depolarizing(p), &grid, 1).unwrap();
        let out = ch.apply(&PureState::basis(2, 0).to_density()).unwrap();
        assert!((out.matrix()[(0, 0)].re - p / 2.0).abs() < 1e-9);
        assert!((out.matrix()[(1, 1)].re - (1.0 - p / 2.0)).abs() < 1e-9);
    }

    #[test]
    fn static_detuning_echo_phases() {
        let plus = PureState::normalized(linalg::CVector::from_vec(vec![linalg::ONE, linalg::ONE])).unwrap();
        let (delta, t) = (2.0e5, 7e-6);
        let bare = Channel::unitary(&wait_unitary(2, delta, t).unwrap());
        let out = bare.apply(&plus.to_density()).unwrap();
        let coherence = out.matrix()[(0, 1)] * 2.0;
        assert!((coherence - linalg::cis(delta * t)).norm() < 1e-12);

        let echoed = echo_member(&Channel::identity(2), t, delta).unwrap();
        let out = echoed.apply(&plus.to_density()).unwrap();
        assert!((out.matrix()[(0, 1)] * 2.0 - linalg::ONE).norm() < 1e-10);
    }

    #[test]
    fn gaussian_dephasing_matches_characteristic_function() {
        let noise = NoiseModel {
            detuning_sigma: 1e5,
            n_ensemble: 10_000,
            ..NoiseModel::noiseless()
        };
        let t = 1.5e-5;
        let ch = wait_channel(2, t, &noise, 5).unwrap();
        let plus = PureState::normalized(linalg::CVector::from_vec(vec![linalg::ONE, linalg::ONE])).unwrap();
        let coherence = (ch.apply(&plus.to_density()).unwrap().matrix()[(0, 1)] * 2.0).norm();
        let expect = (-(noise.detuning_sigma * t).powi(2) / 2.0).exp();
        assert!((coherence / expect - 1.0).abs() < 0.05, "{coherence} vs {expect}");
    }

    #[test]
    fn rabi_error_lowers_fidelity() {
        let grid = TimeGrid::over(1e-6, 200).unwrap();
        let spec = GateSpec::not(sine());
        let clean = apply_noise_ensemble(&spec, &NoiseModel::noiseless(), &grid, 1).unwrap();
        let noisy = NoiseModel {
            rabi_error_fraction: 0.05,
            n_ensemble: 16,
            ..NoiseModel::noiseless()
        };
        let ch = apply_noise_ensemble(&spec, &noisy, &grid, 1).unwrap();
        let x = linalg::pauli_x();
        assert!(ch.process_fidelity_to(&x).unwrap() < clean.process_fidelity_to(&x).unwrap());
        assert!(ch.trace_preservation_deviation() < 1e-8);
    }

    #[test]
    fn dynamic_not_is_x_up_to_phase() {
        let grid = TimeGrid::over(1e-6, 200).unwrap();
        let ch = dynamic_not_channel(&sine(), &NoiseModel::noiseless(), &grid, 0).unwrap();
        assert!(ch.process_fidelity_to(&linalg::pauli_x()).unwrap() > 1.0 - 1e-10);
    }

    #[test]
    fn validation() {
        let bad = NoiseModel {
            n_ensemble: 0,
            ..NoiseModel::noiseless()
        };
        assert!(bad.validate().is_err());
        let bad = NoiseModel {
            depolarizing_per_gate: 1.5,
            ..NoiseModel::noiseless()
        };
        assert!(bad.validate().is_err());
    }
}
