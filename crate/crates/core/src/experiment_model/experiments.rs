//! Simulated experiments: process tomography of single-qubit gates, gate
//! concatenation decay, the CNOT state-tomography run and the robustness scan.

use serde::{Deserialize, Serialize};

use super::channel::Channel;
use super::noise::{apply_noise_ensemble, dynamic_not_channel, echo_sequence, NoiseModel};
use super::readout::{
    expectation_from_counts, monte_carlo_error_bar, monte_carlo_error_bars, plus_probability_from_counts,
    simulate_binary, simulate_setting, CountRecord, FluorescenceCalibration, McSummary,
};
use super::{derive_seed, stream_rng};
use crate::gates::{cnot_ideal, GateSpec};
use crate::linalg::{self, CMatrix, CVector};
use crate::propagation::TimeGrid;
use crate::pulses::PulseEnvelope;
use crate::state_algebra::{concurrence, state_fidelity, DensityOperator, PureState, TensorProduct};
use crate::tomography::{
    self, average_gate_fidelity, chi_from_outputs, exact_records, pauli_settings, process_fidelity, process_inputs,
    MeasurementRecord, ProcessMatrix, TraceConstraint,
};
use crate::{Error, Result};

/// How measured quantities are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// Infinite statistics: exact expectation values.
    Exact,
    /// Poisson photon counts over `n_cycles` repetitions per setting.
    Counts { n_cycles: u64 },
}

/// Mixes `I/d` into a prepared state.
pub fn prepare(state: &PureState, initial_mixture: f64) -> Result<DensityOperator> {
    let rho = state.to_density();
    if initial_mixture == 0.0 {
        return Ok(rho);
    }
    DensityOperator::mixture(&[
        (1.0 - initial_mixture, &rho),
        (initial_mixture, &DensityOperator::maximally_mixed(state.dim())),
    ])
}

fn tomograph_counts(records: &[CountRecord], n_qubits: usize, cal: &FluorescenceCalibration) -> Result<DensityOperator> {
    let measured = records
        .iter()
        .map(|r| expectation_from_counts(r, cal))
        .collect::<Result<Vec<MeasurementRecord>>>()?;
    tomography::state_tomography(&measured, n_qubits)
}

/// Counts for every Pauli setting of `state`; setting `k` of block `block`
/// draws from stream `64·block + k` of `seed`.
fn measure_all(state: &DensityOperator, n_qubits: usize, cal: &FluorescenceCalibration, n_cycles: u64, seed: u64, block: u64) -> Result<Vec<CountRecord>> {
    pauli_settings(n_qubits)?
        .iter()
        .enumerate()
        .map(|(k, s)| simulate_setting(state, s, cal, n_cycles, &mut stream_rng(seed, 64 * block + k as u64)))
        .collect()
}

/// Result of simulated single-qubit process tomography.
#[derive(Debug, Clone)]
pub struct QptReport {
    pub chi: ProcessMatrix,
    pub chi_ideal: ProcessMatrix,
    pub process_fidelity: f64,
    pub average_gate_fidelity: f64,
    /// Monte Carlo spread of `F_P`; `None` for exact readout.
    pub process_fidelity_error: Option<McSummary>,
    pub condition_number: f64,
    pub converged: bool,
    pub counts: Vec<CountRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QptOptions {
    pub readout: Readout,
    pub mc_trials: usize,
    pub constraint: TraceConstraint,
    pub initial_mixture: f64,
}

impl Default for QptOptions {
    fn default() -> Self {
        Self {
            readout: Readout::Exact,
            mc_trials: 200,
            constraint: TraceConstraint::Enforced,
            initial_mixture: 0.0,
        }
    }
}

/// Four-input process tomography of `channel` against the unitary `ideal`.
pub fn qpt_experiment(channel: &Channel, ideal: &CMatrix, cal: &FluorescenceCalibration, options: &QptOptions, seed: u64) -> Result<QptReport> {
    if channel.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: channel.dim() });
    }
    let chi_ideal = ProcessMatrix::from_unitary(ideal)?;
    let outputs = process_inputs()
        .iter()
        .map(|s| channel.apply(&prepare(s, options.initial_mixture)?))
        .collect::<Result<Vec<_>>>()?;

    match options.readout {
        Readout::Exact => {
            let estimated = outputs
                .iter()
                .map(|o| tomography::state_tomography(&exact_records(o, 1)?, 1))
                .collect::<Result<Vec<_>>>()?;
            let est = chi_from_outputs(&estimated, options.constraint)?;
            let fp = process_fidelity(&est.chi, &chi_ideal);
            Ok(QptReport {
                average_gate_fidelity: average_gate_fidelity(fp.clamp(0.0, 1.0), 2)?,
                process_fidelity: fp,
                chi: est.chi,
                chi_ideal,
                process_fidelity_error: None,
                condition_number: est.condition_number,
                converged: est.converged,
                counts: Vec::new(),
            })
        }
        Readout::Counts { n_cycles } => {
            let mut counts = Vec::new();
            for (j, o) in outputs.iter().enumerate() {
                counts.extend(measure_all(o, 1, cal, n_cycles, seed, j as u64)?);
            }
            let reconstruct = |records: &[CountRecord]| -> Result<(tomography::ProcessEstimate, f64)> {
                let estimated = records
                    .chunks(3)
                    .map(|chunk| tomograph_counts(chunk, 1, cal))
                    .collect::<Result<Vec<_>>>()?;
                let est = chi_from_outputs(&estimated, options.constraint)?;
                let fp = process_fidelity(&est.chi, &chi_ideal);
                Ok((est, fp))
            };
            let (est, fp) = reconstruct(&counts)?;
            let error = monte_carlo_error_bar(|r| Ok(reconstruct(r)?.1), &counts, options.mc_trials, derive_seed(seed, 1))?;
            Ok(QptReport {
                average_gate_fidelity: average_gate_fidelity(fp.clamp(0.0, 1.0), 2)?,
                process_fidelity: fp,
                chi: est.chi,
                chi_ideal,
                process_fidelity_error: Some(error),
                condition_number: est.condition_number,
                converged: est.converged,
                counts,
            })
        }
    }
}

/// One point of a concatenation decay curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub n: usize,
    pub fidelity: f64,
    pub error: f64,
}

/// Applies `channel` `n = 0..=n_max` times to `initial` and measures the
/// population in the ideal `ideal^n |initial⟩`.
///
/// With counts the fidelity is read out as a two-outcome measurement and its
/// error bar is the Monte Carlo spread; exact readout reports zero error.
pub fn decay_curve(
    channel: &Channel,
    ideal: &CMatrix,
    n_max: usize,
    initial: &PureState,
    cal: &FluorescenceCalibration,
    readout: Readout,
    mc_trials: usize,
    seed: u64,
) -> Result<Vec<DecayPoint>> {
    if n_max < 2 {
        return Err(Error::OutOfRange {
            field: "n_max",
            value: n_max as f64,
            expected: ">= 2",
        });
    }
    let mut rho = prepare(initial, 0.0)?.into_matrix();
    let mut target = initial.amplitudes().clone();
    let mut points = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let psi = PureState::normalized(target.clone())?;
        let exact = state_fidelity(&DensityOperator::new(rho.clone())?, &psi)?;
        let point = match readout {
            Readout::Exact => DecayPoint { n, fidelity: exact, error: 0.0 },
            Readout::Counts { n_cycles } => {
                let rec = simulate_binary(&format!("n={n}"), exact, cal, n_cycles, &mut stream_rng(seed, n as u64))?;
                let (p, _) = plus_probability_from_counts(&rec, cal)?;
                let mc = monte_carlo_error_bar(
                    |r| Ok(plus_probability_from_counts(&r[0], cal)?.0),
                    std::slice::from_ref(&rec),
                    mc_trials,
                    derive_seed(seed, 1000 + n as u64),
                )?;
                DecayPoint { n, fidelity: p, error: mc.std }
            }
        };
        points.push(point);
        rho = channel.apply_matrix(&rho);
        target = ideal * target;
    }
    Ok(points)
}

/// Noisy channel of `spec` (see [`apply_noise_ensemble`]) concatenated up to
/// `n_max` times.
pub fn concatenation_decay(
    spec: &GateSpec,
    noise: &NoiseModel,
    grid: &TimeGrid,
    n_max: usize,
    initial: &PureState,
    cal: &FluorescenceCalibration,
    readout: Readout,
    seed: u64,
) -> Result<Vec<DecayPoint>> {
    let channel = apply_noise_ensemble(spec, noise, grid, derive_seed(seed, 2))?;
    decay_curve(&channel, spec.ideal().matrix(), n_max, initial, cal, readout, 200, seed)
}

/// Fitted per-gate error of `F(n) = 0.5 + B (1 − 2ε)ⁿ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub epsilon: f64,
    pub epsilon_std: f64,
    pub amplitude: f64,
    pub amplitude_std: f64,
    pub chi_squared: f64,
    pub iterations: usize,
}

fn decay_model(n: f64, b: f64, eps: f64) -> (f64, f64, f64) {
    let q = 1.0 - 2.0 * eps;
    let qn = q.powf(n);
    let d_eps = if n == 0.0 { 0.0 } else { -2.0 * b * n * q.powf(n - 1.0) };
    (0.5 + b * qn, qn, d_eps)
}

/// Weighted Levenberg-Marquardt fit of `F(n) = 0.5 + B (1 − 2ε)ⁿ`.
///
/// Points are weighted by `1/error²`; if any error bar is zero all points get
/// unit weight and the covariance is scaled by the residual variance.
pub fn fit_per_gate_error(curve: &[DecayPoint]) -> Result<DecayFit> {
    if curve.len() < 5 {
        return Err(Error::FitFailed(format!("need at least 5 points, got {}", curve.len())));
    }
    let weighted = curve.iter().all(|p| p.error > 0.0);
    let w: Vec<f64> = curve
        .iter()
        .map(|p| if weighted { 1.0 / (p.error * p.error) } else { 1.0 })
        .collect();

    let first = curve.iter().min_by_key(|p| p.n).expect("non-empty");
    let last = curve.iter().max_by_key(|p| p.n).expect("non-empty");
    let mut b = if (first.fidelity - 0.5).abs() > 1e-3 { first.fidelity - 0.5 } else { 0.5 };
    let ratio = (last.fidelity - 0.5) / b;
    let mut eps = if ratio > 0.0 && ratio <= 1.0 && last.n > 0 {
        (1.0 - ratio.powf(1.0 / last.n as f64)) / 2.0
    } else {
        0.01
    };

    let chi2 = |b: f64, eps: f64| -> f64 {
        curve
            .iter()
            .zip(&w)
            .map(|(p, wi)| wi * (p.fidelity - decay_model(p.n as f64, b, eps).0).powi(2))
            .sum()
    };
    let normal = |b: f64, eps: f64| -> ([[f64; 2]; 2], [f64; 2]) {
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for (p, wi) in curve.iter().zip(&w) {
            let (m, db, de) = decay_model(p.n as f64, b, eps);
            let r = p.fidelity - m;
            let j = [db, de];
            for a in 0..2 {
                jtr[a] += wi * j[a] * r;
                for bb in 0..2 {
                    jtj[a][bb] += wi * j[a] * j[bb];
                }
            }
        }
        (jtj, jtr)
    };

    let mut lambda = 1e-3;
    let mut current = chi2(b, eps);
    let mut iterations = 0;
    for it in 0..500 {
        iterations = it + 1;
        let (jtj, jtr) = normal(b, eps);
        let a00 = jtj[0][0] * (1.0 + lambda);
        let a11 = jtj[1][1] * (1.0 + lambda);
        let det = a00 * a11 - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let db = (a11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let de = (a00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
        let trial = chi2(b + db, eps + de);
        if trial.is_finite() && trial <= current {
            let small = db.abs() < 1e-14 * b.abs().max(1e-3) && de.abs() < 1e-14;
            b += db;
            eps += de;
            let improvement = current - trial;
            current = trial;
            lambda = (lambda / 10.0).max(1e-12);
            if small || improvement <= 1e-15 * current.max(1e-300) {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    let (jtj, _) = normal(b, eps);
    let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
    if !(det.abs() > 0.0) || !eps.is_finite() || !b.is_finite() {
        return Err(Error::FitFailed("singular normal equations".into()));
    }
    let scale = if weighted {
        1.0
    } else {
        current / (curve.len() - 2) as f64
    };
    let var_b = jtj[1][1] / det * scale;
    let var_eps = jtj[0][0] / det * scale;
    Ok(DecayFit {
        epsilon: eps,
        epsilon_std: var_eps.max(0.0).sqrt(),
        amplitude: b,
        amplitude_std: var_b.max(0.0).sqrt(),
        chi_squared: current,
        iterations,
    })
}

/// A CNOT test input.
#[derive(Debug, Clone)]
pub struct CnotInput {
    pub label: String,
    pub state: PureState,
}

/// The register basis states plus `|0⟩(|↑⟩+|↓⟩)/√2` and `(|0⟩+|1⟩)/√2 |↑⟩`
/// (electron label first, nuclear label second).
pub fn default_cnot_inputs() -> Vec<CnotInput> {
    let e = |k| PureState::basis(2, k);
    let up = e(0);
    let down = e(1);
    let plus = PureState::normalized(CVector::from_vec(vec![linalg::ONE, linalg::ONE])).expect("nonzero");
    // Nuclear factor first in the tensor product.
    let reg = |n: &PureState, el: &PureState| n.tensor(el);
    vec![
        CnotInput { label: "0,up".into(), state: reg(&up, &e(0)) },
        CnotInput { label: "1,up".into(), state: reg(&up, &e(1)) },
        CnotInput { label: "0,down".into(), state: reg(&down, &e(0)) },
        CnotInput { label: "1,down".into(), state: reg(&down, &e(1)) },
        CnotInput { label: "0,(up+down)".into(), state: reg(&plus, &e(0)) },
        CnotInput { label: "(0+1),up".into(), state: reg(&up, &plus) },
    ]
}

/// Bell-state input `|0⟩ ⊗ (|↑⟩+|↓⟩)/√2`.
pub fn bell_input() -> PureState {
    default_cnot_inputs().remove(4).state
}

/// Noisy CNOT core from the ensemble, wrapped in the Hahn echo with
/// `t_wait` of electron free evolution split around it.
pub fn cnot_channel(pulse: &PulseEnvelope, noise: &NoiseModel, grid: &TimeGrid, t_wait: f64, seed: u64) -> Result<Channel> {
    let core = apply_noise_ensemble(&GateSpec::cnot(*pulse), noise, grid, derive_seed(seed, 3))?;
    echo_sequence(&core, t_wait, noise, derive_seed(seed, 4))
}

#[derive(Debug, Clone)]
pub struct CnotOutcome {
    pub label: String,
    pub target: PureState,
    pub rho: DensityOperator,
    pub fidelity: f64,
    pub fidelity_error: Option<f64>,
    /// Reported when the ideal output is entangled.
    pub concurrence: Option<f64>,
    pub concurrence_error: Option<f64>,
    pub counts: Vec<CountRecord>,
}

/// Applies `channel` to every input, state-tomographs the output and compares
/// it with the ideal CNOT output.
pub fn cnot_experiment(
    channel: &Channel,
    inputs: &[CnotInput],
    cal: &FluorescenceCalibration,
    readout: Readout,
    mc_trials: usize,
    initial_mixture: f64,
    seed: u64,
) -> Result<Vec<CnotOutcome>> {
    if channel.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: channel.dim() });
    }
    let cnot = cnot_ideal();
    inputs
        .iter()
        .enumerate()
        .map(|(j, input)| {
            let target = input.state.evolve(&cnot)?;
            let entangled = concurrence(&target.to_density())? > 1e-6;
            let out = channel.apply(&prepare(&input.state, initial_mixture)?)?;
            match readout {
                Readout::Exact => {
                    let rho = tomography::state_tomography(&exact_records(&out, 2)?, 2)?;
                    Ok(CnotOutcome {
                        label: input.label.clone(),
                        fidelity: state_fidelity(&rho, &target)?,
                        concurrence: if entangled { Some(concurrence(&rho)?) } else { None },
                        target,
                        rho,
                        fidelity_error: None,
                        concurrence_error: None,
                        counts: Vec::new(),
                    })
                }
                Readout::Counts { n_cycles } => {
                    let counts = measure_all(&out, 2, cal, n_cycles, seed, j as u64)?;
                    let estimate = |records: &[CountRecord]| -> Result<Vec<f64>> {
                        let rho = tomograph_counts(records, 2, cal)?;
                        let mut v = vec![state_fidelity(&rho, &target)?];
                        if entangled {
                            v.push(concurrence(&rho)?);
                        }
                        Ok(v)
                    };
                    let rho = tomograph_counts(&counts, 2, cal)?;
                    let bars = monte_carlo_error_bars(estimate, &counts, mc_trials, derive_seed(seed, 100 + j as u64))?;
                    Ok(CnotOutcome {
                        label: input.label.clone(),
                        fidelity: state_fidelity(&rho, &target)?,
                        fidelity_error: Some(bars[0].std),
                        concurrence: if entangled { Some(concurrence(&rho)?) } else { None },
                        concurrence_error: bars.get(1).map(|b| b.std),
                        target,
                        rho,
                        counts,
                    })
                }
            }
        })
        .collect()
}

/// Process fidelities of the geometric and the dynamic NOT at one Rabi
/// error level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub rabi_error_fraction: f64,
    pub geometric_fidelity: f64,
    pub dynamic_fidelity: f64,
}

/// Scans `rabi_error_fraction` with the rest of `base` fixed, comparing the
/// geometric NOT with a resonant π pulse of the same envelope.
pub fn robustness_sweep(values: &[f64], base: &NoiseModel, pulse: &PulseEnvelope, grid: &TimeGrid, seed: u64) -> Result<Vec<SweepPoint>> {
    let x = linalg::pauli_x();
    values
        .iter()
        .map(|&v| {
            let noise = NoiseModel {
                rabi_error_fraction: v,
                ..*base
            };
            let geo = apply_noise_ensemble(&GateSpec::not(*pulse), &noise, grid, seed)?;
            let dynamic = dynamic_not_channel(pulse, &noise, grid, seed)?;
            Ok(SweepPoint {
                rabi_error_fraction: v,
                geometric_fidelity: geo.process_fidelity_to(&x)?,
                dynamic_fidelity: dynamic.process_fidelity_to(&x)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pulse() -> PulseEnvelope {
        PulseEnvelope::sine(1e-6, PI).unwrap()
    }

    fn grid() -> TimeGrid {
        TimeGrid::over(1e-6, 200).unwrap()
    }

    #[test]
    fn exact_qpt_of_noiseless_not() {
        let ch = apply_noise_ensemble(&GateSpec::not(pulse()), &NoiseModel::noiseless(), &grid(), 0).unwrap();
        let r = qpt_experiment(&ch, &linalg::pauli_x(), &FluorescenceCalibration::default(), &QptOptions::default(), 0).unwrap();
        assert!(r.process_fidelity > 0.9999);
        assert!((r.average_gate_fidelity - 1.0).abs() < 1e-6);
    }

    #[test]
    fn synthetic_fit_recovers_epsilon() {
        let curve: Vec<DecayPoint> = (0..=100)
            .map(|n| DecayPoint {
                n,
                fidelity: decay_model(n as f64, 0.5, 0.0024).0,
                error: 0.0,
            })
            .collect();
        let fit = fit_per_gate_error(&curve).unwrap();
        assert!((fit.epsilon - 0.0024).abs() < 1e-6, "{fit:?}");

        let flat: Vec<DecayPoint> = (0..=20).map(|n| DecayPoint { n, fidelity: 1.0, error: 0.0 }).collect();
        let fit = fit_per_gate_error(&flat).unwrap();
        assert!(fit.epsilon.abs() < 1e-12, "{fit:?}");
        assert!(fit_per_gate_error(&flat[..4]).is_err());
    }

    #[test]
    fn depolarizing_decay_closed_form() {
        let ch = Channel::unitary(&linalg::pauli_x()).then(&Channel::depolarizing(2, 0.5)).unwrap();
        let curve = decay_curve(&ch, &linalg::pauli_x(), 3, &PureState::basis(2, 0), &FluorescenceCalibration::default(), Readout::Exact, 200, 0).unwrap();
        assert!((curve[0].fidelity - 1.0).abs() < 1e-15);
        assert!((curve[1].fidelity - 0.75).abs() < 1e-12);

        let ch = Channel::unitary(&linalg::pauli_x()).then(&Channel::depolarizing(2, 0.0048)).unwrap();
        let curve = decay_curve(&ch, &linalg::pauli_x(), 100, &PureState::basis(2, 1), &FluorescenceCalibration::default(), Readout::Exact, 200, 0).unwrap();
        let expect = 0.5 + 0.5 * (1.0 - 2.0 * 0.0024f64).powi(100);
        assert!((curve[100].fidelity - expect).abs() < 1e-12);
    }

    #[test]
    fn noiseless_cnot_outputs() {
        let ch = cnot_channel(&pulse(), &NoiseModel::noiseless(), &grid(), 2e-5, 0).unwrap();
        let outs = cnot_experiment(&ch, &default_cnot_inputs(), &FluorescenceCalibration::default(), Readout::Exact, 100, 0.0, 0).unwrap();
        for o in &outs {
            assert!(o.fidelity > 1.0 - 1e-8, "{} {}", o.label, o.fidelity);
        }
        let bell = &outs[4];
        assert!((bell.concurrence.unwrap() - 1.0).abs() < 1e-6);
        assert!(outs[0].concurrence.is_none());
        // |0,↑⟩ → |1,↑⟩ and |1,↓⟩ unchanged.
        assert!((outs[0].target.amplitudes()[1].re - 1.0).abs() < 1e-15);
        assert!((outs[3].target.amplitudes()[3].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn prepared_mixture() {
        let rho = prepare(&PureState::basis(2, 0), 0.2).unwrap();
        assert!((rho.matrix()[(0, 0)].re - 0.9).abs() < 1e-15);
        assert!((rho.matrix()[(1, 1)].re - 0.1).abs() < 1e-15);
    }
}
