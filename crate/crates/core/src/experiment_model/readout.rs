//! Fluorescence readout: calibrated count rates per spin component, Poisson
//! photon counts, and the count-to-expectation estimator.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stream_rng;
use crate::linalg;
use crate::state_algebra::DensityOperator;
use crate::tomography::{pauli_operator, pauli_settings, MeasurementRecord};
use crate::{Error, Result};

/// Mean photon count per cycle of the polarized `|m=0, m_n=↑⟩` state.
pub const BRIGHT_COUNTS_PER_CYCLE: f64 = 0.03;
/// Ratio of NV fluorescence to background counts.
pub const DEFAULT_SNR: f64 = 15.0;
/// Fluorescence of an `m = ±1` component relative to `m = 0`, before background.
pub const SPIN_FLIP_RELATIVE_FLUORESCENCE: f64 = 0.7;
/// Cycles per data point used by the measurements being modeled.
pub const DEFAULT_CYCLES: u64 = 1_000_000;

/// Label of the component a Pauli setting's +1 eigenspace is mapped onto.
pub const BRIGHT_LABEL: &str = "0,up";
/// Label of the component a Pauli setting's −1 eigenspace is mapped onto.
pub const DARK_LABEL: &str = "1,up";

/// Calibrated mean counts per cycle for each `|m, m_n⟩` component.
///
/// Labels are `"<e>,<n>"` with electron level `e ∈ {0, 1, a}` and nuclear
/// state `n ∈ {up, down}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluorescenceCalibration {
    pub mean_counts_per_cycle: BTreeMap<String, f64>,
    pub snr: f64,
    /// Mean counts per cycle in the reference window (repolarized state).
    pub reference_window_counts: f64,
}

impl Default for FluorescenceCalibration {
    fn default() -> Self {
        Self::with_contrast(BRIGHT_COUNTS_PER_CYCLE, DEFAULT_SNR, SPIN_FLIP_RELATIVE_FLUORESCENCE)
    }
}

impl FluorescenceCalibration {
    /// `m = 0` components fluoresce at `bright`; `m = ±1` components at
    /// `relative` times the NV part of `bright`, on a common background of
    /// `bright/(snr + 1)`.
    pub fn with_contrast(bright: f64, snr: f64, relative: f64) -> Self {
        let background = bright / (snr + 1.0);
        let dark = background + relative * (bright - background);
        let mut mean_counts_per_cycle = BTreeMap::new();
        for n in ["up", "down"] {
            mean_counts_per_cycle.insert(format!("0,{n}"), bright);
            mean_counts_per_cycle.insert(format!("1,{n}"), dark);
            mean_counts_per_cycle.insert(format!("a,{n}"), dark);
        }
        Self {
            mean_counts_per_cycle,
            snr,
            reference_window_counts: bright,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (label, &v) in &self.mean_counts_per_cycle {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("mean count of {label:?} must be >= 0, got {v}")));
            }
        }
        if !(self.reference_window_counts > 0.0) {
            return Err(Error::OutOfRange {
                field: "reference_window_counts",
                value: self.reference_window_counts,
                expected: "> 0",
            });
        }
        if !(self.snr > 0.0) {
            return Err(Error::OutOfRange {
                field: "snr",
                value: self.snr,
                expected: "> 0",
            });
        }
        Ok(())
    }

    pub fn level(&self, label: &str) -> Result<f64> {
        self.mean_counts_per_cycle
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Expected counts per cycle of `state`: `Σ_s p_s · mean(s)`.
    pub fn expected_rate(&self, state: &DensityOperator) -> Result<f64> {
        let labels = component_labels(state.dim())?;
        let pops = state.populations();
        labels
            .iter()
            .zip(pops)
            .map(|(l, p)| Ok(p.max(0.0) * self.level(l)?))
            .sum()
    }
}

/// Component labels of the computational basis for supported dimensions:
/// qubit (2), Λ system (3), register (4) and register with ancilla (6).
/// Register states are ordered `n·d_e + e`.
pub fn component_labels(dim: usize) -> Result<Vec<String>> {
    let (levels, nuclear): (&[&str], &[&str]) = match dim {
        2 => (&["0", "1"], &["up"]),
        3 => (&["0", "1", "a"], &["up"]),
        4 => (&["0", "1"], &["up", "down"]),
        6 => (&["0", "1", "a"], &["up", "down"]),
        _ => return Err(Error::DimensionMismatch { expected: 4, got: dim }),
    };
    Ok(nuclear
        .iter()
        .flat_map(|n| levels.iter().map(move |e| format!("{e},{n}")))
        .collect())
}

/// Photon counts of one measurement setting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub setting: String,
    pub n_cycles: u64,
    pub signal_counts: u64,
    pub reference_counts: u64,
}

fn poisson(mean: f64, rng: &mut impl Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    d.sample(rng) as u64
}

fn check_cycles(n_cycles: u64) -> Result<()> {
    if n_cycles == 0 {
        return Err(Error::OutOfRange {
            field: "n_cycles",
            value: 0.0,
            expected: ">= 1",
        });
    }
    Ok(())
}

fn draw(setting: String, rate: f64, cal: &FluorescenceCalibration, n_cycles: u64, rng: &mut ChaCha8Rng) -> CountRecord {
    let n = n_cycles as f64;
    CountRecord {
        setting,
        n_cycles,
        signal_counts: poisson(rate * n, rng),
        reference_counts: poisson(cal.reference_window_counts * n, rng),
    }
}

/// Poisson counts of a population readout of `state`.
pub fn simulate_counts(state: &DensityOperator, cal: &FluorescenceCalibration, n_cycles: u64, seed: u64) -> Result<CountRecord> {
    check_cycles(n_cycles)?;
    let rate = cal.expected_rate(state)?;
    Ok(draw("populations".into(), rate, cal, n_cycles, &mut stream_rng(seed, 0)))
}

/// Probability of the +1 outcome of observable `p` (eigenvalues ±1).
fn plus_probability(state: &DensityOperator, p: &linalg::CMatrix) -> f64 {
    ((1.0 + state.expectation(p)) / 2.0).clamp(0.0, 1.0)
}

/// Counts of a two-outcome measurement whose +1 outcome has probability
/// `p_plus`; the outcomes are mapped onto the bright and dark components.
pub fn simulate_binary(setting: &str, p_plus: f64, cal: &FluorescenceCalibration, n_cycles: u64, rng: &mut ChaCha8Rng) -> Result<CountRecord> {
    check_cycles(n_cycles)?;
    let rate = p_plus * cal.level(BRIGHT_LABEL)? + (1.0 - p_plus) * cal.level(DARK_LABEL)?;
    Ok(draw(setting.to_string(), rate, cal, n_cycles, rng))
}

/// Counts for Pauli setting `setting` measured on `state`.
pub fn simulate_setting(state: &DensityOperator, setting: &str, cal: &FluorescenceCalibration, n_cycles: u64, rng: &mut ChaCha8Rng) -> Result<CountRecord> {
    let p = pauli_operator(setting)?;
    if p.nrows() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            got: p.nrows(),
        });
    }
    simulate_binary(setting, plus_probability(state, &p), cal, n_cycles, rng)
}

/// Projective readout of every Pauli setting with `shots` single-shot
/// outcomes each: binomial sampling of the +1 outcome, one RNG stream per
/// setting.
pub fn shot_records(state: &DensityOperator, n_qubits: usize, shots: u64, seed: u64) -> Result<Vec<MeasurementRecord>> {
    if shots == 0 {
        return Err(Error::Infeasible("shots must be at least 1".into()));
    }
    if state.dim() != 1 << n_qubits {
        return Err(Error::DimensionMismatch {
            expected: 1 << n_qubits,
            got: state.dim(),
        });
    }
    pauli_settings(n_qubits)?
        .into_iter()
        .enumerate()
        .map(|(k, setting)| {
            let p_plus = plus_probability(state, &pauli_operator(&setting)?);
            let binomial = Binomial::new(shots, p_plus).map_err(|e| Error::Estimator(e.to_string()))?;
            let plus = binomial.sample(&mut stream_rng(seed, k as u64));
            let e = 2.0 * plus as f64 / shots as f64 - 1.0;
            MeasurementRecord::new(setting, e, Some(shots))
        })
        .collect()
}

/// Estimated +1 probability and its delta-method standard error.
pub fn plus_probability_from_counts(record: &CountRecord, cal: &FluorescenceCalibration) -> Result<(f64, f64)> {
    if record.reference_counts == 0 {
        return Err(Error::Estimator(format!("no reference counts for {}", record.setting)));
    }
    let bright = cal.level(BRIGHT_LABEL)?;
    let dark = cal.level(DARK_LABEL)?;
    let contrast = bright - dark;
    if contrast.abs() < 1e-15 {
        return Err(Error::Estimator("bright and dark levels coincide".into()));
    }
    let s = record.signal_counts as f64;
    let r = record.reference_counts as f64;
    let f = s / r * cal.reference_window_counts;
    let p = (f - dark) / contrast;
    let rel_var = if s > 0.0 { 1.0 / s } else { 1.0 } + 1.0 / r;
    let std = (f * f * rel_var).sqrt() / contrast.abs();
    Ok((p, std))
}

/// `⟨P⟩ = 2p − 1` from a setting's counts, clamped to `[−1, 1]`, as a
/// tomography record carrying its counts.
pub fn expectation_from_counts(record: &CountRecord, cal: &FluorescenceCalibration) -> Result<MeasurementRecord> {
    let (p, p_std) = plus_probability_from_counts(record, cal)?;
    let e = (2.0 * p - 1.0).clamp(-1.0, 1.0);
    Ok(MeasurementRecord::new(record.setting.clone(), e, Some(record.n_cycles))?
        .with_std_error(2.0 * p_std)
        .with_counts(record.clone()))
}

/// Mean and standard deviation of a Monte Carlo resampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McSummary {
    pub mean: f64,
    pub std: f64,
    pub n_trials: usize,
    /// Trials on which the estimator failed; they are excluded.
    pub n_failed: usize,
}

impl McSummary {
    pub fn any_failed(&self) -> bool {
        self.n_failed > 0
    }
}

/// Resamples every record's signal and reference counts as Poisson around
/// the observed values, re-runs `estimator` and summarizes the spread.
///
/// Trial `k` draws from its own stream of `seed`, so the result does not
/// depend on scheduling.
pub fn monte_carlo_error_bar<E>(estimator: E, records: &[CountRecord], n_trials: usize, seed: u64) -> Result<McSummary>
where
    E: Fn(&[CountRecord]) -> Result<f64> + Sync,
{
    let bars = monte_carlo_error_bars(|r| Ok(vec![estimator(r)?]), records, n_trials, seed)?;
    Ok(bars[0])
}

/// Vector-valued form of [`monte_carlo_error_bar`]: one summary per output
/// component. A trial fails as a whole if any component fails.
pub fn monte_carlo_error_bars<E>(estimator: E, records: &[CountRecord], n_trials: usize, seed: u64) -> Result<Vec<McSummary>>
where
    E: Fn(&[CountRecord]) -> Result<Vec<f64>> + Sync,
{
    if n_trials < 100 {
        return Err(Error::OutOfRange {
            field: "n_trials",
            value: n_trials as f64,
            expected: ">= 100",
        });
    }
    let values: Vec<Option<Vec<f64>>> = (0..n_trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let resampled: Vec<CountRecord> = records
                .iter()
                .map(|r| CountRecord {
                    setting: r.setting.clone(),
                    n_cycles: r.n_cycles,
                    signal_counts: poisson(r.signal_counts as f64, &mut rng),
                    reference_counts: poisson(r.reference_counts as f64, &mut rng),
                })
                .collect();
            estimator(&resampled).ok().filter(|v| v.iter().all(|x| x.is_finite()))
        })
        .collect();
    let ok: Vec<&Vec<f64>> = values.iter().flatten().collect();
    if ok.len() < 2 {
        return Err(Error::Estimator(format!("{} of {n_trials} Monte Carlo trials failed", n_trials - ok.len())));
    }
    let width = ok[0].len();
    Ok((0..width)
        .map(|i| {
            let mean = ok.iter().map(|v| v[i]).sum::<f64>() / ok.len() as f64;
            let var = ok.iter().map(|v| (v[i] - mean).powi(2)).sum::<f64>() / (ok.len() - 1) as f64;
            McSummary {
                mean,
                std: var.sqrt(),
                n_trials,
                n_failed: n_trials - ok.len(),
            }
        })
        .collect())
}
