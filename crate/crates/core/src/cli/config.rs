//! Experiment configuration: TOML (or JSON) with unit-suffixed fields,
//! resolved into validated simulation objects.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::experiment_model::{FluorescenceCalibration, NoiseModel, Readout};
use crate::gates::NamedGate;
use crate::propagation::{TimeGrid, MIN_STEPS};
use crate::pulses::{LambdaParams, PulseEnvelope, PulseShape, AWG_SAMPLE_PERIOD_S};
use crate::tomography::TraceConstraint;
use crate::{Error, Result};

/// The configuration used when no file is given.
pub const DEFAULT_CONFIG: &str = include_str!("../../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Mandatory unless given on the command line.
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub gate: GateSection,
    #[serde(default)]
    pub pulse: PulseSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub readout: ReadoutSection,
    #[serde(default)]
    pub qpt: QptSection,
    #[serde(default)]
    pub decay: DecaySection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub check: CheckSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSection {
    pub name: Option<String>,
    pub theta_rad: Option<f64>,
    pub phi_rad: Option<f64>,
}

impl Default for GateSection {
    fn default() -> Self {
        Self { name: Some("N".into()), theta_rad: None, phi_rad: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSection {
    pub shape: PulseShape,
    pub duration_ns: f64,
    pub area_rad: f64,
    pub allow_non_smooth: bool,
    pub awg_quantization: bool,
}

impl Default for PulseSection {
    fn default() -> Self {
        Self {
            shape: PulseShape::SineHalfPeriod,
            duration_ns: 1000.0,
            area_rad: std::f64::consts::PI,
            allow_non_smooth: false,
            awg_quantization: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n_steps: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n_steps: crate::propagation::DEFAULT_STEPS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub detuning_sigma_rad_per_s: f64,
    pub rabi_error_fraction: f64,
    pub depolarizing_per_gate: f64,
    pub n_ensemble: usize,
    pub initial_mixture: f64,
    pub electron_wait_us: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            detuning_sigma_rad_per_s: 5.5e4,
            rabi_error_fraction: 0.01,
            depolarizing_per_gate: 0.0048,
            n_ensemble: 200,
            initial_mixture: 0.0,
            electron_wait_us: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub bright_counts_per_cycle: f64,
    pub snr: f64,
    pub spin_flip_relative_fluorescence: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            bright_counts_per_cycle: crate::experiment_model::BRIGHT_COUNTS_PER_CYCLE,
            snr: crate::experiment_model::DEFAULT_SNR,
            spin_flip_relative_fluorescence: crate::experiment_model::SPIN_FLIP_RELATIVE_FLUORESCENCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutMode {
    Counts,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutSection {
    pub mode: ReadoutMode,
    pub n_cycles: u64,
    pub mc_trials: usize,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        Self {
            mode: ReadoutMode::Counts,
            n_cycles: crate::experiment_model::DEFAULT_CYCLES,
            mc_trials: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QptSection {
    pub trace_preserving: bool,
}

impl Default for QptSection {
    fn default() -> Self {
        Self { trace_preserving: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecaySection {
    pub n_max: usize,
    pub initial: Vec<String>,
    pub injected_epsilon: Option<f64>,
}

impl Default for DecaySection {
    fn default() -> Self {
        Self { n_max: 100, initial: vec!["0".into(), "1".into()], injected_epsilon: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub rabi_error_fractions: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { rabi_error_fractions: vec![0.0, 0.02, 0.05, 0.1, 0.15, 0.2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSection {
    pub tolerance: f64,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self { tolerance: 1e-6 }
    }
}

/// A parsed config together with the bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub sha256: String,
}

impl LoadedConfig {
    /// Parses TOML, or JSON when the text is a JSON object.
    pub fn parse(text: &str) -> Result<Self> {
        let config = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(format!("JSON: {e}")))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(format!("TOML: {e}")))?
        };
        Ok(Self { config, sha256: hex::encode(Sha256::digest(text.as_bytes())) })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Self::parse(DEFAULT_CONFIG),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }
}

/// Validated simulation inputs.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub seed: u64,
    pub gate: NamedGate,
    pub pulse: PulseEnvelope,
    pub grid: TimeGrid,
    pub noise: NoiseModel,
    pub electron_wait: f64,
    pub calibration: FluorescenceCalibration,
    pub readout: Readout,
    pub mc_trials: usize,
    pub constraint: TraceConstraint,
    pub tolerance: f64,
}

fn field_err(field: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {e}"))
}

fn finite_at_least(field: &str, v: f64, lo: f64) -> Result<f64> {
    if v.is_finite() && v >= lo {
        Ok(v)
    } else {
        Err(field_err(field, format!("{v} must be a finite number >= {lo}")))
    }
}

impl ExperimentConfig {
    /// Resolves every field, overriding the seed and readout from the
    /// command line. Errors name the offending field.
    pub fn resolve(&self, seed_override: Option<u64>, force_exact: bool) -> Result<Resolved> {
        let seed = seed_override
            .or(self.seed)
            .ok_or_else(|| field_err("seed", "missing; runs are never seeded from the clock"))?;

        let gate = match (&self.gate.name, self.gate.theta_rad, self.gate.phi_rad) {
            (Some(name), None, None) => NamedGate::parse(name).map_err(|e| field_err("gate.name", e))?,
            (None, Some(theta), phi) => {
                NamedGate::Custom(LambdaParams::new(theta, phi.unwrap_or(0.0)).map_err(|e| field_err("gate", e))?)
            }
            (Some(_), _, _) => return Err(field_err("gate", "give either name or theta_rad/phi_rad, not both")),
            (None, None, _) => return Err(field_err("gate", "needs name or theta_rad")),
        };

        let p = &self.pulse;
        let duration = finite_at_least("pulse.duration_ns", p.duration_ns, 0.0)? * 1e-9;
        let area = finite_at_least("pulse.area_rad", p.area_rad, 0.0)?;
        let mut pulse = if p.allow_non_smooth {
            PulseEnvelope::with_override(p.shape, duration, area)
        } else {
            PulseEnvelope::new(p.shape, duration, area)
        }
        .map_err(|e| field_err("pulse.shape", e))?;
        if p.awg_quantization {
            pulse = pulse.quantized(AWG_SAMPLE_PERIOD_S).map_err(|e| field_err("pulse.awg_quantization", e))?;
        }

        if self.grid.n_steps < MIN_STEPS {
            return Err(field_err("grid.n_steps", format!("{} is below the floor of {MIN_STEPS}", self.grid.n_steps)));
        }
        let grid = TimeGrid::over(pulse.duration(), self.grid.n_steps).map_err(|e| field_err("grid", e))?;

        let n = &self.noise;
        let noise = NoiseModel {
            detuning_sigma: n.detuning_sigma_rad_per_s,
            rabi_error_fraction: n.rabi_error_fraction,
            depolarizing_per_gate: n.depolarizing_per_gate,
            n_ensemble: n.n_ensemble,
            initial_mixture: n.initial_mixture,
        };
        noise.validate().map_err(|e| field_err("noise", e))?;
        let electron_wait = finite_at_least("noise.electron_wait_us", n.electron_wait_us, 0.0)? * 1e-6;

        let c = &self.calibration;
        let calibration = FluorescenceCalibration::with_contrast(
            finite_at_least("calibration.bright_counts_per_cycle", c.bright_counts_per_cycle, 0.0)?,
            finite_at_least("calibration.snr", c.snr, 0.0)?,
            finite_at_least("calibration.spin_flip_relative_fluorescence", c.spin_flip_relative_fluorescence, 0.0)?,
        );
        calibration.validate().map_err(|e| field_err("calibration", e))?;

        if self.readout.n_cycles == 0 {
            return Err(field_err("readout.n_cycles", "must be >= 1"));
        }
        if self.readout.mc_trials < 100 {
            return Err(field_err("readout.mc_trials", format!("{} is below 100", self.readout.mc_trials)));
        }
        let readout = match (force_exact, self.readout.mode) {
            (true, _) | (false, ReadoutMode::Exact) => Readout::Exact,
            (false, ReadoutMode::Counts) => Readout::Counts { n_cycles: self.readout.n_cycles },
        };

        if self.decay.n_max < 5 {
            return Err(field_err("decay.n_max", format!("{} is below 5", self.decay.n_max)));
        }
        for s in &self.decay.initial {
            if s != "0" && s != "1" {
                return Err(field_err("decay.initial", format!("{s:?} is not \"0\" or \"1\"")));
            }
        }
        if let Some(eps) = self.decay.injected_epsilon {
            if !(0.0..=0.5).contains(&eps) {
                return Err(field_err("decay.injected_epsilon", format!("{eps} is outside [0, 0.5]")));
            }
        }
        for &v in &self.sweep.rabi_error_fractions {
            finite_at_least("sweep.rabi_error_fractions", v, 0.0)?;
        }
        let tolerance = self.check.tolerance;
        if !(tolerance > 0.0 && tolerance.is_finite()) {
            return Err(field_err("check.tolerance", format!("{tolerance} must be > 0")));
        }

        Ok(Resolved {
            seed,
            gate,
            pulse,
            grid,
            noise,
            electron_wait,
            calibration,
            readout,
            mc_trials: self.readout.mc_trials,
            constraint: if self.qpt.trace_preserving { TraceConstraint::Enforced } else { TraceConstraint::Free },
            tolerance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_file_matches_built_in_defaults() {
        let loaded = LoadedConfig::parse(DEFAULT_CONFIG).unwrap();
        let mut built_in: ExperimentConfig = toml::from_str("seed = 1").unwrap();
        assert_eq!(loaded.config.seed, Some(1));
        built_in.seed = Some(1);
        assert_eq!(loaded.config, built_in);
        assert_eq!(loaded.sha256.len(), 64);
        let r = loaded.config.resolve(None, false).unwrap();
        assert_eq!(r.readout, Readout::Counts { n_cycles: 1_000_000 });
        assert_eq!(r.grid.n_steps(), 2000);
    }

    #[test]
    fn json_fallback() {
        let c = LoadedConfig::parse(r#"{"seed": 3, "gate": {"name": "H"}}"#).unwrap();
        let r = c.config.resolve(None, true).unwrap();
        assert_eq!(r.gate, NamedGate::H);
        assert_eq!(r.readout, Readout::Exact);
    }

    #[test]
    fn errors_name_the_field() {
        let err = |text: &str| LoadedConfig::parse(text).and_then(|c| c.config.resolve(None, false).map(|_| ())).unwrap_err().to_string();
        assert!(err("seed = 1\n[gate]\ntheta_rad = 12.566370614359172").contains("gate: theta_rad"));
        assert!(err("seed = 1\n[pulse]\nshape = \"square\"").contains("pulse.shape"));
        assert!(err("[gate]\nname = \"N\"").contains("seed"));
        assert!(err("seed = 1\n[grid]\nn_steps = 10").contains("grid.n_steps"));
        let unknown = err("seed = 1\n[pulse]\nduration = 5.0");
        assert!(unknown.contains("duration") && unknown.contains("line"), "{unknown}");
        assert!(err("seed = 1\n[gate]\nname = \"Q\"").contains("gate.name"));
        let ok = LoadedConfig::parse("seed = 1\n[pulse]\nshape = \"square\"\nallow_non_smooth = true").unwrap();
        assert!(ok.config.resolve(Some(9), false).is_ok_and(|r| r.seed == 9));
    }
}
