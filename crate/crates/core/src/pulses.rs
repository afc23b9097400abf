//! Control envelopes, the Λ-system and register coupling Hamiltonians, the
//! bright/dark basis and the moving frame of the computational subspace.
//!
//! Units: ħ = 1, energies in rad/s, times in seconds.
//!
//! The Rabi frequency of the `|j⟩ ↔ |a⟩` transition is the matrix element
//! `Ω_j = ⟨a|H|j⟩`. Fixing `Ω₁/Ω₀ = e^{iφ} tan θ` makes the state coupled to
//! `|a⟩` equal to `|B⟩ = cos θ|0⟩ + e^{-iφ} sin θ|1⟩` and the decoupled one
//! `|D⟩ = -e^{iφ} sin θ|0⟩ + cos θ|1⟩`; with this convention a loop of area π
//! produces the holonomy returned by [`crate::gates::ideal_holonomy`].

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, cis, CMatrix, CVector, I, ONE, ZERO};
use crate::state_algebra::{register_index, Nuclear, PureState, LEVEL_0, LEVEL_1, LEVEL_A};

/// Transition frequencies at 451 G, kept for reference only: the Hamiltonians
/// here are already in the rotating frame and these never enter the dynamics.
pub mod reference_frequencies {
    pub const ZERO_FIELD_SPLITTING_MHZ: f64 = 2870.0;
    pub const TRANSITION_MINUS_ONE_MHZ: f64 = 1601.0;
    pub const TRANSITION_PLUS_ONE_MHZ: f64 = 4141.0;
    pub const HYPERFINE_MINUS_ONE_MHZ: f64 = 14.15;
    pub const HYPERFINE_PLUS_ONE_MHZ: f64 = 13.25;
    pub const HYPERFINE_ZERO_FIELD_MHZ: f64 = 13.7;
    pub const FIELD_GAUSS: f64 = 451.0;
}

/// AWG timing resolution.
pub const AWG_SAMPLE_PERIOD_S: f64 = 2e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    Square,
    SineHalfPeriod,
    Blackman,
}

impl PulseShape {
    pub const ALL: [PulseShape; 3] = [PulseShape::Square, PulseShape::SineHalfPeriod, PulseShape::Blackman];

    /// Unnormalized profile on `u = t/τ ∈ [0, 1]`.
    fn profile(self, u: f64) -> f64 {
        match self {
            PulseShape::Square => 1.0,
            PulseShape::SineHalfPeriod => (PI * u).sin(),
            PulseShape::Blackman => (0.42 - 0.5 * (2.0 * PI * u).cos() + 0.08 * (4.0 * PI * u).cos()).max(0.0),
        }
    }

    /// `∫₀^u profile(u') du'`.
    fn profile_integral(self, u: f64) -> f64 {
        match self {
            PulseShape::Square => u,
            PulseShape::SineHalfPeriod => (1.0 - (PI * u).cos()) / PI,
            PulseShape::Blackman => {
                0.42 * u - 0.5 * (2.0 * PI * u).sin() / (2.0 * PI) + 0.08 * (4.0 * PI * u).sin() / (4.0 * PI)
            }
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, PulseShape::Square)
    }

    pub fn name(self) -> &'static str {
        match self {
            PulseShape::Square => "square",
            PulseShape::SineHalfPeriod => "sine_half_period",
            PulseShape::Blackman => "blackman",
        }
    }
}

/// Rabi envelope `Ω(t)` on `[0, τ]`, normalized so that `∫₀^τ Ω = area`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseEnvelope {
    shape: PulseShape,
    duration: f64,
    area: f64,
    sample_period: Option<f64>,
}

impl PulseEnvelope {
    /// A smooth envelope; the square shape is refused here.
    pub fn new(shape: PulseShape, duration: f64, area: f64) -> Result<Self> {
        if !shape.is_smooth() {
            return Err(Error::NonSmoothPulse);
        }
        Self::with_override(shape, duration, area)
    }

    /// Any shape, including the non-cyclic square envelope.
    pub fn with_override(shape: PulseShape, duration: f64, area: f64) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::OutOfRange { field: "duration", value: duration, expected: "> 0 s" });
        }
        if !(area >= 0.0 && area.is_finite()) {
            return Err(Error::OutOfRange { field: "area", value: area, expected: ">= 0 rad" });
        }
        Ok(Self { shape, duration, area, sample_period: None })
    }

    /// Sample-and-hold version of the envelope on a grid of `period`, as an AWG
    /// would play it. The duration is rounded to a whole number of samples and
    /// the held values are rescaled to keep the area.
    pub fn quantized(mut self, period: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::OutOfRange { field: "sample_period", value: period, expected: "> 0 s" });
        }
        let bins = (self.duration / period).round().max(1.0);
        self.duration = bins * period;
        self.sample_period = Some(period);
        Ok(self)
    }

    pub fn sine(duration: f64, area: f64) -> Result<Self> {
        Self::new(PulseShape::SineHalfPeriod, duration, area)
    }

    pub fn shape(&self) -> PulseShape {
        self.shape
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn target_area(&self) -> f64 {
        self.area
    }

    pub fn sample_period(&self) -> Option<f64> {
        self.sample_period
    }

    fn bins(&self) -> Option<(usize, f64)> {
        self.sample_period.map(|p| ((self.duration / p).round() as usize, p))
    }

    fn held_profile_sum(&self, bins: usize) -> f64 {
        (0..bins).map(|k| self.shape.profile((k as f64 + 0.5) / bins as f64)).sum()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let slack = 1e-12 * self.duration;
        if !(t >= -slack && t <= self.duration + slack) {
            return Err(Error::TimeOutOfRange { t, duration: self.duration });
        }
        Ok(())
    }

    /// Peak Rabi frequency after area normalization.
    pub fn peak(&self) -> f64 {
        match self.bins() {
            Some((bins, p)) => {
                let max = (0..bins).map(|k| self.shape.profile((k as f64 + 0.5) / bins as f64)).fold(0.0, f64::max);
                self.area * max / (self.held_profile_sum(bins) * p)
            }
            None => {
                let max = match self.shape {
                    PulseShape::Blackman => self.shape.profile(0.5),
                    _ => 1.0,
                };
                self.area * max / (self.shape.profile_integral(1.0) * self.duration)
            }
        }
    }

    /// `Ω(t)` in rad/s.
    pub fn value(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let t = t.clamp(0.0, self.duration);
        Ok(match self.bins() {
            Some((bins, p)) => {
                let k = ((t / p).floor() as usize).min(bins - 1);
                let u = (k as f64 + 0.5) / bins as f64;
                self.area * self.shape.profile(u) / (self.held_profile_sum(bins) * p)
            }
            None => {
                let u = t / self.duration;
                self.area * self.shape.profile(u) / (self.shape.profile_integral(1.0) * self.duration)
            }
        })
    }

    /// `α(t) = ∫₀^t Ω(t') dt'`.
    pub fn area_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let t = t.clamp(0.0, self.duration);
        Ok(match self.bins() {
            Some((bins, p)) => {
                let k = ((t / p).floor() as usize).min(bins - 1);
                let full: f64 = (0..k).map(|j| self.shape.profile((j as f64 + 0.5) / bins as f64)).sum();
                let partial = self.shape.profile((k as f64 + 0.5) / bins as f64) * (t / p - k as f64);
                self.area * (full + partial) / self.held_profile_sum(bins)
            }
            None => {
                if t >= self.duration {
                    return Ok(self.area);
                }
                self.area * self.shape.profile_integral(t / self.duration) / self.shape.profile_integral(1.0)
            }
        })
    }
}

/// Free-function form of [`PulseEnvelope::value`].
pub fn envelope_value(p: &PulseEnvelope, t: f64) -> Result<f64> {
    p.value(t)
}

/// Free-function form of [`PulseEnvelope::area_at`].
pub fn pulse_area(p: &PulseEnvelope, t: f64) -> Result<f64> {
    p.area_at(t)
}

/// Loop parameters `(θ, φ)` fixing `Ω₁/Ω₀ = e^{iφ} tan θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaParams {
    theta: f64,
    phi: f64,
}

impl LambdaParams {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..PI).contains(&theta) {
            return Err(Error::OutOfRange { field: "theta_rad", value: theta, expected: "in [0, pi)" });
        }
        if !(phi > -PI && phi <= PI) {
            return Err(Error::OutOfRange { field: "phi_rad", value: phi, expected: "in (-pi, pi]" });
        }
        Ok(Self { theta, phi })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// `Ω₁/Ω₀`; infinite at θ = π/2.
    pub fn rabi_ratio(&self) -> num_complex::Complex64 {
        cis(self.phi) * self.theta.tan()
    }
}

/// Bright and dark states of the Λ system in the basis `{|0⟩, |1⟩, |a⟩}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrightDarkFrame {
    pub bright: PureState,
    pub dark: PureState,
}

impl BrightDarkFrame {
    pub fn new(params: &LambdaParams) -> Self {
        let (s, co) = params.theta.sin_cos();
        let bright = CVector::from_vec(vec![c(co, 0.0), cis(-params.phi) * s, ZERO]);
        let dark = CVector::from_vec(vec![-cis(params.phi) * s, c(co, 0.0), ZERO]);
        Self {
            bright: PureState::normalized(bright).expect("unit by construction"),
            dark: PureState::normalized(dark).expect("unit by construction"),
        }
    }
}

/// Quasi-static perturbation of a drive: Rabi amplitude scaling `(1 + ε)` and
/// a qubit-splitting shift `δ` entering as `(δ/2)(|1⟩⟨1| − |0⟩⟨0|)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DrivePerturbation {
    pub rabi_error: f64,
    pub detuning: f64,
}

/// The Λ-system drive of a single spin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaDrive {
    pub params: LambdaParams,
    pub pulse: PulseEnvelope,
    pub perturbation: DrivePerturbation,
}

impl LambdaDrive {
    pub fn new(params: LambdaParams, pulse: PulseEnvelope) -> Self {
        Self { params, pulse, perturbation: DrivePerturbation::default() }
    }

    pub fn perturbed(mut self, perturbation: DrivePerturbation) -> Self {
        self.perturbation = perturbation;
        self
    }

    pub fn hamiltonian(&self, t: f64) -> Result<CMatrix> {
        let omega = self.pulse.value(t)? * (1.0 + self.perturbation.rabi_error);
        let mut h = coupling_matrix(&BrightDarkFrame::new(&self.params).bright, LEVEL_A, omega);
        let d = self.perturbation.detuning / 2.0;
        h[(LEVEL_0, LEVEL_0)] -= c(d, 0.0);
        h[(LEVEL_1, LEVEL_1)] += c(d, 0.0);
        Ok(h)
    }
}

/// The register drive: the bright state `(|0,↑⟩ − |1,↑⟩)/√2` couples to
/// `|a,↑⟩`; the `↓` manifold is not driven.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegisterDrive {
    pub pulse: PulseEnvelope,
    pub perturbation: DrivePerturbation,
}

impl RegisterDrive {
    pub fn new(pulse: PulseEnvelope) -> Self {
        Self { pulse, perturbation: DrivePerturbation::default() }
    }

    pub fn perturbed(mut self, perturbation: DrivePerturbation) -> Self {
        self.perturbation = perturbation;
        self
    }

    pub fn hamiltonian(&self, t: f64) -> Result<CMatrix> {
        let omega = self.pulse.value(t)? * (1.0 + self.perturbation.rabi_error);
        let mut h = coupling_matrix(&register_bright(), register_index(LEVEL_A, Nuclear::Up, 3), omega);
        let d = self.perturbation.detuning / 2.0;
        for n in [Nuclear::Up, Nuclear::Down] {
            h[(register_index(LEVEL_0, n, 3), register_index(LEVEL_0, n, 3))] -= c(d, 0.0);
            h[(register_index(LEVEL_1, n, 3), register_index(LEVEL_1, n, 3))] += c(d, 0.0);
        }
        Ok(h)
    }
}

/// Bright state of the register drive in the six-level basis.
pub fn register_bright() -> PureState {
    let mut v = CVector::zeros(6);
    v[register_index(LEVEL_0, Nuclear::Up, 3)] = c(FRAC_1_SQRT_2, 0.0);
    v[register_index(LEVEL_1, Nuclear::Up, 3)] = c(-FRAC_1_SQRT_2, 0.0);
    PureState::normalized(v).expect("unit by construction")
}

/// `Ω(|B⟩⟨a| + |a⟩⟨B|)`.
fn coupling_matrix(bright: &PureState, ancilla: usize, omega: f64) -> CMatrix {
    let dim = bright.dim();
    let b = bright.amplitudes();
    let mut h = CMatrix::zeros(dim, dim);
    for j in 0..dim {
        h[(j, ancilla)] += b[j] * omega;
        h[(ancilla, j)] += b[j].conj() * omega;
    }
    h
}

/// `H₁(t)` in the basis `{|0⟩, |1⟩, |a⟩}`.
pub fn h1_at(params: &LambdaParams, p: &PulseEnvelope, t: f64) -> Result<CMatrix> {
    LambdaDrive::new(*params, *p).hamiltonian(t)
}

/// `H₂(t)` in the basis `{|0,↑⟩, |1,↑⟩, |a,↑⟩, |0,↓⟩, |1,↓⟩, |a,↓⟩}`.
pub fn h2_at(p: &PulseEnvelope, t: f64) -> Result<CMatrix> {
    RegisterDrive::new(*p).hamiltonian(t)
}

/// How the bright-state leg of the moving frame is parametrized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameConvention {
    /// `|B(t)⟩ = e^{iα}[cos α |B⟩ − i sin α |a⟩]`: the Schrödinger-evolved
    /// bright state regauged to close at α = π. Satisfies parallel transport.
    #[default]
    Evolved,
    /// `|B(t)⟩ = e^{iα}[cos α |B⟩ + sin α |a⟩]`. Cyclic and spans the same
    /// connection, but is not parallel-transported by the drive.
    Literal,
}

/// Moving frame `ξ_l(t) = |l⟩ + ⟨B|l⟩(|B(t)⟩ − |B⟩)` of a set of logical
/// basis states: the dark component of each basis vector stays put while its
/// bright component follows `|B(t)⟩`.
#[derive(Debug, Clone)]
pub struct MovingFrame {
    bright: CVector,
    ancilla: CVector,
    logical: Vec<CVector>,
    pulse: PulseEnvelope,
    convention: FrameConvention,
}

impl MovingFrame {
    pub fn lambda(params: &LambdaParams, pulse: &PulseEnvelope, convention: FrameConvention) -> Self {
        Self {
            bright: BrightDarkFrame::new(params).bright.amplitudes().clone(),
            ancilla: crate::linalg::basis_vector(3, LEVEL_A),
            logical: vec![crate::linalg::basis_vector(3, LEVEL_0), crate::linalg::basis_vector(3, LEVEL_1)],
            pulse: *pulse,
            convention,
        }
    }

    /// Frame of the logical register `{|0,↑⟩, |1,↑⟩, |0,↓⟩, |1,↓⟩}` inside the
    /// six-level space.
    pub fn register(pulse: &PulseEnvelope, convention: FrameConvention) -> Self {
        Self {
            bright: register_bright().amplitudes().clone(),
            ancilla: crate::linalg::basis_vector(6, register_index(LEVEL_A, Nuclear::Up, 3)),
            logical: register_logical_basis().iter().map(|s| s.amplitudes().clone()).collect(),
            pulse: *pulse,
            convention,
        }
    }

    pub fn pulse(&self) -> &PulseEnvelope {
        &self.pulse
    }

    pub fn logical_basis(&self) -> Vec<PureState> {
        self.logical.iter().map(|v| PureState::new(v.clone()).expect("basis vectors are unit")).collect()
    }

    pub fn bright_at(&self, t: f64) -> Result<CVector> {
        let alpha = self.pulse.area_at(t)?;
        let leg = match self.convention {
            FrameConvention::Evolved => -I * alpha.sin(),
            FrameConvention::Literal => ONE * alpha.sin(),
        };
        Ok((&self.bright * c(alpha.cos(), 0.0) + &self.ancilla * leg) * cis(alpha))
    }

    pub fn at(&self, t: f64) -> Result<Vec<CVector>> {
        let moved = self.bright_at(t)? - &self.bright;
        Ok(self.logical.iter().map(|l| l + &moved * self.bright.dotc(l)).collect())
    }
}

/// `(ξ₀(t), ξ₁(t))` for the Λ system with the default frame convention.
pub fn moving_frame(params: &LambdaParams, p: &PulseEnvelope, t: f64) -> Result<(PureState, PureState)> {
    let frame = MovingFrame::lambda(params, p, FrameConvention::Evolved).at(t)?;
    let mut it = frame.into_iter();
    let xi0 = PureState::normalized(it.next().expect("two vectors"))?;
    let xi1 = PureState::normalized(it.next().expect("two vectors"))?;
    Ok((xi0, xi1))
}

/// `{|0,↑⟩, |1,↑⟩, |0,↓⟩, |1,↓⟩}` embedded in the six-level space.
pub fn register_logical_basis() -> Vec<PureState> {
    [(LEVEL_0, Nuclear::Up), (LEVEL_1, Nuclear::Up), (LEVEL_0, Nuclear::Down), (LEVEL_1, Nuclear::Down)]
        .iter()
        .map(|&(e, n)| PureState::basis(6, register_index(e, n, 3)))
        .collect()
}
