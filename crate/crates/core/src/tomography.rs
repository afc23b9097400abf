//! State tomography from Pauli expectations, process tomography over the
//! basis `{I, X, −iσ_y, Z}`, and maximum-likelihood projection onto the
//! physical cone.
//!
//! Pauli setting labels list one letter per qubit, first letter for the first
//! (slow) tensor factor: `"XZ"` measures `X ⊗ Z`.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::experiment_model::CountRecord;
use crate::linalg::{self, c, CMatrix, CVector, C64};
use crate::optimize::{bfgs, BfgsOptions};
use crate::state_algebra::{DensityOperator, JsonMatrix, PureState};
use crate::{Error, Result};

/// Weight of the trace-preservation penalty in the process fit.
pub const TP_PENALTY: f64 = 1e6;

/// Eigenvalue floor below which a linear estimate is considered unphysical.
const FEASIBLE_EIGENVALUE: f64 = -1e-10;

/// Lower bound on `1 − ⟨P⟩²` in the shot-noise variance, so near-pure
/// settings do not get unbounded weight.
const VARIANCE_FLOOR: f64 = 1e-2;

/// One measured Pauli expectation value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub setting: String,
    pub expectation: f64,
    /// `None` for exact (infinite-shot) data.
    pub shots: Option<u64>,
    /// Standard error of `expectation`; when absent it is derived from `shots`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_counts: Option<CountRecord>,
}

impl MeasurementRecord {
    pub fn new(setting: impl Into<String>, expectation: f64, shots: Option<u64>) -> Result<Self> {
        let setting = setting.into();
        pauli_operator(&setting)?;
        if !expectation.is_finite() || expectation.abs() > 1.0 + 1e-12 {
            return Err(Error::Infeasible(format!("<{setting}> = {expectation} is outside [-1, 1]")));
        }
        if shots == Some(0) {
            return Err(Error::Infeasible(format!("setting {setting} has zero shots")));
        }
        Ok(Self {
            setting,
            expectation: expectation.clamp(-1.0, 1.0),
            shots,
            std_error: None,
            raw_counts: None,
        })
    }

    pub fn exact(setting: impl Into<String>, expectation: f64) -> Result<Self> {
        Self::new(setting, expectation, None)
    }

    pub fn with_counts(mut self, counts: CountRecord) -> Self {
        self.raw_counts = Some(counts);
        self
    }

    pub fn with_std_error(mut self, std_error: f64) -> Self {
        self.std_error = Some(std_error);
        self
    }

    /// Variance used to weight this record in the likelihood, floored at
    /// `10⁻² / shots`; `None` for exact data.
    fn variance(&self) -> Option<f64> {
        let floor = self.shots.map(|n| VARIANCE_FLOOR / n as f64);
        if let (Some(s), Some(f)) = (self.std_error, floor) {
            return Some((s * s).max(f));
        }
        self.shots
            .map(|n| (1.0 - self.expectation * self.expectation).max(VARIANCE_FLOOR) / n as f64)
    }
}

fn single_pauli(letter: char) -> Option<CMatrix> {
    match letter {
        'I' => Some(linalg::identity(2)),
        'X' => Some(linalg::pauli_x()),
        'Y' => Some(linalg::pauli_y()),
        'Z' => Some(linalg::pauli_z()),
        _ => None,
    }
}

/// Tensor product of Paulis named by `label` (letters I, X, Y, Z).
pub fn pauli_operator(label: &str) -> Result<CMatrix> {
    if label.is_empty() {
        return Err(Error::UnknownSetting(label.to_string()));
    }
    let mut op = CMatrix::from_element(1, 1, linalg::ONE);
    for letter in label.chars() {
        let p = single_pauli(letter).ok_or_else(|| Error::UnknownSetting(label.to_string()))?;
        op = linalg::kron(&op, &p);
    }
    Ok(op)
}

/// The `4^n − 1` non-identity Pauli settings for `n_qubits` (1 or 2).
pub fn pauli_settings(n_qubits: usize) -> Result<Vec<String>> {
    if !(1..=2).contains(&n_qubits) {
        return Err(Error::OutOfRange {
            field: "n_qubits",
            value: n_qubits as f64,
            expected: "1 or 2",
        });
    }
    let letters = ['I', 'X', 'Y', 'Z'];
    let mut labels = vec![String::new()];
    for _ in 0..n_qubits {
        labels = labels
            .iter()
            .flat_map(|prefix| letters.iter().map(move |l| format!("{prefix}{l}")))
            .collect();
    }
    labels.retain(|l| l.chars().any(|ch| ch != 'I'));
    Ok(labels)
}

/// Exact expectations of every Pauli setting in `rho`.
pub fn exact_records(rho: &DensityOperator, n_qubits: usize) -> Result<Vec<MeasurementRecord>> {
    if rho.dim() != 1 << n_qubits {
        return Err(Error::DimensionMismatch {
            expected: 1 << n_qubits,
            got: rho.dim(),
        });
    }
    pauli_settings(n_qubits)?
        .into_iter()
        .map(|s| {
            let e = rho.expectation(&pauli_operator(&s)?);
            MeasurementRecord::exact(s, e.clamp(-1.0, 1.0))
        })
        .collect()
}

/// Checks the record set is complete and returns `(operator, record)` pairs
/// in canonical setting order.
fn indexed_records(records: &[MeasurementRecord], n_qubits: usize) -> Result<Vec<(CMatrix, MeasurementRecord)>> {
    let settings = pauli_settings(n_qubits)?;
    for r in records {
        if r.setting.len() != n_qubits || !settings.contains(&r.setting) {
            return Err(Error::UnknownSetting(r.setting.clone()));
        }
        if !r.expectation.is_finite() || r.expectation.abs() > 1.0 + 1e-12 {
            return Err(Error::Infeasible(format!("<{}> = {}", r.setting, r.expectation)));
        }
    }
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(settings.len());
    for s in &settings {
        let matches: Vec<&MeasurementRecord> = records.iter().filter(|r| &r.setting == s).collect();
        match matches.as_slice() {
            [] => missing.push(s.clone()),
            [one] => out.push((pauli_operator(s)?, (*one).clone())),
            _ => return Err(Error::Infeasible(format!("setting {s} appears more than once"))),
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteSettings { missing });
    }
    Ok(out)
}

/// `ρ = (I + Σ ⟨P⟩ P) / d`; Hermitian and unit trace but possibly not PSD.
pub fn linear_inversion(records: &[MeasurementRecord], n_qubits: usize) -> Result<CMatrix> {
    let d = 1usize << n_qubits;
    let mut rho = linalg::identity(d);
    for (p, r) in indexed_records(records, n_qubits)? {
        rho += p * c(r.expectation, 0.0);
    }
    Ok(rho * c(1.0 / d as f64, 0.0))
}

/// Result of a maximum-likelihood reconstruction.
#[derive(Debug, Clone)]
pub struct MleOutcome {
    pub state: DensityOperator,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_max_norm: f64,
    /// True when the linear estimate was already physical and returned as is.
    pub linear_estimate_feasible: bool,
}

/// `T†T` cone parameterization with lower-triangular `T`: `d` real diagonal
/// entries followed by the real and imaginary parts below the diagonal.
struct Cone {
    d: usize,
}

impl Cone {
    fn n_params(&self) -> usize {
        self.d * self.d
    }

    fn t_matrix(&self, x: &[f64]) -> CMatrix {
        let d = self.d;
        let mut t = CMatrix::zeros(d, d);
        let mut k = d;
        for i in 0..d {
            t[(i, i)] = c(x[i], 0.0);
            for j in 0..i {
                t[(i, j)] = c(x[k], x[k + 1]);
                k += 2;
            }
        }
        t
    }

    /// Parameters of a lower-triangular `T` with `T†T ≈ m` for PSD `m`.
    fn params_for(&self, m: &CMatrix) -> Vec<f64> {
        let d = self.d;
        let scale = linalg::trace(m).re.max(1e-300);
        let regular = m + linalg::identity(d) * c(1e-8 * scale, 0.0);
        // T†T = m with T lower ⇔ reversed-order Cholesky.
        let rev = CMatrix::from_fn(d, d, |i, j| regular[(d - 1 - i, d - 1 - j)]);
        let l = Cholesky::new(rev)
            .map(|ch| ch.l())
            .unwrap_or_else(|| linalg::identity(d) * c((scale / d as f64).sqrt(), 0.0));
        let upper = CMatrix::from_fn(d, d, |i, j| l[(d - 1 - i, d - 1 - j)]);
        let t = upper.adjoint();
        let mut x = vec![0.0; self.n_params()];
        let mut k = d;
        for i in 0..d {
            // Absorb the diagonal phase into the row so the diagonal is real.
            let phase = if t[(i, i)].norm() > 0.0 {
                t[(i, i)].conj() / t[(i, i)].norm()
            } else {
                linalg::ONE
            };
            x[i] = t[(i, i)].norm();
            for j in 0..i {
                let z = t[(i, j)] * phase;
                x[k] = z.re;
                x[k + 1] = z.im;
                k += 2;
            }
        }
        x
    }

    /// Chain rule: `dF = Re tr(Γ dM)` with `M = T†T` and Hermitian `Γ`.
    fn gradient(&self, gamma: &CMatrix, t: &CMatrix) -> Vec<f64> {
        let d = self.d;
        let k_mat = gamma * t.adjoint();
        let mut g = vec![0.0; self.n_params()];
        let mut k = d;
        for i in 0..d {
            g[i] = 2.0 * k_mat[(i, i)].re;
            for j in 0..i {
                g[k] = 2.0 * k_mat[(j, i)].re;
                g[k + 1] = -2.0 * k_mat[(j, i)].im;
                k += 2;
            }
        }
        g
    }

    /// Minimizes `objective(M) -> (F, Γ)` over `M = T†T` from `seed`.
    fn minimize<F>(&self, seed: &CMatrix, objective: F) -> (CMatrix, crate::optimize::Minimum)
    where
        F: Fn(&CMatrix) -> (f64, CMatrix),
    {
        self.minimize_from(self.params_for(seed), objective)
    }

    fn minimize_from<F>(&self, x0: Vec<f64>, objective: F) -> (CMatrix, crate::optimize::Minimum)
    where
        F: Fn(&CMatrix) -> (f64, CMatrix),
    {
        let f = |x: &[f64]| {
            let t = self.t_matrix(x);
            let m = t.adjoint() * &t;
            let (value, gamma) = objective(&m);
            let gamma = (&gamma + gamma.adjoint()) * c(0.5, 0.0);
            (value, self.gradient(&gamma, &t))
        };
        let min = bfgs(f, x0, BfgsOptions::default());
        let t = self.t_matrix(&min.x);
        (t.adjoint() * t, min)
    }
}

fn min_eigenvalue(m: &CMatrix) -> f64 {
    linalg::hermitian_eigen(m).0[0]
}

/// Maximum-likelihood projection of a raw Hermitian estimate onto the
/// density-operator cone, weighted by each record's shot-noise variance.
pub fn mle_project(rho_raw: &CMatrix, records: &[MeasurementRecord]) -> Result<MleOutcome> {
    let d = rho_raw.nrows();
    let n_qubits = d.trailing_zeros() as usize;
    if rho_raw.ncols() != d || !d.is_power_of_two() || !(1..=2).contains(&n_qubits) {
        return Err(Error::DimensionMismatch { expected: 4, got: d });
    }
    let indexed = indexed_records(records, n_qubits)?;

    let hermitian = (rho_raw + rho_raw.adjoint()) * c(0.5, 0.0);
    let tr = linalg::trace(&hermitian).re;
    if (tr - 1.0).abs() < 1e-10 && min_eigenvalue(&hermitian) >= FEASIBLE_EIGENVALUE {
        let state = DensityOperator::new(linalg::clamp_to_density(&hermitian))?;
        return Ok(MleOutcome {
            state,
            converged: true,
            iterations: 0,
            gradient_max_norm: 0.0,
            linear_estimate_feasible: true,
        });
    }

    // Weights normalized to unit mean keep the objective scale-free.
    let raw_weights: Vec<f64> = indexed
        .iter()
        .map(|(_, r)| r.variance().map_or(1.0, |v| 1.0 / v))
        .collect();
    let mean_w = raw_weights.iter().sum::<f64>() / raw_weights.len() as f64;
    let weights: Vec<f64> = raw_weights.iter().map(|w| w / mean_w).collect();

    let objective = |m: &CMatrix| {
        let n = linalg::trace(m).re;
        let rho = m * c(1.0 / n, 0.0);
        let mut value = (n - 1.0).powi(2);
        let mut g = CMatrix::zeros(d, d);
        for ((p, r), w) in indexed.iter().zip(&weights) {
            let resid = linalg::trace(&(p * &rho)).re - r.expectation;
            value += 0.5 * w * resid * resid;
            g += p * c(w * resid, 0.0);
        }
        let g_rho = linalg::trace(&(&g * &rho)).re;
        let gamma = g * c(1.0 / n, 0.0) + linalg::identity(d) * c(-g_rho / n + 2.0 * (n - 1.0), 0.0);
        (value, gamma)
    };
    let seed = linalg::clamp_to_density(&hermitian);
    let (m, min) = Cone { d }.minimize(&seed, objective);
    let state = DensityOperator::new(linalg::clamp_to_density(&m))?;
    Ok(MleOutcome {
        state,
        converged: min.converged,
        iterations: min.iterations,
        gradient_max_norm: min.gradient_max_norm,
        linear_estimate_feasible: false,
    })
}

/// Linear inversion followed by [`mle_project`], with optimizer diagnostics.
pub fn state_tomography_report(records: &[MeasurementRecord], n_qubits: usize) -> Result<MleOutcome> {
    let raw = linear_inversion(records, n_qubits)?;
    mle_project(&raw, records)
}

/// Reconstructs a 1- or 2-qubit density operator from Pauli expectations.
pub fn state_tomography(records: &[MeasurementRecord], n_qubits: usize) -> Result<DensityOperator> {
    Ok(state_tomography_report(records, n_qubits)?.state)
}

/// Operator basis `{I, X, −iσ_y, Z}` for single-qubit process matrices.
pub fn operator_basis() -> [CMatrix; 4] {
    [
        linalg::identity(2),
        linalg::pauli_x(),
        linalg::real_matrix(2, 2, &[0.0, -1.0, 1.0, 0.0]),
        linalg::pauli_z(),
    ]
}

pub const OPERATOR_LABELS: [&str; 4] = ["I", "X", "Y", "Z"];

/// Probe inputs `|0⟩, |1⟩, (|0⟩+|1⟩)/√2, (|0⟩−i|1⟩)/√2`.
pub fn process_inputs() -> [PureState; 4] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [
        PureState::basis(2, 0),
        PureState::basis(2, 1),
        PureState::new(CVector::from_vec(vec![c(h, 0.0), c(h, 0.0)])).expect("normalized"),
        PureState::new(CVector::from_vec(vec![c(h, 0.0), c(0.0, -h)])).expect("normalized"),
    ]
}

/// Whether the process fit enforces `Σ χ_mn E_n†E_m = I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceConstraint {
    #[default]
    Enforced,
    Free,
}

/// Single-qubit process matrix over [`operator_basis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JsonMatrix", into = "JsonMatrix")]
pub struct ProcessMatrix {
    chi: CMatrix,
}

impl ProcessMatrix {
    /// Validates Hermiticity (1e-9), positivity (−1e-8) and trace preservation (1e-6).
    pub fn new(chi: CMatrix) -> Result<Self> {
        let pm = Self::completely_positive(chi)?;
        let dev = pm.trace_preservation_deviation();
        if dev > 1e-6 {
            return Err(Error::Infeasible(format!("process matrix violates trace preservation by {dev:e}")));
        }
        Ok(pm)
    }

    /// Validates Hermiticity and positivity only.
    pub fn completely_positive(chi: CMatrix) -> Result<Self> {
        if chi.shape() != (4, 4) {
            return Err(Error::DimensionMismatch {
                expected: 4,
                got: chi.nrows(),
            });
        }
        let herm = linalg::hermitian_deviation(&chi);
        if herm > 1e-9 {
            return Err(Error::NotHermitian { deviation: herm });
        }
        let chi = (&chi + chi.adjoint()) * c(0.5, 0.0);
        let min = min_eigenvalue(&chi);
        if min < -1e-8 {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
        Ok(Self { chi })
    }

    /// `χ_mn = c_m c_n*` with `U = Σ c_m E_m`.
    pub fn from_unitary(u: &CMatrix) -> Result<Self> {
        if u.shape() != (2, 2) {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: u.nrows(),
            });
        }
        let coeffs: Vec<C64> = operator_basis()
            .iter()
            .map(|e| linalg::trace(&(e.adjoint() * u)) * 0.5)
            .collect();
        Self::new(CMatrix::from_fn(4, 4, |m, n| coeffs[m] * coeffs[n].conj()))
    }

    pub fn chi(&self) -> &CMatrix {
        &self.chi
    }

    /// `max |Σ χ_mn E_n†E_m − I|`.
    pub fn trace_preservation_deviation(&self) -> f64 {
        let e = operator_basis();
        let mut sum = CMatrix::zeros(2, 2);
        for m in 0..4 {
            for n in 0..4 {
                sum += e[n].adjoint() * &e[m] * self.chi[(m, n)];
            }
        }
        linalg::max_abs_diff(&sum, &linalg::identity(2))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.chi)
    }

    /// Largest imaginary part of any entry.
    pub fn max_imaginary(&self) -> f64 {
        self.chi.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    /// `ε(ρ) = Σ χ_mn E_m ρ E_n†`.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let e = operator_basis();
        let mut out = CMatrix::zeros(2, 2);
        for m in 0..4 {
            for n in 0..4 {
                out += &e[m] * rho * e[n].adjoint() * self.chi[(m, n)];
            }
        }
        out
    }
}

impl From<ProcessMatrix> for JsonMatrix {
    fn from(p: ProcessMatrix) -> Self {
        JsonMatrix::from(&p.chi)
    }
}

impl TryFrom<JsonMatrix> for ProcessMatrix {
    type Error = Error;
    fn try_from(j: JsonMatrix) -> Result<Self> {
        ProcessMatrix::completely_positive(CMatrix::try_from(j)?)
    }
}

/// Reconstructed process with fit diagnostics.
#[derive(Debug, Clone)]
pub struct ProcessEstimate {
    pub chi: ProcessMatrix,
    /// Unconstrained linear solution.
    pub linear: CMatrix,
    pub condition_number: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_max_norm: f64,
    pub trace_preservation_residual: f64,
}

/// Column `m + 4n` maps `χ_mn` to `vec(E_m ρ E_n†)` for each probe input.
fn process_design(inputs: &[CMatrix]) -> CMatrix {
    let e = operator_basis();
    let mut a = CMatrix::zeros(4 * inputs.len(), 16);
    for (j, rho) in inputs.iter().enumerate() {
        for m in 0..4 {
            for n in 0..4 {
                let col = linalg::vectorize(&(&e[m] * rho * e[n].adjoint()));
                a.view_mut((4 * j, m + 4 * n), (4, 1)).copy_from(&col);
            }
        }
    }
    a
}

fn tp_design() -> CMatrix {
    let e = operator_basis();
    let mut a = CMatrix::zeros(4, 16);
    for m in 0..4 {
        for n in 0..4 {
            let col = linalg::vectorize(&(e[n].adjoint() * &e[m]));
            a.view_mut((0, m + 4 * n), (4, 1)).copy_from(&col);
        }
    }
    a
}

/// χ from the (tomographed) outputs of the four [`process_inputs`].
pub fn chi_from_outputs(outputs: &[DensityOperator], constraint: TraceConstraint) -> Result<ProcessEstimate> {
    if outputs.len() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: outputs.len(),
        });
    }
    for o in outputs {
        if o.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: o.dim() });
        }
    }
    let inputs: Vec<CMatrix> = process_inputs().iter().map(|s| s.projector()).collect();
    let a = process_design(&inputs);
    let mut b = CVector::zeros(16);
    for (j, o) in outputs.iter().enumerate() {
        b.rows_mut(4 * j, 4).copy_from(&linalg::vectorize(o.matrix()));
    }
    let (v, condition_number) = linalg::solve_with_condition(&a, &b)?;
    let linear = linalg::unvectorize(&v, 4);
    let hermitian = (&linear + linear.adjoint()) * c(0.5, 0.0);

    let build = |chi: CMatrix, converged: bool, iterations: usize, gradient_max_norm: f64| -> Result<ProcessEstimate> {
        let pm = match constraint {
            TraceConstraint::Enforced => ProcessMatrix::new(chi)?,
            TraceConstraint::Free => ProcessMatrix::completely_positive(chi)?,
        };
        Ok(ProcessEstimate {
            trace_preservation_residual: pm.trace_preservation_deviation(),
            chi: pm,
            linear: linear.clone(),
            condition_number,
            converged,
            iterations,
            gradient_max_norm,
        })
    };

    if min_eigenvalue(&hermitian) >= FEASIBLE_EIGENVALUE {
        return build(hermitian, true, 0, 0.0);
    }

    let tp = tp_design();
    let id_vec = linalg::vectorize(&linalg::identity(2));
    let objective = |penalty: f64| {
        let (a, b, tp, id_vec) = (&a, &b, &tp, &id_vec);
        move |chi: &CMatrix| {
            let v = linalg::vectorize(chi);
            let r = a * &v - b;
            let mut value = r.norm_squared();
            let mut w = a.adjoint() * r;
            if penalty > 0.0 {
                let q = tp * &v - id_vec;
                value += penalty * q.norm_squared();
                w += tp.adjoint() * q * c(penalty, 0.0);
            }
            (value, linalg::unvectorize(&w, 4).adjoint() * c(2.0, 0.0))
        }
    };
    let cone = Cone { d: 4 };
    let seed = linalg::clamp_to_density(&hermitian);
    // The full penalty makes the problem stiff; walk up to it with warm starts.
    let schedule: &[f64] = match constraint {
        TraceConstraint::Enforced => &[1.0, 1e2, 1e4, TP_PENALTY],
        TraceConstraint::Free => &[0.0],
    };
    let mut x = cone.params_for(&seed);
    let mut iterations = 0;
    let mut last = None;
    for &penalty in schedule {
        let (chi, min) = cone.minimize_from(x, objective(penalty));
        iterations += min.iterations;
        x = min.x.clone();
        last = Some((chi, min));
    }
    let (chi, min) = last.expect("non-empty schedule");
    build(chi, min.converged, iterations, min.gradient_max_norm)
}

/// Process tomography of `gate_runner` from exact Pauli data on its outputs.
pub fn process_tomography<F>(gate_runner: F, constraint: TraceConstraint) -> Result<ProcessEstimate>
where
    F: Fn(&DensityOperator) -> Result<DensityOperator>,
{
    let outputs = process_inputs()
        .iter()
        .map(|s| {
            let out = gate_runner(&s.to_density())?;
            state_tomography(&exact_records(&out, 1)?, 1)
        })
        .collect::<Result<Vec<_>>>()?;
    chi_from_outputs(&outputs, constraint)
}

/// `F_P = Tr(χ_e χ_id)`.
pub fn process_fidelity(chi_e: &ProcessMatrix, chi_id: &ProcessMatrix) -> f64 {
    let v = linalg::trace(&(chi_e.chi() * chi_id.chi()));
    debug_assert!(v.im.abs() < 1e-10);
    v.re
}

/// `F̄ = (d F_P + 1)/(d + 1)`.
pub fn average_gate_fidelity(f_p: f64, d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::OutOfRange {
            field: "d",
            value: d as f64,
            expected: "d >= 2",
        });
    }
    if !(-1e-9..=1.0 + 1e-9).contains(&f_p) {
        return Err(Error::OutOfRange {
            field: "f_p",
            value: f_p,
            expected: "0 <= f_p <= 1",
        });
    }
    let f_p = f_p.clamp(0.0, 1.0);
    Ok((d as f64 * f_p + 1.0) / (d as f64 + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state_algebra::{uhlmann_fidelity, UnitaryOperator};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn records_of(rho: &DensityOperator, n: usize) -> Vec<MeasurementRecord> {
        exact_records(rho, n).unwrap()
    }

    #[test]
    fn settings_and_operators() {
        assert_eq!(pauli_settings(1).unwrap(), vec!["X", "Y", "Z"]);
        let two = pauli_settings(2).unwrap();
        assert_eq!(two.len(), 15);
        assert!(!two.contains(&"II".to_string()));
        let xz = pauli_operator("XZ").unwrap();
        assert!(linalg::max_abs_diff(&xz, &linalg::kron(&linalg::pauli_x(), &linalg::pauli_z())) < 1e-15);
        assert!(matches!(pauli_operator("XQ"), Err(Error::UnknownSetting(_))));
        assert!(pauli_settings(3).is_err());
    }

    #[test]
    fn ground_state_and_maximally_mixed() {
        let rho = state_tomography(
            &[
                MeasurementRecord::exact("Z", 1.0).unwrap(),
                MeasurementRecord::exact("X", 0.0).unwrap(),
                MeasurementRecord::exact("Y", 0.0).unwrap(),
            ],
            1,
        )
        .unwrap();
        assert!(linalg::max_abs_diff(rho.matrix(), &PureState::basis(2, 0).projector()) < 1e-12);

        let zeros: Vec<_> = pauli_settings(2)
            .unwrap()
            .into_iter()
            .map(|s| MeasurementRecord::exact(s, 0.0).unwrap())
            .collect();
        let rho = state_tomography(&zeros, 2).unwrap();
        assert!(linalg::max_abs_diff(rho.matrix(), DensityOperator::maximally_mixed(4).matrix()) < 1e-12);
    }

    #[test]
    fn bell_state_round_trip() {
        let bell = PureState::new(CVector::from_vec(vec![
            c(0.0, 0.0),
            c(FRAC_1_SQRT_2, 0.0),
            c(FRAC_1_SQRT_2, 0.0),
            c(0.0, 0.0),
        ]))
        .unwrap();
        let rho = state_tomography(&records_of(&bell.to_density(), 2), 2).unwrap();
        assert!(linalg::max_abs_diff(rho.matrix(), &bell.projector()) < 1e-8);
    }

    #[test]
    fn incomplete_and_infeasible_inputs() {
        let partial = vec![MeasurementRecord::exact("X", 0.0).unwrap()];
        match state_tomography(&partial, 1) {
            Err(Error::IncompleteSettings { missing }) => assert_eq!(missing, vec!["Y", "Z"]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(MeasurementRecord::exact("X", 1.5), Err(Error::Infeasible(_))));
        let mut dup = records_of(&DensityOperator::maximally_mixed(2), 1);
        dup.push(dup[0].clone());
        assert!(matches!(state_tomography(&dup, 1), Err(Error::Infeasible(_))));
    }

    #[test]
    fn infeasible_bloch_vector_lands_on_boundary_diagonal() {
        let recs: Vec<_> = ["X", "Y", "Z"]
            .iter()
            .map(|s| MeasurementRecord::exact(*s, 1.0).unwrap())
            .collect();
        let out = state_tomography_report(&recs, 1).unwrap();
        assert!(!out.linear_estimate_feasible);
        assert!(out.converged, "{out:?}");
        let r: Vec<f64> = ["X", "Y", "Z"]
            .iter()
            .map(|s| out.state.expectation(&pauli_operator(s).unwrap()))
            .collect();
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6, "{r:?}");
        for v in &r {
            assert!((v - 1.0 / 3f64.sqrt()).abs() < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn feasible_input_is_unchanged() {
        let psi = PureState::normalized(CVector::from_vec(vec![c(0.6, 0.1), c(-0.2, 0.7)])).unwrap();
        let rho = DensityOperator::mixture(&[(0.7, &psi.to_density()), (0.3, &DensityOperator::maximally_mixed(2))]).unwrap();
        let recs = records_of(&rho, 1);
        let out = mle_project(&linear_inversion(&recs, 1).unwrap(), &recs).unwrap();
        assert!(out.linear_estimate_feasible);
        assert!(linalg::max_abs_diff(out.state.matrix(), rho.matrix()) < 1e-8);
    }

    #[test]
    fn mle_output_is_physical_for_arbitrary_input() {
        let settings = pauli_settings(2).unwrap();
        let recs: Vec<_> = settings
            .iter()
            .enumerate()
            .map(|(k, s)| MeasurementRecord::new(s.clone(), ((k as f64) * 1.7).sin(), Some(1000)).unwrap())
            .collect();
        let raw = linear_inversion(&recs, 2).unwrap();
        let out = mle_project(&raw, &recs).unwrap();
        assert!(out.state.eigenvalues()[0] >= -1e-8);
        assert!((linalg::trace(out.state.matrix()).re - 1.0).abs() < 1e-9);
    }

    #[test]
    fn known_process_matrices() {
        let id = ProcessMatrix::from_unitary(&linalg::identity(2)).unwrap();
        assert!((id.chi()[(0, 0)].re - 1.0).abs() < 1e-15);
        let not = ProcessMatrix::from_unitary(&linalg::pauli_x()).unwrap();
        assert!((not.chi()[(1, 1)].re - 1.0).abs() < 1e-15);
        assert!(process_fidelity(&not, &id).abs() < 1e-15);
        assert!((process_fidelity(&not, &not) - 1.0).abs() < 1e-15);

        let h = ProcessMatrix::from_unitary(&linalg::hadamard()).unwrap();
        for (m, n) in [(1, 1), (3, 3), (1, 3), (3, 1)] {
            assert!((h.chi()[(m, n)] - c(0.5, 0.0)).norm() < 1e-15);
        }
        assert!(h.max_imaginary() < 1e-15);
    }

    #[test]
    fn process_tomography_of_unitaries() {
        for u in [linalg::identity(2), linalg::pauli_x(), linalg::hadamard()] {
            let unitary = UnitaryOperator::new(u.clone()).unwrap();
            let est = process_tomography(|rho| rho.conjugate_by(&unitary), TraceConstraint::Enforced).unwrap();
            let ideal = ProcessMatrix::from_unitary(&u).unwrap();
            assert!(process_fidelity(&est.chi, &ideal) > 1.0 - 1e-10);
            assert!(est.trace_preservation_residual < 1e-10);
            assert!(est.condition_number < 1e3);
        }
    }

    #[test]
    fn process_mle_repairs_unphysical_outputs() {
        // Slightly overshooting outputs of the NOT gate push χ out of the cone.
        let outputs: Vec<DensityOperator> = process_inputs()
            .iter()
            .map(|s| {
                let u = UnitaryOperator::new(linalg::pauli_x()).unwrap();
                let out = s.to_density().conjugate_by(&u).unwrap();
                let noisy = out.matrix() * c(0.98, 0.0) + linalg::identity(2) * c(0.01, 0.0);
                DensityOperator::new(noisy).unwrap()
            })
            .collect();
        let mut shifted = outputs.clone();
        shifted[2] = DensityOperator::new(
            outputs[2].matrix() + linalg::pauli_y() * c(0.05, 0.0),
        )
        .unwrap();
        let est = chi_from_outputs(&shifted, TraceConstraint::Enforced).unwrap();
        assert!(est.chi.min_eigenvalue() >= -1e-8);
        assert!(est.trace_preservation_residual < 1e-6, "{}", est.trace_preservation_residual);
        let free = chi_from_outputs(&shifted, TraceConstraint::Free).unwrap();
        assert!(free.chi.min_eigenvalue() >= -1e-8);
    }

    #[test]
    fn average_fidelity_formula() {
        assert!((average_gate_fidelity(1.0, 2).unwrap() - 1.0).abs() < 1e-15);
        assert!((average_gate_fidelity(0.965, 2).unwrap() - 0.97667).abs() < 1e-5);
        assert!((average_gate_fidelity(0.25, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!(average_gate_fidelity(1.2, 2).is_err());
        assert!(average_gate_fidelity(0.5, 1).is_err());
    }

    #[test]
    fn uhlmann_matches_tomographed_state() {
        let psi = PureState::normalized(CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.3)])).unwrap();
        let rho = state_tomography(&records_of(&psi.to_density(), 1), 1).unwrap();
        assert!(uhlmann_fidelity(&rho, &psi.to_density()).unwrap() > 1.0 - 1e-10);
    }
}
