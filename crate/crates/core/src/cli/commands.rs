//! The subcommands. Each writes its data files through a [`Writer`].

use std::f64::consts::PI;

use serde::Serialize;

use super::config::Resolved;
use super::output::{num, opt_num, Part, Writer};
use crate::experiment_model::{
    apply_noise_ensemble, cnot_channel, cnot_experiment, decay_curve, default_cnot_inputs, derive_seed, echo_member,
    fit_per_gate_error, qpt_experiment, robustness_sweep, Channel, CountRecord, DecayFit, DecayPoint, McSummary,
    NoiseModel, QptOptions, Readout, SweepPoint,
};
use crate::gates::{self, canonicalize_phase, cnot_ideal, realize, realize_named, GateKind, GateSpec, NamedGate};
use crate::linalg::{self, CMatrix, CVector};
use crate::propagation::{holonomy_from_connection, TimeGrid};
use crate::pulses::{FrameConvention, LambdaParams, MovingFrame, PulseEnvelope, PulseShape};
use crate::state_algebra::{concurrence, global_phase_distance, state_fidelity, DensityOperator, JsonMatrix, PureState};
use crate::tomography::{self, exact_records, process_tomography, OPERATOR_LABELS};
use crate::{Error, Result};

fn phase_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    global_phase_distance(a, b).unwrap_or(f64::INFINITY)
}

fn readout_name(r: Readout) -> &'static str {
    match r {
        Readout::Exact => "exact",
        Readout::Counts { .. } => "counts",
    }
}

fn single_qubit(gate: &NamedGate, command: &str) -> Result<()> {
    if gate.logical_dim() != 2 {
        return Err(Error::Config(format!("gate: {command} needs a single-qubit gate, got {}", gate.label())));
    }
    Ok(())
}

/// Holonomy of one loop from its connection along the moving frame.
fn connection_block(spec: &GateSpec, grid: &TimeGrid) -> Result<CMatrix> {
    let frame = match spec.kind {
        GateKind::SingleQubit => MovingFrame::lambda(&spec.params, &spec.pulse, FrameConvention::Evolved),
        GateKind::Cnot => MovingFrame::register(&spec.pulse, FrameConvention::Evolved),
    };
    Ok(holonomy_from_connection(|t| frame.at(t), grid)?.logical().clone())
}

/// Ensemble channel of every loop of `gate`, composed in order.
pub fn noisy_channel(gate: &NamedGate, pulse: &PulseEnvelope, noise: &NoiseModel, grid: &TimeGrid, seed: u64) -> Result<Channel> {
    let mut total: Option<Channel> = None;
    for (k, spec) in gate.sequence(*pulse).iter().enumerate() {
        let ch = apply_noise_ensemble(spec, noise, grid, derive_seed(seed, 10 + k as u64))?;
        total = Some(match total {
            None => ch,
            Some(prev) => prev.then(&ch)?,
        });
    }
    Ok(total.expect("at least one loop"))
}

fn envelope_like(pulse: &PulseEnvelope, shape: PulseShape) -> Result<PulseEnvelope> {
    PulseEnvelope::with_override(shape, pulse.duration(), pulse.target_area())
}

fn register_labels() -> Vec<String> {
    ["0,up", "1,up", "0,down", "1,down"].iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Serialize)]
struct ShapeRow {
    shape: &'static str,
    distance_to_ideal: f64,
}

#[derive(Debug, Clone, Serialize)]
struct GateOutput {
    gate: String,
    pulse_shape: &'static str,
    n_steps: usize,
    ideal: JsonMatrix,
    propagated: JsonMatrix,
    connection: JsonMatrix,
    propagated_distance_to_ideal: f64,
    connection_distance_to_ideal: f64,
    leakage: f64,
    parallel_transport_residual: f64,
    shapes: Vec<ShapeRow>,
    shape_spread: f64,
    tolerance: f64,
    shape_independent: bool,
}

pub fn cmd_gate(r: &Resolved, w: &mut Writer) -> Result<()> {
    let ideal = r.gate.ideal().matrix().clone();
    let mut propagated: Option<CMatrix> = None;
    let mut connection: Option<CMatrix> = None;
    let (mut leakage, mut residual) = (0.0f64, 0.0f64);
    for spec in r.gate.sequence(r.pulse) {
        let res = realize(&spec, &r.grid)?;
        leakage = leakage.max(res.leakage);
        residual = residual.max(res.parallel_transport_residual.unwrap_or(0.0));
        let conn = connection_block(&spec, &r.grid)?;
        propagated = Some(propagated.map_or(res.logical().clone(), |p| res.logical() * p));
        connection = Some(connection.map_or(conn.clone(), |p| conn * p));
    }
    let propagated = propagated.expect("at least one loop");
    let connection = connection.expect("at least one loop");

    let mut shapes = Vec::new();
    let mut blocks = Vec::new();
    for shape in PulseShape::ALL {
        let u = realize_named(&r.gate, envelope_like(&r.pulse, shape)?, &r.grid)?;
        shapes.push(ShapeRow { shape: shape.name(), distance_to_ideal: phase_distance(&u, &ideal) });
        blocks.push(u);
    }
    let mut spread = 0.0f64;
    for i in 0..blocks.len() {
        for j in i + 1..blocks.len() {
            spread = spread.max(phase_distance(&blocks[i], &blocks[j]));
        }
    }

    let out = GateOutput {
        gate: r.gate.label(),
        pulse_shape: r.pulse.shape().name(),
        n_steps: r.grid.n_steps(),
        ideal: JsonMatrix::from(&ideal),
        propagated: JsonMatrix::from(&canonicalize_phase(&propagated)),
        connection: JsonMatrix::from(&canonicalize_phase(&connection)),
        propagated_distance_to_ideal: phase_distance(&propagated, &ideal),
        connection_distance_to_ideal: phase_distance(&connection, &ideal),
        leakage,
        parallel_transport_residual: residual,
        shape_spread: spread,
        shape_independent: spread < r.tolerance && shapes.iter().all(|s| s.distance_to_ideal < r.tolerance),
        shapes,
        tolerance: r.tolerance,
    };
    w.json("gate.json", &out)
}

#[derive(Debug, Clone, Serialize)]
struct QptOutput {
    gate: String,
    readout: &'static str,
    n_cycles: Option<u64>,
    trace_preserving: bool,
    process_fidelity: f64,
    process_fidelity_mc: Option<McSummary>,
    average_gate_fidelity: f64,
    condition_number: f64,
    converged: bool,
    trace_preservation_residual: f64,
    min_eigenvalue: f64,
    chi: JsonMatrix,
    chi_ideal: JsonMatrix,
}

fn counts_rows(counts: &[CountRecord], group: impl Fn(usize) -> String) -> Vec<Vec<String>> {
    counts
        .iter()
        .enumerate()
        .map(|(k, c)| {
            vec![
                group(k),
                c.setting.clone(),
                c.n_cycles.to_string(),
                c.signal_counts.to_string(),
                c.reference_counts.to_string(),
            ]
        })
        .collect()
}

pub fn cmd_qpt(r: &Resolved, w: &mut Writer) -> Result<()> {
    single_qubit(&r.gate, "qpt")?;
    let channel = noisy_channel(&r.gate, &r.pulse, &r.noise, &r.grid, r.seed)?;
    let options = QptOptions {
        readout: r.readout,
        mc_trials: r.mc_trials,
        constraint: r.constraint,
        initial_mixture: r.noise.initial_mixture,
    };
    let report = qpt_experiment(&channel, r.gate.ideal().matrix(), &r.calibration, &options, derive_seed(r.seed, 1))?;
    let labels: Vec<String> = OPERATOR_LABELS.iter().map(|s| s.to_string()).collect();
    let chi = report.chi.chi().clone();
    let ideal = report.chi_ideal.chi().clone();
    w.matrix_csv("chi_real.csv", &labels, &chi, Part::Real)?;
    w.matrix_csv("chi_imag.csv", &labels, &chi, Part::Imaginary)?;
    w.matrix_csv("chi_ideal_real.csv", &labels, &ideal, Part::Real)?;
    w.matrix_csv("chi_ideal_imag.csv", &labels, &ideal, Part::Imaginary)?;
    if !report.counts.is_empty() {
        let inputs = ["0", "1", "+", "-i"];
        let rows = counts_rows(&report.counts, |k| inputs[k / 3].to_string());
        w.csv("qpt_counts.csv", &["input", "setting", "n_cycles", "signal_counts", "reference_counts"], &rows)?;
    }
    let out = QptOutput {
        gate: r.gate.label(),
        readout: readout_name(r.readout),
        n_cycles: match r.readout {
            Readout::Counts { n_cycles } => Some(n_cycles),
            Readout::Exact => None,
        },
        trace_preserving: r.constraint == tomography::TraceConstraint::Enforced,
        process_fidelity: report.process_fidelity,
        process_fidelity_mc: report.process_fidelity_error,
        average_gate_fidelity: report.average_gate_fidelity,
        condition_number: report.condition_number,
        converged: report.converged,
        trace_preservation_residual: report.chi.trace_preservation_deviation(),
        min_eigenvalue: report.chi.min_eigenvalue(),
        chi: JsonMatrix::from(&chi),
        chi_ideal: JsonMatrix::from(&ideal),
    };
    w.json("qpt.json", &out)
}

#[derive(Debug, Clone, Serialize)]
struct CnotRow {
    label: String,
    fidelity: f64,
    fidelity_error: Option<f64>,
    concurrence: Option<f64>,
    concurrence_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct CnotOutput {
    readout: &'static str,
    electron_wait_s: f64,
    inputs: Vec<CnotRow>,
    bell_label: String,
    bell_rho: JsonMatrix,
}

pub fn cmd_cnot(r: &Resolved, w: &mut Writer) -> Result<()> {
    let channel = cnot_channel(&r.pulse, &r.noise, &r.grid, r.electron_wait, r.seed)?;
    let inputs = default_cnot_inputs();
    let outcomes = cnot_experiment(
        &channel,
        &inputs,
        &r.calibration,
        r.readout,
        r.mc_trials,
        r.noise.initial_mixture,
        derive_seed(r.seed, 2),
    )?;
    let rows: Vec<CnotRow> = outcomes
        .iter()
        .map(|o| CnotRow {
            label: o.label.clone(),
            fidelity: o.fidelity,
            fidelity_error: o.fidelity_error,
            concurrence: o.concurrence,
            concurrence_error: o.concurrence_error,
        })
        .collect();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            vec![
                format!("\"{}\"", row.label),
                num(row.fidelity),
                opt_num(row.fidelity_error),
                opt_num(row.concurrence),
                opt_num(row.concurrence_error),
            ]
        })
        .collect();
    w.csv(
        "cnot_fidelities.csv",
        &["input", "fidelity", "fidelity_error", "concurrence", "concurrence_error"],
        &table,
    )?;
    let bell = outcomes
        .iter()
        .find(|o| o.concurrence.is_some())
        .ok_or_else(|| Error::Estimator("no entangling input".into()))?;
    w.matrix_csv("bell_rho_real.csv", &register_labels(), bell.rho.matrix(), Part::Real)?;
    w.matrix_csv("bell_rho_imag.csv", &register_labels(), bell.rho.matrix(), Part::Imaginary)?;
    let out = CnotOutput {
        readout: readout_name(r.readout),
        electron_wait_s: r.electron_wait,
        bell_label: bell.label.clone(),
        bell_rho: JsonMatrix::from(bell.rho.matrix()),
        inputs: rows,
    };
    w.json("cnot.json", &out)
}

#[derive(Debug, Clone, Serialize)]
struct DecayCurve {
    initial: String,
    fit: DecayFit,
    points: Vec<DecayPoint>,
}

#[derive(Debug, Clone, Serialize)]
struct DecayOutput {
    gate: String,
    readout: &'static str,
    injected_epsilon: Option<f64>,
    curves: Vec<DecayCurve>,
}

pub fn cmd_decay(r: &Resolved, n_max: usize, initial: &[String], injected_epsilon: Option<f64>, w: &mut Writer) -> Result<()> {
    single_qubit(&r.gate, "decay")?;
    let ideal = r.gate.ideal().matrix().clone();
    let channel = match injected_epsilon {
        // Depolarizing probability 2ε gives F(n) = 1/2 + (1/2)(1 − 2ε)ⁿ.
        Some(eps) => Channel::unitary(&ideal).then(&Channel::depolarizing(2, 2.0 * eps))?,
        None => noisy_channel(&r.gate, &r.pulse, &r.noise, &r.grid, r.seed)?,
    };
    let mut curves = Vec::new();
    for (k, label) in initial.iter().enumerate() {
        let index = if label == "1" { 1 } else { 0 };
        let points = decay_curve(
            &channel,
            &ideal,
            n_max,
            &PureState::basis(2, index),
            &r.calibration,
            r.readout,
            r.mc_trials,
            derive_seed(r.seed, 20 + k as u64),
        )?;
        let fit = fit_per_gate_error(&points)?;
        let rows: Vec<Vec<String>> = points.iter().map(|p| vec![p.n.to_string(), num(p.fidelity), num(p.error)]).collect();
        w.csv(&format!("decay_{label}.csv"), &["n", "fidelity", "error"], &rows)?;
        curves.push(DecayCurve { initial: label.clone(), fit, points });
    }
    let out = DecayOutput {
        gate: r.gate.label(),
        readout: readout_name(r.readout),
        injected_epsilon,
        curves,
    };
    w.json("decay.json", &out)
}

#[derive(Debug, Clone, Serialize)]
struct SweepOutput {
    detuning_sigma_rad_per_s: f64,
    depolarizing_per_gate: f64,
    n_ensemble: usize,
    points: Vec<SweepPoint>,
}

pub fn cmd_sweep(r: &Resolved, values: &[f64], w: &mut Writer) -> Result<()> {
    let points = robustness_sweep(values, &r.noise, &r.pulse, &r.grid, derive_seed(r.seed, 3))?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| vec![num(p.rabi_error_fraction), num(p.geometric_fidelity), num(p.dynamic_fidelity)])
        .collect();
    w.csv("sweep.csv", &["rabi_error_fraction", "geometric_fidelity", "dynamic_fidelity"], &rows)?;
    let out = SweepOutput {
        detuning_sigma_rad_per_s: r.noise.detuning_sigma,
        depolarizing_per_gate: r.noise.depolarizing_per_gate,
        n_ensemble: r.noise.n_ensemble,
        points,
    };
    w.json("sweep.json", &out)
}

/// One line of the invariant table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: String,
    /// Measured deviation; `None` when the check could not run.
    pub value: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl CheckRow {
    fn measured(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value: Some(value),
            tolerance,
            passed: value.is_finite() && value < tolerance,
            message: None,
        }
    }

    pub fn failed(name: &str, message: String) -> Self {
        Self { name: name.into(), value: None, tolerance: 0.0, passed: false, message: Some(message) }
    }
}

fn guarded(name: &str, tol: f64, f: impl FnOnce() -> Result<f64>) -> CheckRow {
    match f() {
        Ok(v) => CheckRow::measured(name, v, tol),
        Err(e) => CheckRow::failed(name, e.to_string()),
    }
}

fn presets() -> [(NamedGate, LambdaParams); 3] {
    let p = |t: f64, f: f64| LambdaParams::new(t, f).expect("in range");
    [
        (NamedGate::N, p(3.0 * PI / 4.0, 0.0)),
        (NamedGate::A, p(3.0 * PI / 4.0, PI / 8.0)),
        (NamedGate::H, p(5.0 * PI / 8.0, 0.0)),
    ]
}

/// Runs the invariant suite against the resolved config.
pub fn invariant_suite(r: &Resolved) -> Vec<CheckRow> {
    let tol = r.tolerance;
    let grid = &r.grid;
    let pulse = r.pulse;
    let mut rows = Vec::new();

    rows.push(guarded("closed form vs propagation (N, A, H)", tol, || {
        let mut worst = 0.0f64;
        for (g, _) in presets() {
            worst = worst.max(phase_distance(&realize_named(&g, pulse, grid)?, g.ideal().matrix()));
        }
        Ok(worst)
    }));
    rows.push(guarded("closed form vs connection holonomy (N, A, H)", tol, || {
        let mut worst = 0.0f64;
        for (g, params) in presets() {
            let spec = GateSpec::single(g.label(), params, pulse);
            worst = worst.max(phase_distance(&connection_block(&spec, grid)?, g.ideal().matrix()));
        }
        Ok(worst)
    }));
    rows.push(guarded("leakage out of the logical subspace", tol, || {
        let mut worst = 0.0f64;
        for (g, _) in presets() {
            for spec in g.sequence(pulse) {
                worst = worst.max(realize(&spec, grid)?.leakage);
            }
        }
        Ok(worst)
    }));
    rows.push(guarded("parallel transport residual / peak Rabi", tol, || {
        let mut worst = 0.0f64;
        for spec in [GateSpec::not(pulse), GateSpec::hadamard(pulse), GateSpec::cnot(pulse)] {
            worst = worst.max(gates::parallel_transport_residual(&spec, grid)?);
        }
        Ok(worst)
    }));
    rows.push(guarded("N^2 = A^2 = H^2 = I", tol, || {
        let id = linalg::identity(2);
        Ok(presets()
            .iter()
            .map(|(g, _)| {
                let u = g.ideal().matrix().clone();
                linalg::max_abs_diff(&(&u * &u), &id)
            })
            .fold(0.0, f64::max))
    }));
    rows.push(guarded("N A = diag(e^-i pi/8, e^i pi/8)", tol, || {
        let z = CMatrix::from_diagonal(&CVector::from_vec(vec![linalg::cis(-PI / 8.0), linalg::cis(PI / 8.0)]));
        let na = NamedGate::N.ideal().matrix() * NamedGate::A.ideal().matrix();
        Ok(phase_distance(&na, &z))
    }));
    rows.push(guarded("register CNOT vs block-diag(X, I)", tol, || {
        let u = realize_named(&NamedGate::Cnot, pulse, grid)?;
        Ok(phase_distance(&u, cnot_ideal().matrix()))
    }));
    rows.push(guarded("Bell output concurrence", tol, || {
        let u = realize_named(&NamedGate::Cnot, pulse, grid)?;
        let input = default_cnot_inputs().remove(4).state;
        let out = PureState::normalized(&u * input.amplitudes())?;
        Ok((1.0 - concurrence(&out.to_density())?).abs())
    }));
    rows.push(guarded("shape independence of the configured gate", tol, || {
        let ideal = r.gate.ideal().matrix().clone();
        let mut worst = 0.0f64;
        for shape in PulseShape::ALL {
            let u = realize_named(&r.gate, envelope_like(&pulse, shape)?, grid)?;
            worst = worst.max(phase_distance(&u, &ideal));
        }
        Ok(worst)
    }));
    rows.push(guarded("exact process tomography 1 - F_P (N, A, H)", tol, || {
        let mut worst = 0.0f64;
        for (g, _) in presets() {
            let u = g.ideal();
            let est = process_tomography(|rho| rho.conjugate_by(&u), r.constraint)?;
            let ideal = tomography::ProcessMatrix::from_unitary(u.matrix())?;
            worst = worst.max(1.0 - tomography::process_fidelity(&est.chi, &ideal));
        }
        Ok(worst)
    }));
    rows.push(guarded("exact state tomography 1 - F (Bell)", tol, || {
        let bell = default_cnot_inputs().remove(4).state.evolve(&cnot_ideal())?;
        let rho = tomography::state_tomography(&exact_records(&bell.to_density(), 2)?, 2)?;
        Ok(1.0 - state_fidelity(&rho, &bell)?)
    }));
    rows.push(guarded("noisy channel trace preservation", tol, || {
        Ok(noisy_channel(&r.gate, &pulse, &r.noise, grid, r.seed)?.trace_preservation_deviation())
    }));
    rows.push(guarded("echo cancels static detuning", tol, || {
        let core = Channel::identity(2);
        let mut worst = 0.0f64;
        for delta in [-3e5, 1e4, 2e6] {
            let ch = echo_member(&core, r.electron_wait, delta)?;
            worst = worst.max(linalg::max_abs_diff(ch.superoperator(), core.superoperator()));
        }
        Ok(worst)
    }));
    rows.push(guarded("noisy outputs are density operators", tol, || {
        let ch = noisy_channel(&r.gate, &pulse, &r.noise, grid, r.seed)?;
        let mut worst = 0.0f64;
        for input in tomography::process_inputs() {
            let out = ch.apply_matrix(&input.to_density().into_matrix());
            let herm = (&out + out.adjoint()) * linalg::c(0.5, 0.0);
            worst = worst.max(DensityOperator::new(herm).map(|_| 0.0).unwrap_or(1.0));
        }
        Ok(worst)
    }));
    rows
}
