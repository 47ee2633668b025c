//! Runs a resolved configuration and assembles its CSV files.
//!
//! Independent pieces (grid cells, fidelity points, the runs of a pair)
//! are spread over a worker pool; results are placed by index, so the
//! output does not depend on the worker count.

use rayon::prelude::*;

use qsync::dasim::{self, analog_final_states, digital_final_state, fig2_initial_state};
use qsync::linalg::{self, CMatrix};
use qsync::metrics::fidelity;
use qsync::qcore::{pauli_ops, DensityMatrix, PureState};
use qsync::qmlfb::{self, default_initial_state, run_qml, FeedbackPolicy, SweepSpec, AGENT, ENVIRONMENT, REGISTER};
use qsync::timeseries::TimeSeries;

use crate::artifact::CsvArtifact;
use crate::config::{Axis, ExperimentConfig, ModelKind, PunishUnitary, QubitStateName, SweepKind};
use crate::error::{CliError, Result};

pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<CsvArtifact>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| match (cfg.model, cfg.sweep.kind) {
        (ModelKind::Cavity, SweepKind::None) => cavity_series(cfg),
        (ModelKind::Cavity, SweepKind::Fidelity) => fidelity_sweep(cfg),
        (ModelKind::Qubits, SweepKind::None) => qubit_series(cfg),
        (ModelKind::Qubits, SweepKind::MutualInformation) => information_sweep(cfg),
        (model, kind) => Err(CliError::config(format!("no experiment for {model:?} with sweep {kind:?}"))),
    })
}

fn series_artifact(cfg: &ExperimentConfig, file: String, run: &str, ts: &TimeSeries, extra: &[String]) -> CsvArtifact {
    let mut header = vec!["t"];
    header.extend(ts.names().iter().map(String::as_str));
    let mut a = CsvArtifact::new(file, &header);
    a.describe(cfg, run, extra);
    for (t, row) in ts.times().iter().zip(ts.rows()) {
        let mut r = vec![Some(*t)];
        r.extend(row.iter().map(|&x| Some(x)));
        a.push_row(r);
    }
    a
}

fn cavity_series(cfg: &ExperimentConfig) -> Result<Vec<CsvArtifact>> {
    let p = &cfg.cavity;
    let rho0 = fig2_initial_state(p.n_fock)?.to_density();
    let n = cfg.total_steps();
    let (analog, digital) = rayon::join(
        || dasim::run_analog(p, cfg.t_total, n, &rho0),
        || dasim::run_digital_analog(p, cfg.t_total, n, &rho0),
    );
    let (analog, digital) = (analog?, digital?);
    let steps = format!("samples: {} over t_total = {}", n, cfg.t_total);
    Ok(vec![
        series_artifact(
            cfg,
            format!("{}_analog.csv", cfg.output.prefix),
            "analog",
            &analog,
            std::slice::from_ref(&steps),
        ),
        series_artifact(cfg, format!("{}_digital.csv", cfg.output.prefix), "digital", &digital, &[steps]),
    ])
}

/// Fidelity of the digital final state against the exact one, for every
/// `(kappa_t, n)` with `n` Trotter steps per unit of `kappa t`.
fn fidelity_sweep(cfg: &ExperimentConfig) -> Result<Vec<CsvArtifact>> {
    let p = &cfg.cavity;
    let rho0 = fig2_initial_state(p.n_fock)?.to_density();
    let exact = analog_final_states(p, &cfg.sweep.kappa_t, &rho0)?;
    let cells: Vec<(usize, f64, usize)> = cfg
        .sweep
        .kappa_t
        .iter()
        .enumerate()
        .flat_map(|(i, &kt)| cfg.sweep.n.iter().map(move |&n| (i, kt, n)))
        .collect();
    let values: Vec<(usize, Option<f64>)> = cells
        .par_iter()
        .map(|&(i, kt, n)| {
            let steps = ((n as f64 * kt).round() as usize).max(1);
            let f = digital_final_state(p, kt, steps, &rho0).and_then(|d| fidelity(&exact[i], &d));
            match f {
                Ok(f) => (steps, Some(f)),
                Err(e) => {
                    log::warn!("fidelity at kappa_t={kt}, n={n} failed: {e}");
                    (steps, None)
                }
            }
        })
        .collect();
    let missing = values.iter().filter(|(_, v)| v.is_none()).count();
    let mut a =
        CsvArtifact::new(format!("{}_fidelity.csv", cfg.output.prefix), &["kappa_t", "n", "total_steps", "fidelity"]);
    a.describe(
        cfg,
        "fidelity",
        &["n counts Trotter steps per unit of kappa t".to_string(), format!("missing cells: {missing}")],
    );
    for (&(_, kt, n), (steps, f)) in cells.iter().zip(values) {
        a.push_row(vec![Some(kt), Some(n as f64), Some(steps as f64), f]);
    }
    Ok(vec![a])
}

fn single_qubit(name: QubitStateName) -> PureState {
    match name {
        QubitStateName::Plus => PureState::plus(REGISTER),
        QubitStateName::Minus => PureState::minus(REGISTER),
        QubitStateName::Excited => PureState::excited(REGISTER),
        QubitStateName::Ground => PureState::ground(REGISTER),
    }
}

/// The feedback policy described by a configuration.
pub fn policy_of(cfg: &ExperimentConfig) -> FeedbackPolicy {
    let fb = &cfg.feedback;
    let s = pauli_ops();
    let observable: CMatrix = match fb.measure {
        Axis::X => s.sx,
        Axis::Y => s.sy,
        Axis::Z => s.sz,
    };
    let u = match fb.punish_unitary {
        PunishUnitary::RotateZPi => qmlfb::punish_rotation(),
        PunishUnitary::Identity => linalg::identity(2),
    };
    FeedbackPolicy {
        observable,
        reward_reinit: single_qubit(fb.reward_reinit),
        punish_reinit: single_qubit(fb.punish_reinit),
        punish_unitaries: vec![(AGENT.to_string(), u.clone()), (ENVIRONMENT.to_string(), u)],
        mode: fb.mode,
        seed: fb.seed,
    }
}

fn feedback_label(on: bool) -> &'static str {
    if on {
        "feedback_on"
    } else {
        "feedback_off"
    }
}

fn qubit_series(cfg: &ExperimentConfig) -> Result<Vec<CsvArtifact>> {
    let policy = policy_of(cfg);
    let rho0: DensityMatrix = default_initial_state().to_density();
    let n = cfg.total_steps();
    let flags = cfg.feedback.enabled.flags();
    let runs: Vec<_> = flags.par_iter().map(|&on| run_qml(&cfg.qubits, cfg.t_total, n, on, &policy, &rho0)).collect();
    let mut out = Vec::with_capacity(runs.len());
    for (&on, run) in flags.iter().zip(runs) {
        let run = run?;
        let label = feedback_label(on);
        out.push(series_artifact(
            cfg,
            format!("{}_{label}.csv", cfg.output.prefix),
            label,
            &run.series,
            &[format!("iterations: {} over t_total = {}", n, cfg.t_total)],
        ));
    }
    Ok(out)
}

fn information_sweep(cfg: &ExperimentConfig) -> Result<Vec<CsvArtifact>> {
    let policy = policy_of(cfg);
    let rho0 = default_initial_state().to_density();
    let deltas = cfg.sweep.delta_a.values();
    let j2s = cfg.sweep.j2.values();
    let cells: Vec<(f64, f64)> = deltas.iter().flat_map(|&d| j2s.iter().map(move |&j| (d, j))).collect();
    let mut out = Vec::new();
    for on in cfg.feedback.enabled.flags() {
        let spec = SweepSpec {
            base: cfg.qubits.clone(),
            t_total: cfg.t_total,
            n_iters: cfg.total_steps(),
            feedback_on: on,
            policy: policy.clone(),
            rho0: rho0.clone(),
        };
        let values: Vec<Option<f64>> = cells
            .par_iter()
            .map(|&(d, j)| match spec.cell(d, j) {
                Ok(v) => Some(v),
                Err(e) => {
                    log::warn!("mutual information at delta_a={d}, j2={j} failed: {e}");
                    None
                }
            })
            .collect();
        let missing = values.iter().filter(|v| v.is_none()).count();
        let label = feedback_label(on);
        let mut a =
            CsvArtifact::new(format!("{}_mi_{label}.csv", cfg.output.prefix), &["delta_a", "j2", "mutual_information"]);
        a.describe(
            cfg,
            label,
            &[
                format!("grid: {} delta_a x {} j2, final-time values", deltas.len(), j2s.len()),
                format!("missing cells: {missing}"),
            ],
        );
        for (&(d, j), v) in cells.iter().zip(values) {
            a.push_row(vec![Some(d), Some(j), v]);
        }
        out.push(a);
    }
    Ok(out)
}

/// Reshapes a sweep artifact into `[i_delta_a][j_j2]`.
pub fn information_matrix(a: &CsvArtifact, n_delta: usize, n_j2: usize) -> Option<Vec<Vec<Option<f64>>>> {
    let col = a.column("mutual_information")?;
    (col.len() == n_delta * n_j2).then(|| col.chunks(n_j2).map(<[_]>::to_vec).collect())
}
