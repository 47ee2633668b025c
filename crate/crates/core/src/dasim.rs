//! Two driven qubits in two coupled lossy cavities.
//!
//! The model lives on `[q1, q2, p1, p2]` with Hamiltonian (rotating frame)
//!
//! ```text
//! H = sum_l [ D_l a_l^dag a_l + (d_l/2) sz_l + g_l (a_l^dag sm_l + a_l sp_l) ]
//!     + J (a_1^dag a_2 + a_1 a_2^dag) + W sx_1
//! ```
//!
//! and photon loss `(a_l, kappa)` on both cavities. Only the cavities
//! dissipate. All rates are in units of `kappa`.
//!
//! [`run_analog`] propagates the full Lindblad equation exactly;
//! [`run_digital_analog`] repeats the Trotter step of [`build_da_schedule`].

use crate::error::{Error, Result};
use crate::linalg::{self, dagger, kron, CMatrix, C64};
use crate::liouville::{build_liouvillian, cavity_dissipator_map, JumpChannel, Propagator, SuperOperator};
use crate::metrics::expectation;
use crate::qcore::{bosonic_ops, embed, pauli_ops, DensityMatrix, HilbertLayout, PureState};
use crate::schedule::{Block, Schedule};
use crate::timeseries::TimeSeries;

pub use crate::timeseries::{sync_metric, SyncOutcome};

pub const Q1: &str = "q1";
pub const Q2: &str = "q2";
pub const P1: &str = "p1";
pub const P2: &str = "p2";

/// Observables recorded by both runners, in column order.
pub const OBSERVABLES: [&str; 8] = ["sx_q1", "sy_q1", "sz_q1", "sx_q2", "sy_q2", "sz_q2", "n_p1", "n_p2"];

/// Default Fock truncation; the weak drive keeps both cavities close to vacuum.
pub const DEFAULT_N_FOCK: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CavityModelParams {
    /// Qubit detunings from the drive, `delta_l`.
    pub qubit_detuning: [f64; 2],
    /// Cavity detunings from the drive, `Delta_l`.
    pub cavity_detuning: [f64; 2],
    /// Qubit-cavity couplings `g_l`.
    pub coupling: [f64; 2],
    /// Cavity-cavity hopping `J`.
    pub hopping: f64,
    /// Drive `Omega` on qubit 1.
    pub drive: f64,
    pub kappa: f64,
    pub n_fock: usize,
}

impl CavityModelParams {
    /// The synchronization example: `Delta = J = 10`, `delta = 0`, `g = 2`,
    /// `Omega = 5e-4`, all in units of `kappa = 1`.
    pub fn fig2() -> Self {
        Self {
            qubit_detuning: [0.0, 0.0],
            cavity_detuning: [10.0, 10.0],
            coupling: [2.0, 2.0],
            hopping: 10.0,
            drive: 5e-4,
            kappa: 1.0,
            n_fock: DEFAULT_N_FOCK,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa = {} must be > 0", self.kappa)));
        }
        if self.n_fock < 2 {
            return Err(Error::InvalidParameter(format!("n_fock = {} must be >= 2", self.n_fock)));
        }
        let all = self
            .qubit_detuning
            .iter()
            .chain(&self.cavity_detuning)
            .chain(&self.coupling)
            .chain([&self.hopping, &self.drive]);
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("cavity model parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<HilbertLayout> {
        cavity_layout(self.n_fock)
    }
}

pub fn cavity_layout(n_fock: usize) -> Result<HilbertLayout> {
    HilbertLayout::new([(Q1, 2), (Q2, 2), (P1, n_fock), (P2, n_fock)])
}

/// `(sqrt(0.9)|g> + sqrt(0.1)|e>) (x) (sqrt(0.7)|g> + sqrt(0.3)|e>) (x) |0>|0>`.
pub fn fig2_initial_state(n_fock: usize) -> Result<PureState> {
    PureState::product(&[
        PureState::qubit(Q1, C64::from(0.1f64.sqrt()), C64::from(0.9f64.sqrt()))?,
        PureState::qubit(Q2, C64::from(0.3f64.sqrt()), C64::from(0.7f64.sqrt()))?,
        PureState::fock(P1, n_fock, 0)?,
        PureState::fock(P2, n_fock, 0)?,
    ])
}

fn check_layout(p: &CavityModelParams, layout: &HilbertLayout) -> Result<()> {
    let expect = p.layout()?;
    if layout != &expect {
        return Err(Error::LayoutMismatch(format!("expected {expect}, got {layout}")));
    }
    Ok(())
}

pub fn build_cavity_hamiltonian(p: &CavityModelParams, layout: &HilbertLayout) -> Result<CMatrix> {
    p.validate()?;
    check_layout(p, layout)?;
    let s = pauli_ops();
    let b = bosonic_ops(p.n_fock)?;
    let a1 = embed(&b.a, P1, layout)?;
    let a2 = embed(&b.a, P2, layout)?;
    let mut h = linalg::zeros(layout.total_dim());
    for (l, (q, a)) in [(Q1, &a1), (Q2, &a2)].into_iter().enumerate() {
        let ad = dagger(a);
        let sm = embed(&s.s_minus, q, layout)?;
        let sp = embed(&s.s_plus, q, layout)?;
        let sz = embed(&s.sz, q, layout)?;
        h.scaled_add(C64::from(p.cavity_detuning[l]), &ad.dot(a));
        h.scaled_add(C64::from(p.qubit_detuning[l] / 2.0), &sz);
        h.scaled_add(C64::from(p.coupling[l]), &(ad.dot(&sm) + a.dot(&sp)));
    }
    h.scaled_add(C64::from(p.hopping), &(dagger(&a1).dot(&a2) + a1.dot(&dagger(&a2))));
    h.scaled_add(C64::from(p.drive), &embed(&s.sx, Q1, layout)?);
    Ok(h)
}

/// Full generator: the Hamiltonian above plus photon loss on both cavities.
pub fn cavity_liouvillian(p: &CavityModelParams) -> Result<SuperOperator> {
    let layout = p.layout()?;
    let h = build_cavity_hamiltonian(p, &layout)?;
    let b = bosonic_ops(p.n_fock)?;
    let channels =
        [JumpChannel::new(embed(&b.a, P1, &layout)?, p.kappa)?, JumpChannel::new(embed(&b.a, P2, &layout)?, p.kappa)?];
    build_liouvillian(&h, &channels, &layout)
}

/// Total excitation number `sum sp sm + sum a^dag a`.
pub fn excitation_number(layout: &HilbertLayout, n_fock: usize) -> Result<CMatrix> {
    let s = pauli_ops();
    let b = bosonic_ops(n_fock)?;
    let ee = s.s_plus.dot(&s.s_minus);
    Ok(embed(&ee, Q1, layout)? + embed(&ee, Q2, layout)? + embed(&b.n, P1, layout)? + embed(&b.n, P2, layout)?)
}

struct Observables {
    ops: Vec<CMatrix>,
}

impl Observables {
    fn new(layout: &HilbertLayout, n_fock: usize) -> Result<Self> {
        let s = pauli_ops();
        let b = bosonic_ops(n_fock)?;
        let mut ops = Vec::with_capacity(OBSERVABLES.len());
        for q in [Q1, Q2] {
            for op in [&s.sx, &s.sy, &s.sz] {
                ops.push(embed(op, q, layout)?);
            }
        }
        ops.push(embed(&b.n, P1, layout)?);
        ops.push(embed(&b.n, P2, layout)?);
        Ok(Self { ops })
    }

    fn record(&self, rho: &DensityMatrix) -> Result<Vec<f64>> {
        self.ops.iter().map(|op| expectation(rho, op)).collect()
    }
}

fn check_run_args(p: &CavityModelParams, t_total: f64, steps: usize, rho0: &DensityMatrix) -> Result<()> {
    p.validate()?;
    check_layout(p, rho0.layout())?;
    if !(t_total > 0.0 && t_total.is_finite()) {
        return Err(Error::InvalidParameter(format!("t_total = {t_total} must be > 0")));
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("need at least one step".into()));
    }
    Ok(())
}

/// Exact evolution sampled at `t_k = k t_total / n_samples`, `k = 0..=n_samples`.
pub fn run_analog(p: &CavityModelParams, t_total: f64, n_samples: usize, rho0: &DensityMatrix) -> Result<TimeSeries> {
    check_run_args(p, t_total, n_samples, rho0)?;
    let lv = cavity_liouvillian(p)?;
    let dt = t_total / n_samples as f64;
    let prop = Propagator::new(&lv, dt)?;
    let obs = Observables::new(rho0.layout(), p.n_fock)?;
    let mut ts = TimeSeries::new(&OBSERVABLES);
    let mut rho = rho0.clone();
    ts.push(0.0, obs.record(&rho)?)?;
    for k in 1..=n_samples {
        rho = prop.advance(&rho)?;
        ts.push(k as f64 * dt, obs.record(&rho)?)?;
    }
    ts.set_final_state(rho);
    Ok(ts)
}

/// Final state of the exact evolution at `t`.
pub fn analog_final_state(p: &CavityModelParams, t: f64, rho0: &DensityMatrix) -> Result<DensityMatrix> {
    Ok(analog_final_states(p, &[t], rho0)?.remove(0))
}

/// Exact final states at several times. Times that are whole multiples of
/// `1/kappa` share one propagator over that unit interval.
pub fn analog_final_states(p: &CavityModelParams, times: &[f64], rho0: &DensityMatrix) -> Result<Vec<DensityMatrix>> {
    p.validate()?;
    check_layout(p, rho0.layout())?;
    if let Some(t) = times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter(format!("time {t} must be > 0")));
    }
    let lv = cavity_liouvillian(p)?;
    let unit = 1.0 / p.kappa;
    let whole = |t: f64| {
        let k = (t / unit).round();
        (k >= 1.0 && (t - k * unit).abs() <= 1e-12 * t).then_some(k as usize)
    };
    let shared = if times.iter().any(|&t| whole(t).is_some()) { Some(Propagator::new(&lv, unit)?) } else { None };
    times
        .iter()
        .map(|&t| match (whole(t), &shared) {
            (Some(k), Some(prop)) => (0..k).try_fold(rho0.clone(), |rho, _| prop.advance(&rho)),
            _ => crate::liouville::propagate_expm(&lv, rho0, t),
        })
        .collect()
}

/// One first-order Trotter step of length `dt`, blocks in this order:
/// `U_q1`, `U_q2`, `U_q1p1`, `U_q2p2`, `U_p1p2`, `E_p1`, `E_p2`.
pub fn build_da_schedule(p: &CavityModelParams, dt: f64) -> Result<Schedule> {
    p.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be > 0")));
    }
    let s = pauli_ops();
    let b = bosonic_ops(p.n_fock)?;
    let local_q1 = s.sz.mapv(|z| z * (p.qubit_detuning[0] / 2.0)) + s.sx.mapv(|z| z * p.drive);
    let local_q2 = s.sz.mapv(|z| z * (p.qubit_detuning[1] / 2.0));
    // Jaynes-Cummings exchange on [q, p]: a^dag sm + a sp.
    let jc = kron(&s.s_minus, &b.a_dag) + kron(&s.s_plus, &b.a);
    let hop = kron(&b.a_dag, &b.a) + kron(&b.a, &b.a_dag);
    let blocks = vec![
        Block::unitary("U_q1", linalg::unitary_evolution(&local_q1, dt), &[Q1], dt),
        Block::unitary("U_q2", linalg::unitary_evolution(&local_q2, dt), &[Q2], dt),
        Block::unitary("U_q1p1", linalg::unitary_evolution(&jc.mapv(|z| z * p.coupling[0]), dt), &[Q1, P1], dt),
        Block::unitary("U_q2p2", linalg::unitary_evolution(&jc.mapv(|z| z * p.coupling[1]), dt), &[Q2, P2], dt),
        Block::unitary("U_p1p2", linalg::unitary_evolution(&hop.mapv(|z| z * p.hopping), dt), &[P1, P2], dt),
        Block::dissipative(
            "E_p1",
            cavity_dissipator_map(p.cavity_detuning[0], p.kappa, dt, p.n_fock)?.relabeled(&[P1])?,
        ),
        Block::dissipative(
            "E_p2",
            cavity_dissipator_map(p.cavity_detuning[1], p.kappa, dt, p.n_fock)?.relabeled(&[P2])?,
        ),
    ];
    Schedule::new(p.layout()?, dt, blocks)
}

/// Repeats the Trotter step `n_steps` times over `t_total`, sampling after
/// every step (and at `t = 0`).
pub fn run_digital_analog(
    p: &CavityModelParams,
    t_total: f64,
    n_steps: usize,
    rho0: &DensityMatrix,
) -> Result<TimeSeries> {
    check_run_args(p, t_total, n_steps, rho0)?;
    let dt = t_total / n_steps as f64;
    let schedule = build_da_schedule(p, dt)?;
    let obs = Observables::new(rho0.layout(), p.n_fock)?;
    let mut ts = TimeSeries::new(&OBSERVABLES);
    let mut rho = rho0.clone();
    ts.push(0.0, obs.record(&rho)?)?;
    for k in 1..=n_steps {
        rho = schedule.apply_step(&rho)?;
        ts.push(k as f64 * dt, obs.record(&rho)?)?;
    }
    ts.set_final_state(rho);
    Ok(ts)
}

/// Final state after `n_steps` Trotter steps over `t_total`, without sampling.
pub fn digital_final_state(
    p: &CavityModelParams,
    t_total: f64,
    n_steps: usize,
    rho0: &DensityMatrix,
) -> Result<DensityMatrix> {
    check_run_args(p, t_total, n_steps, rho0)?;
    let schedule = build_da_schedule(p, t_total / n_steps as f64)?;
    (0..n_steps).try_fold(rho0.clone(), |rho, _| schedule.apply_step(&rho))
}
