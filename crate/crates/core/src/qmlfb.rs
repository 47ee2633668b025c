//! Three-qubit learning protocol: an agent `A` and an environment `E` that
//! only talk through a driven register `R`, optionally with measurement
//! feedback on the register.
//!
//! One iteration of length `dt` applies the exchange gates `U_ER` and
//! `U_RA`, then the local dissipative map `exp(L_q dt)`, then (if enabled)
//! the feedback channel. The register is measured in the `sx` basis. On
//! `+` it is reset to `|->` (reward); on `-` it is reset to `|+>` and `A`
//! and `E` are rotated by `exp(-i pi sz / 2)` (punishment).
//!
//! Rates are in units of `gamma`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, dagger, kron, CMatrix, C64};
use crate::liouville::{build_liouvillian, DissipativeMap, JumpChannel, SuperOperator};
use crate::metrics::{expectation, mutual_information};
use crate::qcore::{embed, embed_many, pauli_ops, replace_subsystem, DensityMatrix, HilbertLayout, PureState};
use crate::schedule::{Block, Schedule};
use crate::timeseries::TimeSeries;

pub const AGENT: &str = "A";
pub const REGISTER: &str = "R";
pub const ENVIRONMENT: &str = "E";

/// Columns of the time series returned by [`run_qml`].
pub const OBSERVABLES: [&str; 9] =
    ["sx_A", "sy_A", "sz_A", "sx_E", "sy_E", "sz_E", "p_plus", "p_minus", "mutual_information"];

/// Branches lighter than this are reported as degenerate.
pub const BRANCH_FLOOR: f64 = 1e-12;

/// Default digitization density: iterations per unit of `gamma t`.
pub const ITERS_PER_UNIT_TIME: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct QubitModelParams {
    pub delta_a: f64,
    pub delta_r: f64,
    pub delta_e: f64,
    /// Drive on the register.
    pub omega: f64,
    /// Environment-register exchange.
    pub j1: f64,
    /// Register-agent exchange.
    pub j2: f64,
    pub gamma: f64,
    pub gamma_phi: f64,
}

impl QubitModelParams {
    /// Landscape preset: `gamma = 2 gamma_phi = 1`, `delta_R = delta_E = 0`,
    /// `J1 = 20`, `Omega = 0.01`. `delta_A` and `J2` are the swept axes.
    pub fn fig4() -> Self {
        Self { delta_a: 0.0, delta_r: 0.0, delta_e: 0.0, omega: 0.01, j1: 20.0, j2: 0.0, gamma: 1.0, gamma_phi: 0.5 }
    }

    /// Time-trace preset: all detunings 10, `J1 = J2 = 20`, `Omega = 0.1`.
    pub fn fig5() -> Self {
        Self { delta_a: 10.0, delta_r: 10.0, delta_e: 10.0, omega: 0.1, j1: 20.0, j2: 20.0, gamma: 1.0, gamma_phi: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma = {} must be > 0", self.gamma)));
        }
        if !(self.gamma_phi >= 0.0 && self.gamma_phi.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma_phi = {} must be >= 0", self.gamma_phi)));
        }
        let rest = [self.delta_a, self.delta_r, self.delta_e, self.omega, self.j1, self.j2];
        if rest.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("qubit model parameters must be finite".into()));
        }
        Ok(())
    }
}

/// `[A, R, E]`.
pub fn qubit_layout() -> HilbertLayout {
    HilbertLayout::new([(AGENT, 2), (REGISTER, 2), (ENVIRONMENT, 2)]).expect("fixed layout")
}

/// `|A=e, R=g, E=g>`, the initial state of both presets.
pub fn default_initial_state() -> PureState {
    PureState::product(&[PureState::excited(AGENT), PureState::ground(REGISTER), PureState::ground(ENVIRONMENT)])
        .expect("fixed layout")
}

/// `sp (x) sm + sm (x) sp` on two qubits.
fn exchange() -> CMatrix {
    let s = pauli_ops();
    kron(&s.s_plus, &s.s_minus) + kron(&s.s_minus, &s.s_plus)
}

/// Free evolution, drive and local decay/dephasing of all three qubits.
pub fn local_liouvillian(p: &QubitModelParams) -> Result<SuperOperator> {
    p.validate()?;
    let layout = qubit_layout();
    let s = pauli_ops();
    let mut h = embed(&s.sz, AGENT, &layout)?.mapv(|z| z * (p.delta_a / 2.0));
    h.scaled_add(C64::from(p.delta_e / 2.0), &embed(&s.sz, ENVIRONMENT, &layout)?);
    h.scaled_add(C64::from(p.delta_r / 2.0), &embed(&s.sz, REGISTER, &layout)?);
    h.scaled_add(C64::from(p.omega), &embed(&s.sx, REGISTER, &layout)?);
    let mut channels = Vec::with_capacity(6);
    for q in [AGENT, REGISTER, ENVIRONMENT] {
        channels.push(JumpChannel::new(embed(&s.s_minus, q, &layout)?, p.gamma)?);
        channels.push(JumpChannel::new(embed(&s.sz, q, &layout)?, p.gamma_phi)?);
    }
    build_liouvillian(&h, &channels, &layout)
}

/// One iteration without feedback: `U_ER`, `U_RA`, then `exp(L_q dt)`.
/// The exchange gates carry `+i` in the exponent.
pub fn build_qml_step(p: &QubitModelParams, dt: f64) -> Result<Schedule> {
    p.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be > 0")));
    }
    let x = exchange();
    // exp(+i J X dt) = exp(-i (-J X) dt)
    let u_er = linalg::unitary_evolution(&x.mapv(|z| z * -p.j1), dt);
    let u_ra = linalg::unitary_evolution(&x.mapv(|z| z * -p.j2), dt);
    let blocks = vec![
        Block::unitary("U_ER", u_er, &[REGISTER, ENVIRONMENT], dt),
        Block::unitary("U_RA", u_ra, &[REGISTER, AGENT], dt),
        Block::dissipative("L_q", DissipativeMap::from_liouvillian(&local_liouvillian(p)?, dt)?),
    ];
    Schedule::new(qubit_layout(), dt, blocks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackMode {
    /// Deterministic average over both outcomes.
    Averaged,
    /// One sampled outcome per iteration.
    Trajectory,
}

#[derive(Debug, Clone)]
pub struct FeedbackPolicy {
    /// Register observable whose upper eigenvector is the `+` outcome.
    pub observable: CMatrix,
    pub reward_reinit: PureState,
    pub punish_reinit: PureState,
    /// Local unitaries applied on a `-` outcome, keyed by label.
    pub punish_unitaries: Vec<(String, CMatrix)>,
    pub mode: FeedbackMode,
    pub seed: u64,
}

/// `exp(-i pi sz / 2) = diag(-i, i)`.
pub fn punish_rotation() -> CMatrix {
    linalg::unitary_evolution(&pauli_ops().sz, PI / 2.0)
}

impl Default for FeedbackPolicy {
    fn default() -> Self {
        Self {
            observable: pauli_ops().sx,
            reward_reinit: PureState::minus(REGISTER),
            punish_reinit: PureState::plus(REGISTER),
            punish_unitaries: vec![(AGENT.into(), punish_rotation()), (ENVIRONMENT.into(), punish_rotation())],
            mode: FeedbackMode::Averaged,
            seed: 0,
        }
    }
}

impl FeedbackPolicy {
    pub fn trajectory(seed: u64) -> Self {
        Self { mode: FeedbackMode::Trajectory, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.observable.dim() != (2, 2) || linalg::hermiticity_defect(&self.observable) > 1e-12 {
            return Err(Error::InvalidParameter("register observable must be a 2x2 Hermitian matrix".into()));
        }
        let e = linalg::eigvalsh(&self.observable);
        if (e[1] - e[0]).abs() < 1e-12 {
            return Err(Error::InvalidParameter("register observable is degenerate".into()));
        }
        for s in [&self.reward_reinit, &self.punish_reinit] {
            if s.layout().dims() != [2] {
                return Err(Error::InvalidParameter("reinitialization states must be single qubits".into()));
            }
        }
        for (label, u) in &self.punish_unitaries {
            if u.dim() != (2, 2) {
                return Err(Error::DimensionMismatch { expected: 2, found: u.nrows() });
            }
            let defect = linalg::max_abs(&(dagger(u).dot(u) - linalg::identity(2)));
            if defect > 1e-12 {
                return Err(Error::InvalidParameter(format!("punishment on '{label}' is not unitary ({defect:e})")));
            }
        }
        Ok(())
    }

    /// Projectors `(P+, P-)` on the register, embedded in `layout`.
    fn projectors(&self, layout: &HilbertLayout) -> Result<(CMatrix, CMatrix)> {
        let (_, vecs) = linalg::eigh(&self.observable);
        let proj = |k: usize| {
            let v = vecs.column(k);
            CMatrix::from_shape_fn((2, 2), |(i, j)| v[i] * v[j].conj())
        };
        // eigh sorts ascending: column 1 is the upper eigenvector.
        Ok((embed(&proj(1), REGISTER, layout)?, embed(&proj(0), REGISTER, layout)?))
    }

    fn punishment(&self, layout: &HilbertLayout) -> Result<CMatrix> {
        let mut u = linalg::identity(layout.total_dim());
        for (label, local) in &self.punish_unitaries {
            u = embed(local, label, layout)?.dot(&u);
        }
        Ok(u)
    }
}

/// One measurement branch. `state` is `None` when the branch probability is
/// below [`BRANCH_FLOOR`] and cannot be normalized.
#[derive(Debug, Clone)]
pub struct Branch {
    pub probability: f64,
    pub state: Option<DensityMatrix>,
}

impl Branch {
    pub fn is_degenerate(&self) -> bool {
        self.state.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct Measurement {
    pub plus: Branch,
    pub minus: Branch,
}

fn branch(rho: &DensityMatrix, proj: &CMatrix) -> Result<Branch> {
    let projected = proj.dot(rho.matrix()).dot(proj);
    let probability = linalg::trace(&projected).re.clamp(0.0, 1.0);
    let state = if probability < BRANCH_FLOOR {
        None
    } else {
        Some(DensityMatrix::from_evolved(projected.mapv(|z| z / probability), rho.layout().clone())?)
    };
    Ok(Branch { probability, state })
}

/// Projective measurement of the register in the eigenbasis of the policy's
/// observable.
pub fn measure_register(rho: &DensityMatrix, policy: &FeedbackPolicy) -> Result<Measurement> {
    policy.validate()?;
    let (pp, pm) = policy.projectors(rho.layout())?;
    Ok(Measurement { plus: branch(rho, &pp)?, minus: branch(rho, &pm)? })
}

/// Measurement of the register in the `sx` eigenbasis.
pub fn measure_register_x(rho: &DensityMatrix) -> Result<Measurement> {
    measure_register(rho, &FeedbackPolicy::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Reward,
    Punish,
}

fn reward(state: &DensityMatrix, policy: &FeedbackPolicy) -> Result<DensityMatrix> {
    replace_subsystem(state, REGISTER, &relabel(&policy.reward_reinit)?)
}

fn punish(state: &DensityMatrix, policy: &FeedbackPolicy) -> Result<DensityMatrix> {
    let reset = replace_subsystem(state, REGISTER, &relabel(&policy.punish_reinit)?)?;
    reset.conjugate(&policy.punishment(state.layout())?)
}

fn relabel(s: &PureState) -> Result<PureState> {
    PureState::new(s.amplitudes().clone(), HilbertLayout::new([(REGISTER, 2)])?)
}

/// Outcome-averaged feedback:
/// `p+ reward(rho+) + p- U punish(rho-) U^dagger`.
pub fn feedback_channel(rho: &DensityMatrix, policy: &FeedbackPolicy) -> Result<DensityMatrix> {
    let m = measure_register(rho, policy)?;
    let mut out = CMatrix::zeros((rho.dim(), rho.dim()));
    if let Some(s) = &m.plus.state {
        out.scaled_add(C64::from(m.plus.probability), reward(s, policy)?.matrix());
    }
    if let Some(s) = &m.minus.state {
        out.scaled_add(C64::from(m.minus.probability), punish(s, policy)?.matrix());
    }
    // Renormalize away the weight of a dropped degenerate branch.
    let tr = linalg::trace(&out).re;
    DensityMatrix::from_evolved(out.mapv(|z| z / tr), rho.layout().clone())
}

/// Feedback on a single sampled outcome.
pub fn feedback_sample<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    policy: &FeedbackPolicy,
    rng: &mut R,
) -> Result<(DensityMatrix, Outcome)> {
    let m = measure_register(rho, policy)?;
    let u: f64 = rng.random();
    let take_plus = match (&m.plus.state, &m.minus.state) {
        (Some(_), None) => true,
        (None, Some(_)) => false,
        (Some(_), Some(_)) => u < m.plus.probability / (m.plus.probability + m.minus.probability),
        (None, None) => return Err(Error::Numeric("both measurement branches vanish".into())),
    };
    if take_plus {
        Ok((reward(m.plus.state.as_ref().expect("checked"), policy)?, Outcome::Reward))
    } else {
        Ok((punish(m.minus.state.as_ref().expect("checked"), policy)?, Outcome::Punish))
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Branch probabilities of the register measurement taken before
    /// feedback (also recorded when feedback is off).
    pub p_plus: f64,
    pub p_minus: f64,
    pub outcome: Option<Outcome>,
    pub observables: BTreeMap<String, f64>,
    pub mutual_information: f64,
}

#[derive(Debug, Clone)]
pub struct QmlRun {
    pub series: TimeSeries,
    pub records: Vec<IterationRecord>,
}

struct Probe {
    ops: Vec<(&'static str, CMatrix)>,
}

impl Probe {
    fn new() -> Result<Self> {
        let layout = qubit_layout();
        let s = pauli_ops();
        let mut ops = Vec::new();
        for (q, names) in [(AGENT, ["sx_A", "sy_A", "sz_A"]), (ENVIRONMENT, ["sx_E", "sy_E", "sz_E"])] {
            for (name, op) in names.into_iter().zip([&s.sx, &s.sy, &s.sz]) {
                ops.push((name, embed(op, q, &layout)?));
            }
        }
        Ok(Self { ops })
    }

    fn read(&self, rho: &DensityMatrix) -> Result<Vec<(&'static str, f64)>> {
        self.ops.iter().map(|(n, op)| Ok((*n, expectation(rho, op)?))).collect()
    }
}

fn check_run(t_total: f64, n_iters: usize, rho0: &DensityMatrix) -> Result<f64> {
    if n_iters == 0 {
        return Err(Error::InvalidParameter("n_iters must be >= 1".into()));
    }
    if !(t_total > 0.0 && t_total.is_finite()) {
        return Err(Error::InvalidParameter(format!("t_total = {t_total} must be > 0")));
    }
    if rho0.layout() != &qubit_layout() {
        return Err(Error::LayoutMismatch(format!("expected {}, got {}", qubit_layout(), rho0.layout())));
    }
    Ok(t_total / n_iters as f64)
}

/// Iterates the protocol `n_iters` times over `t_total`. The series holds
/// the initial state at `t = 0` and the state after every iteration.
pub fn run_qml(
    p: &QubitModelParams,
    t_total: f64,
    n_iters: usize,
    feedback_on: bool,
    policy: &FeedbackPolicy,
    rho0: &DensityMatrix,
) -> Result<QmlRun> {
    let dt = check_run(t_total, n_iters, rho0)?;
    policy.validate()?;
    let step = build_qml_step(p, dt)?;
    let probe = Probe::new()?;
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut series = TimeSeries::new(&OBSERVABLES);
    let mut records = Vec::with_capacity(n_iters);

    let row = |rho: &DensityMatrix, pp: f64, pm: f64, mi: f64| -> Result<Vec<f64>> {
        let mut v: Vec<f64> = probe.read(rho)?.into_iter().map(|(_, x)| x).collect();
        v.extend([pp, pm, mi]);
        Ok(v)
    };
    let m0 = measure_register(rho0, policy)?;
    let mi0 = mutual_information(rho0, &[AGENT], &[ENVIRONMENT])?;
    series.push(0.0, row(rho0, m0.plus.probability, m0.minus.probability, mi0)?)?;

    let mut rho = rho0.clone();
    for k in 1..=n_iters {
        rho = step.apply_step(&rho)?;
        let m = measure_register(&rho, policy)?;
        let mut outcome = None;
        if feedback_on {
            rho = match policy.mode {
                FeedbackMode::Averaged => feedback_channel(&rho, policy)?,
                FeedbackMode::Trajectory => {
                    let (next, o) = feedback_sample(&rho, policy, &mut rng)?;
                    outcome = Some(o);
                    next
                }
            };
        }
        let mi = mutual_information(&rho, &[AGENT], &[ENVIRONMENT])?;
        let values = probe.read(&rho)?;
        series.push(k as f64 * dt, row(&rho, m.plus.probability, m.minus.probability, mi)?)?;
        records.push(IterationRecord {
            iteration: k,
            p_plus: m.plus.probability,
            p_minus: m.minus.probability,
            outcome,
            observables: values.into_iter().map(|(n, x)| (n.to_string(), x)).collect(),
            mutual_information: mi,
        });
    }
    series.set_final_state(rho);
    Ok(QmlRun { series, records })
}

/// Final state of [`run_qml`] without recording anything on the way.
pub fn final_state(
    p: &QubitModelParams,
    t_total: f64,
    n_iters: usize,
    feedback_on: bool,
    policy: &FeedbackPolicy,
    rho0: &DensityMatrix,
) -> Result<DensityMatrix> {
    let dt = check_run(t_total, n_iters, rho0)?;
    policy.validate()?;
    let step = build_qml_step(p, dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut rho = rho0.clone();
    for _ in 0..n_iters {
        rho = step.apply_step(&rho)?;
        if feedback_on {
            rho = match policy.mode {
                FeedbackMode::Averaged => feedback_channel(&rho, policy)?,
                FeedbackMode::Trajectory => feedback_sample(&rho, policy, &mut rng)?.0,
            };
        }
    }
    Ok(rho)
}

/// Everything a mutual-information sweep needs besides the two axes.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: QubitModelParams,
    pub t_total: f64,
    pub n_iters: usize,
    pub feedback_on: bool,
    pub policy: FeedbackPolicy,
    pub rho0: DensityMatrix,
}

impl SweepSpec {
    /// Final-time `I(A:E)` at one grid point.
    pub fn cell(&self, delta_a: f64, j2: f64) -> Result<f64> {
        let p = QubitModelParams { delta_a, j2, ..self.base.clone() };
        let rho = final_state(&p, self.t_total, self.n_iters, self.feedback_on, &self.policy, &self.rho0)?;
        mutual_information(&rho, &[AGENT], &[ENVIRONMENT])
    }
}

/// Final-time mutual information over `delta_a_grid x j2_grid`, indexed
/// `[i_delta_a][j_j2]`. Failed cells are `None`.
pub fn sweep_mutual_information(
    spec: &SweepSpec,
    delta_a_grid: &[f64],
    j2_grid: &[f64],
) -> Result<Vec<Vec<Option<f64>>>> {
    if delta_a_grid.is_empty() || j2_grid.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(delta_a_grid
        .iter()
        .map(|&da| {
            j2_grid
                .iter()
                .map(|&j2| match spec.cell(da, j2) {
                    Ok(v) => Some(v),
                    Err(e) => {
                        log::warn!("sweep cell delta_a={da}, j2={j2} failed: {e}");
                        None
                    }
                })
                .collect()
        })
        .collect())
}

/// `u_a` on the agent and `u_e` on the environment, lifted to `layout`.
pub fn embed_pair(u_a: &CMatrix, u_e: &CMatrix, layout: &HilbertLayout) -> Result<CMatrix> {
    embed_many(&kron(u_a, u_e), &[AGENT, ENVIRONMENT], layout)
}
