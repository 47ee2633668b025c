//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.
//!
//! Run with `cargo test -p qsync-cli --test acceptance`.

use std::f64::consts::{LN_2, PI};
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qsync::dasim::{self, build_da_schedule, CavityModelParams};
use qsync::linalg::{self, kron, CMatrix, C64};
use qsync::liouville::{build_liouvillian, cavity_dissipator_map, propagate_expm, propagate_rk4, JumpChannel};
use qsync::metrics::{fidelity, mutual_information, trace_distance, von_neumann_entropy};
use qsync::qcore::{bosonic_ops, embed, embed_many, partial_trace, pauli_ops, DensityMatrix, HilbertLayout, PureState};
use qsync::qmlfb::{
    self, build_qml_step, default_initial_state, feedback_channel, run_qml, FeedbackPolicy, QubitModelParams,
};
use qsync::random::random_density_matrix;
use qsync::timeseries::sync_metric;
use qsync_cli::config::{resolve, Experiment};
use qsync_cli::experiments::information_matrix;
use qsync_cli::run_experiment;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn sets(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

// Fidelity curves for both time scales, shared by the first two criteria.
struct FidelityCurves {
    rows: Vec<(f64, usize, f64)>,
    seconds: f64,
}

impl FidelityCurves {
    fn compute() -> Self {
        let start = Instant::now();
        let cfg = resolve(
            Experiment::Fig7,
            None,
            &sets(&["sweep.kappa_t=[1.0, 50.0]", "sweep.n=[1, 2, 5, 10, 20, 50, 100, 150, 200, 300, 400, 600]"]),
        )
        .expect("fig7 config");
        let out = run_experiment(&cfg, 8).expect("fig7 run");
        let a = &out[0];
        let kt = a.column("kappa_t").unwrap();
        let n = a.column("n").unwrap();
        let f = a.column("fidelity").unwrap();
        let rows = (0..kt.len()).map(|i| (kt[i].unwrap(), n[i].unwrap() as usize, f[i].unwrap_or(f64::NAN))).collect();
        Self { rows, seconds: start.elapsed().as_secs_f64() }
    }

    fn at(&self, kappa_t: f64, n: usize) -> f64 {
        self.rows.iter().find(|r| r.0 == kappa_t && r.1 == n).map(|r| r.2).unwrap_or(f64::NAN)
    }
}

fn criterion_convergence(c: &FidelityCurves) -> Verdict {
    let ns = [100, 150, 200, 300];
    let min_f = ns.iter().map(|&n| c.at(50.0, n)).fold(f64::INFINITY, f64::min);
    let max_step = ns.iter().map(|&n| (c.at(50.0, n) - c.at(50.0, 2 * n)).abs()).fold(0.0, f64::max);
    let pass = min_f >= 0.99 && max_step <= 1e-3 && c.seconds <= 120.0;
    verdict(
        pass,
        format!(
            "kappa_t=50: min F(n>=100) = {min_f:.6}, max |F(n)-F(2n)| = {max_step:.2e}, both panels in {:.1} s",
            c.seconds
        ),
    )
}

fn criterion_anomaly(c: &FidelityCurves) -> Verdict {
    let (f10, f50, f300) = (c.at(1.0, 10), c.at(1.0, 50), c.at(1.0, 300));
    let peak =
        c.rows.iter().filter(|r| r.0 == 1.0 && r.1 <= 300).max_by(|a, b| a.2.total_cmp(&b.2)).map(|r| r.1).unwrap_or(0);
    let pass = f50 > f10 && f50 >= f300 - 1e-3;
    verdict(
        pass,
        format!("kappa_t=1: F(10) = {f10:.6}, F(50) = {f50:.6}, F(300) = {f300:.6}, measured peak at n = {peak}"),
    )
}

struct CavityRuns {
    analog: qsync::timeseries::TimeSeries,
    digital: qsync::timeseries::TimeSeries,
    t_total: f64,
}

impl CavityRuns {
    fn compute() -> Self {
        let cfg = resolve(Experiment::Fig2, None, &[]).expect("fig2 config");
        let rho0 = dasim::fig2_initial_state(cfg.cavity.n_fock).unwrap().to_density();
        let n = cfg.total_steps();
        let analog = dasim::run_analog(&cfg.cavity, cfg.t_total, n, &rho0).expect("analog");
        let digital = dasim::run_digital_analog(&cfg.cavity, cfg.t_total, n, &rho0).expect("digital");
        Self { analog, digital, t_total: cfg.t_total }
    }
}

fn criterion_overlay(r: &CavityRuns) -> Verdict {
    let mut worst: f64 = 0.0;
    for name in ["sx_q1", "sy_q1", "sz_q1"] {
        let a = r.analog.column(name).unwrap();
        let d = r.digital.column(name).unwrap();
        for (k, t) in r.analog.times().iter().enumerate() {
            if *t <= 10.0 + 1e-9 {
                worst = worst.max((a[k] - d[k]).abs());
            }
        }
    }
    verdict(worst <= 0.05, format!("max |digital - analog| on q1 over kappa t in [0, 10] = {worst:.3e}"))
}

fn criterion_sync(r: &CavityRuns) -> Verdict {
    let window = (r.t_total / 2.0, r.t_total);
    let mut parts = Vec::new();
    let mut z = f64::NAN;
    for k in ["x", "y", "z"] {
        let c = sync_metric(&r.digital, &format!("s{k}_q1"), &format!("s{k}_q2"), window)
            .ok()
            .and_then(|o| o.value())
            .unwrap_or(f64::NAN);
        if k == "z" {
            z = c;
        }
        parts.push(format!("s{k}: {c:.4}"));
    }
    verdict(z.abs() >= 0.9, format!("digital run, window [{}, {}]: {}", window.0, window.1, parts.join(", ")))
}

fn criterion_landscape() -> Verdict {
    let start = Instant::now();
    let cfg = resolve(Experiment::Fig4, None, &[]).expect("fig4 config");
    let out = run_experiment(&cfg, 8).expect("fig4 run");
    let seconds = start.elapsed().as_secs_f64();
    let deltas = cfg.sweep.delta_a.values();
    let j2s = cfg.sweep.j2.values();
    let off = information_matrix(&out[0], deltas.len(), j2s.len()).unwrap();
    let on = information_matrix(&out[1], deltas.len(), j2s.len()).unwrap();
    let j1 = cfg.qubits.j1;
    let missing = on.iter().chain(&off).flatten().filter(|v| v.is_none()).count();
    let get = |m: &Vec<Vec<Option<f64>>>, i: usize, j: usize| m[i][j].unwrap_or(f64::NAN);
    let zone_max = |m: &Vec<Vec<Option<f64>>>, f: &dyn Fn(f64, f64) -> bool| {
        let mut best = f64::NEG_INFINITY;
        for (i, &d) in deltas.iter().enumerate() {
            for (j, &jj) in j2s.iter().enumerate() {
                if f(d, jj) {
                    best = best.max(get(m, i, j));
                }
            }
        }
        best
    };
    let j0 = j2s.iter().position(|&j| j == 0.0).expect("J2 = 0 on the grid");
    let zero_col = (0..deltas.len()).map(|i| get(&on, i, j0).abs().max(get(&off, i, j0).abs())).fold(0.0, f64::max);
    let strong = zone_max(&on, &|d, j| d <= 5.0 && j >= j1 / 2.0 && j <= 2.0 * j1);
    let detuned = zone_max(&on, &|d, _| d >= 30.0);
    let row0: Vec<f64> = (0..j2s.len()).map(|j| get(&on, 0, j)).collect();
    let j_double = j2s.iter().position(|&j| (j - 2.0 * j1).abs() < 1e-9).expect("J2 = 2 J1 on the grid");
    let row_max = row0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let max_on = zone_max(&on, &|_, _| true);
    let max_off = zone_max(&off, &|_, _| true);
    let a = zero_col <= 1e-9;
    let b = strong > 10.0 * detuned;
    let c = row0[j_double] < row_max;
    let d = max_on >= max_off;
    let bound = max_on <= 2.0 * LN_2 + 1e-9 && max_off <= 2.0 * LN_2 + 1e-9;
    verdict(
        a && b && c && d && bound && missing == 0 && seconds <= 600.0,
        format!(
            "(a) J2=0 column max {zero_col:.1e}; (b) strong zone {strong:.3e} vs detuned {detuned:.3e}; \
             (c) delta_a=0: I(J2=2J1) = {:.3e} < max {row_max:.3e}; (d) max on {max_on:.3e} >= off {max_off:.3e}; \
             missing {missing}; {seconds:.1} s",
            row0[j_double]
        ),
    )
}

fn criterion_enhancement() -> Verdict {
    let cfg = resolve(Experiment::Fig5, None, &[]).expect("fig5 config");
    let rho0 = default_initial_state().to_density();
    let policy = FeedbackPolicy::default();
    let n = cfg.total_steps();
    let transverse = |ts: &qsync::timeseries::TimeSeries| {
        ["sx_A", "sy_A", "sx_E", "sy_E"].iter().flat_map(|k| ts.column(k).unwrap()).fold(0.0f64, |m, x| m.max(x.abs()))
    };
    let off = run_qml(&cfg.qubits, cfg.t_total, n, false, &policy, &rho0).expect("feedback off");
    let on = run_qml(&cfg.qubits, cfg.t_total, n, true, &policy, &rho0).expect("feedback on");
    let off_max = transverse(&off.series);
    let on_max = transverse(&on.series);
    let window = (cfg.t_total / 2.0, cfg.t_total);
    let r = sync_metric(&on.series, "sx_A", "sx_E", window).ok().and_then(|o| o.value()).unwrap_or(f64::NAN);
    // Same run with the register drive switched off, for the record.
    let undriven = QubitModelParams { omega: 0.0, ..cfg.qubits.clone() };
    let undriven_max = transverse(&run_qml(&undriven, cfg.t_total, n, false, &policy, &rho0).unwrap().series);
    verdict(
        off_max <= 1e-9 && on_max >= 0.05 && r.abs() >= 0.8,
        format!(
            "feedback off max|<sx,sy>| = {off_max:.3e} (limit 1e-9; {undriven_max:.1e} with omega = 0); \
             feedback on max = {on_max:.3e}; sync(sx_A, sx_E) on [{}, {}] = {r:.4}",
            window.0, window.1
        ),
    )
}

/// Index-summation partial trace used as the reference.
fn brute_partial_trace(rho: &CMatrix, dims: &[usize], keep: &[usize]) -> CMatrix {
    let total: usize = dims.iter().product();
    let digits = |mut k: usize| {
        let mut out = vec![0; dims.len()];
        for (p, &d) in dims.iter().enumerate().rev() {
            out[p] = k % d;
            k /= d;
        }
        out
    };
    let kd: usize = keep.iter().map(|&p| dims[p]).product();
    let kept_index = |dg: &[usize]| keep.iter().fold(0, |acc, &p| acc * dims[p] + dg[p]);
    let mut out = Array2::<C64>::zeros((kd, kd));
    for i in 0..total {
        let di = digits(i);
        for j in 0..total {
            let dj = digits(j);
            let traced_equal = (0..dims.len()).filter(|p| !keep.contains(p)).all(|p| di[p] == dj[p]);
            if traced_equal {
                out[[kept_index(&di), kept_index(&dj)]] += rho[[i, j]];
            }
        }
    }
    out
}

fn criterion_oracles() -> Verdict {
    // Cavity model at the default truncation.
    let p = CavityModelParams::fig2();
    let rho0 = dasim::fig2_initial_state(p.n_fock).unwrap().to_density();
    let lv = dasim::cavity_liouvillian(&p).unwrap();
    let t = 0.5;
    let cav =
        trace_distance(&propagate_expm(&lv, &rho0, t).unwrap(), &propagate_rk4(&lv, &rho0, t, 1e-3).unwrap()).unwrap();

    // Qubit model with the exchange couplings as continuous Hamiltonian terms.
    let q = QubitModelParams::fig5();
    let layout = qmlfb::qubit_layout();
    let s = pauli_ops();
    let exchange = kron(&s.s_plus, &s.s_minus) + kron(&s.s_minus, &s.s_plus);
    let local = qmlfb::local_liouvillian(&q).unwrap();
    let h = local.hamiltonian()
        - embed_many(&exchange, &["R", "E"], &layout).unwrap().mapv(|z| z * q.j1)
        - embed_many(&exchange, &["R", "A"], &layout).unwrap().mapv(|z| z * q.j2);
    let lq = build_liouvillian(&h, local.channels(), &layout).unwrap();
    let rq0 = default_initial_state().to_density();
    let qub = trace_distance(&propagate_expm(&lq, &rq0, 1.0).unwrap(), &propagate_rk4(&lq, &rq0, 1.0, 1e-3).unwrap())
        .unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut pt: f64 = 0.0;
    for dims in [vec![2, 3, 2], vec![3, 2, 2, 2]] {
        let labels = ["a", "b", "c", "d"];
        let layout = HilbertLayout::new(dims.iter().enumerate().map(|(k, &d)| (labels[k], d))).unwrap();
        for _ in 0..10 {
            let rho = random_density_matrix(&layout, &mut rng);
            let n = dims.len();
            for mask in 1..(1u32 << n) - 1 {
                let keep: Vec<usize> = (0..n).filter(|p| mask & (1 << p) != 0).collect();
                let names: Vec<&str> = keep.iter().map(|&p| labels[p]).collect();
                let fast = partial_trace(&rho, &names).unwrap();
                let slow = brute_partial_trace(rho.matrix(), &dims, &keep);
                pt = pt.max(linalg::max_abs(&(fast.matrix() - &slow)));
            }
        }
    }
    verdict(
        cav <= 1e-6 && qub <= 1e-6 && pt <= 1e-12,
        format!("expm vs rk4: cavity {cav:.2e}, qubits {qub:.2e}; partial trace vs index sum {pt:.2e}"),
    )
}

fn check_state(m: &CMatrix, worst_trace: &mut f64, worst_eig: &mut f64) {
    *worst_trace = worst_trace.max((linalg::trace(m).re - 1.0).abs());
    let h = linalg::hermitize(m);
    *worst_eig = worst_eig.min(linalg::eigvalsh(&h)[0]);
}

fn criterion_cptp() -> Verdict {
    const N: usize = 10_000;
    const REDRAW: usize = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut trace_err: f64 = 0.0;
    let mut min_eig = f64::INFINITY;

    // Single-cavity dissipative maps.
    let cav = HilbertLayout::new([("p", 3)]).unwrap();
    let mut map = None;
    for k in 0..N {
        if k % REDRAW == 0 {
            map = Some(
                cavity_dissipator_map(
                    rng.random_range(-20.0..20.0),
                    rng.random_range(0.01..5.0),
                    rng.random_range(1e-3..1.0),
                    3,
                )
                .unwrap(),
            );
        }
        let rho = random_density_matrix(&cav, &mut rng);
        let out = map.as_ref().unwrap().apply_raw(rho.matrix(), &cav).unwrap();
        check_state(&out, &mut trace_err, &mut min_eig);
    }

    // Digital-analog Trotter steps on the two-cavity model.
    let mut sched = None;
    for k in 0..N {
        if k % REDRAW == 0 {
            let p = CavityModelParams {
                qubit_detuning: [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)],
                cavity_detuning: [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)],
                coupling: [rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)],
                hopping: rng.random_range(0.0..20.0),
                drive: rng.random_range(0.0..1.0),
                kappa: rng.random_range(0.1..3.0),
                n_fock: 3,
            };
            sched = Some(build_da_schedule(&p, rng.random_range(1e-3..0.5)).unwrap());
        }
        let s = sched.as_ref().unwrap();
        let rho = random_density_matrix(s.layout(), &mut rng);
        check_state(&s.apply_step_raw(rho.matrix()).unwrap(), &mut trace_err, &mut min_eig);
    }

    // Protocol steps with their local dissipative maps, and the feedback channel.
    let layout = qmlfb::qubit_layout();
    let mut step = None;
    for k in 0..N {
        if k % REDRAW == 0 {
            let p = QubitModelParams {
                delta_a: rng.random_range(-40.0..40.0),
                delta_r: rng.random_range(-20.0..20.0),
                delta_e: rng.random_range(-20.0..20.0),
                omega: rng.random_range(0.0..2.0),
                j1: rng.random_range(0.0..40.0),
                j2: rng.random_range(0.0..40.0),
                gamma: rng.random_range(0.1..3.0),
                gamma_phi: rng.random_range(0.0..2.0),
            };
            step = Some(build_qml_step(&p, rng.random_range(1e-3..0.5)).unwrap());
        }
        let rho = random_density_matrix(&layout, &mut rng);
        check_state(&step.as_ref().unwrap().apply_step_raw(rho.matrix()).unwrap(), &mut trace_err, &mut min_eig);
    }
    let policy = FeedbackPolicy::default();
    for _ in 0..N {
        let rho = random_density_matrix(&layout, &mut rng);
        let out = feedback_channel(&rho, &policy).unwrap();
        check_state(out.matrix(), &mut trace_err, &mut min_eig);
    }
    verdict(
        trace_err <= 1e-9 && min_eig >= -1e-9,
        format!("4 x {N} applications: max |Tr - 1| = {trace_err:.2e}, min eigenvalue = {min_eig:.2e}"),
    )
}

fn criterion_closed_forms() -> Verdict {
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;

    // Photon decay: P(1) = exp(-2 kappa t) from |1>.
    let (kappa, t) = (0.7, 0.9);
    let b = bosonic_ops(3).unwrap();
    let l1 = HilbertLayout::new([("p", 3)]).unwrap();
    let gen = build_liouvillian(&linalg::zeros(3), &[JumpChannel::new(b.a.clone(), kappa).unwrap()], &l1).unwrap();
    let one = PureState::fock("p", 3, 1).unwrap().to_density();
    let e = (propagate_expm(&gen, &one, t).unwrap().matrix()[[1, 1]].re - (-2.0 * kappa * t).exp()).abs();
    worst = worst.max(e);
    parts.push(format!("decay {e:.1e}"));

    // Jaynes-Cummings: |e,0> returns at g t = pi.
    let g = 1.3;
    let s = pauli_ops();
    let lj = HilbertLayout::new([("q", 2), ("p", 3)]).unwrap();
    let h = (kron(&s.s_minus, &b.a_dag) + kron(&s.s_plus, &b.a)).mapv(|z| z * g);
    let gen = build_liouvillian(&h, &[], &lj).unwrap();
    let e0 = PureState::product(&[PureState::excited("q"), PureState::fock("p", 3, 0).unwrap()]).unwrap().to_density();
    let back = propagate_expm(&gen, &e0, PI / g).unwrap();
    let e = 1.0 - fidelity(&back, &e0).unwrap();
    worst = worst.max(e);
    parts.push(format!("rabi {e:.1e}"));

    // Hopping: |1,0> -> |0,1> at J t = pi/2.
    let j = 2.1;
    let lh = HilbertLayout::new([("p1", 3), ("p2", 3)]).unwrap();
    let a1 = embed(&b.a, "p1", &lh).unwrap();
    let a2 = embed(&b.a, "p2", &lh).unwrap();
    let h = (linalg::dagger(&a1).dot(&a2) + a1.dot(&linalg::dagger(&a2))).mapv(|z| z * j);
    let gen = build_liouvillian(&h, &[], &lh).unwrap();
    let ket = |n1, n2| {
        PureState::product(&[PureState::fock("p1", 3, n1).unwrap(), PureState::fock("p2", 3, n2).unwrap()]).unwrap()
    };
    let out = propagate_expm(&gen, &ket(1, 0).to_density(), PI / (2.0 * j)).unwrap();
    let e = 1.0 - fidelity(&out, &ket(0, 1).to_density()).unwrap();
    worst = worst.max(e);
    parts.push(format!("hopping {e:.1e}"));

    // Protocol exchange gate: E -> R at J1 dt = pi/2, lossless limit.
    let p = QubitModelParams {
        delta_a: 0.0,
        delta_r: 0.0,
        delta_e: 0.0,
        omega: 0.0,
        j1: 1.0,
        j2: 0.0,
        gamma: 1e-300,
        gamma_phi: 0.0,
    };
    let start = PureState::product(&[PureState::ground("A"), PureState::ground("R"), PureState::excited("E")]).unwrap();
    let want = PureState::product(&[PureState::ground("A"), PureState::excited("R"), PureState::ground("E")]).unwrap();
    let out = build_qml_step(&p, PI / 2.0).unwrap().apply_step(&start.to_density()).unwrap();
    let e = 1.0 - fidelity(&out, &want.to_density()).unwrap();
    worst = worst.max(e);
    parts.push(format!("exchange {e:.1e}"));

    verdict(worst <= 1e-6, format!("deviations: {}", parts.join(", ")))
}

fn criterion_metrics() -> Verdict {
    let l = HilbertLayout::new([("a", 2), ("e", 2)]).unwrap();
    let r = 0.5f64.sqrt();
    let bell = PureState::new(ndarray::arr1(&[C64::from(r), C64::from(0.0), C64::from(0.0), C64::from(r)]), l).unwrap();
    let mi = (mutual_information(&bell.to_density(), &["a"], &["e"]).unwrap() - 2.0 * LN_2).abs();
    let f = (fidelity(&PureState::plus("q").to_density(), &PureState::ground("q").to_density()).unwrap() - 0.5).abs();
    let q = HilbertLayout::new([("q", 2)]).unwrap();
    let diag = DensityMatrix::new(
        CMatrix::from_shape_fn((2, 2), |(i, j)| if i == j { C64::from([0.9, 0.1][i]) } else { C64::from(0.0) }),
        q.clone(),
    )
    .unwrap();
    let entropy = von_neumann_entropy(&diag);
    let scalar = -(0.9f64 * 0.9f64.ln() + 0.1f64 * 0.1f64.ln());
    let s = (entropy - scalar).abs();
    let rounded = (entropy * 1e6).round() / 1e6;
    verdict(
        mi <= 1e-12 && f <= 1e-10 && s <= 1e-9 && rounded == 0.325083,
        format!("|I(Bell) - 2 ln 2| = {mi:.1e}, |F(+, g) - 1/2| = {f:.1e}, |S(0.9, 0.1) + sum p ln p| = {s:.1e}, S = {entropy:.6}"),
    )
}

fn main() {
    let started = Instant::now();
    let curves = FidelityCurves::compute();
    let cavity = CavityRuns::compute();
    let results: Vec<(&str, Verdict)> = vec![
        ("1 digital-analog convergence", criterion_convergence(&curves)),
        ("2 fidelity anomaly at short time", criterion_anomaly(&curves)),
        ("3 digital/analog overlay", criterion_overlay(&cavity)),
        ("4 synchronization witness", criterion_sync(&cavity)),
        ("5 mutual-information landscape", criterion_landscape()),
        ("6 feedback observable enhancement", criterion_enhancement()),
        ("7 oracle equivalence", criterion_oracles()),
        ("8 CPTP battery", criterion_cptp()),
        ("9 closed-form dynamics", criterion_closed_forms()),
        ("10 metric exactness", criterion_metrics()),
    ];
    let mut failed = 0;
    for (name, v) in &results {
        println!("{} criterion {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1} s",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
