//! Lindblad generators and their propagation.
//!
//! Dissipators keep the factor two inside the bracket:
//!
//! ```text
//! d rho/dt = -i[H, rho] + sum_c rate_c (2 C rho C^dag - C^dag C rho - rho C^dag C)
//! ```
//!
//! so a cavity with `(a, kappa)` loses photons as `<n>(t) = <n>(0) e^{-2 kappa t}`.
//! Many references use the half-rate convention instead; rates quoted from
//! them must be doubled before they are passed here.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::linalg::{self, dagger, kron, CMatrix, C64, I, ONE};
use crate::qcore::{apply_local_superop, bosonic_ops, DensityMatrix, HilbertLayout};

/// A jump operator on the full space together with its rate.
#[derive(Debug, Clone)]
pub struct JumpChannel {
    pub op: CMatrix,
    pub rate: f64,
}

impl JumpChannel {
    pub fn new(op: CMatrix, rate: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("jump rate {rate} must be finite and >= 0")));
        }
        Ok(Self { op, rate })
    }
}

/// Lindblad generator acting on column-major vectorized density matrices.
#[derive(Debug, Clone)]
pub struct SuperOperator {
    matrix: CMatrix,
    layout: HilbertLayout,
    hamiltonian: CMatrix,
    channels: Vec<JumpChannel>,
}

pub fn build_liouvillian(
    hamiltonian: &CMatrix,
    channels: &[JumpChannel],
    layout: &HilbertLayout,
) -> Result<SuperOperator> {
    let d = layout.total_dim();
    if hamiltonian.nrows() != d || hamiltonian.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: hamiltonian.nrows() });
    }
    let defect = linalg::hermiticity_defect(hamiltonian);
    if defect > 1e-10 {
        return Err(Error::NotHermitian(defect));
    }
    let ident = linalg::identity(d);
    let mut matrix = (kron(&ident, hamiltonian) - kron(&hamiltonian.t().to_owned(), &ident)).mapv(|z| -I * z);
    for ch in channels {
        if ch.op.nrows() != d || ch.op.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: ch.op.nrows() });
        }
        if ch.rate == 0.0 {
            continue;
        }
        let cdc = dagger(&ch.op).dot(&ch.op);
        let jump = kron(&ch.op.mapv(|z| z.conj()), &ch.op).mapv(|z| z * 2.0);
        let anti = kron(&ident, &cdc) + kron(&cdc.t().to_owned(), &ident);
        matrix.scaled_add(C64::from(ch.rate), &(jump - anti));
    }
    Ok(SuperOperator { matrix, layout: layout.clone(), hamiltonian: hamiltonian.clone(), channels: channels.to_vec() })
}

impl SuperOperator {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[JumpChannel] {
        &self.channels
    }

    /// Evaluates the generator directly on an operator,
    /// `-i[H, rho] + sum rate (2 C rho C^dag - {C^dag C, rho})`, without going
    /// through the vectorized matrix.
    pub fn apply_generator(&self, rho: &CMatrix) -> CMatrix {
        let mut out = linalg::commutator(&self.hamiltonian, rho).mapv(|z| -I * z);
        for ch in &self.channels {
            if ch.rate == 0.0 {
                continue;
            }
            let cd = dagger(&ch.op);
            let cdc = cd.dot(&ch.op);
            let jump = ch.op.dot(rho).dot(&cd).mapv(|z| z * 2.0);
            let term = jump - linalg::anticommutator(&cdc, rho);
            out.scaled_add(C64::from(ch.rate), &term);
        }
        out
    }

    /// Largest entry of `vec(I)^dagger L`; zero for a trace-preserving generator.
    pub fn trace_annihilation_defect(&self) -> f64 {
        row_trace_defect(&self.matrix, self.layout.total_dim(), false)
    }
}

/// Largest entry of `vec(I)^dagger M - target` where target is `vec(I)^dagger`
/// when `propagator` is set and zero otherwise.
fn row_trace_defect(m: &CMatrix, d: usize, propagator: bool) -> f64 {
    let mut worst = 0.0f64;
    for col in 0..m.ncols() {
        let mut acc = C64::from(0.0);
        for k in 0..d {
            acc += m[[k + d * k, col]];
        }
        if propagator && col % (d + 1) == 0 {
            acc -= ONE;
        }
        worst = worst.max(acc.norm());
    }
    worst
}

fn apply_vectorized(m: &CMatrix, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let v = m.dot(&linalg::vectorize(rho.matrix()));
    let out = linalg::unvectorize(&v, rho.dim());
    if !linalg::is_finite(&out) {
        return Err(Error::Numeric("propagated state has non-finite entries".into()));
    }
    DensityMatrix::from_evolved(out, rho.layout().clone())
}

fn check_layout(l: &SuperOperator, rho: &DensityMatrix) -> Result<()> {
    if l.layout() != rho.layout() {
        return Err(Error::LayoutMismatch(format!("{} vs {}", l.layout(), rho.layout())));
    }
    Ok(())
}

/// `unvec(exp(L t) vec(rho))`.
pub fn propagate_expm(l: &SuperOperator, rho: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    check_layout(l, rho)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("propagation time {t} must be >= 0")));
    }
    if t == 0.0 {
        return Ok(rho.clone());
    }
    let prop = linalg::expm(&l.matrix.mapv(|z| z * t))?;
    apply_vectorized(&prop, rho)
}

/// Cached `exp(L step)` for repeated equal-length propagation.
#[derive(Debug, Clone)]
pub struct Propagator {
    matrix: CMatrix,
    layout: HilbertLayout,
    step: f64,
}

impl Propagator {
    pub fn new(l: &SuperOperator, step: f64) -> Result<Self> {
        if !(step >= 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter(format!("propagation step {step} must be >= 0")));
        }
        Ok(Self { matrix: linalg::expm(&l.matrix.mapv(|z| z * step))?, layout: l.layout.clone(), step })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn advance(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if &self.layout != rho.layout() {
            return Err(Error::LayoutMismatch(format!("{} vs {}", self.layout, rho.layout())));
        }
        apply_vectorized(&self.matrix, rho)
    }
}

/// Classical fourth-order Runge-Kutta integration of `d rho/dt = L(rho)` with
/// steps no longer than `dt`.
pub fn propagate_rk4(l: &SuperOperator, rho: &DensityMatrix, t: f64, dt: f64) -> Result<DensityMatrix> {
    check_layout(l, rho)?;
    if t == 0.0 {
        return Ok(rho.clone());
    }
    if !(t > 0.0 && t.is_finite() && dt > 0.0 && dt <= t) {
        return Err(Error::InvalidParameter(format!("need 0 < dt <= t, got dt={dt}, t={t}")));
    }
    let stiffness = linalg::norm_one(&l.matrix) * dt;
    if stiffness >= 1.0 {
        log::warn!("RK4 step may be unstable: ||L|| dt = {stiffness:.3}");
    }
    let steps = (t / dt - 1e-9).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let mut x = rho.matrix().clone();
    for _ in 0..steps {
        let k1 = l.apply_generator(&x);
        let k2 = l.apply_generator(&(&x + &k1.mapv(|z| z * (h / 2.0))));
        let k3 = l.apply_generator(&(&x + &k2.mapv(|z| z * (h / 2.0))));
        let k4 = l.apply_generator(&(&x + &k3.mapv(|z| z * h)));
        let incr = (k1 + k2.mapv(|z| z * 2.0) + k3.mapv(|z| z * 2.0) + k4).mapv(|z| z * (h / 6.0));
        x = x + incr;
        if !linalg::is_finite(&x) {
            return Err(Error::Numeric("RK4 produced non-finite values".into()));
        }
    }
    DensityMatrix::from_evolved(x, rho.layout().clone())
}

/// A CPTP map in vectorized form acting on the factors of its own layout.
#[derive(Debug, Clone)]
pub struct DissipativeMap {
    matrix: CMatrix,
    layout: HilbertLayout,
    duration: f64,
}

impl DissipativeMap {
    /// `exp(L duration)`.
    pub fn from_liouvillian(l: &SuperOperator, duration: f64) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidParameter(format!("map duration {duration} must be > 0")));
        }
        Ok(Self { matrix: linalg::expm(&l.matrix.mapv(|z| z * duration))?, layout: l.layout.clone(), duration })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Relabels the single factor the map acts on. Maps built on one-factor
    /// layouts are reused for every cavity of a model.
    pub fn relabeled(&self, labels: &[&str]) -> Result<Self> {
        if labels.len() != self.layout.len() {
            return Err(Error::LayoutMismatch(format!("{} relabeled with {:?}", self.layout, labels)));
        }
        let layout = HilbertLayout::new(labels.iter().zip(self.layout.dims()).map(|(l, d)| (l.to_string(), d)))?;
        Ok(Self { layout, ..self.clone() })
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let out = self.apply_raw(rho.matrix(), rho.layout())?;
        DensityMatrix::from_evolved(out, rho.layout().clone())
    }

    /// Applies the map to any operator on `layout` (which must contain the
    /// map's factors in the same relative order), without validating the result.
    pub fn apply_raw(&self, x: &CMatrix, layout: &HilbertLayout) -> Result<CMatrix> {
        let out = if layout == &self.layout {
            linalg::unvectorize(&self.matrix.dot(&linalg::vectorize(x)), x.nrows())
        } else {
            let labels = self.layout.labels();
            for f in self.layout.factors() {
                if layout.dim_of(&f.label)? != f.dim {
                    return Err(Error::LayoutMismatch(format!("{} inside {}", self.layout, layout)));
                }
            }
            let sorted = layout.positions(&labels)?;
            let given = labels.iter().map(|l| layout.position(l)).collect::<Result<Vec<_>>>()?;
            if sorted != given {
                return Err(Error::LayoutMismatch(format!(
                    "map factors {} are not in the order of {}",
                    self.layout, layout
                )));
            }
            apply_local_superop(&self.matrix, &labels, x, layout)?
        };
        if !linalg::is_finite(&out) {
            return Err(Error::Numeric("dissipative map produced non-finite values".into()));
        }
        Ok(out)
    }

    /// Largest entry of `vec(I)^dagger (M - 1)`; zero for a trace-preserving map.
    pub fn trace_preservation_defect(&self) -> f64 {
        row_trace_defect(&self.matrix, self.layout.total_dim(), true)
    }
}

/// Free evolution and photon loss of one cavity, `exp(L_cav dt)` with
/// `L_cav` generated by `H = delta a^dag a` and the channel `(a, kappa)`.
/// The map acts on a single factor labelled `"p"`; see [`DissipativeMap::relabeled`].
pub fn cavity_dissipator_map(delta: f64, kappa: f64, dt: f64, n_fock: usize) -> Result<DissipativeMap> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!("cavity decay {kappa} must be > 0")));
    }
    if !delta.is_finite() {
        return Err(Error::InvalidParameter("cavity detuning must be finite".into()));
    }
    let ops = bosonic_ops(n_fock)?;
    let layout = HilbertLayout::new([("p", n_fock)])?;
    let h = ops.n.mapv(|z| z * delta);
    let l = build_liouvillian(&h, &[JumpChannel::new(ops.a, kappa)?], &layout)?;
    DissipativeMap::from_liouvillian(&l, dt)
}

/// Population vector (diagonal) of a state, a convenience for decay checks.
pub fn populations(rho: &DensityMatrix) -> Array1<f64> {
    rho.matrix().diag().mapv(|z| z.re)
}
