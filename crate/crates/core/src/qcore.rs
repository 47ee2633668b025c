//! Tensor-product bookkeeping: subsystem layouts, ladder and Pauli operators,
//! embedding of local operators, density matrices and partial traces.
//!
//! Qubits use the basis order `(|e>, |g>)`, so index 0 is the excited level
//! and `sz |e> = +|e>`. Fock index `k` is the photon number `k`.

use std::fmt;

use ndarray::{Array1, Array2, IxDyn};

use crate::error::{Error, Result};
use crate::linalg::{self, c, dagger, hermiticity_defect, kron, CMatrix, CVector, C64, I, ONE, ZERO};

/// Entrywise Hermiticity tolerance for density matrices.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Allowed deviation of a density-matrix trace from one.
pub const TRACE_TOL: f64 = 1e-9;
/// Most negative eigenvalue accepted for a density matrix.
pub const POSITIVITY_TOL: f64 = 1e-9;
/// Allowed deviation of a ket norm from one.
pub const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subsystem {
    pub label: String,
    pub dim: usize,
}

/// Ordered list of labelled tensor factors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertLayout {
    factors: Vec<Subsystem>,
}

impl HilbertLayout {
    pub fn new<S: Into<String>>(factors: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut out: Vec<Subsystem> = Vec::new();
        for (label, dim) in factors {
            let label = label.into();
            if dim < 2 {
                return Err(Error::InvalidDimension(format!(
                    "subsystem '{label}' has dimension {dim}, need at least 2"
                )));
            }
            if out.iter().any(|f| f.label == label) {
                return Err(Error::DuplicateLabel(label));
            }
            out.push(Subsystem { label, dim });
        }
        if out.is_empty() {
            return Err(Error::EmptySelection);
        }
        Ok(Self { factors: out })
    }

    pub fn factors(&self) -> &[Subsystem] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.dim).collect()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.factors.iter().map(|f| f.label.as_str()).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.factors.iter().position(|f| f.label == label).ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.factors[self.position(label)?].dim)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.factors.iter().any(|f| f.label == label)
    }

    /// Sorted factor positions of `labels`, rejecting unknown or repeated ones.
    pub fn positions(&self, labels: &[&str]) -> Result<Vec<usize>> {
        let mut pos = Vec::with_capacity(labels.len());
        for &l in labels {
            let p = self.position(l)?;
            if pos.contains(&p) {
                return Err(Error::DuplicateLabel(l.to_string()));
            }
            pos.push(p);
        }
        pos.sort_unstable();
        Ok(pos)
    }

    /// The factors named in `labels`, kept in this layout's order.
    pub fn sublayout(&self, labels: &[&str]) -> Result<HilbertLayout> {
        if labels.is_empty() {
            return Err(Error::EmptySelection);
        }
        let pos = self.positions(labels)?;
        Ok(Self { factors: pos.iter().map(|&p| self.factors[p].clone()).collect() })
    }

    /// Concatenation of two layouts with disjoint labels.
    pub fn concat(&self, other: &HilbertLayout) -> Result<HilbertLayout> {
        Self::new(self.factors.iter().chain(other.factors.iter()).map(|f| (f.label.clone(), f.dim)))
    }
}

impl fmt::Display for HilbertLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.factors.iter().map(|s| format!("{}:{}", s.label, s.dim)).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Reorders the tensor factors of a square operator. Factor `k` of the result
/// is factor `order[k]` of the input.
pub(crate) fn permute_factors(op: &CMatrix, dims: &[usize], order: &[usize]) -> CMatrix {
    let k = dims.len();
    if order.iter().enumerate().all(|(i, &o)| i == o) {
        return op.clone();
    }
    let total: usize = dims.iter().product();
    let shape: Vec<usize> = dims.iter().chain(dims.iter()).copied().collect();
    let axes: Vec<usize> = order.iter().copied().chain(order.iter().map(|&o| o + k)).collect();
    let tensor = op
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order(IxDyn(&shape))
        .expect("operator shape matches layout");
    tensor
        .permuted_axes(IxDyn(&axes))
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((total, total))
        .expect("permuted operator keeps its size")
}

fn inverse_permutation(order: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; order.len()];
    for (k, &o) in order.iter().enumerate() {
        inv[o] = k;
    }
    inv
}

/// Factor order that moves `front` (sorted positions) ahead of the rest.
fn front_order(front: &[usize], n: usize) -> Vec<usize> {
    front.iter().copied().chain((0..n).filter(|p| !front.contains(p))).collect()
}

/// Ladder operators truncated to Fock states `|0>..|n_fock-1>`.
#[derive(Debug, Clone)]
pub struct BosonOps {
    pub a: CMatrix,
    pub a_dag: CMatrix,
    pub n: CMatrix,
}

pub fn bosonic_ops(n_fock: usize) -> Result<BosonOps> {
    if n_fock < 2 {
        return Err(Error::InvalidDimension(format!("Fock truncation {n_fock} < 2")));
    }
    let mut a = linalg::zeros(n_fock);
    for k in 1..n_fock {
        a[[k - 1, k]] = C64::from((k as f64).sqrt());
    }
    let a_dag = dagger(&a);
    let n = a_dag.dot(&a);
    Ok(BosonOps { a, a_dag, n })
}

#[derive(Debug, Clone)]
pub struct Paulis {
    pub sx: CMatrix,
    pub sy: CMatrix,
    pub sz: CMatrix,
    /// `|e><g|`, raises `|g>` to `|e>`.
    pub s_plus: CMatrix,
    pub s_minus: CMatrix,
}

pub fn pauli_ops() -> Paulis {
    let m = |v: [C64; 4]| Array2::from_shape_vec((2, 2), v.to_vec()).expect("2x2");
    Paulis {
        sx: m([ZERO, ONE, ONE, ZERO]),
        sy: m([ZERO, -I, I, ZERO]),
        sz: m([ONE, ZERO, ZERO, -ONE]),
        s_plus: m([ZERO, ONE, ZERO, ZERO]),
        s_minus: m([ZERO, ZERO, ONE, ZERO]),
    }
}

/// Lifts `local_op` on `slot` to the full space of `layout`.
pub fn embed(local_op: &CMatrix, slot: &str, layout: &HilbertLayout) -> Result<CMatrix> {
    embed_many(local_op, &[slot], layout)
}

/// Lifts an operator on several factors to the full space. `local_op` is
/// expressed in the Kronecker order of `slots` as given.
pub fn embed_many(local_op: &CMatrix, slots: &[&str], layout: &HilbertLayout) -> Result<CMatrix> {
    if slots.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut pos = Vec::with_capacity(slots.len());
    for &s in slots {
        let p = layout.position(s)?;
        if pos.contains(&p) {
            return Err(Error::DuplicateLabel(s.to_string()));
        }
        pos.push(p);
    }
    let dims = layout.dims();
    let local_dim: usize = pos.iter().map(|&p| dims[p]).product();
    if local_op.nrows() != local_dim || local_op.ncols() != local_dim {
        return Err(Error::DimensionMismatch { expected: local_dim, found: local_op.nrows() });
    }
    let rest_dim = layout.total_dim() / local_dim;
    let padded = kron(local_op, &linalg::identity(rest_dim));
    let order: Vec<usize> = pos.iter().copied().chain((0..dims.len()).filter(|p| !pos.contains(p))).collect();
    let current_dims: Vec<usize> = order.iter().map(|&o| dims[o]).collect();
    Ok(permute_factors(&padded, &current_dims, &inverse_permutation(&order)))
}

/// Normalized ket tied to a layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
    layout: HilbertLayout,
}

impl PureState {
    pub fn new(amplitudes: CVector, layout: HilbertLayout) -> Result<Self> {
        if amplitudes.len() != layout.total_dim() {
            return Err(Error::DimensionMismatch { expected: layout.total_dim(), found: amplitudes.len() });
        }
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("ket norm {norm} is not 1")));
        }
        Ok(Self { amplitudes, layout })
    }

    /// Builds a ket after rescaling the amplitudes to unit norm.
    pub fn normalized(amplitudes: CVector, layout: HilbertLayout) -> Result<Self> {
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidState("zero or non-finite ket".into()));
        }
        Self::new(amplitudes.mapv(|z| z / norm), layout)
    }

    /// A single-factor qubit ket `alpha_e |e> + alpha_g |g>`.
    pub fn qubit(label: &str, alpha_e: C64, alpha_g: C64) -> Result<Self> {
        Self::new(Array1::from(vec![alpha_e, alpha_g]), HilbertLayout::new([(label, 2)])?)
    }

    pub fn excited(label: &str) -> Self {
        Self::qubit(label, ONE, ZERO).expect("valid qubit label")
    }

    pub fn ground(label: &str) -> Self {
        Self::qubit(label, ZERO, ONE).expect("valid qubit label")
    }

    /// `(|e> + |g>)/sqrt(2)`, the +1 eigenvector of `sx`.
    pub fn plus(label: &str) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::qubit(label, c(h, 0.0), c(h, 0.0)).expect("valid qubit label")
    }

    /// `(|e> - |g>)/sqrt(2)`, the -1 eigenvector of `sx`.
    pub fn minus(label: &str) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::qubit(label, c(h, 0.0), c(-h, 0.0)).expect("valid qubit label")
    }

    /// Fock state `|k>` of a mode truncated at `n_fock` levels.
    pub fn fock(label: &str, n_fock: usize, k: usize) -> Result<Self> {
        if k >= n_fock {
            return Err(Error::InvalidState(format!("Fock index {k} outside truncation {n_fock}")));
        }
        let mut amps = Array1::zeros(n_fock);
        amps[k] = ONE;
        Self::new(amps, HilbertLayout::new([(label, n_fock)])?)
    }

    pub fn tensor(&self, other: &PureState) -> Result<Self> {
        let layout = self.layout.concat(&other.layout)?;
        let amps: CVector =
            self.amplitudes.iter().flat_map(|&x| other.amplitudes.iter().map(move |&y| x * y)).collect();
        Self::new(amps, layout)
    }

    /// Tensor product of several kets in the given order.
    pub fn product(states: &[PureState]) -> Result<Self> {
        let (first, rest) = states.split_first().ok_or(Error::EmptySelection)?;
        rest.iter().try_fold(first.clone(), |acc, s| acc.tensor(s))
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub fn projector(&self) -> CMatrix {
        let n = self.amplitudes.len();
        Array2::from_shape_fn((n, n), |(i, j)| self.amplitudes[i] * self.amplitudes[j].conj())
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix { matrix: self.projector(), layout: self.layout.clone() }
    }
}

/// Hermitian, unit-trace, positive semidefinite operator on a layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
    layout: HilbertLayout,
}

impl DensityMatrix {
    /// Validates `matrix` as given.
    pub fn new(matrix: CMatrix, layout: HilbertLayout) -> Result<Self> {
        let d = layout.total_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: matrix.nrows() });
        }
        if !linalg::is_finite(&matrix) {
            return Err(Error::Numeric("density matrix has non-finite entries".into()));
        }
        let herm = hermiticity_defect(&matrix);
        if herm > HERMITICITY_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = linalg::trace(&matrix);
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min_eig = linalg::eigvalsh(&matrix)[0];
        if min_eig < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(Self { matrix, layout })
    }

    /// Symmetrizes a propagated matrix as `(m + m^dagger)/2` before validating it.
    pub fn from_evolved(matrix: CMatrix, layout: HilbertLayout) -> Result<Self> {
        Self::new(linalg::hermitize(&matrix), layout)
    }

    pub(crate) fn from_parts_unchecked(matrix: CMatrix, layout: HilbertLayout) -> Self {
        Self { matrix, layout }
    }

    pub fn maximally_mixed(layout: HilbertLayout) -> Self {
        let d = layout.total_dim();
        let matrix = linalg::identity(d).mapv(|z| z / d as f64);
        Self { matrix, layout }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.matrix)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::eigvalsh(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<Self> {
        Ok(Self { matrix: kron(&self.matrix, &other.matrix), layout: self.layout.concat(&other.layout)? })
    }

    /// Conjugates by a unitary given on the full space.
    pub fn conjugate(&self, u: &CMatrix) -> Result<Self> {
        if u.nrows() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: u.nrows() });
        }
        Self::from_evolved(u.dot(&self.matrix).dot(&dagger(u)), self.layout.clone())
    }

    /// Re-expresses the state in a layout holding the same factors in another order.
    pub fn reorder(&self, target: &HilbertLayout) -> Result<Self> {
        if target.len() != self.layout.len() {
            return Err(Error::LayoutMismatch(format!("{} vs {}", self.layout, target)));
        }
        let mut order = Vec::with_capacity(target.len());
        for f in target.factors() {
            let p = self.layout.position(&f.label)?;
            if self.layout.factors()[p].dim != f.dim {
                return Err(Error::LayoutMismatch(format!("{} vs {}", self.layout, target)));
            }
            order.push(p);
        }
        Ok(Self { matrix: permute_factors(&self.matrix, &self.layout.dims(), &order), layout: target.clone() })
    }
}

/// Reduced state on the factors in `keep`, in their original relative order.
pub fn partial_trace(rho: &DensityMatrix, keep: &[&str]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::EmptySelection);
    }
    let layout = rho.layout();
    let kept = layout.positions(keep)?;
    let sub = layout.sublayout(keep)?;
    if kept.len() == layout.len() {
        return Ok(rho.clone());
    }
    let dims = layout.dims();
    let order = front_order(&kept, dims.len());
    let permuted = permute_factors(rho.matrix(), &dims, &order);
    let dk = sub.total_dim();
    let dt = layout.total_dim() / dk;
    let reduced =
        Array2::from_shape_fn((dk, dk), |(i, j)| (0..dt).map(|t| permuted[[i * dt + t, j * dt + t]]).sum::<C64>());
    Ok(DensityMatrix::from_parts_unchecked(linalg::hermitize(&reduced), sub))
}

/// Discards the state of `slot` and replaces it with `fresh`, keeping every
/// other factor's reduced state and the original factor order.
pub fn replace_subsystem(rho: &DensityMatrix, slot: &str, fresh: &PureState) -> Result<DensityMatrix> {
    let layout = rho.layout();
    let pos = layout.position(slot)?;
    let dim = layout.factors()[pos].dim;
    if fresh.amplitudes().len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: fresh.amplitudes().len() });
    }
    let fresh_proj = fresh.projector();
    if layout.len() == 1 {
        return Ok(DensityMatrix::from_parts_unchecked(fresh_proj, layout.clone()));
    }
    let others: Vec<&str> = layout.labels().into_iter().filter(|&l| l != slot).collect();
    let rest = partial_trace(rho, &others)?;
    let dims = layout.dims();
    // Current order is [others..., slot]; move slot back to its place.
    let order: Vec<usize> = (0..dims.len()).filter(|&p| p != pos).chain(std::iter::once(pos)).collect();
    let current: Vec<usize> = order.iter().map(|&o| dims[o]).collect();
    let joined = kron(rest.matrix(), &fresh_proj);
    Ok(DensityMatrix::from_parts_unchecked(
        permute_factors(&joined, &current, &inverse_permutation(&order)),
        layout.clone(),
    ))
}

/// Applies a superoperator acting on the factors `slots` of `rho`. `superop`
/// acts on column-major vectorized operators of the sub-space formed by
/// `slots` in layout order.
pub(crate) fn apply_local_superop(
    superop: &CMatrix,
    slots: &[&str],
    rho: &CMatrix,
    layout: &HilbertLayout,
) -> Result<CMatrix> {
    let pos = layout.positions(slots)?;
    let dims = layout.dims();
    let d: usize = pos.iter().map(|&p| dims[p]).product();
    if superop.nrows() != d * d || superop.ncols() != d * d {
        return Err(Error::DimensionMismatch { expected: d * d, found: superop.nrows() });
    }
    let order = front_order(&pos, dims.len());
    let current: Vec<usize> = order.iter().map(|&o| dims[o]).collect();
    let permuted = permute_factors(rho, &dims, &order);
    let r = layout.total_dim() / d;
    // Column (r1, r2) of `blocks` is vec of the d x d block at (r1, r2).
    let mut blocks = Array2::<C64>::zeros((d * d, r * r));
    for r1 in 0..r {
        for r2 in 0..r {
            let col = r1 * r + r2;
            for j in 0..d {
                for i in 0..d {
                    blocks[[i + d * j, col]] = permuted[[i * r + r1, j * r + r2]];
                }
            }
        }
    }
    let mapped = superop.dot(&blocks);
    let mut out = Array2::<C64>::zeros(permuted.dim());
    for r1 in 0..r {
        for r2 in 0..r {
            let col = r1 * r + r2;
            for j in 0..d {
                for i in 0..d {
                    out[[i * r + r1, j * r + r2]] = mapped[[i + d * j, col]];
                }
            }
        }
    }
    Ok(permute_factors(&out, &current, &inverse_permutation(&order)))
}
