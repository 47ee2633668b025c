//! Scalar figures of merit. Entropies are in nats.

use crate::error::{Error, Result};
use crate::linalg::{self, hermiticity_defect, CMatrix};
use crate::qcore::{partial_trace, DensityMatrix, POSITIVITY_TOL};

/// Eigenvalues of a density matrix, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
}

impl Spectrum {
    pub fn of(rho: &DensityMatrix) -> Self {
        Self { eigenvalues: rho.eigenvalues() }
    }

    /// `-sum p ln p` with negative eigenvalues clamped to zero.
    pub fn entropy(&self) -> f64 {
        -self.eigenvalues.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    }
}

pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    Spectrum::of(rho).entropy().max(0.0)
}

/// `S(A) + S(E) - S(AE)` for disjoint label sets, clamped at zero.
pub fn mutual_information(rho: &DensityMatrix, part_a: &[&str], part_e: &[&str]) -> Result<f64> {
    if part_a.is_empty() || part_e.is_empty() {
        return Err(Error::EmptySelection);
    }
    if let Some(l) = part_a.iter().find(|l| part_e.contains(l)) {
        return Err(Error::OverlappingPartitions(l.to_string()));
    }
    let joint: Vec<&str> = part_a.iter().chain(part_e.iter()).copied().collect();
    let rho_ae = partial_trace(rho, &joint)?;
    let rho_a = partial_trace(&rho_ae, part_a)?;
    let rho_e = partial_trace(&rho_ae, part_e)?;
    let info = von_neumann_entropy(&rho_a) + von_neumann_entropy(&rho_e) - von_neumann_entropy(&rho_ae);
    Ok(info.max(0.0))
}

fn check_psd(rho: &DensityMatrix) -> Result<()> {
    let min = rho.min_eigenvalue();
    if min < -POSITIVITY_TOL {
        return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
    }
    Ok(())
}

const SPECTRAL_FLOOR: f64 = 1e-14;

/// Uhlmann fidelity `(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.layout() != sigma.layout() {
        return Err(Error::LayoutMismatch(format!("{} vs {}", rho.layout(), sigma.layout())));
    }
    check_psd(rho)?;
    check_psd(sigma)?;
    // Rounding noise on null eigenvalues would otherwise enter through the
    // square root at the 1e-8 level.
    let floor = SPECTRAL_FLOOR * rho.dim() as f64;
    let sqrt_rho = linalg::hermitian_function(rho.matrix(), |x| if x > floor { x.sqrt() } else { 0.0 });
    let inner = sqrt_rho.dot(sigma.matrix()).dot(&sqrt_rho);
    let root_trace: f64 = linalg::eigvalsh(&inner).iter().map(|&x| if x > floor { x.sqrt() } else { 0.0 }).sum();
    Ok((root_trace * root_trace).clamp(0.0, 1.0))
}

/// `Re Tr(op rho)` for a Hermitian full-space observable.
pub fn expectation(rho: &DensityMatrix, op: &CMatrix) -> Result<f64> {
    if op.nrows() != rho.dim() || op.ncols() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: op.nrows() });
    }
    let defect = hermiticity_defect(op);
    if defect > 1e-10 {
        return Err(Error::NotHermitian(defect));
    }
    let value = (op * &rho.matrix().t()).sum();
    if value.im.abs() > 1e-9 {
        return Err(Error::Numeric(format!("expectation has imaginary part {:e}", value.im)));
    }
    Ok(value.re)
}

/// `||rho - sigma||_1 / 2`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: sigma.dim() });
    }
    Ok(matrix_trace_distance(rho.matrix(), sigma.matrix()))
}

pub fn matrix_trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    0.5 * linalg::eigvalsh(&(a - b)).iter().map(|x| x.abs()).sum::<f64>()
}
