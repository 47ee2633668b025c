//! Trotter steps as ordered sequences of unitary gates and dissipative maps.

use crate::error::{Error, Result};
use crate::linalg::{self, dagger, CMatrix};
use crate::liouville::DissipativeMap;
use crate::qcore::{embed_many, DensityMatrix, HilbertLayout};

/// Gates must satisfy `U^dagger U = I` to this entrywise tolerance.
pub const UNITARITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub enum BlockKind {
    /// Local unitary in the Kronecker order of the block's `acts_on` labels.
    Unitary(CMatrix),
    /// CPTP map whose own layout names the factors it acts on.
    Dissipative(DissipativeMap),
}

#[derive(Debug, Clone)]
pub struct Block {
    pub name: String,
    pub kind: BlockKind,
    pub acts_on: Vec<String>,
    pub duration: f64,
}

impl Block {
    pub fn unitary(name: &str, u: CMatrix, acts_on: &[&str], duration: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: BlockKind::Unitary(u),
            acts_on: acts_on.iter().map(|s| s.to_string()).collect(),
            duration,
        }
    }

    pub fn dissipative(name: &str, map: DissipativeMap) -> Self {
        let acts_on = map.layout().labels().iter().map(|s| s.to_string()).collect();
        let duration = map.duration();
        Self { name: name.to_string(), kind: BlockKind::Dissipative(map), acts_on, duration }
    }

    pub fn is_unitary(&self) -> bool {
        matches!(self.kind, BlockKind::Unitary(_))
    }
}

#[derive(Debug, Clone)]
enum Compiled {
    Unitary { full: CMatrix, full_dag: CMatrix },
    Map(DissipativeMap),
}

/// One Trotter step: blocks are applied in order, each for `step_duration`.
#[derive(Debug, Clone)]
pub struct Schedule {
    layout: HilbertLayout,
    step_duration: f64,
    blocks: Vec<Block>,
    compiled: Vec<Compiled>,
}

impl Schedule {
    pub fn new(layout: HilbertLayout, step_duration: f64, blocks: Vec<Block>) -> Result<Self> {
        if !(step_duration > 0.0 && step_duration.is_finite()) {
            return Err(Error::InvalidParameter(format!("step duration {step_duration} must be > 0")));
        }
        let mut compiled = Vec::with_capacity(blocks.len());
        for b in &blocks {
            if (b.duration - step_duration).abs() > 1e-12 * step_duration.max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "block '{}' lasts {} but the step lasts {}",
                    b.name, b.duration, step_duration
                )));
            }
            let labels: Vec<&str> = b.acts_on.iter().map(String::as_str).collect();
            match &b.kind {
                BlockKind::Unitary(u) => {
                    let defect = linalg::max_abs(&(dagger(u).dot(u) - linalg::identity(u.nrows())));
                    if defect > UNITARITY_TOL {
                        return Err(Error::Numeric(format!("block '{}' is not unitary ({defect:e})", b.name)));
                    }
                    let full = embed_many(u, &labels, &layout)?;
                    // Adjacent gates are fused into one conjugation.
                    match compiled.last_mut() {
                        Some(Compiled::Unitary { full: prev, full_dag }) => {
                            *prev = full.dot(prev);
                            *full_dag = dagger(prev);
                        }
                        _ => {
                            let full_dag = dagger(&full);
                            compiled.push(Compiled::Unitary { full, full_dag });
                        }
                    }
                }
                BlockKind::Dissipative(map) => {
                    layout.positions(&labels)?;
                    compiled.push(Compiled::Map(map.clone()));
                }
            }
        }
        Ok(Self { layout, step_duration, blocks, compiled })
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub fn step_duration(&self) -> f64 {
        self.step_duration
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Applies the blocks once, in order. The result is re-validated as a
    /// density matrix, so a non-CPTP step surfaces as an error.
    pub fn apply_step(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.layout() != &self.layout {
            return Err(Error::LayoutMismatch(format!("{} vs {}", self.layout, rho.layout())));
        }
        let mut m = rho.matrix().clone();
        for c in &self.compiled {
            m = match c {
                Compiled::Unitary { full, full_dag } => full.dot(&m).dot(full_dag),
                Compiled::Map(map) => map.apply_raw(&m, &self.layout)?,
            };
        }
        DensityMatrix::from_evolved(m, self.layout.clone())
    }

    /// Composite map applied to an arbitrary operator, without validation.
    /// Used for Trotter-error estimates on non-physical probes.
    pub fn apply_step_raw(&self, x: &CMatrix) -> Result<CMatrix> {
        let mut m = x.clone();
        for c in &self.compiled {
            m = match c {
                Compiled::Unitary { full, full_dag } => full.dot(&m).dot(full_dag),
                Compiled::Map(map) => map.apply_raw(&m, &self.layout)?,
            };
        }
        Ok(m)
    }
}
