//! Random states and operators for property tests and CPTP batteries.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, dagger, CMatrix, C64};
use crate::qcore::{DensityMatrix, HilbertLayout, PureState};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    Array2::from_shape_simple_fn((rows, cols), || gaussian(rng))
}

pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    linalg::hermitize(&ginibre(n, n, rng))
}

/// Haar-distributed unitary via Gram-Schmidt on a Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = ginibre(n, n, rng);
    let mut q = Array2::<C64>::zeros((n, n));
    for k in 0..n {
        let mut v = g.column(k).to_owned();
        for j in 0..k {
            let qj = q.column(j);
            let proj: C64 = qj.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
            v.zip_mut_with(&qj, |x, y| *x -= proj * y);
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        q.column_mut(k).assign(&v.mapv(|z| z / norm));
    }
    q
}

pub fn random_pure<R: Rng + ?Sized>(layout: &HilbertLayout, rng: &mut R) -> PureState {
    let amps: Array1<C64> = (0..layout.total_dim()).map(|_| gaussian(rng)).collect();
    PureState::normalized(amps, layout.clone()).expect("Gaussian vector is nonzero")
}

/// Full-rank random state `G G^dagger / Tr(G G^dagger)` (Hilbert-Schmidt measure).
pub fn random_density_matrix<R: Rng + ?Sized>(layout: &HilbertLayout, rng: &mut R) -> DensityMatrix {
    random_density_matrix_rank(layout, layout.total_dim(), rng)
}

/// Random state of rank at most `rank`; low ranks put eigenvalues at zero,
/// which is where positivity violations show up first.
pub fn random_density_matrix_rank<R: Rng + ?Sized>(layout: &HilbertLayout, rank: usize, rng: &mut R) -> DensityMatrix {
    let d = layout.total_dim();
    let g = ginibre(d, rank.max(1), rng);
    let m = g.dot(&dagger(&g));
    let tr = linalg::trace(&m).re;
    DensityMatrix::from_evolved(m.mapv(|z| z / tr), layout.clone()).expect("Wishart matrix is a state")
}
