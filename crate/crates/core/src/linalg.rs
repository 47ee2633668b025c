//! Dense complex matrix helpers shared by every layer of the crate.
//!
//! Matrices are plain `ndarray` arrays of `Complex64`. Vectorization of
//! operators is column-major throughout: `vec(rho)[i + d*j] = rho[i, j]`,
//! so that `vec(A rho B) = (B^T (x) A) vec(rho)`.

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = Array2<C64>;
pub type CVector = Array1<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    Array2::from_diag_elem(n, ONE)
}

pub fn zeros(n: usize) -> CMatrix {
    Array2::zeros((n, n))
}

/// Conjugate transpose.
pub fn dagger(a: &CMatrix) -> CMatrix {
    a.t().mapv(|z| z.conj())
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for ((i, j), &x) in a.indexed_iter() {
        if x == ZERO {
            continue;
        }
        out.slice_mut(ndarray::s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]).assign(&b.mapv(|y| x * y));
    }
    out
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.dot(b) - b.dot(a)
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.dot(b) + b.dot(a)
}

pub fn trace(a: &CMatrix) -> C64 {
    a.diag().sum()
}

/// Largest entrywise modulus of `a - a^dagger`.
pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    worst
}

pub fn hermitize(a: &CMatrix) -> CMatrix {
    (a + &dagger(a)).mapv(|z| z * 0.5)
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Maximum absolute column sum.
pub fn norm_one(a: &CMatrix) -> f64 {
    a.axis_iter(Axis(1)).map(|col| col.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Column-major vectorization.
pub fn vectorize(a: &CMatrix) -> CVector {
    a.t().iter().copied().collect()
}

pub fn unvectorize(v: &CVector, n: usize) -> CMatrix {
    assert_eq!(v.len(), n * n, "vector length is not a square");
    let mut out = zeros(n);
    for (k, &z) in v.iter().enumerate() {
        out[[k % n, k / n]] = z;
    }
    out
}

fn to_nalgebra(a: &CMatrix) -> nalgebra::DMatrix<C64> {
    nalgebra::DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh(a: &CMatrix) -> Vec<f64> {
    let mut vals: Vec<f64> = to_nalgebra(&hermitize(a)).symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// Eigen-decomposition of a Hermitian matrix. Eigenvalues are ascending and
/// the k-th column of the returned matrix is the matching eigenvector.
pub fn eigh(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    let eig = to_nalgebra(&hermitize(a)).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = Array2::from_shape_fn((n, n), |(i, k)| eig.eigenvectors[(i, order[k])]);
    (vals, vecs)
}

/// Applies `f` to the spectrum of a Hermitian matrix.
pub fn hermitian_function(a: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (vals, vecs) = eigh(a);
    let mut scaled = vecs.clone();
    for (k, mut col) in scaled.axis_iter_mut(Axis(1)).enumerate() {
        let w = f(vals[k]);
        col.mapv_inplace(|z| z * w);
    }
    scaled.dot(&dagger(&vecs))
}

/// `exp(-i h t)` for Hermitian `h`, through its eigenbasis so the result is
/// unitary to rounding.
pub fn unitary_evolution(h: &CMatrix, t: f64) -> CMatrix {
    let (vals, vecs) = eigh(h);
    let mut scaled = vecs.clone();
    for (k, mut col) in scaled.axis_iter_mut(Axis(1)).enumerate() {
        let phase = C64::from_polar(1.0, -vals[k] * t);
        col.mapv_inplace(|z| z * phase);
    }
    scaled.dot(&dagger(&vecs))
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.nrows() });
    }
    let mut lu = a.as_standard_layout().into_owned();
    let mut x = b.as_standard_layout().into_owned();
    let m = x.ncols();
    let scale = norm_one(a).max(f64::MIN_POSITIVE);
    for k in 0..n {
        let (piv, best) =
            (k..n).map(|i| (i, lu[[i, k]].norm())).fold((k, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best <= f64::EPSILON * scale * 1e-3 {
            return Err(Error::Numeric("singular matrix in linear solve".into()));
        }
        if piv != k {
            for j in 0..n {
                lu.swap([k, j], [piv, j]);
            }
            for j in 0..m {
                x.swap([k, j], [piv, j]);
            }
        }
        let pivot_inv = ONE / lu[[k, k]];
        let (top, mut bottom) = lu.view_mut().split_at(Axis(0), k + 1);
        let prow = top.row(k);
        let (xtop, mut xbottom) = x.view_mut().split_at(Axis(0), k + 1);
        let xrow = xtop.row(k);
        for (mut row, mut xr) in bottom.outer_iter_mut().zip(xbottom.outer_iter_mut()) {
            let f = row[k] * pivot_inv;
            if f == ZERO {
                continue;
            }
            row[k] = f;
            for j in k + 1..n {
                row[j] -= f * prow[j];
            }
            for j in 0..m {
                xr[j] -= f * xrow[j];
            }
        }
    }
    for k in (0..n).rev() {
        let pivot_inv = ONE / lu[[k, k]];
        for j in 0..m {
            let mut acc = x[[k, j]];
            for i in k + 1..n {
                acc -= lu[[k, i]] * x[[i, j]];
            }
            x[[k, j]] = acc * pivot_inv;
        }
    }
    Ok(x)
}

// Pade approximant degrees with the backward-error thresholds of
// Higham (2005), "The scaling and squaring method for the matrix
// exponential revisited".
const THETA: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.53939833006323e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
    (13, 5.371920351148152e0),
];

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn pade_coefficients(m: usize) -> Vec<f64> {
    match m {
        3 => vec![120.0, 60.0, 12.0, 1.0],
        5 => vec![30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => vec![17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0],
        9 => vec![
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        _ => PADE13.to_vec(),
    }
}

fn scaled(a: &CMatrix, s: f64) -> CMatrix {
    a.mapv(|z| z * s)
}

/// Matrix exponential by scaling and squaring with a diagonal Pade
/// approximant of degree 3, 5, 7, 9 or 13.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
    }
    if !is_finite(a) {
        return Err(Error::Numeric("non-finite entries in exponent".into()));
    }
    let norm = norm_one(a);
    let ident = identity(n);

    let low = THETA[..4].iter().find(|(_, theta)| norm <= *theta);
    let result = if let Some(&(m, _)) = low {
        let b = pade_coefficients(m);
        let a2 = a.dot(a);
        let mut powers = vec![ident.clone(), a2.clone()];
        for k in 2..=m / 2 {
            let next = powers[k - 1].dot(&a2);
            powers.push(next);
        }
        let mut u = zeros(n);
        let mut v = zeros(n);
        for k in 0..=m / 2 {
            u.scaled_add(C64::from(b[2 * k + 1]), &powers[k]);
            v.scaled_add(C64::from(b[2 * k]), &powers[k]);
        }
        let u = a.dot(&u);
        solve(&(&v - &u), &(&v + &u))?
    } else {
        let squarings = if norm > THETA[4].1 { (norm / THETA[4].1).log2().ceil() as i32 } else { 0 };
        let a = scaled(a, 2f64.powi(-squarings));
        let b = PADE13;
        let a2 = a.dot(&a);
        let a4 = a2.dot(&a2);
        let a6 = a4.dot(&a2);
        let mut inner_u = scaled(&a6, b[13]);
        inner_u.scaled_add(C64::from(b[11]), &a4);
        inner_u.scaled_add(C64::from(b[9]), &a2);
        let mut u = a6.dot(&inner_u);
        u.scaled_add(C64::from(b[7]), &a6);
        u.scaled_add(C64::from(b[5]), &a4);
        u.scaled_add(C64::from(b[3]), &a2);
        u.scaled_add(C64::from(b[1]), &ident);
        let u = a.dot(&u);
        let mut inner_v = scaled(&a6, b[12]);
        inner_v.scaled_add(C64::from(b[10]), &a4);
        inner_v.scaled_add(C64::from(b[8]), &a2);
        let mut v = a6.dot(&inner_v);
        v.scaled_add(C64::from(b[6]), &a6);
        v.scaled_add(C64::from(b[4]), &a4);
        v.scaled_add(C64::from(b[2]), &a2);
        v.scaled_add(C64::from(b[0]), &ident);
        let mut r = solve(&(&v - &u), &(&v + &u))?;
        for _ in 0..squarings {
            r = r.dot(&r);
        }
        r
    };
    if !is_finite(&result) {
        return Err(Error::Numeric("matrix exponential overflowed".into()));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn taylor_expm(a: &CMatrix) -> CMatrix {
        // Plain Taylor series with repeated halving; only for small test inputs.
        let n = a.nrows();
        let squarings = (norm_one(a).max(1.0).log2().ceil() as i32) + 4;
        let a = scaled(a, 2f64.powi(-squarings));
        let mut term = identity(n);
        let mut sum = identity(n);
        for k in 1..30 {
            term = term.dot(&a).mapv(|z| z / k as f64);
            sum += &term;
        }
        for _ in 0..squarings {
            sum = sum.dot(&sum);
        }
        sum
    }

    #[test]
    fn vectorization_is_column_major() {
        let a = Array2::from_shape_fn((3, 3), |(i, j)| c(i as f64, j as f64 + 1.0));
        let b = Array2::from_shape_fn((3, 3), |(i, j)| c((i * j) as f64, -(i as f64)));
        let rho = Array2::from_shape_fn((3, 3), |(i, j)| c((i + 2 * j) as f64, 0.5));
        let lhs = vectorize(&a.dot(&rho).dot(&b));
        let rhs = kron(&b.t().to_owned(), &a).dot(&vectorize(&rho));
        for (x, y) in lhs.iter().zip(rhs.iter()) {
            assert_abs_diff_eq!(x.re, y.re, epsilon = 1e-12);
            assert_abs_diff_eq!(x.im, y.im, epsilon = 1e-12);
        }
        assert_eq!(unvectorize(&vectorize(&rho), 3), rho);
    }

    #[test]
    fn expm_matches_taylor_across_pade_degrees() {
        for &scale in &[1e-3, 0.1, 0.8, 2.0, 4.0, 40.0] {
            let a = Array2::from_shape_fn((5, 5), |(i, j)| {
                c(((i * 3 + j) % 7) as f64 - 3.0, ((i + 2 * j) % 5) as f64 - 2.0) * (scale / 20.0)
            });
            let e = expm(&a).unwrap();
            let t = taylor_expm(&a);
            let rel = frobenius(&(&e - &t)) / frobenius(&t);
            assert!(rel < 1e-11, "scale {scale}: relative error {rel}");
        }
    }

    #[test]
    fn expm_of_rotation_generator() {
        let theta = 0.7;
        let a = Array2::from_shape_vec((2, 2), vec![ZERO, c(-theta, 0.0), c(theta, 0.0), ZERO]).unwrap();
        let e = expm(&a).unwrap();
        assert_abs_diff_eq!(e[[0, 0]].re, theta.cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(e[[1, 0]].re, theta.sin(), epsilon = 1e-14);
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = Array2::from_shape_fn((6, 6), |(i, j)| {
            c(if i == j { 4.0 } else { 1.0 / (1 + i + j) as f64 }, (i as f64 - j as f64) * 0.1)
        });
        let x = Array2::from_shape_fn((6, 2), |(i, j)| c(i as f64, j as f64));
        let b = a.dot(&x);
        let got = solve(&a, &b).unwrap();
        assert!(max_abs(&(&got - &x)) < 1e-12);
    }

    #[test]
    fn solve_rejects_singular() {
        let a = zeros(3);
        assert!(matches!(solve(&a, &identity(3)), Err(Error::Numeric(_))));
    }

    #[test]
    fn eigh_reconstructs_input() {
        let h = hermitize(&Array2::from_shape_fn((4, 4), |(i, j)| c((i + j) as f64, i as f64 - 2.0 * j as f64)));
        let (vals, vecs) = eigh(&h);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let diag = Array2::from_diag(&Array1::from_iter(vals.iter().map(|&v| C64::from(v))));
        let back = vecs.dot(&diag).dot(&dagger(&vecs));
        assert!(max_abs(&(&back - &h)) < 1e-12);
    }
}
