//! Dense matrix helpers shared by every module: the degree operator, a
//! deterministic power-iteration spectral norm and a symmetric eigensolver
//! with a fixed ordering and sign convention.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::rng::child_seed;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub const POWER_TOL: f64 = 1e-8;

/// Row sums `A·1`.
pub fn row_sums(a: &Matrix) -> Vector {
    Vector::from_iterator(a.nrows(), a.row_iter().map(|r| r.sum()))
}

/// The degree operator `D(A) = diag(A·1)`.
pub fn degree_operator(a: &Matrix) -> Matrix {
    Matrix::from_diagonal(&row_sums(a))
}

pub fn is_symmetric(a: &Matrix, tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let n = a.nrows();
    (0..n).all(|i| (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= tol))
}

/// Replace `a` by `(a + aᵀ)/2`.
pub fn symmetrize(a: &mut Matrix) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest singular value by power iteration on `AᵀA`.
///
/// Starts from the normalised all-ones vector; if that start is (numerically)
/// in the null space it is replaced by a fixed pseudo-random vector. Stops when
/// the estimate changes by less than [`POWER_TOL`] relative, or after `10·n`
/// iterations.
pub fn spectral_norm(a: &Matrix) -> f64 {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let fro = a.norm();
    if fro == 0.0 {
        return 0.0;
    }
    let stall = 1e-13 * fro;
    let mut x = Vector::from_element(cols, 1.0 / (cols as f64).sqrt());
    let mut y = a * &x;
    let mut attempt = 0;
    while y.norm() <= stall && attempt < 4 {
        x = perturbed_start(cols, attempt);
        y = a * &x;
        attempt += 1;
    }
    let mut sigma = y.norm();
    let cap = 10 * rows.max(cols);
    for _ in 0..cap {
        let z = a.tr_mul(&y);
        let zn = z.norm();
        if zn == 0.0 {
            break;
        }
        x = z / zn;
        y = a * &x;
        let next = y.norm();
        let done = (next - sigma).abs() <= POWER_TOL * next;
        sigma = next;
        if done {
            break;
        }
    }
    sigma
}

fn perturbed_start(len: usize, attempt: u64) -> Vector {
    let v = Vector::from_iterator(
        len,
        (0..len as u64).map(|i| {
            let bits = child_seed(0x5EED ^ attempt, i) >> 11;
            1.0 + (bits as f64 / (1u64 << 53) as f64 - 0.5)
        }),
    );
    let norm = v.norm();
    v / norm
}

/// Eigen-decomposition of a symmetric matrix with values in descending
/// order. Each eigenvector's first entry with magnitude above `1e-12` is made
/// positive; equal eigenvalues are ordered lexicographically by the
/// normalised vectors.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, aligned with `values`.
    pub vectors: Matrix,
}

pub fn sym_eigen(a: &Matrix) -> Result<SymEigen> {
    if !a.is_square() {
        return Err(Error::Eigen(format!(
            "matrix is {}x{}, not square",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 100_000 + 100 * n)
        .ok_or_else(|| Error::Eigen("symmetric QR iteration did not converge".into()))?;
    let mut cols: Vec<(f64, Vector)> = (0..n)
        .map(|i| {
            let mut v: Vector = eig.eigenvectors.column(i).into_owned();
            if let Some(first) = v.iter().copied().find(|x| x.abs() > 1e-12) {
                if first < 0.0 {
                    v.neg_mut();
                }
            }
            (eig.eigenvalues[i], v)
        })
        .collect();
    if cols.iter().any(|(l, _)| !l.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    cols.sort_by(|(la, va), (lb, vb)| {
        lb.total_cmp(la).then_with(|| {
            va.iter()
                .zip(vb.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let values = cols.iter().map(|(l, _)| *l).collect();
    let vectors = Matrix::from_columns(&cols.iter().map(|(_, v)| v.clone()).collect::<Vec<_>>());
    Ok(SymEigen { values, vectors })
}

/// Descending eigenvalues of a symmetric matrix.
pub fn sym_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::Eigen("matrix is not square".into()));
    }
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 100_000 + 100 * a.nrows())
        .ok_or_else(|| Error::Eigen("symmetric QR iteration did not converge".into()))?;
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(v)
}

/// Orthogonal projector `U Uᵀ` onto the column span of an orthonormal `U`.
pub fn projector(basis: &Matrix) -> Matrix {
    basis * basis.transpose()
}
