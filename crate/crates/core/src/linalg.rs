//! Small dense linear-algebra helpers shared across modules.

use nalgebra::SymmetricEigen;

use crate::{Matrix, Vector};

/// Relative singular-value cutoff for rank decisions.
pub const RANK_CUTOFF: f64 = 1e-10;

pub fn is_symmetric(m: &Matrix, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= rel_tol * scale
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

pub fn max_eigenvalue(m: &Matrix) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// Smallest eigenvalue together with a unit eigenvector.
pub fn min_eigenpair(m: &Matrix) -> (f64, Vector) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let (idx, val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .expect("non-empty matrix");
    (val, eig.eigenvectors.column(idx).into_owned())
}

/// Smallest eigenvalue above `cutoff * max|eig|` of a PSD matrix.
pub fn min_positive_eigenvalue(m: &Matrix) -> Option<f64> {
    let ev = sym_eigenvalues(m);
    let top = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if top == 0.0 {
        return None;
    }
    ev.into_iter().find(|v| *v > RANK_CUTOFF * top)
}

pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Spectral norm.
pub fn op_norm(m: &Matrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Orthonormal basis of the column space, using the relative rank cutoff.
pub fn range_basis(m: &Matrix) -> Matrix {
    let rows = m.nrows();
    if rows == 0 || m.ncols() == 0 {
        return Matrix::zeros(rows, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left vectors requested");
    let top = svd.singular_values.max();
    if top == 0.0 {
        return Matrix::zeros(rows, 0);
    }
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > RANK_CUTOFF * top)
        .collect();
    Matrix::from_fn(rows, keep.len(), |r, c| u[(r, keep[c])])
}

pub fn rank(m: &Matrix) -> usize {
    range_basis(m).ncols()
}

pub fn identity(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

pub fn block_diag(a: &Matrix, c: &Matrix) -> Matrix {
    let (n, m) = (a.nrows(), c.nrows());
    let mut out = Matrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((n, n), (m, m)).copy_from(c);
    out
}

pub fn from_rows(rows: &[Vec<f64>]) -> Option<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if rows.iter().any(|row| row.len() != c) {
        return None;
    }
    Some(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
