//! Generalized block skew-symmetric matrices `[[A, B], [−Bᵀ, C]]`.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::saddle::BlockHessian;
use crate::{Matrix, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct GbssMatrix {
    blocks: BlockHessian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl BoundCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, holds: lhs <= rhs + 1e-10 }
    }
}

impl GbssMatrix {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        Ok(Self { blocks: BlockHessian::new(a, b, c)? })
    }

    pub fn from_blocks(blocks: BlockHessian) -> Self {
        Self { blocks }
    }

    /// Splits `m` at `n`, checking the block template to `tol`.
    pub fn from_matrix(m: &Matrix, n: usize, tol: f64) -> Result<Self> {
        if !m.is_square() || n > m.nrows() {
            return Err(Error::Dimension(format!("cannot split {:?} at {n}", m.shape())));
        }
        let k = m.nrows() - n;
        let a = m.view((0, 0), (n, n));
        let b = m.view((0, n), (n, k));
        let bt = m.view((n, 0), (k, n));
        let c = m.view((n, n), (k, k));
        let skew = (b.transpose() + bt).amax();
        let sym_a = (a - a.transpose()).amax();
        let sym_c = (c - c.transpose()).amax();
        let worst = skew.max(sym_a).max(sym_c);
        if worst > tol {
            return Err(Error::Structure(format!("deviation {worst:e} exceeds {tol:e}")));
        }
        Ok(Self {
            blocks: BlockHessian {
                a: linalg::symmetrize(&a.into_owned()),
                b: b.into_owned(),
                c: linalg::symmetrize(&c.into_owned()),
            },
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.blocks.a
    }

    pub fn b(&self) -> &Matrix {
        &self.blocks.b
    }

    pub fn c(&self) -> &Matrix {
        &self.blocks.c
    }

    pub fn n(&self) -> usize {
        self.blocks.n()
    }

    pub fn assemble(&self) -> Matrix {
        self.blocks.assemble()
    }

    pub fn norm(&self) -> f64 {
        linalg::op_norm(&self.assemble())
    }

    /// `diag(γA + BBᵀ, γC + BᵀB)`.
    pub fn envelope(&self, gamma: f64) -> Matrix {
        let (a, b, c) = (self.a(), self.b(), self.c());
        linalg::block_diag(&(a * gamma + b * b.transpose()), &(c * gamma + b.transpose() * b))
    }

    /// Random instance with `A = GᵀG`, `C = HᵀH`.
    pub fn random<R: Rng>(rng: &mut R, n: usize, m: usize) -> Self {
        let mut draw = |r: usize, c: usize| Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
        let g = draw(n, n);
        let h = draw(m, m);
        let b = draw(n, m);
        Self { blocks: BlockHessian { a: g.transpose() * &g, b, c: h.transpose() * &h } }
    }
}

/// `Mⁱ` by repeated multiplication, split back into blocks.
pub fn power_blocks(m: &GbssMatrix, i: usize) -> Result<GbssMatrix> {
    if i == 0 {
        return Err(Error::Precondition("power must be at least 1".into()));
    }
    let base = m.assemble();
    let mut p = base.clone();
    for _ in 1..i {
        p = &p * &base;
    }
    let scale = m.norm().powi(i as i32).max(f64::MIN_POSITIVE);
    GbssMatrix::from_matrix(&p, m.n(), 1e-10 * scale)
}

fn check_gamma(m: &GbssMatrix, gamma: f64) -> Result<()> {
    let norm = m.norm();
    if gamma < norm * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!("γ = {gamma} is below ‖M‖ = {norm}")));
    }
    Ok(())
}

/// `|cᵀMⁱc| ≤ (i−1)γ^{i−2} cᵀ diag(γA + BBᵀ, γC + BᵀB) c`.
pub fn check_power_bound(m: &GbssMatrix, gamma: f64, i: usize, c: &Vector) -> Result<BoundCheck> {
    if i < 3 {
        return Err(Error::Precondition("power bound needs i ≥ 3".into()));
    }
    check_gamma(m, gamma)?;
    let p = power_blocks(m, i)?.assemble();
    let lhs = c.dot(&(p * c)).abs();
    let rhs = (i - 1) as f64 * gamma.powi(i as i32 - 2) * c.dot(&(m.envelope(gamma) * c));
    Ok(BoundCheck::new(lhs, rhs))
}

/// `|sʲ cᵀMʲ (I + s/2·M + s³/2·M³)⁻¹ c| ≤ s² (1 − sγ − 4s³γ³)⁻¹ (2sγ)^{j−2} cᵀ diag(γA + BBᵀ, γC + BᵀB) c`.
pub fn check_resolvent_bound(m: &GbssMatrix, gamma: f64, s: f64, j: usize, c: &Vector) -> Result<BoundCheck> {
    if j < 3 {
        return Err(Error::Precondition("resolvent bound needs j ≥ 3".into()));
    }
    check_gamma(m, gamma)?;
    if !(s > 0.0) || s * gamma >= 0.5 {
        return Err(Error::Precondition(format!("need 0 < sγ < 1/2, got {}", s * gamma)));
    }
    let full = m.assemble();
    let dim = full.nrows();
    let m3 = &full * &full * &full;
    let res = Matrix::identity(dim, dim) + &full * (s / 2.0) + m3 * (s.powi(3) / 2.0);
    let solved = res.lu().solve(c).ok_or_else(|| Error::Singular("resolvent".into()))?;
    let pj = power_blocks(m, j)?.assemble();
    let lhs = (s.powi(j as i32) * c.dot(&(pj * solved))).abs();
    let denom = 1.0 - s * gamma - 4.0 * (s * gamma).powi(3);
    let rhs = s * s / denom * (2.0 * s * gamma).powi(j as i32 - 2) * c.dot(&(m.envelope(gamma) * c));
    Ok(BoundCheck::new(lhs, rhs))
}

/// Minimum eigenvalues of `S₁²+S₂² ∓ (S₁S₂+S₂S₁)`; both are nonnegative in exact arithmetic.
pub fn fact1_margins(s1: &Matrix, s2: &Matrix) -> (f64, f64) {
    let sq = s1 * s1 + s2 * s2;
    let cross = s1 * s2 + s2 * s1;
    (linalg::min_eigenvalue(&(&sq - &cross)), linalg::min_eigenvalue(&(&sq + &cross)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rotation() -> GbssMatrix {
        GbssMatrix::new(Matrix::zeros(1, 1), Matrix::from_element(1, 1, 1.0), Matrix::zeros(1, 1)).unwrap()
    }

    #[test]
    fn small_powers() {
        let sq = power_blocks(&rotation(), 2).unwrap();
        assert_eq!((sq.a()[(0, 0)], sq.b()[(0, 0)], sq.c()[(0, 0)]), (-1.0, 0.0, -1.0));
        let fig = GbssMatrix::new(Matrix::from_element(1, 1, 1.0), Matrix::from_element(1, 1, 2.0), Matrix::from_element(1, 1, 1.0)).unwrap();
        let sq = power_blocks(&fig, 2).unwrap();
        assert_eq!(sq.assemble(), Matrix::from_row_slice(2, 2, &[-3.0, 4.0, -4.0, -3.0]));
        assert_eq!(power_blocks(&fig, 1).unwrap(), fig);
    }

    #[test]
    fn power_bound_examples() {
        let c = Vector::from_vec(vec![1.0, 0.0]);
        let chk = check_power_bound(&rotation(), 1.0, 3, &c).unwrap();
        assert_eq!(chk.lhs, 0.0);
        assert!((chk.rhs - 2.0).abs() < 1e-15 && chk.holds);
        let zero = check_power_bound(&rotation(), 1.0, 5, &Vector::zeros(2)).unwrap();
        assert_eq!((zero.lhs, zero.rhs), (0.0, 0.0));
        assert!(check_power_bound(&rotation(), 0.5, 3, &c).is_err());
    }

    #[test]
    fn resolvent_example() {
        let c = Vector::from_vec(vec![1.0, 1.0]);
        let chk = check_resolvent_bound(&rotation(), 1.0, 0.1, 3, &c).unwrap();
        let rhs = 0.01 / (1.0 - 0.1 - 0.004) * 0.2 * 2.0;
        assert!((chk.rhs - rhs).abs() < 1e-15);
        assert!(chk.holds);
        assert!(check_resolvent_bound(&rotation(), 1.0, 0.6, 3, &c).is_err());
    }

    #[test]
    fn structure_violation_detected() {
        let m = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(GbssMatrix::from_matrix(&m, 1, 1e-10), Err(Error::Structure(_))));
    }

    #[test]
    fn random_blocks_are_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = GbssMatrix::random(&mut rng, 3, 2);
        assert!(linalg::min_eigenvalue(g.a()) >= -1e-12);
        assert!(linalg::min_eigenvalue(g.c()) >= -1e-12);
    }
}
