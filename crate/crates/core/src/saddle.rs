//! Minimax problem instances and the derivative oracles consumed elsewhere.
//!
//! A problem `min_x max_y L(x, y)` is represented by its saddle field
//! `F(z) = (∇_x L, −∇_y L)` with `z = (x, y)`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::{Matrix, Vector};

/// A point `z = (x, y)` stored contiguously with the split index `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    z: Vector,
    n: usize,
}

impl Point {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        let z = Vector::from_iterator(x.len() + y.len(), x.iter().chain(y.iter()).copied());
        Self { z, n: x.len() }
    }

    /// Wraps an existing vector; `n` may be anything up to `z.len()`.
    pub fn from_vector(z: Vector, n: usize) -> Result<Self> {
        if n > z.len() {
            return Err(Error::Dimension(format!("split {n} exceeds length {}", z.len())));
        }
        Ok(Self { z, n })
    }

    pub fn x(&self) -> nalgebra::DVectorView<'_, f64> {
        self.z.rows(0, self.n)
    }

    pub fn y(&self) -> nalgebra::DVectorView<'_, f64> {
        self.z.rows(self.n, self.z.len() - self.n)
    }

    pub fn z(&self) -> &Vector {
        &self.z
    }

    pub fn into_vector(self) -> Vector {
        self.z
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.z.len() - self.n
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Blocks of `∇F = [[A, B], [−Bᵀ, C]]`: `A = ∇xx L`, `B = ∇xy L`, `C = −∇yy L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockHessian {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl BlockHessian {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let (n, m) = (a.nrows(), c.nrows());
        if !a.is_square() || !c.is_square() || b.shape() != (n, m) {
            return Err(Error::Dimension(format!(
                "A {:?}, B {:?}, C {:?}",
                a.shape(),
                b.shape(),
                c.shape()
            )));
        }
        if !linalg::is_symmetric(&a, 1e-12) || !linalg::is_symmetric(&c, 1e-12) {
            return Err(Error::InvalidProblem("A and C must be symmetric".into()));
        }
        Ok(Self { a, b, c })
    }

    /// Splits a full Jacobian at index `n`, symmetrizing the diagonal blocks.
    pub fn from_jacobian(j: &Matrix, n: usize) -> Self {
        let m = j.nrows() - n;
        Self {
            a: linalg::symmetrize(&j.view((0, 0), (n, n)).into_owned()),
            b: j.view((0, n), (n, m)).into_owned(),
            c: linalg::symmetrize(&j.view((n, n), (m, m)).into_owned()),
        }
    }

    pub fn assemble(&self) -> Matrix {
        let (n, m) = (self.a.nrows(), self.c.nrows());
        let mut j = Matrix::zeros(n + m, n + m);
        j.view_mut((0, 0), (n, n)).copy_from(&self.a);
        j.view_mut((0, n), (n, m)).copy_from(&self.b);
        j.view_mut((n, 0), (m, n)).copy_from(&(-self.b.transpose()));
        j.view_mut((n, n), (m, m)).copy_from(&self.c);
        j
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.c.nrows()
    }
}

/// Scalar function `φ(t) = a·t²/2 + b·t⁴/4 + c·ln cosh t` with derivatives of every order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarFn {
    #[serde(default)]
    pub quadratic: f64,
    #[serde(default)]
    pub quartic: f64,
    #[serde(default)]
    pub logcosh: f64,
}

impl ScalarFn {
    pub fn quadratic(a: f64) -> Self {
        Self { quadratic: a, quartic: 0.0, logcosh: 0.0 }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.derivative(0, t)
    }

    /// `p`-th derivative at `t`.
    pub fn derivative(&self, p: usize, t: f64) -> f64 {
        let (a, b, c) = (self.quadratic, self.quartic, self.logcosh);
        let poly = match p {
            0 => a * t * t / 2.0 + b * t.powi(4) / 4.0,
            1 => a * t + b * t.powi(3),
            2 => a + 3.0 * b * t * t,
            3 => 6.0 * b * t,
            4 => 6.0 * b,
            _ => 0.0,
        };
        let lc = if c == 0.0 {
            0.0
        } else if p == 0 {
            // ln cosh t = |t| + ln(1 + e^{-2|t|}) − ln 2, stable for large |t|.
            let at = t.abs();
            at + (-2.0 * at).exp().ln_1p() - std::f64::consts::LN_2
        } else {
            eval_poly(&logcosh_poly(p), t.tanh())
        };
        poly + c * lc
    }

    /// Global lower bound on `φ''`; `-inf` when unbounded below.
    pub fn curvature_lower_bound(&self) -> f64 {
        if self.quartic < 0.0 {
            return f64::NEG_INFINITY;
        }
        self.quadratic + self.logcosh.min(0.0)
    }
}

/// Coefficients (ascending) of the polynomial `P_p(u)` with
/// `d^p/dt^p ln cosh t = P_p(tanh t)`.
fn logcosh_poly(p: usize) -> Vec<f64> {
    let mut poly = vec![0.0, 1.0];
    for _ in 1..p {
        let deriv: Vec<f64> = (1..poly.len()).map(|k| k as f64 * poly[k]).collect();
        // multiply by (1 − u²)
        let mut next = vec![0.0; deriv.len() + 2];
        for (k, c) in deriv.iter().enumerate() {
            next[k] += c;
            next[k + 2] -= c;
        }
        poly = next;
    }
    poly
}

fn eval_poly(coeffs: &[f64], u: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

/// `L = Σφ(C₁x) + xᵀBy − Σψ(C₂y)`.
#[derive(Clone, Debug)]
pub struct Composite {
    pub f: ScalarFn,
    pub g: ScalarFn,
    pub c1: Matrix,
    pub c2: Matrix,
    pub b: Matrix,
}

/// `L = g·z + ½zᵀQz + ⅙T(z,z,z)` with symmetric `Q` and `T`.
#[derive(Clone, Debug)]
struct Cubic {
    lin: Vector,
    q: Matrix,
    /// `t[i]` is the symmetric slice `T[i, ·, ·]`.
    t: Vec<Matrix>,
    sign: Vector,
}

type FieldFn = dyn Fn(&Vector) -> Vector + Send + Sync;

#[derive(Clone)]
enum Oracle {
    /// `F(z) = J z + offset`.
    Affine { jac: Matrix, offset: Vector, blocks: BlockHessian },
    Composite(Composite),
    Cubic(Cubic),
    Custom { field: Arc<FieldFn>, fallback: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Bilinear,
    Quadratic,
    Separable,
    #[serde(rename = "appendix_a")]
    Composite,
    CustomCubic,
    Custom,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Bilinear => "bilinear",
            Family::Quadratic => "quadratic",
            Family::Separable => "separable",
            Family::Composite => "appendix_a",
            Family::CustomCubic => "custom_cubic",
            Family::Custom => "custom",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProblemMeta {
    pub name: String,
    pub family: Family,
    pub params: serde_json::Value,
}

/// A smooth minimax problem with field, Jacobian and higher derivative oracles.
#[derive(Clone)]
pub struct SaddleProblem {
    n: usize,
    m: usize,
    meta: ProblemMeta,
    nonconvex: bool,
    oracle: Oracle,
}

impl fmt::Debug for SaddleProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SaddleProblem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("meta", &self.meta)
            .finish()
    }
}

type Rows = Vec<Vec<f64>>;

/// JSON problem description: `{"family": ..., "params": {...}, "seed": u64?}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    #[serde(flatten)]
    pub family: FamilySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum FamilySpec {
    Bilinear {
        b: Rows,
    },
    Quadratic {
        a: Rows,
        b: Rows,
        c: Rows,
        #[serde(default)]
        d: Option<Vec<f64>>,
        #[serde(default)]
        e: Option<Vec<f64>>,
        #[serde(default)]
        nonconvex: bool,
    },
    Separable {
        f: ScalarFn,
        g: ScalarFn,
        b: Rows,
        #[serde(default)]
        nonconvex: bool,
    },
    #[serde(rename = "appendix_a")]
    Composite {
        f: ScalarFn,
        g: ScalarFn,
        c1: Rows,
        c2: Rows,
        b: Rows,
        #[serde(default)]
        nonconvex: bool,
    },
    CustomCubic {
        n: usize,
        m: usize,
        #[serde(default = "default_cubic_scale")]
        scale: f64,
    },
}

fn default_cubic_scale() -> f64 {
    0.5
}

impl ProblemSpec {
    pub fn new(family: FamilySpec) -> Self {
        Self { family, seed: None, name: None }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn bilinear(b: &Matrix) -> Self {
        Self::new(FamilySpec::Bilinear { b: linalg::to_rows(b) })
    }

    pub fn quadratic(a: &Matrix, b: &Matrix, c: &Matrix) -> Self {
        Self::new(FamilySpec::Quadratic {
            a: linalg::to_rows(a),
            b: linalg::to_rows(b),
            c: linalg::to_rows(c),
            d: None,
            e: None,
            nonconvex: false,
        })
    }

    pub fn build(&self) -> Result<SaddleProblem> {
        build_problem(self)
    }
}

fn matrix(rows: &Rows, what: &str) -> Result<Matrix> {
    linalg::from_rows(rows).ok_or_else(|| Error::Dimension(format!("ragged rows in `{what}`")))
}

fn check_psd(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() == 0 {
        return Ok(());
    }
    let tol = 1e-12 * m.amax().max(1.0);
    if linalg::min_eigenvalue(m) < -tol {
        return Err(Error::InvalidProblem(format!(
            "{what} is not positive semidefinite (set `nonconvex` to allow)"
        )));
    }
    Ok(())
}

/// Builds a problem from its JSON-level description.
pub fn build_problem(spec: &ProblemSpec) -> Result<SaddleProblem> {
    let params = serde_json::to_value(&spec.family)
        .ok()
        .and_then(|v| v.get("params").cloned())
        .unwrap_or(serde_json::Value::Null);
    let mut problem = match &spec.family {
        FamilySpec::Bilinear { b } => {
            let b = matrix(b, "b")?;
            let (n, m) = b.shape();
            SaddleProblem::quadratic_parts(
                Matrix::zeros(n, n),
                b,
                Matrix::zeros(m, m),
                Vector::zeros(n),
                Vector::zeros(m),
                false,
                Family::Bilinear,
            )?
        }
        FamilySpec::Quadratic { a, b, c, d, e, nonconvex } => {
            let (a, b, c) = (matrix(a, "a")?, matrix(b, "b")?, matrix(c, "c")?);
            let d = d.as_ref().map_or_else(|| Vector::zeros(a.nrows()), |v| Vector::from_column_slice(v));
            let e = e.as_ref().map_or_else(|| Vector::zeros(c.nrows()), |v| Vector::from_column_slice(v));
            SaddleProblem::quadratic_parts(a, b, c, d, e, *nonconvex, Family::Quadratic)?
        }
        FamilySpec::Separable { f, g, b, nonconvex } => {
            let b = matrix(b, "b")?;
            let (n, m) = b.shape();
            SaddleProblem::composite_parts(
                Composite { f: *f, g: *g, c1: linalg::identity(n), c2: linalg::identity(m), b },
                *nonconvex,
                Family::Separable,
            )?
        }
        FamilySpec::Composite { f, g, c1, c2, b, nonconvex } => SaddleProblem::composite_parts(
            Composite { f: *f, g: *g, c1: matrix(c1, "c1")?, c2: matrix(c2, "c2")?, b: matrix(b, "b")? },
            *nonconvex,
            Family::Composite,
        )?,
        FamilySpec::CustomCubic { n, m, scale } => {
            SaddleProblem::random_cubic(*n, *m, *scale, spec.seed.unwrap_or(0))?
        }
    };
    problem.meta.params = params;
    if let Some(name) = &spec.name {
        problem.meta.name = name.clone();
    }
    Ok(problem)
}

/// `F(z)` for a point.
pub fn eval_field(problem: &SaddleProblem, z: &Point) -> Result<Vector> {
    problem.field(z.z())
}

/// `∇ᵏF(z)(d₁, …, d_k)`.
pub fn eval_derivative_tensor(problem: &SaddleProblem, z: &Point, dirs: &[&Vector]) -> Result<Vector> {
    problem.derivative_tensor(z.z(), dirs)
}

impl SaddleProblem {
    fn quadratic_parts(
        a: Matrix,
        b: Matrix,
        c: Matrix,
        d: Vector,
        e: Vector,
        nonconvex: bool,
        family: Family,
    ) -> Result<Self> {
        let (n, m) = (a.nrows(), c.nrows());
        if d.len() != n || e.len() != m {
            return Err(Error::Dimension(format!(
                "d has length {} (expected {n}), e has length {} (expected {m})",
                d.len(),
                e.len()
            )));
        }
        let blocks = BlockHessian::new(a, b, c)?;
        if !nonconvex {
            check_psd(&blocks.a, "A")?;
            check_psd(&blocks.c, "C")?;
        }
        let jac = blocks.assemble();
        let mut offset = Vector::zeros(n + m);
        offset.rows_mut(0, n).copy_from(&d);
        offset.rows_mut(n, m).copy_from(&(-e));
        Ok(Self {
            n,
            m,
            meta: ProblemMeta { name: family.to_string(), family, params: serde_json::Value::Null },
            nonconvex,
            oracle: Oracle::Affine { jac, offset, blocks },
        })
    }

    fn composite_parts(parts: Composite, nonconvex: bool, family: Family) -> Result<Self> {
        let (n, m) = parts.b.shape();
        if parts.c1.ncols() != n || parts.c2.ncols() != m {
            return Err(Error::Dimension(format!(
                "C1 {:?} and C2 {:?} incompatible with B {:?}",
                parts.c1.shape(),
                parts.c2.shape(),
                parts.b.shape()
            )));
        }
        if !nonconvex && (parts.f.curvature_lower_bound() < 0.0 || parts.g.curvature_lower_bound() < 0.0) {
            return Err(Error::InvalidProblem(
                "f and g must be convex (set `nonconvex` to allow)".into(),
            ));
        }
        Ok(Self {
            n,
            m,
            meta: ProblemMeta { name: family.to_string(), family, params: serde_json::Value::Null },
            nonconvex,
            oracle: Oracle::Composite(parts),
        })
    }

    fn random_cubic(n: usize, m: usize, scale: f64, seed: u64) -> Result<Self> {
        let dim = n + m;
        if dim == 0 {
            return Err(Error::Dimension("empty cubic problem".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || scale * rng.gen_range(-1.0..1.0);
        let lin = Vector::from_fn(dim, |_, _| draw());
        let mut q = Matrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = draw();
                q[(i, j)] = v;
                q[(j, i)] = v;
            }
        }
        let mut t = vec![Matrix::zeros(dim, dim); dim];
        for i in 0..dim {
            for j in i..dim {
                for k in j..dim {
                    let v = draw();
                    for (a, b, c) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
                        t[a][(b, c)] = v;
                    }
                }
            }
        }
        let sign = Vector::from_fn(dim, |i, _| if i < n { 1.0 } else { -1.0 });
        Ok(Self {
            n,
            m,
            meta: ProblemMeta {
                name: format!("custom_cubic(seed={seed})"),
                family: Family::CustomCubic,
                params: serde_json::Value::Null,
            },
            nonconvex: true,
            oracle: Oracle::Cubic(Cubic { lin, q, t, sign }),
        })
    }

    /// Problem defined by an arbitrary field closure. Derivatives come from
    /// central finite differences when `fallback` is set and are refused otherwise.
    pub fn custom<Fld>(name: &str, n: usize, m: usize, field: Fld, fallback: bool) -> Self
    where
        Fld: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        Self {
            n,
            m,
            meta: ProblemMeta { name: name.to_string(), family: Family::Custom, params: serde_json::Value::Null },
            nonconvex: true,
            oracle: Oracle::Custom { field: Arc::new(field), fallback },
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    pub fn family(&self) -> Family {
        self.meta.family
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn is_nonconvex(&self) -> bool {
        self.nonconvex
    }

    pub fn is_affine(&self) -> bool {
        matches!(self.oracle, Oracle::Affine { .. })
    }

    /// `(J, b)` with `F(z) = Jz + b` for affine fields.
    pub fn affine_parts(&self) -> Option<(&Matrix, &Vector)> {
        match &self.oracle {
            Oracle::Affine { jac, offset, .. } => Some((jac, offset)),
            _ => None,
        }
    }

    /// Constant blocks of a quadratic problem.
    pub fn quadratic_blocks(&self) -> Option<&BlockHessian> {
        match &self.oracle {
            Oracle::Affine { blocks, .. } => Some(blocks),
            _ => None,
        }
    }

    pub fn composite(&self) -> Option<&Composite> {
        match &self.oracle {
            Oracle::Composite(c) => Some(c),
            _ => None,
        }
    }

    /// Highest derivative order served analytically; `None` means every order.
    pub fn max_analytic_order(&self) -> Option<usize> {
        match self.oracle {
            Oracle::Custom { .. } => Some(0),
            _ => None,
        }
    }

    /// Exact `‖∇F‖` when the Jacobian is constant.
    pub fn exact_gamma(&self) -> Option<f64> {
        self.affine_parts().map(|(j, _)| linalg::op_norm(j))
    }

    fn check_len(&self, z: &Vector) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::Dimension(format!("point has length {}, expected {}", z.len(), self.dim())));
        }
        Ok(())
    }

    pub fn field(&self, z: &Vector) -> Result<Vector> {
        self.check_len(z)?;
        Ok(self.field_raw(z))
    }

    pub(crate) fn field_raw(&self, z: &Vector) -> Vector {
        match &self.oracle {
            Oracle::Affine { jac, offset, .. } => jac * z + offset,
            Oracle::Composite(p) => {
                let (x, y) = (z.rows(0, self.n), z.rows(self.n, self.m));
                let u = &p.c1 * x;
                let v = &p.c2 * y;
                let du = u.map(|t| p.f.derivative(1, t));
                let dv = v.map(|t| p.g.derivative(1, t));
                let fx = p.c1.transpose() * du + &p.b * y;
                let fy = -(p.b.transpose() * x) + p.c2.transpose() * dv;
                stack(&fx, &fy)
            }
            Oracle::Cubic(c) => {
                let mut out = &c.lin + &c.q * z;
                for i in 0..z.len() {
                    out[i] += 0.5 * z.dot(&(&c.t[i] * z));
                }
                out.component_mul(&c.sign)
            }
            Oracle::Custom { field, .. } => field(z),
        }
    }

    /// Full Jacobian `∇F(z)`.
    pub fn jacobian(&self, z: &Vector) -> Result<Matrix> {
        self.check_len(z)?;
        match &self.oracle {
            Oracle::Affine { jac, .. } => Ok(jac.clone()),
            Oracle::Composite(p) => {
                let (x, y) = (z.rows(0, self.n), z.rows(self.n, self.m));
                let hu = (&p.c1 * x).map(|t| p.f.derivative(2, t));
                let hv = (&p.c2 * y).map(|t| p.g.derivative(2, t));
                let a = p.c1.transpose() * Matrix::from_diagonal(&hu) * &p.c1;
                let c = p.c2.transpose() * Matrix::from_diagonal(&hv) * &p.c2;
                Ok(BlockHessian { a, b: p.b.clone(), c }.assemble())
            }
            Oracle::Cubic(c) => {
                let dim = z.len();
                let mut j = c.q.clone();
                for i in 0..dim {
                    let row = &c.t[i] * z;
                    for k in 0..dim {
                        j[(i, k)] += row[k];
                    }
                }
                for i in 0..dim {
                    j.row_mut(i).scale_mut(c.sign[i]);
                }
                Ok(j)
            }
            Oracle::Custom { fallback, .. } => {
                if !fallback {
                    return Err(self.order_error(1));
                }
                let dim = z.len();
                let mut j = Matrix::zeros(dim, dim);
                for k in 0..dim {
                    let e = Vector::from_fn(dim, |i, _| if i == k { 1.0 } else { 0.0 });
                    j.set_column(k, &self.finite_difference(z, &[&e]));
                }
                Ok(j)
            }
        }
    }

    pub fn block_hessian(&self, z: &Vector) -> Result<BlockHessian> {
        Ok(BlockHessian::from_jacobian(&self.jacobian(z)?, self.n))
    }

    fn order_error(&self, order: usize) -> Error {
        Error::DerivativeOrder { order, problem: self.meta.name.clone() }
    }

    /// `∇ᵏF(z)` contracted against `dirs` (`k = dirs.len()`, `k = 0` gives `F`).
    pub fn derivative_tensor(&self, z: &Vector, dirs: &[&Vector]) -> Result<Vector> {
        self.check_len(z)?;
        if let Some(d) = dirs.iter().find(|d| d.len() != self.dim()) {
            return Err(Error::Dimension(format!("direction has length {}, expected {}", d.len(), self.dim())));
        }
        let k = dirs.len();
        if k == 0 {
            return Ok(self.field_raw(z));
        }
        match &self.oracle {
            Oracle::Affine { jac, .. } => Ok(if k == 1 { jac * dirs[0] } else { Vector::zeros(self.dim()) }),
            Oracle::Composite(p) => {
                if k == 1 {
                    return Ok(self.jacobian(z)? * dirs[0]);
                }
                let (x, y) = (z.rows(0, self.n), z.rows(self.n, self.m));
                let mut px = (&p.c1 * x).map(|t| p.f.derivative(k + 1, t));
                let mut py = (&p.c2 * y).map(|t| p.g.derivative(k + 1, t));
                for d in dirs {
                    px.component_mul_assign(&(&p.c1 * d.rows(0, self.n)));
                    py.component_mul_assign(&(&p.c2 * d.rows(self.n, self.m)));
                }
                Ok(stack(&(p.c1.transpose() * px), &(p.c2.transpose() * py)))
            }
            Oracle::Cubic(c) => match k {
                1 => Ok(self.jacobian(z)? * dirs[0]),
                2 => Ok(Vector::from_fn(self.dim(), |i, _| c.sign[i] * dirs[0].dot(&(&c.t[i] * dirs[1])))),
                _ => Ok(Vector::zeros(self.dim())),
            },
            Oracle::Custom { fallback, .. } => {
                if !fallback {
                    return Err(self.order_error(k));
                }
                Ok(self.finite_difference(z, dirs))
            }
        }
    }

    /// Nested central differences, one level per direction.
    fn finite_difference(&self, z: &Vector, dirs: &[&Vector]) -> Vector {
        let Some((last, rest)) = dirs.split_last() else {
            return self.field_raw(z);
        };
        let norm = last.norm();
        if norm == 0.0 {
            return Vector::zeros(self.dim());
        }
        let h = 1e-4 * z.norm().max(1.0);
        let step = *last * (h / norm);
        let plus = self.finite_difference(&(z + &step), rest);
        let minus = self.finite_difference(&(z - &step), rest);
        (plus - minus) * (norm / (2.0 * h))
    }
}

pub(crate) fn stack<S1, S2>(x: &nalgebra::Matrix<f64, nalgebra::Dyn, nalgebra::U1, S1>, y: &nalgebra::Matrix<f64, nalgebra::Dyn, nalgebra::U1, S2>) -> Vector
where
    S1: nalgebra::storage::Storage<f64, nalgebra::Dyn, nalgebra::U1>,
    S2: nalgebra::storage::Storage<f64, nalgebra::Dyn, nalgebra::U1>,
{
    Vector::from_iterator(x.len() + y.len(), x.iter().chain(y.iter()).copied())
}
