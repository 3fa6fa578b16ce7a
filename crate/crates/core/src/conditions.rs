//! Linear-convergence condition matrices and estimates of the decay rate ρ(s).
//!
//! Every reported ρ is the rate in `E(Z(t)) ≤ e^{−ρt} E(Z(0))` for
//! `E = ½‖F‖²`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, block_diag};
use crate::saddle::{BlockHessian, Family, SaddleProblem};
use crate::{Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    /// `diag(A, C)`.
    O1,
    /// `diag(A − s/2·A² + s/2·BBᵀ, C − s/2·C² + s/2·BᵀB)`.
    OsPpmEgm,
    /// `diag(A + s/2·A² − s/2·BBᵀ, C + s/2·C² − s/2·BᵀB)`.
    OsGda,
    /// `diag(BBᵀ − A², BᵀB − C²)`.
    O1Jm,
    /// `diag(A + sBBᵀ, C + sBᵀB)` over pairwise sums of field values.
    OsStrongWeakened,
    /// The PPM/EGM matrix over pairwise sums of field values.
    OsStrongPpm,
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 6] = [
        ConditionKind::O1,
        ConditionKind::OsPpmEgm,
        ConditionKind::OsGda,
        ConditionKind::O1Jm,
        ConditionKind::OsStrongWeakened,
        ConditionKind::OsStrongPpm,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ConditionKind::O1 => "o1",
            ConditionKind::OsPpmEgm => "os_ppm_egm",
            ConditionKind::OsGda => "os_gda",
            ConditionKind::O1Jm => "o1_jm",
            ConditionKind::OsStrongWeakened => "os_strong_weakened",
            ConditionKind::OsStrongPpm => "os_strong_ppm",
        }
    }

    /// Factor turning the minimal Rayleigh quotient into an energy decay rate.
    pub fn rate_scale(self) -> f64 {
        match self {
            ConditionKind::OsStrongWeakened => 1.0,
            _ => 2.0,
        }
    }

    /// Whether test vectors range over sums `F(z₁) + F(z₂)`.
    pub fn pairwise(self) -> bool {
        matches!(self, ConditionKind::OsStrongWeakened | ConditionKind::OsStrongPpm)
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ConditionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ConditionKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::Unsupported(format!("unknown condition kind `{s}`")))
    }
}

/// Block-diagonal condition matrix of `kind` at Jacobian blocks `h`.
pub fn condition_matrix(kind: ConditionKind, h: &BlockHessian, s: f64) -> Result<Matrix> {
    let (n, m) = (h.a.nrows(), h.c.nrows());
    if h.b.shape() != (n, m) || !h.a.is_square() || !h.c.is_square() {
        return Err(Error::Dimension(format!("blocks {:?} {:?} {:?}", h.a.shape(), h.b.shape(), h.c.shape())));
    }
    let (a, b, c) = (&h.a, &h.b, &h.c);
    let bbt = b * b.transpose();
    let btb = b.transpose() * b;
    let (top, bottom) = match kind {
        ConditionKind::O1 => (a.clone(), c.clone()),
        ConditionKind::OsPpmEgm | ConditionKind::OsStrongPpm => (
            a - (a * a) * (s / 2.0) + &bbt * (s / 2.0),
            c - (c * c) * (s / 2.0) + &btb * (s / 2.0),
        ),
        ConditionKind::OsGda => (
            a + (a * a) * (s / 2.0) - &bbt * (s / 2.0),
            c + (c * c) * (s / 2.0) - &btb * (s / 2.0),
        ),
        ConditionKind::O1Jm => (&bbt - a * a, &btb - c * c),
        ConditionKind::OsStrongWeakened => (a + &bbt * s, c + &btb * s),
    };
    Ok(linalg::symmetrize(&block_diag(&top, &bottom)))
}

/// `scale · cᵀMc / ‖c‖²`.
pub fn quadratic_ratio(kind: ConditionKind, m: &Matrix, c: &Vector) -> f64 {
    kind.rate_scale() * c.dot(&(m * c)) / c.norm_squared()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampler {
    pub z_count: usize,
    pub c_count: usize,
    pub seed: u64,
    /// Half-width of the sampling box centred at the origin.
    pub radius: f64,
}

impl Default for Sampler {
    fn default() -> Self {
        Self { z_count: 256, c_count: 64, seed: 0, radius: 2.0 }
    }
}

impl Sampler {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Seeded points in the box.
    pub fn points(&self, dim: usize) -> Vec<Vector> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.z_count)
            .map(|_| Vector::from_fn(dim, |_, _| rng.gen_range(-self.radius..=self.radius)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    Projected,
    Sampled,
}

#[derive(Clone, Debug, Serialize)]
pub struct RhoEstimate {
    pub value: f64,
    pub witness_z: Vector,
    pub witness_c: Vector,
    pub z_samples: usize,
    pub c_samples: usize,
    pub kind: ConditionKind,
    pub s: f64,
    pub method: EstimateMethod,
}

/// Estimates ρ(s) for `kind`: exactly on affine fields, otherwise by sampling.
pub fn rho_estimate(problem: &SaddleProblem, kind: ConditionKind, s: f64, sampler: &Sampler) -> Result<RhoEstimate> {
    if sampler.z_count == 0 || sampler.c_count == 0 {
        return Err(Error::NoSamples("sample counts must be positive".into()));
    }
    if let Some((jac, offset)) = problem.affine_parts() {
        let mut span = Matrix::zeros(jac.nrows(), jac.ncols() + 1);
        span.view_mut((0, 0), jac.shape()).copy_from(jac);
        span.set_column(jac.ncols(), offset);
        let q = linalg::range_basis(&span);
        if q.ncols() == 0 {
            return Err(Error::NoSamples("field vanishes identically".into()));
        }
        let blocks = problem.quadratic_blocks().expect("affine problems keep their blocks");
        let m = condition_matrix(kind, blocks, s)?;
        let (lambda, v) = linalg::min_eigenpair(&(q.transpose() * &m * &q));
        return Ok(RhoEstimate {
            value: kind.rate_scale() * lambda,
            witness_z: Vector::zeros(problem.dim()),
            witness_c: &q * v,
            z_samples: 0,
            c_samples: 0,
            kind,
            s,
            method: EstimateMethod::Projected,
        });
    }

    let zs = sampler.points(problem.dim());
    let fields = zs.iter().map(|z| problem.field(z)).collect::<Result<Vec<_>>>()?;
    // pairwise index draws are fixed up front so parallel evaluation stays deterministic
    let pairs: Vec<Vec<(usize, usize)>> = if kind.pairwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed ^ 0x9e37_79b9_7f4a_7c15);
        (0..zs.len())
            .map(|_| (0..sampler.c_count).map(|_| (rng.gen_range(0..zs.len()), rng.gen_range(0..zs.len()))).collect())
            .collect()
    } else {
        Vec::new()
    };

    // (ratio, z index, witness direction, directions used)
    let per_z: Vec<Option<(f64, usize, Vector, usize)>> = (0..zs.len())
        .into_par_iter()
        .map(|i| -> Result<Option<(f64, usize, Vector, usize)>> {
            let m = condition_matrix(kind, &problem.block_hessian(&zs[i])?, s)?;
            let candidates: Vec<Vector> = if kind.pairwise() {
                pairs[i].iter().map(|&(a, b)| &fields[a] + &fields[b]).collect()
            } else {
                vec![fields[i].clone()]
            };
            let usable: Vec<Vector> = candidates.into_iter().filter(|c| c.norm() >= 1e-12).collect();
            let used = usable.len();
            let best = usable
                .into_iter()
                .map(|c| (quadratic_ratio(kind, &m, &c), c))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            Ok(best.map(|(v, c)| (v, i, c, used)))
        })
        .collect::<Result<Vec<_>>>()?;

    let c_samples: usize = per_z.iter().flatten().map(|t| t.3).sum();
    let best = per_z
        .into_iter()
        .flatten()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .ok_or_else(|| Error::NoSamples("every sampled field value vanished".into()))?;
    Ok(RhoEstimate {
        value: best.0,
        witness_z: zs[best.1].clone(),
        witness_c: best.2,
        z_samples: zs.len(),
        c_samples,
        kind,
        s,
        method: EstimateMethod::Sampled,
    })
}

impl RhoEstimate {
    /// Ratio at the stored witness, recomputed from scratch.
    pub fn witness_ratio(&self, problem: &SaddleProblem) -> Result<f64> {
        let m = condition_matrix(self.kind, &problem.block_hessian(&self.witness_z)?, self.s)?;
        Ok(quadratic_ratio(self.kind, &m, &self.witness_c))
    }
}

/// Closed-form rates for the standard problem classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleId {
    /// Strongly convex-concave: ρ = μ.
    StrongConvexity,
    /// Bilinear: ρ = s·λ⁺_min(BBᵀ).
    Bilinear,
    /// Strongly convex in x, concave in y, full column rank coupling.
    OneSidedStrong,
    /// Square coupling with uniformly nonsingular `∇xy L`.
    SquareCoupling,
    /// `f(C₁x) + xᵀBy − g(C₂y)` with the principal-angle bound.
    Composite,
}

impl ExampleId {
    pub const ALL: [ExampleId; 5] = [
        ExampleId::StrongConvexity,
        ExampleId::Bilinear,
        ExampleId::OneSidedStrong,
        ExampleId::SquareCoupling,
        ExampleId::Composite,
    ];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }
}

impl FromStr for ExampleId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "strong_convexity" => Ok(ExampleId::StrongConvexity),
            "2" | "bilinear" => Ok(ExampleId::Bilinear),
            "3" | "one_sided_strong" => Ok(ExampleId::OneSidedStrong),
            "4" | "square_coupling" => Ok(ExampleId::SquareCoupling),
            "5" | "composite" => Ok(ExampleId::Composite),
            other => Err(Error::Unsupported(format!("unknown example `{other}`"))),
        }
    }
}

fn mismatch(example: ExampleId, problem: &SaddleProblem) -> Error {
    Error::InvalidProblem(format!("rate formula {:?} does not apply to family `{}`", example, problem.family()))
}

/// Strong convexity moduli `(μ_x, μ_y)` of the two separable parts.
fn moduli(problem: &SaddleProblem) -> Option<(f64, f64)> {
    if let Some(h) = problem.quadratic_blocks() {
        return Some((linalg::min_eigenvalue(&h.a), linalg::min_eigenvalue(&h.c)));
    }
    problem.composite().map(|p| {
        let side = |lb: f64, c: &Matrix| if c.ncols() == 0 { f64::INFINITY } else { lb * linalg::min_eigenvalue(&(c.transpose() * c)) };
        (side(p.f.curvature_lower_bound(), &p.c1), side(p.g.curvature_lower_bound(), &p.c2))
    })
}

fn coupling(problem: &SaddleProblem) -> Option<&Matrix> {
    problem.quadratic_blocks().map(|h| &h.b).or_else(|| problem.composite().map(|p| &p.b))
}

fn positive_min(m: &Matrix, what: &str) -> Result<f64> {
    linalg::min_positive_eigenvalue(m).ok_or_else(|| Error::InvalidProblem(format!("{what} has no positive eigenvalue")))
}

/// Closed-form ρ(s) of a standard problem class.
pub fn rho_formula(example: ExampleId, problem: &SaddleProblem, s: f64) -> Result<f64> {
    match example {
        ExampleId::StrongConvexity => {
            let (mx, my) = moduli(problem).ok_or_else(|| mismatch(example, problem))?;
            let mu = mx.min(my);
            if !(mu > 0.0) {
                return Err(Error::InvalidProblem("problem is not strongly convex-concave".into()));
            }
            Ok(mu)
        }
        ExampleId::Bilinear => {
            let h = problem.quadratic_blocks().ok_or_else(|| mismatch(example, problem))?;
            if h.a.amax() != 0.0 || h.c.amax() != 0.0 {
                return Err(mismatch(example, problem));
            }
            Ok(s * positive_min(&(&h.b * h.b.transpose()), "BBᵀ")?)
        }
        ExampleId::OneSidedStrong => {
            let (mx, my) = moduli(problem).ok_or_else(|| mismatch(example, problem))?;
            if !(mx > 0.0) || my < -1e-12 {
                return Err(Error::InvalidProblem("needs strong convexity in x and concavity in y".into()));
            }
            let b = coupling(problem).expect("family has a coupling block");
            if linalg::rank(b) < b.ncols() {
                return Err(Error::InvalidProblem("coupling must have full column rank".into()));
            }
            Ok(mx.min(s * linalg::min_eigenvalue(&(b.transpose() * b))))
        }
        ExampleId::SquareCoupling => {
            if problem.n() != problem.m() {
                return Err(Error::InvalidProblem("square coupling needs n = m".into()));
            }
            let mu = if let Some(b) = coupling(problem) {
                linalg::min_eigenvalue(&(b.transpose() * b))
            } else {
                let mut mu = f64::INFINITY;
                for z in Sampler::default().points(problem.dim()) {
                    let b = problem.block_hessian(&z)?.b;
                    mu = mu.min(linalg::min_eigenvalue(&(b.transpose() * &b)));
                }
                mu
            };
            Ok(s * mu)
        }
        ExampleId::Composite => {
            if !matches!(problem.family(), Family::Composite | Family::Separable) {
                return Err(mismatch(example, problem));
            }
            let p = problem.composite().ok_or_else(|| mismatch(example, problem))?;
            let side = |mu: f64, c: &Matrix, b: &Matrix| -> Result<f64> {
                let gram = c.transpose() * c;
                let curv = mu * positive_min(&gram, "CᵀC")?;
                let sin = principal_angle_sin(&linalg::range_basis(b), &linalg::range_basis(&c.transpose()))?;
                let curv = if sin <= 1e-12 { curv } else { curv * sin * sin };
                Ok(curv.min(s * positive_min(&(b * b.transpose()), "coupling Gram")?))
            };
            let a1 = side(p.f.curvature_lower_bound(), &p.c1, &p.b)?;
            let a2 = side(p.g.curvature_lower_bound(), &p.c2, &p.b.transpose())?;
            Ok(a1.min(a2))
        }
    }
}

/// Sine of the smallest principal angle between `Range(U)` and `Range(V)`.
pub fn principal_angle_sin(u: &Matrix, v: &Matrix) -> Result<f64> {
    if u.nrows() != v.nrows() {
        return Err(Error::Dimension(format!("bases live in R^{} and R^{}", u.nrows(), v.nrows())));
    }
    let qu = linalg::range_basis(u);
    let qv = linalg::range_basis(v);
    if qu.ncols() != u.ncols() || qv.ncols() != v.ncols() || qu.ncols() == 0 || qv.ncols() == 0 {
        return Err(Error::InvalidProblem("basis matrices must have full column rank".into()));
    }
    let cos = linalg::op_norm(&(qu.transpose() * qv)).min(1.0);
    Ok((1.0 - cos * cos).max(0.0).sqrt())
}
