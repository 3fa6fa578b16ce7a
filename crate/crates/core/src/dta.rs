//! Discrete-time saddle-point algorithms and their Taylor coefficients.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldexpr::{r, simplify, FieldExpr};
use crate::saddle::SaddleProblem;
use crate::{Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Algorithm {
    /// Gradient descent ascent: `z − sF(z)`.
    Gda,
    /// Proximal point: `z⁺ + sF(z⁺) = z`.
    Ppm,
    /// Extra-gradient: `z − sF(z − sF(z))`.
    Egm,
    /// Jacobian method: `z + s∇F(z)F(z)`.
    Jm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Gda, Algorithm::Ppm, Algorithm::Egm, Algorithm::Jm];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Gda => "GDA",
            Algorithm::Ppm => "PPM",
            Algorithm::Egm => "EGM",
            Algorithm::Jm => "JM",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GDA" => Ok(Algorithm::Gda),
            "PPM" => Ok(Algorithm::Ppm),
            "EGM" => Ok(Algorithm::Egm),
            "JM" => Ok(Algorithm::Jm),
            other => Err(Error::Unsupported(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Inner solver settings for the proximal step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpmSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PpmSettings {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 50 }
    }
}

/// An algorithm together with its solver settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub algorithm: Algorithm,
    pub ppm: PpmSettings,
}

impl From<Algorithm> for Method {
    fn from(algorithm: Algorithm) -> Self {
        Self { algorithm, ppm: PpmSettings::default() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub inner_iterations: usize,
    /// Residual of the defining relation; zero for explicit updates.
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub z: Vector,
    pub diagnostics: StepDiagnostics,
}

#[derive(Clone, Debug)]
pub struct DiscreteTrajectory {
    pub points: Vec<Vector>,
    pub n: usize,
    pub s: f64,
    pub method: Method,
    /// `diagnostics[k]` describes the step `z_k → z_{k+1}`.
    pub diagnostics: Vec<StepDiagnostics>,
}

impl DiscreteTrajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> &Vector {
        self.points.last().expect("trajectory holds z0")
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.points.len()).map(|k| k as f64 * self.s).collect()
    }
}

impl Method {
    pub fn new(algorithm: Algorithm) -> Self {
        algorithm.into()
    }

    pub fn with_ppm(mut self, ppm: PpmSettings) -> Self {
        self.ppm = ppm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ppm.tol > 0.0) || self.ppm.max_iter == 0 {
            return Err(Error::InvalidProblem("PPM tolerance must be positive and max_iter ≥ 1".into()));
        }
        Ok(())
    }

    pub fn step(&self, problem: &SaddleProblem, z: &Vector, s: f64) -> Result<StepOutcome> {
        if !(s > 0.0) {
            return Err(Error::Precondition(format!("step size must be positive, got {s}")));
        }
        let explicit = |z: Vector| StepOutcome { z, diagnostics: StepDiagnostics::default() };
        match self.algorithm {
            Algorithm::Gda => Ok(explicit(z - problem.field(z)? * s)),
            Algorithm::Egm => {
                let mid = z - problem.field(z)? * s;
                Ok(explicit(z - problem.field(&mid)? * s))
            }
            Algorithm::Jm => {
                let f = problem.field(z)?;
                Ok(explicit(z + problem.jacobian(z)? * f * s))
            }
            Algorithm::Ppm => self.proximal(problem, z, s),
        }
    }

    fn proximal(&self, problem: &SaddleProblem, z: &Vector, s: f64) -> Result<StepOutcome> {
        self.validate()?;
        let dim = problem.dim();
        let residual = |w: &Vector| -> Result<Vector> { Ok(w + problem.field(w)? * s - z) };
        if let Some((jac, offset)) = problem.affine_parts() {
            let lhs = Matrix::identity(dim, dim) + jac * s;
            let rhs = z - offset * s;
            let w = lhs
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Singular(format!("I + sJ at s = {s}")))?;
            let res = residual(&w)?.norm();
            return Ok(StepOutcome { z: w, diagnostics: StepDiagnostics { inner_iterations: 1, residual: res } });
        }
        let tol = self.ppm.tol * (1.0 + z.norm());
        let mut w = z - problem.field(z)? * s;
        let mut res = residual(&w)?;
        for it in 0..self.ppm.max_iter {
            if res.norm() <= tol {
                return Ok(StepOutcome {
                    z: w,
                    diagnostics: StepDiagnostics { inner_iterations: it, residual: res.norm() },
                });
            }
            let lhs = Matrix::identity(dim, dim) + problem.jacobian(&w)? * s;
            let delta = lhs
                .lu()
                .solve(&res)
                .ok_or_else(|| Error::Singular(format!("Newton system at s = {s}")))?;
            w -= delta;
            res = residual(&w)?;
        }
        if res.norm() <= tol {
            return Ok(StepOutcome {
                z: w,
                diagnostics: StepDiagnostics { inner_iterations: self.ppm.max_iter, residual: res.norm() },
            });
        }
        Err(Error::NewtonDivergence { iterations: self.ppm.max_iter, residual: res.norm() })
    }

    pub fn run(&self, problem: &SaddleProblem, z0: &Vector, s: f64, iterations: usize) -> Result<DiscreteTrajectory> {
        problem.field(z0)?;
        let mut points = Vec::with_capacity(iterations + 1);
        let mut diagnostics = Vec::with_capacity(iterations);
        points.push(z0.clone());
        for k in 0..iterations {
            let out = self
                .step(problem, &points[k], s)
                .map_err(|e| Error::StepFailed { index: k, source: Box::new(e) })?;
            points.push(out.z);
            diagnostics.push(out.diagnostics);
        }
        Ok(DiscreteTrajectory { points, n: problem.n(), s, method: *self, diagnostics })
    }
}

/// One step with default solver settings.
pub fn step(alg: Algorithm, problem: &SaddleProblem, z: &Vector, s: f64) -> Result<Vector> {
    Ok(Method::new(alg).step(problem, z, s)?.z)
}

/// `K` steps with default solver settings.
pub fn run(alg: Algorithm, problem: &SaddleProblem, z0: &Vector, s: f64, iterations: usize) -> Result<DiscreteTrajectory> {
    Method::new(alg).run(problem, z0, s, iterations)
}

/// Taylor coefficients `g₁ … g_{r+1}` of `z⁺ = z + Σ sʲ gⱼ(z)`.
pub fn taylor_coefficients(alg: Algorithm, order: usize) -> Result<Vec<FieldExpr>> {
    if order > 2 {
        return Err(Error::Unsupported(format!("Taylor coefficients of {alg} beyond r = 2")));
    }
    let f = FieldExpr::Base;
    let jf = FieldExpr::jac_power(1);
    let j2f = FieldExpr::jac_power(2);
    let d2 = FieldExpr::der(vec![FieldExpr::Base, FieldExpr::Base]);
    let neg_f = simplify(&FieldExpr::scale(r(-1, 1), f));
    let all = match alg {
        Algorithm::Gda => vec![neg_f, FieldExpr::Zero, FieldExpr::Zero],
        Algorithm::Ppm => vec![
            neg_f,
            jf,
            simplify(&FieldExpr::Sum(vec![
                FieldExpr::scale(r(-1, 1), j2f),
                FieldExpr::scale(r(-1, 2), d2),
            ])),
        ],
        Algorithm::Egm => vec![neg_f, jf, simplify(&FieldExpr::scale(r(-1, 2), d2))],
        Algorithm::Jm => vec![jf, FieldExpr::Zero, FieldExpr::Zero],
    };
    Ok(all.into_iter().take(order + 1).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saddle::ProblemSpec;

    fn xy() -> SaddleProblem {
        ProblemSpec::bilinear(&Matrix::from_element(1, 1, 1.0)).build().unwrap()
    }

    fn z11() -> Vector {
        Vector::from_vec(vec![1.0, 1.0])
    }

    #[test]
    fn first_steps_on_bilinear() {
        let p = xy();
        assert_eq!(step(Algorithm::Gda, &p, &z11(), 0.3).unwrap().as_slice(), &[0.7, 1.3]);
        let e = step(Algorithm::Egm, &p, &z11(), 0.3).unwrap();
        assert!((e[0] - 0.61).abs() < 1e-15 && (e[1] - 1.21).abs() < 1e-15);
        let j = step(Algorithm::Jm, &p, &z11(), 0.3).unwrap();
        assert!((j[0] - 0.7).abs() < 1e-15 && (j[1] - 0.7).abs() < 1e-15);
        let out = Method::new(Algorithm::Ppm).step(&p, &z11(), 0.3).unwrap();
        assert!((out.z[0] - 0.7 / 1.09).abs() < 1e-15);
        assert!((out.z[1] - 1.3 / 1.09).abs() < 1e-15);
        assert!(out.diagnostics.residual <= 1e-12);
    }

    #[test]
    fn newton_path_matches_linear_solve() {
        let b = Matrix::from_element(1, 1, 1.0);
        let custom = SaddleProblem::custom("xy", 1, 1, move |z: &Vector| Vector::from_vec(vec![b[(0, 0)] * z[1], -z[0]]), true);
        let out = Method::new(Algorithm::Ppm).step(&custom, &z11(), 0.3).unwrap();
        assert!((out.z[0] - 0.7 / 1.09).abs() < 1e-10);
        assert!(out.diagnostics.inner_iterations >= 1);
    }

    #[test]
    fn newton_failure_is_reported() {
        let p = SaddleProblem::custom("cubic", 1, 0, |z: &Vector| Vector::from_vec(vec![z[0].powi(3) - 1e6 * z[0].sin()]), true);
        let m = Method::new(Algorithm::Ppm).with_ppm(PpmSettings { tol: 1e-300, max_iter: 1 });
        assert!(matches!(m.step(&p, &Vector::from_vec(vec![3.0]), 1.0), Err(Error::NewtonDivergence { .. })));
    }

    #[test]
    fn run_records_history() {
        let t = run(Algorithm::Gda, &xy(), &z11(), 0.3, 1).unwrap();
        assert_eq!(t.points.len(), 2);
        assert_eq!(t.points[1].as_slice(), &[0.7, 1.3]);
        let jm = run(Algorithm::Jm, &xy(), &z11(), 0.3, 3).unwrap();
        assert!(jm.points.iter().all(|z| (z[0] - z[1]).abs() < 1e-12 && z[0] > 0.0));
    }

    #[test]
    fn nonpositive_step_rejected() {
        assert!(step(Algorithm::Gda, &xy(), &z11(), 0.0).is_err());
    }

    #[test]
    fn taylor_coefficient_text() {
        let g = taylor_coefficients(Algorithm::Ppm, 2).unwrap();
        assert_eq!(g[0].to_string(), "(-1)*F");
        assert_eq!(g[1].to_string(), "J[F]");
        assert_eq!(g[2].to_string(), "(-1)*J^2[F] + (-1/2)*D2(F,F)");
        assert_eq!(taylor_coefficients(Algorithm::Egm, 2).unwrap()[2].to_string(), "(-1/2)*D2(F,F)");
        let gda = taylor_coefficients(Algorithm::Gda, 1).unwrap();
        assert_eq!(gda.len(), 2);
        assert_eq!(gda[1], FieldExpr::Zero);
        assert!(taylor_coefficients(Algorithm::Gda, 3).is_err());
    }
}
