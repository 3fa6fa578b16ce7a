//! Resolution ODEs `Ż = Σ sⁱ fᵢ(Z)` derived from Taylor coefficients.

use num_traits::One;
use serde::{Serialize, Serializer};

use crate::dta::Algorithm;
use crate::error::{Error, Result};
use crate::fieldexpr::{differentiate, r, simplify, Evaluator, FieldExpr, Rational};
use crate::saddle::SaddleProblem;
use crate::Vector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Recursion,
    ClosedForm,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolutionOde {
    pub degree: usize,
    #[serde(serialize_with = "ser_exprs")]
    pub coeffs: Vec<FieldExpr>,
    pub provenance: Provenance,
    pub source: Option<Algorithm>,
}

fn ser_exprs<S: Serializer>(exprs: &[FieldExpr], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(exprs.iter().map(|e| e.to_string()))
}

/// Intermediate terms `h_{j,i}` in fill order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HTable {
    entries: Vec<((usize, usize), FieldExpr)>,
}

impl HTable {
    pub fn get(&self, j: usize, i: usize) -> Option<&FieldExpr> {
        self.entries.iter().find(|(k, _)| *k == (j, i)).map(|(_, e)| e)
    }

    fn at(&self, j: usize, i: usize) -> &FieldExpr {
        self.get(j, i).expect("entry filled before use")
    }

    fn insert(&mut self, j: usize, i: usize, e: FieldExpr) {
        self.entries.push(((j, i), e));
    }

    /// Entries in the order they were filled.
    pub fn entries(&self) -> &[((usize, usize), FieldExpr)] {
        &self.entries
    }
}

impl Serialize for HTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.entries.iter().map(|((j, i), e)| serde_json::json!({ "j": j, "i": i, "expr": e.to_string() })))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Expansion {
    pub ode: ResolutionOde,
    pub table: HTable,
}

fn factorial(l: usize) -> i64 {
    (1..=l as i64).product()
}

/// Solves for `f₀ … f_r` given `g₁ … g_{r+1}`.
///
/// `h_{1,i} = fᵢ`, `h_{j+1,i} = Σ_{l≤i} ∇h_{j,l}·h_{1,i−l}` and
/// `fᵢ = g_{i+1} − Σ_{l=2}^{i+1} h_{l,i+1−l} / l!`.
pub fn expand(g: &[FieldExpr], degree: usize) -> Result<Expansion> {
    if g.len() != degree + 1 {
        return Err(Error::Dimension(format!("expected {} Taylor coefficients, got {}", degree + 1, g.len())));
    }
    let mut table = HTable::default();
    let mut f: Vec<FieldExpr> = Vec::with_capacity(degree + 1);
    f.push(simplify(&g[0]));
    table.insert(1, 0, f[0].clone());
    for i in 1..=degree {
        for l in 2..=i + 1 {
            let k = i + 1 - l;
            let terms: Vec<FieldExpr> = (0..=k).map(|q| differentiate(table.at(l - 1, q), &f[k - q])).collect();
            table.insert(l, k, simplify(&FieldExpr::Sum(terms)));
        }
        let mut terms = vec![g[i].clone()];
        for l in 2..=i + 1 {
            let h = table.at(l, i + 1 - l).clone();
            terms.push(FieldExpr::scale(-Rational::one() / factorial(l), h));
        }
        let fi = simplify(&FieldExpr::Sum(terms));
        table.insert(1, i, fi.clone());
        f.push(fi);
    }
    Ok(Expansion {
        ode: ResolutionOde { degree, coeffs: f, provenance: Provenance::Recursion, source: None },
        table,
    })
}

/// Resolution ODE of `alg` obtained from its Taylor coefficients.
pub fn derive(alg: Algorithm, degree: usize) -> Result<Expansion> {
    let mut out = expand(&crate::dta::taylor_coefficients(alg, degree)?, degree)?;
    out.ode.source = Some(alg);
    Ok(out)
}

/// Whether `(alg, degree)` has a known closed form.
pub fn is_covered(alg: Algorithm, degree: usize) -> bool {
    match alg {
        Algorithm::Gda => degree <= 1,
        Algorithm::Ppm | Algorithm::Egm => degree <= 2,
        Algorithm::Jm => degree == 0,
    }
}

/// Known closed-form resolution ODEs.
pub fn closed_form(alg: Algorithm, degree: usize) -> Result<ResolutionOde> {
    if !is_covered(alg, degree) {
        return Err(Error::Unsupported(format!("no closed form for {alg} at degree {degree}")));
    }
    let neg_f = simplify(&FieldExpr::scale(r(-1, 1), FieldExpr::Base));
    let jf = FieldExpr::jac_power(1);
    let j2f = FieldExpr::jac_power(2);
    let d2 = FieldExpr::der(vec![FieldExpr::Base, FieldExpr::Base]);
    let all = match alg {
        Algorithm::Gda => vec![neg_f, simplify(&FieldExpr::scale(r(-1, 2), jf))],
        Algorithm::Ppm => vec![
            neg_f,
            simplify(&FieldExpr::scale(r(1, 2), jf)),
            simplify(&FieldExpr::Sum(vec![FieldExpr::scale(r(-1, 3), j2f), FieldExpr::scale(r(-1, 12), d2)])),
        ],
        Algorithm::Egm => vec![
            neg_f,
            simplify(&FieldExpr::scale(r(1, 2), jf)),
            simplify(&FieldExpr::Sum(vec![FieldExpr::scale(r(2, 3), j2f), FieldExpr::scale(r(-1, 12), d2)])),
        ],
        Algorithm::Jm => vec![jf],
    };
    Ok(ResolutionOde {
        degree,
        coeffs: all.into_iter().take(degree + 1).collect(),
        provenance: Provenance::ClosedForm,
        source: Some(alg),
    })
}

/// `Σ sⁱ fᵢ(z)`.
pub fn ode_field(ode: &ResolutionOde, problem: &SaddleProblem, z: &Vector, s: f64) -> Result<Vector> {
    ode.field(problem, z, s)
}

impl ResolutionOde {
    /// Gradient flow `Ż = −F`.
    pub fn gradient_flow() -> Self {
        Self {
            degree: 0,
            coeffs: vec![simplify(&FieldExpr::scale(r(-1, 1), FieldExpr::Base))],
            provenance: Provenance::ClosedForm,
            source: None,
        }
    }

    pub fn field(&self, problem: &SaddleProblem, z: &Vector, s: f64) -> Result<Vector> {
        let mut ev = Evaluator::new(problem, z)?;
        let mut out = Vector::zeros(problem.dim());
        let mut weight = 1.0;
        for c in &self.coeffs {
            if !c.is_zero() {
                out.axpy(weight, &ev.eval(c)?, 1.0);
            }
            weight *= s;
        }
        Ok(out)
    }

    /// Coefficient-wise structural equality after canonicalization.
    pub fn same_coefficients(&self, other: &ResolutionOde) -> bool {
        self.degree == other.degree
            && self.coeffs.iter().zip(&other.coeffs).all(|(a, b)| simplify(a) == simplify(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saddle::ProblemSpec;
    use crate::Matrix;

    #[test]
    fn gradient_flow_and_gda_first_order() {
        let e = expand(&[simplify(&FieldExpr::scale(r(-1, 1), FieldExpr::Base))], 0).unwrap();
        assert_eq!(e.ode.coeffs[0].to_string(), "(-1)*F");
        let g = crate::dta::taylor_coefficients(Algorithm::Gda, 1).unwrap();
        assert_eq!(expand(&g, 1).unwrap().ode.coeffs[1].to_string(), "(-1/2)*J[F]");
    }

    #[test]
    fn intermediate_terms_of_proximal_expansion() {
        let e = derive(Algorithm::Ppm, 2).unwrap();
        assert_eq!(e.table.get(2, 0).unwrap().to_string(), "J[F]");
        assert_eq!(e.table.get(2, 1).unwrap().to_string(), "(-1)*J^2[F] + (-1/2)*D2(F,F)");
        assert_eq!(e.table.get(3, 0).unwrap().to_string(), "(-1)*J^2[F] + (-1)*D2(F,F)");
        let order: Vec<(usize, usize)> = e.table.entries().iter().map(|(k, _)| *k).collect();
        assert_eq!(order, vec![(1, 0), (2, 0), (1, 1), (2, 1), (3, 0), (1, 2)]);
    }

    #[test]
    fn second_order_coefficients() {
        assert_eq!(derive(Algorithm::Ppm, 2).unwrap().ode.coeffs[2].to_string(), "(-1/3)*J^2[F] + (-1/12)*D2(F,F)");
        assert_eq!(derive(Algorithm::Egm, 2).unwrap().ode.coeffs[2].to_string(), "(2/3)*J^2[F] + (-1/12)*D2(F,F)");
    }

    #[test]
    fn coverage() {
        assert!(closed_form(Algorithm::Jm, 1).is_err());
        assert!(closed_form(Algorithm::Gda, 2).is_err());
        assert_eq!(closed_form(Algorithm::Jm, 0).unwrap().coeffs[0].to_string(), "J[F]");
        assert!(expand(&[FieldExpr::Base], 1).is_err());
    }

    #[test]
    fn ode_field_values() {
        let p = ProblemSpec::bilinear(&Matrix::from_element(1, 1, 1.0)).build().unwrap();
        let z = Vector::from_vec(vec![1.0, 1.0]);
        let gda = closed_form(Algorithm::Gda, 1).unwrap();
        let v = ode_field(&gda, &p, &z, 0.3).unwrap();
        assert!((v[0] + 0.85).abs() < 1e-15 && (v[1] - 1.15).abs() < 1e-15);
        let ppm = closed_form(Algorithm::Ppm, 1).unwrap();
        let v = ode_field(&ppm, &p, &z, 0.3).unwrap();
        assert!((v[0] + 1.15).abs() < 1e-15 && (v[1] - 0.85).abs() < 1e-15);
        let origin = Vector::zeros(2);
        assert_eq!(ode_field(&closed_form(Algorithm::Egm, 2).unwrap(), &p, &origin, 0.3).unwrap(), origin);
    }
}
