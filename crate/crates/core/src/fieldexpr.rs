//! Symbolic vector fields over the saddle field `F`.
//!
//! Every expression is a rational linear combination of monomials `F` and
//! `∇ᵏF(d₁, …, d_k)`, where each direction `dᵢ` is itself a monomial. Since
//! `∇ᵏF` is symmetric, directions are kept sorted, which makes equal fields
//! structurally equal after [`simplify`].

use std::cmp::Ordering;
use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{One, Zero};

use crate::error::Result;
use crate::saddle::SaddleProblem;
use crate::{Matrix, Vector};

pub type Rational = num_rational::Rational64;

/// Expression tree. `Der(dirs)` is `∇ᵏF` applied to `dirs`, `k = dirs.len()`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum FieldExpr {
    Zero,
    Base,
    Der(Vec<FieldExpr>),
    Scale(Rational, Box<FieldExpr>),
    Sum(Vec<FieldExpr>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Mono {
    Base,
    Der(Vec<Mono>),
}

impl Ord for Mono {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Mono::Base, Mono::Base) => Ordering::Equal,
            (Mono::Base, Mono::Der(_)) => Ordering::Less,
            (Mono::Der(_), Mono::Base) => Ordering::Greater,
            (Mono::Der(a), Mono::Der(b)) => a.len().cmp(&b.len()).then_with(|| a.iter().cmp(b.iter())),
        }
    }
}

impl PartialOrd for Mono {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

type Lin = BTreeMap<Mono, Rational>;

fn lin_add(acc: &mut Lin, mono: Mono, c: Rational) {
    if c.is_zero() {
        return;
    }
    match acc.entry(mono) {
        Entry::Occupied(mut slot) => {
            *slot.get_mut() += c;
            if slot.get().is_zero() {
                slot.remove();
            }
        }
        Entry::Vacant(slot) => {
            slot.insert(c);
        }
    }
}

fn lin_merge(acc: &mut Lin, other: Lin, scale: Rational) {
    for (mono, c) in other {
        lin_add(acc, mono, c * scale);
    }
}

/// Multilinear expansion of `∇ᵏF(slots…)`.
fn der_lin(slots: &[Lin]) -> Lin {
    let mut partial: Vec<(Vec<Mono>, Rational)> = vec![(Vec::new(), Rational::one())];
    for slot in slots {
        let mut next = Vec::with_capacity(partial.len() * slot.len());
        for (dirs, c) in &partial {
            for (mono, d) in slot {
                let mut dirs = dirs.clone();
                dirs.push(mono.clone());
                next.push((dirs, c * d));
            }
        }
        partial = next;
    }
    let mut out = Lin::new();
    for (mut dirs, c) in partial {
        dirs.sort();
        lin_add(&mut out, Mono::Der(dirs), c);
    }
    out
}

fn single(mono: Mono) -> Lin {
    let mut l = Lin::new();
    l.insert(mono, Rational::one());
    l
}

fn to_lin(e: &FieldExpr) -> Lin {
    match e {
        FieldExpr::Zero => Lin::new(),
        FieldExpr::Base => single(Mono::Base),
        FieldExpr::Der(dirs) => {
            let slots: Vec<Lin> = dirs.iter().map(to_lin).collect();
            if slots.is_empty() {
                return single(Mono::Base);
            }
            der_lin(&slots)
        }
        FieldExpr::Scale(c, inner) => {
            let mut out = Lin::new();
            lin_merge(&mut out, to_lin(inner), *c);
            out
        }
        FieldExpr::Sum(items) => {
            let mut out = Lin::new();
            for item in items {
                lin_merge(&mut out, to_lin(item), Rational::one());
            }
            out
        }
    }
}

fn mono_tree(m: &Mono) -> FieldExpr {
    match m {
        Mono::Base => FieldExpr::Base,
        Mono::Der(dirs) => FieldExpr::Der(dirs.iter().map(mono_tree).collect()),
    }
}

fn from_lin(l: &Lin) -> FieldExpr {
    let mut terms: Vec<FieldExpr> = l
        .iter()
        .map(|(m, c)| {
            if c.is_one() {
                mono_tree(m)
            } else {
                FieldExpr::Scale(*c, Box::new(mono_tree(m)))
            }
        })
        .collect();
    match terms.len() {
        0 => FieldExpr::Zero,
        1 => terms.pop().unwrap(),
        _ => FieldExpr::Sum(terms),
    }
}

fn diff_mono(m: &Mono, d: &Lin) -> Lin {
    match m {
        Mono::Base => der_lin(std::slice::from_ref(d)),
        Mono::Der(dirs) => {
            let slots: Vec<Lin> = dirs.iter().map(|x| single(x.clone())).collect();
            let mut extended = slots.clone();
            extended.push(d.clone());
            let mut out = der_lin(&extended);
            for i in 0..slots.len() {
                let mut replaced = slots.clone();
                replaced[i] = diff_mono(&dirs[i], d);
                if replaced[i].is_empty() {
                    continue;
                }
                lin_merge(&mut out, der_lin(&replaced), Rational::one());
            }
            out
        }
    }
}

/// Canonical form of `z ↦ ∇e(z)·d(z)`.
pub fn differentiate(e: &FieldExpr, d: &FieldExpr) -> FieldExpr {
    let dl = to_lin(d);
    let mut out = Lin::new();
    if dl.is_empty() {
        return FieldExpr::Zero;
    }
    for (mono, c) in to_lin(e) {
        lin_merge(&mut out, diff_mono(&mono, &dl), c);
    }
    from_lin(&out)
}

/// Canonical form: like terms collected, zero terms dropped, terms sorted.
pub fn simplify(e: &FieldExpr) -> FieldExpr {
    from_lin(&to_lin(e))
}

impl FieldExpr {
    pub fn base() -> Self {
        FieldExpr::Base
    }

    /// `∇F·e`.
    pub fn jac(e: FieldExpr) -> Self {
        FieldExpr::Der(vec![e])
    }

    /// `(∇F)ᵏ F`.
    pub fn jac_power(k: usize) -> Self {
        (0..k).fold(FieldExpr::Base, |acc, _| FieldExpr::jac(acc))
    }

    pub fn der(dirs: Vec<FieldExpr>) -> Self {
        FieldExpr::Der(dirs)
    }

    pub fn scale(c: Rational, e: FieldExpr) -> Self {
        FieldExpr::Scale(c, Box::new(e))
    }

    pub fn is_zero(&self) -> bool {
        to_lin(self).is_empty()
    }

    /// Highest derivative order of `F` appearing anywhere.
    pub fn max_order(&self) -> usize {
        fn mono_order(m: &Mono) -> usize {
            match m {
                Mono::Base => 0,
                Mono::Der(dirs) => dirs.iter().map(mono_order).max().unwrap_or(0).max(dirs.len()),
            }
        }
        to_lin(self).keys().map(mono_order).max().unwrap_or(0)
    }

    /// Number of terms in canonical form.
    pub fn term_count(&self) -> usize {
        to_lin(self).len()
    }
}

pub fn r(num: i64, den: i64) -> Rational {
    Rational::new(num, den)
}

impl Add for FieldExpr {
    type Output = FieldExpr;
    fn add(self, rhs: FieldExpr) -> FieldExpr {
        simplify(&FieldExpr::Sum(vec![self, rhs]))
    }
}

impl Sub for FieldExpr {
    type Output = FieldExpr;
    fn sub(self, rhs: FieldExpr) -> FieldExpr {
        simplify(&FieldExpr::Sum(vec![self, FieldExpr::scale(-Rational::one(), rhs)]))
    }
}

impl Neg for FieldExpr {
    type Output = FieldExpr;
    fn neg(self) -> FieldExpr {
        simplify(&FieldExpr::scale(-Rational::one(), self))
    }
}

impl Mul<FieldExpr> for Rational {
    type Output = FieldExpr;
    fn mul(self, rhs: FieldExpr) -> FieldExpr {
        simplify(&FieldExpr::scale(self, rhs))
    }
}

fn fmt_mono(m: &Mono, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match m {
        Mono::Base => f.write_str("F"),
        Mono::Der(dirs) if dirs.len() == 1 => {
            let mut depth = 1;
            let mut inner = &dirs[0];
            while let Mono::Der(d) = inner {
                if d.len() != 1 {
                    break;
                }
                depth += 1;
                inner = &d[0];
            }
            if depth == 1 {
                f.write_str("J[")?;
            } else {
                write!(f, "J^{depth}[")?;
            }
            fmt_mono(inner, f)?;
            f.write_str("]")
        }
        Mono::Der(dirs) => {
            write!(f, "D{}(", dirs.len())?;
            for (i, d) in dirs.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                fmt_mono(d, f)?;
            }
            f.write_str(")")
        }
    }
}

impl fmt::Display for FieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lin = to_lin(self);
        if lin.is_empty() {
            return f.write_str("0");
        }
        for (i, (mono, c)) in lin.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            if !c.is_one() {
                if c.is_integer() {
                    write!(f, "({})*", c.numer())?;
                } else {
                    write!(f, "({}/{})*", c.numer(), c.denom())?;
                }
            }
            fmt_mono(mono, f)?;
        }
        Ok(())
    }
}

/// Evaluates several expressions at one point, sharing derivative work.
pub struct Evaluator<'a> {
    problem: &'a SaddleProblem,
    z: Vector,
    jac: Option<Matrix>,
    memo: HashMap<Mono, Vector>,
}

impl<'a> Evaluator<'a> {
    pub fn new(problem: &'a SaddleProblem, z: &Vector) -> Result<Self> {
        let mut memo = HashMap::new();
        memo.insert(Mono::Base, problem.field(z)?);
        Ok(Self { problem, z: z.clone(), jac: None, memo })
    }

    fn mono(&mut self, m: &Mono) -> Result<Vector> {
        if let Some(v) = self.memo.get(m) {
            return Ok(v.clone());
        }
        let Mono::Der(dirs) = m else { unreachable!("base is pre-seeded") };
        let vals = dirs.iter().map(|d| self.mono(d)).collect::<Result<Vec<_>>>()?;
        let out = if vals.len() == 1 {
            if self.jac.is_none() {
                self.jac = Some(self.problem.jacobian(&self.z)?);
            }
            self.jac.as_ref().unwrap() * &vals[0]
        } else {
            let refs: Vec<&Vector> = vals.iter().collect();
            self.problem.derivative_tensor(&self.z, &refs)?
        };
        self.memo.insert(m.clone(), out.clone());
        Ok(out)
    }

    pub fn eval(&mut self, e: &FieldExpr) -> Result<Vector> {
        let mut out = Vector::zeros(self.problem.dim());
        for (mono, c) in to_lin(e) {
            let v = self.mono(&mono)?;
            out.axpy(*c.numer() as f64 / *c.denom() as f64, &v, 1.0);
        }
        Ok(out)
    }
}

/// Numeric value of `e` at `z`.
pub fn evaluate(e: &FieldExpr, problem: &SaddleProblem, z: &Vector) -> Result<Vector> {
    Evaluator::new(problem, z)?.eval(e)
}
