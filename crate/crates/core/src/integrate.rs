//! Adaptive Dormand–Prince 5(4) integration with dense output, and the
//! one-step gap between a resolution ODE and its algorithm.

use serde::Serialize;

use crate::dta::{Algorithm, Method};
use crate::error::{Error, Result};
use crate::resolution::{derive, ResolutionOde};
use crate::saddle::SaddleProblem;
use crate::Vector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Tolerances {
    pub fn new(rel: f64, abs: f64) -> Self {
        Self { rel, abs }
    }

    pub fn uniform(tol: f64) -> Self {
        Self { rel: tol, abs: tol }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::uniform(1e-10)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

/// Continuous extension of one accepted step.
#[derive(Clone, Debug)]
struct Segment {
    t0: f64,
    h: f64,
    rc: [Vector; 5],
}

impl Segment {
    fn eval(&self, t: f64) -> Vector {
        let th = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.rc;
        r1 + (r2 + (r3 + (r4 + r5 * th1) * th) * th1) * th
    }
}

#[derive(Clone, Debug)]
pub struct ContinuousTrajectory {
    /// Accepted step endpoints, starting at 0.
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    segments: Vec<Segment>,
    pub stats: IntegratorStats,
}

impl ContinuousTrajectory {
    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("non-empty")
    }

    /// Dense-output state at any `t` in `[0, t_end]`.
    pub fn eval_at(&self, t: f64) -> Vector {
        if self.segments.is_empty() || t <= 0.0 {
            return self.states[0].clone();
        }
        if t >= self.t_end() {
            return self.final_state().clone();
        }
        let idx = self.segments.partition_point(|seg| seg.t0 + seg.h < t).min(self.segments.len() - 1);
        self.segments[idx].eval(t)
    }

    pub fn sample(&self, grid: &[f64]) -> Vec<Vector> {
        grid.iter().map(|&t| self.eval_at(t)).collect()
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const MAX_STEPS: usize = 1_000_000;

fn comb(y: &Vector, h: f64, terms: &[(f64, &Vector)]) -> Vector {
    let mut out = y.clone();
    for (c, k) in terms {
        if *c != 0.0 {
            out.axpy(h * c, k, 1.0);
        }
    }
    out
}

fn err_norm(y0: &Vector, y1: &Vector, err: &Vector, tol: &Tolerances) -> f64 {
    let n = y0.len().max(1) as f64;
    let sum: f64 = (0..y0.len())
        .map(|i| {
            let sc = tol.abs + tol.rel * y0[i].abs().max(y1[i].abs());
            (err[i] / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn check_finite(v: &Vector, t: f64) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { t })
    }
}

fn initial_step<Fld>(field: &mut Fld, y0: &Vector, f0: &Vector, t_end: f64, tol: &Tolerances) -> Result<f64>
where
    Fld: FnMut(&Vector) -> Result<Vector>,
{
    let n = y0.len().max(1) as f64;
    let scaled = |v: &Vector| -> f64 {
        ((0..v.len()).map(|i| (v[i] / (tol.abs + tol.rel * y0[i].abs())).powi(2)).sum::<f64>() / n).sqrt()
    };
    let d0 = scaled(y0);
    let d1 = scaled(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(t_end);
    let y1 = y0 + f0 * h0;
    let f1 = field(&y1)?;
    let d2 = scaled(&(f1 - f0)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    Ok((100.0 * h0).min(h1).min(t_end))
}

/// Integrates the autonomous system `ż = field(z)` over `[0, t_end]`.
pub fn integrate<Fld>(mut field: Fld, z0: &Vector, t_end: f64, tol: Tolerances) -> Result<ContinuousTrajectory>
where
    Fld: FnMut(&Vector) -> Result<Vector>,
{
    if !(t_end > 0.0) || !(tol.rel > 0.0) || !(tol.abs > 0.0) {
        return Err(Error::Precondition(format!(
            "integration needs t_end > 0 and positive tolerances (t_end = {t_end}, rel = {}, abs = {})",
            tol.rel, tol.abs
        )));
    }
    check_finite(z0, 0.0)?;
    let mut stats = IntegratorStats { rel_tol: tol.rel, abs_tol: tol.abs, ..Default::default() };
    let mut k1 = field(z0)?;
    stats.evaluations += 1;
    check_finite(&k1, 0.0)?;
    let mut h = initial_step(&mut field, z0, &k1, t_end, &tol)?;
    stats.evaluations += 1;

    let expo1 = 0.2 - 0.04 * 0.75;
    let beta = 0.04;
    let safe = 0.9;
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;

    let mut t = 0.0;
    let mut y = z0.clone();
    let mut times = vec![0.0];
    let mut states = vec![z0.clone()];
    let mut segments = Vec::new();

    while t < t_end {
        if stats.accepted + stats.rejected >= MAX_STEPS || h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let k2 = field(&comb(&y, h, &[(A21, &k1)]))?;
        let k3 = field(&comb(&y, h, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = field(&comb(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = field(&comb(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
        let k6 = field(&comb(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
        let y1 = comb(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = field(&y1)?;
        stats.evaluations += 6;

        let err_vec = comb(&Vector::zeros(y.len()), h, &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)]);
        let err = if y1.iter().chain(k7.iter()).all(|v| v.is_finite()) {
            err_norm(&y, &y1, &err_vec, &tol)
        } else {
            f64::INFINITY
        };

        let fac11 = err.powf(expo1);
        if err <= 1.0 {
            let fac = (fac11 / facold.powf(beta) / safe).clamp(0.1, 5.0);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            let rc2 = &y1 - &y;
            let rc3 = &k1 * h - &rc2;
            let rc4 = &rc2 - &k7 * h - &rc3;
            let rc5 = comb(&Vector::zeros(y.len()), h, &[(D1, &k1), (D3, &k3), (D4, &k4), (D5, &k5), (D6, &k6), (D7, &k7)]);
            segments.push(Segment { t0: t, h, rc: [y.clone(), rc2, rc3, rc4, rc5] });
            facold = err.max(1e-4);
            t = if last { t_end } else { t + h };
            y = y1;
            k1 = k7;
            check_finite(&y, t)?;
            times.push(t);
            states.push(y.clone());
            stats.accepted += 1;
            last_rejected = false;
            h = h_new;
        } else {
            let shrink = if err.is_finite() { (fac11 / safe).min(5.0) } else { 5.0 };
            h /= shrink;
            stats.rejected += 1;
            last_rejected = true;
        }
    }
    Ok(ContinuousTrajectory { times, states, segments, stats })
}

/// Integrates a resolution ODE with parameter `s` on `problem`.
pub fn integrate_ode(
    ode: &ResolutionOde,
    problem: &SaddleProblem,
    z0: &Vector,
    s: f64,
    t_end: f64,
    tol: Tolerances,
) -> Result<ContinuousTrajectory> {
    integrate(|z: &Vector| ode.field(problem, z, s), z0, t_end, tol)
}

/// Tolerance used when measuring gaps: `min(1e-12, s^{r+3})`.
pub fn gap_tolerance(s: f64, degree: usize) -> f64 {
    1e-12f64.min(s.powi(degree as i32 + 3))
}

/// `‖Z(s) − z⁺‖` between the ODE flow and one algorithm step from `z`.
pub fn one_step_gap(alg: Algorithm, ode: &ResolutionOde, problem: &SaddleProblem, z: &Vector, s: f64) -> Result<f64> {
    let z_plus = Method::new(alg).step(problem, z, s)?.z;
    let tol = gap_tolerance(s, ode.degree);
    let flow = integrate_ode(ode, problem, z, s, s, Tolerances::uniform(tol))?;
    Ok((flow.final_state() - z_plus).norm())
}

#[derive(Clone, Debug, Serialize)]
pub struct GapSample {
    pub s: f64,
    pub gap: f64,
    pub excluded: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GapFit {
    pub algorithm: Algorithm,
    pub degree: usize,
    pub slope: f64,
    pub samples: Vec<GapSample>,
    /// `max gap / (s^{r+2} ‖F(z)‖)` over the retained samples.
    pub properness: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// Fits the order of the one-step gap for the recursion-derived ODE of `(alg, degree)`.
pub fn gap_order_fit(alg: Algorithm, degree: usize, problem: &SaddleProblem, z: &Vector, s_list: &[f64]) -> Result<GapFit> {
    if s_list.len() < 4 {
        return Err(Error::Precondition(format!("gap fit needs at least 4 step sizes, got {}", s_list.len())));
    }
    let ode = derive(alg, degree)?.ode;
    let fnorm = problem.field(z)?.norm();
    let mut samples = Vec::with_capacity(s_list.len());
    for &s in s_list {
        let gap = one_step_gap(alg, &ode, problem, z, s)?;
        samples.push(GapSample { s, gap, excluded: gap < 1e-14 });
    }
    let kept: Vec<&GapSample> = samples.iter().filter(|g| !g.excluded).collect();
    if kept.len() < 2 {
        return Err(Error::NoSamples("every gap fell below 1e-14".into()));
    }
    let xs: Vec<f64> = kept.iter().map(|g| g.s).collect();
    let ys: Vec<f64> = kept.iter().map(|g| g.gap).collect();
    let properness = kept
        .iter()
        .map(|g| g.gap / (g.s.powi(degree as i32 + 2) * fnorm))
        .fold(0.0, f64::max);
    Ok(GapFit { algorithm: alg, degree, slope: loglog_slope(&xs, &ys), samples, properness })
}
