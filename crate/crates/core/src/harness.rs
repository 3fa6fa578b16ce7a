//! Energy traces, behaviour classification and checks of the discrete rate
//! theorems against observed trajectories.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditions::{rho_estimate, rho_formula, ConditionKind, ExampleId, Sampler};
use crate::dta::{Algorithm, DiscreteTrajectory};
use crate::error::{Error, Result};
use crate::integrate::{one_step_gap, ContinuousTrajectory};
use crate::linalg;
use crate::resolution::derive;
use crate::saddle::{Family, SaddleProblem};
use crate::Vector;

/// Energies below this are treated as converged and not compared.
pub const ENERGY_FLOOR: f64 = 1e-20;
/// Per-step slack on energy ratios.
pub const RATIO_SLACK: f64 = 1e-10;

/// `½‖F(z)‖²`.
pub fn energy(problem: &SaddleProblem, z: &Vector) -> Result<f64> {
    Ok(0.5 * problem.field(z)?.norm_squared())
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub s: f64,
    pub label: String,
    pub problem: String,
}

pub fn energy_trace(traj: &DiscreteTrajectory, problem: &SaddleProblem) -> Result<EnergyTrace> {
    Ok(EnergyTrace {
        times: traj.times(),
        values: traj.points.iter().map(|z| energy(problem, z)).collect::<Result<_>>()?,
        s: traj.s,
        label: traj.method.algorithm.to_string(),
        problem: problem.name().to_string(),
    })
}

/// Energy at dense-output samples of an ODE solution.
pub fn energy_trace_continuous(
    traj: &ContinuousTrajectory,
    problem: &SaddleProblem,
    grid: &[f64],
    s: f64,
    label: &str,
) -> Result<EnergyTrace> {
    Ok(EnergyTrace {
        times: grid.to_vec(),
        values: traj.sample(grid).iter().map(|z| energy(problem, z)).collect::<Result<_>>()?,
        s,
        label: label.to_string(),
        problem: problem.name().to_string(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    PpmFast,
    EgmSlow,
    EgmFastQuadratic,
    OdeTransfer,
}

impl Theorem {
    pub const ALL: [Theorem; 4] = [Theorem::PpmFast, Theorem::EgmSlow, Theorem::EgmFastQuadratic, Theorem::OdeTransfer];

    pub fn label(self) -> &'static str {
        match self {
            Theorem::PpmFast => "ppm_fast",
            Theorem::EgmSlow => "egm_slow",
            Theorem::EgmFastQuadratic => "egm_fast_quadratic",
            Theorem::OdeTransfer => "ode_transfer",
        }
    }

    /// Condition whose rate the theorem consumes.
    pub fn condition(self) -> ConditionKind {
        match self {
            Theorem::PpmFast | Theorem::EgmSlow => ConditionKind::OsStrongPpm,
            Theorem::EgmFastQuadratic => ConditionKind::OsStrongWeakened,
            Theorem::OdeTransfer => ConditionKind::OsPpmEgm,
        }
    }

    pub fn algorithm(self) -> Option<Algorithm> {
        match self {
            Theorem::PpmFast => Some(Algorithm::Ppm),
            Theorem::EgmSlow | Theorem::EgmFastQuadratic => Some(Algorithm::Egm),
            Theorem::OdeTransfer => None,
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Theorem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Theorem::ALL
            .into_iter()
            .find(|t| t.label() == s)
            .ok_or_else(|| Error::Unsupported(format!("unknown theorem `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFactor {
    pub factor: f64,
    /// False when the factor is outside `(0, 1)`.
    pub valid: bool,
}

/// Per-step energy factor promised by `theorem`.
pub fn theoretical_rate(theorem: Theorem, rho: f64, s: f64) -> RateFactor {
    let q = s * rho;
    let factor = match theorem {
        Theorem::PpmFast => (1.0 - q / 2.0) / (1.0 + q / 4.0),
        Theorem::EgmSlow | Theorem::EgmFastQuadratic => (1.0 - q / 5.0) / (1.0 + q / 5.0),
        Theorem::OdeTransfer => 1.0 - q / 4.0,
    };
    RateFactor { factor, valid: factor > 0.0 && factor < 1.0 }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "policy", content = "value", rename_all = "snake_case")]
pub enum RhoPolicy {
    /// Closed form when the family has one, otherwise an estimate.
    Auto,
    Formula(ExampleId),
    Estimate(Sampler),
    Given(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub rho: RhoPolicy,
    /// Properness constant for the ODE transfer theorem.
    pub properness: Option<f64>,
    /// Resolution degree for the ODE transfer theorem.
    pub degree: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { rho: RhoPolicy::Auto, properness: None, degree: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Clone, Debug, Serialize)]
pub struct PreconditionCheck {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateReport {
    pub theorem: Theorem,
    pub s: f64,
    pub rho: f64,
    pub rho_source: String,
    pub gamma: f64,
    pub factor_theory: f64,
    pub factor_empirical_max: f64,
    pub pass: Verdict,
    pub k_max: usize,
    pub preconditions: Vec<PreconditionCheck>,
    /// First step whose ratio or cumulative bound was violated.
    pub first_violation: Option<usize>,
}

fn formula_for(problem: &SaddleProblem) -> Option<ExampleId> {
    match problem.family() {
        Family::Bilinear => Some(ExampleId::Bilinear),
        Family::Quadratic => {
            let h = problem.quadratic_blocks()?;
            (linalg::min_eigenvalue(&h.a) > 0.0 && linalg::min_eigenvalue(&h.c) > 0.0).then_some(ExampleId::StrongConvexity)
        }
        Family::Composite | Family::Separable => Some(ExampleId::Composite),
        _ => None,
    }
}

/// Resolves ρ and a human-readable provenance string.
pub fn resolve_rho(problem: &SaddleProblem, theorem: Theorem, s: f64, policy: &RhoPolicy) -> Result<(f64, String)> {
    let kind = theorem.condition();
    match policy {
        RhoPolicy::Given(v) => Ok((*v, "given".into())),
        RhoPolicy::Formula(ex) => Ok((rho_formula(*ex, problem, s)?, format!("formula:{}", ex.number()))),
        RhoPolicy::Estimate(sampler) => {
            let est = rho_estimate(problem, kind, s, sampler)?;
            Ok((est.value, format!("estimate:{kind}")))
        }
        RhoPolicy::Auto => match formula_for(problem).map(|ex| (ex, rho_formula(ex, problem, s))) {
            Some((ex, Ok(v))) => Ok((v, format!("formula:{}", ex.number()))),
            _ => resolve_rho(problem, theorem, s, &RhoPolicy::Estimate(Sampler::default())),
        },
    }
}

/// Operator-norm bound on `∇F`: exact for affine fields, else the trajectory
/// maximum inflated by 10%.
pub fn gamma_bound(problem: &SaddleProblem, points: &[Vector]) -> Result<(f64, &'static str)> {
    if let Some(g) = problem.exact_gamma() {
        return Ok((g, "exact"));
    }
    let mut worst: f64 = 0.0;
    for z in points {
        worst = worst.max(linalg::op_norm(&problem.jacobian(z)?));
    }
    Ok((1.1 * worst, "trajectory_max_x1.1"))
}

/// Compares an energy trace against the envelope promised by `theorem`.
pub fn verify_rate(
    trace: &EnergyTrace,
    theorem: Theorem,
    problem: &SaddleProblem,
    gamma: f64,
    opts: &VerifyOptions,
) -> Result<RateReport> {
    let s = trace.s;
    let (rho, rho_source) = resolve_rho(problem, theorem, s, &opts.rho)?;
    let rate = theoretical_rate(theorem, rho, s);
    let mut pre = Vec::new();
    let mut push = |name: &str, holds: bool, detail: String| pre.push(PreconditionCheck { name: name.into(), holds, detail });

    push("rho_positive", rho > 0.0, format!("rho = {rho}"));
    push("factor_in_unit_interval", rate.valid, format!("factor = {}", rate.factor));
    if theorem != Theorem::OdeTransfer {
        let convex = !problem.is_nonconvex()
            || problem.quadratic_blocks().is_some_and(|h| {
                linalg::min_eigenvalue(&h.a) >= -1e-12 && linalg::min_eigenvalue(&h.c) >= -1e-12
            });
        push("convex_concave", convex, format!("family {}", problem.family()));
    }
    match theorem {
        Theorem::PpmFast => {
            push("step_size", s * 3.0 * gamma <= 1.0 + 1e-12, format!("s = {s} vs 1/(3γ) = {}", 1.0 / (3.0 * gamma)));
        }
        Theorem::EgmSlow => {
            push("step_size", s * 2.0 * gamma <= 1.0 + 1e-12, format!("s = {s} vs 1/(2γ) = {}", 1.0 / (2.0 * gamma)));
            let need = 8.0 * s * s * gamma.powi(3);
            push("rho_lower_bound", rho >= need, format!("rho = {rho} vs 8s²γ³ = {need}"));
        }
        Theorem::EgmFastQuadratic => {
            push("quadratic_family", problem.is_affine(), format!("family {}", problem.family()));
            push("step_size", s * 8.0 * gamma <= 1.0 + 1e-12, format!("s = {s} vs 1/(8γ) = {}", 1.0 / (8.0 * gamma)));
        }
        Theorem::OdeTransfer => match opts.properness {
            Some(c) => {
                let lhs = gamma * c * s.powi(opts.degree as i32 + 2);
                let rhs = 1f64.min(s * rho / 16.0);
                push("properness_coupling", lhs <= rhs, format!("γ·c·s^(r+2) = {lhs} vs min(1, sρ/16) = {rhs}"));
            }
            None => push("properness_coupling", false, "no properness constant supplied".into()),
        },
    }
    let applicable = pre.iter().all(|p| p.holds);

    let values = &trace.values;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut first_violation = None;
    let e0 = values.first().copied().unwrap_or(0.0);
    let envelope_factor = rate.factor + RATIO_SLACK;
    for k in 0..values.len().saturating_sub(1) {
        if values[k] <= ENERGY_FLOOR {
            break;
        }
        let ratio = values[k + 1] / values[k];
        worst = worst.max(ratio);
        checked += 1;
        let cumulative_ok = values[k + 1] <= ENERGY_FLOOR || values[k + 1] <= envelope_factor.powi(k as i32 + 1) * e0;
        if first_violation.is_none() && (ratio > envelope_factor || !cumulative_ok) {
            first_violation = Some(k);
        }
    }
    let pass = if !applicable {
        Verdict::NotApplicable
    } else if first_violation.is_none() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(RateReport {
        theorem,
        s,
        rho,
        rho_source,
        gamma,
        factor_theory: rate.factor,
        factor_empirical_max: worst,
        pass,
        k_max: checked,
        preconditions: pre,
        first_violation,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Converges,
    Diverges,
    Oscillates,
    Inconclusive,
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Behavior::Converges => "converges",
            Behavior::Diverges => "diverges",
            Behavior::Oscillates => "oscillates",
            Behavior::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Classification {
    pub behavior: Behavior,
    pub e0: f64,
    pub e_final: f64,
    pub tail_min: f64,
    pub tail_max: f64,
    pub tail_median: f64,
    pub tail_monotone: bool,
    pub thresholds: ClassifyThresholds,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ClassifyThresholds {
    pub converge_ratio: f64,
    pub diverge_ratio: f64,
    pub band: f64,
    pub monotone_slack: f64,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        Self { converge_ratio: 1e-3, diverge_ratio: 1e3, band: 0.1, monotone_slack: 1e-9 }
    }
}

/// Labels an energy sequence of at least 20 entries; the tail is its second half.
pub fn classify_behavior(values: &[f64]) -> Result<Classification> {
    if values.len() < 20 {
        return Err(Error::Precondition(format!("classification needs ≥ 20 samples, got {}", values.len())));
    }
    let th = ClassifyThresholds::default();
    let e0 = values[0];
    let e_final = *values.last().unwrap();
    let tail = &values[values.len() / 2..];
    let mut sorted = tail.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let tail_median = sorted[sorted.len() / 2];
    let (tail_min, tail_max) = (sorted[0], sorted[sorted.len() - 1]);
    let tail_monotone = tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + th.monotone_slack));
    let behavior = if e_final < th.converge_ratio * e0 && tail_monotone {
        Behavior::Converges
    } else if e_final > th.diverge_ratio * e0 {
        Behavior::Diverges
    } else if tail_median > 0.0 && tail_min >= (1.0 - th.band) * tail_median && tail_max <= (1.0 + th.band) * tail_median {
        Behavior::Oscillates
    } else {
        Behavior::Inconclusive
    };
    Ok(Classification { behavior, e0, e_final, tail_min, tail_max, tail_median, tail_monotone, thresholds: th })
}

#[derive(Clone, Debug, Serialize)]
pub struct ProperProbe {
    pub c_hat: f64,
    /// `(s, max ratio)` per step size.
    pub per_s: Vec<(f64, f64)>,
    pub stable: bool,
    pub samples: usize,
    pub excluded: usize,
}

/// Estimates the constant `c` in `‖Z(s) − z⁺‖ ≤ c s^{r+2} ‖F(z)‖` over points with `‖F(z)‖ ≤ δ`.
pub fn properness_probe(
    alg: Algorithm,
    degree: usize,
    problem: &SaddleProblem,
    delta: f64,
    sample_count: usize,
    s_list: &[f64],
    sampler: &Sampler,
) -> Result<ProperProbe> {
    let ode = derive(alg, degree)?.ode;
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mut points = Vec::with_capacity(sample_count);
    let mut excluded = 0;
    let budget = sample_count.saturating_mul(100).max(100);
    for _ in 0..budget {
        if points.len() == sample_count {
            break;
        }
        let z = Vector::from_fn(problem.dim(), |_, _| rng.gen_range(-sampler.radius..=sampler.radius));
        let f = problem.field(&z)?.norm();
        if f > delta {
            continue;
        }
        if f < 1e-12 {
            excluded += 1;
            continue;
        }
        points.push((z, f));
    }
    if points.is_empty() {
        return Err(Error::NoSamples(format!("no point with 1e-12 ≤ ‖F(z)‖ ≤ {delta}")));
    }
    let mut per_s = Vec::with_capacity(s_list.len());
    for &s in s_list {
        let mut worst: f64 = 0.0;
        for (z, f) in &points {
            let gap = one_step_gap(alg, &ode, problem, z, s)?;
            worst = worst.max(gap / (s.powi(degree as i32 + 2) * f));
        }
        per_s.push((s, worst));
    }
    let hi = per_s.iter().map(|p| p.1).fold(0.0, f64::max);
    let lo = per_s.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(ProperProbe { c_hat: hi, per_s, stable: lo > 0.0 && hi <= 2.0 * lo, samples: points.len(), excluded })
}
