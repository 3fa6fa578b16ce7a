use std::path::{Path, PathBuf};

use hrode::conditions::{rho_estimate, rho_formula, ConditionKind, ExampleId, Sampler};
use hrode::harness::{classify_behavior, energy_trace, energy_trace_continuous, gamma_bound, verify_rate, Theorem, Verdict, VerifyOptions};
use hrode::integrate::{gap_order_fit, integrate_ode, Tolerances};
use hrode::linalg;
use hrode::resolution::{derive, is_covered};
use hrode::saddle::Family;
use hrode::skewsym::{check_power_bound, check_resolvent_bound, fact1_margins, power_blocks, GbssMatrix};
use hrode::spectral::{bilinear_modes, closed_form_state, dta_exact_rotation, fit_frequency, OrderTag};
use hrode::{Algorithm, Matrix, ResolutionOde, SaddleProblem, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{ensure_dir, write_json, Meta};
use crate::config::{ExperimentConfig, Suite};
use crate::error::CliResult;

pub const GAP_STEPS: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.0125];

/// `GAP_STEPS` shrunk so the largest step satisfies `sγ ≤ 0.2` at `z`.
pub fn gap_steps(problem: &SaddleProblem, z: &Vector) -> hrode::Result<Vec<f64>> {
    let (gamma, _) = gamma_bound(problem, std::slice::from_ref(z))?;
    let scale = 1.0 / gamma.max(1.0);
    Ok(GAP_STEPS.iter().map(|s| s * scale).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

impl Status {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<serde_json::Value>,
}

impl Check {
    fn new(name: impl Into<String>, status: Status, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status, detail: detail.into(), data: None }
    }

    fn with_data<T: Serialize>(mut self, data: &T) -> Self {
        self.data = serde_json::to_value(data).ok();
        self
    }

    fn failed(name: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Self::new(name, Status::Fail, err.to_string())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub status: Status,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: Suite, checks: Vec<Check>) -> Self {
        let status = if checks.iter().any(|c| c.status == Status::Fail) {
            Status::Fail
        } else if checks.iter().any(|c| c.status == Status::Pass) {
            Status::Pass
        } else {
            Status::NotApplicable
        };
        Self { suite, status, checks }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyBundle {
    pub experiment: String,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

pub fn run_suite(suite: Suite, cfg: &ExperimentConfig) -> SuiteReport {
    let checks = match cfg.build_problem() {
        Err(e) => vec![Check::failed("problem", e)],
        Ok(problem) => match suite {
            Suite::GapOrder => gap_order(cfg, &problem),
            Suite::Rates => rates(cfg, &problem),
            Suite::Conditions => conditions(cfg, &problem),
            Suite::Spectral => spectral(cfg, &problem),
            Suite::Classification => classification(cfg, &problem),
            Suite::Skewsym => skewsym(cfg.seed),
        },
    };
    SuiteReport::new(suite, checks)
}

/// Runs the selected suites concurrently; suite order in the bundle follows `suites`.
pub fn run_bundle(cfg: &ExperimentConfig, suites: &[Suite]) -> VerifyBundle {
    let reports: Vec<SuiteReport> = suites.par_iter().map(|&s| run_suite(s, cfg)).collect();
    VerifyBundle { experiment: cfg.name.clone(), passed: reports.iter().all(|r| r.status != Status::Fail), suites: reports }
}

pub fn cmd_verify(cfg: &ExperimentConfig, suites: &[Suite], out: &Path) -> CliResult<(PathBuf, VerifyBundle)> {
    ensure_dir(out)?;
    let bundle = run_bundle(cfg, suites);
    let path = write_json(&out.join(format!("{}_verify.json", cfg.name)), &Meta::for_config(cfg)?, &bundle)?;
    Ok((path, bundle))
}

fn gap_order(cfg: &ExperimentConfig, problem: &SaddleProblem) -> Vec<Check> {
    let z = cfg.z0();
    let steps = match gap_steps(problem, &z) {
        Ok(v) => v,
        Err(e) => return vec![Check::failed("step sizes", e)],
    };
    let pairs: Vec<(Algorithm, usize)> =
        cfg.algorithms.iter().flat_map(|&a| (0..=2).filter(move |&r| is_covered(a, r)).map(move |r| (a, r))).collect();
    pairs
        .par_iter()
        .map(|&(alg, r)| {
            let name = format!("{alg} r={r}");
            match gap_order_fit(alg, r, problem, &z, &steps) {
                Ok(fit) => {
                    let (lo, hi) = (r as f64 + 1.9, r as f64 + 2.5);
                    let ok = fit.slope >= lo && fit.slope <= hi;
                    Check::new(name, Status::from_bool(ok), format!("slope {:.4} in [{lo}, {hi}]", fit.slope)).with_data(&fit)
                }
                Err(e) => Check::failed(name, e),
            }
        })
        .collect()
}

fn rates(cfg: &ExperimentConfig, problem: &SaddleProblem) -> Vec<Check> {
    let theorems = [Theorem::PpmFast, Theorem::EgmSlow, Theorem::EgmFastQuadratic];
    let mut jobs = Vec::new();
    for &s in &cfg.step_sizes {
        for t in theorems {
            if t.algorithm().is_some_and(|a| cfg.algorithms.contains(&a)) {
                jobs.push((t, s));
            }
        }
    }
    jobs.par_iter()
        .map(|&(theorem, s)| {
            let name = format!("{theorem} s={s}");
            let alg = theorem.algorithm().expect("discrete theorem");
            let report = (|| {
                let tr = hrode::dta::run(alg, problem, &cfg.z0(), s, cfg.iterations)?;
                let (gamma, _) = gamma_bound(problem, &tr.points)?;
                verify_rate(&energy_trace(&tr, problem)?, theorem, problem, gamma, &VerifyOptions::default())
            })();
            match report {
                Ok(rep) => {
                    let status = match rep.pass {
                        Verdict::Pass => Status::Pass,
                        Verdict::Fail => Status::Fail,
                        Verdict::NotApplicable => Status::NotApplicable,
                    };
                    let detail = format!(
                        "factor {:.6} vs empirical max {:.6} over {} steps (rho {:.6} from {})",
                        rep.factor_theory, rep.factor_empirical_max, rep.k_max, rep.rho, rep.rho_source
                    );
                    Check::new(name, status, detail).with_data(&rep)
                }
                Err(e) => Check::failed(name, e),
            }
        })
        .collect()
}

fn conditions(cfg: &ExperimentConfig, problem: &SaddleProblem) -> Vec<Check> {
    let sampler = Sampler::default().with_seed(cfg.seed);
    let mut checks = Vec::new();
    for &s in &cfg.step_sizes {
        let estimates: Vec<_> =
            ConditionKind::ALL.par_iter().map(|&k| (k, rho_estimate(problem, k, s, &sampler))).collect();
        for (kind, est) in &estimates {
            checks.push(match est {
                Ok(e) => Check::new(format!("{kind} s={s}"), Status::Pass, format!("rho = {:.6e}", e.value)).with_data(e),
                Err(e) => Check::failed(format!("{kind} s={s}"), e),
            });
        }
        let value_of = |kind| estimates.iter().find(|(k, _)| *k == kind).and_then(|(_, e)| e.as_ref().ok()).map(|e| e.value);
        match problem.family() {
            Family::Bilinear => {
                if let (Ok(formula), Some(est)) = (rho_formula(ExampleId::Bilinear, problem, s), value_of(ConditionKind::OsPpmEgm)) {
                    let rel = (est - formula).abs() / formula;
                    checks.push(Check::new(
                        format!("bilinear formula s={s}"),
                        Status::from_bool(rel <= 1e-6),
                        format!("estimate {est:.6e} vs formula {formula:.6e}"),
                    ));
                }
            }
            Family::Composite | Family::Separable => {
                if let (Ok(formula), Some(est)) =
                    (rho_formula(ExampleId::Composite, problem, s), value_of(ConditionKind::OsStrongWeakened))
                {
                    checks.push(Check::new(
                        format!("composite formula s={s}"),
                        Status::from_bool(est >= formula * (1.0 - 1e-9)),
                        format!("estimate {est:.6e} vs lower bound {formula:.6e}"),
                    ));
                }
            }
            _ => {}
        }
    }
    checks
}

fn spectral(cfg: &ExperimentConfig, problem: &SaddleProblem) -> Vec<Check> {
    if problem.family() != Family::Bilinear {
        return vec![Check::new("modes", Status::NotApplicable, "mode analysis needs a bilinear problem")];
    }
    let b = problem.quadratic_blocks().expect("bilinear is affine").b.clone();
    let modes = match bilinear_modes(&b, 1e-10) {
        Ok(m) => m,
        Err(e) => return vec![Check::failed("modes", e)],
    };
    let z0 = cfg.z0();
    let lambda = modes.singular_values[0];
    let mut checks = Vec::new();
    for &s in &cfg.step_sizes {
        let cases = [(Algorithm::Ppm, OrderTag::Os, 10.0), (Algorithm::Gda, OrderTag::GdaOs, 5.0)];
        for (alg, tag, horizon) in cases {
            let name = format!("closed form {alg} O(s) s={s}");
            let result = (|| -> hrode::Result<f64> {
                let ode = derive(alg, 1)?.ode;
                let tr = integrate_ode(&ode, problem, &z0, s, horizon, Tolerances::uniform(1e-11))?;
                let grid: Vec<f64> = (0..=200).map(|k| horizon * k as f64 / 200.0).collect();
                Ok(grid
                    .iter()
                    .zip(tr.sample(&grid))
                    .map(|(&t, z)| (z - closed_form_state(&modes, tag, s, &z0, t)).amax())
                    .fold(0.0, f64::max))
            })();
            checks.push(match result {
                Ok(err) => Check::new(name, Status::from_bool(err <= 1e-6), format!("max error {err:.3e}")),
                Err(e) => Check::failed(name, e),
            });
        }
        let predicted = [(Algorithm::Ppm, lambda - s * s * lambda.powi(3) / 3.0), (Algorithm::Egm, lambda + 2.0 * s * s * lambda.powi(3) / 3.0)];
        for (alg, o2) in predicted {
            let name = format!("{alg} frequency s={s}");
            let result = (|| -> hrode::Result<(f64, f64)> {
                let rot = dta_exact_rotation(alg, s, lambda)?;
                let tr = hrode::dta::run(alg, problem, &z0, s, cfg.iterations)?;
                let xs: Vec<f64> = tr.points.iter().map(|z| modes.project(z)[0].0).collect();
                let fit = fit_frequency(&tr.times(), &xs, rot.contraction.ln() / s)?;
                Ok((fit.omega, rot.angle / s))
            })();
            checks.push(match result {
                Ok((omega, exact)) => {
                    let ok = (omega / exact - 1.0).abs() <= 0.01;
                    Check::new(name, Status::from_bool(ok), format!("fit {omega:.5}, exact {exact:.5}, second-order ODE {o2:.5}"))
                }
                Err(e) => Check::failed(name, e),
            });
        }
        let jac = problem.affine_parts().expect("bilinear is affine").0;
        let generator: Matrix = -jac + jac * jac * (s / 2.0);
        let coupling = modes.cross_mode_coupling(&generator);
        checks.push(Check::new(format!("mode decoupling s={s}"), Status::from_bool(coupling <= 1e-12), format!("max cross term {coupling:.3e}")));
    }
    checks
}

/// Behaviour label for each dynamic, in the order DTAs then GF.
pub fn behaviors(cfg: &ExperimentConfig, problem: &SaddleProblem, s: f64) -> Vec<(String, hrode::Result<hrode::harness::Classification>)> {
    let mut out: Vec<(String, hrode::Result<_>)> = cfg
        .algorithms
        .par_iter()
        .map(|&alg| {
            let res = hrode::dta::run(alg, problem, &cfg.z0(), s, cfg.iterations)
                .and_then(|tr| energy_trace(&tr, problem))
                .and_then(|t| classify_behavior(&t.values));
            (alg.to_string(), res)
        })
        .collect();
    let grid: Vec<f64> = (0..=cfg.iterations).map(|k| k as f64 * s).collect();
    let gf = integrate_ode(&ResolutionOde::gradient_flow(), problem, &cfg.z0(), s, cfg.horizon(s), Tolerances::default())
        .and_then(|tr| energy_trace_continuous(&tr, problem, &grid, s, "GF"))
        .and_then(|t| classify_behavior(&t.values));
    out.push(("GF".into(), gf));
    out
}

fn classification(cfg: &ExperimentConfig, problem: &SaddleProblem) -> Vec<Check> {
    let mut checks = Vec::new();
    for &s in &cfg.step_sizes {
        for (name, res) in behaviors(cfg, problem, s) {
            let label = format!("{name} s={s}");
            checks.push(match res {
                Ok(c) => match cfg.expected_behavior.get(&name) {
                    Some(want) => Check::new(label, Status::from_bool(*want == c.behavior), format!("{} (expected {want})", c.behavior)),
                    None => Check::new(label, Status::NotApplicable, c.behavior.to_string()),
                }
                .with_data(&c),
                Err(e) => Check::failed(label, e),
            });
        }
    }
    checks
}

#[derive(Default, Serialize)]
struct SkewTally {
    instances: usize,
    structure_ok: usize,
    power_bound_ok: usize,
    fact_ok: usize,
    resolvent_ok: usize,
}

/// 100 seeded block skew-symmetric instances; each property counts instances with no violation.
pub fn skewsym(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = SkewTally { instances: 100, ..SkewTally::default() };
    let mut errors = Vec::new();
    for inst in 0..tally.instances {
        let (n, m) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let g = GbssMatrix::random(&mut rng, n, m);
        let dim = n + m;
        let gamma = g.norm();
        if (1..=12).all(|i| power_blocks(&g, i).is_ok()) {
            tally.structure_ok += 1;
        }
        let mut ok = true;
        for i in 3..=8 {
            for _ in 0..20 {
                let c = Vector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
                match check_power_bound(&g, gamma, i, &c) {
                    Ok(chk) => ok &= chk.holds,
                    Err(e) => {
                        ok = false;
                        errors.push(format!("instance {inst}: {e}"));
                    }
                }
            }
        }
        tally.power_bound_ok += ok as usize;
        let h = linalg::symmetrize(&Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)));
        let (minus, plus) = fact1_margins(g.a(), &h);
        tally.fact_ok += (minus >= -1e-10 && plus >= -1e-10) as usize;
        let s = 1.0 / (8.0 * gamma);
        let mut ok = true;
        for j in 3..=8 {
            let c = Vector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
            match check_resolvent_bound(&g, gamma, s, j, &c) {
                Ok(chk) => ok &= chk.holds,
                Err(e) => {
                    ok = false;
                    errors.push(format!("instance {inst}: {e}"));
                }
            }
        }
        tally.resolvent_ok += ok as usize;
    }
    let n = tally.instances;
    let mk = |name: &str, count: usize| {
        Check::new(name, Status::from_bool(count == n), format!("{count}/{n} instances hold"))
    };
    let mut checks = vec![
        mk("power structure", tally.structure_ok),
        mk("power bound", tally.power_bound_ok),
        mk("symmetric product bound", tally.fact_ok),
        mk("resolvent bound", tally.resolvent_ok),
    ];
    if !errors.is_empty() {
        checks.push(Check::new("errors", Status::Fail, errors.join("; ")));
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;
    use hrode::presets;

    #[test]
    fn skewsym_suite_is_clean() {
        let checks = skewsym(7);
        assert!(checks.iter().all(|c| c.status == Status::Pass), "{checks:?}");
        assert_eq!(checks[1].detail, "100/100 instances hold");
    }

    #[test]
    fn fig2_table_matches() {
        let cfg = ExperimentConfig::from_preset(&presets::fig2());
        let rep = run_suite(Suite::Classification, &cfg);
        assert_eq!(rep.status, Status::Pass, "{:?}", rep.checks);
    }

    #[test]
    fn fig1a_ppm_rate_passes() {
        let cfg = ExperimentConfig::from_preset(&presets::fig1a());
        let rep = run_suite(Suite::Rates, &cfg);
        let ppm = rep.checks.iter().find(|c| c.name.starts_with("ppm_fast")).unwrap();
        assert_eq!(ppm.status, Status::Pass, "{}", ppm.detail);
        assert_ne!(rep.status, Status::Fail);
    }
}
