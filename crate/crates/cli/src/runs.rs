use std::path::{Path, PathBuf};

use hrode::conditions::{rho_estimate, rho_formula, ConditionKind, ExampleId, RhoEstimate, Sampler};
use hrode::integrate::{integrate_ode, Tolerances};
use hrode::resolution::{derive, is_covered};
use hrode::saddle::Family;
use hrode::spectral::{bilinear_modes, dta_exact_rotation, fit_frequency, ModeDecomposition, ModeSolution, OrderTag};
use hrode::{Algorithm, Method, ResolutionOde, SaddleProblem, Vector};
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{ensure_dir, num, write_csv, write_json, Meta, Table};
use crate::config::ExperimentConfig;
use crate::error::CliResult;

/// One dynamic to simulate: a DTA, the gradient flow, or a resolution ODE.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dynamic {
    Dta(Algorithm),
    Gf,
    Ode(Algorithm, usize),
}

impl Dynamic {
    pub fn file_stem(self) -> String {
        match self {
            Dynamic::Dta(a) => a.to_string(),
            Dynamic::Gf => "GF".into(),
            Dynamic::Ode(a, r) => format!("{a}_ode_r{r}"),
        }
    }

    /// Mode-solution tag of this dynamic on a bilinear problem.
    pub fn order_tag(self) -> Option<OrderTag> {
        match self {
            Dynamic::Gf | Dynamic::Ode(_, 0) => Some(OrderTag::Gf),
            Dynamic::Ode(Algorithm::Gda, 1) => Some(OrderTag::GdaOs),
            Dynamic::Ode(Algorithm::Ppm | Algorithm::Egm, 1) => Some(OrderTag::Os),
            Dynamic::Ode(Algorithm::Ppm, 2) => Some(OrderTag::Os2Ppm),
            Dynamic::Ode(Algorithm::Egm, 2) => Some(OrderTag::Os2Egm),
            _ => None,
        }
    }
}

/// Dynamics emitted for `cfg`: every DTA, the gradient flow, and the
/// resolution ODEs of positive degree that exist for the chosen algorithms.
pub fn dynamics(cfg: &ExperimentConfig) -> Vec<Dynamic> {
    let mut out: Vec<Dynamic> = cfg.algorithms.iter().map(|&a| Dynamic::Dta(a)).collect();
    out.push(Dynamic::Gf);
    for &r in &cfg.degrees {
        if r == 0 {
            continue;
        }
        for &a in &cfg.algorithms {
            if is_covered(a, r) {
                out.push(Dynamic::Ode(a, r));
            }
        }
    }
    out
}

pub struct SampledPath {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub residuals: Option<Vec<f64>>,
    /// Growth exponent of the top mode, used to detrend before fitting ω.
    pub decay: f64,
}

pub fn simulate(cfg: &ExperimentConfig, problem: &SaddleProblem, dynamic: Dynamic, s: f64) -> CliResult<SampledPath> {
    let z0 = cfg.z0();
    let top_mode = problem.quadratic_blocks().map(|h| hrode::linalg::op_norm(&h.b)).unwrap_or(0.0);
    match dynamic {
        Dynamic::Dta(alg) => {
            let tr = Method::new(alg).run(problem, &z0, s, cfg.iterations)?;
            let mut residuals: Vec<f64> = vec![0.0];
            residuals.extend(tr.diagnostics.iter().map(|d| d.residual));
            let decay = dta_exact_rotation(alg, s, top_mode).map(|r| r.contraction.ln() / s).unwrap_or(0.0);
            Ok(SampledPath { times: tr.times(), states: tr.points, residuals: Some(residuals), decay })
        }
        Dynamic::Gf | Dynamic::Ode(..) => {
            let ode = match dynamic {
                Dynamic::Ode(alg, r) => derive(alg, r)?.ode,
                _ => ResolutionOde::gradient_flow(),
            };
            let horizon = cfg.horizon(s);
            let steps = ((horizon / s).round() as usize).max(1);
            let grid: Vec<f64> = (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect();
            let tr = integrate_ode(&ode, problem, &z0, s, horizon, Tolerances::default())?;
            let decay = match dynamic.order_tag() {
                Some(OrderTag::GdaOs) => 0.5 * s * top_mode * top_mode,
                Some(OrderTag::Gf) | None => 0.0,
                Some(_) => -0.5 * s * top_mode * top_mode,
            };
            Ok(SampledPath { states: tr.sample(&grid), times: grid, residuals: None, decay })
        }
    }
}

/// Frequency of the leading mode fitted from its `x̂` coordinate.
pub fn mode_frequency(modes: &ModeDecomposition, path: &SampledPath) -> Option<f64> {
    let xs: Vec<f64> = path.states.iter().map(|z| modes.project(z)[0].0).collect();
    fit_frequency(&path.times, &xs, path.decay).ok().map(|f| f.omega)
}

fn table(problem: &SaddleProblem, path: &SampledPath, omega: Option<Option<f64>>) -> CliResult<Table> {
    let dim = problem.dim();
    let mut header = vec!["step".to_string(), "t".to_string()];
    header.extend((0..dim).map(|i| format!("z{i}")));
    header.push("F_norm_sq".into());
    if path.residuals.is_some() {
        header.push("residual".into());
    }
    if omega.is_some() {
        header.push("omega_fit".into());
    }
    let mut rows = Vec::with_capacity(path.states.len());
    for (k, (t, z)) in path.times.iter().zip(&path.states).enumerate() {
        let mut row = vec![k.to_string(), num(*t)];
        row.extend(z.iter().map(|v| num(*v)));
        row.push(num(problem.field(z)?.norm_squared()));
        if let Some(res) = &path.residuals {
            row.push(num(res[k]));
        }
        if let Some(w) = omega {
            row.push(w.map(num).unwrap_or_default());
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Writes one CSV per (dynamic, step size); returns the paths in a fixed order.
pub fn cmd_trajectories(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    ensure_dir(out)?;
    let meta = Meta::for_config(cfg)?;
    let problem = cfg.build_problem()?;
    let modes = match problem.family() {
        Family::Bilinear => Some(bilinear_modes(&problem.quadratic_blocks().expect("bilinear is affine").b, 1e-10)?),
        _ => None,
    };
    let jobs: Vec<(Dynamic, f64)> =
        dynamics(cfg).into_iter().flat_map(|d| cfg.step_sizes.iter().map(move |&s| (d, s))).collect();
    let multi_s = cfg.step_sizes.len() > 1;
    jobs.par_iter()
        .map(|&(dynamic, s)| {
            let path = simulate(cfg, &problem, dynamic, s)?;
            let omega = modes.as_ref().map(|m| mode_frequency(m, &path));
            let suffix = if multi_s { format!("_s{s}") } else { String::new() };
            let file = out.join(format!("{}_{}{suffix}.csv", cfg.name, dynamic.file_stem()));
            write_csv(&file, &meta, &table(&problem, &path, omega)?)
        })
        .collect()
}

#[derive(Serialize)]
pub struct RhoReport {
    pub problem: String,
    pub s: f64,
    pub estimates: Vec<RhoEstimate>,
    pub formulas: Vec<FormulaValue>,
}

#[derive(Serialize)]
pub struct FormulaValue {
    pub example: ExampleId,
    pub rho: f64,
}

pub fn rho_report(cfg: &ExperimentConfig, kinds: &[ConditionKind], s: f64) -> CliResult<RhoReport> {
    let problem = cfg.build_problem()?;
    let sampler = Sampler::default().with_seed(cfg.seed);
    let estimates = kinds
        .par_iter()
        .map(|&k| rho_estimate(&problem, k, s, &sampler))
        .collect::<hrode::Result<Vec<_>>>()?;
    let formulas = ExampleId::ALL
        .iter()
        .filter_map(|&ex| rho_formula(ex, &problem, s).ok().map(|rho| FormulaValue { example: ex, rho }))
        .collect();
    Ok(RhoReport { problem: problem.name().to_string(), s, estimates, formulas })
}

pub fn cmd_rho(cfg: &ExperimentConfig, kinds: &[ConditionKind], s: Option<f64>, out: &Path) -> CliResult<(PathBuf, RhoReport)> {
    ensure_dir(out)?;
    let s = s.unwrap_or(cfg.step_sizes[0]);
    let report = rho_report(cfg, kinds, s)?;
    let path = write_json(&out.join(format!("{}_rho.json", cfg.name)), &Meta::for_config(cfg)?, &report)?;
    Ok((path, report))
}

#[derive(Serialize)]
pub struct SpectralReport {
    pub modes: ModeDecomposition,
    pub solutions: Vec<TaggedSolutions>,
    pub dta_rotations: Vec<DtaRotation>,
}

#[derive(Serialize)]
pub struct TaggedSolutions {
    pub tag: OrderTag,
    pub modes: Vec<ModeSolution>,
}

#[derive(Serialize)]
pub struct DtaRotation {
    pub algorithm: Algorithm,
    pub singular_value: f64,
    pub contraction: f64,
    /// Angle per step divided by `s`.
    pub frequency: f64,
}

pub fn spectral_report(cfg: &ExperimentConfig) -> CliResult<SpectralReport> {
    let problem = cfg.build_problem()?;
    if problem.family() != Family::Bilinear {
        return Err(hrode::Error::Unsupported(format!("mode analysis needs a bilinear problem, got {}", problem.family())).into());
    }
    let b = &problem.quadratic_blocks().expect("bilinear is affine").b;
    let modes = bilinear_modes(b, 1e-10)?;
    let s = cfg.step_sizes[0];
    let z0 = cfg.z0();
    let tags = [OrderTag::Gf, OrderTag::Os, OrderTag::Os2Ppm, OrderTag::Os2Egm, OrderTag::GdaOs];
    let solutions = tags.iter().map(|&tag| TaggedSolutions { tag, modes: modes.solutions(tag, s, &z0) }).collect();
    let mut dta_rotations = Vec::new();
    for alg in [Algorithm::Gda, Algorithm::Ppm, Algorithm::Egm] {
        for &lambda in &modes.singular_values {
            let rot = dta_exact_rotation(alg, s, lambda)?;
            dta_rotations.push(DtaRotation { algorithm: alg, singular_value: lambda, contraction: rot.contraction, frequency: rot.angle / s });
        }
    }
    Ok(SpectralReport { modes, solutions, dta_rotations })
}

pub fn cmd_spectral(cfg: &ExperimentConfig, out: &Path) -> CliResult<PathBuf> {
    ensure_dir(out)?;
    let report = spectral_report(cfg)?;
    write_json(&out.join(format!("{}_spectral.json", cfg.name)), &Meta::for_config(cfg)?, &report)
}
