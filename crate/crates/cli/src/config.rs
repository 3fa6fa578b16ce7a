use std::collections::BTreeMap;
use std::path::Path;

use hrode::harness::Behavior;
use hrode::presets::{self, Preset};
use hrode::resolution::is_covered;
use hrode::{Algorithm, ProblemSpec, SaddleProblem, Vector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    GapOrder,
    Rates,
    Conditions,
    Spectral,
    Classification,
    Skewsym,
}

impl Suite {
    pub const ALL: [Suite; 6] =
        [Suite::GapOrder, Suite::Rates, Suite::Conditions, Suite::Spectral, Suite::Classification, Suite::Skewsym];

    pub fn label(self) -> &'static str {
        match self {
            Suite::GapOrder => "gap-order",
            Suite::Rates => "rates",
            Suite::Conditions => "conditions",
            Suite::Spectral => "spectral",
            Suite::Classification => "classification",
            Suite::Skewsym => "skewsym",
        }
    }
}

fn default_iterations() -> usize {
    200
}

/// Everything an experiment needs; presets expand into one of these.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemSpec,
    pub algorithms: Vec<Algorithm>,
    pub step_sizes: Vec<f64>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Integration horizon for ODE files; defaults to `s · iterations`.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Resolution degrees for which ODE trajectories are emitted.
    #[serde(default)]
    pub degrees: Vec<usize>,
    pub z0: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub expected_behavior: BTreeMap<String, Behavior>,
}

impl ExperimentConfig {
    pub fn from_preset(p: &Preset) -> Self {
        let bilinear = p.name == "fig2";
        let expected = if bilinear {
            [
                ("GDA", Behavior::Diverges),
                ("PPM", Behavior::Converges),
                ("EGM", Behavior::Converges),
                ("JM", Behavior::Converges),
                ("GF", Behavior::Oscillates),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
        } else {
            BTreeMap::new()
        };
        Self {
            name: p.name.clone(),
            problem: p.problem.clone(),
            algorithms: p.algorithms.clone(),
            step_sizes: vec![p.s],
            iterations: p.iterations,
            horizon: p.gf_horizon,
            degrees: if bilinear { vec![0, 1, 2] } else { Vec::new() },
            z0: p.z0.clone(),
            seed: 0,
            suites: Suite::ALL.to_vec(),
            expected_behavior: expected,
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| CliError::Config {
            path: format!("{}:{}:{}", path.display(), e.line(), e.column()),
            msg: e.to_string(),
        })?;
        Ok(cfg)
    }

    /// Loads `--config` or expands `--preset`, then applies `--seed`.
    pub fn resolve(config: Option<&Path>, preset: Option<&str>, seed: Option<u64>) -> CliResult<Self> {
        let mut cfg = match (config, preset) {
            (Some(path), None) => Self::load(path)?,
            (None, Some(name)) => Self::from_preset(&presets::by_name(name).map_err(|e| CliError::Usage(e.to_string()))?),
            (None, None) => return Err(CliError::Usage("pass either --config or --preset".into())),
            (Some(_), Some(_)) => return Err(CliError::Usage("--config and --preset are exclusive".into())),
        };
        if let Some(seed) = seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |path: String, msg: &str| Err(CliError::Config { path, msg: msg.into() });
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return bad("name".into(), "must be non-empty and use [A-Za-z0-9_-]");
        }
        if self.algorithms.is_empty() {
            return bad("algorithms".into(), "at least one algorithm is required");
        }
        if self.step_sizes.is_empty() {
            return bad("step_sizes".into(), "at least one step size is required");
        }
        for (i, s) in self.step_sizes.iter().enumerate() {
            if !(s.is_finite() && *s > 0.0) {
                return bad(format!("step_sizes[{i}]"), "must be positive and finite");
            }
        }
        if self.iterations == 0 {
            return bad("iterations".into(), "must be positive");
        }
        if let Some(h) = self.horizon {
            if !(h.is_finite() && h > 0.0) {
                return bad("horizon".into(), "must be positive and finite");
            }
        }
        for (i, d) in self.degrees.iter().enumerate() {
            if !Algorithm::ALL.iter().any(|&a| is_covered(a, *d)) {
                return bad(format!("degrees[{i}]"), "no algorithm has a resolution ODE of this degree");
            }
        }
        for (i, v) in self.z0.iter().enumerate() {
            if !v.is_finite() {
                return bad(format!("z0[{i}]"), "must be finite");
            }
        }
        for key in self.expected_behavior.keys() {
            if key != "GF" && key.parse::<Algorithm>().is_err() {
                return bad(format!("expected_behavior.{key}"), "unknown dynamic");
            }
        }
        let problem = self.build_problem().map_err(|e| CliError::Config { path: "problem".into(), msg: e.to_string() })?;
        if problem.dim() != self.z0.len() {
            return bad("z0".into(), &format!("expected {} entries, got {}", problem.dim(), self.z0.len()));
        }
        Ok(())
    }

    pub fn build_problem(&self) -> hrode::Result<SaddleProblem> {
        let mut spec = self.problem.clone();
        spec.seed = spec.seed.or(Some(self.seed));
        spec.name = spec.name.or_else(|| Some(self.name.clone()));
        spec.build()
    }

    pub fn z0(&self) -> Vector {
        Vector::from_column_slice(&self.z0)
    }

    pub fn horizon(&self, s: f64) -> f64 {
        self.horizon.unwrap_or(s * self.iterations as f64)
    }

    pub fn suites(&self) -> Vec<Suite> {
        if self.suites.is_empty() {
            Suite::ALL.to_vec()
        } else {
            self.suites.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in presets::NAMES {
            ExperimentConfig::resolve(None, Some(name), Some(3)).unwrap();
        }
    }

    #[test]
    fn errors_name_the_field() {
        let mut cfg = ExperimentConfig::from_preset(&presets::fig2());
        cfg.step_sizes = vec![0.3, -1.0];
        match cfg.validate() {
            Err(CliError::Config { path, .. }) => assert_eq!(path, "step_sizes[1]"),
            other => panic!("{other:?}"),
        }
        let mut cfg = ExperimentConfig::from_preset(&presets::fig2());
        cfg.z0 = vec![1.0];
        assert!(matches!(cfg.validate(), Err(CliError::Config { path, .. }) if path == "z0"));
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = ExperimentConfig::from_preset(&presets::fig1a());
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
    }
}
