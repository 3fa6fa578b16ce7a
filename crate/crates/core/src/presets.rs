//! Built-in experiment setups.

use serde::{Deserialize, Serialize};

use crate::dta::Algorithm;
use crate::error::{Error, Result};
use crate::saddle::ProblemSpec;
use crate::{Matrix, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub problem: ProblemSpec,
    pub s: f64,
    pub z0: Vec<f64>,
    pub iterations: usize,
    pub algorithms: Vec<Algorithm>,
    /// Horizon for the gradient flow; `None` uses `s·iterations`.
    pub gf_horizon: Option<f64>,
}

impl Preset {
    pub fn z0(&self) -> Vector {
        Vector::from_column_slice(&self.z0)
    }

    pub fn horizon(&self) -> f64 {
        self.gf_horizon.unwrap_or(self.s * self.iterations as f64)
    }
}

pub const NAMES: [&str; 2] = ["fig1a", "fig2"];

/// `L = x²/2 + 2xy − y²/2`, `s = 0.1`, start `(1, 1)`.
pub fn fig1a() -> Preset {
    let one = Matrix::from_element(1, 1, 1.0);
    let mut problem = ProblemSpec::quadratic(&one, &Matrix::from_element(1, 1, 2.0), &one);
    problem.name = Some("fig1a".into());
    Preset {
        name: "fig1a".into(),
        problem,
        s: 0.1,
        z0: vec![1.0, 1.0],
        iterations: 200,
        algorithms: Algorithm::ALL.to_vec(),
        gf_horizon: None,
    }
}

/// `L = xy`, `s = 0.3`, start `(1, 1)`.
pub fn fig2() -> Preset {
    let mut problem = ProblemSpec::bilinear(&Matrix::from_element(1, 1, 1.0));
    problem.name = Some("fig2".into());
    Preset {
        name: "fig2".into(),
        problem,
        s: 0.3,
        z0: vec![1.0, 1.0],
        iterations: 200,
        algorithms: Algorithm::ALL.to_vec(),
        gf_horizon: None,
    }
}

pub fn by_name(name: &str) -> Result<Preset> {
    match name {
        "fig1a" => Ok(fig1a()),
        "fig2" | "fig1b" => Ok(fig2()),
        other => Err(Error::Unsupported(format!("unknown preset `{other}` (known: {})", NAMES.join(", ")))),
    }
}
