//! High-resolution ODE toolkit for smooth minimax problems.
//!
//! The crate covers problem oracles, the four discrete-time saddle-point
//! algorithms (GDA, PPM, EGM, JM), a symbolic algebra over the saddle field
//! used to derive their resolution ODEs, an adaptive integrator, convergence
//! conditions, block skew-symmetric matrix checks, bilinear mode analysis and
//! a verification harness for the discrete rate theorems.

pub mod conditions;
pub mod dta;
pub mod error;
pub mod fieldexpr;
pub mod harness;
pub mod integrate;
pub mod linalg;
pub mod presets;
pub mod resolution;
pub mod saddle;
pub mod skewsym;
pub mod spectral;

pub use conditions::{ConditionKind, ExampleId, RhoEstimate, Sampler};
pub use dta::{Algorithm, DiscreteTrajectory, Method, PpmSettings};
pub use error::{Error, Result};
pub use fieldexpr::{FieldExpr, Rational};
pub use harness::{Behavior, EnergyTrace, RateReport, Theorem};
pub use integrate::{ContinuousTrajectory, Tolerances};
pub use resolution::{Expansion, HTable, Provenance, ResolutionOde};
pub use saddle::{BlockHessian, Point, ProblemSpec, SaddleProblem, ScalarFn};
pub use skewsym::GbssMatrix;
pub use spectral::{ModeDecomposition, ModeSolution, OrderTag};

/// Crate version embedded in emitted artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Dense real vector used throughout.
pub type Vector = nalgebra::DVector<f64>;
/// Dense real matrix used throughout.
pub type Matrix = nalgebra::DMatrix<f64>;
