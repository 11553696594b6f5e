//! Predictive recursion for scale mixtures of normals and the PR-EM
//! estimator for linear regression with heavy-tailed errors.

pub mod baselines;
pub mod error;
pub mod grid;
pub mod inference;
pub mod io;
pub mod model;
pub mod pr;
pub mod prem;
pub mod rng;
pub mod simulation;

pub use baselines::{BaselineFit, Method};
pub use error::{Error, Result};
pub use grid::{MixingDensity, ScaleGrid};
pub use inference::{CurvatureReport, Interval};
pub use io::{bundled_dataset, Dataset};
pub use model::RegressionData;
pub use pr::{PrConfig, PrResult, WeightSchedule};
pub use prem::{prem_fit, InitialDensity, PremConfig, PremFit};
pub use simulation::{ErrorDistribution, MseTable, ScenarioSpec};

pub use nalgebra::{DMatrix, DVector};
