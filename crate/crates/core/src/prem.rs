//! Hybrid PR-EM fitting of regression coefficients.
//!
//! The E-step runs the permutation-averaged predictive recursion on the
//! current residuals and returns the expected precision of each observation;
//! the M-step is a weighted least-squares solve with those precisions as
//! weights. Iteration starts from ordinary least squares and stops when the
//! L1 change in the coefficients drops below `tol_delta`.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::{MixingDensity, ScaleGrid, DEFAULT_DENSITY_FLOOR, DEFAULT_GRID_SIZE, DEFAULT_U_MIN};
use crate::model::{self, RegressionData};
use crate::pr::{self, PrConfig, PrResult, WeightSchedule, DEFAULT_PERMUTATIONS};

pub const DEFAULT_TOL_DELTA: f64 = 1e-4;
pub const DEFAULT_MAX_ITERATIONS: usize = 200;
/// Relative slack allowed before a log-likelihood drop counts as an ascent violation.
pub const ASCENT_SLACK: f64 = 1e-6;

/// Upper end of the scale support: `max(50, 3 sigma_hat)`.
pub fn default_umax(sigma_hat_ls: f64) -> f64 {
    f64::max(50.0, 3.0 * sigma_hat_ls)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialDensity {
    Uniform,
    /// Gamma density truncated to the support, with its mode at the least
    /// squares scale estimate.
    TruncatedGamma { shape: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PremConfig {
    pub grid_size: usize,
    pub u_min: f64,
    /// Overrides the `max(50, 3 sigma_hat)` rule when set.
    pub u_max: Option<f64>,
    pub initial_density: InitialDensity,
    pub weight_schedule: WeightSchedule,
    pub n_permutations: usize,
    pub seed: u64,
    pub tol_delta: f64,
    pub max_iterations: usize,
    pub beta_init: Option<DVector<f64>>,
    pub density_floor: f64,
}

impl Default for PremConfig {
    fn default() -> Self {
        Self {
            grid_size: DEFAULT_GRID_SIZE,
            u_min: DEFAULT_U_MIN,
            u_max: None,
            initial_density: InitialDensity::Uniform,
            weight_schedule: WeightSchedule::Harmonic,
            n_permutations: DEFAULT_PERMUTATIONS,
            seed: 0,
            tol_delta: DEFAULT_TOL_DELTA,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            beta_init: None,
            density_floor: DEFAULT_DENSITY_FLOOR,
        }
    }
}

impl PremConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol_delta > 0.0) {
            return Err(Error::domain("tol_delta must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::domain("max_iterations must be at least 1"));
        }
        Ok(())
    }

    /// PR settings on the grid implied by `sigma_hat`.
    pub fn pr_config(&self, sigma_hat: f64) -> Result<PrConfig> {
        let u_max = self.u_max.unwrap_or_else(|| default_umax(sigma_hat));
        let grid = Arc::new(ScaleGrid::uniform(self.u_min, u_max, self.grid_size)?);
        let psi0 = match self.initial_density {
            InitialDensity::Uniform => MixingDensity::uniform(Arc::clone(&grid)),
            InitialDensity::TruncatedGamma { shape } => {
                MixingDensity::truncated_gamma(Arc::clone(&grid), shape, sigma_hat.max(self.u_min))?
            }
        };
        let cfg = PrConfig {
            grid,
            psi0,
            weight_schedule: self.weight_schedule,
            n_permutations: self.n_permutations,
            permutation_seed: self.seed,
            density_floor: self.density_floor,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Output of one E-step.
#[derive(Debug, Clone, PartialEq)]
pub struct EStep {
    pub weights: Vec<f64>,
    pub loglik: f64,
    pub psi: MixingDensity,
}

/// The PR log marginal likelihood of a dataset as a function of the
/// coefficients, with the grid and permutations held fixed.
#[derive(Debug, Clone)]
pub struct PrObjective<'a> {
    data: &'a RegressionData,
    pr: PrConfig,
    permutations: Vec<Vec<usize>>,
    sigma_hat_ls: f64,
    ols: DVector<f64>,
}

impl<'a> PrObjective<'a> {
    pub fn new(data: &'a RegressionData, config: &PremConfig) -> Result<Self> {
        let ols = model::ordinary_least_squares(data)?;
        let sigma_hat_ls = model::rmse(&data.residuals(&ols)?, data.p());
        let pr = config.pr_config(sigma_hat_ls)?;
        let permutations = pr.permutations(data.n());
        Ok(Self {
            data,
            pr,
            permutations,
            sigma_hat_ls,
            ols,
        })
    }

    pub fn data(&self) -> &RegressionData {
        self.data
    }

    pub fn pr_config(&self) -> &PrConfig {
        &self.pr
    }

    pub fn permutations(&self) -> &[Vec<usize>] {
        &self.permutations
    }

    pub fn sigma_hat_ls(&self) -> f64 {
        self.sigma_hat_ls
    }

    pub fn ols(&self) -> &DVector<f64> {
        &self.ols
    }

    pub fn evaluate(&self, beta: &DVector<f64>) -> Result<PrResult> {
        let residuals = self.data.residuals(beta)?;
        pr::pr_averaged_over(residuals.as_slice(), &self.pr, &self.permutations)
    }

    pub fn loglik(&self, beta: &DVector<f64>) -> Result<f64> {
        Ok(self.evaluate(beta)?.log_marginal)
    }

    pub fn e_step(&self, beta: &DVector<f64>) -> Result<EStep> {
        let res = self.evaluate(beta)?;
        Ok(EStep {
            weights: res.per_obs_weights,
            loglik: res.log_marginal,
            psi: res.psi_n,
        })
    }
}

/// Permutation-averaged PR log marginal likelihood at `beta`.
pub fn pr_loglik(beta: &DVector<f64>, data: &RegressionData, config: &PremConfig) -> Result<f64> {
    PrObjective::new(data, config)?.loglik(beta)
}

pub fn e_step(beta: &DVector<f64>, data: &RegressionData, config: &PremConfig) -> Result<EStep> {
    PrObjective::new(data, config)?.e_step(beta)
}

/// Weighted least squares with the E-step precisions as weights.
pub fn m_step(data: &RegressionData, weights: &[f64]) -> Result<DVector<f64>> {
    model::weighted_least_squares(data, weights)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PremFit {
    pub beta_hat: DVector<f64>,
    pub psi_hat: MixingDensity,
    pub obs_weights: Vec<f64>,
    /// Log-likelihood at every coefficient iterate, starting with the initial one.
    pub loglik_path: Vec<f64>,
    pub beta_path: Vec<DVector<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub sigma_hat_ls: f64,
    /// Iterations (1-based) where the log-likelihood dropped by more than
    /// [`ASCENT_SLACK`] relative.
    pub ascent_violations: Vec<usize>,
}

pub fn prem_fit(data: &RegressionData, config: &PremConfig) -> Result<PremFit> {
    config.validate()?;
    let objective = PrObjective::new(data, config)?;
    prem_fit_with(&objective, config)
}

/// Runs PR-EM on a prepared objective.
pub fn prem_fit_with(objective: &PrObjective<'_>, config: &PremConfig) -> Result<PremFit> {
    let data = objective.data();
    let mut beta = match &config.beta_init {
        Some(b) => {
            data.check_beta(b)?;
            b.clone()
        }
        None => objective.ols().clone(),
    };

    let mut loglik_path = Vec::new();
    let mut beta_path = vec![beta.clone()];
    let mut converged = false;
    let mut iterations = 0;
    let mut step = objective.e_step(&beta)?;
    loglik_path.push(step.loglik);

    while iterations < config.max_iterations {
        let next = m_step(data, &step.weights)?;
        let change: f64 = (&next - &beta).abs().sum();
        beta = next;
        beta_path.push(beta.clone());
        iterations += 1;
        // Re-running the E-step at the new iterate both records the
        // likelihood path and yields the weights for the next M-step.
        step = objective.e_step(&beta)?;
        loglik_path.push(step.loglik);
        if change < config.tol_delta {
            converged = true;
            break;
        }
    }

    let ascent_violations = loglik_path
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] < w[0] - ASCENT_SLACK * w[0].abs())
        .map(|(t, _)| t + 1)
        .collect();

    Ok(PremFit {
        beta_hat: beta,
        psi_hat: step.psi,
        obs_weights: step.weights,
        loglik_path,
        beta_path,
        iterations,
        converged,
        sigma_hat_ls: objective.sigma_hat_ls(),
        ascent_violations,
    })
}

impl PremFit {
    pub fn median_weight(&self) -> f64 {
        median(&self.obs_weights)
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
