//! Predictive recursion over a residual sequence.
//!
//! A single pass walks the residuals in a given order, accumulating the log
//! predictive densities `log f_{i-1}(r_i)` and the expected precision of each
//! observation under the one-step Bayes posterior built from the current
//! mixing density. [`pr_averaged`] repeats the pass over a fixed set of
//! seeded permutations and averages the results.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{self, MixingDensity, ScaleGrid, DEFAULT_DENSITY_FLOOR};
use crate::rng::{self, Purpose};

pub const DEFAULT_PERMUTATIONS: usize = 25;

/// Learning-rate sequence `i -> w_i` for the recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightSchedule {
    /// `w_i = (i + 1)^-1`.
    Harmonic,
    /// `w_i = (i + 1)^-gamma` with `gamma` in `(0.5, 1]`.
    Power(f64),
}

impl WeightSchedule {
    /// Weight for the `i`-th observation, `i >= 1`.
    pub fn weight(&self, i: usize) -> f64 {
        let base = (i + 1) as f64;
        match *self {
            WeightSchedule::Harmonic => 1.0 / base,
            WeightSchedule::Power(gamma) => base.powf(-gamma),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            WeightSchedule::Harmonic => Ok(()),
            WeightSchedule::Power(g) if g > 0.5 && g <= 1.0 => Ok(()),
            WeightSchedule::Power(g) => Err(Error::domain(format!(
                "power weight exponent must lie in (0.5, 1], got {g}"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrConfig {
    pub grid: Arc<ScaleGrid>,
    pub psi0: MixingDensity,
    pub weight_schedule: WeightSchedule,
    pub n_permutations: usize,
    pub permutation_seed: u64,
    pub density_floor: f64,
}

impl PrConfig {
    /// Uniform initial density, harmonic weights, 25 permutations.
    pub fn new(grid: Arc<ScaleGrid>, permutation_seed: u64) -> Self {
        let psi0 = MixingDensity::uniform(Arc::clone(&grid));
        Self {
            grid,
            psi0,
            weight_schedule: WeightSchedule::Harmonic,
            n_permutations: DEFAULT_PERMUTATIONS,
            permutation_seed,
            density_floor: DEFAULT_DENSITY_FLOOR,
        }
    }

    pub fn with_permutations(mut self, n_permutations: usize) -> Self {
        self.n_permutations = n_permutations;
        self
    }

    pub fn with_psi0(mut self, psi0: MixingDensity) -> Self {
        self.psi0 = psi0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_permutations == 0 {
            return Err(Error::domain("at least one permutation is required"));
        }
        if !Arc::ptr_eq(self.psi0.grid(), &self.grid) && **self.psi0.grid() != *self.grid {
            return Err(Error::domain("initial density lives on a different grid"));
        }
        if !(self.density_floor > 0.0) {
            return Err(Error::domain("density floor must be positive"));
        }
        self.weight_schedule.validate()
    }

    /// The fixed permutation set for `n` observations. A pure function of
    /// `(permutation_seed, n, n_permutations)`.
    pub fn permutations(&self, n: usize) -> Vec<Vec<usize>> {
        draw_permutations(self.permutation_seed, n, self.n_permutations)
    }
}

pub fn draw_permutations(seed: u64, n: usize, count: usize) -> Vec<Vec<usize>> {
    let mut rng = rng::stream(seed, Purpose::Permutations, n as u64);
    (0..count)
        .map(|_| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            order
        })
        .collect()
}

/// Output of one pass in one order.
#[derive(Debug, Clone, PartialEq)]
pub struct PassOutput {
    pub psi: MixingDensity,
    pub log_marginal: f64,
    /// Expected precisions indexed by original observation.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrResult {
    pub psi_n: MixingDensity,
    pub log_marginal: f64,
    pub per_obs_weights: Vec<f64>,
    pub per_perm_log_marginals: Vec<f64>,
}

pub fn pr_pass(residuals: &[f64], config: &PrConfig, permutation: &[usize]) -> Result<PassOutput> {
    pr_pass_observed(residuals, config, permutation, &mut |_, _| {})
}

/// [`pr_pass`] that hands every intermediate density to `observer` as
/// `(step, psi_step)`, starting with `psi_0` at step 0.
pub fn pr_pass_observed(
    residuals: &[f64],
    config: &PrConfig,
    permutation: &[usize],
    observer: &mut dyn FnMut(usize, &MixingDensity),
) -> Result<PassOutput> {
    check_residuals(residuals)?;
    check_permutation(permutation, residuals.len())?;
    let mut psi = config.psi0.clone();
    observer(0, &psi);
    let floor_ln = config.density_floor.ln();
    let mut terms = vec![0.0; config.grid.len()];
    let mut weights = vec![0.0; residuals.len()];
    let mut log_marginal = 0.0;
    for (step, &idx) in permutation.iter().enumerate() {
        let w = config.weight_schedule.weight(step + 1);
        let (log_f, precision) = grid::update_in_place(&mut psi, residuals[idx], w, &mut terms);
        log_marginal += log_f.max(floor_ln);
        weights[idx] = precision;
        observer(step + 1, &psi);
    }
    Ok(PassOutput {
        psi,
        log_marginal,
        weights,
    })
}

pub fn pr_averaged(residuals: &[f64], config: &PrConfig) -> Result<PrResult> {
    config.validate()?;
    let perms = config.permutations(residuals.len());
    pr_averaged_over(residuals, config, &perms)
}

/// Averages passes over an explicit permutation set.
pub fn pr_averaged_over(
    residuals: &[f64],
    config: &PrConfig,
    permutations: &[Vec<usize>],
) -> Result<PrResult> {
    if permutations.is_empty() {
        return Err(Error::domain("at least one permutation is required"));
    }
    check_residuals(residuals)?;
    let passes: Vec<PassOutput> = permutations
        .par_iter()
        .map(|perm| pr_pass(residuals, config, perm))
        .collect::<Result<_>>()?;
    Ok(average_passes(&config.psi0, residuals.len(), passes))
}

fn average_passes(psi0: &MixingDensity, n: usize, passes: Vec<PassOutput>) -> PrResult {
    let count = passes.len() as f64;
    let mut psi_sum = vec![0.0; psi0.grid().len()];
    let mut weights = vec![0.0; n];
    let mut per_perm = Vec::with_capacity(passes.len());
    for pass in &passes {
        for (acc, v) in psi_sum.iter_mut().zip(pass.psi.values()) {
            *acc += v;
        }
        for (acc, w) in weights.iter_mut().zip(&pass.weights) {
            *acc += w;
        }
        per_perm.push(pass.log_marginal);
    }
    weights.iter_mut().for_each(|w| *w /= count);
    let psi_n = MixingDensity::from_unnormalized(Arc::clone(psi0.grid()), psi_sum)
        .expect("average of valid densities is valid");
    let log_marginal = per_perm.iter().sum::<f64>() / count;
    PrResult {
        psi_n,
        log_marginal,
        per_obs_weights: weights,
        per_perm_log_marginals: per_perm,
    }
}

/// Posterior mean of `u^-2` given residual `r` and prior `psi_prev`.
pub fn expected_precision(psi_prev: &MixingDensity, r: f64) -> Result<f64> {
    if !r.is_finite() {
        return Err(Error::domain(format!("residual must be finite, got {r}")));
    }
    let grid = psi_prev.grid();
    let mut terms = vec![0.0; grid.len()];
    grid::posterior_terms(grid, psi_prev.values(), r, &mut terms);
    let total: f64 = terms.iter().sum();
    if !(total > 0.0) {
        return Err(Error::domain("posterior has no mass on the grid"));
    }
    Ok(terms
        .iter()
        .zip(grid.precisions())
        .map(|(t, p)| t * p)
        .sum::<f64>()
        / total)
}

fn check_residuals(residuals: &[f64]) -> Result<()> {
    match residuals.iter().position(|r| !r.is_finite()) {
        Some(i) => Err(Error::domain(format!("residual {i} is not finite"))),
        None => Ok(()),
    }
}

fn check_permutation(permutation: &[usize], n: usize) -> Result<()> {
    if permutation.len() != n {
        return Err(Error::domain(format!(
            "permutation has length {} for {n} observations",
            permutation.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in permutation {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::domain("ordering is not a permutation"));
        }
    }
    Ok(())
}
