//! Discretized mixing densities over a compact scale support.
//!
//! The mixing density is stored as values on a uniform grid over
//! `[u_min, u_max]` and integrated with the trapezoid rule. The same
//! quadrature is used in every integral (mixture density, predictive
//! update, posterior moments), so a predictive update preserves the unit
//! integral up to roundoff.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Lower end of the scale support.
pub const DEFAULT_U_MIN: f64 = 1e-5;
/// Number of grid points on the scale support.
pub const DEFAULT_GRID_SIZE: usize = 100;
/// Floor applied to mixture densities before division or logarithms.
pub const DEFAULT_DENSITY_FLOOR: f64 = 1e-300;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Uniform grid on `[u_min, u_max]` with trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleGrid {
    u_min: f64,
    u_max: f64,
    points: Vec<f64>,
    quadrature_weights: Vec<f64>,
    // Cached per-point constants for kernel evaluation.
    ln_points: Vec<f64>,
    half_inv_sq: Vec<f64>,
    inv_sq: Vec<f64>,
}

impl ScaleGrid {
    pub fn uniform(u_min: f64, u_max: f64, size: usize) -> Result<Self> {
        if !(u_min.is_finite() && u_min > 0.0) {
            return Err(Error::domain(format!("u_min must be positive, got {u_min}")));
        }
        if !(u_max.is_finite() && u_max > u_min) {
            return Err(Error::domain(format!(
                "u_max must exceed u_min ({u_min}), got {u_max}"
            )));
        }
        if size < 2 {
            return Err(Error::domain(format!("grid needs at least 2 points, got {size}")));
        }
        let step = (u_max - u_min) / (size - 1) as f64;
        let mut points: Vec<f64> = (0..size).map(|m| u_min + step * m as f64).collect();
        points[size - 1] = u_max;
        let mut quadrature_weights = vec![step; size];
        quadrature_weights[0] = 0.5 * step;
        quadrature_weights[size - 1] = 0.5 * step;
        Ok(Self::from_parts(u_min, u_max, points, quadrature_weights))
    }

    fn from_parts(u_min: f64, u_max: f64, points: Vec<f64>, quadrature_weights: Vec<f64>) -> Self {
        let ln_points = points.iter().map(|u| u.ln()).collect();
        let half_inv_sq = points.iter().map(|u| 0.5 / (u * u)).collect();
        let inv_sq = points.iter().map(|u| 1.0 / (u * u)).collect();
        Self {
            u_min,
            u_max,
            points,
            quadrature_weights,
            ln_points,
            half_inv_sq,
            inv_sq,
        }
    }

    pub fn u_min(&self) -> f64 {
        self.u_min
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn quadrature_weights(&self) -> &[f64] {
        &self.quadrature_weights
    }

    /// `u^-2` at every grid point.
    pub fn precisions(&self) -> &[f64] {
        &self.inv_sq
    }

    /// Trapezoid integral of `values` over the support.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.quadrature_weights
            .iter()
            .zip(values)
            .map(|(q, v)| q * v)
            .sum()
    }

    /// Index of the grid point closest to `u`.
    pub fn nearest_index(&self, u: f64) -> usize {
        let mut best = 0;
        for (m, p) in self.points.iter().enumerate() {
            if (p - u).abs() < (self.points[best] - u).abs() {
                best = m;
            }
        }
        best
    }

    #[inline]
    pub(crate) fn log_kernel_at(&self, m: usize, r_sq: f64) -> f64 {
        -LN_SQRT_2PI - self.ln_points[m] - r_sq * self.half_inv_sq[m]
    }
}

/// Density of the mixing distribution on a [`ScaleGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixingDensity {
    grid: Arc<ScaleGrid>,
    values: Vec<f64>,
}

impl MixingDensity {
    /// Normalizes `values` to a unit quadrature integral.
    pub fn from_unnormalized(grid: Arc<ScaleGrid>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::domain(format!(
                "density has {} values but the grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain("density values must be finite and nonnegative"));
        }
        let total = grid.integrate(&values);
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::domain("density has zero or non-finite total mass"));
        }
        values.iter_mut().for_each(|v| *v /= total);
        Ok(Self { grid, values })
    }

    pub fn uniform(grid: Arc<ScaleGrid>) -> Self {
        let values = vec![1.0; grid.len()];
        Self::from_unnormalized(grid, values).expect("uniform density is valid")
    }

    /// All mass at grid point `index`.
    pub fn spike(grid: Arc<ScaleGrid>, index: usize) -> Result<Self> {
        if index >= grid.len() {
            return Err(Error::domain(format!("spike index {index} is off the grid")));
        }
        let mut values = vec![0.0; grid.len()];
        values[index] = 1.0;
        Self::from_unnormalized(grid, values)
    }

    /// Gamma density with the given shape and mode, truncated to the support.
    pub fn truncated_gamma(grid: Arc<ScaleGrid>, shape: f64, mode: f64) -> Result<Self> {
        if !(shape > 1.0 && mode > 0.0) {
            return Err(Error::domain("truncated gamma needs shape > 1 and a positive mode"));
        }
        let scale = mode / (shape - 1.0);
        let values = grid
            .points()
            .iter()
            .map(|u| ((shape - 1.0) * (u / mode).ln() - (u - mode) / scale).exp())
            .collect();
        Self::from_unnormalized(grid, values)
    }

    pub fn grid(&self) -> &Arc<ScaleGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// Mass assigned to the closed interval `[lo, hi]` by the trapezoid rule
    /// restricted to grid points inside it.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        self.grid
            .points()
            .iter()
            .zip(self.grid.quadrature_weights())
            .zip(&self.values)
            .filter(|((u, _), _)| **u >= lo && **u <= hi)
            .map(|((_, q), v)| q * v)
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.grid
            .points()
            .iter()
            .zip(self.grid.quadrature_weights())
            .zip(&self.values)
            .map(|((u, q), v)| u * q * v)
            .sum()
    }

    pub(crate) fn renormalize(&mut self) {
        let total = self.integral();
        if total > 0.0 && total.is_finite() {
            self.values.iter_mut().for_each(|v| *v /= total);
        }
    }
}

/// The `N(r | 0, u^2)` density.
pub fn normal_kernel(r: f64, u: f64) -> Result<f64> {
    if !r.is_finite() {
        return Err(Error::domain(format!("residual must be finite, got {r}")));
    }
    if !(u.is_finite() && u > 0.0) {
        return Err(Error::domain(format!("scale must be positive, got {u}")));
    }
    let z = r / u;
    // exp underflows to +0.0, never NaN
    Ok((-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * u))
}

/// Mixture density `∫ N(r | 0, u^2) psi(u) du`, floored at `floor`.
pub fn mixture_density_with_floor(r: f64, psi: &MixingDensity, floor: f64) -> Result<f64> {
    Ok(log_mixture_density(r, psi)?.exp().max(floor))
}

/// Mixture density floored at [`DEFAULT_DENSITY_FLOOR`].
pub fn mixture_density(r: f64, psi: &MixingDensity) -> Result<f64> {
    mixture_density_with_floor(r, psi, DEFAULT_DENSITY_FLOOR)
}

/// Unfloored log mixture density; `-inf` only if the density is exactly 0.
pub fn log_mixture_density(r: f64, psi: &MixingDensity) -> Result<f64> {
    if !r.is_finite() {
        return Err(Error::domain(format!("residual must be finite, got {r}")));
    }
    let mut scratch = vec![0.0; psi.grid.len()];
    Ok(posterior_terms(psi.grid(), psi.values(), r, &mut scratch))
}

/// Fills `terms[m]` with `q_m psi_m K(r, u_m) / exp(shift)` and returns the
/// log mixture density `shift + ln(sum terms)`. Falls back to a log-domain
/// evaluation when the shifted sum underflows.
pub(crate) fn posterior_terms(grid: &ScaleGrid, psi: &[f64], r: f64, terms: &mut [f64]) -> f64 {
    let r_sq = r * r;
    let m_len = grid.len();
    let shift = peak_log_kernel(grid, r.abs(), r_sq);
    let q = grid.quadrature_weights();
    let mut total = 0.0;
    for m in 0..m_len {
        let t = q[m] * psi[m] * (grid.log_kernel_at(m, r_sq) - shift).exp();
        terms[m] = t;
        total += t;
    }
    if total > 1e-280 {
        return shift + total.ln();
    }

    let mut log_terms = vec![f64::NEG_INFINITY; m_len];
    let mut best = f64::NEG_INFINITY;
    for m in 0..m_len {
        if psi[m] > 0.0 {
            let lt = (q[m] * psi[m]).ln() + grid.log_kernel_at(m, r_sq);
            log_terms[m] = lt;
            best = best.max(lt);
        }
    }
    if best == f64::NEG_INFINITY {
        terms.iter_mut().for_each(|t| *t = 0.0);
        return f64::NEG_INFINITY;
    }
    let mut total = 0.0;
    for m in 0..m_len {
        let t = (log_terms[m] - best).exp();
        terms[m] = t;
        total += t;
    }
    best + total.ln()
}

/// Grid maximum of the log kernel. As a function of `u` the kernel peaks at
/// `u = |r|`, so the maximum sits at one of the two grid neighbours of `|r|`.
fn peak_log_kernel(grid: &ScaleGrid, abs_r: f64, r_sq: f64) -> f64 {
    let last = grid.len() - 1;
    if abs_r <= grid.u_min {
        return grid.log_kernel_at(0, r_sq);
    }
    if abs_r >= grid.u_max {
        return grid.log_kernel_at(last, r_sq);
    }
    let step = (grid.u_max - grid.u_min) / last as f64;
    let lo = (((abs_r - grid.u_min) / step).floor() as usize).min(last);
    let hi = (lo + 1).min(last);
    grid.log_kernel_at(lo, r_sq).max(grid.log_kernel_at(hi, r_sq))
}

/// One predictive-recursion update of `psi` with kernel values supplied on
/// the grid: `(1 - w) psi + w * kernel * psi / f`, with `f` the quadrature of
/// `kernel * psi`.
pub fn pr_update(psi: &MixingDensity, kernel: &[f64], weight: f64) -> Result<MixingDensity> {
    check_weight(weight)?;
    if kernel.len() != psi.grid.len() {
        return Err(Error::domain("kernel length does not match the grid"));
    }
    if kernel.iter().any(|k| !k.is_finite() || *k < 0.0) {
        return Err(Error::domain("kernel values must be finite and nonnegative"));
    }
    let f: f64 = psi
        .grid
        .quadrature_weights()
        .iter()
        .zip(kernel)
        .zip(&psi.values)
        .map(|((q, k), v)| q * k * v)
        .sum::<f64>()
        .max(DEFAULT_DENSITY_FLOOR);
    let mut next = psi.clone();
    for (v, k) in next.values.iter_mut().zip(kernel) {
        *v = (1.0 - weight) * *v + weight * k * *v / f;
    }
    next.renormalize();
    Ok(next)
}

/// One predictive-recursion update with the normal kernel at residual `r`.
pub fn pr_step(psi: &MixingDensity, r: f64, weight: f64) -> Result<MixingDensity> {
    check_weight(weight)?;
    if !r.is_finite() {
        return Err(Error::domain(format!("residual must be finite, got {r}")));
    }
    let mut next = psi.clone();
    let mut terms = vec![0.0; psi.grid.len()];
    update_in_place(&mut next, r, weight, &mut terms);
    Ok(next)
}

/// Updates `psi` in place and returns `(log f(r), expected precision)`, both
/// computed from the density before the update.
pub(crate) fn update_in_place(
    psi: &mut MixingDensity,
    r: f64,
    weight: f64,
    terms: &mut [f64],
) -> (f64, f64) {
    let grid = Arc::clone(&psi.grid);
    let log_f = posterior_terms(&grid, &psi.values, r, terms);
    let total: f64 = terms.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        // Posterior undefined; leave psi as the convex combination's first term.
        return (log_f, precision_fallback(&grid, &psi.values));
    }
    let inv_total = 1.0 / total;
    let q = grid.quadrature_weights();
    let prec = grid.precisions();
    let mut expected_precision = 0.0;
    let mut mass = 0.0;
    for m in 0..grid.len() {
        let post = terms[m] * inv_total;
        expected_precision += post * prec[m];
        // terms[m] = q_m psi_m k_m, so the posterior density is post / q_m.
        let v = (1.0 - weight) * psi.values[m] + weight * post / q[m];
        psi.values[m] = v;
        mass += q[m] * v;
    }
    let inv_mass = 1.0 / mass;
    psi.values.iter_mut().for_each(|v| *v *= inv_mass);
    (log_f, expected_precision)
}

fn precision_fallback(grid: &ScaleGrid, psi: &[f64]) -> f64 {
    let q = grid.quadrature_weights();
    let total: f64 = q.iter().zip(psi).map(|(q, v)| q * v).sum();
    q.iter()
        .zip(psi)
        .zip(grid.precisions())
        .map(|((q, v), p)| q * v * p)
        .sum::<f64>()
        / total
}

fn check_weight(weight: f64) -> Result<()> {
    if weight > 0.0 && weight < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("PR weight must lie in (0, 1), got {weight}")))
    }
}
