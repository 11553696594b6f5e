//! Wald intervals from the curvature of the PR log marginal likelihood.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::model::{self, RegressionData};
use crate::prem::{PrObjective, PremConfig, PremFit};

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureReport {
    /// Finite-difference Hessian of the negative log-likelihood.
    pub hessian: DMatrix<f64>,
    /// Inverse of `hessian`.
    pub hessian_inverse: DMatrix<f64>,
    pub step_sizes: Vec<f64>,
    pub condition_number: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Interval {
    pub coefficient: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// `h_j = max(1e-4, 1e-4 |beta_j|)`.
pub fn default_steps(beta: &DVector<f64>) -> Vec<f64> {
    beta.iter().map(|b| f64::max(1e-4, 1e-4 * b.abs())).collect()
}

/// Central-difference Hessian of `objective` at `beta`, symmetrized.
pub fn hessian_fd<F>(objective: F, beta: &DVector<f64>, steps: &[f64]) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64> + Sync,
{
    let p = beta.len();
    if steps.len() != p || steps.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::domain("one positive finite step per coefficient is required"));
    }

    // Stencil offsets as (index, sign) pairs: the centre, +-h_j e_j, and the
    // four corners for each off-diagonal pair.
    let mut stencil: Vec<Vec<(usize, f64)>> = vec![vec![]];
    for j in 0..p {
        stencil.push(vec![(j, 1.0)]);
        stencil.push(vec![(j, -1.0)]);
    }
    for j in 0..p {
        for k in (j + 1)..p {
            for (sj, sk) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                stencil.push(vec![(j, sj), (k, sk)]);
            }
        }
    }
    let values: Vec<f64> = stencil
        .par_iter()
        .map(|offsets| {
            let mut point = beta.clone();
            for &(idx, sign) in offsets {
                point[idx] += sign * steps[idx];
            }
            match objective(&point) {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(Error::NonFiniteObjective {
                    point: point.iter().copied().collect(),
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let centre = values[0];
    let mut h = DMatrix::zeros(p, p);
    for j in 0..p {
        let plus = values[1 + 2 * j];
        let minus = values[2 + 2 * j];
        h[(j, j)] = (plus - 2.0 * centre + minus) / (steps[j] * steps[j]);
    }
    let mut cursor = 1 + 2 * p;
    for j in 0..p {
        for k in (j + 1)..p {
            let (pp, pm, mp, mm) = (
                values[cursor],
                values[cursor + 1],
                values[cursor + 2],
                values[cursor + 3],
            );
            cursor += 4;
            let v = (pp - pm - mp + mm) / (4.0 * steps[j] * steps[k]);
            h[(j, k)] = v;
            h[(k, j)] = v;
        }
    }
    Ok(h)
}

/// Inverts the Hessian of `-objective`; fails on an indefinite or singular
/// curvature, reporting the smallest eigenvalue.
pub fn curvature<F>(objective: F, beta_hat: &DVector<f64>, steps: Vec<f64>) -> Result<CurvatureReport>
where
    F: Fn(&DVector<f64>) -> Result<f64> + Sync,
{
    let hessian = -hessian_fd(objective, beta_hat, &steps)?;
    let eig = hessian.clone().symmetric_eigen();
    let (min_idx, min_eval) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one coefficient");
    let max_eval = eig.eigenvalues.max();
    if !(min_eval > 0.0) {
        let v = eig.eigenvectors.column(min_idx);
        let coordinate = v.iamax();
        return Err(Error::IndefiniteCurvature {
            eigenvalue: min_eval,
            coordinate,
        });
    }
    let inv_evals = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
    let mut inverse = &eig.eigenvectors * inv_evals * eig.eigenvectors.transpose();
    inverse = 0.5 * (&inverse + inverse.transpose());
    Ok(CurvatureReport {
        hessian,
        hessian_inverse: inverse,
        step_sizes: steps,
        condition_number: max_eval / min_eval,
    })
}

/// Curvature of the PR log marginal likelihood at a fitted PR-EM estimate.
pub fn pr_curvature(fit: &PremFit, data: &RegressionData, config: &PremConfig) -> Result<CurvatureReport> {
    let objective = PrObjective::new(data, config)?;
    let steps = default_steps(&fit.beta_hat);
    curvature(|b| objective.loglik(b), &fit.beta_hat, steps)
}

/// Standard normal quantile for a two-sided interval at `level`.
pub fn normal_multiplier(level: f64) -> Result<f64> {
    check_level(level)?;
    Ok(Normal::standard().inverse_cdf(0.5 * (1.0 + level)))
}

/// `beta_j +- z sqrt(J_jj)`.
pub fn wald_intervals(
    beta_hat: &DVector<f64>,
    hessian_inverse: &DMatrix<f64>,
    names: &[String],
    level: f64,
) -> Result<Vec<Interval>> {
    let z = normal_multiplier(level)?;
    (0..beta_hat.len())
        .map(|j| {
            let var = hessian_inverse[(j, j)];
            if !(var > 0.0 && var.is_finite()) {
                return Err(Error::NonPositiveVariance {
                    coordinate: j,
                    value: var,
                });
            }
            let half = z * var.sqrt();
            Ok(Interval {
                coefficient: names[j].clone(),
                estimate: beta_hat[j],
                lower: beta_hat[j] - half,
                upper: beta_hat[j] + half,
            })
        })
        .collect()
}

pub fn confidence_intervals(
    fit: &PremFit,
    data: &RegressionData,
    config: &PremConfig,
    level: f64,
) -> Result<Vec<Interval>> {
    check_level(level)?;
    let report = pr_curvature(fit, data, config)?;
    wald_intervals(&fit.beta_hat, &report.hessian_inverse, data.column_names(), level)
}

/// Classical least-squares t intervals.
pub fn ols_intervals(data: &RegressionData, level: f64) -> Result<Vec<Interval>> {
    check_level(level)?;
    let (n, p) = (data.n(), data.p());
    if n <= p {
        return Err(Error::domain("t intervals need n > p"));
    }
    let beta = model::ordinary_least_squares(data)?;
    let s = model::rmse(&data.residuals(&beta)?, p);
    let xtx = data.x().transpose() * data.x();
    let xtx_inv = xtx
        .cholesky()
        .ok_or_else(|| Error::RankDeficient {
            columns: data.column_names().to_vec(),
        })?
        .inverse();
    let dist = StudentsT::new(0.0, 1.0, (n - p) as f64).map_err(|e| Error::domain(e.to_string()))?;
    let t = dist.inverse_cdf(0.5 * (1.0 + level));
    Ok((0..p)
        .map(|j| {
            let half = t * s * xtx_inv[(j, j)].sqrt();
            Interval {
                coefficient: data.column_names()[j].clone(),
                estimate: beta[j],
                lower: beta[j] - half,
                upper: beta[j] + half,
            }
        })
        .collect())
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("confidence level must lie in (0, 1), got {level}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_diagonal() {
        let f = |b: &DVector<f64>| Ok(-0.5 * (2.0 * b[0] * b[0] + 3.0 * b[1] * b[1]));
        let beta = DVector::from_vec(vec![0.3, -1.2]);
        let h = -hessian_fd(f, &beta, &[1e-3, 1e-3]).unwrap();
        assert!((h[(0, 0)] - 2.0).abs() < 1e-6);
        assert!((h[(1, 1)] - 3.0).abs() < 1e-6);
        assert!(h[(0, 1)].abs() < 1e-6);
    }

    #[test]
    fn quadratic_cross_term() {
        let f = |b: &DVector<f64>| Ok(-0.5 * (b[0] * b[0] + b[1] * b[1]) - b[0] * b[1] / 2.0);
        let beta = DVector::from_vec(vec![1.0, 2.0]);
        let h = -hessian_fd(f, &beta, &[1e-3, 1e-3]).unwrap();
        assert!((h[(0, 1)] - 0.5).abs() < 1e-6);
        assert_eq!(h[(0, 1)], h[(1, 0)]);
    }

    #[test]
    fn non_finite_objective_is_reported() {
        let f = |b: &DVector<f64>| Ok(if b[0] > 0.0 { f64::NAN } else { 0.0 });
        let err = hessian_fd(f, &DVector::from_vec(vec![0.0]), &[0.1]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteObjective { .. }));
    }

    #[test]
    fn indefinite_curvature_is_an_error() {
        let f = |b: &DVector<f64>| Ok(-b[0] * b[0] + b[1] * b[1]);
        let err = curvature(f, &DVector::from_vec(vec![0.0, 0.0]), vec![1e-3, 1e-3]).unwrap_err();
        match err {
            Error::IndefiniteCurvature { eigenvalue, coordinate } => {
                assert!(eigenvalue < 0.0);
                assert_eq!(coordinate, 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn interval_arithmetic() {
        let beta = DVector::from_vec(vec![1.0]);
        let j = DMatrix::from_element(1, 1, 0.04);
        let iv = wald_intervals(&beta, &j, &["b".into()], 0.95).unwrap();
        assert!((iv[0].lower - 0.608).abs() < 1e-3);
        assert!((iv[0].upper - 1.392).abs() < 1e-3);
        assert!((normal_multiplier(0.95).unwrap() - 1.959964).abs() < 1e-6);

        let wide = wald_intervals(&beta, &j, &["b".into()], 0.99).unwrap();
        assert!(wide[0].lower < iv[0].lower && wide[0].upper > iv[0].upper);

        let doubled = wald_intervals(&beta, &(j * 2.0), &["b".into()], 0.95).unwrap();
        assert!((doubled[0].width() / iv[0].width() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn non_positive_variance_is_an_error() {
        let beta = DVector::from_vec(vec![1.0, 2.0]);
        let j = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, -0.1]));
        let err = wald_intervals(&beta, &j, &["a".into(), "b".into()], 0.95).unwrap_err();
        assert!(matches!(err, Error::NonPositiveVariance { coordinate: 1, .. }));
        assert!(normal_multiplier(1.0).is_err());
    }
}
