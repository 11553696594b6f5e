//! Comparator estimators: least squares, Huber M-estimation, Student-t
//! maximum likelihood, least absolute deviations, and the fixed-grid NPMLE
//! profile likelihood.

use std::fmt;

use nalgebra::DVector;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grid::ScaleGrid;
use crate::model::{self, RegressionData};
use crate::prem::median;

pub const HUBER_TUNING: f64 = 1.345;
pub const STUDENT_T_DF: f64 = 4.0;
pub const L1_SMOOTHING: f64 = 1e-6;
pub const NPMLE_EM_ITERS: usize = 500;

const IRLS_MAX_ITERS: usize = 50;
const IRLS_TOL: f64 = 1e-8;
const L1_MAX_ITERS: usize = 200;
const MAD_CONSISTENCY: f64 = 0.6745;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Method {
    #[serde(rename = "LS")]
    Ls,
    #[serde(rename = "RLS")]
    Rls,
    #[serde(rename = "ML")]
    MlT4,
    #[serde(rename = "L1")]
    L1,
    #[serde(rename = "NPMLE_PROFILE")]
    NpmleProfile,
    #[serde(rename = "PREM")]
    Prem,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Ls => "LS",
            Method::Rls => "RLS",
            Method::MlT4 => "ML",
            Method::L1 => "L1",
            Method::NpmleProfile => "NPMLE_PROFILE",
            Method::Prem => "PREM",
        }
    }

    /// Accepts table tags (`LS`, `ML`, ...) and CLI names (`ls`, `ml_t4`, ...).
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ls" | "ols" => Some(Method::Ls),
            "rls" | "huber" => Some(Method::Rls),
            "ml" | "ml_t4" | "t4" => Some(Method::MlT4),
            "l1" | "lad" => Some(Method::L1),
            "prem" => Some(Method::Prem),
            "npmle_profile" => Some(Method::NpmleProfile),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineFit {
    pub method: Method,
    pub beta_hat: DVector<f64>,
    pub scale_hat: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective per iterate: t log-likelihood for ML, L1 loss for L1;
    /// empty for the others.
    pub objective_path: Vec<f64>,
}

pub fn ols_fit(data: &RegressionData) -> Result<BaselineFit> {
    let beta = model::ordinary_least_squares(data)?;
    let scale = model::rmse(&data.residuals(&beta)?, data.p());
    Ok(BaselineFit {
        method: Method::Ls,
        beta_hat: beta,
        scale_hat: Some(scale),
        iterations: 1,
        converged: true,
        objective_path: Vec::new(),
    })
}

/// Huber M-estimation by IRLS. The scale is re-estimated every iteration as
/// `median(|r|) / 0.6745`.
pub fn huber_irls(data: &RegressionData, tuning_c: f64) -> Result<BaselineFit> {
    if !(tuning_c > 0.0) {
        return Err(Error::domain("Huber tuning constant must be positive"));
    }
    let mut beta = model::ordinary_least_squares(data)?;
    let mut scale = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < IRLS_MAX_ITERS {
        let r = data.residuals(&beta)?;
        let abs_r: Vec<f64> = r.iter().map(|v| v.abs()).collect();
        let s = median(&abs_r) / MAD_CONSISTENCY;
        if !(s > 0.0) {
            converged = true;
            break;
        }
        scale = Some(s);
        let w: Vec<f64> = abs_r
            .iter()
            .map(|a| if *a <= tuning_c * s { 1.0 } else { tuning_c * s / a })
            .collect();
        let next = model::weighted_least_squares(data, &w)?;
        let change = (&next - &beta).amax();
        beta = next;
        iterations += 1;
        if change < IRLS_TOL {
            converged = true;
            break;
        }
    }
    Ok(BaselineFit {
        method: Method::Rls,
        beta_hat: beta,
        scale_hat: scale,
        iterations,
        converged,
        objective_path: Vec::new(),
    })
}

/// EM weight of a residual under a Student-t error model.
pub fn student_t_weight(r: f64, sigma_sq: f64, df: f64) -> f64 {
    (df + 1.0) / (df + r * r / sigma_sq)
}

/// Sum of Student-t log densities of the residuals at scale `sigma`.
pub fn student_t_loglik(residuals: &[f64], sigma: f64, df: f64) -> f64 {
    let c = ln_gamma(0.5 * (df + 1.0))
        - ln_gamma(0.5 * df)
        - 0.5 * (df * std::f64::consts::PI).ln()
        - sigma.ln();
    residuals
        .iter()
        .map(|r| c - 0.5 * (df + 1.0) * (1.0 + (r / sigma).powi(2) / df).ln())
        .sum()
}

/// Student-t maximum likelihood with fixed degrees of freedom, by EM.
pub fn student_t_ml(data: &RegressionData, df: f64) -> Result<BaselineFit> {
    if !(df > 0.0) {
        return Err(Error::domain("degrees of freedom must be positive"));
    }
    let n = data.n() as f64;
    let mut beta = model::ordinary_least_squares(data)?;
    let mut r = data.residuals(&beta)?;
    let mut sigma_sq = r.norm_squared() / n;
    let mut path = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    if !(sigma_sq > 0.0) {
        return Ok(BaselineFit {
            method: Method::MlT4,
            beta_hat: beta,
            scale_hat: None,
            iterations,
            converged: true,
            objective_path: path,
        });
    }
    path.push(student_t_loglik(r.as_slice(), sigma_sq.sqrt(), df));
    while iterations < IRLS_MAX_ITERS {
        let w: Vec<f64> = r.iter().map(|ri| student_t_weight(*ri, sigma_sq, df)).collect();
        let next = model::weighted_least_squares(data, &w)?;
        r = data.residuals(&next)?;
        let next_sigma_sq = r.iter().zip(&w).map(|(ri, wi)| wi * ri * ri).sum::<f64>() / n;
        let change = (&next - &beta).amax();
        beta = next;
        iterations += 1;
        if !(next_sigma_sq > 0.0) {
            converged = true;
            break;
        }
        sigma_sq = next_sigma_sq;
        path.push(student_t_loglik(r.as_slice(), sigma_sq.sqrt(), df));
        if change < IRLS_TOL {
            converged = true;
            break;
        }
    }
    Ok(BaselineFit {
        method: Method::MlT4,
        beta_hat: beta,
        scale_hat: (sigma_sq > 0.0).then(|| sigma_sq.sqrt()),
        iterations,
        converged,
        objective_path: path,
    })
}

pub fn l1_loss(data: &RegressionData, beta: &DVector<f64>) -> Result<f64> {
    Ok(data.residuals(beta)?.iter().map(|r| r.abs()).sum())
}

/// Least absolute deviations by IRLS on `sum sqrt(r^2 + eps^2)`. Returns the
/// iterate with the smallest true L1 loss.
pub fn l1_fit(data: &RegressionData, smoothing_eps: f64) -> Result<BaselineFit> {
    if !(smoothing_eps > 0.0) {
        return Err(Error::domain("smoothing epsilon must be positive"));
    }
    let eps_sq = smoothing_eps * smoothing_eps;
    let mut beta = model::ordinary_least_squares(data)?;
    let mut best = (l1_loss(data, &beta)?, beta.clone());
    let mut path = vec![best.0];
    let mut converged = false;
    let mut iterations = 0;
    let mut prev_smoothed = f64::INFINITY;
    while iterations < L1_MAX_ITERS {
        let r = data.residuals(&beta)?;
        let smoothed: f64 = r.iter().map(|v| (v * v + eps_sq).sqrt()).sum();
        let w: Vec<f64> = r.iter().map(|v| 1.0 / (v * v + eps_sq).sqrt()).collect();
        let next = model::weighted_least_squares(data, &w)?;
        let change = (&next - &beta).amax();
        let scale = 1.0 + beta.amax();
        beta = next;
        iterations += 1;
        let loss = l1_loss(data, &beta)?;
        path.push(loss);
        if loss < best.0 {
            best = (loss, beta.clone());
        }
        let rel = (prev_smoothed - smoothed).abs() / smoothed.max(f64::MIN_POSITIVE);
        prev_smoothed = smoothed;
        if change < 1e-10 * scale || rel < 1e-14 {
            converged = true;
            break;
        }
    }
    Ok(BaselineFit {
        method: Method::L1,
        beta_hat: best.1,
        scale_hat: None,
        iterations,
        converged,
        objective_path: path,
    })
}

/// Fixed-support mixture EM result.
#[derive(Debug, Clone, PartialEq)]
pub struct NpmleFit {
    /// Probability masses on the support points.
    pub masses: Vec<f64>,
    pub loglik: f64,
    /// Log-likelihood before the first and after every EM iteration; `loglik`
    /// may exceed its last entry when a single support point scores higher.
    pub trace: Vec<f64>,
}

/// Maximum likelihood masses of a discrete scale mixture on fixed support
/// points, by EM from uniform masses. Stops after `max_iters` iterations or
/// when the relative log-likelihood change falls below `1e-10`. The result
/// is never worse than the best single support point.
pub fn npmle_fixed_support(residuals: &[f64], support: &[f64], max_iters: usize) -> Result<NpmleFit> {
    if support.is_empty() || support.iter().any(|u| !(u.is_finite() && *u > 0.0)) {
        return Err(Error::domain("support points must be positive and finite"));
    }
    if let Some(i) = residuals.iter().position(|r| !r.is_finite()) {
        return Err(Error::domain(format!("residual {i} is not finite")));
    }
    let n = residuals.len();
    let m_len = support.len();
    let ln_norm: Vec<f64> = support
        .iter()
        .map(|u| -0.5 * (2.0 * std::f64::consts::PI).ln() - u.ln())
        .collect();
    let half_inv_sq: Vec<f64> = support.iter().map(|u| 0.5 / (u * u)).collect();

    // Row-scaled kernel matrix: kern[i*M + m] = K(r_i, u_m) / exp(shift_i).
    let mut kern = vec![0.0; n * m_len];
    let mut shift = vec![0.0; n];
    for (i, r) in residuals.iter().enumerate() {
        let r_sq = r * r;
        let row = &mut kern[i * m_len..(i + 1) * m_len];
        let mut best = f64::NEG_INFINITY;
        for m in 0..m_len {
            row[m] = ln_norm[m] - r_sq * half_inv_sq[m];
            best = best.max(row[m]);
        }
        for v in row.iter_mut() {
            *v = (*v - best).exp();
        }
        shift[i] = best;
    }
    let shift_total: f64 = shift.iter().sum();

    let mut masses = vec![1.0 / m_len as f64; m_len];
    let mut mix = vec![0.0; n];
    let loglik_of = |masses: &[f64], mix: &mut [f64]| -> f64 {
        let mut total = shift_total;
        for i in 0..n {
            let row = &kern[i * m_len..(i + 1) * m_len];
            let f = dot(row, masses);
            mix[i] = f;
            total += f.ln();
        }
        total
    };
    let mut loglik = loglik_of(&masses, &mut mix);
    let mut trace = vec![loglik];
    let mut acc = vec![0.0; m_len];
    for _ in 0..max_iters {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for i in 0..n {
            let row = &kern[i * m_len..(i + 1) * m_len];
            let inv = 1.0 / mix[i];
            for m in 0..m_len {
                acc[m] += row[m] * inv;
            }
        }
        for m in 0..m_len {
            masses[m] *= acc[m] / n as f64;
        }
        let total: f64 = masses.iter().sum();
        masses.iter_mut().for_each(|p| *p /= total);
        let next = loglik_of(&masses, &mut mix);
        trace.push(next);
        let rel = (next - loglik).abs() / next.abs().max(1e-300);
        loglik = next;
        if rel < 1e-10 {
            break;
        }
    }
    // Slow EM can end below a point mass; every point mass is feasible, so
    // keep whichever measure scores higher.
    let (best_m, best_single) = (0..m_len)
        .map(|m| {
            let ll: f64 = residuals
                .iter()
                .map(|r| ln_norm[m] - r * r * half_inv_sq[m])
                .sum();
            (m, ll)
        })
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    if best_single > loglik {
        masses.iter_mut().for_each(|p| *p = 0.0);
        masses[best_m] = 1.0;
        loglik = best_single;
    }
    Ok(NpmleFit {
        masses,
        loglik,
        trace,
    })
}

/// Four-lane dot product; the split accumulators let the loop vectorize.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; 4];
    let (a4, b4) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = a4.remainder().iter().zip(b4.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in a4.zip(b4) {
        for l in 0..4 {
            lanes[l] += x[l] * y[l];
        }
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// Profile log-likelihood at `beta` with the mixing distribution replaced by
/// its fixed-grid maximum likelihood estimate.
pub fn npmle_profile_loglik(
    beta: &DVector<f64>,
    data: &RegressionData,
    grid: &ScaleGrid,
    em_iters: usize,
) -> Result<f64> {
    let r = data.residuals(beta)?;
    Ok(npmle_fixed_support(r.as_slice(), grid.points(), em_iters)?.loglik)
}

/// Dispatches a comparator by tag; PREM and the profile are not fits here.
pub fn fit_baseline(method: Method, data: &RegressionData) -> Result<BaselineFit> {
    match method {
        Method::Ls => ols_fit(data),
        Method::Rls => huber_irls(data, HUBER_TUNING),
        Method::MlT4 => student_t_ml(data, STUDENT_T_DF),
        Method::L1 => l1_fit(data, L1_SMOOTHING),
        Method::Prem | Method::NpmleProfile => Err(Error::domain(format!(
            "{method} is not a baseline coefficient estimator"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn line_data(noise: &[f64]) -> RegressionData {
        let n = noise.len();
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 / n as f64 });
        let y = DVector::from_fn(n, |i, _| 1.0 + 2.0 * i as f64 / n as f64 + noise[i]);
        RegressionData::new(x, y, vec!["c".into(), "x".into()], true).unwrap()
    }

    #[test]
    fn ols_intercept_only_is_mean() {
        let d = RegressionData::location(vec![1.0, 2.0, 6.0]).unwrap();
        let fit = ols_fit(&d).unwrap();
        assert!((fit.beta_hat[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn huber_downweights_gross_outlier() {
        let d = RegressionData::location(vec![0.0, 0.0, 0.0, 0.0, 100.0]).unwrap();
        let fit = huber_irls(&d, HUBER_TUNING).unwrap();
        assert!(fit.beta_hat[0].abs() < 0.5, "{}", fit.beta_hat[0]);
        assert!(fit.converged);
    }

    #[test]
    fn huber_without_large_residuals_is_ols() {
        let noise = [0.1, -0.1, 0.12, -0.08, 0.09, -0.11, 0.1, -0.1, 0.11, -0.12];
        let d = line_data(&noise);
        let h = huber_irls(&d, HUBER_TUNING).unwrap();
        let o = ols_fit(&d).unwrap();
        assert!((&h.beta_hat - &o.beta_hat).amax() < 1e-6);
    }

    #[test]
    fn t_weight_at_zero() {
        assert_eq!(student_t_weight(0.0, 2.0, 4.0), 1.25);
    }

    #[test]
    fn t_loglik_matches_statrs_density() {
        use statrs::distribution::{Continuous, StudentsT};
        let t = StudentsT::new(0.0, 2.0, 4.0).unwrap();
        let r = [0.3, -1.5, 4.0];
        let expected: f64 = r.iter().map(|v| t.ln_pdf(*v)).sum();
        assert!((student_t_loglik(&r, 2.0, 4.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn t_ml_path_is_monotone() {
        let noise = [0.3, -0.2, 5.0, 0.1, -0.4, 0.2, -7.0, 0.05, 0.3, -0.1, 0.2, 0.4];
        let fit = student_t_ml(&line_data(&noise), STUDENT_T_DF).unwrap();
        for w in fit.objective_path.windows(2) {
            assert!(w[1] >= w[0] - 1e-10 * w[0].abs());
        }
    }

    #[test]
    fn l1_location_is_median() {
        let d = RegressionData::location(vec![0.0, 0.0, 0.0, 0.0, 100.0]).unwrap();
        let fit = l1_fit(&d, L1_SMOOTHING).unwrap();
        assert!(fit.beta_hat[0].abs() < 1e-5, "{}", fit.beta_hat[0]);
        let d = RegressionData::location(vec![3.0, -1.0, 7.5, 2.0, 10.0, 0.5, 4.0]).unwrap();
        let fit = l1_fit(&d, L1_SMOOTHING).unwrap();
        assert!((fit.beta_hat[0] - 3.0).abs() < 1e-5, "{}", fit.beta_hat[0]);
    }

    #[test]
    fn npmle_single_support_point() {
        let r = [0.5, -1.0, 2.0];
        let fit = npmle_fixed_support(&r, &[1.5], 10).unwrap();
        assert_eq!(fit.masses, vec![1.0]);
        let expected: f64 = r
            .iter()
            .map(|v| crate::grid::normal_kernel(*v, 1.5).unwrap().ln())
            .sum();
        assert!((fit.loglik - expected).abs() < 1e-12);
    }

    #[test]
    fn npmle_em_is_monotone_and_dominates_components() {
        let r: Vec<f64> = (0..40).map(|i| ((i * 7919) % 97) as f64 / 10.0 - 4.85).collect();
        let support: Vec<f64> = (1..=30).map(|k| 0.2 * k as f64).collect();
        let fit = npmle_fixed_support(&r, &support, 500).unwrap();
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
        }
        let best_single = support
            .iter()
            .map(|u| r.iter().map(|v| crate::grid::normal_kernel(*v, *u).unwrap().ln()).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(fit.loglik >= best_single - 1e-9, "{} vs {best_single}", fit.loglik);
    }

    #[test]
    fn method_tags_round_trip() {
        for m in [Method::Ls, Method::Rls, Method::MlT4, Method::L1, Method::Prem] {
            assert_eq!(Method::parse(m.tag()), Some(m));
        }
        assert_eq!(Method::parse("ml_t4"), Some(Method::MlT4));
        assert_eq!(Method::parse("bogus"), None);
    }
}
