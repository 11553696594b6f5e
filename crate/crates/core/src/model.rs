//! Regression data and the weighted least-squares kernel shared by every
//! estimator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold on `|R_jj| / ||x_j||` below which a column is treated
/// as linearly dependent on the columns before it.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    x: DMatrix<f64>,
    y: DVector<f64>,
    column_names: Vec<String>,
    has_intercept: bool,
}

impl RegressionData {
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        column_names: Vec<String>,
        has_intercept: bool,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(Error::domain(format!(
                "design has {n} rows but the response has {} entries",
                y.len()
            )));
        }
        if p == 0 || n < p {
            return Err(Error::domain(format!("need n >= p >= 1, got n = {n}, p = {p}")));
        }
        if column_names.len() != p {
            return Err(Error::domain("one column name per design column is required"));
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "design entry ({}, {}) is not finite",
                k % n,
                k / n
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("response entry {i} is not finite")));
        }
        Ok(Self {
            x,
            y,
            column_names,
            has_intercept,
        })
    }

    /// Builds a design from predictor columns, prepending a column of ones
    /// named `(Intercept)` when `intercept` is set.
    pub fn from_columns(
        predictors: &[(String, Vec<f64>)],
        y: Vec<f64>,
        intercept: bool,
    ) -> Result<Self> {
        let n = y.len();
        let mut names = Vec::new();
        let mut cols: Vec<&[f64]> = Vec::new();
        let ones = vec![1.0; n];
        if intercept {
            names.push("(Intercept)".to_string());
            cols.push(&ones);
        }
        for (name, col) in predictors {
            if col.len() != n {
                return Err(Error::domain(format!(
                    "column {name} has {} entries, expected {n}",
                    col.len()
                )));
            }
            names.push(name.clone());
            cols.push(col);
        }
        let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        Self::new(x, DVector::from_vec(y), names, intercept)
    }

    /// Intercept-only model for a location problem.
    pub fn location(y: Vec<f64>) -> Result<Self> {
        Self::from_columns(&[], y, true)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn residuals(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_beta(beta)?;
        Ok(&self.y - &self.x * beta)
    }

    pub(crate) fn check_beta(&self, beta: &DVector<f64>) -> Result<()> {
        if beta.len() != self.p() {
            return Err(Error::domain(format!(
                "coefficient vector has length {}, design has {} columns",
                beta.len(),
                self.p()
            )));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::domain("coefficients must be finite"));
        }
        Ok(())
    }

    /// Same design with the response replaced.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        Self::new(self.x.clone(), y, self.column_names.clone(), self.has_intercept)
    }

    /// Keeps the rows listed in `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let x = self.x.select_rows(rows);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        Self::new(x, y, self.column_names.clone(), self.has_intercept)
    }
}

/// Minimizes `sum_i w_i (y_i - x_i' beta)^2` by a Householder QR of
/// `diag(sqrt(w)) X`.
pub fn weighted_least_squares(data: &RegressionData, weights: &[f64]) -> Result<DVector<f64>> {
    let n = data.n();
    if weights.len() != n {
        return Err(Error::domain(format!(
            "{} weights supplied for {n} observations",
            weights.len()
        )));
    }
    if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::domain(format!(
            "weight {i} must be finite and positive, got {}",
            weights[i]
        )));
    }
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let mut a = data.x.clone();
    for (i, s) in sqrt_w.iter().enumerate() {
        a.row_mut(i).scale_mut(*s);
    }
    let b = DVector::from_iterator(n, data.y.iter().zip(&sqrt_w).map(|(y, s)| y * s));
    solve_least_squares(a, b, &data.column_names)
}

pub fn ordinary_least_squares(data: &RegressionData) -> Result<DVector<f64>> {
    solve_least_squares(data.x.clone(), data.y.clone(), &data.column_names)
}

fn solve_least_squares(
    a: DMatrix<f64>,
    mut b: DVector<f64>,
    names: &[String],
) -> Result<DVector<f64>> {
    let p = a.ncols();
    let col_norms: Vec<f64> = (0..p).map(|j| a.column(j).norm()).collect();
    let qr = a.qr();
    let r = qr.r();
    let deficient: Vec<String> = (0..p)
        .filter(|&j| !(r[(j, j)].abs() > RANK_TOLERANCE * col_norms[j]))
        .map(|j| names[j].clone())
        .collect();
    if !deficient.is_empty() {
        return Err(Error::RankDeficient { columns: deficient });
    }
    qr.q_tr_mul(&mut b);
    let rhs = b.rows(0, p).into_owned();
    r.solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::RankDeficient {
            columns: names.to_vec(),
        })
}

/// Residual root-mean-square error with denominator `n - p` (falls back to
/// `n` when `n == p`).
pub fn rmse(residuals: &DVector<f64>, p: usize) -> f64 {
    let n = residuals.len();
    let dof = if n > p { n - p } else { n };
    (residuals.norm_squared() / dof as f64).sqrt()
}
