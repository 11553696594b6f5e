//! Simulation studies comparing estimators under heavy-tailed errors.
//!
//! Each replication draws its design and its errors from independent
//! streams keyed by `(seed, replication)`, so every method sees the same
//! data and results do not depend on method order or thread count.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::baselines::{self, Method};
use crate::error::{Error, Result};
use crate::model::RegressionData;
use crate::prem::{self, PremConfig};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ErrorDistribution {
    Normal,
    Laplace,
    T1,
    T2,
    /// Normal scale mixture with `u ~ Exponential(1)`.
    NExp,
    /// Normal scale mixture with `u ~ Uniform(0, 7)`.
    NUnif,
}

impl ErrorDistribution {
    pub const ALL: [ErrorDistribution; 6] = [
        ErrorDistribution::Normal,
        ErrorDistribution::Laplace,
        ErrorDistribution::T1,
        ErrorDistribution::T2,
        ErrorDistribution::NExp,
        ErrorDistribution::NUnif,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            ErrorDistribution::Normal => "N",
            ErrorDistribution::Laplace => "Laplace",
            ErrorDistribution::T1 => "t1",
            ErrorDistribution::T2 => "t2",
            ErrorDistribution::NExp => "N-Exp",
            ErrorDistribution::NUnif => "N-Unif",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match key.as_str() {
            "n" | "normal" => Some(ErrorDistribution::Normal),
            "laplace" => Some(ErrorDistribution::Laplace),
            "t1" | "cauchy" => Some(ErrorDistribution::T1),
            "t2" => Some(ErrorDistribution::T2),
            "nexp" => Some(ErrorDistribution::NExp),
            "nunif" => Some(ErrorDistribution::NUnif),
            _ => None,
        }
    }

    /// One draw.
    ///
    /// * Laplace: a random sign times an Exponential(1) variate.
    /// * t1: ratio of two independent standard normals.
    /// * t2: `Z / sqrt(E)` with `E ~ Exponential(1)`, since `chi2_2 / 2 ~ Exponential(1)`.
    /// * N-Exp, N-Unif: draw the scale `u`, then `u Z`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        match self {
            ErrorDistribution::Normal => z,
            ErrorDistribution::Laplace => {
                let e: f64 = rng.sample(Exp1);
                if rng.random::<bool>() {
                    e
                } else {
                    -e
                }
            }
            ErrorDistribution::T1 => {
                let denom: f64 = rng.sample(StandardNormal);
                z / denom
            }
            ErrorDistribution::T2 => {
                let e: f64 = rng.sample(Exp1);
                z / e.sqrt()
            }
            ErrorDistribution::NExp => {
                let u: f64 = rng.sample(Exp1);
                u * z
            }
            ErrorDistribution::NUnif => {
                let u = 7.0 * rng.random::<f64>();
                u * z
            }
        }
    }
}

impl fmt::Display for ErrorDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

pub fn sample_errors<R: Rng + ?Sized>(dist: ErrorDistribution, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| dist.sample(rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Design {
    IidNormal,
    /// Rows drawn from a mean-zero normal with `cov_jk = rho^|j-k|`.
    Ar1(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub error: ErrorDistribution,
    pub n: usize,
    /// Number of coefficients including the intercept.
    pub p: usize,
    pub design: Design,
    pub beta_true: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
}

pub const TABLE_METHODS: [Method; 5] = [Method::Ls, Method::Rls, Method::MlT4, Method::L1, Method::Prem];

impl ScenarioSpec {
    /// Two independent standard-normal predictors plus intercept, all coefficients 1.
    pub fn low_dimensional(error: ErrorDistribution, seed: u64) -> Self {
        Self {
            error,
            n: 100,
            p: 3,
            design: Design::IidNormal,
            beta_true: vec![1.0; 3],
            replications: 100,
            seed,
            methods: TABLE_METHODS.to_vec(),
        }
    }

    /// Nine AR(1)-correlated predictors (rho = 0.5) plus intercept.
    pub fn higher_dimensional(error: ErrorDistribution, seed: u64) -> Self {
        Self {
            error,
            n: 100,
            p: 10,
            design: Design::Ar1(0.5),
            beta_true: vec![1.0; 10],
            replications: 100,
            seed,
            methods: TABLE_METHODS.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.replications == 0 {
            problems.push("replications must be at least 1".to_string());
        }
        if self.p == 0 {
            problems.push("p must be at least 1".to_string());
        }
        if self.n < self.p {
            problems.push(format!("n = {} is smaller than p = {}", self.n, self.p));
        }
        if self.beta_true.len() != self.p {
            problems.push(format!(
                "beta has {} entries but p = {}",
                self.beta_true.len(),
                self.p
            ));
        }
        if let Design::Ar1(rho) = self.design {
            if !(rho > -1.0 && rho < 1.0) {
                problems.push(format!("AR1 correlation must lie in (-1, 1), got {rho}"));
            }
        }
        if self.methods.is_empty() {
            problems.push("at least one method is required".to_string());
        }
        if self.methods.contains(&Method::NpmleProfile) {
            problems.push("NPMLE_PROFILE is not a coefficient estimator".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Scenario { problems })
        }
    }
}

/// Intercept column plus `p - 1` random predictor columns.
pub fn make_design<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> DMatrix<f64> {
    let (n, p) = (spec.n, spec.p);
    let mut x = DMatrix::from_element(n, p, 1.0);
    for i in 0..n {
        let mut prev = 0.0;
        for j in 1..p {
            let z: f64 = rng.sample(StandardNormal);
            let v = match spec.design {
                Design::IidNormal => z,
                Design::Ar1(_) if j == 1 => z,
                Design::Ar1(rho) => rho * prev + (1.0 - rho * rho).sqrt() * z,
            };
            x[(i, j)] = v;
            prev = v;
        }
    }
    x
}

pub fn design_names(p: usize) -> Vec<String> {
    std::iter::once("(Intercept)".to_string())
        .chain((1..p).map(|j| format!("x{j}")))
        .collect()
}

/// The dataset of replication `rep`.
pub fn replicate(spec: &ScenarioSpec, rep: usize) -> Result<RegressionData> {
    let mut design_rng = rng::stream(spec.seed, Purpose::Design, rep as u64);
    let mut error_rng = rng::stream(spec.seed, Purpose::Errors, rep as u64);
    let x = make_design(spec, &mut design_rng);
    let eps = sample_errors(spec.error, spec.n, &mut error_rng);
    let beta = DVector::from_column_slice(&spec.beta_true);
    let y = &x * beta + DVector::from_vec(eps);
    RegressionData::new(x, y, design_names(spec.p), true)
}

/// Seed for the PR permutations of replication `rep`.
pub fn replication_seed(seed: u64, rep: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (rep as u64)
}

/// Coefficient estimate of `method` on `data`.
pub fn estimate(method: Method, data: &RegressionData, prem_seed: u64) -> Result<DVector<f64>> {
    match method {
        Method::Prem => {
            let cfg = PremConfig::default().with_seed(prem_seed);
            Ok(prem::prem_fit(data, &cfg)?.beta_hat)
        }
        other => Ok(baselines::fit_baseline(other, data)?.beta_hat),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub error: ErrorDistribution,
    pub method: Method,
    /// Mean of `||beta_hat - beta||^2 / p` over successful replications.
    pub mse: f64,
    pub replications: usize,
    pub failures: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MseTable {
    pub rows: Vec<MseRow>,
}

impl MseTable {
    pub fn get(&self, error: ErrorDistribution, method: Method) -> Option<&MseRow> {
        self.rows.iter().find(|r| r.error == error && r.method == method)
    }

    pub fn mse(&self, error: ErrorDistribution, method: Method) -> Option<f64> {
        self.get(error, method).map(|r| r.mse)
    }

    pub fn extend(&mut self, other: MseTable) {
        self.rows.extend(other.rows);
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "error,method,mse,replications,failures,seed")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.error,
                r.method,
                crate::io::fmt_f64(r.mse),
                r.replications,
                r.failures,
                r.seed
            )?;
        }
        Ok(())
    }

    /// Distributions as rows, methods as columns.
    pub fn render(&self) -> String {
        let mut methods: Vec<Method> = Vec::new();
        let mut errors: Vec<ErrorDistribution> = Vec::new();
        let mut cells: BTreeMap<(ErrorDistribution, Method), &MseRow> = BTreeMap::new();
        for r in &self.rows {
            if !methods.contains(&r.method) {
                methods.push(r.method);
            }
            if !errors.contains(&r.error) {
                errors.push(r.error);
            }
            cells.insert((r.error, r.method), r);
        }
        let mut s = format!("{:<8}", "f");
        for m in &methods {
            s.push_str(&format!("{:>12}", m.tag()));
        }
        s.push('\n');
        for e in &errors {
            s.push_str(&format!("{:<8}", e.tag()));
            for m in &methods {
                let cell = match cells.get(&(*e, *m)) {
                    Some(r) if r.failures > 0 => format!("{:.4}*{}", r.mse, r.failures),
                    Some(r) => format!("{:.4}", r.mse),
                    None => "-".to_string(),
                };
                s.push_str(&format!("{:>12}", cell));
            }
            s.push('\n');
        }
        s
    }
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<MseTable> {
    spec.validate()?;
    let per_rep: Vec<Vec<Option<f64>>> = (0..spec.replications)
        .into_par_iter()
        .map(|rep| -> Result<Vec<Option<f64>>> {
            let data = replicate(spec, rep)?;
            let seed = replication_seed(spec.seed, rep);
            Ok(spec
                .methods
                .iter()
                .map(|m| {
                    estimate(*m, &data, seed).ok().and_then(|b| {
                        let err = b
                            .iter()
                            .zip(&spec.beta_true)
                            .map(|(e, t)| (e - t).powi(2))
                            .sum::<f64>()
                            / spec.p as f64;
                        err.is_finite().then_some(err)
                    })
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let rows = spec
        .methods
        .iter()
        .enumerate()
        .map(|(k, method)| {
            let ok: Vec<f64> = per_rep.iter().filter_map(|r| r[k]).collect();
            let failures = spec.replications - ok.len();
            let mse = if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().sum::<f64>() / ok.len() as f64
            };
            MseRow {
                error: spec.error,
                method: *method,
                mse,
                replications: spec.replications,
                failures,
                seed: spec.seed,
            }
        })
        .collect();
    Ok(MseTable { rows })
}

/// Parsed scenario file: one spec per listed error distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPlan {
    pub specs: Vec<ScenarioSpec>,
}

impl ScenarioPlan {
    /// Parses `key = value` lines. Keys: `error` (comma list or `all`), `n`,
    /// `p`, `design` (`iid_normal` or `ar1`), `rho`, `beta` (comma list or
    /// `ones`), `replications`, `seed`, `methods` (comma list). `#` starts a
    /// comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut problems = Vec::new();
        let mut values: BTreeMap<String, (usize, String)> = BTreeMap::new();
        const KEYS: [&str; 9] = [
            "error",
            "n",
            "p",
            "design",
            "rho",
            "beta",
            "replications",
            "seed",
            "methods",
        ];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                problems.push(format!("line {}: expected `key = value`: {raw}", lineno + 1));
                continue;
            };
            let key = k.trim().to_ascii_lowercase();
            if !KEYS.contains(&key.as_str()) {
                problems.push(format!("line {}: unknown key `{}`", lineno + 1, k.trim()));
                continue;
            }
            if values.insert(key.clone(), (lineno + 1, v.trim().to_string())).is_some() {
                problems.push(format!("line {}: duplicate key `{key}`", lineno + 1));
            }
        }

        fn num<T: std::str::FromStr>(
            values: &BTreeMap<String, (usize, String)>,
            key: &str,
            default: T,
            problems: &mut Vec<String>,
        ) -> T {
            match values.get(key) {
                None => default,
                Some((line, v)) => v.parse().unwrap_or_else(|_| {
                    problems.push(format!("line {line}: `{key}` has invalid value `{v}`"));
                    default
                }),
            }
        }

        let errors: Vec<ErrorDistribution> = match values.get("error") {
            None => {
                problems.push("missing required key `error`".to_string());
                Vec::new()
            }
            Some((_, v)) if v.eq_ignore_ascii_case("all") => ErrorDistribution::ALL.to_vec(),
            Some((line, v)) => v
                .split(',')
                .filter_map(|t| {
                    let d = ErrorDistribution::parse(t);
                    if d.is_none() {
                        problems.push(format!("line {line}: unknown error distribution `{}`", t.trim()));
                    }
                    d
                })
                .collect(),
        };
        let n: usize = num(&values, "n", 100, &mut problems);
        let p: usize = num(&values, "p", 3, &mut problems);
        let replications: usize = num(&values, "replications", 100, &mut problems);
        let seed: u64 = num(&values, "seed", 0, &mut problems);
        let rho: Option<f64> = values.get("rho").map(|(line, v)| {
            v.parse().unwrap_or_else(|_| {
                problems.push(format!("line {line}: `rho` has invalid value `{v}`"));
                f64::NAN
            })
        });
        let design = match values.get("design").map(|(l, v)| (l, v.to_ascii_lowercase())) {
            None => Design::IidNormal,
            Some((_, v)) if v == "iid_normal" || v == "iid" => Design::IidNormal,
            Some((line, v)) if v == "ar1" => match rho {
                Some(r) => Design::Ar1(r),
                None => {
                    problems.push(format!("line {line}: design `ar1` requires `rho`"));
                    Design::IidNormal
                }
            },
            Some((line, v)) => {
                problems.push(format!("line {line}: unknown design `{v}`"));
                Design::IidNormal
            }
        };
        let beta_true = match values.get("beta") {
            None => vec![1.0; p],
            Some((_, v)) if v.eq_ignore_ascii_case("ones") => vec![1.0; p],
            Some((line, v)) => v
                .split(',')
                .map(|t| {
                    t.trim().parse().unwrap_or_else(|_| {
                        problems.push(format!("line {line}: invalid coefficient `{}`", t.trim()));
                        f64::NAN
                    })
                })
                .collect(),
        };
        let methods = match values.get("methods") {
            None => TABLE_METHODS.to_vec(),
            Some((line, v)) => v
                .split(',')
                .filter_map(|t| {
                    let m = Method::parse(t);
                    if m.is_none() {
                        problems.push(format!("line {line}: unknown method `{}`", t.trim()));
                    }
                    m
                })
                .collect(),
        };
        if !problems.is_empty() {
            return Err(Error::Scenario { problems });
        }
        let specs: Vec<ScenarioSpec> = errors
            .into_iter()
            .map(|error| ScenarioSpec {
                error,
                n,
                p,
                design,
                beta_true: beta_true.clone(),
                replications,
                seed,
                methods: methods.clone(),
            })
            .collect();
        for s in &specs {
            s.validate()?;
        }
        Ok(Self { specs })
    }

    pub fn run(&self) -> Result<MseTable> {
        let mut table = MseTable::default();
        for spec in &self.specs {
            table.extend(run_scenario(spec)?);
        }
        Ok(table)
    }
}
