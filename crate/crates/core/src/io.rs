//! Dataset ingestion, bundled case-study data, and plot-ready CSV emitters.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::grid::MixingDensity;
use crate::model::RegressionData;

const PHONES_CSV: &str = include_str!("../data/phones.csv");
const HBK_CSV: &str = include_str!("../data/hbk.csv");

pub const BUNDLED: [&str; 2] = ["phones", "hbk"];

/// Formats with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    /// 0-based row index.
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub source: String,
    pub data: RegressionData,
    pub response: String,
    pub outlier_annotations: Vec<Annotation>,
}

impl Dataset {
    pub fn rows_with_reason(&self, reason: &str) -> Vec<usize> {
        self.outlier_annotations
            .iter()
            .filter(|a| a.reason == reason)
            .map(|a| a.row)
            .collect()
    }

    pub fn annotated_rows(&self) -> Vec<usize> {
        self.outlier_annotations.iter().map(|a| a.row).collect()
    }

    /// Writes predictors (without the intercept column) and the response.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let data = &self.data;
        let skip = usize::from(data.has_intercept());
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = data.column_names()[skip..].iter().map(|s| s.as_str()).collect();
        header.push(&self.response);
        w.write_record(&header)?;
        for i in 0..data.n() {
            let mut rec: Vec<String> = (skip..data.p()).map(|j| fmt_f64(data.x()[(i, j)])).collect();
            rec.push(fmt_f64(data.y()[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn load_csv(
    path: &Path,
    response: &str,
    predictors: &[String],
    intercept: bool,
) -> Result<Dataset> {
    let file = File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".to_string());
    parse_csv(file, &name, &path.display().to_string(), response, predictors, intercept)
}

/// Parses a header-first CSV. An empty `predictors` list selects every
/// column other than the response.
pub fn parse_csv<R: Read>(
    reader: R,
    name: &str,
    source: &str,
    response: &str,
    predictors: &[String],
    intercept: bool,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(Error::data(format!("duplicate column `{h}` in header")));
        }
    }
    let find = |col: &str| {
        header
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| Error::data(format!("column `{col}` not found; available: {}", header.join(", "))))
    };
    let y_idx = find(response)?;
    let pred_names: Vec<String> = if predictors.is_empty() {
        header.iter().filter(|h| *h != response).cloned().collect()
    } else {
        predictors.to_vec()
    };
    let pred_idx: Vec<usize> = pred_names.iter().map(|c| find(c)).collect::<Result<_>>()?;

    let mut y = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); pred_idx.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = |idx: usize| -> Result<f64> {
            let raw = rec.get(idx).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::data(format!(
                        "row {}, column `{}`: `{raw}` is not a finite number",
                        row + 1,
                        header[idx]
                    ))
                })
        };
        y.push(cell(y_idx)?);
        for (col, &idx) in cols.iter_mut().zip(&pred_idx) {
            col.push(cell(idx)?);
        }
    }
    let predictors: Vec<(String, Vec<f64>)> = pred_names.into_iter().zip(cols).collect();
    let data = RegressionData::from_columns(&predictors, y, intercept)?;
    Ok(Dataset {
        name: name.to_string(),
        source: source.to_string(),
        data,
        response: response.to_string(),
        outlier_annotations: Vec::new(),
    })
}

pub fn bundled_dataset(name: &str) -> Result<Dataset> {
    let annotate = |rows: std::ops::Range<usize>, reason: &str| {
        rows.map(|row| Annotation {
            row,
            reason: reason.to_string(),
        })
        .collect::<Vec<_>>()
    };
    match name {
        "phones" => {
            let mut ds = parse_csv(
                PHONES_CSV.as_bytes(),
                "phones",
                "Belgian international phone calls 1950-1973 (R MASS `phones`)",
                "calls",
                &["year".to_string()],
                true,
            )?;
            ds.outlier_annotations = annotate(14..20, "vertical outlier");
            Ok(ds)
        }
        "hbk" => {
            let mut ds = parse_csv(
                HBK_CSV.as_bytes(),
                "hbk",
                "Hawkins, Bradu & Kass (1984) artificial data",
                "Y",
                &[],
                true,
            )?;
            let mut ann = annotate(0..10, "regression outlier");
            ann.extend(annotate(10..14, "leverage point"));
            ds.outlier_annotations = ann;
            Ok(ds)
        }
        other => Err(Error::data(format!(
            "unknown dataset `{other}`; available: {}",
            BUNDLED.join(", ")
        ))),
    }
}

/// Normal quantile plot data with a simulated min/max envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeBands {
    pub theoretical: Vec<f64>,
    pub observed: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub n_simulations: usize,
}

impl EnvelopeBands {
    /// Number of observed order statistics outside the envelope.
    pub fn exceedances(&self) -> usize {
        self.observed
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .filter(|(o, (l, u))| *o < *l || *o > *u)
            .count()
    }
}

fn standardized_sorted(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let scale = if sd > 0.0 { sd } else { 1.0 };
    let mut out: Vec<f64> = values.iter().map(|v| (v - mean) / scale).collect();
    out.sort_by(|a, b| a.total_cmp(b));
    out
}

/// Standardizes and sorts the residuals; each simulated set of `n` standard
/// normals is standardized and sorted the same way, and the envelope is the
/// pointwise min/max across simulations. Theoretical quantiles sit at
/// `(i - 0.5) / n`.
pub fn qq_envelope<R: Rng + ?Sized>(
    residuals: &[f64],
    n_simulations: usize,
    rng: &mut R,
) -> Result<EnvelopeBands> {
    let n = residuals.len();
    if n < 3 {
        return Err(Error::domain("a quantile envelope needs at least 3 residuals"));
    }
    if n_simulations == 0 {
        return Err(Error::domain("at least one simulation is required"));
    }
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::domain("residuals must be finite"));
    }
    let observed = standardized_sorted(residuals);
    let std_normal = Normal::standard();
    let theoretical = (1..=n)
        .map(|i| std_normal.inverse_cdf((i as f64 - 0.5) / n as f64))
        .collect();
    let mut lower = vec![f64::INFINITY; n];
    let mut upper = vec![f64::NEG_INFINITY; n];
    let mut draw = vec![0.0; n];
    for _ in 0..n_simulations {
        draw.iter_mut().for_each(|d| *d = rng.sample(StandardNormal));
        let sim = standardized_sorted(&draw);
        for i in 0..n {
            lower[i] = lower[i].min(sim[i]);
            upper[i] = upper[i].max(sim[i]);
        }
    }
    Ok(EnvelopeBands {
        theoretical,
        observed,
        lower,
        upper,
        n_simulations,
    })
}

pub fn write_weights_csv<W: Write>(mut out: W, weights: &[f64]) -> Result<()> {
    writeln!(out, "row,weight")?;
    for (i, w) in weights.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, fmt_f64(*w))?;
    }
    Ok(())
}

pub fn write_mixing_csv<W: Write>(mut out: W, psi: &MixingDensity) -> Result<()> {
    writeln!(out, "u,psi")?;
    for (u, v) in psi.grid().points().iter().zip(psi.values()) {
        writeln!(out, "{},{}", fmt_f64(*u), fmt_f64(*v))?;
    }
    Ok(())
}

pub fn write_likpath_csv<W: Write>(mut out: W, path: &[f64]) -> Result<()> {
    writeln!(out, "iteration,loglik")?;
    for (t, l) in path.iter().enumerate() {
        writeln!(out, "{},{}", t + 1, fmt_f64(*l))?;
    }
    Ok(())
}

pub fn write_envelope_csv<W: Write>(mut out: W, bands: &EnvelopeBands) -> Result<()> {
    writeln!(out, "theoretical_q,observed,lower,upper")?;
    for i in 0..bands.observed.len() {
        writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(bands.theoretical[i]),
            fmt_f64(bands.observed[i]),
            fmt_f64(bands.lower[i]),
            fmt_f64(bands.upper[i])
        )?;
    }
    Ok(())
}

pub fn write_residuals_csv<W: Write>(mut out: W, residuals: &[f64]) -> Result<()> {
    writeln!(out, "row,residual")?;
    for (i, r) in residuals.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, fmt_f64(*r))?;
    }
    Ok(())
}
