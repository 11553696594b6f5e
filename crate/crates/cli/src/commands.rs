use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use prem_core::baselines::{self, fit_baseline};
use prem_core::inference::{self, Interval};
use prem_core::io::{self, fmt_f64, Dataset, BUNDLED};
use prem_core::prem::{prem_fit_with, PrObjective};
use prem_core::rng::{self, Purpose};
use prem_core::simulation::ScenarioPlan;
use prem_core::{DVector, Method, MixingDensity, PremConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{CiArgs, CiMethod, DataArgs, DatasetsArgs, Engine, FitArgs, Hold, ProfileArgs, SimulateArgs};
use crate::output::{emit, Outputs};
use crate::CliError;

fn load(args: &DataArgs) -> Result<Dataset, CliError> {
    let path = Path::new(&args.data);
    let looks_like_path = path.exists() || args.data.contains(['/', '\\', '.']);
    if !looks_like_path {
        if args.response.is_some() || !args.predictors.is_empty() || args.no_intercept {
            return Err(CliError::Usage(
                "--response, --predictors and --no-intercept apply to CSV input only".into(),
            ));
        }
        return Ok(io::bundled_dataset(&args.data)?);
    }
    let response = args
        .response
        .as_deref()
        .ok_or_else(|| CliError::Usage("--response is required for CSV input".into()))?;
    Ok(io::load_csv(path, response, &args.predictors, !args.no_intercept)?)
}

fn csv_bytes<F>(write: F) -> Result<Vec<u8>, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> prem_core::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

#[derive(Serialize)]
struct Coefficient {
    name: String,
    estimate: f64,
}

#[derive(Serialize)]
struct AnnotatedRow {
    row: usize,
    reason: String,
}

#[derive(Serialize)]
struct MixingSummary {
    grid_size: usize,
    u_min: f64,
    u_max: f64,
    mean: f64,
    mode: f64,
    mass_within_half_to_double_sigma_ls: f64,
}

impl MixingSummary {
    fn new(psi: &MixingDensity, sigma: f64) -> Self {
        let grid = psi.grid();
        let mode_idx = psi
            .values()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        Self {
            grid_size: grid.len(),
            u_min: grid.u_min(),
            u_max: grid.u_max(),
            mean: psi.mean(),
            mode: grid.points()[mode_idx],
            mass_within_half_to_double_sigma_ls: psi.mass_between(0.5 * sigma, 2.0 * sigma),
        }
    }
}

#[derive(Serialize)]
struct FitReport {
    dataset: String,
    source: String,
    method: Method,
    n: usize,
    p: usize,
    seed: u64,
    coefficients: Vec<Coefficient>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
    iterations: usize,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_hat_ls: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    loglik_path: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ascent_violations: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mixing: Option<MixingSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    objective_path: Vec<f64>,
    annotated_rows: Vec<AnnotatedRow>,
}

pub fn fit(args: FitArgs) -> Result<(), CliError> {
    let ds = load(&args.data)?;
    let data = &ds.data;
    let cfg = args.prem.config();
    cfg.validate()?;
    if args.envelope_sims == 0 {
        return Err(CliError::Usage("--envelope-sims must be at least 1".into()));
    }
    let method = args.method.method();
    let mut out = Outputs::default();

    let mut report = FitReport {
        dataset: ds.name.clone(),
        source: ds.source.clone(),
        method,
        n: data.n(),
        p: data.p(),
        seed: cfg.seed,
        coefficients: Vec::new(),
        scale: None,
        iterations: 0,
        converged: false,
        sigma_hat_ls: None,
        loglik_path: None,
        ascent_violations: None,
        mixing: None,
        objective_path: Vec::new(),
        annotated_rows: ds
            .outlier_annotations
            .iter()
            .map(|a| AnnotatedRow {
                row: a.row + 1,
                reason: a.reason.clone(),
            })
            .collect(),
    };

    let beta = if method == Method::Prem {
        let objective = PrObjective::new(data, &cfg)?;
        let fit = prem_fit_with(&objective, &cfg)?;
        out.add(
            args.out.join("weights.csv"),
            csv_bytes(|b| io::write_weights_csv(b, &fit.obs_weights))?,
        );
        out.add(
            args.out.join("mixing.csv"),
            csv_bytes(|b| io::write_mixing_csv(b, &fit.psi_hat))?,
        );
        out.add(
            args.out.join("likpath.csv"),
            csv_bytes(|b| io::write_likpath_csv(b, &fit.loglik_path))?,
        );
        report.iterations = fit.iterations;
        report.converged = fit.converged;
        report.sigma_hat_ls = Some(fit.sigma_hat_ls);
        report.mixing = Some(MixingSummary::new(&fit.psi_hat, fit.sigma_hat_ls));
        report.ascent_violations = Some(fit.ascent_violations.clone());
        report.loglik_path = Some(fit.loglik_path);
        fit.beta_hat
    } else {
        let fit = fit_baseline(method, data)?;
        report.iterations = fit.iterations;
        report.converged = fit.converged;
        report.scale = fit.scale_hat;
        report.objective_path = fit.objective_path;
        fit.beta_hat
    };

    report.coefficients = data
        .column_names()
        .iter()
        .zip(beta.iter())
        .map(|(name, b)| Coefficient {
            name: name.clone(),
            estimate: *b,
        })
        .collect();

    let residuals = data.residuals(&beta)?;
    out.add(
        args.out.join("residuals.csv"),
        csv_bytes(|b| io::write_residuals_csv(b, residuals.as_slice()))?,
    );
    if residuals.len() >= 3 {
        let mut rng = rng::stream(cfg.seed, Purpose::Envelope, 0);
        let bands = io::qq_envelope(residuals.as_slice(), args.envelope_sims, &mut rng)?;
        out.add(
            args.out.join("envelope.csv"),
            csv_bytes(|b| io::write_envelope_csv(b, &bands))?,
        );
    }

    let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
    json.push(b'\n');
    out.add(args.out.join("report.json"), json);
    out.commit()?;

    println!("{} fit of {} (n = {}, p = {})", method, ds.name, data.n(), data.p());
    for c in &report.coefficients {
        println!("  {:<14} {:>14.6}", c.name, c.estimate);
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.scenario).map_err(|e| {
        prem_core::Error::Data(format!("cannot read {}: {e}", args.scenario.display()))
    })?;
    let mut plan = ScenarioPlan::parse(&text)?;
    if let Some(seed) = args.seed {
        plan.specs.iter_mut().for_each(|s| s.seed = seed);
    }
    let table = plan.run()?;
    let bytes = csv_bytes(|b| table.write_csv(b))?;
    emit(Some(&args.out), bytes)?;
    print!("{}", table.render());
    Ok(())
}

fn coefficient_index(spec: &str, names: &[String]) -> Result<usize, CliError> {
    let idx = match spec.parse::<usize>() {
        Ok(i) => Some(i).filter(|i| *i < names.len()),
        Err(_) => names.iter().position(|n| n == spec),
    };
    idx.ok_or_else(|| {
        CliError::Usage(format!(
            "coefficient `{spec}` out of range; the model has {} coefficients: {}",
            names.len(),
            names.join(", ")
        ))
    })
}

pub fn profile(args: ProfileArgs) -> Result<(), CliError> {
    if args.count < 2 {
        return Err(CliError::Usage("--count must be at least 2".into()));
    }
    if args.em_iters == 0 {
        return Err(CliError::Usage("--em-iters must be at least 1".into()));
    }
    let ds = load(&args.data)?;
    let data = &ds.data;
    let j = coefficient_index(&args.coef, data.column_names())?;
    let cfg = args.prem.config();
    cfg.validate()?;
    let objective = PrObjective::new(data, &cfg)?;
    let held: DVector<f64> = match args.hold {
        Hold::Ols => objective.ols().clone(),
        Hold::Prem => prem_fit_with(&objective, &cfg)?.beta_hat,
    };
    let lo = args.lo.unwrap_or(held[j] - 1.0);
    let hi = args.hi.unwrap_or(held[j] + 1.0);
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(CliError::Usage(format!("slice needs finite lo < hi, got [{lo}, {hi}]")));
    }
    let points = slice_points(lo, hi, args.count);
    let grid = &objective.pr_config().grid;
    let values: Vec<f64> = points
        .par_iter()
        .map(|v| {
            let mut beta = held.clone();
            beta[j] = *v;
            match args.engine {
                Engine::Pr => objective.loglik(&beta),
                Engine::Npmle => baselines::npmle_profile_loglik(&beta, data, grid, args.em_iters),
            }
        })
        .collect::<prem_core::Result<_>>()?;

    let mut text = String::from("beta_value,loglik\n");
    for (b, l) in points.iter().zip(&values) {
        let _ = writeln!(text, "{},{}", fmt_f64(*b), fmt_f64(*l));
    }
    emit(args.out.as_deref(), text.into_bytes())?;
    Ok(())
}

fn slice_points(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let step = (hi - lo) / (count - 1) as f64;
    (0..count)
        .map(|k| if k + 1 == count { hi } else { lo + step * k as f64 })
        .collect()
}

fn intervals_csv(intervals: &[Interval]) -> Vec<u8> {
    let mut text = String::from("coefficient,estimate,lower,upper\n");
    for iv in intervals {
        let _ = writeln!(
            text,
            "{},{},{},{}",
            iv.coefficient,
            fmt_f64(iv.estimate),
            fmt_f64(iv.lower),
            fmt_f64(iv.upper)
        );
    }
    text.into_bytes()
}

pub fn ci(args: CiArgs) -> Result<(), CliError> {
    inference::normal_multiplier(args.level)?;
    let ds = load(&args.data)?;
    let data = &ds.data;
    let intervals = match args.method {
        CiMethod::Ls => inference::ols_intervals(data, args.level)?,
        CiMethod::Prem => {
            let cfg: PremConfig = args.prem.config();
            cfg.validate()?;
            let objective = PrObjective::new(data, &cfg)?;
            let fit = prem_fit_with(&objective, &cfg)?;
            inference::confidence_intervals(&fit, data, &cfg, args.level)?
        }
    };
    emit(args.out.as_deref(), intervals_csv(&intervals))?;
    Ok(())
}

fn describe_rows(ds: &Dataset) -> Vec<String> {
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for a in &ds.outlier_annotations {
        match groups.iter_mut().find(|(r, _)| *r == a.reason) {
            Some((_, rows)) => rows.push(a.row + 1),
            None => groups.push((a.reason.clone(), vec![a.row + 1])),
        }
    }
    groups
        .into_iter()
        .map(|(reason, rows)| {
            let first = rows[0];
            let last = rows[rows.len() - 1];
            if rows.len() > 1 && last - first + 1 == rows.len() {
                format!("rows {first}-{last}: {reason}")
            } else {
                let list: Vec<String> = rows.iter().map(|r| r.to_string()).collect();
                format!("rows {}: {reason}", list.join(","))
            }
        })
        .collect()
}

pub fn datasets(args: DatasetsArgs) -> Result<(), CliError> {
    if let Some(name) = &args.export {
        let ds = io::bundled_dataset(name)?;
        let out: PathBuf = args.out.clone().expect("clap enforces --out with --export");
        let bytes = csv_bytes(|b| ds.write_csv(b))?;
        emit(Some(&out), bytes)?;
        return Ok(());
    }
    for name in BUNDLED {
        let ds = io::bundled_dataset(name)?;
        println!(
            "{name}: n = {}, p = {} (with intercept), response `{}`",
            ds.data.n(),
            ds.data.p(),
            ds.response
        );
        println!("  {}", ds.source);
        for line in describe_rows(&ds) {
            println!("  {line}");
        }
    }
    Ok(())
}
