//! Command-line front end: CSV input and output, harmonic regressors and the
//! `fit`, `forecast`, `diagnose`, `simulate` and `mc` subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::diagnostics::DiagnosticsReport;
use crate::error::{KarmaError, Result};
use crate::estimation::{fit, FitOptions, FitResult};
use crate::forecast::HoldoutReport;
use crate::kuma::Bounds;
use crate::link::LinkFunction;
use crate::mc::{run_study, McConfig};
use crate::model::{simulate, KarmaSpec, ParamVector, SeriesData};

#[derive(Debug, Parser)]
#[command(name = "karma", version, about = "Kumaraswamy ARMA models for bounded time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write the parameter table, residuals and ACF.
    Fit(ModelArgs),
    /// Fit on all but the holdout and forecast ahead.
    Forecast(ModelArgs),
    /// Fit and write residual diagnostics only.
    Diagnose(ModelArgs),
    /// Simulate a series from given parameters.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo study.
    Mc(McArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SpecArgs {
    #[arg(long, default_value_t = 0)]
    pub p: usize,
    #[arg(long, default_value_t = 0)]
    pub q: usize,
    #[arg(long, default_value = "logit")]
    pub link: LinkFunction,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub lower: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub upper: f64,
    /// Add sin/cos regressors with this period.
    #[arg(long)]
    pub harmonic: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// CSV with header `t,y[,x1,...]`.
    pub input: PathBuf,
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Forecast steps (defaults to the holdout length).
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Trailing observations withheld from fitting.
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
    #[arg(long, default_value_t = 20)]
    pub lags: usize,
    #[arg(long, default_value_t = 24)]
    pub acf_lags: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub n: usize,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub beta: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub ar: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub ma: Vec<f64>,
    #[arg(long)]
    pub precision: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Design {
    Karma11,
    Karma22,
}

#[derive(Debug, Clone, Args)]
pub struct McArgs {
    #[arg(long, value_enum, default_value = "karma11")]
    pub design: Design,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "70,100,200,300")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Reads a CSV with a `y` column; every column other than `t` and `y`
/// becomes a covariate, in header order.
pub fn load_csv(path: &Path, bounds: &Bounds) -> Result<SeriesData> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| KarmaError::Io(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| KarmaError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let y_col = headers.iter().position(|h| h.trim() == "y").ok_or(KarmaError::Parse {
        line: 1,
        message: "missing column 'y'".into(),
    })?;
    let x_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(i, h)| *i != y_col && h.trim() != "t")
        .map(|(i, _)| i)
        .collect();
    let mut y = Vec::new();
    let mut x = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| KarmaError::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |i: usize| -> Result<f64> {
            let raw = record.get(i).unwrap_or("").trim();
            raw.parse::<f64>().map_err(|_| KarmaError::Parse {
                line,
                message: format!("'{raw}' in column '{}' is not a number", &headers[i]),
            })
        };
        let value = field(y_col)?;
        if !bounds.contains(value) {
            return Err(KarmaError::OutOfBounds {
                index: row,
                value,
                lower: bounds.lower(),
                upper: bounds.upper(),
            });
        }
        y.push(value);
        if !x_cols.is_empty() {
            x.push(x_cols.iter().map(|&i| field(i)).collect::<Result<Vec<f64>>>()?);
        }
    }
    SeriesData::new(y, x)
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `t,y[,x1,...]` with 17 significant digits, which round-trips
/// through [`load_csv`] exactly.
pub fn write_csv(path: &Path, data: &SeriesData) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| KarmaError::Io(e.to_string()))?;
    let mut header = vec!["t".to_string(), "y".to_string()];
    header.extend((1..=data.covariate_count()).map(|i| format!("x{i}")));
    w.write_record(&header).map_err(|e| KarmaError::Io(e.to_string()))?;
    for (t, &y) in data.y_tilde().iter().enumerate() {
        let mut rec = vec![(t + 1).to_string(), fmt17(y)];
        if let Some(row) = data.covariates().get(t) {
            rec.extend(row.iter().map(|&v| fmt17(v)));
        }
        w.write_record(&rec).map_err(|e| KarmaError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Row `t` (1-based) is `(sin(2πt/period), cos(2πt/period))`.
pub fn harmonic_covariates(n_total: usize, period: usize) -> Result<Vec<Vec<f64>>> {
    if period < 2 {
        return Err(KarmaError::Domain(format!("harmonic period must be at least 2, got {period}")));
    }
    Ok((1..=n_total)
        .map(|t| {
            // reduce first so rows repeat exactly
            let phase = std::f64::consts::TAU * ((t % period) as f64) / period as f64;
            vec![phase.sin(), phase.cos()]
        })
        .collect())
}

fn bounds_of(args: &SpecArgs) -> Result<Bounds> {
    Bounds::new(args.lower, args.upper)
}

/// Appends harmonic regressors for `n_total` steps to the first rows of
/// `base` (which may be empty).
fn with_harmonics(base: &[Vec<f64>], n_total: usize, period: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let Some(period) = period else {
        return Ok(base.to_vec());
    };
    let h = harmonic_covariates(n_total, period)?;
    Ok(h.into_iter()
        .enumerate()
        .map(|(t, mut row)| {
            let mut full = base.get(t).cloned().unwrap_or_default();
            full.append(&mut row);
            full
        })
        .collect())
}

struct Prepared {
    spec: KarmaSpec,
    train: SeriesData,
    holdout: Vec<f64>,
    x_future: Vec<Vec<f64>>,
    horizon: usize,
}

fn prepare_model(args: &ModelArgs) -> Result<Prepared> {
    let bounds = bounds_of(&args.spec)?;
    let raw = load_csv(&args.input, &bounds)?;
    let n = raw.len();
    if args.holdout >= n {
        return Err(KarmaError::SeriesTooShort {
            n,
            needed: args.holdout + 1,
        });
    }
    let n_train = n - args.holdout;
    let horizon = args.horizon.unwrap_or(args.holdout);
    let csv_r = raw.covariate_count();
    if csv_r > 0 && n_train + horizon > n {
        return Err(KarmaError::Dimension(format!(
            "forecast horizon {horizon} runs past the {} covariate rows in the input",
            n
        )));
    }
    let covariates = with_harmonics(raw.covariates(), n_train + horizon, args.spec.harmonic)?;
    let r = covariates.first().map_or(0, Vec::len);
    let spec = KarmaSpec::new(args.spec.p, args.spec.q, r, args.spec.link, bounds);
    let train_x = if r > 0 { covariates[..n_train].to_vec() } else { Vec::new() };
    let train = SeriesData::new(raw.y_tilde()[..n_train].to_vec(), train_x)?;
    let x_future = if r > 0 { covariates[n_train..].to_vec() } else { Vec::new() };
    Ok(Prepared {
        spec,
        train,
        holdout: raw.y_tilde()[n_train..].to_vec(),
        x_future,
        horizon,
    })
}

/// Table of estimates, standard errors, z statistics and p-values.
pub fn parameter_table(fit: &FitResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12}{:>14}{:>14}{:>12}{:>12}", "Parameter", "Estimate", "Std. Error", "z stat.", "Pr(>|z|)");
    for (i, name) in fit.param_names().iter().enumerate() {
        let _ = writeln!(
            out,
            "{:<12}{:>14.4}{:>14.4}{:>12.4}{:>12.4}",
            name,
            fit.estimates.to_vec()[i],
            fit.std_errors[i],
            fit.z_stats[i].abs(),
            fit.p_values[i]
        );
    }
    out
}

fn fit_summary(fit: &FitResult, diag: &DiagnosticsReport) -> String {
    let mut out = parameter_table(fit);
    let c = fit.criteria;
    let lb = diag.ljung_box;
    let _ = writeln!(out);
    let _ = writeln!(out, "log-likelihood = {:.4}  (n = {}, effective n = {})", fit.loglik_hat, fit.n, fit.n_eff);
    let _ = writeln!(out, "AIC = {:.4}  SIC = {:.4}  HQ = {:.4}", c.aic, c.sic, c.hq);
    let _ = writeln!(out, "Ljung-Box (lag = {}) = {:.4}, p-value = {:.4}", lb.lags, lb.statistic, lb.p_value);
    let _ = writeln!(
        out,
        "converged = {} ({}, {} iterations, max |score| = {:.2e})",
        fit.converged, fit.termination, fit.iterations, fit.max_abs_score
    );
    if fit.fisher_singular {
        let _ = writeln!(out, "warning: Fisher information is not positive definite; standard errors unavailable");
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| KarmaError::Io(e.to_string()))?;
    write_text(path, &text)
}

fn write_residuals(dir: &Path, fit: &FitResult) -> Result<()> {
    let m = fit.spec.max_lag();
    let mut s = String::from("t,quantile_residual\n");
    for (i, r) in fit.residuals_quantile.iter().enumerate() {
        let _ = writeln!(s, "{},{}", m + i + 1, fmt17(*r));
    }
    write_text(&dir.join("residuals.csv"), &s)
}

fn write_acf(dir: &Path, diag: &DiagnosticsReport) -> Result<()> {
    let mut s = String::from("lag,acf,pacf,band\n");
    for (i, (a, p)) in diag.acf.iter().zip(&diag.pacf).enumerate() {
        let _ = writeln!(s, "{},{},{},{}", i + 1, fmt17(*a), fmt17(*p), fmt17(diag.acf_band));
    }
    write_text(&dir.join("acf.csv"), &s)
}

fn fit_and_diagnose(args: &ModelArgs, prep: &Prepared) -> Result<(FitResult, DiagnosticsReport)> {
    let result = fit(&prep.spec, &prep.train, &FitOptions::default())?;
    let k = result.residuals_quantile.len();
    let h_max = args.acf_lags.min(k.saturating_sub(1));
    let diag = DiagnosticsReport::from_fit(&result, h_max, args.lags.min(k.saturating_sub(1)))?;
    Ok((result, diag))
}

#[derive(Serialize)]
struct FitReport<'a> {
    fit: &'a FitResult,
    ljung_box: crate::diagnostics::LjungBox,
}

#[derive(Serialize)]
struct ForecastReport<'a> {
    forecast: &'a crate::forecast::ForecastResult,
    holdout: Option<HoldoutReport>,
}

fn run_fit(args: &ModelArgs) -> Result<String> {
    let prep = prepare_model(args)?;
    let (result, diag) = fit_and_diagnose(args, &prep)?;
    fs::create_dir_all(&args.out)?;
    let summary = fit_summary(&result, &diag);
    write_json(
        &args.out.join("fit.json"),
        &FitReport {
            fit: &result,
            ljung_box: diag.ljung_box,
        },
    )?;
    write_text(&args.out.join("fit.txt"), &summary)?;
    write_residuals(&args.out, &result)?;
    write_acf(&args.out, &diag)?;
    Ok(summary)
}

fn run_forecast(args: &ModelArgs) -> Result<String> {
    let prep = prepare_model(args)?;
    let result = fit(&prep.spec, &prep.train, &FitOptions::default())?;
    let fc = result.forecast(&prep.train, &prep.x_future, prep.horizon)?;
    let holdout = if prep.holdout.is_empty() || prep.horizon == 0 {
        None
    } else {
        Some(fc.evaluate(&prep.spec, &prep.holdout)?)
    };
    fs::create_dir_all(&args.out)?;
    let mut csv = String::from("h,mu_hat,y_hat\n");
    for (h, (mu, y)) in fc.mu_hat_future.iter().zip(&fc.y_tilde_hat).enumerate() {
        let _ = writeln!(csv, "{},{},{}", h + 1, fmt17(*mu), fmt17(*y));
    }
    write_text(&args.out.join("forecast.csv"), &csv)?;
    write_json(
        &args.out.join("forecast.json"),
        &ForecastReport {
            forecast: &fc,
            holdout,
        },
    )?;
    let mut out = parameter_table(&result);
    let _ = writeln!(out, "\n{} forecast steps written to forecast.csv", fc.horizon);
    if let Some(h) = holdout {
        let _ = writeln!(out, "{:<10}{:>12}{:>12}", "", "rescaled", "original");
        let _ = writeln!(out, "{:<10}{:>12.4}{:>12.4}", "MSE", h.rescaled.mse, h.original.mse);
        let _ = writeln!(out, "{:<10}{:>12.4}{:>12.4}", "MAPE", h.rescaled.mape, h.original.mape);
    }
    Ok(out)
}

fn run_diagnose(args: &ModelArgs) -> Result<String> {
    let prep = prepare_model(args)?;
    let (result, diag) = fit_and_diagnose(args, &prep)?;
    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("diagnostics.json"), &diag)?;
    write_residuals(&args.out, &result)?;
    write_acf(&args.out, &diag)?;
    let c = diag.criteria;
    Ok(format!(
        "Ljung-Box (lag = {}) = {:.4}, p-value = {:.4}\nAIC = {:.4}  SIC = {:.4}  HQ = {:.4}\n",
        diag.ljung_box.lags, diag.ljung_box.statistic, diag.ljung_box.p_value, c.aic, c.sic, c.hq
    ))
}

fn run_simulate(args: &SimulateArgs) -> Result<String> {
    let bounds = bounds_of(&args.spec)?;
    let r_harm = if args.spec.harmonic.is_some() { 2 } else { 0 };
    let spec = KarmaSpec::new(args.spec.p, args.spec.q, r_harm, args.spec.link, bounds);
    let params = ParamVector::new(args.alpha, args.beta.clone(), args.ar.clone(), args.ma.clone(), args.precision);
    let n_total = crate::model::burn_in_length(&spec) + args.n;
    let covariates = with_harmonics(&[], n_total, args.spec.harmonic)?;
    let data = simulate(&spec, &params, args.n, &covariates, args.seed)?;
    fs::create_dir_all(&args.out)?;
    let path = args.out.join("series.csv");
    write_csv(&path, &data)?;
    Ok(format!("{} observations written to {}\n", data.len(), path.display()))
}

fn run_mc(args: &McArgs) -> Result<String> {
    let mut config = match args.design {
        Design::Karma11 => McConfig::karma11(args.reps, args.seed),
        Design::Karma22 => McConfig::karma22(args.reps, args.seed),
    };
    config.sample_sizes = args.sizes.clone();
    let report = run_study(&config)?;
    fs::create_dir_all(&args.out)?;
    write_text(&args.out.join("mc_report.csv"), &report.to_csv())?;
    let md = report.to_markdown();
    write_text(&args.out.join("mc_report.md"), &md)?;
    Ok(md)
}

/// Executes one subcommand and returns the text printed to stdout.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Forecast(a) => run_forecast(a),
        Command::Diagnose(a) => run_diagnose(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Mc(a) => run_mc(a),
    }
}
