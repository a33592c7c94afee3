//! Monte Carlo study of the conditional maximum likelihood estimator.
//!
//! Each replication simulates a series with burn-in `2m`, fits the model and
//! records estimates and standard errors. Replications run in parallel, each
//! on its own ChaCha8 stream selected by `(sample-size index, replication)`,
//! so results do not depend on thread scheduling.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KarmaError, Result};
use crate::estimation::{fit, FitOptions};
use crate::model::{simulate_path, KarmaSpec, ParamVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub spec: KarmaSpec,
    pub true_params: ParamVector,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub fit_options: FitOptions,
}

impl McConfig {
    /// KARMA(2,2), logit link, `γ = (0.5, 0.5, −0.3, 0.4, 0.15, 15)`.
    pub fn karma22(replications: usize, seed: u64) -> Self {
        McConfig {
            spec: KarmaSpec::arma(2, 2),
            true_params: ParamVector::new(0.5, vec![], vec![0.5, -0.3], vec![0.4, 0.15], 15.0),
            sample_sizes: vec![70, 100, 200, 300],
            replications,
            seed,
            fit_options: FitOptions::default(),
        }
    }

    /// KARMA(1,1), logit link, `γ = (−1, −0.5, 0.25, 10)`.
    pub fn karma11(replications: usize, seed: u64) -> Self {
        McConfig {
            spec: KarmaSpec::arma(1, 1),
            true_params: ParamVector::new(-1.0, vec![], vec![-0.5], vec![0.25], 10.0),
            sample_sizes: vec![70, 100, 200, 300],
            replications,
            seed,
            fit_options: FitOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.true_params.validate(&self.spec)?;
        if self.replications == 0 {
            return Err(KarmaError::InvalidParams("at least one replication is required".into()));
        }
        if self.spec.r > 0 {
            return Err(KarmaError::InvalidParams(
                "Monte Carlo studies are run without covariates".into(),
            ));
        }
        let needed = self.spec.max_lag() + self.spec.n_params() + 1;
        if let Some(&n) = self.sample_sizes.iter().find(|&&n| n < needed) {
            return Err(KarmaError::SeriesTooShort { n, needed });
        }
        Ok(())
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub rep: usize,
    pub converged: bool,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub rb_percent: f64,
    pub mse: f64,
    /// Share of replications whose 95% Wald interval covers the truth.
    pub coverage_95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeSummary {
    pub n: usize,
    pub successes: usize,
    /// Replications whose fit failed or did not converge; excluded from the
    /// summaries.
    pub failure_count: usize,
    pub params: Vec<ParamSummary>,
    pub replications: Vec<Replication>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: McConfig,
    pub cells: Vec<SampleSizeSummary>,
}

const Z_975: f64 = 1.959_963_984_540_054;

fn replicate(config: &McConfig, n_index: usize, n: usize, rep: usize) -> Replication {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(((n_index as u64) << 32) | rep as u64);
    let outcome = simulate_path(&config.spec, &config.true_params, n, &[], &mut rng)
        .and_then(|path| fit(&config.spec, &path.sample(), &config.fit_options));
    match outcome {
        Ok(f) => Replication {
            rep,
            converged: f.converged,
            estimates: f.estimates.to_vec(),
            std_errors: f.std_errors,
        },
        Err(_) => Replication {
            rep,
            converged: false,
            estimates: Vec::new(),
            std_errors: Vec::new(),
        },
    }
}

fn summarise(config: &McConfig, n: usize, replications: Vec<Replication>) -> SampleSizeSummary {
    let truth = config.true_params.to_vec();
    let names = config.spec.param_names();
    let ok: Vec<&Replication> = replications.iter().filter(|r| r.converged).collect();
    let k = ok.len() as f64;
    let params = truth
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mean = ok.iter().map(|r| r.estimates[i]).sum::<f64>() / k;
            let mse = ok.iter().map(|r| (r.estimates[i] - t).powi(2)).sum::<f64>() / k;
            // fits with a singular information matrix have NaN errors
            let with_se: Vec<&&Replication> = ok.iter().filter(|r| r.std_errors[i].is_finite()).collect();
            let covered = with_se
                .iter()
                .filter(|r| (r.estimates[i] - t).abs() <= Z_975 * r.std_errors[i])
                .count();
            ParamSummary {
                name: names[i].clone(),
                truth: t,
                mean,
                rb_percent: 100.0 * (mean - t) / t,
                mse,
                coverage_95: covered as f64 / with_se.len() as f64,
            }
        })
        .collect();
    SampleSizeSummary {
        n,
        successes: ok.len(),
        failure_count: replications.len() - ok.len(),
        params,
        replications,
    }
}

/// Runs every `(n, replication)` pair and summarises per sample size.
pub fn run_study(config: &McConfig) -> Result<McReport> {
    config.validate()?;
    let cells = config
        .sample_sizes
        .iter()
        .enumerate()
        .map(|(n_index, &n)| {
            let reps: Vec<Replication> = (0..config.replications)
                .into_par_iter()
                .map(|rep| replicate(config, n_index, n, rep))
                .collect();
            summarise(config, n, reps)
        })
        .collect();
    Ok(McReport {
        config: config.clone(),
        cells,
    })
}

impl McReport {
    pub fn cell(&self, n: usize) -> Option<&SampleSizeSummary> {
        self.cells.iter().find(|c| c.n == n)
    }

    /// Long-format CSV: `n,statistic,<param>…` with rows for mean, RB%, MSE
    /// and coverage, plus a failures column.
    pub fn to_csv(&self) -> String {
        let names = self.config.spec.param_names();
        let mut out = format!("n,statistic,{},failures\n", names.join(","));
        let truth: Vec<String> = self.config.true_params.to_vec().iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, ",truth,{},", truth.join(","));
        for cell in &self.cells {
            let rows: [(&str, fn(&ParamSummary) -> f64); 4] = [
                ("mean", |p| p.mean),
                ("rb_percent", |p| p.rb_percent),
                ("mse", |p| p.mse),
                ("coverage_95", |p| p.coverage_95),
            ];
            for (label, get) in rows {
                let vals: Vec<String> = cell.params.iter().map(|p| format!("{:.6}", get(p))).collect();
                let _ = writeln!(out, "{},{},{},{}", cell.n, label, vals.join(","), cell.failure_count);
            }
        }
        out
    }

    /// Markdown table with one block per sample size.
    pub fn to_markdown(&self) -> String {
        let names = self.config.spec.param_names();
        let mut out = format!("| | {} |\n|---|{}\n", names.join(" | "), "---|".repeat(names.len()));
        let truth: Vec<String> = self.config.true_params.to_vec().iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(out, "| Parameter | {} |", truth.join(" | "));
        for cell in &self.cells {
            let _ = writeln!(
                out,
                "| **n = {}** ({} of {} fits used) |{}",
                cell.n,
                cell.successes,
                cell.successes + cell.failure_count,
                " |".repeat(names.len())
            );
            let row = |label: &str, get: &dyn Fn(&ParamSummary) -> f64| {
                let vals: Vec<String> = cell.params.iter().map(|p| format!("{:.4}", get(p))).collect();
                format!("| {label} | {} |\n", vals.join(" | "))
            };
            out.push_str(&row("Mean", &|p| p.mean));
            out.push_str(&row("RB (%)", &|p| p.rb_percent));
            out.push_str(&row("MSE", &|p| p.mse));
        }
        out
    }
}
