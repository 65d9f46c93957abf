//! The subcommands. Each writes its outputs into the run directory.

use std::path::Path;

use odcfmsv_core::evaluate::{
    delta_mkl_experiment, rolling_corr, smoothing_report, DeltaMklConfig, DeltaMklReport, SmoothingReport,
};
use odcfmsv_core::gibbs::{data_fingerprint, param_names, param_values, summarize, Chain, ChainDraws, Checkpoint, PosteriorSummary};
use odcfmsv_core::model::{FactorDataset, ModelState, ModelVariant, TrueParams};
use odcfmsv_core::predict::{
    compare_reports, draw_predictive_all, lps, lps_ew, predictive_return_cov, rolling_backtest, var_estimate,
    BacktestConfig, Comparison, ForecastReport,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{parse_variant, RunConfig};
use crate::error::{CliError, CliResult, Context};
use crate::io::{ingest_csv, read_json, sig6, write_csv, write_json, write_matrix, write_text};

pub const PRESET: &str = "paper-3.1";

/// Ground truth written next to simulated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub preset: String,
    pub seed: u64,
    pub params: TrueParams,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub state: ModelState,
}

fn load_data(cfg: &RunConfig) -> CliResult<FactorDataset> {
    let returns = cfg.returns.as_ref().ok_or_else(|| CliError::Usage("--returns is required".into()))?;
    let factors = cfg.factors.as_ref().ok_or_else(|| CliError::Usage("--factors is required".into()))?;
    let y = ingest_csv(returns, cfg.rescale_percent)?;
    let f = ingest_csv(factors, cfg.rescale_percent)?;
    FactorDataset::new(y.values, f.values).ctx("data")
}

fn column_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn simulate(cfg: &RunConfig, preset: &str, t: Option<usize>) -> CliResult<()> {
    if preset != PRESET {
        return Err(CliError::Usage(format!("unknown preset '{preset}' (available: {PRESET})")));
    }
    let t = t.unwrap_or(1000);
    let params = TrueParams::paper_dgp(cfg.variant);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sim = params.simulate(t, &mut rng).ctx("simulate")?;
    write_matrix(&cfg.out.join("Y.csv"), &column_names("y", sim.data.p()), &sim.data.y)?;
    write_matrix(&cfg.out.join("F.csv"), &column_names("f", sim.data.q()), &sim.data.f)?;
    let truth = Truth {
        preset: preset.to_string(),
        seed: cfg.seed,
        names: param_names(cfg.variant, sim.data.p(), sim.data.q()),
        values: param_values(&sim.state, cfg.variant),
        params,
        state: sim.state,
    };
    write_json(&cfg.out.join("truth.json"), &truth)
}

/// Coverage and smoothing errors of a fit against simulated truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub covered: usize,
    pub total: usize,
    pub uncovered: Vec<String>,
    pub mae_rho: f64,
    pub mae_var: f64,
    pub mkl: f64,
}

fn summary_rows(summary: &PosteriorSummary, truth: Option<&Truth>) -> Vec<Vec<String>> {
    summary
        .params
        .iter()
        .map(|p| {
            let group = p.name.split('[').next().unwrap_or(&p.name).to_string();
            let truth = truth
                .and_then(|t| t.names.iter().position(|n| *n == p.name).map(|i| t.values[i]))
                .map(sig6)
                .unwrap_or_default();
            vec![group, p.name.clone(), truth, sig6(p.mean), sig6(p.lower), sig6(p.upper)]
        })
        .collect()
}

pub fn fit(cfg: &RunConfig, truth_path: Option<&Path>, rows: Option<usize>, resume: Option<&Path>) -> CliResult<()> {
    let mut data = load_data(cfg)?;
    if let Some(n) = rows {
        data = data.head(n).ctx("--rows")?;
    }
    let mut mcmc = cfg.mcmc.clone();
    mcmc.weights = Some(cfg.weights.resolve(data.p())?);
    let mut chain = match resume {
        Some(path) => {
            let ckpt = Checkpoint::from_json(
                &std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?,
            )
            .ctx("checkpoint")?;
            Chain::resume(ckpt, data).ctx("resume")?
        }
        None => Chain::new(data, cfg.priors.clone(), mcmc).ctx("fit")?,
    };
    while !chain.is_finished() {
        chain.step().ctx("fit")?;
    }
    let mut ckpt = chain.checkpoint();
    let draws = chain.finish();
    ckpt.draws.diagnostics = draws.diagnostics.clone();
    write_text(&cfg.out.join("checkpoint.json"), &ckpt.to_json().ctx("checkpoint")?)?;

    let summary = summarize(&draws).ctx("summary")?;
    let truth: Option<Truth> = truth_path.map(read_json).transpose()?;
    write_csv(
        &cfg.out.join("summary.csv"),
        &["parameter", "name", "true", "mean", "lower", "upper"],
        &summary_rows(&summary, truth.as_ref()),
    )?;
    write_json(&cfg.out.join("diagnostics.json"), &draws.diagnostics)?;

    let mut header = vec!["t", "rho_hat", "var_hat"];
    let mut rows: Vec<Vec<String>> = (0..summary.var.len())
        .map(|t| {
            vec![
                (t + 1).to_string(),
                summary.rho.get(t).map(|v| sig6(*v)).unwrap_or_default(),
                sig6(summary.var[t]),
            ]
        })
        .collect();
    if let Some(truth) = &truth {
        let (eval, rep) = evaluate_fit(truth, &draws, &summary)?;
        header.extend(["rho_true", "var_true"]);
        for (t, row) in rows.iter_mut().enumerate() {
            row.push(rep.true_rho.get(t).map(|v| sig6(*v)).unwrap_or_default());
            row.push(sig6(rep.true_var[t]));
        }
        write_json(&cfg.out.join("evaluation.json"), &eval)?;
    }
    write_csv(&cfg.out.join("paths.csv"), &header, &rows)
}

fn evaluate_fit(truth: &Truth, draws: &ChainDraws, summary: &PosteriorSummary) -> CliResult<(Evaluation, SmoothingReport)> {
    let n = draws.paths.return_cov.len();
    if truth.state.len() < n {
        return Err(CliError::Data(format!("truth has {} periods, fit {n}", truth.state.len())));
    }
    let state = truncated(&truth.state, n);
    let mut covered = 0;
    let mut total = 0;
    let mut uncovered = Vec::new();
    for p in &summary.params {
        if let Some(i) = truth.names.iter().position(|n| *n == p.name) {
            total += 1;
            let v = truth.values[i];
            if p.lower <= v && v <= p.upper {
                covered += 1;
            } else {
                uncovered.push(p.name.clone());
            }
        }
    }
    let rep = smoothing_report(&state, truth.params.variant, draws).ctx("evaluation")?;
    let eval = Evaluation {
        covered,
        total,
        uncovered,
        mae_rho: rep.mae_rho,
        mae_var: rep.mae_var,
        mkl: rep.mkl,
    };
    Ok((eval, rep))
}

/// The first `n` periods of a latent path.
fn truncated(state: &ModelState, n: usize) -> ModelState {
    let mut s = state.clone();
    s.p_path.truncate(n);
    s.h = state.h.rows(0, n).into_owned();
    s.error_h = state.error_h.rows(0, n).into_owned();
    s
}

/// One-step-ahead forecast from stored draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub variant: ModelVariant,
    /// Zero-based row being forecast.
    pub index: usize,
    pub draws: usize,
    pub cov: nalgebra::DMatrix<f64>,
    pub var: f64,
    pub lps: Option<f64>,
    pub lps_ew: Option<f64>,
}

pub fn predict(cfg: &RunConfig, checkpoint: &Path) -> CliResult<()> {
    let text = std::fs::read_to_string(checkpoint).map_err(|e| CliError::io(checkpoint, e))?;
    let ckpt = Checkpoint::from_json(&text).ctx("checkpoint")?;
    let draws = &ckpt.draws;
    if draws.is_empty() {
        return Err(CliError::Data("checkpoint holds no stored draws".into()));
    }
    let p = ckpt.state.p();
    let index = ckpt.state.len();
    let w = cfg.weights.resolve(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pd = draw_predictive_all(draws, &mut rng).ctx("predict")?;
    let cov = predictive_return_cov(&pd).ctx("predict")?;
    let covs: Vec<_> = pd.iter().map(|d| d.return_cov.clone()).collect();
    let var = var_estimate(&covs, &w).ctx("predict")?;
    let (mut l, mut le) = (None, None);
    if cfg.returns.is_some() && cfg.factors.is_some() {
        let data = load_data(cfg)?;
        if data.p() != p {
            return Err(CliError::Data(format!("data have {} series, checkpoint {p}", data.p())));
        }
        let fitted = data.head(index.min(data.len())).ctx("data")?;
        if data.len() < index || data_fingerprint(&fitted) != ckpt.data_fingerprint {
            return Err(CliError::Data("data do not extend the rows the checkpoint was fitted on".into()));
        }
        if data.len() > index {
            let y = data.return_row(index);
            l = Some(lps(&y, &pd).ctx("predict")?);
            le = Some(lps_ew(&y, &w, &pd).ctx("predict")?);
        }
    }
    let fc = Forecast {
        variant: draws.variant,
        index,
        draws: pd.len(),
        cov,
        var,
        lps: l,
        lps_ew: le,
    };
    let mut rows = Vec::new();
    for i in 0..p {
        for j in 0..=i {
            rows.push(vec![(i + 1).to_string(), (j + 1).to_string(), sig6(fc.cov[(i, j)])]);
        }
    }
    write_csv(&cfg.out.join("forecast_cov.csv"), &["i", "j", "cov"], &rows)?;
    let opt = |v: Option<f64>| v.map(sig6).unwrap_or_default();
    write_csv(
        &cfg.out.join("forecast.csv"),
        &["variant", "index", "var", "lps", "lps_ew"],
        &[vec![fc.variant.to_string(), index.to_string(), sig6(var), opt(l), opt(le)]],
    )?;
    write_json(&cfg.out.join("forecast.json"), &fc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestOutput {
    pub start: usize,
    pub reports: Vec<ForecastReport>,
    pub comparison: Option<Comparison>,
}

pub fn backtest(cfg: &RunConfig) -> CliResult<BacktestOutput> {
    let data = load_data(cfg)?;
    let periods = cfg.periods.ok_or_else(|| CliError::Usage("--periods is required".into()))?;
    let start = match cfg.start {
        Some(s) => s,
        None => data
            .len()
            .checked_sub(periods)
            .ok_or_else(|| CliError::Usage(format!("{periods} periods exceed the {} rows", data.len())))?,
    };
    let bt = BacktestConfig {
        start,
        periods,
        mcmc: cfg.mcmc.clone(),
        weights: cfg.weights.resolve(data.p())?,
    };
    let reports = cfg
        .models
        .par_iter()
        .map(|&m| rolling_backtest(&data, m, &cfg.priors, &bt).ctx(&format!("backtest {m}")))
        .collect::<CliResult<Vec<_>>>()?;
    let comparison = if reports.len() == 2 {
        Some(compare_reports(&reports[0], &reports[1]).ctx("compare")?)
    } else {
        None
    };
    let mut header: Vec<String> = vec!["period".into(), "index".into()];
    for r in &reports {
        header.push(format!("var_{}", r.variant));
        header.push(format!("lps_{}", r.variant));
        header.push(format!("lps_ew_{}", r.variant));
    }
    if comparison.is_some() {
        header.extend(["lps_diff".into(), "cum_log_bf".into(), "cum_log_bf_ew".into()]);
    }
    let rows: Vec<Vec<String>> = (0..periods)
        .map(|n| {
            let mut row = vec![(n + 1).to_string(), reports[0].periods[n].index.to_string()];
            for r in &reports {
                let p = &r.periods[n];
                row.extend([sig6(p.var), sig6(p.lps), sig6(p.lps_ew)]);
            }
            if let Some(c) = &comparison {
                row.push(sig6(reports[0].periods[n].lps - reports[1].periods[n].lps));
                row.push(sig6(c.cumulative[n]));
                row.push(sig6(c.cumulative_ew[n]));
            }
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&cfg.out.join("backtest.csv"), &header, &rows)?;
    let out = BacktestOutput {
        start,
        reports,
        comparison,
    };
    write_json(&cfg.out.join("backtest.json"), &out)?;
    Ok(out)
}

pub fn compare(cfg: &RunConfig) -> CliResult<Vec<DeltaMklReport>> {
    let dgps = match cfg.dgp.as_deref() {
        None | Some("both") => vec![ModelVariant::Odcfmsv, ModelVariant::Pg],
        Some(s) => vec![parse_variant(s)?],
    };
    let mut reports = Vec::new();
    for dgp in dgps {
        let dc = DeltaMklConfig {
            dgp,
            reps: cfg.reps.unwrap_or(10),
            t: cfg.t.unwrap_or(300),
            mcmc: cfg.mcmc.clone(),
            seed: cfg.seed,
        };
        reports.push(delta_mkl_experiment(&dc, &cfg.priors).ctx(&format!("compare {dgp}"))?);
    }
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.dgp.to_string(),
                r.values.len().to_string(),
                r.failures.len().to_string(),
                sig6(r.mean),
                sig6(r.se),
            ]
        })
        .collect();
    write_csv(&cfg.out.join("compare.csv"), &["dgp", "replications", "failures", "mean_delta_mkl", "se"], &rows)?;
    write_json(&cfg.out.join("compare.json"), &reports)?;
    Ok(reports)
}

pub fn evalcorr(cfg: &RunConfig, input: Option<&Path>, window: usize) -> CliResult<()> {
    let path = input
        .or(cfg.factors.as_deref())
        .ok_or_else(|| CliError::Usage("--input or --factors is required".into()))?;
    let table = ingest_csv(path, cfg.rescale_percent)?;
    let rc = rolling_corr(&table.values, window).ctx("evalcorr")?;
    let mut header = vec!["t".to_string()];
    header.extend(rc.pairs.iter().map(|&(i, j)| format!("{}:{}", table.names[i], table.names[j])));
    let rows: Vec<Vec<String>> = rc
        .values
        .row_iter()
        .enumerate()
        .map(|(t, r)| std::iter::once((t + 1).to_string()).chain(r.iter().map(|v| sig6(*v))).collect())
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&cfg.out.join("rolling_corr.csv"), &header, &rows)
}
