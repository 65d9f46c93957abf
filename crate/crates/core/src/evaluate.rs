//! Error measures for smoothed and forecast covariances, and the
//! replicated true-versus-wrong model comparison.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{run_chain, ChainDraws, McmcConfig, VAR_Z};
use crate::matrixdist::{cholesky_lower, correlation_of, log_det_from_cholesky, lower_inverse};
use crate::model::{ModelState, ModelVariant, PriorConfig, TrueParams};

/// Mean absolute deviation of two equally long series.
pub fn mae_series(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::Dimension(format!("series of length {} and {}", estimate.len(), truth.len())));
    }
    if estimate.is_empty() {
        return Err(Error::Empty("empty series".into()));
    }
    Ok(estimate.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / estimate.len() as f64)
}

/// Frobenius norm of the difference.
pub fn frobenius_error(truth: &DMatrix<f64>, est: &DMatrix<f64>) -> Result<f64> {
    if truth.shape() != est.shape() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", truth.shape(), est.shape())));
    }
    Ok((truth - est).norm())
}

/// Frobenius error averaged over forecast periods.
pub fn fn_mean(truth: &[DMatrix<f64>], est: &[DMatrix<f64>]) -> Result<f64> {
    if truth.len() != est.len() {
        return Err(Error::Dimension("paths differ in length".into()));
    }
    if truth.is_empty() {
        return Err(Error::Empty("empty path".into()));
    }
    let mut total = 0.0;
    for (a, b) in truth.iter().zip(est) {
        total += frobenius_error(a, b)?;
    }
    Ok(total / truth.len() as f64)
}

/// `KL(N(0, Σ⁰) ‖ N(0, Σ̂))`.
pub fn kl_normal(sigma0: &DMatrix<f64>, est: &DMatrix<f64>) -> Result<f64> {
    if sigma0.shape() != est.shape() || !sigma0.is_square() {
        return Err(Error::Dimension("KL needs two square matrices of one size".into()));
    }
    let p = sigma0.nrows() as f64;
    let l0 = cholesky_lower(sigma0)?;
    let l1 = cholesky_lower(est)?;
    // tr(Σ̂⁻¹Σ⁰) = ‖L̂⁻¹L⁰‖²
    let m = lower_inverse(&l1) * &l0;
    let kl = -0.5 * p + 0.5 * m.norm_squared() - 0.5 * log_det_from_cholesky(&l0) + 0.5 * log_det_from_cholesky(&l1);
    Ok(kl.max(0.0))
}

/// Time average of `kl_normal` along two covariance paths.
pub fn mkl(truth: &[DMatrix<f64>], est: &[DMatrix<f64>]) -> Result<f64> {
    if truth.len() != est.len() {
        return Err(Error::Dimension("paths differ in length".into()));
    }
    if truth.is_empty() {
        return Err(Error::Empty("empty path".into()));
    }
    let mut total = 0.0;
    for (a, b) in truth.iter().zip(est) {
        total += kl_normal(a, b)?;
    }
    Ok(total / truth.len() as f64)
}

/// Return covariance `B·R_t·Bᵀ + Ω_t` of a model state at every period.
pub fn return_cov_path(state: &ModelState, variant: ModelVariant) -> Result<Vec<DMatrix<f64>>> {
    let q = state.q();
    state
        .p_path
        .iter()
        .enumerate()
        .map(|(t, pt)| {
            let r = match variant {
                ModelVariant::Pg => pt.as_matrix().clone(),
                _ => {
                    let c = correlation_of(pt.as_matrix())?;
                    let sd: Vec<f64> = (0..q).map(|i| (0.5 * state.h[(t, i)]).exp()).collect();
                    DMatrix::from_fn(q, q, |a, b| sd[a] * c[(a, b)] * sd[b])
                }
            };
            let mut cov = &state.b * r * state.b.transpose();
            for j in 0..cov.nrows() {
                cov[(j, j)] += match variant {
                    ModelVariant::SvErr => state.error_h[(t, j)].exp(),
                    _ => state.omega[j],
                };
            }
            Ok(cov)
        })
        .collect()
}

/// `1.645·(wᵀΣ_t w)^{1/2}` along a covariance path.
pub fn var_path(covs: &[DMatrix<f64>], w: &[f64]) -> Result<Vec<f64>> {
    let wv = DVector::from_column_slice(w);
    covs.iter()
        .map(|c| {
            if c.nrows() != w.len() {
                return Err(Error::Dimension(format!("{} weights for {} series", w.len(), c.nrows())));
            }
            Ok(VAR_Z * (wv.transpose() * c * &wv)[0].max(0.0).sqrt())
        })
        .collect()
}

/// Smoothing accuracy of one fit against the simulated truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub mae_rho: f64,
    pub mae_var: f64,
    pub mkl: f64,
    pub true_rho: Vec<f64>,
    pub est_rho: Vec<f64>,
    pub true_var: Vec<f64>,
    pub est_var: Vec<f64>,
}

/// Compares the posterior-mean paths of a fit with the true paths of the
/// state the data were simulated from.
pub fn smoothing_report(truth: &ModelState, truth_variant: ModelVariant, draws: &ChainDraws) -> Result<SmoothingReport> {
    let true_cov = return_cov_path(truth, truth_variant)?;
    let w = &draws.paths.weights;
    let true_var = var_path(&true_cov, w)?;
    let est_var = draws.paths.value_at_risk();
    let (true_rho, est_rho) = if truth.q() >= 2 {
        let rho = truth
            .p_path
            .iter()
            .map(|p| correlation_of(p.as_matrix()).map(|c| c[(1, 0)]))
            .collect::<Result<Vec<_>>>()?;
        (rho, draws.paths.correlation(1, 0))
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(SmoothingReport {
        mae_rho: if true_rho.is_empty() { 0.0 } else { mae_series(&est_rho, &true_rho)? },
        mae_var: mae_series(&est_var, &true_var)?,
        mkl: mkl(&true_cov, &draws.paths.return_cov)?,
        true_rho,
        est_rho,
        true_var,
        est_var,
    })
}

/// Forecast-accuracy summary over a backtest, both models against a
/// realized covariance proxy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub mae_var: f64,
    pub fn_error: f64,
    /// Ratios of the comparison model's errors to this model's.
    pub ratio_mae_var: Option<f64>,
    pub ratio_fn: Option<f64>,
}

/// Errors of forecast covariances (and their VaR) against proxies.
pub fn forecast_performance(truth: &[DMatrix<f64>], est: &[DMatrix<f64>], w: &[f64]) -> Result<PerformanceReport> {
    Ok(PerformanceReport {
        mae_var: mae_series(&var_path(est, w)?, &var_path(truth, w)?)?,
        fn_error: fn_mean(truth, est)?,
        ratio_mae_var: None,
        ratio_fn: None,
    })
}

/// Adds the ratios `other / this` to a report.
pub fn with_ratios(mut this: PerformanceReport, other: &PerformanceReport) -> PerformanceReport {
    this.ratio_mae_var = Some(other.mae_var / this.mae_var);
    this.ratio_fn = Some(other.fn_error / this.fn_error);
    this
}

/// Covariance of the rows of `x` (one period's daily returns) scaled by
/// `n/(n − 1)`: `(1/(n − 1))·Σ (r − r̄)(r − r̄)ᵀ`.
pub fn realized_cov(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 rows, got {n}")));
    }
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    Ok(centered.transpose() * centered / (n - 1) as f64)
}

/// Rolling pairwise correlations, one column per pair `(i, j)`, `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingCorr {
    pub pairs: Vec<(usize, usize)>,
    /// T × number of pairs.
    pub values: DMatrix<f64>,
}

/// Correlations over the window `[t − r, t + r]`, truncated at both ends
/// of the sample.
pub fn rolling_corr(x: &DMatrix<f64>, r: usize) -> Result<RollingCorr> {
    let (t_len, q) = x.shape();
    if r < 1 {
        return Err(Error::InvalidParameter("window half-width must be at least 1".into()));
    }
    if 2 * r + 1 > t_len {
        return Err(Error::InvalidParameter(format!("window of {} rows exceeds T = {t_len}", 2 * r + 1)));
    }
    let pairs: Vec<(usize, usize)> = (0..q).flat_map(|i| (i + 1..q).map(move |j| (i, j))).collect();
    let mut values = DMatrix::<f64>::zeros(t_len, pairs.len());
    for t in 0..t_len {
        let lo = t.saturating_sub(r);
        let hi = (t + r).min(t_len - 1);
        let win = x.rows(lo, hi - lo + 1);
        let mean = win.row_mean();
        for (c, &(i, j)) in pairs.iter().enumerate() {
            let (mut sij, mut sii, mut sjj) = (0.0, 0.0, 0.0);
            for row in 0..win.nrows() {
                let a = win[(row, i)] - mean[i];
                let b = win[(row, j)] - mean[j];
                sij += a * b;
                sii += a * a;
                sjj += b * b;
            }
            values[(t, c)] = if sii > 0.0 && sjj > 0.0 {
                (sij / (sii * sjj).sqrt()).clamp(-1.0, 1.0)
            } else {
                f64::NAN
            };
        }
    }
    Ok(RollingCorr { pairs, values })
}

/// Settings of the replicated true-versus-wrong comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaMklConfig {
    pub dgp: ModelVariant,
    pub reps: usize,
    pub t: usize,
    pub mcmc: McmcConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaMklReport {
    pub dgp: ModelVariant,
    /// `MKL(wrong) − MKL(true)` per successful replication.
    pub values: Vec<f64>,
    pub mean: f64,
    pub se: f64,
    /// Replications whose simulation or fits failed.
    pub failures: Vec<(usize, String)>,
}

fn replication_seed(seed: u64, rep: usize) -> u64 {
    seed ^ (rep as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// One replication: simulate from the DGP, fit O-DCFMSV and PG, and
/// return `MKL(wrong) − MKL(true)` of their posterior-mean return
/// covariance paths.
pub fn delta_mkl_replication(config: &DeltaMklConfig, priors: &PriorConfig, rep: usize) -> Result<f64> {
    let seed = replication_seed(config.seed, rep);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sim = TrueParams::paper_dgp(config.dgp).simulate(config.t, &mut rng)?;
    let truth = return_cov_path(&sim.state, config.dgp)?;
    let wrong = match config.dgp {
        ModelVariant::Pg => ModelVariant::Odcfmsv,
        _ => ModelVariant::Pg,
    };
    let fit = |variant: ModelVariant, k: u64| -> Result<f64> {
        let mcmc = McmcConfig {
            variant,
            seed: seed.wrapping_add(k),
            log_joint: false,
            ..config.mcmc.clone()
        };
        let draws = run_chain(&sim.data, priors, &mcmc)?;
        mkl(&truth, &draws.paths.return_cov)
    };
    let (m_true, m_wrong) = rayon::join(|| fit(config.dgp, 1), || fit(wrong, 2));
    Ok(m_wrong? - m_true?)
}

/// Replicates [`delta_mkl_replication`] in parallel; failed replications
/// are recorded and excluded.
pub fn delta_mkl_experiment(config: &DeltaMklConfig, priors: &PriorConfig) -> Result<DeltaMklReport> {
    if config.reps == 0 {
        return Err(Error::InvalidParameter("need at least one replication".into()));
    }
    let results: Vec<(usize, Result<f64>)> = (0..config.reps)
        .into_par_iter()
        .map(|rep| (rep, delta_mkl_replication(config, priors, rep)))
        .collect();
    let mut values = Vec::new();
    let mut failures = Vec::new();
    for (rep, r) in results {
        match r {
            Ok(v) => values.push(v),
            Err(e) => failures.push((rep, e.to_string())),
        }
    }
    let (mean, se) = mean_and_se(&values);
    Ok(DeltaMklReport {
        dgp: config.dgp,
        values,
        mean,
        se,
        failures,
    })
}

/// Mean and standard error of the mean (NaN when undefined).
pub fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
