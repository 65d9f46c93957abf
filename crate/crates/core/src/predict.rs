//! One-step-ahead predictive distributions: covariance draws, value at risk,
//! log predictive scores and predictive Bayes factors.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{run_chain, ChainDraws, McmcConfig, PredictiveState, VAR_Z};
use crate::matrixdist::{
    cholesky_lower, correlation_of, sample_mvn_root, sample_wishart, spd_inverse, symmetrized, SpdMatrix,
};
use crate::model::{FactorDataset, ModelVariant, PriorConfig};

/// One draw from the predictive distribution of period `T + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDraw {
    /// Factor variances `exp(h_{T+1})`; empty under PG.
    pub v: Vec<f64>,
    /// Correlation of `P_{T+1}`.
    pub sigma_eps: DMatrix<f64>,
    /// Factor covariance `V^{1/2}·Σ_ε·V^{1/2}`, or `P_{T+1}` under PG.
    pub r: DMatrix<f64>,
    pub f: DVector<f64>,
    pub b: DMatrix<f64>,
    /// Error variances for `T + 1`.
    pub omega: Vec<f64>,
    /// `B·R·Bᵀ + Ω`.
    pub return_cov: DMatrix<f64>,
}

/// Draws `P_{T+1}` by one transition from `P_T`.
fn draw_next_p<R: Rng + ?Sized>(state: &PredictiveState, rng: &mut R) -> Result<SpdMatrix> {
    let scale = state.corr.scale(&state.p_last)?;
    let x = sample_wishart(state.corr.k, &scale, rng)?;
    let p = spd_inverse(x.as_matrix()).map_err(|e| Error::Numerical {
        what: format!("inverting predictive Wishart draw: {e}"),
        t: 0,
    })?;
    SpdMatrix::new(symmetrized(p))
}

fn draw_log_vol<R: Rng + ?Sized>(sv: &crate::model::SvParams, h_last: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sv.predictive_mean(h_last) + sv.sigma_eta_sq.sqrt() * z
}

/// Predictive factor covariance of the SV variants, `R_{T+1}` together with
/// `V_{T+1}` and `Σ_ε,T+1`.
pub fn draw_predictive_factor_cov_o<R: Rng + ?Sized>(
    state: &PredictiveState,
    rng: &mut R,
) -> Result<(Vec<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let q = state.corr.dim();
    if state.factor_sv.len() != q || state.h_last.len() != q {
        return Err(Error::Dimension("draw has no factor log-volatilities".into()));
    }
    let v: Vec<f64> = (0..q)
        .map(|i| draw_log_vol(&state.factor_sv[i], state.h_last[i], rng).exp())
        .collect();
    let p = draw_next_p(state, rng)?;
    let c = correlation_of(p.as_matrix())?;
    let r = DMatrix::from_fn(q, q, |a, b| if a == b { v[a] } else { (v[a] * v[b]).sqrt() * c[(a, b)] });
    Ok((v, c, r))
}

/// Full predictive draw for one stored sweep.
pub fn draw_predictive<R: Rng + ?Sized>(
    state: &PredictiveState,
    variant: ModelVariant,
    rng: &mut R,
) -> Result<PredictiveDraw> {
    let (v, sigma_eps, r) = match variant {
        ModelVariant::Pg => {
            let p = draw_next_p(state, rng)?;
            let c = correlation_of(p.as_matrix())?;
            (Vec::new(), c, p.into_inner())
        }
        _ => draw_predictive_factor_cov_o(state, rng)?,
    };
    let omega: Vec<f64> = match variant {
        ModelVariant::SvErr => state
            .error_sv
            .iter()
            .zip(&state.error_h_last)
            .map(|(sv, h)| draw_log_vol(sv, *h, rng).exp())
            .collect(),
        _ => state.omega.clone(),
    };
    let f = sample_mvn_root(&cholesky_lower(&r)?, rng);
    let mut return_cov = &state.b * &r * state.b.transpose();
    for (j, w) in omega.iter().enumerate() {
        return_cov[(j, j)] += w;
    }
    Ok(PredictiveDraw {
        v,
        sigma_eps,
        r,
        f,
        b: state.b.clone(),
        omega,
        return_cov: symmetrized(return_cov),
    })
}

/// One predictive draw per stored sweep of a chain.
pub fn draw_predictive_all<R: Rng + ?Sized>(draws: &ChainDraws, rng: &mut R) -> Result<Vec<PredictiveDraw>> {
    if draws.states.is_empty() {
        return Err(Error::Empty("chain stored no predictive states".into()));
    }
    draws.states.iter().map(|s| draw_predictive(s, draws.variant, rng)).collect()
}

/// `Σ̂_{T+1}`, the average of `B·R·Bᵀ + Ω` over draws.
pub fn predictive_return_cov(draws: &[PredictiveDraw]) -> Result<DMatrix<f64>> {
    let first = draws.first().ok_or_else(|| Error::Empty("no predictive draws".into()))?;
    let mut acc = DMatrix::<f64>::zeros(first.return_cov.nrows(), first.return_cov.ncols());
    for d in draws {
        acc += &d.return_cov;
    }
    Ok(acc / draws.len() as f64)
}

/// `1.645·(M⁻¹ Σ_l wᵀΣ^{(l)}w)^{1/2}`.
pub fn var_estimate(cov_draws: &[DMatrix<f64>], w: &[f64]) -> Result<f64> {
    if cov_draws.is_empty() {
        return Err(Error::Empty("no covariance draws".into()));
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("portfolio weights".into()));
    }
    let wv = DVector::from_column_slice(w);
    let mut total = 0.0;
    for c in cov_draws {
        if c.nrows() != w.len() {
            return Err(Error::Dimension(format!("{} weights for a {}-dim covariance", w.len(), c.nrows())));
        }
        total += (wv.transpose() * c * &wv)[0];
    }
    Ok(VAR_Z * (total / cov_draws.len() as f64).max(0.0).sqrt())
}

/// `log((1/M) Σ exp(x_l))` with a max shift. Returns `-∞` when every term
/// is `-∞`.
pub fn log_mean_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || x.is_empty() {
        return f64::NEG_INFINITY;
    }
    let s: f64 = x.iter().map(|v| (v - m).exp()).sum();
    m + (s / x.len() as f64).ln()
}

/// Log predictive score of the return vector: the log of the average of
/// `N_p(y | B f, Ω)` over draws.
pub fn lps(y_next: &DVector<f64>, draws: &[PredictiveDraw]) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::Empty("no predictive draws".into()));
    }
    let terms = draws
        .iter()
        .map(|d| {
            if d.omega.len() != y_next.len() {
                return Err(Error::Dimension("return vector length".into()));
            }
            let mean = &d.b * &d.f;
            Ok(y_next
                .iter()
                .zip(mean.iter())
                .zip(&d.omega)
                .map(|((y, m), v)| crate::matrixdist::normal_logpdf(*y, *m, *v))
                .sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(log_mean_exp(&terms))
}

/// Log predictive score of the portfolio return `wᵀy`.
pub fn lps_ew(y_next: &DVector<f64>, w: &[f64], draws: &[PredictiveDraw]) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::Empty("no predictive draws".into()));
    }
    if w.len() != y_next.len() {
        return Err(Error::Dimension(format!("{} weights for {} returns", w.len(), y_next.len())));
    }
    let wv = DVector::from_column_slice(w);
    let yp = wv.dot(y_next);
    let terms: Vec<f64> = draws
        .iter()
        .map(|d| {
            let mean = wv.dot(&(&d.b * &d.f));
            let var: f64 = w.iter().zip(&d.omega).map(|(wi, o)| wi * wi * o).sum();
            crate::matrixdist::normal_logpdf(yp, mean, var)
        })
        .collect();
    Ok(log_mean_exp(&terms))
}

/// `Σ_t [LPS_1(t) − LPS_0(t)]`.
pub fn cum_log_bayes_factor(lps_model1: &[f64], lps_model0: &[f64]) -> Result<f64> {
    if lps_model1.len() != lps_model0.len() {
        return Err(Error::Dimension(format!(
            "score series of length {} and {}",
            lps_model1.len(),
            lps_model0.len()
        )));
    }
    Ok(lps_model1.iter().zip(lps_model0).map(|(a, b)| a - b).sum())
}

/// Evidence category of a log Bayes factor of Model 1 against Model 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evidence {
    FavorModel0,
    BareMention,
    Positive,
    Strong,
    VeryStrong,
}

impl Evidence {
    pub fn label(self) -> &'static str {
        match self {
            Evidence::FavorModel0 => "favor Model 0",
            Evidence::BareMention => "not worth more than a bare mention",
            Evidence::Positive => "positive",
            Evidence::Strong => "strong",
            Evidence::VeryStrong => "very strong",
        }
    }
}

impl fmt::Display for Evidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Brackets `< 0`, `[0, 1)`, `[1, 3)`, `[3, 5)`, `≥ 5`.
pub fn evidence_label(log_bf: f64) -> Result<Evidence> {
    if log_bf.is_nan() {
        return Err(Error::NonFinite("log Bayes factor is NaN".into()));
    }
    Ok(if log_bf < 0.0 {
        Evidence::FavorModel0
    } else if log_bf < 1.0 {
        Evidence::BareMention
    } else if log_bf < 3.0 {
        Evidence::Positive
    } else if log_bf < 5.0 {
        Evidence::Strong
    } else {
        Evidence::VeryStrong
    })
}

/// Forecast of one period by one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPeriod {
    /// Zero-based row of the forecast target in the full dataset.
    pub index: usize,
    pub cov: DMatrix<f64>,
    pub var: f64,
    pub lps: f64,
    pub lps_ew: f64,
    /// The score underflowed to `-∞` even after shifting.
    pub underflow: bool,
}

/// Forecast of the return vector following the chain's sample.
pub fn forecast_period<R: Rng + ?Sized>(
    draws: &ChainDraws,
    y_next: &DVector<f64>,
    weights: &[f64],
    index: usize,
    rng: &mut R,
) -> Result<ForecastPeriod> {
    let pd = draw_predictive_all(draws, rng)?;
    let cov = predictive_return_cov(&pd)?;
    let covs: Vec<DMatrix<f64>> = pd.iter().map(|d| d.return_cov.clone()).collect();
    let var = var_estimate(&covs, weights)?;
    let l = lps(y_next, &pd)?;
    let le = lps_ew(y_next, weights, &pd)?;
    Ok(ForecastPeriod {
        index,
        cov,
        var,
        lps: l,
        lps_ew: le,
        underflow: l == f64::NEG_INFINITY || le == f64::NEG_INFINITY,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub variant: ModelVariant,
    pub periods: Vec<ForecastPeriod>,
}

impl ForecastReport {
    pub fn lps_series(&self) -> Vec<f64> {
        self.periods.iter().map(|p| p.lps).collect()
    }

    pub fn lps_ew_series(&self) -> Vec<f64> {
        self.periods.iter().map(|p| p.lps_ew).collect()
    }
}

/// Model 1 against Model 0 over a common set of forecast periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model1: ModelVariant,
    pub model0: ModelVariant,
    /// Running sums of the per-period LPS differences.
    pub cumulative: Vec<f64>,
    pub cumulative_ew: Vec<f64>,
    pub log_bf: f64,
    pub log_bf_ew: f64,
    pub evidence: Evidence,
    pub evidence_ew: Evidence,
}

pub fn compare_reports(model1: &ForecastReport, model0: &ForecastReport) -> Result<Comparison> {
    let running = |a: &[f64], b: &[f64]| -> Result<Vec<f64>> {
        (1..=a.len()).map(|n| cum_log_bayes_factor(&a[..n], &b[..n.min(b.len())])).collect()
    };
    let (l1, l0) = (model1.lps_series(), model0.lps_series());
    let (e1, e0) = (model1.lps_ew_series(), model0.lps_ew_series());
    let log_bf = cum_log_bayes_factor(&l1, &l0)?;
    let log_bf_ew = cum_log_bayes_factor(&e1, &e0)?;
    Ok(Comparison {
        model1: model1.variant,
        model0: model0.variant,
        cumulative: running(&l1, &l0)?,
        cumulative_ew: running(&e1, &e0)?,
        log_bf,
        log_bf_ew,
        evidence: evidence_label(log_bf)?,
        evidence_ew: evidence_label(log_bf_ew)?,
    })
}

/// Rolling-origin settings: the first fit uses rows `0..start`, and each
/// later period adds the realized row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub start: usize,
    pub periods: usize,
    pub mcmc: McmcConfig,
    pub weights: Vec<f64>,
}

/// Seed of the chain and predictive draws of one forecast period.
pub fn period_seed(seed: u64, period: usize, variant: ModelVariant) -> u64 {
    let v = match variant {
        ModelVariant::Odcfmsv => 1u64,
        ModelVariant::Pg => 2,
        ModelVariant::SvErr => 3,
    };
    seed ^ (period as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ v.wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

/// Refits the model at each forecast origin and scores the next row.
pub fn rolling_backtest(
    data: &FactorDataset,
    variant: ModelVariant,
    priors: &PriorConfig,
    config: &BacktestConfig,
) -> Result<ForecastReport> {
    if config.periods == 0 {
        return Err(Error::InvalidParameter("backtest needs at least one period".into()));
    }
    if config.start + config.periods > data.len() {
        return Err(Error::InvalidParameter(format!(
            "start {} + {} periods exceeds the {} rows",
            config.start,
            config.periods,
            data.len()
        )));
    }
    let mut periods = Vec::with_capacity(config.periods);
    for n in 0..config.periods {
        let origin = config.start + n;
        let sample = data.head(origin)?;
        let seed = period_seed(config.mcmc.seed, n, variant);
        let mcmc = McmcConfig {
            seed,
            variant,
            weights: Some(config.weights.clone()),
            ..config.mcmc.clone()
        };
        let draws = run_chain(&sample, priors, &mcmc)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(17));
        periods.push(forecast_period(&draws, &data.return_row(origin), &config.weights, origin, &mut rng)?);
    }
    Ok(ForecastReport { variant, periods })
}
