//! The full sampler: initialization, sweeps over every block in a fixed
//! order, storage of kept draws, posterior summaries and checkpoints.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixdist::{
    cholesky_lower, correlation_of, lower_inverse, sample_mvn_root, spd_inverse, symmetrized,
    SpdMatrix,
};
use crate::model::{
    log_joint, CorrDynParams, FactorDataset, ModelState, ModelVariant, PriorConfig, SvParams,
};
use crate::svsampler::{log_square_transform, sv_block, MixtureTable, SvBlockConfig, SvSeriesState};
use crate::wishartsampler::{
    sample_a, sample_d, sample_k, sample_pt, APrior, ArmsConfig, CorrContext, FactorObs, PtState,
    PtStep, TransitionStats,
};

pub mod geweke;

/// Normal quantile used for the 5% value at risk.
pub const VAR_Z: f64 = 1.645;

/// Run settings of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub kept: usize,
    pub thin: usize,
    pub seed: u64,
    pub variant: ModelVariant,
    /// Adapt the SV random-walk step sizes during burn-in.
    pub adapt: bool,
    /// Offset `c` of the log-square transform.
    pub offset: f64,
    /// Turn each SV update into a Metropolis–Hastings step that targets the
    /// exact model (cross-factor correlation and the true log χ²₁ law)
    /// instead of the mixture approximation.
    pub sv_correction: bool,
    /// Upper end of the `k` search interval is `q + k_span`.
    pub k_span: f64,
    /// Portfolio weights for the value-at-risk path; equal weights if unset.
    pub weights: Option<Vec<f64>>,
    /// Evaluate the joint log density at every stored draw.
    pub log_joint: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            burn_in: 10_000,
            kept: 10_000,
            thin: 1,
            seed: 0,
            variant: ModelVariant::Odcfmsv,
            adapt: true,
            offset: crate::svsampler::DEFAULT_OFFSET,
            sv_correction: false,
            k_span: 1000.0,
            weights: None,
            log_joint: true,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kept == 0 {
            return Err(Error::InvalidParameter("kept draws must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::InvalidParameter("thin must be at least 1".into()));
        }
        if !(self.offset > 0.0) {
            return Err(Error::InvalidParameter(format!("offset c = {}", self.offset)));
        }
        if !(self.k_span > 0.0) || !self.k_span.is_finite() {
            return Err(Error::InvalidParameter(format!("k span {}", self.k_span)));
        }
        Ok(())
    }

    pub fn total_sweeps(&self) -> usize {
        self.burn_in + self.kept
    }

    pub fn stored_draws(&self) -> usize {
        self.kept.div_ceil(self.thin)
    }
}

/// Everything the sampler updates, plus the per-series SV bookkeeping
/// (indicators and step sizes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub b: DMatrix<f64>,
    /// `σ_j²`; empty for the SV-on-errors variant.
    pub omega: Vec<f64>,
    pub factors: Vec<SvSeriesState>,
    pub errors: Vec<SvSeriesState>,
    pub p_path: Vec<SpdMatrix>,
    pub corr: CorrDynParams,
}

impl ChainState {
    /// Default starting point: ridge loadings, residual variances,
    /// constant log-volatilities at the log sample variances, `P_t = I`,
    /// `A = I`, `d = 0.5`, `k = q + 10`.
    pub fn initial(data: &FactorDataset, variant: ModelVariant) -> Result<Self> {
        let (t_len, p, q) = (data.len(), data.p(), data.q());
        let bc = b_conditional(&data.y, &data.f)?;
        let b = bc.mean;
        let resid = &data.y - &data.f * b.transpose();
        let resid_var: Vec<f64> = (0..p)
            .map(|j| (resid.column(j).norm_squared() / t_len as f64).max(1e-6))
            .collect();
        let sv_start = |v: f64| {
            let mu = v.max(1e-8).ln();
            SvSeriesState::new(SvParams { mu, phi: 0.95, sigma_eta_sq: 0.02 }, vec![mu; t_len])
        };
        let factors = if variant.has_factor_sv() {
            (0..q)
                .map(|i| sv_start(data.f.column(i).norm_squared() / t_len as f64))
                .collect()
        } else {
            Vec::new()
        };
        let (omega, errors) = match variant {
            ModelVariant::SvErr => (Vec::new(), resid_var.iter().map(|&v| sv_start(v)).collect()),
            _ => (resid_var, Vec::new()),
        };
        Ok(ChainState {
            b,
            omega,
            factors,
            errors,
            p_path: vec![SpdMatrix::identity(q); t_len],
            corr: CorrDynParams::new(SpdMatrix::identity(q), 0.5, q as f64 + 10.0)?,
        })
    }

    pub fn q(&self) -> usize {
        self.corr.dim()
    }

    pub fn p(&self) -> usize {
        self.b.nrows()
    }

    pub fn len(&self) -> usize {
        self.p_path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_path.is_empty()
    }

    /// Factor log-volatilities as a T×q matrix (T×0 without factor SV).
    pub fn h_matrix(&self) -> DMatrix<f64> {
        series_matrix(&self.factors, self.len())
    }

    pub fn error_h_matrix(&self) -> DMatrix<f64> {
        series_matrix(&self.errors, self.len())
    }

    pub fn model_state(&self) -> ModelState {
        ModelState {
            b: self.b.clone(),
            omega: self.omega.clone(),
            factor_sv: self.factors.iter().map(|s| s.sv).collect(),
            h: self.h_matrix(),
            error_sv: self.errors.iter().map(|s| s.sv).collect(),
            error_h: self.error_h_matrix(),
            p_path: self.p_path.clone(),
            corr: self.corr.clone(),
        }
    }

    /// Chain state positioned at a given model state (fresh indicators and
    /// step sizes).
    pub fn from_model(m: &ModelState) -> Self {
        let series = |sv: &[SvParams], h: &DMatrix<f64>| -> Vec<SvSeriesState> {
            sv.iter()
                .enumerate()
                .map(|(i, s)| SvSeriesState::new(*s, h.column(i).iter().copied().collect()))
                .collect()
        };
        ChainState {
            b: m.b.clone(),
            omega: m.omega.clone(),
            factors: series(&m.factor_sv, &m.h),
            errors: series(&m.error_sv, &m.error_h),
            p_path: m.p_path.clone(),
            corr: m.corr.clone(),
        }
    }
}

fn series_matrix(series: &[SvSeriesState], t_len: usize) -> DMatrix<f64> {
    DMatrix::from_fn(t_len, series.len(), |t, i| series[i].h[t])
}

/// Matrix-normal conditional of `B`: row `j` is
/// `N(mean_j, σ_j²·col_cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BConditional {
    pub mean: DMatrix<f64>,
    pub col_cov: DMatrix<f64>,
    pub col_cov_chol: DMatrix<f64>,
}

/// `Σ_B = (FᵀF + I)⁻¹`, `μ_B = YᵀF·Σ_B`.
pub fn b_conditional(y: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<BConditional> {
    if y.nrows() != f.nrows() {
        return Err(Error::Dimension("Y and F differ in length".into()));
    }
    let q = f.ncols();
    let prec = symmetrized(f.transpose() * f + DMatrix::<f64>::identity(q, q));
    let col_cov = spd_inverse(&prec).map_err(|e| Error::Numerical {
        what: format!("F'F + I not invertible: {e}"),
        t: 0,
    })?;
    let mean = y.transpose() * f * &col_cov;
    let col_cov_chol = cholesky_lower(&col_cov)?;
    Ok(BConditional {
        mean,
        col_cov,
        col_cov_chol,
    })
}

/// Draws `B | Y, F, Ω` from the matrix-normal conditional.
pub fn sample_b<R: Rng + ?Sized>(
    y: &DMatrix<f64>,
    f: &DMatrix<f64>,
    omega: &[f64],
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let bc = b_conditional(y, f)?;
    sample_b_from(&bc, omega, rng)
}

fn sample_b_from<R: Rng + ?Sized>(bc: &BConditional, omega: &[f64], rng: &mut R) -> Result<DMatrix<f64>> {
    let p = bc.mean.nrows();
    if omega.len() != p {
        return Err(Error::Dimension(format!("{} variances for {p} series", omega.len())));
    }
    let mut b = bc.mean.clone();
    for j in 0..p {
        let z = sample_mvn_root(&bc.col_cov_chol, rng) * omega[j].sqrt();
        for i in 0..b.ncols() {
            b[(j, i)] += z[i];
        }
    }
    Ok(b)
}

/// Shape and scale of `σ_j² | Y, F` with `B` integrated out:
/// `IG((ν0 + T)/2, (ν0·s0 + y_jᵀ(I + FFᵀ)⁻¹y_j)/2)`.
pub fn sigma_sq_conditional(y: &DMatrix<f64>, f: &DMatrix<f64>, priors: &PriorConfig) -> Result<Vec<(f64, f64)>> {
    let bc = b_conditional(y, f)?;
    Ok(sigma_sq_params(y, f, &bc, priors))
}

fn sigma_sq_params(y: &DMatrix<f64>, f: &DMatrix<f64>, bc: &BConditional, priors: &PriorConfig) -> Vec<(f64, f64)> {
    let t_len = y.nrows() as f64;
    let fty = f.transpose() * y;
    (0..y.ncols())
        .map(|j| {
            // y'(I + FF')⁻¹y = y'y - y'F(F'F + I)⁻¹F'y
            let fy = fty.column(j);
            let quad = y.column(j).norm_squared() - (fy.transpose() * &bc.col_cov * fy)[0];
            (
                0.5 * (priors.nu0 + t_len),
                0.5 * (priors.nu0 * priors.s0 + quad.max(0.0)),
            )
        })
        .collect()
}

fn inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0)
        .map_err(|e| Error::InvalidParameter(format!("gamma shape {shape}: {e}")))?
        .sample(rng);
    let v = scale / g;
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::NonFinite(format!("inverse gamma draw ({shape}, {scale})")));
    }
    Ok(v)
}

/// Draws every `σ_j²` from its conditional with `B` integrated out.
pub fn sample_sigma_sq<R: Rng + ?Sized>(
    y: &DMatrix<f64>,
    f: &DMatrix<f64>,
    priors: &PriorConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    sigma_sq_conditional(y, f, priors)?
        .into_iter()
        .map(|(a, s)| inverse_gamma(a, s, rng))
        .collect()
}

/// Mean and covariance of `b_j | y_j, F, Λ_j` under `b_j ~ N(0, c0²I)`:
/// `Σ = (c0⁻²I + FᵀΛ⁻¹F)⁻¹`, `μ = Σ·FᵀΛ⁻¹y_j`.
pub fn bj_conditional(
    y_j: &DVector<f64>,
    f: &DMatrix<f64>,
    lambda: &[f64],
    c0: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (t_len, q) = (f.nrows(), f.ncols());
    if y_j.len() != t_len || lambda.len() != t_len {
        return Err(Error::Dimension("b_j conditional inputs differ in length".into()));
    }
    let mut prec = DMatrix::<f64>::identity(q, q) / (c0 * c0);
    let mut rhs = DVector::<f64>::zeros(q);
    for t in 0..t_len {
        let w = 1.0 / lambda[t];
        for a in 0..q {
            rhs[a] += w * f[(t, a)] * y_j[t];
            for b in 0..q {
                prec[(a, b)] += w * f[(t, a)] * f[(t, b)];
            }
        }
    }
    let cov = spd_inverse(&symmetrized(prec))?;
    Ok((&cov * rhs, cov))
}

/// Draws the loadings of one series when its error variance is stochastic.
pub fn sample_bj_sverr<R: Rng + ?Sized>(
    y_j: &DVector<f64>,
    f: &DMatrix<f64>,
    lambda: &[f64],
    c0: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let (mean, cov) = bj_conditional(y_j, f, lambda, c0)?;
    Ok(mean + sample_mvn_root(&cholesky_lower(&cov)?, rng))
}

/// Parameter names in storage order.
pub fn param_names(variant: ModelVariant, p: usize, q: usize) -> Vec<String> {
    let mut names = Vec::new();
    for i in 1..=q {
        for j in 1..=p {
            names.push(format!("B[{j},{i}]"));
        }
    }
    match variant {
        ModelVariant::SvErr => {
            for j in 1..=p {
                names.push(format!("mu_e[{j}]"));
            }
            for j in 1..=p {
                names.push(format!("phi_e[{j}]"));
            }
            for j in 1..=p {
                names.push(format!("sigma_eta_e[{j}]"));
            }
        }
        _ => {
            for j in 1..=p {
                names.push(format!("sigma2[{j}]"));
            }
        }
    }
    if variant.has_factor_sv() {
        for i in 1..=q {
            names.push(format!("mu[{i}]"));
        }
        for i in 1..=q {
            names.push(format!("phi[{i}]"));
        }
        for i in 1..=q {
            names.push(format!("sigma_eta[{i}]"));
        }
    }
    for i in 1..=q {
        for j in i..=q {
            names.push(format!("a[{i},{j}]"));
        }
    }
    names.push("d".into());
    names.push("k".into());
    names
}

/// Parameter values in the order of [`param_names`].
pub fn param_values(m: &ModelState, variant: ModelVariant) -> Vec<f64> {
    let mut v: Vec<f64> = m.b.iter().copied().collect();
    match variant {
        ModelVariant::SvErr => {
            v.extend(m.error_sv.iter().map(|s| s.mu));
            v.extend(m.error_sv.iter().map(|s| s.phi));
            v.extend(m.error_sv.iter().map(|s| s.sigma_eta_sq.sqrt()));
        }
        _ => v.extend(m.omega.iter().copied()),
    }
    if variant.has_factor_sv() {
        v.extend(m.factor_sv.iter().map(|s| s.mu));
        v.extend(m.factor_sv.iter().map(|s| s.phi));
        v.extend(m.factor_sv.iter().map(|s| s.sigma_eta_sq.sqrt()));
    }
    let a = m.corr.a.as_matrix();
    for i in 0..a.nrows() {
        for j in i..a.ncols() {
            v.push(a[(i, j)]);
        }
    }
    v.push(m.corr.d);
    v.push(m.corr.k);
    v
}

/// What a forecast needs from one stored draw: parameters and the last
/// period's latent states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveState {
    pub b: DMatrix<f64>,
    pub omega: Vec<f64>,
    pub factor_sv: Vec<SvParams>,
    pub h_last: Vec<f64>,
    pub error_sv: Vec<SvParams>,
    pub error_h_last: Vec<f64>,
    pub p_last: SpdMatrix,
    pub corr: CorrDynParams,
}

/// Posterior means along the sample path, accumulated online.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMeans {
    pub n: usize,
    pub weights: Vec<f64>,
    /// Mean of `Σ_ε,t` (of `corr(P_t)` under PG).
    pub factor_corr: Vec<DMatrix<f64>>,
    /// Mean fitted return covariance `B·R_t·Bᵀ + Ω_t`.
    pub return_cov: Vec<DMatrix<f64>>,
    /// Mean portfolio standard deviation `(wᵀΣ_t w)^{1/2}`.
    pub portfolio_sd: Vec<f64>,
    /// Mean factor log-volatilities (T×q, empty under PG).
    pub h: DMatrix<f64>,
}

impl PathMeans {
    fn new(t_len: usize, p: usize, q: usize, weights: Vec<f64>, with_h: bool) -> Self {
        PathMeans {
            n: 0,
            weights,
            factor_corr: vec![DMatrix::zeros(q, q); t_len],
            return_cov: vec![DMatrix::zeros(p, p); t_len],
            portfolio_sd: vec![0.0; t_len],
            h: DMatrix::zeros(t_len, if with_h { q } else { 0 }),
        }
    }

    fn add(&mut self, state: &ChainState, variant: ModelVariant) -> Result<()> {
        self.n += 1;
        let w = 1.0 / self.n as f64;
        let wv = DVector::from_column_slice(&self.weights);
        for (t, pt) in state.p_path.iter().enumerate() {
            let (c, r) = fitted_factor_cov(state, variant, t, pt)?;
            let mut cov = &state.b * &r * state.b.transpose();
            for j in 0..cov.nrows() {
                cov[(j, j)] += match variant {
                    ModelVariant::SvErr => state.errors[j].h[t].exp(),
                    _ => state.omega[j],
                };
            }
            let sd = (wv.transpose() * &cov * &wv)[0].max(0.0).sqrt();
            let dc = (c - &self.factor_corr[t]) * w;
            self.factor_corr[t] += dc;
            let dv = (cov - &self.return_cov[t]) * w;
            self.return_cov[t] += dv;
            self.portfolio_sd[t] += (sd - self.portfolio_sd[t]) * w;
        }
        if self.h.ncols() > 0 {
            let h = state.h_matrix();
            self.h += (h - &self.h) * w;
        }
        Ok(())
    }

    /// `ρ̂_t` for the factor pair `(i, j)`.
    pub fn correlation(&self, i: usize, j: usize) -> Vec<f64> {
        self.factor_corr.iter().map(|c| c[(i, j)]).collect()
    }

    /// Smoothed 5% value at risk `1.645·σ̂_{P_t}`.
    pub fn value_at_risk(&self) -> Vec<f64> {
        self.portfolio_sd.iter().map(|s| VAR_Z * s).collect()
    }
}

/// Factor correlation and factor covariance at period `t` under the state.
fn fitted_factor_cov(
    state: &ChainState,
    variant: ModelVariant,
    t: usize,
    pt: &SpdMatrix,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let c = correlation_of(pt.as_matrix())?;
    let r = match variant {
        ModelVariant::Pg => pt.as_matrix().clone(),
        _ => {
            let q = c.nrows();
            let sd: Vec<f64> = (0..q).map(|i| (0.5 * state.factors[i].h[t]).exp()).collect();
            DMatrix::from_fn(q, q, |a, b| sd[a] * c[(a, b)] * sd[b])
        }
    };
    Ok((c, r))
}

/// Acceptance bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub pt_proposed: u64,
    pub pt_accepted: u64,
    pub pt_failed: u64,
    /// `(φ, σ²_η)` random-walk acceptance rate per factor, then per error series.
    pub sv_acceptance: Vec<f64>,
    /// Acceptance rate of the exact-model correction per series (when enabled).
    pub sv_correction_acceptance: Vec<f64>,
}

impl Diagnostics {
    pub fn pt_acceptance(&self) -> f64 {
        if self.pt_proposed == 0 {
            0.0
        } else {
            self.pt_accepted as f64 / self.pt_proposed as f64
        }
    }
}

/// Stored output of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDraws {
    pub variant: ModelVariant,
    pub names: Vec<String>,
    /// One row per stored draw, columns as `names`.
    pub values: Vec<Vec<f64>>,
    pub log_joint: Vec<f64>,
    pub states: Vec<PredictiveState>,
    pub paths: PathMeans,
    pub diagnostics: Diagnostics,
}

impl ChainDraws {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// All stored draws of the named parameter.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(self.values.iter().map(|r| r[i]).collect())
    }
}

/// Mean and equal-tailed 95% interval of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub params: Vec<ParamSummary>,
    /// `ρ̂_t` for the first factor pair (empty when q = 1).
    pub rho: Vec<f64>,
    /// Smoothed 5% VaR path.
    pub var: Vec<f64>,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Percentile with linear interpolation between order statistics
/// (position `p·(n - 1)` in the sorted sample).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean and 2.5 / 97.5 percentiles of a sample.
pub fn summarize_sample(name: &str, x: &[f64]) -> Result<ParamSummary> {
    if x.is_empty() {
        return Err(Error::Empty(format!("no draws of {name}")));
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(ParamSummary {
        name: name.to_string(),
        mean,
        lower: percentile(&sorted, 0.025),
        upper: percentile(&sorted, 0.975),
    })
}

pub fn summarize(draws: &ChainDraws) -> Result<PosteriorSummary> {
    if draws.is_empty() {
        return Err(Error::Empty("chain has no stored draws".into()));
    }
    let params = draws
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let x: Vec<f64> = draws.values.iter().map(|r| r[i]).collect();
            summarize_sample(name, &x)
        })
        .collect::<Result<Vec<_>>>()?;
    let q = draws.paths.factor_corr.first().map_or(0, |c| c.nrows());
    Ok(PosteriorSummary {
        params,
        rho: if q >= 2 { draws.paths.correlation(1, 0) } else { Vec::new() },
        var: draws.paths.value_at_risk(),
    })
}

/// Serializable snapshot from which a chain can be resumed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: McmcConfig,
    pub priors: PriorConfig,
    pub data_fingerprint: u64,
    pub sweep: usize,
    pub rng: ChaCha8Rng,
    pub state: ChainState,
    /// Cached decompositions of the `P_t` path, so that a resumed chain
    /// continues bit for bit.
    pub pt: Vec<PtState>,
    pub draws: ChainDraws,
}

/// FNV-1a hash of the data values, used to refuse resuming on other data.
pub fn data_fingerprint(data: &FactorDataset) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let dims = [data.len() as u64, data.p() as u64, data.q() as u64];
    let bytes = dims
        .iter()
        .flat_map(|d| d.to_le_bytes())
        .chain(data.y.iter().chain(data.f.iter()).flat_map(|v| v.to_bits().to_le_bytes()));
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

/// A running chain.
pub struct Chain {
    data: FactorDataset,
    priors: PriorConfig,
    config: McmcConfig,
    rng: ChaCha8Rng,
    state: ChainState,
    sweep: usize,
    draws: ChainDraws,
    pt: Vec<PtState>,
    fstar: Vec<Vec<f64>>,
    table: MixtureTable,
}

impl Chain {
    pub fn new(data: FactorDataset, priors: PriorConfig, config: McmcConfig) -> Result<Self> {
        let state = ChainState::initial(&data, config.variant)?;
        Self::with_state(data, priors, config, state)
    }

    /// A chain started from a given state, e.g. a draw from the prior.
    pub fn with_state(data: FactorDataset, priors: PriorConfig, config: McmcConfig, state: ChainState) -> Result<Self> {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let draws = empty_draws(&data, &config);
        Self::assemble(data, priors, config, rng, state, 0, draws, None)
    }

    pub fn resume(checkpoint: Checkpoint, data: FactorDataset) -> Result<Self> {
        if data_fingerprint(&data) != checkpoint.data_fingerprint {
            return Err(Error::Checkpoint("data differ from the checkpointed run".into()));
        }
        Self::assemble(
            data,
            checkpoint.priors,
            checkpoint.config,
            checkpoint.rng,
            checkpoint.state,
            checkpoint.sweep,
            checkpoint.draws,
            Some(checkpoint.pt),
        )
    }

    fn assemble(
        data: FactorDataset,
        priors: PriorConfig,
        config: McmcConfig,
        rng: ChaCha8Rng,
        state: ChainState,
        sweep: usize,
        draws: ChainDraws,
        pt: Option<Vec<PtState>>,
    ) -> Result<Self> {
        config.validate()?;
        priors.validate()?;
        if state.len() != data.len() || state.p() != data.p() || state.q() != data.q() {
            return Err(Error::Dimension("chain state does not match the dataset".into()));
        }
        if let Some(w) = &config.weights {
            if w.len() != data.p() {
                return Err(Error::Dimension(format!("{} weights for {} series", w.len(), data.p())));
            }
        }
        let pt = match pt {
            Some(pt) if pt.len() == state.len() => pt,
            Some(_) => return Err(Error::Checkpoint("P_t cache has the wrong length".into())),
            None => state
                .p_path
                .iter()
                .map(|p| PtState::new(p.clone()))
                .collect::<Result<Vec<_>>>()?,
        };
        let fstar = if config.variant.has_factor_sv() {
            (0..data.q())
                .map(|i| log_square_transform(data.f.column(i).as_slice(), config.offset))
                .collect()
        } else {
            Vec::new()
        };
        Ok(Chain {
            data,
            priors,
            config,
            rng,
            state,
            sweep,
            draws,
            pt,
            fstar,
            table: MixtureTable::ksc(),
        })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn data(&self) -> &FactorDataset {
        &self.data
    }

    pub fn config(&self) -> &McmcConfig {
        &self.config
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweep
    }

    pub fn is_finished(&self) -> bool {
        self.sweep >= self.config.total_sweeps()
    }

    pub fn draws(&self) -> &ChainDraws {
        &self.draws
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            priors: self.priors.clone(),
            data_fingerprint: data_fingerprint(&self.data),
            sweep: self.sweep,
            rng: self.rng.clone(),
            state: self.state.clone(),
            pt: self.pt.clone(),
            draws: self.draws.clone(),
        }
    }

    /// Swaps the data (same dimensions) keeping the current state. Used by
    /// the joint-distribution test, which redraws the data between sweeps.
    pub fn replace_data(&mut self, data: FactorDataset) -> Result<()> {
        if data.len() != self.data.len() || data.p() != self.data.p() || data.q() != self.data.q() {
            return Err(Error::Dimension("replacement data has other dimensions".into()));
        }
        if self.config.variant.has_factor_sv() {
            self.fstar = (0..data.q())
                .map(|i| log_square_transform(data.f.column(i).as_slice(), self.config.offset))
                .collect();
        }
        self.data = data;
        Ok(())
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Runs the remaining sweeps and returns the stored draws.
    pub fn run(mut self) -> Result<ChainDraws> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(self.finish())
    }

    /// Runs up to `n` further sweeps.
    pub fn run_for(&mut self, n: usize) -> Result<()> {
        for _ in 0..n {
            if self.is_finished() {
                break;
            }
            self.step()?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> ChainDraws {
        self.refresh_diagnostics();
        self.draws
    }

    fn refresh_diagnostics(&mut self) {
        let series = self.state.factors.iter().chain(self.state.errors.iter());
        self.draws.diagnostics.sv_acceptance = series.clone().map(|s| s.tuner.acceptance_rate()).collect();
        self.draws.diagnostics.sv_correction_acceptance = series
            .map(|s| {
                if s.corrections.1 == 0 {
                    0.0
                } else {
                    s.corrections.0 as f64 / s.corrections.1 as f64
                }
            })
            .collect();
    }

    /// One complete sweep; stores the draw when it is a kept one.
    pub fn step(&mut self) -> Result<()> {
        let sweep = self.sweep;
        let adapt = self.config.adapt && sweep < self.config.burn_in;
        self.update_measurement().map_err(|e| e.in_block(sweep, "loadings"))?;
        if self.config.variant == ModelVariant::SvErr {
            self.update_error_sv(adapt).map_err(|e| e.in_block(sweep, "error volatility"))?;
        }
        if self.config.variant.has_factor_sv() {
            self.update_factor_sv(adapt).map_err(|e| e.in_block(sweep, "factor volatility"))?;
        }
        self.update_p_path().map_err(|e| e.in_block(sweep, "P_t"))?;
        let q = self.data.q();
        let prior = APrior {
            df: self.priors.a_inv_df(q),
            scale: self.priors.a_inv_scale(q),
        };
        let a = sample_a(&self.state.p_path, self.state.corr.d, self.state.corr.k, &prior, q, &mut self.rng)
            .map_err(|e| e.in_block(sweep, "A"))?;
        self.state.corr.a = a;
        let stats = TransitionStats::new(&self.pt, &self.state.corr.a).map_err(|e| e.in_block(sweep, "d"))?;
        let d_cfg = ArmsConfig::new(self.priors.d_range.0, self.priors.d_range.1)?;
        self.state.corr.d = sample_d(&stats, self.state.corr.d, self.state.corr.k, &d_cfg, &mut self.rng)
            .map_err(|e| e.in_block(sweep, "d"))?;
        let k_cfg = ArmsConfig::new(q as f64, q as f64 + self.config.k_span)?;
        self.state.corr.k = sample_k(
            &stats,
            self.state.corr.k,
            self.state.corr.d,
            self.priors.lambda0,
            &k_cfg,
            &mut self.rng,
        )
        .map_err(|e| e.in_block(sweep, "k"))?;

        self.sweep += 1;
        if sweep >= self.config.burn_in && (sweep - self.config.burn_in) % self.config.thin == 0 {
            self.store().map_err(|e| e.in_block(sweep, "storage"))?;
        }
        Ok(())
    }

    fn update_measurement(&mut self) -> Result<()> {
        let (y, f) = (&self.data.y, &self.data.f);
        match self.config.variant {
            ModelVariant::SvErr => {
                for j in 0..self.data.p() {
                    let lambda: Vec<f64> = self.state.errors[j].h.iter().map(|h| h.exp()).collect();
                    let yj = y.column(j).into_owned();
                    let bj = sample_bj_sverr(&yj, f, &lambda, self.priors.c0, &mut self.rng)?;
                    for i in 0..bj.len() {
                        self.state.b[(j, i)] = bj[i];
                    }
                }
            }
            _ => {
                let bc = b_conditional(y, f)?;
                let omega = sigma_sq_params(y, f, &bc, &self.priors)
                    .into_iter()
                    .map(|(a, s)| inverse_gamma(a, s, &mut self.rng))
                    .collect::<Result<Vec<_>>>()?;
                self.state.b = sample_b_from(&bc, &omega, &mut self.rng)?;
                self.state.omega = omega;
            }
        }
        Ok(())
    }

    fn update_error_sv(&mut self, adapt: bool) -> Result<()> {
        let resid = &self.data.y - &self.data.f * self.state.b.transpose();
        let cfg = SvBlockConfig {
            table: self.table.clone(),
            adapt,
        };
        for j in 0..self.data.p() {
            let r: Vec<f64> = resid.column(j).iter().copied().collect();
            let fstar = log_square_transform(&r, self.config.offset);
            let exact = |h: &[f64]| -> Result<f64> {
                Ok(r.iter().zip(h).map(|(x, hv)| -0.5 * (hv + x * x * (-hv).exp())).sum())
            };
            let exact_ref: Option<&dyn Fn(&[f64]) -> Result<f64>> =
                if self.config.sv_correction { Some(&exact) } else { None };
            sv_block(&fstar, &mut self.state.errors[j], &self.priors, &cfg, exact_ref, &mut self.rng)?;
        }
        Ok(())
    }

    fn update_factor_sv(&mut self, adapt: bool) -> Result<()> {
        let cfg = SvBlockConfig {
            table: self.table.clone(),
            adapt,
        };
        let q = self.data.q();
        // corr(P_t)⁻¹ = D^{1/2} P_t⁻¹ D^{1/2}
        let corr_inv: Vec<DMatrix<f64>> = if self.config.sv_correction {
            self.pt
                .iter()
                .map(|st| {
                    let p = st.p.as_matrix();
                    DMatrix::from_fn(q, q, |a, b| (p[(a, a)] * p[(b, b)]).sqrt() * st.x[(a, b)])
                })
                .collect()
        } else {
            Vec::new()
        };
        for i in 0..q {
            let f = &self.data.f;
            let others: Vec<Vec<f64>> = self.state.factors.iter().map(|s| s.h.clone()).collect();
            let exact = |h: &[f64]| -> Result<f64> {
                let mut total = 0.0;
                let mut eps = vec![0.0; q];
                for (t, ci) in corr_inv.iter().enumerate() {
                    for a in 0..q {
                        let ha = if a == i { h[t] } else { others[a][t] };
                        eps[a] = f[(t, a)] * (-0.5 * ha).exp();
                    }
                    let mut quad = 0.0;
                    for a in 0..q {
                        for b in 0..q {
                            quad += eps[a] * ci[(a, b)] * eps[b];
                        }
                    }
                    total -= 0.5 * (quad + h[t]);
                }
                Ok(total)
            };
            let exact_ref: Option<&dyn Fn(&[f64]) -> Result<f64>> =
                if self.config.sv_correction { Some(&exact) } else { None };
            sv_block(&self.fstar[i], &mut self.state.factors[i], &self.priors, &cfg, exact_ref, &mut self.rng)?;
        }
        Ok(())
    }

    fn update_p_path(&mut self) -> Result<()> {
        let ctx = CorrContext::new(&self.state.corr)?;
        let t_len = self.data.len();
        let q = self.data.q();
        let identity = PtState::identity(q);
        let standardized = self.config.variant.has_factor_sv();
        let diag = &mut self.draws.diagnostics;
        for t in 0..t_len {
            let obs_vec = if standardized {
                DVector::from_fn(q, |i, _| self.data.f[(t, i)] * (-0.5 * self.state.factors[i].h[t]).exp())
            } else {
                self.data.factor_row(t)
            };
            let obs = if standardized {
                FactorObs::Standardized(&obs_vec)
            } else {
                FactorObs::Raw(&obs_vec)
            };
            let (before, rest) = self.pt.split_at_mut(t);
            let (curr, after) = rest.split_first_mut().expect("t < T");
            let prev = if t == 0 { &identity } else { &before[t - 1] };
            let step = sample_pt(prev, curr, after.first(), obs, &ctx, &mut self.rng)?;
            diag.pt_proposed += 1;
            match step {
                PtStep::Accepted => {
                    diag.pt_accepted += 1;
                    self.state.p_path[t] = curr.p.clone();
                }
                PtStep::Rejected => {}
                PtStep::Failed => diag.pt_failed += 1,
            }
        }
        Ok(())
    }

    fn store(&mut self) -> Result<()> {
        let variant = self.config.variant;
        let model = self.state.model_state();
        model.validate(variant)?;
        for (t, st) in self.pt.iter().enumerate() {
            if !(st.spectral.min_eigenvalue() > 0.0) {
                return Err(Error::NotSpd(format!("stored P_{}", t + 1)));
            }
        }
        if self.config.log_joint {
            let lj = log_joint(&self.data, &model, &self.priors, variant)?;
            self.draws.log_joint.push(lj);
        }
        self.draws.values.push(param_values(&model, variant));
        let last = self.data.len() - 1;
        self.draws.states.push(PredictiveState {
            b: model.b.clone(),
            omega: model.omega.clone(),
            factor_sv: model.factor_sv.clone(),
            h_last: self.state.factors.iter().map(|s| s.h[last]).collect(),
            error_sv: model.error_sv.clone(),
            error_h_last: self.state.errors.iter().map(|s| s.h[last]).collect(),
            p_last: self.state.p_path[last].clone(),
            corr: model.corr.clone(),
        });
        self.draws.paths.add(&self.state, variant)?;
        Ok(())
    }
}

fn empty_draws(data: &FactorDataset, config: &McmcConfig) -> ChainDraws {
    let (p, q) = (data.p(), data.q());
    let weights = config
        .weights
        .clone()
        .unwrap_or_else(|| vec![1.0 / p as f64; p]);
    ChainDraws {
        variant: config.variant,
        names: param_names(config.variant, p, q),
        values: Vec::new(),
        log_joint: Vec::new(),
        states: Vec::new(),
        paths: PathMeans::new(data.len(), p, q, weights, config.variant.has_factor_sv()),
        diagnostics: Diagnostics::default(),
    }
}

/// Initializes and runs a complete chain.
pub fn run_chain(data: &FactorDataset, priors: &PriorConfig, config: &McmcConfig) -> Result<ChainDraws> {
    Chain::new(data.clone(), priors.clone(), config.clone())?.run()
}

/// Unnormalized log density of `B | Y, F, Ω`: `log p(B|Ω) + log p(Y|B, Ω, F)`.
pub fn log_b_joint(y: &DMatrix<f64>, f: &DMatrix<f64>, b: &DMatrix<f64>, omega: &[f64]) -> f64 {
    let resid = y - f * b.transpose();
    let mut total = 0.0;
    for j in 0..b.nrows() {
        let v = omega[j];
        total -= 0.5 * (resid.column(j).norm_squared() + b.row(j).norm_squared()) / v;
    }
    total
}

/// Log density of `B` under its matrix-normal conditional, up to a constant.
pub fn log_b_conditional(bc: &BConditional, b: &DMatrix<f64>, omega: &[f64]) -> Result<f64> {
    let prec_chol = lower_inverse(&bc.col_cov_chol);
    let mut total = 0.0;
    for j in 0..b.nrows() {
        let d = (b.row(j) - bc.mean.row(j)).transpose();
        total -= 0.5 * (&prec_chol * d).norm_squared() / omega[j];
    }
    Ok(total)
}
