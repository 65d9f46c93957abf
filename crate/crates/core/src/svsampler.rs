//! Univariate stochastic-volatility updates through the offset mixture
//! representation `log(f² + c) = h + z`, `z ≈ log χ²₁`.
//!
//! Given the mixture indicators the model for one series is linear and
//! Gaussian, so `(φ, σ²_η)` can be drawn with `μ` and the path integrated
//! out by a Kalman filter, and `(μ, h)` drawn exactly afterwards.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{normal, PriorConfig, SvParams};

/// Default offset `c` in `log(f² + c)`.
pub const DEFAULT_OFFSET: f64 = 1e-5;

/// Mean of the log χ²₁ distribution.
pub const LOG_CHI2_MEAN: f64 = -1.2704;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Seven-component normal approximation of the log χ²₁ density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureTable {
    components: Vec<MixtureComponent>,
}

#[rustfmt::skip]
const KSC: [(f64, f64, f64); 7] = [
    (0.00730, -10.12999, 5.79596),
    (0.10556,  -3.97281, 2.61369),
    (0.00002,  -8.56686, 5.17950),
    (0.04395,   2.77786, 0.16735),
    (0.34001,   0.61942, 0.64009),
    (0.24566,   1.79518, 0.34023),
    (0.25750,  -1.08819, 1.26261),
];

impl MixtureTable {
    /// The Kim–Shephard–Chib table, component means already shifted by
    /// the log χ²₁ mean.
    pub fn ksc() -> Self {
        MixtureTable {
            components: KSC
                .iter()
                .map(|&(weight, m, variance)| MixtureComponent {
                    weight,
                    mean: m + LOG_CHI2_MEAN,
                    variance,
                })
                .collect(),
        }
    }

    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() || components.len() > u8::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "{} mixture components",
                components.len()
            )));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("mixture weights sum to {total}")));
        }
        if components
            .iter()
            .any(|c| !(c.weight > 0.0) || !(c.variance > 0.0) || !c.mean.is_finite())
        {
            return Err(Error::InvalidParameter("mixture component".into()));
        }
        Ok(MixtureTable { components })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn component(&self, j: u8) -> &MixtureComponent {
        &self.components[j as usize]
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    /// Mixture log density at `x`.
    pub fn log_density(&self, x: f64) -> f64 {
        let mut logs = [0.0; 16];
        let n = self.components.len().min(16);
        let mut max = f64::NEG_INFINITY;
        for (j, c) in self.components.iter().take(n).enumerate() {
            let d = x - c.mean;
            logs[j] = c.weight.ln() - 0.5 * (LN_2PI + c.variance.ln() + d * d / c.variance);
            max = max.max(logs[j]);
        }
        if !max.is_finite() {
            return max;
        }
        max + logs[..n].iter().map(|l| (l - max).exp()).sum::<f64>().ln()
    }

    /// Posterior component probabilities for residual `x = f* - h`.
    pub fn posterior_weights(&self, x: f64, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        let mut max = f64::NEG_INFINITY;
        for c in &self.components {
            let d = x - c.mean;
            let l = c.weight.ln() - 0.5 * (c.variance.ln() + d * d / c.variance);
            max = max.max(l);
            out.push(l);
        }
        if !max.is_finite() {
            return Err(Error::NonFinite(format!("mixture weights at residual {x}")));
        }
        let mut total = 0.0;
        for l in out.iter_mut() {
            *l = (*l - max).exp();
            total += *l;
        }
        for l in out.iter_mut() {
            *l /= total;
        }
        Ok(())
    }
}

impl Default for MixtureTable {
    fn default() -> Self {
        MixtureTable::ksc()
    }
}

/// Component indicators, one column per series. Entries are zero-based
/// component indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IndicatorMatrix {
    columns: Vec<Vec<u8>>,
}

impl IndicatorMatrix {
    pub fn new(columns: Vec<Vec<u8>>, n_components: usize) -> Result<Self> {
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(Error::Dimension("indicator columns differ in length".into()));
            }
        }
        if columns.iter().flatten().any(|&s| s as usize >= n_components) {
            return Err(Error::InvalidParameter("indicator out of range".into()));
        }
        Ok(IndicatorMatrix { columns })
    }

    pub fn column(&self, i: usize) -> &[u8] {
        &self.columns[i]
    }

    pub fn n_series(&self) -> usize {
        self.columns.len()
    }
}

/// `log(f² + c)` elementwise.
pub fn log_square_transform(f: &[f64], c: f64) -> Vec<f64> {
    f.iter().map(|x| (x * x + c).ln()).collect()
}

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{what}: lengths {a} and {b}")));
    }
    Ok(())
}

/// Draws `s_t` with probability proportional to
/// `w_m · N(f*_t | h_t + m_m, v_m)`.
pub fn sample_indicators<R: Rng + ?Sized>(
    fstar: &[f64],
    h: &[f64],
    table: &MixtureTable,
    rng: &mut R,
) -> Result<Vec<u8>> {
    check_len(fstar.len(), h.len(), "indicators")?;
    let mut w = Vec::with_capacity(table.len());
    let mut s = Vec::with_capacity(fstar.len());
    for (y, hv) in fstar.iter().zip(h) {
        table.posterior_weights(y - hv, &mut w)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = w.len() - 1;
        for (j, p) in w.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = j;
                break;
            }
        }
        s.push(pick as u8);
    }
    Ok(s)
}

/// Observation means and variances implied by the indicators:
/// `f*_t - m_{s_t}` and `v_{s_t}`.
pub fn conditional_observations(
    fstar: &[f64],
    s: &[u8],
    table: &MixtureTable,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(fstar.len(), s.len(), "indicators")?;
    let mut y = Vec::with_capacity(s.len());
    let mut v = Vec::with_capacity(s.len());
    for (f, &j) in fstar.iter().zip(s) {
        let c = table.component(j);
        y.push(f - c.mean);
        v.push(c.variance);
    }
    Ok((y, v))
}

/// Whether [`ffbs`] draws a path or returns the smoothed mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmootherMode {
    Sample,
    Mean,
}

/// Forward filter, backward sample for `y_t = h_t + e_t`,
/// `e_t ~ N(0, obs_var_t)`, with `h` a stationary AR(1) around `sv.mu`.
/// In [`SmootherMode::Mean`] the backward pass is the Rauch–Tung–Striebel
/// smoother and the rng is not touched.
pub fn ffbs<R: Rng + ?Sized>(
    y: &[f64],
    obs_var: &[f64],
    sv: &SvParams,
    mode: SmootherMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_len(y.len(), obs_var.len(), "ffbs")?;
    let n = y.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let (mu, phi, s2) = (sv.mu, sv.phi, sv.sigma_eta_sq);
    let mut filt_m = Vec::with_capacity(n);
    let mut filt_v = Vec::with_capacity(n);
    let mut pm = mu;
    let mut pv = sv.stationary_variance();
    for t in 0..n {
        let r = obs_var[t];
        let (m, v) = if r.is_infinite() {
            (pm, pv)
        } else {
            let denom = pv + r;
            if !(denom > 0.0) {
                // both the prediction and the observation are exact
                (y[t], 0.0)
            } else {
                let k = pv / denom;
                (pm + k * (y[t] - pm), (1.0 - k) * pv)
            }
        };
        if !m.is_finite() || !v.is_finite() {
            return Err(Error::Numerical {
                what: "Kalman filter state".into(),
                t: t + 1,
            });
        }
        filt_m.push(m);
        filt_v.push(v.max(0.0));
        pm = mu + phi * (m - mu);
        pv = phi * phi * v + s2;
    }

    let mut h = vec![0.0; n];
    h[n - 1] = match mode {
        SmootherMode::Sample => normal(filt_m[n - 1], filt_v[n - 1].sqrt(), rng),
        SmootherMode::Mean => filt_m[n - 1],
    };
    for t in (0..n - 1).rev() {
        let (m, v) = (filt_m[t], filt_v[t]);
        let pred_m = mu + phi * (m - mu);
        let pred_v = phi * phi * v + s2;
        let gain = if pred_v > 0.0 { v * phi / pred_v } else { 0.0 };
        h[t] = match mode {
            SmootherMode::Sample => {
                let mean = m + gain * (h[t + 1] - pred_m);
                let var = (v - gain * phi * v).max(0.0);
                normal(mean, var.sqrt(), rng)
            }
            SmootherMode::Mean => m + gain * (h[t + 1] - pred_m),
        };
        if !h[t].is_finite() {
            return Err(Error::Numerical {
                what: "backward sampling".into(),
                t: t + 1,
            });
        }
    }
    Ok(h)
}

/// Draws the log-volatility path given the indicators and all of `sv`.
pub fn ffbs_h<R: Rng + ?Sized>(
    fstar: &[f64],
    s: &[u8],
    sv: &SvParams,
    table: &MixtureTable,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (y, v) = conditional_observations(fstar, s, table)?;
    ffbs(&y, &v, sv, SmootherMode::Sample, rng)
}

/// Result of filtering with `μ` carried as a static state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalFilter {
    /// `log p(y | φ, σ²_η)` with `μ` and the path integrated out.
    pub log_likelihood: f64,
    /// Posterior mean and variance of `μ` given all of `y`.
    pub mu_mean: f64,
    pub mu_var: f64,
}

/// Kalman filter on the state `(h_t, μ)` with `μ ~ N(mu_mean, mu_var)`.
pub fn marginal_filter(
    y: &[f64],
    obs_var: &[f64],
    phi: f64,
    sigma_eta_sq: f64,
    mu_mean: f64,
    mu_var: f64,
) -> Result<MarginalFilter> {
    check_len(y.len(), obs_var.len(), "marginal filter")?;
    let stat = sigma_eta_sq / (1.0 - phi * phi);
    // state mean (a_h, a_m) and covariance [[p_hh, p_hm], [p_hm, p_mm]]
    let (mut a_h, mut a_m) = (mu_mean, mu_mean);
    let (mut p_hh, mut p_hm, mut p_mm) = (mu_var + stat, mu_var, mu_var);
    let mut ll = 0.0;
    let n = y.len();
    for t in 0..n {
        let f = p_hh + obs_var[t];
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::Numerical {
                what: format!("innovation variance {f}"),
                t: t + 1,
            });
        }
        let e = y[t] - a_h;
        ll -= 0.5 * (LN_2PI + f.ln() + e * e / f);
        let (k_h, k_m) = (p_hh / f, p_hm / f);
        a_h += k_h * e;
        a_m += k_m * e;
        let (n_hh, n_hm, n_mm) = (p_hh - k_h * p_hh, p_hm - k_h * p_hm, p_mm - k_m * p_hm);
        p_hh = n_hh;
        p_hm = n_hm;
        p_mm = n_mm;
        if t + 1 < n {
            let c = 1.0 - phi;
            let nh = phi * a_h + c * a_m;
            let vhh = phi * phi * p_hh + 2.0 * phi * c * p_hm + c * c * p_mm + sigma_eta_sq;
            let vhm = phi * p_hm + c * p_mm;
            a_h = nh;
            p_hh = vhh;
            p_hm = vhm;
        }
    }
    if !ll.is_finite() {
        return Err(Error::NonFinite("marginal likelihood".into()));
    }
    Ok(MarginalFilter {
        log_likelihood: ll,
        mu_mean: a_m,
        mu_var: p_mm.max(0.0),
    })
}

/// Random-walk step size for the `(atanh φ, log σ²_η)` proposal, adapted
/// towards a target acceptance rate while adaptation is switched on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwTuner {
    pub log_scale: f64,
    pub accepted: u64,
    pub proposed: u64,
    adapted: u64,
}

const RW_BASE_SD: [f64; 2] = [0.15, 0.3];
const RW_TARGET: f64 = 0.3;

impl Default for RwTuner {
    fn default() -> Self {
        RwTuner {
            log_scale: 0.0,
            accepted: 0,
            proposed: 0,
            adapted: 0,
        }
    }
}

impl RwTuner {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn record(&mut self, accepted: bool, adapt: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
        if adapt {
            self.adapted += 1;
            let gain = (self.adapted as f64 + 10.0).powf(-0.6);
            let a = if accepted { 1.0 } else { 0.0 };
            self.log_scale = (self.log_scale + gain * (a - RW_TARGET)).clamp(-8.0, 3.0);
        }
    }
}

fn log_target_phi_sigma(y: &[f64], v: &[f64], phi: f64, s2: f64, priors: &PriorConfig) -> Result<f64> {
    let mf = marginal_filter(y, v, phi, s2, priors.mu_mean, priors.mu_var)?;
    // Jacobian of (atanh φ, log σ²) → (φ, σ²)
    Ok(mf.log_likelihood
        + priors.log_prior_phi(phi)
        + priors.log_prior_sigma_eta_sq(s2)
        + (1.0 - phi * phi).ln()
        + s2.ln())
}

/// One Metropolis–Hastings update of `(φ, σ²_η)` targeting
/// `p(φ, σ²_η | f*, s)` with `μ` and the path integrated out.
/// Returns the new pair and whether the proposal was accepted.
#[allow(clippy::too_many_arguments)]
pub fn sample_phi_sigma<R: Rng + ?Sized>(
    fstar: &[f64],
    s: &[u8],
    current: (f64, f64),
    priors: &PriorConfig,
    table: &MixtureTable,
    tuner: &mut RwTuner,
    adapt: bool,
    rng: &mut R,
) -> Result<(f64, f64, bool)> {
    let (y, v) = conditional_observations(fstar, s, table)?;
    let (phi, s2) = current;
    let scale = tuner.log_scale.exp();
    let z0: f64 = rng.sample(StandardNormal);
    let z1: f64 = rng.sample(StandardNormal);
    let u_new = phi.atanh() + scale * RW_BASE_SD[0] * z0;
    let w_new = s2.ln() + scale * RW_BASE_SD[1] * z1;
    let phi_new = u_new.tanh();
    let s2_new = w_new.exp();
    let log_u: f64 = rng.random::<f64>().ln();
    if !(phi_new.abs() < 1.0) || !(s2_new > 0.0) || !s2_new.is_finite() {
        tuner.record(false, adapt);
        return Ok((phi, s2, false));
    }
    let cur = log_target_phi_sigma(&y, &v, phi, s2, priors)?;
    let prop = match log_target_phi_sigma(&y, &v, phi_new, s2_new, priors) {
        Ok(l) => l,
        Err(e) if e.is_numerical() => f64::NEG_INFINITY,
        Err(e) => return Err(e),
    };
    let accept = log_u < prop - cur;
    tuner.record(accept, adapt);
    Ok(if accept {
        (phi_new, s2_new, true)
    } else {
        (phi, s2, false)
    })
}

/// Conjugate draw of `μ` given a log-volatility path and `(φ, σ²_η)`.
pub fn sample_mu<R: Rng + ?Sized>(
    h: &[f64],
    phi: f64,
    sigma_eta_sq: f64,
    prior_mean: f64,
    prior_var: f64,
    rng: &mut R,
) -> Result<f64> {
    let (mean, var) = mu_conditional(h, phi, sigma_eta_sq, prior_mean, prior_var)?;
    Ok(normal(mean, var.sqrt(), rng))
}

/// Mean and variance of `μ | h, φ, σ²_η`.
pub fn mu_conditional(
    h: &[f64],
    phi: f64,
    sigma_eta_sq: f64,
    prior_mean: f64,
    prior_var: f64,
) -> Result<(f64, f64)> {
    if h.is_empty() || prior_var == 0.0 {
        return Ok((prior_mean, if h.is_empty() { prior_var } else { 0.0 }));
    }
    if !(sigma_eta_sq > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma_eta^2 = {sigma_eta_sq}")));
    }
    let c = 1.0 - phi;
    let mut prec = 1.0 / prior_var + (1.0 - phi * phi) / sigma_eta_sq;
    let mut num = prior_mean / prior_var + (1.0 - phi * phi) * h[0] / sigma_eta_sq;
    for w in h.windows(2) {
        prec += c * c / sigma_eta_sq;
        num += c * (w[1] - phi * w[0]) / sigma_eta_sq;
    }
    Ok((num / prec, 1.0 / prec))
}

/// Draws `μ` from its posterior with the path integrated out, then the
/// path given `μ`. Together an exact draw of `(μ, h) | f*, s, φ, σ²_η`.
pub fn sample_mu_h<R: Rng + ?Sized>(
    fstar: &[f64],
    s: &[u8],
    phi: f64,
    sigma_eta_sq: f64,
    priors: &PriorConfig,
    table: &MixtureTable,
    rng: &mut R,
) -> Result<(f64, Vec<f64>)> {
    let (y, v) = conditional_observations(fstar, s, table)?;
    let mf = marginal_filter(&y, &v, phi, sigma_eta_sq, priors.mu_mean, priors.mu_var)?;
    let mu = normal(mf.mu_mean, mf.mu_var.sqrt(), rng);
    let sv = SvParams { mu, phi, sigma_eta_sq };
    let h = ffbs(&y, &v, &sv, SmootherMode::Sample, rng)?;
    Ok((mu, h))
}

/// Everything the sampler carries for one SV series between sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvSeriesState {
    pub sv: SvParams,
    pub h: Vec<f64>,
    pub s: Vec<u8>,
    pub tuner: RwTuner,
    /// Accepted / proposed counts of the exact correction step.
    pub corrections: (u64, u64),
}

impl SvSeriesState {
    pub fn new(sv: SvParams, h: Vec<f64>) -> Self {
        let s = vec![0; h.len()];
        SvSeriesState {
            sv,
            h,
            s,
            tuner: RwTuner::default(),
            corrections: (0, 0),
        }
    }
}

/// Settings of [`sv_block`].
#[derive(Debug, Clone, PartialEq)]
pub struct SvBlockConfig {
    pub table: MixtureTable,
    /// Adapt the random-walk step (burn-in only).
    pub adapt: bool,
}

fn update_once<R: Rng + ?Sized>(
    fstar: &[f64],
    st: &mut SvSeriesState,
    priors: &PriorConfig,
    cfg: &SvBlockConfig,
    rng: &mut R,
) -> Result<()> {
    let (phi, s2, _) = sample_phi_sigma(
        fstar,
        &st.s,
        (st.sv.phi, st.sv.sigma_eta_sq),
        priors,
        &cfg.table,
        &mut st.tuner,
        cfg.adapt,
        rng,
    )?;
    let (mu, h) = sample_mu_h(fstar, &st.s, phi, s2, priors, &cfg.table, rng)?;
    st.sv = SvParams { mu, phi, sigma_eta_sq: s2 };
    st.h = h;
    Ok(())
}

/// One update of a single SV series.
///
/// Without `exact`, the mixture-model update: indicators, then
/// `(φ, σ²_η)` marginally, then `(μ, h)`.
///
/// With `exact`, that update is run as the symmetric sequence indicators,
/// `(φ, σ²_η, μ, h)`, indicators, which is reversible for the mixture
/// model, and used as a Metropolis–Hastings proposal for the exact model.
/// `exact(h)` must return the log density of the data given the path, up
/// to terms free of `h`; the proposal is accepted with probability
/// `min(1, exp(Δ[exact(h) - Σ_t log g(f*_t - h_t)]))` where `g` is the
/// mixture density.
pub fn sv_block<R: Rng + ?Sized>(
    fstar: &[f64],
    st: &mut SvSeriesState,
    priors: &PriorConfig,
    cfg: &SvBlockConfig,
    exact: Option<&dyn Fn(&[f64]) -> Result<f64>>,
    rng: &mut R,
) -> Result<()> {
    check_len(fstar.len(), st.h.len(), "sv block")?;
    match exact {
        None => {
            st.s = sample_indicators(fstar, &st.h, &cfg.table, rng)?;
            update_once(fstar, st, priors, cfg, rng)
        }
        Some(loglik) => {
            let log_w = |h: &[f64]| -> Result<f64> {
                let approx: f64 = fstar
                    .iter()
                    .zip(h)
                    .map(|(y, hv)| cfg.table.log_density(y - hv))
                    .sum();
                Ok(loglik(h)? - approx)
            };
            let before = log_w(&st.h)?;
            let saved = (st.sv, st.h.clone(), st.s.clone());
            st.s = sample_indicators(fstar, &st.h, &cfg.table, rng)?;
            update_once(fstar, st, priors, cfg, rng)?;
            st.s = sample_indicators(fstar, &st.h, &cfg.table, rng)?;
            let after = match log_w(&st.h) {
                Ok(v) => v,
                Err(e) if e.is_numerical() => f64::NEG_INFINITY,
                Err(e) => return Err(e),
            };
            let log_u: f64 = rng.random::<f64>().ln();
            st.corrections.1 += 1;
            if log_u < after - before {
                st.corrections.0 += 1;
            } else {
                st.sv = saved.0;
                st.h = saved.1;
                st.s = saved.2;
            }
            Ok(())
        }
    }
}
