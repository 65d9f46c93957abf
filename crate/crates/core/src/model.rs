//! Parameters, priors, data containers, the data-generating processes of the
//! three model variants and the joint log density.
//!
//! Conventions: time runs over rows (`t = 0..T` in code for periods
//! `1..T`), returns are decimal fractions, and the correlation-level path
//! always starts from `P_0 = I`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::matrixdist::{
    cholesky_lower, correlation_of, log_det_from_cholesky, lower_inverse, normal_logpdf,
    sample_wishart_with_root, spd_inverse, wishart_logpdf, SpdMatrix, Spectral, DEFAULT_EIGEN_FLOOR,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Observed returns `Y` (T×p) and observed factors `F` (T×q).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDataset {
    pub y: DMatrix<f64>,
    pub f: DMatrix<f64>,
}

impl FactorDataset {
    pub fn new(y: DMatrix<f64>, f: DMatrix<f64>) -> Result<Self> {
        if y.nrows() != f.nrows() {
            return Err(Error::Dimension(format!(
                "returns have {} rows, factors {}",
                y.nrows(),
                f.nrows()
            )));
        }
        if y.nrows() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 periods, got {}",
                y.nrows()
            )));
        }
        if f.ncols() == 0 || f.ncols() > y.ncols() {
            return Err(Error::Dimension(format!(
                "need 1 <= q <= p, got q={} p={}",
                f.ncols(),
                y.ncols()
            )));
        }
        if y.iter().chain(f.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset".into()));
        }
        Ok(FactorDataset { y, f })
    }

    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.y.nrows() == 0
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    pub fn q(&self) -> usize {
        self.f.ncols()
    }

    /// The first `n` periods.
    pub fn head(&self, n: usize) -> Result<FactorDataset> {
        if n > self.len() {
            return Err(Error::Dimension(format!(
                "cannot take {n} periods from {}",
                self.len()
            )));
        }
        FactorDataset::new(self.y.rows(0, n).into_owned(), self.f.rows(0, n).into_owned())
    }

    pub fn factor_row(&self, t: usize) -> DVector<f64> {
        self.f.row(t).transpose()
    }

    pub fn return_row(&self, t: usize) -> DVector<f64> {
        self.y.row(t).transpose()
    }
}

/// Loadings `B` (p×q) and idiosyncratic variances `σ_j²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementParams {
    pub b: DMatrix<f64>,
    pub omega: Vec<f64>,
}

impl MeasurementParams {
    pub fn new(b: DMatrix<f64>, omega: Vec<f64>) -> Result<Self> {
        if b.nrows() != omega.len() {
            return Err(Error::Dimension(format!(
                "B has {} rows but {} variances given",
                b.nrows(),
                omega.len()
            )));
        }
        if let Some(v) = omega.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::InvalidParameter(format!("idiosyncratic variance {v}")));
        }
        Ok(MeasurementParams { b, omega })
    }
}

/// Log-volatility AR(1) parameters of one series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvParams {
    pub mu: f64,
    pub phi: f64,
    pub sigma_eta_sq: f64,
}

impl SvParams {
    pub fn new(mu: f64, phi: f64, sigma_eta_sq: f64) -> Result<Self> {
        let sv = SvParams {
            mu,
            phi,
            sigma_eta_sq,
        };
        sv.validate()?;
        Ok(sv)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("phi = {} outside (-1, 1)", self.phi)));
        }
        if !(self.sigma_eta_sq >= 0.0) || !self.sigma_eta_sq.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma_eta^2 = {}",
                self.sigma_eta_sq
            )));
        }
        if !self.mu.is_finite() {
            return Err(Error::NonFinite("mu".into()));
        }
        Ok(())
    }

    /// Variance of the stationary law of `h`.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma_eta_sq / (1.0 - self.phi * self.phi)
    }

    /// One-step-ahead mean `φ·h + (1 - φ)·μ`.
    pub fn predictive_mean(&self, h: f64) -> f64 {
        self.phi * h + (1.0 - self.phi) * self.mu
    }

    /// Draws a log-volatility path of length `t` started from the
    /// stationary law.
    pub fn simulate_path<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> Vec<f64> {
        let mut h = Vec::with_capacity(t);
        let z: f64 = rng.sample(StandardNormal);
        h.push(self.mu + self.stationary_variance().sqrt() * z);
        let sd = self.sigma_eta_sq.sqrt();
        for s in 1..t {
            let z: f64 = rng.sample(StandardNormal);
            h.push(self.predictive_mean(h[s - 1]) + sd * z);
        }
        h
    }
}

/// Parameters of the Wishart correlation process: `A`, memory `d`, and
/// degrees of freedom `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrDynParams {
    pub a: SpdMatrix,
    pub d: f64,
    pub k: f64,
}

impl CorrDynParams {
    pub fn new(a: SpdMatrix, d: f64, k: f64) -> Result<Self> {
        let c = CorrDynParams { a, d, k };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("d = {} outside (-1, 1)", self.d)));
        }
        let q = self.a.dim() as f64;
        if !(self.k > q) || !self.k.is_finite() {
            return Err(Error::InvalidParameter(format!("k = {} must exceed q = {q}", self.k)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    /// Square root `G` of the transition scale `S = P^{-d/2} A P^{-d/2} / k`
    /// (`S = G·Gᵀ`) given the spectral decomposition of the previous state.
    pub fn scale_root(&self, a_chol: &DMatrix<f64>, prev: &Spectral) -> Result<DMatrix<f64>> {
        let pw = prev.power(-0.5 * self.d, DEFAULT_EIGEN_FLOOR)?;
        Ok(pw * a_chol / self.k.sqrt())
    }

    /// Transition scale `S_t` for a given state `P_t`.
    pub fn scale(&self, p: &SpdMatrix) -> Result<SpdMatrix> {
        let pw = Spectral::of(p.as_matrix()).power(-0.5 * self.d, DEFAULT_EIGEN_FLOOR)?;
        Ok(SpdMatrix::from_trusted(&pw * self.a.as_matrix() * &pw / self.k))
    }
}

/// Which member of the model family is being simulated or fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    /// Factor SV with Wishart-process correlations (constant error variances).
    Odcfmsv,
    /// Factor covariance driven directly by the Wishart process; no SV.
    Pg,
    /// As `Odcfmsv` with SV on each idiosyncratic error.
    SvErr,
}

impl ModelVariant {
    pub fn has_factor_sv(self) -> bool {
        !matches!(self, ModelVariant::Pg)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Odcfmsv => "odcfmsv",
            ModelVariant::Pg => "pg",
            ModelVariant::SvErr => "sverr",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "odcfmsv" | "o" => Ok(ModelVariant::Odcfmsv),
            "pg" => Ok(ModelVariant::Pg),
            "sverr" => Ok(ModelVariant::SvErr),
            _ => Err(Error::InvalidParameter(format!("unknown model variant '{s}'"))),
        }
    }
}

/// Prior hyperparameters. Defaults are the standard settings of the model;
/// every field can be overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// `σ_j² ~ IG(ν0/2, ν0·s0/2)`
    pub nu0: f64,
    pub s0: f64,
    /// `μ ~ N(mu_mean, mu_var)`
    pub mu_mean: f64,
    pub mu_var: f64,
    /// `σ_η² ~ IG(shape, scale)`
    pub sigma_eta_shape: f64,
    pub sigma_eta_scale: f64,
    /// `(φ + 1)/2 ~ Beta(phi_a, phi_b)`
    pub phi_a: f64,
    pub phi_b: f64,
    /// `A⁻¹ ~ W_q(df, scale·I)`; `None` means `df = q`, `scale = 1/q`.
    pub a_inv_df: Option<f64>,
    pub a_inv_scale: Option<f64>,
    /// `d ~ U(lo, hi)` inside `(-1, 1)`
    pub d_range: (f64, f64),
    /// `k - q ~ Exp(lambda0)`
    pub lambda0: f64,
    /// `b_j ~ N(0, c0²·I)` in the SV-on-errors variant.
    pub c0: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            nu0: 10.0,
            s0: 0.01,
            mu_mean: 0.0,
            mu_var: 10.0,
            sigma_eta_shape: 5.0,
            sigma_eta_scale: 0.05,
            phi_a: 20.0,
            phi_b: 1.5,
            a_inv_df: None,
            a_inv_scale: None,
            d_range: (-1.0, 1.0),
            lambda0: 0.02,
            c0: 5.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("nu0", self.nu0),
            ("s0", self.s0),
            ("mu_var", self.mu_var),
            ("sigma_eta_shape", self.sigma_eta_shape),
            ("sigma_eta_scale", self.sigma_eta_scale),
            ("phi_a", self.phi_a),
            ("phi_b", self.phi_b),
            ("lambda0", self.lambda0),
            ("c0", self.c0),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("prior {name} = {v}")));
            }
        }
        let (lo, hi) = self.d_range;
        if !(-1.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::InvalidParameter(format!("prior d_range = ({lo}, {hi})")));
        }
        if let Some(s) = self.a_inv_scale {
            if !(s > 0.0) {
                return Err(Error::InvalidParameter(format!("prior a_inv_scale = {s}")));
            }
        }
        Ok(())
    }

    pub fn a_inv_df(&self, q: usize) -> f64 {
        self.a_inv_df.unwrap_or(q as f64)
    }

    pub fn a_inv_scale(&self, q: usize) -> f64 {
        self.a_inv_scale.unwrap_or(1.0 / q as f64)
    }

    /// Prior mean of `φ`, `2a/(a+b) - 1`.
    pub fn phi_prior_mean(&self) -> f64 {
        2.0 * self.phi_a / (self.phi_a + self.phi_b) - 1.0
    }

    pub fn log_prior_phi(&self, phi: f64) -> f64 {
        if !(phi.abs() < 1.0) {
            return f64::NEG_INFINITY;
        }
        let u = 0.5 * (phi + 1.0);
        (self.phi_a - 1.0) * u.ln() + (self.phi_b - 1.0) * (1.0 - u).ln()
            + ln_gamma(self.phi_a + self.phi_b)
            - ln_gamma(self.phi_a)
            - ln_gamma(self.phi_b)
            - std::f64::consts::LN_2
    }

    pub fn log_prior_sigma_eta_sq(&self, v: f64) -> f64 {
        log_inverse_gamma(v, self.sigma_eta_shape, self.sigma_eta_scale)
    }

    pub fn log_prior_mu(&self, mu: f64) -> f64 {
        normal_logpdf(mu, self.mu_mean, self.mu_var)
    }

    pub fn log_prior_sv(&self, sv: &SvParams) -> f64 {
        self.log_prior_mu(sv.mu) + self.log_prior_phi(sv.phi) + self.log_prior_sigma_eta_sq(sv.sigma_eta_sq)
    }

    pub fn log_prior_d(&self, d: f64) -> f64 {
        let (lo, hi) = self.d_range;
        if !(d > lo && d < hi) {
            return f64::NEG_INFINITY;
        }
        -(hi - lo).ln()
    }

    pub fn log_prior_k(&self, k: f64, q: usize) -> f64 {
        if !(k > q as f64) {
            return f64::NEG_INFINITY;
        }
        self.lambda0.ln() - self.lambda0 * (k - q as f64)
    }
}

/// `log IG(x | shape, scale)`.
pub fn log_inverse_gamma(x: f64, shape: f64, scale: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

/// Every unknown of a model variant: parameters and latent paths. Blocks not
/// used by a variant are left empty (zero-length vectors, zero-column
/// matrices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub b: DMatrix<f64>,
    /// `σ_j²`; empty for the SV-on-errors variant.
    pub omega: Vec<f64>,
    pub factor_sv: Vec<SvParams>,
    /// Factor log-volatilities, T×q (T×0 for PG).
    pub h: DMatrix<f64>,
    pub error_sv: Vec<SvParams>,
    /// Error log-volatilities, T×p (T×0 unless SV on errors).
    pub error_h: DMatrix<f64>,
    /// `P_1..P_T`.
    pub p_path: Vec<SpdMatrix>,
    pub corr: CorrDynParams,
}

impl ModelState {
    pub fn len(&self) -> usize {
        self.p_path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_path.is_empty()
    }

    pub fn q(&self) -> usize {
        self.corr.dim()
    }

    pub fn p(&self) -> usize {
        self.b.nrows()
    }

    /// Standardized factors `ε_t = V_t^{-1/2} f_t` as a T×q matrix.
    pub fn standardized_factors(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        standardize_factors(f, &self.h)
    }

    /// Checks the support constraints of every parameter.
    pub fn validate(&self, variant: ModelVariant) -> Result<()> {
        self.corr.validate()?;
        for sv in self.factor_sv.iter().chain(self.error_sv.iter()) {
            sv.validate()?;
        }
        if let Some(v) = self.omega.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::InvalidParameter(format!("sigma_j^2 = {v}")));
        }
        if variant.has_factor_sv() && self.factor_sv.len() != self.q() {
            return Err(Error::Dimension("factor SV parameter count".into()));
        }
        if variant == ModelVariant::SvErr && self.error_sv.len() != self.p() {
            return Err(Error::Dimension("error SV parameter count".into()));
        }
        if variant != ModelVariant::SvErr && self.omega.len() != self.p() {
            return Err(Error::Dimension("idiosyncratic variance count".into()));
        }
        Ok(())
    }
}

/// `ε_t = V_t^{-1/2} f_t`.
pub fn standardize_factors(f: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(f.nrows(), f.ncols(), |t, i| f[(t, i)] * (-0.5 * h[(t, i)]).exp())
}

/// Output of a simulator: data plus the latent paths that generated it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Simulated {
    pub data: FactorDataset,
    pub state: ModelState,
}

impl Simulated {
    /// `[Σ_ε,t]_{ij}` (or the factor correlation under PG) along the path.
    pub fn correlation_path(&self, i: usize, j: usize) -> Result<Vec<f64>> {
        self.state
            .p_path
            .iter()
            .map(|p| correlation_of(p.as_matrix()).map(|c| c[(i, j)]))
            .collect()
    }
}

/// True parameter values of a data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueParams {
    pub variant: ModelVariant,
    pub b: DMatrix<f64>,
    pub omega: Vec<f64>,
    pub factor_sv: Vec<SvParams>,
    pub error_sv: Vec<SvParams>,
    pub corr: CorrDynParams,
}

impl TrueParams {
    /// The simulation-study design: p = 10 series on q = 2 factors.
    pub fn paper_dgp(variant: ModelVariant) -> TrueParams {
        #[rustfmt::skip]
        let b = DMatrix::from_row_slice(10, 2, &[
            1.00, 0.00,
            0.30, 1.00,
            -0.05, 0.34,
            0.99, 0.00,
            0.99, 0.00,
            -0.10, 0.95,
            0.00, 0.95,
            0.56, 0.00,
            0.00, 0.00,
            0.00, 0.30,
        ]);
        let omega = vec![0.05, 0.1, 0.13, 0.24, 0.35, 0.35, 0.24, 0.13, 0.1, 0.05];
        let factor_sv = if variant.has_factor_sv() {
            vec![
                SvParams { mu: -0.2, phi: 0.95, sigma_eta_sq: 0.1 * 0.1 },
                SvParams { mu: -0.5, phi: 0.98, sigma_eta_sq: 0.27 * 0.27 },
            ]
        } else {
            Vec::new()
        };
        let a_inv = DMatrix::from_row_slice(2, 2, &[1.0, 0.05, 0.05, 1.0]);
        let a = SpdMatrix::new(spd_inverse(&a_inv).expect("SPD constant")).expect("SPD constant");
        let error_sv = if variant == ModelVariant::SvErr {
            omega
                .iter()
                .map(|&v: &f64| SvParams { mu: v.ln(), phi: 0.95, sigma_eta_sq: 0.04 })
                .collect()
        } else {
            Vec::new()
        };
        TrueParams {
            variant,
            b,
            omega: if variant == ModelVariant::SvErr { Vec::new() } else { omega },
            factor_sv,
            error_sv,
            corr: CorrDynParams { a, d: 0.8, k: 25.0 },
        }
    }

    /// Simulates `t` periods from this process.
    pub fn simulate<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> Result<Simulated> {
        match self.variant {
            ModelVariant::Odcfmsv => simulate_odcfmsv(
                &MeasurementParams::new(self.b.clone(), self.omega.clone())?,
                &self.factor_sv,
                &self.corr,
                t,
                rng,
            ),
            ModelVariant::Pg => simulate_pg(
                &MeasurementParams::new(self.b.clone(), self.omega.clone())?,
                &self.corr,
                t,
                rng,
            ),
            ModelVariant::SvErr => simulate_sverr(&self.b, &self.error_sv, &self.factor_sv, &self.corr, t, rng),
        }
    }
}

/// Simulates `P_1..P_T` from `P_0 = I`.
pub fn simulate_corr_path<R: Rng + ?Sized>(
    corr: &CorrDynParams,
    t: usize,
    rng: &mut R,
) -> Result<Vec<SpdMatrix>> {
    corr.validate()?;
    let q = corr.dim();
    let a_chol = cholesky_lower(corr.a.as_matrix())?;
    let mut prev = Spectral::of(&DMatrix::identity(q, q));
    let mut path = Vec::with_capacity(t);
    for s in 0..t {
        let root = corr.scale_root(&a_chol, &prev)?;
        let x = sample_wishart_with_root(corr.k, &root, rng);
        let xs = Spectral::of(&x);
        if !(xs.min_eigenvalue() > 0.0) {
            return Err(Error::Numerical {
                what: "singular Wishart draw".into(),
                t: s + 1,
            });
        }
        let p = spd_inverse(&x).map_err(|_| Error::Numerical {
            what: "inverting Wishart draw".into(),
            t: s + 1,
        })?;
        prev = Spectral {
            values: xs.values.map(|v| 1.0 / v),
            vectors: xs.vectors,
        };
        path.push(SpdMatrix::from_trusted(p));
    }
    Ok(path)
}

fn check_params(t: usize, q: usize, sv: &[SvParams]) -> Result<()> {
    if t < 2 {
        return Err(Error::InvalidParameter(format!("need T >= 2, got {t}")));
    }
    if sv.len() != q {
        return Err(Error::Dimension(format!("{} SV parameter sets for q = {q}", sv.len())));
    }
    sv.iter().try_for_each(SvParams::validate)
}

fn add_measurement<R: Rng + ?Sized>(
    b: &DMatrix<f64>,
    f: &DMatrix<f64>,
    error_var: impl Fn(usize, usize) -> f64,
    rng: &mut R,
) -> DMatrix<f64> {
    let t = f.nrows();
    let p = b.nrows();
    let mut y = f * b.transpose();
    for s in 0..t {
        for j in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            y[(s, j)] += error_var(s, j).sqrt() * z;
        }
    }
    y
}

fn sv_factors<R: Rng + ?Sized>(
    sv: &[SvParams],
    p_path: &[SpdMatrix],
    t: usize,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let q = sv.len();
    let mut h = DMatrix::<f64>::zeros(t, q);
    for (i, par) in sv.iter().enumerate() {
        for (s, v) in par.simulate_path(t, rng).into_iter().enumerate() {
            h[(s, i)] = v;
        }
    }
    let mut f = DMatrix::<f64>::zeros(t, q);
    for s in 0..t {
        let c = correlation_of(p_path[s].as_matrix())?;
        let l = cholesky_lower(&c).map_err(|_| Error::Numerical {
            what: "factor correlation not positive definite".into(),
            t: s + 1,
        })?;
        let z = DVector::<f64>::from_fn(q, |_, _| rng.sample(StandardNormal));
        let eps = l * z;
        for i in 0..q {
            f[(s, i)] = (0.5 * h[(s, i)]).exp() * eps[i];
        }
    }
    Ok((h, f))
}

/// Simulates the factor-SV model with Wishart-process correlations.
///
/// Draw order (fixed for reproducibility): the P path, then each
/// log-volatility path, then `ε_t` period by period, then the measurement
/// noise.
pub fn simulate_odcfmsv<R: Rng + ?Sized>(
    meas: &MeasurementParams,
    sv: &[SvParams],
    corr: &CorrDynParams,
    t: usize,
    rng: &mut R,
) -> Result<Simulated> {
    let q = corr.dim();
    check_params(t, q, sv)?;
    if meas.b.ncols() != q {
        return Err(Error::Dimension("B columns differ from factor count".into()));
    }
    let p_path = simulate_corr_path(corr, t, rng)?;
    let (h, f) = sv_factors(sv, &p_path, t, rng)?;
    let y = add_measurement(&meas.b, &f, |_, j| meas.omega[j], rng);
    Ok(Simulated {
        data: FactorDataset::new(y, f)?,
        state: ModelState {
            b: meas.b.clone(),
            omega: meas.omega.clone(),
            factor_sv: sv.to_vec(),
            h,
            error_sv: Vec::new(),
            error_h: DMatrix::zeros(t, 0),
            p_path,
            corr: corr.clone(),
        },
    })
}

/// Simulates the comparison model: `f_t ~ N(0, P_t)` with no SV layer.
pub fn simulate_pg<R: Rng + ?Sized>(
    meas: &MeasurementParams,
    corr: &CorrDynParams,
    t: usize,
    rng: &mut R,
) -> Result<Simulated> {
    let q = corr.dim();
    check_params(t, q, &vec![SvParams { mu: 0.0, phi: 0.0, sigma_eta_sq: 0.0 }; q])?;
    if meas.b.ncols() != q {
        return Err(Error::Dimension("B columns differ from factor count".into()));
    }
    let p_path = simulate_corr_path(corr, t, rng)?;
    let mut f = DMatrix::<f64>::zeros(t, q);
    for s in 0..t {
        let l = cholesky_lower(p_path[s].as_matrix())?;
        let z = DVector::<f64>::from_fn(q, |_, _| rng.sample(StandardNormal));
        let v = l * z;
        for i in 0..q {
            f[(s, i)] = v[i];
        }
    }
    let y = add_measurement(&meas.b, &f, |_, j| meas.omega[j], rng);
    Ok(Simulated {
        data: FactorDataset::new(y, f)?,
        state: ModelState {
            b: meas.b.clone(),
            omega: meas.omega.clone(),
            factor_sv: Vec::new(),
            h: DMatrix::zeros(t, 0),
            error_sv: Vec::new(),
            error_h: DMatrix::zeros(t, 0),
            p_path,
            corr: corr.clone(),
        },
    })
}

/// Simulates the variant with SV on each idiosyncratic error.
pub fn simulate_sverr<R: Rng + ?Sized>(
    b: &DMatrix<f64>,
    error_sv: &[SvParams],
    factor_sv: &[SvParams],
    corr: &CorrDynParams,
    t: usize,
    rng: &mut R,
) -> Result<Simulated> {
    let q = corr.dim();
    check_params(t, q, factor_sv)?;
    check_params(t, b.nrows(), error_sv)?;
    let p_path = simulate_corr_path(corr, t, rng)?;
    let (h, f) = sv_factors(factor_sv, &p_path, t, rng)?;
    let p = b.nrows();
    let mut error_h = DMatrix::<f64>::zeros(t, p);
    for (j, par) in error_sv.iter().enumerate() {
        for (s, v) in par.simulate_path(t, rng).into_iter().enumerate() {
            error_h[(s, j)] = v;
        }
    }
    let y = add_measurement(b, &f, |s, j| error_h[(s, j)].exp(), rng);
    Ok(Simulated {
        data: FactorDataset::new(y, f)?,
        state: ModelState {
            b: b.clone(),
            omega: Vec::new(),
            factor_sv: factor_sv.to_vec(),
            h,
            error_sv: error_sv.to_vec(),
            error_h,
            p_path,
            corr: corr.clone(),
        },
    })
}

/// The joint log density split into its factors.
///
/// `factors` is the density of `F` given the volatilities and the
/// correlation path, `log N_q(ε_t | 0, Σ_ε,t) - Σ_i h_ti/2` per period
/// (or `log N_q(f_t | 0, P_t)` under PG). Transition densities and the
/// prior of `A` are taken with respect to the precision matrices `P_t⁻¹`
/// and `A⁻¹`, the variables they are defined on.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointTerms {
    pub observations: f64,
    pub factors: f64,
    pub log_volatility: f64,
    pub transitions: f64,
    pub priors: f64,
}

impl JointTerms {
    pub fn total(&self) -> f64 {
        self.observations + self.factors + self.log_volatility + self.transitions + self.priors
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Log density of a stationary AR(1) log-volatility path.
pub fn log_sv_path_density(sv: &SvParams, h: impl Iterator<Item = f64>) -> f64 {
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for x in h {
        total += match prev {
            None => normal_logpdf(x, sv.mu, sv.stationary_variance()),
            Some(hp) => normal_logpdf(x, sv.predictive_mean(hp), sv.sigma_eta_sq),
        };
        prev = Some(x);
    }
    total
}

/// Each factor of the joint density of data, latents and parameters.
pub fn log_joint_terms(
    data: &FactorDataset,
    state: &ModelState,
    priors: &PriorConfig,
    variant: ModelVariant,
) -> Result<JointTerms> {
    let t_len = data.len();
    let p = data.p();
    let q = data.q();
    if state.len() != t_len || state.p() != p || state.q() != q || state.b.ncols() != q {
        return Err(Error::Dimension("state does not match the dataset".into()));
    }
    if variant.has_factor_sv() && (state.h.nrows() != t_len || state.h.ncols() != q) {
        return Err(Error::Dimension("log-volatility path shape".into()));
    }
    if variant == ModelVariant::SvErr && (state.error_h.nrows() != t_len || state.error_h.ncols() != p) {
        return Err(Error::Dimension("error log-volatility path shape".into()));
    }
    state.validate(variant)?;

    let mut terms = JointTerms::default();

    // measurement equation
    let fitted = &data.f * state.b.transpose();
    let mut obs = 0.0;
    for s in 0..t_len {
        for j in 0..p {
            let var = match variant {
                ModelVariant::SvErr => state.error_h[(s, j)].exp(),
                _ => state.omega[j],
            };
            obs += normal_logpdf(data.y[(s, j)], fitted[(s, j)], var);
        }
    }
    terms.observations = finite(obs, "observation density")?;

    // factor density given volatilities and correlation path
    let mut fac = 0.0;
    for s in 0..t_len {
        let pm = state.p_path[s].as_matrix();
        match variant {
            ModelVariant::Pg => {
                let l = cholesky_lower(pm)?;
                let z = lower_inverse(&l) * data.factor_row(s);
                fac += -0.5 * z.norm_squared() - 0.5 * log_det_from_cholesky(&l) - 0.5 * q as f64 * LN_2PI;
            }
            _ => {
                let c = correlation_of(pm)?;
                let l = cholesky_lower(&c)?;
                let eps = DVector::from_fn(q, |i, _| data.f[(s, i)] * (-0.5 * state.h[(s, i)]).exp());
                let z = lower_inverse(&l) * eps;
                fac += -0.5 * z.norm_squared() - 0.5 * log_det_from_cholesky(&l) - 0.5 * q as f64 * LN_2PI;
                fac -= 0.5 * state.h.row(s).sum();
            }
        }
    }
    terms.factors = finite(fac, "factor density")?;

    let mut lv = 0.0;
    if variant.has_factor_sv() {
        for (i, sv) in state.factor_sv.iter().enumerate() {
            lv += log_sv_path_density(sv, state.h.column(i).iter().copied());
        }
    }
    if variant == ModelVariant::SvErr {
        for (j, sv) in state.error_sv.iter().enumerate() {
            lv += log_sv_path_density(sv, state.error_h.column(j).iter().copied());
        }
    }
    terms.log_volatility = finite(lv, "log-volatility density")?;

    let mut tr = 0.0;
    let mut prev = SpdMatrix::identity(q);
    for p_t in &state.p_path {
        let s = state.corr.scale(&prev)?;
        tr += wishart_logpdf(&p_t.inverse()?, state.corr.k, &s)?;
        prev = p_t.clone();
    }
    terms.transitions = finite(tr, "Wishart transition density")?;

    let mut pr = 0.0;
    match variant {
        ModelVariant::SvErr => {
            let c2 = priors.c0 * priors.c0;
            for j in 0..p {
                for i in 0..q {
                    pr += normal_logpdf(state.b[(j, i)], 0.0, c2);
                }
            }
        }
        _ => {
            for j in 0..p {
                let v = state.omega[j];
                pr += log_inverse_gamma(v, 0.5 * priors.nu0, 0.5 * priors.nu0 * priors.s0);
                for i in 0..q {
                    pr += normal_logpdf(state.b[(j, i)], 0.0, v);
                }
            }
        }
    }
    for sv in state.factor_sv.iter().chain(state.error_sv.iter()) {
        pr += priors.log_prior_sv(sv);
    }
    let a_inv = state.corr.a.inverse()?;
    let a_scale = SpdMatrix::from_trusted(DMatrix::identity(q, q) * priors.a_inv_scale(q));
    pr += wishart_logpdf(&a_inv, priors.a_inv_df(q), &a_scale)?;
    pr += priors.log_prior_d(state.corr.d);
    pr += priors.log_prior_k(state.corr.k, q);
    terms.priors = finite(pr, "prior density")?;

    Ok(terms)
}

/// Joint log density of data, latent paths and parameters.
pub fn log_joint(
    data: &FactorDataset,
    state: &ModelState,
    priors: &PriorConfig,
    variant: ModelVariant,
) -> Result<f64> {
    Ok(log_joint_terms(data, state, priors, variant)?.total())
}

/// Normal draw helper used by the simulators and samplers.
pub(crate) fn normal<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    Normal::new(mean, sd).map(|d| d.sample(rng)).unwrap_or(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn paper_o(seed: u64, t: usize) -> Simulated {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TrueParams::paper_dgp(ModelVariant::Odcfmsv).simulate(t, &mut rng).unwrap()
    }

    #[test]
    fn simulation_is_reproducible() {
        let a = paper_o(1, 200);
        let b = paper_o(1, 200);
        assert_eq!(a.data, b.data);
        assert_eq!(a.state, b.state);
        let c = paper_o(2, 200);
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn noiseless_measurement() {
        let mut truth = TrueParams::paper_dgp(ModelVariant::Odcfmsv);
        truth.omega = vec![1e-12; 10];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sim = truth.simulate(300, &mut rng).unwrap();
        let fitted = &sim.data.f * truth.b.transpose();
        assert!((fitted - &sim.data.y).amax() < 1e-4);
    }

    #[test]
    fn zero_sigma_eta_gives_constant_volatility() {
        let mut truth = TrueParams::paper_dgp(ModelVariant::Odcfmsv);
        truth.factor_sv[0].sigma_eta_sq = 0.0;
        truth.factor_sv[1].sigma_eta_sq = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sim = truth.simulate(100, &mut rng).unwrap();
        for t in 0..100 {
            assert_eq!(sim.state.h[(t, 0)], -0.2);
            assert_eq!(sim.state.h[(t, 1)], -0.5);
        }
    }

    #[test]
    fn simulated_paths_respect_invariants() {
        let sim = paper_o(5, 300);
        for p in &sim.state.p_path {
            assert!(cholesky_lower(p.as_matrix()).is_ok());
            let c = correlation_of(p.as_matrix()).unwrap();
            assert_eq!(c[(0, 0)], 1.0);
            assert_eq!(c[(1, 1)], 1.0);
        }
    }

    #[test]
    fn factor_variance_matches_lognormal_moment() {
        // Var(f_t1) = E[exp(h)] = exp(μ + σ²/(2(1-φ²))) under the stationary law.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let truth = TrueParams::paper_dgp(ModelVariant::Odcfmsv);
        let sv = truth.factor_sv[0];
        let expect = (sv.mu + 0.5 * sv.stationary_variance()).exp();
        let reps = 200;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..reps {
            let sim = truth.simulate(1000, &mut rng).unwrap();
            let col = sim.data.f.column(0);
            let v = col.iter().map(|x| x * x).sum::<f64>() / 1000.0;
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / reps as f64;
        let se = ((sumsq / reps as f64 - mean * mean) / reps as f64).sqrt();
        assert!((mean - expect).abs() < 3.0 * se, "{mean} vs {expect} (se {se})");
    }

    #[test]
    fn stationary_initialization_variance() {
        let sv = SvParams::new(0.3, 0.9, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let draws: Vec<f64> = (0..n).map(|_| sv.simulate_path(1, &mut rng)[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target = sv.stationary_variance();
        // SE of a normal sample variance: target·sqrt(2/(n-1))
        let se = target * (2.0 / (n - 1) as f64).sqrt();
        assert!((var - target).abs() < 3.0 * se, "{var} vs {target}");
    }

    #[test]
    fn pg_with_zero_loadings_is_pure_noise() {
        let mut truth = TrueParams::paper_dgp(ModelVariant::Pg);
        truth.b = DMatrix::zeros(10, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sim = truth.simulate(20_000, &mut rng).unwrap();
        for j in 0..10 {
            let col = sim.data.y.column(j);
            let v = col.iter().map(|x| x * x).sum::<f64>() / 20_000.0;
            let se = truth.omega[j] * (2.0 / 20_000.0f64).sqrt();
            assert!((v - truth.omega[j]).abs() < 4.0 * se, "series {j}: {v}");
        }
    }

    #[test]
    fn pg_scalar_concentrated_wishart_has_unit_variance() {
        let corr = CorrDynParams::new(SpdMatrix::identity(1), 0.0, 5000.0).unwrap();
        let meas = MeasurementParams::new(DMatrix::from_element(1, 1, 1.0), vec![1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sim = simulate_pg(&meas, &corr, 20_000, &mut rng).unwrap();
        let v = sim.data.f.iter().map(|x| x * x).sum::<f64>() / 20_000.0;
        assert!((v - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn log_det_p_is_autoregressive_in_d() {
        let mut truth = TrueParams::paper_dgp(ModelVariant::Pg);
        truth.corr.d = 0.6;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let sim = truth.simulate(20_000, &mut rng).unwrap();
        let ld: Vec<f64> = sim.state.p_path.iter().map(|p| p.log_det().unwrap()).collect();
        let n = ld.len();
        let m = ld.iter().sum::<f64>() / n as f64;
        let c0: f64 = ld.iter().map(|x| (x - m).powi(2)).sum();
        let c1: f64 = ld.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        let r1 = c1 / c0;
        assert!((r1 - 0.6).abs() < 0.05, "{r1}");
    }

    #[test]
    fn joint_terms_single_period() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let sim = paper_o(12, 2);
        // shrink to one period
        let mut state = sim.state.clone();
        state.h = state.h.rows(0, 1).into_owned();
        state.p_path.truncate(1);
        let data = FactorDataset {
            y: sim.data.y.rows(0, 1).into_owned(),
            f: sim.data.f.rows(0, 1).into_owned(),
        };
        let priors = PriorConfig::default();
        let terms = log_joint_terms(&data, &state, &priors, ModelVariant::Odcfmsv).unwrap();

        // Observation term: univariate normals.
        let mut obs = 0.0;
        for j in 0..10 {
            let mean: f64 = (0..2).map(|i| state.b[(j, i)] * data.f[(0, i)]).sum();
            let v = state.omega[j];
            obs += -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (data.y[(0, j)] - mean).powi(2) / (2.0 * v);
        }
        assert!((terms.observations - obs).abs() < 1e-10);

        // Factor term: bivariate normal with covariance V^{1/2} Σ V^{1/2}.
        let p1 = state.p_path[0].as_matrix();
        let rho = p1[(0, 1)] / (p1[(0, 0)] * p1[(1, 1)]).sqrt();
        let s1 = (0.5 * state.h[(0, 0)]).exp();
        let s2 = (0.5 * state.h[(0, 1)]).exp();
        let (x1, x2) = (data.f[(0, 0)] / s1, data.f[(0, 1)] / s2);
        let quad = (x1 * x1 - 2.0 * rho * x1 * x2 + x2 * x2) / (1.0 - rho * rho);
        let fac = -(2.0 * std::f64::consts::PI).ln() - (s1 * s2).ln() - 0.5 * (1.0 - rho * rho).ln() - 0.5 * quad;
        assert!((terms.factors - fac).abs() < 1e-10, "{} vs {}", terms.factors, fac);

        // Log-volatility: stationary initial law only.
        let mut lv = 0.0;
        for i in 0..2 {
            let sv = state.factor_sv[i];
            let v = sv.sigma_eta_sq / (1.0 - sv.phi * sv.phi);
            lv += -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (state.h[(0, i)] - sv.mu).powi(2) / (2.0 * v);
        }
        assert!((terms.log_volatility - lv).abs() < 1e-10);

        // Transition from P_0 = I: S_0 = A/k.
        let s0 = SpdMatrix::from_trusted(state.corr.a.as_matrix() / state.corr.k);
        let tr = wishart_logpdf(&state.p_path[0].inverse().unwrap(), state.corr.k, &s0).unwrap();
        assert!((terms.transitions - tr).abs() < 1e-10);
        assert!(terms.priors.is_finite());
        let _ = &mut rng;
    }

    #[test]
    fn doubling_omega_shifts_observation_term() {
        let sim = paper_o(13, 50);
        let priors = PriorConfig::default();
        let base = log_joint_terms(&sim.data, &sim.state, &priors, ModelVariant::Odcfmsv).unwrap();
        let mut doubled = sim.state.clone();
        doubled.omega.iter_mut().for_each(|v| *v *= 2.0);
        let after = log_joint_terms(&sim.data, &doubled, &priors, ModelVariant::Odcfmsv).unwrap();
        let resid = &sim.data.y - &sim.data.f * sim.state.b.transpose();
        let mut quad = 0.0;
        for t in 0..50 {
            for j in 0..10 {
                quad += resid[(t, j)].powi(2) / (2.0 * sim.state.omega[j]);
            }
        }
        // -(T·p/2)·log 2 from the normalizers, plus half the quadratic form back.
        let expect = -(50.0 * 10.0 / 2.0) * std::f64::consts::LN_2 + 0.5 * quad;
        assert!((after.observations - base.observations - expect).abs() < 1e-8);
    }

    #[test]
    fn log_joint_finite_at_prior_modes() {
        let sim = paper_o(14, 20);
        let mut state = sim.state.clone();
        let priors = PriorConfig::default();
        let q = 2;
        // IG mode: scale/(shape+1)
        state.omega = vec![0.5 * priors.nu0 * priors.s0 / (0.5 * priors.nu0 + 1.0); 10];
        for sv in state.factor_sv.iter_mut() {
            sv.mu = priors.mu_mean;
            sv.sigma_eta_sq = priors.sigma_eta_scale / (priors.sigma_eta_shape + 1.0);
            // Beta mode (a-1)/(a+b-2), shifted
            sv.phi = 2.0 * (priors.phi_a - 1.0) / (priors.phi_a + priors.phi_b - 2.0) - 1.0;
        }
        state.corr.k = q as f64 + 1e-6;
        state.corr.d = 0.0;
        state.b = DMatrix::zeros(10, 2);
        for v in [ModelVariant::Odcfmsv] {
            assert!(log_joint(&sim.data, &state, &priors, v).unwrap().is_finite());
        }
    }

    #[test]
    fn log_joint_rejects_mismatch() {
        let sim = paper_o(15, 20);
        let data = sim.data.head(10).unwrap();
        assert!(matches!(
            log_joint(&data, &sim.state, &PriorConfig::default(), ModelVariant::Odcfmsv),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn prior_defaults() {
        let p = PriorConfig::default();
        assert!((p.phi_prior_mean() - 0.8605).abs() < 1e-3);
        assert_eq!(p.a_inv_df(2), 2.0);
        assert_eq!(p.a_inv_scale(2), 0.5);
        assert_eq!(p.log_prior_k(2.0, 2), f64::NEG_INFINITY);
        assert!(p.validate().is_ok());
        let bad = PriorConfig { lambda0: 0.0, ..PriorConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in [ModelVariant::Odcfmsv, ModelVariant::Pg, ModelVariant::SvErr] {
            assert_eq!(v.name().parse::<ModelVariant>().unwrap(), v);
        }
        assert!("garch".parse::<ModelVariant>().is_err());
    }
}
