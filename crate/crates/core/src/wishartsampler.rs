//! Updates for the correlation level: single-move Metropolis–Hastings
//! draws of `P_t`, the conjugate draw of `A`, and adaptive rejection
//! Metropolis sampling for `d` and `k`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixdist::{
    cholesky_lower, log_det_from_cholesky, log_mvgamma, lower_inverse, sample_wishart,
    sample_wishart_with_root, spd_inverse, symmetrized, wishart_logpdf, SpdMatrix, Spectral,
    DEFAULT_EIGEN_FLOOR, VARIANCE_FLOOR,
};
use crate::model::CorrDynParams;

const LN_2: f64 = std::f64::consts::LN_2;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Settings of one ARMS draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmsConfig {
    pub lo: f64,
    pub hi: f64,
    pub init_points: usize,
    pub max_points: usize,
    pub max_rejections: usize,
}

impl ArmsConfig {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let c = ArmsConfig {
            lo,
            hi,
            init_points: 5,
            max_points: 50,
            max_rejections: 1000,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "ARMS domain ({}, {})",
                self.lo, self.hi
            )));
        }
        if self.init_points < 3 || self.max_points < self.init_points || self.max_rejections == 0 {
            return Err(Error::InvalidParameter("ARMS point limits".into()));
        }
        Ok(())
    }
}

/// Line through two points, `y = y0 + slope·(x - x0)`.
#[derive(Debug, Clone, Copy)]
struct Line {
    x0: f64,
    y0: f64,
    slope: f64,
}

impl Line {
    fn through(x0: f64, y0: f64, x1: f64, y1: f64) -> Line {
        Line {
            x0,
            y0,
            slope: (y1 - y0) / (x1 - x0),
        }
    }

    fn at(&self, x: f64) -> f64 {
        self.y0 + self.slope * (x - self.x0)
    }

    fn intersect(&self, other: &Line) -> Option<f64> {
        let ds = self.slope - other.slope;
        if ds == 0.0 {
            return None;
        }
        // y0 + s(x - x0) = y0' + s'(x - x0')
        let x = (other.y0 - self.y0 + self.slope * self.x0 - other.slope * other.x0) / ds;
        x.is_finite().then_some(x)
    }
}

/// Piecewise-linear upper hull `h` of the log density built from secants.
/// `h` may jump at the abscissae, so each segment keeps its own end values.
struct Envelope {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Segments `(x0, x1, h(x0+), h(x1-))`, sorted and contiguous.
    segments: Vec<(f64, f64, f64, f64)>,
    /// Cumulative mass of `exp(h - shift)` after each segment.
    cum: Vec<f64>,
    shift: f64,
}

impl Envelope {
    fn new(xs: Vec<f64>, ys: Vec<f64>, lo: f64, hi: f64) -> Envelope {
        let mut env = Envelope {
            xs,
            ys,
            segments: Vec::new(),
            cum: Vec::new(),
            shift: 0.0,
        };
        env.build(lo, hi);
        env
    }

    fn line(&self, i: usize) -> Option<Line> {
        // secant through abscissae i and i+1
        (i + 1 < self.xs.len()).then(|| Line::through(self.xs[i], self.ys[i], self.xs[i + 1], self.ys[i + 1]))
    }

    /// Lines governing `h` on interval `i`, where interval 0 is `[lo, x_0]`
    /// and interval `n` is `[x_{n-1}, hi]`: on `[x_{i-1}, x_i]`,
    /// `h = max(L_{i-1,i}, min(L_{i-2,i-1}, L_{i,i+1}))`.
    fn interval_lines(&self, i: usize) -> (Option<Line>, Option<Line>, Option<Line>) {
        let n = self.xs.len();
        if i == 0 {
            return (None, None, self.line(0));
        }
        if i == n {
            return (None, self.line(n - 2), None);
        }
        let a = self.line(i - 1);
        let b = if i >= 2 { self.line(i - 2) } else { None };
        let c = self.line(i);
        (a, b, c)
    }

    fn eval_lines(lines: &(Option<Line>, Option<Line>, Option<Line>), x: f64) -> f64 {
        let (a, b, c) = lines;
        let inner = match (b, c) {
            (Some(b), Some(c)) => b.at(x).min(c.at(x)),
            (Some(b), None) => b.at(x),
            (None, Some(c)) => c.at(x),
            (None, None) => f64::NEG_INFINITY,
        };
        match a {
            Some(a) => a.at(x).max(inner),
            None => inner,
        }
    }

    fn build(&mut self, lo: f64, hi: f64) {
        let n = self.xs.len();
        self.segments.clear();
        let mut bounds = Vec::with_capacity(n + 2);
        bounds.push(lo);
        bounds.extend_from_slice(&self.xs);
        bounds.push(hi);
        for i in 0..=n {
            let (l, r) = (bounds[i], bounds[i + 1]);
            if !(r > l) {
                continue;
            }
            let lines = self.interval_lines(i);
            let mut cuts = vec![l, r];
            let all: Vec<Line> = [lines.0, lines.1, lines.2].into_iter().flatten().collect();
            for u in 0..all.len() {
                for v in (u + 1)..all.len() {
                    if let Some(x) = all[u].intersect(&all[v]) {
                        if x > l && x < r {
                            cuts.push(x);
                        }
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            for w in cuts.windows(2) {
                if w[1] > w[0] {
                    let y0 = Self::eval_lines(&lines, w[0]);
                    let y1 = Self::eval_lines(&lines, w[1]);
                    self.segments.push((w[0], w[1], y0, y1));
                }
            }
        }
        self.shift = self
            .segments
            .iter()
            .map(|s| s.2.max(s.3))
            .fold(f64::NEG_INFINITY, f64::max);
        self.cum.clear();
        let mut total = 0.0;
        for &(x0, x1, y0, y1) in &self.segments {
            total += segment_mass(x1 - x0, y0 - self.shift, y1 - self.shift);
            self.cum.push(total);
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let s = self
            .segments
            .partition_point(|seg| seg.1 < x)
            .min(self.segments.len() - 1);
        let (x0, x1, y0, y1) = self.segments[s];
        let w = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
        y0 + w * (y1 - y0)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = *self.cum.last().expect("envelope has segments");
        let target = rng.random::<f64>() * total;
        let s = self.cum.partition_point(|c| *c < target).min(self.segments.len() - 1);
        let (x0, x1, y0, y1) = self.segments[s];
        let width = x1 - x0;
        let slope = (y1 - y0) / width;
        let u: f64 = rng.random();
        let sw = slope * width;
        let offset = if !sw.is_finite() {
            if slope > 0.0 {
                width
            } else {
                0.0
            }
        } else if sw.abs() < 1e-10 {
            u * width
        } else if sw > 0.0 {
            width + (u + (1.0 - u) * (-sw).exp()).ln() / slope
        } else {
            (u * sw.exp_m1()).ln_1p() / slope
        };
        x0 + offset.clamp(0.0, width)
    }

    fn insert(&mut self, x: f64, y: f64, lo: f64, hi: f64) {
        let i = self.xs.partition_point(|v| *v < x);
        if self.xs.get(i) == Some(&x) {
            return;
        }
        self.xs.insert(i, x);
        self.ys.insert(i, y);
        self.build(lo, hi);
    }
}

/// Mass of `exp` of the linear function from `ya` to `yb` over `width`,
/// factored around the larger end so that steep segments neither overflow
/// nor produce `0·∞`.
fn segment_mass(width: f64, ya: f64, yb: f64) -> f64 {
    let top = ya.max(yb);
    if top == f64::NEG_INFINITY {
        return 0.0;
    }
    let d = (yb - ya).abs();
    if d < 1e-10 {
        width * (0.5 * (ya + yb)).exp()
    } else {
        // ∫ exp(top - d·s/width) ds over [0, width]
        width * top.exp() * -(-d).exp_m1() / d
    }
}

/// One adaptive rejection Metropolis draw.
///
/// The initial abscissae are `init_points` equispaced interior points of
/// `(lo, hi)`; rejected proposals are added to them. A final Metropolis
/// step against `current` corrects for regions where the envelope falls
/// below the target.
pub fn arms<F, R>(log_density: F, config: &ArmsConfig, current: f64, rng: &mut R) -> Result<f64>
where
    F: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    config.validate()?;
    let (lo, hi) = (config.lo, config.hi);
    let n0 = config.init_points;
    let mut xs = Vec::with_capacity(config.max_points);
    let mut ys = Vec::with_capacity(config.max_points);
    for i in 1..=n0 {
        let x = lo + (hi - lo) * i as f64 / (n0 + 1) as f64;
        let y = log_density(x);
        if y.is_finite() {
            xs.push(x);
            ys.push(y);
        }
    }
    if xs.len() < 2 {
        return Err(Error::Domain(format!(
            "log density finite at fewer than two initial points of ({lo}, {hi})"
        )));
    }
    let mut env = Envelope::new(xs, ys, lo, hi);
    let mut rejections = 0;
    let (proposal, f_prop) = loop {
        let total = env.cum.last().copied().unwrap_or(0.0);
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::NonFinite(format!("ARMS envelope mass {total} on ({lo}, {hi})")));
        }
        let x = env.sample(rng);
        if x <= lo || x >= hi {
            continue;
        }
        let fx = log_density(x);
        let u: f64 = rng.random();
        if fx.is_finite() && u.ln() <= fx - env.eval(x) {
            break (x, fx);
        }
        rejections += 1;
        if rejections >= config.max_rejections {
            return Err(Error::ArmsExhausted {
                rejections,
                points: env.xs.len(),
                lo,
                hi,
            });
        }
        if fx.is_finite() && env.xs.len() < config.max_points {
            env.insert(x, fx, lo, hi);
        }
    };

    let f_cur = log_density(current);
    if !f_cur.is_finite() || !(current > lo && current < hi) {
        return Ok(proposal);
    }
    let h_cur = env.eval(current);
    let h_prop = env.eval(proposal);
    let log_ratio = f_prop + f_cur.min(h_cur) - f_cur - f_prop.min(h_prop);
    let u: f64 = rng.random();
    Ok(if u.ln() < log_ratio { proposal } else { current })
}

/// What the factor data at one period tell about `P_t`.
#[derive(Debug, Clone, Copy)]
pub enum FactorObs<'a> {
    /// `ε_t ~ N(0, corr(P_t))`.
    Standardized(&'a DVector<f64>),
    /// `f_t ~ N(0, P_t)`.
    Raw(&'a DVector<f64>),
}

/// Log density of the period's factor data given `P_t = x⁻¹`.
pub fn factor_loglik(obs: FactorObs<'_>, x: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<f64> {
    let lx = cholesky_lower(x)?;
    let log_det_x = log_det_from_cholesky(&lx);
    let q = x.nrows() as f64;
    match obs {
        FactorObs::Raw(f) => {
            let quad = (lx.transpose() * f).norm_squared();
            Ok(-0.5 * quad + 0.5 * log_det_x - 0.5 * q * LN_2PI)
        }
        FactorObs::Standardized(e) => {
            // corr(P)⁻¹ = D^{1/2} X D^{1/2}, log|corr(P)| = -log|X| - Σ log P_ii
            let mut sum_log_diag = 0.0;
            let mut z = e.clone();
            for i in 0..z.len() {
                let v = p[(i, i)];
                if !(v >= VARIANCE_FLOOR) || !v.is_finite() {
                    return Err(Error::DegenerateVariance { index: i, value: v });
                }
                sum_log_diag += v.ln();
                z[i] *= v.sqrt();
            }
            let quad = (lx.transpose() * z).norm_squared();
            Ok(-0.5 * quad + 0.5 * (log_det_x + sum_log_diag) - 0.5 * q * LN_2PI)
        }
    }
}

/// Log density of `W_q(X_next | k, S(P))` where `P` is given by its
/// spectral decomposition, `S(P) = P^{-d/2} A P^{-d/2} / k`.
pub fn transition_logpdf(
    x_next: &DMatrix<f64>,
    log_det_x_next: f64,
    p: &Spectral,
    a_inv: &DMatrix<f64>,
    log_det_a: f64,
    d: f64,
    k: f64,
) -> f64 {
    let q = a_inv.nrows();
    let half = p.power_unchecked(0.5 * d);
    // tr(S⁻¹ X) = k·tr(P^{d/2} A⁻¹ P^{d/2} X)
    let m = &half * a_inv * &half;
    let trace = k * m.component_mul(x_next).sum();
    let log_det_s = -(q as f64) * k.ln() + log_det_a - d * p.log_det();
    crate::matrixdist::wishart_logpdf_parts(log_det_x_next, trace, log_det_s, k, q)
}

/// Correlation-process quantities shared by every `P_t` update of a sweep.
#[derive(Debug, Clone)]
pub struct CorrContext {
    pub a_chol: DMatrix<f64>,
    pub a_inv: DMatrix<f64>,
    pub log_det_a: f64,
    pub d: f64,
    pub k: f64,
}

impl CorrContext {
    pub fn new(corr: &CorrDynParams) -> Result<Self> {
        corr.validate()?;
        let a_chol = cholesky_lower(corr.a.as_matrix())?;
        Ok(CorrContext {
            a_inv: {
                let li = lower_inverse(&a_chol);
                symmetrized(li.transpose() * li)
            },
            log_det_a: log_det_from_cholesky(&a_chol),
            a_chol,
            d: corr.d,
            k: corr.k,
        })
    }
}

/// Outcome of one `P_t` update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtStep {
    Accepted,
    Rejected,
    /// The proposal could not be formed; the state is unchanged.
    Failed,
}

/// The current `P_t` with the pieces its updates reuse.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PtState {
    pub p: SpdMatrix,
    pub x: DMatrix<f64>,
    pub spectral: Spectral,
    pub log_det_x: f64,
}

impl PtState {
    pub fn new(p: SpdMatrix) -> Result<Self> {
        let x = spd_inverse(p.as_matrix())?;
        Self::from_parts(p, x)
    }

    fn from_parts(p: SpdMatrix, x: DMatrix<f64>) -> Result<Self> {
        let spectral = Spectral::of(p.as_matrix());
        if !(spectral.min_eigenvalue() >= DEFAULT_EIGEN_FLOOR) {
            return Err(Error::NearSingular {
                value: spectral.min_eigenvalue(),
                floor: DEFAULT_EIGEN_FLOOR,
            });
        }
        let log_det_x = -spectral.log_det();
        Ok(PtState {
            p,
            x,
            spectral,
            log_det_x,
        })
    }

    pub fn identity(q: usize) -> Self {
        PtState {
            p: SpdMatrix::identity(q),
            x: DMatrix::identity(q, q),
            spectral: Spectral {
                values: DVector::from_element(q, 1.0),
                vectors: DMatrix::identity(q, q),
            },
            log_det_x: 0.0,
        }
    }
}

/// Log acceptance ratio of moving `P_t` from `cur` to `prop` when the
/// proposal is the prior transition: the factor-likelihood ratio times the
/// ratio of the next transition density (absent at the last period).
pub fn pt_log_ratio(
    obs: FactorObs<'_>,
    next: Option<&PtState>,
    ctx: &CorrContext,
    cur: &PtState,
    prop: &PtState,
) -> Result<f64> {
    let mut r = factor_loglik(obs, &prop.x, prop.p.as_matrix())? - factor_loglik(obs, &cur.x, cur.p.as_matrix())?;
    if let Some(nx) = next {
        r += transition_logpdf(&nx.x, nx.log_det_x, &prop.spectral, &ctx.a_inv, ctx.log_det_a, ctx.d, ctx.k)
            - transition_logpdf(&nx.x, nx.log_det_x, &cur.spectral, &ctx.a_inv, ctx.log_det_a, ctx.d, ctx.k);
    }
    Ok(r)
}

/// One Metropolis–Hastings update of `P_t` with the prior transition
/// `P_t⁻¹ ~ W_q(k, S_{t-1})` as proposal.
pub fn sample_pt<R: Rng + ?Sized>(
    prev: &PtState,
    curr: &mut PtState,
    next: Option<&PtState>,
    obs: FactorObs<'_>,
    ctx: &CorrContext,
    rng: &mut R,
) -> Result<PtStep> {
    let proposal = (|| -> Result<PtState> {
        let root = prev.spectral.power(-0.5 * ctx.d, DEFAULT_EIGEN_FLOOR)? * &ctx.a_chol / ctx.k.sqrt();
        let x = sample_wishart_with_root(ctx.k, &root, rng);
        let p = spd_inverse(&x)?;
        PtState::from_parts(SpdMatrix::from_trusted(p), x)
    })();
    let prop = match proposal {
        Ok(p) => p,
        Err(e) if e.is_numerical() => return Ok(PtStep::Failed),
        Err(e) => return Err(e),
    };
    let log_ratio = match pt_log_ratio(obs, next, ctx, curr, &prop) {
        Ok(v) => v,
        Err(e) if e.is_numerical() => return Ok(PtStep::Failed),
        Err(e) => return Err(e),
    };
    let u: f64 = rng.random();
    if u.ln() < log_ratio {
        *curr = prop;
        Ok(PtStep::Accepted)
    } else {
        Ok(PtStep::Rejected)
    }
}

/// Prior `A⁻¹ ~ W_q(df, scale·I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct APrior {
    pub df: f64,
    pub scale: f64,
}

/// Parameters of the conditional `A⁻¹ | P_{1:T}, d, k ~ W_q(df, S)`:
/// `df = df0 + T·k`, `S = (I/scale0 + k·Σ_t P_{t-1}^{d/2} P_t⁻¹ P_{t-1}^{d/2})⁻¹`.
pub fn a_posterior(path: &[SpdMatrix], d: f64, k: f64, prior: &APrior, q: usize) -> Result<(f64, SpdMatrix)> {
    let mut sum = DMatrix::<f64>::identity(q, q) / prior.scale;
    let mut prev = Spectral::of(&DMatrix::identity(q, q));
    for p in path {
        let half = prev.power(0.5 * d, DEFAULT_EIGEN_FLOOR)?;
        let x = spd_inverse(p.as_matrix())?;
        sum += (&half * x * &half) * k;
        prev = Spectral::of(p.as_matrix());
    }
    let scale = SpdMatrix::new(spd_inverse(&symmetrized(sum))?)?;
    Ok((prior.df + path.len() as f64 * k, scale))
}

/// Conjugate draw of `A`.
pub fn sample_a<R: Rng + ?Sized>(
    path: &[SpdMatrix],
    d: f64,
    k: f64,
    prior: &APrior,
    q: usize,
    rng: &mut R,
) -> Result<SpdMatrix> {
    let (df, scale) = a_posterior(path, d, k, prior, q)?;
    let a_inv = sample_wishart(df, &scale, rng)?;
    a_inv.inverse()
}

/// `Σ_t log W_q(P_t⁻¹ | k, S_{t-1})`, evaluated transition by transition.
fn log_transitions(path: &[SpdMatrix], a: &SpdMatrix, d: f64, k: f64) -> Result<f64> {
    let corr = CorrDynParams { a: a.clone(), d, k };
    let mut prev = SpdMatrix::identity(a.dim());
    let mut total = 0.0;
    for p in path {
        total += wishart_logpdf(&p.inverse()?, k, &corr.scale(&prev)?)?;
        prev = p.clone();
    }
    Ok(total)
}

/// Log conditional density of `d` (uniform prior on `(-1, 1)`), up to a
/// constant. `-∞` outside the support or when a matrix power fails.
pub fn logpost_d(d: f64, path: &[SpdMatrix], a: &SpdMatrix, k: f64) -> f64 {
    if !(d.abs() < 1.0) {
        return f64::NEG_INFINITY;
    }
    log_transitions(path, a, d, k).unwrap_or(f64::NEG_INFINITY)
}

/// Log conditional density of `k` under the prior `k - q ~ Exp(λ0)`.
pub fn logpost_k(k: f64, path: &[SpdMatrix], a: &SpdMatrix, d: f64, lambda0: f64) -> f64 {
    let q = a.dim() as f64;
    if !(k > q) || !k.is_finite() {
        return f64::NEG_INFINITY;
    }
    let prior = lambda0.ln() - lambda0 * (k - q);
    match log_transitions(path, a, d, k) {
        Ok(v) => v + prior,
        Err(_) => f64::NEG_INFINITY,
    }
}

struct PeriodStats {
    log_lambda: Vec<f64>,
    /// `G_ij·Y_ji` with `G = QᵀA⁻¹Q`, `Y = QᵀX_tQ`, `Q` the eigenvectors
    /// of `P_{t-1}`.
    weights: Vec<f64>,
}

/// Sufficient statistics of a `P` path for a fixed `A`, allowing the
/// transition log density to be evaluated for many `(d, k)` cheaply.
pub struct TransitionStats {
    q: usize,
    periods: Vec<PeriodStats>,
    sum_log_det_x: f64,
    sum_log_det_prev: f64,
    log_det_a: f64,
}

impl TransitionStats {
    pub fn new(path: &[PtState], a: &SpdMatrix) -> Result<Self> {
        let q = a.dim();
        let a_inv = a.inverse()?;
        let log_det_a = a.log_det()?;
        let mut periods = Vec::with_capacity(path.len());
        let mut sum_log_det_x = 0.0;
        let mut sum_log_det_prev = 0.0;
        let identity = PtState::identity(q);
        for t in 0..path.len() {
            let prev = if t == 0 { &identity } else { &path[t - 1] };
            let qm = &prev.spectral.vectors;
            let g = qm.transpose() * a_inv.as_matrix() * qm;
            let y = qm.transpose() * &path[t].x * qm;
            let mut weights = Vec::with_capacity(q * q);
            for i in 0..q {
                for j in 0..q {
                    weights.push(g[(i, j)] * y[(j, i)]);
                }
            }
            let log_lambda: Vec<f64> = prev.spectral.values.iter().map(|v| v.ln()).collect();
            sum_log_det_prev += log_lambda.iter().sum::<f64>();
            sum_log_det_x += path[t].log_det_x;
            periods.push(PeriodStats { log_lambda, weights });
        }
        Ok(TransitionStats {
            q,
            periods,
            sum_log_det_x,
            sum_log_det_prev,
            log_det_a,
        })
    }

    /// `Σ_t tr(P_{t-1}^{d/2} A⁻¹ P_{t-1}^{d/2} P_t⁻¹)`.
    pub fn trace_sum(&self, d: f64) -> f64 {
        let q = self.q;
        let mut total = 0.0;
        for per in &self.periods {
            for i in 0..q {
                for j in 0..q {
                    total += per.weights[i * q + j] * (0.5 * d * (per.log_lambda[i] + per.log_lambda[j])).exp();
                }
            }
        }
        total
    }

    /// `Σ_t log W_q(P_t⁻¹ | k, S_{t-1})` given `trace_sum(d)`.
    pub fn log_density_with_trace(&self, d: f64, k: f64, trace_sum: f64) -> f64 {
        let q = self.q as f64;
        let n = self.periods.len() as f64;
        let Ok(lg) = log_mvgamma(self.q, 0.5 * k) else {
            return f64::NEG_INFINITY;
        };
        0.5 * (k - q - 1.0) * self.sum_log_det_x - 0.5 * k * trace_sum
            - 0.5 * k * q * LN_2 * n
            - 0.5 * k * (n * (-q * k.ln() + self.log_det_a) - d * self.sum_log_det_prev)
            - n * lg
    }

    pub fn log_density(&self, d: f64, k: f64) -> f64 {
        self.log_density_with_trace(d, k, self.trace_sum(d))
    }
}

/// ARMS draw of `d` given the path, `A` and `k`.
pub fn sample_d<R: Rng + ?Sized>(
    stats: &TransitionStats,
    current: f64,
    k: f64,
    config: &ArmsConfig,
    rng: &mut R,
) -> Result<f64> {
    arms(
        |d| {
            if d.abs() < 1.0 {
                stats.log_density(d, k)
            } else {
                f64::NEG_INFINITY
            }
        },
        config,
        current,
        rng,
    )
}

/// ARMS draw of `k` given the path, `A` and `d`.
pub fn sample_k<R: Rng + ?Sized>(
    stats: &TransitionStats,
    current: f64,
    d: f64,
    lambda0: f64,
    config: &ArmsConfig,
    rng: &mut R,
) -> Result<f64> {
    let q = stats.q as f64;
    let trace = stats.trace_sum(d);
    arms(
        |k| {
            if k > q {
                stats.log_density_with_trace(d, k, trace) - lambda0 * (k - q)
            } else {
                f64::NEG_INFINITY
            }
        },
        config,
        current,
        rng,
    )
}
