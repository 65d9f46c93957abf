//! Dense SPD linear algebra and the matrix-variate kernels shared by every
//! sampler: Cholesky factors, spectral matrix powers, the Wishart
//! distribution (Bartlett draws and exact log density) and correlation
//! standardization.
//!
//! Everything here is a pure function of its inputs plus an injected RNG.
//! Results that are mathematically symmetric are symmetrized explicitly
//! after composition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Smallest eigenvalue accepted by [`spd_power`].
pub const DEFAULT_EIGEN_FLOOR: f64 = 1e-12;

/// Diagonal entries below this are treated as a degenerate variance.
pub const VARIANCE_FLOOR: f64 = 1e-300;

const SYMMETRY_RTOL: f64 = 1e-12;
const LN_2: f64 = std::f64::consts::LN_2;
const LN_PI: f64 = 1.144_729_885_849_400_2;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DMatrix<f64>", into = "DMatrix<f64>")]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    /// Validates squareness, finiteness, symmetry (relative to the largest
    /// entry) and positive definiteness, then stores the symmetrized matrix.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("SPD matrix entries".into()));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let n = m.nrows();
        for i in 0..n {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                    return Err(Error::NotSpd(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        let m = symmetrized(m);
        cholesky_lower(&m)?;
        Ok(SpdMatrix(m))
    }

    pub fn identity(dim: usize) -> Self {
        SpdMatrix(DMatrix::identity(dim, dim))
    }

    /// Wraps a matrix already known to be SPD (e.g. produced by a
    /// construction that guarantees it). Symmetrizes but does not check.
    pub(crate) fn from_trusted(m: DMatrix<f64>) -> Self {
        SpdMatrix(symmetrized(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn log_det(&self) -> Result<f64> {
        Ok(log_det_from_cholesky(&cholesky_lower(&self.0)?))
    }

    pub fn inverse(&self) -> Result<SpdMatrix> {
        Ok(SpdMatrix(spd_inverse(&self.0)?))
    }
}

impl TryFrom<DMatrix<f64>> for SpdMatrix {
    type Error = Error;
    fn try_from(m: DMatrix<f64>) -> Result<Self> {
        SpdMatrix::new(m)
    }
}

impl From<SpdMatrix> for DMatrix<f64> {
    fn from(m: SpdMatrix) -> Self {
        m.0
    }
}

/// A correlation matrix: SPD with an exact unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix(DMatrix<f64>);

impl CorrelationMatrix {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

pub(crate) fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize_in_place(&mut m);
    m
}

pub(crate) fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Lower Cholesky factor of a symmetric matrix; only the lower triangle is
/// read. Fails with the index of the first non-positive pivot.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Dimension(format!(
            "cholesky of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::Decomposition {
                index: j,
                value: pivot,
            });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Lower-triangular `L` with `L·Lᵀ = M`.
pub fn cholesky_spd(m: &SpdMatrix) -> Result<DMatrix<f64>> {
    cholesky_lower(&m.0)
}

pub(crate) fn log_det_from_cholesky(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Inverse of a lower-triangular matrix with a positive diagonal.
pub(crate) fn lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        inv[(j, j)] = 1.0 / l[(j, j)];
        for i in (j + 1)..n {
            let mut s = 0.0;
            for k in j..i {
                s += l[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -s / l[(i, i)];
        }
    }
    inv
}

/// Inverse of an SPD matrix via its Cholesky factor.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let l = cholesky_lower(m)?;
    let li = lower_inverse(&l);
    Ok(symmetrized(li.transpose() * li))
}

/// Eigendecomposition `P = Q·diag(λ)·Qᵀ` of a symmetric matrix, kept around
/// so that several powers of the same matrix share one decomposition.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Spectral {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl Spectral {
    pub fn of(m: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(m.clone());
        Spectral {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.values.min()
    }

    pub fn log_det(&self) -> f64 {
        self.values.iter().map(|v| v.ln()).sum()
    }

    /// `Q·diag(λᵢᵃ)·Qᵀ`, failing when an eigenvalue is below `floor`.
    pub fn power(&self, a: f64, floor: f64) -> Result<DMatrix<f64>> {
        let min = self.min_eigenvalue();
        if !(min >= floor) {
            return Err(Error::NearSingular { value: min, floor });
        }
        Ok(self.power_unchecked(a))
    }

    pub(crate) fn power_unchecked(&self, a: f64) -> DMatrix<f64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let w = self.values[j].powf(a);
            for i in 0..n {
                scaled[(i, j)] *= w;
            }
        }
        symmetrized(scaled * self.vectors.transpose())
    }
}

/// Real matrix power `Pᵃ` defined through the spectral decomposition.
pub fn spd_power(p: &SpdMatrix, a: f64) -> Result<SpdMatrix> {
    spd_power_with_floor(p, a, DEFAULT_EIGEN_FLOOR)
}

pub fn spd_power_with_floor(p: &SpdMatrix, a: f64, floor: f64) -> Result<SpdMatrix> {
    if !a.is_finite() {
        return Err(Error::Domain(format!("matrix power exponent {a}")));
    }
    let spectral = Spectral::of(&p.0);
    let m = spectral.power(a, floor)?;
    if a == 0.0 {
        return Ok(SpdMatrix::identity(p.dim()));
    }
    Ok(SpdMatrix(m))
}

/// Lower-triangular Bartlett factor `T` for `W_q(df, I)`: `T·Tᵀ ~ W_q(df, I)`.
pub fn bartlett_factor<R: Rng + ?Sized>(df: f64, q: usize, rng: &mut R) -> DMatrix<f64> {
    let mut t = DMatrix::<f64>::zeros(q, q);
    for i in 0..q {
        let chi = ChiSquared::new(df - i as f64).expect("df > q - 1 checked by caller");
        t[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            t[(i, j)] = rng.sample(StandardNormal);
        }
    }
    t
}

/// Draws `X ~ W_q(df, G·Gᵀ)` for any square root `G` of the scale matrix.
pub fn sample_wishart_with_root<R: Rng + ?Sized>(
    df: f64,
    root: &DMatrix<f64>,
    rng: &mut R,
) -> DMatrix<f64> {
    let t = bartlett_factor(df, root.nrows(), rng);
    let gt = root * t;
    symmetrized(&gt * gt.transpose())
}

fn check_df(df: f64, q: usize) -> Result<()> {
    if !df.is_finite() || df < q as f64 {
        return Err(Error::Domain(format!(
            "Wishart degrees of freedom {df} below dimension {q}"
        )));
    }
    Ok(())
}

/// Bartlett draw from `W_q(df, S)`; `df` need not be an integer.
pub fn sample_wishart<R: Rng + ?Sized>(df: f64, s: &SpdMatrix, rng: &mut R) -> Result<SpdMatrix> {
    check_df(df, s.dim())?;
    let l = cholesky_lower(&s.0)?;
    Ok(SpdMatrix(sample_wishart_with_root(df, &l, rng)))
}

/// Log density of `W_q(df, S)` from precomputed pieces:
/// `log|X|`, `tr(S⁻¹X)` and `log|S|`.
pub fn wishart_logpdf_parts(log_det_x: f64, trace_sinv_x: f64, log_det_s: f64, df: f64, q: usize) -> f64 {
    let qf = q as f64;
    0.5 * (df - qf - 1.0) * log_det_x
        - 0.5 * trace_sinv_x
        - 0.5 * df * qf * LN_2
        - 0.5 * df * log_det_s
        - log_mvgamma_unchecked(q, 0.5 * df)
}

/// Exact log density of `X` under `W_q(df, S)`.
pub fn wishart_logpdf(x: &SpdMatrix, df: f64, s: &SpdMatrix) -> Result<f64> {
    if x.dim() != s.dim() {
        return Err(Error::Dimension(format!(
            "Wishart variate is {}x{}, scale is {}x{}",
            x.dim(),
            x.dim(),
            s.dim(),
            s.dim()
        )));
    }
    let q = s.dim();
    check_df(df, q)?;
    let ls = cholesky_lower(&s.0)?;
    let lx = cholesky_lower(&x.0)?;
    // tr(S⁻¹X) = ‖Ls⁻¹·Lx‖²_F
    let m = lower_inverse(&ls) * &lx;
    let trace = m.norm_squared();
    Ok(wishart_logpdf_parts(
        log_det_from_cholesky(&lx),
        trace,
        log_det_from_cholesky(&ls),
        df,
        q,
    ))
}

fn log_mvgamma_unchecked(q: usize, a: f64) -> f64 {
    let qf = q as f64;
    let mut s = 0.25 * qf * (qf - 1.0) * LN_PI;
    for i in 1..=q {
        s += ln_gamma(a + 0.5 * (1.0 - i as f64));
    }
    s
}

/// `log Γ_q(a)`, defined for `a > (q - 1)/2`.
pub fn log_mvgamma(q: usize, a: f64) -> Result<f64> {
    if q == 0 {
        return Err(Error::Domain("multivariate gamma of dimension 0".into()));
    }
    if !(a > 0.5 * (q as f64 - 1.0)) {
        return Err(Error::Domain(format!(
            "log multivariate gamma needs a > {}, got {a}",
            0.5 * (q as f64 - 1.0)
        )));
    }
    Ok(log_mvgamma_unchecked(q, a))
}

/// `(diag P)^{-1/2} P (diag P)^{-1/2}` on a raw matrix.
pub(crate) fn correlation_of(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = p.nrows();
    let mut inv_sd = Vec::with_capacity(n);
    for i in 0..n {
        let v = p[(i, i)];
        if !(v >= VARIANCE_FLOOR) || !v.is_finite() {
            return Err(Error::DegenerateVariance { index: i, value: v });
        }
        inv_sd.push(1.0 / v.sqrt());
    }
    let mut c = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let r = (0.5 * (p[(i, j)] + p[(j, i)]) * inv_sd[i] * inv_sd[j]).clamp(-1.0, 1.0);
            c[(i, j)] = r;
            c[(j, i)] = r;
        }
    }
    Ok(c)
}

/// Standardizes a covariance matrix to its correlation matrix.
pub fn standardize_corr(p: &SpdMatrix) -> Result<CorrelationMatrix> {
    Ok(CorrelationMatrix(correlation_of(&p.0)?))
}

/// Log density of `N(mean, cov)` at `x`.
pub fn mvn_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let l = cholesky_lower(cov)?;
    let z = lower_inverse(&l) * (x - mean);
    Ok(-0.5 * z.norm_squared() - 0.5 * log_det_from_cholesky(&l) - 0.5 * x.len() as f64 * LN_2PI)
}

/// Draws `N(0, L·Lᵀ)` given the lower factor.
pub fn sample_mvn_root<R: Rng + ?Sized>(root: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let z = DVector::<f64>::from_fn(root.ncols(), |_, _| rng.sample(StandardNormal));
    root * z
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Random SPD matrix with eigenvalues log-uniform over `[1, cond]`,
    /// rescaled by `scale`.
    pub fn random_spd<R: Rng>(q: usize, cond: f64, scale: f64, rng: &mut R) -> DMatrix<f64> {
        let g = DMatrix::<f64>::from_fn(q, q, |_, _| rng.sample(StandardNormal));
        let qr = g.qr();
        let qm = qr.q();
        let vals: Vec<f64> = (0..q)
            .map(|i| {
                let u = if q == 1 { 0.5 } else { i as f64 / (q - 1) as f64 };
                scale * cond.powf(u)
            })
            .collect();
        let d = DMatrix::from_diagonal(&DVector::from_vec(vals));
        symmetrized(&qm * d * qm.transpose())
    }

    pub fn random_rotation<R: Rng>(q: usize, rng: &mut R) -> DMatrix<f64> {
        let g = DMatrix::<f64>::from_fn(q, q, |_, _| rng.sample(StandardNormal));
        g.qr().q()
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> SpdMatrix {
        SpdMatrix::new(DMatrix::from_diagonal(&DVector::from_row_slice(v))).unwrap()
    }

    #[test]
    fn cholesky_identity_and_diagonal() {
        let l = cholesky_spd(&SpdMatrix::identity(3)).unwrap();
        assert_eq!(l, DMatrix::identity(3, 3));
        let l = cholesky_spd(&diag(&[4.0, 9.0])).unwrap();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
    }

    #[test]
    fn cholesky_multiplies_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_spd(5, 1e3, 1.0, &mut rng);
        let l = cholesky_lower(&m).unwrap();
        let err = (&l * l.transpose() - &m).norm() / m.norm();
        assert!(err < 1e-10, "{err}");
        for i in 0..5 {
            for j in (i + 1)..5 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn cholesky_names_failing_pivot() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 2.0, 1.0]);
        match cholesky_lower(&m) {
            Err(Error::Decomposition { index, value }) => {
                assert_eq!(index, 2);
                assert!(value < 0.0);
            }
            other => panic!("expected decomposition failure, got {other:?}"),
        }
    }

    #[test]
    fn spd_rejects_asymmetric_and_indefinite() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.2, 1.0]);
        assert!(matches!(SpdMatrix::new(asym), Err(Error::NotSpd(_))));
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(SpdMatrix::new(indef).is_err());
    }

    #[test]
    fn spd_power_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = SpdMatrix::new(random_spd(4, 50.0, 0.3, &mut rng)).unwrap();
        assert_eq!(spd_power(&p, 0.0).unwrap(), SpdMatrix::identity(4));

        let r = spd_power(&diag(&[4.0, 9.0]), -0.5).unwrap();
        let m = r.as_matrix();
        assert!((m[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((m[(1, 1)] - 1.0 / 3.0).abs() < 1e-14);
        assert!(m[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn spd_power_splits_exponent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = SpdMatrix::new(random_spd(3, 1e4, 2.0, &mut rng)).unwrap();
            let a = spd_power(&p, 0.4).unwrap();
            let b = spd_power(&p, 0.6).unwrap();
            let prod = a.as_matrix() * b.as_matrix();
            let err = (prod - p.as_matrix()).norm() / p.as_matrix().norm();
            assert!(err < 1e-9, "{err}");
        }
    }

    #[test]
    fn spd_power_fails_below_floor() {
        let p = SpdMatrix::from_trusted(DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 1e-14])));
        assert!(matches!(
            spd_power(&p, -0.4),
            Err(Error::NearSingular { .. })
        ));
        assert!(spd_power_with_floor(&p, -0.4, 1e-16).is_ok());
    }

    #[test]
    fn wishart_scalar_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let s = diag(&[0.7]);
        let df = 4.5;
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let x = sample_wishart(df, &s, &mut rng).unwrap().as_matrix()[(0, 0)];
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        assert!((mean / (df * 0.7) - 1.0).abs() < 0.02, "{mean}");
        // s·χ²(df) has variance 2·df·s²
        let var = sumsq / n as f64 - mean * mean;
        assert!((var / (2.0 * df * 0.49) - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn wishart_mean_within_three_se() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let q = 2;
        let df = 25.0;
        let s = SpdMatrix::new(DMatrix::identity(q, q) / 25.0).unwrap();
        let n = 100_000;
        let mut sum = DMatrix::<f64>::zeros(q, q);
        for _ in 0..n {
            sum += sample_wishart(df, &s, &mut rng).unwrap().as_matrix();
        }
        let mean = sum / n as f64;
        let sm = s.as_matrix();
        for i in 0..q {
            for j in 0..q {
                let var = df * (sm[(i, j)].powi(2) + sm[(i, i)] * sm[(j, j)]);
                let se = (var / n as f64).sqrt();
                let expect = df * sm[(i, j)];
                assert!((mean[(i, j)] - expect).abs() < 3.0 * se, "({i},{j}) {}", mean[(i, j)]);
                if i == j {
                    assert!((mean[(i, j)] - 1.0).abs() < 0.02);
                }
            }
        }
    }

    #[test]
    fn wishart_draws_at_minimal_df_are_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let s = SpdMatrix::identity(4);
        for _ in 0..2000 {
            let x = sample_wishart(4.0, &s, &mut rng).unwrap();
            assert!(cholesky_spd(&x).is_ok());
        }
        assert!(matches!(
            sample_wishart(3.5, &s, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn wishart_logpdf_matches_scaled_chi_square() {
        let s = 0.8;
        let df = 6.3;
        for i in 1..=20 {
            let x = 0.25 * i as f64;
            // x = s·c with c ~ χ²(df)
            let c = x / s;
            let expect = (0.5 * df - 1.0) * c.ln() - 0.5 * c - 0.5 * df * LN_2 - ln_gamma(0.5 * df) - s.ln();
            let got = wishart_logpdf(&diag(&[x]), df, &diag(&[s])).unwrap();
            assert!((got - expect).abs() < 1e-10, "x={x}: {got} vs {expect}");
        }
    }

    #[test]
    fn wishart_logpdf_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..10 {
            let x = random_spd(3, 20.0, 1.0, &mut rng);
            let s = random_spd(3, 10.0, 0.5, &mut rng);
            let r = random_rotation(3, &mut rng);
            let a = wishart_logpdf(&SpdMatrix::from_trusted(x.clone()), 7.2, &SpdMatrix::from_trusted(s.clone())).unwrap();
            let xr = SpdMatrix::from_trusted(&r * &x * r.transpose());
            let sr = SpdMatrix::from_trusted(&r * &s * r.transpose());
            let b = wishart_logpdf(&xr, 7.2, &sr).unwrap();
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn wishart_density_integrates_to_one() {
        // q = 2, df = 5, S = I over x11, x22 ∈ (0, 40], x12 ∈ (-40, 40).
        let s = SpdMatrix::identity(2);
        let n = 80;
        let h = 40.0 / n as f64;
        let mut total = 0.0;
        for a in 0..n {
            let x11 = (a as f64 + 0.5) * h;
            for b in 0..n {
                let x22 = (b as f64 + 0.5) * h;
                let lim = (x11 * x22).sqrt();
                for c in 0..(2 * n) {
                    let x12 = -40.0 + (c as f64 + 0.5) * h;
                    if x12.abs() >= lim {
                        continue;
                    }
                    let x = SpdMatrix::from_trusted(DMatrix::from_row_slice(2, 2, &[x11, x12, x12, x22]));
                    total += wishart_logpdf(&x, 5.0, &s).unwrap().exp() * h * h * h;
                }
            }
        }
        assert!((total - 1.0).abs() < 0.05, "{total}");
    }

    #[test]
    fn wishart_logpdf_mode_along_scaling() {
        // Along X = c·X0 the log density is ((df-q-1)q/2)·log c - c·tr(S⁻¹X0)/2 + const,
        // maximized at c* = (df-q-1)·q / tr(S⁻¹X0).
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x0 = random_spd(2, 5.0, 1.0, &mut rng);
        let s = random_spd(2, 3.0, 0.4, &mut rng);
        let df = 9.0;
        let tr = (spd_inverse(&s).unwrap() * &x0).trace();
        let c_star = (df - 3.0) * 2.0 / tr;
        let sp = SpdMatrix::from_trusted(s);
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in 1..4000 {
            let c = c_star * i as f64 / 2000.0;
            let v = wishart_logpdf(&SpdMatrix::from_trusted(&x0 * c), df, &sp).unwrap();
            if v > best.1 {
                best = (c, v);
            }
        }
        assert!((best.0 / c_star - 1.0).abs() < 1e-3, "{} vs {}", best.0, c_star);
    }

    #[test]
    fn wishart_logpdf_dimension_mismatch() {
        assert!(matches!(
            wishart_logpdf(&SpdMatrix::identity(2), 5.0, &SpdMatrix::identity(3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn log_mvgamma_values() {
        assert!((log_mvgamma(1, 0.5).unwrap() - 0.5 * LN_PI).abs() < 1e-12);
        assert!((log_mvgamma(1, 0.5).unwrap() - 0.5724).abs() < 1e-4);
        for a in [0.3, 1.0, 2.7, 11.0] {
            assert!((log_mvgamma(1, a).unwrap() - ln_gamma(a)).abs() < 1e-12);
        }
        let expect = (LN_PI.exp().sqrt() * 2.0 * ln_gamma(2.5).exp()).ln();
        assert!((log_mvgamma(2, 3.0).unwrap() - expect).abs() < 1e-12);
        assert!(log_mvgamma(3, 1.0).is_err());
        assert!(log_mvgamma(2, 0.5).is_err());
    }

    #[test]
    fn standardize_examples() {
        let c = standardize_corr(&diag(&[3.0, 0.2, 7.0])).unwrap();
        assert_eq!(c.as_matrix(), &DMatrix::identity(3, 3));
        let p = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 1.0])).unwrap();
        let c = standardize_corr(&p).unwrap();
        assert_eq!(c.get(0, 0), 1.0);
        assert!((c.get(0, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn standardize_rejects_degenerate_variance() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            correlation_of(&p),
            Err(Error::DegenerateVariance { index: 1, .. })
        ));
    }

    #[test]
    fn normal_logpdf_agrees_with_mvn() {
        let x = DVector::from_row_slice(&[0.3]);
        let m = DVector::from_row_slice(&[-0.1]);
        let cov = DMatrix::from_row_slice(1, 1, &[2.5]);
        let a = mvn_logpdf(&x, &m, &cov).unwrap();
        assert!((a - normal_logpdf(0.3, -0.1, 2.5)).abs() < 1e-14);
    }
}
