//! Joint-distribution test of the sampler (Geweke, 2004).
//!
//! Two samplers of the joint law of parameters, latents and data are
//! compared. The marginal-conditional one draws everything forward from the
//! prior. The successive-conditional one alternates a full sweep with a
//! fresh draw of the data given the current state. If every block samples
//! its exact conditional, both have the same stationary law and the means
//! of any test function agree.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{param_names, param_values, Chain, ChainState, McmcConfig};
use crate::error::{Error, Result};
use crate::matrixdist::{cholesky_lower, correlation_of, sample_wishart, SpdMatrix};
use crate::model::{simulate_corr_path, CorrDynParams, FactorDataset, ModelState, ModelVariant, PriorConfig, SvParams};

fn inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    let g: f64 = Gamma::new(shape, 1.0)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(rng);
    Ok(scale / g)
}

fn prior_sv<R: Rng + ?Sized>(priors: &PriorConfig, t: usize, rng: &mut R) -> Result<(SvParams, Vec<f64>)> {
    let z: f64 = rng.sample(StandardNormal);
    let mu = priors.mu_mean + priors.mu_var.sqrt() * z;
    let u: f64 = Beta::new(priors.phi_a, priors.phi_b)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(rng);
    // keep φ strictly inside (-1, 1)
    let phi = (2.0 * u - 1.0).clamp(-1.0 + 1e-12, 1.0 - 1e-12);
    let s2 = inverse_gamma(priors.sigma_eta_shape, priors.sigma_eta_scale, rng)?;
    let sv = SvParams::new(mu, phi, s2)?;
    let h = sv.simulate_path(t, rng);
    Ok((sv, h))
}

/// Draws parameters and latent paths from the prior.
pub fn sample_prior_state<R: Rng + ?Sized>(
    priors: &PriorConfig,
    variant: ModelVariant,
    t: usize,
    p: usize,
    q: usize,
    rng: &mut R,
) -> Result<ModelState> {
    priors.validate()?;
    let scale = SpdMatrix::new(DMatrix::identity(q, q) * priors.a_inv_scale(q))?;
    let a = sample_wishart(priors.a_inv_df(q), &scale, rng)?.inverse()?;
    let d = rng.random_range(priors.d_range.0..priors.d_range.1);
    let k = q as f64 + Exp::new(priors.lambda0).map_err(|e| Error::InvalidParameter(e.to_string()))?.sample(rng);
    let corr = CorrDynParams::new(a, d, k)?;
    let p_path = simulate_corr_path(&corr, t, rng)?;

    let mut b = DMatrix::<f64>::zeros(p, q);
    let mut omega = Vec::new();
    let mut error_sv = Vec::new();
    let mut error_h = DMatrix::<f64>::zeros(t, 0);
    match variant {
        ModelVariant::SvErr => {
            for v in b.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = priors.c0 * z;
            }
            error_h = DMatrix::zeros(t, p);
            for j in 0..p {
                let (sv, h) = prior_sv(priors, t, rng)?;
                error_sv.push(sv);
                error_h.set_column(j, &DVector::from_vec(h));
            }
        }
        _ => {
            for j in 0..p {
                let v = inverse_gamma(0.5 * priors.nu0, 0.5 * priors.nu0 * priors.s0, rng)?;
                omega.push(v);
                for i in 0..q {
                    let z: f64 = rng.sample(StandardNormal);
                    b[(j, i)] = v.sqrt() * z;
                }
            }
        }
    }
    let mut factor_sv = Vec::new();
    let mut h = DMatrix::<f64>::zeros(t, 0);
    if variant.has_factor_sv() {
        h = DMatrix::zeros(t, q);
        for i in 0..q {
            let (sv, path) = prior_sv(priors, t, rng)?;
            factor_sv.push(sv);
            h.set_column(i, &DVector::from_vec(path));
        }
    }
    Ok(ModelState {
        b,
        omega,
        factor_sv,
        h,
        error_sv,
        error_h,
        p_path,
        corr,
    })
}

/// Draws `(F, Y)` given every parameter and latent path.
pub fn simulate_data_given_state<R: Rng + ?Sized>(
    state: &ModelState,
    variant: ModelVariant,
    rng: &mut R,
) -> Result<FactorDataset> {
    let (t_len, p, q) = (state.len(), state.p(), state.q());
    let mut f = DMatrix::<f64>::zeros(t_len, q);
    for t in 0..t_len {
        let pm = state.p_path[t].as_matrix();
        let l = match variant {
            ModelVariant::Pg => cholesky_lower(pm)?,
            _ => cholesky_lower(&correlation_of(pm)?)?,
        };
        let z = DVector::<f64>::from_fn(q, |_, _| rng.sample(StandardNormal));
        let e = l * z;
        for i in 0..q {
            f[(t, i)] = match variant {
                ModelVariant::Pg => e[i],
                _ => (0.5 * state.h[(t, i)]).exp() * e[i],
            };
        }
    }
    let mut y = &f * state.b.transpose();
    for t in 0..t_len {
        for j in 0..p {
            let var = match variant {
                ModelVariant::SvErr => state.error_h[(t, j)].exp(),
                _ => state.omega[j],
            };
            let z: f64 = rng.sample(StandardNormal);
            y[(t, j)] += var.sqrt() * z;
        }
    }
    FactorDataset::new(y, f)
}

/// Settings of one joint-distribution test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeConfig {
    pub variant: ModelVariant,
    pub t: usize,
    pub p: usize,
    pub q: usize,
    pub priors: PriorConfig,
    pub marginal_draws: usize,
    pub sweeps: usize,
    pub burn_in: usize,
    pub batches: usize,
    pub sv_correction: bool,
    pub seed: u64,
}

impl GewekeConfig {
    /// Small problem with priors tight enough that prior draws stay in a
    /// numerically benign region.
    pub fn small(variant: ModelVariant) -> Self {
        let q = 2;
        GewekeConfig {
            variant,
            t: 30,
            p: 3,
            q,
            priors: PriorConfig {
                mu_var: 1.0,
                a_inv_df: Some(q as f64 + 4.0),
                a_inv_scale: Some(1.0 / (q as f64 + 4.0)),
                d_range: (-0.5, 0.5),
                lambda0: 0.05,
                nu0: 10.0,
                s0: 0.5,
                ..PriorConfig::default()
            },
            marginal_draws: 50_000,
            sweeps: 50_000,
            burn_in: 1_000,
            batches: 50,
            sv_correction: true,
            seed: 2004,
        }
    }
}

/// Per test function: both means, their standard errors and the z score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeStat {
    pub name: String,
    pub marginal_mean: f64,
    pub marginal_se: f64,
    pub successive_mean: f64,
    pub successive_se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeReport {
    pub variant: ModelVariant,
    pub stats: Vec<GewekeStat>,
    /// Prior draws discarded because the P path degenerated.
    pub skipped: usize,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.stats.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
    }

    /// Test functions whose |z| exceeds the threshold.
    pub fn failures(&self, threshold: f64) -> Vec<&GewekeStat> {
        self.stats.iter().filter(|s| !(s.z.abs() <= threshold)).collect()
    }
}

/// Test function names: every scalar parameter, then summaries of the
/// latent paths.
pub fn test_function_names(variant: ModelVariant, p: usize, q: usize) -> Vec<String> {
    let mut names = param_names(variant, p, q);
    names.push("mean_corr".into());
    if variant.has_factor_sv() {
        names.push("mean_h".into());
    }
    names
}

/// Values of the test functions at a state.
pub fn test_functions(state: &ModelState, variant: ModelVariant) -> Result<Vec<f64>> {
    let mut v = param_values(state, variant);
    let mut c = 0.0;
    for pt in &state.p_path {
        c += correlation_of(pt.as_matrix())?[(1, 0)];
    }
    v.push(c / state.len() as f64);
    if variant.has_factor_sv() {
        v.push(state.h.mean());
    }
    Ok(v)
}

fn mean_se_iid(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Mean and batch-means standard error.
pub fn mean_se_batched(x: &[f64], batches: usize) -> (f64, f64) {
    let size = x.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let m = x[..size * batches].iter().sum::<f64>() / (size * batches) as f64;
    let (_, se) = mean_se_iid(&means);
    (m, se)
}

fn transpose(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.first().map_or(0, Vec::len);
    (0..n).map(|i| rows.iter().map(|r| r[i]).collect()).collect()
}

/// Runs both samplers and compares the means of every test function.
pub fn run_geweke(config: &GewekeConfig) -> Result<GewekeReport> {
    if config.q < 2 || config.batches < 2 || config.sweeps < config.batches {
        return Err(Error::InvalidParameter("Geweke test needs q >= 2 and enough sweeps".into()));
    }
    let (variant, t, p, q) = (config.variant, config.t, config.p, config.q);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Draws whose simulated P path degenerates numerically are skipped;
    // the sampler rejects the same states, and they are rare (about 1e-4)
    // under the priors of `GewekeConfig::small`.
    let mut marginal = Vec::with_capacity(config.marginal_draws);
    let mut skipped = 0usize;
    while marginal.len() < config.marginal_draws {
        match sample_prior_state(&config.priors, variant, t, p, q, &mut rng) {
            Ok(s) => marginal.push(test_functions(&s, variant)?),
            Err(e) if e.is_numerical() && skipped < config.marginal_draws / 100 => skipped += 1,
            Err(e) => return Err(e),
        }
    }

    let start = loop {
        match sample_prior_state(&config.priors, variant, t, p, q, &mut rng) {
            Err(e) if e.is_numerical() => continue,
            other => break other?,
        }
    };

    let data = simulate_data_given_state(&start, variant, &mut rng)?;
    let mcmc = McmcConfig {
        burn_in: usize::MAX / 2,
        kept: 1,
        seed: rng.random(),
        variant,
        adapt: false,
        sv_correction: config.sv_correction,
        log_joint: false,
        ..McmcConfig::default()
    };
    let mut chain = Chain::with_state(data, config.priors.clone(), mcmc, ChainState::from_model(&start))?;
    let mut successive = Vec::with_capacity(config.sweeps);
    for s in 0..config.burn_in + config.sweeps {
        chain.step()?;
        let state = chain.state().model_state();
        let data = simulate_data_given_state(&state, variant, chain.rng())?;
        chain.replace_data(data)?;
        if s >= config.burn_in {
            successive.push(test_functions(&state, variant)?);
        }
    }

    let names = test_function_names(variant, p, q);
    let mc = transpose(&marginal);
    let sc = transpose(&successive);
    let stats = names
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let (m1, s1) = mean_se_iid(&mc[i]);
            let (m2, s2) = mean_se_batched(&sc[i], config.batches);
            GewekeStat {
                name,
                marginal_mean: m1,
                marginal_se: s1,
                successive_mean: m2,
                successive_se: s2,
                z: (m1 - m2) / (s1 * s1 + s2 * s2).sqrt(),
            }
        })
        .collect();
    Ok(GewekeReport { variant, stats, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::log_joint;

    #[test]
    fn prior_states_are_valid_and_have_prior_moments() {
        let cfg = GewekeConfig::small(ModelVariant::Odcfmsv);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 4000;
        let mut d = 0.0;
        let mut k = 0.0;
        for _ in 0..n {
            let s = sample_prior_state(&cfg.priors, ModelVariant::Odcfmsv, 10, 3, 2, &mut rng).unwrap();
            s.validate(ModelVariant::Odcfmsv).unwrap();
            let data = simulate_data_given_state(&s, ModelVariant::Odcfmsv, &mut rng).unwrap();
            assert!(log_joint(&data, &s, &cfg.priors, ModelVariant::Odcfmsv).unwrap().is_finite());
            d += s.corr.d;
            k += s.corr.k;
        }
        let (lo, hi) = cfg.priors.d_range;
        let dm = d / n as f64 - (lo + hi) / 2.0;
        assert!(dm.abs() < 3.0 * (hi - lo) / (12.0 * n as f64).sqrt(), "{dm}");
        let km = k / n as f64 - 2.0;
        let scale = 1.0 / cfg.priors.lambda0;
        assert!((km - scale).abs() < 3.0 * scale / (n as f64).sqrt(), "{km}");
    }

    #[test]
    fn batch_means_of_iid_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let (m, se) = mean_se_batched(&x, 50);
        let (m2, se2) = mean_se_iid(&x);
        assert!((m - m2).abs() < 1e-12);
        assert!((se / se2 - 1.0).abs() < 0.3);
    }
}
