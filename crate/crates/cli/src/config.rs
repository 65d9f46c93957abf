//! Run configuration: a TOML file merged with command-line flags.

use std::path::{Path, PathBuf};

use odcfmsv_core::gibbs::McmcConfig;
use odcfmsv_core::model::{ModelVariant, PriorConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub returns: Option<PathBuf>,
    pub factors: Option<PathBuf>,
    pub rescale_percent: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    pub start: Option<usize>,
    pub periods: Option<usize>,
    pub models: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub reps: Option<usize>,
    pub t: Option<usize>,
    pub dgp: Option<String>,
}

/// Contents of a `--config` file. Every key is optional; priors default to
/// the standard settings, so a minimal file names only the data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub variant: Option<String>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    /// `"equal"` or a path to a weight file.
    pub weights: Option<String>,
    pub data: DataSection,
    pub mcmc: Option<McmcConfig>,
    pub priors: PriorConfig,
    pub forecast: ForecastSection,
    pub compare: CompareSection,
}

impl FileConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    /// Reads a config file; relative data paths are taken relative to it.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| e.context(&path.display().to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        rebase(&mut cfg.data.returns);
        rebase(&mut cfg.data.factors);
        Ok(cfg)
    }
}

/// Where portfolio weights come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightSource {
    Equal,
    File(PathBuf),
}

impl WeightSource {
    pub fn parse(s: &str) -> WeightSource {
        if s.eq_ignore_ascii_case("equal") {
            WeightSource::Equal
        } else {
            WeightSource::File(PathBuf::from(s))
        }
    }

    pub fn resolve(&self, p: usize) -> CliResult<Vec<f64>> {
        match self {
            WeightSource::Equal => Ok(vec![1.0 / p as f64; p]),
            WeightSource::File(path) => {
                let w = crate::io::read_weights(path)?;
                if w.len() != p {
                    return Err(CliError::Data(format!("{}: {} weights for {p} series", path.display(), w.len())));
                }
                Ok(w)
            }
        }
    }
}

/// Fully resolved settings of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub returns: Option<PathBuf>,
    pub factors: Option<PathBuf>,
    pub rescale_percent: bool,
    pub variant: ModelVariant,
    pub priors: PriorConfig,
    pub mcmc: McmcConfig,
    pub start: Option<usize>,
    pub periods: Option<usize>,
    pub models: Vec<ModelVariant>,
    pub weights: WeightSource,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
    pub reps: Option<usize>,
    pub t: Option<usize>,
    pub dgp: Option<String>,
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub returns: Option<PathBuf>,
    pub factors: Option<PathBuf>,
    pub rescale_percent: bool,
    pub variant: Option<String>,
    pub burn_in: Option<usize>,
    pub kept: Option<usize>,
    pub thin: Option<usize>,
    pub start: Option<usize>,
    pub periods: Option<usize>,
    pub models: Option<String>,
    pub weights: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub reps: Option<usize>,
    pub t: Option<usize>,
    pub dgp: Option<String>,
}

pub fn parse_variant(s: &str) -> CliResult<ModelVariant> {
    s.parse().map_err(|e: odcfmsv_core::Error| CliError::Usage(e.to_string()))
}

pub fn parse_models(s: &str) -> CliResult<Vec<ModelVariant>> {
    let models = s
        .split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(parse_variant)
        .collect::<CliResult<Vec<_>>>()?;
    if models.is_empty() || models.len() > 2 {
        return Err(CliError::Usage(format!("--models needs one or two variants, got '{s}'")));
    }
    if models.len() == 2 && models[0] == models[1] {
        return Err(CliError::Usage("--models names the same variant twice".into()));
    }
    Ok(models)
}

impl RunConfig {
    pub fn resolve(file: FileConfig, o: Overrides) -> CliResult<RunConfig> {
        let mut mcmc = file.mcmc.clone().unwrap_or_default();
        let variant = match o.variant.as_deref().or(file.variant.as_deref()) {
            Some(v) => parse_variant(v)?,
            None => mcmc.variant,
        };
        let seed = o.seed.or(file.seed).unwrap_or(mcmc.seed);
        mcmc.variant = variant;
        mcmc.seed = seed;
        if let Some(v) = o.burn_in {
            mcmc.burn_in = v;
        }
        if let Some(v) = o.kept {
            mcmc.kept = v;
        }
        if let Some(v) = o.thin {
            mcmc.thin = v;
        }
        mcmc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        file.priors.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let models = match (&o.models, &file.forecast.models) {
            (Some(s), _) => parse_models(s)?,
            (None, Some(list)) => parse_models(&list.join(","))?,
            (None, None) => vec![ModelVariant::Odcfmsv, ModelVariant::Pg],
        };
        let periods = o.periods.or(file.forecast.periods);
        if periods == Some(0) {
            return Err(CliError::Usage("--periods must be at least 1".into()));
        }
        let returns = o.returns.or(file.data.returns);
        let factors = o.factors.or(file.data.factors);
        for p in returns.iter().chain(factors.iter()) {
            if !p.exists() {
                return Err(CliError::Data(format!("{}: no such file", p.display())));
            }
        }
        Ok(RunConfig {
            returns,
            factors,
            rescale_percent: o.rescale_percent || file.data.rescale_percent,
            variant,
            priors: file.priors,
            mcmc,
            start: o.start.or(file.forecast.start),
            periods,
            models,
            weights: WeightSource::parse(o.weights.as_deref().or(file.weights.as_deref()).unwrap_or("equal")),
            out: o.out.or(file.out).unwrap_or_else(|| PathBuf::from("odcfmsv-out")),
            seed,
            threads: o.threads.or(file.threads),
            reps: o.reps.or(file.compare.reps),
            t: o.t.or(file.compare.t),
            dgp: o.dgp.or(file.compare.dgp),
        })
    }
}
