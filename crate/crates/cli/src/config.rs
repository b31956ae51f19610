//! TOML run configuration and its mapping onto library types.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use monogp::data::{ConstraintConfig, CurveKind, SimulateConfig};
use monogp::evaluation::{CvConfig, CvScheme, ModelVariant};
use monogp::inference::McmcConfig;
use monogp::model::PriorSpec;

use crate::CliError;

/// Feature lengthscale groups: h, s, i, (sx, sy), t.
pub const N_GROUPS: usize = 5;

/// Parsed configuration file. Every section is optional and falls back to
/// defaults, so a minimal fit config is just `dataset = "file.csv"`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Training dataset CSV (fit, cv).
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub inference: InferenceSection,
    #[serde(default)]
    pub cv: CvSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// `deriv`, `noderiv`, or `both` (cv only).
    pub variant: String,
    /// Anchor f = 0 at t = 0 for every location.
    pub zero_start: bool,
    /// Time indices carrying df/dt > 0 sign observations.
    pub monotonicity_times: Vec<usize>,
    /// Anchor df/dt = 0 at the final time point.
    pub saturation: bool,
    /// Probit strictness v.
    pub strictness: f64,
    /// Half-normal scale of the amplitude prior.
    pub alpha_prior_scale: f64,
    /// Half-normal scale of the noise prior.
    pub sigma_prior_scale: f64,
    /// Gamma shape per lengthscale group [h, s, i, spatial, time].
    pub lengthscale_prior_shape: Vec<f64>,
    /// Gamma rate per lengthscale group.
    pub lengthscale_prior_rate: Vec<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let prior = PriorSpec::default_for_groups(N_GROUPS);
        let cons = ConstraintConfig::default();
        Self {
            variant: "deriv".into(),
            zero_start: cons.zero_start,
            monotonicity_times: cons.monotonicity_times,
            saturation: cons.saturation,
            strictness: cons.strictness,
            alpha_prior_scale: prior.alpha_scale,
            sigma_prior_scale: prior.sigma_scale,
            lengthscale_prior_shape: prior.lengthscale_shape,
            lengthscale_prior_rate: prior.lengthscale_rate,
        }
    }
}

impl ModelSection {
    pub fn constraints(&self) -> ConstraintConfig {
        ConstraintConfig {
            zero_start: self.zero_start,
            monotonicity_times: self.monotonicity_times.clone(),
            saturation: self.saturation,
            strictness: self.strictness,
        }
    }

    pub fn prior(&self) -> Result<PriorSpec, CliError> {
        let prior = PriorSpec {
            alpha_scale: self.alpha_prior_scale,
            sigma_scale: self.sigma_prior_scale,
            lengthscale_shape: self.lengthscale_prior_shape.clone(),
            lengthscale_rate: self.lengthscale_prior_rate.clone(),
        };
        prior.validate(N_GROUPS)?;
        Ok(prior)
    }

    pub fn variant(&self, flag: Option<VariantChoice>) -> Result<VariantChoice, CliError> {
        match flag {
            Some(v) => Ok(v),
            None => self.variant.parse(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceSection {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub ess_sweeps: usize,
    pub latent_thin: usize,
    pub temper_levels: usize,
    /// Joint-system row cap; 0 disables. `MONOGP_MAX_DIM` overrides it.
    pub max_rows: usize,
}

impl Default for InferenceSection {
    fn default() -> Self {
        let m = McmcConfig::default();
        Self {
            chains: m.chains,
            warmup: m.warmup,
            draws: m.draws,
            seed: m.seed,
            target_accept: m.target_accept,
            ess_sweeps: m.ess_sweeps,
            latent_thin: m.latent_thin,
            temper_levels: m.temper_levels,
            max_rows: m.max_rows,
        }
    }
}

impl InferenceSection {
    /// Builds the sampler configuration, applying flag overrides and the
    /// `MONOGP_MAX_DIM` environment variable.
    pub fn mcmc(&self, o: &Overrides) -> Result<McmcConfig, CliError> {
        let max_rows = match std::env::var("MONOGP_MAX_DIM") {
            Ok(s) => s.trim().parse::<usize>().map_err(|_| {
                CliError::Config(format!("MONOGP_MAX_DIM must be a non-negative integer, got `{s}`"))
            })?,
            Err(_) => self.max_rows,
        };
        Ok(McmcConfig {
            chains: o.chains.unwrap_or(self.chains),
            warmup: o.warmup.unwrap_or(self.warmup),
            draws: o.draws.unwrap_or(self.draws),
            seed: o.seed.unwrap_or(self.seed),
            target_accept: self.target_accept,
            init_jitter_sd: McmcConfig::default().init_jitter_sd,
            ess_sweeps: self.ess_sweeps,
            latent_thin: self.latent_thin,
            max_rows,
            temper_levels: self.temper_levels,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvSection {
    /// `cv1` (leave one observation), `cv2` (leave one location), or `cv3`
    /// (leave the tail of every curve).
    pub scheme: String,
    /// Held-out tail length for cv3.
    pub tail_length: usize,
    /// Refit hyperparameters on every fold instead of reusing the full fit.
    pub refit_per_fold: bool,
    pub hp_subsample: usize,
    pub latent_draws: usize,
    pub ess_warmup: usize,
    pub ess_rewarm: usize,
    pub ess_thin: usize,
}

impl Default for CvSection {
    fn default() -> Self {
        let c = CvConfig::default();
        Self {
            scheme: "cv2".into(),
            tail_length: 7,
            refit_per_fold: c.refit_per_fold,
            hp_subsample: c.hp_subsample,
            latent_draws: c.latent_draws,
            ess_warmup: c.ess_warmup,
            ess_rewarm: c.ess_rewarm,
            ess_thin: c.ess_thin,
        }
    }
}

impl CvSection {
    pub fn scheme(&self, flag: Option<SchemeChoice>) -> Result<CvScheme, CliError> {
        let choice = match flag {
            Some(s) => s,
            None => self.scheme.parse()?,
        };
        Ok(match choice {
            SchemeChoice::Cv1 => CvScheme::LeaveOneObservation,
            SchemeChoice::Cv2 => CvScheme::LeaveOneLocation,
            SchemeChoice::Cv3 => CvScheme::LeaveTail {
                tail_length: self.tail_length,
            },
        })
    }

    pub fn cv_config(&self, mcmc: McmcConfig, prior: PriorSpec) -> CvConfig {
        CvConfig {
            mcmc,
            prior: Some(prior),
            fixed_hp: None,
            refit_per_fold: self.refit_per_fold,
            hp_subsample: self.hp_subsample,
            latent_draws: self.latent_draws,
            ess_warmup: self.ess_warmup,
            ess_rewarm: self.ess_rewarm,
            ess_thin: self.ess_thin,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    /// `monotone-saturating`, `gp-prior`, or `monotone-gp`.
    pub kind: CurveKind,
    pub n_locations: usize,
    pub n_times: usize,
    pub alpha: f64,
    /// Kernel lengthscales [h, s, i, spatial, time] in standardized units.
    pub lengthscales: [f64; 5],
    pub sigma: f64,
    pub amplitude: f64,
    pub decay: f64,
    pub decay_spread: f64,
    pub seed: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let s = SimulateConfig::default();
        Self {
            kind: s.kind,
            n_locations: s.n_locations,
            n_times: s.n_times,
            alpha: s.alpha,
            lengthscales: s.lengthscales,
            sigma: s.sigma,
            amplitude: s.amplitude,
            decay: s.decay,
            decay_spread: s.decay_spread,
            seed: 0,
        }
    }
}

impl SimulateSection {
    pub fn simulate_config(&self) -> SimulateConfig {
        SimulateConfig {
            n_locations: self.n_locations,
            n_times: self.n_times,
            kind: self.kind,
            alpha: self.alpha,
            lengthscales: self.lengthscales,
            sigma: self.sigma,
            amplitude: self.amplitude,
            decay: self.decay,
            decay_spread: self.decay_spread,
        }
    }
}

/// Scheme names accepted on the command line and in `[cv] scheme`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SchemeChoice {
    Cv1,
    Cv2,
    Cv3,
}

impl std::str::FromStr for SchemeChoice {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "cv1" => Ok(Self::Cv1),
            "cv2" => Ok(Self::Cv2),
            "cv3" => Ok(Self::Cv3),
            other => Err(CliError::Config(format!(
                "unknown scheme `{other}`; expected cv1, cv2, or cv3"
            ))),
        }
    }
}

/// Variant names accepted on the command line and in `[model] variant`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum VariantChoice {
    /// Sign observations on the time derivative are part of the model.
    Deriv,
    /// Gaussian rows only.
    Noderiv,
    /// Run both variants and compare (cv only).
    Both,
}

impl VariantChoice {
    pub fn single(self, context: &str) -> Result<ModelVariant, CliError> {
        match self {
            Self::Deriv => Ok(ModelVariant::WithDerivatives),
            Self::Noderiv => Ok(ModelVariant::WithoutDerivatives),
            Self::Both => Err(CliError::Config(format!(
                "variant `both` is only valid for cv; {context} needs deriv or noderiv"
            ))),
        }
    }
}

impl std::str::FromStr for VariantChoice {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "deriv" => Ok(Self::Deriv),
            "noderiv" => Ok(Self::Noderiv),
            "both" => Ok(Self::Both),
            other => Err(CliError::Config(format!(
                "unknown variant `{other}`; expected deriv, noderiv, or both"
            ))),
        }
    }
}

/// Command-line overrides applied on top of the file configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub warmup: Option<usize>,
    pub draws: Option<usize>,
}

/// Reads and parses a configuration file, keeping the raw text for
/// snapshotting into the output directory.
pub fn load(path: &Path) -> Result<(FileConfig, String), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Data(format!("cannot read config `{}`: {e}", path.display()))
    })?;
    let cfg: FileConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid config `{}`: {e}", path.display())))?;
    Ok((cfg, text))
}

/// The dataset path is required by fit and cv.
pub fn require_dataset(cfg: &FileConfig) -> Result<PathBuf, CliError> {
    cfg.dataset.clone().ok_or_else(|| {
        CliError::Config("config is missing the top-level `dataset` path".into())
    })
}
