//! Posterior sampling, conditioning, and prediction.
//!
//! Two inference paths share one set of types:
//!
//! * without sign rows the model is jointly Gaussian, so conditioning and
//!   the hyperparameter marginal likelihood are exact ([`condition_gaussian`],
//!   [`log_marginal_likelihood`]),
//! * with sign rows the non-Gaussian probit block is handled by elliptical
//!   slice sampling inside a Metropolis-within-Gibbs cycle
//!   ([`sample_hyperparameters`], [`sample_latents_constrained`]).
//!
//! [`predict`] mixes Gaussian conditionals over posterior draws and reduces
//! exactly to [`condition_gaussian`] when given a single unconstrained draw.

pub mod diagnostics;

pub(crate) mod conditioner;
mod ess;
mod rwm;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernel::{
    cholesky_with_escalation, covariance, cross_covariance, Hyperparameters, LengthscaleMap, Row,
    DEFAULT_JITTER,
};
use crate::math::quantile;
use crate::model::{log_lik_sign, ObservationSet};

pub(crate) use conditioner::Conditioner;
pub(crate) use ess::elliptical_slice_step;
pub use rwm::sample_hyperparameters;
pub(crate) use rwm::SignConditional;

/// Φ⁻¹(0.975), for moment-matched 95% intervals.
pub(crate) const Z_975: f64 = 1.959963984540054;

/// Sampler configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct McmcConfig {
    pub chains: usize,
    /// Adaptation iterations, discarded.
    pub warmup: usize,
    /// Retained draws per chain.
    pub draws: usize,
    pub seed: u64,
    /// Metropolis acceptance target for step-size adaptation.
    pub target_accept: f64,
    /// Standard deviation of the log-scale initialization jitter.
    pub init_jitter_sd: f64,
    /// Elliptical slice sweeps per iteration when sign rows are present.
    pub ess_sweeps: usize,
    /// Keep a full latent reconstruction every this many draws; 0 picks
    /// draws/32 so roughly 32 reconstructions per chain are stored.
    pub latent_thin: usize,
    /// Hard cap on joint system rows; 0 disables the check.
    pub max_rows: usize,
    /// Parallel-tempering rungs per chain (1 disables replica exchange).
    /// Retained draws always come from the untempered rung.
    pub temper_levels: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 1000,
            draws: 1000,
            seed: 0,
            target_accept: 0.3,
            init_jitter_sd: 0.5,
            ess_sweeps: 2,
            latent_thin: 0,
            max_rows: 2000,
            temper_levels: 4,
        }
    }
}

/// A thinned full-latent reconstruction attached to one retained draw.
#[derive(Debug, Clone)]
pub struct LatentDraw {
    /// Index into the chain's retained draws.
    pub draw_index: usize,
    /// Function values at the regular rows then the zero-start anchors.
    pub f: DVector<f64>,
    /// Derivatives at the saturation rows then the sign rows.
    pub fprime: DVector<f64>,
}

/// Retained draws of one chain.
#[derive(Debug, Clone)]
pub struct ChainSamples {
    pub hp: Vec<Hyperparameters>,
    /// Log joint density (hyperparameters and whitened latents) per draw.
    pub log_post: Vec<f64>,
    /// Post-warmup Metropolis acceptance rate.
    pub accept_rate: f64,
    pub latents: Vec<LatentDraw>,
}

/// Posterior draws across chains.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub chains: Vec<ChainSamples>,
    pub map: LengthscaleMap,
    pub warmup: usize,
    pub seed: u64,
}

impl PosteriorSamples {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.chains.first().map_or(0, |c| c.hp.len())
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.hp.len()).sum()
    }

    /// Scalar chains per hyperparameter, named `alpha`, `rho[g]`, `sigma`.
    pub fn parameter_chains(&self) -> Vec<(String, Vec<Vec<f64>>)> {
        let g = self.map.n_groups();
        let mut names = vec!["alpha".to_string()];
        for i in 0..g {
            names.push(format!("rho[{}]", i + 1));
        }
        names.push("sigma".to_string());
        names
            .into_iter()
            .enumerate()
            .map(|(p, name)| {
                let chains = self
                    .chains
                    .iter()
                    .map(|c| {
                        c.hp.iter()
                            .map(|hp| {
                                if p == 0 {
                                    hp.alpha()
                                } else if p <= g {
                                    hp.lengthscales()[p - 1]
                                } else {
                                    hp.sigma()
                                }
                            })
                            .collect()
                    })
                    .collect();
                (name, chains)
            })
            .collect()
    }

    /// Convergence and summary table for all hyperparameters.
    pub fn summaries(&self) -> Result<Vec<diagnostics::ParameterSummary>> {
        diagnostics::summarize_chains(&self.parameter_chains())
    }
}

/// Joint latent draws at the observation rows.
#[derive(Debug, Clone)]
pub struct LatentDraws {
    /// Per draw: f at the regular rows then the zero-start anchors.
    pub f: Vec<DVector<f64>>,
    /// Per draw: df/dt at the saturation rows then the sign rows.
    pub fprime: Vec<DVector<f64>>,
}

/// Whether predictive uncertainty includes the observation noise σ².
///
/// Noise applies to function-value targets only; derivative targets are
/// always latent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoisePolicy {
    LatentOnly,
    ObservationNoise,
}

/// Pointwise predictive distribution at a list of targets.
#[derive(Debug, Clone)]
pub struct PredictiveDistribution {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub lower95: Vec<f64>,
    pub upper95: Vec<f64>,
    /// Per-target marginal predictive samples (rows are draws), present on
    /// the sampling path where intervals are empirical quantiles.
    pub draws: Option<DMatrix<f64>>,
}

/// Canonical Gaussian system of an observation set under `hp`:
/// rows, observed values, and per-row noise variances.
pub(crate) fn gaussian_system(
    obs: &ObservationSet,
    hp: &Hyperparameters,
) -> (Vec<Row>, DVector<f64>, DVector<f64>) {
    let gauss = obs.gaussian_rows();
    let rows: Vec<Row> = gauss.iter().map(|g| g.row.clone()).collect();
    let y = DVector::from_fn(gauss.len(), |i, _| gauss[i].y);
    let noise = DVector::from_fn(gauss.len(), |i, _| gauss[i].kind.variance(hp.sigma()));
    (rows, y, noise)
}

/// Latent rows in canonical order: values at regular rows and anchors,
/// derivatives at saturation and sign rows.
pub(crate) fn latent_rows(obs: &ObservationSet) -> (Vec<Row>, usize) {
    let mut rows: Vec<Row> = obs
        .regular
        .iter()
        .map(|o| Row::Value(o.point.clone()))
        .chain(obs.zero_start.iter().map(|p| Row::Value(p.clone())))
        .collect();
    let n_values = rows.len();
    rows.extend(obs.saturation.iter().map(|d| Row::Deriv(d.clone())));
    rows.extend(obs.signs.iter().map(|s| Row::Deriv(s.deriv.clone())));
    (rows, n_values)
}

/// Draws joint latents at the observation rows given fixed hyperparameters
/// and, when sign rows exist, fixed derivative values there.
///
/// The conditional covariance of the latent rows does not depend on the
/// observed values, so its factorization is computed once and reused across
/// draws with refreshed means.
pub(crate) struct LatentReconstructor {
    cond: Conditioner,
    y_gauss: DVector<f64>,
    n_values: usize,
    n_sat: usize,
    n_signs: usize,
    k_to: DMatrix<f64>,
    l_cov: DMatrix<f64>,
}

impl LatentReconstructor {
    pub fn new(obs: &ObservationSet, hp: &Hyperparameters) -> Result<Self> {
        let (mut rows, y_gauss, noise) = gaussian_system(obs, hp);
        let n_gauss = rows.len();
        let n_signs = obs.signs.len();
        rows.extend(obs.sign_rows());
        let mut full_noise = DVector::zeros(rows.len());
        for i in 0..n_gauss {
            full_noise[i] = noise[i];
        }
        let mut y0 = DVector::zeros(rows.len());
        for i in 0..n_gauss {
            y0[i] = y_gauss[i];
        }
        let (targets, n_values) = latent_rows(obs);
        let k_to = cross_covariance(&targets, &rows, hp)?;
        let cond = Conditioner::new(rows, y0, &full_noise, hp)?;
        let cov = covariance(&targets, hp)? - &k_to * cond.solve(&k_to.transpose());
        let (chol, _) = cholesky_with_escalation(&cov, DEFAULT_JITTER)?;
        Ok(Self {
            cond,
            y_gauss,
            n_values,
            n_sat: obs.saturation.len(),
            n_signs,
            k_to,
            l_cov: chol.unpack(),
        })
    }

    /// One joint draw; `fprime_c` must be given exactly when sign rows exist.
    pub fn draw<R: Rng + ?Sized>(
        &mut self,
        fprime_c: Option<&DVector<f64>>,
        rng: &mut R,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        match (self.n_signs, fprime_c) {
            (0, None) => {}
            (n, Some(fc)) if n == fc.len() => {
                let mut y = DVector::zeros(self.y_gauss.len() + n);
                for i in 0..self.y_gauss.len() {
                    y[i] = self.y_gauss[i];
                }
                for j in 0..n {
                    y[self.y_gauss.len() + j] = fc[j];
                }
                self.cond.refresh_y(y)?;
            }
            (n, got) => {
                return Err(Error::DimensionMismatch {
                    context: "sign latent values",
                    expected: n,
                    got: got.map_or(0, |v| v.len()),
                })
            }
        }
        let mean = &self.k_to * self.cond.weights();
        let dim = mean.len();
        let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut lat = mean + &self.l_cov * z;
        // The sign-row derivatives are conditioned on exactly; keep them.
        if let Some(fc) = fprime_c {
            for j in 0..self.n_signs {
                lat[self.n_values + self.n_sat + j] = fc[j];
            }
        }
        let f = DVector::from_fn(self.n_values, |i, _| lat[i]);
        let fprime = DVector::from_fn(dim - self.n_values, |i, _| lat[self.n_values + i]);
        Ok((f, fprime))
    }
}

/// Exact Gaussian conditioning when no sign rows are present.
///
/// Returns the pointwise predictive at `targets` with moment-matched 95%
/// intervals. With no training rows this is the GP prior.
pub fn condition_gaussian(
    obs: &ObservationSet,
    hp: &Hyperparameters,
    targets: &[Row],
    policy: NoisePolicy,
) -> Result<PredictiveDistribution> {
    if !obs.signs.is_empty() {
        return Err(Error::Config(
            "sign rows present: exact conditioning is unavailable, use the sampling path".into(),
        ));
    }
    if obs.n_rows() > 0 {
        obs.validate(hp.dims())?;
    }
    let (rows, y, noise) = gaussian_system(obs, hp);
    let cond = Conditioner::new(rows, y, &noise, hp)?;
    let (mean, mut var) = cond.predict_pointwise(targets)?;
    for (j, t) in targets.iter().enumerate() {
        var[j] += policy_noise(policy, t, hp.sigma());
    }
    let std: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    let mean: Vec<f64> = mean.iter().copied().collect();
    let lower95 = mean
        .iter()
        .zip(&std)
        .map(|(m, s)| m - Z_975 * s)
        .collect();
    let upper95 = mean
        .iter()
        .zip(&std)
        .map(|(m, s)| m + Z_975 * s)
        .collect();
    Ok(PredictiveDistribution {
        mean,
        std,
        lower95,
        upper95,
        draws: None,
    })
}

/// Exact log marginal likelihood ln p(y | hp); requires no sign rows.
pub fn log_marginal_likelihood(obs: &ObservationSet, hp: &Hyperparameters) -> Result<f64> {
    if !obs.signs.is_empty() {
        return Err(Error::Config(
            "sign rows present: the marginal likelihood is not available in closed form".into(),
        ));
    }
    if obs.n_rows() > 0 {
        obs.validate(hp.dims())?;
    }
    let (rows, y, noise) = gaussian_system(obs, hp);
    Ok(Conditioner::new(rows, y, &noise, hp)?.log_marginal())
}

fn policy_noise(policy: NoisePolicy, target: &Row, sigma: f64) -> f64 {
    match (policy, target) {
        (NoisePolicy::ObservationNoise, Row::Value(_)) => sigma * sigma,
        _ => 0.0,
    }
}

/// Joint latent draws at the observation rows under fixed hyperparameters,
/// respecting the sign constraints via elliptical slice sampling.
///
/// Deterministic for a given `(obs, hp, n_draws, seed)`. Without sign rows
/// the draws are independent exact conditionals.
pub fn sample_latents_constrained(
    obs: &ObservationSet,
    hp: &Hyperparameters,
    n_draws: usize,
    seed: u64,
) -> Result<LatentDraws> {
    const WARMUP_SWEEPS: usize = 256;
    const THIN_SWEEPS: usize = 4;

    if n_draws == 0 {
        return Err(Error::Config("n_draws must be at least 1".into()));
    }
    obs.validate(hp.dims())?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut recon = LatentReconstructor::new(obs, hp)?;
    let mut out = LatentDraws {
        f: Vec::with_capacity(n_draws),
        fprime: Vec::with_capacity(n_draws),
    };

    if obs.signs.is_empty() {
        for _ in 0..n_draws {
            let (f, fp) = recon.draw(None, &mut rng)?;
            out.f.push(f);
            out.fprime.push(fp);
        }
        return Ok(out);
    }

    let (rows, y, noise) = gaussian_system(obs, hp);
    let cond = Conditioner::new(rows, y, &noise, hp)?;
    let sc = SignConditional::build(&cond, obs)?;
    let mut u = DVector::zeros(obs.signs.len());
    let mut ll = log_lik_sign(obs, &sc.fprime(&u))?;
    let step = |u: &DVector<f64>, ll: f64, rng: &mut ChaCha20Rng| {
        let mut lik = |cand: &DVector<f64>| -> f64 {
            log_lik_sign(obs, &sc.fprime(cand)).expect("sign rows validated")
        };
        ess::elliptical_slice_step(u, ll, &mut lik, rng)
    };
    for _ in 0..WARMUP_SWEEPS {
        let (next, next_ll) = step(&u, ll, &mut rng);
        u = next;
        ll = next_ll;
    }
    for _ in 0..n_draws {
        for _ in 0..THIN_SWEEPS {
            let (next, next_ll) = step(&u, ll, &mut rng);
            u = next;
            ll = next_ll;
        }
        let fc = sc.fprime(&u);
        let (f, fp) = recon.draw(Some(&fc), &mut rng)?;
        out.f.push(f);
        out.fprime.push(fp);
    }
    Ok(out)
}

fn thinned_indices(len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        return (0..len).collect();
    }
    let stride = len as f64 / max as f64;
    (0..max).map(|i| (i as f64 * stride) as usize).collect()
}

/// Posterior predictive at `targets`, mixing Gaussian conditionals over
/// posterior draws.
///
/// Unconstrained fits mix analytically over thinned hyperparameter draws
/// with moment-matched intervals; a single draw reproduces
/// [`condition_gaussian`] exactly. Constrained fits mix over the stored
/// latent reconstructions and report empirical quantile intervals from
/// per-target predictive samples. Deterministic for given inputs.
pub fn predict(
    samples: &PosteriorSamples,
    obs: &ObservationSet,
    targets: &[Row],
    policy: NoisePolicy,
) -> Result<PredictiveDistribution> {
    const MAX_HP_COMPONENTS: usize = 512;
    const MAX_LATENT_COMPONENTS: usize = 256;
    const TARGET_DRAWS: usize = 1024;

    if samples.total_draws() == 0 {
        return Err(Error::InsufficientDraws {
            needed: "at least 1 posterior draw",
            got: 0,
        });
    }
    if obs.n_rows() > 0 {
        obs.validate(samples.map.dims())?;
    }
    let n_t = targets.len();
    if n_t == 0 {
        return Ok(PredictiveDistribution {
            mean: vec![],
            std: vec![],
            lower95: vec![],
            upper95: vec![],
            draws: None,
        });
    }

    let mut mean_acc = vec![0.0; n_t];
    let mut ex2_acc = vec![0.0; n_t];

    if obs.signs.is_empty() {
        let per_chain = (MAX_HP_COMPONENTS / samples.n_chains().max(1)).max(1);
        let mut m = 0usize;
        for chain in &samples.chains {
            for idx in thinned_indices(chain.hp.len(), per_chain) {
                let hp = &chain.hp[idx];
                let (rows, y, noise) = gaussian_system(obs, hp);
                let cond = Conditioner::new(rows, y, &noise, hp)?;
                let (mu, mut var) = cond.predict_pointwise(targets)?;
                for (j, t) in targets.iter().enumerate() {
                    var[j] += policy_noise(policy, t, hp.sigma());
                    mean_acc[j] += mu[j];
                    ex2_acc[j] += var[j] + mu[j] * mu[j];
                }
                m += 1;
            }
        }
        let mf = m as f64;
        let mean: Vec<f64> = mean_acc.iter().map(|s| s / mf).collect();
        let std: Vec<f64> = ex2_acc
            .iter()
            .zip(&mean)
            .map(|(s, mu)| (s / mf - mu * mu).max(0.0).sqrt())
            .collect();
        let lower95 = mean.iter().zip(&std).map(|(m, s)| m - Z_975 * s).collect();
        let upper95 = mean.iter().zip(&std).map(|(m, s)| m + Z_975 * s).collect();
        return Ok(PredictiveDistribution {
            mean,
            std,
            lower95,
            upper95,
            draws: None,
        });
    }

    // Constrained path: mix over stored latent reconstructions.
    let n_sat = obs.saturation.len();
    let components: Vec<(&Hyperparameters, DVector<f64>)> = samples
        .chains
        .iter()
        .flat_map(|c| {
            c.latents.iter().map(|l| {
                let fc = DVector::from_fn(obs.signs.len(), |j, _| l.fprime[n_sat + j]);
                (&c.hp[l.draw_index], fc)
            })
        })
        .collect();
    if components.is_empty() {
        return Err(Error::Config(
            "no stored latent draws; refit with latent thinning enabled".into(),
        ));
    }
    let picked = thinned_indices(components.len(), MAX_LATENT_COMPONENTS);
    let m = picked.len();
    let k = (TARGET_DRAWS / m).clamp(1, 16);
    let mut draws = DMatrix::zeros(m * k, n_t);
    let mut rng = ChaCha20Rng::seed_from_u64(samples.seed.wrapping_add(0x9E37_79B9));

    for (ci, &comp_idx) in picked.iter().enumerate() {
        let (hp, fc) = &components[comp_idx];
        let (mut rows, y_g, noise_g) = gaussian_system(obs, hp);
        let n_gauss = rows.len();
        rows.extend(obs.sign_rows());
        let mut y = DVector::zeros(rows.len());
        let mut noise = DVector::zeros(rows.len());
        for i in 0..n_gauss {
            y[i] = y_g[i];
            noise[i] = noise_g[i];
        }
        for j in 0..fc.len() {
            y[n_gauss + j] = fc[j];
        }
        let cond = Conditioner::new(rows, y, &noise, hp)?;
        let (mu, mut var) = cond.predict_pointwise(targets)?;
        for (j, t) in targets.iter().enumerate() {
            var[j] += policy_noise(policy, t, hp.sigma());
            mean_acc[j] += mu[j];
            ex2_acc[j] += var[j] + mu[j] * mu[j];
            let sd = var[j].sqrt();
            for r in 0..k {
                draws[(ci * k + r, j)] = mu[j] + sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let mf = m as f64;
    let mean: Vec<f64> = mean_acc.iter().map(|s| s / mf).collect();
    let std: Vec<f64> = ex2_acc
        .iter()
        .zip(&mean)
        .map(|(s, mu)| (s / mf - mu * mu).max(0.0).sqrt())
        .collect();
    let mut lower95 = Vec::with_capacity(n_t);
    let mut upper95 = Vec::with_capacity(n_t);
    for j in 0..n_t {
        let col: Vec<f64> = (0..m * k).map(|r| draws[(r, j)]).collect();
        lower95.push(quantile(&col, 0.025));
        upper95.push(quantile(&col, 0.975));
    }
    Ok(PredictiveDistribution {
        mean,
        std,
        lower95,
        upper95,
        draws: Some(draws),
    })
}
