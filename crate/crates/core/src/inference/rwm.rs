//! Adaptive random-walk Metropolis on log hyperparameters.
//!
//! The Gaussian-observed rows (regular, zero-start, saturation) are
//! marginalized analytically, so the Metropolis target for θ = (α, ρ, σ) is
//!
//!   ln p(θ | data) ∝ ln Z(θ) + ln p(θ) + Σ ln θ + ln L_sign(f′_C(θ, u))
//!
//! where Z is the Gaussian marginal likelihood, Σ ln θ the log-scale
//! Jacobian, and u the whitened sign-row latents: given θ the derivative
//! values at the sign rows are f′_C = m̃(θ) + L̃(θ) u with (m̃, L̃ L̃ᵀ) the
//! Gaussian conditional at those rows. u keeps a standard normal prior under
//! every θ, so it is updated by elliptical slice sampling between θ moves
//! and the two blocks form a valid Metropolis-within-Gibbs cycle. Without
//! sign rows the sampler runs on the exact marginal likelihood alone.
//!
//! The θ kernel is a mixture: mostly adaptive random-walk moves
//! (covariance-preconditioned from the warmup trace), with an occasional
//! independence proposal drawn from the prior that redraws the whitened
//! latents alongside θ. The independence component lets chains escape minor
//! modes of the α–σ trade-off that a local walk crosses only rarely; its
//! acceptance ratio reduces to the likelihood ratio because the proposal
//! densities cancel the prior terms.
//!
//! Lengthscale and α–σ trade-offs make the posterior multimodal, and sign
//! constraints sharpen the basins further: a chain whose latents
//! equilibrated in one θ regime rejects θ moves toward another. Two
//! mechanisms keep chains from freezing in minor basins. During the first
//! quarter of warmup the likelihood weight ramps 0 → 1, so every chain
//! starts by spreading over the prior and tracks the dominant basin as the
//! data switch on. Throughout the run each chain also carries a ladder of
//! tempered replicas (`temper_levels` rungs, geometric weights down to
//! [`TEMPER_FLOOR`]) with replica-exchange swaps between adjacent rungs, so
//! basin hops found at high temperature propagate to the untempered rung,
//! the only one whose draws are retained.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Gamma, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{cholesky_with_escalation, Hyperparameters, LengthscaleMap, DEFAULT_JITTER};
use crate::math::LN_2PI;
use crate::model::{log_lik_sign, log_prior, ObservationSet, PriorSpec};

use super::conditioner::Conditioner;
use super::ess::elliptical_slice_step;
use super::{
    gaussian_system, ChainSamples, LatentDraw, LatentReconstructor, McmcConfig, PosteriorSamples,
};

/// Proposals wandering past e^±40 are treated as numerically invalid.
const ETA_BOUND: f64 = 40.0;

/// Fraction of θ moves proposed independently from the prior.
const PRIOR_MIX_PROB: f64 = 0.1;

/// Likelihood weight of the warmest tempering rung; intermediate rungs are
/// spaced geometrically between 1 and this floor.
const TEMPER_FLOOR: f64 = 0.15;

struct ParamSpace {
    map: LengthscaleMap,
}

impl ParamSpace {
    fn dim(&self) -> usize {
        self.map.n_groups() + 2
    }

    /// η layout: [ln α, ln ρ_1 .. ln ρ_G, ln σ].
    fn hp(&self, eta: &DVector<f64>) -> Result<Hyperparameters> {
        for &e in eta.iter() {
            if !e.is_finite() || e.abs() > ETA_BOUND {
                return Err(Error::NotPositiveDefinite { jitter: 0.0 });
            }
        }
        let g = self.map.n_groups();
        Hyperparameters::new(
            eta[0].exp(),
            (0..g).map(|i| eta[1 + i].exp()).collect(),
            eta[g + 1].exp(),
            self.map.clone(),
        )
    }
}

/// Conditional N(m̃, L̃ L̃ᵀ) of the sign-row derivatives given the Gaussian
/// rows, in whitened form.
pub(crate) struct SignConditional {
    pub mean: DVector<f64>,
    pub l: DMatrix<f64>,
}

impl SignConditional {
    pub(crate) fn build(cond: &Conditioner, obs: &ObservationSet) -> Result<Self> {
        let c_rows = obs.sign_rows();
        let (mean, cov) = cond.predict_full(&c_rows)?;
        let (chol, _) = cholesky_with_escalation(&cov, DEFAULT_JITTER)?;
        Ok(Self {
            mean,
            l: chol.unpack(),
        })
    }

    pub(crate) fn fprime(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.mean + &self.l * u
    }
}

/// Per-θ cached quantities.
struct Eval {
    /// ln Z(θ), the Gaussian marginal likelihood.
    ll_marginal: f64,
    /// ln p(θ) + log-scale Jacobian; also the proposal log density of the
    /// independence component.
    logq: f64,
    ll_sign: f64,
    sign_cond: Option<SignConditional>,
}

impl Eval {
    fn log_target(&self) -> f64 {
        self.ll_marginal + self.logq + self.ll_sign
    }
}

fn evaluate(
    obs: &ObservationSet,
    prior: &PriorSpec,
    space: &ParamSpace,
    eta: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<Eval> {
    let hp = space.hp(eta)?;
    let (rows, y, noise) = gaussian_system(obs, &hp);
    let cond = Conditioner::new(rows, y, &noise, &hp)?;
    let ll_marginal = cond.log_marginal();
    let logq = log_prior(&hp, prior)? + eta.sum();
    if !(ll_marginal + logq).is_finite() {
        return Err(Error::NotPositiveDefinite { jitter: 0.0 });
    }
    if obs.signs.is_empty() {
        return Ok(Eval {
            ll_marginal,
            logq,
            ll_sign: 0.0,
            sign_cond: None,
        });
    }
    let sign_cond = SignConditional::build(&cond, obs)?;
    let ll_sign = log_lik_sign(obs, &sign_cond.fprime(u))?;
    if !ll_sign.is_finite() {
        return Err(Error::NotPositiveDefinite { jitter: 0.0 });
    }
    Ok(Eval {
        ll_marginal,
        logq,
        ll_sign,
        sign_cond: Some(sign_cond),
    })
}

/// Running mean and covariance of the warmup draws.
struct Welford {
    n: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
        }
    }

    fn push(&mut self, x: &DVector<f64>) {
        self.n += 1;
        let delta = x - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = x - &self.mean;
        self.m2 += &delta * delta2.transpose();
    }

    /// Cholesky factor of the sample covariance, with the diagonal floored
    /// and slightly inflated so unexplored directions stay proposable and
    /// the factorization stays positive definite.
    fn proposal_chol(&self) -> Option<DMatrix<f64>> {
        if self.n < 2 {
            return None;
        }
        let mut cov = &self.m2 / (self.n - 1) as f64;
        for i in 0..cov.nrows() {
            cov[(i, i)] = cov[(i, i)].max(1e-4) * 1.05;
        }
        nalgebra::Cholesky::new(cov).map(|c| c.unpack())
    }
}

/// Draws η = ln θ with θ from the prior, for the independence component.
fn prior_eta_draw(
    prior: &PriorSpec,
    space: &ParamSpace,
    rng: &mut ChaCha20Rng,
) -> Result<DVector<f64>> {
    let g = space.map.n_groups();
    let mut eta = DVector::zeros(g + 2);
    let half_normal =
        |rng: &mut ChaCha20Rng, scale: f64| (scale * rng.sample::<f64, _>(StandardNormal)).abs();
    eta[0] = half_normal(rng, prior.alpha_scale).ln();
    for i in 0..g {
        let gamma = Gamma::new(prior.lengthscale_shape[i], 1.0 / prior.lengthscale_rate[i])
            .map_err(|e| Error::Config(format!("invalid lengthscale prior: {e}")))?;
        eta[1 + i] = rng.sample::<f64, _>(gamma).ln();
    }
    eta[g + 1] = half_normal(rng, prior.sigma_scale).ln();
    Ok(eta)
}

fn initial_eta(space: &ParamSpace, jitter_sd: f64, rng: &mut ChaCha20Rng) -> DVector<f64> {
    let g = space.map.n_groups();
    let mut eta = DVector::zeros(g + 2);
    eta[0] = 0.0; // α = 1
    for i in 0..g {
        eta[1 + i] = 5.0f64.ln();
    }
    eta[g + 1] = 0.5f64.ln();
    for e in eta.iter_mut() {
        *e += jitter_sd * rng.sample::<f64, _>(StandardNormal);
    }
    eta
}

/// Sampler state of one tempering rung: position, whitened latents, and the
/// cached evaluation. Replica-exchange swaps move whole states between
/// rungs; the per-rung adaptation stays put.
struct ReplicaState {
    eta: DVector<f64>,
    u: DVector<f64>,
    cur: Eval,
}

/// Per-rung proposal adaptation.
struct RungAdaptation {
    log_step: f64,
    prop_l: DMatrix<f64>,
    welford: Welford,
}

fn run_chain(
    chain_idx: usize,
    obs: &ObservationSet,
    prior: &PriorSpec,
    space: &ParamSpace,
    cfg: &McmcConfig,
) -> Result<ChainSamples> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain_idx as u64 + 1);

    let dim = space.dim();
    let n_signs = obs.signs.len();

    let levels = cfg.temper_levels.max(1);
    let betas: Vec<f64> = (0..levels)
        .map(|r| {
            if levels == 1 {
                1.0
            } else {
                TEMPER_FLOOR.powf(r as f64 / (levels - 1) as f64)
            }
        })
        .collect();

    let mut states = Vec::with_capacity(levels);
    for _ in 0..levels {
        let eta = initial_eta(space, cfg.init_jitter_sd, &mut rng);
        let u = DVector::zeros(n_signs);
        let cur = evaluate(obs, prior, space, &eta, &u).map_err(|e| match e {
            Error::NotPositiveDefinite { .. } => Error::BadInitialization,
            other => other,
        })?;
        if !cur.log_target().is_finite() {
            return Err(Error::BadInitialization);
        }
        states.push(ReplicaState { eta, u, cur });
    }
    let mut rungs: Vec<RungAdaptation> = (0..levels)
        .map(|_| RungAdaptation {
            log_step: (0.3f64).ln(),
            prop_l: DMatrix::identity(dim, dim),
            welford: Welford::new(dim),
        })
        .collect();

    let latent_thin = if cfg.latent_thin == 0 {
        (cfg.draws / 32).max(1)
    } else {
        cfg.latent_thin.min(cfg.draws).max(1)
    };

    let total = cfg.warmup + cfg.draws;
    let mut hp_draws = Vec::with_capacity(cfg.draws);
    let mut log_post = Vec::with_capacity(cfg.draws);
    let mut latents = Vec::new();
    let mut accepted = 0usize;

    let anneal_len = (cfg.warmup / 4).max(1);

    for it in 0..total {
        // Likelihood ramp: 0 → 1 over the first quarter of warmup, 1
        // afterwards. Each rung weights the likelihood by ramp · β_r.
        let ramp = (it as f64 / anneal_len as f64).min(1.0);

        for r in 0..levels {
            let w = ramp * betas[r];
            let ReplicaState { eta, u, cur } = &mut states[r];
            let ad = &mut rungs[r];

            // Hyperparameter block: adaptive walk or prior independence
            // move. The independence move redraws the whitened latents too,
            // so the proposal is coherent across both blocks.
            let indep = rng.random::<f64>() < PRIOR_MIX_PROB;
            let step = ad.log_step.exp();
            let (prop_eta, prop_u) = if indep {
                let pu = DVector::from_fn(n_signs, |_, _| rng.sample::<f64, _>(StandardNormal));
                (prior_eta_draw(prior, space, &mut rng)?, pu)
            } else {
                let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                (&*eta + step * &ad.prop_l * z, u.clone())
            };
            let mut accept_prob = 0.0;
            match evaluate(obs, prior, space, &prop_eta, &prop_u) {
                Ok(prop) => {
                    // Prior and proposal densities cancel for the
                    // independence move (in θ and in u), leaving the
                    // tempered likelihood ratio.
                    let dlik =
                        prop.ll_marginal + prop.ll_sign - cur.ll_marginal - cur.ll_sign;
                    let delta = if indep {
                        w * dlik
                    } else {
                        w * dlik + prop.logq - cur.logq
                    };
                    accept_prob = delta.exp().min(1.0);
                    if rng.random::<f64>() < accept_prob {
                        *eta = prop_eta;
                        *u = prop_u;
                        *cur = prop;
                        if r == 0 && it >= cfg.warmup {
                            accepted += 1;
                        }
                    }
                }
                Err(Error::NotPositiveDefinite { .. }) => {}
                Err(other) => return Err(other),
            }

            // Diminishing adaptation of step size and preconditioner,
            // warmup only; the step size targets the walk component alone.
            if it < cfg.warmup {
                if !indep {
                    let gamma = (it as f64 + 1.0).powf(-0.6);
                    ad.log_step += gamma * (accept_prob - cfg.target_accept);
                }
                if it >= cfg.warmup / 4 {
                    ad.welford.push(eta);
                }
                if it >= cfg.warmup / 2 && ad.welford.n >= 16 && it % 16 == 0 {
                    if let Some(l) = ad.welford.proposal_chol() {
                        ad.prop_l = l;
                    }
                }
            }

            // Sign-latent block, slice sampling the tempered likelihood.
            // At weight 0 that likelihood is flat, so refresh u from its
            // prior.
            if n_signs > 0 {
                let sign_cond = cur.sign_cond.as_ref().expect("sign conditional present");
                if w > 0.0 {
                    let mut ll = |cand: &DVector<f64>| -> f64 {
                        w * log_lik_sign(obs, &sign_cond.fprime(cand))
                            .expect("sign rows validated")
                    };
                    let mut ll_now = w * cur.ll_sign;
                    for _ in 0..cfg.ess_sweeps.max(1) {
                        let (next, next_ll) = elliptical_slice_step(u, ll_now, &mut ll, &mut rng);
                        *u = next;
                        ll_now = next_ll;
                    }
                    cur.ll_sign = ll_now / w;
                } else {
                    *u = DVector::from_fn(n_signs, |_, _| rng.sample::<f64, _>(StandardNormal));
                    cur.ll_sign = log_lik_sign(obs, &sign_cond.fprime(u))?;
                }
            }
        }

        // Replica exchange between one random adjacent rung pair; the
        // shared prior cancels, leaving the tempered likelihood ratio.
        if levels > 1 {
            let j = rng.random_range(0..levels - 1);
            let ll = |s: &ReplicaState| s.cur.ll_marginal + s.cur.ll_sign;
            let ln_a = ramp * (betas[j] - betas[j + 1]) * (ll(&states[j + 1]) - ll(&states[j]));
            if rng.random::<f64>().ln() < ln_a {
                states.swap(j, j + 1);
            }
        }

        if it >= cfg.warmup {
            let cold = &states[0];
            let draw_index = it - cfg.warmup;
            let hp = space.hp(&cold.eta)?;
            // Full joint density including the whitened latent block, for
            // trace diagnostics.
            let lp_u = -0.5 * cold.u.norm_squared() - 0.5 * n_signs as f64 * LN_2PI;
            log_post.push(cold.cur.log_target() + lp_u);

            if (draw_index + 1) % latent_thin == 0 {
                let fprime_c = cold.cur.sign_cond.as_ref().map(|sc| sc.fprime(&cold.u));
                let mut recon = LatentReconstructor::new(obs, &hp)?;
                let (f, fprime) = recon.draw(fprime_c.as_ref(), &mut rng)?;
                latents.push(LatentDraw {
                    draw_index,
                    f,
                    fprime,
                });
            }
            hp_draws.push(hp);
        }
    }

    Ok(ChainSamples {
        hp: hp_draws,
        log_post,
        accept_rate: if cfg.draws > 0 {
            accepted as f64 / cfg.draws as f64
        } else {
            0.0
        },
        latents,
    })
}

/// Samples the hyperparameter posterior with `cfg.chains` independent
/// chains, parallelized deterministically: chain c uses stream c+1 of a
/// ChaCha generator seeded with `cfg.seed`.
pub fn sample_hyperparameters(
    obs: &ObservationSet,
    map: &LengthscaleMap,
    prior: &PriorSpec,
    cfg: &McmcConfig,
) -> Result<PosteriorSamples> {
    if cfg.chains == 0 || cfg.draws == 0 {
        return Err(Error::Config(
            "chains and draws must both be at least 1".into(),
        ));
    }
    if !(cfg.target_accept > 0.0 && cfg.target_accept < 1.0) {
        return Err(Error::Config(format!(
            "target_accept must lie in (0, 1), got {}",
            cfg.target_accept
        )));
    }
    if obs.n_rows() > 0 {
        obs.validate(map.dims())?;
    }
    prior.validate(map.n_groups())?;
    if cfg.max_rows > 0 && obs.n_rows() > cfg.max_rows {
        return Err(Error::SizeCap {
            rows: obs.n_rows(),
            cap: cfg.max_rows,
        });
    }

    let space = ParamSpace { map: map.clone() };
    let chains: Result<Vec<ChainSamples>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(c, obs, prior, &space, cfg))
        .collect();
    Ok(PosteriorSamples {
        chains: chains?,
        map: map.clone(),
        warmup: cfg.warmup,
        seed: cfg.seed,
    })
}
