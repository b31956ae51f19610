//! Observation sets, likelihoods, and priors.
//!
//! Shape constraints enter as virtual rows alongside the regular
//! observations:
//!
//! * zero-start anchors pin `f(x, 0) = 0` through Gaussian rows with
//!   variance [`NEAR_DIRAC_VAR`],
//! * saturation rows pin `df/dt = 0` the same way,
//! * sign rows state `df/dt > 0` (or `< 0`) through a probit likelihood
//!   Φ(sign · f′ / v) whose strictness `v` sets how sharply violations are
//!   penalized.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernel::{
    assemble_joint, DerivativeSpec, Hyperparameters, InputPoint, Row, DEFAULT_JITTER,
};
use crate::math::{log_normal_cdf, LN_2PI};

/// Variance of near-noiseless virtual rows. Small enough that anchors hold
/// to ~1e-5 in function value, large enough to keep Cholesky well posed with
/// the default jitter.
pub const NEAR_DIRAC_VAR: f64 = 1e-10;

/// Default probit strictness v.
pub const DEFAULT_STRICTNESS: f64 = 1e-4;

/// A regular observation y = f(x) + ε.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub point: InputPoint,
    pub y: f64,
}

/// A sign statement about a derivative: sign = +1 for increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SignObservation {
    pub deriv: DerivativeSpec,
    pub sign: i8,
}

/// Noise class of a Gaussian-observed row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Regular observation with variance σ².
    Observation,
    /// Virtual constraint row with variance [`NEAR_DIRAC_VAR`].
    NearDirac,
}

impl NoiseKind {
    pub fn variance(self, sigma: f64) -> f64 {
        match self {
            NoiseKind::Observation => sigma * sigma,
            NoiseKind::NearDirac => NEAR_DIRAC_VAR,
        }
    }
}

/// One Gaussian-observed row in canonical order.
#[derive(Debug, Clone)]
pub struct GaussianRow {
    pub row: Row,
    pub y: f64,
    pub kind: NoiseKind,
}

/// All observations entering one fit.
///
/// Canonical Gaussian row order is regular, then zero-start anchors, then
/// saturation rows; sign rows form a separate block.
#[derive(Debug, Clone, Default)]
pub struct ObservationSet {
    pub regular: Vec<Observation>,
    pub zero_start: Vec<InputPoint>,
    pub saturation: Vec<DerivativeSpec>,
    pub signs: Vec<SignObservation>,
    /// Probit strictness v for the sign rows.
    pub strictness: f64,
}

impl ObservationSet {
    pub fn new(regular: Vec<Observation>) -> Self {
        Self {
            regular,
            zero_start: Vec::new(),
            saturation: Vec::new(),
            signs: Vec::new(),
            strictness: DEFAULT_STRICTNESS,
        }
    }

    /// Checks internal consistency against an input dimensionality.
    pub fn validate(&self, dims: usize) -> Result<()> {
        if self.n_rows() == 0 {
            return Err(Error::EmptyInput("observation set"));
        }
        if !(self.strictness > 0.0) {
            return Err(Error::NonPositive {
                name: "strictness",
                value: self.strictness,
            });
        }
        let check_point = |p: &InputPoint| -> Result<()> {
            if p.dims() != dims {
                return Err(Error::DimensionMismatch {
                    context: "observation point",
                    expected: dims,
                    got: p.dims(),
                });
            }
            Ok(())
        };
        for o in &self.regular {
            check_point(&o.point)?;
            if !o.y.is_finite() {
                return Err(Error::Config(format!(
                    "non-finite observation value {}",
                    o.y
                )));
            }
        }
        for p in &self.zero_start {
            check_point(p)?;
        }
        for d in self.saturation.iter().chain(self.signs.iter().map(|s| &s.deriv)) {
            check_point(&d.point)?;
            if d.wrt >= dims {
                return Err(Error::IndexOutOfRange {
                    name: "derivative dimension",
                    value: d.wrt,
                    limit: dims,
                });
            }
        }
        for s in &self.signs {
            if s.sign != 1 && s.sign != -1 {
                return Err(Error::Config(format!(
                    "sign observations must be +1 or -1, got {}",
                    s.sign
                )));
            }
        }
        Ok(())
    }

    /// Gaussian-observed rows in canonical order.
    pub fn gaussian_rows(&self) -> Vec<GaussianRow> {
        let mut rows = Vec::with_capacity(self.n_gaussian_rows());
        for o in &self.regular {
            rows.push(GaussianRow {
                row: Row::Value(o.point.clone()),
                y: o.y,
                kind: NoiseKind::Observation,
            });
        }
        for p in &self.zero_start {
            rows.push(GaussianRow {
                row: Row::Value(p.clone()),
                y: 0.0,
                kind: NoiseKind::NearDirac,
            });
        }
        for d in &self.saturation {
            rows.push(GaussianRow {
                row: Row::Deriv(d.clone()),
                y: 0.0,
                kind: NoiseKind::NearDirac,
            });
        }
        rows
    }

    /// Sign-constrained derivative rows.
    pub fn sign_rows(&self) -> Vec<Row> {
        self.signs
            .iter()
            .map(|s| Row::Deriv(s.deriv.clone()))
            .collect()
    }

    pub fn n_gaussian_rows(&self) -> usize {
        self.regular.len() + self.zero_start.len() + self.saturation.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_gaussian_rows() + self.signs.len()
    }

    /// Input dimensionality, taken from the first row present.
    pub fn dims(&self) -> Option<usize> {
        self.regular
            .first()
            .map(|o| o.point.dims())
            .or_else(|| self.zero_start.first().map(|p| p.dims()))
            .or_else(|| self.saturation.first().map(|d| d.point.dims()))
            .or_else(|| self.signs.first().map(|s| s.deriv.point.dims()))
    }
}

/// Priors: half-normal scales for α and σ, independent Gammas
/// (shape, rate) for each lengthscale group.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PriorSpec {
    pub alpha_scale: f64,
    pub sigma_scale: f64,
    pub lengthscale_shape: Vec<f64>,
    pub lengthscale_rate: Vec<f64>,
}

impl PriorSpec {
    /// Defaults: N⁺(0, 1) scales and Gamma(1, 0.1) lengthscales.
    pub fn default_for_groups(n_groups: usize) -> Self {
        Self {
            alpha_scale: 1.0,
            sigma_scale: 1.0,
            lengthscale_shape: vec![1.0; n_groups],
            lengthscale_rate: vec![0.1; n_groups],
        }
    }

    pub fn validate(&self, n_groups: usize) -> Result<()> {
        if self.lengthscale_shape.len() != n_groups || self.lengthscale_rate.len() != n_groups {
            return Err(Error::DimensionMismatch {
                context: "prior lengthscale groups",
                expected: n_groups,
                got: self.lengthscale_shape.len().min(self.lengthscale_rate.len()),
            });
        }
        for &v in [self.alpha_scale, self.sigma_scale]
            .iter()
            .chain(self.lengthscale_shape.iter())
            .chain(self.lengthscale_rate.iter())
        {
            if !(v > 0.0) {
                return Err(Error::NonPositive {
                    name: "prior parameter",
                    value: v,
                });
            }
        }
        Ok(())
    }
}

fn ln_half_normal(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    // ln 2 + ln N(x | 0, scale²)
    std::f64::consts::LN_2 - 0.5 * LN_2PI - scale.ln() - 0.5 * (x / scale) * (x / scale)
}

fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - statrs::function::gamma::ln_gamma(shape) + (shape - 1.0) * x.ln()
        - rate * x
}

/// Log prior density of the hyperparameters.
pub fn log_prior(hp: &Hyperparameters, prior: &PriorSpec) -> Result<f64> {
    prior.validate(hp.map().n_groups())?;
    let mut lp = ln_half_normal(hp.alpha(), prior.alpha_scale)
        + ln_half_normal(hp.sigma(), prior.sigma_scale);
    for (g, &rho) in hp.lengthscales().iter().enumerate() {
        lp += ln_gamma_pdf(rho, prior.lengthscale_shape[g], prior.lengthscale_rate[g]);
    }
    Ok(lp)
}

/// Gaussian log likelihood of the canonical rows given latent values.
///
/// `f` holds the latent function (or derivative, for saturation rows) at the
/// canonical Gaussian rows: regular, then anchors, then saturation.
pub fn log_lik_gaussian(obs: &ObservationSet, f: &DVector<f64>, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::NonPositive {
            name: "sigma",
            value: sigma,
        });
    }
    let rows = obs.gaussian_rows();
    if f.len() != rows.len() {
        return Err(Error::DimensionMismatch {
            context: "gaussian latent vector",
            expected: rows.len(),
            got: f.len(),
        });
    }
    let mut ll = 0.0;
    for (i, r) in rows.iter().enumerate() {
        let var = r.kind.variance(sigma);
        let resid = r.y - f[i];
        ll += -0.5 * (LN_2PI + var.ln()) - 0.5 * resid * resid / var;
    }
    Ok(ll)
}

/// Probit log likelihood of the sign rows given latent derivatives there.
pub fn log_lik_sign(obs: &ObservationSet, fprime: &DVector<f64>) -> Result<f64> {
    if fprime.len() != obs.signs.len() {
        return Err(Error::DimensionMismatch {
            context: "sign latent vector",
            expected: obs.signs.len(),
            got: fprime.len(),
        });
    }
    if !(obs.strictness > 0.0) {
        return Err(Error::NonPositive {
            name: "strictness",
            value: obs.strictness,
        });
    }
    let mut ll = 0.0;
    for (i, s) in obs.signs.iter().enumerate() {
        ll += log_normal_cdf(f64::from(s.sign) * fprime[i] / obs.strictness);
    }
    Ok(ll)
}

/// Unnormalized log joint of hyperparameters and latents.
///
/// `f` holds function values at the regular rows then the anchors; `fprime`
/// holds derivatives at the saturation rows then the sign rows. The GP prior
/// is evaluated on the jittered joint covariance of exactly those rows.
pub fn log_joint(
    obs: &ObservationSet,
    hp: &Hyperparameters,
    f: &DVector<f64>,
    fprime: &DVector<f64>,
    prior: &PriorSpec,
) -> Result<f64> {
    obs.validate(hp.dims())?;
    let n_values = obs.regular.len() + obs.zero_start.len();
    let n_derivs = obs.saturation.len() + obs.signs.len();
    if f.len() != n_values {
        return Err(Error::DimensionMismatch {
            context: "latent value vector",
            expected: n_values,
            got: f.len(),
        });
    }
    if fprime.len() != n_derivs {
        return Err(Error::DimensionMismatch {
            context: "latent derivative vector",
            expected: n_derivs,
            got: fprime.len(),
        });
    }

    let values: Vec<InputPoint> = obs
        .regular
        .iter()
        .map(|o| o.point.clone())
        .chain(obs.zero_start.iter().cloned())
        .collect();
    let derivs: Vec<DerivativeSpec> = obs
        .saturation
        .iter()
        .cloned()
        .chain(obs.signs.iter().map(|s| s.deriv.clone()))
        .collect();
    let joint = assemble_joint(&values, &derivs, hp, DEFAULT_JITTER)?;

    let latent = DVector::from_fn(n_values + n_derivs, |i, _| {
        if i < n_values {
            f[i]
        } else {
            fprime[i - n_values]
        }
    });
    let chol = joint.cholesky();
    let alpha = chol.solve(&latent);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
    let lp_gp = -0.5 * latent.dot(&alpha)
        - log_det
        - 0.5 * (n_values + n_derivs) as f64 * LN_2PI;

    // Gaussian rows observe f at regular+anchor indices and f' at
    // saturation indices (the first rows of the derivative block).
    let mut gauss_latent = DVector::zeros(obs.n_gaussian_rows());
    for i in 0..obs.regular.len() + obs.zero_start.len() {
        gauss_latent[i] = f[i];
    }
    for b in 0..obs.saturation.len() {
        gauss_latent[obs.regular.len() + obs.zero_start.len() + b] = fprime[b];
    }
    let ll_gauss = log_lik_gaussian(obs, &gauss_latent, hp.sigma())?;

    let fprime_signs = DVector::from_fn(obs.signs.len(), |i, _| fprime[obs.saturation.len() + i]);
    let ll_sign = log_lik_sign(obs, &fprime_signs)?;

    Ok(lp_gp + ll_gauss + ll_sign + log_prior(hp, prior)?)
}
