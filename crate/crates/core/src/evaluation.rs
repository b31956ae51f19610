//! Cross-validation schemes and predictive scoring.
//!
//! Three fold layouts cover the questions the model is used for:
//! interpolating a missing measurement ([`CvScheme::LeaveOneObservation`]),
//! predicting an unmeasured location from its features
//! ([`CvScheme::LeaveOneLocation`]), and extrapolating each fading curve
//! beyond its observed window ([`CvScheme::LeaveTail`]).
//!
//! Held-out rows are scored under the full posterior predictive: a mixture
//! of Gaussian conditionals over thinned hyperparameter draws and, when sign
//! constraints are active, over derivative latents resampled per fold. The
//! report carries per-row log predictive densities (summing to the expected
//! log pointwise predictive density, ELPD), squared-error summaries, and
//! probability integral transform (PIT) values for calibration checks.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::data::{
    build_virtual_sets, feature_lengthscale_map, ConstraintConfig, StandardizedDataset,
};
use crate::error::{Error, Result};
use crate::inference::{
    elliptical_slice_step, gaussian_system, sample_hyperparameters, Conditioner, McmcConfig,
    SignConditional,
};
use crate::kernel::{covariance, cross_covariance, Hyperparameters, Row};
use crate::math::{log_sum_exp, mean, normal_cdf, sample_variance, LN_2PI};
use crate::model::{log_lik_sign, ObservationSet, PriorSpec};

/// Fold layout.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvScheme {
    /// One fold per regular observation.
    LeaveOneObservation,
    /// One fold per location; all of its rows, including its zero-start
    /// anchor and its sign and saturation rows, leave the training set.
    LeaveOneLocation,
    /// One fold per location holding out its last `tail_length` time points.
    /// Constraint rows encode prior knowledge rather than measurements, so
    /// they all stay in training.
    LeaveTail { tail_length: usize },
}

impl CvScheme {
    pub fn label(&self) -> &'static str {
        match self {
            CvScheme::LeaveOneObservation => "leave-one-observation",
            CvScheme::LeaveOneLocation => "leave-one-location",
            CvScheme::LeaveTail { .. } => "leave-tail",
        }
    }
}

/// Whether the fitted model uses the derivative constraint rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    WithDerivatives,
    WithoutDerivatives,
}

impl ModelVariant {
    pub fn label(&self) -> &'static str {
        match self {
            ModelVariant::WithDerivatives => "with-derivatives",
            ModelVariant::WithoutDerivatives => "without-derivatives",
        }
    }
}

/// Drops the derivative rows for the without-derivatives variant; the
/// zero-start anchor is a value constraint and is kept in both.
pub fn variant_constraints(base: &ConstraintConfig, variant: ModelVariant) -> ConstraintConfig {
    match variant {
        ModelVariant::WithDerivatives => base.clone(),
        ModelVariant::WithoutDerivatives => ConstraintConfig {
            monotonicity_times: Vec::new(),
            saturation: false,
            ..base.clone()
        },
    }
}

/// One held-out measurement.
#[derive(Debug, Clone)]
pub struct HeldOutPoint {
    /// Index into the dataset's location list.
    pub location: usize,
    pub time_index: usize,
    pub point: crate::kernel::InputPoint,
    pub y: f64,
}

/// A training set and the rows it must predict.
#[derive(Debug, Clone)]
pub struct Fold {
    pub label: String,
    pub train: ObservationSet,
    pub held_out: Vec<HeldOutPoint>,
}

fn location_of(point: &crate::kernel::InputPoint) -> usize {
    point.spatial_index.expect("dataset points carry indices")
}

/// Builds the folds of `scheme` over a standardized dataset.
pub fn make_folds(
    ds: &StandardizedDataset,
    constraints: &ConstraintConfig,
    scheme: &CvScheme,
) -> Result<Vec<Fold>> {
    let full = build_virtual_sets(ds, constraints)?;
    let held_out_point = |o: &crate::model::Observation| HeldOutPoint {
        location: location_of(&o.point),
        time_index: o.point.time_index.expect("dataset points carry indices"),
        point: o.point.clone(),
        y: o.y,
    };

    // Fold exclusivity: a held-out index takes its virtual rows with it, so
    // no anchor or sign row ever describes a point the fold must predict.
    let drop_at = |train: &mut ObservationSet, hit: &dyn Fn(&crate::kernel::InputPoint) -> bool| {
        train.zero_start.retain(|p| !hit(p));
        train.signs.retain(|s| !hit(&s.deriv.point));
        train.saturation.retain(|d| !hit(&d.point));
    };

    let folds: Vec<Fold> = match scheme {
        CvScheme::LeaveOneObservation => (0..full.regular.len())
            .map(|i| {
                let mut train = full.clone();
                let out = train.regular.remove(i);
                let h = held_out_point(&out);
                let (li, ti) = (h.location, h.time_index);
                drop_at(&mut train, &|p| {
                    location_of(p) == li && p.time_index == Some(ti)
                });
                Fold {
                    label: format!(
                        "row:{}@t{}",
                        ds.location_ids[h.location], h.time_index
                    ),
                    train,
                    held_out: vec![h],
                }
            })
            .collect(),
        CvScheme::LeaveOneLocation => (0..ds.n_locations)
            .map(|li| {
                let mut train = full.clone();
                train.regular.retain(|o| location_of(&o.point) != li);
                drop_at(&mut train, &|p| location_of(p) == li);
                let held_out = full
                    .regular
                    .iter()
                    .filter(|o| location_of(&o.point) == li)
                    .map(held_out_point)
                    .collect();
                Fold {
                    label: format!("location:{}", ds.location_ids[li]),
                    train,
                    held_out,
                }
            })
            .collect(),
        CvScheme::LeaveTail { tail_length } => {
            let ell = *tail_length;
            if ell == 0 || ell >= ds.n_times {
                return Err(Error::Config(format!(
                    "tail_length must be in 1..{} (number of time points), got {ell}",
                    ds.n_times
                )));
            }
            let cut = ds.n_times - ell;
            let in_tail =
                |p: &crate::kernel::InputPoint| p.time_index.expect("indexed point") >= cut;
            let mut train = full.clone();
            train.regular.retain(|o| !in_tail(&o.point));
            drop_at(&mut train, &in_tail);
            let held_out = full
                .regular
                .iter()
                .filter(|o| in_tail(&o.point))
                .map(held_out_point)
                .collect();
            vec![Fold {
                label: format!("tail:last-{ell}"),
                train,
                held_out,
            }]
        }
    };

    for fold in &folds {
        if fold.train.regular.is_empty() {
            return Err(Error::EmptyFold(fold.label.clone()));
        }
        if fold.held_out.is_empty() {
            return Err(Error::EmptyFold(fold.label.clone()));
        }
    }
    Ok(folds)
}

/// Cross-validation runner configuration.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CvConfig {
    pub mcmc: McmcConfig,
    /// Hyperparameter prior; `None` uses the defaults for the feature map.
    pub prior: Option<PriorSpec>,
    /// Score with this single fixed draw instead of sampling.
    #[serde(skip)]
    pub fixed_hp: Option<Hyperparameters>,
    /// Re-run the sampler on every fold's training set instead of reusing
    /// the full-data posterior.
    pub refit_per_fold: bool,
    /// Number of thinned hyperparameter draws in the predictive mixture.
    pub hp_subsample: usize,
    /// Derivative-latent draws per hyperparameter draw (sign rows only).
    pub latent_draws: usize,
    /// Slice-sampling sweeps before the first latent draw of a fold.
    pub ess_warmup: usize,
    /// Sweeps after switching to the next hyperparameter draw.
    pub ess_rewarm: usize,
    /// Sweeps between recorded latent draws.
    pub ess_thin: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            mcmc: McmcConfig::default(),
            prior: None,
            fixed_hp: None,
            refit_per_fold: false,
            hp_subsample: 16,
            latent_draws: 8,
            ess_warmup: 64,
            ess_rewarm: 16,
            ess_thin: 4,
        }
    }
}

/// Score of one held-out measurement under the predictive mixture.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HeldOutRecord {
    pub fold: usize,
    pub location_id: u64,
    pub time_index: usize,
    pub time: f64,
    pub y: f64,
    pub mean: f64,
    pub sd: f64,
    pub log_pred: f64,
    pub pit: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub label: String,
    pub n_held_out: usize,
    pub elpd: f64,
    pub mse: f64,
}

/// Predicted mean trajectory of a held-out location over the full grid,
/// recorded for leave-one-location folds.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CurveRecord {
    pub fold: usize,
    pub location_id: u64,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub scheme: String,
    pub variant: String,
    pub n_folds: usize,
    /// Sum of per-row log predictive densities.
    pub elpd: f64,
    /// Standard error of the ELPD sum over rows.
    pub elpd_se: f64,
    /// Mean squared error of the predictive means.
    pub mse: f64,
    pub folds: Vec<FoldRecord>,
    pub records: Vec<HeldOutRecord>,
    pub curves: Vec<CurveRecord>,
}

impl EvalReport {
    pub fn pit_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.pit).collect()
    }
}

/// Paired comparison of two reports over identical folds.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ComparisonReport {
    pub scheme: String,
    pub elpd_with: f64,
    pub elpd_without: f64,
    /// elpd_with - elpd_without.
    pub elpd_diff: f64,
    /// Standard error of the paired per-row difference sum.
    pub elpd_diff_se: f64,
    pub mse_with: f64,
    pub mse_without: f64,
}

/// Pairs two reports row by row; both must score the same held-out data.
pub fn compare(with: &EvalReport, without: &EvalReport) -> Result<ComparisonReport> {
    if with.records.len() != without.records.len()
        || with
            .records
            .iter()
            .zip(&without.records)
            .any(|(a, b)| {
                a.location_id != b.location_id || a.time_index != b.time_index || a.y != b.y
            })
    {
        return Err(Error::Config(
            "reports do not cover the same held-out rows and cannot be paired".into(),
        ));
    }
    let diffs: Vec<f64> = with
        .records
        .iter()
        .zip(&without.records)
        .map(|(a, b)| a.log_pred - b.log_pred)
        .collect();
    let n = diffs.len() as f64;
    Ok(ComparisonReport {
        scheme: with.scheme.clone(),
        elpd_with: with.elpd,
        elpd_without: without.elpd,
        elpd_diff: with.elpd - without.elpd,
        elpd_diff_se: (n * sample_variance(&diffs)).sqrt(),
        mse_with: with.mse,
        mse_without: without.mse,
    })
}

/// Log density, CDF value, mean, and sd of `y` under an equally weighted
/// Gaussian mixture.
fn mixture_score(y: f64, means: &[f64], vars: &[f64]) -> (f64, f64, f64, f64) {
    debug_assert_eq!(means.len(), vars.len());
    let k = means.len() as f64;
    let mut lps = Vec::with_capacity(means.len());
    let mut cdf = 0.0;
    let mut first = 0.0;
    let mut second = 0.0;
    for (&m, &v) in means.iter().zip(vars) {
        let z = (y - m) / v.sqrt();
        lps.push(-0.5 * z * z - 0.5 * v.ln() - 0.5 * LN_2PI);
        cdf += normal_cdf(z);
        first += m;
        second += v + m * m;
    }
    let mu = first / k;
    let var = (second / k - mu * mu).max(0.0);
    (log_sum_exp(&lps) - k.ln(), cdf / k, mu, var.sqrt())
}

/// Gaussian conditional at fixed targets over a fold's training rows.
///
/// Sign rows enter as noise-free Gaussian rows whose values are supplied
/// per latent draw; the conditional covariance does not depend on those
/// values, so the factorization and target variances are built once.
struct FoldPredictor {
    joint: Conditioner,
    y_gauss: DVector<f64>,
    n_signs: usize,
    k_to: DMatrix<f64>,
    /// Latent conditional variance at the targets (no observation noise).
    var: DVector<f64>,
}

impl FoldPredictor {
    fn new(train: &ObservationSet, hp: &Hyperparameters, targets: &[Row]) -> Result<Self> {
        let (mut rows, y_gauss, noise) = gaussian_system(train, hp);
        let n_gauss = rows.len();
        let n_signs = train.signs.len();
        rows.extend(train.sign_rows());
        let mut full_noise = DVector::zeros(rows.len());
        let mut y0 = DVector::zeros(rows.len());
        for i in 0..n_gauss {
            full_noise[i] = noise[i];
            y0[i] = y_gauss[i];
        }
        let k_to = cross_covariance(targets, &rows, hp)?;
        let joint = Conditioner::new(rows, y0, &full_noise, hp)?;
        let cov = covariance(targets, hp)? - &k_to * joint.solve(&k_to.transpose());
        let var = cov.diagonal().map(|v: f64| v.max(0.0));
        Ok(Self {
            joint,
            y_gauss,
            n_signs,
            k_to,
            var,
        })
    }

    /// Predictive mean at the targets; `fprime_c` is required exactly when
    /// the fold has sign rows.
    fn mean(&mut self, fprime_c: Option<&DVector<f64>>) -> Result<DVector<f64>> {
        match (self.n_signs, fprime_c) {
            (0, None) => {}
            (n, Some(fc)) if fc.len() == n => {
                let g = self.y_gauss.len();
                let mut y = DVector::zeros(g + n);
                for i in 0..g {
                    y[i] = self.y_gauss[i];
                }
                for j in 0..n {
                    y[g + j] = fc[j];
                }
                self.joint.refresh_y(y)?;
            }
            (n, got) => {
                return Err(Error::DimensionMismatch {
                    context: "fold sign latent values",
                    expected: n,
                    got: got.map_or(0, |v| v.len()),
                })
            }
        }
        Ok(&self.k_to * self.joint.weights())
    }
}

struct FoldResult {
    records: Vec<HeldOutRecord>,
    curve: Option<CurveRecord>,
}

fn fit_thinned(
    obs: &ObservationSet,
    prior: &PriorSpec,
    cfg: &CvConfig,
    seed: u64,
) -> Result<Vec<Hyperparameters>> {
    let mut mcmc = cfg.mcmc.clone();
    mcmc.seed = seed;
    let samples = sample_hyperparameters(obs, &feature_lengthscale_map(), prior, &mcmc)?;
    let all: Vec<&Hyperparameters> = samples.chains.iter().flat_map(|c| c.hp.iter()).collect();
    if all.is_empty() {
        return Err(Error::InsufficientDraws {
            needed: "at least one retained draw",
            got: 0,
        });
    }
    let k = cfg.hp_subsample.clamp(1, all.len());
    Ok((0..k)
        .map(|j| all[((2 * j + 1) * all.len() / (2 * k)).min(all.len() - 1)].clone())
        .collect())
}

fn score_fold(
    ds: &StandardizedDataset,
    fold: &Fold,
    fold_idx: usize,
    hps: &[Hyperparameters],
    cfg: &CvConfig,
    scheme: &CvScheme,
    seed: u64,
) -> Result<FoldResult> {
    // Leave-one-location folds also record the mean trajectory over the
    // whole grid, so the targets cover every time point of that location.
    let curve_loc = match scheme {
        CvScheme::LeaveOneLocation => Some(fold.held_out[0].location),
        _ => None,
    };
    let (targets, target_of): (Vec<Row>, Vec<usize>) = match curve_loc {
        Some(li) => (
            (0..ds.n_times)
                .map(|ti| Row::Value(ds.point(li, ti).clone()))
                .collect(),
            fold.held_out.iter().map(|h| h.time_index).collect(),
        ),
        None => (
            fold.held_out
                .iter()
                .map(|h| Row::Value(h.point.clone()))
                .collect(),
            (0..fold.held_out.len()).collect(),
        ),
    };

    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x00c5_af5c_0a1e_d001);
    rng.set_stream(0x100 + fold_idx as u64);

    let mut comp_means: Vec<DVector<f64>> = Vec::new();
    let mut comp_vars: Vec<DVector<f64>> = Vec::new();
    let mut u = DVector::zeros(fold.train.signs.len());

    for (mi, hp) in hps.iter().enumerate() {
        let mut pred = FoldPredictor::new(&fold.train, hp, &targets)?;
        let sigma2 = hp.sigma() * hp.sigma();
        let var_m = pred.var.map(|v| v + sigma2);
        if fold.train.signs.is_empty() {
            comp_means.push(pred.mean(None)?);
            comp_vars.push(var_m);
        } else {
            let (g_rows, g_y, g_noise) = gaussian_system(&fold.train, hp);
            let g_cond = Conditioner::new(g_rows, g_y, &g_noise, hp)?;
            let sc = SignConditional::build(&g_cond, &fold.train)?;
            let mut ll = |v: &DVector<f64>| {
                log_lik_sign(&fold.train, &sc.fprime(v)).unwrap_or(f64::NEG_INFINITY)
            };
            let mut ll_val = ll(&u);
            let sweeps = if mi == 0 { cfg.ess_warmup } else { cfg.ess_rewarm };
            for _ in 0..sweeps {
                (u, ll_val) = elliptical_slice_step(&u, ll_val, &mut ll, &mut rng);
            }
            for _ in 0..cfg.latent_draws.max(1) {
                for _ in 0..cfg.ess_thin {
                    (u, ll_val) = elliptical_slice_step(&u, ll_val, &mut ll, &mut rng);
                }
                let fc = sc.fprime(&u);
                comp_means.push(pred.mean(Some(&fc))?);
                comp_vars.push(var_m.clone());
            }
        }
    }

    let records = fold
        .held_out
        .iter()
        .zip(&target_of)
        .map(|(h, &ti)| {
            let means: Vec<f64> = comp_means.iter().map(|m| m[ti]).collect();
            let vars: Vec<f64> = comp_vars.iter().map(|v| v[ti]).collect();
            let (log_pred, pit, mu, sd) = mixture_score(h.y, &means, &vars);
            HeldOutRecord {
                fold: fold_idx,
                location_id: ds.location_ids[h.location],
                time_index: h.time_index,
                time: ds.times[h.time_index],
                y: h.y,
                mean: mu,
                sd,
                log_pred,
                pit,
            }
        })
        .collect();

    let curve = curve_loc.map(|li| CurveRecord {
        fold: fold_idx,
        location_id: ds.location_ids[li],
        times: ds.times.clone(),
        mean: (0..ds.n_times)
            .map(|ti| comp_means.iter().map(|m| m[ti]).sum::<f64>() / comp_means.len() as f64)
            .collect(),
    });

    Ok(FoldResult { records, curve })
}

/// Runs one cross-validation scheme for one model variant.
///
/// By default the hyperparameter posterior is sampled once on the full data
/// and each fold re-conditions on its own training rows; `refit_per_fold`
/// repeats the sampling per fold instead. `seed` drives both the sampler
/// and the per-fold latent redraws, overriding `cfg.mcmc.seed`.
pub fn run_cv(
    ds: &StandardizedDataset,
    constraints: &ConstraintConfig,
    scheme: &CvScheme,
    variant: ModelVariant,
    cfg: &CvConfig,
    seed: u64,
) -> Result<EvalReport> {
    let vcfg = variant_constraints(constraints, variant);
    let folds = make_folds(ds, &vcfg, scheme)?;
    let prior = cfg
        .prior
        .clone()
        .unwrap_or_else(|| PriorSpec::default_for_groups(feature_lengthscale_map().n_groups()));

    let shared: Option<Vec<Hyperparameters>> = match (&cfg.fixed_hp, cfg.refit_per_fold) {
        (Some(hp), _) => Some(vec![hp.clone()]),
        (None, false) => {
            let full = build_virtual_sets(ds, &vcfg)?;
            Some(fit_thinned(&full, &prior, cfg, seed)?)
        }
        (None, true) => None,
    };

    let results: Result<Vec<FoldResult>> = folds
        .par_iter()
        .enumerate()
        .map(|(fi, fold)| {
            let hps = match &shared {
                Some(v) => v.clone(),
                None => fit_thinned(
                    &fold.train,
                    &prior,
                    cfg,
                    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(fi as u64),
                )?,
            };
            score_fold(ds, fold, fi, &hps, cfg, scheme, seed)
        })
        .collect();
    let results = results?;

    let mut records = Vec::new();
    let mut fold_records = Vec::with_capacity(folds.len());
    let mut curves = Vec::new();
    for (fi, (fold, res)) in folds.iter().zip(results).enumerate() {
        let elpd: f64 = res.records.iter().map(|r| r.log_pred).sum();
        let mse = mean(
            &res.records
                .iter()
                .map(|r| (r.mean - r.y) * (r.mean - r.y))
                .collect::<Vec<_>>(),
        );
        fold_records.push(FoldRecord {
            fold: fi,
            label: fold.label.clone(),
            n_held_out: res.records.len(),
            elpd,
            mse,
        });
        records.extend(res.records);
        curves.extend(res.curve);
    }

    let lps: Vec<f64> = records.iter().map(|r| r.log_pred).collect();
    let sqerr: Vec<f64> = records.iter().map(|r| (r.mean - r.y) * (r.mean - r.y)).collect();
    Ok(EvalReport {
        scheme: scheme.label().to_string(),
        variant: variant.label().to_string(),
        n_folds: folds.len(),
        elpd: lps.iter().sum(),
        elpd_se: (lps.len() as f64 * sample_variance(&lps)).sqrt(),
        mse: mean(&sqerr),
        folds: fold_records,
        records,
        curves,
    })
}

/// Two-sided Kolmogorov-Smirnov distance of `values` to Uniform(0, 1).
pub fn ks_statistic_uniform(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let upper = (i as f64 + 1.0) / n - u;
            let lower = u - i as f64 / n;
            upper.max(lower)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 5% critical value of the one-sample KS statistic.
pub fn ks_critical_value_5pct(n: usize) -> f64 {
    1.3581 / (n as f64).sqrt()
}

/// Fraction of curves whose means never decrease by more than `tol`.
pub fn nondecreasing_fraction(curves: &[CurveRecord], tol: f64) -> f64 {
    if curves.is_empty() {
        return 1.0;
    }
    let ok = curves
        .iter()
        .filter(|c| c.mean.windows(2).all(|w| w[1] >= w[0] - tol))
        .count();
    ok as f64 / curves.len() as f64
}
