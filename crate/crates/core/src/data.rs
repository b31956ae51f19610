//! Dataset ingestion, standardization, constraint construction, and
//! synthetic data.
//!
//! A dataset is a set of locations measured on one shared time grid that
//! must include t = 0. Each location carries three colourimetric features
//! (h, s, i) and two spatial coordinates (sx, sy). Model inputs are the five
//! features standardized to unit scale plus raw time, so a full input point
//! has six dimensions with time last.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernel::{
    cholesky_with_escalation, covariance, DerivativeSpec, Hyperparameters, InputPoint,
    LengthscaleMap, Row, DEFAULT_JITTER,
};
use crate::math::sample_variance;
use crate::model::{Observation, ObservationSet, SignObservation, DEFAULT_STRICTNESS};

/// Exact CSV header, in order.
pub const CSV_HEADER: [&str; 8] = ["location_id", "sx", "sy", "h", "s", "i", "t", "y"];

/// Number of model input dimensions.
pub const INPUT_DIMS: usize = 6;

/// Index of the time dimension within an input point.
pub const TIME_DIM: usize = 5;

/// Lengthscale grouping of the input dimensions: one group per colour
/// feature, a shared group for the two spatial coordinates, one for time.
pub fn feature_lengthscale_map() -> LengthscaleMap {
    LengthscaleMap::new(vec![0, 1, 2, 3, 3, 4]).expect("static map is valid")
}

/// One measured location: constant features and a response per time point.
#[derive(Debug, Clone, PartialEq)]
pub struct RawLocation {
    pub id: u64,
    pub sx: f64,
    pub sy: f64,
    pub h: f64,
    pub s: f64,
    pub i: f64,
    /// Aligned with [`RawDataset::times`].
    pub y: Vec<f64>,
}

/// Ingested dataset on a shared time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    /// Sorted ascending; always contains 0.
    pub times: Vec<f64>,
    /// Sorted by id.
    pub locations: Vec<RawLocation>,
}

impl RawDataset {
    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_locations() * self.n_times()
    }

    /// Serializes in the canonical schema, one row per (location, time).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        for loc in &self.locations {
            for (k, &t) in self.times.iter().enumerate() {
                out.write_record(&[
                    loc.id.to_string(),
                    loc.sx.to_string(),
                    loc.sy.to_string(),
                    loc.h.to_string(),
                    loc.s.to_string(),
                    loc.i.to_string(),
                    t.to_string(),
                    loc.y[k].to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf8"))
    }
}

fn parse_cell(field: &str, column: &str, line: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::NonNumericCell {
        column: column.to_string(),
        line,
    })?;
    if !v.is_finite() {
        return Err(Error::NonNumericCell {
            column: column.to_string(),
            line,
        });
    }
    Ok(v)
}

/// Reads a dataset in the canonical schema from any reader.
///
/// Validates the exact header, numeric cells, one shared time grid with
/// t = 0 present, no duplicate (location, time) pairs, and consistent
/// features within each location. Locations are ordered by id and times
/// ascending regardless of input order.
pub fn ingest_reader<R: Read>(reader: R) -> Result<RawDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != CSV_HEADER {
        return Err(Error::SchemaMismatch {
            expected: CSV_HEADER.join(","),
            got: got.join(","),
        });
    }

    struct Builder {
        feats: [f64; 5],
        rows: Vec<(f64, f64)>,
    }
    let mut by_loc: BTreeMap<u64, Builder> = BTreeMap::new();

    for record in rdr.records() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        if record.len() != CSV_HEADER.len() {
            return Err(Error::SchemaMismatch {
                expected: format!("{} fields", CSV_HEADER.len()),
                got: format!("{} fields on line {line}", record.len()),
            });
        }
        let id: u64 = record[0].trim().parse().map_err(|_| Error::NonNumericCell {
            column: "location_id".to_string(),
            line,
        })?;
        let mut vals = [0.0; 7];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = parse_cell(&record[k + 1], CSV_HEADER[k + 1], line)?;
        }
        let feats = [vals[0], vals[1], vals[2], vals[3], vals[4]];
        let (t, y) = (vals[5], vals[6]);

        let entry = by_loc.entry(id).or_insert_with(|| Builder {
            feats,
            rows: Vec::new(),
        });
        if entry.feats != feats {
            return Err(Error::InconsistentFeatures { location: id });
        }
        if entry.rows.iter().any(|&(t0, _)| t0 == t) {
            return Err(Error::DuplicateKey {
                location: id,
                time: t,
            });
        }
        entry.rows.push((t, y));
    }

    if by_loc.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }

    // Reference grid: sorted times of the first location.
    let mut times: Vec<f64> = by_loc.values().next().unwrap().rows.iter().map(|r| r.0).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let first_id = *by_loc.keys().next().unwrap();
    if !times.contains(&0.0) {
        return Err(Error::MissingTimePoint {
            location: first_id,
            time: 0.0,
        });
    }

    let mut locations = Vec::with_capacity(by_loc.len());
    for (id, b) in by_loc {
        if b.rows.len() != times.len() {
            return Err(Error::RaggedTimeGrid {
                location: id,
                expected: times.len(),
                got: b.rows.len(),
            });
        }
        let mut y = Vec::with_capacity(times.len());
        for &t in &times {
            match b.rows.iter().find(|&&(t0, _)| t0 == t) {
                Some(&(_, v)) => y.push(v),
                None => {
                    return Err(Error::MissingTimePoint {
                        location: id,
                        time: t,
                    })
                }
            }
        }
        locations.push(RawLocation {
            id,
            sx: b.feats[0],
            sy: b.feats[1],
            h: b.feats[2],
            s: b.feats[3],
            i: b.feats[4],
            y,
        });
    }
    Ok(RawDataset { times, locations })
}

/// Reads a dataset from a CSV file. See [`ingest_reader`].
pub fn ingest(path: &Path) -> Result<RawDataset> {
    ingest_reader(std::fs::File::open(path)?)
}

/// Per-column scale divisors. Features are divided by these without mean
/// centering; the two spatial coordinates share one divisor so their
/// relative geometry is preserved.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScalingFactors {
    pub h_std: f64,
    pub s_std: f64,
    pub i_std: f64,
    pub spatial_std: f64,
}

impl ScalingFactors {
    /// Standardized feature block [h, s, i, sx, sy].
    pub fn standardize(&self, h: f64, s: f64, i: f64, sx: f64, sy: f64) -> [f64; 5] {
        [
            h / self.h_std,
            s / self.s_std,
            i / self.i_std,
            sx / self.spatial_std,
            sy / self.spatial_std,
        ]
    }

    /// Full input point at raw time `t`, unindexed.
    pub fn input_point(&self, h: f64, s: f64, i: f64, sx: f64, sy: f64, t: f64) -> InputPoint {
        let f = self.standardize(h, s, i, sx, sy);
        InputPoint::new(vec![f[0], f[1], f[2], f[3], f[4], t])
    }
}

/// Standardized model inputs in location-major order with time fastest.
#[derive(Debug, Clone)]
pub struct StandardizedDataset {
    /// N·T points, indexed with (spatial_index, time_index).
    pub points: Vec<InputPoint>,
    pub y: Vec<f64>,
    pub times: Vec<f64>,
    pub factors: ScalingFactors,
    pub location_ids: Vec<u64>,
    pub n_locations: usize,
    pub n_times: usize,
}

impl StandardizedDataset {
    pub fn index(&self, loc: usize, time: usize) -> usize {
        loc * self.n_times + time
    }

    pub fn point(&self, loc: usize, time: usize) -> &InputPoint {
        &self.points[self.index(loc, time)]
    }

    pub fn y_at(&self, loc: usize, time: usize) -> f64 {
        self.y[self.index(loc, time)]
    }
}

/// Computes scale divisors and applies them.
///
/// h, s, i are divided by their own sample standard deviations across
/// locations; sx and sy by the sample standard deviation of the pooled
/// 2N coordinate values around their common mean. Time is left in its raw
/// units. Constant columns cannot be standardized.
pub fn standardize(raw: &RawDataset) -> Result<StandardizedDataset> {
    let n = raw.n_locations();
    if n == 0 {
        return Err(Error::EmptyInput("dataset"));
    }
    let col = |f: fn(&RawLocation) -> f64| -> Vec<f64> { raw.locations.iter().map(f).collect() };
    let h: Vec<f64> = col(|l| l.h);
    let s: Vec<f64> = col(|l| l.s);
    let i: Vec<f64> = col(|l| l.i);
    let mut spatial: Vec<f64> = col(|l| l.sx);
    spatial.extend(raw.locations.iter().map(|l| l.sy));

    let checked = |xs: &[f64], column: &'static str| -> Result<f64> {
        let sd = sample_variance(xs).sqrt();
        if sd > 0.0 {
            Ok(sd)
        } else {
            Err(Error::ZeroVarianceColumn { column })
        }
    };
    let factors = ScalingFactors {
        h_std: checked(&h, "h")?,
        s_std: checked(&s, "s")?,
        i_std: checked(&i, "i")?,
        spatial_std: checked(&spatial, "sx/sy")?,
    };

    let mut points = Vec::with_capacity(raw.n_rows());
    let mut y = Vec::with_capacity(raw.n_rows());
    for (li, loc) in raw.locations.iter().enumerate() {
        let f = factors.standardize(loc.h, loc.s, loc.i, loc.sx, loc.sy);
        for (ti, &t) in raw.times.iter().enumerate() {
            points.push(InputPoint::indexed(
                vec![f[0], f[1], f[2], f[3], f[4], t],
                li,
                ti,
            ));
            y.push(loc.y[ti]);
        }
    }
    Ok(StandardizedDataset {
        points,
        y,
        times: raw.times.clone(),
        factors,
        location_ids: raw.locations.iter().map(|l| l.id).collect(),
        n_locations: n,
        n_times: raw.n_times(),
    })
}

/// Which virtual constraint rows to attach to a dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConstraintConfig {
    /// Anchor f = 0 at t = 0 for every location, replacing the t = 0 rows.
    pub zero_start: bool,
    /// Time indices at which df/dt > 0 is asserted for every location.
    pub monotonicity_times: Vec<usize>,
    /// Anchor df/dt = 0 at the final time point for every location.
    pub saturation: bool,
    /// Probit strictness v.
    pub strictness: f64,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            zero_start: true,
            monotonicity_times: vec![6, 9],
            saturation: false,
            strictness: DEFAULT_STRICTNESS,
        }
    }
}

/// Assembles the observation set for a standardized dataset.
///
/// With `zero_start` the t = 0 rows become exact anchors and the regular
/// block holds only t ≥ 1 rows; otherwise every row is regular.
pub fn build_virtual_sets(
    ds: &StandardizedDataset,
    cfg: &ConstraintConfig,
) -> Result<ObservationSet> {
    if !(cfg.strictness > 0.0) {
        return Err(Error::NonPositive {
            name: "strictness",
            value: cfg.strictness,
        });
    }
    for &ti in &cfg.monotonicity_times {
        if ti >= ds.n_times {
            return Err(Error::IndexOutOfRange {
                name: "monotonicity time index",
                value: ti,
                limit: ds.n_times,
            });
        }
    }
    if cfg.monotonicity_times.len() * 2 > ds.n_times {
        log::warn!(
            "{} monotonicity times on a {}-point grid; sign rows may dominate the fit",
            cfg.monotonicity_times.len(),
            ds.n_times
        );
    }

    let first_regular = usize::from(cfg.zero_start);
    let mut obs = ObservationSet::new(Vec::with_capacity(
        ds.n_locations * (ds.n_times - first_regular),
    ));
    obs.strictness = cfg.strictness;
    for li in 0..ds.n_locations {
        for ti in first_regular..ds.n_times {
            obs.regular.push(Observation {
                point: ds.point(li, ti).clone(),
                y: ds.y_at(li, ti),
            });
        }
        if cfg.zero_start {
            if ds.y_at(li, 0).abs() > 1e-8 {
                log::warn!(
                    "location {} has y = {} at t = 0; the zero-start anchor overrides it",
                    ds.location_ids[li],
                    ds.y_at(li, 0)
                );
            }
            obs.zero_start.push(ds.point(li, 0).clone());
        }
        for &ti in &cfg.monotonicity_times {
            obs.signs.push(SignObservation {
                deriv: DerivativeSpec::new(ds.point(li, ti).clone(), TIME_DIM)?,
                sign: 1,
            });
        }
        if cfg.saturation {
            obs.saturation
                .push(DerivativeSpec::new(ds.point(li, ds.n_times - 1).clone(), TIME_DIM)?);
        }
    }
    obs.validate(INPUT_DIMS)?;
    Ok(obs)
}

/// Synthetic ground-truth family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    /// Zero-start, monotone, saturating curves with a spatially smooth
    /// amplitude field; deliberately outside the GP family.
    MonotoneSaturating,
    /// Exact draws from the GP prior over all rows, for calibration tests.
    GpPrior,
    /// Zero-start GP draws rejection-sampled until every curve is
    /// non-decreasing on the grid: monotone data inside the GP family, for
    /// model-comparison tests.
    MonotoneGp,
}

/// Synthetic data configuration.
///
/// `alpha` and `lengthscales` are in standardized input units; in
/// `MonotoneSaturating` mode they govern the spatial log-amplitude field, in
/// `GpPrior` and `MonotoneGp` modes the full space-time kernel.
/// `lengthscales` order is [h, s, i, spatial, time].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimulateConfig {
    pub n_locations: usize,
    pub n_times: usize,
    pub kind: CurveKind,
    pub alpha: f64,
    pub lengthscales: [f64; 5],
    pub sigma: f64,
    /// Median total rise of a curve (MonotoneSaturating).
    pub amplitude: f64,
    /// Exponential decay rate of the per-step increments (MonotoneSaturating).
    pub decay: f64,
    /// Log-normal spread of the per-location decay (MonotoneSaturating).
    pub decay_spread: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n_locations: 13,
            n_times: 11,
            kind: CurveKind::MonotoneSaturating,
            alpha: 0.5,
            lengthscales: [1.0, 2.0, 1.5, 3.0, 4.0],
            sigma: 0.35,
            amplitude: 3.0,
            decay: 0.35,
            decay_spread: 0.15,
        }
    }
}

fn validate_simulate(cfg: &SimulateConfig) -> Result<()> {
    if cfg.n_locations < 2 {
        return Err(Error::Config(
            "simulation needs at least 2 locations".into(),
        ));
    }
    if cfg.n_times < 2 {
        return Err(Error::Config("simulation needs at least 2 time points".into()));
    }
    for (name, v) in [
        ("alpha", cfg.alpha),
        ("sigma", cfg.sigma),
        ("amplitude", cfg.amplitude),
        ("decay", cfg.decay),
    ] {
        if !(v > 0.0) {
            return Err(Error::NonPositive {
                name: match name {
                    "alpha" => "alpha",
                    "sigma" => "sigma",
                    "amplitude" => "amplitude",
                    _ => "decay",
                },
                value: v,
            });
        }
    }
    for &l in &cfg.lengthscales {
        if !(l > 0.0) {
            return Err(Error::NonPositive {
                name: "lengthscale",
                value: l,
            });
        }
    }
    if cfg.decay_spread < 0.0 {
        return Err(Error::NonPositive {
            name: "decay_spread",
            value: cfg.decay_spread,
        });
    }
    Ok(())
}

/// Feature distributions shaped like the rock-art panel measurements:
/// hue ~ N(10.5, 2²), saturation ~ N(19.4, 2²), intensity ~ N(15.5, 3²),
/// coordinates ~ N(3.55, 0.75²) and N(4.97, 0.69²).
fn draw_features(n: usize, rng: &mut ChaCha20Rng) -> Vec<[f64; 5]> {
    let norm = |rng: &mut ChaCha20Rng, mu: f64, sd: f64| -> f64 {
        mu + sd * rng.sample::<f64, _>(StandardNormal)
    };
    (0..n)
        .map(|_| {
            [
                norm(rng, 3.55, 0.75),
                norm(rng, 4.97, 0.69),
                norm(rng, 10.5, 2.0),
                norm(rng, 19.4, 2.0),
                norm(rng, 15.5, 3.0),
            ]
        })
        .collect()
}

fn gp_draw(points: &[Row], hp: &Hyperparameters, rng: &mut ChaCha20Rng) -> Result<DVector<f64>> {
    let k = covariance(points, hp)?;
    let (chol, _) = cholesky_with_escalation(&k, DEFAULT_JITTER)?;
    let z = DVector::from_fn(points.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(chol.unpack() * z)
}

/// Full space-time grid rows in standardized units, time fastest.
fn space_time_rows(
    features: &[[f64; 5]],
    factors: &ScalingFactors,
    times: &[f64],
) -> Vec<Row> {
    features
        .iter()
        .flat_map(|f| {
            let z = factors.standardize(f[2], f[3], f[4], f[0], f[1]);
            times
                .iter()
                .map(move |&t| Row::Value(InputPoint::new(vec![z[0], z[1], z[2], z[3], z[4], t])))
        })
        .collect()
}

/// Generates a synthetic dataset; deterministic for a given (config, seed).
///
/// Times are 0, 1, .., n_times-1. In `MonotoneSaturating` mode each curve is
/// amplitude_i · (normalized cumulative sum of exponentially decaying
/// increments): exactly zero at t = 0, strictly increasing, flattening at
/// the end. Amplitudes are log-GP-distributed over the standardized
/// features. Observation noise is added everywhere except the t = 0 rows of
/// monotone curves, which are zero by definition.
pub fn simulate(cfg: &SimulateConfig, seed: u64) -> Result<RawDataset> {
    validate_simulate(cfg)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (n, t_len) = (cfg.n_locations, cfg.n_times);
    let features = draw_features(n, &mut rng);
    let times: Vec<f64> = (0..t_len).map(|k| k as f64).collect();

    // Standardize the drawn features with the same rule the model uses.
    let mut spatial: Vec<f64> = features.iter().map(|f| f[0]).collect();
    spatial.extend(features.iter().map(|f| f[1]));
    let factors = ScalingFactors {
        h_std: sample_variance(&features.iter().map(|f| f[2]).collect::<Vec<_>>()).sqrt(),
        s_std: sample_variance(&features.iter().map(|f| f[3]).collect::<Vec<_>>()).sqrt(),
        i_std: sample_variance(&features.iter().map(|f| f[4]).collect::<Vec<_>>()).sqrt(),
        spatial_std: sample_variance(&spatial).sqrt(),
    };
    for (name, v) in [
        ("h", factors.h_std),
        ("s", factors.s_std),
        ("i", factors.i_std),
        ("sx/sy", factors.spatial_std),
    ] {
        if !(v > 0.0) {
            return Err(Error::ZeroVarianceColumn {
                column: match name {
                    "h" => "h",
                    "s" => "s",
                    "i" => "i",
                    _ => "sx/sy",
                },
            });
        }
    }

    let latent: Vec<Vec<f64>> = match cfg.kind {
        CurveKind::MonotoneSaturating => {
            let spatial_map = LengthscaleMap::new(vec![0, 1, 2, 3, 3]).expect("static map");
            let hp_s = Hyperparameters::new(
                cfg.alpha,
                vec![
                    cfg.lengthscales[0],
                    cfg.lengthscales[1],
                    cfg.lengthscales[2],
                    cfg.lengthscales[3],
                ],
                1.0,
                spatial_map,
            )?;
            let rows: Vec<Row> = features
                .iter()
                .map(|f| {
                    let z = factors.standardize(f[2], f[3], f[4], f[0], f[1]);
                    Row::Value(InputPoint::new(z.to_vec()))
                })
                .collect();
            let g = gp_draw(&rows, &hp_s, &mut rng)?;
            (0..n)
                .map(|li| {
                    let amp = cfg.amplitude * g[li].exp();
                    let decay = cfg.decay
                        * (cfg.decay_spread * rng.sample::<f64, _>(StandardNormal)).exp();
                    let increments: Vec<f64> =
                        (1..t_len).map(|k| (-decay * (k - 1) as f64).exp()).collect();
                    let total: f64 = increments.iter().sum();
                    let mut y = Vec::with_capacity(t_len);
                    let mut acc = 0.0;
                    y.push(0.0);
                    for inc in &increments {
                        acc += inc / total;
                        y.push(amp * acc);
                    }
                    y
                })
                .collect()
        }
        CurveKind::GpPrior => {
            let rows = space_time_rows(&features, &factors, &times);
            let hp = Hyperparameters::new(
                cfg.alpha,
                cfg.lengthscales.to_vec(),
                cfg.sigma,
                feature_lengthscale_map(),
            )?;
            let f = gp_draw(&rows, &hp, &mut rng)?;
            (0..n)
                .map(|li| (0..t_len).map(|ti| f[li * t_len + ti]).collect())
                .collect()
        }
        CurveKind::MonotoneGp => {
            let rows = space_time_rows(&features, &factors, &times);
            let hp = Hyperparameters::new(
                cfg.alpha,
                cfg.lengthscales.to_vec(),
                cfg.sigma,
                feature_lengthscale_map(),
            )?;
            let k = covariance(&rows, &hp)?;
            let (chol, _) = cholesky_with_escalation(&k, DEFAULT_JITTER)?;
            let l = chol.unpack();
            const MAX_TRIES: usize = 50_000;
            let mut accepted = None;
            for _ in 0..MAX_TRIES {
                let z = DVector::from_fn(rows.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                let f = &l * z;
                // Pinning the start to zero by differencing keeps the draw
                // inside the GP family.
                let curves: Vec<Vec<f64>> = (0..n)
                    .map(|li| {
                        (0..t_len)
                            .map(|ti| f[li * t_len + ti] - f[li * t_len])
                            .collect()
                    })
                    .collect();
                if curves
                    .iter()
                    .all(|c: &Vec<f64>| c.windows(2).all(|w| w[1] >= w[0]))
                {
                    accepted = Some(curves);
                    break;
                }
            }
            accepted.ok_or_else(|| {
                Error::Config(
                    "no jointly monotone draw accepted; use a longer time \
                     lengthscale, stronger spatial correlation, or a smaller grid"
                        .into(),
                )
            })?
        }
    };

    let locations = features
        .iter()
        .enumerate()
        .map(|(li, f)| {
            let y = latent[li]
                .iter()
                .enumerate()
                .map(|(ti, &v)| {
                    let keep_exact = cfg.kind != CurveKind::GpPrior && ti == 0;
                    if keep_exact {
                        v
                    } else {
                        v + cfg.sigma * rng.sample::<f64, _>(StandardNormal)
                    }
                })
                .collect();
            RawLocation {
                id: li as u64 + 1,
                sx: f[0],
                sy: f[1],
                h: f[2],
                s: f[3],
                i: f[4],
                y,
            }
        })
        .collect();
    Ok(RawDataset { times, locations })
}
