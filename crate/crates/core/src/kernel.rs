//! Squared-exponential ARD kernel with derivative cross-covariances.
//!
//! For inputs x, x' ∈ R^D the base kernel is
//!
//!   k(x, x') = α² exp(-½ Σ_d (x_d - x'_d)² / ρ_d²)
//!
//! where each dimension's lengthscale ρ_d is looked up through a
//! [`LengthscaleMap`] so that several dimensions can share one parameter.
//! Differentiation is linear, so f and any first partial derivative are
//! jointly Gaussian with
//!
//!   Cov[∂f(x)/∂x_g, f(x')]          = k(x, x') · (-(x_g - x'_g) / ρ_g²)
//!   Cov[∂f(x)/∂x_g, ∂f(x')/∂x'_h]  = k(x, x') · (δ_gh / ρ_g²
//!                                     - (x_g - x'_g)(x_h - x'_h) / (ρ_g² ρ_h²))
//!
//! Rows of a joint system are [`Row`] values, either a function value at an
//! [`InputPoint`] or a partial derivative described by a [`DerivativeSpec`].

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Jitter first added to the diagonal before factorizing.
pub const DEFAULT_JITTER: f64 = 1e-8;

/// Largest jitter tried before giving up; escalation multiplies by 10.
pub const MAX_JITTER: f64 = 1e-4;

/// Maps input dimensions to lengthscale groups.
///
/// `groups[d]` is the index of the lengthscale used by dimension `d`. Group
/// indices must be contiguous from zero with every group used at least once.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LengthscaleMap {
    groups: Vec<usize>,
}

impl LengthscaleMap {
    pub fn new(groups: Vec<usize>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::EmptyInput("lengthscale group map"));
        }
        let n_groups = groups.iter().max().unwrap() + 1;
        let mut seen = vec![false; n_groups];
        for &g in &groups {
            seen[g] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Config(format!(
                "lengthscale group {missing} is never used; groups must be contiguous from 0"
            )));
        }
        Ok(Self { groups })
    }

    /// One group per dimension.
    pub fn independent(dims: usize) -> Self {
        Self {
            groups: (0..dims).collect(),
        }
    }

    /// Number of input dimensions covered by the map.
    pub fn dims(&self) -> usize {
        self.groups.len()
    }

    /// Number of distinct lengthscale groups.
    pub fn n_groups(&self) -> usize {
        self.groups.iter().max().unwrap() + 1
    }

    /// Group index for dimension `d`.
    pub fn group_of(&self, d: usize) -> usize {
        self.groups[d]
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }
}

/// Kernel hyperparameters: signal scale α, per-group lengthscales ρ, and
/// observation noise σ. Constructed through [`Hyperparameters::new`], which
/// rejects non-positive values, so a value of this type is always valid.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    alpha: f64,
    lengthscales: Vec<f64>,
    sigma: f64,
    map: LengthscaleMap,
}

impl Hyperparameters {
    pub fn new(
        alpha: f64,
        lengthscales: Vec<f64>,
        sigma: f64,
        map: LengthscaleMap,
    ) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::NonPositive {
                name: "alpha",
                value: alpha,
            });
        }
        if !(sigma > 0.0) {
            return Err(Error::NonPositive {
                name: "sigma",
                value: sigma,
            });
        }
        for &l in &lengthscales {
            if !(l > 0.0) {
                return Err(Error::NonPositive {
                    name: "lengthscale",
                    value: l,
                });
            }
        }
        if lengthscales.len() != map.n_groups() {
            return Err(Error::DimensionMismatch {
                context: "lengthscales vs group map",
                expected: map.n_groups(),
                got: lengthscales.len(),
            });
        }
        Ok(Self {
            alpha,
            lengthscales,
            sigma,
            map,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn map(&self) -> &LengthscaleMap {
        &self.map
    }

    pub fn dims(&self) -> usize {
        self.map.dims()
    }

    /// Lengthscale applied to dimension `d`.
    pub fn rho(&self, d: usize) -> f64 {
        self.lengthscales[self.map.group_of(d)]
    }

    /// Same kernel with a different α; used by factorized covariances.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(alpha, self.lengthscales.clone(), self.sigma, self.map.clone())
    }
}

/// A point in input space, optionally tagged with dataset indices.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPoint {
    pub values: Vec<f64>,
    pub spatial_index: Option<usize>,
    pub time_index: Option<usize>,
}

impl InputPoint {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            spatial_index: None,
            time_index: None,
        }
    }

    pub fn indexed(values: Vec<f64>, spatial_index: usize, time_index: usize) -> Self {
        Self {
            values,
            spatial_index: Some(spatial_index),
            time_index: Some(time_index),
        }
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }
}

/// A first partial derivative of the latent function: ∂f/∂x_{wrt} at `point`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeSpec {
    pub point: InputPoint,
    pub wrt: usize,
}

impl DerivativeSpec {
    pub fn new(point: InputPoint, wrt: usize) -> Result<Self> {
        if wrt >= point.dims() {
            return Err(Error::IndexOutOfRange {
                name: "derivative dimension",
                value: wrt,
                limit: point.dims(),
            });
        }
        Ok(Self { point, wrt })
    }
}

/// One row of a joint covariance: a function value or a derivative.
#[derive(Debug, Clone, PartialEq)]
pub enum Row {
    Value(InputPoint),
    Deriv(DerivativeSpec),
}

impl Row {
    pub fn point(&self) -> &InputPoint {
        match self {
            Row::Value(p) => p,
            Row::Deriv(d) => &d.point,
        }
    }

    pub fn is_deriv(&self) -> bool {
        matches!(self, Row::Deriv(_))
    }
}

fn check_dims(a: &InputPoint, b: &InputPoint, hp: &Hyperparameters) -> Result<()> {
    if a.dims() != hp.dims() {
        return Err(Error::DimensionMismatch {
            context: "kernel input",
            expected: hp.dims(),
            got: a.dims(),
        });
    }
    if b.dims() != hp.dims() {
        return Err(Error::DimensionMismatch {
            context: "kernel input",
            expected: hp.dims(),
            got: b.dims(),
        });
    }
    Ok(())
}

fn se_ard_unchecked(a: &[f64], b: &[f64], hp: &Hyperparameters) -> f64 {
    let mut q = 0.0;
    for d in 0..a.len() {
        let scaled = (a[d] - b[d]) / hp.rho(d);
        q += scaled * scaled;
    }
    hp.alpha() * hp.alpha() * (-0.5 * q).exp()
}

/// k(x₁, x₂) for function values.
pub fn se_ard_cov(x1: &InputPoint, x2: &InputPoint, hp: &Hyperparameters) -> Result<f64> {
    check_dims(x1, x2, hp)?;
    Ok(se_ard_unchecked(&x1.values, &x2.values, hp))
}

fn deriv_value_unchecked(d: &DerivativeSpec, x: &InputPoint, hp: &Hyperparameters) -> f64 {
    let g = d.wrt;
    let rho = hp.rho(g);
    let k = se_ard_unchecked(&d.point.values, &x.values, hp);
    k * (-(d.point.values[g] - x.values[g]) / (rho * rho))
}

/// Cov[∂f/∂x_g at `d.point`, f at `x`].
///
/// Swapping which argument carries the derivative flips the sign.
pub fn cov_deriv_value(d: &DerivativeSpec, x: &InputPoint, hp: &Hyperparameters) -> Result<f64> {
    check_dims(&d.point, x, hp)?;
    if d.wrt >= hp.dims() {
        return Err(Error::IndexOutOfRange {
            name: "derivative dimension",
            value: d.wrt,
            limit: hp.dims(),
        });
    }
    Ok(deriv_value_unchecked(d, x, hp))
}

fn deriv_deriv_unchecked(d1: &DerivativeSpec, d2: &DerivativeSpec, hp: &Hyperparameters) -> f64 {
    let (g, h) = (d1.wrt, d2.wrt);
    let (rho_g, rho_h) = (hp.rho(g), hp.rho(h));
    let dg = d1.point.values[g] - d2.point.values[g];
    let dh = d1.point.values[h] - d2.point.values[h];
    let k = se_ard_unchecked(&d1.point.values, &d2.point.values, hp);
    let kronecker = if g == h { 1.0 } else { 0.0 };
    k * (kronecker / (rho_g * rho_g) - dg * dh / (rho_g * rho_g * rho_h * rho_h))
}

/// Cov[∂f/∂x_g at `d1.point`, ∂f/∂x_h at `d2.point`].
pub fn cov_deriv_deriv(
    d1: &DerivativeSpec,
    d2: &DerivativeSpec,
    hp: &Hyperparameters,
) -> Result<f64> {
    check_dims(&d1.point, &d2.point, hp)?;
    for d in [d1, d2] {
        if d.wrt >= hp.dims() {
            return Err(Error::IndexOutOfRange {
                name: "derivative dimension",
                value: d.wrt,
                limit: hp.dims(),
            });
        }
    }
    Ok(deriv_deriv_unchecked(d1, d2, hp))
}

fn cov_entry_unchecked(a: &Row, b: &Row, hp: &Hyperparameters) -> f64 {
    match (a, b) {
        (Row::Value(x1), Row::Value(x2)) => se_ard_unchecked(&x1.values, &x2.values, hp),
        (Row::Deriv(d), Row::Value(x)) | (Row::Value(x), Row::Deriv(d)) => {
            deriv_value_unchecked(d, x, hp)
        }
        (Row::Deriv(d1), Row::Deriv(d2)) => deriv_deriv_unchecked(d1, d2, hp),
    }
}

/// Covariance between two arbitrary rows. Cov is symmetric as a bilinear
/// form, so the entry does not depend on argument order.
pub fn cov_entry(a: &Row, b: &Row, hp: &Hyperparameters) -> Result<f64> {
    check_dims(a.point(), b.point(), hp)?;
    if let Row::Deriv(d) = a {
        if d.wrt >= hp.dims() {
            return Err(Error::IndexOutOfRange {
                name: "derivative dimension",
                value: d.wrt,
                limit: hp.dims(),
            });
        }
    }
    if let Row::Deriv(d) = b {
        if d.wrt >= hp.dims() {
            return Err(Error::IndexOutOfRange {
                name: "derivative dimension",
                value: d.wrt,
                limit: hp.dims(),
            });
        }
    }
    Ok(cov_entry_unchecked(a, b, hp))
}

fn validate_rows(rows: &[Row], hp: &Hyperparameters, context: &'static str) -> Result<()> {
    for r in rows {
        if r.point().dims() != hp.dims() {
            return Err(Error::DimensionMismatch {
                context,
                expected: hp.dims(),
                got: r.point().dims(),
            });
        }
        if let Row::Deriv(d) = r {
            if d.wrt >= hp.dims() {
                return Err(Error::IndexOutOfRange {
                    name: "derivative dimension",
                    value: d.wrt,
                    limit: hp.dims(),
                });
            }
        }
    }
    Ok(())
}

/// Dense cross-covariance matrix between two row lists.
pub fn cross_covariance(
    rows_a: &[Row],
    rows_b: &[Row],
    hp: &Hyperparameters,
) -> Result<DMatrix<f64>> {
    validate_rows(rows_a, hp, "cross covariance rows")?;
    validate_rows(rows_b, hp, "cross covariance rows")?;
    Ok(DMatrix::from_fn(rows_a.len(), rows_b.len(), |i, j| {
        cov_entry_unchecked(&rows_a[i], &rows_b[j], hp)
    }))
}

/// Symmetric covariance of one row list, exploiting symmetry.
pub fn covariance(rows: &[Row], hp: &Hyperparameters) -> Result<DMatrix<f64>> {
    validate_rows(rows, hp, "covariance rows")?;
    let n = rows.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = cov_entry_unchecked(&rows[i], &rows[j], hp);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Adds `start` jitter to the diagonal and factorizes, escalating tenfold on
/// failure up to [`MAX_JITTER`]. Returns the factorization and the jitter
/// that succeeded.
pub(crate) fn cholesky_with_escalation(
    a: &DMatrix<f64>,
    start: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = start;
    loop {
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, jitter));
        }
        let next = jitter * 10.0;
        if next > MAX_JITTER * (1.0 + 1e-12) {
            return Err(Error::NotPositiveDefinite { jitter });
        }
        jitter = next;
    }
}

/// Joint covariance over value rows followed by derivative rows, factorized
/// with diagonal jitter.
#[derive(Debug, Clone)]
pub struct JointCovariance {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    n_values: usize,
    jitter: f64,
}

impl JointCovariance {
    /// Full (n+m) × (n+m) matrix including the jitter on the diagonal.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// Value-value block, including jitter on its diagonal.
    pub fn value_block(&self) -> DMatrix<f64> {
        self.matrix.view((0, 0), (self.n_values, self.n_values)).into()
    }

    /// Derivative-derivative block, including jitter on its diagonal.
    pub fn deriv_block(&self) -> DMatrix<f64> {
        let m = self.matrix.nrows() - self.n_values;
        self.matrix
            .view((self.n_values, self.n_values), (m, m))
            .into()
    }

    /// Value-derivative cross block.
    pub fn cross_block(&self) -> DMatrix<f64> {
        let m = self.matrix.nrows() - self.n_values;
        self.matrix.view((0, self.n_values), (self.n_values, m)).into()
    }

    pub fn n_values(&self) -> usize {
        self.n_values
    }

    pub fn n_derivs(&self) -> usize {
        self.matrix.nrows() - self.n_values
    }

    /// Jitter that ended up on the diagonal after escalation.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }
}

/// Builds and factorizes the joint covariance of value and derivative rows.
///
/// Row order is `values` then `derivs`. Jitter starts at `start_jitter`
/// (normally [`DEFAULT_JITTER`]) and escalates tenfold on Cholesky failure;
/// past [`MAX_JITTER`] the build fails.
pub fn assemble_joint(
    values: &[InputPoint],
    derivs: &[DerivativeSpec],
    hp: &Hyperparameters,
    start_jitter: f64,
) -> Result<JointCovariance> {
    if !(start_jitter > 0.0) {
        return Err(Error::NonPositive {
            name: "start_jitter",
            value: start_jitter,
        });
    }
    if values.is_empty() && derivs.is_empty() {
        return Err(Error::EmptyInput("joint covariance rows"));
    }
    let rows: Vec<Row> = values
        .iter()
        .cloned()
        .map(Row::Value)
        .chain(derivs.iter().cloned().map(Row::Deriv))
        .collect();
    let base = covariance(&rows, hp)?;
    let (chol, jitter) = cholesky_with_escalation(&base, start_jitter)?;
    let mut matrix = base;
    for i in 0..matrix.nrows() {
        matrix[(i, i)] += jitter;
    }
    Ok(JointCovariance {
        matrix,
        chol,
        n_values: values.len(),
        jitter,
    })
}

/// Separable space-time covariance K_S ⊗ K_T on the full grid.
///
/// `spatial` holds one feature vector per location (dimensions `0..D_S` of
/// `hp`) and `times` the shared grid (dimension `D_S`). The spatial factor
/// carries α; the temporal factor has unit scale, so the product matches the
/// combined ARD kernel on stacked inputs. Row index is `i * times.len() + t`
/// with time fastest.
pub fn kronecker_cov(
    spatial: &[Vec<f64>],
    times: &[f64],
    hp: &Hyperparameters,
) -> Result<DMatrix<f64>> {
    if spatial.is_empty() {
        return Err(Error::EmptyInput("spatial inputs"));
    }
    if times.is_empty() {
        return Err(Error::EmptyInput("temporal inputs"));
    }
    let d_s = spatial[0].len();
    if d_s + 1 != hp.dims() {
        return Err(Error::DimensionMismatch {
            context: "kronecker spatial dims",
            expected: hp.dims() - 1,
            got: d_s,
        });
    }
    for s in spatial {
        if s.len() != d_s {
            return Err(Error::DimensionMismatch {
                context: "kronecker spatial dims",
                expected: d_s,
                got: s.len(),
            });
        }
    }
    let n = spatial.len();
    let mut k_s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut q = 0.0;
            for d in 0..d_s {
                let scaled = (spatial[i][d] - spatial[j][d]) / hp.rho(d);
                q += scaled * scaled;
            }
            let v = hp.alpha() * hp.alpha() * (-0.5 * q).exp();
            k_s[(i, j)] = v;
            k_s[(j, i)] = v;
        }
    }
    let t = times.len();
    let rho_t = hp.rho(d_s);
    let mut k_t = DMatrix::zeros(t, t);
    for i in 0..t {
        for j in i..t {
            let scaled = (times[i] - times[j]) / rho_t;
            let v = (-0.5 * scaled * scaled).exp();
            k_t[(i, j)] = v;
            k_t[(j, i)] = v;
        }
    }
    Ok(k_s.kronecker(&k_t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn hp6() -> Hyperparameters {
        let map = LengthscaleMap::new(vec![0, 1, 2, 3, 3, 4]).unwrap();
        Hyperparameters::new(2.4, vec![0.95, 18.3, 1.3, 4.5, 8.2], 0.37, map).unwrap()
    }

    fn p(vals: &[f64]) -> InputPoint {
        InputPoint::new(vals.to_vec())
    }

    #[test]
    fn se_ard_basic_properties() {
        let hp = hp6();
        let a = p(&[0.3, -1.2, 2.0, 0.5, -0.7, 4.0]);
        let b = p(&[1.1, 0.4, -0.3, 2.2, 0.9, 7.0]);
        let kaa = se_ard_cov(&a, &a, &hp).unwrap();
        assert_relative_eq!(kaa, 2.4 * 2.4, max_relative = 1e-15);
        let kab = se_ard_cov(&a, &b, &hp).unwrap();
        let kba = se_ard_cov(&b, &a, &hp).unwrap();
        assert_relative_eq!(kab, kba, max_relative = 1e-15);
        assert!(kab > 0.0 && kab < kaa);
    }

    #[test]
    fn se_ard_underflows_to_zero_at_huge_distance() {
        let hp = hp6();
        let a = p(&[0.0; 6]);
        let b = p(&[1e6, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(se_ard_cov(&a, &b, &hp).unwrap(), 0.0);
    }

    #[test]
    fn alpha_scaling_scales_all_blocks_quadratically() {
        let hp = hp6();
        let scaled = Hyperparameters::new(
            hp.alpha() * 3.0,
            hp.lengthscales().to_vec(),
            hp.sigma(),
            hp.map().clone(),
        )
        .unwrap();
        let a = p(&[0.3, -1.2, 2.0, 0.5, -0.7, 4.0]);
        let b = p(&[1.1, 0.4, -0.3, 2.2, 0.9, 7.0]);
        let d1 = DerivativeSpec::new(a.clone(), 5).unwrap();
        let d2 = DerivativeSpec::new(b.clone(), 2).unwrap();
        assert_relative_eq!(
            se_ard_cov(&a, &b, &scaled).unwrap(),
            9.0 * se_ard_cov(&a, &b, &hp).unwrap(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            cov_deriv_value(&d1, &b, &scaled).unwrap(),
            9.0 * cov_deriv_value(&d1, &b, &hp).unwrap(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            cov_deriv_deriv(&d1, &d2, &scaled).unwrap(),
            9.0 * cov_deriv_deriv(&d1, &d2, &hp).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let map = LengthscaleMap::independent(2);
        assert!(matches!(
            Hyperparameters::new(-1.0, vec![1.0, 1.0], 0.5, map.clone()),
            Err(Error::NonPositive { name: "alpha", .. })
        ));
        assert!(matches!(
            Hyperparameters::new(1.0, vec![1.0, 0.0], 0.5, map.clone()),
            Err(Error::NonPositive {
                name: "lengthscale",
                ..
            })
        ));
        assert!(matches!(
            Hyperparameters::new(1.0, vec![1.0, 1.0], f64::NAN, map.clone()),
            Err(Error::NonPositive { name: "sigma", .. })
        ));
        assert!(matches!(
            Hyperparameters::new(1.0, vec![1.0], 0.5, map),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(LengthscaleMap::new(vec![0, 2]).is_err());
        assert!(LengthscaleMap::new(vec![]).is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let hp = hp6();
        let a = p(&[0.0; 6]);
        let b = p(&[0.0; 5]);
        assert!(matches!(
            se_ard_cov(&a, &b, &hp),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    /// Central finite difference of k in one argument's dimension `g`.
    fn fd_deriv_value(a: &[f64], b: &[f64], g: usize, hp: &Hyperparameters, h: f64) -> f64 {
        let mut ap = a.to_vec();
        let mut am = a.to_vec();
        ap[g] += h;
        am[g] -= h;
        let kp = se_ard_cov(&p(&ap), &p(b), hp).unwrap();
        let km = se_ard_cov(&p(&am), &p(b), hp).unwrap();
        (kp - km) / (2.0 * h)
    }

    #[test]
    fn deriv_value_matches_finite_differences() {
        let hp = hp6();
        let a = [0.3, -1.2, 2.0, 0.5, -0.7, 4.0];
        let b = [1.1, 0.4, -0.3, 2.2, 0.9, 7.0];
        for g in 0..6 {
            let analytic =
                cov_deriv_value(&DerivativeSpec::new(p(&a), g).unwrap(), &p(&b), &hp).unwrap();
            let numeric = fd_deriv_value(&a, &b, g, &hp, 1e-5 * hp.rho(g));
            assert_relative_eq!(analytic, numeric, max_relative = 1e-5);
        }
    }

    #[test]
    fn deriv_deriv_matches_finite_differences() {
        let hp = hp6();
        let a = [0.3, -1.2, 2.0, 0.5, -0.7, 4.0];
        let b = [1.1, 0.4, -0.3, 2.2, 0.9, 7.0];
        for g in 0..6 {
            for hdim in 0..6 {
                let analytic = cov_deriv_deriv(
                    &DerivativeSpec::new(p(&a), g).unwrap(),
                    &DerivativeSpec::new(p(&b), hdim).unwrap(),
                    &hp,
                )
                .unwrap();
                // d²k/da_g db_h via central differences in b_h of the
                // analytic first derivative in a_g.
                let h = 1e-5 * hp.rho(hdim);
                let mut bp = b.to_vec();
                let mut bm = b.to_vec();
                bp[hdim] += h;
                bm[hdim] -= h;
                let d = DerivativeSpec::new(p(&a), g).unwrap();
                let fp = cov_deriv_value(&d, &p(&bp), &hp).unwrap();
                let fm = cov_deriv_value(&d, &p(&bm), &hp).unwrap();
                let numeric = (fp - fm) / (2.0 * h);
                assert_relative_eq!(analytic, numeric, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn deriv_value_is_antisymmetric_in_derivative_carrier() {
        let hp = hp6();
        let a = [0.3, -1.2, 2.0, 0.5, -0.7, 4.0];
        let b = [1.1, 0.4, -0.3, 2.2, 0.9, 7.0];
        for g in 0..6 {
            let at_a =
                cov_deriv_value(&DerivativeSpec::new(p(&a), g).unwrap(), &p(&b), &hp).unwrap();
            let at_b =
                cov_deriv_value(&DerivativeSpec::new(p(&b), g).unwrap(), &p(&a), &hp).unwrap();
            assert_relative_eq!(at_a, -at_b, max_relative = 1e-14);
        }
    }

    #[test]
    fn cov_entry_does_not_depend_on_argument_order() {
        let hp = hp6();
        let v = Row::Value(p(&[0.3, -1.2, 2.0, 0.5, -0.7, 4.0]));
        let d = Row::Deriv(
            DerivativeSpec::new(p(&[1.1, 0.4, -0.3, 2.2, 0.9, 7.0]), 5).unwrap(),
        );
        assert_relative_eq!(
            cov_entry(&v, &d, &hp).unwrap(),
            cov_entry(&d, &v, &hp).unwrap(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn assemble_joint_blocks_and_jitter() {
        let hp = hp6();
        let values: Vec<InputPoint> = (0..4)
            .map(|i| p(&[i as f64, 0.1, -0.2, 0.3, 0.4, i as f64 * 2.0]))
            .collect();
        let derivs: Vec<DerivativeSpec> = (0..3)
            .map(|i| DerivativeSpec::new(p(&[0.5, i as f64, 0.0, 0.1, 0.2, 3.0]), 5).unwrap())
            .collect();
        let joint = assemble_joint(&values, &derivs, &hp, DEFAULT_JITTER).unwrap();
        assert_eq!(joint.matrix().nrows(), 7);
        assert_eq!(joint.n_values(), 4);
        assert_eq!(joint.n_derivs(), 3);
        assert_eq!(joint.jitter(), DEFAULT_JITTER);
        // Diagonal of the value block is α² + jitter.
        assert_relative_eq!(
            joint.value_block()[(0, 0)],
            hp.alpha() * hp.alpha() + DEFAULT_JITTER,
            max_relative = 1e-12
        );
        // Full matrix is symmetric and matches the block layout.
        let m = joint.matrix();
        for i in 0..7 {
            for j in 0..7 {
                assert_relative_eq!(m[(i, j)], m[(j, i)], max_relative = 1e-15);
            }
        }
        assert_relative_eq!(
            joint.cross_block()[(0, 0)],
            cov_deriv_value(&derivs[0], &values[0], &hp).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn assemble_joint_tolerates_duplicate_rows() {
        let hp = hp6();
        let point = p(&[0.3, -1.2, 2.0, 0.5, -0.7, 4.0]);
        let values = vec![point.clone(); 6];
        let joint = assemble_joint(&values, &[], &hp, DEFAULT_JITTER).unwrap();
        assert!(joint.jitter() <= MAX_JITTER);
    }

    #[test]
    fn jitter_escalates_and_eventually_errors() {
        // diag(1, -3e-6) needs jitter above 3e-6; first success is 1e-5.
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -3e-6]));
        let (_, jitter) = cholesky_with_escalation(&m, DEFAULT_JITTER).unwrap();
        assert_relative_eq!(jitter, 1e-5, max_relative = 1e-12);

        // diag(1, -1) cannot be repaired within the cap.
        let bad = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        match cholesky_with_escalation(&bad, DEFAULT_JITTER) {
            Err(Error::NotPositiveDefinite { jitter }) => {
                assert_relative_eq!(jitter, MAX_JITTER, max_relative = 1e-9);
            }
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn kronecker_matches_combined_ard_kernel() {
        let map = LengthscaleMap::new(vec![0, 1, 2, 3, 3, 4]).unwrap();
        let hp = Hyperparameters::new(1.7, vec![0.9, 2.3, 1.1, 3.0, 5.0], 0.2, map).unwrap();
        let spatial: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                let f = i as f64;
                vec![0.3 * f, -0.5 + f, 0.2 * f * f, 1.0 - f, 0.7 * f]
            })
            .collect();
        let times: Vec<f64> = (0..5).map(|t| t as f64 * 1.5).collect();
        let kron = kronecker_cov(&spatial, &times, &hp).unwrap();

        let rows: Vec<Row> = spatial
            .iter()
            .flat_map(|s| {
                times.iter().map(move |&t| {
                    let mut v = s.clone();
                    v.push(t);
                    Row::Value(InputPoint::new(v))
                })
            })
            .collect();
        let direct = covariance(&rows, &hp).unwrap();

        assert_eq!(kron.nrows(), 20);
        let max_abs = (&kron - &direct).abs().max();
        assert!(max_abs < 1e-12, "max abs deviation {max_abs}");
    }

    #[test]
    fn kronecker_rejects_bad_inputs() {
        let hp = hp6();
        assert!(matches!(
            kronecker_cov(&[], &[0.0], &hp),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            kronecker_cov(&[vec![0.0; 5]], &[], &hp),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            kronecker_cov(&[vec![0.0; 4]], &[0.0], &hp),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            kronecker_cov(&[vec![0.0; 5], vec![0.0; 4]], &[0.0], &hp),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// Joint covariances over random mixed row sets are symmetric PSD.
        #[test]
        fn joint_covariance_is_symmetric_psd(
            seed in 0u64..1_000_000,
            n_rows in 1usize..50,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
            let map = LengthscaleMap::new(vec![0, 0, 1]).unwrap();
            let hp = Hyperparameters::new(
                0.5 + rng.random::<f64>() * 2.0,
                vec![0.5 + rng.random::<f64>() * 3.0, 0.5 + rng.random::<f64>() * 3.0],
                0.3,
                map,
            ).unwrap();
            let rows: Vec<Row> = (0..n_rows).map(|_| {
                let pt = InputPoint::new((0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect());
                if rng.random::<f64>() < 0.4 {
                    Row::Deriv(DerivativeSpec::new(pt, rng.random_range(0..3)).unwrap())
                } else {
                    Row::Value(pt)
                }
            }).collect();
            let k = covariance(&rows, &hp).unwrap();
            for i in 0..n_rows {
                for j in 0..n_rows {
                    prop_assert!((k[(i, j)] - k[(j, i)]).abs() < 1e-13);
                }
            }
            let eig = k.symmetric_eigenvalues();
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(min > -1e-8, "min eigenvalue {min}");
        }
    }
}
