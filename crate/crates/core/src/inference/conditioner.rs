//! Gaussian conditioning on observed rows with per-row noise.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::kernel::{
    cholesky_with_escalation, covariance, cross_covariance, Hyperparameters, Row, DEFAULT_JITTER,
};
use crate::math::LN_2PI;

/// Factorized Gaussian system `S = K + diag(noise) + jitter·I` over a fixed
/// row list, supporting marginal likelihood evaluation and conditioning.
///
/// An empty row list is the prior: zero mean, covariance `K_tt`, marginal 0.
#[derive(Debug, Clone)]
pub(crate) struct Conditioner {
    hp: Hyperparameters,
    rows: Vec<Row>,
    y: DVector<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    /// S⁻¹ y.
    weights: DVector<f64>,
    log_marginal: f64,
}

impl Conditioner {
    /// `noise[i]` is the observation variance of row `i`; zero is allowed
    /// because the jitter keeps the system positive definite.
    pub fn new(
        rows: Vec<Row>,
        y: DVector<f64>,
        noise: &DVector<f64>,
        hp: &Hyperparameters,
    ) -> Result<Self> {
        let n = rows.len();
        if y.len() != n || noise.len() != n {
            return Err(Error::DimensionMismatch {
                context: "conditioner rows",
                expected: n,
                got: y.len().min(noise.len()),
            });
        }
        if n == 0 {
            return Ok(Self {
                hp: hp.clone(),
                rows,
                y,
                chol: None,
                weights: DVector::zeros(0),
                log_marginal: 0.0,
            });
        }
        for (i, &v) in noise.iter().enumerate() {
            if v < 0.0 {
                return Err(Error::NonPositive {
                    name: "noise variance",
                    value: noise[i],
                });
            }
        }
        let mut s = covariance(&rows, hp)?;
        for i in 0..n {
            s[(i, i)] += noise[i];
        }
        let (chol, _) = cholesky_with_escalation(&s, DEFAULT_JITTER)?;
        let weights = chol.solve(&y);
        let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
        let log_marginal = -0.5 * y.dot(&weights) - log_det - 0.5 * n as f64 * LN_2PI;
        Ok(Self {
            hp: hp.clone(),
            rows,
            y,
            chol: Some(chol),
            weights,
            log_marginal,
        })
    }

    /// S⁻¹ y for the current observations.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// S⁻¹ M for an arbitrary right-hand side.
    pub fn solve(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.chol {
            Some(chol) => chol.solve(m),
            None => m.clone(),
        }
    }

    /// ln p(y | rows, hp) under the Gaussian model.
    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    /// Replaces the observed values, keeping the factorization.
    pub fn refresh_y(&mut self, y: DVector<f64>) -> Result<()> {
        if y.len() != self.rows.len() {
            return Err(Error::DimensionMismatch {
                context: "refreshed observations",
                expected: self.rows.len(),
                got: y.len(),
            });
        }
        match &self.chol {
            Some(chol) => {
                self.weights = chol.solve(&y);
                let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
                self.log_marginal = -0.5 * y.dot(&self.weights)
                    - log_det
                    - 0.5 * y.len() as f64 * LN_2PI;
            }
            None => {
                self.log_marginal = 0.0;
            }
        }
        self.y = y;
        Ok(())
    }

    /// Posterior mean and full covariance of the latent rows `targets`.
    ///
    /// The covariance is the raw conditional one; callers add jitter or
    /// noise as needed.
    pub fn predict_full(&self, targets: &[Row]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let k_tt = covariance(targets, &self.hp)?;
        if self.rows.is_empty() {
            return Ok((DVector::zeros(targets.len()), k_tt));
        }
        let k_to = cross_covariance(targets, &self.rows, &self.hp)?;
        let mean = &k_to * &self.weights;
        let solved = self.chol.as_ref().unwrap().solve(&k_to.transpose());
        let cov = k_tt - k_to * solved;
        Ok((mean, cov))
    }

    /// Posterior mean and pointwise variance at `targets`, clamping tiny
    /// negative variances from rounding to zero.
    pub fn predict_pointwise(&self, targets: &[Row]) -> Result<(DVector<f64>, DVector<f64>)> {
        let n_t = targets.len();
        let mut var = DVector::zeros(n_t);
        if self.rows.is_empty() {
            for (j, t) in targets.iter().enumerate() {
                var[j] = crate::kernel::cov_entry(t, t, &self.hp)?;
            }
            return Ok((DVector::zeros(n_t), var));
        }
        let k_to = cross_covariance(targets, &self.rows, &self.hp)?;
        let mean = &k_to * &self.weights;
        let solved = self.chol.as_ref().unwrap().solve(&k_to.transpose());
        for (j, t) in targets.iter().enumerate() {
            let prior = crate::kernel::cov_entry(t, t, &self.hp)?;
            let reduction = k_to.row(j).transpose().dot(&solved.column(j));
            var[j] = (prior - reduction).max(0.0);
        }
        Ok((mean, var))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{se_ard_cov, InputPoint, LengthscaleMap};
    use approx::assert_relative_eq;

    fn hp1() -> Hyperparameters {
        Hyperparameters::new(1.3, vec![0.8], 0.5, LengthscaleMap::independent(1)).unwrap()
    }

    #[test]
    fn single_row_matches_symbolic_solution() {
        let hp = hp1();
        let x = InputPoint::new(vec![0.0]);
        let t = InputPoint::new(vec![0.7]);
        let y = 0.9;
        let noise = 0.25;
        let cond = Conditioner::new(
            vec![Row::Value(x.clone())],
            DVector::from_vec(vec![y]),
            &DVector::from_vec(vec![noise]),
            &hp,
        )
        .unwrap();

        let k_xx = se_ard_cov(&x, &x, &hp).unwrap();
        let k_tx = se_ard_cov(&t, &x, &hp).unwrap();
        let k_tt = se_ard_cov(&t, &t, &hp).unwrap();
        let s = k_xx + noise + DEFAULT_JITTER;

        let (mean, var) = cond.predict_pointwise(&[Row::Value(t)]).unwrap();
        assert_relative_eq!(mean[0], k_tx * y / s, max_relative = 1e-12);
        assert_relative_eq!(var[0], k_tt - k_tx * k_tx / s, max_relative = 1e-10);

        let expected_lm = -0.5 * y * y / s - 0.5 * s.ln() - 0.5 * LN_2PI;
        assert_relative_eq!(cond.log_marginal(), expected_lm, max_relative = 1e-12);
    }

    #[test]
    fn matches_direct_inverse_on_random_system() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(7);
        let hp = hp1();
        let n = 12;
        let rows: Vec<Row> = (0..n)
            .map(|_| Row::Value(InputPoint::new(vec![rng.random::<f64>() * 6.0 - 3.0])))
            .collect();
        let y = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let noise = DVector::from_element(n, 0.09);
        let cond = Conditioner::new(rows.clone(), y.clone(), &noise, &hp).unwrap();

        let mut s = covariance(&rows, &hp).unwrap();
        for i in 0..n {
            s[(i, i)] += 0.09 + DEFAULT_JITTER;
        }
        let s_inv = s.try_inverse().unwrap();
        let targets: Vec<Row> = (0..5)
            .map(|j| Row::Value(InputPoint::new(vec![j as f64 * 0.9 - 2.0])))
            .collect();
        let k_to = cross_covariance(&targets, &rows, &hp).unwrap();
        let expected_mean = &k_to * &s_inv * &y;
        let expected_cov =
            covariance(&targets, &hp).unwrap() - &k_to * &s_inv * k_to.transpose();

        let (mean, cov) = cond.predict_full(&targets).unwrap();
        for j in 0..5 {
            assert_relative_eq!(mean[j], expected_mean[j], max_relative = 1e-8);
            for k in 0..5 {
                assert_relative_eq!(
                    cov[(j, k)],
                    expected_cov[(j, k)],
                    epsilon = 1e-10,
                    max_relative = 1e-6
                );
            }
        }
    }

    #[test]
    fn empty_conditioner_is_the_prior() {
        let hp = hp1();
        let cond = Conditioner::new(
            vec![],
            DVector::zeros(0),
            &DVector::zeros(0),
            &hp,
        )
        .unwrap();
        assert_eq!(cond.log_marginal(), 0.0);
        let t = Row::Value(InputPoint::new(vec![0.3]));
        let (mean, var) = cond.predict_pointwise(&[t]).unwrap();
        assert_eq!(mean[0], 0.0);
        assert_relative_eq!(var[0], hp.alpha() * hp.alpha(), max_relative = 1e-14);
    }

    #[test]
    fn refresh_y_updates_mean_and_marginal() {
        let hp = hp1();
        let rows = vec![
            Row::Value(InputPoint::new(vec![0.0])),
            Row::Value(InputPoint::new(vec![1.0])),
        ];
        let noise = DVector::from_element(2, 0.04);
        let y1 = DVector::from_vec(vec![0.2, 0.4]);
        let y2 = DVector::from_vec(vec![-0.3, 0.9]);
        let mut cond = Conditioner::new(rows.clone(), y1, &noise, &hp).unwrap();
        let fresh = Conditioner::new(rows, y2.clone(), &noise, &hp).unwrap();
        cond.refresh_y(y2).unwrap();
        assert_relative_eq!(cond.log_marginal(), fresh.log_marginal(), max_relative = 1e-13);
        let t = [Row::Value(InputPoint::new(vec![0.5]))];
        assert_relative_eq!(
            cond.predict_pointwise(&t).unwrap().0[0],
            fresh.predict_pointwise(&t).unwrap().0[0],
            max_relative = 1e-13
        );
    }
}
