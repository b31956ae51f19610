//! Elliptical slice sampling under a standard normal prior.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

/// One elliptical slice update of `u ~ N(0, I)` tilted by `log_lik`.
///
/// Returns the new state and its log likelihood. The update is rejection
/// free: the bracket shrinks toward the current state, which is always
/// acceptable, so the loop terminates. Non-finite proposals are treated as
/// likelihood zero and shrink the bracket.
pub(crate) fn elliptical_slice_step<R: Rng + ?Sized>(
    u: &DVector<f64>,
    current_ll: f64,
    log_lik: &mut dyn FnMut(&DVector<f64>) -> f64,
    rng: &mut R,
) -> (DVector<f64>, f64) {
    let dim = u.len();
    let nu = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let log_y = current_ll + rng.random::<f64>().ln();

    let mut theta = rng.random::<f64>() * std::f64::consts::TAU;
    let mut lo = theta - std::f64::consts::TAU;
    let mut hi = theta;

    // 64 shrink steps bound the bracket width by 2π/2⁶⁴; the current state
    // is re-accepted if the loop somehow exhausts them.
    for _ in 0..64 {
        let proposal = u * theta.cos() + &nu * theta.sin();
        let ll = log_lik(&proposal);
        if ll.is_finite() && ll > log_y {
            return (proposal, ll);
        }
        if theta < 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        theta = lo + rng.random::<f64>() * (hi - lo);
    }
    (u.clone(), current_ll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn flat_likelihood_reproduces_prior_moments() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let dim = 5;
        let n = 4000;
        let mut u = DVector::zeros(dim);
        let mut ll = 0.0;
        let mut flat = |_: &DVector<f64>| 0.0;
        let mut sums = vec![0.0; dim];
        let mut sq_sums = vec![0.0; dim];
        for _ in 0..n {
            let (next, next_ll) = elliptical_slice_step(&u, ll, &mut flat, &mut rng);
            u = next;
            ll = next_ll;
            for d in 0..dim {
                sums[d] += u[d];
                sq_sums[d] += u[d] * u[d];
            }
        }
        // Draws are uncorrelated under a flat likelihood (E[cos θ] = 0), so
        // plain 1/√n Monte Carlo error applies; bounds are ~4 standard errors.
        for d in 0..dim {
            let mean = sums[d] / n as f64;
            let var = sq_sums[d] / n as f64 - mean * mean;
            assert!(mean.abs() < 0.07, "dim {d} mean {mean}");
            assert!((var - 1.0).abs() < 0.1, "dim {d} var {var}");
        }
    }

    #[test]
    fn gaussian_likelihood_gives_conjugate_posterior() {
        // Prior N(0, 1), likelihood N(y | u, 1) per dimension: the posterior
        // is N(y/2, 1/2).
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let y = [1.6, -0.8, 0.4];
        let mut log_lik = |u: &DVector<f64>| -> f64 {
            y.iter()
                .zip(u.iter())
                .map(|(yi, ui)| -0.5 * (yi - ui) * (yi - ui))
                .sum()
        };
        let mut u = DVector::zeros(3);
        let mut ll = log_lik(&u);
        // Discard a short warmup, then average.
        for _ in 0..200 {
            let (next, next_ll) = elliptical_slice_step(&u, ll, &mut log_lik, &mut rng);
            u = next;
            ll = next_ll;
        }
        let n = 20000;
        let mut sums = [0.0; 3];
        let mut sq_sums = [0.0; 3];
        for _ in 0..n {
            let (next, next_ll) = elliptical_slice_step(&u, ll, &mut log_lik, &mut rng);
            u = next;
            ll = next_ll;
            for d in 0..3 {
                sums[d] += u[d];
                sq_sums[d] += u[d] * u[d];
            }
        }
        for d in 0..3 {
            let mean = sums[d] / n as f64;
            let var = sq_sums[d] / n as f64 - mean * mean;
            assert!(
                (mean - y[d] / 2.0).abs() < 0.04,
                "dim {d}: mean {mean} vs {}",
                y[d] / 2.0
            );
            assert!((var - 0.5).abs() < 0.05, "dim {d}: var {var}");
        }
    }

    #[test]
    fn hard_constraint_likelihood_is_respected() {
        // Indicator likelihood u₀ > 2: every retained draw satisfies it.
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut log_lik = |u: &DVector<f64>| if u[0] > 2.0 { 0.0 } else { f64::NEG_INFINITY };
        let mut u = DVector::from_vec(vec![2.5, 0.0]);
        let mut ll = 0.0;
        for _ in 0..500 {
            let (next, next_ll) = elliptical_slice_step(&u, ll, &mut log_lik, &mut rng);
            u = next;
            ll = next_ll;
            assert!(u[0] > 2.0);
        }
    }
}
