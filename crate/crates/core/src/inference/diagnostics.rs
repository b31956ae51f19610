//! Convergence diagnostics: split-R̂, effective sample size, and posterior
//! summaries.

use crate::error::{Error, Result};
use crate::math::{mean, quantile, sample_variance};

/// Split-R̂ together with a degenerate-variance flag.
#[derive(Debug, Clone, Copy)]
pub struct SplitRhat {
    pub value: f64,
    /// True when the within-chain variance is zero; `value` is 1 if the
    /// chains also agree, infinite if they are stuck at different points.
    pub zero_variance: bool,
}

fn split_halves(chains: &[Vec<f64>]) -> Result<Vec<&[f64]>> {
    if chains.len() < 2 {
        return Err(Error::InsufficientDraws {
            needed: "at least 2 chains",
            got: chains.len(),
        });
    }
    let min_len = chains.iter().map(|c| c.len()).min().unwrap();
    if min_len < 4 {
        return Err(Error::InsufficientDraws {
            needed: "at least 4 draws per chain",
            got: min_len,
        });
    }
    let half = min_len / 2;
    let mut halves = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        // Use the last `2*half` draws so every half has equal length.
        let tail = &c[c.len() - 2 * half..];
        halves.push(&tail[..half]);
        halves.push(&tail[half..]);
    }
    Ok(halves)
}

/// Split-R̂ of one scalar parameter across chains.
///
/// Each chain is split in half; R̂ = √(var⁺ / W) with
/// var⁺ = (n-1)/n · W + B/n over the split halves.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<SplitRhat> {
    let halves = split_halves(chains)?;
    let n = halves[0].len() as f64;
    let m = halves.len() as f64;
    let w = halves.iter().map(|h| sample_variance(h)).sum::<f64>() / m;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let b_over_n = sample_variance(&means);
    let var_plus = (n - 1.0) / n * w + b_over_n;
    if w == 0.0 {
        return Ok(SplitRhat {
            value: if b_over_n == 0.0 { 1.0 } else { f64::INFINITY },
            zero_variance: true,
        });
    }
    Ok(SplitRhat {
        value: (var_plus / w).sqrt(),
        zero_variance: false,
    })
}

/// Autocovariance of one chain at lag `t` (divisor n).
fn autocov(chain: &[f64], chain_mean: f64, t: usize) -> f64 {
    let n = chain.len();
    let mut s = 0.0;
    for i in 0..n - t {
        s += (chain[i] - chain_mean) * (chain[i + t] - chain_mean);
    }
    s / n as f64
}

/// Effective sample size across chains via Geyer's initial monotone
/// positive sequence on split halves.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Result<f64> {
    let halves = split_halves(chains)?;
    let n = halves[0].len();
    let m = halves.len();
    let total = (n * m) as f64;

    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = halves.iter().map(|h| sample_variance(h)).sum::<f64>() / m as f64;
    let b_over_n = sample_variance(&means);
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    if var_plus == 0.0 {
        // Degenerate chains carry no information.
        return Ok(f64::NAN);
    }

    // ρ̂_t = 1 - (W - mean of chain autocovariances at lag t) / var⁺.
    let rho = |t: usize| -> f64 {
        let acov: f64 = halves
            .iter()
            .zip(&means)
            .map(|(h, &mu)| autocov(h, mu, t))
            .sum::<f64>()
            / m as f64;
        1.0 - (w - acov) / var_plus
    };

    let mut tau = 1.0; // pair sum below replaces -1 + 2·Σ P̂_k with P̂_0 included
    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = if t == 0 {
            1.0 + rho(1)
        } else {
            rho(t) + rho(t + 1)
        };
        if pair <= 0.0 {
            break;
        }
        sum_pairs += pair.min(prev_pair);
        prev_pair = pair.min(prev_pair);
        t += 2;
    }
    if sum_pairs > 0.0 {
        tau = -1.0 + 2.0 * sum_pairs;
    }
    Ok((total / tau).min(total))
}

/// Mode estimate from a histogram with Freedman-Diaconis bin width.
///
/// Degenerate cases (fewer than 3 points, or zero interquartile range) fall
/// back to the median.
pub fn histogram_mode(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "mode of empty sample");
    if xs.len() < 3 {
        return quantile(xs, 0.5);
    }
    let iqr = quantile(xs, 0.75) - quantile(xs, 0.25);
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = 2.0 * iqr * (xs.len() as f64).powf(-1.0 / 3.0);
    if !(width > 0.0) || hi <= lo {
        return quantile(xs, 0.5);
    }
    let n_bins = (((hi - lo) / width).ceil() as usize).clamp(1, 512);
    let mut counts = vec![0usize; n_bins];
    for &x in xs {
        let idx = (((x - lo) / (hi - lo)) * n_bins as f64) as usize;
        counts[idx.min(n_bins - 1)] += 1;
    }
    let best = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap();
    lo + (best as f64 + 0.5) * (hi - lo) / n_bins as f64
}

/// Per-parameter posterior summary.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub mode: f64,
    pub rhat: f64,
    pub ess: f64,
    pub zero_variance: bool,
}

/// Summarizes named scalar chains: one entry per parameter.
pub fn summarize_chains(params: &[(String, Vec<Vec<f64>>)]) -> Result<Vec<ParameterSummary>> {
    let mut out = Vec::with_capacity(params.len());
    for (name, chains) in params {
        let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
        if pooled.is_empty() {
            return Err(Error::InsufficientDraws {
                needed: "at least 1 draw",
                got: 0,
            });
        }
        let rhat = split_rhat(chains)?;
        let ess = effective_sample_size(chains)?;
        out.push(ParameterSummary {
            name: name.clone(),
            mean: mean(&pooled),
            sd: sample_variance(&pooled).sqrt(),
            mode: histogram_mode(&pooled),
            rhat: rhat.value,
            ess,
            zero_variance: rhat.zero_variance,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    fn iid_chains(seed: u64, m: usize, n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    }

    #[test]
    fn iid_chains_look_converged() {
        let chains = iid_chains(1, 4, 1000);
        let r = split_rhat(&chains).unwrap();
        assert!(!r.zero_variance);
        assert!(r.value < 1.01, "rhat {}", r.value);
        let ess = effective_sample_size(&chains).unwrap();
        assert!(ess > 2500.0, "ess {ess}");
        assert!(ess <= 4000.0);
    }

    #[test]
    fn separated_chains_are_flagged_by_rhat() {
        let mut chains = iid_chains(2, 2, 1000);
        for x in &mut chains[0] {
            *x -= 5.0;
        }
        for x in &mut chains[1] {
            *x += 5.0;
        }
        let r = split_rhat(&chains).unwrap();
        assert!(r.value > 1.5, "rhat {}", r.value);
    }

    #[test]
    fn autocorrelated_chains_have_reduced_ess() {
        // AR(1) with φ = 0.9: integrated autocorrelation time is 19.
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let chains: Vec<Vec<f64>> = (0..2)
            .map(|_| {
                let mut x = 0.0;
                (0..2000)
                    .map(|_| {
                        let e: f64 = rng.sample(StandardNormal);
                        x = 0.9 * x + e * (1.0f64 - 0.81).sqrt();
                        x
                    })
                    .collect()
            })
            .collect();
        let ess = effective_sample_size(&chains).unwrap();
        assert!(ess < 800.0, "ess {ess}");
        assert!(ess > 50.0, "ess {ess}");
    }

    #[test]
    fn zero_variance_chains_are_flagged_not_nan() {
        let chains = vec![vec![2.0; 100], vec![2.0; 100]];
        let r = split_rhat(&chains).unwrap();
        assert!(r.zero_variance);
        assert_eq!(r.value, 1.0);

        let stuck = vec![vec![1.0; 100], vec![2.0; 100]];
        let r = split_rhat(&stuck).unwrap();
        assert!(r.zero_variance);
        assert!(r.value.is_infinite());
    }

    #[test]
    fn rhat_requires_enough_chains_and_draws() {
        assert!(split_rhat(&[vec![1.0, 2.0, 3.0, 4.0]]).is_err());
        assert!(split_rhat(&[vec![1.0, 2.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn histogram_mode_finds_the_heavy_lobe() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut xs: Vec<f64> = (0..3000)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * 0.3 - 2.0)
            .collect();
        xs.extend((0..1000).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.3 + 2.0));
        let mode = histogram_mode(&xs);
        assert!((mode + 2.0).abs() < 0.3, "mode {mode}");
    }

    #[test]
    fn histogram_mode_degenerate_inputs() {
        assert_eq!(histogram_mode(&[3.0, 3.0, 3.0, 3.0]), 3.0);
        assert_eq!(histogram_mode(&[1.0, 2.0]), 1.5);
    }
}
