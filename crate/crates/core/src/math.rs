//! Small numerical helpers shared across modules.

/// ln(2π).
pub const LN_2PI: f64 = 1.837_877_066_409_345_6;

/// Standard normal CDF Φ(x).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// ln Φ(x), stable over the whole real line.
///
/// For x > -8 the direct form ln(erfc(-x/√2)/2) keeps full precision because
/// erfc does not underflow there. Deeper into the left tail erfc underflows,
/// so the asymptotic expansion
///
///   ln Φ(x) = -x²/2 - ln(2π)/2 - ln(-x) + ln(Σ_k (-1)^k (2k-1)!! x^(-2k))
///
/// takes over, truncated adaptively where its terms stop shrinking. For
/// x ≤ -8 the smallest term is below 1e-14 relative, so both branches agree
/// to at least ten digits at the switch point.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x > -8.0 {
        (0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        let inv2 = 1.0 / (x * x);
        let mut sum = 1.0;
        let mut term = 1.0;
        let mut k = 0.0;
        loop {
            let next = -term * (2.0 * k + 1.0) * inv2;
            if next.abs() >= term.abs() || next.abs() < 1e-18 {
                sum += 0.5 * next;
                break;
            }
            sum += next;
            term = next;
            k += 1.0;
        }
        -0.5 * x * x - 0.5 * LN_2PI - (-x).ln() + sum.ln()
    }
}

/// Log of Σ exp(xᵢ), guarding against overflow. Empty input gives -inf.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Mean of a slice. Empty input gives NaN.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (divisor n-1). Fewer than two points give 0.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Empirical quantile with linear interpolation between order statistics.
///
/// `p` is clamped to [0, 1]. The input need not be sorted.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of empty slice");
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    let p = p.clamp(0.0, 1.0);
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}
