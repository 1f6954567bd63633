//! Standard-normal distribution functions and the probit link.
//!
//! Everything here is generic over [`Real`]. The log-space variants never
//! underflow: the lower tail is evaluated through the scaled complementary
//! error function `erfcx(x) = exp(x²)·erfc(x)`, whose continued fraction is
//! the asymptotic tail expansion.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::scalar::Real;

const SERIES_CUTOFF: f64 = 2.5;

/// erf(x) for x ≥ 0 from the everywhere-positive series
/// erf(x) = 2/√π · exp(-x²) · Σ (2x²)ⁿ x / (2n+1)!!.
fn erf_series<T: Real>(x: T) -> T {
    let two_x2 = T::lit(2.0) * x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0usize;
    loop {
        n += 1;
        term = term * two_x2 / T::from_count(2 * n + 1);
        sum = sum + term;
        if term <= sum * T::epsilon() || n > 500 {
            break;
        }
    }
    T::FRAC_2_SQRT_PI() * (-x * x).exp() * sum
}

/// exp(x²)·erfc(x) for large positive x via Lentz's continued fraction.
fn erfcx_fraction<T: Real>(x: T) -> T {
    let tiny = T::min_positive_value().sqrt();
    let mut f = x;
    let mut c = x;
    let mut d = T::zero();
    for k in 1..10_000usize {
        let a = T::from_count(k) / T::lit(2.0);
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let delta = c * d;
        f = f * delta;
        if (delta - T::one()).abs() <= T::epsilon() {
            break;
        }
    }
    T::FRAC_2_SQRT_PI() / (T::lit(2.0) * f)
}

/// Complementary error function.
pub fn erfc<T: Real>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    if x < T::zero() {
        return T::lit(2.0) - erfc(-x);
    }
    if x.is_infinite() {
        return T::zero();
    }
    if x < T::lit(SERIES_CUTOFF) {
        T::one() - erf_series(x)
    } else {
        (-x * x).exp() * erfcx_fraction(x)
    }
}

/// Scaled complementary error function exp(x²)·erfc(x), for x ≥ 0.
pub fn erfcx<T: Real>(x: T) -> T {
    debug_assert!(x >= T::zero());
    if x < T::lit(SERIES_CUTOFF) {
        (x * x).exp() * (T::one() - erf_series(x))
    } else {
        erfcx_fraction(x)
    }
}

/// Standard-normal density.
pub fn norm_pdf<T: Real>(x: T) -> T {
    (-(x * x) / T::lit(2.0)).exp() / (T::lit(2.0) * T::PI()).sqrt()
}

/// Standard-normal CDF Φ(x).
pub fn norm_cdf<T: Real>(x: T) -> T {
    erfc(-x * T::FRAC_1_SQRT_2()) / T::lit(2.0)
}

/// log Φ(x), finite for every finite x.
pub fn log_norm_cdf<T: Real>(x: T) -> T {
    if x == T::infinity() {
        return T::zero();
    }
    if x == T::neg_infinity() {
        return T::neg_infinity();
    }
    if x > T::zero() {
        // Upper half: Φ(x) = 1 - Φ(-x) with Φ(-x) small.
        (-norm_cdf(-x)).ln_1p()
    } else {
        let t = -x * T::FRAC_1_SQRT_2();
        (erfcx(t) / T::lit(2.0)).ln() - t * t
    }
}

/// log(1 − Φ(x)) = log Φ(−x).
#[inline]
pub fn log_norm_sf<T: Real>(x: T) -> T {
    log_norm_cdf(-x)
}

/// Probit edge-inclusion probability Φ(μ).
#[inline]
pub fn edge_probability<T: Real>(mu: T) -> T {
    norm_cdf(mu)
}

/// log[Φ(μ) / (1 − Φ(μ))].
#[inline]
pub fn probit_log_odds<T: Real>(mu: T) -> T {
    log_norm_cdf(mu) - log_norm_sf(mu)
}

/// Standard-normal quantile Φ⁻¹(prob).
///
/// Starts from the Abramowitz–Stegun rational approximation and polishes
/// with Newton steps on log Φ, so the result is accurate to working precision.
pub fn norm_quantile<T: Real>(prob: T) -> T {
    if prob.is_nan() || prob < T::zero() || prob > T::one() {
        return T::nan();
    }
    if prob == T::zero() {
        return T::neg_infinity();
    }
    if prob == T::one() {
        return T::infinity();
    }
    let half = T::lit(0.5);
    if prob > half {
        return -norm_quantile(T::one() - prob);
    }
    if prob == half {
        return T::zero();
    }
    let t = (T::lit(-2.0) * prob.ln()).sqrt();
    let num = T::lit(2.515517) + t * (T::lit(0.802853) + t * T::lit(0.010328));
    let den = T::one() + t * (T::lit(1.432788) + t * (T::lit(0.189269) + t * T::lit(0.001308)));
    let mut x = -(t - num / den);
    let target = prob.ln();
    for _ in 0..50 {
        let log_cdf = log_norm_cdf(x);
        // d/dx log Φ(x) = φ(x)/Φ(x)
        let slope = (log_pdf(x) - log_cdf).exp();
        let step = (log_cdf - target) / slope;
        x = x - step;
        if step.abs() <= T::lit(4.0) * T::epsilon() * x.abs().max(T::one()) {
            break;
        }
    }
    x
}

fn log_pdf<T: Real>(x: T) -> T {
    -(x * x) / T::lit(2.0) - T::lit(0.5) * (T::lit(2.0) * T::PI()).ln()
}

/// Numerically stable log Σ exp(values). Returns −∞ for an empty slice.
pub fn log_sum_exp<T: Real>(values: &[T]) -> T {
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    if max == T::infinity() {
        return max;
    }
    let sum = values.iter().fold(T::zero(), |acc, &v| acc + (v - max).exp());
    max + sum.ln()
}

/// Turns log-weights into probabilities in place.
pub fn normalize_log_weights<T: Real>(weights: &mut [T]) {
    let lse = log_sum_exp(weights);
    for w in weights.iter_mut() {
        *w = (*w - lse).exp();
    }
}

/// Draws an index with probability proportional to `exp(log_weights[k])`.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    debug_assert!(!log_weights.is_empty());
    debug_assert!(log_weights.iter().all(|w| !w.is_nan()), "NaN log weight");
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    for (k, w) in log_weights.iter().enumerate() {
        u -= (w - max).exp();
        if u < 0.0 {
            return k;
        }
    }
    // Rounding fallback: last index with positive weight.
    log_weights
        .iter()
        .rposition(|w| *w > f64::NEG_INFINITY)
        .unwrap_or(log_weights.len() - 1)
}

/// Standard normal truncated to (lower, ∞).
fn sample_std_lower_tail<R: Rng + ?Sized>(lower: f64, rng: &mut R) -> f64 {
    if lower < 0.45 {
        loop {
            let x: f64 = StandardNormal.sample(rng);
            if x > lower {
                return x;
            }
        }
    }
    // Robert (1995) exponential proposal with optimal rate.
    let rate = 0.5 * (lower + (lower * lower + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let x = lower + e / rate;
        let accept = (-0.5 * (x - rate) * (x - rate)).exp();
        if rng.random::<f64>() < accept {
            return x;
        }
    }
}

/// N(mean, 1) truncated to (0, ∞) when `positive`, else to (−∞, 0).
pub fn sample_truncated_unit_normal<R: Rng + ?Sized>(mean: f64, positive: bool, rng: &mut R) -> f64 {
    if positive {
        mean + sample_std_lower_tail(-mean, rng)
    } else {
        mean - sample_std_lower_tail(mean, rng)
    }
}
