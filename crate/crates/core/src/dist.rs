//! Log densities and samplers for the Beta/Dirichlet/multinomial family.
//!
//! Gamma variates are drawn on the log scale so that small shape parameters
//! (Jeffreys-type priors, floored Dirichlet scales) never underflow to an exact
//! zero component.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

/// Smallest value a sampled probability component may take.
pub const PROB_FLOOR: f64 = 1e-300;

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `ln Gamma(x + t) - ln Gamma(x)` for integer `t`, summed directly when short.
pub fn ln_rising(x: f64, t: u64) -> f64 {
    if t == 0 {
        0.0
    } else if t <= 32 {
        (0..t).map(|k| (x + k as f64).ln()).sum()
    } else {
        ln_gamma(x + t as f64) - ln_gamma(x)
    }
}

pub fn beta_ln_pdf(x: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0 && x < 1.0) {
        return f64::NEG_INFINITY;
    }
    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b)
}

pub fn dirichlet_ln_pdf(x: &[f64], alpha: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), alpha.len());
    if x.iter().any(|v| !(*v > 0.0)) {
        return f64::NEG_INFINITY;
    }
    let a0: f64 = alpha.iter().sum();
    let norm = ln_gamma(a0) - alpha.iter().map(|a| ln_gamma(*a)).sum::<f64>();
    norm + x
        .iter()
        .zip(alpha)
        .map(|(xi, ai)| (ai - 1.0) * xi.ln())
        .sum::<f64>()
}

/// Half-Cauchy(0, scale) density on the positive reals.
pub fn half_cauchy_ln_pdf(x: f64, scale: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    (2.0 / (std::f64::consts::PI * scale)).ln() - (1.0 + (x / scale).powi(2)).ln()
}

/// Log beta-binomial mass without the binomial coefficient.
pub fn beta_binomial_kernel(successes: u64, failures: u64, a: f64, b: f64) -> f64 {
    ln_rising(a, successes) + ln_rising(b, failures) - ln_rising(a + b, successes + failures)
}

/// Log Dirichlet-multinomial mass without the multinomial coefficient.
pub fn dirichlet_multinomial_kernel(counts: &[u64], alpha: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let a0: f64 = alpha.iter().sum();
    counts
        .iter()
        .zip(alpha)
        .map(|(c, a)| ln_rising(*a, *c))
        .sum::<f64>()
        - ln_rising(a0, total)
}

/// Log of a Gamma(shape, 1) variate.
pub fn sample_ln_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    debug_assert!(shape > 0.0, "gamma shape must be positive, got {shape}");
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("valid gamma shape").sample(rng);
        g.ln()
    } else {
        // G(a) = G(a + 1) * U^(1/a)
        let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("valid gamma shape").sample(rng);
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        g.ln() + u.ln() / shape
    }
}

pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = alpha.iter().map(|a| sample_ln_gamma(rng, *a)).collect();
    softmax(&logs)
}

pub fn sample_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let la = sample_ln_gamma(rng, a);
    let lb = sample_ln_gamma(rng, b);
    let x = 1.0 / (1.0 + (lb - la).exp());
    x.clamp(PROB_FLOOR, 1.0 - f64::EPSILON / 2.0)
}

pub fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Multinomial counts via sequential conditional binomials.
pub fn sample_multinomial<R: Rng + ?Sized>(rng: &mut R, n: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut remaining = n;
    let mut mass: f64 = probs.iter().sum();
    for (k, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k + 1 == probs.len() {
            out[k] = remaining;
            break;
        }
        let frac = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = if frac >= 1.0 {
            remaining
        } else if frac <= 0.0 {
            0
        } else {
            Binomial::new(remaining, frac).expect("valid binomial").sample(rng)
        };
        out[k] = draw;
        remaining -= draw;
        mass -= p;
    }
    out
}

pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, p) in probs.iter().enumerate() {
        if u < *p {
            return k;
        }
        u -= p;
    }
    // Rounding can leave u marginally above the last cumulative sum.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

pub fn softmax(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut v: Vec<f64> = logs.iter().map(|l| (l - max).exp().max(PROB_FLOOR)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Additive log-ratio coordinates (last component as reference).
pub fn alr(p: &[f64]) -> Vec<f64> {
    let last = p[p.len() - 1].ln();
    p[..p.len() - 1].iter().map(|v| v.ln() - last).collect()
}

pub fn alr_inv(y: &[f64]) -> Vec<f64> {
    let mut logs = y.to_vec();
    logs.push(0.0);
    softmax(&logs)
}

/// Log absolute Jacobian of the inverse ALR map: `sum_k ln p_k`.
pub fn alr_ln_jacobian(p: &[f64]) -> f64 {
    p.iter().map(|v| v.ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rising_factorial_matches_lgamma() {
        for &(x, t) in &[(0.5, 3u64), (2.3, 31), (7.0, 33), (1e8, 5), (0.01, 100)] {
            let direct = ln_gamma(x + t as f64) - ln_gamma(x);
            let r = ln_rising(x, t);
            assert!((r - direct).abs() < 1e-6 * (1.0 + direct.abs()), "{x} {t}");
        }
    }

    #[test]
    fn beta_binomial_sums_to_one() {
        let (a, b, n) = (1.7, 0.6, 9u64);
        let total: f64 = (0..=n)
            .map(|k| {
                let coef = ln_gamma(n as f64 + 1.0)
                    - ln_gamma(k as f64 + 1.0)
                    - ln_gamma((n - k) as f64 + 1.0);
                (coef + beta_binomial_kernel(k, n - k, a, b)).exp()
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_shape_dirichlet_has_no_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let d = sample_dirichlet(&mut rng, &[1e-3, 1e-3, 0.5]);
            assert!(d.iter().all(|v| *v > 0.0));
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_sampler_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 40_000;
        let m: f64 = (0..n).map(|_| sample_beta(&mut rng, 0.5, 0.5)).sum::<f64>() / n as f64;
        assert!((m - 0.5).abs() < 0.01);
        let m: f64 = (0..n).map(|_| sample_beta(&mut rng, 2.0, 6.0)).sum::<f64>() / n as f64;
        assert!((m - 0.25).abs() < 0.005);
    }

    #[test]
    fn multinomial_conserves_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = sample_multinomial(&mut rng, 1000, &[0.2, 0.0, 0.5, 0.3]);
        assert_eq!(c.iter().sum::<u64>(), 1000);
        assert_eq!(c[1], 0);
    }

    #[test]
    fn alr_round_trip() {
        let p = [0.1, 0.6, 0.3];
        let back = alr_inv(&alr(&p));
        for (a, b) in back.iter().zip(p) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
