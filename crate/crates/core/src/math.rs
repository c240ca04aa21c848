//! Small numeric helpers shared by the protocol modules.

use std::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

/// Binary entropy in bits; `h2(0) = h2(1) = 0`, argument clamped to `[0, 1]`.
pub fn h2(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Poisson probability `e^{-mu} mu^n / n!`.
pub fn poisson(mu: f64, n: usize) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (-mu + n as f64 * mu.ln() - ln_factorial(n)).exp()
}

pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Binomial probability of `k` successes in `n` trials.
pub fn binom_pmf(n: usize, k: usize, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    binomial(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// Modified Bessel function `I0` by its power series; intended for the
/// moderate arguments (below about 30) met in detector-intensity averages.
pub fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Average of `exp(-(k + r sin t))` over `t` uniform on `[0, 2pi)`.
pub fn mean_exp_sin(k: f64, r: f64) -> f64 {
    (-k).exp() * bessel_i0(r)
}

/// Reduce an angle to `[0, 2pi)`.
pub fn wrap_2pi(x: f64) -> f64 {
    let y = x.rem_euclid(TWO_PI);
    if y >= TWO_PI {
        0.0
    } else {
        y
    }
}

/// Reduce an angle to `(-pi, pi]`.
pub fn wrap_pi(x: f64) -> f64 {
    let y = wrap_2pi(x);
    if y > PI {
        y - TWO_PI
    } else {
        y
    }
}

/// Gauss-Legendre rule mapped to `[a, b]` as `(node, weight)` pairs.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = gauss_quad::GaussLegendre::new(n.try_into().expect("at least one node"));
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.iter().map(|(x, w)| (mid + half * x, half * w)).collect()
}

/// Golden-section search for the maximum of a unimodal function on `[a, b]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_endpoints_and_half() {
        assert_eq!(h2(0.0), 0.0);
        assert_eq!(h2(1.0), 0.0);
        assert!((h2(0.5) - 1.0).abs() < 1e-15);
        assert!((h2(0.11) - 0.499_915_958_164_528).abs() < 1e-12);
    }

    #[test]
    fn poisson_sums_to_one() {
        let s: f64 = (0..60).map(|n| poisson(2.5, n)).sum();
        assert!((s - 1.0).abs() < 1e-14);
        assert!((poisson(0.3, 2) - 0.3f64.powi(2) / 2.0 * (-0.3f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn bessel_matches_quadrature() {
        for &x in &[0.0, 0.3, 1.7, 6.0] {
            let quad: f64 = gauss_legendre(64, 0.0, PI).iter().map(|&(t, w)| w * (x * t.cos()).exp()).sum::<f64>() / PI;
            assert!((bessel_i0(x) - quad).abs() < 1e-13 * quad);
        }
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let x = golden_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
    }
}
