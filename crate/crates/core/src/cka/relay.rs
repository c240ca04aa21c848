//! Passive two-laser sources, the Hadamard beam-splitter network and
//! threshold single-click statistics.

use crate::math::{binom_pmf, factorial, wrap_2pi};
use num_complex::Complex64;

/// Intensity and phase leaving a user's local 50:50 splitter.
///
/// The phase is the mean `(phi1 + phi2) / 2` reduced to `[0, 2pi)`. When
/// `cos((phi1 - phi2) / 2) < 0` the field carries an extra sign; use
/// [`passive_field`] when the complex amplitude is needed.
pub fn passive_output(phi1: f64, phi2: f64, mu_max: f64) -> (f64, f64) {
    let c = (0.5 * (phi1 - phi2)).cos();
    (mu_max * c * c, wrap_2pi(0.5 * (phi1 + phi2)))
}

/// Complex amplitude `(sqrt(mu_max) / 2) (e^{i phi1} + e^{i phi2})`.
#[inline]
pub fn passive_field(phi1: f64, phi2: f64, mu_max: f64) -> Complex64 {
    0.5 * mu_max.sqrt() * (Complex64::from_polar(1.0, phi1) + Complex64::from_polar(1.0, phi2))
}

/// Smallest power of two not below `n_users`.
pub fn detector_count(n_users: usize) -> usize {
    n_users.max(1).next_power_of_two()
}

/// Sign of user `i` at detector `j`: `(-1)^(popcount(i & j))`.
#[inline]
pub fn hadamard_sign(j: usize, i: usize) -> f64 {
    if (i & j).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Detector amplitudes `A_j = N_D^{-1/2} sum_i (-1)^(j.i) alpha_i`; users
/// beyond `alpha.len()` are vacuum.
pub fn bsnet_amplitudes(alpha: &[Complex64], n_det: usize) -> Vec<Complex64> {
    let norm = 1.0 / (n_det as f64).sqrt();
    (0..n_det)
        .map(|j| alpha.iter().enumerate().map(|(i, a)| a * hadamard_sign(j, i)).sum::<Complex64>() * norm)
        .collect()
}

/// Per-detector click probabilities `1 - (1 - p_d) e^{-|A_j|^2}`.
pub fn click_probs(amps: &[Complex64], p_d: f64) -> Vec<f64> {
    amps.iter().map(|a| click_prob(a.norm_sqr(), p_d)).collect()
}

/// `1 - (1 - p_d) e^{-m}` without cancellation at small `m`.
#[inline]
pub fn click_prob(m: f64, p_d: f64) -> f64 {
    p_d - (1.0 - p_d) * (-m).exp_m1()
}

/// Probability of the exclusive event "only detector `j` clicks", from
/// per-detector intensities.
#[inline]
pub fn single_clicks_from_intensity(intensity: &[f64], p_d: f64, out: &mut [f64]) {
    let mut no_click_all = 1.0;
    let mut zero = 0usize;
    for (o, &m) in out.iter_mut().zip(intensity) {
        let nc = (1.0 - p_d) * (-m).exp();
        *o = nc;
        if nc == 0.0 {
            zero += 1;
        } else {
            no_click_all *= nc;
        }
    }
    for (o, &m) in out.iter_mut().zip(intensity) {
        let nc = *o;
        *o = if nc == 0.0 {
            if zero == 1 {
                no_click_all
            } else {
                0.0
            }
        } else if zero > 0 {
            0.0
        } else {
            click_prob(m, p_d) * no_click_all / nc
        };
    }
}

/// `Pr(Omega_j) = p_click(j) prod_{k != j} (1 - p_click(k))`.
pub fn single_click_probs(amps: &[Complex64], p_d: f64) -> Vec<f64> {
    let intensity: Vec<f64> = amps.iter().map(|a| a.norm_sqr()).collect();
    let mut out = vec![0.0; amps.len()];
    single_clicks_from_intensity(&intensity, p_d, &mut out);
    out
}

/// Probabilities of all `2^N_D` click patterns; bit `j` of the index is set
/// when detector `j` clicks.
pub fn click_pattern_probs(amps: &[Complex64], p_d: f64) -> Vec<f64> {
    let p = click_probs(amps, p_d);
    (0..1usize << p.len())
        .map(|mask| p.iter().enumerate().map(|(j, &pj)| if mask >> j & 1 == 1 { pj } else { 1.0 - pj }).product())
        .collect()
}

/// Single-click yield of the Fock input `m` (photons per user) after
/// per-user transmission `eta`, for any one detector.
///
/// Surviving photons all land on one output with probability
/// `S! / prod s_i! * N_D^{-S}`, independent of the detector.
pub fn fock_yield(m: &[usize], eta: &[f64], n_det: usize, p_d: f64) -> f64 {
    let others = (1.0 - p_d).powi(n_det as i32 - 1);
    let mut total = 0.0;
    let mut s = vec![0usize; m.len()];
    loop {
        let weight: f64 = s.iter().zip(m).zip(eta).map(|((&si, &mi), &e)| binom_pmf(mi, si, e)).product();
        if weight > 0.0 {
            let big_s: usize = s.iter().sum();
            let y = if big_s == 0 {
                p_d
            } else {
                factorial(big_s) / s.iter().map(|&x| factorial(x)).product::<f64>()
                    * (n_det as f64).powi(-(big_s as i32))
            };
            total += weight * y;
        }
        let mut i = 0;
        loop {
            if i == s.len() {
                return (total * others).clamp(0.0, 1.0);
            }
            if s[i] < m[i] {
                s[i] += 1;
                break;
            }
            s[i] = 0;
            i += 1;
        }
    }
}
