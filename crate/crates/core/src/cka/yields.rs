//! Photon-number yield tensors, the local-channel correction and the
//! phase-error bound.

use crate::error::{Error, Result};
use crate::math::{binom_pmf, factorial, gauss_legendre};
use std::collections::HashMap;
use std::f64::consts::PI;

/// All photon vectors of `n_users` entries with total at most `n_bar`, in
/// graded lexicographic order (vacuum first).
pub fn photon_vectors(n_users: usize, n_bar: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for total in 0..=n_bar {
        let mut v = vec![0usize; n_users];
        compositions(total, 0, &mut v, &mut out);
    }
    out
}

fn compositions(left: usize, i: usize, v: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if i + 1 == v.len() {
        v[i] = left;
        out.push(v.clone());
        return;
    }
    for k in (0..=left).rev() {
        v[i] = k;
        compositions(left - k, i + 1, v, out);
    }
    v[i] = 0;
}

/// Yields per detector over the photon vectors of total at most `n_bar`.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldTensor {
    pub n_users: usize,
    pub n_bar: usize,
    pub vectors: Vec<Vec<usize>>,
    /// `values[j][v]` for detector `j` and vector index `v`.
    pub values: Vec<Vec<f64>>,
}

impl YieldTensor {
    pub fn from_fn(n_users: usize, n_bar: usize, n_det: usize, f: impl Fn(usize, &[usize]) -> f64) -> Self {
        let vectors = photon_vectors(n_users, n_bar);
        let values = (0..n_det).map(|j| vectors.iter().map(|m| f(j, m)).collect()).collect();
        YieldTensor { n_users, n_bar, vectors, values }
    }

    pub fn index(&self) -> HashMap<Vec<usize>, usize> {
        self.vectors.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect()
    }
}

/// `P(m | n)` of the local channel at relative phase `d = phi2 - phi1`:
/// binomial thinning with transmission `cos^2((pi/2 + d) / 2)`.
pub fn local_channel_prob(m: usize, n: usize, d: f64) -> f64 {
    let t = (0.5 * (0.5 * PI + d)).cos().powi(2);
    binom_pmf(n, m, t)
}

/// Local-channel photon-number transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    /// `t[m][n]`: probability that `n` input photons leave as `m`.
    pub t: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn identity(n_max: usize) -> Self {
        let t = (0..=n_max).map(|m| (0..=n_max).map(|n| if m == n { 1.0 } else { 0.0 }).collect()).collect();
        TransitionMatrix { t }
    }

    pub fn n_max(&self) -> usize {
        self.t.len() - 1
    }
}

/// `T[m][n]` averaged over `(phi1, phi2)` uniform on `[-delta_phi, delta_phi]^2`.
///
/// Only the difference matters; it has a triangular density on
/// `[-2 delta_phi, 2 delta_phi]`, integrated by Gauss-Legendre on each half.
pub fn transition_matrix(delta_phi: f64, n_max: usize) -> Result<TransitionMatrix> {
    if !(delta_phi > 0.0) {
        return Err(Error::InvalidParameter(format!("delta_phi {delta_phi} must be positive")));
    }
    let w = 2.0 * delta_phi;
    let mut nodes = gauss_legendre(40, -w, 0.0);
    nodes.extend(gauss_legendre(40, 0.0, w));
    let mut t = vec![vec![0.0; n_max + 1]; n_max + 1];
    for (d, gw) in nodes {
        let dens = gw * (w - d.abs()) / (w * w);
        for n in 0..=n_max {
            for m in 0..=n {
                t[m][n] += dens * local_channel_prob(m, n, d);
            }
        }
    }
    Ok(TransitionMatrix { t })
}

/// `Ybar_n = sum_{m <= n} prod_i T_i[m_i][n_i] Y_m`, clipped to `[0, 1]`.
pub fn correct_yields(y: &YieldTensor, t: &[TransitionMatrix]) -> Result<YieldTensor> {
    if t.len() != y.n_users || t.iter().any(|ti| ti.n_max() < y.n_bar) {
        return Err(Error::InvalidParameter("transition matrices do not match the yield tensor".into()));
    }
    let idx = y.index();
    let mut out = y.clone();
    let mut m = vec![0usize; y.n_users];
    for (v, n) in y.vectors.iter().enumerate() {
        let terms = sub_vectors(n, &mut m, &idx, t);
        for (j, row) in out.values.iter_mut().enumerate() {
            let s: f64 = terms.iter().map(|&(k, w)| w * y.values[j][k]).sum();
            row[v] = s.clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

fn sub_vectors(
    n: &[usize],
    m: &mut [usize],
    idx: &HashMap<Vec<usize>, usize>,
    t: &[TransitionMatrix],
) -> Vec<(usize, f64)> {
    m.iter_mut().for_each(|x| *x = 0);
    let mut out = Vec::new();
    loop {
        let w: f64 = m.iter().zip(n).zip(t).map(|((&mi, &ni), ti)| ti.t[mi][ni]).product();
        if w != 0.0 {
            out.push((idx[&m.to_vec()], w));
        }
        let mut i = 0;
        loop {
            if i == m.len() {
                return out;
            }
            if m[i] < n[i] {
                m[i] += 1;
                break;
            }
            m[i] = 0;
            i += 1;
        }
    }
}

/// `c_{i,n}^{(l)}`: coherent amplitude coefficient of parity `l`.
pub fn c_coeff(alpha: f64, n: usize, l: usize) -> f64 {
    if (n + l) % 2 == 1 {
        return 0.0;
    }
    (-0.5 * alpha * alpha).exp() * alpha.powi(n as i32) / factorial(n).sqrt()
}

/// Extra photon numbers beyond `n_bar` included in the tail term.
pub const TAIL_EXTRA: usize = 12;

/// Numerator of the phase-error bound for every detector:
/// `sum_{v even} (sum_{|n| <= n_bar} prod_i c_i * sqrt(Ybar_n) + Delta_v)^2`.
///
/// The tail `Delta_v` sums `prod_i c_i` over totals `n_bar + 1` to
/// `n_bar + TAIL_EXTRA`, bounding each unknown yield by one.
pub fn phase_error_numerators(y: &YieldTensor, alphas: &[f64]) -> Result<Vec<f64>> {
    let n = y.n_users;
    if alphas.len() != n {
        return Err(Error::InvalidParameter("one amplitude per user required".into()));
    }
    let top = y.n_bar + TAIL_EXTRA;
    let mut out = vec![0.0; y.values.len()];
    for v in 0..1usize << n {
        if v.count_ones() % 2 == 1 {
            continue;
        }
        let bit = |i: usize| v >> i & 1;
        // Distribution of prod c over total photon number, by convolution.
        let mut poly = vec![1.0];
        for (i, &a) in alphas.iter().enumerate() {
            let ci: Vec<f64> = (0..=top).map(|k| c_coeff(a, k, bit(i))).collect();
            let mut next = vec![0.0; (poly.len() + top).min(top + 1)];
            for (p, &x) in poly.iter().enumerate() {
                for (k, &c) in ci.iter().enumerate().take(top + 1 - p) {
                    next[p + k] += x * c;
                }
            }
            poly = next;
        }
        let tail: f64 = poly.iter().skip(y.n_bar + 1).sum();
        let coeffs: Vec<f64> = y
            .vectors
            .iter()
            .map(|m| m.iter().enumerate().map(|(i, &k)| c_coeff(alphas[i], k, bit(i))).product())
            .collect();
        for (j, row) in y.values.iter().enumerate() {
            let s: f64 = coeffs.iter().zip(row).map(|(c, yv)| c * yv.max(0.0).sqrt()).sum();
            out[j] += (s + tail).powi(2);
        }
    }
    Ok(out)
}

/// Phase-error rate `numerator / Pr(Omega_j | KG)`, clipped to `[0, 1/2]`.
pub fn phase_error_bound(numerator: f64, pr_kg: f64) -> Result<f64> {
    if !(pr_kg > 0.0) {
        return Err(Error::EmptyBucket);
    }
    Ok((numerator / pr_kg).clamp(0.0, 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vector_counts() {
        assert_eq!(photon_vectors(4, 4).len(), 70);
        assert_eq!(photon_vectors(2, 1), vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn local_channel_pointwise() {
        assert_eq!(local_channel_prob(0, 0, 0.3), 1.0);
        assert!((local_channel_prob(1, 1, -0.5 * PI) - 1.0).abs() < 1e-15);
        assert!(local_channel_prob(0, 1, -0.5 * PI).abs() < 1e-15);
    }

    #[test]
    fn transition_columns_stochastic() {
        for &d in &[1e-3, 0.1, PI / 8.0, PI / 4.0] {
            let t = transition_matrix(d, 6).unwrap();
            for n in 0..=6 {
                let s: f64 = (0..=6).map(|m| t.t[m][n]).sum();
                assert!((s - 1.0).abs() < 1e-10);
                for m in n + 1..=6 {
                    assert_eq!(t.t[m][n], 0.0);
                }
            }
        }
    }

    #[test]
    fn transition_matches_square_average() {
        let d = PI / 8.0;
        let t = transition_matrix(d, 4).unwrap();
        let g = gauss_legendre(48, -d, d);
        for n in 0..=4 {
            for m in 0..=n {
                let mut s = 0.0;
                for &(p1, w1) in &g {
                    for &(p2, w2) in &g {
                        s += w1 * w2 * local_channel_prob(m, n, p2 - p1);
                    }
                }
                s /= 4.0 * d * d;
                assert!((s - t.t[m][n]).abs() < 1e-12, "({m},{n}) {s} vs {}", t.t[m][n]);
            }
        }
    }

    #[test]
    fn identity_correction_is_noop() {
        let y = YieldTensor::from_fn(3, 3, 2, |j, m| 0.01 * (j + 1) as f64 * m.iter().sum::<usize>() as f64);
        let t = vec![TransitionMatrix::identity(3); 3];
        assert_eq!(correct_yields(&y, &t).unwrap(), y);
    }

    #[test]
    fn unit_yields_stay_unit() {
        let y = YieldTensor::from_fn(4, 4, 1, |_, _| 1.0);
        let t = vec![transition_matrix(PI / 8.0, 4).unwrap(); 4];
        for v in &correct_yields(&y, &t).unwrap().values[0] {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_user_hand_convolution() {
        // n_bar = 1, T = [[1, a], [0, 1 - a]] per user.
        let a = 0.3;
        let tm = TransitionMatrix { t: vec![vec![1.0, a], vec![0.0, 1.0 - a]] };
        let (y00, y10, y01) = (0.01, 0.2, 0.4);
        let y = YieldTensor::from_fn(2, 1, 1, |_, m| match (m[0], m[1]) {
            (0, 0) => y00,
            (1, 0) => y10,
            _ => y01,
        });
        let c = correct_yields(&y, &[tm.clone(), tm]).unwrap();
        let idx = c.index();
        assert_eq!(c.values[0][idx[&vec![0, 0]]], y00);
        assert!((c.values[0][idx[&vec![1, 0]]] - (a * y00 + (1.0 - a) * y10)).abs() < 1e-15);
        assert!((c.values[0][idx[&vec![0, 1]]] - (a * y00 + (1.0 - a) * y01)).abs() < 1e-15);
    }

    #[test]
    fn parity_zeroes_coefficients() {
        assert_eq!(c_coeff(0.4, 3, 0), 0.0);
        assert_eq!(c_coeff(0.4, 2, 1), 0.0);
        assert!(c_coeff(0.4, 2, 0) > 0.0);
        assert!(c_coeff(0.4, 1, 1) > 0.0);
    }

    #[test]
    fn phase_error_limits() {
        let y = YieldTensor::from_fn(3, 4, 2, |_, _| 0.0);
        let num = phase_error_numerators(&y, &[1e-9; 3]).unwrap();
        assert!(num.iter().all(|&x| x < 1e-30));
        // Vacuum limit: only n = 0, v = 0 survive.
        let y = YieldTensor::from_fn(3, 4, 1, |_, m| if m.iter().sum::<usize>() == 0 { 2e-4 } else { 0.3 });
        let num = phase_error_numerators(&y, &[1e-6; 3]).unwrap();
        assert!((phase_error_bound(num[0], 1e-3).unwrap() - 0.2).abs() < 1e-6);
        assert_eq!(phase_error_bound(0.1, 0.0), Err(Error::EmptyBucket));
        assert_eq!(phase_error_bound(0.9, 1.0).unwrap(), 0.5);
    }

    #[test]
    fn tail_matches_brute_force() {
        // All unit yields up to n_bar: the bracket is the full sum of prod c.
        let alphas = [0.5, 0.3];
        let y = YieldTensor::from_fn(2, 2, 1, |_, _| 1.0);
        let num = phase_error_numerators(&y, &alphas).unwrap()[0];
        let mut brute = 0.0;
        for v in [0usize, 3] {
            let mut s = 0.0;
            for a in 0..=14 {
                for b in 0..=(14 - a) {
                    s += c_coeff(alphas[0], a, v & 1) * c_coeff(alphas[1], b, v >> 1 & 1);
                }
            }
            brute += s * s;
        }
        assert!((num - brute).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn correction_is_monotone(base in proptest::collection::vec(0.0f64..1.0, 15),
                                  which in 0usize..15, bump in 0.0f64..0.5, d in 0.01f64..0.39) {
            let y = YieldTensor::from_fn(2, 4, 1, |_, m| {
                let k = photon_vectors(2, 4).iter().position(|v| v == m).unwrap();
                base[k]
            });
            let mut y2 = y.clone();
            y2.values[0][which] = (y2.values[0][which] + bump).min(1.0);
            let t = vec![transition_matrix(d, 4).unwrap(); 2];
            let a = correct_yields(&y, &t).unwrap();
            let b = correct_yields(&y2, &t).unwrap();
            for (x, z) in a.values[0].iter().zip(&b.values[0]) {
                prop_assert!(*z >= *x - 1e-15);
                prop_assert!((0.0..=1.0).contains(z));
            }
        }
    }
}
