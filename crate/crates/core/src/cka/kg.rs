//! Slice combinations, branch cutting and key-generation statistics.
//!
//! Slices are 0-based: slice `k` covers `[2 pi k / M, 2 pi (k + 1) / M)`. A
//! combination lists `(k_{i,1}, k_{i,2})` for every user in order.
//!
//! Shifting both of a user's slices by `M/2` negates that user's field and
//! leaves everything else unchanged, so the `2^N` combinations related by
//! such flips form a bucket whose members differ only in the users' key
//! bits. A bucket shares one detection probability per detector and one
//! bit-relation recipe. A common shift of every slice is a global phase and
//! does not change any statistic, so buckets are evaluated once per orbit.

use super::relay::{hadamard_sign, passive_field, single_clicks_from_intensity};
use crate::integrate::{uniform, IntegrationSpec};
use crate::math::TWO_PI;
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SliceCombo {
    pub k: Vec<usize>,
}

impl SliceCombo {
    pub fn n_users(&self) -> usize {
        self.k.len() / 2
    }

    pub fn pair(&self, i: usize) -> (usize, usize) {
        (self.k[2 * i], self.k[2 * i + 1])
    }

    /// The member with the users in `flips` (bitmask) shifted by `M/2`.
    pub fn flipped(&self, flips: usize, m: usize) -> SliceCombo {
        let mut k = self.k.clone();
        for i in 0..self.n_users() {
            if flips >> i & 1 == 1 {
                k[2 * i] = (k[2 * i] + m / 2) % m;
                k[2 * i + 1] = (k[2 * i + 1] + m / 2) % m;
            }
        }
        SliceCombo { k }
    }
}

fn circ(a: usize, b: usize, period: usize) -> usize {
    let d = (a + period - b % period) % period;
    d.min(period - d)
}

/// Twice the circular mean slice of a user, on the circle of `2M` half-slices.
fn doubled_mean(k1: usize, k2: usize, m: usize) -> usize {
    let d = (k2 + m - k1) % m;
    let signed = if d > m / 2 { d as isize - m as isize } else { d as isize };
    ((2 * k1) as isize + signed).rem_euclid(2 * m as isize) as usize
}

/// Keep a combination when every user's two slices are within `x` of each
/// other and every pair of users' mean slices within `y` (both circular).
pub fn branch_filter(k: &SliceCombo, m: usize, x: usize, y: usize) -> bool {
    let n = k.n_users();
    if (0..n).any(|i| {
        let (a, b) = k.pair(i);
        circ(a, b, m) > x
    }) {
        return false;
    }
    let means: Vec<usize> = (0..n).map(|i| doubled_mean(k.pair(i).0, k.pair(i).1, m)).collect();
    for i in 0..n {
        for j in i + 1..n {
            if circ(means[i], means[j], 2 * m) > 2 * y {
                return false;
            }
        }
    }
    true
}

/// A bucket is kept when any of its members passes the filter.
pub fn bucket_kept(k: &SliceCombo, m: usize, x: usize, y: usize) -> bool {
    (0..1usize << k.n_users()).any(|f| branch_filter(&k.flipped(f, m), m, x, y))
}

/// One representative per orbit of buckets under global shifts: user 0 has
/// `k_{0,1} = 0`, every other user `k_{i,1} < M/2`. Each stands for
/// `M/2 * 2^N` combinations.
pub fn bucket_representatives(n_users: usize, m: usize) -> Vec<SliceCombo> {
    let mut radix = vec![m];
    for _ in 1..n_users {
        radix.push(m / 2);
        radix.push(m);
    }
    let total: usize = radix.iter().product();
    (0..total)
        .map(|mut c| {
            let mut digits = vec![0; radix.len()];
            for (d, &r) in digits.iter_mut().zip(&radix).rev() {
                *d = c % r;
                c /= r;
            }
            let mut k = vec![0, digits[0]];
            k.extend_from_slice(&digits[1..]);
            SliceCombo { k }
        })
        .collect()
}

/// Combinations represented by one bucket representative.
pub fn bucket_multiplicity(n_users: usize, m: usize) -> f64 {
    (m / 2) as f64 * (1u64 << n_users) as f64
}

/// Shared within-slice offsets: `points[r]` holds `per_replicate * 2N`
/// uniforms for replicate `r`.
#[derive(Debug, Clone)]
pub struct OffsetPoints {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
}

impl OffsetPoints {
    pub fn new(n_users: usize, spec: &IntegrationSpec) -> Self {
        let dim = 2 * n_users;
        let n = spec.per_replicate();
        let points = (0..spec.replicates)
            .map(|r| {
                let seed = spec.replicate_seed(r);
                (0..n).flat_map(|i| (0..dim).map(move |d| uniform(spec.sequence, seed, i, d))).collect()
            })
            .collect();
        OffsetPoints { dim, points }
    }

    pub fn replicates(&self) -> usize {
        self.points.len()
    }
}

/// Per-replicate key-generation sums of one bucket.
///
/// `pr[r][j]` is `Pr(Omega_j | KG, bucket)`; `err[r][j][i - 1]` is the part of
/// it where user `i`'s bit differs from user 0's.
#[derive(Debug, Clone, PartialEq)]
pub struct KgStats {
    pub pr: Vec<Vec<f64>>,
    pub err: Vec<Vec<Vec<f64>>>,
}

/// Pooled bucket statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct KgSummary {
    pub pr: Vec<f64>,
    /// Effective QBER `min(Q, 1 - Q)` per detector and user `i >= 1`.
    pub qber: Vec<Vec<f64>>,
}

impl KgStats {
    pub fn pooled(&self) -> KgSummary {
        let r = self.pr.len() as f64;
        let n_det = self.pr[0].len();
        let n_oth = self.err[0][0].len();
        let pr: Vec<f64> = (0..n_det).map(|j| self.pr.iter().map(|p| p[j]).sum::<f64>() / r).collect();
        let qber = (0..n_det)
            .map(|j| {
                (0..n_oth)
                    .map(|i| {
                        let e = self.err.iter().map(|x| x[j][i]).sum::<f64>() / r;
                        effective_qber(e, pr[j])
                    })
                    .collect()
            })
            .collect();
        KgSummary { pr, qber }
    }

    pub fn replicate(&self, r: usize) -> KgSummary {
        let pr = self.pr[r].clone();
        let qber =
            self.err[r].iter().zip(&pr).map(|(row, &p)| row.iter().map(|&e| effective_qber(e, p)).collect()).collect();
        KgSummary { pr, qber }
    }
}

fn effective_qber(err: f64, pr: f64) -> f64 {
    if pr > 0.0 {
        let q = (err / pr).clamp(0.0, 1.0);
        q.min(1.0 - q)
    } else {
        0.5
    }
}

/// Relay statistics for fixed user amplitudes, averaged over the key bits
/// (user 0's bit fixed to 0; the global complement gives the same clicks).
/// Adds `weight *` the result into `pr` and `err`.
pub fn accumulate_bits(alpha: &[Complex64], n_det: usize, p_d: f64, weight: f64, pr: &mut [f64], err: &mut [Vec<f64>]) {
    let n = alpha.len();
    let patterns = 1usize << (n - 1);
    let w = weight / patterns as f64;
    let norm = 1.0 / (n_det as f64).sqrt();
    let mut inten = [0.0f64; 16];
    let mut click = [0.0f64; 16];
    for half in 0..patterns {
        let b = half << 1;
        for j in 0..n_det {
            let mut a = Complex64::new(0.0, 0.0);
            for (i, al) in alpha.iter().enumerate() {
                let s = hadamard_sign(j, i) * if b >> i & 1 == 1 { -1.0 } else { 1.0 };
                a += al * s;
            }
            inten[j] = (a * norm).norm_sqr();
        }
        single_clicks_from_intensity(&inten[..n_det], p_d, &mut click[..n_det]);
        for j in 0..n_det {
            let p = w * click[j];
            pr[j] += p;
            for i in 1..n {
                if b >> i & 1 == 1 {
                    err[j][i - 1] += p;
                }
            }
        }
    }
}

/// Key-generation statistics of one bucket: phases uniform within the
/// representative's slices, per-user transmission `eta`.
pub fn kg_statistics(
    k: &SliceCombo,
    m: usize,
    mu_max: f64,
    eta: f64,
    p_d: f64,
    n_det: usize,
    pts: &OffsetPoints,
) -> KgStats {
    let n = k.n_users();
    let width = TWO_PI / m as f64;
    let amp = (eta * mu_max).sqrt();
    let mut out_pr = Vec::with_capacity(pts.replicates());
    let mut out_err = Vec::with_capacity(pts.replicates());
    let mut alpha = vec![Complex64::new(0.0, 0.0); n];
    for set in &pts.points {
        let count = set.len() / pts.dim;
        let mut pr = vec![0.0; n_det];
        let mut err = vec![vec![0.0; n - 1]; n_det];
        for u in set.chunks_exact(pts.dim) {
            for (i, a) in alpha.iter_mut().enumerate() {
                let p1 = width * (k.k[2 * i] as f64 + u[2 * i]);
                let p2 = width * (k.k[2 * i + 1] as f64 + u[2 * i + 1]);
                *a = passive_field(p1, p2, 1.0) * amp;
            }
            accumulate_bits(&alpha, n_det, p_d, 1.0 / count as f64, &mut pr, &mut err);
        }
        out_pr.push(pr);
        out_err.push(err);
    }
    KgStats { pr: out_pr, err: out_err }
}
