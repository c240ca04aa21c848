//! Parameter-estimation gains and the multipartite decoy LP.

use super::relay::{bsnet_amplitudes, fock_yield, single_click_probs};
use super::yields::{photon_vectors, YieldTensor};
use crate::error::{Error, Result};
use crate::integrate::{integrate_kernel, Estimate, IntegrationSpec, Replicates};
use crate::lp::{LinearProgram, Sense};
use crate::math::{gauss_legendre, poisson};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::FRAC_PI_2;

/// Equal-width intensity bins `[k mu_max / n, (k+1) mu_max / n]`, mapped to
/// the arcsine angle `theta = asin(sqrt(mu / mu_max))`, which is uniform.
pub fn bin_angles(mu_max: f64, n_bins: usize, k: usize) -> (f64, f64) {
    let th = |mu: f64| (mu / mu_max).clamp(0.0, 1.0).sqrt().asin();
    let w = mu_max / n_bins as f64;
    (th(k as f64 * w), th((k + 1) as f64 * w))
}

/// Arcsine-law probability of bin `k` and its mean Poisson distribution up to
/// `n_max` photons.
pub fn bin_poisson(mu_max: f64, n_bins: usize, k: usize, n_max: usize) -> (f64, Vec<f64>) {
    let (a, b) = bin_angles(mu_max, n_bins, k);
    let nodes = gauss_legendre(64, a, b);
    let mut p = vec![0.0; n_max + 1];
    for (t, w) in nodes {
        let mu = mu_max * t.sin().powi(2);
        for (n, x) in p.iter_mut().enumerate() {
            *x += w * poisson(mu, n);
        }
    }
    p.iter_mut().for_each(|x| *x /= b - a);
    ((b - a) / FRAC_PI_2, p)
}

/// One decoy cell: per-user mean photon-number distributions and the observed
/// single-click gain per detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoyCell {
    pub bins: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub gains: Vec<Estimate>,
}

impl DecoyCell {
    /// `<P(m)>` of a photon vector.
    pub fn weight(&self, m: &[usize]) -> f64 {
        m.iter().zip(&self.weights).map(|(&k, w)| w.get(k).copied().unwrap_or(0.0)).product()
    }
}

/// All `n_bins^n_users` bin assignments, first user varying slowest.
pub fn cells(n_users: usize, n_bins: usize) -> Vec<Vec<usize>> {
    (0..n_bins.pow(n_users as u32))
        .map(|mut c| {
            let mut v = vec![0; n_users];
            for x in v.iter_mut().rev() {
                *x = c % n_bins;
                c /= n_bins;
            }
            v
        })
        .collect()
}

/// Single-click gain of a decoy cell: intensities from the arcsine law
/// restricted to each user's bin, output phases uniform, per-user
/// transmission `eta`.
pub fn pe_gain(
    bins: &[usize],
    n_bins: usize,
    mu_max: f64,
    eta: f64,
    p_d: f64,
    n_det: usize,
    spec: &IntegrationSpec,
) -> Result<Vec<Replicates>> {
    let angles: Vec<(f64, f64)> = bins.iter().map(|&k| bin_angles(mu_max, n_bins, k)).collect();
    if angles.iter().any(|&(a, b)| !(b > a)) {
        return Err(Error::DegenerateRegion);
    }
    let n = bins.len();
    Ok(integrate_kernel(spec, 2 * n, n_det, |u, out| {
        let alpha: Vec<Complex64> = angles
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| {
                let t = a + (b - a) * u[2 * i];
                let mu = mu_max * t.sin().powi(2);
                Complex64::from_polar((eta * mu).sqrt(), std::f64::consts::TAU * u[2 * i + 1])
            })
            .collect();
        let p = single_click_probs(&bsnet_amplitudes(&alpha, n_det), p_d);
        out.copy_from_slice(&p);
    }))
}

/// Exact Fock yields of the lossy relay for all photon vectors up to
/// total `n_max`; identical for every detector.
pub fn exact_yields(n_users: usize, n_max: usize, eta: f64, p_d: f64, n_det: usize) -> YieldTensor {
    let etas = vec![eta; n_users];
    let vectors = photon_vectors(n_users, n_max);
    let row: Vec<f64> = vectors.par_iter().map(|m| fock_yield(m, &etas, n_det, p_d)).collect();
    YieldTensor { n_users, n_bar: n_max, vectors, values: vec![row; n_det] }
}

/// Forward gains `sum_m <P(m)> Y_m` of a cell from a (deep) yield tensor.
pub fn forward_gains(y: &YieldTensor, weights: &[Vec<f64>]) -> Vec<f64> {
    y.values
        .iter()
        .map(|row| {
            y.vectors
                .iter()
                .zip(row)
                .map(|(m, v)| {
                    v * m.iter().zip(weights).map(|(&k, w)| w.get(k).copied().unwrap_or(0.0)).product::<f64>()
                })
                .sum()
        })
        .collect()
}

/// Passive decoy cells with QMC gains.
pub fn passive_cells(
    n_users: usize,
    n_bins: usize,
    mu_max: f64,
    eta: f64,
    p_d: f64,
    n_det: usize,
    weight_len: usize,
    spec: &IntegrationSpec,
) -> Result<Vec<DecoyCell>> {
    let bw: Vec<Vec<f64>> = (0..n_bins).map(|k| bin_poisson(mu_max, n_bins, k, weight_len).1).collect();
    cells(n_users, n_bins)
        .into_iter()
        .enumerate()
        .map(|(c, bins)| {
            let sub = IntegrationSpec { seed: crate::math::mix64(spec.seed ^ (c as u64 + 1)), ..*spec };
            let g = pe_gain(&bins, n_bins, mu_max, eta, p_d, n_det, &sub)?;
            Ok(DecoyCell {
                weights: bins.iter().map(|&k| bw[k].clone()).collect(),
                gains: g.iter().map(Replicates::estimate).collect(),
                bins,
            })
        })
        .collect()
}

/// Relative widening of every gain constraint, far above rounding error
/// and far below any statistical margin.
pub const NUMERIC_MARGIN: f64 = 1e-6;

/// LP of detector `j` in units of `scale`; variables follow `vectors`.
pub fn cka_lp_program(cells: &[DecoyCell], vectors: &[Vec<usize>], j: usize, k_sigma: f64) -> (LinearProgram, f64) {
    let scale =
        cells.iter().map(|c| c.gains[j].value + k_sigma * c.gains[j].stderr).fold(0.0f64, f64::max).clamp(1e-300, 1.0);
    let mut lp = LinearProgram::new(vectors.iter().map(|m| format!("Y{m:?}")).collect());
    lp.upper.iter_mut().for_each(|u| *u = 1.0 / scale);
    for c in cells {
        let coeffs: Vec<(usize, f64)> =
            vectors.iter().enumerate().map(|(v, m)| (v, c.weight(m))).filter(|&(_, w)| w > 0.0).collect();
        let inside: f64 = coeffs.iter().map(|&(_, w)| w).sum();
        let tail = (1.0 - inside).max(0.0);
        let g = &c.gains[j];
        let margin = k_sigma * g.stderr + NUMERIC_MARGIN * g.value;
        lp.add(coeffs.clone(), Sense::Le, (g.value + margin) / scale);
        let lo = (g.value - margin - tail) / scale;
        if lo > 0.0 {
            lp.add(coeffs, Sense::Ge, lo);
        }
    }
    (lp, scale)
}

/// Per-detector upper bounds on `Y_m` for `|m| <= n_bar` from two-sided
/// constraints `G - k sigma - tail <= sum <P(m)> Y_m <= G + k sigma`.
pub fn cka_lp(cells: &[DecoyCell], n_users: usize, n_bar: usize, k_sigma: f64) -> Result<YieldTensor> {
    let vectors = photon_vectors(n_users, n_bar);
    let n_det = cells.first().map(|c| c.gains.len()).ok_or_else(|| Error::InvalidParameter("no cells".into()))?;
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(n_det);
    for j in 0..n_det {
        // Detectors with identical observations share one set of bounds.
        if let Some(prev) = (0..j).find(|&p| cells.iter().all(|c| c.gains[p] == c.gains[j])) {
            values.push(values[prev].clone());
            continue;
        }
        let (lp, scale) = cka_lp_program(cells, &vectors, j, k_sigma);
        let row: Result<Vec<f64>> = (0..vectors.len())
            .into_par_iter()
            .map(|v| {
                let mut p = lp.clone();
                p.set_objective(v, true);
                Ok((p.solve()?.objective * scale).clamp(0.0, 1.0))
            })
            .collect();
        values.push(row?);
    }
    Ok(YieldTensor { n_users, n_bar, vectors, values })
}
