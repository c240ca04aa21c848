//! Conference key rates: passive (decoy-LP and exact yields) and active.

use super::kg::{
    accumulate_bits, bucket_kept, bucket_multiplicity, bucket_representatives, kg_statistics, KgStats, KgSummary,
    OffsetPoints,
};
use super::pe::{cka_lp, exact_yields, forward_gains, passive_cells, DecoyCell};
use super::relay::detector_count;
use super::yields::{correct_yields, phase_error_bound, phase_error_numerators, transition_matrix, YieldTensor};
use crate::error::{Error, Result};
use crate::integrate::{Estimate, IntegrationSpec};
use crate::math::{h2, mix64, poisson};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Photon total kept in the exact yield tables used for forward gains.
const DEEP_PHOTONS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct CkaParams {
    pub n_users: usize,
    pub n_det: usize,
    /// Phase slices per circle.
    pub m_slices: usize,
    pub mu_max: f64,
    /// Channel loss of each user's link.
    pub loss_db: f64,
    pub p_d: f64,
    pub n_bar: usize,
    pub decoy_bins: usize,
    /// Branch-cut thresholds (intra-user, inter-user) in slices.
    pub x: usize,
    pub y: usize,
    pub branch_cut: bool,
    pub k_sigma: f64,
    /// QMC points per kept bucket.
    pub kg_points: usize,
    /// QMC points per decoy cell.
    pub pe_points: usize,
}

impl Default for CkaParams {
    fn default() -> Self {
        CkaParams {
            n_users: 4,
            n_det: 4,
            m_slices: 8,
            mu_max: 0.2,
            loss_db: 20.0,
            p_d: 1e-8,
            n_bar: 4,
            decoy_bins: 2,
            x: 2,
            y: 2,
            branch_cut: true,
            k_sigma: 3.0,
            kg_points: 1 << 12,
            pe_points: 1 << 14,
        }
    }
}

impl CkaParams {
    /// Two users, four slices; small enough to sum every combination.
    pub fn reduced() -> Self {
        CkaParams { n_users: 2, n_det: 2, m_slices: 4, x: 1, y: 1, ..Default::default() }
    }

    pub fn eta(&self) -> f64 {
        10f64.powf(-self.loss_db / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidParameter(s));
        if self.n_users < 2 {
            return bad("at least two users".into());
        }
        if self.n_det != detector_count(self.n_det) || self.n_det < self.n_users || self.n_det > 16 {
            return bad(format!("n_det {} must be a power of two in [n_users, 16]", self.n_det));
        }
        if self.m_slices < 2 || self.m_slices % 2 == 1 {
            return bad(format!("m_slices {} must be even", self.m_slices));
        }
        if self.x < 1 || self.x >= self.m_slices || self.y < 1 || self.y >= self.m_slices {
            return bad("branch-cut thresholds must lie in [1, M)".into());
        }
        if !(self.mu_max > 0.0) || !(self.loss_db >= 0.0) || !(0.0..1.0).contains(&self.p_d) {
            return bad("mu_max > 0, loss_db >= 0 and p_d in [0, 1) required".into());
        }
        if self.decoy_bins < 2 {
            return bad("at least two decoy bins".into());
        }
        if self.kg_points < 8 || self.pe_points < 1024 {
            return bad("too few integration points".into());
        }
        Ok(())
    }
}

/// Secret fraction summed over detectors, clipped at zero.
pub fn bucket_rate(s: &KgSummary, numerators: &[f64]) -> f64 {
    let mut total = 0.0;
    for (j, &pr) in s.pr.iter().enumerate() {
        let Ok(qz) = phase_error_bound(numerators[j], pr) else { continue };
        let ec = s.qber[j].iter().map(|&q| h2(q)).fold(0.0, f64::max);
        total += pr * (1.0 - h2(qz) - ec);
    }
    total.max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CkaResult {
    pub rate_lp: Estimate,
    pub rate_exact: Estimate,
    pub lp_infeasible: bool,
    pub combos_kept: f64,
    pub combos_total: f64,
    pub mu_max: f64,
}

/// Passive source amplitude entering the phase-error bound: the mean
/// intensity of the arcsine law, `mu_max / 2`.
pub fn passive_alpha(mu_max: f64) -> f64 {
    (0.5 * mu_max).sqrt()
}

/// Upper-bounded yields from passive PE rounds.
pub fn passive_lp_yields(p: &CkaParams, seed: u64) -> Result<YieldTensor> {
    let spec = IntegrationSpec { n_points: p.pe_points, ..IntegrationSpec::with_points(p.pe_points, seed) };
    let cells = passive_cells(p.n_users, p.decoy_bins, p.mu_max, p.eta(), p.p_d, p.n_det, p.n_bar, &spec)?;
    cka_lp(&cells, p.n_users, p.n_bar, p.k_sigma)
}

/// Phase-error numerators after the local-channel correction.
pub fn passive_numerators(p: &CkaParams, y: &YieldTensor) -> Result<Vec<f64>> {
    let t = transition_matrix(PI / p.m_slices as f64, p.n_bar)?;
    let corrected = correct_yields(y, &vec![t; p.n_users])?;
    phase_error_numerators(&corrected, &vec![passive_alpha(p.mu_max); p.n_users])
}

/// Key-generation statistics of every kept bucket representative.
pub fn passive_buckets(p: &CkaParams, seed: u64) -> Result<(Vec<KgStats>, usize)> {
    p.validate()?;
    let reps = bucket_representatives(p.n_users, p.m_slices);
    let total = reps.len();
    let kept: Vec<_> = reps.into_iter().filter(|k| !p.branch_cut || bucket_kept(k, p.m_slices, p.x, p.y)).collect();
    let spec = IntegrationSpec::with_points(p.kg_points.max(8), mix64(seed ^ 0x6B67));
    let pts = OffsetPoints::new(p.n_users, &spec);
    let eta = p.eta();
    let stats = kept.par_iter().map(|k| kg_statistics(k, p.m_slices, p.mu_max, eta, p.p_d, p.n_det, &pts)).collect();
    Ok((stats, total))
}

fn sum_rate(p: &CkaParams, stats: &[KgStats], numerators: &[f64]) -> Estimate {
    let norm = bucket_multiplicity(p.n_users, p.m_slices) / (p.m_slices as f64).powi(2 * p.n_users as i32);
    let value = norm * stats.iter().map(|s| bucket_rate(&s.pooled(), numerators)).sum::<f64>();
    let r = stats.first().map_or(1, |s| s.pr.len());
    let reps: Vec<f64> =
        (0..r).map(|k| norm * stats.iter().map(|s| bucket_rate(&s.replicate(k), numerators)).sum::<f64>()).collect();
    let mean = reps.iter().sum::<f64>() / r as f64;
    let var = if r > 1 { reps.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64 } else { 0.0 };
    Estimate { value, stderr: (var / r as f64).sqrt(), n_used: p.kg_points * stats.len() }
}

/// Passive conference key rate in both yield modes.
pub fn passive_rate(p: &CkaParams, seed: u64) -> Result<CkaResult> {
    let (stats, total_reps) = passive_buckets(p, seed)?;
    let mult = bucket_multiplicity(p.n_users, p.m_slices);
    let exact = exact_yields(p.n_users, p.n_bar, p.eta(), p.p_d, p.n_det);
    let rate_exact = sum_rate(p, &stats, &passive_numerators(p, &exact)?);
    let (rate_lp, lp_infeasible) = match passive_lp_yields(p, seed) {
        Ok(y) => (sum_rate(p, &stats, &passive_numerators(p, &y)?), false),
        Err(Error::Infeasible) => (Estimate::exact(0.0), true),
        Err(e) => return Err(e),
    };
    Ok(CkaResult {
        rate_lp,
        rate_exact,
        lp_infeasible,
        combos_kept: stats.len() as f64 * mult,
        combos_total: total_reps as f64 * mult,
        mu_max: p.mu_max,
    })
}

/// Active conference key agreement at one intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveResult {
    pub mu: f64,
    pub rate: f64,
    pub kg: KgSummary,
    pub phase_error: Vec<f64>,
}

/// Exact yield table shared by the active forward gains at one loss.
pub fn active_deep_yields(p: &CkaParams) -> YieldTensor {
    exact_yields(p.n_users, DEEP_PHOTONS, p.eta(), p.p_d, p.n_det)
}

/// Active decoy intensities: signal, weak decoy and vacuum.
pub fn active_decoys(mu: f64) -> [f64; 3] {
    [mu, (0.5 * mu).min(0.02), 0.0]
}

pub fn active_rate_fixed(p: &CkaParams, mu: f64, deep: &YieldTensor) -> Result<ActiveResult> {
    let n = p.n_users;
    let eta = p.eta();
    let alpha = vec![Complex64::new((eta * mu).sqrt(), 0.0); n];
    let mut pr = vec![0.0; p.n_det];
    let mut err = vec![vec![0.0; n - 1]; p.n_det];
    accumulate_bits(&alpha, p.n_det, p.p_d, 1.0, &mut pr, &mut err);
    let kg = KgStats { pr: vec![pr], err: vec![err] }.pooled();
    let intens = active_decoys(mu);
    let cells: Vec<DecoyCell> = super::pe::cells(n, 3)
        .into_iter()
        .map(|bins| {
            let weights: Vec<Vec<f64>> =
                bins.iter().map(|&b| (0..=DEEP_PHOTONS).map(|k| poisson(intens[b], k)).collect()).collect();
            let gains = forward_gains(deep, &weights).into_iter().map(Estimate::exact).collect();
            DecoyCell { bins, weights, gains }
        })
        .collect();
    let y = cka_lp(&cells, n, p.n_bar, p.k_sigma)?;
    let num = phase_error_numerators(&y, &vec![mu.sqrt(); n])?;
    let phase_error = kg.pr.iter().zip(&num).map(|(&q, &x)| phase_error_bound(x, q).unwrap_or(0.5)).collect();
    let rate = bucket_rate(&kg, &num);
    Ok(ActiveResult { mu, rate, kg, phase_error })
}

/// Default active intensity grid: 25 log-spaced values in `[1e-3, 1]`.
pub fn active_mu_grid() -> Vec<f64> {
    (0..25).map(|i| 10f64.powf(-3.0 + 3.0 * i as f64 / 24.0)).collect()
}

/// Best active rate over the intensity grid; ties go to the smaller
/// intensity.
pub fn active_rate(p: &CkaParams, grid: &[f64]) -> Result<ActiveResult> {
    let deep = active_deep_yields(p);
    let results: Vec<ActiveResult> =
        grid.par_iter().map(|&mu| active_rate_fixed(p, mu, &deep)).collect::<Result<_>>()?;
    results
        .into_iter()
        .reduce(|best, r| if r.rate > best.rate { r } else { best })
        .ok_or_else(|| Error::InvalidParameter("empty intensity grid".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nothing_sent_nothing_gained() {
        let p = CkaParams { mu_max: 1e-300, p_d: 0.0, kg_points: 64, pe_points: 1024, ..CkaParams::reduced() };
        let r = passive_rate(&p, 1).unwrap();
        assert!(r.rate_exact.value < 1e-250);
        assert!(r.rate_lp.value < 1e-250);
    }

    #[test]
    fn perfect_bucket_rate() {
        let s = KgSummary { pr: vec![0.3, 0.0], qber: vec![vec![0.0], vec![0.0]] };
        assert!((bucket_rate(&s, &[0.0, 0.0]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn lossless_active_has_no_bit_errors_for_pairs() {
        let p = CkaParams { loss_db: 0.0, p_d: 0.0, ..CkaParams::reduced() };
        let r = active_rate_fixed(&p, 0.3, &active_deep_yields(&p)).unwrap();
        assert!(r.kg.qber.iter().flatten().all(|&q| q < 1e-15));
    }

    #[test]
    fn params_validate() {
        assert!(CkaParams::default().validate().is_ok());
        assert!(CkaParams { m_slices: 7, ..Default::default() }.validate().is_err());
        assert!(CkaParams { n_det: 3, ..Default::default() }.validate().is_err());
        assert!(CkaParams { x: 8, ..Default::default() }.validate().is_err());
    }
}
