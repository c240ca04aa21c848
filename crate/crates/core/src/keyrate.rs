//! Asymptotic key rates of passive and active MDI-QKD.

use rayon::prelude::*;

use crate::channel::{pair_gain_qber, ChannelParams};
use crate::decoy::{build_lp, Basis, DecoyLp, DecoyObservation, DEFAULT_K_SIGMA, DEFAULT_N_CUT};
use crate::error::{Error, Result};
use crate::integrate::{integrate_kernel, Estimate, IntegrationSpec, Replicates};
use crate::math::{h2, mix64, poisson};
use crate::source::{sample_in_region, BasisLabel, BlochOutput, PassiveSource, Region, RegionWeights, ZMetric};

pub const DEFAULT_F_EC: f64 = 1.16;

/// How the error-correction term of the passive rate is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EcWeighting {
    /// `f H2(E_Z)` multiplied by the observed Z gain.
    #[default]
    GainWeighted,
    /// `f H2(E_Z)` without a gain factor.
    Unweighted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassiveConfig {
    pub mu_max: f64,
    pub delta_z: f64,
    pub delta_xy: f64,
    pub delta_phi: f64,
    pub t3: f64,
    pub f_ec: f64,
    pub n_cut: usize,
    pub k_sigma: f64,
    pub ec_weighting: EcWeighting,
    pub z_metric: ZMetric,
}

impl Default for PassiveConfig {
    fn default() -> Self {
        PassiveConfig {
            mu_max: 1.0,
            delta_z: 0.03,
            delta_xy: 0.2,
            delta_phi: 0.2,
            t3: 0.5,
            f_ec: DEFAULT_F_EC,
            n_cut: DEFAULT_N_CUT,
            k_sigma: DEFAULT_K_SIGMA,
            ec_weighting: EcWeighting::GainWeighted,
            z_metric: ZMetric::Plane,
        }
    }
}

impl PassiveConfig {
    /// Decoy bins `(0, t3/3], (t3/3, 2 t3/3], (2 t3/3, t3]`.
    pub fn bins(&self) -> [(f64, f64); 3] {
        let t = self.t3;
        [(0.0, t / 3.0), (t / 3.0, 2.0 * t / 3.0), (2.0 * t / 3.0, t)]
    }

    fn z_region(&self, label: BasisLabel, bin: (f64, f64)) -> Region {
        Region::z(label, self.delta_z, bin).with_metric(self.z_metric)
    }

    fn x_region(&self, label: BasisLabel, bin: (f64, f64)) -> Region {
        Region::x(label, self.delta_xy, self.delta_phi, bin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateComponents {
    pub p_z_a: f64,
    pub p_z_b: f64,
    pub p1_a: f64,
    pub p1_b: f64,
    pub y11_l: f64,
    pub e11_u: f64,
    pub q_z: f64,
    pub e_z: f64,
    pub ec_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateResult {
    pub rate: f64,
    /// Standard error of the rate from integration replicates.
    pub rate_stderr: f64,
    /// Rate under the other error-correction weighting.
    pub rate_alt_ec: f64,
    pub distance_km: f64,
    pub components: RateComponents,
    /// `(delta_z, t3, f_ec)`; the active rate reports `(mu, nu, f_ec)`.
    pub params_used: (f64, f64, f64),
    pub diagnostic: Option<String>,
}

fn sub_spec(spec: &IntegrationSpec, tag: u64) -> IntegrationSpec {
    IntegrationSpec { seed: mix64(spec.seed ^ mix64(tag)), ..*spec }
}

/// Gain and error gain summed over both announcements and averaged over
/// the label pairs `la x lb` (regions sharing one set of points).
pub fn label_averaged(
    src: &PassiveSource,
    ra: &[Region],
    rb: &[Region],
    ch: &ChannelParams,
    spec: &IntegrationSpec,
) -> (Replicates, Replicates) {
    let norm = 1.0 / (ra.len() * rb.len()) as f64;
    let reps = integrate_kernel(spec, 6, 2, |u, out| {
        let a: Vec<BlochOutput> = ra.iter().map(|r| sample_in_region(r, src.mu_max, [u[0], u[1], u[2]])).collect();
        let b: Vec<BlochOutput> = rb.iter().map(|r| sample_in_region(r, src.mu_max, [u[3], u[4], u[5]])).collect();
        for (r1, x) in ra.iter().zip(&a) {
            for (r2, y) in rb.iter().zip(&b) {
                let g = pair_gain_qber(r1.label, x, r2.label, y, ch);
                out[0] += norm * g.total_q();
                out[1] += norm * g.total_qe();
            }
        }
    });
    let mut it = reps.into_iter();
    (it.next().unwrap(), it.next().unwrap())
}

/// Label-averaged decoy observations of one basis over the 3 x 3 bins.
pub fn basis_observations(
    src: &PassiveSource,
    ch: &ChannelParams,
    cfg: &PassiveConfig,
    basis: Basis,
    spec: &IntegrationSpec,
) -> Result<Vec<DecoyObservation>> {
    let labels = match basis {
        Basis::Z => [BasisLabel::ZH, BasisLabel::ZV],
        Basis::X => [BasisLabel::XPlus, BasisLabel::XMinus],
    };
    let bins = cfg.bins();
    let region = |l, b| match basis {
        Basis::Z => cfg.z_region(l, b),
        Basis::X => cfg.x_region(l, b),
    };
    let weights: Vec<RegionWeights> =
        bins.iter().map(|&b| src.region_weights(&region(labels[0], b), cfg.n_cut)).collect::<Result<_>>()?;
    let mut obs = Vec::with_capacity(9);
    for i in 0..3 {
        for j in 0..3 {
            let ra: Vec<Region> = labels.iter().map(|&l| region(l, bins[i])).collect();
            let rb: Vec<Region> = labels.iter().map(|&l| region(l, bins[j])).collect();
            let tag = 16 * (basis as u64) + (3 * i + j) as u64;
            let (q, qe) = label_averaged(src, &ra, &rb, ch, &sub_spec(spec, tag));
            obs.push(DecoyObservation {
                region_pair: (i, j),
                basis,
                q_hat: q.estimate(),
                qe_hat: qe.estimate(),
                w_a: weights[i].clone(),
                w_b: weights[j].clone(),
            });
        }
    }
    Ok(obs)
}

/// Phase-error side of the rate: `(e11_U, eY11_U, Y11_L of X)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseErrorBound {
    pub e11_u: f64,
    pub ey11_u: f64,
    pub y11_l_x: f64,
}

pub fn x_bound(ch: &ChannelParams, cfg: &PassiveConfig, spec: &IntegrationSpec) -> Result<PhaseErrorBound> {
    let src = PassiveSource::new(cfg.mu_max);
    let obs = basis_observations(&src, ch, cfg, Basis::X, spec)?;
    let lp = build_lp(&obs, cfg.n_cut, cfg.k_sigma)?;
    phase_error_from_lp(&lp)
}

fn phase_error_from_lp(lp: &DecoyLp) -> Result<PhaseErrorBound> {
    let y11_l_x = lp.min_yield(1, 1)?;
    let ey11_u = lp.max_error_yield(1, 1)?;
    let e11_u = if y11_l_x > 0.0 { (ey11_u / y11_l_x).min(1.0) } else { 1.0 };
    Ok(PhaseErrorBound { e11_u, ey11_u, y11_l_x })
}

pub fn passive_rate(ch: &ChannelParams, cfg: &PassiveConfig, spec: &IntegrationSpec) -> Result<KeyRateResult> {
    small_ring_rate(ch, cfg, 1, spec)
}

pub fn small_ring_rate(
    ch: &ChannelParams,
    cfg: &PassiveConfig,
    rings: usize,
    spec: &IntegrationSpec,
) -> Result<KeyRateResult> {
    let xb = x_bound(ch, cfg, spec)?;
    rate_with_phase_error(ch, cfg, rings, &xb, spec)
}

/// Passive rate with a precomputed X-side bound (the X observables do not
/// depend on `delta_z`).
pub fn rate_with_phase_error(
    ch: &ChannelParams,
    cfg: &PassiveConfig,
    rings: usize,
    xb: &PhaseErrorBound,
    spec: &IntegrationSpec,
) -> Result<KeyRateResult> {
    if rings == 0 {
        return Err(Error::InvalidParameter("ring count must be >= 1".into()));
    }
    spec.validate()?;
    let src = PassiveSource::new(cfg.mu_max);
    let zobs = basis_observations(&src, ch, cfg, Basis::Z, spec)?;
    let y11_l = build_lp(&zobs, cfg.n_cut, cfg.k_sigma)?.min_yield(1, 1)?;

    let union = (0.0, cfg.t3);
    let p1 = src.region_weights(&cfg.z_region(BasisLabel::ZH, union), 1)?.poisson[1];
    let caps: Vec<[Region; 2]> = cfg
        .z_region(BasisLabel::ZH, union)
        .rings(rings)
        .into_iter()
        .zip(cfg.z_region(BasisLabel::ZV, union).rings(rings))
        .map(|(h, v)| [h, v])
        .collect();
    let p_ring: Vec<f64> = caps.iter().map(|c| 2.0 * src.region_probability(&c[0])).collect();
    let p_z: f64 = p_ring.iter().sum();

    let pairs: Vec<(usize, usize)> = (0..rings).flat_map(|i| (0..rings).map(move |j| (i, j))).collect();
    let ring_obs: Vec<(f64, Replicates, Replicates)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let w = p_ring[i] * p_ring[j];
            let (q, qe) = label_averaged(&src, &caps[i], &caps[j], ch, &sub_spec(spec, 1000 + (i * rings + j) as u64));
            (w, q, qe)
        })
        .collect();

    let reps = spec.replicates;
    let mut q_tot = Replicates::zeros(reps);
    let mut qe_tot = Replicates::zeros(reps);
    let mut ec_w = vec![0.0; reps];
    let mut ec_u = vec![0.0; reps];
    for (w, q, qe) in &ring_obs {
        if *w <= 0.0 {
            log::warn!("ring pair with vanishing probability skipped");
            continue;
        }
        q_tot.add_scaled(*w / (p_z * p_z), q);
        qe_tot.add_scaled(*w / (p_z * p_z), qe);
        for r in 0..reps {
            let e = if q.means[r] > 0.0 { (qe.means[r] / q.means[r]).clamp(0.0, 1.0) } else { 0.0 };
            ec_w[r] += cfg.f_ec * w * q.means[r] * h2(e);
            ec_u[r] += cfg.f_ec * w * h2(e);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let q_z = q_tot.estimate().value;
    let e_z = if q_z > 0.0 { (qe_tot.estimate().value / q_z).clamp(0.0, 1.0) } else { 0.0 };
    let (ec_sel, ec_alt) = match cfg.ec_weighting {
        EcWeighting::GainWeighted => (&ec_w, &ec_u),
        EcWeighting::Unweighted => (&ec_u, &ec_w),
    };
    let privacy = p_z * p_z * p1 * p1 * y11_l * (1.0 - h2(xb.e11_u.min(0.5)));
    let per_rep: Vec<f64> = ec_sel.iter().map(|ec| privacy - ec).collect();
    let rate_stderr = Replicates { means: per_rep, n_used: 0 }.estimate().stderr;
    let diagnostic = (y11_l <= 0.0).then(|| "Y11 lower bound is zero".to_string());
    Ok(KeyRateResult {
        rate: if y11_l > 0.0 { (privacy - mean(ec_sel)).max(0.0) } else { 0.0 },
        rate_stderr,
        rate_alt_ec: if y11_l > 0.0 { (privacy - mean(ec_alt)).max(0.0) } else { 0.0 },
        distance_km: ch.l_a + ch.l_b,
        components: RateComponents {
            p_z_a: p_z,
            p_z_b: p_z,
            p1_a: p1,
            p1_b: p1,
            y11_l,
            e11_u: xb.e11_u,
            q_z,
            e_z,
            ec_cost: mean(ec_sel),
        },
        params_used: (cfg.delta_z, cfg.t3, cfg.f_ec),
        diagnostic,
    })
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Exhaustive search over `xs x ys`; ties go to the smaller `x`.
pub fn grid_argmax<T, F>(xs: &[f64], ys: &[f64], f: F) -> Option<(f64, f64, T)>
where
    T: Send,
    F: Fn(f64, f64) -> Option<(f64, T)> + Sync,
{
    let cells: Vec<(usize, usize)> = (0..xs.len()).flat_map(|i| (0..ys.len()).map(move |j| (i, j))).collect();
    let vals: Vec<Option<(f64, T)>> = cells.par_iter().map(|&(i, j)| f(xs[i], ys[j])).collect();
    let mut best: Option<(usize, usize, f64, T)> = None;
    for (&(i, j), v) in cells.iter().zip(vals) {
        if let Some((score, t)) = v {
            let better = match &best {
                None => true,
                Some((bi, _, bs, _)) => score > *bs || (score == *bs && xs[i] < xs[*bi]),
            };
            if better {
                best = Some((i, j, score, t));
            }
        }
    }
    best.map(|(i, j, _, t)| (xs[i], ys[j], t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeGrid {
    pub delta_z: Vec<f64>,
    pub t3: Vec<f64>,
}

impl Default for OptimizeGrid {
    fn default() -> Self {
        OptimizeGrid { delta_z: linspace(0.01, 0.05, 11), t3: linspace(0.1, 0.99, 10) }
    }
}

/// Grid-optimized passive rate over `(delta_z, t3)`.
pub fn optimize(
    ch: &ChannelParams,
    cfg: &PassiveConfig,
    grid: &OptimizeGrid,
    spec: &IntegrationSpec,
) -> Result<KeyRateResult> {
    let xbs: Vec<Result<PhaseErrorBound>> =
        grid.t3.par_iter().map(|&t3| x_bound(ch, &PassiveConfig { t3, ..*cfg }, spec)).collect();
    let best = grid_argmax(&grid.delta_z, &grid.t3, |dz, t3| {
        let k = grid.t3.iter().position(|&t| t == t3)?;
        let xb = xbs[k].as_ref().ok()?;
        let c = PassiveConfig { delta_z: dz, t3, ..*cfg };
        rate_with_phase_error(ch, &c, 1, xb, spec).ok().map(|r| (r.rate, r))
    });
    match best {
        Some((_, _, r)) => Ok(r),
        None => Err(xbs.into_iter().find_map(|r| r.err()).unwrap_or(Error::Infeasible)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveGrid {
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub omega: Vec<f64>,
}

impl Default for ActiveGrid {
    fn default() -> Self {
        ActiveGrid { mu: linspace(0.05, 0.95, 19), nu: vec![0.005, 0.01, 0.02, 0.05, 0.1, 0.2], omega: vec![0.0] }
    }
}

fn poisson_weights(mu: f64, n_cut: usize) -> RegionWeights {
    let p: Vec<f64> = (0..=n_cut).map(|n| poisson(mu, n)).collect();
    let tail = (1.0 - p.iter().sum::<f64>()).max(0.0);
    RegionWeights { p_s: 1.0, poisson: p, tail }
}

/// Label-averaged gain and error gain of phase-randomized coherent states
/// with ideal BB84 polarizations.
pub fn active_gain(ch: &ChannelParams, basis: Basis, mu_a: f64, mu_b: f64) -> (f64, f64) {
    let labels = match basis {
        Basis::Z => [BasisLabel::ZH, BasisLabel::ZV],
        Basis::X => [BasisLabel::XPlus, BasisLabel::XMinus],
    };
    let state = |l: BasisLabel, mu| {
        let (theta, phi) = l.ideal_angles();
        BlochOutput { mu, theta_hv: theta, phi_hv: phi, phi_global: 0.0 }
    };
    let (mut q, mut qe) = (0.0, 0.0);
    for la in labels {
        for lb in labels {
            let g = pair_gain_qber(la, &state(la, mu_a), lb, &state(lb, mu_b), ch);
            q += 0.25 * g.total_q();
            qe += 0.25 * g.total_qe();
        }
    }
    (q, qe)
}

/// Active decoy MDI-QKD rate at fixed intensities `mu > nu > omega`.
pub fn active_rate_fixed(ch: &ChannelParams, mu: f64, nu: f64, omega: f64, f_ec: f64) -> Result<KeyRateResult> {
    if !(mu > nu && nu > omega && omega >= 0.0 && mu <= 1.0) {
        return Err(Error::InvalidParameter("intensities must satisfy 1 >= mu > nu > omega >= 0".into()));
    }
    let n_cut = DEFAULT_N_CUT;
    let ints = [mu, nu, omega];
    let lp = |basis| {
        let mut obs = Vec::with_capacity(9);
        for (i, &a) in ints.iter().enumerate() {
            for (j, &b) in ints.iter().enumerate() {
                let (q, qe) = active_gain(ch, basis, a, b);
                obs.push(DecoyObservation {
                    region_pair: (i, j),
                    basis,
                    q_hat: Estimate::exact(q),
                    qe_hat: Estimate::exact(qe),
                    w_a: poisson_weights(a, n_cut),
                    w_b: poisson_weights(b, n_cut),
                });
            }
        }
        build_lp(&obs, n_cut, DEFAULT_K_SIGMA)
    };
    let y11_l = lp(Basis::Z)?.min_yield(1, 1)?;
    let xb = phase_error_from_lp(&lp(Basis::X)?)?;
    let (q_z, qe_z) = active_gain(ch, Basis::Z, mu, mu);
    let e_z = if q_z > 0.0 { (qe_z / q_z).clamp(0.0, 1.0) } else { 0.0 };
    let p1 = poisson(mu, 1);
    let privacy = p1 * p1 * y11_l * (1.0 - h2(xb.e11_u.min(0.5)));
    let ec = q_z * f_ec * h2(e_z);
    let rate = if y11_l > 0.0 { (privacy - ec).max(0.0) } else { 0.0 };
    Ok(KeyRateResult {
        rate,
        rate_stderr: 0.0,
        rate_alt_ec: rate,
        distance_km: ch.l_a + ch.l_b,
        components: RateComponents {
            p_z_a: 1.0,
            p_z_b: 1.0,
            p1_a: p1,
            p1_b: p1,
            y11_l,
            e11_u: xb.e11_u,
            q_z,
            e_z,
            ec_cost: ec,
        },
        params_used: (mu, nu, f_ec),
        diagnostic: (y11_l <= 0.0).then(|| "Y11 lower bound is zero".to_string()),
    })
}

/// Active rate maximized over a coarse intensity grid.
pub fn active_rate(ch: &ChannelParams, grid: &ActiveGrid, f_ec: f64) -> Result<KeyRateResult> {
    let mut combos = Vec::new();
    for &mu in &grid.mu {
        for &nu in &grid.nu {
            for &om in &grid.omega {
                if mu > nu && nu > om {
                    combos.push((mu, nu, om));
                }
            }
        }
    }
    let results: Vec<Result<KeyRateResult>> =
        combos.par_iter().map(|&(m, n, o)| active_rate_fixed(ch, m, n, o, f_ec)).collect();
    let mut best: Option<KeyRateResult> = None;
    let mut last_err = Error::InvalidParameter("empty intensity grid".into());
    for r in results {
        match r {
            Ok(r) if best.as_ref().map_or(true, |b| r.rate > b.rate) => best = Some(r),
            Ok(_) => {}
            Err(e) => last_err = e,
        }
    }
    best.ok_or(last_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> IntegrationSpec {
        IntegrationSpec::with_points(1 << 13, 7)
    }

    #[test]
    fn bins_split_threshold() {
        let c = PassiveConfig { t3: 0.9, ..Default::default() };
        let b = c.bins();
        assert!((b[0].1 - 0.3).abs() < 1e-15 && (b[2].1 - 0.9).abs() < 1e-15);
    }

    #[test]
    fn grid_passthrough_and_ties() {
        let r = grid_argmax(&[0.02], &[0.5], |x, y| Some((x + y, ())));
        assert_eq!(r.map(|(x, y, _)| (x, y)), Some((0.02, 0.5)));
        let r = grid_argmax(&[0.01, 0.02, 0.03], &[0.1, 0.2], |_, _| Some((1.0, ())));
        assert_eq!(r.map(|(x, _, _)| x), Some(0.01));
    }

    #[test]
    fn grid_finds_stub_maximum() {
        let xs = linspace(0.01, 0.05, 11);
        let ys = linspace(0.1, 0.99, 10);
        let f = |x: f64, y: f64| -(x - 0.034).powi(2) - (y - 0.6).powi(2);
        let (x, y, _) = grid_argmax(&xs, &ys, |x, y| Some((f(x, y), ()))).unwrap();
        let brute = xs
            .iter()
            .flat_map(|&a| ys.iter().map(move |&b| (a, b)))
            .fold((0.0, 0.0, f64::MIN), |acc, (a, b)| if f(a, b) > acc.2 { (a, b, f(a, b)) } else { acc });
        assert_eq!((x, y), (brute.0, brute.1));
    }

    #[test]
    fn active_ideal_channel_has_no_z_errors() {
        let ch = ChannelParams { p_d: 0.0, ..ChannelParams::ideal(0.0) };
        let (q, qe) = active_gain(&ch, Basis::Z, 0.5, 0.5);
        assert!(q > 0.0 && qe / q < 1e-12);
    }

    #[test]
    fn active_rate_positive_short_range() {
        let r = active_rate_fixed(&ChannelParams::symmetric(20.0), 0.4, 0.05, 0.0, DEFAULT_F_EC).unwrap();
        assert!(r.rate > 0.0, "{r:?}");
    }

    #[test]
    fn one_ring_matches_passive() {
        let ch = ChannelParams::symmetric(50.0);
        let cfg = PassiveConfig::default();
        let a = passive_rate(&ch, &cfg, &quick()).unwrap();
        let b = small_ring_rate(&ch, &cfg, 1, &quick()).unwrap();
        assert_eq!(a, b);
    }
}
