//! Randomized quasi-Monte Carlo averages over postselection regions.
//!
//! An estimate is the mean of independent randomizations (replicates) of an
//! Owen-scrambled Sobol sequence; the spread of the replicate means gives
//! the standard error. Work is split into fixed-size chunks whose partial
//! sums are reduced in index order, so results do not depend on the number
//! of worker threads.

use crate::channel::{pair_gain_qber, ChannelParams, GainQber};
use crate::error::{Error, Result};
use crate::math::{mix64, poisson};
use crate::source::{region_contains, sample_in_region, to_bloch, BlochOutput, PassiveSource, Region};
use rayon::prelude::*;

const CHUNK: usize = 512;
const SOBOL_BLOCK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sequence {
    LowDiscrepancy,
    PseudoRandom,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationSpec {
    /// Total points over all replicates.
    pub n_points: usize,
    pub seed: u64,
    pub target_rel_err: f64,
    pub sequence: Sequence,
    pub replicates: usize,
}

impl Default for IntegrationSpec {
    fn default() -> Self {
        IntegrationSpec {
            n_points: 1 << 18,
            seed: 0,
            target_rel_err: 1e-3,
            sequence: Sequence::LowDiscrepancy,
            replicates: 8,
        }
    }
}

impl IntegrationSpec {
    pub fn with_points(n_points: usize, seed: u64) -> Self {
        IntegrationSpec { n_points, seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 1024 {
            return Err(Error::InvalidParameter(format!("n_points {} < 1024", self.n_points)));
        }
        if self.replicates < 8 {
            return Err(Error::InvalidParameter("at least 8 replicates required".into()));
        }
        if !(self.target_rel_err > 0.0) {
            return Err(Error::InvalidParameter("target_rel_err must be positive".into()));
        }
        Ok(())
    }

    pub fn per_replicate(&self) -> usize {
        (self.n_points / self.replicates).max(1)
    }

    pub fn replicate_seed(&self, r: usize) -> u64 {
        mix64(self.seed ^ mix64(r as u64 + 1))
    }
}

/// One uniform deviate of a seeded stream, addressed by point index and
/// dimension.
#[inline]
pub fn uniform(seq: Sequence, seed: u64, index: usize, dim: usize) -> f64 {
    match seq {
        Sequence::LowDiscrepancy => {
            let block = (index / SOBOL_BLOCK) as u64;
            let s = mix64(seed ^ block.wrapping_mul(0xA24B_AED4_963E_E407));
            sobol_burley::sample((index % SOBOL_BLOCK) as u32, dim as u32, s as u32) as f64
        }
        Sequence::PseudoRandom => {
            let h = mix64(seed ^ mix64((index as u64) << 8 | dim as u64));
            (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_used: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0, n_used: 0 }
    }
}

/// Replicate means of one observable, kept so that linear combinations of
/// observables sharing the same points get a correct standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicates {
    pub means: Vec<f64>,
    pub n_used: usize,
}

impl Replicates {
    pub fn zeros(r: usize) -> Self {
        Replicates { means: vec![0.0; r], n_used: 0 }
    }

    pub fn estimate(&self) -> Estimate {
        let r = self.means.len() as f64;
        let mean = self.means.iter().sum::<f64>() / r;
        let var = if r > 1.0 { self.means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (r - 1.0) } else { 0.0 };
        Estimate { value: mean, stderr: (var / r).sqrt(), n_used: self.n_used }
    }

    /// `self += w * other`, replicate by replicate.
    pub fn add_scaled(&mut self, w: f64, other: &Replicates) {
        for (a, b) in self.means.iter_mut().zip(&other.means) {
            *a += w * b;
        }
        self.n_used = self.n_used.max(other.n_used);
    }

    pub fn scaled(&self, w: f64) -> Replicates {
        Replicates { means: self.means.iter().map(|m| w * m).collect(), n_used: self.n_used }
    }
}

/// Replicated QMC means of a `k`-output kernel on the unit cube of `dim`
/// dimensions.
pub fn integrate_kernel<F>(spec: &IntegrationSpec, dim: usize, k: usize, f: F) -> Vec<Replicates>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let n = spec.per_replicate();
    let chunks = n.div_ceil(CHUNK);
    let jobs: Vec<(usize, usize)> = (0..spec.replicates).flat_map(|r| (0..chunks).map(move |c| (r, c))).collect();
    let partial: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(r, c)| {
            let seed = spec.replicate_seed(r);
            let mut u = vec![0.0; dim];
            let mut out = vec![0.0; k];
            let mut acc = vec![0.0; k];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                for (d, x) in u.iter_mut().enumerate() {
                    *x = uniform(spec.sequence, seed, i, d);
                }
                out.iter_mut().for_each(|x| *x = 0.0);
                f(&u, &mut out);
                for (a, o) in acc.iter_mut().zip(&out) {
                    *a += o;
                }
            }
            acc
        })
        .collect();
    let mut reps: Vec<Replicates> =
        (0..k).map(|_| Replicates { means: vec![0.0; spec.replicates], n_used: n * spec.replicates }).collect();
    for (&(r, _), acc) in jobs.iter().zip(&partial) {
        for (j, a) in acc.iter().enumerate() {
            reps[j].means[r] += a;
        }
    }
    for rep in reps.iter_mut() {
        rep.means.iter_mut().for_each(|m| *m /= n as f64);
    }
    reps
}

/// Observables of one region pair: gains and error gains per announcement
/// (index 0: `psi-`, 1: `psi+`), conditional on the pair being selected.
#[derive(Debug, Clone, PartialEq)]
pub struct PairObservables {
    pub p_pair: Estimate,
    pub q: [Replicates; 2],
    pub qe: [Replicates; 2],
}

impl PairObservables {
    pub fn q_estimates(&self) -> [Estimate; 2] {
        [self.q[0].estimate(), self.q[1].estimate()]
    }

    pub fn qe_estimates(&self) -> [Estimate; 2] {
        [self.qe[0].estimate(), self.qe[1].estimate()]
    }

    /// Gain summed over both announcements.
    pub fn q_total(&self) -> Replicates {
        let mut t = self.q[0].clone();
        t.add_scaled(1.0, &self.q[1]);
        t
    }

    pub fn qe_total(&self) -> Replicates {
        let mut t = self.qe[0].clone();
        t.add_scaled(1.0, &self.qe[1]);
        t
    }
}

fn gain_to_slice(g: &GainQber, out: &mut [f64]) {
    out[0] = g.q[0];
    out[1] = g.q[1];
    out[2] = g.qe[0];
    out[3] = g.qe[1];
}

fn collect_pair(p_pair: f64, reps: Vec<Replicates>) -> PairObservables {
    let mut it = reps.into_iter();
    let q0 = it.next().unwrap();
    let q1 = it.next().unwrap();
    let e0 = it.next().unwrap();
    let e1 = it.next().unwrap();
    PairObservables { p_pair: Estimate::exact(p_pair), q: [q0, q1], qe: [e0, e1] }
}

/// Region-pair gains by direct sampling of each region's modulated law:
/// shell law for the intensity, `sin(theta)` for the polar angle and a
/// uniform azimuth. The reference phase is averaged in closed form.
pub fn region_pair_observables(
    src: &PassiveSource,
    sa: &Region,
    sb: &Region,
    ch: &ChannelParams,
    spec: &IntegrationSpec,
) -> Result<PairObservables> {
    let pa = src.region_probability(sa);
    let pb = src.region_probability(sb);
    if pa <= 0.0 || pb <= 0.0 {
        return Err(Error::DegenerateRegion);
    }
    let reps = integrate_kernel(spec, 6, 4, |u, out| {
        let a = sample_in_region(sa, src.mu_max, [u[0], u[1], u[2]]);
        let b = sample_in_region(sb, src.mu_max, [u[3], u[4], u[5]]);
        gain_to_slice(&pair_gain_qber(sa.label, &a, sb.label, &b, ch), out);
    });
    Ok(collect_pair(pa * pb, reps))
}

/// Accepted emissions of one user inside `r`, drawn by the arcsine inverse
/// CDF followed by acceptance and membership rejection. Returns the samples
/// of each replicate.
pub fn rejection_samples(
    src: &PassiveSource,
    r: &Region,
    spec: &IntegrationSpec,
    stream: u64,
    max_draws_per_sample: usize,
) -> Result<Vec<Vec<BlochOutput>>> {
    let want = spec.per_replicate();
    (0..spec.replicates)
        .into_par_iter()
        .map(|rep| {
            let seed = mix64(spec.replicate_seed(rep) ^ mix64(stream));
            let mut kept = Vec::with_capacity(want);
            let limit = want * max_draws_per_sample;
            let mut i = 0;
            while kept.len() < want && i < limit {
                let u = |d| uniform(spec.sequence, seed, i, d);
                let arm = src.sample_arm([u(0), u(1), u(2), u(3)]);
                if u(4) < src.acceptance(&arm) {
                    if let Ok(b) = to_bloch(&arm) {
                        if region_contains(r, &b, src.mu_max) {
                            kept.push(b);
                        }
                    }
                }
                i += 1;
            }
            if kept.len() < 100.min(want) {
                return Err(Error::RegionTooSmall { accepted: kept.len() });
            }
            Ok(kept)
        })
        .collect()
}

/// Same observables as [`region_pair_observables`] from rejection samples.
/// Much slower; serves as an independent route in tests.
pub fn region_pair_observables_rejection(
    src: &PassiveSource,
    sa: &Region,
    sb: &Region,
    ch: &ChannelParams,
    spec: &IntegrationSpec,
) -> Result<PairObservables> {
    let a = rejection_samples(src, sa, spec, 1, 200_000)?;
    let b = rejection_samples(src, sb, spec, 2, 200_000)?;
    let mut reps: Vec<Replicates> = (0..4).map(|_| Replicates::zeros(spec.replicates)).collect();
    let mut out = [0.0; 4];
    for (r, (ra, rb)) in a.iter().zip(&b).enumerate() {
        let n = ra.len().min(rb.len());
        let mut acc = [0.0; 4];
        for (x, y) in ra.iter().zip(rb).take(n) {
            gain_to_slice(&pair_gain_qber(sa.label, x, sb.label, y, ch), &mut out);
            for k in 0..4 {
                acc[k] += out[k];
            }
        }
        for k in 0..4 {
            reps[k].means[r] = acc[k] / n as f64;
            reps[k].n_used += n;
        }
    }
    Ok(collect_pair(src.region_probability(sa) * src.region_probability(sb), reps))
}

/// Two routes to `<P_n^A P_m^B Y>` for a synthetic yield depending on the
/// polarization angles `(theta_A, phi_A, theta_B, phi_B)`.
///
/// `lhs` integrates the photon-number weights and the yield jointly over
/// rejection samples of both regions; `rhs` multiplies the closed-form
/// region weights by the polarization average of the yield.
pub fn factorization_check<Y>(
    src: &PassiveSource,
    sa: &Region,
    sb: &Region,
    n: usize,
    m: usize,
    yield_fn: Y,
    spec: &IntegrationSpec,
) -> Result<(Estimate, Estimate)>
where
    Y: Fn(f64, f64, f64, f64) -> f64 + Sync,
{
    let a = rejection_samples(src, sa, spec, 11, 200_000)?;
    let b = rejection_samples(src, sb, spec, 12, 200_000)?;
    let mut lhs = Replicates::zeros(spec.replicates);
    for (r, (ra, rb)) in a.iter().zip(&b).enumerate() {
        let k = ra.len().min(rb.len());
        let s: f64 = ra
            .iter()
            .zip(rb)
            .take(k)
            .map(|(x, y)| poisson(x.mu, n) * poisson(y.mu, m) * yield_fn(x.theta_hv, x.phi_hv, y.theta_hv, y.phi_hv))
            .sum();
        lhs.means[r] = s / k as f64;
        lhs.n_used += k;
    }
    let wa = src.region_weights(sa, n)?.poisson[n];
    let wb = src.region_weights(sb, m)?.poisson[m];
    let mixed = integrate_kernel(spec, 6, 1, |u, out| {
        let x = sample_in_region(sa, src.mu_max, [u[0], u[1], u[2]]);
        let y = sample_in_region(sb, src.mu_max, [u[3], u[4], u[5]]);
        out[0] = yield_fn(x.theta_hv, x.phi_hv, y.theta_hv, y.phi_hv);
    });
    let rhs = mixed[0].scaled(wa * wb);
    Ok((lhs.estimate(), rhs.estimate()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::BasisLabel;

    #[test]
    fn constant_kernel_is_exact() {
        let spec = IntegrationSpec::with_points(4096, 3);
        let e = integrate_kernel(&spec, 3, 1, |_, o| o[0] = 1.0)[0].estimate();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn reference_phase_average_is_spectral() {
        let s: f64 = crate::math::gauss_legendre(64, 0.0, crate::math::TWO_PI)
            .iter()
            .map(|&(x, w)| w * x.sin().powi(2))
            .sum::<f64>()
            / crate::math::TWO_PI;
        assert!((s - 0.5).abs() < 1e-10);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let spec = IntegrationSpec::with_points(1 << 13, 9);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                integrate_kernel(&spec, 4, 2, |u, o| {
                    o[0] = (u[0] * u[1]).exp();
                    o[1] = u[2].sin() * u[3];
                })
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn stderr_shrinks_with_points() {
        let f = |u: &[f64], o: &mut [f64]| o[0] = (u[0] + u[1] * u[2]).exp();
        let mut last = f64::INFINITY;
        for k in [12, 14, 16] {
            let spec = IntegrationSpec::with_points(1 << k, 5);
            let e = integrate_kernel(&spec, 3, 1, f)[0].estimate();
            assert!(e.stderr < last);
            last = e.stderr;
        }
    }

    #[test]
    fn separable_kernel_factorizes() {
        // f(A) g(B) over a region pair equals the product of the two
        // one-sided averages, each checked against 1-D quadrature.
        let sa = Region::z(BasisLabel::ZH, 0.05, (0.0, 0.5));
        let sb = Region::x(BasisLabel::XPlus, 0.3, 0.3, (0.2, 1.0));
        let spec = IntegrationSpec::with_points(1 << 15, 1);
        let joint = integrate_kernel(&spec, 6, 1, |u, o| {
            let a = sample_in_region(&sa, 1.0, [u[0], u[1], u[2]]);
            let b = sample_in_region(&sb, 1.0, [u[3], u[4], u[5]]);
            o[0] = a.mu * b.mu.powi(2);
        })[0]
            .estimate();
        let shell_mean = |lo: f64, hi: f64, p: i32| {
            let q = crate::math::gauss_legendre(40, lo, hi);
            let num: f64 = q.iter().map(|&(x, w)| w * x.powi(p) * x * x.exp()).sum();
            let den: f64 = q.iter().map(|&(x, w)| w * x * x.exp()).sum();
            num / den
        };
        let expect = shell_mean(0.0, 0.5, 1) * shell_mean(0.2, 1.0, 2);
        assert!((joint.value - expect).abs() < 3.0 * joint.stderr.max(1e-9));
    }
}
