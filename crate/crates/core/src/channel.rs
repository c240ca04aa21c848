//! Fiber and relay physics for two-user MDI-QKD.
//!
//! Each user's polarization state is rotated by a fixed misalignment,
//! attenuated, split back into H and V legs, and interfered on a 50:50
//! beam splitter per polarization. Four threshold detectors
//! `1H, 1V, 2H, 2V` (bits 0..3 of a click pattern) click independently.

use crate::error::{Error, Result};
use crate::source::{BasisLabel, BlochOutput};

pub const D1H: usize = 0;
pub const D1V: usize = 1;
pub const D2H: usize = 2;
pub const D2V: usize = 3;

/// Click patterns announced as `psi-`: `(1H, 2V)` and `(1V, 2H)`.
pub const PSI_MINUS_PATTERNS: [u8; 2] = [(1 << D1H) | (1 << D2V), (1 << D1V) | (1 << D2H)];
/// Click patterns announced as `psi+`: `(1H, 1V)` and `(2H, 2V)`.
pub const PSI_PLUS_PATTERNS: [u8; 2] = [(1 << D1H) | (1 << D1V), (1 << D2H) | (1 << D2V)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Misalignment {
    pub axis: [f64; 3],
    pub angle: f64,
}

impl Misalignment {
    pub const NONE: Misalignment = Misalignment { axis: [0.0, 1.0, 0.0], angle: 0.0 };

    /// Rotation about the Bloch y axis flipping a pole with probability `e`.
    pub fn about_y(e: f64, sign: f64) -> Self {
        Misalignment { axis: [0.0, 1.0, 0.0], angle: sign * 2.0 * e.sqrt().asin() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub alpha_db_per_km: f64,
    pub l_a: f64,
    pub l_b: f64,
    pub eta_d: f64,
    pub p_d: f64,
    pub misalign_a: Misalignment,
    pub misalign_b: Misalignment,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            alpha_db_per_km: 0.2,
            l_a: 0.0,
            l_b: 0.0,
            eta_d: 1.0,
            p_d: 1e-6,
            misalign_a: Misalignment::about_y(0.005, 1.0),
            misalign_b: Misalignment::about_y(0.005, -1.0),
        }
    }
}

impl ChannelParams {
    /// Relay in the middle of a link of `distance_km`.
    pub fn symmetric(distance_km: f64) -> Self {
        ChannelParams { l_a: 0.5 * distance_km, l_b: 0.5 * distance_km, ..Default::default() }
    }

    pub fn ideal(distance_km: f64) -> Self {
        ChannelParams {
            p_d: 0.0,
            misalign_a: Misalignment::NONE,
            misalign_b: Misalignment::NONE,
            ..Self::symmetric(distance_km)
        }
    }

    pub fn eta_a(&self) -> f64 {
        transmittance(self.alpha_db_per_km, self.l_a, self.eta_d)
    }

    pub fn eta_b(&self) -> f64 {
        transmittance(self.alpha_db_per_km, self.l_b, self.eta_d)
    }
}

pub fn transmittance(alpha_db_per_km: f64, l_km: f64, eta_d: f64) -> f64 {
    10f64.powf(-alpha_db_per_km * l_km / 10.0) * eta_d
}

/// Rodrigues rotation of a Bloch vector about a unit axis.
pub fn rotate_bloch(s: [f64; 3], axis: [f64; 3], gamma: f64) -> Result<[f64; 3]> {
    for v in [s, axis] {
        let n = norm(v);
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidBlochVector(n));
        }
    }
    Ok(rotate_unchecked(s, axis, gamma))
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn rotate_unchecked(s: [f64; 3], n: [f64; 3], gamma: f64) -> [f64; 3] {
    let (sg, cg) = gamma.sin_cos();
    let cross = [n[1] * s[2] - n[2] * s[1], n[2] * s[0] - n[0] * s[2], n[0] * s[1] - n[1] * s[0]];
    let dot = n[0] * s[0] + n[1] * s[1] + n[2] * s[2];
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = cg * s[i] + sg * cross[i] + (1.0 - cg) * dot * n[i];
    }
    out
}

/// 50:50 beam-splitter output intensities `(mu_c, mu_d)`.
pub fn interfere(mu1: f64, phi1: f64, mu2: f64, phi2: f64) -> (f64, f64) {
    let mean = 0.5 * (mu1 + mu2);
    let cross = (mu1 * mu2).sqrt() * (phi1 - phi2).sin();
    ((mean - cross).max(0.0), mean + cross)
}

/// Threshold-detector click probability.
pub fn click_prob(lambda: f64, p_d: f64) -> f64 {
    1.0 - (1.0 - p_d) * (-lambda).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bsm {
    PsiMinus,
    PsiPlus,
    Fail,
}

pub fn classify(pattern: u8) -> Bsm {
    if PSI_MINUS_PATTERNS.contains(&pattern) {
        Bsm::PsiMinus
    } else if PSI_PLUS_PATTERNS.contains(&pattern) {
        Bsm::PsiPlus
    } else {
        Bsm::Fail
    }
}

/// Field of one user on arrival at the relay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivingField {
    pub mu_h: f64,
    pub mu_v: f64,
    /// Relative V-to-H phase after the polarization rotation.
    pub phi_hv: f64,
}

/// Rotate, decompose into H/V legs and attenuate one emission.
pub fn propagate(b: &BlochOutput, mis: &Misalignment, eta: f64) -> ArrivingField {
    let s = if mis.angle == 0.0 { b.bloch_vector() } else { rotate_unchecked(b.bloch_vector(), mis.axis, mis.angle) };
    ArrivingField {
        mu_h: eta * b.mu * 0.5 * (1.0 + s[2]),
        mu_v: eta * b.mu * 0.5 * (1.0 - s[2]),
        phi_hv: s[1].atan2(s[0]),
    }
}

/// Mean photon numbers at `1H, 1V, 2H, 2V` for reference phase `phi_r`.
pub fn detector_intensities(a: &ArrivingField, b: &ArrivingField, phi_r: f64) -> [f64; 4] {
    let (h1, h2) = interfere(a.mu_h, phi_r, b.mu_h, 0.0);
    let (v1, v2) = interfere(a.mu_v, phi_r + a.phi_hv - b.phi_hv, b.mu_v, 0.0);
    [h1, v1, h2, v2]
}

/// Probabilities of all 16 click patterns for given detector intensities.
pub fn pattern_probs(lambda: [f64; 4], p_d: f64) -> [f64; 16] {
    let click: Vec<f64> = lambda.iter().map(|&l| click_prob(l, p_d)).collect();
    let mut out = [0.0; 16];
    for (pat, o) in out.iter_mut().enumerate() {
        *o = (0..4).map(|d| if pat >> d & 1 == 1 { click[d] } else { 1.0 - click[d] }).product();
    }
    out
}

pub fn pair_event_probs(a: &ArrivingField, b: &ArrivingField, p_d: f64, phi_r: f64) -> [f64; 16] {
    pattern_probs(detector_intensities(a, b, phi_r), p_d)
}

/// Click-pattern probabilities averaged over a uniform reference phase.
///
/// Every pattern probability is a signed sum of `exp(-sum of detector
/// intensities)` over detector subsets; each such term is a sinusoid in the
/// exponent, whose circular mean is `e^{-K} I0(R)`.
pub fn pair_event_probs_avg(a: &ArrivingField, b: &ArrivingField, p_d: f64) -> [f64; 16] {
    let table = mean_exp_table(a, b, |_| true);
    let mut out = [0.0; 16];
    for (pat, o) in out.iter_mut().enumerate() {
        *o = pattern_from_table(pat as u8, &table, 1.0 - p_d);
    }
    out
}

/// Phase-averaged probabilities of the four announced patterns, in the
/// order of [`PSI_MINUS_PATTERNS`] then [`PSI_PLUS_PATTERNS`].
pub fn heralded_probs_avg(a: &ArrivingField, b: &ArrivingField, p_d: f64) -> [f64; 4] {
    // Masks reachable from the four announced patterns.
    let table = mean_exp_table(a, b, |s| s.count_ones() >= 2 && s != 0b0101 && s != 0b1010);
    let q = 1.0 - p_d;
    let [m0, m1] = PSI_MINUS_PATTERNS;
    let [p0, p1] = PSI_PLUS_PATTERNS;
    [m0, m1, p0, p1].map(|p| pattern_from_table(p, &table, q))
}

fn mean_exp_table(a: &ArrivingField, b: &ArrivingField, needed: impl Fn(u8) -> bool) -> [f64; 16] {
    let base_h = 0.5 * (a.mu_h + b.mu_h);
    let base_v = 0.5 * (a.mu_v + b.mu_v);
    let g = (a.mu_h * b.mu_h).sqrt();
    let h = (a.mu_v * b.mu_v).sqrt();
    let cos_d = (a.phi_hv - b.phi_hv).cos();
    let mut mean_exp = [0.0; 16];
    for (s, m) in mean_exp.iter_mut().enumerate() {
        if !needed(s as u8) {
            continue;
        }
        let has = |d: usize| (s >> d & 1) as f64;
        let k = base_h * (has(D1H) + has(D2H)) + base_v * (has(D1V) + has(D2V));
        let u = g * (has(D2H) - has(D1H));
        let v = h * (has(D2V) - has(D1V));
        let r = (u * u + v * v + 2.0 * u * v * cos_d).max(0.0).sqrt();
        *m = crate::math::mean_exp_sin(k, r);
    }
    mean_exp
}

fn pattern_from_table(clicks: u8, mean_exp: &[f64; 16], q: f64) -> f64 {
    let silent = !clicks & 0xF;
    let mut sum = 0.0;
    // Subsets t of the clicking detectors, from inclusion-exclusion.
    let mut t = clicks;
    loop {
        let sign = if t.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        let n = (t | silent).count_ones() as i32;
        sum += sign * q.powi(n) * mean_exp[(t | silent) as usize];
        if t == 0 {
            break;
        }
        t = (t - 1) & clicks;
    }
    sum.max(0.0)
}

/// Reference-phase average by an `n`-node Gauss-Legendre rule on `[0, 2pi)`.
pub fn pair_event_probs_quadrature(a: &ArrivingField, b: &ArrivingField, p_d: f64, n: usize) -> [f64; 16] {
    let mut out = [0.0; 16];
    for (x, w) in crate::math::gauss_legendre(n, 0.0, crate::math::TWO_PI) {
        let p = pair_event_probs(a, b, p_d, x);
        for i in 0..16 {
            out[i] += w * p[i] / crate::math::TWO_PI;
        }
    }
    out
}

/// Gains and error gains per announcement (index 0: `psi-`, 1: `psi+`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GainQber {
    pub q: [f64; 2],
    pub qe: [f64; 2],
}

impl GainQber {
    pub fn total_q(&self) -> f64 {
        self.q[0] + self.q[1]
    }

    pub fn total_qe(&self) -> f64 {
        self.qe[0] + self.qe[1]
    }
}

/// Sifted gains and error gains of one emission pair.
///
/// Mismatched bases are discarded and return zero. In Z both announcements
/// imply anti-correlated bits; in X `psi-` implies anti-correlation and
/// `psi+` correlation.
pub fn sifted_gain(la: BasisLabel, lb: BasisLabel, probs: &[f64; 16]) -> GainQber {
    let [m0, m1] = PSI_MINUS_PATTERNS;
    let [p0, p1] = PSI_PLUS_PATTERNS;
    sifted_from_heralded(la, lb, [m0, m1, p0, p1].map(|p| probs[p as usize]))
}

fn sifted_from_heralded(la: BasisLabel, lb: BasisLabel, h: [f64; 4]) -> GainQber {
    if la.is_z() != lb.is_z() {
        return GainQber::default();
    }
    let qm = h[0] + h[1];
    let qp = h[2] + h[3];
    let equal = la.bit() == lb.bit();
    let (err_m, err_p) = if la.is_z() { (equal, equal) } else { (equal, !equal) };
    GainQber { q: [qm, qp], qe: [if err_m { qm } else { 0.0 }, if err_p { qp } else { 0.0 }] }
}

pub fn pair_gain_qber(
    la: BasisLabel,
    a: &BlochOutput,
    lb: BasisLabel,
    b: &BlochOutput,
    ch: &ChannelParams,
) -> GainQber {
    if la.is_z() != lb.is_z() {
        return GainQber::default();
    }
    let fa = propagate(a, &ch.misalign_a, ch.eta_a());
    let fb = propagate(b, &ch.misalign_b, ch.eta_b());
    sifted_from_heralded(la, lb, heralded_probs_avg(&fa, &fb, ch.p_d))
}
