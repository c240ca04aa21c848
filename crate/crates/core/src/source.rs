//! Fully passive polarization source.
//!
//! Each user interferes four phase-randomized lasers, so one emission is an
//! [`ArmSample`]: arcsine-distributed H and V intensities with uniform phases.
//! An intensity-dependent acceptance reshapes the joint intensity law to
//! `C e^{mu_H + mu_V}`, which makes photon-number weights separable from the
//! polarization average inside every sector-shaped [`Region`].

use crate::error::{Error, Result};
use crate::math::{factorial, wrap_2pi, wrap_pi, TWO_PI};
use std::f64::consts::PI;

/// Number of series terms used for intensity moments; ample for `mu <= 4`.
const SERIES_TERMS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmSample {
    pub mu_h: f64,
    pub mu_v: f64,
    pub phi_h: f64,
    pub phi_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochOutput {
    pub mu: f64,
    pub theta_hv: f64,
    pub phi_hv: f64,
    pub phi_global: f64,
}

impl BlochOutput {
    pub fn bloch_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta_hv.sin_cos();
        let (sp, cp) = self.phi_hv.sin_cos();
        [st * cp, st * sp, ct]
    }

    /// Inverse of [`to_bloch`]; the global phase is assigned to the H arm.
    pub fn to_arms(&self) -> ArmSample {
        let c = (0.5 * self.theta_hv).cos();
        let s = (0.5 * self.theta_hv).sin();
        ArmSample {
            mu_h: self.mu * c * c,
            mu_v: self.mu * s * s,
            phi_h: wrap_2pi(self.phi_global),
            phi_v: wrap_2pi(self.phi_global + self.phi_hv),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisLabel {
    ZH,
    ZV,
    XPlus,
    XMinus,
}

impl BasisLabel {
    pub fn is_z(self) -> bool {
        matches!(self, BasisLabel::ZH | BasisLabel::ZV)
    }

    /// Bit value carried by the label (`ZH`, `X+` encode 0).
    pub fn bit(self) -> u8 {
        match self {
            BasisLabel::ZH | BasisLabel::XPlus => 0,
            BasisLabel::ZV | BasisLabel::XMinus => 1,
        }
    }

    /// Pure-state Bloch angles `(theta, phi)` of the ideal BB84 state.
    pub fn ideal_angles(self) -> (f64, f64) {
        match self {
            BasisLabel::ZH => (0.0, 0.0),
            BasisLabel::ZV => (PI, 0.0),
            BasisLabel::XPlus => (0.5 * PI, 0.0),
            BasisLabel::XMinus => (0.5 * PI, PI),
        }
    }
}

/// How the Z-cap half-angle `delta_z` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZMetric {
    /// Polar angle of the point `(mu_H, mu_V)` in the intensity plane.
    #[default]
    Plane,
    /// Polar angle on the Bloch sphere.
    Bloch,
}

/// Convert a plane polar angle `atan(mu_V / mu_H)` to the Bloch polar angle.
pub fn plane_to_bloch(psi: f64) -> f64 {
    2.0 * psi.tan().max(0.0).sqrt().atan()
}

/// Convert a Bloch polar angle to the plane polar angle `atan(mu_V / mu_H)`.
pub fn bloch_to_plane(theta: f64) -> f64 {
    let t = (0.5 * theta).tan();
    (t * t).atan()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub label: BasisLabel,
    pub delta_z: f64,
    pub delta_xy: f64,
    pub delta_phi: f64,
    /// Intensity bin `(t_lo, t_hi]` in units of `mu_max`.
    pub bin: (f64, f64),
    pub z_metric: ZMetric,
    /// Ring of the Z cap, as `(inner, outer)` polar angles in `z_metric`;
    /// `None` means the whole cap `[0, delta_z]`.
    pub ring: Option<(f64, f64)>,
}

impl Region {
    pub fn z(label: BasisLabel, delta_z: f64, bin: (f64, f64)) -> Self {
        debug_assert!(label.is_z());
        Region { label, delta_z, delta_xy: 0.0, delta_phi: 0.0, bin, z_metric: ZMetric::Plane, ring: None }
    }

    pub fn x(label: BasisLabel, delta_xy: f64, delta_phi: f64, bin: (f64, f64)) -> Self {
        debug_assert!(!label.is_z());
        Region { label, delta_z: 0.0, delta_xy, delta_phi, bin, z_metric: ZMetric::Plane, ring: None }
    }

    pub fn with_metric(mut self, metric: ZMetric) -> Self {
        self.z_metric = metric;
        self
    }

    pub fn with_bin(mut self, bin: (f64, f64)) -> Self {
        self.bin = bin;
        self
    }

    /// Split a Z region into `k` rings of equal polar width.
    pub fn rings(&self, k: usize) -> Vec<Region> {
        assert!(self.label.is_z() && k >= 1);
        let (lo, hi) = self.ring.unwrap_or((0.0, self.delta_z));
        (0..k)
            .map(|i| {
                let a = lo + (hi - lo) * i as f64 / k as f64;
                let b = lo + (hi - lo) * (i + 1) as f64 / k as f64;
                Region { ring: Some((a, b)), ..*self }
            })
            .collect()
    }

    /// Bloch polar range `[theta_lo, theta_hi]` covered by the region.
    pub fn theta_range(&self) -> (f64, f64) {
        match self.label {
            BasisLabel::ZH | BasisLabel::ZV => {
                let (a, b) = self.ring.unwrap_or((0.0, self.delta_z));
                let conv = |x: f64| match self.z_metric {
                    ZMetric::Plane => plane_to_bloch(x),
                    ZMetric::Bloch => x,
                };
                let (a, b) = (conv(a), conv(b));
                if self.label == BasisLabel::ZH {
                    (a, b)
                } else {
                    (PI - b, PI - a)
                }
            }
            BasisLabel::XPlus | BasisLabel::XMinus => (0.5 * PI - self.delta_xy, 0.5 * PI + self.delta_xy),
        }
    }

    /// Azimuthal window as `(center, half_width)`; Z regions span the circle.
    pub fn phi_window(&self) -> (f64, f64) {
        match self.label {
            BasisLabel::ZH | BasisLabel::ZV => (0.0, PI),
            BasisLabel::XPlus => (0.0, self.delta_phi),
            BasisLabel::XMinus => (PI, self.delta_phi),
        }
    }

    /// Angular share of the region under the modulated law: the Bloch
    /// measure `sin(theta)/2 dtheta` times the azimuthal fraction.
    pub fn angular_mass(&self) -> f64 {
        let (a, b) = self.theta_range();
        let (_, w) = self.phi_window();
        0.5 * (a.cos() - b.cos()) * (2.0 * w / TWO_PI).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionWeights {
    pub p_s: f64,
    pub poisson: Vec<f64>,
    pub tail: f64,
}

/// `int_0^x t e^t dt`: power series near zero (free of cancellation),
/// closed form `(x - 1) e^x + 1` elsewhere.
pub fn mu_exp_moment(x: f64) -> f64 {
    if x > 0.5 {
        return (x - 1.0) * x.exp() + 1.0;
    }
    let mut s = 0.0;
    let mut term = 0.5 * x * x;
    for n in 0..SERIES_TERMS {
        s += term;
        if term.abs() <= 1e-17 * s.abs() {
            break;
        }
        term *= x * (n + 2) as f64 / ((n + 1) as f64 * (n + 3) as f64);
    }
    s
}

/// The passive source for a fixed maximum arm intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassiveSource {
    pub mu_max: f64,
    /// Acceptance normalization: `max q_mu = 1`.
    pub c: f64,
}

impl PassiveSource {
    pub fn new(mu_max: f64) -> Self {
        assert!(mu_max > 0.0);
        let x = Self::acceptance_argmax(mu_max);
        let f = (x * (mu_max - x)).sqrt() * x.exp();
        PassiveSource { mu_max, c: 1.0 / (PI * PI * f * f) }
    }

    /// Per-arm maximizer of `sqrt(mu (mu_max - mu)) e^mu`, a root of
    /// `2x^2 - (2m - 2)x - m = 0`.
    pub fn acceptance_argmax(m: f64) -> f64 {
        let b = 2.0 * m - 2.0;
        (b + (b * b + 8.0 * m).sqrt()) / 4.0
    }

    /// Joint density of one emission over `(mu_H, mu_V, phi_HV)`.
    pub fn raw_density(&self, s: &ArmSample) -> Result<f64> {
        let m = self.mu_max;
        for mu in [s.mu_h, s.mu_v] {
            if mu <= 0.0 || mu >= m {
                return Err(Error::NonIntegrablePoint(mu));
            }
        }
        let a = (s.mu_h * (m - s.mu_h)).sqrt();
        let b = (s.mu_v * (m - s.mu_v)).sqrt();
        Ok(1.0 / (PI * PI * a * b * TWO_PI))
    }

    /// Inverse-CDF map from four uniforms to an emission.
    pub fn sample_arm(&self, u: [f64; 4]) -> ArmSample {
        let arc = |x: f64| {
            let s = (0.5 * PI * x).sin();
            self.mu_max * s * s
        };
        ArmSample { mu_h: arc(u[0]), mu_v: arc(u[1]), phi_h: wrap_2pi(TWO_PI * u[2]), phi_v: wrap_2pi(TWO_PI * u[3]) }
    }

    /// Intensity-dependent keep probability `q_mu`.
    pub fn acceptance(&self, s: &ArmSample) -> f64 {
        let m = self.mu_max;
        let a = (s.mu_h.clamp(0.0, m) * (m - s.mu_h.clamp(0.0, m))).sqrt();
        let b = (s.mu_v.clamp(0.0, m) * (m - s.mu_v.clamp(0.0, m))).sqrt();
        (self.c * PI * PI * a * b * (s.mu_h + s.mu_v).exp()).min(1.0)
    }

    /// Fraction of emitted signals kept by the acceptance step.
    pub fn accepted_mass(&self) -> f64 {
        let e = self.mu_max.exp() - 1.0;
        self.c * e * e
    }

    /// Probability per emitted signal of landing in `r` and being accepted.
    pub fn region_probability(&self, r: &Region) -> f64 {
        let (a, b) = (r.bin.0 * self.mu_max, r.bin.1 * self.mu_max);
        self.c * (mu_exp_moment(b) - mu_exp_moment(a)) * r.angular_mass()
    }

    /// Photon-number weights of a region under the modulated law.
    pub fn region_weights(&self, r: &Region, n_cut: usize) -> Result<RegionWeights> {
        let p_s = self.region_probability(r);
        if p_s <= 0.0 || !p_s.is_finite() {
            return Err(Error::DegenerateRegion);
        }
        Ok(bin_weights(r.bin.0 * self.mu_max, r.bin.1 * self.mu_max, n_cut, p_s))
    }

    /// Probability that one user's emission falls in either X window
    /// (any intensity the arms can produce).
    pub fn x_window_probability(&self, delta_xy: f64, delta_phi: f64) -> f64 {
        let m = self.mu_max;
        let radial = |theta: f64| {
            let c2 = (0.5 * theta).cos().powi(2);
            let s2 = 1.0 - c2;
            let lim = m / c2.max(s2);
            0.5 * theta.sin() * mu_exp_moment(lim)
        };
        let lo = 0.5 * PI - delta_xy;
        let hi = 0.5 * PI + delta_xy;
        let ang: f64 = crate::math::gauss_legendre(48, lo, 0.5 * PI)
            .into_iter()
            .chain(crate::math::gauss_legendre(48, 0.5 * PI, hi))
            .map(|(t, w)| w * radial(t))
            .sum();
        self.c * ang * 2.0 * (2.0 * delta_phi / TWO_PI)
    }

    /// Joint X-basis retained fraction of emitted signal pairs.
    pub fn x_retained_fraction(&self, delta_xy: f64, delta_phi: f64) -> f64 {
        self.x_window_probability(delta_xy, delta_phi).powi(2)
    }
}

/// Photon-number weights for an intensity shell `(a, b]` whose radial law
/// is `mu e^mu`; `p_s` is passed through unchanged.
pub fn bin_weights(a: f64, b: f64, n_cut: usize, p_s: f64) -> RegionWeights {
    let norm = mu_exp_moment(b) - mu_exp_moment(a);
    let poisson: Vec<f64> = (0..=n_cut)
        .map(|n| {
            let k = (n + 2) as i32;
            (b.powi(k) - a.powi(k)) / ((n + 2) as f64 * factorial(n)) / norm
        })
        .collect();
    let tail = (1.0 - poisson.iter().sum::<f64>()).max(0.0);
    RegionWeights { p_s, poisson, tail }
}

pub fn to_bloch(s: &ArmSample) -> Result<BlochOutput> {
    let mu = s.mu_h + s.mu_v;
    if mu <= 0.0 {
        return Err(Error::VacuumSample);
    }
    Ok(BlochOutput {
        mu,
        theta_hv: 2.0 * (s.mu_h / mu).sqrt().min(1.0).acos(),
        phi_hv: wrap_2pi(s.phi_v - s.phi_h),
        phi_global: s.phi_h,
    })
}

/// Region membership: closed angular bounds, half-open intensity bin.
pub fn region_contains(r: &Region, b: &BlochOutput, mu_max: f64) -> bool {
    let (lo, hi) = r.theta_range();
    if b.theta_hv < lo || b.theta_hv > hi {
        return false;
    }
    let (c, w) = r.phi_window();
    if w < PI && wrap_pi(b.phi_hv - c).abs() > w {
        return false;
    }
    b.mu > r.bin.0 * mu_max && b.mu <= r.bin.1 * mu_max
}

/// Inverse CDF of the shell law `mu e^mu` on `[a, b]`.
pub fn sample_shell(u: f64, a: f64, b: f64) -> f64 {
    let ga = mu_exp_moment(a);
    let target = ga + u * (mu_exp_moment(b) - ga);
    let (mut lo, mut hi) = (a, b);
    // G(x) ~ x^2/2 (1 + 2x/3) for small x.
    let mut x = ((2.0 * target).sqrt() / (1.0 + (2.0 * target).sqrt() / 3.0)).clamp(a, b);
    for _ in 0..100 {
        let g = mu_exp_moment(x) - target;
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = x * x.exp();
        let mut next = if d > 0.0 { x - g / d } else { 0.5 * (lo + hi) };
        if !(next >= lo && next <= hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-14 * b.max(1e-300) {
            return next;
        }
        x = next;
    }
    x
}

/// Inverse CDF of the polar law `sin(theta)` on `[lo, hi]`.
pub fn sample_polar(u: f64, lo: f64, hi: f64) -> f64 {
    let (cl, ch) = (lo.cos(), hi.cos());
    (cl - u * (cl - ch)).clamp(-1.0, 1.0).acos()
}

/// Map three uniforms to a point of `r` distributed by the modulated law.
pub fn sample_in_region(r: &Region, mu_max: f64, u: [f64; 3]) -> BlochOutput {
    let mu = sample_shell(u[0], r.bin.0 * mu_max, r.bin.1 * mu_max);
    let (lo, hi) = r.theta_range();
    let theta = sample_polar(u[1], lo, hi);
    let (c, w) = r.phi_window();
    BlochOutput { mu, theta_hv: theta, phi_hv: wrap_2pi(c + w * (2.0 * u[2] - 1.0)), phi_global: 0.0 }
}
