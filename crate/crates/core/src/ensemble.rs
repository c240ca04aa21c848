//! Single-photon polarization ensembles and a two-photon Fock-level relay.
//!
//! Used to compare the yields of region-averaged ("mixed") input states
//! against exact BB84 inputs through the same lossy, rotated channel.

use num_complex::Complex64 as C;

use crate::channel::{PSI_MINUS_PATTERNS, PSI_PLUS_PATTERNS};
use crate::source::BasisLabel;

pub type Qubit = [C; 2];
pub type Mat4 = [[C; 4]; 4];

pub fn qubit(theta: f64, phi: f64) -> Qubit {
    [C::new((theta / 2.0).cos(), 0.0), C::from_polar((theta / 2.0).sin(), phi)]
}

/// The state orthogonal to `qubit(theta, phi)`.
pub fn qubit_perp(theta: f64, phi: f64) -> Qubit {
    qubit(std::f64::consts::PI - theta, phi + std::f64::consts::PI)
}

fn kron(a: &Qubit, b: &Qubit) -> [C; 4] {
    [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]
}

fn outer(v: &[C; 4]) -> Mat4 {
    let mut m = [[C::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = v[i] * v[j].conj();
        }
    }
    m
}

/// Sum of the four product projectors built from each user's tilted
/// H/V pair, with Alice's phase fixed to zero and Bob's set to `phi`.
pub fn projector_sum(theta_a: f64, theta_b: f64, phi: f64) -> Mat4 {
    let a = [qubit(theta_a, 0.0), qubit_perp(theta_a, 0.0)];
    let b = [qubit(theta_b, phi), qubit_perp(theta_b, phi)];
    let mut s = [[C::new(0.0, 0.0); 4]; 4];
    for x in &a {
        for y in &b {
            let p = outer(&kron(x, y));
            for i in 0..4 {
                for j in 0..4 {
                    s[i][j] += p[i][j];
                }
            }
        }
    }
    s
}

/// An SU(2) polarization rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Su2(pub [[C; 2]; 2]);

impl Su2 {
    pub fn identity() -> Self {
        Self::from_axis_angle([0.0, 0.0, 1.0], 0.0)
    }

    /// Rotation by `angle` on the Bloch sphere about a unit `axis`.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let [x, y, z] = axis.map(|v| v / n);
        let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
        Su2([[C::new(c, -z * s), C::new(-y * s, -x * s)], [C::new(y * s, -x * s), C::new(c, z * s)]])
    }

    pub fn apply(&self, q: &Qubit) -> Qubit {
        let m = &self.0;
        [m[0][0] * q[0] + m[0][1] * q[1], m[1][0] * q[0] + m[1][1] * q[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockChannel {
    pub rot_a: Su2,
    pub rot_b: Su2,
    pub eta_a: f64,
    pub eta_b: f64,
    pub p_d: f64,
}

const MODES: usize = 8;

/// Output-mode amplitudes of one photon: detectors `1H, 1V, 2H, 2V`
/// followed by the H/V loss modes of both fibers.
fn photon_modes(q: &Qubit, rot: &Su2, eta: f64, from_b: bool) -> [C; MODES] {
    let r = rot.apply(q);
    let t = (eta / 2.0).sqrt();
    let l = (1.0 - eta).sqrt();
    let sign = if from_b { -1.0 } else { 1.0 };
    let mut out = [C::new(0.0, 0.0); MODES];
    for p in 0..2 {
        out[p] = r[p] * t;
        out[2 + p] = r[p] * t * sign;
        out[if from_b { 6 } else { 4 } + p] = r[p] * l;
    }
    out
}

/// Click-pattern probabilities for one photon from each user.
pub fn two_photon_click_probs(ch: &FockChannel, a: &Qubit, b: &Qubit) -> [f64; 16] {
    let u = photon_modes(a, &ch.rot_a, ch.eta_a, false);
    let v = photon_modes(b, &ch.rot_b, ch.eta_b, true);
    let mut occupied = [0.0; 16];
    for p in 0..MODES {
        for q in p..MODES {
            let prob = if p == q { 2.0 * (u[p] * v[p]).norm_sqr() } else { (u[p] * v[q] + u[q] * v[p]).norm_sqr() };
            let mask = [p, q].iter().filter(|&&k| k < 4).fold(0u8, |m, &k| m | (1 << k));
            occupied[mask as usize] += prob;
        }
    }
    let mut out = [0.0; 16];
    for (lit, &pl) in occupied.iter().enumerate() {
        if pl == 0.0 {
            continue;
        }
        for (pat, o) in out.iter_mut().enumerate() {
            if pat & lit != lit {
                continue;
            }
            let dark = (0..4)
                .filter(|d| lit & (1 << d) == 0)
                .map(|d| if pat & (1 << d) != 0 { ch.p_d } else { 1.0 - ch.p_d })
                .product::<f64>();
            *o += pl * dark;
        }
    }
    out
}

fn success(probs: &[f64; 16]) -> f64 {
    PSI_MINUS_PATTERNS.iter().chain(PSI_PLUS_PATTERNS.iter()).map(|&p| probs[p as usize]).sum()
}

/// A weighted set of pure states standing for one encoded label.
pub type Ensemble = Vec<(f64, Qubit)>;

pub fn perfect_state(label: BasisLabel) -> Ensemble {
    let (t, p) = label.ideal_angles();
    vec![(1.0, qubit(t, p))]
}

/// Dephased Z state tilted by `theta` from its pole: an equal mixture of
/// the relative phases `phi` and `phi + pi`.
pub fn mixed_z_state(label: BasisLabel, theta: f64, phi: f64) -> Ensemble {
    let t = if label == BasisLabel::ZH { theta } else { std::f64::consts::PI - theta };
    vec![(0.5, qubit(t, phi)), (0.5, qubit(t, phi + std::f64::consts::PI))]
}

/// Z-basis single-photon yield and error yield, averaged over the four
/// label pairs; `state` maps each label to its ensemble.
pub fn z_single_photon_yields(
    ch: &FockChannel,
    state_a: &dyn Fn(BasisLabel) -> Ensemble,
    state_b: &dyn Fn(BasisLabel) -> Ensemble,
) -> (f64, f64) {
    let (mut y, mut ey) = (0.0, 0.0);
    for la in [BasisLabel::ZH, BasisLabel::ZV] {
        for lb in [BasisLabel::ZH, BasisLabel::ZV] {
            let mut p = 0.0;
            for (wa, qa) in state_a(la) {
                for (wb, qb) in state_b(lb) {
                    p += wa * wb * success(&two_photon_click_probs(ch, &qa, &qb));
                }
            }
            y += 0.25 * p;
            if la.bit() == lb.bit() {
                ey += 0.25 * p;
            }
        }
    }
    (y, ey)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ideal(eta: f64) -> FockChannel {
        FockChannel { rot_a: Su2::identity(), rot_b: Su2::identity(), eta_a: eta, eta_b: eta, p_d: 0.0 }
    }

    #[test]
    fn hv_inputs_always_herald() {
        let ch = ideal(1.0);
        let p = two_photon_click_probs(&ch, &qubit(0.0, 0.0), &qubit(std::f64::consts::PI, 0.0));
        assert!((success(&p) - 1.0).abs() < 1e-12);
        let p = two_photon_click_probs(&ch, &qubit(0.0, 0.0), &qubit(0.0, 0.0));
        assert!(success(&p).abs() < 1e-12);
    }

    #[test]
    fn ideal_z_yields() {
        let ch = ideal(0.3);
        let (y, ey) = z_single_photon_yields(&ch, &perfect_state, &perfect_state);
        assert!((y - 0.5 * 0.09).abs() < 1e-12);
        assert!(ey.abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn mixed_error_yield_dominates(ax in prop::array::uniform3(-1.0f64..1.0), bx in prop::array::uniform3(-1.0f64..1.0),
                                       ga in -0.5f64..0.5, gb in -0.5f64..0.5, ta in 0.0f64..0.6, tb in 0.0f64..0.6,
                                       phi in 0.0f64..6.28, eta in 0.01f64..1.0, pd in 0.0f64..1e-3) {
            prop_assume!(ax.iter().map(|v| v * v).sum::<f64>() > 1e-3 && bx.iter().map(|v| v * v).sum::<f64>() > 1e-3);
            let ch = FockChannel {
                rot_a: Su2::from_axis_angle(ax, ga),
                rot_b: Su2::from_axis_angle(bx, gb),
                eta_a: eta, eta_b: eta, p_d: pd,
            };
            let (yp, ep) = z_single_photon_yields(&ch, &perfect_state, &perfect_state);
            let (ym, em) = z_single_photon_yields(&ch, &|l| mixed_z_state(l, ta, 0.0), &|l| mixed_z_state(l, tb, phi));
            prop_assert!((ym - yp).abs() < 1e-12);
            prop_assert!(em >= ep - 1e-15);
        }

        #[test]
        fn click_probs_normalized(ta in 0.0f64..3.14, pa in 0.0f64..6.28, tb in 0.0f64..3.14,
                                  pb in 0.0f64..6.28, eta in 0.0f64..1.0, pd in 0.0f64..0.1,
                                  ang in 0.0f64..3.0) {
            let ch = FockChannel {
                rot_a: Su2::from_axis_angle([1.0, 0.3, 0.2], ang),
                rot_b: Su2::from_axis_angle([0.1, 1.0, -0.4], -ang),
                eta_a: eta, eta_b: 1.0 - eta, p_d: pd,
            };
            let s: f64 = two_photon_click_probs(&ch, &qubit(ta, pa), &qubit(tb, pb)).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn projectors_resolve_identity(ta in 0.0f64..3.2, tb in 0.0f64..3.2, phi in 0.0f64..6.3) {
            let s = projector_sum(ta, tb, phi);
            for (i, row) in s.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((v - C::new(want, 0.0)).norm() < 1e-12);
                }
            }
        }
    }
}
