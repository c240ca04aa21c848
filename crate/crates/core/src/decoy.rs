//! Bipartite decoy-state bounds.
//!
//! Each observation ties a measured gain (and error gain) to the unknown
//! photon-number yields through the two users' Poisson weights. Terms
//! beyond `n_cut` photons per side are absorbed by a one-sided slack,
//! and every observation is widened by `k_sigma` standard errors.

use crate::error::{Error, Result};
use crate::integrate::Estimate;
use crate::lp::{LinearProgram, Sense};
use crate::source::RegionWeights;

pub const DEFAULT_N_CUT: usize = 6;
pub const DEFAULT_K_SIGMA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Z,
    X,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoyObservation {
    pub region_pair: (usize, usize),
    pub basis: Basis,
    pub q_hat: Estimate,
    pub qe_hat: Estimate,
    pub w_a: RegionWeights,
    pub w_b: RegionWeights,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YieldBounds {
    pub y11_l: f64,
    pub ey11_u: f64,
    pub e11_u: f64,
}

/// A decoy LP together with its variable layout. Variables are stored in
/// units of `scale` so that tiny gains stay well conditioned.
#[derive(Debug, Clone)]
pub struct DecoyLp {
    pub lp: LinearProgram,
    pub n_cut: usize,
    pub basis: Basis,
    pub scale: f64,
}

impl DecoyLp {
    pub fn y_index(&self, n: usize, m: usize) -> usize {
        n * (self.n_cut + 1) + m
    }

    pub fn ey_index(&self, n: usize, m: usize) -> Option<usize> {
        match self.basis {
            Basis::Z => None,
            Basis::X => Some((self.n_cut + 1).pow(2) + self.y_index(n, m)),
        }
    }

    fn optimize(&self, var: usize, maximize: bool) -> Result<f64> {
        let mut lp = self.lp.clone();
        lp.set_objective(var, maximize);
        Ok(lp.solve()?.objective * self.scale)
    }

    pub fn min_yield(&self, n: usize, m: usize) -> Result<f64> {
        Ok(self.optimize(self.y_index(n, m), false)?.clamp(0.0, 1.0))
    }

    pub fn max_yield(&self, n: usize, m: usize) -> Result<f64> {
        Ok(self.optimize(self.y_index(n, m), true)?.clamp(0.0, 1.0))
    }

    pub fn max_error_yield(&self, n: usize, m: usize) -> Result<f64> {
        let v = self
            .ey_index(n, m)
            .ok_or_else(|| Error::InvalidParameter("error yields exist only in the X system".into()))?;
        Ok(self.optimize(v, true)?.clamp(0.0, 1.0))
    }
}

fn tail_slack(wa: &RegionWeights, wb: &RegionWeights, n_cut: usize) -> f64 {
    let sa: f64 = wa.poisson.iter().take(n_cut + 1).sum();
    let sb: f64 = wb.poisson.iter().take(n_cut + 1).sum();
    (1.0 - sa * sb).max(0.0)
}

/// Assemble the LP of one basis from its observations.
pub fn build_lp(obs: &[DecoyObservation], n_cut: usize, k_sigma: f64) -> Result<DecoyLp> {
    let basis = obs.first().map(|o| o.basis).ok_or_else(|| Error::InvalidParameter("no observations".into()))?;
    if obs.iter().any(|o| o.basis != basis) {
        return Err(Error::InvalidParameter("observations mix bases".into()));
    }
    for o in obs {
        if o.w_a.poisson.len() <= n_cut || o.w_b.poisson.len() <= n_cut {
            return Err(Error::InvalidParameter("weights shorter than n_cut".into()));
        }
    }
    let k = n_cut + 1;
    let with_e = basis == Basis::X;
    let mut names = Vec::new();
    for prefix in if with_e { &["Y", "eY"][..] } else { &["Y"][..] } {
        for n in 0..k {
            for m in 0..k {
                names.push(format!("{prefix}_{n}_{m}"));
            }
        }
    }
    let scale = obs.iter().map(|o| o.q_hat.value + k_sigma * o.q_hat.stderr).fold(0.0f64, f64::max).clamp(1e-300, 1.0);
    let mut lp = LinearProgram::new(names);
    lp.upper.iter_mut().take(k * k).for_each(|u| *u = 1.0 / scale);
    let add_pair = |lp: &mut LinearProgram, offset: usize, o: &DecoyObservation, e: &Estimate| {
        let coeffs: Vec<(usize, f64)> = (0..k)
            .flat_map(|n| (0..k).map(move |m| (n, m)))
            .map(|(n, m)| (offset + n * k + m, o.w_a.poisson[n] * o.w_b.poisson[m]))
            .filter(|&(_, c)| c > 0.0)
            .collect();
        let tail = tail_slack(&o.w_a, &o.w_b, n_cut);
        let hi = (e.value + k_sigma * e.stderr) / scale;
        let lo = (e.value - k_sigma * e.stderr - tail) / scale;
        lp.add(coeffs.clone(), Sense::Le, hi);
        if lo > 0.0 {
            lp.add(coeffs, Sense::Ge, lo);
        }
    };
    for o in obs {
        add_pair(&mut lp, 0, o, &o.q_hat);
        if with_e {
            add_pair(&mut lp, k * k, o, &o.qe_hat);
        }
    }
    if with_e {
        for j in 0..k * k {
            lp.add(vec![(k * k + j, 1.0), (j, -1.0)], Sense::Le, 0.0);
        }
    }
    Ok(DecoyLp { lp, n_cut, basis, scale })
}

/// Single-photon bounds from the Z and X systems.
pub fn solve_bounds(z: &DecoyLp, x: &DecoyLp) -> Result<YieldBounds> {
    let y11_l = z.min_yield(1, 1)?;
    let y11_lx = x.min_yield(1, 1)?;
    let ey11_u = x.max_error_yield(1, 1)?;
    let e11_u = if y11_lx > 0.0 { (ey11_u / y11_lx).min(1.0) } else { 1.0 };
    Ok(YieldBounds { y11_l, ey11_u, e11_u })
}

/// Forward model: observations generated from known yields.
pub fn forward_observation(
    basis: Basis,
    pair: (usize, usize),
    wa: &RegionWeights,
    wb: &RegionWeights,
    y: &dyn Fn(usize, usize) -> (f64, f64),
) -> DecoyObservation {
    let (mut q, mut qe) = (0.0, 0.0);
    for (n, a) in wa.poisson.iter().enumerate() {
        for (m, b) in wb.poisson.iter().enumerate() {
            let (yy, ey) = y(n, m);
            q += a * b * yy;
            qe += a * b * ey;
        }
    }
    DecoyObservation {
        region_pair: pair,
        basis,
        q_hat: Estimate::exact(q),
        qe_hat: Estimate::exact(qe),
        w_a: wa.clone(),
        w_b: wb.clone(),
    }
}
