//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Lines go straight to the process stdout so they appear without
//! `--nocapture`.

use std::f64::consts::PI;
use std::io::Write;
use std::process::Command;

use num_complex::Complex64;
use passive_qkd::channel::ChannelParams;
use passive_qkd::cka::rate::active_mu_grid;
use passive_qkd::cka::relay::{bsnet_amplitudes, click_pattern_probs};
use passive_qkd::cka::yields::transition_matrix;
use passive_qkd::cka::{active_rate, passive_rate as cka_passive_rate, CkaParams};
use passive_qkd::decoy::{build_lp, forward_observation, solve_bounds, Basis};
use passive_qkd::ensemble::{mixed_z_state, perfect_state, projector_sum, z_single_photon_yields, FockChannel, Su2};
use passive_qkd::integrate::{factorization_check, IntegrationSpec};
use passive_qkd::keyrate::{self, ActiveGrid, OptimizeGrid, PassiveConfig, DEFAULT_F_EC};
use passive_qkd::source::{BasisLabel, PassiveSource, Region};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MDI_POINTS: usize = 1 << 13;

fn report(n: usize, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {n:2} {verdict}: {name}: {detail}").unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {n} failed: {detail}");
}

fn rel_close(x: f64, target: f64, tol: f64) -> bool {
    (x / target - 1.0).abs() <= tol
}

fn optimized_passive(distance: f64) -> f64 {
    let ch = ChannelParams::symmetric(distance);
    let spec = IntegrationSpec::with_points(MDI_POINTS, 1);
    keyrate::optimize(&ch, &PassiveConfig::default(), &OptimizeGrid::default(), &spec).map(|r| r.rate).unwrap_or(0.0)
}

#[test]
fn c01_sifting_fractions() {
    let src = PassiveSource::new(1.0);
    let narrow = src.x_retained_fraction(0.2, 0.2);
    let wide = src.x_retained_fraction(0.5, 0.5);
    let pass = rel_close(narrow, 2.2e-4, 0.1) && rel_close(wide, 4.2e-3, 0.1);
    let detail = format!("0.2 -> {:.4}% (want 0.022%), 0.5 -> {:.4}% (want 0.42%)", 100.0 * narrow, 100.0 * wide);
    report(1, "X-basis retained fraction", pass, &detail);
}

#[test]
fn c02_passive_mdi_cutoff() {
    let at130 = optimized_passive(130.0);
    let at160 = optimized_passive(160.0);
    let mut last_pos = if at130 > 0.0 { Some(130.0) } else { None };
    let mut first_zero = None;
    if at160 > 0.0 {
        last_pos = Some(160.0);
        let mut d = 180.0;
        while d <= 300.0 {
            if optimized_passive(d) > 0.0 {
                last_pos = Some(d);
            } else {
                first_zero = Some(d);
                break;
            }
            d += 20.0;
        }
    } else {
        first_zero = Some(160.0);
    }
    let cutoff = match (last_pos, first_zero) {
        (Some(mut lo), Some(mut hi)) => {
            while hi - lo > 1.0 {
                let mid = 0.5 * (lo + hi);
                if optimized_passive(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Some(0.5 * (lo + hi))
        }
        _ => None,
    };
    let pass = at130 > 0.0 && at160 == 0.0 && cutoff.is_some_and(|c| (c - 143.0).abs() <= 10.0);
    let cut = match (cutoff, last_pos) {
        (Some(c), _) => format!("{c:.1} km"),
        (None, Some(l)) => format!("beyond {l} km"),
        (None, None) => "below 130 km".into(),
    };
    let detail = format!("R(130) = {at130:.3e}, R(160) = {at160:.3e}, cutoff {cut} (want 143 +/- 10)");
    report(2, "passive MDI distance cutoff", pass, &detail);
}

#[test]
fn c03_passive_active_gap() {
    let passive = optimized_passive(50.0);
    let active = keyrate::active_rate(&ChannelParams::symmetric(50.0), &ActiveGrid::default(), DEFAULT_F_EC)
        .map(|r| r.rate)
        .unwrap_or(0.0);
    let ratio = passive / active;
    let lg = ratio.log10();
    let pass = active > 0.0 && (-3.5..=-1.5).contains(&lg);
    let detail =
        format!("passive {passive:.3e}, active {active:.3e}, ratio {ratio:.3e} (want 1e-3..1e-2, half-decade slack)");
    report(3, "passive/active gap at 50 km", pass, &detail);
}

#[test]
fn c04_small_ring_jensen() {
    let cfg = PassiveConfig { delta_z: 0.01, t3: 0.3, ..Default::default() };
    let spec = IntegrationSpec::with_points(MDI_POINTS, 4);
    let mut positive = 0;
    let mut worst = f64::INFINITY;
    let mut detail = String::new();
    let mut pass = true;
    for d in [0.0, 40.0, 80.0, 120.0, 160.0] {
        let ch = ChannelParams::symmetric(d);
        let base = keyrate::passive_rate(&ch, &cfg, &spec).unwrap();
        let rings = keyrate::small_ring_rate(&ch, &cfg, 10, &spec).unwrap();
        let sigma = base.rate_stderr.hypot(rings.rate_stderr);
        let margin = (rings.rate - base.rate) / sigma.max(f64::MIN_POSITIVE);
        worst = worst.min(margin);
        pass &= rings.rate >= base.rate - 2.0 * sigma;
        positive += usize::from(base.rate > 0.0);
        detail.push_str(&format!("{d} km: {:.3e} vs {:.3e}; ", rings.rate, base.rate));
    }
    detail.push_str(&format!("{positive}/5 points with positive rate, worst margin {worst:.2} sigma"));
    report(4, "small-ring rate >= passive rate", pass, &detail);
}

#[test]
fn c05_mixed_ensemble_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (ta, tb, phi) = (rng.gen_range(0.0..PI), rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI));
        let s = projector_sum(ta, tb, phi);
        for (i, row) in s.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - Complex64::new(want, 0.0)).norm());
            }
        }
    }
    report(5, "projector sum is the identity", worst <= 1e-12, &format!("max deviation {worst:.2e} over 1000 draws"));
}

#[test]
fn c06_mixed_vs_perfect_ordering() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut y_dev, mut violations, mut min_gap) = (0.0f64, 0, f64::INFINITY);
    for _ in 0..20 {
        let mut axis = || [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let (ax, bx) = (axis(), axis());
        let ch = FockChannel {
            rot_a: Su2::from_axis_angle(ax, rng.gen_range(-0.5..0.5)),
            rot_b: Su2::from_axis_angle(bx, rng.gen_range(-0.5..0.5)),
            eta_a: rng.gen_range(0.01..1.0),
            eta_b: rng.gen_range(0.01..1.0),
            p_d: rng.gen_range(0.0..1e-3),
        };
        let (ta, tb, phi) = (rng.gen_range(0.0..0.6), rng.gen_range(0.0..0.6), rng.gen_range(0.0..2.0 * PI));
        let (yp, ep) = z_single_photon_yields(&ch, &perfect_state, &perfect_state);
        let (ym, em) = z_single_photon_yields(&ch, &|l| mixed_z_state(l, ta, 0.0), &|l| mixed_z_state(l, tb, phi));
        y_dev = y_dev.max((ym - yp).abs());
        min_gap = min_gap.min(em - ep);
        if em < ep {
            violations += 1;
        }
    }
    let pass = y_dev <= 1e-9 && violations == 0;
    let detail = format!("max |dY11| {y_dev:.2e}, error-yield ordering violations {violations}, min gap {min_gap:.2e}");
    report(6, "mixed vs perfect single-photon yields", pass, &detail);
}

#[test]
fn c07_decoupling_factorization() {
    let src = PassiveSource::new(1.0);
    let bins = [(0.0, 1.0 / 3.0), (1.0 / 3.0, 2.0 / 3.0), (2.0 / 3.0, 1.0)];
    let spec = IntegrationSpec::with_points(MDI_POINTS, 7);
    let y = |ta: f64, pa: f64, tb: f64, pb: f64| {
        0.5 * (1.0 + ta.cos() * tb.cos()) + 0.2 * ta.sin() * tb.sin() * (pa - pb).cos()
    };
    let mut worst: f64 = 0.0;
    for &ba in &bins {
        for &bb in &bins {
            let sa = Region::x(BasisLabel::XPlus, 0.5, 0.5, ba);
            let sb = Region::x(BasisLabel::XMinus, 0.5, 0.5, bb);
            let (lhs, rhs) = factorization_check(&src, &sa, &sb, 1, 1, y, &spec).unwrap();
            worst = worst.max((lhs.value - rhs.value).abs() / lhs.stderr.hypot(rhs.stderr));
        }
    }
    report(
        7,
        "6-D integral equals factorized product",
        worst <= 3.0,
        &format!("worst |lhs - rhs| = {worst:.2} sigma over 9 pairs"),
    );
}

#[test]
fn c08_lp_bracketing() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut violations, mut worst_lo, mut worst_hi) = (0, 0.0f64, 0.0f64);
    let channels = 24;
    for _ in 0..channels {
        let (eta_a, eta_b): (f64, f64) = (rng.gen_range(1e-3..0.5), rng.gen_range(1e-3..0.5));
        let (pd, e): (f64, f64) = (rng.gen_range(0.0..1e-4), rng.gen_range(0.0..0.1));
        let cfg =
            PassiveConfig { t3: rng.gen_range(0.3..1.0), delta_z: rng.gen_range(0.01..0.05), ..Default::default() };
        let y = move |n: usize, m: usize| {
            let na = 1.0 - (1.0 - eta_a).powi(n as i32);
            let nb = 1.0 - (1.0 - eta_b).powi(m as i32);
            let y = (0.5 * na * nb + pd * (1.0 - na * nb)).min(1.0);
            (y, if n == 1 && m == 1 { e * y } else { 0.5 * y })
        };
        let src = PassiveSource::new(cfg.mu_max);
        let weights = |r: Region| src.region_weights(&r, 30).unwrap();
        let zw: Vec<_> = cfg.bins().iter().map(|&b| weights(Region::z(BasisLabel::ZH, cfg.delta_z, b))).collect();
        let xw: Vec<_> =
            cfg.bins().iter().map(|&b| weights(Region::x(BasisLabel::XPlus, cfg.delta_xy, cfg.delta_phi, b))).collect();
        let (mut zo, mut xo) = (Vec::new(), Vec::new());
        for i in 0..3 {
            for j in 0..3 {
                zo.push(forward_observation(Basis::Z, (i, j), &zw[i], &zw[j], &y));
                xo.push(forward_observation(Basis::X, (i, j), &xw[i], &xw[j], &y));
            }
        }
        let z = build_lp(&zo, cfg.n_cut, cfg.k_sigma).unwrap();
        let x = build_lp(&xo, cfg.n_cut, cfg.k_sigma).unwrap();
        let b = solve_bounds(&z, &x).unwrap();
        let (y11, ey11) = y(1, 1);
        worst_lo = worst_lo.max(b.y11_l / y11 - 1.0);
        if ey11 > 0.0 {
            worst_hi = worst_hi.max(1.0 - b.ey11_u / ey11);
        }
        if b.y11_l > y11 * (1.0 + 1e-9) || b.ey11_u < ey11 * (1.0 - 1e-9) {
            violations += 1;
        }
    }
    let detail = format!(
        "{violations} violations over {channels} channels (max Y11_L/Y11 - 1 = {worst_lo:.2e}, max 1 - eY11_U/eY11 = {worst_hi:.2e})"
    );
    report(8, "LP bounds bracket the true yields", violations == 0, &detail);
}

#[test]
fn c09_cka_cutoff() {
    let losses = [20.0, 22.0, 24.0, 26.0, 28.0, 30.0, 32.0, 34.0];
    let mut rows = Vec::new();
    for &loss in &losses {
        let p = CkaParams { loss_db: loss, kg_points: 1 << 8, ..Default::default() };
        let act = active_rate(&p, &active_mu_grid()).unwrap();
        let r = cka_passive_rate(&CkaParams { mu_max: 2.0 * act.mu, ..p }, 9).unwrap();
        rows.push((loss, r.rate_lp.value, r.rate_exact.value, act.rate));
    }
    let cutoff = |col: fn(&(f64, f64, f64, f64)) -> f64| -> Option<f64> {
        let last = rows.iter().rposition(|r| col(r) > 0.0)?;
        Some(rows.get(last + 1).map_or(f64::INFINITY, |next| 0.5 * (rows[last].0 + next.0)))
    };
    let lp_cut = cutoff(|r| r.1);
    let exact_cut = cutoff(|r| r.2);
    let (lp20, ex20) = (rows[0].1, rows[0].2);
    let lp34 = rows[rows.len() - 1].1;
    let order = if lp20 > 0.0 { (ex20 / lp20).log10() } else { f64::INFINITY };
    let pass =
        lp20 > 0.0 && lp34 == 0.0 && lp_cut.is_some_and(|c| (c - 28.0).abs() <= 3.0) && (0.5..=1.5).contains(&order);
    let top = losses[losses.len() - 1];
    let fmt_cut = |c: Option<f64>| match c {
        None => "none".to_string(),
        Some(c) if c.is_infinite() => format!("beyond {top} dB"),
        Some(c) => format!("{c} dB"),
    };
    let mut detail = format!(
        "LP cutoff {}, exact cutoff {}, exact/LP at 20 dB {} (want cutoff 28 +/- 3 dB, ~10^1); ",
        fmt_cut(lp_cut),
        fmt_cut(exact_cut),
        if lp20 > 0.0 { format!("10^{order:.2}") } else { "undefined, LP rate is 0".into() }
    );
    for (l, lp, ex, act) in &rows {
        detail.push_str(&format!("{l} dB: LP {lp:.2e} exact {ex:.2e} active {act:.2e}; "));
    }
    report(9, "four-user passive CKA cutoff", pass, detail.trim_end_matches("; "));
}

#[test]
fn c10_branch_cutting_soundness() {
    let mut pass = true;
    let mut detail = String::new();
    for loss in [5.0, 10.0, 20.0] {
        let base = CkaParams { loss_db: loss, ..CkaParams::reduced() };
        let act = active_rate(&base, &active_mu_grid()).unwrap();
        let p = CkaParams { mu_max: 2.0 * act.mu, ..base };
        let pruned = cka_passive_rate(&p, 10).unwrap();
        let full = cka_passive_rate(&CkaParams { branch_cut: false, ..p }, 10).unwrap();
        let in_band = |a: f64, b: f64| b > 0.0 && a >= 0.9 * b && a <= b * (1.0 + 1e-12);
        pass &= in_band(pruned.rate_exact.value, full.rate_exact.value);
        if full.rate_lp.value > 0.0 {
            pass &= in_band(pruned.rate_lp.value, full.rate_lp.value);
        }
        detail.push_str(&format!(
            "{loss} dB: exact {:.4e}/{:.4e}, LP {:.2e}/{:.2e}, kept {}/{}; ",
            pruned.rate_exact.value,
            full.rate_exact.value,
            pruned.rate_lp.value,
            full.rate_lp.value,
            pruned.combos_kept,
            pruned.combos_total
        ));
    }
    report(10, "pruned rate within [0.9, 1] of full sum", pass, detail.trim_end_matches("; "));
}

#[test]
fn c11_stochasticity_and_unitarity() {
    let mut worst: f64 = 0.0;
    for dphi in [1e-3, PI / 8.0, PI / 4.0, 0.9 * PI] {
        let t = transition_matrix(dphi, 6).unwrap();
        for n in 0..=6 {
            worst = worst.max(((0..=6).map(|m| t.t[m][n]).sum::<f64>() - 1.0).abs());
        }
    }
    let t_dev = worst;
    let mut u_dev: f64 = 0.0;
    for n_det in [2usize, 4, 8, 16] {
        let cols: Vec<Vec<Complex64>> = (0..n_det)
            .map(|i| {
                let mut e = vec![Complex64::new(0.0, 0.0); n_det];
                e[i] = Complex64::new(1.0, 0.0);
                bsnet_amplitudes(&e, n_det)
            })
            .collect();
        for a in 0..n_det {
            for b in 0..n_det {
                let dot: Complex64 = (0..n_det).map(|j| cols[a][j].conj() * cols[b][j]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                u_dev = u_dev.max((dot - want).norm());
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut p_dev: f64 = 0.0;
    for _ in 0..200 {
        let n_users = rng.gen_range(2..=4);
        let alpha: Vec<Complex64> = (0..n_users)
            .map(|_| Complex64::from_polar(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0 * PI)))
            .collect();
        let probs = click_pattern_probs(&bsnet_amplitudes(&alpha, 4), rng.gen_range(0.0..0.1));
        p_dev = p_dev.max((probs.iter().sum::<f64>() - 1.0).abs());
    }
    let pass = t_dev <= 1e-10 && u_dev <= 1e-10 && p_dev <= 1e-10;
    let detail = format!("T column sums {t_dev:.1e}, relay unitarity {u_dev:.1e}, pattern sums {p_dev:.1e}");
    report(11, "stochasticity and unitarity", pass, &detail);
}

#[test]
fn c12_determinism_across_threads() {
    let dir = std::env::temp_dir().join(format!("qkd-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let scenarios = [
        ("mdi.json", r#"{"kind":"MDI_PASSIVE","sweep":[0,40,80],"seed":12,"overrides":{"optimize":false}}"#),
        (
            "cka.json",
            r#"{"kind":"CKA_PASSIVE_EXACT","sweep":[5,15],"seed":12,"overrides":{"preset":"reduced","kg_points":256}}"#,
        ),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, body) in scenarios {
        let cfg = dir.join(name);
        std::fs::write(&cfg, body).unwrap();
        let run = |threads: &str| {
            let out = Command::new(env!("CARGO_BIN_EXE_qkd"))
                .args(["run", "--config", cfg.to_str().unwrap(), "--samples", "8192", "--threads", threads])
                .output()
                .unwrap();
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            out.stdout
        };
        let one = run("1");
        let same = [run("2"), run("4")].iter().all(|o| *o == one);
        pass &= same;
        detail.push(format!("{name}: {} bytes, {}", one.len(), if same { "identical" } else { "differs" }));
    }
    report(12, "CSV byte-identical across thread counts", pass, &detail.join(", "));
}
