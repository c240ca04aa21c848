//! Sweep execution and CSV output.

use std::fmt;
use std::io::Write;

use passive_qkd::channel::ChannelParams;
use passive_qkd::cka::rate::{active_deep_yields, active_mu_grid, active_rate, active_rate_fixed};
use passive_qkd::cka::{passive_rate as cka_passive_rate, ActiveResult, CkaParams};
use passive_qkd::error::Error;
use passive_qkd::integrate::IntegrationSpec;
use passive_qkd::keyrate::{self, ActiveGrid, KeyRateResult};
use passive_qkd::math::mix64;

use crate::config::{CkaSettings, ConfigError, Kind, MdiSettings, Scenario, Settings};

pub const MDI_COLUMNS: [&str; 17] = [
    "distance_km",
    "rate",
    "rate_stderr",
    "rate_alt_ec",
    "p_z_a",
    "p_z_b",
    "p1_a",
    "p1_b",
    "y11_l",
    "e11_u",
    "q_z",
    "e_z",
    "ec_cost",
    "delta_z_or_mu",
    "t3_or_nu",
    "f_ec",
    "infeasible",
];

pub const CKA_COLUMNS: [&str; 12] = [
    "loss_db",
    "R_passive_lp",
    "R_passive_exact",
    "R_active",
    "combos_kept",
    "combos_total",
    "R_passive_lp_stderr",
    "R_passive_exact_stderr",
    "mu_active",
    "mu_max",
    "lp_infeasible",
    "infeasible",
];

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical(String),
    Io(std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Numerical(_) | RunError::Io(_) => 2,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "config error: {e}"),
            RunError::Numerical(e) => write!(f, "numerical failure: {e}"),
            RunError::Io(e) => write!(f, "output error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.into())
    }
}

fn core_error(at: f64, e: Error) -> RunError {
    match e {
        Error::InvalidParameter(m) => RunError::Config(ConfigError(m)),
        e => RunError::Numerical(format!("at sweep value {at}: {e}")),
    }
}

/// Seed of the `index`-th sweep point.
pub fn point_seed(seed: u64, index: usize) -> u64 {
    seed ^ mix64(index as u64)
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

fn mdi_row(distance: f64, r: Option<&KeyRateResult>) -> Vec<String> {
    let Some(r) = r else {
        let mut row = vec![fmt(distance)];
        row.extend(std::iter::repeat(fmt(0.0)).take(MDI_COLUMNS.len() - 2));
        row.push("1".into());
        return row;
    };
    let c = &r.components;
    let (a, b, f) = r.params_used;
    let mut row: Vec<String> = [
        distance,
        r.rate,
        r.rate_stderr,
        r.rate_alt_ec,
        c.p_z_a,
        c.p_z_b,
        c.p1_a,
        c.p1_b,
        c.y11_l,
        c.e11_u,
        c.q_z,
        c.e_z,
        c.ec_cost,
        a,
        b,
        f,
    ]
    .into_iter()
    .map(fmt)
    .collect();
    row.push("0".into());
    row
}

fn mdi_point(
    kind: Kind,
    s: &MdiSettings,
    distance: f64,
    seed: u64,
    samples: usize,
) -> Result<Option<KeyRateResult>, Error> {
    let ch = ChannelParams { l_a: 0.5 * distance, l_b: 0.5 * distance, ..s.channel };
    let spec = IntegrationSpec::with_points(samples, seed);
    let r = match kind {
        Kind::MdiActive => keyrate::active_rate(&ch, &ActiveGrid::default(), s.passive.f_ec),
        _ if s.optimize => keyrate::optimize(&ch, &s.passive, &s.grid, &spec),
        _ => keyrate::small_ring_rate(&ch, &s.passive, s.rings, &spec),
    };
    match r {
        Ok(r) => Ok(Some(r)),
        Err(Error::Infeasible) => Ok(None),
        Err(e) => Err(e),
    }
}

fn cka_active(s: &CkaSettings, p: &CkaParams) -> Result<ActiveResult, Error> {
    match s.active_mu {
        Some(mu) => active_rate_fixed(p, mu, &active_deep_yields(p)),
        None => active_rate(p, &active_mu_grid()),
    }
}

fn cka_row(kind: Kind, s: &CkaSettings, loss: f64, seed: u64) -> Result<Vec<String>, Error> {
    let p = CkaParams { loss_db: loss, ..s.params.clone() };
    let (mu_active, r_active, infeasible) = match cka_active(s, &p) {
        Ok(a) => (a.mu, a.rate, false),
        Err(Error::Infeasible) => (s.active_mu.unwrap_or(f64::NAN), 0.0, true),
        Err(e) => return Err(e),
    };
    let blank = String::new;
    let mut row = vec![fmt(loss)];
    if kind == Kind::CkaActive {
        row.extend([blank(), blank(), fmt(r_active), blank(), blank(), blank(), blank(), fmt(mu_active), blank()]);
        row.extend([blank(), if infeasible { "1" } else { "0" }.into()]);
        return Ok(row);
    }
    let mu_max = match s.mu_max {
        Some(m) => m,
        None if mu_active.is_finite() => 2.0 * mu_active,
        None => return Err(Error::Infeasible),
    };
    let pp = CkaParams { mu_max, ..p };
    let r = cka_passive_rate(&pp, seed)?;
    row.extend([
        fmt(r.rate_lp.value),
        fmt(r.rate_exact.value),
        fmt(r_active),
        fmt(r.combos_kept),
        fmt(r.combos_total),
        fmt(r.rate_lp.stderr),
        fmt(r.rate_exact.stderr),
        fmt(mu_active),
        fmt(mu_max),
        if r.lp_infeasible { "1" } else { "0" }.into(),
        if infeasible { "1" } else { "0" }.into(),
    ]);
    Ok(row)
}

/// Runs every sweep point in order, writing and flushing one CSV row per
/// point. Parallelism lives inside each point, on the pool of `threads`
/// workers (0 picks the default).
pub fn run<W: Write>(sc: &Scenario, out: W) -> Result<(), RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sc.threads)
        .build()
        .map_err(|e| RunError::Numerical(format!("thread pool: {e}")))?;
    let mut w = csv::Writer::from_writer(out);
    match &sc.settings {
        Settings::Mdi(_) => w.write_record(MDI_COLUMNS)?,
        Settings::Cka(_) => w.write_record(CKA_COLUMNS)?,
    }
    w.flush().map_err(RunError::Io)?;
    for (i, &x) in sc.sweep.iter().enumerate() {
        let seed = point_seed(sc.seed, i);
        let row = pool.install(|| match &sc.settings {
            Settings::Mdi(s) => mdi_point(sc.kind, s, x, seed, sc.samples).map(|r| mdi_row(x, r.as_ref())),
            Settings::Cka(s) => cka_row(sc.kind, s, x, seed),
        });
        let row = row.map_err(|e| core_error(x, e))?;
        w.write_record(&row)?;
        w.flush().map_err(RunError::Io)?;
    }
    Ok(())
}
