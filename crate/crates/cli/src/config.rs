//! Scenario files and their mapping onto model parameters.

use std::collections::BTreeMap;
use std::fmt;

use passive_qkd::channel::{ChannelParams, Misalignment};
use passive_qkd::cka::CkaParams;
use passive_qkd::keyrate::{EcWeighting, OptimizeGrid, PassiveConfig, DEFAULT_F_EC};
use passive_qkd::source::ZMetric;
use serde::Deserialize;
use serde_json::Value;

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_SAMPLES: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Kind {
    MdiPassive,
    MdiActive,
    CkaPassiveLp,
    CkaPassiveExact,
    CkaActive,
}

impl Kind {
    pub fn is_cka(self) -> bool {
        matches!(self, Kind::CkaPassiveLp | Kind::CkaPassiveExact | Kind::CkaActive)
    }
}

/// Scenario as read from the JSON file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub kind: Kind,
    pub sweep: Vec<f64>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub overrides: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Settings for the two-user sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct MdiSettings {
    pub channel: ChannelParams,
    pub passive: PassiveConfig,
    /// Grid-optimize `delta_z` and `t3`; otherwise use the fixed values.
    pub optimize: bool,
    pub grid: OptimizeGrid,
    pub rings: usize,
}

/// Settings for the conference sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct CkaSettings {
    pub params: CkaParams,
    /// Fixed passive `mu_max`; by default twice the active optimum, so the
    /// passive mean intensity matches it.
    pub mu_max: Option<f64>,
    /// Active intensity; by default optimized on a log grid.
    pub active_mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Settings {
    Mdi(MdiSettings),
    Cka(CkaSettings),
}

/// Fully resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: Kind,
    pub sweep: Vec<f64>,
    pub seed: u64,
    pub samples: usize,
    pub threads: usize,
    pub settings: Settings,
}

/// Values given on the command line; they win over the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlagOverrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub threads: Option<usize>,
}

fn num(key: &str, v: &Value) -> Result<f64, ConfigError> {
    match v.as_f64() {
        Some(x) if x.is_finite() => Ok(x),
        _ => err(format!("override {key}: expected a number")),
    }
}

fn count(key: &str, v: &Value) -> Result<usize, ConfigError> {
    match v.as_u64() {
        Some(x) => Ok(x as usize),
        None => err(format!("override {key}: expected a non-negative integer")),
    }
}

fn flag(key: &str, v: &Value) -> Result<bool, ConfigError> {
    v.as_bool().ok_or_else(|| ConfigError(format!("override {key}: expected true or false")))
}

fn list(key: &str, v: &Value) -> Result<Vec<f64>, ConfigError> {
    let Some(a) = v.as_array() else { return err(format!("override {key}: expected an array")) };
    let xs = a.iter().map(|x| num(key, x)).collect::<Result<Vec<_>, _>>()?;
    if xs.is_empty() {
        return err(format!("override {key}: empty array"));
    }
    Ok(xs)
}

fn mdi_settings(ov: &BTreeMap<String, Value>) -> Result<MdiSettings, ConfigError> {
    let mut s = MdiSettings {
        channel: ChannelParams::default(),
        passive: PassiveConfig::default(),
        optimize: true,
        grid: OptimizeGrid::default(),
        rings: 1,
    };
    for (k, v) in ov {
        let (c, p) = (&mut s.channel, &mut s.passive);
        match k.as_str() {
            "alpha_db_per_km" => c.alpha_db_per_km = num(k, v)?,
            "eta_d" => c.eta_d = num(k, v)?,
            "p_d" => c.p_d = num(k, v)?,
            "misalignment" => {
                let e = num(k, v)?;
                if !(0.0..=1.0).contains(&e) {
                    return err("override misalignment: must lie in [0, 1]");
                }
                c.misalign_a = Misalignment::about_y(0.5 * e, 1.0);
                c.misalign_b = Misalignment::about_y(0.5 * e, -1.0);
            }
            "mu_max" => p.mu_max = num(k, v)?,
            "delta_z" => p.delta_z = num(k, v)?,
            "delta_xy" => p.delta_xy = num(k, v)?,
            "delta_phi" => p.delta_phi = num(k, v)?,
            "t3" => p.t3 = num(k, v)?,
            "f_ec" => p.f_ec = num(k, v)?,
            "n_cut" => p.n_cut = count(k, v)?,
            "k_sigma" => p.k_sigma = num(k, v)?,
            "ec_weighting" => {
                p.ec_weighting = match v.as_str() {
                    Some("gain_weighted") => EcWeighting::GainWeighted,
                    Some("unweighted") => EcWeighting::Unweighted,
                    _ => return err("override ec_weighting: expected \"gain_weighted\" or \"unweighted\""),
                }
            }
            "z_metric" => {
                p.z_metric = match v.as_str() {
                    Some("plane") => ZMetric::Plane,
                    Some("bloch") => ZMetric::Bloch,
                    _ => return err("override z_metric: expected \"plane\" or \"bloch\""),
                }
            }
            "optimize" => s.optimize = flag(k, v)?,
            "grid_delta_z" => s.grid.delta_z = list(k, v)?,
            "grid_t3" => s.grid.t3 = list(k, v)?,
            "rings" => s.rings = count(k, v)?,
            _ => return err(format!("unknown override {k}")),
        }
    }
    if s.rings == 0 {
        return err("override rings: must be at least 1");
    }
    if s.optimize && s.rings > 1 {
        return err("override rings > 1 requires optimize = false");
    }
    if !(s.passive.f_ec >= 1.0) {
        return err(format!("f_ec must be at least 1 (default {DEFAULT_F_EC})"));
    }
    Ok(s)
}

fn cka_settings(ov: &BTreeMap<String, Value>, samples: usize) -> Result<CkaSettings, ConfigError> {
    let reduced = match ov.get("preset") {
        None => false,
        Some(v) => match v.as_str() {
            Some("full") => false,
            Some("reduced") => true,
            _ => return err("override preset: expected \"full\" or \"reduced\""),
        },
    };
    let mut p = if reduced { CkaParams::reduced() } else { CkaParams::default() };
    p.pe_points = samples;
    let mut s = CkaSettings { params: p, mu_max: None, active_mu: None };
    for (k, v) in ov {
        let p = &mut s.params;
        match k.as_str() {
            "preset" => {}
            "n_users" => p.n_users = count(k, v)?,
            "n_det" => p.n_det = count(k, v)?,
            "m_slices" => p.m_slices = count(k, v)?,
            "p_d" => p.p_d = num(k, v)?,
            "n_bar" => p.n_bar = count(k, v)?,
            "x" => p.x = count(k, v)?,
            "y" => p.y = count(k, v)?,
            "branch_cut" => p.branch_cut = flag(k, v)?,
            "k_sigma" => p.k_sigma = num(k, v)?,
            "kg_points" => p.kg_points = count(k, v)?,
            "pe_points" => p.pe_points = count(k, v)?,
            "mu_max" => s.mu_max = Some(num(k, v)?),
            "active_mu" => s.active_mu = Some(num(k, v)?),
            "decoy_bins" => {
                if count(k, v)? != 2 {
                    return err("override decoy_bins: only two bins per user are supported");
                }
            }
            _ => return err(format!("unknown override {k}")),
        }
    }
    if let Some(mu) = s.mu_max {
        s.params.mu_max = mu;
    }
    if let Some(mu) = s.active_mu {
        if !(mu > 0.0 && mu <= 1.0) {
            return err("override active_mu: must lie in (0, 1]");
        }
    }
    s.params.validate().map_err(|e| ConfigError(e.to_string()))?;
    Ok(s)
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError(format!("config: {e}")))
    }

    pub fn resolve(self, flags: FlagOverrides) -> Result<Scenario, ConfigError> {
        if self.sweep.is_empty() {
            return err("sweep must be nonempty");
        }
        if self.sweep.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return err("sweep values must be finite and non-negative");
        }
        if self.sweep.windows(2).any(|w| w[1] <= w[0]) {
            return err("sweep must be strictly increasing");
        }
        let seed = flags.seed.or(self.seed).unwrap_or(DEFAULT_SEED);
        let samples = flags.samples.or(self.samples).unwrap_or(DEFAULT_SAMPLES);
        let threads = flags.threads.or(self.threads).unwrap_or(0);
        if samples < 1024 {
            return err("samples must be at least 1024");
        }
        let settings = if self.kind.is_cka() {
            Settings::Cka(cka_settings(&self.overrides, samples)?)
        } else {
            Settings::Mdi(mdi_settings(&self.overrides)?)
        };
        Ok(Scenario { kind: self.kind, sweep: self.sweep, seed, samples, threads, settings })
    }
}
