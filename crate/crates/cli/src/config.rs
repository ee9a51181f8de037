//! Flat `key = value` scenario files, presets and command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use iff::{BcCriterion, Criterion, IffError, Scheme, SystemConfig};

/// Recognized keys with their defaults, in manifest order.
pub const KEYS: &[(&str, &str)] = &[
    ("name", "run"),
    ("K", "2"),
    ("N_r", "2"),
    ("N_k", "2"),
    ("L_k", "1"),
    ("sigma2_k", "1"),
    ("sigma2_r", "1"),
    ("sigma2_u", "1"),
    ("sigma2_h", "0"),
    ("sigma2_g", "0"),
    ("R_t", "1"),
    ("delta", "0.001"),
    ("max_iters", "100"),
    ("seed", "0"),
    ("trials", "100"),
    ("snr", "0:5:30"),
    ("schemes", "sum:sum:nonrobust,max:max:nonrobust"),
    ("mabc_half", "true"),
    ("equation_mse", "false"),
];

pub const PRESETS: &[&str] = &["fig2", "fig3", "fig6", "fig7"];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("unknown key `{0}`")]
    UnknownOverride(String),
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("{field}: cannot parse `{value}`: {reason}")]
    Value { field: String, value: String, reason: String },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown preset `{0}` (expected fig2, fig3, fig6 or fig7)")]
    Preset(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl From<IffError> for ConfigError {
    fn from(e: IffError) -> Self {
        match e {
            IffError::InvalidConfig { field, reason } => ConfigError::Invalid { field: field.into(), reason },
            other => ConfigError::Invalid { field: "config".into(), reason: other.to_string() },
        }
    }
}

/// Raw layered settings. Later layers override earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

impl Settings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let pairs: &[(&str, &str)] = match name {
            "fig2" => &[
                ("name", "fig2"),
                ("snr", "10"),
                ("trials", "200"),
                ("schemes", "sum:sum:nonrobust,max:max:nonrobust"),
                ("equation_mse", "true"),
            ],
            "fig3" => &[("name", "fig3"), ("snr", "0:5:30"), ("trials", "500"), ("schemes", "max:max:nonrobust")],
            "fig6" => &[
                ("name", "fig6"),
                ("snr", "0:5:30"),
                ("trials", "500"),
                ("schemes", "sum:sum:nonrobust:n=1,sum:sum:nonrobust:n=2,max:max:nonrobust:n=1,max:max:nonrobust:n=2"),
            ],
            "fig7" => &[
                ("name", "fig7"),
                ("snr", "0:5:30"),
                ("trials", "500"),
                (
                    "schemes",
                    "sum:sum:nonrobust:err=0,sum:sum:robust:err=0.1,sum:sum:nonrobust:err=0.1,sum:sum:robust:err=0.4,sum:sum:nonrobust:err=0.4,\
                     max:max:nonrobust:err=0,max:max:robust:err=0.1,max:max:nonrobust:err=0.1,max:max:robust:err=0.4,max:max:nonrobust:err=0.4",
                ),
            ],
            other => return Err(ConfigError::Preset(other.into())),
        };
        let mut s = Settings::new();
        for (k, v) in pairs {
            s.values.insert((*k).into(), (*v).into());
        }
        Ok(s)
    }

    /// Parses a config file body. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut s = Settings::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { line: i + 1, text: line.into() });
            };
            let (k, v) = (k.trim(), v.trim());
            if !known(k) {
                return Err(ConfigError::UnknownKey { line: i + 1, key: k.into() });
            }
            s.values.insert(k.into(), v.into());
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        if !known(key) {
            return Err(ConfigError::UnknownOverride(key.into()));
        }
        self.values.insert(key.into(), value.into());
        Ok(())
    }

    /// Applies every value of `other` on top of `self`.
    pub fn overlay(mut self, other: &Settings) -> Self {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
        self
    }

    fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| KEYS.iter().find(|(k, _)| *k == key).map(|(_, d)| *d).expect("known key"))
    }

    fn scalar<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        v.parse().map_err(|e: T::Err| ConfigError::Value { field: key.into(), value: v.into(), reason: e.to_string() })
    }

    /// A single value repeated `n` times, or an explicit list of `n` values.
    fn list<T: FromStr + Clone>(&self, key: &str, n: usize) -> Result<Vec<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        let items: Vec<T> = v
            .split(',')
            .map(|x| x.trim().parse().map_err(|e: T::Err| ConfigError::Value { field: key.into(), value: v.into(), reason: e.to_string() }))
            .collect::<Result<_, _>>()?;
        match items.len() {
            1 => Ok(vec![items[0].clone(); n]),
            len if len == n => Ok(items),
            len => Err(ConfigError::Invalid { field: key.into(), reason: format!("expected 1 or {n} values, got {len}") }),
        }
    }

    pub fn resolve(&self) -> Result<Scenario, ConfigError> {
        let k: usize = self.scalar("K")?;
        let user_antennas = self.list("N_k", 2 * k)?;
        let messages = self.list("L_k", k)?;
        let gains: Vec<f64> = self.list("sigma2_k", 2 * k)?;
        let mut cfg = SystemConfig::symmetric(k, 1, 1, 0.0);
        cfg.user_antennas = user_antennas;
        cfg.relay_antennas = self.scalar("N_r")?;
        cfg.messages = messages;
        cfg.uplink_gain = gains.clone();
        cfg.downlink_gain = gains;
        cfg.relay_noise = self.scalar("sigma2_r")?;
        cfg.user_noise = self.scalar("sigma2_u")?;
        cfg.uplink_error = self.scalar("sigma2_h")?;
        cfg.downlink_error = self.scalar("sigma2_g")?;
        cfg.target_rate = self.scalar("R_t")?;
        cfg.delta = self.scalar("delta")?;
        cfg.max_iters = self.scalar("max_iters")?;
        cfg.seed = self.scalar("seed")?;
        cfg.two_slot_factor = self.scalar("mabc_half")?;

        let trials: usize = self.scalar("trials")?;
        if trials == 0 {
            return Err(ConfigError::Invalid { field: "trials".into(), reason: "must be at least 1".into() });
        }
        let snr = parse_snr(self.get("snr"))?;
        let schemes = self.get("schemes").split(',').map(|t| parse_scheme(t.trim())).collect::<Result<Vec<_>, _>>()?;
        if schemes.is_empty() {
            return Err(ConfigError::Invalid { field: "schemes".into(), reason: "at least one scheme is required".into() });
        }
        let name: String = self.get("name").into();
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(ConfigError::Invalid { field: "name".into(), reason: "must be a non-empty file name stem".into() });
        }
        cfg.validate()?;
        for s in &schemes {
            for &p in &snr {
                s.apply(&cfg, p).validate()?;
            }
        }
        Ok(Scenario { name, cfg, schemes, snr, trials, equation_mse: self.scalar("equation_mse")? })
    }
}

/// `a:step:b` (inclusive) or a comma list of dB values.
pub fn parse_snr(text: &str) -> Result<Vec<f64>, ConfigError> {
    let bad = |reason: &str| ConfigError::Value { field: "snr".into(), value: text.into(), reason: reason.into() };
    let num = |x: &str| x.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad("not a finite number"));
    let grid = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:step:stop"));
        }
        let (a, step, b) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if step <= 0.0 || b < a {
            return Err(bad("need step > 0 and stop >= start"));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| a + i as f64 * step).collect()
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if grid.is_empty() {
        return Err(bad("empty grid"));
    }
    Ok(grid)
}

/// `ma:bc:robust|nonrobust[:err=x][:n=N]` with `ma`, `bc` in `{sum, max}`.
pub fn parse_scheme(token: &str) -> Result<Scheme, ConfigError> {
    let bad = |reason: &str| ConfigError::Value { field: "schemes".into(), value: token.into(), reason: reason.into() };
    let parts: Vec<&str> = token.split(':').collect();
    if parts.len() < 3 {
        return Err(bad("expected ma:bc:robust|nonrobust"));
    }
    let ma = match parts[0] {
        "sum" => Criterion::SumEquation,
        "max" => Criterion::MaxEquation,
        _ => return Err(bad("multiple-access criterion must be sum or max")),
    };
    let bc = match parts[1] {
        "sum" => BcCriterion::SumMse,
        "max" => BcCriterion::MaxMse,
        _ => return Err(bad("broadcast criterion must be sum or max")),
    };
    let robust = match parts[2] {
        "robust" => true,
        "nonrobust" => false,
        _ => return Err(bad("expected robust or nonrobust")),
    };
    let mut scheme = Scheme::new(ma, bc, robust);
    for opt in &parts[3..] {
        match opt.split_once('=') {
            Some(("err", v)) => {
                let e: f64 = v.parse().ok().filter(|e: &f64| *e >= 0.0 && e.is_finite()).ok_or_else(|| bad("err must be a non-negative number"))?;
                scheme = scheme.with_csi_error(e);
            }
            Some(("n", v)) => {
                let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| bad("n must be a positive integer"))?;
                scheme = scheme.with_antennas(n);
            }
            _ => return Err(bad("unknown option")),
        }
    }
    let label = scheme_token(&scheme).replace(':', "_").replace('=', "");
    Ok(scheme.with_label(label))
}

/// Canonical token of a scheme; parses back to the same scheme.
pub fn scheme_token(s: &Scheme) -> String {
    let crit = |sum: bool| if sum { "sum" } else { "max" };
    let mut t = format!(
        "{}:{}:{}",
        crit(s.ma == Criterion::SumEquation),
        crit(s.bc == BcCriterion::SumMse),
        if s.robust { "robust" } else { "nonrobust" }
    );
    if let Some(e) = s.csi_error {
        write!(t, ":err={e}").unwrap();
    }
    if let Some(n) = s.antennas {
        write!(t, ":n={n}").unwrap();
    }
    t
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub cfg: SystemConfig,
    pub schemes: Vec<Scheme>,
    pub snr: Vec<f64>,
    pub trials: usize,
    /// Append per-equation design noise columns to the CSV.
    pub equation_mse: bool,
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Scenario {
    /// Fully resolved settings; [`Settings::parse`] of this text gives back the same scenario.
    pub fn manifest(&self) -> String {
        let c = &self.cfg;
        let schemes: Vec<String> = self.schemes.iter().map(scheme_token).collect();
        let lines = [
            ("name", self.name.clone()),
            ("K", c.pairs.to_string()),
            ("N_r", c.relay_antennas.to_string()),
            ("N_k", join(&c.user_antennas)),
            ("L_k", join(&c.messages)),
            ("sigma2_k", join(&c.uplink_gain)),
            ("sigma2_r", c.relay_noise.to_string()),
            ("sigma2_u", c.user_noise.to_string()),
            ("sigma2_h", c.uplink_error.to_string()),
            ("sigma2_g", c.downlink_error.to_string()),
            ("R_t", c.target_rate.to_string()),
            ("delta", c.delta.to_string()),
            ("max_iters", c.max_iters.to_string()),
            ("seed", c.seed.to_string()),
            ("trials", self.trials.to_string()),
            ("snr", join(&self.snr)),
            ("schemes", schemes.join(",")),
            ("mabc_half", c.two_slot_factor.to_string()),
            ("equation_mse", self.equation_mse.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in lines {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }
}
