//! Model parameters and the flat `key = value` config format.
//!
//! Model keys carry their unit in the name and are always required:
//!
//! ```text
//! lambda_l_per_km = 3      # road density
//! mu_s_per_km     = 1      # RSUs per km of road
//! mu_r_per_km     = 3      # relays per km of road
//! mu_u_per_km     = 15     # users per km of road
//! p_s             = 1      # RSU transmit power (linear, relative)
//! p_r             = 1      # relay transmit power (linear, relative)
//! alpha           = 2.5    # same-road path-loss exponent
//! beta            = 3.5    # cross-road path-loss exponent
//! w_mhz           = 20     # total bandwidth
//! w2_mhz          = 14     # RSU-to-relay bandwidth
//! w1_mhz          = 6      # optional; must equal w_mhz - w2_mhz
//! ```
//!
//! Run settings are optional and fall back to defaults: `seed`, `reps`,
//! `window_km`, `rel_tol`, `tau_db` (as `A:B:STEP`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    /// Road density (per km).
    pub lambda_l: f64,
    /// RSU density on each road (per km).
    pub mu_s: f64,
    /// Relay density on each road (per km).
    pub mu_r: f64,
    /// User density on each road (per km).
    pub mu_u: f64,
    pub p_s: f64,
    pub p_r: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Access bandwidth shared by RSU-to-user and relay-to-user links (MHz).
    pub w1: f64,
    /// Reserved RSU-to-relay bandwidth (MHz).
    pub w2: f64,
    /// Total bandwidth (MHz).
    pub w: f64,
}

impl NetworkConfig {
    /// Equal powers, `alpha = 2.5`, `beta = 3.5`, `W = 20` MHz split 10/10.
    pub fn new(lambda_l: f64, mu_s: f64, mu_r: f64, mu_u: f64) -> Self {
        NetworkConfig {
            lambda_l,
            mu_s,
            mu_r,
            mu_u,
            p_s: 1.0,
            p_r: 1.0,
            alpha: 2.5,
            beta: 3.5,
            w1: 10.0,
            w2: 10.0,
            w: 20.0,
        }
    }

    /// Relay-to-RSU power ratio `p_r / p_s`.
    pub fn gamma(&self) -> f64 {
        self.p_r / self.p_s
    }

    /// Combined transmitter density per km of road.
    pub fn mu_tx(&self) -> f64 {
        self.mu_s + self.mu_r
    }

    pub fn with_powers(mut self, p_s: f64, p_r: f64) -> Self {
        self.p_s = p_s;
        self.p_r = p_r;
        self
    }

    pub fn with_exponents(mut self, alpha: f64, beta: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self
    }

    /// Sets the total bandwidth and the RSU-to-relay share; `W1 = W - W2`.
    pub fn with_bandwidth(mut self, w: f64, w2: f64) -> Self {
        self.w = w;
        self.w2 = w2;
        self.w1 = w - w2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("lambda_l_per_km", self.lambda_l),
            ("mu_s_per_km", self.mu_s),
            ("mu_r_per_km", self.mu_r),
            ("mu_u_per_km", self.mu_u),
            ("p_s", self.p_s),
            ("p_r", self.p_r),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("w1_mhz", self.w1),
            ("w2_mhz", self.w2),
            ("w_mhz", self.w),
        ];
        for (field, v) in finite {
            if !v.is_finite() {
                return Err(Error::invalid(field, format!("{v} is not finite")));
            }
        }
        for (field, v) in [
            ("lambda_l_per_km", self.lambda_l),
            ("mu_s_per_km", self.mu_s),
            ("mu_r_per_km", self.mu_r),
            ("mu_u_per_km", self.mu_u),
            ("w1_mhz", self.w1),
            ("w2_mhz", self.w2),
        ] {
            if v < 0.0 {
                return Err(Error::invalid(field, format!("{v} is negative")));
            }
        }
        for (field, v) in [("p_s", self.p_s), ("p_r", self.p_r)] {
            if v <= 0.0 {
                return Err(Error::invalid(field, format!("transmit power {v} must be positive")));
            }
        }
        if !(self.alpha > 2.0 && self.alpha <= self.beta) {
            return Err(Error::invalid(
                "alpha",
                format!(
                    "path-loss exponents must satisfy 2 < alpha <= beta (alpha = {}, beta = {})",
                    self.alpha, self.beta
                ),
            ));
        }
        if (self.w1 + self.w2 - self.w).abs() > 1e-9 * self.w.abs().max(1.0) {
            return Err(Error::invalid(
                "w_mhz",
                format!(
                    "bandwidths must satisfy W1 + W2 = W ({} + {} != {})",
                    self.w1, self.w2, self.w
                ),
            ));
        }
        Ok(())
    }

    /// Canonical config text; `parse_config` of the output reproduces `self`.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v:?}");
        }
        s
    }

    pub(crate) fn entries(&self) -> [(&'static str, f64); 11] {
        [
            ("lambda_l_per_km", self.lambda_l),
            ("mu_s_per_km", self.mu_s),
            ("mu_r_per_km", self.mu_r),
            ("mu_u_per_km", self.mu_u),
            ("p_s", self.p_s),
            ("p_r", self.p_r),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("w_mhz", self.w),
            ("w1_mhz", self.w1),
            ("w2_mhz", self.w2),
        ]
    }

    /// Sets one model field by its config key. `w2_mhz` and `w1_mhz` keep
    /// the total fixed; `w_mhz` keeps `w2_mhz` fixed.
    pub fn set_by_key(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "lambda_l_per_km" => self.lambda_l = value,
            "mu_s_per_km" => self.mu_s = value,
            "mu_r_per_km" => self.mu_r = value,
            "mu_u_per_km" => self.mu_u = value,
            "p_s" => self.p_s = value,
            "p_r" => self.p_r = value,
            "alpha" => self.alpha = value,
            "beta" => self.beta = value,
            "w_mhz" => {
                self.w = value;
                self.w1 = value - self.w2;
            }
            "w2_mhz" => {
                self.w2 = value;
                self.w1 = self.w - value;
            }
            "w1_mhz" => {
                self.w1 = value;
                self.w2 = self.w - value;
            }
            _ => {
                return Err(Error::invalid(
                    "sweep",
                    format!("`{key}` is not a model parameter"),
                ))
            }
        }
        Ok(())
    }
}

/// Optional run settings read from the same file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSettings {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub window_km: Option<f64>,
    pub rel_tol: Option<f64>,
    pub tau_db: Option<(f64, f64, f64)>,
}

const MODEL_KEYS: [&str; 10] = [
    "lambda_l_per_km",
    "mu_s_per_km",
    "mu_r_per_km",
    "mu_u_per_km",
    "p_s",
    "p_r",
    "alpha",
    "beta",
    "w_mhz",
    "w2_mhz",
];

pub fn load_config(path: impl AsRef<Path>) -> Result<(NetworkConfig, RunSettings)> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<(NetworkConfig, RunSettings)> {
    let mut model: BTreeMap<&str, f64> = BTreeMap::new();
    let mut settings = RunSettings::default();
    let mut w1 = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigSyntax {
            line: line_no,
            reason: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|_| Error::ConfigSyntax {
                line: line_no,
                reason: format!("`{key}`: `{v}` is not a number"),
            })
        };
        match key {
            k if MODEL_KEYS.contains(&k) => {
                let k = MODEL_KEYS.iter().find(|m| **m == k).copied().unwrap_or(k);
                model.insert(k, num(value)?);
            }
            "w1_mhz" => w1 = Some(num(value)?),
            "seed" => {
                settings.seed = Some(value.parse().map_err(|_| Error::ConfigSyntax {
                    line: line_no,
                    reason: format!("`seed`: `{value}` is not an unsigned integer"),
                })?)
            }
            "reps" => {
                settings.reps = Some(value.parse().map_err(|_| Error::ConfigSyntax {
                    line: line_no,
                    reason: format!("`reps`: `{value}` is not an unsigned integer"),
                })?)
            }
            "window_km" => settings.window_km = Some(num(value)?),
            "rel_tol" => settings.rel_tol = Some(num(value)?),
            "tau_db" => {
                settings.tau_db = Some(parse_range(value).map_err(|reason| Error::ConfigSyntax {
                    line: line_no,
                    reason,
                })?)
            }
            other => {
                return Err(Error::ConfigSyntax {
                    line: line_no,
                    reason: format!("unknown key `{other}`"),
                })
            }
        }
    }

    let get = |k: &str| -> Result<f64> { model.get(k).copied().ok_or_else(|| Error::MissingKey(k.to_string())) };
    let w = get("w_mhz")?;
    let w2 = get("w2_mhz")?;
    let cfg = NetworkConfig {
        lambda_l: get("lambda_l_per_km")?,
        mu_s: get("mu_s_per_km")?,
        mu_r: get("mu_r_per_km")?,
        mu_u: get("mu_u_per_km")?,
        p_s: get("p_s")?,
        p_r: get("p_r")?,
        alpha: get("alpha")?,
        beta: get("beta")?,
        w1: w1.unwrap_or(w - w2),
        w2,
        w,
    };
    cfg.validate()?;
    Ok((cfg, settings))
}

/// Parses `A:B:STEP` (inclusive of `B` up to rounding).
pub fn parse_range(s: &str) -> std::result::Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    let [a, b, step] = parts.as_slice() else {
        return Err(format!("range `{s}` must look like A:B:STEP"));
    };
    let p = |v: &str| v.parse::<f64>().map_err(|_| format!("range `{s}`: `{v}` is not a number"));
    let (a, b, step) = (p(a)?, p(b)?, p(step)?);
    if !(step > 0.0) || b < a {
        return Err(format!("range `{s}` needs STEP > 0 and B >= A"));
    }
    Ok((a, b, step))
}

pub fn expand_range((a, b, step): (f64, f64, f64)) -> Vec<f64> {
    let n = ((b - a) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| a + step * i as f64).collect()
}
