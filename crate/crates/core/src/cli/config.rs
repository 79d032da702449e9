//! Resolved run parameters: defaults, `key = value` config files and flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Serialize, Serializer};

use super::CliError;
use crate::dynamics::{ProximityKind, ProximitySpec, RateKind, RateModel};
use crate::format::{fmt_complex, parse_complex};
use crate::kernel::{AdmissiblePair, Window};

pub const DEFAULT_Z: &str = "1.5";
pub const DEFAULT_ZP: &str = "1.7";
pub const DEFAULT_WINDOW: &str = "-4..4";
pub const DEFAULT_T_MAX: f64 = 10.0;
pub const DEFAULT_N_SAMPLES: usize = 1000;
pub const DEFAULT_OUTPUT_DIR: &str = "kawasaki-dpp-out";

/// Raw settings from one source; `None` means "not given here".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub z: Option<String>,
    pub zp: Option<String>,
    pub window: Option<String>,
    pub seed: Option<u64>,
    pub rate_model: Option<String>,
    pub proximity: Option<String>,
    pub weight: Option<f64>,
    pub t_max: Option<f64>,
    pub n_samples: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl Settings {
    /// Values from `self` win over `other`.
    pub fn or(self, other: Settings) -> Settings {
        Settings {
            z: self.z.or(other.z),
            zp: self.zp.or(other.zp),
            window: self.window.or(other.window),
            seed: self.seed.or(other.seed),
            rate_model: self.rate_model.or(other.rate_model),
            proximity: self.proximity.or(other.proximity),
            weight: self.weight.or(other.weight),
            t_max: self.t_max.or(other.t_max),
            n_samples: self.n_samples.or(other.n_samples),
            output_dir: self.output_dir.or(other.output_dir),
        }
    }

    /// Parse a `key = value` file. Blank lines and `#` comments are ignored.
    pub fn parse_file_contents(text: &str) -> Result<Settings, CliError> {
        let mut s = Settings::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad =
                |msg: &str| CliError::Usage(format!("config line {}: {msg}: {raw:?}", lineno + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad("expected key = value"))?;
            let key = key.trim();
            let value = value.trim().trim_matches('"').to_string();
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad("not a number"));
            match key {
                "z" => s.z = Some(value),
                "zp" | "z_prime" => s.zp = Some(value),
                "window" => s.window = Some(value),
                "seed" => {
                    s.seed = Some(
                        value
                            .parse()
                            .map_err(|_| bad("seed must be a non-negative integer"))?,
                    )
                }
                "rate_model" | "rate-model" => s.rate_model = Some(value),
                "proximity" => s.proximity = Some(value),
                "weight" => s.weight = Some(num(&value)?),
                "t_max" | "t-max" => s.t_max = Some(num(&value)?),
                "n_samples" | "n-samples" => {
                    s.n_samples = Some(
                        value
                            .parse()
                            .map_err(|_| bad("n_samples must be a positive integer"))?,
                    )
                }
                "output_dir" | "output-dir" => s.output_dir = Some(PathBuf::from(value)),
                _ => return Err(bad("unknown key")),
            }
        }
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Settings, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
        Self::parse_file_contents(&text)
    }
}

/// `lo..hi` in integer site indices.
pub fn parse_window(text: &str) -> Result<Window, CliError> {
    let bad = || {
        CliError::Usage(format!(
            "--window {text:?}: expected lo..hi with integer indices"
        ))
    };
    let (lo, hi) = text.split_once("..").ok_or_else(bad)?;
    let lo: i64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: i64 = hi.trim().parse().map_err(|_| bad())?;
    Window::new(lo, hi).map_err(|e| CliError::Usage(format!("--window {text:?}: {e}")))
}

fn display<T: std::fmt::Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn complex<S: Serializer>(v: &Complex64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&fmt_complex(*v))
}

/// Every parameter of a run after defaults, config file and flags merge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(serialize_with = "complex")]
    pub z: Complex64,
    #[serde(serialize_with = "complex")]
    pub z_prime: Complex64,
    #[serde(serialize_with = "display")]
    pub window: Window,
    #[serde(serialize_with = "display")]
    pub rate_model: RateKind,
    #[serde(serialize_with = "display")]
    pub proximity: ProximityKind,
    pub proximity_weight: f64,
    pub t_max: f64,
    pub seed: u64,
    pub n_samples: usize,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Merge `flags` over `file` over the defaults and validate.
    pub fn resolve(flags: Settings, file: Settings) -> Result<RunConfig, CliError> {
        let s = flags.or(file);
        let z_text = s.z.as_deref().unwrap_or(DEFAULT_Z);
        let zp_text = s.zp.as_deref().unwrap_or(DEFAULT_ZP);
        let z = parse_complex(z_text).map_err(|e| CliError::Usage(format!("--z: {e}")))?;
        let z_prime = parse_complex(zp_text).map_err(|e| CliError::Usage(format!("--zp: {e}")))?;
        let window = parse_window(s.window.as_deref().unwrap_or(DEFAULT_WINDOW))?;
        let rate_model: RateKind = s
            .rate_model
            .as_deref()
            .unwrap_or("metropolis")
            .parse()
            .map_err(|e| CliError::Usage(format!("--rate-model: {e}")))?;
        let proximity: ProximityKind = s
            .proximity
            .as_deref()
            .unwrap_or("nn")
            .parse()
            .map_err(|e| CliError::Usage(format!("--proximity: {e}")))?;
        let proximity_weight = s.weight.unwrap_or(1.0);
        ProximitySpec::new(proximity, proximity_weight)
            .map_err(|e| CliError::Usage(format!("--proximity/--weight: {e}")))?;
        let t_max = s.t_max.unwrap_or(DEFAULT_T_MAX);
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(CliError::Usage(format!(
                "--t-max {t_max}: must be positive and finite"
            )));
        }
        let n_samples = s.n_samples.unwrap_or(DEFAULT_N_SAMPLES);
        if n_samples == 0 {
            return Err(CliError::Usage("--n-samples must be at least 1".into()));
        }
        Ok(RunConfig {
            z,
            z_prime,
            window,
            rate_model,
            proximity,
            proximity_weight,
            t_max,
            seed: s.seed.unwrap_or(0),
            n_samples,
            output_dir: s
                .output_dir
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        })
    }

    pub fn pair(&self) -> Result<AdmissiblePair, CliError> {
        AdmissiblePair::new(self.z, self.z_prime)
            .map_err(|e| CliError::Usage(format!("--z/--zp: {e}")))
    }

    pub fn model(&self) -> RateModel {
        let spec = ProximitySpec::new(self.proximity, self.proximity_weight)
            .expect("validated on resolve");
        RateModel::new(self.rate_model, spec)
    }

    pub fn to_map(&self) -> BTreeMap<String, serde_json::Value> {
        match serde_json::to_value(self).expect("serializable") {
            serde_json::Value::Object(m) => m.into_iter().collect(),
            _ => unreachable!("struct serializes to an object"),
        }
    }
}
