//! Flat `key = value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment, lists are comma-separated.
//! The recognized keys and their defaults:
//!
//! | key                 | default                      |
//! |---------------------|------------------------------|
//! | `p`                 | 1024                         |
//! | `b`                 | 8                            |
//! | `s`                 | 64                           |
//! | `sample_grid`       | 8 log-spaced points, 2s..16s |
//! | `trials`            | 10                           |
//! | `link`              | `sigmoid`                    |
//! | `design`            | `gaussian`                   |
//! | `basis.phi`         | `identity`                   |
//! | `basis.psi`         | `dct`                        |
//! | `noise.kind`        | `none`                       |
//! | `noise.sigma`       | 0                            |
//! | `solvers`           | `struct-dht,dht,dst`         |
//! | `success_threshold` | 0.05                         |
//! | `master_seed`       | 0                            |
//! | `step_size`         | `auto`, `spectral` or number |
//! | `max_iters`         | 500                          |
//! | `stop_tol`          | 1e-9                         |
//! | `init`              | `zero`                       |
//! | `dst.mode`          | `entrywise`                  |
//! | `dst.lambda`        | `auto`                       |
//! | `record_wall_time`  | `false`                      |
//! | `n`                 | last grid entry (`solve`)    |
//! | `solver`            | `struct-dht` (`solve`)       |

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::bench::{default_sample_grid, DesignKind, ExperimentSpec, InitKind, SolverId, StepRule};
use crate::error::{DemixError, Result};
use crate::model::{LinkFunction, NoiseKind, NoiseSpec};
use crate::operators::BasisKind;
use crate::solvers::{DstMode, Lambda};

pub const KEYS: &[&str] = &[
    "p",
    "b",
    "s",
    "sample_grid",
    "trials",
    "link",
    "design",
    "basis.phi",
    "basis.psi",
    "noise.kind",
    "noise.sigma",
    "solvers",
    "success_threshold",
    "master_seed",
    "step_size",
    "max_iters",
    "stop_tol",
    "init",
    "dst.mode",
    "dst.lambda",
    "record_wall_time",
    "n",
    "solver",
];

fn config_err(key: &str, message: impl Into<String>) -> DemixError {
    DemixError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Raw key/value assignments, validated against [`KEYS`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(config_err(
                    line,
                    format!("line {}: expected `key = value`", lineno + 1),
                ));
            };
            map.set(k.trim(), v.trim())?;
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DemixError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(config_err(key, "unknown key"));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| config_err(assignment, "override must be `key=value`"))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e: T::Err| config_err(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(|x| {
                x.parse()
                    .map_err(|e: T::Err| config_err(key, format!("cannot parse `{x}`: {e}")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Resolves the assignments into a validated experiment spec.
    pub fn to_spec(&self) -> Result<ExperimentSpec> {
        let p = self.parsed("p", 1024usize)?;
        let b = self.parsed("b", 8usize)?;
        let s = self.parsed("s", 64usize)?;
        let sample_grid = match self.list::<usize>("sample_grid")? {
            Some(g) => g,
            None => default_sample_grid(s),
        };
        let noise_kind = match self.get("noise.kind").unwrap_or("none") {
            "none" => NoiseKind::None,
            "gaussian" => NoiseKind::Gaussian,
            other => return Err(config_err("noise.kind", format!("unknown noise kind `{other}`"))),
        };
        let sigma = self.parsed("noise.sigma", 0.0f64)?;
        let noise = match noise_kind {
            NoiseKind::None if sigma != 0.0 => {
                return Err(config_err("noise.sigma", "must be 0 when noise.kind = none"))
            }
            NoiseKind::None => NoiseSpec::none(),
            NoiseKind::Gaussian => {
                NoiseSpec::gaussian(sigma).map_err(|e| config_err("noise.sigma", e.to_string()))?
            }
        };
        let solvers = self
            .list::<SolverId>("solvers")?
            .unwrap_or_else(|| SolverId::ALL.to_vec());
        let dst_lambda = match self.get("dst.lambda").unwrap_or("auto") {
            "auto" => Lambda::Auto,
            v => Lambda::Fixed(
                v.parse()
                    .map_err(|e| config_err("dst.lambda", format!("cannot parse `{v}`: {e}")))?,
            ),
        };
        let spec = ExperimentSpec {
            p,
            b,
            s,
            sample_grid,
            trials: self.parsed("trials", 10usize)?,
            link: self.parsed("link", LinkFunction::ShiftedSigmoid)?,
            design: self.parsed("design", DesignKind::Gaussian)?,
            phi: self.parsed("basis.phi", BasisKind::Identity)?,
            psi: self.parsed("basis.psi", BasisKind::Dct)?,
            noise,
            solvers,
            success_threshold: self.parsed("success_threshold", 0.05f64)?,
            master_seed: self.parsed("master_seed", 0u64)?,
            step_size: self.parsed("step_size", StepRule::Auto)?,
            max_iters: self.parsed("max_iters", 500usize)?,
            stop_tol: self.parsed("stop_tol", 1e-9f64)?,
            init: self.parsed("init", InitKind::Zero)?,
            dst_mode: self.parsed("dst.mode", DstMode::Entrywise)?,
            dst_lambda,
            record_wall_time: self.parsed("record_wall_time", false)?,
            n: self.list::<usize>("n")?.and_then(|v| v.first().copied()),
            solver: self.parsed("solver", SolverId::StructDht)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Loads a config file and applies overrides in order.
pub fn load_spec(path: &Path, overrides: &[String]) -> Result<ExperimentSpec> {
    let mut map = ConfigMap::load(path)?;
    for o in overrides {
        map.apply_override(o)?;
    }
    map.to_spec()
}
