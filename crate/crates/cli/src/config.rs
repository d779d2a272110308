//! Run configuration: a JSON file merged with command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

/// Every key a config file may set. Paths are resolved against the directory
/// of the config file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<PathBuf>,
    #[serde(rename = "L")]
    pub len: Option<usize>,
    pub lambda: Option<f64>,
    pub sweep: Option<usize>,
    pub rates: Option<[f64; 2]>,
    /// rates as a multiple of the region point at `lambda`
    pub scale: Option<f64>,
    pub slots: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub scheduler: Option<String>,
    pub dist: Option<PathBuf>,
    pub witness: Option<PathBuf>,
    pub sandwich: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub horizon: Option<usize>,
    pub samples: Option<usize>,
}

macro_rules! merge_fields {
    ($a:ident, $b:ident; $($f:ident),*) => {
        RunConfig { $($f: $a.$f.or($b.$f)),* }
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CliError::Config(format!("config file not found: {}", path.display()))
            } else {
                CliError::Config(format!("cannot read {}: {e}", path.display()))
            }
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.model,
            &mut cfg.out,
            &mut cfg.dist,
            &mut cfg.witness,
            &mut cfg.sandwich,
            &mut cfg.csv,
            &mut cfg.trace,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Fields set in `self` win over `file`.
    pub fn over(self, file: RunConfig) -> RunConfig {
        let a = self;
        let b = file;
        merge_fields!(a, b; model, len, lambda, sweep, rates, scale, slots, seed, out, scheduler,
            dist, witness, sandwich, csv, trace, horizon, samples)
    }

    pub fn model(&self) -> Result<&Path, CliError> {
        self.model
            .as_deref()
            .ok_or_else(|| CliError::Config("no model given (--model or \"model\")".into()))
    }

    pub fn len(&self) -> Result<usize, CliError> {
        self.len
            .ok_or_else(|| CliError::Config("no window length given (--L or \"L\")".into()))
    }

    pub fn lambda(&self) -> Result<f64, CliError> {
        match self.lambda {
            Some(l) if (0.0..=1.0).contains(&l) => Ok(l),
            Some(l) => Err(CliError::Config(format!("lambda = {l} is not in [0, 1]"))),
            None => Ok(0.5),
        }
    }
}

/// Parses `R1,R2`.
pub fn parse_rates(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b] = parts.as_slice() else {
        return Err(format!("expected R1,R2, got {s:?}"));
    };
    let num = |t: &str| t.parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok([num(a)?, num(b)?])
}
