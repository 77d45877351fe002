//! Run configuration files and ε values.
//!
//! A config file is a TOML table whose keys are the long flag names of the subcommand
//! (`eps-final = "0.1h2"`, `max-iter = 500`, `input = ["a.csv", "b.csv"]`). Keys become
//! flags placed before the command-line arguments, so flags given explicitly win.

use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::Command;

/// An ε given either absolutely or in units of h² (`0.1h2`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eps {
    Absolute(f64),
    TimesH2(f64),
}

impl Eps {
    pub fn resolve(self, h: f64) -> f64 {
        match self {
            Eps::Absolute(v) => v,
            Eps::TimesH2(k) => k * h * h,
        }
    }
}

impl FromStr for Eps {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let (num, h2) = match s.strip_suffix("h2") {
            Some(n) => (n, true),
            None => (s, false),
        };
        let v: f64 = num.trim().parse().map_err(|_| format!("bad eps value {s:?} (expected e.g. 1e-3 or 0.1h2)"))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(format!("eps must be positive and finite, got {s:?}"));
        }
        Ok(if h2 { Eps::TimesH2(v) } else { Eps::Absolute(v) })
    }
}

fn scalar(key: &str, v: &toml::Value) -> Result<String> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        other => bail!("config key {key:?}: unsupported value {other}"),
    })
}

/// Flags for `sub` read from the config file at `path`.
pub fn config_args(path: &Path, sub: &Command) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let table: toml::Table = text.parse().with_context(|| format!("parsing config {}", path.display()))?;
    let mut args = Vec::new();
    for (key, value) in &table {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && key != "config")
            .with_context(|| format!("{}: unknown key {key:?} for `{}`", path.display(), sub.get_name()))?;
        let flag = format!("--{key}");
        match value {
            toml::Value::Boolean(b) => {
                if arg.get_num_args().is_some_and(|n| n.takes_values()) {
                    bail!("config key {key:?} expects a value, not a boolean");
                }
                if *b {
                    args.push(flag);
                }
            }
            toml::Value::Array(items) => {
                for item in items {
                    args.push(flag.clone());
                    args.push(scalar(key, item)?);
                }
            }
            v => {
                args.push(flag);
                args.push(scalar(key, v)?);
            }
        }
    }
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eps_suffix() {
        assert_eq!("0.1h2".parse::<Eps>().unwrap().resolve(0.5), 0.025);
        assert_eq!("1e-3".parse::<Eps>().unwrap(), Eps::Absolute(1e-3));
        assert!("-1".parse::<Eps>().is_err());
        assert!("h2".parse::<Eps>().is_err());
    }
}
