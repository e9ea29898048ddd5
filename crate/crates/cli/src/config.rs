//! Flat key-value experiment configs with INI-style sections.
//!
//! The grammar is line-oriented: `[section]` headers, `key = value` pairs,
//! blank lines, and comments starting with `#` or `;`. Keys before the first
//! header live in the top-level section, addressed as `key` without a
//! bracket prefix. Every key must be consumed by the experiment that loads
//! the file; leftovers are reported as config errors so that typos never
//! pass silently.

use std::cell::RefCell;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use entrolab::fields::SigmaModel;
use entrolab::functionals::ThermoModel;
use entrolab::transport::KappaModel;
use entrolab::zrp::{sigma_from_rates, RateFunction, ZrpModel};

/// Error carrying a user-facing message that names the offending field.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
}

pub struct Config {
    entries: Vec<Entry>,
    consumed: RefCell<Vec<bool>>,
}

/// Render a key as it appears in error messages: `[section].key` or a bare
/// top-level `key`.
pub fn field(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("[{section}].{key}")
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<Entry> = Vec::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('[') {
                match rest.strip_suffix(']') {
                    Some(name) if !name.trim().is_empty() => {
                        section = name.trim().to_string();
                        continue;
                    }
                    _ => return err(format!("malformed section header at line {line}")),
                }
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return err(format!("expected key = value at line {line}"));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return err(format!("empty key at line {line}"));
            }
            if let Some(prev) = entries
                .iter()
                .find(|e| e.section == section && e.key == key)
            {
                return err(format!(
                    "duplicate key {} at line {line} (first set at line {})",
                    field(&section, &key),
                    prev.line
                ));
            }
            entries.push(Entry {
                section: section.clone(),
                key,
                value,
                line,
            });
        }
        let n = entries.len();
        Ok(Self {
            entries,
            consumed: RefCell::new(vec![false; n]),
        })
    }

    fn lookup(&self, section: &str, key: &str) -> Option<&Entry> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.section == section && e.key == key {
                self.consumed.borrow_mut()[i] = true;
                return Some(e);
            }
        }
        None
    }

    /// Raw string value, if present.
    pub fn raw(&self, section: &str, key: &str) -> Option<String> {
        self.lookup(section, key).map(|e| e.value.clone())
    }

    /// Optional typed value.
    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: Display,
    {
        match self.lookup(section, key) {
            None => Ok(None),
            Some(e) => match e.value.parse::<T>() {
                Ok(v) => Ok(Some(v)),
                Err(why) => err(format!(
                    "bad value for {} at line {}: {why}",
                    field(section, key),
                    e.line
                )),
            },
        }
    }

    /// Required typed value.
    pub fn require<T: FromStr>(&self, section: &str, key: &str) -> Result<T, ConfigError>
    where
        T::Err: Display,
    {
        match self.get(section, key)? {
            Some(v) => Ok(v),
            None => err(format!("missing required key {}", field(section, key))),
        }
    }

    /// Error out on any key no experiment consumed.
    pub fn finish(&self) -> Result<(), ConfigError> {
        let consumed = self.consumed.borrow();
        for (e, &used) in self.entries.iter().zip(consumed.iter()) {
            if !used {
                return err(format!(
                    "unknown key {} at line {}",
                    field(&e.section, &e.key),
                    e.line
                ));
            }
        }
        Ok(())
    }
}

fn positive(value: f64, name: &str) -> Result<f64, ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        err(format!("{name} must be a positive finite number, got {value}"))
    }
}

/// Split `spec` at the first `:` into a name and its argument string.
pub fn name_and_args(spec: &str) -> (&str, Option<&str>) {
    match spec.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (spec, None),
    }
}

pub fn float_list(args: &str, name: &str) -> Result<Vec<f64>, ConfigError> {
    args.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| ConfigError(format!("bad number in {name}: {e}")))
        })
        .collect()
}

pub fn parse_thermo(spec: &str, name: &str) -> Result<ThermoModel, ConfigError> {
    match name_and_args(spec) {
        ("ideal-monatomic", None) => Ok(ThermoModel::ideal_monatomic()),
        ("ideal-gas", Some(arg)) => {
            let c = float_list(arg, name)?;
            if c.len() != 1 {
                return err(format!("{name}: ideal-gas takes one heat capacity"));
            }
            ThermoModel::ideal_gas(positive(c[0], name)?)
                .map_err(|e| ConfigError(format!("{name}: {e}")))
        }
        _ => err(format!(
            "{name}: unknown thermo model '{spec}' (try ideal-monatomic or ideal-gas:<c>)"
        )),
    }
}

pub fn parse_kappa(spec: &str, name: &str) -> Result<KappaModel, ConfigError> {
    match name_and_args(spec) {
        ("constant", Some(arg)) => Ok(KappaModel::Constant(positive(
            arg.trim()
                .parse()
                .map_err(|e| ConfigError(format!("{name}: {e}")))?,
            name,
        )?)),
        ("proportional", Some(arg)) => Ok(KappaModel::Proportional(positive(
            arg.trim()
                .parse()
                .map_err(|e| ConfigError(format!("{name}: {e}")))?,
            name,
        )?)),
        _ => err(format!(
            "{name}: unknown conductivity '{spec}' (try constant:<c> or proportional:<c>)"
        )),
    }
}

/// Number of tabulation knots used when a constitutive law is derived from
/// jump rates.
pub const SIGMA_TABLE_POINTS: usize = 512;

pub fn parse_sigma(spec: &str, name: &str) -> Result<SigmaModel, ConfigError> {
    let zrp_table = |rate: RateFunction, arg: &str| -> Result<SigmaModel, ConfigError> {
        let z_max = positive(
            arg.trim()
                .parse()
                .map_err(|e| ConfigError(format!("{name}: {e}")))?,
            name,
        )?;
        let model = ZrpModel::new(2, rate, z_max, z_max)
            .map_err(|e| ConfigError(format!("{name}: {e}")))?;
        sigma_from_rates(&model, SIGMA_TABLE_POINTS)
            .map_err(|e| ConfigError(format!("{name}: {e}")))
    };
    match name_and_args(spec) {
        ("identity", None) => Ok(SigmaModel::Identity),
        ("power", Some(arg)) => SigmaModel::power(
            arg.trim()
                .parse()
                .map_err(|e| ConfigError(format!("{name}: {e}")))?,
        )
        .map_err(|e| ConfigError(format!("{name}: {e}"))),
        ("saturating", None) => Ok(SigmaModel::Saturating),
        ("zrp-linear", Some(arg)) => zrp_table(RateFunction::Linear, arg),
        ("zrp-constant", Some(arg)) => zrp_table(RateFunction::Constant, arg),
        _ => err(format!(
            "{name}: unknown constitutive law '{spec}' (try identity, power:<p>, \
             saturating, zrp-linear:<z_max>, or zrp-constant:<z_max>)"
        )),
    }
}

pub fn parse_rate(spec: &str, name: &str) -> Result<RateFunction, ConfigError> {
    match name_and_args(spec) {
        ("linear", None) => Ok(RateFunction::Linear),
        ("constant", None) => Ok(RateFunction::Constant),
        ("table", Some(arg)) => {
            let g = float_list(arg, name)?;
            if g.is_empty() {
                return err(format!("{name}: empty rate table"));
            }
            Ok(RateFunction::Table(g))
        }
        _ => err(format!(
            "{name}: unknown jump rate '{spec}' (try linear, constant, or table:<g1,g2,...>)"
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_types() {
        let cfg = Config::parse(
            "kind = heat-closed\n\n[grid]\ncells = 64 # not a comment\n; note\nlength = 1.5\n",
        )
        .unwrap();
        assert_eq!(cfg.raw("", "kind").unwrap(), "heat-closed");
        // Inline trailing text is part of the value; only whole-line
        // comments are stripped.
        assert!(cfg.get::<usize>("grid", "cells").is_err());
        assert_eq!(cfg.require::<f64>("grid", "length").unwrap(), 1.5);
    }

    #[test]
    fn rejects_duplicates_and_leftovers() {
        assert!(Config::parse("a = 1\na = 2\n").is_err());
        let cfg = Config::parse("[time]\ndt = auto\n").unwrap();
        let e = cfg.finish().unwrap_err();
        assert!(e.0.contains("[time].dt"), "{}", e.0);
    }

    #[test]
    fn model_specs_round_trip() {
        assert_eq!(
            parse_sigma("identity", "[model].sigma").unwrap(),
            SigmaModel::Identity
        );
        assert!(matches!(
            parse_sigma("power:2.0", "[model].sigma").unwrap(),
            SigmaModel::Power { .. }
        ));
        assert!(parse_sigma("cubic", "[model].sigma").is_err());
        assert!(parse_kappa("constant:1.0", "[model].kappa").is_ok());
        assert!(parse_kappa("constant:-1.0", "[model].kappa").is_err());
        assert!(parse_thermo("ideal-gas:1.0", "[model].thermo").is_ok());
        assert!(matches!(
            parse_rate("table:1.0,2.0", "[zrp].rate").unwrap(),
            RateFunction::Table(_)
        ));
    }
}
