//! TOML config files. Top-level scalars and `[<subcommand>]` tables become
//! flags for the chosen subcommand unless the same flag is given on the
//! command line; `[models.<name>]` tables define external engines.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use clap::parser::ValueSource;
use clap::{ArgMatches, Command};
use irsr_core::runner::DEFAULT_TIMEOUT;
use irsr_core::{Error, ModelSpec, Result};
use toml::{Table, Value};

#[derive(Debug, Default, Clone)]
pub struct Config {
    flags: Table,
    sections: BTreeMap<String, Table>,
    pub models: BTreeMap<String, ModelSpec>,
}

fn bad(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("config {}: {msg}", path.display()))
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let table: Table = text.parse().map_err(|e| bad(path, e))?;
        let mut cfg = Config::default();
        for (key, value) in table {
            match value {
                Value::Table(t) if key == "models" => {
                    for (name, def) in t {
                        let def = match def {
                            Value::Table(d) => d,
                            _ => return Err(bad(path, format!("models.{name} must be a table"))),
                        };
                        cfg.models
                            .insert(name.clone(), model_from_table(&name, &def, path)?);
                    }
                }
                Value::Table(t) => {
                    cfg.sections.insert(key.replace('_', "-"), t);
                }
                other => {
                    cfg.flags.insert(key, other);
                }
            }
        }
        Ok(cfg)
    }

    /// Flags for `sub`, skipping any the user already passed.
    pub fn args_for(&self, cmd: &Command, sub: &str, given: &ArgMatches) -> Result<Vec<String>> {
        let sub_cmd = cmd
            .find_subcommand(sub)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown subcommand `{sub}`")))?;
        let mut merged: BTreeMap<String, (Value, bool)> = BTreeMap::new();
        for (k, v) in &self.flags {
            merged.insert(k.replace('_', "-"), (v.clone(), false));
        }
        if let Some(section) = self.sections.get(sub) {
            for (k, v) in section {
                merged.insert(k.replace('_', "-"), (v.clone(), true));
            }
        }
        let mut out = Vec::new();
        for (key, (value, explicit)) in merged {
            let arg = sub_cmd
                .get_arguments()
                .find(|a| a.get_long() == Some(key.as_str()));
            let Some(arg) = arg else {
                if explicit {
                    return Err(Error::InvalidArgument(format!(
                        "`{sub}` has no --{key} option"
                    )));
                }
                continue;
            };
            if given.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine) {
                continue;
            }
            let flag = format!("--{key}");
            match value {
                Value::Boolean(true) => out.push(flag),
                Value::Boolean(false) => {}
                Value::Array(items) => {
                    for item in items {
                        out.push(flag.clone());
                        out.push(scalar(&item, &key)?);
                    }
                }
                v => {
                    out.push(flag);
                    out.push(scalar(&v, &key)?);
                }
            }
        }
        Ok(out)
    }
}

fn scalar(v: &Value, key: &str) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Integer(i) => Ok(i.to_string()),
        Value::Float(f) => Ok(f.to_string()),
        Value::Boolean(b) => Ok(b.to_string()),
        _ => Err(Error::InvalidArgument(format!(
            "config key `{key}` must be a scalar or a list"
        ))),
    }
}

fn model_from_table(name: &str, def: &Table, path: &Path) -> Result<ModelSpec> {
    let command = def
        .get("command")
        .and_then(Value::as_str)
        .ok_or_else(|| bad(path, format!("models.{name} needs a `command` string")))?;
    let window = match def.get("window_multiple") {
        None => 1,
        Some(v) => v.as_integer().filter(|&w| w >= 1).ok_or_else(|| {
            bad(
                path,
                format!("models.{name}.window_multiple must be a positive integer"),
            )
        })? as usize,
    };
    let timeout = match def.get("timeout") {
        None => DEFAULT_TIMEOUT,
        Some(v) => {
            let secs = v
                .as_float()
                .or_else(|| v.as_integer().map(|i| i as f64))
                .filter(|s| *s > 0.0 && s.is_finite())
                .ok_or_else(|| {
                    bad(
                        path,
                        format!("models.{name}.timeout must be a positive number of seconds"),
                    )
                })?;
            Duration::from_secs_f64(secs)
        }
    };
    ModelSpec::external(name, command, window, timeout)
}
