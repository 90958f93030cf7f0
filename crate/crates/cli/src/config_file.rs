//! TOML run configuration.
//!
//! A file holds top-level run keys plus the sections `[env]`, `[task]`,
//! `[critic]`, `[progress]`, `[grpo]`, `[policy]`, `[eval]` and
//! `[schedule]`. Anything left out takes its default. Besides explicit
//! `stages`, `[schedule]` accepts the shorthand
//!
//! ```toml
//! [schedule]
//! ladder = 3                 # geometric doubling ladder ending at env.max_horizon_cap
//! iterations_per_stage = 50  # optional, defaults to num_iterations / ladder
//! ```
//!
//! Overrides are `dotted.key=value` pairs applied on top of the file; the
//! value is read as a TOML literal and falls back to a plain string.
//! `seed` is accepted as an alias of `master_seed`.

use std::path::Path;

use chainttt_core::{HorizonSchedule, RunConfig};
use serde::Deserialize;
use toml::{Table, Value};

use crate::{CliError, Result};

const SCHEDULE_KEYS: &[&str] = &["stages", "ladder", "iterations_per_stage"];

/// Reads, overrides, materializes and validates a run configuration.
pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text, overrides).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {}", path.display(), m)),
        other => other,
    })
}

/// [`load_config`] on in-memory text.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut table: Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(seed) = table.remove("seed") {
        if table.contains_key("master_seed") {
            return Err(CliError::Config(
                "`seed` and `master_seed` are aliases; give only one".into(),
            ));
        }
        table.insert("master_seed".into(), seed);
    }
    for (key, value) in overrides {
        let key = if key == "seed" {
            "master_seed"
        } else {
            key.as_str()
        };
        apply_override(&mut table, key, value)?;
    }
    let ladder = take_ladder(&mut table)?;
    let mut config = RunConfig::deserialize(Value::Table(table))
        .map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?
        .materialize();
    if let Some((stages, per_stage)) = ladder {
        let per_stage = match per_stage {
            Some(n) => n,
            None => (config.num_iterations / stages as u64).max(1),
        };
        config.schedule = HorizonSchedule::geometric(config.env.max_horizon_cap, stages, per_stage);
    }
    config.validate()?;
    Ok(config)
}

/// Splits `key=value`.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    match arg.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(CliError::Config(format!(
            "override `{}` is not of the form key=value",
            arg
        ))),
    }
}

/// The resolved configuration as TOML. Loading it back yields an equal
/// [`RunConfig`].
pub fn to_toml(config: &RunConfig) -> Result<String> {
    toml::to_string_pretty(config)
        .map_err(|e| CliError::Runtime(format!("serializing config: {}", e)))
}

fn override_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {}", raw))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn apply_override(table: &mut Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!(
            "override key `{}` is malformed",
            key
        )));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut current = table;
    for (i, part) in parents.iter().enumerate() {
        let entry = current
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        current = entry.as_table_mut().ok_or_else(|| {
            CliError::Config(format!(
                "override `{}`: `{}` is not a section",
                key,
                parts[..=i].join(".")
            ))
        })?;
    }
    current.insert(last.to_string(), override_value(raw));
    Ok(())
}

/// Removes the ladder shorthand from `[schedule]`, returning
/// `(stages, iterations_per_stage)`.
fn take_ladder(table: &mut Table) -> Result<Option<(u32, Option<u64>)>> {
    let Some(schedule) = table.get_mut("schedule") else {
        return Ok(None);
    };
    let schedule = schedule
        .as_table_mut()
        .ok_or_else(|| CliError::Config("`schedule` must be a section".into()))?;
    if let Some(k) = schedule
        .keys()
        .find(|k| !SCHEDULE_KEYS.contains(&k.as_str()))
    {
        return Err(CliError::Config(format!(
            "unknown field `{}` in [schedule], expected one of {}",
            k,
            SCHEDULE_KEYS
                .iter()
                .map(|k| format!("`{}`", k))
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    let Some(ladder) = schedule.remove("ladder") else {
        if schedule.contains_key("iterations_per_stage") {
            return Err(CliError::Config(
                "schedule.iterations_per_stage needs schedule.ladder".into(),
            ));
        }
        return Ok(None);
    };
    if schedule.contains_key("stages") {
        return Err(CliError::Config(
            "schedule.ladder and schedule.stages are mutually exclusive".into(),
        ));
    }
    let stages = ladder
        .as_integer()
        .filter(|n| (1..=16).contains(n))
        .ok_or_else(|| CliError::Config("schedule.ladder must be an integer in [1, 16]".into()))?;
    let per_stage = match schedule.remove("iterations_per_stage") {
        None => None,
        Some(v) => Some(v.as_integer().filter(|n| *n >= 1).ok_or_else(|| {
            CliError::Config("schedule.iterations_per_stage must be a positive integer".into())
        })? as u64),
    };
    table.remove("schedule");
    Ok(Some((stages as u32, per_stage)))
}
