//! TOML config files become extra command-line arguments.
//!
//! Top-level keys are global flags; a table named after a subcommand holds
//! that subcommand's flags. Config arguments are placed before the ones
//! typed on the command line, and every flag keeps its last value, so typed
//! flags take precedence.
//!
//! ```toml
//! seed = 7
//! format = "jsonl"
//!
//! [synth]
//! hr = 90
//! snr-db = 10
//! ```

use std::path::{Path, PathBuf};

pub const CONFIG_ENV: &str = "RPPG_CONFIG";

/// Global flags that take a value.
const GLOBAL_VALUE_FLAGS: [&str; 4] = ["--config", "--seed", "--jobs", "--format"];

fn flag_args(key: &str, value: &toml::Value, out: &mut Vec<String>) -> Result<(), String> {
    let flag = format!("--{}", key.replace('_', "-"));
    match value {
        toml::Value::Boolean(true) => out.push(flag),
        toml::Value::Boolean(false) => {}
        toml::Value::String(s) => out.push(format!("{flag}={s}")),
        toml::Value::Integer(i) => out.push(format!("{flag}={i}")),
        toml::Value::Float(f) => out.push(format!("{flag}={f}")),
        toml::Value::Array(items) => {
            for v in items {
                flag_args(key, v, out)?;
            }
        }
        other => return Err(format!("config key {key}: unsupported value {other}")),
    }
    Ok(())
}

/// Config path from `--config`, else the environment.
fn config_path(args: &[String]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Index of the subcommand among `args` (program name excluded).
fn subcommand_index(args: &[String], names: &[&str]) -> Option<usize> {
    let mut i = 0;
    while i < args.len() {
        let a = &args[i];
        if GLOBAL_VALUE_FLAGS.contains(&a.as_str()) {
            i += 2;
            continue;
        }
        if names.contains(&a.as_str()) {
            return Some(i);
        }
        if !a.starts_with('-') {
            return None;
        }
        i += 1;
    }
    None
}

fn load(path: &Path) -> Result<toml::Table, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.parse::<toml::Table>().map_err(|e| format!("{}: {e}", path.display()))
}

/// Full argument list with config values spliced in. `args` includes the
/// program name.
pub fn expand(args: Vec<String>, subcommands: &[&str]) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&args[1..]) else {
        return Ok(args);
    };
    let table = load(&path)?;
    let mut global = Vec::new();
    for (k, v) in &table {
        if !v.is_table() {
            if k == "config" {
                return Err("config files cannot name another config".into());
            }
            flag_args(k, v, &mut global)?;
        }
    }
    let rest = &args[1..];
    let mut out = vec![args[0].clone()];
    out.extend(global);
    match subcommand_index(rest, subcommands) {
        Some(i) => {
            out.extend_from_slice(&rest[..=i]);
            if let Some(toml::Value::Table(t)) = table.get(&rest[i]) {
                for (k, v) in t {
                    flag_args(k, v, &mut out)?;
                }
            }
            out.extend_from_slice(&rest[i + 1..]);
        }
        None => out.extend_from_slice(rest),
    }
    Ok(out)
}
