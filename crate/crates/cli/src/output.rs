//! Run metadata, output files and error reporting.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use tracelab_core::defaults::{DefaultsTable, Precision};

use crate::commands::Command;

/// Invalid input detected by the CLI itself.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Some seeds failed after the surviving results were written.
#[derive(Debug)]
pub struct PartialFailure(pub String);

impl std::fmt::Display for PartialFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for PartialFailure {}

fn core_error(e: &anyhow::Error) -> Option<&tracelab_core::Error> {
    e.chain()
        .find_map(|c| c.downcast_ref::<tracelab_core::Error>())
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match core_error(e) {
        Some(core) if core.is_config_error() => 2,
        _ => 3,
    }
}

pub fn error_kind(e: &anyhow::Error) -> &'static str {
    if e.downcast_ref::<ConfigError>().is_some() {
        "config"
    } else if e.downcast_ref::<PartialFailure>().is_some() {
        "partial"
    } else if let Some(core) = core_error(e) {
        core.kind()
    } else {
        "io"
    }
}

/// One JSON object on stderr.
pub fn emit_error(kind: &str, message: &str, code: u8) {
    let body =
        serde_json::json!({ "error": kind, "message": message.trim_end(), "exit_code": code });
    eprintln!("{body}");
}

/// Everything needed to reproduce a run, embedded in each output file.
#[derive(Debug, Clone, Serialize)]
pub struct Meta<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: &'a Command,
    pub rng_seed: u64,
    pub precision: Precision,
    pub defaults: DefaultsTable,
}

/// Creates `dir/name` for buffered writing.
pub fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// `{ "meta": ..., <key>: value }` as pretty JSON.
pub fn write_json<T: Serialize>(
    dir: &Path,
    name: &str,
    meta: &Meta,
    key: &str,
    value: &T,
) -> Result<()> {
    let mut body = serde_json::Map::new();
    body.insert("meta".into(), serde_json::to_value(meta)?);
    body.insert(key.into(), serde_json::to_value(value)?);
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, &body)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}
