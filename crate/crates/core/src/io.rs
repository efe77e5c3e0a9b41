//! Shared text-format helpers for the CSV and JSON artifacts.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{DesignError, Result};

/// 17 significant digits: enough for a bit-exact round trip of any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_f64(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| DesignError::Parse {
        line,
        message: format!("`{}` is not a number", field.trim()),
    })?;
    if !v.is_finite() {
        return Err(DesignError::Parse {
            line,
            message: format!("non-finite value `{}`", field.trim()),
        });
    }
    Ok(v)
}

pub fn parse_flag(field: &str, line: usize) -> Result<bool> {
    match field.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(DesignError::Parse {
            line,
            message: format!("feasibility flag must be 0 or 1, got `{other}`"),
        }),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| DesignError::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| DesignError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| DesignError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}
