//! Shared CLI helpers.

use std::path::Path;

use anyhow::{Context, Result};

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating directory {}", parent.display()))?;
        }
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Comma-separated list of positive sizes, e.g. `16,12`.
#[derive(Debug, Clone)]
pub struct SizeList(pub Vec<usize>);

impl std::str::FromStr for SizeList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let sizes: std::result::Result<Vec<usize>, _> =
            s.split(',').map(|p| p.trim().parse::<usize>()).collect();
        match sizes {
            Ok(v) if !v.is_empty() && v.iter().all(|&x| x > 0) => Ok(SizeList(v)),
            _ => Err(format!("expected comma-separated positive sizes, got {s:?}")),
        }
    }
}

/// Comma-separated list of floats, scientific notation accepted.
#[derive(Debug, Clone)]
pub struct FloatList(pub Vec<f64>);

impl std::str::FromStr for FloatList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let vals: std::result::Result<Vec<f64>, _> =
            s.split(',').map(|p| p.trim().parse::<f64>()).collect();
        match vals {
            Ok(v) if !v.is_empty() => Ok(FloatList(v)),
            _ => Err(format!("expected comma-separated numbers, got {s:?}")),
        }
    }
}
