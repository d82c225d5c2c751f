//! Scenario loading: TOML file (or built-in defaults) plus dotted-path
//! `--set` overrides, applied before schema validation so typos in either
//! place fail with a path-qualified error.

use std::path::Path;

use anyhow::{bail, Context, Result};
use gmppi::sim::scenario::ScenarioConfig;

/// Parses one `key=value` override into (dotted path, TOML value). Values
/// are interpreted as TOML literals when possible and as strings otherwise,
/// so `--set controller.lambda=20` and `--set trajectory.kind=hover` both
/// work unquoted.
fn parse_override(spec: &str) -> Result<(Vec<String>, toml::Value)> {
    let Some((key, raw)) = spec.split_once('=') else {
        bail!("override '{spec}' is not of the form key=value");
    };
    let key = key.trim();
    if key.is_empty() {
        bail!("override '{spec}' has an empty key");
    }
    let path: Vec<String> = key.split('.').map(str::to_owned).collect();
    if path.iter().any(|s| s.is_empty()) {
        bail!("override key '{key}' has an empty path segment");
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(t) => t["v"].clone(),
        Err(_) => toml::Value::String(raw.trim().to_owned()),
    };
    Ok((path, value))
}

/// Writes one override into the config tree. Setting an enum tag (`kind`
/// or `mode`) discards the table's other keys, which belong to the
/// previous variant; follow-up overrides then configure the new variant.
fn apply_override(root: &mut toml::Value, path: &[String], value: toml::Value) -> Result<()> {
    let mut node = root;
    for seg in &path[..path.len() - 1] {
        let table = node
            .as_table_mut()
            .with_context(|| format!("config path segment '{seg}' is not a table"))?;
        node = table
            .entry(seg.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = node
        .as_table_mut()
        .with_context(|| format!("cannot set '{}': parent is not a table", path.join(".")))?;
    let key = path.last().unwrap();
    if (key == "kind" || key == "mode") && table.get(key) != Some(&value) {
        table.clear();
    }
    table.insert(key.clone(), value);
    Ok(())
}

/// Loads the scenario: file or defaults, then overrides, then validation.
pub fn load_scenario(
    config_path: Option<&Path>,
    overrides: &[String],
    seed: Option<u64>,
) -> Result<ScenarioConfig> {
    let mut value: toml::Value = match config_path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            text.parse()
                .with_context(|| format!("parsing config {}", p.display()))?
        }
        None => toml::Value::try_from(ScenarioConfig::default())
            .expect("default scenario serializes"),
    };
    for spec in overrides {
        let (path, v) = parse_override(spec)?;
        apply_override(&mut value, &path, v)?;
    }
    let mut cfg: ScenarioConfig = value
        .try_into()
        .context("config does not match the scenario schema")?;
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    cfg.validate().map_err(|e| anyhow::anyhow!(e))?;
    Ok(cfg)
}

/// Parses a seed set: `0..9` (inclusive range), a comma list, or a single
/// value.
pub fn parse_seed_list(spec: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = spec.split_once("..") {
        let lo: u64 = a.trim().parse().context("range start")?;
        let hi: u64 = b.trim().parse().context("range end")?;
        if hi < lo {
            bail!("empty seed range '{spec}'");
        }
        return Ok((lo..=hi).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("seed '{s}'")))
        .collect()
}

pub fn parse_speed_list(spec: &str) -> Result<Vec<f64>> {
    let speeds: Vec<f64> = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("speed '{s}'")))
        .collect::<Result<_>>()?;
    // `all(> 0)` rather than `any(<= 0)`: NaN must be rejected too.
    if !speeds.iter().all(|v| *v > 0.0) {
        bail!("speeds must be positive");
    }
    Ok(speeds)
}
