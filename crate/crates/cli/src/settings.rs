//! Loading a [`RunConfig`] from a TOML file or a named scenario, then
//! applying `--set key.path=value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::Args;
use spencer_core::{scenario, RunConfig};
use toml::Value;

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(short, long, value_name = "FILE", conflicts_with = "scenario")]
    pub config: Option<PathBuf>,
    /// Built-in scenario to start from (see `list-scenarios`).
    #[arg(short, long, value_name = "NAME")]
    pub scenario: Option<String>,
    /// Override any configuration key, e.g. `--set mesh.resolution=[32,32]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn load(&self) -> anyhow::Result<RunConfig> {
        let base = match (&self.config, &self.scenario) {
            (Some(path), _) => read_file(path)?,
            (None, Some(name)) => to_value(&scenario(name)?)?,
            (None, None) => to_value(&RunConfig::default())?,
        };
        let mut value = base;
        for o in &self.overrides {
            apply_override(&mut value, o)?;
        }
        value.try_into().context("invalid configuration")
    }
}

fn to_value(cfg: &RunConfig) -> anyhow::Result<Value> {
    Value::try_from(cfg).context("serializing configuration")
}

fn read_file(path: &Path) -> anyhow::Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let table: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
    Ok(Value::Table(table))
}

/// Parses the right-hand side as a TOML value; bare words become strings.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

pub fn apply_override(root: &mut Value, spec: &str) -> anyhow::Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| anyhow!("override `{spec}` is not of the form key=value"))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        bail!("override key `{key}` has an empty segment");
    }
    let mut node = root;
    for seg in &path[..path.len() - 1] {
        let table = node.as_table_mut().ok_or_else(|| anyhow!("`{key}`: `{seg}` is not inside a table"))?;
        node = table.entry(seg.to_string()).or_insert_with(|| Value::Table(Default::default()));
    }
    let table = node.as_table_mut().ok_or_else(|| anyhow!("`{key}` does not name a table entry"))?;
    table.insert(path[path.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}
