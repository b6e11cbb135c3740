use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::ValueEnum;
use dereco::dereco::{json_hash, PipelineConfig};
use dereco::transportsim::{EnvConfig, ShapeCatalog};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

/// Name of the file every run directory keeps its [`RunConfig`] in.
pub const RUN_CONFIG: &str = "run_config.json";
/// Copy of the shape catalog a run was trained with.
pub const CATALOG_FILE: &str = "catalog.json";

/// Everything a training invocation depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    /// Shape catalog file; the built-in catalog when unset.
    pub catalog: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            catalog: None,
            seeds: vec![0],
            out_dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Full-size networks and 50k-step budgets.
    Default,
    /// Tiny networks and budgets for checking the plumbing.
    Smoke,
    /// Default budgets on the easy environment with one training shape.
    Easy,
}

impl Preset {
    pub fn config(self) -> RunConfig {
        let pipeline = match self {
            Self::Default => PipelineConfig::default(),
            Self::Smoke => PipelineConfig::smoke(),
            Self::Easy => PipelineConfig {
                env: EnvConfig::easy(),
                train_shapes: vec!["bar".into()],
                ..PipelineConfig::default()
            },
        };
        RunConfig {
            pipeline,
            ..RunConfig::default()
        }
    }
}

/// A run config as stored next to the artifacts it produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredRunConfig {
    pub hash: String,
    pub method: String,
    pub seed: u64,
    pub config: RunConfig,
}

impl RunConfig {
    /// SHA-256 of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        json_hash(self).expect("run config serializes")
    }

    /// Load a config: preset (or an explicit file layered over defaults),
    /// then `key=value` overrides.
    pub fn load(path: Option<&Path>, preset: Preset, sets: &[String]) -> Result<Self> {
        let mut value = serde_json::to_value(preset.config())?;
        if let Some(p) = path {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("reading {}: {e}", p.display())))?;
            let file: Value =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("parsing {}: {e}", p.display())))?;
            merge(&mut value, file);
        }
        for s in sets {
            apply_set(&mut value, s)?;
        }
        let config: Self = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        config.pipeline.validate()?;
        Ok(config)
    }

    pub fn catalog(&self) -> Result<Arc<ShapeCatalog>> {
        Ok(Arc::new(match &self.catalog {
            Some(p) => ShapeCatalog::load(p)?,
            None => ShapeCatalog::builtin(),
        }))
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Apply `a.b.c=value`. The value is read as JSON when it parses and as a
/// string otherwise; the key must already exist.
pub fn apply_set(config: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{assignment}`")))?;
    let mut slot = &mut *config;
    for part in key.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|o| o.get_mut(part))
            .ok_or_else(|| CliError::Config(format!("unknown config key `{key}`")))?;
    }
    *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}

/// Root for outputs: an explicit flag, then `DERECO_OUT`, then the config.
pub fn output_root(flag: Option<&Path>, config_dir: &Path) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os("DERECO_OUT") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => config_dir.to_path_buf(),
    }
}

/// Parse `3`, `0,2,5` or the half-open range `0..5`.
pub fn parse_seeds(spec: &str) -> std::result::Result<Vec<u64>, String> {
    let bad = |_| format!("bad seed list `{spec}` (expected N, A,B,C or A..B)");
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
        if a >= b {
            return Err(format!("empty seed range `{spec}`"));
        }
        return Ok((a..b).collect());
    }
    spec.split(',').map(|s| s.trim().parse().map_err(bad)).collect()
}
