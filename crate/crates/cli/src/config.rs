use std::path::{Path, PathBuf};

use duoflow::ablation::AblationConfig;
use duoflow::duomodel::ModelConfig;
use duoflow::evalkit::DEFAULT_TAU;
use duoflow::physworld::{DataConfig, WorldConfig, FIELDS_PER_BALL};
use duoflow::pipeline::SampleConfig;
use duoflow::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub tau: f64,
    pub heldout_sequences: usize,
    pub heldout_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            heldout_sequences: 64,
            heldout_seed: 0x5eed_0000_0000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    /// Starting weights for `train`; fresh initialisation when absent.
    pub init_checkpoint: Option<PathBuf>,
    pub log: PathBuf,
    pub samples: PathBuf,
    pub metrics: PathBuf,
    pub ablation: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            dataset: "run/data.phnt".into(),
            checkpoint: "run/model.phck".into(),
            init_checkpoint: None,
            log: "run/train_log.csv".into(),
            samples: "run/samples".into(),
            metrics: "run/metrics.csv".into(),
            ablation: "run/ablation.csv".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub world: WorldConfig,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sample: SampleConfig,
    pub eval: EvalConfig,
    pub ablate: AblationConfig,
    pub paths: PathsConfig,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn parse_scalar(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `section.key=value` (any depth) to a parsed table. The value is
/// read as a TOML literal, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_scalar(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Reads `path` (defaults when `None`), applies overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e| ConfigError(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// TOML for every field. Optional keys that are unset cannot appear as
    /// values, so they are listed in a leading comment with their meaning.
    pub fn to_toml(&self) -> String {
        let mut unset = Vec::new();
        if self.world.velocity_cap.is_none() {
            unset.push("world.velocity_cap (derived from gravity and height)");
        }
        if self.model.cross_depths.is_none() {
            unset.push("model.cross_depths (blocks depth/2-1 and depth-1)");
        }
        if self.train.optimizer.grad_clip.is_none() {
            unset.push("train.optimizer.grad_clip (no clipping)");
        }
        if self.train.cond.k_max.is_none() {
            unset.push("train.cond.k_max (T/3)");
        }
        if self.ablate.cond_frames.is_none() {
            unset.push("ablate.cond_frames (T/3)");
        }
        if self.paths.init_checkpoint.is_none() {
            unset.push("paths.init_checkpoint (fresh initialisation)");
        }
        let mut out = String::new();
        for u in unset {
            out.push_str(&format!("# unset: {u}\n"));
        }
        out.push_str(&toml::to_string(self).expect("config serialises"));
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        self.data.validate(&self.world).map_err(|e| ConfigError(e.to_string()))?;
        self.model.validate().map_err(|e| ConfigError(e.to_string()))?;
        self.train.validate().map_err(|e| ConfigError(e.to_string()))?;
        if (self.model.height, self.model.width) != (self.world.height, self.world.width) {
            return err(format!(
                "model frame {}x{} differs from world {}x{}",
                self.model.height, self.model.width, self.world.height, self.world.width
            ));
        }
        if self.model.physics_dim != FIELDS_PER_BALL * self.world.balls {
            return err(format!(
                "model.physics_dim {} must be {} for {} ball slot(s)",
                self.model.physics_dim,
                FIELDS_PER_BALL * self.world.balls,
                self.world.balls
            ));
        }
        let video_tokens = self.data.frames * self.model.tokens_per_frame();
        if video_tokens > self.model.max_tokens || self.data.frames > self.model.max_tokens {
            return err(format!(
                "{} frames need {video_tokens} video tokens but model.max_tokens is {}",
                self.data.frames, self.model.max_tokens
            ));
        }
        if self.sample.steps == 0 {
            return err("sample.steps must be at least 1".into());
        }
        if self.sample.cond_frames + 2 > self.data.frames {
            return err("sample.cond_frames must leave at least two future frames".into());
        }
        if !(self.eval.tau > 0.0 && self.eval.tau < 1.0) {
            return err("eval.tau must lie in (0, 1)".into());
        }
        if self.eval.heldout_seed == self.data.seed || self.ablate.heldout_seed == self.data.seed {
            return err("held-out seeds must differ from data.seed".into());
        }
        Ok(())
    }
}
