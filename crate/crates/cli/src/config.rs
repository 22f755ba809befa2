//! Experiment configuration: a flat TOML table.
//!
//! ```toml
//! corpus = "data/acl.jsonl"
//! split = "year:2014"          # or "random:0.1", "random:0.1:7"
//! k = [1, 5, 10]
//! f = [0.2, 0.5, 0.8]
//! models = ["cooc", "svd", "ae"]
//! conditions = ["none", "title", "all"]
//! runs = 3
//! ```
//!
//! Lists may also be written as one comma-separated string.
//!
//! Relative paths resolve against the directory of the config file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use setrec::eval::Task;
use setrec::grid::{ConditionChoice, GridConfig};
use setrec::models::ModelKind;
use setrec::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum SplitMode {
    Year(i32),
    Random { ratio: f64, seed: u64 },
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        let bad = || {
            Error::InvalidArgument(format!(
                "split must be year:T or random:ratio[:seed], got {s:?}"
            ))
        };
        match parts.as_slice() {
            ["year", t] => t.parse().map(SplitMode::Year).map_err(|_| bad()),
            ["random", r] => Ok(SplitMode::Random {
                ratio: r.parse().map_err(|_| bad())?,
                seed: 0,
            }),
            ["random", r, seed] => Ok(SplitMode::Random {
                ratio: r.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub corpus: Option<PathBuf>,
    pub dataset: Option<String>,
    pub split: SplitMode,
    pub embeddings: Option<PathBuf>,
    pub out: PathBuf,
    pub grid: GridConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: None,
            dataset: None,
            split: SplitMode::Random {
                ratio: 0.1,
                seed: 0,
            },
            embeddings: None,
            out: PathBuf::from("results"),
            grid: GridConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidArgument(format!("cannot read config {}: {e}", path.display()))
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        let mut config = ExperimentConfig::default();
        for (key, value) in &table {
            config.set(key, &flatten(key, value)?, base)?;
        }
        Ok(config)
    }

    /// Applies one setting; command-line overrides go through here too.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let g = &mut self.grid;
        let h = &mut g.hyper;
        match key {
            "corpus" => self.corpus = Some(path(value)),
            "dataset" => self.dataset = Some(value.to_string()),
            "split" => self.split = value.parse()?,
            "embeddings" => self.embeddings = Some(path(value)),
            "out" => self.out = path(value),
            "k" => g.ks = list(key, value)?,
            "f" => g.fs = list(key, value)?,
            "models" => g.models = list::<ModelKind>(key, value)?,
            "conditions" => g.conditions = list::<ConditionChoice>(key, value)?,
            "runs" => g.runs = scalar(key, value)?,
            "seed" => g.seed = scalar(key, value)?,
            "mask_observed" => g.options.mask_observed = switch(key, value)?,
            "task" => g.options.task = value.parse::<Task>()?,
            "timings" => g.timings = switch(key, value)?,
            "word_dim" => g.options.features.word_dim = scalar(key, value)?,
            "author_dim" => g.options.features.author_dim = scalar(key, value)?,
            "feature_seed" => g.options.features.seed = scalar(key, value)?,
            "hidden" => h.hidden = scalar(key, value)?,
            "code" => h.code = scalar(key, value)?,
            "dropout" => h.dropout = scalar(key, value)?,
            "lr" => h.lr = scalar(key, value)?,
            "epochs" => h.epochs = scalar(key, value)?,
            "batch" => h.batch = scalar(key, value)?,
            "dae_noise" => h.dae_noise = scalar(key, value)?,
            "svd_rank" => h.svd_rank = scalar(key, value)?,
            "kl_weight" => h.kl_weight = scalar(key, value)?,
            "disc_lr" => h.disc_lr = scalar(key, value)?,
            "gen_lr" => h.gen_lr = scalar(key, value)?,
            "aae_literal_sign" => h.aae_literal_sign = switch(key, value)?,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown config key {other:?}"
                )))
            }
        }
        Ok(())
    }

    pub fn dataset_name(&self) -> String {
        self.dataset.clone().unwrap_or_else(|| {
            self.corpus
                .as_ref()
                .and_then(|p| p.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "corpus".into())
        })
    }
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value {value:?} for {key}")))
}

fn switch(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidArgument(format!(
            "{key} expects on or off, got {value:?}"
        ))),
    }
}

/// Renders a TOML value in the textual form `set` parses.
fn flatten(key: &str, value: &toml::Value) -> Result<String> {
    use toml::Value;
    Ok(match value {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => f.to_string(),
        Value::Boolean(b) => b.to_string(),
        Value::Array(items) => items
            .iter()
            .map(|v| flatten(key, v))
            .collect::<Result<Vec<_>>>()?
            .join(","),
        other => {
            return Err(Error::InvalidArgument(format!(
                "{key} cannot be a {}",
                other.type_str()
            )))
        }
    })
}

/// Comma-separated values.
fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| scalar(key, v))
        .collect()
}
