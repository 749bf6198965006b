//! Experiment configuration files.
//!
//! A config is TOML with a preset, a seed, an output directory, a
//! `[dataset]` table and optional `[search]` overrides on top of the preset:
//!
//! ```toml
//! preset = "desk"
//! seed = 0
//! out_dir = "runs/binary"
//!
//! [dataset]
//! kind = "synthetic"
//! task = "binary"
//! replicates = 3
//!
//! [search]
//! n_niches = 3
//! ivfs = { pop = 60 }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{SyntheticSpec, Task};
use crate::search::{NicheConfig, Preset};
use crate::{Error, Result};

/// Where the data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// The generated benchmark; replicate `r` uses data seed `data_seed + r`.
    Synthetic {
        task: Task,
        #[serde(default = "one")]
        replicates: usize,
        /// Defaults to the run seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data_seed: Option<u64>,
        #[serde(default = "default_view_dim")]
        view_dim: usize,
        #[serde(default = "default_per_class")]
        samples_per_class: usize,
    },
    /// CSV data described by manifests; paths are relative to the config.
    Manifest {
        train: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test: Option<PathBuf>,
    },
}

fn one() -> usize {
    1
}

fn default_view_dim() -> usize {
    500
}

fn default_per_class() -> usize {
    100
}

impl DatasetSource {
    pub fn synthetic_spec(&self) -> Option<SyntheticSpec> {
        match self {
            DatasetSource::Synthetic {
                task,
                view_dim,
                samples_per_class,
                ..
            } => Some(SyntheticSpec {
                view_dim: *view_dim,
                samples_per_class: *samples_per_class,
                ..SyntheticSpec::new(*task)
            }),
            DatasetSource::Manifest { .. } => None,
        }
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset: DatasetSource,
    pub search: NicheConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn config_err(e: toml::de::Error) -> Error {
    // Messages from serde name the offending key.
    Error::config("config", e.message().trim().to_string())
}

impl ExperimentConfig {
    /// Parses config text. `base_dir` anchors relative manifest paths.
    pub fn from_toml(text: &str, base_dir: &Path, overrides: &Overrides) -> Result<Self> {
        let mut raw: toml::Table = text.parse().map_err(config_err)?;
        let preset = match (overrides.preset, raw.remove("preset")) {
            (Some(p), _) => p,
            (None, Some(toml::Value::String(s))) => s.parse()?,
            (None, Some(_)) => return Err(Error::config("preset", "must be a string")),
            (None, None) => Preset::Desk,
        };
        let seed = match (overrides.seed, raw.remove("seed")) {
            (Some(s), _) => s,
            (None, Some(toml::Value::Integer(s))) if s >= 0 => s as u64,
            (None, Some(_)) => return Err(Error::config("seed", "must be a non-negative integer")),
            (None, None) => 0,
        };
        let out_dir = match (overrides.out_dir.clone(), raw.remove("out_dir")) {
            (Some(p), _) => p,
            (None, Some(toml::Value::String(s))) => base_dir.join(s),
            (None, Some(_)) => return Err(Error::config("out_dir", "must be a string")),
            (None, None) => PathBuf::from("mmfs-out"),
        };
        let dataset_raw = raw
            .remove("dataset")
            .ok_or_else(|| Error::config("dataset", "missing [dataset] table"))?;
        let mut dataset: DatasetSource = dataset_raw
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("dataset", e.message().trim().to_string()))?;
        if let DatasetSource::Manifest { train, test } = &mut dataset {
            *train = base_dir.join(&*train);
            if let Some(t) = test {
                *t = base_dir.join(&*t);
            }
        }

        let mut search_table = match toml::Value::try_from(NicheConfig::preset(preset))
            .map_err(|e| Error::config("search", e.to_string()))?
        {
            toml::Value::Table(t) => t,
            _ => unreachable!("struct serializes to a table"),
        };
        match raw.remove("search") {
            Some(toml::Value::Table(t)) => merge(&mut search_table, t),
            Some(_) => return Err(Error::config("search", "must be a table")),
            None => {}
        }
        if let Some(k) = raw.keys().next() {
            return Err(Error::config(k.as_str(), "unknown key"));
        }
        let mut search: NicheConfig = toml::Value::Table(search_table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("search", e.message().trim().to_string()))?;
        search.seed = seed;
        if overrides.threads.is_some() {
            search.threads = overrides.threads;
        }
        let cfg = Self {
            preset,
            seed,
            out_dir,
            dataset,
            search,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")), overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.search.validate()?;
        if let DatasetSource::Synthetic {
            replicates,
            view_dim,
            samples_per_class,
            ..
        } = &self.dataset
        {
            if *replicates == 0 {
                return Err(Error::config("dataset.replicates", "must be at least 1"));
            }
            if *view_dim < 7 {
                return Err(Error::config("dataset.view_dim", "must be at least 7"));
            }
            if *samples_per_class < self.search.eval.n_folds {
                return Err(Error::config(
                    "dataset.samples_per_class",
                    "must be at least the number of folds",
                ));
            }
        }
        Ok(())
    }

    /// Canonical TOML of the resolved config.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }

    /// SHA-256 of the canonical TOML, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
