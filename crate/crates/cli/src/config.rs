//! Run configuration: a TOML file, environment overrides and command flags,
//! applied in that order.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use editsim::generator::{ScenarioParams, SetParams, Setting};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::spec::AdapterSpec;
use crate::UsageError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sizes {
    pub n_chains: usize,
    pub n_unrelated: usize,
    pub n_copies: usize,
    pub n_edits: usize,
    pub max_retries: usize,
}

impl Default for Sizes {
    fn default() -> Self {
        let s = SetParams::default();
        let c = ScenarioParams::default();
        Self {
            n_chains: s.n_chains,
            n_unrelated: s.n_unrelated,
            n_copies: c.n_copies,
            n_edits: c.n_edits,
            max_retries: c.max_retries,
        }
    }
}

impl Sizes {
    pub fn set_params(&self) -> SetParams {
        SetParams {
            n_chains: self.n_chains,
            n_unrelated: self.n_unrelated,
        }
    }

    pub fn scenario_params(&self) -> ScenarioParams {
        ScenarioParams {
            n_copies: self.n_copies,
            n_edits: self.n_edits,
            max_retries: self.max_retries,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub rules: PathBuf,
    pub out_dir: PathBuf,
    pub settings: Vec<Setting>,
    pub n_sets: usize,
    pub sizes: Sizes,
    pub seed: u64,
    pub adapter: String,
    pub timeout_secs: u64,
    pub min_support: usize,
    pub labels: Option<PathBuf>,
    /// Not part of the config hash: results do not depend on it.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: "corpus.jsonl".into(),
            rules: "rules.txt".into(),
            out_dir: "out".into(),
            settings: Setting::ALL.to_vec(),
            n_sets: 50,
            sizes: Sizes::default(),
            seed: 0,
            adapter: "oracle".into(),
            timeout_secs: 120,
            min_support: 1,
            labels: None,
            workers: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())).into())
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        let sizes = [
            ("n_sets", self.n_sets),
            ("n_chains", self.sizes.n_chains),
            ("n_unrelated", self.sizes.n_unrelated),
            ("n_copies", self.sizes.n_copies),
            ("n_edits", self.sizes.n_edits),
            ("max_retries", self.sizes.max_retries),
            ("min_support", self.min_support),
            ("timeout_secs", self.timeout_secs as usize),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(UsageError(format!("{name} must be positive")));
        }
        if self.workers == Some(0) {
            return Err(UsageError("workers must be positive".into()));
        }
        if self.settings.is_empty() {
            return Err(UsageError("at least one setting is required".into()));
        }
        self.adapter_spec()?;
        Ok(())
    }

    pub fn adapter_spec(&self) -> Result<AdapterSpec, UsageError> {
        self.adapter.parse()
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
