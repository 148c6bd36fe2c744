use std::path::{Path, PathBuf};

use chartmoe_core::train::FixtureConfig;
use chartmoe_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Optional JSON config file. Every key is optional; command-line flags win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub bz_loss: Option<bool>,
    pub faithful_topk: Option<bool>,
    pub fixture: FixtureConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Flags shared by every subcommand after merging with the file.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub command: String,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub bz_loss: bool,
    pub faithful_topk: bool,
    pub fixture: FixtureConfig,
}

pub const OUT_ENV: &str = "CHARTMOE_OUT";
pub const DEFAULT_OUT: &str = "chartmoe-out";
