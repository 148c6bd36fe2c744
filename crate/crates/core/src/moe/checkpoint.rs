//! Versioned JSON checkpoints for single connectors and MoE connectors.
//!
//! Floats are written with shortest round-trip formatting, so save/load is
//! bit-exact.

use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};

use super::connector::MoEConnector;
use super::expert::ExpertMLP;
use super::routing::GateNet;

pub const CONNECTOR_FORMAT: &str = "chartmoe.connector";
pub const EXPERT_FORMAT: &str = "chartmoe.expert";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectorCheckpoint {
    pub format: String,
    pub version: u32,
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    pub num_experts: usize,
    pub top_k: usize,
    pub renormalize: bool,
    pub labels: Vec<String>,
    pub gate: GateNet,
    pub experts: Vec<ExpertMLP>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertCheckpoint {
    pub format: String,
    pub version: u32,
    /// What the connector was aligned on (`vanilla`, `table`, `json`, `code`, ...).
    pub label: String,
    pub expert: ExpertMLP,
}

impl From<&MoEConnector> for ConnectorCheckpoint {
    fn from(c: &MoEConnector) -> Self {
        let (d_in, d_hidden, d_out) = c.dims();
        Self {
            format: CONNECTOR_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            d_in,
            d_hidden,
            d_out,
            num_experts: c.num_experts(),
            top_k: c.top_k(),
            renormalize: c.renormalize(),
            labels: c.labels().to_vec(),
            gate: c.gate().clone(),
            experts: c.experts().to_vec(),
        }
    }
}

impl ConnectorCheckpoint {
    pub fn into_connector(self) -> Result<MoEConnector> {
        check_header(&self.format, CONNECTOR_FORMAT, self.version)?;
        if self.experts.len() != self.num_experts {
            return Err(Error::Format(format!(
                "checkpoint declares {} experts but stores {}",
                self.num_experts,
                self.experts.len()
            )));
        }
        let c = MoEConnector::new(
            self.experts,
            self.gate,
            self.top_k,
            self.renormalize,
            self.labels,
        )?;
        if c.dims() != (self.d_in, self.d_hidden, self.d_out) {
            return Err(Error::Format(format!(
                "checkpoint declares dims {:?} but weights have {:?}",
                (self.d_in, self.d_hidden, self.d_out),
                c.dims()
            )));
        }
        Ok(c)
    }
}

impl ExpertCheckpoint {
    pub fn new(label: impl Into<String>, expert: ExpertMLP) -> Self {
        Self {
            format: EXPERT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            label: label.into(),
            expert,
        }
    }

    pub fn into_expert(self) -> Result<(String, ExpertMLP)> {
        check_header(&self.format, EXPERT_FORMAT, self.version)?;
        self.expert.validate()?;
        Ok((self.label, self.expert))
    }
}

fn check_header(format: &str, want: &str, version: u32) -> Result<()> {
    if format != want {
        return Err(Error::Format(format!(
            "expected format {want:?}, found {format:?}"
        )));
    }
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (this build reads {CHECKPOINT_VERSION})"
        )));
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_connector(path: impl AsRef<Path>, c: &MoEConnector) -> Result<()> {
    write_json(path, &ConnectorCheckpoint::from(c))
}

pub fn load_connector(path: impl AsRef<Path>) -> Result<MoEConnector> {
    read_json::<ConnectorCheckpoint>(path)?.into_connector()
}

pub fn save_expert(path: impl AsRef<Path>, label: &str, e: &ExpertMLP) -> Result<()> {
    write_json(path, &ExpertCheckpoint::new(label, e.clone()))
}

pub fn load_expert(path: impl AsRef<Path>) -> Result<(String, ExpertMLP)> {
    read_json::<ExpertCheckpoint>(path)?.into_expert()
}
