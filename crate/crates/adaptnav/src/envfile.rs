//! Environment files: versioned JSON holding the generator parameters and
//! the full graph, so a file reloads without regenerating.

use std::path::Path;

use adaptnav_core::simenv::graph::Edge;
use adaptnav_core::simenv::{EnvGraph, EnvParams, Node};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

pub const ENV_SCHEMA: &str = "adaptnav-env/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvFile {
    pub schema: String,
    pub params: EnvParams,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl EnvFile {
    pub fn from_env(env: &EnvGraph) -> Self {
        Self {
            schema: ENV_SCHEMA.to_string(),
            params: *env.params(),
            nodes: env.nodes().to_vec(),
            edges: env.edges().to_vec(),
        }
    }

    pub fn into_env(self) -> Result<EnvGraph> {
        Ok(EnvGraph::from_parts(self.params, self.nodes, self.edges)?)
    }
}

pub fn to_json(env: &EnvGraph) -> String {
    let mut s = serde_json::to_string(&EnvFile::from_env(env)).expect("environment serializes");
    s.push('\n');
    s
}

pub fn from_json(text: &str, origin: &Path) -> Result<EnvGraph> {
    let file: EnvFile = serde_json::from_str(text).map_err(|e| AppError::Format {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    if file.schema != ENV_SCHEMA {
        return Err(AppError::Format {
            path: origin.to_path_buf(),
            message: format!("schema {:?}, expected {ENV_SCHEMA:?}", file.schema),
        });
    }
    file.into_env()
}

pub fn write(env: &EnvGraph, path: &Path) -> Result<String> {
    let text = to_json(env);
    crate::write_file(path, text.as_bytes())?;
    Ok(sha256_hex(text.as_bytes()))
}

/// Reads an environment file and returns it with the SHA-256 of its bytes.
pub fn read(path: &Path) -> Result<(EnvGraph, String)> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| AppError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let env = from_json(&text, path)?;
    Ok((env, sha256_hex(text.as_bytes())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
