use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// sha256 over the parsed arguments and the bytes of every input file.
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub outputs: Vec<PathBuf>,
    pub wall_time: f64,
}

pub fn config_hash<T: Serialize>(args: &T, inputs: &[&Path]) -> std::io::Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(args).map_err(std::io::Error::other)?);
    for p in inputs {
        h.update(std::fs::read(p)?);
    }
    Ok(hex::encode(h.finalize()))
}
