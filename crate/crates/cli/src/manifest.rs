use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every run's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: Value,
    pub master_seed: Option<u64>,
    pub prng: Option<&'static str>,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputFile>,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &'static str, config: &C, master_seed: Option<u64>) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: serde_json::to_value(config).expect("config serializes"),
            master_seed,
            prng: None,
            wall_clock_seconds: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn add_output(&mut self, path: &Path, bytes: &[u8]) {
        self.outputs.push(OutputFile { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(bytes)) });
    }
}
