//! Reproducibility record emitted with every run: the exact command,
//! content hashes of the inputs, seed, engine version, and wall-clock
//! duration. Written to stderr so stdout stays machine-parseable.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use sha2::{Digest, Sha256};

use carl_core::error::{CarlError, Result};

pub struct RunManifest {
    command: Vec<String>,
    input_hashes: BTreeMap<String, String>,
    pub seed: Option<u64>,
    started: Instant,
    duration_ms: Option<u128>,
}

impl RunManifest {
    pub fn new(command: Vec<String>) -> Self {
        RunManifest {
            command,
            input_hashes: BTreeMap::new(),
            seed: None,
            started: Instant::now(),
            duration_ms: None,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes =
            std::fs::read(path).map_err(|_| CarlError::MissingFile(path.display().to_string()))?;
        let digest = Sha256::digest(&bytes);
        self.input_hashes
            .insert(path.display().to_string(), format!("{digest:x}"));
        Ok(())
    }

    pub fn add_inputs(&mut self, paths: &[&Path]) -> Result<()> {
        for p in paths {
            self.add_input(p)?;
        }
        Ok(())
    }

    pub fn finish(&mut self) {
        self.duration_ms = Some(self.started.elapsed().as_millis());
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "manifest": {
                "command": self.command,
                "inputs": self.input_hashes,
                "seed": self.seed,
                "engine_version": env!("CARGO_PKG_VERSION"),
                "duration_ms": self.duration_ms,
            }
        })
        .to_string()
    }
}
