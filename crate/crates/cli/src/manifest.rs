//! Per-stage manifests: config hash plus input and output file hashes, so a
//! completed stage can be audited and reruns verified byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::errors::{CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn hash_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| {
        CliError::MissingInput(format!("cannot read {}: {e}", path.display()))
    })?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    /// File name -> sha256, relative to the output directory.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config_sha256: String) -> Self {
        Manifest {
            command: command.to_string(),
            config_sha256,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn record_input(&mut self, out_dir: &Path, name: &str) -> CliResult<()> {
        self.inputs.insert(name.to_string(), hash_file(&out_dir.join(name))?);
        Ok(())
    }

    pub fn record_output(&mut self, out_dir: &Path, name: &str) -> CliResult<()> {
        self.outputs.insert(name.to_string(), hash_file(&out_dir.join(name))?);
        Ok(())
    }

    pub fn write(&self, out_dir: &Path) -> CliResult<()> {
        let dir = out_dir.join("manifests");
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(format!("{}.json", self.command));
        let mut body = serde_json::to_string_pretty(self).expect("manifest serializes");
        body.push('\n');
        std::fs::write(&path, body)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}

/// Require a prior stage's artifact; a clear exit-2 error names the missing
/// file and the command that produces it.
pub fn require_input(out_dir: &Path, name: &str, produced_by: &str) -> CliResult<()> {
    if !out_dir.join(name).is_file() {
        return Err(CliError::MissingInput(format!(
            "{name} not found in {}; run `wkm {produced_by}` first",
            out_dir.display()
        )));
    }
    Ok(())
}
