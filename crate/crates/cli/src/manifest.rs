//! Run manifests: every output directory gets exactly one, recording
//! the command, the fully resolved configuration, the seed, the tool
//! version, and a digest of every input file read.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use sha2::{Digest, Sha256};

/// Digests of the exact bytes read from each input file.
#[derive(Default)]
pub struct InputDigests {
    entries: BTreeMap<String, String>,
}

impl InputDigests {
    pub fn new() -> Self {
        Self::default()
    }

    /// Read a file, record its digest, and hand the bytes back so the
    /// caller parses exactly what was hashed.
    pub fn read(&mut self, path: &Path) -> std::io::Result<Vec<u8>> {
        let bytes = std::fs::read(path)?;
        self.record(path, &bytes);
        Ok(bytes)
    }

    /// Record a digest for a file some other reader will consume.
    pub fn digest_only(&mut self, path: &Path) -> std::io::Result<()> {
        let bytes = std::fs::read(path)?;
        self.record(path, &bytes);
        Ok(())
    }

    fn record(&mut self, path: &Path, bytes: &[u8]) {
        let mut h = Sha256::new();
        h.update(bytes);
        self.entries
            .insert(path.display().to_string(), format!("{:x}", h.finalize()));
    }
}

/// Write `manifest.json` into the output directory.
pub fn write(
    out_dir: &Path,
    command: &str,
    config: &serde_json::Value,
    seed: Option<u64>,
    inputs: &InputDigests,
) -> lgan_core::Result<()> {
    let doc = serde_json::json!({
        "command": command,
        "config": config,
        "seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
        "inputs": inputs.entries,
        "timestamp": Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
    });
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("manifest serializes");
    bytes.push(b'\n');
    lgan_core::io::atomic_write(&out_dir.join("manifest.json"), &bytes)
}
