//! Report files: JSON envelopes embedding the config and its hash, and CSV
//! tables with a fixed header and 17-significant-digit floats.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub use kinlab::grid::fmt_f64;

/// SHA-256 of the compact JSON encoding of the config.
pub fn config_hash(config: &RunConfig) -> String {
    let text = serde_json::to_string(config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub struct ReportWriter {
    out_dir: PathBuf,
    reproducible: bool,
}

impl ReportWriter {
    pub fn new(out_dir: &Path, reproducible: bool) -> std::io::Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            reproducible,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    /// JSON envelope: command, config hash, seed, the full config for
    /// replay, and the payload. The timestamp is a self-describing metadata
    /// field suppressed under --reproducible.
    pub fn write_json<T: Serialize>(
        &self,
        name: &str,
        command: &str,
        config: &RunConfig,
        seed: u64,
        payload: &T,
    ) -> std::io::Result<PathBuf> {
        let mut doc = serde_json::json!({
            "command": command,
            "config_hash": config_hash(config),
            "seed": seed,
            "config": config,
            "report": payload,
        });
        if !self.reproducible {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            doc.as_object_mut()
                .expect("envelope is an object")
                .insert("generated_at_unix".into(), serde_json::json!(secs));
        }
        let path = self.out_dir.join(name);
        let mut file = std::fs::File::create(&path)?;
        serde_json::to_writer_pretty(&mut file, &doc)?;
        file.write_all(b"\n")?;
        Ok(path)
    }

    /// CSV with a fixed header row; callers format floats via [`fmt_f64`].
    pub fn write_csv(
        &self,
        name: &str,
        header: &str,
        rows: impl IntoIterator<Item = String>,
    ) -> std::io::Result<PathBuf> {
        let path = self.out_dir.join(name);
        let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(file, "{header}")?;
        for row in rows {
            writeln!(file, "{row}")?;
        }
        Ok(path)
    }
}
