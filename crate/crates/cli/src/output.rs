//! Output directory handling. Files are written to a temporary sibling and
//! renamed into place, and each one carries the hash of the run config.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

/// SHA-256 of the canonical JSON of `{command, config}`.
pub fn config_hash<T: Serialize>(command: &str, config: &T) -> Result<String> {
    let doc = serde_json::json!({ "command": command, "config": config });
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&doc)?)))
}

pub struct OutDir {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(dir: &Path, hash: String) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(OutDir { dir: dir.to_path_buf(), hash, written: Vec::new() })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn atomic(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let target = self.dir.join(name);
        let tmp = NamedTempFile::new_in(&self.dir)?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            body(&mut w)?;
            w.flush()?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(&target).with_context(|| format!("writing {}", target.display()))?;
        self.written.push(target);
        Ok(())
    }

    /// CSV whose first line is `# config_hash: <hex>`.
    pub fn csv(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let hash = self.hash.clone();
        self.atomic(name, |w| {
            writeln!(w, "# config_hash: {hash}")?;
            body(w)
        })
    }

    /// JSON object with a `config_hash` field added.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_value(value)?;
        match &mut v {
            Value::Object(m) => {
                m.insert("config_hash".into(), Value::String(self.hash.clone()));
            }
            _ => anyhow::bail!("{name}: top-level JSON must be an object"),
        }
        self.atomic(name, |w| {
            serde_json::to_writer_pretty(&mut *w, &v)?;
            writeln!(w)?;
            Ok(())
        })
    }
}
