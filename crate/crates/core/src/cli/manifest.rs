//! `manifest.json`: config snapshot plus every emitted file with its digest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub files: Vec<FileRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
}

impl StageRecord {
    pub fn file(&self, rel: &str) -> Option<&FileRecord> {
        self.files.iter().find(|f| f.path == rel)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub toolkit_version: String,
    pub config: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn rel_string(rel: &Path) -> String {
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

impl Manifest {
    pub fn load(run_dir: &Path) -> Result<Option<Manifest>> {
        let path = run_dir.join(MANIFEST_NAME);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }

    pub fn save(&self, run_dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
        let path = run_dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Replaces a stage's record with the given files (paths relative to
    /// `run_dir`), digesting each one.
    pub fn record_stage(
        &mut self,
        run_dir: &Path,
        stage: &str,
        files: &[PathBuf],
        notes: BTreeMap<String, String>,
    ) -> Result<()> {
        let mut records = files
            .iter()
            .map(|rel| {
                Ok(FileRecord {
                    path: rel_string(rel),
                    sha256: sha256_file(&run_dir.join(rel))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        records.sort_by(|a, b| a.path.cmp(&b.path));
        self.stages
            .insert(stage.to_string(), StageRecord { files: records, notes });
        Ok(())
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.get(name)
    }

    /// Checks that a listed file still exists and matches its digest.
    pub fn verify(&self, run_dir: &Path, record: &FileRecord) -> Result<PathBuf> {
        let path = run_dir.join(&record.path);
        if !path.exists() {
            return Err(Error::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "listed in manifest but missing"),
            ));
        }
        let digest = sha256_file(&path)?;
        if digest != record.sha256 {
            return Err(Error::SchemaMismatch(format!(
                "{} changed since it was recorded (sha256 {} != {})",
                record.path, digest, record.sha256
            )));
        }
        Ok(path)
    }
}
