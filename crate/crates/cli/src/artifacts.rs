//! Artifact directories and their manifests.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use ctr_core::io::Table;
use ctr_core::scenario::Scenario;

use crate::CliError;

/// Environment variable naming the base directory for artifacts.
pub const OUT_DIR_ENV: &str = "CTR_OUT_DIR";
pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the scenario's canonical JSON document.
pub fn scenario_hash(s: &Scenario) -> Result<String, CliError> {
    Ok(sha256_hex(s.to_json()?.as_bytes()))
}

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub seed: u64,
    pub scenario: String,
    pub scenario_sha256: String,
    pub files: Vec<FileEntry>,
}

/// Files written by one command run, recorded for its manifest.
#[derive(Debug)]
pub struct ArtifactDir {
    pub dir: PathBuf,
    files: Vec<FileEntry>,
}

impl ArtifactDir {
    /// `explicit`, else `$CTR_OUT_DIR/<default_name>`, else `ctr-out/<default_name>`.
    pub fn create(explicit: Option<&Path>, default_name: &str) -> Result<Self, CliError> {
        let dir = match explicit {
            Some(d) => d.to_path_buf(),
            None => std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("ctr-out")).join(default_name),
        };
        std::fs::create_dir_all(&dir)?;
        Ok(ArtifactDir { dir, files: vec![] })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        if name.is_empty() || name.contains(['/', '\\']) || name == MANIFEST {
            return Err(CliError::Usage(format!("artifact name '{name}' must be a plain file name other than {MANIFEST}")));
        }
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        let entry = FileEntry { name: name.into(), sha256: sha256_hex(bytes), bytes: bytes.len() };
        match self.files.iter_mut().find(|f| f.name == name) {
            Some(f) => *f = entry,
            None => self.files.push(entry),
        }
        Ok(path)
    }

    pub fn write_csv(&mut self, name: &str, table: &Table) -> Result<PathBuf, CliError> {
        self.write_bytes(name, table.to_csv()?.as_bytes())
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|f| f.name.clone()).collect()
    }

    /// Writes the manifest listing every artifact of the run.
    pub fn finish(self, command: &[String], seed: u64, scenario: &Scenario) -> Result<PathBuf, CliError> {
        let mut files = self.files;
        files.sort_by(|a, b| a.name.cmp(&b.name));
        let m = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.to_vec(),
            seed,
            scenario: scenario.name.clone(),
            scenario_sha256: scenario_hash(scenario)?,
            files,
        };
        let path = self.dir.join(MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(&m).map_err(ctr_core::Error::from)? + "\n")?;
        Ok(self.dir)
    }
}
