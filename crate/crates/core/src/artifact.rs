//! Model directories: `params.ckpt`, vocabulary files and a `manifest.json`
//! recording the model kind, the SHA-256 of every file and the config.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use todo_numeric::{Checkpoint, NumericError, ParamSet};

pub const MANIFEST: &str = "manifest.json";
pub const PARAMS: &str = "params.ckpt";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{file}: hash mismatch (manifest {expected}, found {found})")]
    HashMismatch { file: String, expected: String, found: String },
    #[error("expected a {expected} model, found {found}")]
    WrongKind { expected: String, found: String },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub files: BTreeMap<String, String>,
    pub config: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes the parameters, the extra text files and the manifest into `dir`.
pub fn save_model_dir(
    dir: &Path,
    kind: &str,
    params: &ParamSet,
    files: &[(&str, String)],
    config: serde_json::Value,
) -> Result<(), ArtifactError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut hashes = BTreeMap::new();
    let ckpt = Checkpoint::from_params(params, BTreeMap::from([("kind".to_string(), kind.to_string())])).encode();
    let p = dir.join(PARAMS);
    fs::write(&p, &ckpt).map_err(io_err(&p))?;
    hashes.insert(PARAMS.to_string(), sha256_hex(&ckpt));
    for (name, text) in files {
        let p = dir.join(name);
        fs::write(&p, text).map_err(io_err(&p))?;
        hashes.insert(name.to_string(), sha256_hex(text.as_bytes()));
    }
    let manifest = Manifest {
        kind: kind.to_string(),
        files: hashes,
        config,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| ArtifactError::Manifest(e.to_string()))? + "\n";
    let p = dir.join(MANIFEST);
    fs::write(&p, text).map_err(io_err(&p))
}

/// A verified model directory.
pub struct ModelDir {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub checkpoint: Checkpoint,
}

impl ModelDir {
    /// Reads the manifest, checks every recorded hash and decodes the
    /// parameters.
    pub fn open(dir: &Path, expected_kind: &str) -> Result<Self, ArtifactError> {
        let p = dir.join(MANIFEST);
        let text = fs::read_to_string(&p).map_err(io_err(&p))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| ArtifactError::Manifest(e.to_string()))?;
        if manifest.kind != expected_kind {
            return Err(ArtifactError::WrongKind {
                expected: expected_kind.to_string(),
                found: manifest.kind,
            });
        }
        for (name, expected) in &manifest.files {
            if name.contains('/') || name.contains("..") {
                return Err(ArtifactError::Manifest(format!("bad file name {name:?}")));
            }
            let p = dir.join(name);
            let bytes = fs::read(&p).map_err(io_err(&p))?;
            let found = sha256_hex(&bytes);
            if &found != expected {
                return Err(ArtifactError::HashMismatch {
                    file: name.clone(),
                    expected: expected.clone(),
                    found,
                });
            }
        }
        if !manifest.files.contains_key(PARAMS) {
            return Err(ArtifactError::Manifest(format!("{PARAMS} not listed")));
        }
        let checkpoint = Checkpoint::read(dir.join(PARAMS))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            checkpoint,
        })
    }

    pub fn read_text(&self, name: &str) -> Result<String, ArtifactError> {
        if !self.manifest.files.contains_key(name) {
            return Err(ArtifactError::Manifest(format!("{name} not listed")));
        }
        let p = self.dir.join(name);
        fs::read_to_string(&p).map_err(io_err(&p))
    }

    pub fn config<T: serde::de::DeserializeOwned>(&self) -> Result<T, ArtifactError> {
        serde_json::from_value(self.manifest.config.clone()).map_err(|e| ArtifactError::Manifest(e.to_string()))
    }
}
