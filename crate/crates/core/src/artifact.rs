//! Hash-stamped JSON artifacts shared between pipeline stages.
//!
//! Every artifact embeds the hash of the effective run configuration and
//! the hashes of the artifacts it was derived from; downstream stages
//! verify those hashes before trusting a file. Serialization is fully
//! deterministic (sorted keys, no timestamps), so identical inputs produce
//! byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("{path} is not a valid {kind} artifact: {message}")]
    Malformed { path: String, kind: String, message: String },
    #[error("{path} was built from different inputs ({name}: expected {expected}, found {found})")]
    HashMismatch { path: String, name: String, expected: String, found: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub kind: String,
    pub config_hash: String,
    /// Input-name → sha256 of the input file this artifact was built from.
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub meta: ArtifactMeta,
    pub data: T,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn file_hash(path: &Path) -> Result<String, ArtifactError> {
    let bytes = fs::read(path)
        .map_err(|e| ArtifactError::Read { path: path.display().to_string(), source: e })?;
    Ok(sha256_hex(&bytes))
}

/// Writes the artifact and returns the hash of the written bytes.
pub fn write_artifact<T: Serialize>(
    path: &Path,
    kind: &str,
    config_hash: &str,
    inputs: BTreeMap<String, String>,
    data: &T,
) -> Result<String, ArtifactError> {
    let artifact = Artifact {
        meta: ArtifactMeta {
            kind: kind.to_string(),
            config_hash: config_hash.to_string(),
            inputs,
        },
        data,
    };
    let mut text = serde_json::to_string(&artifact).map_err(|e| ArtifactError::Malformed {
        path: path.display().to_string(),
        kind: kind.to_string(),
        message: e.to_string(),
    })?;
    text.push('\n');
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .map_err(|e| ArtifactError::Write { path: path.display().to_string(), source: e })?;
    }
    fs::write(path, &text)
        .map_err(|e| ArtifactError::Write { path: path.display().to_string(), source: e })?;
    Ok(sha256_hex(text.as_bytes()))
}

pub fn read_artifact<T: DeserializeOwned>(
    path: &Path,
    kind: &str,
) -> Result<Artifact<T>, ArtifactError> {
    let bytes = fs::read(path)
        .map_err(|e| ArtifactError::Read { path: path.display().to_string(), source: e })?;
    let artifact: Artifact<T> =
        serde_json::from_slice(&bytes).map_err(|e| ArtifactError::Malformed {
            path: path.display().to_string(),
            kind: kind.to_string(),
            message: e.to_string(),
        })?;
    if artifact.meta.kind != kind {
        return Err(ArtifactError::Malformed {
            path: path.display().to_string(),
            kind: kind.to_string(),
            message: format!("artifact is of kind {:?}", artifact.meta.kind),
        });
    }
    Ok(artifact)
}

/// Checks that a recorded input hash matches the file on disk now.
pub fn verify_input(
    artifact_path: &Path,
    meta: &ArtifactMeta,
    name: &str,
    current_hash: &str,
) -> Result<(), ArtifactError> {
    match meta.inputs.get(name) {
        Some(expected) if expected == current_hash => Ok(()),
        Some(expected) => Err(ArtifactError::HashMismatch {
            path: artifact_path.display().to_string(),
            name: name.to_string(),
            expected: expected.clone(),
            found: current_hash.to_string(),
        }),
        None => Err(ArtifactError::Malformed {
            path: artifact_path.display().to_string(),
            kind: meta.kind.clone(),
            message: format!("missing input hash {name:?}"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        let h1 = write_artifact(&path, "demo", "cfg", BTreeMap::new(), &vec![1, 2, 3]).unwrap();
        let h2 = file_hash(&path).unwrap();
        assert_eq!(h1, h2);
        let back: Artifact<Vec<i32>> = read_artifact(&path, "demo").unwrap();
        assert_eq!(back.data, vec![1, 2, 3]);
        assert!(read_artifact::<Vec<i32>>(&path, "other").is_err());
    }

    #[test]
    fn identical_writes_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        let mut inputs = BTreeMap::new();
        inputs.insert("trips".to_string(), "abc".to_string());
        write_artifact(&a, "demo", "cfg", inputs.clone(), &(1.5f64, "x")).unwrap();
        write_artifact(&b, "demo", "cfg", inputs, &(1.5f64, "x")).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}
