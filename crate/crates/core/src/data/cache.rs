//! Generated datasets on disk: a container file plus `manifest.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MANIFEST_VERSION: u32 = 1;
pub const DATA_FILE: &str = "dataset.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub kind: String,
    /// SHA-256 of the source bytes, the canonical config JSON, and the seed.
    pub source_hash: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub entries: Vec<String>,
}

pub fn source_hash(source: &[u8], config: &serde_json::Value, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(source);
    h.update(config.to_string().as_bytes());
    h.update(seed.to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes the dataset; refuses to replace an existing one unless `force`.
pub fn write_dataset(dir: &Path, manifest: &Manifest, entries: Vec<(String, Tensor)>, force: bool) -> Result<PathBuf> {
    let data = dir.join(DATA_FILE);
    let man = dir.join(MANIFEST_FILE);
    if !force && (data.exists() || man.exists()) {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::AlreadyExists,
            format!("{} already holds a dataset; pass --force to overwrite", dir.display()),
        )));
    }
    std::fs::create_dir_all(dir)?;
    let c = Container {
        metadata: serde_json::to_string(manifest).expect("serializable manifest"),
        entries,
    };
    c.save(&data)?;
    std::fs::write(&man, serde_json::to_string_pretty(manifest).expect("serializable manifest") + "\n")?;
    Ok(data)
}

pub fn read_dataset(dir: &Path) -> Result<(Manifest, Container)> {
    let c = Container::load(&dir.join(DATA_FILE))?;
    let m: Manifest =
        serde_json::from_str(&c.metadata).map_err(|e| Error::Checkpoint(format!("dataset manifest: {e}")))?;
    Ok((m, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_changes_with_config_and_seed() {
        let c1 = serde_json::json!({"count": 35});
        let c2 = serde_json::json!({"count": 36});
        let h = source_hash(b"", &c1, 0);
        assert_eq!(h, source_hash(b"", &c1, 0));
        assert_ne!(h, source_hash(b"", &c2, 0));
        assert_ne!(h, source_hash(b"", &c1, 1));
    }

    #[test]
    fn write_refuses_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest {
            version: MANIFEST_VERSION,
            kind: "toy".into(),
            source_hash: "x".into(),
            config: serde_json::json!({}),
            seed: 0,
            entries: vec!["a".into()],
        };
        let e = vec![("a".to_string(), Tensor::ones(2, 2))];
        write_dataset(dir.path(), &m, e.clone(), false).unwrap();
        assert!(write_dataset(dir.path(), &m, e.clone(), false).is_err());
        write_dataset(dir.path(), &m, e, true).unwrap();
        let (back, c) = read_dataset(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(c.get("a").unwrap(), &Tensor::ones(2, 2));
    }
}
