use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlobKind {
    Audio,
    Asset,
}

impl BlobKind {
    /// Path of a blob relative to the store root.
    pub fn relative_path(self, hash: &str) -> String {
        match self {
            BlobKind::Audio => format!("audio/{hash}.wav"),
            BlobKind::Asset => format!("assets/{hash}"),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn is_hash(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Content-addressed file storage, either in memory or under a directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlobStore {
    Memory(BTreeMap<String, Vec<u8>>),
    Directory(PathBuf),
}

impl Default for BlobStore {
    fn default() -> Self {
        BlobStore::Memory(BTreeMap::new())
    }
}

impl BlobStore {
    pub fn directory(root: impl AsRef<Path>) -> Self {
        BlobStore::Directory(root.as_ref().to_path_buf())
    }

    /// Stores `bytes` and returns their SHA-256. Storing the same content
    /// twice is a no-op.
    pub fn put(&mut self, kind: BlobKind, bytes: &[u8]) -> Result<String, StoreError> {
        let hash = sha256_hex(bytes);
        let rel = kind.relative_path(&hash);
        match self {
            BlobStore::Memory(map) => {
                map.entry(rel).or_insert_with(|| bytes.to_vec());
            }
            BlobStore::Directory(root) => {
                let path = root.join(&rel);
                if !path.exists() {
                    write_atomic(&path, bytes)?;
                }
            }
        }
        Ok(hash)
    }

    pub fn get(&self, kind: BlobKind, hash: &str) -> Result<Vec<u8>, StoreError> {
        if !is_hash(hash) {
            return Err(StoreError::MissingBlob(hash.to_string()));
        }
        let rel = kind.relative_path(hash);
        match self {
            BlobStore::Memory(map) => map
                .get(&rel)
                .cloned()
                .ok_or(StoreError::MissingBlob(rel)),
            BlobStore::Directory(root) => {
                fs::read(root.join(&rel)).map_err(|_| StoreError::MissingBlob(rel))
            }
        }
    }

    pub fn contains(&self, kind: BlobKind, hash: &str) -> bool {
        if !is_hash(hash) {
            return false;
        }
        let rel = kind.relative_path(hash);
        match self {
            BlobStore::Memory(map) => map.contains_key(&rel),
            BlobStore::Directory(root) => root.join(rel).is_file(),
        }
    }
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let io = |e: std::io::Error| StoreError::Io(format!("{}: {e}", path.display()));
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}
