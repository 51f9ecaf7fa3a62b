//! Snapshot format: the store state as pretty-printed UTF-8 JSON (keys in a
//! fixed order), a newline, then a line `sha256:<hex>` holding the SHA-256
//! of the JSON bytes.

use std::fs;
use std::path::Path;

use super::blobs::{sha256_hex, write_atomic};
use super::{BlobStore, State, Store, StoreError};

pub const SNAPSHOT_FILE: &str = "store.json";
const CHECKSUM_PREFIX: &str = "\nsha256:";

impl Store {
    pub fn snapshot(&self) -> Vec<u8> {
        let mut out = serde_json::to_string_pretty(&self.state).expect("state serializes");
        let sum = sha256_hex(out.as_bytes());
        out.push_str(CHECKSUM_PREFIX);
        out.push_str(&sum);
        out.push('\n');
        out.into_bytes()
    }

    /// Rebuilds a store from [`Store::snapshot`] output. Blobs are looked up
    /// in `blobs`.
    pub fn load(bytes: &[u8], blobs: BlobStore) -> Result<Self, StoreError> {
        let corrupt = |m: &str| StoreError::CorruptSnapshot(m.to_string());
        let text = std::str::from_utf8(bytes).map_err(|_| corrupt("not UTF-8"))?;
        let text = text.strip_suffix('\n').ok_or_else(|| corrupt("missing final newline"))?;
        let split = text
            .rfind(CHECKSUM_PREFIX)
            .ok_or_else(|| corrupt("missing checksum line"))?;
        let (json, sum) = (&text[..split], &text[split + CHECKSUM_PREFIX.len()..]);
        if sha256_hex(json.as_bytes()) != sum {
            return Err(corrupt("checksum mismatch"));
        }
        let state: State =
            serde_json::from_str(json).map_err(|e| StoreError::CorruptSnapshot(e.to_string()))?;
        Store::from_parts(state, blobs).map_err(|e| StoreError::CorruptSnapshot(e.to_string()))
    }

    /// Opens the store kept in `dir`, or an empty one if the directory holds
    /// no snapshot yet.
    pub fn open_dir(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref();
        let blobs = BlobStore::directory(dir);
        match fs::read(dir.join(SNAPSHOT_FILE)) {
            Ok(bytes) => Store::load(&bytes, blobs),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                let mut store = Store::in_memory();
                store.blobs = blobs;
                Ok(store)
            }
            Err(e) => Err(StoreError::Io(e.to_string())),
        }
    }

    /// Writes the snapshot into the store directory. In-memory stores have
    /// nothing to write.
    pub fn persist(&self) -> Result<(), StoreError> {
        match &self.blobs {
            BlobStore::Directory(dir) => write_atomic(&dir.join(SNAPSHOT_FILE), &self.snapshot()),
            BlobStore::Memory(_) => Ok(()),
        }
    }
}
