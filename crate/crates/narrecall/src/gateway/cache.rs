//! Content-addressed embedding cache: `<root>/<model>/<sha256 of text>`.
//! Writes go through a temporary file and a rename, under a write lock.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use narrecall_core::similarity::{EmbedError, Embedder, EmbeddingVector};
use sha2::{Digest, Sha256};

fn model_dir(root: &Path, model: &str) -> PathBuf {
    let safe: String = model
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    root.join(safe)
}

fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn read_cached(path: &Path) -> Option<EmbeddingVector> {
    let bytes = fs::read(path).ok()?;
    match serde_json::from_slice(&bytes) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("ignoring corrupt cache entry {}: {e}", path.display());
            None
        }
    }
}

pub struct CachedEmbedder<E> {
    inner: E,
    dir: PathBuf,
    lock: RwLock<()>,
}

impl<E: Embedder> CachedEmbedder<E> {
    /// `root` is the cache root, e.g. `<data>/cache/embeddings`.
    pub fn new(inner: E, root: &Path) -> Self {
        let dir = model_dir(root, inner.model_id());
        Self {
            inner,
            dir,
            lock: RwLock::new(()),
        }
    }

    pub fn entry_path(&self, text: &str) -> PathBuf {
        self.dir.join(text_hash(text))
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        let path = self.entry_path(text);
        {
            let _r = self.lock.read().unwrap_or_else(|e| e.into_inner());
            if let Some(v) = read_cached(&path) {
                return Ok(v);
            }
        }
        let v = self.inner.embed(text)?;
        let _w = self.lock.write().unwrap_or_else(|e| e.into_inner());
        let write = || -> std::io::Result<()> {
            fs::create_dir_all(&self.dir)?;
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, serde_json::to_vec(&v).map_err(std::io::Error::other)?)?;
            fs::rename(&tmp, &path)
        };
        if let Err(e) = write() {
            log::warn!("could not cache embedding at {}: {e}", path.display());
        }
        Ok(v)
    }
}

/// Serves only what is already cached; used in replay mode.
pub struct CacheOnlyEmbedder {
    model: String,
    dir: PathBuf,
}

impl CacheOnlyEmbedder {
    pub fn new(model: &str, root: &Path) -> Self {
        Self {
            model: model.to_string(),
            dir: model_dir(root, model),
        }
    }
}

impl Embedder for CacheOnlyEmbedder {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        read_cached(&self.dir.join(text_hash(text))).ok_or_else(|| {
            EmbedError::Provider(format!("no cached {} embedding for text", self.model))
        })
    }
}
