use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use super::TextHash;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"EITEMB1\0";

#[derive(Default)]
struct ProviderEntries {
    loaded: bool,
    dim: usize,
    vectors: HashMap<TextHash, Arc<[f64]>>,
}

/// Embedding cache keyed by `(provider_id, text_hash)`.
///
/// With a directory, each provider gets an append-only file
/// `<dir>/<provider_id>.bin`: an 8-byte magic, the dimension as a
/// little-endian `u32`, then records of `hash[32] ++ f64le[dim]`. Values
/// round-trip bit-exactly.
pub struct EmbeddingCache {
    dir: Option<PathBuf>,
    inner: Mutex<HashMap<String, ProviderEntries>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            inner: Mutex::new(HashMap::new()),
        }
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            inner: Mutex::new(HashMap::new()),
        }
    }

    fn file_for(&self, provider_id: &str) -> Option<PathBuf> {
        let safe: String = provider_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
            .collect();
        self.dir.as_ref().map(|d| d.join(format!("{safe}.bin")))
    }

    fn ensure_loaded(&self, provider_id: &str, entries: &mut ProviderEntries) -> Result<()> {
        if entries.loaded {
            return Ok(());
        }
        entries.loaded = true;
        let Some(path) = self.file_for(provider_id) else {
            return Ok(());
        };
        if !path.exists() {
            return Ok(());
        }
        let (dim, vectors) = read_cache_file(&path)?;
        entries.dim = dim;
        entries.vectors = vectors;
        Ok(())
    }

    pub fn get(&self, provider_id: &str, hash: &TextHash) -> Option<Arc<[f64]>> {
        let mut inner = self.inner.lock().expect("cache lock poisoned");
        let entries = inner.entry(provider_id.to_string()).or_default();
        // An unreadable cache file behaves as a cold cache.
        if self.ensure_loaded(provider_id, entries).is_err() {
            entries.vectors.clear();
        }
        entries.vectors.get(hash).cloned()
    }

    pub fn len(&self, provider_id: &str) -> usize {
        let mut inner = self.inner.lock().expect("cache lock poisoned");
        let entries = inner.entry(provider_id.to_string()).or_default();
        let _ = self.ensure_loaded(provider_id, entries);
        entries.vectors.len()
    }

    pub fn is_empty(&self, provider_id: &str) -> bool {
        self.len(provider_id) == 0
    }

    /// Adds computed vectors, appending new ones to the provider's file.
    pub fn insert_many(&self, provider_id: &str, dim: usize, items: Vec<(TextHash, Arc<[f64]>)>) -> Result<()> {
        if items.is_empty() {
            return Ok(());
        }
        let mut inner = self.inner.lock().expect("cache lock poisoned");
        let entries = inner.entry(provider_id.to_string()).or_default();
        if self.ensure_loaded(provider_id, entries).is_err() {
            entries.vectors.clear();
        }
        let new: Vec<(TextHash, Arc<[f64]>)> = items
            .into_iter()
            .filter(|(h, _)| !entries.vectors.contains_key(h))
            .collect();
        if let Some(path) = self.file_for(provider_id) {
            append_cache_file(&path, dim, &new)?;
        }
        entries.dim = dim;
        for (h, v) in new {
            entries.vectors.insert(h, v);
        }
        Ok(())
    }
}

fn read_cache_file(path: &Path) -> Result<(usize, HashMap<TextHash, Arc<[f64]>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, "not an embedding cache file"),
        ));
    }
    let mut dim_bytes = [0u8; 4];
    r.read_exact(&mut dim_bytes).map_err(|e| Error::io(path, e))?;
    let dim = u32::from_le_bytes(dim_bytes) as usize;

    let mut map = HashMap::new();
    let mut hash = [0u8; 32];
    let mut buf = vec![0u8; dim * 8];
    loop {
        match r.read_exact(&mut hash) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(Error::io(path, e)),
        }
        // A torn trailing record (interrupted append) is ignored.
        if r.read_exact(&mut buf).is_err() {
            break;
        }
        let v: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        map.insert(TextHash(hash), Arc::from(v));
    }
    Ok((dim, map))
}

fn append_cache_file(path: &Path, dim: usize, items: &[(TextHash, Arc<[f64]>)]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let fresh = !path.exists();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut buf = Vec::with_capacity(32 + dim * 8);
    if fresh {
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for (h, v) in items {
        buf.extend_from_slice(&h.0);
        for x in v.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{embed_batch, FallbackProvider};

    #[test]
    fn warm_cache_matches_cold_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let p = FallbackProvider::new(5, 32).unwrap();
        let texts = ["kitten", "sitting", "", "variance of a die roll"];
        let cold = embed_batch(&texts, &p, Some(&EmbeddingCache::on_disk(dir.path()))).unwrap();

        let warm_cache = EmbeddingCache::on_disk(dir.path());
        assert_eq!(warm_cache.len("fallback-trigram-v1-d32-s5"), 4);
        let warm = embed_batch(&texts, &p, Some(&warm_cache)).unwrap();
        let bits = |m: &crate::Matrix<f64>| m.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&cold), bits(&warm));
    }

    #[test]
    fn cache_hits_skip_provider() {
        struct Once(std::sync::atomic::AtomicUsize);
        impl crate::embedding::EmbeddingProvider for Once {
            fn provider_id(&self) -> &str {
                "once"
            }
            fn dimension(&self) -> usize {
                2
            }
            fn embed(&self, _: &str) -> Result<Vec<f64>> {
                self.0.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                Ok(vec![0.25, 0.5])
            }
        }
        let p = Once(Default::default());
        let cache = EmbeddingCache::in_memory();
        embed_batch(&["a", "b"], &p, Some(&cache)).unwrap();
        embed_batch(&["a", "b", "c"], &p, Some(&cache)).unwrap();
        assert_eq!(p.0.load(std::sync::atomic::Ordering::SeqCst), 3);
    }
}
