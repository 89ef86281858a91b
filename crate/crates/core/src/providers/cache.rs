use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    check_vectors, Decomposer, Embedder, EmbeddingVector, NliLogits, NliPair, NliProvider,
};
use crate::corpus::canonicalize;
use crate::error::ProviderError;

#[derive(Serialize, Deserialize)]
struct Entry<V> {
    k: String,
    v: V,
}

struct Inner<V> {
    map: HashMap<String, V>,
    log: Option<File>,
}

/// Content-addressed response cache with an optional append-only JSON-lines file.
pub struct ResponseCache<V> {
    inner: Mutex<Inner<V>>,
    path: Option<PathBuf>,
}

impl<V: Clone + Serialize + DeserializeOwned> ResponseCache<V> {
    pub fn in_memory() -> Self {
        Self {
            inner: Mutex::new(Inner {
                map: HashMap::new(),
                log: None,
            }),
            path: None,
        }
    }

    /// Open (or create) a persistent cache. Unparseable lines, such as a
    /// torn final write, are skipped.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut map = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                if let Ok(entry) = serde_json::from_str::<Entry<V>>(&line?) {
                    map.insert(entry.k, entry.v);
                }
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner: Mutex::new(Inner {
                map,
                log: Some(log),
            }),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// SHA-256 over the NFC-canonical parts, separated by a unit separator.
    pub fn key(parts: &[&str]) -> String {
        let mut hasher = Sha256::new();
        for (i, p) in parts.iter().enumerate() {
            if i > 0 {
                hasher.update([0x1f]);
            }
            hasher.update(canonicalize(p).as_bytes());
        }
        hex::encode(hasher.finalize())
    }

    pub fn get(&self, key: &str) -> Option<V> {
        self.inner.lock().unwrap().map.get(key).cloned()
    }

    pub fn insert(&self, key: String, value: V) {
        let mut inner = self.inner.lock().unwrap();
        if inner.map.contains_key(&key) {
            return;
        }
        if let Some(log) = inner.log.as_mut() {
            let line = serde_json::to_string(&Entry {
                k: key.clone(),
                v: value.clone(),
            })
            .expect("cache entries serialize");
            if let Err(e) = writeln!(log, "{line}") {
                log::warn!("cache append failed: {e}");
            }
        }
        inner.map.insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Look up each key, call `fetch` once for the distinct misses, fill the cache.
fn fill<V, F>(cache: &ResponseCache<V>, keys: &[String], fetch: F) -> Result<Vec<V>, ProviderError>
where
    V: Clone + Serialize + DeserializeOwned,
    F: FnOnce(&[usize]) -> Result<Vec<V>, ProviderError>,
{
    let mut out: Vec<Option<V>> = keys.iter().map(|k| cache.get(k)).collect();
    let mut miss_idx = Vec::new();
    let mut first_seen: HashMap<&str, usize> = HashMap::new();
    for (i, slot) in out.iter().enumerate() {
        if slot.is_none() && !first_seen.contains_key(keys[i].as_str()) {
            first_seen.insert(keys[i].as_str(), miss_idx.len());
            miss_idx.push(i);
        }
    }
    if !miss_idx.is_empty() {
        let fetched = fetch(&miss_idx)?;
        for (&i, v) in miss_idx.iter().zip(&fetched) {
            cache.insert(keys[i].clone(), v.clone());
        }
        for (i, slot) in out.iter_mut().enumerate() {
            if slot.is_none() {
                *slot = Some(fetched[first_seen[keys[i].as_str()]].clone());
            }
        }
    }
    Ok(out.into_iter().map(|v| v.expect("filled")).collect())
}

pub struct CachedNli<P> {
    inner: P,
    cache: ResponseCache<[f64; 3]>,
}

impl<P: NliProvider> CachedNli<P> {
    pub fn new(inner: P, cache: ResponseCache<[f64; 3]>) -> Self {
        Self { inner, cache }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn cache(&self) -> &ResponseCache<[f64; 3]> {
        &self.cache
    }
}

impl<P: NliProvider> NliProvider for CachedNli<P> {
    fn nli_batch(&self, pairs: &[NliPair]) -> Result<Vec<NliLogits>, ProviderError> {
        let keys: Vec<String> = pairs
            .iter()
            .map(|(p, h)| ResponseCache::<[f64; 3]>::key(&["nli", p, h]))
            .collect();
        let raw = fill(&self.cache, &keys, |miss| {
            let batch: Vec<NliPair> = miss.iter().map(|&i| pairs[i].clone()).collect();
            let logits = self.inner.nli_batch(&batch)?;
            if logits.len() != batch.len() {
                return Err(ProviderError::Protocol {
                    provider: "nli",
                    message: format!("{} results for {} pairs", logits.len(), batch.len()),
                });
            }
            Ok(logits.into_iter().map(NliLogits::to_array).collect())
        })?;
        Ok(raw.into_iter().map(NliLogits::from_array).collect())
    }
}

pub struct CachedEmbedder<P> {
    inner: P,
    cache: ResponseCache<Vec<f64>>,
}

impl<P: Embedder> CachedEmbedder<P> {
    pub fn new(inner: P, cache: ResponseCache<Vec<f64>>) -> Self {
        Self { inner, cache }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: Embedder> Embedder for CachedEmbedder<P> {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let keys: Vec<String> = texts
            .iter()
            .map(|t| ResponseCache::<Vec<f64>>::key(&["embed", t]))
            .collect();
        let raw = fill(&self.cache, &keys, |miss| {
            let batch: Vec<String> = miss.iter().map(|&i| texts[i].clone()).collect();
            let vectors = self.inner.embed_batch(&batch)?;
            if vectors.len() != batch.len() {
                return Err(ProviderError::Protocol {
                    provider: "embed",
                    message: format!("{} vectors for {} texts", vectors.len(), batch.len()),
                });
            }
            Ok(vectors.into_iter().map(|v| v.0).collect())
        })?;
        let vectors: Vec<EmbeddingVector> = raw.into_iter().map(EmbeddingVector).collect();
        check_vectors("embed", &vectors, None)?;
        Ok(vectors)
    }
}

pub struct CachedDecomposer<P> {
    inner: P,
    cache: ResponseCache<Vec<String>>,
}

impl<P: Decomposer> CachedDecomposer<P> {
    pub fn new(inner: P, cache: ResponseCache<Vec<String>>) -> Self {
        Self { inner, cache }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: Decomposer> Decomposer for CachedDecomposer<P> {
    fn decompose(&self, sentence: &str, prompt_context: &str) -> Result<Vec<String>, ProviderError> {
        let key = ResponseCache::<Vec<String>>::key(&["decompose", sentence, prompt_context]);
        if let Some(facts) = self.cache.get(&key) {
            return Ok(facts);
        }
        let facts = self.inner.decompose(sentence, prompt_context)?;
        self.cache.insert(key, facts.clone());
        Ok(facts)
    }
}
