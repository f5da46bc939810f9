//! Append-only JSON Lines caches for coalition utilities and model responses.
//!
//! Keys are first-writer-wins: once a key is stored a later insert with a
//! different value is ignored and the stored value is returned. The backing
//! file is held under an exclusive advisory lock for the cache's lifetime. If
//! an append fails the cache keeps working in memory and reports the failure
//! once.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use promptshap_core::{Coalition, OracleError, Utility};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

type Sink = Box<dyn Write + Send>;

/// Summary of a cache file's contents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub entries: usize,
    /// Lines repeating an already-stored key.
    pub duplicates: usize,
    /// Duplicate lines whose value disagrees with the stored one.
    pub conflicts: usize,
}

trait Record: Sized {
    type Value: Clone + PartialEq;
    fn encode(key: &str, value: &Self::Value) -> String;
    fn decode(line: &str) -> std::result::Result<(String, Self::Value), String>;
}

struct Store<R: Record> {
    entries: Mutex<BTreeMap<String, R::Value>>,
    sink: Mutex<Option<Sink>>,
    path: Option<PathBuf>,
    stats: CacheStats,
    warned: AtomicBool,
    warning: Mutex<Option<String>>,
}

impl<R: Record> Store<R> {
    fn in_memory() -> Self {
        Self {
            entries: Mutex::new(BTreeMap::new()),
            sink: Mutex::new(None),
            path: None,
            stats: CacheStats { entries: 0, duplicates: 0, conflicts: 0 },
            warned: AtomicBool::new(false),
            warning: Mutex::new(None),
        }
    }

    fn load_entries(path: &Path) -> Result<(BTreeMap<String, R::Value>, CacheStats)> {
        let mut map = BTreeMap::new();
        let mut stats = CacheStats { entries: 0, duplicates: 0, conflicts: 0 };
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((map, stats)),
            Err(e) => return Err(Error::io(path, e)),
        };
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = R::decode(&line).map_err(|m| Error::input(path, i + 1, m))?;
            match map.get(&key) {
                Some(old) => {
                    stats.duplicates += 1;
                    if *old != value {
                        stats.conflicts += 1;
                    }
                }
                None => {
                    map.insert(key, value);
                }
            }
        }
        stats.entries = map.len();
        Ok((map, stats))
    }

    fn open(path: &Path) -> Result<Self> {
        let (map, stats) = Self::load_entries(path)?;
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
        file.try_lock().map_err(|e| match e {
            std::fs::TryLockError::WouldBlock => Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::WouldBlock, "cache file is locked by another process"),
            ),
            std::fs::TryLockError::Error(e) => Error::io(path, e),
        })?;
        let mut store = Self::in_memory();
        store.entries = Mutex::new(map);
        store.sink = Mutex::new(Some(Box::new(LockedFile(file))));
        store.path = Some(path.to_owned());
        store.stats = stats;
        Ok(store)
    }

    fn with_sink(sink: Sink) -> Self {
        let store = Self::in_memory();
        *store.sink.lock().unwrap() = Some(sink);
        store
    }

    fn get(&self, key: &str) -> Option<R::Value> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    fn insert(&self, key: String, value: R::Value) -> R::Value {
        let mut entries = self.entries.lock().unwrap();
        if let Some(existing) = entries.get(&key) {
            return existing.clone();
        }
        let line = R::encode(&key, &value);
        entries.insert(key, value.clone());
        // Appends happen under the entries lock, so file order matches insertion order.
        let mut sink = self.sink.lock().unwrap();
        if let Some(w) = sink.as_mut() {
            let res = w.write_all(line.as_bytes()).and_then(|_| w.write_all(b"\n")).and_then(|_| w.flush());
            if let Err(e) = res {
                *sink = None;
                self.warn(format!("cache write failed, continuing in memory: {e}"));
            }
        }
        value
    }

    fn warn(&self, message: String) {
        if !self.warned.swap(true, Ordering::SeqCst) {
            eprintln!("warning: {message}");
            *self.warning.lock().unwrap() = Some(message);
        }
    }

    fn persist(&self, path: &Path) -> Result<()> {
        let entries = self.entries.lock().unwrap();
        let mut s = String::new();
        for (k, v) in entries.iter() {
            s.push_str(&R::encode(k, v));
            s.push('\n');
        }
        crate::formats::write_atomic(path, s.as_bytes())
    }
}

struct LockedFile(File);

impl Write for LockedFile {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.write(buf)
    }
    fn flush(&mut self) -> std::io::Result<()> {
        self.0.flush()
    }
}

impl Drop for LockedFile {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

macro_rules! store_accessors {
    () => {
        pub fn len(&self) -> usize {
            self.store.entries.lock().unwrap().len()
        }

        pub fn is_empty(&self) -> bool {
            self.len() == 0
        }

        pub fn path(&self) -> Option<&Path> {
            self.store.path.as_deref()
        }

        /// Statistics of the file as it was loaded.
        pub fn load_stats(&self) -> &CacheStats {
            &self.store.stats
        }

        /// True once a write failure has switched the cache to memory only.
        pub fn degraded(&self) -> bool {
            self.store.warned.load(Ordering::SeqCst)
        }

        pub fn warning(&self) -> Option<String> {
            self.store.warning.lock().unwrap().clone()
        }

        /// Writes all entries, sorted by key, to `path`.
        pub fn persist(&self, path: &Path) -> Result<()> {
            self.store.persist(path)
        }
    };
}

// ---------------------------------------------------------------- utilities

#[derive(Serialize, Deserialize)]
struct UtilityLine<'a> {
    coalition: std::borrow::Cow<'a, str>,
    u: f64,
}

struct UtilityRecord;

impl Record for UtilityRecord {
    type Value = f64;
    fn encode(key: &str, value: &f64) -> String {
        serde_json::to_string(&UtilityLine { coalition: key.into(), u: *value }).expect("finite utility")
    }
    fn decode(line: &str) -> std::result::Result<(String, f64), String> {
        let rec: UtilityLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        Ok((rec.coalition.into_owned(), rec.u))
    }
}

/// Coalition utilities keyed by canonical coalition hex.
pub struct UtilityCache {
    store: Store<UtilityRecord>,
}

impl UtilityCache {
    pub fn in_memory() -> Self {
        Self { store: Store::in_memory() }
    }

    /// Loads `path` if it exists and appends new entries to it.
    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self { store: Store::open(path)? })
    }

    pub fn load_stats_of(path: &Path) -> Result<CacheStats> {
        Ok(Store::<UtilityRecord>::load_entries(path)?.1)
    }

    /// Appends new entries to an arbitrary writer instead of a file.
    pub fn with_writer(writer: impl Write + Send + 'static) -> Self {
        Self { store: Store::with_sink(Box::new(writer)) }
    }

    pub fn get(&self, coalition: &Coalition) -> Option<f64> {
        self.store.get(&coalition.to_hex())
    }

    /// Stores `u` unless the coalition is present; returns the stored value.
    /// Non-finite values are returned but never stored.
    pub fn insert(&self, coalition: &Coalition, u: f64) -> f64 {
        if !u.is_finite() {
            return u;
        }
        self.store.insert(coalition.to_hex(), u)
    }

    pub fn entries(&self) -> Vec<(String, f64)> {
        self.store.entries.lock().unwrap().iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    store_accessors!();
}

/// Memoizing wrapper around a utility oracle.
pub struct CachedUtility<'c, U> {
    inner: U,
    cache: &'c UtilityCache,
}

impl<'c, U: Utility> CachedUtility<'c, U> {
    pub fn new(inner: U, cache: &'c UtilityCache) -> Self {
        Self { inner, cache }
    }

    pub fn inner(&self) -> &U {
        &self.inner
    }
}

impl<U: Utility> Utility for CachedUtility<'_, U> {
    fn players(&self) -> usize {
        self.inner.players()
    }

    fn evaluate(&self, coalition: &Coalition) -> std::result::Result<f64, OracleError> {
        if let Some(u) = self.cache.get(coalition) {
            return Ok(u);
        }
        let u = self.inner.evaluate(coalition)?;
        Ok(self.cache.insert(coalition, u))
    }
}

// ---------------------------------------------------------------- responses

#[derive(Serialize, Deserialize)]
struct ResponseLine<'a> {
    digest: std::borrow::Cow<'a, str>,
    response: std::borrow::Cow<'a, str>,
}

struct ResponseRecord;

impl Record for ResponseRecord {
    type Value = String;
    fn encode(key: &str, value: &String) -> String {
        serde_json::to_string(&ResponseLine { digest: key.into(), response: value.as_str().into() }).expect("string record")
    }
    fn decode(line: &str) -> std::result::Result<(String, String), String> {
        let rec: ResponseLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        Ok((rec.digest.into_owned(), rec.response.into_owned()))
    }
}

/// Raw model responses keyed by a SHA-256 request digest.
pub struct ResponseCache {
    store: Store<ResponseRecord>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self { store: Store::in_memory() }
    }

    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self { store: Store::open(path)? })
    }

    pub fn load_stats_of(path: &Path) -> Result<CacheStats> {
        Ok(Store::<ResponseRecord>::load_entries(path)?.1)
    }

    pub fn with_writer(writer: impl Write + Send + 'static) -> Self {
        Self { store: Store::with_sink(Box::new(writer)) }
    }

    pub fn get(&self, digest: &str) -> Option<String> {
        self.store.get(digest)
    }

    pub fn insert(&self, digest: String, response: String) -> String {
        self.store.insert(digest, response)
    }

    store_accessors!();
}

/// Hex SHA-256 over a length-unambiguous JSON encoding of the request fields.
pub fn request_digest(model: &str, exemplars: &[String], question: &str, temperature: f64, max_tokens: u32) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        model: &'a str,
        exemplars: &'a [String],
        question: &'a str,
        temperature: f64,
        max_tokens: u32,
    }
    let bytes = serde_json::to_vec(&Key { model, exemplars, question, temperature, max_tokens }).expect("digest key");
    hex::encode(Sha256::digest(&bytes))
}

/// Detected contents of a cache file, for the `cache` subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheKind {
    Utility,
    Response,
    Empty,
}

pub fn detect_kind(path: &Path) -> Result<CacheKind> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::input(path, i + 1, e.to_string()))?;
        return if v.get("coalition").is_some() {
            Ok(CacheKind::Utility)
        } else if v.get("digest").is_some() {
            Ok(CacheKind::Response)
        } else {
            Err(Error::input(path, i + 1, "neither a utility nor a response cache record"))
        };
    }
    Ok(CacheKind::Empty)
}

/// Rewrites a cache file sorted and without duplicate keys (first value wins).
pub fn compact(path: &Path) -> Result<(CacheKind, CacheStats)> {
    let kind = detect_kind(path)?;
    let stats = match kind {
        CacheKind::Utility => {
            let (map, stats) = Store::<UtilityRecord>::load_entries(path)?;
            let s: String = map.iter().map(|(k, v)| UtilityRecord::encode(k, v) + "\n").collect();
            crate::formats::write_atomic(path, s.as_bytes())?;
            stats
        }
        CacheKind::Response => {
            let (map, stats) = Store::<ResponseRecord>::load_entries(path)?;
            let s: String = map.iter().map(|(k, v)| ResponseRecord::encode(k, v) + "\n").collect();
            crate::formats::write_atomic(path, s.as_bytes())?;
            stats
        }
        CacheKind::Empty => CacheStats { entries: 0, duplicates: 0, conflicts: 0 },
    };
    Ok((kind, stats))
}

pub fn inspect(path: &Path) -> Result<(CacheKind, CacheStats)> {
    let kind = detect_kind(path)?;
    let stats = match kind {
        CacheKind::Utility => UtilityCache::load_stats_of(path)?,
        CacheKind::Response => ResponseCache::load_stats_of(path)?,
        CacheKind::Empty => CacheStats { entries: 0, duplicates: 0, conflicts: 0 },
    };
    Ok((kind, stats))
}
