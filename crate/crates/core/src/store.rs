//! On-disk data directory.
//!
//! ```text
//! <data-dir>/
//!   store.json          format version and run counter
//!   corpus.json
//!   labels.json
//!   runs/run-00001.json
//!   cache/embeddings/
//!   eit.lock            held by the single writer
//! ```
//!
//! Every file is replaced atomically (write to a temporary file, then
//! rename), so readers never observe a partial write.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::annotation::LabelStore;
use crate::classifier::ClassificationRun;
use crate::corpus::Corpus;
use crate::embedding::EmbeddingCache;
use crate::error::{Error, Result};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    next_run: u64,
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    lock: Option<File>,
}

impl Store {
    /// Creates the layout if missing; existing data is left alone.
    pub fn init(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for dir in [root.clone(), root.join("runs"), root.join("cache").join("embeddings")] {
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let store = Self { root, lock: None }.locked()?;
        if !store.meta_path().exists() {
            store.write_json(&store.meta_path(), &Meta { format_version: FORMAT_VERSION, next_run: 1 })?;
        }
        if !store.corpus_path().exists() {
            store.save_corpus(&Corpus::new())?;
        }
        if !store.labels_path().exists() {
            store.save_labels(&LabelStore::new())?;
        }
        Ok(store)
    }

    /// Opens for reading only.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.join("store.json").is_file() {
            return Err(Error::StoreNotInitialized(root));
        }
        Ok(Self { root, lock: None })
    }

    /// Opens and takes the writer lock, failing at once if another writer
    /// holds it.
    pub fn open_writer(root: impl Into<PathBuf>) -> Result<Self> {
        Self::open(root)?.locked()
    }

    fn locked(mut self) -> Result<Self> {
        let path = self.root.join("eit.lock");
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        match file.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => return Err(Error::StoreLocked(path)),
            Err(fs::TryLockError::Error(e)) => return Err(Error::io(&path, e)),
        }
        self.lock = Some(file);
        Ok(self)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn is_writer(&self) -> bool {
        self.lock.is_some()
    }

    fn meta_path(&self) -> PathBuf {
        self.root.join("store.json")
    }
    fn corpus_path(&self) -> PathBuf {
        self.root.join("corpus.json")
    }
    fn labels_path(&self) -> PathBuf {
        self.root.join("labels.json")
    }
    fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn embedding_cache(&self) -> EmbeddingCache {
        EmbeddingCache::on_disk(self.root.join("cache").join("embeddings"))
    }

    fn require_writer(&self) -> Result<()> {
        if self.lock.is_none() {
            return Err(Error::invalid("store opened read-only"));
        }
        Ok(())
    }

    fn read_json<T: DeserializeOwned>(&self, path: &Path) -> Result<T> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })
    }

    fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<()> {
        self.require_writer()?;
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        let mut corpus: Corpus = self.read_json(&self.corpus_path())?;
        corpus.reindex();
        Ok(corpus)
    }

    pub fn save_corpus(&self, corpus: &Corpus) -> Result<()> {
        self.write_json(&self.corpus_path(), corpus)
    }

    pub fn load_labels(&self) -> Result<LabelStore> {
        self.read_json(&self.labels_path())
    }

    pub fn save_labels(&self, labels: &LabelStore) -> Result<()> {
        self.write_json(&self.labels_path(), labels)
    }

    /// Assigns the next run id and persists the run.
    pub fn save_run(&self, run: &mut ClassificationRun) -> Result<String> {
        self.require_writer()?;
        let mut meta: Meta = self.read_json(&self.meta_path())?;
        run.run_id = format!("run-{:05}", meta.next_run);
        meta.next_run += 1;
        self.write_json(&self.runs_dir().join(format!("{}.json", run.run_id)), run)?;
        self.write_json(&self.meta_path(), &meta)?;
        Ok(run.run_id.clone())
    }

    pub fn load_run(&self, run_id: &str) -> Result<ClassificationRun> {
        let valid = !run_id.is_empty() && run_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-');
        let path = self.runs_dir().join(format!("{run_id}.json"));
        if !valid || !path.is_file() {
            return Err(Error::UnknownRun(run_id.to_string()));
        }
        self.read_json(&path)
    }

    /// Stored run ids, ascending.
    pub fn run_ids(&self) -> Result<Vec<String>> {
        let dir = self.runs_dir();
        let mut ids: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".json")).map(str::to_string))
            .filter(|n| n.starts_with("run-"))
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn list_runs(&self) -> Result<Vec<ClassificationRun>> {
        self.run_ids()?.iter().map(|id| self.load_run(id)).collect()
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
