//! On-disk knowledge base: one JSON file per entry plus a manifest.
//!
//! ```text
//! <dir>/manifest.json        {dimension, embedder, order}
//! <dir>/entries/<id>.json    KnowledgeEntry
//! <dir>/.lock                writers hold an exclusive lock on this file
//! ```

mod embedder;

pub use embedder::{cosine, BagOfClasses, Embedder, DEFAULT_VOCABULARY};

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distiller::{ActionRecord, Distillation, ObjectPattern, TaskPattern};
use crate::llm_gateway::{numbered_lines, parse_yes_no_indices, placeholders, Gateway, GatewayError, TemplateId, UnparseableResponse};
use crate::scene_graph::{FrameObservation, SceneGraph};

pub const DEFAULT_TOP_N: usize = 3;

const MANIFEST: &str = "manifest.json";
const ENTRIES: &str = "entries";
const LOCK: &str = ".lock";

#[derive(Debug, Error)]
pub enum KbError {
    #[error("entry `{0}` already exists")]
    DuplicateId(String),
    #[error("visual key has dimension {got}, base expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("base was built with embedder `{expected}`, not `{got}`")]
    EmbedderMismatch { expected: String, got: String },
    #[error("no entry `{0}`")]
    NotFound(String),
    #[error("invalid entry id `{0}`: use letters, digits, `_`, `-` and `.`")]
    InvalidId(String),
    #[error("retrieval count must be at least 1")]
    InvalidTopN,
    #[error("{} is not a knowledge base (no manifest)", .0.display())]
    NotABase(PathBuf),
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Unparseable(#[from] UnparseableResponse),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeEntry {
    pub entry_id: String,
    pub instruction: String,
    /// Task pattern text; matched against new instructions.
    pub text_key: String,
    pub visual_key: Vec<f64>,
    /// Which frame the visual key was computed from.
    pub visual_source: String,
    pub keyframe_graphs: Vec<SceneGraph>,
    pub action_records: Vec<ActionRecord>,
    pub task_pattern: TaskPattern,
    pub object_patterns: Vec<ObjectPattern>,
}

impl KnowledgeEntry {
    pub fn from_distillation(entry_id: &str, d: &Distillation, embedder: &dyn Embedder) -> Self {
        KnowledgeEntry {
            entry_id: entry_id.to_string(),
            instruction: d.instruction.clone(),
            text_key: d.task_pattern.text.clone(),
            visual_key: embedder.embed(&d.initial_frame),
            visual_source: format!("{entry_id}#frame{}", d.initial_frame.frame_index),
            keyframe_graphs: d.keyframes.clone(),
            action_records: d.records.clone(),
            task_pattern: d.task_pattern.clone(),
            object_patterns: d.object_patterns.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub dimension: usize,
    pub embedder: String,
    pub order: Vec<String>,
}

#[derive(Debug)]
pub struct KnowledgeBase {
    dir: PathBuf,
    manifest: Manifest,
    entries: Vec<KnowledgeEntry>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, KbError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|source| KbError::Json { path: path.to_path_buf(), source })
}

/// Write-to-temp then rename, so readers see the old or the new file only.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), KbError> {
    let dir = path.parent().expect("path has a parent");
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| KbError::Io(e.error))?;
    Ok(())
}

fn to_pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("knowledge base types serialize");
    s.push('\n');
    s.into_bytes()
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

struct DirLock(File);

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self, KbError> {
        let f = OpenOptions::new().create(true).truncate(false).write(true).open(dir.join(LOCK))?;
        f.lock()?;
        Ok(DirLock(f))
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

impl KnowledgeBase {
    /// Open an existing base, or create an empty one for `embedder`.
    pub fn open_or_create(dir: &Path, embedder: &dyn Embedder) -> Result<Self, KbError> {
        if dir.join(MANIFEST).exists() {
            let kb = KnowledgeBase::open(dir)?;
            if kb.manifest.embedder != embedder.name() {
                return Err(KbError::EmbedderMismatch { expected: kb.manifest.embedder, got: embedder.name().into() });
            }
            if kb.manifest.dimension != embedder.dimension() {
                return Err(KbError::DimensionMismatch { expected: kb.manifest.dimension, got: embedder.dimension() });
            }
            return Ok(kb);
        }
        KnowledgeBase::create(dir, embedder.dimension(), embedder.name())
    }

    pub fn create(dir: &Path, dimension: usize, embedder: &str) -> Result<Self, KbError> {
        fs::create_dir_all(dir.join(ENTRIES))?;
        let _lock = DirLock::acquire(dir)?;
        let path = dir.join(MANIFEST);
        if path.exists() {
            drop(_lock);
            return KnowledgeBase::open(dir);
        }
        let manifest = Manifest { dimension, embedder: embedder.into(), order: vec![] };
        write_atomic(&path, &to_pretty(&manifest))?;
        Ok(KnowledgeBase { dir: dir.to_path_buf(), manifest, entries: vec![] })
    }

    pub fn open(dir: &Path) -> Result<Self, KbError> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Err(KbError::NotABase(dir.to_path_buf()));
        }
        let manifest: Manifest = read_json(&path)?;
        let mut entries = Vec::with_capacity(manifest.order.len());
        for id in &manifest.order {
            entries.push(read_json(&dir.join(ENTRIES).join(format!("{id}.json")))?);
        }
        Ok(KnowledgeBase { dir: dir.to_path_buf(), manifest, entries })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn dimension(&self) -> usize {
        self.manifest.dimension
    }

    pub fn embedder_name(&self) -> &str {
        &self.manifest.embedder
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry ids in insertion order.
    pub fn list(&self) -> Vec<&str> {
        self.manifest.order.iter().map(String::as_str).collect()
    }

    pub fn entries(&self) -> &[KnowledgeEntry] {
        &self.entries
    }

    pub fn load(&self, id: &str) -> Result<&KnowledgeEntry, KbError> {
        self.entries.iter().find(|e| e.entry_id == id).ok_or_else(|| KbError::NotFound(id.into()))
    }

    pub fn store(&mut self, entry: KnowledgeEntry) -> Result<String, KbError> {
        if !valid_id(&entry.entry_id) {
            return Err(KbError::InvalidId(entry.entry_id));
        }
        if entry.visual_key.len() != self.manifest.dimension {
            return Err(KbError::DimensionMismatch { expected: self.manifest.dimension, got: entry.visual_key.len() });
        }
        let _lock = DirLock::acquire(&self.dir)?;
        // Pick up entries other writers added since we opened.
        let on_disk: Manifest = read_json(&self.dir.join(MANIFEST))?;
        for id in on_disk.order.iter().skip(self.manifest.order.len()) {
            self.entries.push(read_json(&self.dir.join(ENTRIES).join(format!("{id}.json")))?);
        }
        self.manifest = on_disk;
        if self.manifest.order.contains(&entry.entry_id) {
            return Err(KbError::DuplicateId(entry.entry_id));
        }
        write_atomic(&self.dir.join(ENTRIES).join(format!("{}.json", entry.entry_id)), &to_pretty(&entry))?;
        self.manifest.order.push(entry.entry_id.clone());
        write_atomic(&self.dir.join(MANIFEST), &to_pretty(&self.manifest))?;
        let id = entry.entry_id.clone();
        self.entries.push(entry);
        Ok(id)
    }

    /// Task patterns of the entries the model judges similar to
    /// `instruction`, in the order it names them.
    pub fn retrieve_task_knowledge(&self, instruction: &str, gateway: &Gateway) -> Result<Vec<TaskPattern>, KbError> {
        if self.entries.is_empty() {
            return Ok(vec![]);
        }
        let keys: Vec<&str> = self.entries.iter().map(|e| e.text_key.as_str()).collect();
        let answer = gateway.complete(
            TemplateId::TaskRetrieve,
            placeholders([("instruction", instruction.to_string()), ("previous_tasks", numbered_lines(&keys))]),
        )?;
        let (similar, indices) = parse_yes_no_indices(&answer)?;
        if !similar {
            return Ok(vec![]);
        }
        let mut out = Vec::new();
        for i in indices {
            match i.checked_sub(1).and_then(|k| self.entries.get(k)) {
                Some(e) => out.push(e.task_pattern.clone()),
                None => tracing::warn!(index = i, size = self.entries.len(), "retrieval named a nonexistent entry"),
            }
        }
        Ok(out)
    }

    /// `(entry position, cosine)` for every entry, best first; ties keep
    /// insertion order.
    pub fn rank_visual(&self, query: &[f64]) -> Result<Vec<(usize, f64)>, KbError> {
        if query.len() != self.manifest.dimension {
            return Err(KbError::DimensionMismatch { expected: self.manifest.dimension, got: query.len() });
        }
        let mut ranked: Vec<(usize, f64)> =
            self.entries.iter().enumerate().map(|(i, e)| (i, cosine(query, &e.visual_key))).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(ranked)
    }

    /// Object patterns from the `n` most visually similar entries, restricted
    /// to `detected_classes`.
    pub fn retrieve_object_knowledge(
        &self,
        frame: &FrameObservation,
        detected_classes: &BTreeSet<String>,
        embedder: &dyn Embedder,
        n: usize,
    ) -> Result<Vec<ObjectPattern>, KbError> {
        if n == 0 {
            return Err(KbError::InvalidTopN);
        }
        let ranked = self.rank_visual(&embedder.embed(frame))?;
        Ok(ranked
            .into_iter()
            .take(n)
            .flat_map(|(i, _)| self.entries[i].object_patterns.iter())
            .filter(|p| detected_classes.contains(&p.object_class))
            .cloned()
            .collect())
    }
}
