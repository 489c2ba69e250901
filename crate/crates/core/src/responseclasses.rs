//! The human merge step: a session walking cluster centroids by frequency,
//! an append-only action log, and the resulting class catalog.
//!
//! Session state is always `fold(apply, start, log)`. Undo never erases a log
//! entry; it appends a compensating `undo` record that reverts the most recent
//! action not already undone.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterExport, ClusterSet, ExportedCluster};
use crate::corpus::ResponseTable;
use crate::hashing::json_sha256;
use crate::{Error, ResponseId, Result};

pub const DEFAULT_TOP_N: usize = 3000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseClass {
    pub id: u32,
    pub name: String,
    #[serde(rename = "exemplar")]
    pub exemplar_text: String,
    #[serde(rename = "cluster_ids", default)]
    pub member_cluster_ids: BTreeSet<u32>,
    #[serde(rename = "response_ids", default)]
    pub member_response_ids: BTreeSet<ResponseId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionKind {
    Assign {
        cluster_id: u32,
        class_id: u32,
    },
    Create {
        cluster_id: u32,
        name: String,
        /// Defaults to the centroid's most frequent raw variant.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        exemplar: Option<String>,
    },
    Skip {
        cluster_id: u32,
    },
    Undo,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeAction {
    #[serde(flatten)]
    pub kind: ActionKind,
    pub timestamp_ms: u64,
    pub actor: String,
}

impl MergeAction {
    pub fn new(kind: ActionKind, actor: impl Into<String>) -> Self {
        let timestamp_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        MergeAction {
            kind,
            timestamp_ms,
            actor: actor.into(),
        }
    }
}

/// Everything needed to revert one applied action.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Applied {
    Assign { class_id: u32 },
    Create,
    Skip,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergeSession {
    queue: Vec<ExportedCluster>,
    cursor: usize,
    classes: Vec<ResponseClass>,
    log: Vec<MergeAction>,
    undo_stack: Vec<Applied>,
}

/// What the labeller sees for the next cluster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CentroidView<'a> {
    pub cluster: &'a ExportedCluster,
    pub classes: &'a [ResponseClass],
}

impl MergeSession {
    /// Queues the `top_n` clusters with the highest total count (ties: lower
    /// cluster id first).
    pub fn from_export(export: &ClusterExport, top_n: usize) -> Result<Self> {
        if top_n == 0 {
            return Err(Error::InvalidArgument("top_n must be at least 1".into()));
        }
        if export.clusters.is_empty() {
            return Err(Error::Empty("cluster set"));
        }
        let mut queue = export.clusters.clone();
        queue.sort_by(|a, b| b.total_count.cmp(&a.total_count).then(a.id.cmp(&b.id)));
        queue.truncate(top_n);
        Ok(MergeSession {
            queue,
            cursor: 0,
            classes: Vec::new(),
            log: Vec::new(),
            undo_stack: Vec::new(),
        })
    }

    pub fn start(cs: &ClusterSet, table: &ResponseTable, top_n: usize) -> Result<Self> {
        Self::from_export(&cs.export(table), top_n)
    }

    /// Rebuilds a session by applying `actions` to a fresh start.
    pub fn replay(export: &ClusterExport, top_n: usize, actions: &[MergeAction]) -> Result<Self> {
        let mut s = Self::from_export(export, top_n)?;
        for (i, a) in actions.iter().enumerate() {
            s.apply(a.clone())
                .map_err(|e| Error::InvalidAction(format!("log entry {}: {e}", i + 1)))?;
        }
        Ok(s)
    }

    pub fn queue(&self) -> &[ExportedCluster] {
        &self.queue
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn classes(&self) -> &[ResponseClass] {
        &self.classes
    }

    pub fn log(&self) -> &[MergeAction] {
        &self.log
    }

    pub fn is_complete(&self) -> bool {
        self.cursor == self.queue.len()
    }

    pub fn next_centroid(&self) -> Option<CentroidView<'_>> {
        self.queue.get(self.cursor).map(|cluster| CentroidView {
            cluster,
            classes: &self.classes,
        })
    }

    fn current_cluster(&self, cluster_id: u32) -> Result<&ExportedCluster> {
        let current = self
            .queue
            .get(self.cursor)
            .ok_or_else(|| Error::InvalidAction("session is complete".into()))?;
        if current.id != cluster_id {
            return Err(Error::InvalidAction(format!(
                "cluster {cluster_id} is not the current cluster {}",
                current.id
            )));
        }
        Ok(current)
    }

    /// Validates and applies one action, appending it to the in-memory log.
    /// On error the session is unchanged.
    pub fn apply(&mut self, action: MergeAction) -> Result<()> {
        match &action.kind {
            ActionKind::Assign {
                cluster_id,
                class_id,
            } => {
                let cluster = self.current_cluster(*cluster_id)?.clone();
                let class = self
                    .classes
                    .get_mut(*class_id as usize)
                    .ok_or_else(|| Error::InvalidAction(format!("no class {class_id}")))?;
                class.member_cluster_ids.insert(cluster.id);
                class
                    .member_response_ids
                    .extend(cluster.members.iter().map(|m| m.id));
                self.undo_stack.push(Applied::Assign {
                    class_id: *class_id,
                });
                self.cursor += 1;
            }
            ActionKind::Create {
                cluster_id,
                name,
                exemplar,
            } => {
                let cluster = self.current_cluster(*cluster_id)?.clone();
                let name = name.trim();
                if name.is_empty() {
                    return Err(Error::InvalidAction("class name is empty".into()));
                }
                if self.classes.iter().any(|c| c.name == name) {
                    return Err(Error::InvalidAction(format!("class name `{name}` already exists")));
                }
                let exemplar_text = match exemplar.as_deref().map(str::trim) {
                    Some(e) if !e.is_empty() => e.to_string(),
                    Some(_) => return Err(Error::InvalidAction("exemplar is empty".into())),
                    None => cluster.centroid_variant.clone(),
                };
                self.classes.push(ResponseClass {
                    id: self.classes.len() as u32,
                    name: name.to_string(),
                    exemplar_text,
                    member_cluster_ids: BTreeSet::from([cluster.id]),
                    member_response_ids: cluster.members.iter().map(|m| m.id).collect(),
                });
                self.undo_stack.push(Applied::Create);
                self.cursor += 1;
            }
            ActionKind::Skip { cluster_id } => {
                self.current_cluster(*cluster_id)?;
                self.undo_stack.push(Applied::Skip);
                self.cursor += 1;
            }
            ActionKind::Undo => {
                let last = self
                    .undo_stack
                    .pop()
                    .ok_or_else(|| Error::InvalidAction("nothing to undo".into()))?;
                self.cursor -= 1;
                let cluster = &self.queue[self.cursor];
                match last {
                    Applied::Assign { class_id } => {
                        let class = &mut self.classes[class_id as usize];
                        class.member_cluster_ids.remove(&cluster.id);
                        for m in &cluster.members {
                            class.member_response_ids.remove(&m.id);
                        }
                    }
                    Applied::Create => {
                        self.classes.pop();
                    }
                    Applied::Skip => {}
                }
            }
        }
        self.log.push(action);
        Ok(())
    }

    pub fn can_undo(&self) -> bool {
        !self.undo_stack.is_empty()
    }

    pub fn export_classes(&self) -> Result<Catalog> {
        if self.classes.is_empty() {
            return Err(Error::Catalog("no classes to export".into()));
        }
        Catalog::new(self.classes.clone())
    }
}

/// Appends actions to a JSON-lines file, syncing each line before returning.
pub struct ActionLog {
    path: PathBuf,
    file: File,
}

impl ActionLog {
    /// Opens for appending. An unterminated final line (a write cut short
    /// by a crash) is truncated away first, so new entries never continue it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| Error::io(&path, e))?;
        let committed = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if committed < bytes.len() {
            log::warn!("{}: truncating {} bytes of torn final entry", path.display(), bytes.len() - committed);
            file.set_len(committed as u64)
                .and_then(|_| file.sync_data())
                .map_err(|e| Error::io(&path, e))?;
        }
        Ok(ActionLog { path, file })
    }

    pub fn append(&mut self, action: &MergeAction) -> Result<()> {
        let mut line = serde_json::to_vec(action)?;
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.sync_data())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Reads a log written by [`ActionLog`]. Only newline-terminated entries are
/// committed: a final line without its newline is an unacknowledged write and
/// is dropped. Any other malformed line is an error.
pub fn read_action_log(path: impl AsRef<Path>) -> Result<Vec<MergeAction>> {
    let path = path.as_ref();
    match File::open(path) {
        Ok(f) => parse_action_log(f),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(Error::io(path, e)),
    }
}

pub fn parse_action_log(reader: impl Read) -> Result<Vec<MergeAction>> {
    let mut reader = BufReader::new(reader);
    let mut out = Vec::new();
    let mut buf = String::new();
    let mut lineno = 0;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if n == 0 {
            break;
        }
        lineno += 1;
        if !buf.ends_with('\n') {
            log::warn!("dropping unterminated final action-log line {lineno}");
            break;
        }
        if buf.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<MergeAction>(buf.trim_end()) {
            Ok(a) => out.push(a),
            Err(e) => {
                return Err(Error::Parse {
                    line: lineno,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// The curated label space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Catalog {
    classes: Vec<ResponseClass>,
}

/// On-disk catalog document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogFile {
    pub hash: String,
    pub classes: Vec<ResponseClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

#[derive(Serialize)]
struct StructureEntry<'a> {
    id: u32,
    cluster_ids: &'a BTreeSet<u32>,
    response_ids: &'a BTreeSet<ResponseId>,
}

impl Catalog {
    /// Validates names, exemplars, ids and disjointness.
    pub fn new(classes: Vec<ResponseClass>) -> Result<Self> {
        let mut names = HashSet::new();
        let mut ids = HashSet::new();
        let mut responses = HashSet::new();
        let mut clusters = HashSet::new();
        for c in &classes {
            if c.name.trim().is_empty() {
                return Err(Error::Catalog(format!("class {} has an empty name", c.id)));
            }
            if c.exemplar_text.trim().is_empty() {
                return Err(Error::Catalog(format!("class {} has an empty exemplar", c.id)));
            }
            if !names.insert(c.name.as_str()) {
                return Err(Error::Catalog(format!("duplicate class name `{}`", c.name)));
            }
            if !ids.insert(c.id) {
                return Err(Error::Catalog(format!("duplicate class id {}", c.id)));
            }
            if let Some(r) = c.member_response_ids.iter().find(|r| !responses.insert(**r)) {
                return Err(Error::Catalog(format!("response {r} belongs to two classes")));
            }
            if let Some(k) = c.member_cluster_ids.iter().find(|k| !clusters.insert(**k)) {
                return Err(Error::Catalog(format!("cluster {k} belongs to two classes")));
            }
        }
        let mut classes = classes;
        classes.sort_by_key(|c| c.id);
        Ok(Catalog { classes })
    }

    pub fn classes(&self) -> &[ResponseClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&ResponseClass> {
        self.classes.iter().find(|c| c.id == id)
    }

    /// Position of class `id` in the label space (classes ordered by id).
    pub fn label_index(&self, id: u32) -> Option<usize> {
        self.classes.binary_search_by_key(&id, |c| c.id).ok()
    }

    /// Hash of the full content, exemplars included.
    pub fn hash(&self) -> String {
        json_sha256(&self.classes)
    }

    /// Hash of ids and membership only. Trained models bind to this, so
    /// renaming a class or editing its exemplar never invalidates a model.
    pub fn structure_hash(&self) -> String {
        let entries: Vec<StructureEntry> = self
            .classes
            .iter()
            .map(|c| StructureEntry {
                id: c.id,
                cluster_ids: &c.member_cluster_ids,
                response_ids: &c.member_response_ids,
            })
            .collect();
        json_sha256(&entries)
    }

    pub fn set_exemplar(&mut self, id: u32, exemplar: &str) -> Result<()> {
        if exemplar.trim().is_empty() {
            return Err(Error::Catalog("exemplar is empty".into()));
        }
        let c = self
            .classes
            .iter_mut()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::Catalog(format!("no class {id}")))?;
        c.exemplar_text = exemplar.to_string();
        Ok(())
    }

    /// Checks every cluster id exists in `cs` and that response ids are
    /// exactly the members of the class's clusters.
    pub fn check_integrity(&self, cs: &ClusterSet) -> Result<()> {
        for c in &self.classes {
            let mut expected = BTreeSet::new();
            for &k in &c.member_cluster_ids {
                let cluster = cs
                    .get(k)
                    .ok_or_else(|| Error::Catalog(format!("class {} references missing cluster {k}", c.id)))?;
                expected.extend(cluster.member_ids.iter().copied());
            }
            if expected != c.member_response_ids {
                return Err(Error::Catalog(format!(
                    "class {} response ids disagree with its clusters",
                    c.id
                )));
            }
        }
        Ok(())
    }

    pub fn to_file(&self, config_hash: Option<String>) -> CatalogFile {
        CatalogFile {
            hash: self.hash(),
            classes: self.classes.clone(),
            config_hash,
        }
    }

    pub fn write(&self, mut w: impl Write, config_hash: Option<String>) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, &self.to_file(config_hash))?;
        w.write_all(b"\n").map_err(|e| Error::io("<catalog>", e))?;
        Ok(())
    }
}

pub fn import_classes_from(reader: impl Read, integrity: Option<&ClusterSet>) -> Result<(Catalog, CatalogFile)> {
    let file: CatalogFile =
        serde_json::from_reader(reader).map_err(|e| Error::Catalog(format!("schema violation: {e}")))?;
    let catalog = Catalog::new(file.classes.clone())?;
    if catalog.hash() != file.hash {
        log::warn!("catalog hash is stale (edited by hand?); using recomputed hash");
    }
    if let Some(cs) = integrity {
        catalog.check_integrity(cs)?;
    }
    Ok((catalog, file))
}

pub fn import_classes(path: impl AsRef<Path>, integrity: Option<&ClusterSet>) -> Result<Catalog> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    import_classes_from(f, integrity).map(|(c, _)| c)
}

/// Maps normalised response text to its class id.
#[derive(Clone, Debug, Default)]
pub struct ClassIndex {
    by_text: BTreeMap<String, u32>,
}

impl ClassIndex {
    pub fn new(catalog: &Catalog, table: &ResponseTable) -> Result<Self> {
        let mut by_text = BTreeMap::new();
        for c in catalog.classes() {
            for &r in &c.member_response_ids {
                let resp = table
                    .get(r)
                    .ok_or_else(|| Error::Catalog(format!("class {} references missing response {r}", c.id)))?;
                by_text.insert(resp.normalized_text.clone(), c.id);
            }
        }
        Ok(ClassIndex { by_text })
    }

    pub fn class_of(&self, normalized: &str) -> Option<u32> {
        self.by_text.get(normalized).copied()
    }

    pub fn len(&self) -> usize {
        self.by_text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_text.is_empty()
    }
}
