//! Reading loose-object git repositories into a shared, content-addressed
//! object store.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::ZlibDecoder;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HistoryError, IngestError};
use crate::object::{
    object_id, parse_commit, parse_tag_target, parse_tree, split_encoded, CommitRecord, ObjectId,
    ObjectKind, ProjectId, TreeRecord,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub project: ProjectId,
    pub path: PathBuf,
    #[serde(default)]
    pub license: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, IngestError> {
        let mut seen = HashSet::new();
        for entry in &entries {
            if !seen.insert(entry.project.as_str()) {
                return Err(IngestError::Manifest(format!("duplicate project {}", entry.project)));
            }
        }
        Ok(Self { entries })
    }

    /// Reads a JSON array of `{"project", "path", "license"}` objects.
    /// Relative paths are resolved against the manifest's directory.
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        let mut entries: Vec<ManifestEntry> =
            serde_json::from_str(&text).map_err(|e| IngestError::Manifest(e.to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for entry in &mut entries {
            if entry.path.is_relative() {
                entry.path = base.join(&entry.path);
            }
        }
        Self::new(entries)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One decoded loose object.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScannedObject {
    pub kind: ObjectKind,
    pub id: ObjectId,
    pub payload: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RepoScan {
    pub project: ProjectId,
    pub objects: Vec<ScannedObject>,
    /// Commits named by refs, after peeling one level of annotated tag.
    pub tips: BTreeSet<ObjectId>,
}

/// Reads every loose object in the repository at `path`, verifying each
/// digest, and resolves its refs to commit tips.
pub fn scan_repository(project: &ProjectId, path: &Path) -> Result<RepoScan, IngestError> {
    scan_with(project, path, true)
}

fn scan_with(project: &ProjectId, path: &Path, keep_blobs: bool) -> Result<RepoScan, IngestError> {
    let git_dir = locate_git_dir(path)?;
    let objects_dir = git_dir.join("objects");
    reject_packfiles(&objects_dir)?;

    let files = list_loose_objects(&objects_dir)?;
    let mut objects = files
        .par_iter()
        .map(|(expected, file)| read_loose_object(*expected, file, keep_blobs))
        .collect::<Result<Vec<_>, _>>()?;
    objects.sort_by_key(|o| o.id);

    let kinds: HashMap<ObjectId, &ScannedObject> = objects.iter().map(|o| (o.id, o)).collect();
    let mut tips = BTreeSet::new();
    for target in read_refs(&git_dir)? {
        match kinds.get(&target) {
            Some(obj) if obj.kind == ObjectKind::Commit => {
                tips.insert(target);
            }
            Some(obj) if obj.kind == ObjectKind::Tag => {
                if let Ok((peeled, ObjectKind::Commit)) = parse_tag_target(&obj.payload) {
                    tips.insert(peeled);
                }
            }
            Some(_) => {}
            // left dangling on purpose: history marks it as unresolvable
            None => {
                tips.insert(target);
            }
        }
    }

    Ok(RepoScan { project: project.clone(), objects, tips })
}

fn locate_git_dir(path: &Path) -> Result<PathBuf, IngestError> {
    let unreadable = |reason: &str| IngestError::UnreadableRepo {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if !path.is_dir() {
        return Err(unreadable("not a directory"));
    }
    let dot_git = path.join(".git");
    if dot_git.is_dir() {
        return Ok(dot_git);
    }
    if dot_git.is_file() {
        let text = fs::read_to_string(&dot_git).map_err(|e| IngestError::io(&dot_git, e))?;
        if let Some(target) = text.trim().strip_prefix("gitdir:") {
            let target = PathBuf::from(target.trim());
            return Ok(if target.is_relative() { path.join(target) } else { target });
        }
        return Err(unreadable(".git file does not name a gitdir"));
    }
    if path.join("objects").is_dir() {
        return Ok(path.to_path_buf());
    }
    Err(unreadable("no git object database (objects/ directory) found"))
}

fn reject_packfiles(objects_dir: &Path) -> Result<(), IngestError> {
    let pack_dir = objects_dir.join("pack");
    let Ok(listing) = fs::read_dir(&pack_dir) else {
        return Ok(());
    };
    for entry in listing {
        let entry = entry.map_err(|e| IngestError::io(&pack_dir, e))?;
        if entry.path().extension().is_some_and(|ext| ext == "pack") {
            return Err(IngestError::UnreadableRepo {
                path: objects_dir.to_path_buf(),
                reason: format!(
                    "objects are stored in packfiles, which are not supported; unpack them first \
                     (move {} out of objects/pack and run `git unpack-objects < <file>`)",
                    entry.file_name().to_string_lossy()
                ),
            });
        }
    }
    Ok(())
}

fn is_hex(name: &str, len: usize) -> bool {
    name.len() == len && name.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

fn list_loose_objects(objects_dir: &Path) -> Result<Vec<(ObjectId, PathBuf)>, IngestError> {
    let mut files = Vec::new();
    let listing = fs::read_dir(objects_dir).map_err(|e| IngestError::io(objects_dir, e))?;
    for fanout in listing {
        let fanout = fanout.map_err(|e| IngestError::io(objects_dir, e))?;
        let prefix = fanout.file_name().to_string_lossy().into_owned();
        if !is_hex(&prefix, 2) || !fanout.path().is_dir() {
            continue;
        }
        let dir = fanout.path();
        for file in fs::read_dir(&dir).map_err(|e| IngestError::io(&dir, e))? {
            let file = file.map_err(|e| IngestError::io(&dir, e))?;
            let rest = file.file_name().to_string_lossy().into_owned();
            if !is_hex(&rest, 38) {
                continue;
            }
            let id = ObjectId::from_hex(format!("{prefix}{rest}").as_bytes())
                .expect("validated hex name");
            files.push((id, file.path()));
        }
    }
    files.sort();
    Ok(files)
}

fn read_loose_object(
    expected: ObjectId,
    file: &Path,
    keep_blobs: bool,
) -> Result<ScannedObject, IngestError> {
    let corrupt = |reason: String| IngestError::CorruptObject {
        id: expected.to_hex(),
        path: file.to_path_buf(),
        reason,
    };
    let compressed = fs::read(file).map_err(|e| IngestError::io(file, e))?;
    let mut inflated = Vec::with_capacity(compressed.len() * 2);
    ZlibDecoder::new(compressed.as_slice())
        .read_to_end(&mut inflated)
        .map_err(|e| corrupt(format!("zlib stream: {e}")))?;
    let (kind, payload) = split_encoded(&inflated).map_err(|e| corrupt(e.to_string()))?;
    let actual = object_id(kind, payload);
    if actual != expected {
        return Err(corrupt(format!("content hashes to {actual}")));
    }
    let payload = if kind == ObjectKind::Blob && !keep_blobs { Vec::new() } else { payload.to_vec() };
    Ok(ScannedObject { kind, id: expected, payload })
}

/// Every object id named by a ref: loose refs under `refs/`, `packed-refs`,
/// and a detached `HEAD`. Symbolic refs are skipped since their targets are
/// listed themselves.
fn read_refs(git_dir: &Path) -> Result<BTreeSet<ObjectId>, IngestError> {
    let mut named: BTreeMap<String, ObjectId> = BTreeMap::new();

    let packed = git_dir.join("packed-refs");
    if packed.is_file() {
        let text = fs::read(&packed).map_err(|e| IngestError::io(&packed, e))?;
        for line in text.split(|&b| b == b'\n') {
            if line.is_empty() || line[0] == b'#' || line[0] == b'^' {
                continue;
            }
            if line.len() > 41 && line[40] == b' ' {
                if let Ok(id) = ObjectId::from_hex(&line[..40]) {
                    named.insert(String::from_utf8_lossy(&line[41..]).into_owned(), id);
                }
            }
        }
    }

    let mut stack = vec![git_dir.join("refs")];
    while let Some(dir) = stack.pop() {
        let Ok(listing) = fs::read_dir(&dir) else { continue };
        for entry in listing {
            let entry = entry.map_err(|e| IngestError::io(&dir, e))?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            if path.extension().is_some_and(|ext| ext == "lock") {
                continue;
            }
            if let Some(id) = read_direct_ref(&path)? {
                let name = path.strip_prefix(git_dir).unwrap_or(&path).to_string_lossy().into_owned();
                // loose refs shadow packed ones
                named.insert(name.replace('\\', "/"), id);
            }
        }
    }

    let head = git_dir.join("HEAD");
    if head.is_file() {
        if let Some(id) = read_direct_ref(&head)? {
            named.insert("HEAD".into(), id);
        }
    }
    Ok(named.into_values().collect())
}

fn read_direct_ref(path: &Path) -> Result<Option<ObjectId>, IngestError> {
    let text = fs::read(path).map_err(|e| IngestError::io(path, e))?;
    let trimmed = text.trim_ascii();
    Ok(ObjectId::from_hex(trimmed).ok())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoredObject {
    pub kind: ObjectKind,
    /// Payload of trees, commits and tags. Blob content is verified at
    /// ingest and then dropped: downstream analysis only needs blob ids.
    pub payload: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IngestFailure {
    pub project: ProjectId,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ObjectStore {
    objects: HashMap<ObjectId, StoredObject>,
    tips: BTreeMap<ProjectId, BTreeSet<ObjectId>>,
    failures: Vec<IngestFailure>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// Record per-project failures and continue instead of aborting.
    pub keep_going: bool,
}

impl ObjectStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a scanned repository. Objects are keyed by digest, so inserting
    /// the same object twice is a no-op.
    pub fn insert_scan(&mut self, scan: RepoScan) {
        for obj in scan.objects {
            self.insert_object(obj.kind, obj.id, obj.payload);
        }
        self.tips.entry(scan.project).or_default().extend(scan.tips);
    }

    pub fn insert_object(&mut self, kind: ObjectKind, id: ObjectId, payload: Vec<u8>) {
        let payload = if kind == ObjectKind::Blob { Vec::new() } else { payload };
        self.objects.entry(id).or_insert(StoredObject { kind, payload });
    }

    pub fn add_tip(&mut self, project: ProjectId, tip: ObjectId) {
        self.tips.entry(project).or_default().insert(tip);
    }

    pub fn get(&self, id: &ObjectId) -> Option<&StoredObject> {
        self.objects.get(id)
    }

    pub fn contains(&self, id: &ObjectId) -> bool {
        self.objects.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn count_kind(&self, kind: ObjectKind) -> usize {
        self.objects.values().filter(|o| o.kind == kind).count()
    }

    pub fn ids_of_kind(&self, kind: ObjectKind) -> BTreeSet<ObjectId> {
        self.objects.iter().filter(|(_, o)| o.kind == kind).map(|(id, _)| *id).collect()
    }

    pub fn tips(&self) -> &BTreeMap<ProjectId, BTreeSet<ObjectId>> {
        &self.tips
    }

    pub fn failures(&self) -> &[IngestFailure] {
        &self.failures
    }

    pub fn commit(&self, id: &ObjectId) -> Result<CommitRecord, HistoryError> {
        match self.objects.get(id) {
            Some(obj) if obj.kind == ObjectKind::Commit => parse_commit(&obj.payload)
                .map_err(|source| HistoryError::Object { id: *id, source }),
            _ => Err(HistoryError::MissingCommit(*id)),
        }
    }

    pub fn tree(&self, id: &ObjectId) -> Result<TreeRecord, HistoryError> {
        match self.objects.get(id) {
            Some(obj) if obj.kind == ObjectKind::Tree => {
                parse_tree(&obj.payload).map_err(|source| HistoryError::Object { id: *id, source })
            }
            _ if *id == ObjectId::EMPTY_TREE => Ok(TreeRecord { id: *id, entries: Vec::new() }),
            _ => Err(HistoryError::UnresolvedTree(*id)),
        }
    }
}

/// Scans every manifest repository (in parallel) and merges them into one
/// store. With `keep_going`, a failing project is recorded and skipped.
pub fn ingest_corpus(
    manifest: &CorpusManifest,
    options: IngestOptions,
) -> Result<ObjectStore, IngestError> {
    let scans: Vec<Result<RepoScan, IngestError>> = manifest
        .entries
        .par_iter()
        .map(|entry| scan_with(&entry.project, &entry.path, false))
        .collect();

    let mut store = ObjectStore::new();
    for (entry, scan) in manifest.entries.iter().zip(scans) {
        match scan {
            Ok(scan) => store.insert_scan(scan),
            Err(err) if options.keep_going => store.failures.push(IngestFailure {
                project: entry.project.clone(),
                message: err.to_string(),
            }),
            Err(err) => {
                return Err(IngestError::Project {
                    project: entry.project.to_string(),
                    source: Box::new(err),
                })
            }
        }
    }
    Ok(store)
}
