//! Blob-centred cross-reference of the event log: which commits created a
//! blob, which commits replaced it, which projects hold it, and where it
//! first appeared.
//!
//! On disk the index is a directory of 128 shards per record family, split
//! by the first digest byte modulo 128. Every file is line-oriented text
//! (`<40-hex key>;<field>;...`) sorted bytewise:
//!
//! | family | record                                              |
//! |--------|-----------------------------------------------------|
//! | `b2c`  | `blob;commit;time;prior;path;project,project,...`   |
//! | `b2mc` | `blob;commit;time;new`                              |
//! | `b2p`  | `blob;project`                                      |
//! | `c2m`  | `commit;message`                                    |
//!
//! Byte-string fields are percent-escaped; `-` marks an absent id.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::IndexError;
use crate::history::EventLog;
use crate::object::{ObjectId, ProjectId};

pub const FORMAT_VERSION: u32 = 1;
pub const SHARDS: usize = 128;
pub const META_FILE: &str = "index.json";

/// 1990-01-01T00:00:00Z. Earlier commit times are treated as bogus.
pub const EARLIEST_PLAUSIBLE_TIME: i64 = 631_152_000;

pub fn shard_of(id: &ObjectId) -> usize {
    usize::from(id.first_byte()) % SHARDS
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CreatingEntry {
    pub commit: ObjectId,
    pub time: i64,
    pub path: Vec<u8>,
    /// The blob this one replaced at `path`, if the event was a modify.
    pub prior: Option<ObjectId>,
    pub projects: BTreeSet<ProjectId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModifyingEntry {
    pub commit: ObjectId,
    pub time: i64,
    pub new: ObjectId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlobDossier {
    pub blob: ObjectId,
    pub creating: Vec<CreatingEntry>,
    pub modifying: Vec<ModifyingEntry>,
    pub projects: BTreeSet<ProjectId>,
}

impl BlobDossier {
    fn new(blob: ObjectId) -> Self {
        Self { blob, creating: Vec::new(), modifying: Vec::new(), projects: BTreeSet::new() }
    }

    fn normalize(&mut self) {
        self.creating.sort();
        self.creating.dedup();
        self.modifying.sort();
        self.modifying.dedup();
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OriginRecord {
    pub blob: ObjectId,
    pub origin_project: ProjectId,
    pub origin_commit: ObjectId,
    pub origin_time: i64,
}

impl OriginRecord {
    pub fn time_is_suspicious(&self, built_at: i64) -> bool {
        self.origin_time < EARLIEST_PLAUSIBLE_TIME || self.origin_time > built_at
    }
}

/// The earliest creation of a blob. Ties on time go to the smallest commit
/// id, then the smallest project name.
pub fn origin_of(dossier: &BlobDossier) -> Result<OriginRecord, IndexError> {
    dossier
        .creating
        .iter()
        .filter_map(|entry| entry.projects.first().map(|p| (entry.time, entry.commit, p)))
        .min()
        .map(|(time, commit, project)| OriginRecord {
            blob: dossier.blob,
            origin_project: project.clone(),
            origin_commit: commit,
            origin_time: time,
        })
        .ok_or(IndexError::NoCreatingCommit(dossier.blob))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BlobClassification {
    pub found: bool,
    pub has_old: bool,
    pub has_new: bool,
    pub new_versions: BTreeSet<ObjectId>,
}

impl BlobClassification {
    /// Found, and never created on top of an earlier version.
    pub fn first_version(&self) -> bool {
        self.found && !self.has_old
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub format_version: u32,
    pub corpus_digest: String,
    pub built_at: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrossIndex {
    dossiers: BTreeMap<ObjectId, BlobDossier>,
    messages: BTreeMap<ObjectId, Vec<u8>>,
    meta: IndexMeta,
}

pub fn now_epoch() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs() as i64).unwrap_or(0)
}

pub fn build_index(log: &EventLog) -> CrossIndex {
    build_index_at(log, now_epoch())
}

/// Inverts the event log into per-blob dossiers.
pub fn build_index_at(log: &EventLog, built_at: i64) -> CrossIndex {
    let mut dossiers: BTreeMap<ObjectId, BlobDossier> = BTreeMap::new();
    let mut messages = BTreeMap::new();
    let empty = BTreeSet::new();

    for event in log.events() {
        let meta = log.commit(&event.commit);
        let time = meta.map(|m| m.committer_time.seconds).unwrap_or_default();
        let projects = meta.map(|m| &m.projects).unwrap_or(&empty);
        if let Some(m) = meta {
            messages.entry(event.commit).or_insert_with(|| m.message.clone());
        }

        if let Some(new) = event.new {
            let dossier = dossiers.entry(new).or_insert_with(|| BlobDossier::new(new));
            dossier.creating.push(CreatingEntry {
                commit: event.commit,
                time,
                path: event.path.clone(),
                prior: event.old,
                projects: projects.clone(),
            });
            dossier.projects.extend(projects.iter().cloned());
        }
        if let Some(old) = event.old {
            let dossier = dossiers.entry(old).or_insert_with(|| BlobDossier::new(old));
            if let Some(new) = event.new {
                dossier.modifying.push(ModifyingEntry { commit: event.commit, time, new });
            }
            dossier.projects.extend(projects.iter().cloned());
        }
    }
    dossiers.values_mut().for_each(BlobDossier::normalize);

    CrossIndex {
        dossiers,
        messages,
        meta: IndexMeta {
            format_version: FORMAT_VERSION,
            corpus_digest: log.digest().to_hex(),
            built_at,
        },
    }
}

impl CrossIndex {
    pub fn dossier(&self, blob: &ObjectId) -> Option<&BlobDossier> {
        self.dossiers.get(blob)
    }

    pub fn dossiers(&self) -> impl Iterator<Item = &BlobDossier> {
        self.dossiers.values()
    }

    pub fn len(&self) -> usize {
        self.dossiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dossiers.is_empty()
    }

    pub fn meta(&self) -> &IndexMeta {
        &self.meta
    }

    pub fn message(&self, commit: &ObjectId) -> Option<&[u8]> {
        self.messages.get(commit).map(Vec::as_slice)
    }

    pub fn messages(&self) -> impl Iterator<Item = (ObjectId, &[u8])> {
        self.messages.iter().map(|(id, m)| (*id, m.as_slice()))
    }

    pub fn origin(&self, blob: &ObjectId) -> Option<Result<OriginRecord, IndexError>> {
        self.dossier(blob).map(origin_of)
    }

    pub fn classify(&self, blob: &ObjectId) -> BlobClassification {
        classify_blob(blob, self)
    }
}

pub fn classify_blob(blob: &ObjectId, index: &CrossIndex) -> BlobClassification {
    let Some(dossier) = index.dossier(blob) else {
        return BlobClassification::default();
    };
    BlobClassification {
        found: true,
        has_old: dossier.creating.iter().any(|c| c.prior.is_some()),
        has_new: !dossier.modifying.is_empty(),
        new_versions: dossier.modifying.iter().map(|m| m.new).collect(),
    }
}

fn escape(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len());
    for &b in bytes {
        if (0x21..=0x7e).contains(&b) && !matches!(b, b'%' | b';' | b',') {
            out.push(char::from(b));
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

fn unescape(text: &str) -> Option<Vec<u8>> {
    let bytes = text.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = bytes.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(std::str::from_utf8(hex).ok()?, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    Some(out)
}

fn opt_id(id: Option<ObjectId>) -> String {
    id.map(|i| i.to_hex()).unwrap_or_else(|| "-".into())
}

#[derive(Default)]
struct ShardLines {
    b2c: Vec<String>,
    b2mc: Vec<String>,
    b2p: Vec<String>,
    c2m: Vec<String>,
}

const FAMILIES: [&str; 4] = ["b2c", "b2mc", "b2p", "c2m"];

fn shard_file(dir: &Path, family: &str, shard: usize) -> std::path::PathBuf {
    dir.join(format!("{family}.{shard}.txt"))
}

/// Writes the index into `dir`, creating it if needed. Output is a pure
/// function of the index, so persisting the same index twice yields
/// byte-identical files.
pub fn persist_index(index: &CrossIndex, dir: &Path) -> Result<(), IndexError> {
    fs::create_dir_all(dir).map_err(|e| IndexError::io(dir, e))?;

    let mut shards: Vec<ShardLines> = (0..SHARDS).map(|_| ShardLines::default()).collect();
    for d in index.dossiers.values() {
        let lines = &mut shards[shard_of(&d.blob)];
        for c in &d.creating {
            let projects: Vec<String> = c.projects.iter().map(|p| escape(p.as_str().as_bytes())).collect();
            lines.b2c.push(format!(
                "{};{};{};{};{};{}",
                d.blob,
                c.commit,
                c.time,
                opt_id(c.prior),
                escape(&c.path),
                projects.join(",")
            ));
        }
        for m in &d.modifying {
            lines.b2mc.push(format!("{};{};{};{}", d.blob, m.commit, m.time, m.new));
        }
        for p in &d.projects {
            lines.b2p.push(format!("{};{}", d.blob, escape(p.as_str().as_bytes())));
        }
    }
    for (commit, message) in &index.messages {
        shards[shard_of(commit)].c2m.push(format!("{};{}", commit, escape(message)));
    }

    shards.into_par_iter().enumerate().try_for_each(|(shard, lines)| {
        let families = [lines.b2c, lines.b2mc, lines.b2p, lines.c2m];
        for (family, mut records) in FAMILIES.iter().zip(families) {
            records.sort_unstable();
            let mut body = String::with_capacity(records.iter().map(|r| r.len() + 1).sum());
            for r in records {
                body.push_str(&r);
                body.push('\n');
            }
            let path = shard_file(dir, family, shard);
            fs::write(&path, body).map_err(|e| IndexError::io(&path, e))?;
        }
        Ok(())
    })?;

    let meta_path = dir.join(META_FILE);
    let mut meta = serde_json::to_string_pretty(&index.meta).expect("meta serializes");
    meta.push('\n');
    fs::write(&meta_path, meta).map_err(|e| IndexError::io(&meta_path, e))
}

struct LineParser<'a> {
    file: String,
    line: usize,
    fields: std::str::Split<'a, char>,
}

impl<'a> LineParser<'a> {
    fn err(&self, reason: impl Into<String>) -> IndexError {
        IndexError::BadRecord { file: self.file.clone(), line: self.line, reason: reason.into() }
    }

    fn field(&mut self) -> Result<&'a str, IndexError> {
        self.fields.next().ok_or_else(|| self.err("too few fields"))
    }

    fn id(&mut self) -> Result<ObjectId, IndexError> {
        let text = self.field()?;
        ObjectId::from_hex(text.as_bytes()).map_err(|e| self.err(e.to_string()))
    }

    fn opt_id(&mut self) -> Result<Option<ObjectId>, IndexError> {
        let text = self.field()?;
        if text == "-" {
            return Ok(None);
        }
        ObjectId::from_hex(text.as_bytes()).map(Some).map_err(|e| self.err(e.to_string()))
    }

    fn int(&mut self) -> Result<i64, IndexError> {
        let text = self.field()?;
        text.parse().map_err(|_| self.err(format!("bad integer {text:?}")))
    }

    fn bytes(&mut self) -> Result<Vec<u8>, IndexError> {
        let text = self.field()?;
        unescape(text).ok_or_else(|| self.err("bad escape"))
    }

    fn project(&self, text: &str) -> Result<ProjectId, IndexError> {
        let raw = unescape(text).ok_or_else(|| self.err("bad escape"))?;
        let name = String::from_utf8(raw).map_err(|_| self.err("project name is not UTF-8"))?;
        ProjectId::new(name).map_err(|e| self.err(e.to_string()))
    }

    fn finish(mut self) -> Result<(), IndexError> {
        match self.fields.next() {
            None => Ok(()),
            Some(_) => Err(self.err("too many fields")),
        }
    }
}

#[derive(Default)]
struct ShardContents {
    dossiers: BTreeMap<ObjectId, BlobDossier>,
    messages: BTreeMap<ObjectId, Vec<u8>>,
}

fn load_shard(dir: &Path, shard: usize) -> Result<ShardContents, IndexError> {
    let mut out = ShardContents::default();
    for family in FAMILIES {
        let path = shard_file(dir, family, shard);
        let text = fs::read_to_string(&path).map_err(|e| IndexError::io(&path, e))?;
        let file = format!("{family}.{shard}.txt");
        for (n, line) in text.lines().enumerate() {
            let mut p = LineParser { file: file.clone(), line: n + 1, fields: line.split(';') };
            let key = p.id()?;
            if shard_of(&key) != shard {
                return Err(p.err("record in wrong shard"));
            }
            match family {
                "b2c" => {
                    let commit = p.id()?;
                    let time = p.int()?;
                    let prior = p.opt_id()?;
                    let path = p.bytes()?;
                    let projects = p
                        .field()?
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(|s| p.project(s))
                        .collect::<Result<_, _>>()?;
                    p.finish()?;
                    out.dossiers
                        .entry(key)
                        .or_insert_with(|| BlobDossier::new(key))
                        .creating
                        .push(CreatingEntry { commit, time, path, prior, projects });
                }
                "b2mc" => {
                    let commit = p.id()?;
                    let time = p.int()?;
                    let new = p.id()?;
                    p.finish()?;
                    out.dossiers
                        .entry(key)
                        .or_insert_with(|| BlobDossier::new(key))
                        .modifying
                        .push(ModifyingEntry { commit, time, new });
                }
                "b2p" => {
                    let field = p.field()?;
                    let project = p.project(field)?;
                    p.finish()?;
                    out.dossiers
                        .entry(key)
                        .or_insert_with(|| BlobDossier::new(key))
                        .projects
                        .insert(project);
                }
                _ => {
                    let message = p.bytes()?;
                    p.finish()?;
                    out.messages.insert(key, message);
                }
            }
        }
    }
    Ok(out)
}

pub fn load_index(dir: &Path) -> Result<CrossIndex, IndexError> {
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| IndexError::io(&meta_path, e))?;
    let meta: IndexMeta = serde_json::from_str(&text).map_err(|e| IndexError::BadRecord {
        file: META_FILE.into(),
        line: e.line(),
        reason: e.to_string(),
    })?;
    if meta.format_version != FORMAT_VERSION {
        return Err(IndexError::FormatVersionMismatch {
            found: meta.format_version,
            expected: FORMAT_VERSION,
        });
    }

    let shards = (0..SHARDS)
        .into_par_iter()
        .map(|shard| load_shard(dir, shard))
        .collect::<Result<Vec<_>, _>>()?;
    let mut dossiers = BTreeMap::new();
    let mut messages = BTreeMap::new();
    for shard in shards {
        dossiers.extend(shard.dossiers);
        messages.extend(shard.messages);
    }
    dossiers.values_mut().for_each(BlobDossier::normalize);
    Ok(CrossIndex { dossiers, messages, meta })
}
