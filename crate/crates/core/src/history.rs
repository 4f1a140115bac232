//! Turns commit history into per-file modification events `(old, new)`.
//!
//! Paths are compared strictly by name: renames show up as a delete plus an
//! add, and mode-only changes produce nothing.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use sha1::{Digest, Sha1};

use crate::error::HistoryError;
use crate::ingest::ObjectStore;
use crate::object::{CommitRecord, EntryKind, ObjectId, ProjectId, Timestamp, TreeEntry, TreeRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChangeKind {
    Add,
    Modify,
    Delete,
}

/// One path whose blob differs between two trees.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FileChange {
    pub path: Vec<u8>,
    pub old: Option<ObjectId>,
    pub new: Option<ObjectId>,
}

impl FileChange {
    pub fn kind(&self) -> ChangeKind {
        match (self.old, self.new) {
            (None, Some(_)) => ChangeKind::Add,
            (Some(_), None) => ChangeKind::Delete,
            _ => ChangeKind::Modify,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModificationEvent {
    pub commit: ObjectId,
    /// `None` for root commits, which are diffed against the empty tree.
    pub parent: Option<ObjectId>,
    pub path: Vec<u8>,
    pub old: Option<ObjectId>,
    pub new: Option<ObjectId>,
}

pub type EventKey<'a> = (ObjectId, &'a [u8], Option<ObjectId>, Option<ObjectId>);

impl ModificationEvent {
    pub fn kind(&self) -> ChangeKind {
        match (self.old, self.new) {
            (None, Some(_)) => ChangeKind::Add,
            (Some(_), None) => ChangeKind::Delete,
            _ => ChangeKind::Modify,
        }
    }

    pub fn key(&self) -> EventKey<'_> {
        (self.commit, &self.path, self.old, self.new)
    }
}

/// Compares two trees path by path. `None` stands for the empty tree.
pub fn tree_diff(
    store: &ObjectStore,
    old_tree: Option<ObjectId>,
    new_tree: Option<ObjectId>,
) -> Result<Vec<FileChange>, HistoryError> {
    let mut out = Vec::new();
    if old_tree == new_tree {
        return Ok(out);
    }
    let old = old_tree.map(|id| store.tree(&id)).transpose()?;
    let new = new_tree.map(|id| store.tree(&id)).transpose()?;
    diff_into(store, &[], old.as_ref(), new.as_ref(), &mut out)?;
    Ok(out)
}

type EntryMap<'a> = BTreeMap<(&'a [u8], bool), &'a TreeEntry>;

fn entry_map(tree: Option<&TreeRecord>) -> EntryMap<'_> {
    tree.into_iter()
        .flat_map(|t| t.entries.iter())
        .filter(|e| e.kind() != EntryKind::Submodule)
        .map(|e| ((e.name.as_slice(), e.is_tree()), e))
        .collect()
}

fn join_path(prefix: &[u8], name: &[u8]) -> Vec<u8> {
    let mut path = Vec::with_capacity(prefix.len() + name.len() + 1);
    if !prefix.is_empty() {
        path.extend_from_slice(prefix);
        path.push(b'/');
    }
    path.extend_from_slice(name);
    path
}

fn diff_into(
    store: &ObjectStore,
    prefix: &[u8],
    old: Option<&TreeRecord>,
    new: Option<&TreeRecord>,
    out: &mut Vec<FileChange>,
) -> Result<(), HistoryError> {
    let old_entries = entry_map(old);
    let new_entries = entry_map(new);
    let keys: BTreeSet<_> = old_entries.keys().chain(new_entries.keys()).copied().collect();

    for key @ (name, is_tree) in keys {
        let before = old_entries.get(&key).map(|e| e.child);
        let after = new_entries.get(&key).map(|e| e.child);
        if before == after {
            continue;
        }
        let path = join_path(prefix, name);
        if is_tree {
            let before = before.map(|id| store.tree(&id)).transpose()?;
            let after = after.map(|id| store.tree(&id)).transpose()?;
            diff_into(store, &path, before.as_ref(), after.as_ref(), out)?;
        } else {
            out.push(FileChange { path, old: before, new: after });
        }
    }
    Ok(())
}

fn stamp(commit: ObjectId, parent: Option<ObjectId>, changes: Vec<FileChange>) -> Vec<ModificationEvent> {
    changes
        .into_iter()
        .map(|c| ModificationEvent { commit, parent, path: c.path, old: c.old, new: c.new })
        .collect()
}

/// Events introduced by one commit: against the empty tree for a root
/// commit, otherwise against each parent in turn.
pub fn commit_events(
    store: &ObjectStore,
    commit: &CommitRecord,
) -> Result<Vec<ModificationEvent>, HistoryError> {
    if commit.parents.is_empty() {
        let changes = tree_diff(store, None, Some(commit.tree))?;
        return Ok(stamp(commit.id, None, changes));
    }
    let mut events = Vec::new();
    for parent in &commit.parents {
        let parent_tree = store.commit(parent)?.tree;
        let changes = tree_diff(store, Some(parent_tree), Some(commit.tree))?;
        events.extend(stamp(commit.id, Some(*parent), changes));
    }
    Ok(events)
}

/// What the log keeps about each reachable commit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitMeta {
    pub committer_time: Timestamp,
    pub committer_ident: Vec<u8>,
    pub message: Vec<u8>,
    pub projects: BTreeSet<ProjectId>,
}

/// Deduplicated modification events for every reachable commit, joined to
/// commit metadata through `commits`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventLog {
    events: Vec<ModificationEvent>,
    commits: BTreeMap<ObjectId, CommitMeta>,
    partial: BTreeSet<ObjectId>,
}

impl EventLog {
    /// Assembles a log from raw parts, sorting by `(commit, path, old, new)`
    /// and keeping the first occurrence of each key.
    pub fn from_parts(
        mut events: Vec<ModificationEvent>,
        commits: BTreeMap<ObjectId, CommitMeta>,
        partial: BTreeSet<ObjectId>,
    ) -> Self {
        events.sort_by(|a, b| a.key().cmp(&b.key()));
        events.dedup_by(|a, b| a.key() == b.key());
        Self { events, commits, partial }
    }

    pub fn events(&self) -> &[ModificationEvent] {
        &self.events
    }

    pub fn commits(&self) -> &BTreeMap<ObjectId, CommitMeta> {
        &self.commits
    }

    pub fn commit(&self, id: &ObjectId) -> Option<&CommitMeta> {
        self.commits.get(id)
    }

    /// Commits whose history could not be fully resolved (missing parent,
    /// tree or subtree objects).
    pub fn partial_commits(&self) -> &BTreeSet<ObjectId> {
        &self.partial
    }

    /// SHA-1 over a canonical rendering of the log.
    pub fn digest(&self) -> ObjectId {
        let mut hasher = Sha1::new();
        let opt = |id: Option<ObjectId>| id.map(|i| i.to_hex()).unwrap_or_else(|| "-".into());
        for e in &self.events {
            hasher.update(format!(
                "e;{};{};{};{};{}\n",
                e.commit,
                opt(e.parent),
                hex::encode(&e.path),
                opt(e.old),
                opt(e.new)
            ));
        }
        for (id, meta) in &self.commits {
            hasher.update(format!("c;{};{}", id, meta.committer_time.seconds));
            for p in &meta.projects {
                hasher.update(format!(";{}", hex::encode(p.as_str())));
            }
            hasher.update(b"\n");
        }
        ObjectId::from_bytes(hasher.finalize().into())
    }
}

/// Walks every project's history from its tips and diffs each reachable
/// commit. A commit reachable from several projects is diffed once and
/// associated with all of them.
pub fn build_event_log(store: &ObjectStore) -> EventLog {
    let mut records: HashMap<ObjectId, CommitRecord> = HashMap::new();
    let mut projects: BTreeMap<ObjectId, BTreeSet<ProjectId>> = BTreeMap::new();
    let mut partial = BTreeSet::new();

    for (project, tips) in store.tips() {
        let mut stack: Vec<ObjectId> = tips.iter().copied().collect();
        let mut seen = BTreeSet::new();
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            if !records.contains_key(&id) {
                match store.commit(&id) {
                    Ok(record) => {
                        records.insert(id, record);
                    }
                    Err(_) => continue,
                }
            }
            projects.entry(id).or_default().insert(project.clone());
            stack.extend(records[&id].parents.iter().copied());
        }
    }

    let ids: Vec<ObjectId> = projects.keys().copied().collect();
    let per_commit: Vec<(Vec<ModificationEvent>, bool)> = ids
        .par_iter()
        .map(|id| {
            let record = &records[id];
            let mut events = Vec::new();
            let mut complete = true;
            if record.parents.is_empty() {
                match tree_diff(store, None, Some(record.tree)) {
                    Ok(changes) => events.extend(stamp(*id, None, changes)),
                    Err(_) => complete = false,
                }
            }
            for parent in &record.parents {
                let Some(parent_record) = records.get(parent) else {
                    complete = false;
                    continue;
                };
                match tree_diff(store, Some(parent_record.tree), Some(record.tree)) {
                    Ok(changes) => events.extend(stamp(*id, Some(*parent), changes)),
                    Err(_) => complete = false,
                }
            }
            (events, complete)
        })
        .collect();

    let mut events = Vec::new();
    for (id, (commit_events, complete)) in ids.iter().zip(per_commit) {
        events.extend(commit_events);
        if !complete {
            partial.insert(*id);
        }
    }

    let commits = projects
        .into_iter()
        .map(|(id, projects)| {
            let record = &records[&id];
            let meta = CommitMeta {
                committer_time: record.committer_time,
                committer_ident: record.committer_ident.clone(),
                message: record.message.clone(),
                projects,
            };
            (id, meta)
        })
        .collect();

    EventLog::from_parts(events, commits, partial)
}
