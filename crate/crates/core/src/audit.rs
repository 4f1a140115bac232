//! Joins a training-dataset manifest against the cross-index: blob-sample
//! statistics (old/first/new versions) and statistics over the commits that
//! replaced dataset blobs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::DatasetError;
use crate::fixcve::{CveId, FixVerdict};
use crate::index::CrossIndex;
use crate::object::{ObjectId, ProjectId};
use crate::sample::SampleFilter;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DatasetEntry {
    /// 1-based line in the source file.
    pub line: usize,
    pub blob: ObjectId,
    pub claimed_project: ProjectId,
    pub claimed_license: Option<String>,
    pub path: Option<String>,
    pub lang: Option<String>,
}

#[derive(Deserialize)]
struct DatasetRecord {
    blob: String,
    project: String,
    #[serde(default)]
    license: Option<String>,
    #[serde(default)]
    path: Option<String>,
    #[serde(default)]
    lang: Option<String>,
}

/// Parses JSONL dataset records, one per line; blank lines are skipped.
pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Vec<DatasetEntry>, DatasetError> {
    let mut entries = Vec::new();
    let mut seen: HashMap<ObjectId, usize> = HashMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| DatasetError::BadRecord { line: line_no, reason };
        let record: DatasetRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let blob = ObjectId::from_hex(record.blob.as_bytes()).map_err(|e| bad(e.to_string()))?;
        let claimed_project = ProjectId::new(record.project).map_err(|e| bad(e.to_string()))?;
        if seen.insert(blob, line_no).is_some() {
            return Err(DatasetError::DuplicateBlob { id: blob, line: line_no });
        }
        entries.push(DatasetEntry {
            line: line_no,
            blob,
            claimed_project,
            claimed_license: record.license,
            path: record.path,
            lang: record.lang,
        });
    }
    Ok(entries)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetEntry>, DatasetError> {
    parse_dataset(BufReader::new(File::open(path)?))
}

/// Counts behind the blob-sample table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BlobSampleStats {
    pub total: u64,
    pub missing: u64,
    pub have_old: u64,
    pub first_version: u64,
    pub first_no_new: u64,
    pub have_new: u64,
    /// Distinct `(blob, new version)` pairs.
    pub found_new_versions: u64,
}

impl BlobSampleStats {
    pub fn merge(self, other: Self) -> Self {
        Self {
            total: self.total + other.total,
            missing: self.missing + other.missing,
            have_old: self.have_old + other.have_old,
            first_version: self.first_version + other.first_version,
            first_no_new: self.first_no_new + other.first_no_new,
            have_new: self.have_new + other.have_new,
            found_new_versions: self.found_new_versions + other.found_new_versions,
        }
    }

    /// Missing, has-old and first-version blobs partition the sample.
    pub fn is_consistent(&self) -> bool {
        self.missing + self.have_old + self.first_version == self.total
            && self.first_no_new <= self.first_version
            && self.found_new_versions >= self.have_new
    }
}

pub fn blob_sample_stats(
    entries: &[DatasetEntry],
    index: &CrossIndex,
    filter: &SampleFilter,
) -> BlobSampleStats {
    entries
        .par_iter()
        .filter(|e| filter.accepts(&e.blob))
        .fold(BlobSampleStats::default, |mut acc, entry| {
            let class = index.classify(&entry.blob);
            acc.total += 1;
            if !class.found {
                acc.missing += 1;
                return acc;
            }
            if class.has_old {
                acc.have_old += 1;
            } else {
                acc.first_version += 1;
                if !class.has_new {
                    acc.first_no_new += 1;
                }
            }
            if class.has_new {
                acc.have_new += 1;
            }
            acc.found_new_versions += class.new_versions.len() as u64;
            acc
        })
        .reduce(BlobSampleStats::default, BlobSampleStats::merge)
}

/// A commit that replaced at least one dataset blob.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UpdateCommit {
    pub commit: ObjectId,
    pub time: i64,
    /// Dataset blobs the commit replaced.
    pub blobs: BTreeSet<ObjectId>,
    /// `(dataset blob, new version)` pairs the commit produced.
    pub new_versions: BTreeSet<(ObjectId, ObjectId)>,
}

pub fn enumerate_update_commits(entries: &[DatasetEntry], index: &CrossIndex) -> Vec<UpdateCommit> {
    let mut commits: BTreeMap<ObjectId, UpdateCommit> = BTreeMap::new();
    for entry in entries {
        let Some(dossier) = index.dossier(&entry.blob) else { continue };
        for m in &dossier.modifying {
            let update = commits.entry(m.commit).or_insert_with(|| UpdateCommit {
                commit: m.commit,
                time: m.time,
                blobs: BTreeSet::new(),
                new_versions: BTreeSet::new(),
            });
            update.blobs.insert(entry.blob);
            update.new_versions.insert((entry.blob, m.new));
        }
    }
    commits.into_values().collect()
}

/// Counts behind the update-commit table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CommitSampleStats {
    pub commits: u64,
    pub blobs: u64,
    pub new_versions: u64,
    pub fix_commits: u64,
    pub fix_blobs: u64,
    pub fix_new_versions: u64,
    pub cve_commits: u64,
    pub cve_blobs: u64,
    pub cve_new_versions: u64,
    pub distinct_cves: u64,
}

impl CommitSampleStats {
    pub fn is_consistent(&self) -> bool {
        self.fix_commits <= self.commits
            && self.fix_blobs <= self.blobs
            && self.fix_new_versions <= self.new_versions
            && self.cve_commits <= self.fix_commits
            && self.cve_blobs <= self.fix_blobs
            && self.cve_new_versions <= self.fix_new_versions
    }
}

/// Statistics over the update commits accepted by `filter` (applied to the
/// commit id). Blob and new-version counts are distinct over the selected
/// commits.
pub fn commit_sample_stats(
    updates: &[UpdateCommit],
    filter: &SampleFilter,
    verdicts: &BTreeMap<ObjectId, FixVerdict>,
) -> CommitSampleStats {
    let mut blobs = BTreeSet::new();
    let mut versions = BTreeSet::new();
    let mut fix_blobs = BTreeSet::new();
    let mut fix_versions = BTreeSet::new();
    let mut cve_blobs = BTreeSet::new();
    let mut cve_versions = BTreeSet::new();
    let mut cves: BTreeSet<&CveId> = BTreeSet::new();
    let mut stats = CommitSampleStats::default();

    for update in updates.iter().filter(|u| filter.accepts(&u.commit)) {
        stats.commits += 1;
        blobs.extend(update.blobs.iter().copied());
        versions.extend(update.new_versions.iter().copied());
        let Some(verdict) = verdicts.get(&update.commit).filter(|v| v.is_fix) else {
            continue;
        };
        stats.fix_commits += 1;
        fix_blobs.extend(update.blobs.iter().copied());
        fix_versions.extend(update.new_versions.iter().copied());
        if !verdict.cves.is_empty() {
            stats.cve_commits += 1;
            cve_blobs.extend(update.blobs.iter().copied());
            cve_versions.extend(update.new_versions.iter().copied());
            cves.extend(verdict.cves.iter());
        }
    }

    stats.blobs = blobs.len() as u64;
    stats.new_versions = versions.len() as u64;
    stats.fix_blobs = fix_blobs.len() as u64;
    stats.fix_new_versions = fix_versions.len() as u64;
    stats.cve_blobs = cve_blobs.len() as u64;
    stats.cve_new_versions = cve_versions.len() as u64;
    stats.distinct_cves = cves.len() as u64;
    stats
}
