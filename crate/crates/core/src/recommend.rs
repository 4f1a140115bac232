//! Replacement recommendations for dataset blobs that have newer versions,
//! and CVE exposure counts over the commits that produced them.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::audit::{enumerate_update_commits, DatasetEntry};
use crate::fixcve::{CveId, FixVerdict};
use crate::index::{CrossIndex, ModifyingEntry};
use crate::object::ObjectId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Reason {
    Cve,
    Fix,
    Newer,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UpdateRecommendation {
    pub blob: ObjectId,
    pub replacement: ObjectId,
    pub via_commit: ObjectId,
    pub reason: Reason,
    pub cves: BTreeSet<CveId>,
}

/// The latest direct successor: greatest time, then smallest commit id,
/// then smallest new blob id.
pub fn latest_successor(modifying: &[ModifyingEntry]) -> Option<&ModifyingEntry> {
    modifying.iter().min_by(|a, b| {
        b.time.cmp(&a.time).then_with(|| a.commit.cmp(&b.commit)).then_with(|| a.new.cmp(&b.new))
    })
}

pub fn recommend_for(
    blob: &ObjectId,
    index: &CrossIndex,
    verdicts: &BTreeMap<ObjectId, FixVerdict>,
) -> Option<UpdateRecommendation> {
    let dossier = index.dossier(blob)?;
    let latest = latest_successor(&dossier.modifying)?;
    let mut any_fix = false;
    let mut cves = BTreeSet::new();
    for m in &dossier.modifying {
        if let Some(v) = verdicts.get(&m.commit) {
            any_fix |= v.is_fix;
            cves.extend(v.cves.iter().cloned());
        }
    }
    let reason = if !cves.is_empty() {
        Reason::Cve
    } else if any_fix {
        Reason::Fix
    } else {
        Reason::Newer
    };
    Some(UpdateRecommendation {
        blob: *blob,
        replacement: latest.new,
        via_commit: latest.commit,
        reason,
        cves,
    })
}

/// One recommendation per dataset blob with at least one newer version,
/// sorted by blob id.
pub fn recommend_updates(
    entries: &[DatasetEntry],
    index: &CrossIndex,
    verdicts: &BTreeMap<ObjectId, FixVerdict>,
) -> Vec<UpdateRecommendation> {
    let mut out: Vec<_> =
        entries.par_iter().filter_map(|e| recommend_for(&e.blob, index, verdicts)).collect();
    out.sort_by(|a, b| a.blob.cmp(&b.blob));
    out
}

/// Follows latest successors from `blob`. Each hop must move strictly
/// forward in time and reach an unvisited blob, so the walk always ends.
/// The returned chain excludes `blob` itself.
pub fn follow_chain(blob: &ObjectId, index: &CrossIndex) -> Vec<ObjectId> {
    let mut chain = Vec::new();
    let mut seen = HashSet::from([*blob]);
    let mut current = *blob;
    let mut last_time = i64::MIN;
    while let Some(next) = index.dossier(&current).and_then(|d| latest_successor(&d.modifying)) {
        if next.time <= last_time || !seen.insert(next.new) {
            break;
        }
        last_time = next.time;
        current = next.new;
        chain.push(current);
    }
    chain
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CveExposure {
    pub cve_commits: u64,
    pub cve_blobs: u64,
    pub distinct_cves: u64,
}

/// Counts over every commit that replaced a dataset blob and names a CVE.
pub fn cve_exposure_report(
    entries: &[DatasetEntry],
    index: &CrossIndex,
    verdicts: &BTreeMap<ObjectId, FixVerdict>,
) -> CveExposure {
    let mut report = CveExposure::default();
    let mut blobs = BTreeSet::new();
    let mut cves = BTreeSet::new();
    for update in enumerate_update_commits(entries, index) {
        let Some(v) = verdicts.get(&update.commit).filter(|v| !v.cves.is_empty()) else { continue };
        report.cve_commits += 1;
        blobs.extend(update.blobs);
        cves.extend(v.cves.iter().cloned());
    }
    report.cve_blobs = blobs.len() as u64;
    report.distinct_cves = cves.len() as u64;
    report
}
