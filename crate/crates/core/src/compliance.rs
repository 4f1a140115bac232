//! Reuse detection, origin comparison and license-risk categorization of
//! dataset blobs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::audit::DatasetEntry;
use crate::error::ConfigError;
use crate::index::CrossIndex;
use crate::object::{ObjectId, ProjectId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LicenseClass {
    Permissive,
    Restrictive,
    NoLicense,
    Unknown,
}

const DEFAULT_PERMISSIVE: &[&str] = &[
    "MIT",
    "Apache-2.0",
    "BSD-2-Clause",
    "BSD-3-Clause",
    "ISC",
    "Unlicense",
    "Zlib",
    "zlib-acknowledgement",
    "CC0*",
];

const DEFAULT_RESTRICTIVE: &[&str] =
    &["GPL-2.0*", "GPL-3.0*", "AGPL-3.0*", "LGPL-2.1*", "LGPL-3.0*", "CC-BY-SA*"];

/// Maps license identifiers to classes. Patterns are matched ASCII
/// case-insensitively; a trailing `*` matches any suffix. Exact patterns win
/// over prefix patterns, and longer prefixes over shorter ones.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LicenseTaxonomy {
    exact: BTreeMap<String, LicenseClass>,
    prefixes: Vec<(String, LicenseClass)>,
}

#[derive(Serialize, Deserialize)]
struct TaxonomyConfig {
    permissive: Vec<String>,
    restrictive: Vec<String>,
}

impl Default for LicenseTaxonomy {
    fn default() -> Self {
        Self::from_lists(DEFAULT_PERMISSIVE, DEFAULT_RESTRICTIVE).expect("default taxonomy is valid")
    }
}

fn is_none_identifier(id: &str) -> bool {
    let id = id.trim();
    id.is_empty() || id.eq_ignore_ascii_case("none")
}

impl LicenseTaxonomy {
    pub fn from_lists<P, R>(permissive: &[P], restrictive: &[R]) -> Result<Self, ConfigError>
    where
        P: AsRef<str>,
        R: AsRef<str>,
    {
        let mut taxonomy = Self { exact: BTreeMap::new(), prefixes: Vec::new() };
        let all = permissive
            .iter()
            .map(|p| (p.as_ref(), LicenseClass::Permissive))
            .chain(restrictive.iter().map(|r| (r.as_ref(), LicenseClass::Restrictive)));
        for (pattern, class) in all {
            let key = pattern.trim().to_ascii_lowercase();
            let stem = key.strip_suffix('*');
            if stem.unwrap_or(&key).is_empty() || stem.unwrap_or(&key).contains('*') {
                return Err(ConfigError::Invalid(format!("bad license pattern {pattern:?}")));
            }
            if is_none_identifier(&key) {
                return Err(ConfigError::Invalid(format!("{pattern:?} is reserved for no license")));
            }
            let previous = match stem {
                Some(stem) => {
                    let old = taxonomy.prefixes.iter().find(|(s, _)| s == stem).map(|(_, c)| *c);
                    if old.is_none() {
                        taxonomy.prefixes.push((stem.to_string(), class));
                    }
                    old
                }
                None => taxonomy.exact.insert(key.clone(), class),
            };
            if previous.is_some_and(|c| c != class) {
                return Err(ConfigError::Invalid(format!("{pattern:?} listed in both classes")));
            }
        }
        taxonomy.prefixes.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(taxonomy)
    }

    /// Reads `{"permissive": [...], "restrictive": [...]}`.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: TaxonomyConfig = serde_json::from_str(text)?;
        Self::from_lists(&config.permissive, &config.restrictive)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn classify(&self, license: Option<&str>) -> LicenseClass {
        let Some(license) = license.filter(|l| !is_none_identifier(l)) else {
            return LicenseClass::NoLicense;
        };
        let key = license.trim().to_ascii_lowercase();
        if let Some(class) = self.exact.get(&key) {
            return *class;
        }
        self.prefixes
            .iter()
            .find(|(stem, _)| key.starts_with(stem.as_str()))
            .map(|(_, c)| *c)
            .unwrap_or(LicenseClass::Unknown)
    }

    fn patterns(&self, class: LicenseClass) -> Vec<String> {
        let mut out: Vec<String> = self
            .exact
            .iter()
            .filter(|(_, c)| **c == class)
            .map(|(k, _)| k.clone())
            .chain(self.prefixes.iter().filter(|(_, c)| *c == class).map(|(s, _)| format!("{s}*")))
            .collect();
        out.sort();
        out
    }

    /// Canonical JSON form, with patterns lower-cased and sorted.
    pub fn to_json(&self) -> String {
        let config = TaxonomyConfig {
            permissive: self.patterns(LicenseClass::Permissive),
            restrictive: self.patterns(LicenseClass::Restrictive),
        };
        serde_json::to_string(&config).expect("plain strings serialize")
    }

    /// SHA-1 of the canonical JSON form, as hex.
    pub fn digest(&self) -> String {
        hex::encode(Sha1::digest(self.to_json().as_bytes()))
    }
}

/// Canonical project name used for origin comparison: a leading
/// `scheme://` is dropped, the host (first path segment) is lower-cased, and
/// trailing `/` and `.git` are stripped.
pub fn normalize_project(name: &str) -> String {
    let name = name.trim();
    let rest = name.rfind("://").map_or(name, |i| &name[i + 3..]);
    let mut out = match rest.find('/') {
        Some(i) => format!("{}{}", rest[..i].to_ascii_lowercase(), &rest[i..]),
        None => rest.to_string(),
    };
    loop {
        let stripped = out.strip_suffix('/').or_else(|| out.strip_suffix(".git"));
        match stripped {
            Some(s) if !s.is_empty() => out = s.to_string(),
            _ => break,
        }
    }
    out
}

/// Project to license identifier (`None` for no license), keyed by
/// normalized project name.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OriginLicenses {
    licenses: BTreeMap<String, Option<String>>,
}

#[derive(Deserialize)]
struct LicenseRecord {
    project: String,
    license: Option<String>,
}

impl OriginLicenses {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, project: &str, license: Option<String>) -> Option<Option<String>> {
        self.licenses.insert(normalize_project(project), license)
    }

    /// Parses JSONL `{"project": ..., "license": ...}` records.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, ConfigError> {
        let mut out = Self::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| ConfigError::BadLine { line: n + 1, reason };
            let record: LicenseRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            if out.insert(&record.project, record.license).is_some() {
                return Err(bad(format!("project {:?} listed twice", record.project)));
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(BufReader::new(File::open(path)?))
    }

    /// `None` when the project is not in the manifest at all.
    pub fn license_of(&self, project: &str) -> Option<Option<&str>> {
        self.licenses.get(&normalize_project(project)).map(|l| l.as_deref())
    }

    pub fn class_of(&self, project: &str, taxonomy: &LicenseTaxonomy) -> LicenseClass {
        match self.license_of(project) {
            Some(license) => taxonomy.classify(license),
            None => LicenseClass::Unknown,
        }
    }

    pub fn len(&self) -> usize {
        self.licenses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.licenses.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    SameOrigin,
    #[serde(rename = "Diff_SameLicense_NoneNone")]
    DiffSameLicenseNoneNone,
    #[serde(rename = "Diff_SameLicense_PermPerm")]
    DiffSameLicensePermPerm,
    #[serde(rename = "Diff_PermToNone")]
    DiffPermToNone,
    #[serde(rename = "Diff_NoneToPerm")]
    DiffNoneToPerm,
    #[serde(rename = "Diff_NoneToRestrictive")]
    DiffNoneToRestrictive,
    #[serde(rename = "Diff_PermToRestrictive")]
    DiffPermToRestrictive,
    #[serde(rename = "Diff_Other")]
    DiffOther,
}

impl Category {
    pub fn is_same_license(self) -> bool {
        matches!(self, Self::DiffSameLicenseNoneNone | Self::DiffSameLicensePermPerm)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Risk {
    None,
    Benign,
    Concern,
    High,
}

/// Category and risk for a blob whose claimed origin differs from the
/// resolved one. Pairs outside the six named ones, including any `Unknown`
/// class, land in `Diff_Other` with risk `Concern`.
pub fn classify_license_pair(claimed: LicenseClass, origin: LicenseClass) -> (Category, Risk) {
    use LicenseClass::*;
    match (claimed, origin) {
        (NoLicense, NoLicense) => (Category::DiffSameLicenseNoneNone, Risk::None),
        (Permissive, Permissive) => (Category::DiffSameLicensePermPerm, Risk::None),
        (Permissive, NoLicense) => (Category::DiffPermToNone, Risk::Concern),
        (NoLicense, Permissive) => (Category::DiffNoneToPerm, Risk::Benign),
        (NoLicense, Restrictive) => (Category::DiffNoneToRestrictive, Risk::High),
        (Permissive, Restrictive) => (Category::DiffPermToRestrictive, Risk::High),
        _ => (Category::DiffOther, Risk::Concern),
    }
}

/// Counts behind the reuse table. `unresolved` holds dataset blobs absent
/// from the index or without a creating commit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ReuseCounts {
    pub total: u64,
    pub unresolved: u64,
    pub not_reused: u64,
    pub same_origin: u64,
    pub diff_origin: u64,
}

impl ReuseCounts {
    pub fn reused(&self) -> u64 {
        self.same_origin + self.diff_origin
    }

    fn merge(self, o: Self) -> Self {
        Self {
            total: self.total + o.total,
            unresolved: self.unresolved + o.unresolved,
            not_reused: self.not_reused + o.not_reused,
            same_origin: self.same_origin + o.same_origin,
            diff_origin: self.diff_origin + o.diff_origin,
        }
    }
}

enum Reuse {
    Unresolved,
    NotReused,
    SameOrigin,
    DiffOrigin(ProjectId),
}

fn reuse_of(entry: &DatasetEntry, index: &CrossIndex) -> Reuse {
    let Some(dossier) = index.dossier(&entry.blob) else { return Reuse::Unresolved };
    if dossier.projects.len() < 2 {
        return Reuse::NotReused;
    }
    match index.origin(&entry.blob) {
        Some(Ok(origin)) => {
            if normalize_project(origin.origin_project.as_str())
                == normalize_project(entry.claimed_project.as_str())
            {
                Reuse::SameOrigin
            } else {
                Reuse::DiffOrigin(origin.origin_project)
            }
        }
        _ => Reuse::Unresolved,
    }
}

/// A blob is reused when it occurs in at least two projects.
pub fn reuse_partition(entries: &[DatasetEntry], index: &CrossIndex) -> ReuseCounts {
    entries
        .par_iter()
        .map(|entry| {
            let mut c = ReuseCounts { total: 1, ..Default::default() };
            match reuse_of(entry, index) {
                Reuse::Unresolved => c.unresolved = 1,
                Reuse::NotReused => c.not_reused = 1,
                Reuse::SameOrigin => c.same_origin = 1,
                Reuse::DiffOrigin(_) => c.diff_origin = 1,
            }
            c
        })
        .reduce(ReuseCounts::default, ReuseCounts::merge)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceFinding {
    pub blob: ObjectId,
    pub claimed_project: ProjectId,
    pub claimed_class: LicenseClass,
    pub origin_project: ProjectId,
    pub origin_class: LicenseClass,
    pub category: Category,
    pub risk: Risk,
}

/// Counts behind the license table, over blobs with a different origin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LicenseTable {
    pub different_origin: u64,
    pub same_license: u64,
    pub none_none: u64,
    pub perm_perm: u64,
    pub different_license: u64,
    pub perm_to_none: u64,
    pub none_to_perm: u64,
    pub none_to_restrictive: u64,
    pub perm_to_restrictive: u64,
    pub other: u64,
}

impl LicenseTable {
    pub fn add(&mut self, category: Category) {
        self.different_origin += 1;
        if category.is_same_license() {
            self.same_license += 1;
        } else {
            self.different_license += 1;
        }
        match category {
            Category::DiffSameLicenseNoneNone => self.none_none += 1,
            Category::DiffSameLicensePermPerm => self.perm_perm += 1,
            Category::DiffPermToNone => self.perm_to_none += 1,
            Category::DiffNoneToPerm => self.none_to_perm += 1,
            Category::DiffNoneToRestrictive => self.none_to_restrictive += 1,
            Category::DiffPermToRestrictive => self.perm_to_restrictive += 1,
            Category::DiffOther | Category::SameOrigin => self.other += 1,
        }
    }

    /// Different-license blobs whose resolved origin is restrictive.
    pub fn restrictive(&self) -> u64 {
        self.none_to_restrictive + self.perm_to_restrictive
    }

    pub fn is_consistent(&self) -> bool {
        self.same_license + self.different_license == self.different_origin
            && self.none_none + self.perm_perm == self.same_license
            && self.perm_to_none + self.none_to_perm + self.restrictive() + self.other
                == self.different_license
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ComplianceReport {
    pub findings: Vec<ComplianceFinding>,
    pub table: LicenseTable,
}

/// One finding per reused blob whose resolved origin differs from the
/// claimed project, sorted by blob id.
pub fn compliance_audit(
    entries: &[DatasetEntry],
    index: &CrossIndex,
    taxonomy: &LicenseTaxonomy,
    licenses: &OriginLicenses,
) -> ComplianceReport {
    let mut findings: Vec<ComplianceFinding> = entries
        .par_iter()
        .filter_map(|entry| {
            let Reuse::DiffOrigin(origin_project) = reuse_of(entry, index) else { return None };
            let claimed_class = taxonomy.classify(entry.claimed_license.as_deref());
            let origin_class = licenses.class_of(origin_project.as_str(), taxonomy);
            let (category, risk) = classify_license_pair(claimed_class, origin_class);
            Some(ComplianceFinding {
                blob: entry.blob,
                claimed_project: entry.claimed_project.clone(),
                claimed_class,
                origin_project,
                origin_class,
                category,
                risk,
            })
        })
        .collect();
    findings.sort_by(|a, b| a.blob.cmp(&b.blob));
    let mut table = LicenseTable::default();
    for f in &findings {
        table.add(f.category);
    }
    ComplianceReport { findings, table }
}

/// Findings as JSONL.
pub fn findings_jsonl(findings: &[ComplianceFinding]) -> String {
    let mut out = String::new();
    for f in findings {
        out.push_str(&serde_json::to_string(f).expect("finding serializes"));
        out.push('\n');
    }
    out
}
