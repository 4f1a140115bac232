//! Keyword-based bug-fix detection and CVE id extraction on commit messages.
//!
//! Matching follows `LC_ALL=C grep -iwE` semantics: a keyword matches when
//! it equals a maximal run of word characters `[A-Za-z0-9_]`, compared
//! ASCII case-insensitively. Bytes outside ASCII are non-word characters.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::bytes::Regex;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::object::ObjectId;

pub const DEFAULT_KEYWORDS: [&str; 25] = [
    "fix", "fixes", "fixing", "bug", "bugs", "issue", "issues", "patch", "patches", "error",
    "errors", "resolve", "resolved", "resolving", "correct", "corrects", "corrected",
    "correcting", "problem", "problems", "debug", "debugs", "debugged", "debugging", "cve",
];

/// Canonical `CVE-<year>-<number>` with the digits kept verbatim.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CveId(String);

impl CveId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn cve_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"(?i-u)cve-[0-9]+-[0-9]+").expect("valid pattern"))
}

/// Every `cve-[0-9]+-[0-9]+` match, case-insensitive, with the prefix
/// upper-cased.
pub fn extract_cves(message: &[u8]) -> BTreeSet<CveId> {
    cve_pattern()
        .find_iter(message)
        .map(|m| {
            // the match is ASCII by construction of the pattern
            let text = String::from_utf8_lossy(&m.as_bytes()[3..]);
            CveId(format!("CVE{text}"))
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FixVerdict {
    pub is_fix: bool,
    pub matched_keywords: BTreeSet<String>,
    /// CVE ids of fix commits. Left empty for non-fix messages so CVE
    /// commits are always a subset of fix commits.
    pub cves: BTreeSet<CveId>,
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn words(message: &[u8]) -> impl Iterator<Item = &[u8]> {
    message.split(|&b| !is_word_byte(b)).filter(|w| !w.is_empty())
}

#[derive(Deserialize)]
struct KeywordConfig {
    keywords: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixClassifier {
    keywords: BTreeSet<String>,
}

impl Default for FixClassifier {
    fn default() -> Self {
        Self { keywords: DEFAULT_KEYWORDS.iter().map(|k| k.to_string()).collect() }
    }
}

impl FixClassifier {
    pub fn with_keywords<I, S>(keywords: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for k in keywords {
            let k = k.as_ref();
            if k.is_empty() || !k.bytes().all(is_word_byte) {
                return Err(ConfigError::Invalid(format!(
                    "keyword {k:?} must be a non-empty run of [A-Za-z0-9_]"
                )));
            }
            set.insert(k.to_ascii_lowercase());
        }
        if set.is_empty() {
            return Err(ConfigError::Invalid("keyword list is empty".into()));
        }
        Ok(Self { keywords: set })
    }

    /// Reads `{"keywords": [...]}`.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: KeywordConfig = serde_json::from_str(text)?;
        Self::with_keywords(config.keywords)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn keywords(&self) -> &BTreeSet<String> {
        &self.keywords
    }

    pub fn classify(&self, message: &[u8]) -> FixVerdict {
        let mut matched = BTreeSet::new();
        for word in words(message) {
            let lower = word.to_ascii_lowercase();
            // word bytes are ASCII
            let lower = String::from_utf8(lower).expect("ascii word");
            if self.keywords.contains(&lower) {
                matched.insert(lower);
            }
        }
        let is_fix = !matched.is_empty();
        let cves = if is_fix { extract_cves(message) } else { BTreeSet::new() };
        FixVerdict { is_fix, matched_keywords: matched, cves }
    }

    /// One verdict per commit, keyed by id.
    pub fn classify_commits<'a, I>(&self, commits: I) -> BTreeMap<ObjectId, FixVerdict>
    where
        I: IntoIterator<Item = (ObjectId, &'a [u8])>,
    {
        commits.into_iter().map(|(id, msg)| (id, self.classify(msg))).collect()
    }
}

/// Classification with the default keyword list.
pub fn is_fix_message(message: &[u8]) -> FixVerdict {
    FixClassifier::default().classify(message)
}
