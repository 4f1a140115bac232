//! Blob provenance auditing for code training datasets.
//!
//! The pipeline reads loose git objects from a corpus of repositories,
//! replays every commit into per-file modification events, inverts those
//! into a per-blob cross-index, and joins a dataset manifest against it to
//! find stale blobs, bug-fix and CVE updates, and license mismatches
//! between claimed and resolved origins.

pub mod audit;
pub mod compliance;
pub mod error;
pub mod fixcve;
pub mod history;
pub mod index;
pub mod ingest;
pub mod object;
pub mod recommend;
pub mod report;
pub mod sample;

pub use audit::{
    blob_sample_stats, commit_sample_stats, enumerate_update_commits, load_dataset, BlobSampleStats,
    CommitSampleStats, DatasetEntry, UpdateCommit,
};
pub use compliance::{
    classify_license_pair, compliance_audit, normalize_project, reuse_partition, Category,
    ComplianceFinding, LicenseClass, LicenseTaxonomy, OriginLicenses, Risk,
};
pub use error::{ConfigError, DatasetError, HistoryError, IndexError, IngestError, ObjectError};
pub use fixcve::{extract_cves, CveId, FixClassifier, FixVerdict};
pub use history::{build_event_log, tree_diff, EventLog, ModificationEvent};
pub use index::{build_index, classify_blob, load_index, origin_of, persist_index, CrossIndex};
pub use ingest::{ingest_corpus, CorpusManifest, IngestOptions, ObjectStore};
pub use object::{blob_id, ObjectId, ObjectKind, ProjectId};
pub use recommend::{cve_exposure_report, recommend_updates, UpdateRecommendation};
pub use report::{format_percent, render_report, ReportDocument};
pub use sample::{extrapolate, sample_accepts, SampleFilter};
