use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use crackscan::audit::{self, DatasetEntry};
use crackscan::compliance::{self, LicenseTaxonomy, OriginLicenses};
use crackscan::fixcve::{FixClassifier, FixVerdict};
use crackscan::history::build_event_log;
use crackscan::index::{self, CrossIndex};
use crackscan::ingest::{ingest_corpus, CorpusManifest, IngestOptions, ObjectStore};
use crackscan::object::{ObjectId, ObjectKind};
use crackscan::recommend;
use crackscan::report::{self, Format, ReportDocument, ReportMeta};
use crackscan::sample::SampleFilter;

#[derive(Parser)]
#[command(name = "crackscan", version, about = "Audit code datasets against git history")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Corpus manifest (JSON array of {"project", "path"}).
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,

    /// Cross-index directory.
    #[arg(long, global = true)]
    index: Option<PathBuf>,

    /// Dataset manifest (JSONL).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,

    /// Blob sampler as <residue>/<modulus>.
    #[arg(long, global = true, default_value = "0/1")]
    sample: SampleFilter,

    /// Commit sampler as <residue>/<modulus>.
    #[arg(long, global = true, default_value = "0/1")]
    commit_sample: SampleFilter,

    /// License taxonomy override (JSON).
    #[arg(long, global = true)]
    taxonomy: Option<PathBuf>,

    /// Project license manifest (JSONL).
    #[arg(long, global = true)]
    licenses: Option<PathBuf>,

    /// Fix keyword list override (JSON).
    #[arg(long, global = true)]
    keywords: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,

    /// Skip corrupt or unreadable repositories instead of failing.
    #[arg(long, global = true)]
    keep_going: bool,

    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Text,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Json => Format::Json,
            OutputFormat::Text => Format::Text,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Read and verify every loose object of the corpus.
    Ingest,
    /// Build the cross-index from the corpus and write it to --index.
    Index,
    /// Blob-sample statistics of the dataset.
    AuditBlobs,
    /// Statistics over commits that replaced dataset blobs.
    AuditCommits,
    /// CVE exposure of the whole dataset.
    CveScan,
    /// Reuse and license-mismatch audit.
    AuditLicenses {
        /// Write one JSONL finding per different-origin blob here.
        #[arg(long)]
        findings: Option<PathBuf>,
    },
    /// Newer-version recommendations for dataset blobs, as JSONL.
    Recommend,
    /// Every table in one document.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("CRACKSCAN_THREADS") else { return Ok(()) };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("CRACKSCAN_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

/// Invocation mistakes clap cannot catch; reported with exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(String);

fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    match value {
        Some(p) => Ok(p),
        None => Err(Usage(format!("{flag} is required for this command")).into()),
    }
}

fn emit(cli: &Cli, bytes: &[u8]) -> Result<()> {
    match &cli.out {
        Some(path) => std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn ingest(cli: &Cli) -> Result<ObjectStore> {
    let manifest = CorpusManifest::load(require(&cli.corpus, "--corpus")?)?;
    let store = ingest_corpus(&manifest, IngestOptions { keep_going: cli.keep_going })?;
    for failure in store.failures() {
        eprintln!("warning: skipped {}: {}", failure.project, failure.message);
    }
    Ok(store)
}

struct Inputs {
    index: CrossIndex,
    dataset: Vec<DatasetEntry>,
    classifier: FixClassifier,
}

impl Inputs {
    fn load(cli: &Cli) -> Result<Self> {
        let dir = require(&cli.index, "--index")?;
        let index = index::load_index(dir).with_context(|| format!("loading index {}", dir.display()))?;
        let path = require(&cli.dataset, "--dataset")?;
        let dataset = audit::load_dataset(path).with_context(|| format!("loading {}", path.display()))?;
        let classifier = match &cli.keywords {
            Some(p) => FixClassifier::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => FixClassifier::default(),
        };
        Ok(Self { index, dataset, classifier })
    }

    fn verdicts(&self) -> BTreeMap<ObjectId, FixVerdict> {
        self.classifier.classify_commits(self.index.messages())
    }
}

fn taxonomy(cli: &Cli) -> Result<LicenseTaxonomy> {
    match &cli.taxonomy {
        Some(p) => LicenseTaxonomy::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(LicenseTaxonomy::default()),
    }
}

fn metadata(cli: &Cli, inputs: &Inputs, taxonomy: &LicenseTaxonomy) -> ReportMeta {
    let built_at = inputs.index.meta().built_at;
    let suspicious = inputs
        .dataset
        .iter()
        .filter_map(|e| inputs.index.origin(&e.blob))
        .filter_map(|o| o.ok())
        .filter(|o| o.time_is_suspicious(built_at))
        .count();
    ReportMeta {
        sampler: cli.sample.to_string(),
        commit_sampler: cli.commit_sample.to_string(),
        extrapolation_factor: u64::from(cli.sample.modulus()),
        corpus_digest: inputs.index.meta().corpus_digest.clone(),
        index_built_at: built_at,
        taxonomy_digest: taxonomy.digest(),
        keywords: inputs.classifier.keywords().iter().cloned().collect(),
        dataset_entries: inputs.dataset.len() as u64,
        suspicious_origin_times: suspicious as u64,
    }
}

fn license_inputs(cli: &Cli) -> Result<OriginLicenses> {
    let path = require(&cli.licenses, "--licenses")?;
    OriginLicenses::load(path).with_context(|| format!("loading {}", path.display()))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest => {
            let store = ingest(cli)?;
            let summary = serde_json::json!({
                "objects": store.len(),
                "blobs": store.count_kind(ObjectKind::Blob),
                "trees": store.count_kind(ObjectKind::Tree),
                "commits": store.count_kind(ObjectKind::Commit),
                "tags": store.count_kind(ObjectKind::Tag),
                "projects": store.tips().len(),
                "skipped": store.failures().len(),
            });
            emit(cli, format!("{summary:#}\n").as_bytes())
        }
        Command::Index => {
            let dir = require(&cli.index, "--index")?;
            let store = ingest(cli)?;
            let log = build_event_log(&store);
            for commit in log.partial_commits() {
                eprintln!("warning: history of commit {commit} is incomplete");
            }
            let idx = index::build_index(&log);
            index::persist_index(&idx, dir)?;
            let summary = serde_json::json!({
                "commits": log.commits().len(),
                "events": log.events().len(),
                "blobs": idx.len(),
                "partial_commits": log.partial_commits().len(),
                "corpus_digest": idx.meta().corpus_digest,
            });
            emit(cli, format!("{summary:#}\n").as_bytes())
        }
        Command::Recommend => {
            let inputs = Inputs::load(cli)?;
            let recs = recommend::recommend_updates(&inputs.dataset, &inputs.index, &inputs.verdicts());
            let mut out = Vec::new();
            for r in recs {
                serde_json::to_writer(&mut out, &r)?;
                out.push(b'\n');
            }
            emit(cli, &out)
        }
        command => {
            let inputs = Inputs::load(cli)?;
            let taxonomy = taxonomy(cli)?;
            let mut doc = ReportDocument { metadata: metadata(cli, &inputs, &taxonomy), ..Default::default() };
            let all = matches!(command, Command::Report);
            let needs_verdicts = all || matches!(command, Command::AuditCommits | Command::CveScan);
            let verdicts = if needs_verdicts { inputs.verdicts() } else { BTreeMap::new() };

            if all || matches!(command, Command::AuditBlobs) {
                let stats = audit::blob_sample_stats(&inputs.dataset, &inputs.index, &cli.sample);
                doc.tables.insert("blob_sample".into(), report::blob_sample_table(&stats));
            }
            if all || matches!(command, Command::AuditCommits) {
                let updates = audit::enumerate_update_commits(&inputs.dataset, &inputs.index);
                let stats = audit::commit_sample_stats(&updates, &cli.commit_sample, &verdicts);
                doc.tables.insert("commit_sample".into(), report::commit_sample_table(&stats));
            }
            if all || matches!(command, Command::CveScan) {
                let exposure = recommend::cve_exposure_report(&inputs.dataset, &inputs.index, &verdicts);
                doc.tables.insert("cve_exposure".into(), report::cve_exposure_table(&exposure));
            }
            if all || matches!(command, Command::AuditLicenses { .. }) {
                let reuse = compliance::reuse_partition(&inputs.dataset, &inputs.index);
                doc.tables.insert("reuse".into(), report::reuse_table(&reuse));
                let wants_findings = matches!(command, Command::AuditLicenses { findings: Some(_) });
                if wants_findings || cli.licenses.is_some() {
                    let licenses = license_inputs(cli)?;
                    let result = compliance::compliance_audit(&inputs.dataset, &inputs.index, &taxonomy, &licenses);
                    doc.tables.insert("license".into(), report::license_table(&result.table));
                    if let Command::AuditLicenses { findings: Some(path) } = command {
                        std::fs::write(path, compliance::findings_jsonl(&result.findings))
                            .with_context(|| format!("writing {}", path.display()))?;
                    }
                }
            }
            emit(cli, &report::render_report(&doc, cli.format.into()))
        }
    }
}
