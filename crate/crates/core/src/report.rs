//! Report tables with row-referenced percentages, rendered as JSON or text.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::audit::{BlobSampleStats, CommitSampleStats};
use crate::compliance::{LicenseTable, ReuseCounts};
use crate::recommend::CveExposure;

/// `num / den` as a percentage rounded half-up to two decimals, or `-` when
/// the denominator is zero.
pub fn format_percent(num: u64, den: u64) -> String {
    match percent_hundredths(num, den) {
        Some(h) => format!("{}.{:02}", h / 100, h % 100),
        None => "-".to_string(),
    }
}

/// The rounded percentage in hundredths of a percent.
pub fn percent_hundredths(num: u64, den: u64) -> Option<u64> {
    if den == 0 {
        return None;
    }
    let (num, den) = (u128::from(num), u128::from(den));
    Some(((num * 20_000 + den) / (2 * den)) as u64)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Percent {
    pub value: String,
    /// 1-based number of the denominator row.
    pub of_row: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Row {
    pub row: usize,
    pub label: String,
    pub count: u64,
    pub percent: Option<Percent>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Table {
    pub title: String,
    pub rows: Vec<Row>,
}

impl Table {
    /// Builds a table from `(label, count, denominator row)` triples.
    pub fn new(title: &str, spec: &[(&str, u64, Option<usize>)]) -> Self {
        let rows = spec
            .iter()
            .enumerate()
            .map(|(i, (label, count, of_row))| Row {
                row: i + 1,
                label: label.to_string(),
                count: *count,
                percent: of_row.map(|r| Percent { value: format_percent(*count, spec[r - 1].1), of_row: r }),
            })
            .collect();
        Self { title: title.to_string(), rows }
    }

    pub fn row(&self, number: usize) -> Option<&Row> {
        self.rows.get(number.wrapping_sub(1))
    }

    /// The percentage text of row `number`, if that row has one.
    pub fn percent(&self, number: usize) -> Option<&str> {
        self.row(number)?.percent.as_ref().map(|p| p.value.as_str())
    }
}

pub fn blob_sample_table(s: &BlobSampleStats) -> Table {
    Table::new(
        "Counts in the blob sample",
        &[
            ("Total", s.total, None),
            ("Missing", s.missing, Some(1)),
            ("Have an old version", s.have_old, Some(1)),
            ("First version", s.first_version, Some(1)),
            ("No new version", s.first_no_new, Some(4)),
            ("Have a new version", s.have_new, Some(1)),
            ("Found new versions", s.found_new_versions, None),
        ],
    )
}

pub fn commit_sample_table(s: &CommitSampleStats) -> Table {
    Table::new(
        "Counts in the new version commit sample",
        &[
            ("Commits", s.commits, None),
            ("Blobs", s.blobs, None),
            ("New versions", s.new_versions, None),
            ("Fix commits", s.fix_commits, Some(1)),
            ("Fix blobs", s.fix_blobs, Some(2)),
            ("Fix new versions", s.fix_new_versions, Some(3)),
            ("CVE commits", s.cve_commits, Some(4)),
            ("CVE blobs", s.cve_blobs, Some(5)),
            ("CVE new versions", s.cve_new_versions, Some(6)),
            ("Distinct CVEs", s.distinct_cves, None),
        ],
    )
}

pub fn cve_exposure_table(c: &CveExposure) -> Table {
    Table::new(
        "CVE counts in the complete dataset",
        &[
            ("CVE commits", c.cve_commits, None),
            ("CVE blobs", c.cve_blobs, None),
            ("Distinct CVEs", c.distinct_cves, None),
        ],
    )
}

pub fn reuse_table(r: &ReuseCounts) -> Table {
    Table::new(
        "Reused blobs and their origin",
        &[
            ("Total", r.total, None),
            ("Reused", r.reused(), Some(1)),
            ("Same", r.same_origin, Some(2)),
            ("Different", r.diff_origin, Some(2)),
            ("Unresolved", r.unresolved, Some(1)),
        ],
    )
}

pub fn license_table(t: &LicenseTable) -> Table {
    Table::new(
        "Reused blobs with different origins and their licenses",
        &[
            ("Different origin", t.different_origin, None),
            ("Same license", t.same_license, Some(1)),
            ("no license / no license", t.none_none, Some(2)),
            ("permissive / permissive", t.perm_perm, Some(2)),
            ("Different license", t.different_license, Some(1)),
            ("permissive / no license", t.perm_to_none, Some(5)),
            ("no license / permissive", t.none_to_perm, Some(5)),
            ("no license / restrictive", t.none_to_restrictive, Some(5)),
            ("permissive / restrictive", t.perm_to_restrictive, Some(5)),
            ("other pairs", t.other, Some(5)),
            ("restrictive origin", t.restrictive(), Some(5)),
        ],
    )
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ReportMeta {
    pub sampler: String,
    pub commit_sampler: String,
    pub extrapolation_factor: u64,
    pub corpus_digest: String,
    pub index_built_at: i64,
    pub taxonomy_digest: String,
    pub keywords: Vec<String>,
    pub dataset_entries: u64,
    pub suspicious_origin_times: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ReportDocument {
    pub metadata: ReportMeta,
    /// Keyed by `blob_sample`, `commit_sample`, `cve_exposure`, `reuse`,
    /// `license`.
    pub tables: BTreeMap<String, Table>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Text,
}

pub fn render_report(doc: &ReportDocument, format: Format) -> Vec<u8> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(doc).expect("report serializes");
            out.push(b'\n');
            out
        }
        Format::Text => render_text(doc).into_bytes(),
    }
}

fn render_text(doc: &ReportDocument) -> String {
    let m = &doc.metadata;
    let mut out = String::new();
    let _ = writeln!(out, "corpus digest     {}", m.corpus_digest);
    let _ = writeln!(out, "index built at    {}", m.index_built_at);
    let _ = writeln!(out, "blob sampler      {} (x{})", m.sampler, m.extrapolation_factor);
    let _ = writeln!(out, "commit sampler    {}", m.commit_sampler);
    let _ = writeln!(out, "taxonomy digest   {}", m.taxonomy_digest);
    let _ = writeln!(out, "dataset entries   {}", m.dataset_entries);
    if m.suspicious_origin_times > 0 {
        let _ = writeln!(out, "suspicious origin times: {}", m.suspicious_origin_times);
    }
    for (key, table) in &doc.tables {
        out.push('\n');
        out.push_str(&render_table(key, table));
    }
    out
}

pub fn render_table(key: &str, table: &Table) -> String {
    let label_width = table.rows.iter().map(|r| r.label.len()).max().unwrap_or(0);
    let count_width = table.rows.iter().map(|r| r.count.to_string().len()).max().unwrap_or(0);
    let mut out = format!("[{key}] {}\n", table.title);
    for r in &table.rows {
        let pct = match &r.percent {
            Some(p) => format!("{:>6} ({})", p.value, p.of_row),
            None => "-".to_string(),
        };
        let _ = writeln!(
            out,
            "{:>3}  {:<lw$}  {:>cw$}  {}",
            r.row,
            r.label,
            r.count,
            pct,
            lw = label_width,
            cw = count_width
        );
    }
    out
}
