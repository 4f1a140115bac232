//! Runs the library pipeline on an ecosystem and diffs every derived
//! structure against the oracle.

use std::collections::{BTreeMap, BTreeSet};

use crackscan::audit::{self, DatasetEntry};
use crackscan::compliance::{self, LicenseTaxonomy, OriginLicenses, Risk};
use crackscan::fixcve::{FixClassifier, FixVerdict};
use crackscan::history::{build_event_log, EventLog};
use crackscan::index::{build_index_at, CrossIndex};
use crackscan::ingest::{ingest_corpus, CorpusManifest, IngestOptions};
use crackscan::object::ObjectId;
use crackscan::recommend;
use crackscan::sample::SampleFilter;

use super::oracle::{EventKey, Hex, ODossier, Oracle};
use super::Ecosystem;

pub struct Pipeline {
    pub log: EventLog,
    pub index: CrossIndex,
    pub dataset: Vec<DatasetEntry>,
    pub verdicts: BTreeMap<ObjectId, FixVerdict>,
    pub objects: usize,
}

pub fn run_pipeline(eco: &Ecosystem) -> Pipeline {
    let manifest = CorpusManifest::load(&eco.manifest).unwrap();
    let store = ingest_corpus(&manifest, IngestOptions::default()).unwrap();
    let log = build_event_log(&store);
    let index = build_index_at(&log, 2_000_000_000);
    let dataset = audit::load_dataset(&eco.dataset_path).unwrap();
    let verdicts = FixClassifier::default().classify_commits(index.messages());
    Pipeline { log, index, dataset, verdicts, objects: store.len() }
}

#[derive(Default)]
pub struct Report {
    pub mismatches: Vec<String>,
    pub checks: usize,
    pub commits: usize,
    pub events: usize,
    pub blobs: usize,
    pub high: usize,
    pub planted: usize,
}

impl Report {
    fn check<T: PartialEq + std::fmt::Debug>(&mut self, what: &str, got: T, want: T) {
        self.checks += 1;
        if got != want && self.mismatches.len() < 50 {
            self.mismatches.push(format!("{what}: got {got:?}, want {want:?}"));
        }
    }
}

fn opt(id: Option<ObjectId>) -> Option<Hex> {
    id.map(|i| i.to_hex())
}

fn filter(residue: u32, modulus: u32) -> SampleFilter {
    SampleFilter::new(residue, modulus).unwrap()
}

pub fn compare(eco: &Ecosystem, p: &Pipeline, o: &Oracle) -> Report {
    let mut r = Report { commits: o.commits.len(), events: o.events.len(), blobs: o.dossiers.len(), ..Default::default() };

    r.check("partial commits", p.log.partial_commits().len(), 0);
    let commits: BTreeMap<Hex, (i64, BTreeSet<String>)> = p
        .log
        .commits()
        .iter()
        .map(|(id, m)| (id.to_hex(), (m.committer_time.seconds, m.projects.iter().map(|p| p.as_str().to_string()).collect())))
        .collect();
    let want: BTreeMap<Hex, (i64, BTreeSet<String>)> =
        o.commits.iter().map(|(id, c)| (id.clone(), (c.time, c.projects.clone()))).collect();
    r.check("commit metadata", commits == want, true);
    if commits != want {
        let got: BTreeSet<&Hex> = commits.keys().collect();
        let exp: BTreeSet<&Hex> = want.keys().collect();
        r.check("commit ids", got, exp);
    }

    let events: BTreeMap<EventKey, Option<Hex>> = p
        .log
        .events()
        .iter()
        .map(|e| {
            let path = String::from_utf8(e.path.clone()).unwrap();
            ((e.commit.to_hex(), path, opt(e.old), opt(e.new)), opt(e.parent))
        })
        .collect();
    r.check("event count", p.log.events().len(), o.events.len());
    if events != o.events {
        let extra: Vec<_> = events.iter().filter(|(k, v)| o.events.get(*k) != Some(v)).take(5).collect();
        let missing: Vec<_> = o.events.iter().filter(|(k, v)| events.get(*k) != Some(v)).take(5).collect();
        r.check("events", format!("unexpected {extra:?}"), format!("missing {missing:?}"));
    }

    let dossiers: BTreeMap<Hex, ODossier> = p
        .index
        .dossiers()
        .map(|d| {
            let od = ODossier {
                creating: d
                    .creating
                    .iter()
                    .map(|c| {
                        (
                            c.commit.to_hex(),
                            c.time,
                            String::from_utf8(c.path.clone()).unwrap(),
                            opt(c.prior),
                            c.projects.iter().map(|p| p.as_str().to_string()).collect(),
                        )
                    })
                    .collect(),
                modifying: d.modifying.iter().map(|m| (m.commit.to_hex(), m.time, m.new.to_hex())).collect(),
                projects: d.projects.iter().map(|p| p.as_str().to_string()).collect(),
            };
            (d.blob.to_hex(), od)
        })
        .collect();
    r.check("dossier count", dossiers.len(), o.dossiers.len());
    for (blob, want) in &o.dossiers {
        r.check(&format!("dossier {blob}"), dossiers.get(blob), Some(want));
    }

    for blob in o.dossiers.keys() {
        let id = ObjectId::from_hex(blob.as_bytes()).unwrap();
        let got = p.index.origin(&id).and_then(|o| o.ok()).map(|o| (o.origin_project.as_str().to_string(), o.origin_commit.to_hex(), o.origin_time));
        r.check(&format!("origin {blob}"), got, o.origin(blob));
    }

    for d in &p.dataset {
        let c = p.index.classify(&d.blob);
        let got = (c.found, c.has_old, c.has_new, c.new_versions.iter().map(|v| v.to_hex()).collect::<BTreeSet<_>>());
        r.check(&format!("classification {}", d.blob), got, o.classify(&d.blob.to_hex()));
    }

    for (res, m) in [(0, 1), (0, 8), (5, 8), (0, 128), (3, 4)] {
        let s = audit::blob_sample_stats(&p.dataset, &p.index, &filter(res, m));
        let got = [s.total, s.missing, s.have_old, s.first_version, s.first_no_new, s.have_new, s.found_new_versions];
        r.check(&format!("blob stats {res}/{m}"), got, o.blob_stats(&eco.dataset, res, m));
    }

    let updates = audit::enumerate_update_commits(&p.dataset, &p.index);
    let got: BTreeMap<Hex, (BTreeSet<Hex>, BTreeSet<(Hex, Hex)>)> = updates
        .iter()
        .map(|u| {
            (
                u.commit.to_hex(),
                (
                    u.blobs.iter().map(|b| b.to_hex()).collect(),
                    u.new_versions.iter().map(|(a, b)| (a.to_hex(), b.to_hex())).collect(),
                ),
            )
        })
        .collect();
    r.check("update commits", got == o.updates(&eco.dataset), true);

    for (id, v) in &p.verdicts {
        let label = &o.labels[&id.to_hex()];
        let cves: BTreeSet<String> = v.cves.iter().map(|c| c.as_str().to_string()).collect();
        r.check(&format!("verdict {id}"), (v.is_fix, cves), (label.is_fix, label.cves.clone()));
    }

    for (res, m) in [(0, 1), (3, 8), (1, 2)] {
        let s = audit::commit_sample_stats(&updates, &filter(res, m), &p.verdicts);
        let got = [
            s.commits,
            s.blobs,
            s.new_versions,
            s.fix_commits,
            s.fix_blobs,
            s.fix_new_versions,
            s.cve_commits,
            s.cve_blobs,
            s.cve_new_versions,
            s.distinct_cves,
        ];
        r.check(&format!("commit stats {res}/{m}"), got, o.commit_stats(&eco.dataset, res, m));
    }

    let e = recommend::cve_exposure_report(&p.dataset, &p.index, &p.verdicts);
    r.check("cve exposure", [e.cve_commits, e.cve_blobs, e.distinct_cves], o.cve_exposure(&eco.dataset));

    let recs: BTreeMap<Hex, (Hex, Hex, &'static str, BTreeSet<String>)> =
        recommend::recommend_updates(&p.dataset, &p.index, &p.verdicts)
            .into_iter()
            .map(|u| {
                let reason = match u.reason {
                    recommend::Reason::Cve => "cve",
                    recommend::Reason::Fix => "fix",
                    recommend::Reason::Newer => "newer",
                };
                (
                    u.blob.to_hex(),
                    (u.replacement.to_hex(), u.via_commit.to_hex(), reason, u.cves.iter().map(|c| c.as_str().to_string()).collect()),
                )
            })
            .collect();
    let want = o.recommendations(&eco.dataset);
    r.check("recommendation count", recs.len(), want.len());
    for (blob, w) in &want {
        r.check(&format!("recommendation {blob}"), recs.get(blob), Some(w));
    }

    let reuse = compliance::reuse_partition(&p.dataset, &p.index);
    r.check(
        "reuse partition",
        [reuse.total, reuse.unresolved, reuse.not_reused, reuse.same_origin, reuse.diff_origin],
        o.reuse(&eco.dataset),
    );

    let licenses = OriginLicenses::load(&eco.licenses_path).unwrap();
    let manifest: BTreeMap<String, Option<String>> =
        eco.repos.iter().map(|r| (r.name.clone(), r.license.clone())).collect();
    let audit = compliance::compliance_audit(&p.dataset, &p.index, &LicenseTaxonomy::default(), &licenses);
    r.check("license table consistent", audit.table.is_consistent(), true);
    let name = |v: &dyn erased::Name| v.name();
    let got: BTreeMap<Hex, (String, String, String, String, String)> = audit
        .findings
        .iter()
        .map(|f| {
            (
                f.blob.to_hex(),
                (
                    name(&f.claimed_class),
                    f.origin_project.as_str().to_string(),
                    name(&f.origin_class),
                    name(&f.category),
                    name(&f.risk),
                ),
            )
        })
        .collect();
    let want = o.findings(&eco.dataset, &manifest);
    r.check("finding count", got.len(), want.len());
    for (blob, w) in &want {
        r.check(&format!("finding {blob}"), got.get(blob), Some(w));
    }

    let high: BTreeSet<Hex> = audit.findings.iter().filter(|f| f.risk == Risk::High).map(|f| f.blob.to_hex()).collect();
    r.high = high.len();
    r.planted = eco.planted.len();
    r.check("high-risk blobs equal planted copies", high, eco.planted.clone());
    r
}

mod erased {
    pub trait Name {
        fn name(&self) -> String;
    }

    impl<T: serde::Serialize> Name for T {
        fn name(&self) -> String {
            serde_json::to_value(self).unwrap().as_str().unwrap().to_string()
        }
    }
}
