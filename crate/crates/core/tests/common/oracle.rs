//! Brute-force reference built only from git plumbing output and the
//! generator's ground truth. Everything is kept as hex strings.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::process::{Command, Stdio};

use rayon::prelude::*;

use super::{DatasetLine, Ecosystem, Label};

pub type Hex = String;
/// `(commit, path, old, new)`
pub type EventKey = (Hex, String, Option<Hex>, Option<Hex>);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OCommit {
    pub time: i64,
    pub parents: Vec<Hex>,
    pub subject: String,
    pub projects: BTreeSet<String>,
}

/// `(commit, time, path, prior, projects)`
pub type OCreating = (Hex, i64, String, Option<Hex>, BTreeSet<String>);

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ODossier {
    pub creating: BTreeSet<OCreating>,
    /// `(commit, time, new)`
    pub modifying: BTreeSet<(Hex, i64, Hex)>,
    pub projects: BTreeSet<String>,
}

pub struct Oracle {
    pub commits: BTreeMap<Hex, OCommit>,
    /// Event key to the parent it was first seen against.
    pub events: BTreeMap<EventKey, Option<Hex>>,
    pub dossiers: BTreeMap<Hex, ODossier>,
    pub labels: BTreeMap<Hex, Label>,
}

fn git(repo: &std::path::Path, args: &[&str], stdin: Option<Vec<u8>>) -> Vec<u8> {
    let mut child = Command::new("git")
        .arg("-C")
        .arg(repo)
        .args(args)
        .stdin(if stdin.is_some() { Stdio::piped() } else { Stdio::null() })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("git runs");
    let writer = stdin.map(|bytes| {
        let mut pipe = child.stdin.take().unwrap();
        std::thread::spawn(move || pipe.write_all(&bytes).unwrap())
    });
    let out = child.wait_with_output().unwrap();
    if let Some(w) = writer {
        w.join().unwrap();
    }
    assert!(out.status.success(), "git {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

const ZERO: &str = "0000000000000000000000000000000000000000";

struct RepoReplay {
    project: String,
    commits: BTreeMap<Hex, (i64, Vec<Hex>, String)>,
    reachable: BTreeSet<Hex>,
    events: Vec<(EventKey, Option<Hex>)>,
}

fn replay_repo(project: &str, path: &std::path::Path) -> RepoReplay {
    let reachable: BTreeSet<Hex> = String::from_utf8(git(path, &["rev-list", "--all"], None))
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    let log = String::from_utf8(git(path, &["log", "--all", "--format=%H%x09%ct%x09%P%x09%s"], None)).unwrap();
    let mut commits = BTreeMap::new();
    for line in log.lines() {
        let f: Vec<&str> = line.splitn(4, '\t').collect();
        let parents: Vec<Hex> = f[2].split_whitespace().map(String::from).collect();
        commits.insert(f[0].to_string(), (f[1].parse().unwrap(), parents, f[3].to_string()));
    }

    let mut inputs: Vec<(Hex, Option<Hex>)> = Vec::new();
    for (c, (_, parents, _)) in &commits {
        if parents.is_empty() {
            inputs.push((c.clone(), None));
        }
        for p in parents {
            inputs.push((c.clone(), Some(p.clone())));
        }
    }
    let mut stdin = String::new();
    for (c, p) in &inputs {
        match p {
            Some(p) => stdin.push_str(&format!("{c} {p}\n")),
            None => stdin.push_str(&format!("{c}\n")),
        }
    }
    let out = git(
        path,
        &["diff-tree", "--stdin", "-r", "-m", "--root", "--no-renames", "--raw", "--no-abbrev", "--always", "-z"],
        Some(stdin.into_bytes()),
    );

    let mut events = Vec::new();
    let mut tokens = out.split(|&b| b == 0).filter(|t| !t.is_empty());
    let mut block: Option<usize> = None;
    while let Some(tok) = tokens.next() {
        let tok = std::str::from_utf8(tok).unwrap();
        if let Some(record) = tok.strip_prefix(':') {
            let path = String::from_utf8(tokens.next().unwrap().to_vec()).unwrap();
            let f: Vec<&str> = record.split(' ').collect();
            let side = |mode: &str, sha: &str| (mode != "160000" && sha != ZERO).then(|| sha.to_string());
            let old = side(f[0], f[2]);
            let new = side(f[1], f[3]);
            if old == new {
                continue;
            }
            let (commit, parent) = inputs[block.unwrap()].clone();
            events.push(((commit, path, old, new), parent));
        } else {
            let next = block.map_or(0, |b| b + 1);
            assert_eq!(tok, inputs[next].0, "diff-tree header out of step");
            block = Some(next);
        }
    }
    assert_eq!(block.map_or(0, |b| b + 1), inputs.len());
    RepoReplay { project: project.to_string(), commits, reachable, events }
}

impl Oracle {
    pub fn replay(eco: &Ecosystem) -> Self {
        let replays: Vec<RepoReplay> = eco.repos.par_iter().map(|r| replay_repo(&r.name, &r.path)).collect();

        let mut commits: BTreeMap<Hex, OCommit> = BTreeMap::new();
        let mut events: BTreeMap<EventKey, Option<Hex>> = BTreeMap::new();
        for rep in &replays {
            for (id, (time, parents, subject)) in &rep.commits {
                let c = commits.entry(id.clone()).or_insert_with(|| OCommit {
                    time: *time,
                    parents: parents.clone(),
                    subject: subject.clone(),
                    projects: BTreeSet::new(),
                });
                if rep.reachable.contains(id) {
                    c.projects.insert(rep.project.clone());
                }
            }
            for (key, parent) in &rep.events {
                events.entry(key.clone()).or_insert_with(|| parent.clone());
            }
        }

        let mut dossiers: BTreeMap<Hex, ODossier> = BTreeMap::new();
        for (commit, path, old, new) in events.keys() {
            let meta = &commits[commit];
            if let Some(n) = new {
                let d = dossiers.entry(n.clone()).or_default();
                d.creating.insert((commit.clone(), meta.time, path.clone(), old.clone(), meta.projects.clone()));
                d.projects.extend(meta.projects.iter().cloned());
            }
            if let Some(o) = old {
                let d = dossiers.entry(o.clone()).or_default();
                if let Some(n) = new {
                    d.modifying.insert((commit.clone(), meta.time, n.clone()));
                }
                d.projects.extend(meta.projects.iter().cloned());
            }
        }

        let labels = commits
            .iter()
            .map(|(id, c)| (id.clone(), eco.labels.get(&c.subject).cloned().unwrap_or_else(|| panic!("no label for {:?}", c.subject))))
            .collect();
        Self { commits, events, dossiers, labels }
    }

    pub fn classify(&self, blob: &str) -> (bool, bool, bool, BTreeSet<Hex>) {
        match self.dossiers.get(blob) {
            None => (false, false, false, BTreeSet::new()),
            Some(d) => (
                true,
                d.creating.iter().any(|c| c.3.is_some()),
                !d.modifying.is_empty(),
                d.modifying.iter().map(|m| m.2.clone()).collect(),
            ),
        }
    }

    /// `(project, commit, time)` of the earliest creation.
    pub fn origin(&self, blob: &str) -> Option<(String, Hex, i64)> {
        self.dossiers
            .get(blob)?
            .creating
            .iter()
            .map(|c| (c.1, c.0.clone(), c.4.iter().next().unwrap().clone()))
            .min()
            .map(|(t, c, p)| (p, c, t))
    }

    pub fn blob_stats(&self, dataset: &[DatasetLine], residue: u32, modulus: u32) -> [u64; 7] {
        let mut s = [0u64; 7];
        for d in dataset.iter().filter(|d| accepts(&d.blob, residue, modulus)) {
            s[0] += 1;
            let (found, has_old, has_new, versions) = self.classify(&d.blob);
            if !found {
                s[1] += 1;
                continue;
            }
            if has_old {
                s[2] += 1;
            } else {
                s[3] += 1;
                if !has_new {
                    s[4] += 1;
                }
            }
            if has_new {
                s[5] += 1;
            }
            s[6] += versions.len() as u64;
        }
        s
    }

    /// Commit to (dataset blobs replaced, (blob, new) pairs).
    pub fn updates(&self, dataset: &[DatasetLine]) -> BTreeMap<Hex, (BTreeSet<Hex>, BTreeSet<(Hex, Hex)>)> {
        let mut out: BTreeMap<Hex, (BTreeSet<Hex>, BTreeSet<(Hex, Hex)>)> = BTreeMap::new();
        for d in dataset {
            if let Some(dossier) = self.dossiers.get(&d.blob) {
                for (commit, _, new) in &dossier.modifying {
                    let e = out.entry(commit.clone()).or_default();
                    e.0.insert(d.blob.clone());
                    e.1.insert((d.blob.clone(), new.clone()));
                }
            }
        }
        out
    }

    pub fn commit_stats(&self, dataset: &[DatasetLine], residue: u32, modulus: u32) -> [u64; 10] {
        let mut sets: [BTreeSet<String>; 6] = Default::default();
        let mut cves = BTreeSet::new();
        let mut s = [0u64; 10];
        for (commit, (blobs, pairs)) in self.updates(dataset) {
            if !accepts(&commit, residue, modulus) {
                continue;
            }
            let label = &self.labels[&commit];
            let pair_keys: Vec<String> = pairs.iter().map(|(a, b)| format!("{a}>{b}")).collect();
            s[0] += 1;
            sets[0].extend(blobs.iter().cloned());
            sets[1].extend(pair_keys.iter().cloned());
            if label.is_fix {
                s[3] += 1;
                sets[2].extend(blobs.iter().cloned());
                sets[3].extend(pair_keys.iter().cloned());
                if !label.cves.is_empty() {
                    s[6] += 1;
                    sets[4].extend(blobs.iter().cloned());
                    sets[5].extend(pair_keys.iter().cloned());
                    cves.extend(label.cves.iter().cloned());
                }
            }
        }
        s[1] = sets[0].len() as u64;
        s[2] = sets[1].len() as u64;
        s[4] = sets[2].len() as u64;
        s[5] = sets[3].len() as u64;
        s[7] = sets[4].len() as u64;
        s[8] = sets[5].len() as u64;
        s[9] = cves.len() as u64;
        s
    }

    pub fn cve_exposure(&self, dataset: &[DatasetLine]) -> [u64; 3] {
        let mut commits = 0;
        let mut blobs = BTreeSet::new();
        let mut cves = BTreeSet::new();
        for (commit, (bs, _)) in self.updates(dataset) {
            let label = &self.labels[&commit];
            if !label.cves.is_empty() {
                commits += 1;
                blobs.extend(bs);
                cves.extend(label.cves.iter().cloned());
            }
        }
        [commits, blobs.len() as u64, cves.len() as u64]
    }

    /// Blob to (replacement, via commit, reason, cves).
    pub fn recommendations(&self, dataset: &[DatasetLine]) -> BTreeMap<Hex, (Hex, Hex, &'static str, BTreeSet<String>)> {
        let mut out = BTreeMap::new();
        for d in dataset {
            let Some(dossier) = self.dossiers.get(&d.blob) else { continue };
            let Some(latest_time) = dossier.modifying.iter().map(|m| m.1).max() else { continue };
            let (commit, _, new) = dossier.modifying.iter().filter(|m| m.1 == latest_time).min().unwrap();
            let mut cves = BTreeSet::new();
            let mut fix = false;
            for m in &dossier.modifying {
                let l = &self.labels[&m.0];
                fix |= l.is_fix;
                cves.extend(l.cves.iter().cloned());
            }
            let reason = if !cves.is_empty() {
                "cve"
            } else if fix {
                "fix"
            } else {
                "newer"
            };
            out.insert(d.blob.clone(), (new.clone(), commit.clone(), reason, cves));
        }
        out
    }

    /// `[total, unresolved, not_reused, same_origin, diff_origin]`
    pub fn reuse(&self, dataset: &[DatasetLine]) -> [u64; 5] {
        let mut s = [0u64; 5];
        for d in dataset {
            s[0] += 1;
            match (self.dossiers.get(&d.blob), self.origin(&d.blob)) {
                (Some(dossier), Some((origin, _, _))) => {
                    if dossier.projects.len() < 2 {
                        s[2] += 1;
                    } else if canonical(&origin) == canonical(&d.project) {
                        s[3] += 1;
                    } else {
                        s[4] += 1;
                    }
                }
                _ => s[1] += 1,
            }
        }
        s
    }

    /// Blob to (claimed class, origin project, origin class, category, risk).
    pub fn findings(
        &self,
        dataset: &[DatasetLine],
        licenses: &BTreeMap<String, Option<String>>,
    ) -> BTreeMap<Hex, (String, String, String, String, String)> {
        let mut out = BTreeMap::new();
        for d in dataset {
            let (Some(dossier), Some((origin, _, _))) = (self.dossiers.get(&d.blob), self.origin(&d.blob)) else {
                continue;
            };
            if dossier.projects.len() < 2 || canonical(&origin) == canonical(&d.project) {
                continue;
            }
            let claimed = class_of(d.license.as_deref());
            let origin_class = match licenses.get(&origin) {
                Some(l) => class_of(l.as_deref()),
                None => "Unknown",
            };
            let (category, risk) = match (claimed, origin_class) {
                ("NoLicense", "NoLicense") => ("Diff_SameLicense_NoneNone", "None"),
                ("Permissive", "Permissive") => ("Diff_SameLicense_PermPerm", "None"),
                ("Permissive", "NoLicense") => ("Diff_PermToNone", "Concern"),
                ("NoLicense", "Permissive") => ("Diff_NoneToPerm", "Benign"),
                ("NoLicense", "Restrictive") => ("Diff_NoneToRestrictive", "High"),
                ("Permissive", "Restrictive") => ("Diff_PermToRestrictive", "High"),
                _ => ("Diff_Other", "Concern"),
            };
            out.insert(
                d.blob.clone(),
                (claimed.to_string(), origin, origin_class.to_string(), category.to_string(), risk.to_string()),
            );
        }
        out
    }
}

pub fn accepts(hex: &str, residue: u32, modulus: u32) -> bool {
    u32::from_str_radix(&hex[..2], 16).unwrap() % modulus == residue
}

/// The generator's licenses, classified by hand.
pub fn class_of(license: Option<&str>) -> &'static str {
    match license {
        None => "NoLicense",
        Some("MIT" | "Apache-2.0" | "BSD-3-Clause" | "ISC") => "Permissive",
        Some(l) if l.starts_with("GPL-") || l.starts_with("AGPL-") || l.starts_with("LGPL-") => "Restrictive",
        Some(_) => "Unknown",
    }
}

pub fn canonical(project: &str) -> String {
    let mut s = match project.split_once("://") {
        Some((_, rest)) => rest.to_string(),
        None => project.to_string(),
    };
    if let Some(i) = s.find('/') {
        s = format!("{}{}", s[..i].to_lowercase(), &s[i..]);
    }
    while s.ends_with('/') || s.ends_with(".git") {
        s.truncate(if s.ends_with('/') { s.len() - 1 } else { s.len() - 4 });
    }
    s
}
