//! Quality checks over a dataset directory.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use cpsbed_core::dataset::{balance_report, deduplicate, expand, is_monotone, merge_logs, BalanceStats, LabeledRecord, View};
use cpsbed_core::net::CaptureRecord;
use cpsbed_core::scenario::ScenarioConfig;

use crate::config;
use crate::format::{read_capture, read_host, read_physical};
use crate::manifest::{data_files, sha256_hex, Manifest, MANIFEST, TRUTH, VIEWS};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub checks: Vec<Check>,
    pub balance: Option<[BalanceStats; 3]>,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    pub fn failed(&self, name: &str) -> bool {
        self.checks.iter().any(|c| c.name == name && !c.ok)
    }

    fn push(&mut self, name: &'static str, result: std::result::Result<(), String>) {
        let (ok, detail) = match result {
            Ok(()) => (true, String::new()),
            Err(e) => (false, e),
        };
        self.checks.push(Check { name, ok, detail });
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            if c.ok {
                let _ = writeln!(s, "PASS {}", c.name);
            } else {
                let _ = writeln!(s, "FAIL {}: {}", c.name, c.detail);
            }
        }
        if let Some(b) = &self.balance {
            for (name, stats) in ["all", "train", "test"].iter().zip(b) {
                s.push_str(&render_balance(name, stats));
            }
        }
        s
    }
}

pub fn render_balance(name: &str, b: &BalanceStats) -> String {
    let mut s = format!(
        "balance {}: {} records, attack fraction {:.4}, fault records {}\n",
        name, b.records, b.attack_fraction, b.fault_records
    );
    for (k, n) in &b.per_label {
        let _ = writeln!(s, "  {:<12} {}", k, n);
    }
    for (id, m) in &b.attack_minutes {
        let _ = writeln!(s, "  attack {} minutes {:.3}", id, m);
    }
    s
}

/// Parsed contents of a dataset directory.
pub struct Loaded {
    pub manifest: Manifest,
    pub config: ScenarioConfig,
    pub train: View,
    pub test: View,
    pub truth: Vec<LabeledRecord>,
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let p = dir.join(MANIFEST);
    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
}

fn check_layout(dir: &Path) -> Result<()> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let mut missing = Vec::new();
    for rel in data_files().iter().map(String::as_str).chain([MANIFEST]) {
        if !dir.join(rel).is_file() {
            missing.push(rel.to_string());
        }
    }
    if !missing.is_empty() {
        bail!("layout mismatch: missing {}", missing.join(", "));
    }
    Ok(())
}

fn read_view(dir: &Path, name: &str) -> Result<View> {
    let d = dir.join(name);
    let open = |f: &str| -> Result<fs::File> {
        fs::File::open(d.join(f)).with_context(|| format!("opening {}/{}", name, f))
    };
    Ok(View {
        physical: read_physical(open("physical.csv")?).with_context(|| format!("{}/physical.csv", name))?,
        capture: read_capture(BufReader::new(open("capture.jsonl")?)).with_context(|| format!("{}/capture.jsonl", name))?,
        host: read_host(BufReader::new(open("host.jsonl")?)).with_context(|| format!("{}/host.jsonl", name))?,
    })
}

pub fn load(dir: &Path) -> Result<Loaded> {
    check_layout(dir)?;
    let manifest = read_manifest(dir)?;
    let config = config::parse_str(&manifest.config).map_err(|e| anyhow!("embedded config: {}", e))?;
    let truth = read_physical(fs::File::open(dir.join(TRUTH))?).context(TRUTH)?;
    Ok(Loaded {
        train: read_view(dir, "train")?,
        test: read_view(dir, "test")?,
        manifest,
        config,
        truth,
    })
}

fn first_unsorted<T>(items: &[T], key: impl Fn(&T) -> f64) -> Option<usize> {
    items.windows(2).position(|w| key(&w[1]) < key(&w[0])).map(|i| i + 1)
}

fn capture_order(a: &CaptureRecord, b: &CaptureRecord) -> std::cmp::Ordering {
    a.frame
        .ts
        .total_cmp(&b.frame.ts)
        .then(a.capture_node.cmp(&b.capture_node))
        .then(a.frame.seq.cmp(&b.frame.seq))
}

fn check_monotone(name: &str, v: &View) -> std::result::Result<(), String> {
    if let Some(i) = v.physical.windows(2).position(|w| !(w[1].t > w[0].t)) {
        return Err(format!("{}/physical.csv line {}: t not increasing", name, i + 3));
    }
    if let Some(i) = v.capture.windows(2).position(|w| capture_order(&w[0], &w[1]).is_gt()) {
        return Err(format!("{}/capture.jsonl line {}: out of order", name, i + 2));
    }
    if let Some(i) = first_unsorted(&v.host, |e| e.ts) {
        return Err(format!("{}/host.jsonl line {}: ts decreases", name, i + 1));
    }
    Ok(())
}

fn check_labels(l: &Loaded) -> std::result::Result<(), String> {
    let executed: BTreeSet<u32> = l.manifest.executed_ids.iter().copied().collect();
    let mut used = BTreeSet::new();
    for (name, v) in [("train", &l.train), ("test", &l.test)] {
        for (i, r) in v.physical.iter().enumerate() {
            if r.label.attack_id != 0 && !executed.contains(&r.label.attack_id) {
                return Err(format!(
                    "{}/physical.csv line {}: attack_id {} is not in the manifest",
                    name,
                    i + 2,
                    r.label.attack_id
                ));
            }
        }
        for (i, c) in v.capture.iter().enumerate() {
            if c.frame.attack_id != 0 && !executed.contains(&c.frame.attack_id) {
                return Err(format!("{}/capture.jsonl line {}: unknown attack_id", name, i + 1));
            }
        }
        for (i, e) in v.host.iter().enumerate() {
            if e.attack_id != 0 && !executed.contains(&e.attack_id) {
                return Err(format!("{}/host.jsonl line {}: unknown attack_id", name, i + 1));
            }
        }
        used.extend(v.attack_ids());
    }
    if used != executed {
        return Err(format!("attack ids in files {:?} differ from the manifest {:?}", used, executed));
    }
    Ok(())
}

fn released(r: &LabeledRecord) -> LabeledRecord {
    LabeledRecord { y_true: r.y, ..*r }
}

fn check_split(l: &Loaded) -> std::result::Result<(), String> {
    let zero: BTreeSet<u32> = l.manifest.zero_day_ids.iter().copied().collect();
    let leaked: Vec<u32> = l.train.attack_ids().intersection(&zero).copied().collect();
    if !leaked.is_empty() {
        return Err(format!("train view contains zero-day ids {:?}", leaked));
    }
    let b = l.manifest.split.boundary;
    if let Some(r) = l.train.physical.iter().find(|r| r.t >= b) {
        return Err(format!("train record at t = {} lies past the boundary {}", r.t, b));
    }
    if let Some(r) = l.test.physical.iter().find(|r| r.t < b && !zero.contains(&r.label.attack_id)) {
        return Err(format!("test record at t = {} lies before the boundary {}", r.t, b));
    }
    let mut joined: Vec<LabeledRecord> = l.train.physical.iter().chain(&l.test.physical).copied().collect();
    joined.sort_by(|a, b| a.t.total_cmp(&b.t));
    let truth: Vec<LabeledRecord> = l.truth.iter().map(released).collect();
    if joined.len() != truth.len() {
        return Err(format!("train + test hold {} records, truth.csv holds {}", joined.len(), truth.len()));
    }
    if let Some(i) = joined.iter().zip(&truth).position(|(a, b)| !released(a).identical(b)) {
        return Err(format!("record {} of train + test does not match truth.csv line {}", i, i + 2));
    }
    Ok(())
}

fn check_balance(l: &Loaded) -> std::result::Result<[BalanceStats; 3], String> {
    let p = l.manifest.sample_period;
    let got = [
        balance_report(&l.truth, p),
        balance_report(&l.train.physical, p),
        balance_report(&l.test.physical, p),
    ];
    let want = [&l.manifest.balance.all, &l.manifest.balance.train, &l.manifest.balance.test];
    for ((name, g), w) in ["all", "train", "test"].iter().zip(&got).zip(want) {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
        let minutes_ok = g.attack_minutes.len() == w.attack_minutes.len()
            && g.attack_minutes.iter().zip(&w.attack_minutes).all(|(a, b)| a.0 == b.0 && close(*a.1, *b.1));
        if g.records != w.records
            || g.per_label != w.per_label
            || g.attack_records != w.attack_records
            || g.fault_records != w.fault_records
            || !close(g.attack_fraction, w.attack_fraction)
            || !minutes_ok
        {
            return Err(format!("{} balance recomputed from files differs from the manifest", name));
        }
    }
    Ok(got)
}

fn check_dedup(l: &Loaded) -> std::result::Result<(), String> {
    let d = deduplicate(&l.truth, l.manifest.dedup.eps, l.manifest.sample_period).map_err(|e| e.to_string())?;
    let back = expand(&d);
    if back.len() != l.truth.len() {
        return Err("expansion changes the record count".into());
    }
    if let Some(i) = back.iter().zip(&l.truth).position(|(a, b)| !a.identical(b)) {
        return Err(format!("expansion differs at truth.csv line {}", i + 2));
    }
    Ok(())
}

fn check_timeline(l: &Loaded) -> std::result::Result<(), String> {
    let end = l.config.duration;
    for (name, v) in [("train", &l.train), ("test", &l.test)] {
        let t = merge_logs(&v.physical, &v.capture, &v.host, end).map_err(|e| format!("{}: {}", name, e))?;
        if !is_monotone(&t) {
            return Err(format!("{}: merged timeline is not monotone", name));
        }
    }
    Ok(())
}

/// Run every check. Only a layout mismatch is an error; everything else is
/// reported as a failed check.
pub fn validate_dir(dir: &Path) -> Result<Report> {
    check_layout(dir)?;
    let mut rep = Report::default();
    let manifest = read_manifest(dir)?;

    let mut bad = Vec::new();
    for rel in data_files() {
        let bytes = fs::read(dir.join(&rel))?;
        match manifest.files.get(&rel) {
            Some(h) if *h == sha256_hex(&bytes) => {}
            Some(_) => bad.push(format!("{} checksum mismatch", rel)),
            None => bad.push(format!("{} missing from the manifest", rel)),
        }
    }
    rep.push("checksums", if bad.is_empty() { Ok(()) } else { Err(bad.join("; ")) });
    rep.push(
        "config",
        match config::parse_str(&manifest.config) {
            Ok(_) if sha256_hex(manifest.config.as_bytes()) == manifest.config_hash => Ok(()),
            Ok(_) => Err("config hash mismatch".into()),
            Err(e) => Err(e.to_string()),
        },
    );

    let loaded = match load(dir) {
        Ok(l) => l,
        Err(e) => {
            rep.push("labels", Err(format!("{:#}", e)));
            return Ok(rep);
        }
    };
    rep.push("labels", check_labels(&loaded));
    let mono = VIEWS
        .iter()
        .zip([&loaded.train, &loaded.test])
        .try_for_each(|(n, v)| check_monotone(n, v));
    rep.push("monotonicity", mono);
    rep.push("timeline", check_timeline(&loaded));
    rep.push("split", check_split(&loaded));
    rep.push("dedup", check_dedup(&loaded));
    match check_balance(&loaded) {
        Ok(b) => {
            rep.push("balance", Ok(()));
            rep.balance = Some(b);
        }
        Err(e) => rep.push("balance", Err(e)),
    }
    Ok(rep)
}
