//! simulate → label → dedup → merge → split → export.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cpsbed_core::attack::AttackSpec;
use cpsbed_core::dataset::{
    balance_report, deduplicate, emit_records, expand, merge_logs, split_boundary, split_dataset, SplitBoundary, View,
};
use cpsbed_core::engine::{simulate, SimOutput};
use cpsbed_core::fmt::g9;
use cpsbed_core::scenario::ScenarioConfig;

use crate::config;
use crate::format::{capture_line, host_line, write_lines, write_physical};
use crate::manifest::{sha256_hex, Balance, DedupStats, Manifest, ModeChange, OutcomeSummary, MANIFEST, TRUTH};

/// A generated dataset held in memory.
pub struct Dataset {
    pub sim: SimOutput,
    pub train: View,
    pub test: View,
    pub split: SplitBoundary,
    pub manifest: Manifest,
    /// File contents keyed by relative path, manifest included.
    pub files: BTreeMap<String, Vec<u8>>,
}

fn released(ts: f64) -> f64 {
    g9(ts).parse().expect("g9 output parses")
}

fn view_files(name: &str, v: &View, files: &mut BTreeMap<String, Vec<u8>>) -> Result<()> {
    let mut buf = Vec::new();
    write_physical(&mut buf, &v.physical, false)?;
    files.insert(format!("{}/physical.csv", name), buf);
    // ties that only appear at file precision are ordered as a reader sees them
    let mut capture = v.capture.clone();
    capture.sort_by(|a, b| {
        released(a.frame.ts)
            .total_cmp(&released(b.frame.ts))
            .then(a.capture_node.cmp(&b.capture_node))
            .then(a.frame.seq.cmp(&b.frame.seq))
    });
    let mut buf = Vec::new();
    write_lines(&mut buf, &capture, capture_line)?;
    files.insert(format!("{}/capture.jsonl", name), buf);
    let mut buf = Vec::new();
    write_lines(&mut buf, &v.host, host_line)?;
    files.insert(format!("{}/host.jsonl", name), buf);
    Ok(())
}

fn executed_ids(sim: &SimOutput) -> Vec<u32> {
    let mut ids = BTreeSet::new();
    ids.extend(sim.records.iter().map(|r| r.label.attack_id));
    ids.extend(sim.captures.iter().map(|c| c.frame.attack_id));
    ids.extend(sim.host.iter().map(|e| e.attack_id));
    ids.remove(&0);
    ids.into_iter().collect()
}

pub fn generate(cfg: &ScenarioConfig) -> Result<Dataset> {
    if let Err(errs) = cfg.validate() {
        bail!("{}", config::ConfigError::Invalid(errs));
    }
    let attacks: Vec<AttackSpec> = cfg.resolve_attacks()?;
    let split = split_boundary(cfg.duration, cfg.split.train_fraction, &attacks)?;
    let sim = simulate(cfg, &attacks)?;
    let known: BTreeSet<u32> = attacks.iter().map(|a| a.id).collect();
    emit_records(&sim.records, &known)?;

    let period = cfg.controller.sample_period;
    let dedup = deduplicate(&sim.records, cfg.dedup_eps, period)?;
    let back = expand(&dedup);
    if back.len() != sim.records.len() || back.iter().zip(&sim.records).any(|(a, b)| !a.identical(b)) {
        bail!("deduplication is not invertible on this run");
    }
    merge_logs(&sim.records, &sim.captures, &sim.host, cfg.duration)?;
    let (train, test) = split_dataset(&sim.records, &sim.captures, &sim.host, &attacks, &split)?;

    let mut files = BTreeMap::new();
    view_files("train", &train, &mut files)?;
    view_files("test", &test, &mut files)?;
    let mut truth = Vec::new();
    write_physical(&mut truth, &sim.records, true)?;
    files.insert(TRUTH.to_string(), truth);

    let text = config::emit(cfg);
    let manifest = Manifest {
        config_hash: sha256_hex(text.as_bytes()),
        seed: cfg.seed,
        config: text,
        sample_period: period,
        attacks: attacks.clone(),
        executed_ids: executed_ids(&sim),
        zero_day_ids: attacks.iter().filter(|a| a.is_zero_day()).map(|a| a.id).collect(),
        mode_schedule: sim.mode_schedule.iter().map(|&(t, mode)| ModeChange { t, mode }).collect(),
        split,
        balance: Balance {
            all: balance_report(&sim.records, period),
            train: balance_report(&train.physical, period),
            test: balance_report(&test.physical, period),
        },
        dedup: DedupStats {
            eps: cfg.dedup_eps,
            records: dedup.len(),
            runs: dedup.runs.len(),
            exceptions: dedup.exceptions.len(),
        },
        outcome: OutcomeSummary::from(&sim.outcome),
        files: files.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    files.insert(MANIFEST.to_string(), json);
    Ok(Dataset {
        sim,
        train,
        test,
        split,
        manifest,
        files,
    })
}

fn staging_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    out.with_file_name(name)
}

/// Generate and write a dataset directory. Output is staged next to `out`
/// and only moved into place once complete.
pub fn run_scenario(cfg: &ScenarioConfig, out: &Path) -> Result<Manifest> {
    if out.exists() {
        let empty = out.read_dir().map(|mut d| d.next().is_none()).unwrap_or(false);
        if !empty && !out.join(MANIFEST).is_file() {
            bail!("{} exists and is not a dataset directory; refusing to overwrite", out.display());
        }
    }
    let ds = generate(cfg)?;
    let stage = staging_path(out);
    if stage.exists() {
        fs::remove_dir_all(&stage).with_context(|| format!("removing stale {}", stage.display()))?;
    }
    let written = (|| -> Result<()> {
        for (rel, bytes) in &ds.files {
            let p = stage.join(rel);
            fs::create_dir_all(p.parent().expect("relative paths have a parent"))?;
            fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        }
        if out.exists() {
            fs::remove_dir_all(out)?;
        }
        fs::rename(&stage, out)?;
        Ok(())
    })();
    if let Err(e) = written {
        let _ = fs::remove_dir_all(&stage);
        return Err(e);
    }
    Ok(ds.manifest)
}
