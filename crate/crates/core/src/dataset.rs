//! Labeled physical records, run-length deduplication, timeline merging,
//! train/test splitting and class-balance statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::attack::AttackSpec;
use crate::error::{Error, Result};
use crate::host::HostEvent;
use crate::net::{CaptureRecord, NodeId};
use crate::plant::SystemMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label {
    pub attack_id: u32,
    pub mode: SystemMode,
}

impl Label {
    pub const NORMAL: Label = Label {
        attack_id: 0,
        mode: SystemMode::Normal,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledRecord {
    pub t: f64,
    /// Actuator command as delivered over the interval ending at `t`.
    pub u: f64,
    /// Reported sensor value (what the DM nodes were shown).
    pub y: f64,
    /// Ground truth, released only in the sidecar.
    pub y_true: f64,
    pub d: f64,
    pub auto_flag: bool,
    pub label: Label,
}

impl LabeledRecord {
    fn bits(&self) -> [u64; 5] {
        [
            self.t.to_bits(),
            self.u.to_bits(),
            self.y.to_bits(),
            self.y_true.to_bits(),
            self.d.to_bits(),
        ]
    }

    /// Bitwise equality, so that `NaN` and signed zeros round-trip too.
    pub fn identical(&self, other: &LabeledRecord) -> bool {
        self.bits() == other.bits() && self.auto_flag == other.auto_flag && self.label == other.label
    }
}

/// Label of a sample at `t`: the attack whose window covers `t` (0 when
/// none) and the plant mode.
pub fn label_at(t: f64, attacks: &[AttackSpec], mode: SystemMode) -> Label {
    let attack_id = attacks
        .iter()
        .filter(|a| a.window.contains(t))
        .map(|a| a.id)
        .next()
        .unwrap_or(0);
    Label { attack_id, mode }
}

/// Check label completeness and ordering before records are emitted.
pub fn emit_records(records: &[LabeledRecord], known_ids: &BTreeSet<u32>) -> Result<()> {
    check_sorted(records)?;
    for r in records {
        if r.label.attack_id != 0 && !known_ids.contains(&r.label.attack_id) {
            return Err(Error::MissingLabel(r.t));
        }
    }
    Ok(())
}

fn check_sorted(records: &[LabeledRecord]) -> Result<()> {
    for (i, w) in records.windows(2).enumerate() {
        if !(w[0].t < w[1].t) {
            return Err(Error::Unsorted(i + 1));
        }
    }
    Ok(())
}

pub const EPS_DUP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    /// First record of the run.
    pub first: LabeledRecord,
    pub len: usize,
}

/// Compressed physical records plus what is needed to expand them exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Deduped {
    pub runs: Vec<Run>,
    /// Sample period used to regenerate timestamps inside a run.
    pub period: f64,
    /// Records that regeneration would not reproduce bit for bit, by index.
    pub exceptions: Vec<(usize, LabeledRecord)>,
}

impl Deduped {
    pub fn len(&self) -> usize {
        self.runs.iter().map(|r| r.len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }
}

fn same_key(a: &LabeledRecord, b: &LabeledRecord, eps: f64) -> bool {
    let close = |x: f64, y: f64| x.to_bits() == y.to_bits() || libm::fabs(x - y) <= eps;
    a.label == b.label && a.auto_flag == b.auto_flag && close(a.u, b.u) && close(a.y, b.y) && close(a.d, b.d)
}

fn regenerate(first: &LabeledRecord, j: usize, period: f64) -> LabeledRecord {
    LabeledRecord {
        t: first.t + j as f64 * period,
        ..*first
    }
}

/// Collapse maximal runs whose (u, y, d, auto_flag, label) stay within `eps`
/// of the run's first record.
pub fn deduplicate(records: &[LabeledRecord], eps: f64, period: f64) -> Result<Deduped> {
    check_sorted(records)?;
    let mut runs: Vec<Run> = Vec::new();
    let mut exceptions = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match runs.last_mut() {
            Some(run) if same_key(&run.first, r, eps) => {
                if !regenerate(&run.first, run.len, period).identical(r) {
                    exceptions.push((i, *r));
                }
                run.len += 1;
            }
            _ => runs.push(Run { first: *r, len: 1 }),
        }
    }
    Ok(Deduped {
        runs,
        period,
        exceptions,
    })
}

pub fn expand(d: &Deduped) -> Vec<LabeledRecord> {
    let mut out = Vec::with_capacity(d.len());
    for run in &d.runs {
        for j in 0..run.len {
            out.push(regenerate(&run.first, j, d.period));
        }
    }
    for (i, r) in &d.exceptions {
        out[*i] = *r;
    }
    out
}

/// One entry of the unified timeline.
#[derive(Debug, Clone, PartialEq)]
pub enum TimelineEntry {
    Host(HostEvent),
    Net(CaptureRecord),
    Phys(LabeledRecord),
}

impl TimelineEntry {
    pub fn ts(&self) -> f64 {
        match self {
            TimelineEntry::Host(e) => e.ts,
            TimelineEntry::Net(c) => c.frame.ts,
            TimelineEntry::Phys(r) => r.t,
        }
    }

    fn source_rank(&self) -> u8 {
        match self {
            TimelineEntry::Host(_) => 0,
            TimelineEntry::Net(_) => 1,
            TimelineEntry::Phys(_) => 2,
        }
    }

    fn node(&self) -> NodeId {
        match self {
            TimelineEntry::Host(e) => e.node,
            TimelineEntry::Net(c) => c.capture_node,
            TimelineEntry::Phys(_) => NodeId::Controller,
        }
    }

    fn seq(&self) -> u64 {
        match self {
            TimelineEntry::Host(e) => e.seq,
            TimelineEntry::Net(c) => c.frame.seq,
            TimelineEntry::Phys(_) => 0,
        }
    }

    pub fn attack_id(&self) -> u32 {
        match self {
            TimelineEntry::Host(e) => e.attack_id,
            TimelineEntry::Net(c) => c.frame.attack_id,
            TimelineEntry::Phys(r) => r.label.attack_id,
        }
    }

    pub fn timeline_cmp(&self, other: &TimelineEntry) -> Ordering {
        self.ts()
            .total_cmp(&other.ts())
            .then(self.source_rank().cmp(&other.source_rank()))
            .then(self.node().cmp(&other.node()))
            .then(self.seq().cmp(&other.seq()))
    }
}

/// Merge the three sources into one stream ordered by
/// (ts, host < net < phys, node, seq). Every source must be on the scenario
/// clock: timestamps finite and inside `[0, end]`.
pub fn merge_logs(
    physical: &[LabeledRecord],
    capture: &[CaptureRecord],
    host: &[HostEvent],
    end: f64,
) -> Result<Vec<TimelineEntry>> {
    let mut out: Vec<TimelineEntry> = Vec::with_capacity(physical.len() + capture.len() + host.len());
    out.extend(host.iter().cloned().map(TimelineEntry::Host));
    out.extend(capture.iter().cloned().map(TimelineEntry::Net));
    out.extend(physical.iter().copied().map(TimelineEntry::Phys));
    for e in &out {
        let ts = e.ts();
        if !ts.is_finite() || ts < 0.0 || ts > end + 1e-9 {
            return Err(Error::Synchronization(alloc::format!(
                "timestamp {} outside the scenario clock [0, {}]",
                crate::fmt::g9(ts),
                crate::fmt::g9(end)
            )));
        }
    }
    out.sort_by(|a, b| a.timeline_cmp(b));
    Ok(out)
}

pub fn is_monotone(timeline: &[TimelineEntry]) -> bool {
    timeline.windows(2).all(|w| w[0].timeline_cmp(&w[1]) != Ordering::Greater)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitBoundary {
    /// Everything before this time (and not zero-day) is training data.
    pub boundary: f64,
    pub duration: f64,
}

/// Time boundary for a `train_fraction` split, moved forward past any
/// non-zero-day attack it would cut in two.
pub fn split_boundary(duration: f64, train_fraction: f64, attacks: &[AttackSpec]) -> Result<SplitBoundary> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::Config("train_fraction must lie in (0, 1]".into()));
    }
    let mut boundary = duration * train_fraction;
    let mut moved = true;
    while moved {
        moved = false;
        for a in attacks.iter().filter(|a| !a.is_zero_day()) {
            if a.first_activity() < boundary && a.window.end >= boundary {
                boundary = a.window.end + 1e-6;
                moved = true;
            }
        }
    }
    for a in attacks.iter().filter(|a| a.is_zero_day()) {
        if a.window.end < boundary {
            return Err(Error::Planning(alloc::format!(
                "zero-day attack {} lies entirely inside the training range [0, {})",
                a.id,
                crate::fmt::g9(boundary)
            )));
        }
    }
    Ok(SplitBoundary { boundary, duration })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct View {
    pub physical: Vec<LabeledRecord>,
    pub capture: Vec<CaptureRecord>,
    pub host: Vec<HostEvent>,
}

impl View {
    pub fn attack_ids(&self) -> BTreeSet<u32> {
        let mut ids = BTreeSet::new();
        ids.extend(self.physical.iter().map(|r| r.label.attack_id));
        ids.extend(self.capture.iter().map(|c| c.frame.attack_id));
        ids.extend(self.host.iter().map(|e| e.attack_id));
        ids.remove(&0);
        ids
    }
}

/// Partition by time, sending every item labeled with a zero-day id to test.
pub fn split_dataset(
    physical: &[LabeledRecord],
    capture: &[CaptureRecord],
    host: &[HostEvent],
    attacks: &[AttackSpec],
    split: &SplitBoundary,
) -> Result<(View, View)> {
    for a in attacks.iter().filter(|a| a.is_zero_day()) {
        if a.window.end < split.boundary {
            return Err(Error::Planning(alloc::format!(
                "zero-day attack {} lies entirely inside the training range",
                a.id
            )));
        }
    }
    let zero: BTreeSet<u32> = attacks.iter().filter(|a| a.is_zero_day()).map(|a| a.id).collect();
    let to_test = |ts: f64, id: u32| ts >= split.boundary || zero.contains(&id);
    let mut train = View::default();
    let mut test = View::default();
    for r in physical {
        if to_test(r.t, r.label.attack_id) { &mut test } else { &mut train }.physical.push(*r);
    }
    for c in capture {
        if to_test(c.frame.ts, c.frame.attack_id) { &mut test } else { &mut train }.capture.push(c.clone());
    }
    for e in host {
        if to_test(e.ts, e.attack_id) { &mut test } else { &mut train }.host.push(e.clone());
    }
    Ok((train, test))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BalanceStats {
    pub records: usize,
    /// Record counts keyed by "attack_id/MODE".
    pub per_label: BTreeMap<String, usize>,
    pub attack_records: usize,
    pub attack_fraction: f64,
    /// Minutes of records per attack id (count × period).
    pub attack_minutes: BTreeMap<u32, f64>,
    pub fault_records: usize,
}

pub fn label_key(l: &Label) -> String {
    alloc::format!("{}/{}", l.attack_id, l.mode.as_str())
}

pub fn balance_report(records: &[LabeledRecord], period: f64) -> BalanceStats {
    let mut s = BalanceStats {
        records: records.len(),
        ..BalanceStats::default()
    };
    for r in records {
        *s.per_label.entry(label_key(&r.label)).or_insert(0) += 1;
        if r.label.attack_id != 0 {
            s.attack_records += 1;
            *s.attack_minutes.entry(r.label.attack_id).or_insert(0.0) += period;
        }
        if r.label.mode != SystemMode::Normal {
            s.fault_records += 1;
        }
    }
    s.attack_fraction = if records.is_empty() {
        0.0
    } else {
        s.attack_records as f64 / records.len() as f64
    };
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{Action, AttackKind, InjectionPoint, Waveform, Window};
    use crate::host::HostEventKind;
    use alloc::vec;

    fn rec(t: f64, y: f64, id: u32) -> LabeledRecord {
        LabeledRecord {
            t,
            u: 1.0,
            y,
            y_true: y,
            d: 0.925,
            auto_flag: true,
            label: Label {
                attack_id: id,
                mode: SystemMode::Normal,
            },
        }
    }

    fn series(n: usize) -> Vec<LabeledRecord> {
        (0..n).map(|i| rec(i as f64 * 0.1, 0.4625, 0)).collect()
    }

    fn attack(id: u32, start: f64, end: f64, zero_day: bool) -> AttackSpec {
        AttackSpec {
            id,
            kind: if zero_day { AttackKind::ZeroDayVariant } else { AttackKind::IntegritySca },
            injection_point: InjectionPoint::SensorToController,
            action: Action::Modify,
            waveform: Waveform::step(0.1),
            window: Window::new(start, end),
            vector: Vec::new(),
            dm_targets: Vec::new(),
            dos_rate: 0.0,
            zero_day,
            report_policy: None,
            log_wipe: false,
        }
    }

    #[test]
    fn steady_run_collapses() {
        let r = series(100);
        let d = deduplicate(&r, EPS_DUP, 0.1).unwrap();
        assert_eq!(d.runs.len(), 1);
        assert_eq!(d.runs[0].len, 100);
        assert_eq!(expand(&d).len(), 100);
        assert!(expand(&d).iter().zip(&r).all(|(a, b)| a.identical(b)));
    }

    #[test]
    fn tolerance_boundary() {
        let r = vec![rec(0.0, 0.5, 0), rec(0.1, 0.5 + 2.0 * EPS_DUP, 0)];
        assert_eq!(deduplicate(&r, EPS_DUP, 0.1).unwrap().runs.len(), 2);
    }

    #[test]
    fn never_merges_across_labels() {
        let r = vec![rec(0.0, 0.5, 0), rec(0.1, 0.5, 3)];
        assert_eq!(deduplicate(&r, EPS_DUP, 0.1).unwrap().runs.len(), 2);
    }

    #[test]
    fn unsorted_rejected() {
        let r = vec![rec(0.1, 0.5, 0), rec(0.0, 0.5, 0)];
        assert_eq!(deduplicate(&r, EPS_DUP, 0.1), Err(Error::Unsorted(1)));
    }

    #[test]
    fn window_labeling() {
        let a = [attack(5, 2.0, 3.0, false)];
        let labels: Vec<u32> = (0..50).map(|i| label_at(i as f64 * 0.1, &a, SystemMode::Normal).attack_id).collect();
        let tagged: Vec<usize> = labels.iter().enumerate().filter(|(_, id)| **id == 5).map(|(i, _)| i).collect();
        assert_eq!(tagged, (20..=30).collect::<Vec<_>>());
    }

    #[test]
    fn split_sends_zero_day_to_test() {
        let attacks = [attack(1, 1.0, 2.0, false), attack(9, 8.0, 9.0, true)];
        let sb = split_boundary(10.0, 0.7, &attacks).unwrap();
        let mut r = series(100);
        for x in r.iter_mut().filter(|x| x.t >= 8.0 && x.t <= 9.0) {
            x.label.attack_id = 9;
        }
        let host = vec![HostEvent::new(6.5, NodeId::Hmi, HostEventKind::FileXfer, "x", "f".into()).with_attack(9)];
        let (train, test) = split_dataset(&r, &[], &host, &attacks, &sb).unwrap();
        assert!(!train.attack_ids().contains(&9));
        assert!(test.attack_ids().contains(&9));
        assert_eq!(train.physical.len() + test.physical.len(), 100);
        assert_eq!(test.host.len(), 1);
    }

    #[test]
    fn zero_day_in_train_range_rejected() {
        let attacks = [attack(9, 1.0, 2.0, true)];
        assert!(matches!(split_boundary(10.0, 0.7, &attacks), Err(Error::Planning(_))));
    }

    #[test]
    fn boundary_moves_past_straddling_attack() {
        let attacks = [attack(1, 6.5, 7.5, false)];
        let sb = split_boundary(10.0, 0.7, &attacks).unwrap();
        assert!(sb.boundary > 7.5);
    }

    #[test]
    fn attack_fraction() {
        let mut r = series(100);
        for x in r.iter_mut().take(30).skip(20) {
            x.label.attack_id = 1;
        }
        let s = balance_report(&r, 0.1);
        assert!((s.attack_fraction - 0.1).abs() < 0.011);
        assert!((s.attack_minutes[&1] - 1.0).abs() < 1e-9);
        assert_eq!(balance_report(&series(10), 0.1).attack_fraction, 0.0);
    }

    #[test]
    fn merge_orders_sources() {
        let phys = series(3);
        let host = vec![HostEvent::new(0.1, NodeId::Controller, HostEventKind::SysError, "k", "x".into())];
        let tl = merge_logs(&phys, &[], &host, 1.0).unwrap();
        assert!(is_monotone(&tl));
        assert!(matches!(tl[1], TimelineEntry::Host(_)));
        assert!(merge_logs(&phys, &[], &host, 0.05).is_err());
    }
}
