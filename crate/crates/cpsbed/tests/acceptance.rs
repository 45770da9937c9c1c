//! Acceptance criteria, one PASS/FAIL line each.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use cpsbed::analysis::builtin_matrix;
use cpsbed::config::parse_str;
use cpsbed::pipeline::{generate, run_scenario};
use cpsbed::presets::{attack, quadrants, stealthy_cells};
use cpsbed_core::attack::{AttackKind, InjectionPoint, Waveform};
use cpsbed_core::dataset::{expand, deduplicate, is_monotone, merge_logs, TimelineEntry};
use cpsbed_core::engine::simulate;
use cpsbed_core::host::HostEventKind;
use cpsbed_core::net::{FnCode, NodeId};
use cpsbed_core::oracle::{classify_trace, Decision, TraceSample, TraceVerdict, Tolerances};
use cpsbed_core::plant::{estimate_disturbance, integrate_step, FaultEvent, FaultKind, PlantParams, PlantState, SystemMode};
use cpsbed_core::scenario::ScenarioConfig;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn step_response(k: f64, tau: f64, delta: f64, t: f64) -> f64 {
    k * delta * (1.0 - (-t / tau).exp())
}

fn c1_step_response() -> Outcome {
    let started = Instant::now();
    let p = PlantParams::default();
    // F = V = k = 1: gain F/(F + kV) = 0.5, time constant V/(F + kV) = 0.5
    let (k, tau) = (0.5, 0.5);
    let mut s = PlantState::steady(&p, 0.925);
    let c0 = s.c_a;
    s.c_a0 = 1.925;
    let steps = (3.0 / p.dt).round() as usize;
    let mut worst: f64 = 0.0;
    for i in 1..=steps {
        s = integrate_step(&s, p.flow, &p).map_err(|e| e.to_string())?;
        let t = i as f64 * p.dt;
        worst = worst.max((s.c_a - c0 - step_response(k, tau, 1.0, t)).abs());
    }
    for _ in 0..(30.0 / p.dt) as usize {
        s = integrate_step(&s, p.flow, &p).map_err(|e| e.to_string())?;
    }
    let asym = s.c_a - c0;
    let elapsed = started.elapsed();
    ensure(worst <= 1e-6, format!("max pointwise error {:e}", worst))?;
    ensure((asym - 0.5).abs() <= 1e-6, format!("asymptote {}", asym))?;
    ensure(elapsed < Duration::from_secs(1), format!("took {:?}", elapsed))?;
    Ok(format!("max error {:.2e}, asymptote {:.9}, {:?}", worst, asym, elapsed))
}

fn c2_disturbance_round_trip() -> Outcome {
    let p = PlantParams::default();
    let mut s = PlantState::steady(&p, 0.925);
    let c0 = s.c_a;
    s.c_a0 = 1.925;
    let mut worst: f64 = 0.0;
    for i in 1..=3000 {
        s = integrate_step(&s, p.flow, &p).map_err(|e| e.to_string())?;
        let t = i as f64 * p.dt;
        let est = estimate_disturbance(s.c_a, c0, 0.925, t, &p).map_err(|e| e.to_string())?;
        worst = worst.max((est - 1.925).abs());
    }
    ensure(worst <= 1e-9, format!("max error {:e}", worst))?;
    Ok(format!("max error {:.2e} over 3000 steps", worst))
}

fn c3_quadrants() -> Outcome {
    let started = Instant::now();
    let want = [
        TraceVerdict::Normal,
        TraceVerdict::Failure,
        TraceVerdict::Attack,
        TraceVerdict::AttackOrFailure,
    ];
    let mut got = Vec::new();
    for q in quadrants() {
        let out = simulate(&q.cfg, &q.cfg.attacks).map_err(|e| e.to_string())?;
        let w: Vec<TraceSample> = out
            .records
            .iter()
            .filter(|r| r.t >= q.span.0 - 1e-9 && r.t <= q.span.1 + 1e-9)
            .map(TraceSample::from)
            .collect();
        let tol = Tolerances::for_noise(q.cfg.plant.noise_std);
        let v = classify_trace(&w, &q.cfg.plant, &q.cfg.controller, tol).map_err(|e| e.to_string())?;
        got.push(v);
    }
    let elapsed = started.elapsed();
    ensure(got == want, format!("verdicts {:?}", got))?;
    ensure(elapsed < Duration::from_secs(5), format!("took {:?}", elapsed))?;
    Ok(format!("{:?} in {:?}", got, elapsed))
}

fn c4_ids_matrix() -> Outcome {
    use Decision::*;
    let m = builtin_matrix().map_err(|e| e.to_string())?;
    ensure(m.cells == [[TN, TN, TN], [FN, FN, TP]], format!("matrix {:?}", m.cells))?;
    Ok(format!("{:?}", m.cells))
}

/// Outcome read back from the merged logs alone.
fn outcome_from_logs(timeline: &[TimelineEntry], haz: f64) -> &'static str {
    let mut trip: Option<f64> = None;
    let mut hazard = false;
    let mut futile = None;
    for e in timeline {
        match e {
            TimelineEntry::Phys(r) => {
                if trip.is_none() && r.y_true > haz {
                    hazard = true;
                }
                // first sample at or after the trip
                if trip.is_some() && futile.is_none() {
                    futile = Some(r.y_true <= haz);
                }
            }
            TimelineEntry::Host(h)
                if trip.is_none()
                    && h.node == NodeId::Controller
                    && h.kind == HostEventKind::ModeSwitch
                    && h.detail.contains("mode=TRIPPED") =>
            {
                trip = Some(h.ts);
            }
            _ => {}
        }
    }
    match (trip, futile.unwrap_or(false), hazard) {
        (Some(_), true, _) => "DM_INTERVENTION_FUTILE",
        (Some(_), false, _) => "DM_INTERVENTION",
        (None, _, true) => "HAZARD",
        (None, _, false) => "NORMAL_OPERATION",
    }
}

fn c5_stealthy_cells() -> Outcome {
    let mut got = Vec::new();
    for (want, cfg) in stealthy_cells() {
        let out = simulate(&cfg, &cfg.attacks).map_err(|e| e.to_string())?;
        let t = merge_logs(&out.records, &out.captures, &out.host, cfg.duration).map_err(|e| e.to_string())?;
        let from_logs = outcome_from_logs(&t, cfg.controller.haz_threshold);
        ensure(
            from_logs == want && out.outcome.cell() == want,
            format!("{}: logs say {}, engine says {}", want, from_logs, out.outcome.cell()),
        )?;
        got.push(from_logs);
    }
    Ok(got.join(" / "))
}

fn actuator_writes(out: &cpsbed_core::engine::SimOutput) -> Vec<f64> {
    out.captures
        .iter()
        .filter(|c| {
            c.capture_node == NodeId::Actuator && c.frame.dst == NodeId::Actuator && c.frame.fn_code == FnCode::Write
        })
        .map(|c| c.frame.ts)
        .collect()
}

fn c6_dos_no_impact() -> Outcome {
    let cfg = ScenarioConfig::minimal(10.0);
    let base = simulate(&cfg, &[]).map_err(|e| e.to_string())?;
    let mut dos = attack(1, AttackKind::Dos, InjectionPoint::SensorToController, Waveform::step(0.0), 2.0, 6.0);
    dos.dos_rate = 1200.0;
    let hit = simulate(&cfg, &[dos]).map_err(|e| e.to_string())?;
    ensure(base.records.len() == hit.records.len(), "record counts differ")?;
    let worst = base
        .records
        .iter()
        .zip(&hit.records)
        .map(|(a, b)| (a.y_true - b.y_true).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-9, format!("trajectory deviates by {:e}", worst))?;
    ensure(hit.outcome.reports_dropped >= 1, "no report dropped")?;
    let (wa, wb) = (actuator_writes(&base), actuator_writes(&hit));
    ensure(!wa.is_empty() && wa == wb, "actuator write timestamps differ")?;
    Ok(format!(
        "max deviation {:.1e}, {} reports dropped, {} identical actuator writes",
        worst,
        hit.outcome.reports_dropped,
        wa.len()
    ))
}

fn c7_dataset_quality() -> Outcome {
    let text = include_str!("../../../scenarios/quality60.toml");
    let cfg = parse_str(text).map_err(|e| e.to_string())?;
    let started = Instant::now();
    let a = generate(&cfg).map_err(|e| format!("{:#}", e))?;
    let elapsed = started.elapsed();
    ensure(cfg.duration == 60.0, "scenario is not 60 minutes")?;
    ensure(a.manifest.attacks.len() == 10, format!("{} attacks planned", a.manifest.attacks.len()))?;
    let zero: BTreeSet<u32> = a.manifest.zero_day_ids.iter().copied().collect();
    ensure(zero.len() == 1, format!("zero-day ids {:?}", zero))?;

    let known: BTreeSet<u32> = a.manifest.attacks.iter().map(|s| s.id).collect();
    let covered = a.sim.records.iter().all(|r| r.label.attack_id == 0 || known.contains(&r.label.attack_id))
        && a.sim.captures.iter().all(|c| c.frame.attack_id == 0 || known.contains(&c.frame.attack_id))
        && a.sim.host.iter().all(|e| e.attack_id == 0 || known.contains(&e.attack_id));
    ensure(covered, "a record carries an unknown label")?;
    let n = (cfg.duration / cfg.controller.sample_period).round() as usize;
    ensure(a.sim.records.len() == n, format!("{} of {} samples labeled", a.sim.records.len(), n))?;

    ensure(a.train.attack_ids().is_disjoint(&zero), "train view holds a zero-day id")?;
    ensure(a.test.attack_ids().is_superset(&zero), "test view lacks the zero-day id")?;

    let d = deduplicate(&a.sim.records, cfg.dedup_eps, cfg.controller.sample_period).map_err(|e| e.to_string())?;
    let back = expand(&d);
    ensure(
        back.len() == a.sim.records.len() && back.iter().zip(&a.sim.records).all(|(x, y)| x.identical(y)),
        "expand(deduplicate(x)) != x",
    )?;

    let t = merge_logs(&a.sim.records, &a.sim.captures, &a.sim.host, cfg.duration).map_err(|e| e.to_string())?;
    ensure(is_monotone(&t), "merged timeline not monotone")?;

    let b = generate(&cfg).map_err(|e| format!("{:#}", e))?;
    ensure(a.files == b.files, "two runs differ")?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let m1 = run_scenario(&cfg, &dir.path().join("a")).map_err(|e| format!("{:#}", e))?;
    let m2 = run_scenario(&cfg, &dir.path().join("b")).map_err(|e| format!("{:#}", e))?;
    for (rel, bytes) in &a.files {
        let x = std::fs::read(dir.path().join("a").join(rel)).map_err(|e| e.to_string())?;
        let y = std::fs::read(dir.path().join("b").join(rel)).map_err(|e| e.to_string())?;
        ensure(&x == bytes && x == y, format!("{} differs between runs", rel))?;
    }
    ensure(m1 == m2, "manifests differ")?;
    ensure(elapsed < Duration::from_secs(10), format!("generation took {:?}", elapsed))?;
    Ok(format!(
        "{} records, {} frames, {} host events, {} merged entries, generated in {:?}",
        a.sim.records.len(),
        a.sim.captures.len(),
        a.sim.host.len(),
        t.len(),
        elapsed
    ))
}

fn edge(from: SystemMode, kind: FaultKind) -> Option<SystemMode> {
    use FaultKind::*;
    use SystemMode::*;
    match (from, kind) {
        (Normal, F1Causes) => Some(F1),
        (Normal, F2Causes) => Some(F2),
        (Normal, F1AndF2Causes) => Some(F12),
        (F1, F2Causes) | (F2, F1Causes) => Some(F12),
        _ => None,
    }
}

fn c8_automaton_legality() -> Outcome {
    let kinds = prop_oneof![
        Just(FaultKind::F1Causes),
        Just(FaultKind::F2Causes),
        Just(FaultKind::F1AndF2Causes)
    ];
    let schedule = prop::collection::vec((1u32..19, kinds), 0..4);
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let counts = std::cell::Cell::new((0usize, 0usize));
    let result = runner.run(&schedule, |events| {
        let mut cfg = ScenarioConfig::minimal(2.0);
        cfg.faults = events.iter().map(|(k, kind)| FaultEvent::new(*k as f64 * 0.1, *kind)).collect();
        let mut sorted = events.clone();
        sorted.sort_by_key(|e| e.0);
        let mut mode = Some(SystemMode::Normal);
        let mut expected = vec![SystemMode::Normal];
        for (_, kind) in &sorted {
            mode = mode.and_then(|m| edge(m, *kind));
            if let Some(m) = mode {
                expected.push(m);
            }
        }
        let (acc, rej) = counts.get();
        match simulate(&cfg, &[]) {
            Ok(out) => {
                prop_assert!(mode.is_some(), "illegal schedule {:?} accepted", events);
                for w in out.mode_schedule.windows(2) {
                    prop_assert!(edge(w[0].1, kind_between(w[0].1, w[1].1)).is_some());
                }
                let seen: Vec<SystemMode> = out.mode_schedule.iter().map(|m| m.1).collect();
                prop_assert_eq!(seen, expected);
                counts.set((acc + 1, rej));
            }
            Err(e) => {
                prop_assert!(mode.is_none(), "legal schedule {:?} rejected: {}", events, e);
                counts.set((acc, rej + 1));
            }
        }
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    let (acc, rej) = counts.get();
    ensure(acc + rej >= 1000 && rej > 0 && acc > 0, format!("{} accepted, {} rejected", acc, rej))?;
    Ok(format!("{} schedules: {} legal, {} rejected", acc + rej, acc, rej))
}

/// Fault kind that would label a transition between two modes.
fn kind_between(from: SystemMode, to: SystemMode) -> FaultKind {
    use SystemMode::*;
    match (from, to) {
        (Normal, F1) | (F2, F12) => FaultKind::F1Causes,
        (Normal, F2) | (F1, F12) => FaultKind::F2Causes,
        _ => FaultKind::F1AndF2Causes,
    }
}

/// Per full-stealthy attack: report instants where released y matched what
/// the HMI logged, and unsafe samples whose truth differs from released y.
fn stealthy_windows(cfg: &ScenarioConfig) -> Result<Vec<(u32, usize, usize)>, String> {
    let ds = generate(cfg).map_err(|e| format!("{:#}", e))?;
    let truth = cpsbed::format::read_physical(&ds.files["truth.csv"][..]).map_err(|e| e.to_string())?;
    let mut released = Vec::new();
    for v in ["train", "test"] {
        released.extend(
            cpsbed::format::read_physical(&ds.files[&format!("{}/physical.csv", v)][..]).map_err(|e| e.to_string())?,
        );
    }
    released.sort_by(|x, y| x.t.total_cmp(&y.t));
    let reported: Vec<(f64, f64)> = ds
        .sim
        .host
        .iter()
        .filter(|e| e.node == NodeId::Hmi && e.kind == HostEventKind::DataLog)
        .filter_map(|e| e.detail_value("pv").map(|v| (e.ts, v)))
        .collect();
    let haz = cfg.controller.haz_threshold;
    let mut out = Vec::new();
    for a in ds.manifest.attacks.iter().filter(|a| a.kind == AttackKind::Stealthy && !a.is_partial_stealthy()) {
        let (mut matched, mut hidden) = (0, 0);
        for (r, t) in released.iter().zip(&truth) {
            if r.label.attack_id != a.id {
                continue;
            }
            if let Some((_, pv)) = reported.iter().find(|(ts, _)| (ts - r.t).abs() < 1e-9) {
                ensure(
                    *pv == r.y,
                    format!("attack {} t = {}: released y {} but the HMI was shown {}", a.id, r.t, r.y, pv),
                )?;
                matched += 1;
            }
            if t.y_true > haz && t.y_true != r.y {
                hidden += 1;
            }
        }
        ensure(matched > 0, format!("attack {}: no report instant inside the window", a.id))?;
        out.push((a.id, matched, hidden));
    }
    Ok(out)
}

fn c9_stealthy_logging() -> Outcome {
    let mut cfgs: Vec<ScenarioConfig> = stealthy_cells().into_iter().map(|c| c.1).collect();
    cfgs.push(parse_str(include_str!("../../../scenarios/quality60.toml")).map_err(|e| e.to_string())?);
    let (mut windows, mut matched, mut hidden) = (0, 0, 0);
    for cfg in &cfgs {
        for (_, m, h) in stealthy_windows(cfg)? {
            windows += 1;
            matched += m;
            hidden += h;
        }
    }
    ensure(windows >= 3, format!("only {} full-stealthy windows exercised", windows))?;
    ensure(hidden > 0, "released y never differs from truth outside the envelope")?;
    Ok(format!(
        "{} full-stealthy windows, {} reports match released y, {} unsafe samples hidden",
        windows, matched, hidden
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 step response", c1_step_response),
        ("2 disturbance estimate round trip", c2_disturbance_round_trip),
        ("3 trace classifier quadrants", c3_quadrants),
        ("4 IDS decision matrix", c4_ids_matrix),
        ("5 stealthy outcome cells", c5_stealthy_cells),
        ("6 DoS leaves the plant untouched", c6_dos_no_impact),
        ("7 dataset quality", c7_dataset_quality),
        ("8 fault automaton legality", c8_automaton_legality),
        ("9 stealthy logging rule", c9_stealthy_logging),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS criterion {}: {}", name, detail),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {}", name, detail);
            }
        }
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
