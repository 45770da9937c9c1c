//! Model-based reference detectors: the ⟨M, A⟩ trace classifier and the
//! rule-based IDS comparison over physical, network and host features.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::control::{integral_for_output, pi_update, safety_check, ControllerConfig, ControllerState};
use crate::dataset::LabeledRecord;
use crate::error::{Error, Result};
use crate::host::{HostEvent, HostEventKind};
use crate::net::{link_proto, CaptureRecord, FnCode, NodeId};
use crate::plant::{integrate_step, PlantParams, PlantState, SystemMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub u: f64,
    pub y: f64,
    pub d: f64,
    pub auto_flag: bool,
}

impl From<&LabeledRecord> for TraceSample {
    fn from(r: &LabeledRecord) -> Self {
        Self {
            t: r.t,
            u: r.u,
            y: r.y,
            d: r.d,
            auto_flag: r.auto_flag,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TraceVerdict {
    Normal,
    Failure,
    Attack,
    AttackOrFailure,
    Untraceable,
}

impl TraceVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Normal => "NORMAL",
            Self::Failure => "FAILURE",
            Self::Attack => "ATTACK",
            Self::AttackOrFailure => "ATTACK_OR_FAILURE",
            Self::Untraceable => "UNTRACEABLE",
        }
    }

    pub fn from_checks(m_ok: bool, a_ok: bool) -> Self {
        match (m_ok, a_ok) {
            (true, true) => Self::Normal,
            (false, true) => Self::Failure,
            (true, false) => Self::Attack,
            (false, false) => Self::AttackOrFailure,
        }
    }

    /// Whether a detector built on this verdict raises an alarm.
    pub fn is_attack(self) -> bool {
        matches!(self, Self::Attack | Self::AttackOrFailure)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Physical-model residual bound (mol/m³).
    pub tol_m: f64,
    /// Control-law residual bound (m³/min).
    pub tol_a: f64,
}

impl Tolerances {
    pub fn for_noise(noise_std: f64) -> Self {
        Self {
            tol_m: 3.0 * noise_std + 1e-4,
            tol_a: 1e-6,
        }
    }
}

/// Largest residuals found by the two checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub m: f64,
    pub a: f64,
}

fn check_window(w: &[TraceSample], period: f64) -> Result<()> {
    if w.len() < 2 {
        return Err(Error::WindowTooShort(w.len()));
    }
    for p in w.windows(2) {
        if !(p[1].t > p[0].t) {
            return Err(Error::MalformedWindow("timestamps must be strictly increasing"));
        }
        if libm::fabs((p[1].t - p[0].t) - period) > 1e-6 {
            return Err(Error::MalformedWindow("sample period differs from the controller's"));
        }
    }
    if w.iter().any(|s| !(s.t.is_finite() && s.u.is_finite() && s.y.is_finite() && s.d.is_finite())) {
        return Err(Error::MalformedWindow("non-finite sample"));
    }
    Ok(())
}

/// Open-loop replay of the healthy plant from the first sample.
fn m_residual(w: &[TraceSample], plant: &PlantParams, period: f64) -> Result<f64> {
    let steps = libm::round(period / plant.dt) as usize;
    let mut st = PlantState {
        t: w[0].t,
        c_a: w[0].y,
        c_a0: w[0].d,
        mode: SystemMode::Normal,
        decay: 1.0,
        frozen_flow: None,
        flow: plant.flow,
    };
    let mut worst: f64 = 0.0;
    for i in 1..w.len() {
        st.c_a0 = w[i - 1].d;
        let u = w[i].u.max(0.0);
        for _ in 0..steps {
            st = integrate_step(&st, u, plant)?;
        }
        worst = worst.max(libm::fabs(st.c_a - w[i].y));
    }
    Ok(worst)
}

/// Replay of the control law: the integral is re-seeded from the first
/// pair whose output is strictly inside the actuator range, then every
/// following pair is predicted. A reading above the trip level latches a
/// zero output from that pair on.
fn a_residual(w: &[TraceSample], cfg: &ControllerConfig) -> f64 {
    let n = w.len();
    let mut worst: f64 = 0.0;
    let mut st = ControllerState::new(cfg);
    let mut seeded = false;
    for i in 0..n - 1 {
        let (y, u_next) = (w[i].y, w[i + 1].u);
        let (tripped, s) = safety_check(y, cfg, &st);
        st = s;
        if tripped {
            worst = worst.max(libm::fabs(u_next));
            continue;
        }
        if !seeded {
            if u_next > cfg.u_min && u_next < cfg.u_max {
                let e = cfg.setpoint - y;
                st.integral = integral_for_output(u_next, e, cfg);
                seeded = true;
                st = pi_update(y, cfg, &st).map(|(_, s)| s).unwrap_or(st);
            }
            continue;
        }
        match pi_update(y, cfg, &st) {
            Ok((u, s)) => {
                worst = worst.max(libm::fabs(u - u_next));
                st = s;
            }
            Err(_) => return f64::INFINITY,
        }
    }
    worst
}

pub fn residuals(w: &[TraceSample], plant: &PlantParams, cfg: &ControllerConfig) -> Result<Residuals> {
    check_window(w, cfg.sample_period)?;
    Ok(Residuals {
        m: m_residual(w, plant, cfg.sample_period)?,
        a: a_residual(w, cfg),
    })
}

/// Table-driven verdict from the M (physics) and A (control law) checks.
pub fn classify_trace(
    w: &[TraceSample],
    plant: &PlantParams,
    cfg: &ControllerConfig,
    tol: Tolerances,
) -> Result<TraceVerdict> {
    check_window(w, cfg.sample_period)?;
    if w.iter().any(|s| !s.auto_flag) {
        return Ok(TraceVerdict::Untraceable);
    }
    let r = residuals(w, plant, cfg)?;
    Ok(TraceVerdict::from_checks(r.m <= tol.tol_m, r.a <= tol.tol_a))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowVerdict {
    pub t_start: f64,
    pub t_end: f64,
    pub verdict: TraceVerdict,
    /// Most frequent attack id in the window (0 when clean).
    pub attack_id: u32,
}

/// Classify consecutive non-overlapping windows of `n` records; a trailing
/// remainder shorter than two samples is skipped.
pub fn classify_series(
    records: &[LabeledRecord],
    n: usize,
    plant: &PlantParams,
    cfg: &ControllerConfig,
    tol: Tolerances,
) -> Result<Vec<WindowVerdict>> {
    if n < 2 {
        return Err(Error::WindowTooShort(n));
    }
    let mut out = Vec::new();
    for chunk in records.chunks(n) {
        if chunk.len() < 2 {
            continue;
        }
        let w: Vec<TraceSample> = chunk.iter().map(TraceSample::from).collect();
        let verdict = classify_trace(&w, plant, cfg, tol)?;
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for r in chunk {
            *counts.entry(r.label.attack_id).or_insert(0) += 1;
        }
        let attack_id = counts
            .iter()
            .filter(|(id, _)| **id != 0)
            .max_by_key(|(_, c)| **c)
            .map(|(id, _)| *id)
            .unwrap_or(0);
        out.push(WindowVerdict {
            t_start: chunk[0].t,
            t_end: chunk[chunk.len() - 1].t,
            verdict,
            attack_id,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DetectorVariant {
    Phy,
    PhyNet,
    PhyNetHost,
}

impl DetectorVariant {
    pub const ALL: [DetectorVariant; 3] = [Self::Phy, Self::PhyNet, Self::PhyNetHost];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Phy => "PHY",
            Self::PhyNet => "PHY_NET",
            Self::PhyNetHost => "PHY_NET_HOST",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    TP,
    TN,
    FP,
    FN,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::TP => "TP",
            Self::TN => "TN",
            Self::FP => "FP",
            Self::FN => "FN",
        }
    }
}

/// One scenario's data as seen by the detectors.
#[derive(Debug, Clone, Copy)]
pub struct DatasetView<'a> {
    pub physical: &'a [LabeledRecord],
    pub capture: &'a [CaptureRecord],
    pub host: &'a [HostEvent],
}

#[derive(Debug, Clone, Copy)]
pub struct DetectorModel<'a> {
    pub plant: &'a PlantParams,
    pub controller: &'a ControllerConfig,
    pub tol: Tolerances,
    pub window: usize,
}

fn phy_alarm(v: &DatasetView, m: &DetectorModel) -> Result<bool> {
    let verdicts = classify_series(v.physical, m.window, m.plant, m.controller, m.tol)?;
    Ok(verdicts.iter().any(|w| w.verdict.is_attack()))
}

fn net_alarm(v: &DatasetView) -> bool {
    v.capture.iter().any(|c| {
        let f = &c.frame;
        f.src == NodeId::Attacker || f.dst == NodeId::Attacker || link_proto(f.src, f.dst) != Some(f.proto)
    })
}

/// HMI commands reaching the controller must come from an open operator
/// session that logged the same command at the same time, and the HMI must
/// show no compromise artifacts.
pub fn host_alarm(v: &DatasetView) -> bool {
    let hmi: Vec<&HostEvent> = v.host.iter().filter(|e| e.node == NodeId::Hmi).collect();
    if hmi
        .iter()
        .any(|e| matches!(e.kind, HostEventKind::AuthFail | HostEventKind::ProcStart | HostEventKind::FileXfer))
    {
        return true;
    }
    let commands = v.capture.iter().filter(|c| {
        c.capture_node == NodeId::Controller
            && c.frame.src == NodeId::Hmi
            && c.frame.dst == NodeId::Controller
            && c.frame.fn_code == FnCode::Write
    });
    for c in commands {
        let ts = c.frame.ts;
        let mut open = false;
        for e in hmi.iter().filter(|e| e.ts <= ts + 1e-9) {
            match e.kind {
                HostEventKind::AuthLogin => open = true,
                HostEventKind::AuthLogout => open = false,
                _ => {}
            }
        }
        let logged = hmi.iter().any(|e| {
            matches!(e.kind, HostEventKind::ModeSwitch | HostEventKind::CmdIssued) && libm::fabs(e.ts - ts) <= 1e-9
        });
        if !(open && logged) {
            return true;
        }
    }
    false
}

/// Alarm raised by one detector variant on one scenario.
pub fn detect(variant: DetectorVariant, v: &DatasetView, m: &DetectorModel) -> Result<bool> {
    let phy = phy_alarm(v, m)?;
    Ok(match variant {
        DetectorVariant::Phy => phy,
        DetectorVariant::PhyNet => phy || net_alarm(v),
        DetectorVariant::PhyNetHost => phy || net_alarm(v) || host_alarm(v),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdsMatrix {
    /// Rows: normal, attack. Columns: PHY, PHY_NET, PHY_NET_HOST.
    pub cells: [[Decision; 3]; 2],
    /// Raw alarms per (scenario, variant): legit, compromised, spoofed.
    pub alarms: [[bool; 3]; 3],
}

/// Decision matrix over the operator-command trio. The attack row is TP
/// only when both the compromised-HMI and the spoofed scenario raise alarms.
pub fn ids_decision_matrix(
    legit: Option<&DatasetView>,
    compromised: Option<&DatasetView>,
    spoofed: Option<&DatasetView>,
    m: &DetectorModel,
) -> Result<IdsMatrix> {
    let (Some(legit), Some(compromised), Some(spoofed)) = (legit, compromised, spoofed) else {
        return Err(Error::Harness("the legit, compromised and spoofed scenarios are all required".into()));
    };
    let mut alarms = [[false; 3]; 3];
    for (i, v) in [legit, compromised, spoofed].into_iter().enumerate() {
        for (j, variant) in DetectorVariant::ALL.into_iter().enumerate() {
            alarms[i][j] = detect(variant, v, m)?;
        }
    }
    let mut cells = [[Decision::TN; 3]; 2];
    for j in 0..3 {
        cells[0][j] = if alarms[0][j] { Decision::FP } else { Decision::TN };
        cells[1][j] = if alarms[1][j] && alarms[2][j] { Decision::TP } else { Decision::FN };
    }
    Ok(IdsMatrix { cells, alarms })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed_loop(n: usize, fault: bool, act_offset: f64) -> Vec<TraceSample> {
        let p = PlantParams::default();
        let c = ControllerConfig::default();
        let mut plant = PlantState::steady(&p, 0.925);
        plant.c_a0 = 1.0;
        if fault {
            plant.decay = 0.5;
            plant.mode = SystemMode::F1;
        }
        let mut st = ControllerState::new(&c);
        let mut u_active = c.u_bias;
        let mut out = Vec::new();
        for i in 0..n {
            let y = plant.c_a;
            out.push(TraceSample {
                t: i as f64 * 0.1,
                u: u_active,
                y,
                d: plant.c_a0,
                auto_flag: true,
            });
            let (u, s) = pi_update(y, &c, &st).unwrap();
            st = s;
            u_active = c.clamp(u + if i >= n / 2 { act_offset } else { 0.0 });
            for _ in 0..100 {
                plant = integrate_step(&plant, u_active, &p).unwrap();
            }
        }
        out
    }

    fn classify(w: &[TraceSample]) -> TraceVerdict {
        classify_trace(w, &PlantParams::default(), &ControllerConfig::default(), Tolerances::for_noise(0.0)).unwrap()
    }

    #[test]
    fn quadrants() {
        assert_eq!(classify(&closed_loop(20, false, 0.0)), TraceVerdict::Normal);
        assert_eq!(classify(&closed_loop(20, true, 0.0)), TraceVerdict::Failure);
        assert_eq!(classify(&closed_loop(20, false, 0.3)), TraceVerdict::Attack);
        assert_eq!(classify(&closed_loop(20, true, 0.3)), TraceVerdict::AttackOrFailure);
    }

    #[test]
    fn manual_is_untraceable() {
        let mut w = closed_loop(10, false, 0.0);
        w[4].auto_flag = false;
        assert_eq!(classify(&w), TraceVerdict::Untraceable);
    }

    #[test]
    fn short_and_malformed_windows() {
        let w = closed_loop(3, false, 0.0);
        let p = PlantParams::default();
        let c = ControllerConfig::default();
        let tol = Tolerances::for_noise(0.0);
        assert_eq!(classify_trace(&w[..1], &p, &c, tol), Err(Error::WindowTooShort(1)));
        let mut bad = w.clone();
        bad[2].t = bad[1].t;
        assert!(matches!(classify_trace(&bad, &p, &c, tol), Err(Error::MalformedWindow(_))));
    }

    #[test]
    fn loose_tolerance_accepts_everything() {
        let w = closed_loop(20, true, 0.3);
        let v = classify_trace(
            &w,
            &PlantParams::default(),
            &ControllerConfig::default(),
            Tolerances { tol_m: 1e3, tol_a: 1e3 },
        )
        .unwrap();
        assert_eq!(v, TraceVerdict::Normal);
    }

    #[test]
    fn missing_scenario_is_harness_error() {
        let p = PlantParams::default();
        let c = ControllerConfig::default();
        let m = DetectorModel {
            plant: &p,
            controller: &c,
            tol: Tolerances::for_noise(0.0),
            window: 10,
        };
        let v = DatasetView {
            physical: &[],
            capture: &[],
            host: &[],
        };
        assert!(matches!(ids_decision_matrix(Some(&v), None, Some(&v), &m), Err(Error::Harness(_))));
    }
}
