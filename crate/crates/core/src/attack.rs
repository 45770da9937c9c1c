//! Attack injection: integrity MITM on every injection point, stealthy
//! attacks with decoupled controller and DM streams, DoS against the
//! controller's communication stack, multi-step attack vectors and
//! attribute-grid planning.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::g9;
use crate::host::{HostEvent, HostEventKind};
use crate::net::{reg, FnCode, Frame, Interceptor, NodeId, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AttackKind {
    IntegritySca,
    IntegrityDm,
    Stealthy,
    Dos,
    ZeroDayVariant,
}

impl AttackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::IntegritySca => "INTEGRITY_SCA",
            Self::IntegrityDm => "INTEGRITY_DM",
            Self::Stealthy => "STEALTHY",
            Self::Dos => "DOS",
            Self::ZeroDayVariant => "ZERO_DAY_VARIANT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InjectionPoint {
    SensorToController,
    ControllerParam,
    ActuatorCmd,
    SensorToDm,
    DmToActuator,
}

impl InjectionPoint {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SensorToController => "SENSOR_TO_CONTROLLER",
            Self::ControllerParam => "CONTROLLER_PARAM",
            Self::ActuatorCmd => "ACTUATOR_CMD",
            Self::SensorToDm => "SENSOR_TO_DM",
            Self::DmToActuator => "DM_TO_ACTUATOR",
        }
    }

    /// Points on the sensor → controller → actuator path.
    pub fn on_control_path(self) -> bool {
        matches!(self, Self::SensorToController | Self::ActuatorCmd)
    }

    /// Nodes from which an attacker can act on this point.
    pub fn owners(self) -> &'static [NodeId] {
        match self {
            Self::SensorToController | Self::ActuatorCmd => &[NodeId::Controller],
            Self::SensorToDm => &[NodeId::Controller, NodeId::Hmi],
            Self::ControllerParam | Self::DmToActuator => &[NodeId::Hmi, NodeId::Controller],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Drop,
    Replay,
    Modify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WaveformKind {
    Step,
    Pulse,
    Ramp,
    StealthRamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waveform {
    pub kind: WaveformKind,
    /// Offset in payload units; the final level of ramps.
    #[serde(default)]
    pub magnitude: f64,
    /// Active time of a pulse (min).
    #[serde(default)]
    pub duration: f64,
    /// Slope of ramps (units/min).
    #[serde(default)]
    pub rate: f64,
    /// Per-sample change bound for stealth ramps.
    #[serde(default)]
    pub threshold: f64,
}

impl Waveform {
    pub fn step(magnitude: f64) -> Self {
        Self {
            kind: WaveformKind::Step,
            magnitude,
            duration: 0.0,
            rate: 0.0,
            threshold: 0.0,
        }
    }

    pub fn pulse(magnitude: f64, duration: f64) -> Self {
        Self {
            kind: WaveformKind::Pulse,
            duration,
            ..Self::step(magnitude)
        }
    }

    pub fn ramp(rate: f64, magnitude: f64) -> Self {
        Self {
            kind: WaveformKind::Ramp,
            rate,
            ..Self::step(magnitude)
        }
    }

    /// Ramp whose per-sample change stays at 90% of `threshold`.
    pub fn stealth_ramp(threshold: f64, sample_period: f64, magnitude: f64) -> Self {
        Self {
            kind: WaveformKind::StealthRamp,
            rate: 0.9 * threshold / sample_period * sign(magnitude),
            threshold,
            ..Self::step(magnitude)
        }
    }

    pub fn validate(&self, window_len: f64, sample_period: f64) -> Result<()> {
        let vals = [self.magnitude, self.duration, self.rate, self.threshold];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("waveform attributes must be finite".into()));
        }
        if self.duration < 0.0 || self.duration > window_len + 1e-9 {
            return Err(Error::Config("waveform duration must lie within the attack window".into()));
        }
        if self.kind == WaveformKind::StealthRamp {
            if !(self.threshold > 0.0) {
                return Err(Error::Config("stealth ramp needs a positive threshold".into()));
            }
            if !(libm::fabs(self.rate) * sample_period < self.threshold) {
                return Err(Error::Config(format!(
                    "stealth ramp per-sample change {} is not below threshold {}",
                    g9(libm::fabs(self.rate) * sample_period),
                    g9(self.threshold)
                )));
            }
        }
        Ok(())
    }
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Payload offset `t` minutes into the attack window.
pub fn design_waveform(w: &Waveform, t: f64) -> f64 {
    if t < 0.0 || !t.is_finite() {
        return 0.0;
    }
    match w.kind {
        WaveformKind::Step => w.magnitude,
        WaveformKind::Pulse => {
            if t <= w.duration {
                w.magnitude
            } else {
                0.0
            }
        }
        WaveformKind::Ramp | WaveformKind::StealthRamp => {
            let level = libm::fabs(w.rate) * t;
            let cap = libm::fabs(w.magnitude);
            let dir = if w.magnitude != 0.0 { sign(w.magnitude) } else { sign(w.rate) };
            if cap > 0.0 {
                dir * level.min(cap)
            } else {
                dir * level
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start - 1e-9 && t <= self.end + 1e-9
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn overlaps(&self, other: &Window) -> bool {
        self.start <= other.end + 1e-9 && other.start <= self.end + 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntryLayer {
    Physical,
    Control,
    Application,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntryMethod {
    /// Local or physical access; leaves host artifacts only.
    Intrusion,
    /// Network access; each step also puts a frame on the wire.
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StepEffect {
    Recon,
    Credential,
    Pivot,
    Payload,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackStep {
    /// Minutes relative to the attack window start; never positive.
    pub offset: f64,
    pub entry_layer: EntryLayer,
    pub entry_method: EntryMethod,
    pub from: NodeId,
    pub to: NodeId,
    pub effect: StepEffect,
}

pub fn layer_of(node: NodeId) -> EntryLayer {
    match node {
        NodeId::Sensor | NodeId::Actuator => EntryLayer::Physical,
        NodeId::Controller | NodeId::Logserver => EntryLayer::Control,
        NodeId::Hmi | NodeId::CorpWs | NodeId::Attacker => EntryLayer::Application,
    }
}

/// What the DM nodes are shown during a stealthy attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReportPolicy {
    /// Keep reporting the last value seen before the attack.
    FreezeLastGood,
    /// Loop over the reports captured before the attack.
    SafeEnvelopeReplay,
    /// Report the true value shifted by a waveform (e.g. fake-unsafe data).
    Offset(Waveform),
}

fn default_targets() -> Vec<NodeId> {
    Vec::new()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub id: u32,
    pub kind: AttackKind,
    pub injection_point: InjectionPoint,
    pub action: Action,
    pub waveform: Waveform,
    pub window: Window,
    #[serde(default)]
    pub vector: Vec<AttackStep>,
    /// DM nodes fed by the attacker (stealthy) or whose reports are hit
    /// (SENSOR_TO_DM); empty means every DM node for SENSOR_TO_DM.
    #[serde(default = "default_targets")]
    pub dm_targets: Vec<NodeId>,
    /// Flood rate for DoS (frames/min).
    #[serde(default)]
    pub dos_rate: f64,
    #[serde(default)]
    pub zero_day: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_policy: Option<ReportPolicy>,
    /// The attacker overwrites the controller log for the attack window.
    #[serde(default)]
    pub log_wipe: bool,
}

pub const ALL_DM: [NodeId; 2] = [NodeId::Hmi, NodeId::Logserver];

impl AttackSpec {
    pub fn is_zero_day(&self) -> bool {
        self.zero_day || self.kind == AttackKind::ZeroDayVariant
    }

    /// DM nodes whose reports this attack manipulates.
    pub fn dm_set(&self) -> Vec<NodeId> {
        if self.dm_targets.is_empty() && self.injection_point == InjectionPoint::SensorToDm {
            ALL_DM.to_vec()
        } else {
            let set: BTreeSet<NodeId> = self.dm_targets.iter().copied().collect();
            set.into_iter().collect()
        }
    }

    pub fn is_partial_stealthy(&self) -> bool {
        self.kind == AttackKind::Stealthy && self.dm_set().len() < ALL_DM.len()
    }

    /// Earliest time any part of the attack (including its vector) runs.
    pub fn first_activity(&self) -> f64 {
        self.vector
            .iter()
            .map(|s| self.window.start + s.offset)
            .fold(self.window.start, f64::min)
    }

    /// Time from which interceptors may act: the window start, or the
    /// payload step when that comes later.
    pub fn armed_at(&self) -> f64 {
        self.vector
            .iter()
            .filter(|s| s.effect == StepEffect::Payload)
            .map(|s| self.window.start + s.offset)
            .fold(self.window.start, f64::max)
    }

    pub fn validate(&self, duration: f64, sample_period: f64) -> Result<()> {
        let err = |msg: String| Err(Error::Config(format!("attack {}: {}", self.id, msg)));
        if self.id == 0 {
            return err("id must be a positive integer".into());
        }
        let w = self.window;
        if !(w.start >= 0.0 && w.start <= w.end && w.end <= duration) {
            return err(format!(
                "window [{}, {}] must lie within the scenario [0, {}]",
                g9(w.start),
                g9(w.end),
                g9(duration)
            ));
        }
        if !point_is_legal(self.kind, self.injection_point) {
            return err(format!(
                "injection point {} is inconsistent with kind {}",
                self.injection_point.as_str(),
                self.kind.as_str()
            ));
        }
        if let Err(Error::Config(m)) = self.waveform.validate(w.len(), sample_period) {
            return err(m);
        }
        for n in &self.dm_targets {
            if !n.is_dm() {
                return err(format!("{} is not a DM node", n.as_str()));
            }
        }
        match self.kind {
            AttackKind::Stealthy => {
                if self.dm_targets.is_empty() {
                    return err("stealthy attacks need at least one DM target".into());
                }
                if self.report_policy.is_none() {
                    return err("stealthy attacks need a report_policy".into());
                }
            }
            AttackKind::Dos => {
                if !(self.dos_rate > 0.0) || !self.dos_rate.is_finite() {
                    return err("DoS attacks need dos_rate > 0".into());
                }
            }
            _ => {
                if self.report_policy.is_some() {
                    return err("report_policy only applies to stealthy attacks".into());
                }
            }
        }
        if let Some(ReportPolicy::Offset(rw)) = self.report_policy {
            if let Err(Error::Config(m)) = rw.validate(w.len(), sample_period) {
                return err(m);
            }
        }
        if self.kind == AttackKind::ZeroDayVariant && !self.zero_day {
            return err("ZERO_DAY_VARIANT attacks must set zero_day".into());
        }
        if !self.vector.is_empty() {
            if let Err(Error::Config(m)) = validate_vector(self) {
                return err(m);
            }
            if self.first_activity() < 0.0 {
                return err("attack vector starts before t = 0".into());
            }
        }
        Ok(())
    }
}

/// Whether `point` is a meaningful target for `kind`.
pub fn point_is_legal(kind: AttackKind, point: InjectionPoint) -> bool {
    use InjectionPoint::*;
    match kind {
        AttackKind::IntegritySca => matches!(point, SensorToController | ActuatorCmd),
        AttackKind::IntegrityDm => matches!(point, ControllerParam | SensorToDm | DmToActuator),
        AttackKind::Stealthy => matches!(point, SensorToController | ActuatorCmd | SensorToDm),
        AttackKind::Dos | AttackKind::ZeroDayVariant => true,
    }
}

fn validate_vector(spec: &AttackSpec) -> Result<()> {
    let steps = &spec.vector;
    let mut prev: Option<&AttackStep> = None;
    for s in steps {
        if s.offset > 0.0 {
            return Err(Error::Config("vector step offsets must be <= 0".into()));
        }
        if s.from == s.to {
            return Err(Error::Config("vector step must move between two nodes".into()));
        }
        if let Some(p) = prev {
            if !(s.offset > p.offset) {
                return Err(Error::Config("vector step offsets must be strictly increasing".into()));
            }
            let shared = [p.from, p.to].contains(&s.from) || [p.from, p.to].contains(&s.to);
            if !shared {
                return Err(Error::Config(format!(
                    "broken pivot chain between {}->{} and {}->{}",
                    p.from.as_str(),
                    p.to.as_str(),
                    s.from.as_str(),
                    s.to.as_str()
                )));
            }
        }
        if (s.effect == StepEffect::Recon || s.entry_method == EntryMethod::Remote)
            && crate::net::link_proto(s.from, s.to).is_none()
        {
            return Err(Error::Config(format!(
                "vector step {}->{} has no network link",
                s.from.as_str(),
                s.to.as_str()
            )));
        }
        prev = Some(s);
    }
    let last = steps.last().expect("non-empty vector");
    let owners: &[NodeId] = if spec.kind == AttackKind::Dos {
        &[NodeId::Controller]
    } else {
        spec.injection_point.owners()
    };
    if !owners.contains(&last.to) {
        return Err(Error::Config(format!(
            "vector ends at {} but {} is reached from {}",
            last.to.as_str(),
            spec.injection_point.as_str(),
            owners[0].as_str()
        )));
    }
    Ok(())
}

/// A side effect of one attack-vector step.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorEmission {
    Host(HostEvent),
    Frame {
        ts: f64,
        src: NodeId,
        dst: NodeId,
        fn_code: FnCode,
        addr: u16,
    },
}

impl VectorEmission {
    pub fn ts(&self) -> f64 {
        match self {
            VectorEmission::Host(e) => e.ts,
            VectorEmission::Frame { ts, .. } => *ts,
        }
    }
}

pub const CREDENTIAL_FAILURES: usize = 2;
const SCAN_PROBES: u16 = 3;

/// Host artifacts and frames of every vector step, labeled with the attack
/// id, in causal order.
pub fn execute_vector(spec: &AttackSpec) -> Result<Vec<VectorEmission>> {
    if spec.vector.is_empty() {
        return Err(Error::Config(format!("attack {}: empty attack vector", spec.id)));
    }
    validate_vector(spec)?;
    let id = spec.id;
    let mut out = Vec::new();
    let host = |ts: f64, node: NodeId, kind: HostEventKind, actor: &str, detail: String| {
        VectorEmission::Host(HostEvent::new(ts, node, kind, actor, detail).with_attack(id))
    };
    for s in &spec.vector {
        let ts = spec.window.start + s.offset;
        let remote = s.entry_method == EntryMethod::Remote;
        match s.effect {
            StepEffect::Recon => {
                out.push(host(
                    ts,
                    s.from,
                    HostEventKind::ProcStart,
                    "svc",
                    format!("proc=netscan target={}", s.to.as_str()),
                ));
                for k in 0..SCAN_PROBES {
                    out.push(VectorEmission::Frame {
                        ts,
                        src: s.from,
                        dst: s.to,
                        fn_code: FnCode::Read,
                        addr: reg::SCAN_BASE + k,
                    });
                }
                out.push(host(
                    ts,
                    s.to,
                    HostEventKind::SysError,
                    "kernel",
                    format!("event=unexpected_probe src={} count={}", s.from.as_str(), SCAN_PROBES),
                ));
            }
            StepEffect::Credential => {
                if remote {
                    out.push(frame_emission(ts, s));
                }
                for _ in 0..CREDENTIAL_FAILURES {
                    out.push(host(
                        ts,
                        s.to,
                        HostEventKind::AuthFail,
                        "operator",
                        format!("src={} reason=bad_password", s.from.as_str()),
                    ));
                }
                out.push(host(ts, s.to, HostEventKind::AuthLogin, "operator", format!("src={}", s.from.as_str())));
            }
            StepEffect::Pivot => {
                if remote {
                    out.push(frame_emission(ts, s));
                }
                out.push(host(
                    ts,
                    s.to,
                    HostEventKind::ProcStart,
                    "operator",
                    format!("proc=remote_shell src={}", s.from.as_str()),
                ));
            }
            StepEffect::Payload => {
                if remote {
                    out.push(frame_emission(ts, s));
                }
                out.push(host(
                    ts,
                    s.to,
                    HostEventKind::FileXfer,
                    "operator",
                    format!("file=payload.bin src={} point={}", s.from.as_str(), spec.injection_point.as_str()),
                ));
            }
        }
    }
    Ok(out)
}

fn frame_emission(ts: f64, s: &AttackStep) -> VectorEmission {
    VectorEmission::Frame {
        ts,
        src: s.from,
        dst: s.to,
        fn_code: FnCode::Write,
        addr: reg::SCAN_BASE,
    }
}

/// Canonical vector from the corporate workstation to the owner of `point`.
pub fn default_vector(point: InjectionPoint, kind: AttackKind, lead: f64) -> Vec<AttackStep> {
    let target = if kind == AttackKind::Dos {
        NodeId::Controller
    } else {
        point.owners()[0]
    };
    let mut hops = alloc::vec![
        (NodeId::CorpWs, NodeId::Hmi, StepEffect::Recon),
        (NodeId::CorpWs, NodeId::Hmi, StepEffect::Credential),
    ];
    if target == NodeId::Controller {
        hops.push((NodeId::Hmi, NodeId::Controller, StepEffect::Pivot));
        hops.push((NodeId::Hmi, NodeId::Controller, StepEffect::Payload));
    } else {
        hops.push((NodeId::CorpWs, NodeId::Hmi, StepEffect::Payload));
    }
    let n = hops.len() as f64;
    hops.into_iter()
        .enumerate()
        .map(|(i, (from, to, effect))| AttackStep {
            offset: -lead * (n - i as f64) / n,
            entry_layer: layer_of(to),
            entry_method: EntryMethod::Remote,
            from,
            to,
            effect,
        })
        .collect()
}

/// Frames an interceptor may act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Sensor READ responses into the controller.
    SensorToController,
    /// Controller WRITEs to the actuator.
    ActuatorCmd,
    /// HMI writes to the controller's setpoint register.
    SetpointWrites,
    /// HMI writes to the mode and manual-output registers.
    ManualCommands,
}

impl Stream {
    pub fn for_point(point: InjectionPoint) -> Option<Stream> {
        match point {
            InjectionPoint::SensorToController => Some(Stream::SensorToController),
            InjectionPoint::ActuatorCmd => Some(Stream::ActuatorCmd),
            InjectionPoint::ControllerParam => Some(Stream::SetpointWrites),
            InjectionPoint::DmToActuator => Some(Stream::ManualCommands),
            InjectionPoint::SensorToDm => None,
        }
    }

    pub fn matches(&self, f: &Frame) -> bool {
        match self {
            Stream::SensorToController => {
                f.src == NodeId::Sensor && f.dst == NodeId::Controller && f.addr == reg::PV
            }
            Stream::ActuatorCmd => {
                f.src == NodeId::Controller && f.dst == NodeId::Actuator && f.fn_code == FnCode::Write
            }
            Stream::SetpointWrites => {
                f.src == NodeId::Hmi && f.dst == NodeId::Controller && f.addr == reg::SETPOINT
            }
            Stream::ManualCommands => {
                f.src == NodeId::Hmi
                    && f.dst == NodeId::Controller
                    && (f.addr == reg::MODE || f.addr == reg::MANUAL_OP)
            }
        }
    }
}

pub const REPLAY_DEPTH: usize = 50;

/// MITM on one stream applying DROP, REPLAY or MODIFY during the window.
#[derive(Debug, Clone)]
pub struct StreamInterceptor {
    pub id: u32,
    pub stream: Stream,
    pub window: Window,
    pub armed_at: f64,
    pub action: Action,
    pub waveform: Waveform,
    history: VecDeque<f64>,
    replay_idx: usize,
}

impl StreamInterceptor {
    pub fn new(id: u32, stream: Stream, window: Window, armed_at: f64, action: Action, waveform: Waveform) -> Self {
        Self {
            id,
            stream,
            window,
            armed_at,
            action,
            waveform,
            history: VecDeque::with_capacity(REPLAY_DEPTH),
            replay_idx: 0,
        }
    }

    pub fn active_at(&self, t: f64) -> bool {
        self.window.contains(t) && t >= self.armed_at - 1e-9
    }

    /// Values recorded on the stream before the attack became active.
    pub fn history(&self) -> impl Iterator<Item = &f64> {
        self.history.iter()
    }
}

impl Interceptor for StreamInterceptor {
    fn intercept(&mut self, mut frame: Frame) -> Verdict {
        if !self.stream.matches(&frame) {
            return Verdict::Pass(frame);
        }
        if !self.active_at(frame.ts) {
            if frame.ts < self.window.start {
                if self.history.len() == REPLAY_DEPTH {
                    self.history.pop_front();
                }
                self.history.push_back(frame.value);
            }
            return Verdict::Pass(frame);
        }
        match self.action {
            Action::Drop => return Verdict::Drop { attack_id: self.id },
            Action::Modify => {
                frame.value += design_waveform(&self.waveform, frame.ts - self.window.start);
            }
            Action::Replay => {
                if !self.history.is_empty() {
                    frame.value = self.history[self.replay_idx % self.history.len()];
                    self.replay_idx += 1;
                }
            }
        }
        frame.attack_id = self.id;
        Verdict::Pass(frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TapMode {
    Drop,
    Replay,
    Freeze,
    Offset(Waveform),
}

/// Interceptor on the controller → DM report stream. The engine calls
/// [`ReportTap::observe`] once per control cycle so that the value shown to
/// the DM nodes is defined at every sample, not just at report instants.
#[derive(Debug, Clone)]
pub struct ReportTap {
    pub id: u32,
    pub targets: Vec<NodeId>,
    pub window: Window,
    pub armed_at: f64,
    mode: TapMode,
    history: VecDeque<f64>,
    replay_idx: usize,
    last_good: Option<f64>,
    current: Option<f64>,
    active: bool,
}

impl ReportTap {
    /// Tap for an attack touching the report stream, if it does.
    pub fn for_spec(spec: &AttackSpec) -> Option<ReportTap> {
        let mode = match (spec.kind, spec.report_policy) {
            (AttackKind::Stealthy, Some(ReportPolicy::FreezeLastGood)) => TapMode::Freeze,
            (AttackKind::Stealthy, Some(ReportPolicy::SafeEnvelopeReplay)) => TapMode::Replay,
            (AttackKind::Stealthy, Some(ReportPolicy::Offset(w))) => TapMode::Offset(w),
            (AttackKind::Stealthy, None) => return None,
            _ if spec.injection_point == InjectionPoint::SensorToDm && spec.kind != AttackKind::Dos => {
                match spec.action {
                    Action::Drop => TapMode::Drop,
                    Action::Replay => TapMode::Replay,
                    Action::Modify => TapMode::Offset(spec.waveform),
                }
            }
            _ => return None,
        };
        Some(ReportTap {
            id: spec.id,
            targets: spec.dm_set(),
            window: spec.window,
            armed_at: spec.armed_at(),
            mode,
            history: VecDeque::with_capacity(REPLAY_DEPTH),
            replay_idx: 0,
            last_good: None,
            current: None,
            active: false,
        })
    }

    /// Advance to the control cycle at `t` where the controller holds
    /// `y_ctrl`. Returns the value the targeted DM nodes are shown, or
    /// `None` when their reports are being dropped.
    pub fn observe(&mut self, y_ctrl: f64, t: f64, report_instant: bool) -> Option<f64> {
        self.active = self.window.contains(t) && t >= self.armed_at - 1e-9;
        if !self.active {
            if t < self.window.start && report_instant {
                if self.history.len() == REPLAY_DEPTH {
                    self.history.pop_front();
                }
                self.history.push_back(y_ctrl);
                self.last_good = Some(y_ctrl);
            }
            self.current = Some(y_ctrl);
            return self.current;
        }
        self.current = match self.mode {
            TapMode::Drop => None,
            TapMode::Freeze => Some(self.last_good.unwrap_or(y_ctrl)),
            TapMode::Offset(w) => Some(y_ctrl + design_waveform(&w, t - self.window.start)),
            TapMode::Replay => {
                if self.history.is_empty() {
                    Some(y_ctrl)
                } else {
                    if report_instant || self.current.is_none() {
                        let v = self.history[self.replay_idx % self.history.len()];
                        if report_instant {
                            self.replay_idx += 1;
                        }
                        Some(v)
                    } else {
                        // between reports the DM keeps showing the last replayed value
                        let i = self.replay_idx.max(1) - 1;
                        Some(self.history[i % self.history.len()])
                    }
                }
            }
        };
        self.current
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn targets_node(&self, node: NodeId) -> bool {
        self.targets.contains(&node)
    }
}

impl Interceptor for ReportTap {
    fn intercept(&mut self, mut frame: Frame) -> Verdict {
        let on_stream = frame.src == NodeId::Controller && frame.addr == reg::PV && self.targets.contains(&frame.dst);
        if !on_stream || !self.active {
            return Verdict::Pass(frame);
        }
        match self.current {
            None => Verdict::Drop { attack_id: self.id },
            Some(v) => {
                frame.value = v;
                frame.attack_id = self.id;
                Verdict::Pass(frame)
            }
        }
    }
}

/// Controller communication-stack load model under a packet flood.
///
/// Control tasks run at real-time priority and consume no capacity when the
/// controller runs an RTOS; reporting (and, without an RTOS, sensor input)
/// loses the fraction of frames that exceeds capacity.
#[derive(Debug, Clone)]
pub struct DosModel {
    pub id: u32,
    pub rate: f64,
    pub window: Window,
    pub armed_at: f64,
    pub capacity: f64,
    pub rtos: bool,
    /// Background frames/min competing for capacity.
    pub background: f64,
    report_credit: f64,
    control_credit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fate {
    Deliver,
    Delay(f64),
    Drop,
}

impl DosModel {
    /// `report_rate` and `control_rate` are the normal frames/min the
    /// controller sends to DM nodes and exchanges with the field devices.
    pub fn new(spec: &AttackSpec, capacity: f64, rtos: bool, report_rate: f64, control_rate: f64) -> Self {
        let background = if rtos { report_rate } else { report_rate + control_rate };
        Self {
            id: spec.id,
            rate: spec.dos_rate,
            window: spec.window,
            armed_at: spec.armed_at(),
            capacity,
            rtos,
            background,
            report_credit: 0.0,
            control_credit: 0.0,
        }
    }

    pub fn active_at(&self, t: f64) -> bool {
        self.window.contains(t) && t >= self.armed_at - 1e-9
    }

    /// Share of communication frames that cannot be serviced.
    pub fn overload(&self) -> f64 {
        let demand = self.rate + self.background;
        if demand <= self.capacity {
            0.0
        } else {
            (demand - self.capacity) / demand
        }
    }

    /// Flood frame timestamps over the window.
    pub fn flood_times(&self) -> impl Iterator<Item = f64> + '_ {
        let start = self.armed_at.max(self.window.start);
        let n = libm::floor((self.window.end - start) * self.rate + 1e-9) as u64;
        (0..=n).map(move |j| start + j as f64 / self.rate).filter(move |t| *t <= self.window.end + 1e-9)
    }

    fn fate(credit: &mut f64, p: f64, capacity: f64) -> Fate {
        if p <= 0.0 {
            return Fate::Deliver;
        }
        *credit += p;
        if *credit >= 1.0 - 1e-12 {
            *credit -= 1.0;
            Fate::Drop
        } else {
            Fate::Delay(1.0 / capacity)
        }
    }

    /// Fate of one report frame sent at `t`.
    pub fn report_fate(&mut self, t: f64) -> Fate {
        if !self.active_at(t) {
            return Fate::Deliver;
        }
        let p = self.overload();
        Self::fate(&mut self.report_credit, p, self.capacity)
    }

    /// Whether the control cycle at `t` loses its sensor input.
    pub fn control_starved(&mut self, t: f64) -> bool {
        if self.rtos || !self.active_at(t) {
            return false;
        }
        let p = self.overload();
        matches!(Self::fate(&mut self.control_credit, p, self.capacity), Fate::Drop)
    }
}

/// Attribute grid for attack planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackGrid {
    pub kinds: Vec<AttackKind>,
    pub points: Vec<InjectionPoint>,
    pub actions: Vec<Action>,
    pub waveforms: Vec<WaveformKind>,
    pub magnitudes: Vec<f64>,
    pub dos_rates: Vec<f64>,
    /// Number of zero-day attacks held out for the test split.
    pub zero_day: usize,
    /// Scenario length the plan must fit in (min).
    pub duration: f64,
    /// Fraction of the scenario used for training; zero-days go after it.
    pub train_fraction: f64,
    pub start: f64,
    pub window_len: f64,
    pub gap: f64,
    /// Lead time of the attack vector before each window (min).
    pub vector_lead: f64,
    pub sample_period: f64,
    pub pulse_fraction: f64,
    pub ramp_time: f64,
    pub stealth_threshold: f64,
    pub dm_targets: Vec<NodeId>,
}

impl Default for AttackGrid {
    fn default() -> Self {
        Self {
            kinds: alloc::vec![AttackKind::IntegritySca],
            points: alloc::vec![InjectionPoint::SensorToController],
            actions: alloc::vec![Action::Modify],
            waveforms: alloc::vec![WaveformKind::Step],
            magnitudes: alloc::vec![0.1],
            dos_rates: alloc::vec![1200.0],
            zero_day: 0,
            duration: 60.0,
            train_fraction: 0.7,
            start: 1.0,
            window_len: 1.0,
            gap: 2.0,
            vector_lead: 0.5,
            sample_period: 0.1,
            pulse_fraction: 0.5,
            ramp_time: 0.5,
            stealth_threshold: 0.01,
            dm_targets: ALL_DM.to_vec(),
        }
    }
}

/// Behavioural fingerprint of an attack on a canonical probe sequence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fingerprint {
    class: u8,
    stream: u8,
    targets: Vec<NodeId>,
    dos_rate_bits: u64,
    outputs: Vec<Option<i64>>,
}

pub const PROBE_LEN: usize = 100;

fn probe_value(i: usize) -> f64 {
    0.4625 + 0.05 * libm::sin(i as f64 / 7.0)
}

/// Fingerprint over a 100-sample probe: the interceptor output for every
/// sample (dropped samples as `None`), quantised to 1e-9.
pub fn fingerprint(spec: &AttackSpec, sample_period: f64) -> Fingerprint {
    let class = match spec.kind {
        AttackKind::IntegritySca | AttackKind::IntegrityDm | AttackKind::ZeroDayVariant => 0,
        AttackKind::Stealthy => 1,
        AttackKind::Dos => 2,
    };
    if spec.kind == AttackKind::Dos {
        return Fingerprint {
            class,
            stream: 0,
            targets: Vec::new(),
            dos_rate_bits: spec.dos_rate.to_bits(),
            outputs: Vec::new(),
        };
    }
    let stream = spec.injection_point as u8;
    let start = PROBE_LEN as f64 * sample_period;
    let mut probe = spec.clone();
    probe.window = Window::new(start, start + PROBE_LEN as f64 * sample_period);
    probe.vector.clear();
    let q = |v: f64| libm::round(v * 1e9) as i64;
    let mut outputs = Vec::with_capacity(2 * PROBE_LEN);

    let pre = (0..PROBE_LEN).map(|i| (i as f64 * sample_period, probe_value(i)));
    let during = (0..PROBE_LEN).map(|i| (start + i as f64 * sample_period, probe_value(i)));

    if let Some(stream_sel) = Stream::for_point(spec.injection_point) {
        let mut icpt = StreamInterceptor::new(spec.id, stream_sel, probe.window, start, spec.action, spec.waveform);
        let template = probe_frame(stream_sel);
        for (t, v) in pre.clone() {
            let _ = icpt.intercept(Frame { ts: t, value: v, ..template });
        }
        for (t, v) in during.clone() {
            match icpt.intercept(Frame { ts: t, value: v, ..template }) {
                Verdict::Pass(f) | Verdict::Delay { frame: f, .. } => outputs.push(Some(q(f.value))),
                Verdict::Drop { .. } => outputs.push(None),
            }
        }
    }
    if let Some(mut tap) = ReportTap::for_spec(&probe) {
        for (i, (t, v)) in pre.clone().enumerate() {
            tap.observe(v, t, i % 2 == 0);
        }
        for (i, (t, v)) in during.clone().enumerate() {
            outputs.push(tap.observe(v, t, i % 2 == 0).map(q));
        }
    }
    let targets = if spec.kind == AttackKind::Stealthy || spec.injection_point == InjectionPoint::SensorToDm {
        spec.dm_set()
    } else {
        Vec::new()
    };
    Fingerprint {
        class,
        stream,
        targets,
        dos_rate_bits: 0,
        outputs,
    }
}

fn probe_frame(stream: Stream) -> Frame {
    let (src, dst, fn_code, addr) = match stream {
        Stream::SensorToController => (NodeId::Sensor, NodeId::Controller, FnCode::Read, reg::PV),
        Stream::ActuatorCmd => (NodeId::Controller, NodeId::Actuator, FnCode::Write, reg::OP),
        Stream::SetpointWrites => (NodeId::Hmi, NodeId::Controller, FnCode::Write, reg::SETPOINT),
        Stream::ManualCommands => (NodeId::Hmi, NodeId::Controller, FnCode::Write, reg::MANUAL_OP),
    };
    Frame {
        ts: 0.0,
        seq: 0,
        src,
        dst,
        proto: crate::net::link_proto(src, dst).expect("stream on a legal link"),
        fn_code,
        addr,
        value: 0.0,
        txn: 0,
        attack_id: 0,
    }
}

fn waveform_for(kind: WaveformKind, magnitude: f64, grid: &AttackGrid) -> Waveform {
    match kind {
        WaveformKind::Step => Waveform::step(magnitude),
        WaveformKind::Pulse => Waveform::pulse(magnitude, grid.window_len * grid.pulse_fraction),
        WaveformKind::Ramp => Waveform::ramp(magnitude / grid.ramp_time, magnitude),
        WaveformKind::StealthRamp => Waveform::stealth_ramp(grid.stealth_threshold, grid.sample_period, magnitude),
    }
}

pub const STREAM_PLAN: u64 = 2;

/// Enumerate the attribute grid, prune illegal and behaviourally duplicate
/// candidates, hold out zero-day combinations, truncate round-robin across
/// (kind, point) classes and pack windows into the scenario.
pub fn plan_attacks(grid: &AttackGrid, limit: usize, seed: u64) -> Result<Vec<AttackSpec>> {
    if grid.kinds.is_empty() || limit == 0 {
        return Err(Error::Planning("empty attack grid".into()));
    }
    if !(grid.window_len > 0.0 && grid.sample_period > 0.0 && grid.duration > 0.0) {
        return Err(Error::Planning("window_len, sample_period and duration must be positive".into()));
    }
    let needs_points = grid.kinds.iter().any(|k| *k != AttackKind::Dos);
    if needs_points && (grid.points.is_empty() || grid.actions.is_empty() || grid.waveforms.is_empty()) {
        return Err(Error::Planning("integrity kinds need points, actions and waveforms".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_PLAN);

    let placeholder = Window::new(0.0, grid.window_len);
    let mut candidates: Vec<AttackSpec> = Vec::new();
    let mut seen: BTreeSet<Fingerprint> = BTreeSet::new();
    let magnitudes: &[f64] = if grid.magnitudes.is_empty() { &[0.0] } else { &grid.magnitudes };
    let mut push = |spec: AttackSpec, candidates: &mut Vec<AttackSpec>| {
        if spec.validate(f64::INFINITY, grid.sample_period).is_err() {
            return;
        }
        if seen.insert(fingerprint(&spec, grid.sample_period)) {
            candidates.push(spec);
        }
    };
    for &kind in &grid.kinds {
        if kind == AttackKind::Dos {
            for &rate in &grid.dos_rates {
                let spec = AttackSpec {
                    id: 1,
                    kind,
                    injection_point: InjectionPoint::SensorToController,
                    action: Action::Modify,
                    waveform: Waveform::step(0.0),
                    window: placeholder,
                    vector: Vec::new(),
                    dm_targets: Vec::new(),
                    dos_rate: rate,
                    zero_day: false,
                    report_policy: None,
                    log_wipe: false,
                };
                push(spec, &mut candidates);
            }
            continue;
        }
        for &point in &grid.points {
            if !point_is_legal(kind, point) || kind == AttackKind::ZeroDayVariant {
                continue;
            }
            for &action in &grid.actions {
                for &wk in &grid.waveforms {
                    for &mag in magnitudes {
                        let stealthy = kind == AttackKind::Stealthy;
                        let spec = AttackSpec {
                            id: 1,
                            kind,
                            injection_point: point,
                            action,
                            waveform: waveform_for(wk, mag, grid),
                            window: placeholder,
                            vector: Vec::new(),
                            dm_targets: if stealthy || point == InjectionPoint::SensorToDm {
                                grid.dm_targets.clone()
                            } else {
                                Vec::new()
                            },
                            dos_rate: 0.0,
                            zero_day: false,
                            report_policy: if stealthy { Some(ReportPolicy::FreezeLastGood) } else { None },
                            log_wipe: false,
                        };
                        push(spec, &mut candidates);
                    }
                }
            }
        }
    }
    if candidates.is_empty() {
        return Err(Error::Planning("no legal attack in the grid".into()));
    }

    // zero-day holdout: whole (point, waveform kind) combinations of
    // integrity modifications disappear from training
    let mut zero_days: Vec<AttackSpec> = Vec::new();
    if grid.zero_day > 0 {
        let mut combos: Vec<(InjectionPoint, WaveformKind)> = candidates
            .iter()
            .filter(|c| matches!(c.kind, AttackKind::IntegritySca | AttackKind::IntegrityDm) && c.action == Action::Modify)
            .map(|c| (c.injection_point, c.waveform.kind))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if combos.len() < grid.zero_day {
            return Err(Error::Planning(format!(
                "grid has {} integrity MODIFY combinations, {} zero-day attacks requested",
                combos.len(),
                grid.zero_day
            )));
        }
        combos.shuffle(&mut rng);
        for combo in combos.into_iter().take(grid.zero_day) {
            let is_combo = |c: &AttackSpec| {
                matches!(c.kind, AttackKind::IntegritySca | AttackKind::IntegrityDm)
                    && (c.injection_point, c.waveform.kind) == combo
            };
            // smallest deviation from normal behaviour
            let pick = candidates
                .iter()
                .filter(|c| is_combo(c) && c.action == Action::Modify)
                .min_by(|a, b| libm::fabs(a.waveform.magnitude).total_cmp(&libm::fabs(b.waveform.magnitude)))
                .cloned()
                .expect("combo drawn from candidates");
            candidates.retain(|c| !is_combo(c));
            let mut z = pick;
            z.kind = AttackKind::ZeroDayVariant;
            z.zero_day = true;
            zero_days.push(z);
        }
    }

    let regular_quota = limit.saturating_sub(zero_days.len());
    let mut classes: BTreeMap<(AttackKind, InjectionPoint), Vec<AttackSpec>> = BTreeMap::new();
    let mut class_order: Vec<(AttackKind, InjectionPoint)> = Vec::new();
    for c in candidates {
        let key = (c.kind, c.injection_point);
        if !classes.contains_key(&key) {
            class_order.push(key);
        }
        classes.entry(key).or_default().push(c);
    }
    for members in classes.values_mut() {
        members.shuffle(&mut rng);
        members.reverse();
    }
    let mut regular = Vec::new();
    while regular.len() < regular_quota {
        let mut progressed = false;
        for key in &class_order {
            if regular.len() == regular_quota {
                break;
            }
            if let Some(c) = classes.get_mut(key).and_then(|m| m.pop()) {
                regular.push(c);
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }

    // window packing
    let boundary = grid.duration * grid.train_fraction;
    let mut plan = Vec::with_capacity(regular.len() + zero_days.len());
    let mut cursor = grid.start.max(grid.vector_lead);
    for spec in regular {
        let w = Window::new(cursor, cursor + grid.window_len);
        if w.end > boundary + 1e-9 {
            return Err(Error::Planning(format!(
                "{} training attacks do not fit before the split at {} min",
                plan.len() + 1,
                g9(boundary)
            )));
        }
        plan.push(place(spec, w, grid));
        cursor = w.end + grid.gap.max(grid.vector_lead);
    }
    let mut cursor = (boundary + grid.vector_lead.max(grid.gap)).max(cursor);
    for spec in zero_days {
        let w = Window::new(cursor, cursor + grid.window_len);
        if w.end > grid.duration + 1e-9 {
            return Err(Error::Planning(format!(
                "zero-day attacks do not fit between {} and {} min",
                g9(boundary),
                g9(grid.duration)
            )));
        }
        plan.push(place(spec, w, grid));
        cursor = w.end + grid.gap.max(grid.vector_lead);
    }
    for (i, s) in plan.iter_mut().enumerate() {
        s.id = i as u32 + 1;
    }
    Ok(plan)
}

fn place(mut spec: AttackSpec, window: Window, grid: &AttackGrid) -> AttackSpec {
    spec.window = window;
    if grid.vector_lead > 0.0 {
        spec.vector = default_vector(spec.injection_point, spec.kind, grid.vector_lead);
    }
    spec
}
