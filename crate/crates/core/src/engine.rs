//! Discrete-time scenario execution on the integration grid.
//!
//! Each tick processes, in order: disturbances and faults, queued discrete
//! events (vector steps, floods, operator and attacker commands, delayed
//! reports), and on sample ticks the control cycle: sensor poll, safety
//! check and control law, actuator write, reports to the DM nodes and the
//! physical record. The plant then advances one integration step.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attack::{
    design_waveform, execute_vector, Action, AttackKind, AttackSpec, DosModel, Fate, InjectionPoint, ReportTap,
    Stream, StreamInterceptor, VectorEmission,
};
use crate::control::{pi_update, safety_check, set_control_mode, manual_write, ControlMode, ControllerConfig, ControllerState, Failsafe};
use crate::dataset::{label_at, LabeledRecord};
use crate::error::{Error, Result};
use crate::fmt::g9;
use crate::host::{action_event, login_event, logout_event, HostEvent, HostEventKind, HostLog, SessionOp};
use crate::net::{deliver_frame, reg, sort_captures, CaptureRecord, Delivery, FnCode, Frame, Interceptor, Network, NodeId, Verdict, MODE_AUTO, MODE_MANUAL};
use crate::plant::{apply_fault_event, integrate_step, FaultEvent, PlantState, Sensor, SystemMode};
use crate::scenario::{IrregularKind, ScenarioConfig};
use crate::time::{Clock, Tick};

pub const STREAM_NOISE: u64 = 1;
pub const STREAM_JITTER: u64 = 3;

/// Safety-relevant outcome of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    /// First time the true concentration exceeded the trip level while the
    /// loop was not tripped.
    pub hazard_at: Option<f64>,
    /// First trip of the loop, by the controller itself or a DM node.
    pub intervention_at: Option<f64>,
    pub intervention_by: Option<NodeId>,
    /// The intervention happened while the true state was safe.
    pub futile: bool,
    pub reports_dropped: usize,
}

impl Outcome {
    pub fn hazard(&self) -> bool {
        self.hazard_at.is_some()
    }

    pub fn intervention(&self) -> bool {
        self.intervention_at.is_some()
    }

    /// Table cell name for the run.
    pub fn cell(&self) -> &'static str {
        match (self.intervention(), self.futile, self.hazard()) {
            (true, true, _) => "DM_INTERVENTION_FUTILE",
            (true, false, _) => "DM_INTERVENTION",
            (false, _, true) => "HAZARD",
            (false, _, false) => "NORMAL_OPERATION",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub records: Vec<LabeledRecord>,
    pub captures: Vec<CaptureRecord>,
    pub host: Vec<HostEvent>,
    pub attacks: Vec<AttackSpec>,
    /// Mode entered at each automaton transition, starting with (0, NORMAL).
    pub mode_schedule: Vec<(f64, SystemMode)>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone)]
enum Cmd {
    Disturbance(f64),
    Fault(FaultEvent),
    VectorFrame { src: NodeId, dst: NodeId, fn_code: FnCode, addr: u16, attack_id: u32 },
    Flood { attack_id: u32 },
    Session { actor: String, op: SessionOp },
    Irregular { kind: IrregularKind, mode: Option<ControlMode> },
    Report { frame: Frame },
}

/// Attacker-issued HMI commands (MODIFY on the command points).
#[derive(Debug, Clone)]
struct CommandAttack {
    spec: AttackSpec,
    via_hmi: bool,
    started: bool,
    ended: bool,
    last: Option<f64>,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    attacks: &'a [AttackSpec],
    clock: Clock,
    sample_ticks: Tick,
    report_every: u64,
    ctrl_cfg: ControllerConfig,
    ctrl: ControllerState,
    plant: PlantState,
    sensor: Sensor,
    actuator_u: f64,
    y_ctrl: f64,
    net: Network,
    host: HostLog,
    streams: Vec<StreamInterceptor>,
    taps: Vec<ReportTap>,
    dos: Vec<DosModel>,
    commands: Vec<CommandAttack>,
    jitter: ChaCha8Rng,
    queue: BTreeMap<(Tick, u8, u64), (f64, Cmd)>,
    order: u64,
    records: Vec<LabeledRecord>,
    mode_schedule: Vec<(f64, SystemMode)>,
    outcome: Outcome,
}

fn prio(c: &Cmd) -> u8 {
    match c {
        Cmd::Disturbance(_) => 0,
        Cmd::Fault(_) => 1,
        Cmd::VectorFrame { .. } => 2,
        Cmd::Flood { .. } => 3,
        Cmd::Session { .. } | Cmd::Irregular { .. } => 4,
        Cmd::Report { .. } => 5,
    }
}

/// Run a validated scenario with the given attack catalog.
pub fn simulate(cfg: &ScenarioConfig, attacks: &[AttackSpec]) -> Result<SimOutput> {
    if let Err(errs) = cfg.validate() {
        return Err(Error::Config(errs.join("; ")));
    }
    for a in attacks {
        a.validate(cfg.duration, cfg.controller.sample_period)?;
    }
    let mut sim = Sim::new(cfg, attacks)?;
    sim.run()?;
    Ok(sim.finish())
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig, attacks: &'a [AttackSpec]) -> Result<Self> {
        let clock = Clock::new(cfg.plant.dt);
        let sample_ticks = clock
            .ticks_in(cfg.controller.sample_period)
            .ok_or(Error::Config("sample period is not a whole number of integration steps".into()))?;
        let report_every = libm::round(cfg.traffic.report_period / cfg.traffic.poll_period) as u64;
        let ctrl_cfg = cfg.controller;
        let plant = PlantState::steady(&cfg.plant, cfg.initial_c_a0);
        let mut jitter = ChaCha8Rng::seed_from_u64(cfg.seed);
        jitter.set_stream(STREAM_JITTER);
        let report_rate = 2.0 / cfg.traffic.report_period;
        let control_rate = 3.0 / cfg.traffic.poll_period;

        let mut sim = Sim {
            cfg,
            attacks,
            clock,
            sample_ticks,
            report_every: report_every.max(1),
            ctrl_cfg,
            ctrl: ControllerState::new(&ctrl_cfg),
            actuator_u: ctrl_cfg.clamp(ctrl_cfg.u_bias),
            y_ctrl: plant.c_a,
            plant,
            sensor: Sensor::new(cfg.plant.noise_std, cfg.seed, STREAM_NOISE),
            net: Network::new(),
            host: HostLog::new(cfg.duration),
            streams: Vec::new(),
            taps: Vec::new(),
            dos: Vec::new(),
            commands: Vec::new(),
            jitter,
            queue: BTreeMap::new(),
            order: 0,
            records: Vec::new(),
            mode_schedule: alloc::vec![(0.0, SystemMode::Normal)],
            outcome: Outcome::default(),
        };

        for d in &cfg.disturbances {
            sim.push(d.at, Cmd::Disturbance(d.c_a0));
        }
        for f in &cfg.faults {
            sim.push(f.at, Cmd::Fault(*f));
        }
        for s in &cfg.sessions {
            sim.host.record_event(login_event(s.login, &s.operator))?;
            sim.host.record_event(logout_event(s.logout, &s.operator))?;
            for a in &s.actions {
                sim.push(
                    a.at,
                    Cmd::Session {
                        actor: s.operator.clone(),
                        op: a.op,
                    },
                );
            }
        }
        for e in &cfg.irregular {
            sim.push(e.at, Cmd::Irregular { kind: e.kind, mode: e.mode });
        }
        for spec in attacks {
            sim.install(spec, report_rate, control_rate)?;
        }
        Ok(sim)
    }

    fn push(&mut self, ts: f64, cmd: Cmd) {
        let key = (self.clock.tick(ts), prio(&cmd), self.order);
        self.order += 1;
        self.queue.insert(key, (ts, cmd));
    }

    fn install(&mut self, spec: &AttackSpec, report_rate: f64, control_rate: f64) -> Result<()> {
        if !spec.vector.is_empty() {
            for em in execute_vector(spec)? {
                match em {
                    VectorEmission::Host(e) => self.host.record_event(e)?,
                    VectorEmission::Frame { ts, src, dst, fn_code, addr } => self.push(
                        ts,
                        Cmd::VectorFrame {
                            src,
                            dst,
                            fn_code,
                            addr,
                            attack_id: spec.id,
                        },
                    ),
                }
            }
        }
        if spec.kind == AttackKind::Dos {
            let model = DosModel::new(spec, self.ctrl_cfg.capacity, self.ctrl_cfg.rtos, report_rate, control_rate);
            let times: Vec<f64> = model.flood_times().collect();
            for t in times {
                if t < self.cfg.duration {
                    self.push(t, Cmd::Flood { attack_id: spec.id });
                }
            }
            self.dos.push(model);
            return Ok(());
        }
        if let Some(tap) = ReportTap::for_spec(spec) {
            self.taps.push(tap);
        }
        let command_point = matches!(spec.injection_point, InjectionPoint::DmToActuator | InjectionPoint::ControllerParam);
        if command_point && spec.action == Action::Modify {
            let via_hmi = spec.vector.last().map(|s| s.to == NodeId::Hmi).unwrap_or(false);
            self.commands.push(CommandAttack {
                spec: spec.clone(),
                via_hmi,
                started: false,
                ended: false,
                last: None,
            });
        } else if let Some(stream) = Stream::for_point(spec.injection_point) {
            self.streams.push(StreamInterceptor::new(
                spec.id,
                stream,
                spec.window,
                spec.armed_at(),
                spec.action,
                spec.waveform,
            ));
        }
        Ok(())
    }

    fn run(&mut self) -> Result<()> {
        let end = self.clock.tick(self.cfg.duration);
        for k in 0..end {
            let t = self.clock.minutes(k);
            self.plant.t = t;
            while let Some((&key, _)) = self.queue.first_key_value() {
                if key.0 > k {
                    break;
                }
                let (ts, cmd) = self.queue.remove(&key).expect("key present");
                self.dispatch(ts, cmd)?;
            }
            if k % self.sample_ticks == 0 {
                let n = k / self.sample_ticks;
                self.attack_commands(t, true)?;
                self.control_cycle(t, n % self.report_every == 0)?;
            } else {
                self.attack_commands(t, false)?;
            }
            let mut next = integrate_step(&self.plant, self.actuator_u, &self.cfg.plant)?;
            next.t = self.clock.minutes(k + 1);
            self.plant = next;
        }
        Ok(())
    }

    fn finish(mut self) -> SimOutput {
        for a in self.attacks.iter().filter(|a| a.log_wipe) {
            self.host.wipe(NodeId::Controller, a.window.start, a.window.end);
        }
        let mut captures = self.net.into_captures();
        sort_captures(&mut captures);
        SimOutput {
            records: self.records,
            captures,
            host: self.host.into_events(),
            attacks: self.attacks.to_vec(),
            mode_schedule: self.mode_schedule,
            outcome: self.outcome,
        }
    }

    fn log(&mut self, e: HostEvent) -> Result<()> {
        self.host.record_event(e)
    }

    fn dispatch(&mut self, ts: f64, cmd: Cmd) -> Result<()> {
        match cmd {
            Cmd::Disturbance(c) => self.plant.c_a0 = c,
            Cmd::Fault(f) => {
                let due = FaultEvent { at: self.plant.t, ..f };
                self.plant = apply_fault_event(&self.plant, &due)?;
                self.mode_schedule.push((ts, self.plant.mode));
            }
            Cmd::VectorFrame {
                src,
                dst,
                fn_code,
                addr,
                attack_id,
            } => {
                let mut f = self.net.frame(ts, src, dst, fn_code, addr, 0.0)?;
                f.attack_id = attack_id;
                deliver_frame(&mut self.net, f, &mut [])?;
            }
            Cmd::Flood { attack_id } => {
                let mut f = self.net.frame(ts, NodeId::Attacker, NodeId::Controller, FnCode::Write, reg::SCAN_BASE, 0.0)?;
                f.attack_id = attack_id;
                deliver_frame(&mut self.net, f, &mut [])?;
            }
            Cmd::Session { actor, op } => {
                self.log(action_event(ts, &actor, &op))?;
                self.hmi_op(ts, &op, 0)?;
            }
            Cmd::Irregular { kind, mode } => match kind {
                IrregularKind::OperatorManualPoll => {
                    self.log(HostEvent::new(ts, NodeId::Hmi, HostEventKind::CmdIssued, "hmi", "cmd=manual_poll".into()))?;
                    self.manual_poll(ts, 0)?;
                }
                IrregularKind::ModeSwitchTraffic => {
                    let mode = mode.unwrap_or(ControlMode::Auto);
                    let op = SessionOp::SetMode { mode, manual_u: None };
                    self.log(action_event(ts, "hmi", &op))?;
                    self.hmi_op(ts, &op, 0)?;
                }
                IrregularKind::SafetyTripBcast => self.trip(ts, NodeId::Controller, "scheduled", true)?,
            },
            Cmd::Report { frame } => self.dm_receive(frame)?,
        }
        Ok(())
    }

    /// Frames an HMI command puts on the wire.
    fn hmi_op(&mut self, ts: f64, op: &SessionOp, attack_id: u32) -> Result<()> {
        match *op {
            SessionOp::SetMode { mode, manual_u } => {
                let v = if mode == ControlMode::Manual { MODE_MANUAL } else { MODE_AUTO };
                self.hmi_write(ts, reg::MODE, v, attack_id)?;
                if let Some(u) = manual_u {
                    self.hmi_write(ts, reg::MANUAL_OP, u, attack_id)?;
                }
            }
            SessionOp::WriteOutput { u } => self.hmi_write(ts, reg::MANUAL_OP, u, attack_id)?,
            SessionOp::WriteSetpoint { setpoint } => self.hmi_write(ts, reg::SETPOINT, setpoint, attack_id)?,
            SessionOp::ManualPoll => self.manual_poll(ts, attack_id)?,
        }
        Ok(())
    }

    fn hmi_write(&mut self, ts: f64, addr: u16, value: f64, attack_id: u32) -> Result<()> {
        let mut f = self.net.frame(ts, NodeId::Hmi, NodeId::Controller, FnCode::Write, addr, value)?;
        f.attack_id = attack_id;
        let mut chain: Vec<&mut dyn Interceptor> = self.streams.iter_mut().map(|s| s as &mut dyn Interceptor).collect();
        match deliver_frame(&mut self.net, f, &mut chain)? {
            Delivery::Delivered(g) | Delivery::Delayed(g, _) => self.controller_receive(g),
            Delivery::Dropped => Ok(()),
        }
    }

    fn manual_poll(&mut self, ts: f64, attack_id: u32) -> Result<()> {
        let mut req = self.net.frame(ts, NodeId::Hmi, NodeId::Controller, FnCode::Read, reg::PV, 0.0)?;
        req.attack_id = attack_id;
        deliver_frame(&mut self.net, req, &mut [])?;
        let mut resp = self.net.response(&req, ts, self.y_ctrl);
        resp.attack_id = attack_id;
        let mut chain: Vec<&mut dyn Interceptor> = self.taps.iter_mut().map(|s| s as &mut dyn Interceptor).collect();
        deliver_frame(&mut self.net, resp, &mut chain)?;
        Ok(())
    }

    /// Controller handling of a WRITE it received.
    fn controller_receive(&mut self, f: Frame) -> Result<()> {
        let ts = f.ts;
        let detail = format!("src={} addr={} value={}", f.src.as_str(), f.addr, g9(f.value));
        self.log(HostEvent::new(ts, NodeId::Controller, HostEventKind::CmdIssued, f.src.as_str(), detail).with_attack(f.attack_id))?;
        let rejected = |me: &mut Self, why: &str| {
            me.log(
                HostEvent::new(
                    ts,
                    NodeId::Controller,
                    HostEventKind::SysError,
                    "control",
                    format!("event=rejected_write addr={} reason={}", f.addr, why),
                )
                .with_attack(f.attack_id),
            )
        };
        match f.addr {
            reg::MODE => {
                let mode = if f.value == MODE_MANUAL { ControlMode::Manual } else { ControlMode::Auto };
                self.ctrl = set_control_mode(&self.ctrl, mode, None, &self.ctrl_cfg)?;
                let name = if mode == ControlMode::Manual { "MANUAL" } else { "AUTO" };
                self.log(
                    HostEvent::new(ts, NodeId::Controller, HostEventKind::ModeSwitch, "control", format!("mode={}", name))
                        .with_attack(f.attack_id),
                )?;
            }
            reg::MANUAL_OP => match manual_write(&self.ctrl, f.value, &self.ctrl_cfg) {
                Ok(st) => self.ctrl = st,
                Err(_) => rejected(self, "not_accepted")?,
            },
            reg::SETPOINT => {
                if f.value.is_finite() && f.value >= 0.0 && f.value < self.ctrl_cfg.haz_threshold {
                    self.ctrl_cfg.setpoint = f.value;
                    self.log(
                        HostEvent::new(
                            ts,
                            NodeId::Controller,
                            HostEventKind::ConfigChange,
                            "control",
                            format!("setpoint={}", g9(f.value)),
                        )
                        .with_attack(f.attack_id),
                    )?;
                } else {
                    rejected(self, "out_of_range")?;
                }
            }
            reg::TRIP => self.trip(ts, f.src, "dm", true)?,
            _ => rejected(self, "unknown_register")?,
        }
        Ok(())
    }

    /// Latch the safety trip, broadcast it and, unless the control cycle is
    /// about to write, drive the actuator to zero now.
    fn trip(&mut self, ts: f64, by: NodeId, cause: &str, write_now: bool) -> Result<()> {
        if self.ctrl.tripped {
            return Ok(());
        }
        self.ctrl.tripped = true;
        self.ctrl.last_u = 0.0;
        if self.outcome.intervention_at.is_none() {
            self.outcome.intervention_at = Some(ts);
            self.outcome.intervention_by = Some(by);
            self.outcome.futile = self.plant.c_a <= self.ctrl_cfg.haz_threshold;
        }
        self.log(HostEvent::new(
            ts,
            NodeId::Controller,
            HostEventKind::ModeSwitch,
            "safety",
            format!("mode=TRIPPED cause={} by={}", cause, by.as_str()),
        ))?;
        for dst in [NodeId::Hmi, NodeId::Logserver] {
            let f = self.net.frame(ts, NodeId::Controller, dst, FnCode::TripBcast, reg::TRIP, 1.0)?;
            deliver_frame(&mut self.net, f, &mut [])?;
        }
        if write_now {
            self.actuator_write(ts, 0.0)?;
        }
        Ok(())
    }

    fn actuator_write(&mut self, ts: f64, u: f64) -> Result<()> {
        let detail = format!("dst=ACTUATOR addr={} value={} pv={}", reg::OP, g9(u), g9(self.y_ctrl));
        self.log(HostEvent::new(ts, NodeId::Controller, HostEventKind::CmdIssued, "control", detail))?;
        let f = self.net.frame(ts, NodeId::Controller, NodeId::Actuator, FnCode::Write, reg::OP, u)?;
        let mut chain: Vec<&mut dyn Interceptor> = self.streams.iter_mut().map(|s| s as &mut dyn Interceptor).collect();
        if let Delivery::Delivered(g) | Delivery::Delayed(g, _) = deliver_frame(&mut self.net, f, &mut chain)? {
            self.actuator_u = g.value.clamp(self.ctrl_cfg.u_min, self.ctrl_cfg.u_max);
        }
        Ok(())
    }

    fn attack_commands(&mut self, t: f64, sample: bool) -> Result<()> {
        for i in 0..self.commands.len() {
            let c = &self.commands[i];
            let (w, start, armed) = (c.spec.window, c.spec.window.start, c.spec.armed_at());
            let begin = start.max(armed);
            let id = c.spec.id;
            let point = c.spec.injection_point;
            let via_hmi = c.via_hmi;
            let near = |x: f64| libm::fabs(x - t) < 0.5 * self.clock.dt;
            let value = match point {
                InjectionPoint::DmToActuator => self
                    .ctrl_cfg
                    .clamp(self.cfg.controller.u_bias + design_waveform(&c.spec.waveform, t - start)),
                _ => self.cfg.controller.setpoint + design_waveform(&c.spec.waveform, t - start),
            };
            let op = match point {
                InjectionPoint::DmToActuator => {
                    if !c.started && (near(begin) || (t > begin && t <= w.end)) {
                        Some(SessionOp::SetMode {
                            mode: ControlMode::Manual,
                            manual_u: Some(value),
                        })
                    } else if c.started && !c.ended && (near(w.end) || t > w.end) {
                        Some(SessionOp::SetMode {
                            mode: ControlMode::Auto,
                            manual_u: None,
                        })
                    } else if c.started && !c.ended && sample && c.last != Some(value) {
                        Some(SessionOp::WriteOutput { u: value })
                    } else {
                        None
                    }
                }
                _ => {
                    if !c.started && (near(begin) || (t > begin && t <= w.end)) {
                        Some(SessionOp::WriteSetpoint { setpoint: value })
                    } else if c.started && !c.ended && (near(w.end) || t > w.end) {
                        Some(SessionOp::WriteSetpoint {
                            setpoint: self.cfg.controller.setpoint,
                        })
                    } else if c.started && !c.ended && sample && c.last != Some(value) {
                        Some(SessionOp::WriteSetpoint { setpoint: value })
                    } else {
                        None
                    }
                }
            };
            let Some(op) = op else { continue };
            {
                let c = &mut self.commands[i];
                if !c.started {
                    c.started = true;
                } else if near(w.end) || t > w.end {
                    c.ended = true;
                }
                c.last = Some(value);
            }
            if via_hmi {
                self.log(action_event(t, "operator", &op).with_attack(id))?;
            }
            self.hmi_op(t, &op, id)?;
        }
        Ok(())
    }

    fn control_cycle(&mut self, t: f64, report: bool) -> Result<()> {
        let haz = self.ctrl_cfg.haz_threshold;
        // sensor poll
        let y_true = self.sensor.measure(&self.plant);
        let req = self.net.frame(t, NodeId::Controller, NodeId::Sensor, FnCode::Read, reg::PV, 0.0)?;
        deliver_frame(&mut self.net, req, &mut [])?;
        let resp = self.net.response(&req, t, y_true);
        let mut starved_by = 0u32;
        let delivery = {
            let dos = &mut self.dos;
            let mut starve = |f: Frame| -> Verdict {
                for m in dos.iter_mut() {
                    if m.control_starved(f.ts) {
                        starved_by = m.id;
                        return Verdict::Drop { attack_id: m.id };
                    }
                }
                Verdict::Pass(f)
            };
            let mut chain: Vec<&mut dyn Interceptor> =
                self.streams.iter_mut().map(|s| s as &mut dyn Interceptor).collect();
            chain.push(&mut starve);
            deliver_frame(&mut self.net, resp, &mut chain)?
        };
        let fresh = match delivery {
            Delivery::Delivered(f) | Delivery::Delayed(f, _) => {
                self.y_ctrl = f.value;
                true
            }
            Delivery::Dropped => false,
        };

        // control law
        let u_prev = self.actuator_u;
        let auto_flag = self.ctrl.mode == ControlMode::Auto;
        let u = if !fresh {
            let id = if starved_by != 0 { starved_by } else { self.active_attack(t) };
            let failsafe = match self.ctrl_cfg.failsafe {
                Failsafe::LastKnownGood => "LAST_KNOWN_GOOD",
                Failsafe::FailClosed => "FAIL_CLOSED",
            };
            self.log(
                HostEvent::new(
                    t,
                    NodeId::Controller,
                    HostEventKind::SysError,
                    "control",
                    format!("event=input_timeout failsafe={}", failsafe),
                )
                .with_attack(id),
            )?;
            let u = if self.ctrl.tripped {
                0.0
            } else {
                match self.ctrl_cfg.failsafe {
                    Failsafe::LastKnownGood => self.ctrl.last_u,
                    Failsafe::FailClosed => self.ctrl_cfg.u_min,
                }
            };
            self.ctrl.last_u = u;
            u
        } else {
            let (tripped, st) = safety_check(self.y_ctrl, &self.ctrl_cfg, &self.ctrl);
            if tripped && !self.ctrl.tripped {
                self.trip(t, NodeId::Controller, "high_concentration", false)?;
            }
            self.ctrl = ControllerState { tripped, ..st };
            if tripped {
                0.0
            } else if self.ctrl.mode == ControlMode::Manual {
                self.ctrl.last_u
            } else {
                let (u, st) = pi_update(self.y_ctrl, &self.ctrl_cfg, &self.ctrl)?;
                self.ctrl = st;
                u
            }
        };
        self.actuator_write(t, u)?;

        // reports to the DM nodes
        let y_ctrl = self.y_ctrl;
        let mut y_hmi = y_ctrl;
        for tap in self.taps.iter_mut() {
            let shown = tap.observe(y_ctrl, t, report);
            if tap.is_active() && tap.targets_node(NodeId::Hmi) {
                if let Some(v) = shown {
                    y_hmi = v;
                }
            }
        }
        if report {
            for dst in [NodeId::Hmi, NodeId::Logserver] {
                self.send_report(t, dst, y_ctrl)?;
            }
        }

        let label = label_at(t, self.attacks, self.plant.mode);
        self.records.push(LabeledRecord {
            t,
            u: u_prev,
            y: y_hmi,
            y_true,
            d: self.plant.c_a0,
            auto_flag,
            label,
        });
        if self.plant.c_a > haz && !self.ctrl.tripped && self.outcome.hazard_at.is_none() {
            self.outcome.hazard_at = Some(t);
        }
        Ok(())
    }

    fn active_attack(&self, t: f64) -> u32 {
        label_at(t, self.attacks, SystemMode::Normal).attack_id
    }

    fn send_report(&mut self, t: f64, dst: NodeId, value: f64) -> Result<()> {
        let f = self.net.frame(t, NodeId::Controller, dst, FnCode::Write, reg::PV, value)?;
        let jitter = self.cfg.traffic.jitter;
        let extra = if jitter > 0.0 { self.jitter.random::<f64>() * jitter } else { 0.0 };
        let mut dropped_by = 0u32;
        let delivery = {
            let dos = &mut self.dos;
            let mut load = |f: Frame| -> Verdict {
                for m in dos.iter_mut() {
                    match m.report_fate(f.ts) {
                        Fate::Deliver => {}
                        Fate::Drop => {
                            dropped_by = m.id;
                            return Verdict::Drop { attack_id: m.id };
                        }
                        Fate::Delay(d) => {
                            return Verdict::Delay {
                                frame: f,
                                until: f.ts + d,
                            }
                        }
                    }
                }
                Verdict::Pass(f)
            };
            let mut late = |f: Frame| -> Verdict {
                if extra > 0.0 {
                    Verdict::Delay { frame: f, until: f.ts + extra }
                } else {
                    Verdict::Pass(f)
                }
            };
            let mut chain: Vec<&mut dyn Interceptor> = self.taps.iter_mut().map(|s| s as &mut dyn Interceptor).collect();
            chain.push(&mut load);
            chain.push(&mut late);
            deliver_frame(&mut self.net, f, &mut chain)?
        };
        match delivery {
            Delivery::Delivered(g) => self.dm_receive(g)?,
            Delivery::Delayed(g, until) => self.push(until, Cmd::Report { frame: g }),
            Delivery::Dropped => {
                self.outcome.reports_dropped += 1;
                if dropped_by != 0 {
                    self.log(
                        HostEvent::new(
                            t,
                            NodeId::Controller,
                            HostEventKind::SysError,
                            "netstack",
                            format!("event=tx_queue_overflow dst={}", dst.as_str()),
                        )
                        .with_attack(dropped_by),
                    )?;
                }
            }
        }
        Ok(())
    }

    /// A DM node receives a report; the HMI operator trips the loop when the
    /// reported concentration is above the trip level.
    fn dm_receive(&mut self, f: Frame) -> Result<()> {
        let dst = f.dst;
        self.log(
            HostEvent::new(f.ts, dst, HostEventKind::DataLog, "historian", format!("pv={}", g9(f.value))).with_attack(f.attack_id),
        )?;
        if dst == NodeId::Hmi && f.value > self.ctrl_cfg.haz_threshold && !self.ctrl.tripped {
            self.log(HostEvent::new(
                f.ts,
                NodeId::Hmi,
                HostEventKind::CmdIssued,
                "operator",
                format!("cmd=dm_intervention pv={}", g9(f.value)),
            ))?;
            self.hmi_write(f.ts, reg::TRIP, 1.0, 0)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{ReportPolicy, Waveform, Window};
    use crate::scenario::Disturbance;
    use alloc::vec;

    fn spec(id: u32, kind: AttackKind, point: InjectionPoint, w: Waveform, start: f64, end: f64) -> AttackSpec {
        AttackSpec {
            id,
            kind,
            injection_point: point,
            action: Action::Modify,
            waveform: w,
            window: Window::new(start, end),
            vector: Vec::new(),
            dm_targets: Vec::new(),
            dos_rate: 0.0,
            zero_day: false,
            report_policy: None,
            log_wipe: false,
        }
    }

    #[test]
    fn baseline_is_steady() {
        let cfg = ScenarioConfig::minimal(2.0);
        let out = simulate(&cfg, &[]).unwrap();
        assert_eq!(out.records.len(), 20);
        for r in &out.records {
            assert!((r.y - 0.4625).abs() < 1e-12);
            assert!((r.u - 1.0).abs() < 1e-12);
        }
        assert!(!out.outcome.hazard() && !out.outcome.intervention());
    }

    #[test]
    fn sensor_offset_drives_concentration_up() {
        let cfg = ScenarioConfig::minimal(4.0);
        let a = spec(1, AttackKind::IntegritySca, InjectionPoint::SensorToController, Waveform::step(-0.3), 1.0, 3.0);
        let out = simulate(&cfg, &[a]).unwrap();
        let late = out.records.iter().find(|r| (r.t - 2.9).abs() < 1e-9).unwrap();
        assert!(late.y_true > 0.6, "{:?}", late);
        assert!(late.u > 1.0);
        assert!(out.records.iter().filter(|r| r.label.attack_id == 1).count() >= 20);
    }

    #[test]
    fn futile_intervention_on_fake_reports() {
        let cfg = ScenarioConfig::minimal(4.0);
        let mut a = spec(1, AttackKind::Stealthy, InjectionPoint::SensorToDm, Waveform::step(0.6), 1.0, 3.0);
        a.dm_targets = vec![NodeId::Hmi, NodeId::Logserver];
        a.report_policy = Some(ReportPolicy::Offset(Waveform::step(0.6)));
        let out = simulate(&cfg, &[a]).unwrap();
        assert!(out.outcome.intervention() && out.outcome.futile);
        assert_eq!(out.outcome.intervention_by, Some(NodeId::Hmi));
    }

    #[test]
    fn disturbance_in_manual_trips() {
        let mut cfg = ScenarioConfig::minimal(6.0);
        cfg.irregular = vec![crate::scenario::IrregularEvent {
            at: 1.0,
            kind: IrregularKind::ModeSwitchTraffic,
            mode: Some(ControlMode::Manual),
        }];
        cfg.disturbances = vec![Disturbance { at: 2.0, c_a0: 1.925 }];
        let out = simulate(&cfg, &[]).unwrap();
        assert!(out.outcome.intervention());
        assert!(!out.outcome.futile);
        assert!(!out.outcome.hazard());
    }
}
