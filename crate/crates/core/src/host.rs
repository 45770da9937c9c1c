//! Per-node host logs: authentication, process, command, mode and error
//! events, plus scripted operator sessions on the HMI.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::control::ControlMode;
use crate::error::{Error, Result};
use crate::fmt::g9;
use crate::net::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HostEventKind {
    AuthLogin,
    AuthFail,
    AuthLogout,
    ProcStart,
    CmdIssued,
    ModeSwitch,
    ConfigChange,
    FileXfer,
    SysError,
    /// Historian entry for a process value received by a DM node.
    DataLog,
}

impl HostEventKind {
    pub const ALL: [HostEventKind; 10] = [
        Self::AuthLogin,
        Self::AuthFail,
        Self::AuthLogout,
        Self::ProcStart,
        Self::CmdIssued,
        Self::ModeSwitch,
        Self::ConfigChange,
        Self::FileXfer,
        Self::SysError,
        Self::DataLog,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::AuthLogin => "AUTH_LOGIN",
            Self::AuthFail => "AUTH_FAIL",
            Self::AuthLogout => "AUTH_LOGOUT",
            Self::ProcStart => "PROC_START",
            Self::CmdIssued => "CMD_ISSUED",
            Self::ModeSwitch => "MODE_SWITCH",
            Self::ConfigChange => "CONFIG_CHANGE",
            Self::FileXfer => "FILE_XFER",
            Self::SysError => "SYS_ERROR",
            Self::DataLog => "DATA_LOG",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HostEvent {
    pub ts: f64,
    pub node: NodeId,
    pub kind: HostEventKind,
    pub actor: String,
    /// Space-separated `key=value` pairs.
    pub detail: String,
    pub attack_id: u32,
    /// Per-node append counter (tie-break within equal timestamps).
    pub seq: u64,
}

impl HostEvent {
    pub fn new(ts: f64, node: NodeId, kind: HostEventKind, actor: &str, detail: String) -> Self {
        Self {
            ts,
            node,
            kind,
            actor: actor.into(),
            detail,
            attack_id: 0,
            seq: 0,
        }
    }

    pub fn with_attack(mut self, id: u32) -> Self {
        self.attack_id = id;
        self
    }

    /// Numeric value of `key` in the detail field.
    pub fn detail_value(&self, key: &str) -> Option<f64> {
        detail_field(&self.detail, key).and_then(|v| v.parse().ok())
    }

    pub fn detail_field(&self, key: &str) -> Option<&str> {
        detail_field(&self.detail, key)
    }
}

pub fn detail_field<'a>(detail: &'a str, key: &str) -> Option<&'a str> {
    detail
        .split_whitespace()
        .filter_map(|tok| tok.split_once('='))
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v)
}

/// Append-only, time-ordered logs for every node of one scenario.
#[derive(Debug, Clone)]
pub struct HostLog {
    end: f64,
    events: Vec<HostEvent>,
    seq: BTreeMap<NodeId, u64>,
}

impl HostLog {
    pub fn new(end: f64) -> Self {
        Self {
            end,
            events: Vec::new(),
            seq: BTreeMap::new(),
        }
    }

    /// Append an event, keeping `(ts, node, seq)` order.
    pub fn record_event(&mut self, mut e: HostEvent) -> Result<()> {
        if !(e.ts >= 0.0 && e.ts <= self.end) {
            return Err(Error::OutOfWindow { ts: e.ts, end: self.end });
        }
        let c = self.seq.entry(e.node).or_insert(0);
        *c += 1;
        e.seq = *c;
        let pos = self.events.partition_point(|x| {
            x.ts.total_cmp(&e.ts).then(x.node.cmp(&e.node)).then(x.seq.cmp(&e.seq)).is_le()
        });
        self.events.insert(pos, e);
        Ok(())
    }

    pub fn events(&self) -> &[HostEvent] {
        &self.events
    }

    pub fn node_events(&self, node: NodeId) -> impl Iterator<Item = &HostEvent> {
        self.events.iter().filter(move |e| e.node == node)
    }

    /// Remove `node` entries with `ts` in `[t0, t1]` (log overwrite by an
    /// attacker holding the node).
    pub fn wipe(&mut self, node: NodeId, t0: f64, t1: f64) -> usize {
        let before = self.events.len();
        self.events.retain(|e| !(e.node == node && e.ts >= t0 && e.ts <= t1));
        before - self.events.len()
    }

    /// Final logs with per-node line numbers following time order.
    pub fn into_events(mut self) -> Vec<HostEvent> {
        let mut line: BTreeMap<NodeId, u64> = BTreeMap::new();
        for e in self.events.iter_mut() {
            let c = line.entry(e.node).or_insert(0);
            *c += 1;
            e.seq = *c;
        }
        self.events
    }
}

/// One operator command inside a session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum SessionOp {
    SetMode {
        mode: ControlMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        manual_u: Option<f64>,
    },
    WriteOutput {
        u: f64,
    },
    WriteSetpoint {
        setpoint: f64,
    },
    ManualPoll,
}

// flatten does not combine with deny_unknown_fields; the tagged op rejects
// unknown keys instead
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionAction {
    pub at: f64,
    #[serde(flatten)]
    pub op: SessionOp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSession {
    pub operator: String,
    pub login: f64,
    pub logout: f64,
    #[serde(default)]
    pub actions: Vec<SessionAction>,
}

impl OperatorSession {
    pub fn validate(&self, duration: f64) -> Result<()> {
        if !(self.login >= 0.0 && self.login <= self.logout && self.logout <= duration) {
            return Err(Error::Config(format!(
                "session of {} must satisfy 0 <= login <= logout <= duration",
                self.operator
            )));
        }
        let mut prev = self.login;
        for a in &self.actions {
            if a.at < prev || a.at > self.logout {
                return Err(Error::Config(format!(
                    "session of {}: action at {} outside [login, logout] or out of order",
                    self.operator,
                    g9(a.at)
                )));
            }
            prev = a.at;
        }
        Ok(())
    }
}

/// Reject overlapping sessions of the same operator.
pub fn validate_sessions(sessions: &[OperatorSession], duration: f64) -> Result<()> {
    for s in sessions {
        s.validate(duration)?;
    }
    for (i, a) in sessions.iter().enumerate() {
        for b in &sessions[i + 1..] {
            if a.operator == b.operator && a.login <= b.logout && b.login <= a.logout {
                return Err(Error::Config(format!("overlapping sessions for operator {}", a.operator)));
            }
        }
    }
    Ok(())
}

/// HMI application event for one session command.
pub fn action_event(ts: f64, actor: &str, op: &SessionOp) -> HostEvent {
    let (kind, detail) = match *op {
        SessionOp::SetMode { mode, manual_u } => {
            let mode = match mode {
                ControlMode::Auto => "AUTO",
                ControlMode::Manual => "MANUAL",
            };
            let detail = match manual_u {
                Some(u) => format!("mode={} manual_u={}", mode, g9(u)),
                None => format!("mode={}", mode),
            };
            (HostEventKind::ModeSwitch, detail)
        }
        SessionOp::WriteOutput { u } => (HostEventKind::CmdIssued, format!("cmd=write_output value={}", g9(u))),
        SessionOp::WriteSetpoint { setpoint } => {
            (HostEventKind::CmdIssued, format!("cmd=write_setpoint value={}", g9(setpoint)))
        }
        SessionOp::ManualPoll => (HostEventKind::CmdIssued, String::from("cmd=manual_poll")),
    };
    HostEvent::new(ts, NodeId::Hmi, kind, actor, detail)
}

pub fn login_event(ts: f64, actor: &str) -> HostEvent {
    HostEvent::new(ts, NodeId::Hmi, HostEventKind::AuthLogin, actor, String::from("app=hmi"))
}

pub fn logout_event(ts: f64, actor: &str) -> HostEvent {
    HostEvent::new(ts, NodeId::Hmi, HostEventKind::AuthLogout, actor, String::from("app=hmi"))
}

/// HMI log entries for a legitimate session, in order.
pub fn session_events(session: &OperatorSession) -> Vec<HostEvent> {
    let mut out = Vec::with_capacity(session.actions.len() + 2);
    out.push(login_event(session.login, &session.operator));
    for a in &session.actions {
        out.push(action_event(a.at, &session.operator, &a.op));
    }
    out.push(logout_event(session.logout, &session.operator));
    out
}
