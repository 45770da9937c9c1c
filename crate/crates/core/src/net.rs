//! Deterministic message layer: fixed topology, periodic polling and
//! reporting traffic, interceptor chains and per-node captures.
//!
//! Frames are abstract Modbus-like transactions (function code, register,
//! value, transaction id) rather than byte-level PDUs.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network nodes. Variant order is the lexical order of their names, which
/// is the tie-break order for simultaneous events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeId {
    Actuator,
    Attacker,
    Controller,
    CorpWs,
    Hmi,
    Logserver,
    Sensor,
}

impl NodeId {
    pub const ALL: [NodeId; 7] = [
        Self::Actuator,
        Self::Attacker,
        Self::Controller,
        Self::CorpWs,
        Self::Hmi,
        Self::Logserver,
        Self::Sensor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Actuator => "ACTUATOR",
            Self::Attacker => "ATTACKER",
            Self::Controller => "CONTROLLER",
            Self::CorpWs => "CORP_WS",
            Self::Hmi => "HMI",
            Self::Logserver => "LOGSERVER",
            Self::Sensor => "SENSOR",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|n| n.as_str() == s)
    }

    pub fn is_dm(self) -> bool {
        matches!(self, Self::Hmi | Self::Logserver)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Proto {
    /// Field-level polling between controller and smart sensor/actuator.
    Pollproto,
    /// Supervisory reporting between controller and DM nodes.
    Reportproto,
}

impl Proto {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pollproto => "POLLPROTO",
            Self::Reportproto => "REPORTPROTO",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "POLLPROTO" => Some(Self::Pollproto),
            "REPORTPROTO" => Some(Self::Reportproto),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FnCode {
    Read,
    Write,
    TripBcast,
}

impl FnCode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Read => "READ",
            Self::Write => "WRITE",
            Self::TripBcast => "TRIP_BCAST",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "READ" => Some(Self::Read),
            "WRITE" => Some(Self::Write),
            "TRIP_BCAST" => Some(Self::TripBcast),
            _ => None,
        }
    }
}

/// Register map shared by every node.
pub mod reg {
    /// Process value (outlet concentration).
    pub const PV: u16 = 0;
    /// Controller output (inlet flow command).
    pub const OP: u16 = 1;
    pub const MODE: u16 = 10;
    pub const MANUAL_OP: u16 = 11;
    pub const SETPOINT: u16 = 12;
    pub const TRIP: u16 = 13;
    /// First register probed by reconnaissance scans.
    pub const SCAN_BASE: u16 = 100;
}

pub const MODE_AUTO: f64 = 0.0;
pub const MODE_MANUAL: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub ts: f64,
    pub seq: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub proto: Proto,
    pub fn_code: FnCode,
    pub addr: u16,
    pub value: f64,
    pub txn: u64,
    pub attack_id: u32,
}

impl Frame {
    /// Everything except the labeling field, for content comparisons.
    pub fn same_content(&self, other: &Frame) -> bool {
        Frame {
            attack_id: 0,
            ..*self
        } == Frame {
            attack_id: 0,
            ..*other
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaptureRecord {
    pub capture_node: NodeId,
    pub frame: Frame,
}

/// Protocol carried on the link between two nodes, or `None` when the
/// topology has no such edge.
pub fn link_proto(src: NodeId, dst: NodeId) -> Option<Proto> {
    use NodeId::*;
    let (a, b) = if src <= dst { (src, dst) } else { (dst, src) };
    match (a, b) {
        (Actuator, Controller) | (Controller, Sensor) => Some(Proto::Pollproto),
        (Controller, Hmi) | (Controller, Logserver) | (CorpWs, Hmi) => Some(Proto::Reportproto),
        (Attacker, Actuator) | (Attacker, Sensor) => Some(Proto::Pollproto),
        (Attacker, Controller) | (Attacker, CorpWs) | (Attacker, Hmi) | (Attacker, Logserver) => {
            Some(Proto::Reportproto)
        }
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficSchedule {
    /// Sensor READ + actuator WRITE cadence (min).
    pub poll_period: f64,
    /// Controller → HMI/LOGSERVER report cadence (min).
    pub report_period: f64,
    /// Upper bound of a seeded per-frame delivery delay (min); 0 disables it.
    pub jitter: f64,
}

impl Default for TrafficSchedule {
    fn default() -> Self {
        Self {
            poll_period: 0.1,
            report_period: 0.2,
            jitter: 0.0,
        }
    }
}

impl TrafficSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.poll_period > 0.0 && self.report_period > 0.0) {
            return Err(Error::Config("traffic periods must be positive".into()));
        }
        if !(self.jitter >= 0.0) || !self.jitter.is_finite() {
            return Err(Error::Config("traffic jitter must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Exchange {
    Poll,
    Report,
}

/// Periodic exchange instants in `[t0, t1)`, polls before reports at equal
/// times.
pub fn schedule_instants(sched: &TrafficSchedule, t0: f64, t1: f64) -> Vec<(f64, Exchange)> {
    let mut out = Vec::new();
    for (period, kind) in [
        (sched.poll_period, Exchange::Poll),
        (sched.report_period, Exchange::Report),
    ] {
        let mut k = 0u64;
        loop {
            let t = t0 + k as f64 * period;
            if t >= t1 - 1e-12 {
                break;
            }
            out.push((t, kind));
            k += 1;
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    out
}

/// One step of an interceptor chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Pass(Frame),
    Drop { attack_id: u32 },
    Delay { frame: Frame, until: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delivery {
    Delivered(Frame),
    Dropped,
    Delayed(Frame, f64),
}

impl Delivery {
    pub fn frame(&self) -> Option<&Frame> {
        match self {
            Delivery::Delivered(f) | Delivery::Delayed(f, _) => Some(f),
            Delivery::Dropped => None,
        }
    }
}

pub trait Interceptor {
    fn intercept(&mut self, frame: Frame) -> Verdict;
}

impl<F: FnMut(Frame) -> Verdict> Interceptor for F {
    fn intercept(&mut self, frame: Frame) -> Verdict {
        self(frame)
    }
}

/// Frame factory and capture store for one scenario.
#[derive(Debug, Clone, Default)]
pub struct Network {
    seq: BTreeMap<(NodeId, NodeId), u64>,
    txn: BTreeMap<(NodeId, NodeId), u64>,
    captures: Vec<CaptureRecord>,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build a frame on a legal link, allocating its sequence number and a
    /// fresh transaction id.
    pub fn frame(&mut self, ts: f64, src: NodeId, dst: NodeId, fn_code: FnCode, addr: u16, value: f64) -> Result<Frame> {
        let proto = link_proto(src, dst).ok_or(Error::Routing { src, dst })?;
        let txn = {
            let c = self.txn.entry((src, dst)).or_insert(0);
            *c += 1;
            *c
        };
        Ok(self.frame_with_txn(ts, src, dst, proto, fn_code, addr, value, txn))
    }

    /// Response frame echoing the transaction id of `request`.
    pub fn response(&mut self, request: &Frame, ts: f64, value: f64) -> Frame {
        self.frame_with_txn(ts, request.dst, request.src, request.proto, request.fn_code, request.addr, value, request.txn)
    }

    #[allow(clippy::too_many_arguments)]
    fn frame_with_txn(
        &mut self,
        ts: f64,
        src: NodeId,
        dst: NodeId,
        proto: Proto,
        fn_code: FnCode,
        addr: u16,
        value: f64,
        txn: u64,
    ) -> Frame {
        let seq = {
            let c = self.seq.entry((src, dst)).or_insert(0);
            *c += 1;
            *c
        };
        Frame {
            ts,
            seq,
            src,
            dst,
            proto,
            fn_code,
            addr,
            value,
            txn,
            attack_id: 0,
        }
    }

    /// Record a frame at one capture point.
    pub fn capture(&mut self, node: NodeId, frame: Frame) {
        self.captures.push(CaptureRecord {
            capture_node: node,
            frame,
        });
    }

    pub fn captures(&self) -> &[CaptureRecord] {
        &self.captures
    }

    pub fn into_captures(self) -> Vec<CaptureRecord> {
        self.captures
    }
}

/// Pass `frame` through `chain` and write the sender- and receiver-side
/// captures.
pub fn deliver_frame(net: &mut Network, frame: Frame, chain: &mut [&mut dyn Interceptor]) -> Result<Delivery> {
    if link_proto(frame.src, frame.dst).is_none() {
        return Err(Error::Routing {
            src: frame.src,
            dst: frame.dst,
        });
    }
    let mut current = frame;
    let mut at = frame.ts;
    let mut dropped = None;
    for icpt in chain.iter_mut() {
        match icpt.intercept(current) {
            Verdict::Pass(f) => current = f,
            Verdict::Drop { attack_id } => {
                dropped = Some(attack_id);
                break;
            }
            Verdict::Delay { frame, until } => {
                current = frame;
                at = at.max(until);
            }
        }
    }
    let mut sent = frame;
    if let Some(id) = dropped {
        sent.attack_id = sent.attack_id.max(id);
        net.capture(frame.src, sent);
        return Ok(Delivery::Dropped);
    }
    sent.attack_id = current.attack_id;
    net.capture(frame.src, sent);
    let mut received = current;
    received.ts = at;
    net.capture(frame.dst, received);
    if at > frame.ts {
        Ok(Delivery::Delayed(received, at))
    } else {
        Ok(Delivery::Delivered(received))
    }
}

/// Capture selection for export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkFilter {
    All,
    Proto(Proto),
    Node(NodeId),
}

impl LinkFilter {
    pub fn accepts(&self, rec: &CaptureRecord) -> bool {
        match *self {
            LinkFilter::All => true,
            LinkFilter::Proto(p) => rec.frame.proto == p,
            LinkFilter::Node(n) => rec.capture_node == n,
        }
    }
}

/// Export order: `(ts, capture node, seq)`, stable on emission order.
pub fn sort_captures(records: &mut [CaptureRecord]) {
    records.sort_by(|a, b| {
        a.frame
            .ts
            .total_cmp(&b.frame.ts)
            .then(a.capture_node.cmp(&b.capture_node))
            .then(a.frame.seq.cmp(&b.frame.seq))
    });
}

/// Emit the periodic frame timeline of an attack-free loop over `[t0, t1)`
/// with zero-valued payloads.
pub fn run_traffic_schedule(net: &mut Network, sched: &TrafficSchedule, t0: f64, t1: f64) -> Result<Vec<Frame>> {
    if !(t1 > t0) {
        return Err(Error::Config("traffic window must have t1 > t0".into()));
    }
    let mut out = Vec::new();
    for (t, kind) in schedule_instants(sched, t0, t1) {
        let pairs: &[(NodeId, NodeId, FnCode, u16)] = match kind {
            Exchange::Poll => &[
                (NodeId::Sensor, NodeId::Controller, FnCode::Read, reg::PV),
                (NodeId::Controller, NodeId::Actuator, FnCode::Write, reg::OP),
            ],
            Exchange::Report => &[
                (NodeId::Controller, NodeId::Hmi, FnCode::Write, reg::PV),
                (NodeId::Controller, NodeId::Logserver, FnCode::Write, reg::PV),
            ],
        };
        for &(src, dst, fc, addr) in pairs {
            let f = net.frame(t, src, dst, fc, addr, 0.0)?;
            deliver_frame(net, f, &mut [])?;
            out.push(f);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> TrafficSchedule {
        TrafficSchedule::default()
    }

    #[test]
    fn counts_poll_exchanges() {
        let mut net = Network::new();
        let frames = run_traffic_schedule(&mut net, &sched(), 0.0, 1.0).unwrap();
        let to_ctrl = frames.iter().filter(|f| f.dst == NodeId::Controller).count();
        let to_act = frames.iter().filter(|f| f.dst == NodeId::Actuator).count();
        assert_eq!((to_ctrl, to_act), (10, 10));
    }

    #[test]
    fn controller_interleaves_protocols_two_to_one() {
        let mut net = Network::new();
        let frames = run_traffic_schedule(&mut net, &sched(), 0.0, 2.0).unwrap();
        let poll = frames.iter().filter(|f| f.src == NodeId::Controller && f.proto == Proto::Pollproto).count();
        let rep = frames.iter().filter(|f| f.src == NodeId::Controller && f.proto == Proto::Reportproto).count();
        // one actuator write per poll, a pair of reports every second poll
        assert_eq!(poll, 20);
        assert_eq!(rep, 20);
        let report_instants = frames.iter().filter(|f| f.dst == NodeId::Hmi).count();
        assert_eq!(poll / report_instants, 2);
    }

    #[test]
    fn empty_chain_is_identity() {
        let mut net = Network::new();
        let f = net.frame(1.0, NodeId::Sensor, NodeId::Controller, FnCode::Read, reg::PV, 0.46).unwrap();
        let d = deliver_frame(&mut net, f, &mut []).unwrap();
        assert_eq!(d, Delivery::Delivered(f));
        assert_eq!(net.captures().len(), 2);
    }

    #[test]
    fn modify_shows_in_receiver_capture_only() {
        let mut net = Network::new();
        let f = net.frame(1.0, NodeId::Sensor, NodeId::Controller, FnCode::Read, reg::PV, 0.46).unwrap();
        let mut modify = |mut fr: Frame| {
            fr.value = 0.95;
            fr.attack_id = 3;
            Verdict::Pass(fr)
        };
        deliver_frame(&mut net, f, &mut [&mut modify]).unwrap();
        let caps = net.captures();
        let sender = caps.iter().find(|c| c.capture_node == NodeId::Sensor).unwrap();
        let receiver = caps.iter().find(|c| c.capture_node == NodeId::Controller).unwrap();
        assert_eq!(sender.frame.value, 0.46);
        assert_eq!(receiver.frame.value, 0.95);
        assert_eq!(receiver.frame.attack_id, 3);
    }

    #[test]
    fn drop_leaves_only_sender_capture() {
        let mut net = Network::new();
        let f = net.frame(1.0, NodeId::Controller, NodeId::Hmi, FnCode::Write, reg::PV, 0.46).unwrap();
        let mut drop = |_f: Frame| Verdict::Drop { attack_id: 2 };
        assert_eq!(deliver_frame(&mut net, f, &mut [&mut drop]).unwrap(), Delivery::Dropped);
        assert_eq!(net.captures().len(), 1);
        assert_eq!(net.captures()[0].capture_node, NodeId::Controller);
        assert_eq!(net.captures()[0].frame.attack_id, 2);
    }

    #[test]
    fn delay_moves_receiver_timestamp() {
        let mut net = Network::new();
        let f = net.frame(1.0, NodeId::Controller, NodeId::Hmi, FnCode::Write, reg::PV, 0.46).unwrap();
        let mut delay = |fr: Frame| Verdict::Delay { frame: fr, until: 1.05 };
        let d = deliver_frame(&mut net, f, &mut [&mut delay]).unwrap();
        assert!(matches!(d, Delivery::Delayed(_, t) if t == 1.05));
        assert_eq!(net.captures()[1].frame.ts, 1.05);
    }

    #[test]
    fn topology_is_closed() {
        let mut net = Network::new();
        assert!(matches!(
            net.frame(0.0, NodeId::CorpWs, NodeId::Actuator, FnCode::Write, reg::OP, 1.0),
            Err(Error::Routing { .. })
        ));
        assert_eq!(link_proto(NodeId::CorpWs, NodeId::Hmi), Some(Proto::Reportproto));
        assert_eq!(link_proto(NodeId::Sensor, NodeId::Hmi), None);
    }

    #[test]
    fn responses_echo_transaction() {
        let mut net = Network::new();
        let req = net.frame(2.0, NodeId::Hmi, NodeId::Controller, FnCode::Read, reg::PV, 0.0).unwrap();
        let resp = net.response(&req, 2.0, 0.47);
        assert_eq!(resp.txn, req.txn);
        assert_eq!((resp.src, resp.dst), (NodeId::Controller, NodeId::Hmi));
    }
}
