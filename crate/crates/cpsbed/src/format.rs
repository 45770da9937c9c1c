//! Released file formats: physical/truth CSV, capture and host JSONL.

use std::io::{BufRead, Write};

use anyhow::{anyhow, bail, Context, Result};
use cpsbed_core::dataset::{Label, LabeledRecord};
use cpsbed_core::fmt::g9;
use cpsbed_core::host::{HostEvent, HostEventKind};
use cpsbed_core::net::{CaptureRecord, FnCode, Frame, NodeId, Proto};
use cpsbed_core::plant::SystemMode;
use serde::Deserialize;

pub const PHYSICAL_HEADER: [&str; 7] = ["t", "u", "y", "d", "auto_flag", "attack_id", "mode"];
pub const TRUTH_HEADER: [&str; 8] = ["t", "u", "y", "d", "auto_flag", "attack_id", "mode", "y_true"];

fn physical_row(r: &LabeledRecord) -> Vec<String> {
    vec![
        g9(r.t),
        g9(r.u),
        g9(r.y),
        g9(r.d),
        if r.auto_flag { "1".into() } else { "0".into() },
        r.label.attack_id.to_string(),
        r.label.mode.as_str().into(),
    ]
}

pub fn write_physical<W: Write>(w: W, records: &[LabeledRecord], truth: bool) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if truth {
        out.write_record(TRUTH_HEADER)?;
    } else {
        out.write_record(PHYSICAL_HEADER)?;
    }
    for r in records {
        let mut row = physical_row(r);
        if truth {
            row.push(g9(r.y_true));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Parse a physical or truth CSV. Errors name the offending line.
pub fn read_physical<R: std::io::Read>(r: R) -> Result<Vec<LabeledRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let truth = if headers.iter().eq(TRUTH_HEADER) {
        true
    } else if headers.iter().eq(PHYSICAL_HEADER) {
        false
    } else {
        bail!("unexpected header {:?}", headers.iter().collect::<Vec<_>>());
    };
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.with_context(|| format!("line {}", line))?;
        let num = |k: usize| -> Result<f64> {
            let s = row.get(k).ok_or_else(|| anyhow!("line {}: missing column {}", line, k))?;
            s.parse::<f64>()
                .map_err(|_| anyhow!("line {}: column {} is not a number: {:?}", line, headers.get(k).unwrap_or("?"), s))
        };
        let auto_flag = match row.get(4) {
            Some("1") => true,
            Some("0") => false,
            other => bail!("line {}: auto_flag must be 0 or 1, got {:?}", line, other),
        };
        let attack_id = row
            .get(5)
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| anyhow!("line {}: missing or malformed attack_id label", line))?;
        let mode = row
            .get(6)
            .and_then(SystemMode::parse)
            .ok_or_else(|| anyhow!("line {}: missing or malformed mode label", line))?;
        let y = num(2)?;
        out.push(LabeledRecord {
            t: num(0)?,
            u: num(1)?,
            y,
            y_true: if truth { num(7)? } else { y },
            d: num(3)?,
            auto_flag,
            label: Label { attack_id, mode },
        });
    }
    Ok(out)
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

pub fn capture_line(c: &CaptureRecord) -> String {
    let f = &c.frame;
    format!(
        "{{\"ts\":{},\"capture_node\":\"{}\",\"seq\":{},\"src\":\"{}\",\"dst\":\"{}\",\"proto\":\"{}\",\"fn\":\"{}\",\"addr\":{},\"value\":{},\"txn\":{},\"attack_id\":{}}}",
        g9(f.ts),
        c.capture_node.as_str(),
        f.seq,
        f.src.as_str(),
        f.dst.as_str(),
        f.proto.as_str(),
        f.fn_code.as_str(),
        f.addr,
        g9(f.value),
        f.txn,
        f.attack_id
    )
}

pub fn host_line(e: &HostEvent) -> String {
    format!(
        "{{\"ts\":{},\"node\":\"{}\",\"seq\":{},\"kind\":\"{}\",\"actor\":{},\"detail\":{},\"attack_id\":{}}}",
        g9(e.ts),
        e.node.as_str(),
        e.seq,
        e.kind.as_str(),
        json_str(&e.actor),
        json_str(&e.detail),
        e.attack_id
    )
}

pub fn write_lines<W: Write, T>(mut w: W, items: &[T], line: impl Fn(&T) -> String) -> Result<()> {
    for it in items {
        writeln!(w, "{}", line(it))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CaptureJson {
    ts: f64,
    capture_node: String,
    seq: u64,
    src: String,
    dst: String,
    proto: String,
    #[serde(rename = "fn")]
    fn_code: String,
    addr: u16,
    value: f64,
    txn: u64,
    attack_id: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HostJson {
    ts: f64,
    node: String,
    seq: u64,
    kind: String,
    actor: String,
    detail: String,
    attack_id: u32,
}

fn node(s: &str, line: usize) -> Result<NodeId> {
    NodeId::parse(s).ok_or_else(|| anyhow!("line {}: unknown node {:?}", line, s))
}

pub fn read_capture<R: BufRead>(r: R) -> Result<Vec<CaptureRecord>> {
    let mut out = Vec::new();
    for (i, l) in r.lines().enumerate() {
        let line = i + 1;
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        let c: CaptureJson = serde_json::from_str(&l).with_context(|| format!("line {}", line))?;
        out.push(CaptureRecord {
            capture_node: node(&c.capture_node, line)?,
            frame: Frame {
                ts: c.ts,
                seq: c.seq,
                src: node(&c.src, line)?,
                dst: node(&c.dst, line)?,
                proto: Proto::parse(&c.proto).ok_or_else(|| anyhow!("line {}: unknown proto", line))?,
                fn_code: FnCode::parse(&c.fn_code).ok_or_else(|| anyhow!("line {}: unknown fn", line))?,
                addr: c.addr,
                value: c.value,
                txn: c.txn,
                attack_id: c.attack_id,
            },
        });
    }
    Ok(out)
}

pub fn read_host<R: BufRead>(r: R) -> Result<Vec<HostEvent>> {
    let mut out = Vec::new();
    for (i, l) in r.lines().enumerate() {
        let line = i + 1;
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        let h: HostJson = serde_json::from_str(&l).with_context(|| format!("line {}", line))?;
        let kind = HostEventKind::parse(&h.kind).ok_or_else(|| anyhow!("line {}: unknown event kind", line))?;
        let mut e = HostEvent::new(h.ts, node(&h.node, line)?, kind, &h.actor, h.detail).with_attack(h.attack_id);
        e.seq = h.seq;
        out.push(e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn physical_round_trip() {
        let r = LabeledRecord {
            t: 0.1,
            u: 1.25,
            y: 0.4625,
            y_true: 0.5,
            d: 0.925,
            auto_flag: true,
            label: Label {
                attack_id: 3,
                mode: SystemMode::F1,
            },
        };
        let mut buf = Vec::new();
        write_physical(&mut buf, &[r], true).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,u,y,d,auto_flag,attack_id,mode,y_true\n"));
        let back = read_physical(&buf[..]).unwrap();
        assert_eq!(back, vec![r]);
    }

    #[test]
    fn corrupted_label_names_line() {
        let text = "t,u,y,d,auto_flag,attack_id,mode\n0,1,0.4,0.9,1,0,NORMAL\n0.1,1,0.4,0.9,1,x,NORMAL\n";
        let err = read_physical(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{}", err);
    }

    #[test]
    fn host_line_escapes() {
        let e = HostEvent::new(1.0, NodeId::Hmi, HostEventKind::CmdIssued, "op\"x", "a=1 b=\"q\"".into()).with_attack(2);
        let l = host_line(&e);
        let back = read_host(l.as_bytes()).unwrap();
        assert_eq!(back[0].actor, "op\"x");
        assert_eq!(back[0].attack_id, 2);
    }
}
