//! Oracle commands: per-window trace verdicts and the IDS decision matrix.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use anyhow::Result;
use cpsbed_core::dataset::LabeledRecord;
use cpsbed_core::engine::simulate;
use cpsbed_core::fmt::g9;
use cpsbed_core::oracle::{classify_series, ids_decision_matrix, DatasetView, DetectorModel, DetectorVariant, IdsMatrix, Tolerances, WindowVerdict};
use cpsbed_core::scenario::ScenarioConfig;

use crate::presets::operator_trio;
use crate::validate::load;

pub const DEFAULT_WINDOW: usize = 10;

pub struct Classified {
    pub view: &'static str,
    pub windows: Vec<WindowVerdict>,
}

/// Classify the released physical data of both views, window by window.
/// Unset tolerances default to the ones for the scenario's sensor noise.
pub fn classify_dir(dir: &Path, tol_m: Option<f64>, tol_a: Option<f64>, window: usize) -> Result<Vec<Classified>> {
    let l = load(dir)?;
    let d = Tolerances::for_noise(l.config.plant.noise_std);
    let tol = Tolerances {
        tol_m: tol_m.unwrap_or(d.tol_m),
        tol_a: tol_a.unwrap_or(d.tol_a),
    };
    let mut out = Vec::new();
    for (name, v) in [("train", &l.train), ("test", &l.test)] {
        let windows = classify_contiguous(&v.physical, window, &l.config, tol)?;
        out.push(Classified { view: name, windows });
    }
    Ok(out)
}

/// Windows never straddle a gap in the sample grid (views can have holes
/// where zero-day data was moved out).
fn classify_contiguous(records: &[LabeledRecord], n: usize, cfg: &ScenarioConfig, tol: Tolerances) -> Result<Vec<WindowVerdict>> {
    let period = cfg.controller.sample_period;
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=records.len() {
        let gap = i == records.len() || (records[i].t - records[i - 1].t - period).abs() > 1e-6;
        if gap {
            out.extend(classify_series(&records[start..i], n, &cfg.plant, &cfg.controller, tol)?);
            start = i;
        }
    }
    Ok(out)
}

pub fn write_verdicts<W: Write>(w: W, classified: &[Classified]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["view", "t_start", "t_end", "verdict", "attack_id"])?;
    for c in classified {
        for v in &c.windows {
            out.write_record([
                c.view.to_string(),
                g9(v.t_start),
                g9(v.t_end),
                v.verdict.as_str().to_string(),
                v.attack_id.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn render_matrix(m: &IdsMatrix) -> String {
    let mut s = String::from("true_state");
    for v in DetectorVariant::ALL {
        let _ = write!(s, ",{}", v.as_str());
    }
    s.push('\n');
    for (row, name) in m.cells.iter().zip(["normal", "attack"]) {
        s.push_str(name);
        for c in row {
            let _ = write!(s, ",{}", c.as_str());
        }
        s.push('\n');
    }
    s
}

/// Decision matrix over the built-in operator-command trio.
pub fn builtin_matrix() -> Result<IdsMatrix> {
    let cfgs = operator_trio();
    let mut outs = Vec::new();
    for c in &cfgs {
        outs.push(simulate(c, &c.attacks)?);
    }
    let views: Vec<DatasetView> = outs
        .iter()
        .map(|o| DatasetView {
            physical: &o.records,
            capture: &o.captures,
            host: &o.host,
        })
        .collect();
    let cfg = &cfgs[0];
    let model = DetectorModel {
        plant: &cfg.plant,
        controller: &cfg.controller,
        tol: Tolerances::for_noise(cfg.plant.noise_std),
        window: DEFAULT_WINDOW,
    };
    Ok(ids_decision_matrix(Some(&views[0]), Some(&views[1]), Some(&views[2]), &model)?)
}

/// Decision matrix over three dataset directories (train and test joined).
pub fn matrix_from_dirs(legit: &Path, compromised: &Path, spoofed: &Path) -> Result<IdsMatrix> {
    let mut joined = Vec::new();
    for d in [legit, compromised, spoofed] {
        let l = load(d)?;
        let mut physical: Vec<LabeledRecord> = l.train.physical.iter().chain(&l.test.physical).copied().collect();
        physical.sort_by(|a, b| a.t.total_cmp(&b.t));
        let mut capture: Vec<_> = l.train.capture.iter().chain(&l.test.capture).copied().collect();
        cpsbed_core::net::sort_captures(&mut capture);
        let mut host: Vec<_> = l.train.host.iter().chain(&l.test.host).cloned().collect();
        host.sort_by(|a, b| a.ts.total_cmp(&b.ts));
        joined.push((l.config, physical, capture, host));
    }
    let views: Vec<DatasetView> = joined
        .iter()
        .map(|(_, p, c, h)| DatasetView {
            physical: p,
            capture: c,
            host: h,
        })
        .collect();
    let cfg = &joined[0].0;
    let model = DetectorModel {
        plant: &cfg.plant,
        controller: &cfg.controller,
        tol: Tolerances::for_noise(cfg.plant.noise_std),
        window: DEFAULT_WINDOW,
    };
    Ok(ids_decision_matrix(Some(&views[0]), Some(&views[1]), Some(&views[2]), &model)?)
}
