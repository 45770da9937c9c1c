//! Scenario configuration and its semantic validation.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::attack::{plan_attacks, AttackGrid, AttackSpec};
use crate::control::{ControlMode, ControllerConfig};
use crate::error::{Error, Result};
use crate::fmt::g9;
use crate::host::{validate_sessions, OperatorSession};
use crate::net::TrafficSchedule;
use crate::plant::{FaultEvent, PlantParams, SystemMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub at: f64,
    pub c_a0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IrregularKind {
    OperatorManualPoll,
    ModeSwitchTraffic,
    SafetyTripBcast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrregularEvent {
    pub at: f64,
    pub kind: IrregularKind,
    /// Mode written by MODE_SWITCH_TRAFFIC (AUTO when absent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ControlMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub limit: usize,
    #[serde(default)]
    pub grid: AttackGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitPolicy {
    pub train_fraction: f64,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        Self { train_fraction: 0.7 }
    }
}

fn default_c_a0() -> f64 {
    0.925
}

fn default_dedup_eps() -> f64 {
    crate::dataset::EPS_DUP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Simulated minutes.
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Inlet concentration at t = 0 (plant starts at its steady state).
    #[serde(default = "default_c_a0")]
    pub initial_c_a0: f64,
    #[serde(default = "default_dedup_eps")]
    pub dedup_eps: f64,
    #[serde(default)]
    pub plant: PlantParams,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub traffic: TrafficSchedule,
    #[serde(default, rename = "disturbance")]
    pub disturbances: Vec<Disturbance>,
    #[serde(default, rename = "fault")]
    pub faults: Vec<FaultEvent>,
    #[serde(default, rename = "session")]
    pub sessions: Vec<OperatorSession>,
    #[serde(default)]
    pub irregular: Vec<IrregularEvent>,
    #[serde(default, rename = "attack")]
    pub attacks: Vec<AttackSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanConfig>,
    #[serde(default)]
    pub split: SplitPolicy,
}

impl ScenarioConfig {
    pub fn minimal(duration: f64) -> Self {
        Self {
            duration,
            seed: 0,
            initial_c_a0: default_c_a0(),
            dedup_eps: default_dedup_eps(),
            plant: PlantParams::default(),
            controller: ControllerConfig::default(),
            traffic: TrafficSchedule::default(),
            disturbances: Vec::new(),
            faults: Vec::new(),
            sessions: Vec::new(),
            irregular: Vec::new(),
            attacks: Vec::new(),
            plan: None,
            split: SplitPolicy::default(),
        }
    }

    /// Every semantic problem in the configuration, not just the first.
    pub fn validate(&self) -> core::result::Result<(), Vec<String>> {
        let mut errs: Vec<String> = Vec::new();
        let mut push = |r: Result<()>| {
            if let Err(e) = r {
                errs.push(e.to_string());
            }
        };
        let d = self.duration;
        if !(d > 0.0 && d.is_finite()) {
            push(Err(Error::Config("duration must be positive and finite".into())));
        }
        push(self.plant.validate());
        push(self.controller.validate());
        push(self.traffic.validate());
        let sp = self.controller.sample_period;
        if libm::fabs(self.traffic.poll_period - sp) > 1e-12 {
            push(Err(Error::Config(format!(
                "traffic.poll_period ({}) must equal controller.sample_period ({})",
                g9(self.traffic.poll_period),
                g9(sp)
            ))));
        }
        if !is_multiple(self.traffic.report_period, sp) {
            push(Err(Error::Config("traffic.report_period must be a whole multiple of the sample period".into())));
        }
        if self.plant.dt > 0.0 && !is_multiple(sp, self.plant.dt) {
            push(Err(Error::Config("controller.sample_period must be a whole multiple of plant.dt".into())));
        }
        if !(self.initial_c_a0 >= 0.0 && self.initial_c_a0.is_finite()) {
            push(Err(Error::Config("initial_c_a0 must be finite and >= 0".into())));
        }
        if !(self.dedup_eps >= 0.0) {
            push(Err(Error::Config("dedup_eps must be >= 0".into())));
        }
        for (i, x) in self.disturbances.iter().enumerate() {
            if !(x.at >= 0.0 && x.at < d) {
                push(Err(Error::Config(format!("disturbance[{}] at {} lies outside [0, {})", i, g9(x.at), g9(d)))));
            }
            if !(x.c_a0 >= 0.0 && x.c_a0.is_finite()) {
                push(Err(Error::Config(format!("disturbance[{}] c_a0 must be finite and >= 0", i))));
            }
        }
        let mut faults = self.faults.clone();
        faults.sort_by(|a, b| a.at.total_cmp(&b.at));
        let mut mode = SystemMode::Normal;
        for f in &faults {
            push(f.validate());
            if !(f.at < d) {
                push(Err(Error::Config(format!("fault at {} lies beyond the duration", g9(f.at)))));
            }
            match mode.transition(f.kind) {
                Some(m) => mode = m,
                None => push(Err(Error::IllegalTransition {
                    from: mode,
                    event: f.kind,
                })),
            }
        }
        push(validate_sessions(&self.sessions, d));
        for s in &self.sessions {
            for a in &s.actions {
                if let crate::host::SessionOp::SetMode { manual_u: Some(u), .. } | crate::host::SessionOp::WriteOutput { u } = a.op {
                    if !(u >= self.controller.u_min && u <= self.controller.u_max) {
                        push(Err(Error::Config(format!(
                            "session of {}: output {} outside the actuator range",
                            s.operator,
                            g9(u)
                        ))));
                    }
                }
            }
        }
        for (i, e) in self.irregular.iter().enumerate() {
            if !(e.at >= 0.0 && e.at < d) {
                push(Err(Error::Config(format!("irregular[{}] at {} lies outside [0, {})", i, g9(e.at), g9(d)))));
            }
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction <= 1.0) {
            push(Err(Error::Config("split.train_fraction must lie in (0, 1]".into())));
        }
        if self.plan.is_some() && !self.attacks.is_empty() {
            push(Err(Error::Config("give either explicit [[attack]] tables or a [plan], not both".into())));
        }
        push(check_attacks(&self.attacks, d, sp));
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    /// The attack catalog: explicit attacks, or the plan expanded with the
    /// scenario's duration, split and seed.
    pub fn resolve_attacks(&self) -> Result<Vec<AttackSpec>> {
        let Some(plan) = &self.plan else {
            return Ok(self.attacks.clone());
        };
        let grid = self.effective_grid(&plan.grid);
        let attacks = plan_attacks(&grid, plan.limit, self.seed)?;
        check_attacks(&attacks, self.duration, self.controller.sample_period)?;
        Ok(attacks)
    }

    pub fn effective_grid(&self, grid: &AttackGrid) -> AttackGrid {
        AttackGrid {
            duration: self.duration,
            train_fraction: self.split.train_fraction,
            sample_period: self.controller.sample_period,
            ..grid.clone()
        }
    }
}

fn is_multiple(x: f64, base: f64) -> bool {
    if !(base > 0.0 && x > 0.0) {
        return false;
    }
    let r = x / base;
    libm::fabs(r - libm::round(r)) < 1e-9 && r >= 1.0 - 1e-9
}

fn check_attacks(attacks: &[AttackSpec], duration: f64, sample_period: f64) -> Result<()> {
    let mut ids = BTreeSet::new();
    for a in attacks {
        a.validate(duration, sample_period)?;
        if !ids.insert(a.id) {
            return Err(Error::Config(format!("attack id {} is used twice", a.id)));
        }
    }
    for (i, a) in attacks.iter().enumerate() {
        for b in &attacks[i + 1..] {
            if a.window.overlaps(&b.window) {
                return Err(Error::Config(format!("attack {} overlaps attack {}", a.id, b.id)));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{Action, AttackKind, InjectionPoint, Waveform, Window};
    use crate::plant::FaultKind;
    use alloc::vec;

    fn attack(id: u32, start: f64, end: f64) -> AttackSpec {
        AttackSpec {
            id,
            kind: AttackKind::IntegritySca,
            injection_point: InjectionPoint::ActuatorCmd,
            action: Action::Modify,
            waveform: Waveform::step(0.2),
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
    fn minimal_is_valid() {
        assert!(ScenarioConfig::minimal(10.0).validate().is_ok());
    }

    #[test]
    fn collects_all_errors() {
        let mut c = ScenarioConfig::minimal(10.0);
        c.attacks = vec![attack(3, 9.0, 11.0)];
        c.disturbances = vec![Disturbance { at: 12.0, c_a0: 1.0 }];
        c.faults = vec![FaultEvent::new(1.0, FaultKind::F1Causes), FaultEvent::new(2.0, FaultKind::F1Causes)];
        let errs = c.validate().unwrap_err();
        assert!(errs.len() >= 3, "{:?}", errs);
        assert!(errs.iter().any(|e| e.contains("attack 3")));
    }

    #[test]
    fn overlapping_windows_rejected() {
        let mut c = ScenarioConfig::minimal(10.0);
        c.attacks = vec![attack(1, 1.0, 3.0), attack(2, 2.0, 4.0)];
        assert!(c.validate().unwrap_err().iter().any(|e| e.contains("overlaps")));
    }
}
