//! Built-in scenarios: the trace-classifier quadrants, the operator-command
//! trio and the stealthy-outcome cells.

use cpsbed_core::attack::{
    Action, AttackKind, AttackSpec, AttackStep, EntryLayer, EntryMethod, InjectionPoint, ReportPolicy, StepEffect,
    Waveform, Window,
};
use cpsbed_core::control::ControlMode;
use cpsbed_core::host::{OperatorSession, SessionAction, SessionOp};
use cpsbed_core::net::NodeId;
use cpsbed_core::plant::{FaultEvent, FaultKind};
use cpsbed_core::scenario::{Disturbance, IrregularEvent, IrregularKind, ScenarioConfig};

pub fn attack(id: u32, kind: AttackKind, point: InjectionPoint, waveform: Waveform, start: f64, end: f64) -> AttackSpec {
    AttackSpec {
        id,
        kind,
        injection_point: point,
        action: Action::Modify,
        waveform,
        window: Window::new(start, end),
        vector: Vec::new(),
        dm_targets: Vec::new(),
        dos_rate: 0.0,
        zero_day: false,
        report_policy: None,
        log_wipe: false,
    }
}

/// A scripted run plus the span of records to classify.
pub struct Quadrant {
    pub name: &'static str,
    pub cfg: ScenarioConfig,
    pub span: (f64, f64),
}

pub fn quadrants() -> Vec<Quadrant> {
    let clean = ScenarioConfig::minimal(6.0);

    let mut fault = ScenarioConfig::minimal(6.0);
    fault.faults = vec![FaultEvent::new(2.0, FaultKind::F1Causes)];

    let mut spoof = ScenarioConfig::minimal(6.0);
    spoof.attacks = vec![attack(
        1,
        AttackKind::IntegritySca,
        InjectionPoint::ActuatorCmd,
        Waveform::step(0.3),
        2.0,
        4.0,
    )];

    let mut both = ScenarioConfig::minimal(6.0);
    both.faults = vec![FaultEvent::new(2.0, FaultKind::F1Causes)];
    let mut falsify = attack(
        1,
        AttackKind::IntegrityDm,
        InjectionPoint::SensorToDm,
        Waveform::step(0.05),
        2.0,
        4.0,
    );
    falsify.dm_targets = vec![NodeId::Hmi, NodeId::Logserver];
    both.attacks = vec![falsify];

    vec![
        Quadrant { name: "clean", cfg: clean, span: (1.5, 3.5) },
        Quadrant { name: "fault", cfg: fault, span: (1.5, 3.5) },
        Quadrant { name: "actuator_spoof", cfg: spoof, span: (1.5, 3.5) },
        Quadrant { name: "fault_and_falsified_sensor", cfg: both, span: (1.5, 3.5) },
    ]
}

const TRIO_DURATION: f64 = 8.0;
pub const TRIO_WINDOW: (f64, f64) = (3.0, 5.0);
const TRIO_MANUAL_U: f64 = 1.5;

fn hmi_command(id: u32) -> AttackSpec {
    attack(
        id,
        AttackKind::IntegrityDm,
        InjectionPoint::DmToActuator,
        Waveform::step(TRIO_MANUAL_U - 1.0),
        TRIO_WINDOW.0,
        TRIO_WINDOW.1,
    )
}

/// Legit operator, compromised HMI, spoofed HMI commands. All three put the
/// same manual output on the actuator over the same window.
pub fn operator_trio() -> [ScenarioConfig; 3] {
    let mut legit = ScenarioConfig::minimal(TRIO_DURATION);
    legit.sessions = vec![OperatorSession {
        operator: "operator".into(),
        login: 2.0,
        logout: 6.0,
        actions: vec![
            SessionAction {
                at: TRIO_WINDOW.0,
                op: SessionOp::SetMode {
                    mode: ControlMode::Manual,
                    manual_u: Some(TRIO_MANUAL_U),
                },
            },
            SessionAction {
                at: TRIO_WINDOW.1,
                op: SessionOp::SetMode {
                    mode: ControlMode::Auto,
                    manual_u: None,
                },
            },
        ],
    }];

    let mut compromised = ScenarioConfig::minimal(TRIO_DURATION);
    let mut a = hmi_command(1);
    let step = |offset: f64, effect: StepEffect| AttackStep {
        offset,
        entry_layer: EntryLayer::Application,
        entry_method: EntryMethod::Intrusion,
        from: NodeId::CorpWs,
        to: NodeId::Hmi,
        effect,
    };
    a.vector = vec![step(-1.0, StepEffect::Credential), step(-0.5, StepEffect::Payload)];
    compromised.attacks = vec![a];

    let mut spoofed = ScenarioConfig::minimal(TRIO_DURATION);
    spoofed.attacks = vec![hmi_command(1)];

    [legit, compromised, spoofed]
}

/// Expected outcome cell and the scenario that should produce it.
pub fn stealthy_cells() -> Vec<(&'static str, ScenarioConfig)> {
    let normal = ScenarioConfig::minimal(10.0);

    let mut intervention = ScenarioConfig::minimal(10.0);
    intervention.irregular = vec![IrregularEvent {
        at: 1.0,
        kind: IrregularKind::ModeSwitchTraffic,
        mode: Some(ControlMode::Manual),
    }];
    intervention.disturbances = vec![Disturbance { at: 2.0, c_a0: 1.925 }];

    let mut futile = ScenarioConfig::minimal(10.0);
    let mut a = attack(
        1,
        AttackKind::Stealthy,
        InjectionPoint::SensorToDm,
        Waveform::step(0.6),
        2.0,
        6.0,
    );
    a.dm_targets = vec![NodeId::Hmi, NodeId::Logserver];
    a.report_policy = Some(ReportPolicy::Offset(Waveform::step(0.6)));
    futile.attacks = vec![a];

    let mut hazard = ScenarioConfig::minimal(15.0);
    let mut a = attack(
        1,
        AttackKind::Stealthy,
        InjectionPoint::SensorToController,
        Waveform::step(-2.0),
        2.0,
        15.0,
    );
    a.dm_targets = vec![NodeId::Hmi, NodeId::Logserver];
    a.report_policy = Some(ReportPolicy::FreezeLastGood);
    hazard.attacks = vec![a];

    vec![
        ("NORMAL_OPERATION", normal),
        ("DM_INTERVENTION", intervention),
        ("DM_INTERVENTION_FUTILE", futile),
        ("HAZARD", hazard),
    ]
}
