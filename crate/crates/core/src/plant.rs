//! First-order CSTR with a measurable inlet-concentration disturbance and a
//! hybrid automaton of known failure modes.
//!
//! Continuous dynamics:
//!
//! ```text
//! dC_A/dt = (F_eff / V) (C_A0 - C_A) - k_eff C_A
//! ```
//!
//! where `F_eff` is the commanded inlet flow (or the flow frozen at the
//! instant of valve stiction) and `k_eff` is the rate constant scaled by the
//! catalyst-decay factor once that fault is present.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantParams {
    /// Nominal inlet flow (m³/min).
    pub flow: f64,
    /// Reactor volume (m³).
    pub volume: f64,
    /// Reaction rate constant (1/min).
    pub rate: f64,
    /// Sensor noise standard deviation (mol/m³).
    pub noise_std: f64,
    /// Integration step (min).
    pub dt: f64,
}

impl Default for PlantParams {
    /// F = V = k = 1 gives a process gain of 0.5 and a time constant of 0.5 min.
    fn default() -> Self {
        Self {
            flow: 1.0,
            volume: 1.0,
            rate: 1.0,
            noise_std: 0.0,
            dt: 1e-3,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.flow, self.volume, self.rate, self.noise_std, self.dt]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NumericDomain("plant parameters must be finite"));
        }
        if self.flow <= 0.0 || self.volume <= 0.0 || self.dt <= 0.0 {
            return Err(Error::NumericDomain("flow, volume and dt must be positive"));
        }
        if self.rate < 0.0 || self.noise_std < 0.0 {
            return Err(Error::NumericDomain("rate and noise_std must be non-negative"));
        }
        Ok(())
    }

    /// Steady-state gain `F / (F + V k)` at the nominal flow.
    pub fn gain(&self) -> f64 {
        self.flow / (self.flow + self.volume * self.rate)
    }

    /// Time constant `V / (F + V k)` at the nominal flow (min).
    pub fn time_constant(&self) -> f64 {
        self.volume / (self.flow + self.volume * self.rate)
    }

    /// Outlet concentration at equilibrium for inlet flow `u` and inlet
    /// concentration `c_a0` under the healthy model.
    pub fn steady_state(&self, u: f64, c_a0: f64) -> f64 {
        u * c_a0 / (u + self.volume * self.rate)
    }
}

/// Discrete mode of the failure automaton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SystemMode {
    Normal,
    /// Catalyst decay: effective rate constant scaled by κ < 1.
    F1,
    /// Inlet-valve stiction: flow frozen, commands have no effect.
    F2,
    /// Both faults present.
    F12,
}

impl SystemMode {
    pub const ALL: [SystemMode; 4] = [Self::Normal, Self::F1, Self::F2, Self::F12];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Normal => "NORMAL",
            Self::F1 => "F1",
            Self::F2 => "F2",
            Self::F12 => "F12",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// Target of the automaton edge guarded by `event`, if that edge exists.
    pub fn transition(self, event: FaultKind) -> Option<SystemMode> {
        use FaultKind::*;
        use SystemMode::*;
        match (self, event) {
            (Normal, F1Causes) => Some(F1),
            (Normal, F2Causes) => Some(F2),
            (Normal, F1AndF2Causes) => Some(F12),
            (F1, F2Causes) => Some(F12),
            (F2, F1Causes) => Some(F12),
            _ => None,
        }
    }

    pub fn has_decay(self) -> bool {
        matches!(self, Self::F1 | Self::F12)
    }

    pub fn has_stiction(self) -> bool {
        matches!(self, Self::F2 | Self::F12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FaultKind {
    F1Causes,
    F2Causes,
    F1AndF2Causes,
}

pub const DEFAULT_DECAY: f64 = 0.5;

fn default_decay() -> f64 {
    DEFAULT_DECAY
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultEvent {
    /// Scheduled time (min).
    pub at: f64,
    pub kind: FaultKind,
    /// Catalyst activity factor κ installed by F1; must lie in (0, 1).
    #[serde(default = "default_decay")]
    pub decay: f64,
}

impl FaultEvent {
    pub fn new(at: f64, kind: FaultKind) -> Self {
        Self {
            at,
            kind,
            decay: DEFAULT_DECAY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.at >= 0.0) || !self.at.is_finite() {
            return Err(Error::NumericDomain("fault time must be finite and >= 0"));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::NumericDomain("catalyst decay factor must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    /// Simulation time (min).
    pub t: f64,
    /// Outlet concentration (mol/m³).
    pub c_a: f64,
    /// Inlet concentration, the measurable disturbance (mol/m³).
    pub c_a0: f64,
    pub mode: SystemMode,
    /// Catalyst activity multiplier on the rate constant (1 when healthy).
    pub decay: f64,
    /// Flow held by a stuck valve.
    pub frozen_flow: Option<f64>,
    /// Flow applied over the most recent step.
    pub flow: f64,
}

impl PlantState {
    /// Healthy plant at the exact model equilibrium for nominal flow.
    pub fn steady(params: &PlantParams, c_a0: f64) -> Self {
        Self {
            t: 0.0,
            c_a: params.gain() * c_a0,
            c_a0,
            mode: SystemMode::Normal,
            decay: 1.0,
            frozen_flow: None,
            flow: params.flow,
        }
    }

    fn derivative(&self, c_a: f64, flow: f64, params: &PlantParams) -> f64 {
        let k_eff = params.rate * self.decay;
        flow / params.volume * (self.c_a0 - c_a) - k_eff * c_a
    }

    /// Flow the plant actually receives for command `u` in the current mode.
    pub fn effective_flow(&self, u: f64) -> f64 {
        match self.frozen_flow {
            Some(f) if self.mode.has_stiction() => f,
            _ => u,
        }
    }
}

/// Advance the plant by one RK4 step of `params.dt` with flow command `u`.
pub fn integrate_step(state: &PlantState, u: f64, params: &PlantParams) -> Result<PlantState> {
    if !u.is_finite() || !state.c_a.is_finite() || !state.c_a0.is_finite() || !state.t.is_finite() {
        return Err(Error::NumericDomain("non-finite plant state or input"));
    }
    if u < 0.0 {
        return Err(Error::NumericDomain("flow command must be non-negative"));
    }
    let flow = state.effective_flow(u);
    let h = params.dt;
    let c = state.c_a;
    let k1 = state.derivative(c, flow, params);
    let k2 = state.derivative(c + 0.5 * h * k1, flow, params);
    let k3 = state.derivative(c + 0.5 * h * k2, flow, params);
    let k4 = state.derivative(c + h * k3, flow, params);
    let c_next = c + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if !c_next.is_finite() {
        return Err(Error::NumericDomain("integration diverged"));
    }
    Ok(PlantState {
        t: state.t + h,
        c_a: c_next.max(0.0),
        flow,
        ..*state
    })
}

/// Deviation of `C_A` from its initial steady value `t` minutes after a
/// step of `delta_c_a0` in the inlet concentration.
pub fn analytic_response(params: &PlantParams, delta_c_a0: f64, t_since_step: f64) -> Result<f64> {
    if t_since_step < 0.0 {
        return Err(Error::NegativeTime(t_since_step));
    }
    let tau = params.time_constant();
    Ok(params.gain() * delta_c_a0 * -libm::expm1(-t_since_step / tau))
}

/// Recover the inlet concentration from an outlet-concentration deviation by
/// inverting the first-order step response.
pub fn estimate_disturbance(
    c_a_now: f64,
    c_a_init: f64,
    c_a0_init: f64,
    t_since_step: f64,
    params: &PlantParams,
) -> Result<f64> {
    let factor = -libm::expm1(-t_since_step / params.time_constant());
    if !(t_since_step > 0.0) || factor == 0.0 {
        return Err(Error::Singularity(t_since_step));
    }
    Ok(c_a0_init + (c_a_now - c_a_init) / (params.gain() * factor))
}

/// Fire a fault event, moving the automaton along one of its edges.
pub fn apply_fault_event(state: &PlantState, event: &FaultEvent) -> Result<PlantState> {
    event.validate()?;
    if event.at > state.t + 1e-12 {
        return Err(Error::FaultNotDue {
            at: event.at,
            now: state.t,
        });
    }
    let next = state
        .mode
        .transition(event.kind)
        .ok_or(Error::IllegalTransition {
            from: state.mode,
            event: event.kind,
        })?;
    let mut out = *state;
    out.mode = next;
    if matches!(event.kind, FaultKind::F1Causes | FaultKind::F1AndF2Causes) {
        out.decay = event.decay;
    }
    if matches!(event.kind, FaultKind::F2Causes | FaultKind::F1AndF2Causes) {
        out.frozen_flow = Some(state.flow);
    }
    Ok(out)
}

/// Noisy concentration sensor drawing from its own seeded stream.
#[derive(Debug, Clone)]
pub struct Sensor {
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl Sensor {
    pub fn new(noise_std: f64, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let noise = if noise_std > 0.0 {
            Normal::new(0.0, noise_std).ok()
        } else {
            None
        };
        Self { noise, rng }
    }

    /// Reading of the outlet concentration; never negative.
    pub fn measure(&mut self, state: &PlantState) -> f64 {
        let n = match &self.noise {
            Some(d) => d.sample(&mut self.rng),
            None => 0.0,
        };
        (state.c_a + n).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn params() -> PlantParams {
        PlantParams::default()
    }

    fn run(mut s: PlantState, u: f64, steps: usize, p: &PlantParams) -> Vec<PlantState> {
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            s = integrate_step(&s, u, p).unwrap();
            out.push(s);
        }
        out
    }

    #[test]
    fn derived_constants() {
        let p = params();
        assert_eq!(p.gain(), 0.5);
        assert_eq!(p.time_constant(), 0.5);
    }

    #[test]
    fn steady_state_is_a_fixed_point() {
        let p = params();
        let s0 = PlantState::steady(&p, 0.925);
        assert_eq!(s0.c_a, 0.4625);
        let s = run(s0, 1.0, 1000, &p).pop().unwrap();
        assert!((s.c_a - 0.4625).abs() <= 1e-12);
        assert!((s.t - 1.0).abs() < 1e-9);
    }

    #[test]
    fn step_response_at_one_time_constant() {
        let p = params();
        let mut s = PlantState::steady(&p, 0.925);
        s.c_a0 += 1.0;
        let s = run(s, 1.0, 500, &p).pop().unwrap();
        let expected = 0.5 * (1.0 - libm::exp(-1.0));
        assert!((expected - 0.316_060_279).abs() < 1e-9);
        assert!((s.c_a - 0.4625 - expected).abs() <= 1e-6);
        assert!((analytic_response(&p, 1.0, 0.5).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn analytic_limits() {
        let p = params();
        assert_eq!(analytic_response(&p, 1.0, 0.0).unwrap(), 0.0);
        assert!((analytic_response(&p, 1.0, 50.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(analytic_response(&p, 1.0, -0.1), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn disturbance_estimate() {
        let p = params();
        assert_eq!(estimate_disturbance(0.4625, 0.4625, 0.925, 1.0, &p).unwrap(), 0.925);
        let dev = analytic_response(&p, 1.0, 0.5).unwrap();
        let est = estimate_disturbance(0.4625 + dev, 0.4625, 0.925, 0.5, &p).unwrap();
        assert!((est - 1.925).abs() <= 1e-9);
        assert!(matches!(
            estimate_disturbance(0.5, 0.4625, 0.925, 0.0, &p),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn rejects_non_finite_input() {
        let p = params();
        let s = PlantState::steady(&p, 0.925);
        assert!(integrate_step(&s, f64::NAN, &p).is_err());
        let mut bad = s;
        bad.c_a = f64::INFINITY;
        assert!(integrate_step(&bad, 1.0, &p).is_err());
    }

    #[test]
    fn stiction_freezes_flow() {
        let p = params();
        let s = PlantState::steady(&p, 1.2);
        let s = apply_fault_event(&s, &FaultEvent::new(0.0, FaultKind::F2Causes)).unwrap();
        assert_eq!(s.frozen_flow, Some(1.0));
        let a = run(s, 1.0, 300, &p);
        let b = run(s, 2.0, 300, &p);
        assert_eq!(a, b);
    }

    #[test]
    fn automaton_edges() {
        let p = params();
        let s = PlantState::steady(&p, 0.925);
        let f1 = apply_fault_event(&s, &FaultEvent::new(0.0, FaultKind::F1Causes)).unwrap();
        assert_eq!(f1.mode, SystemMode::F1);
        assert_eq!(f1.decay, 0.5);
        let f12 = apply_fault_event(&f1, &FaultEvent::new(0.0, FaultKind::F2Causes)).unwrap();
        assert_eq!(f12.mode, SystemMode::F12);
        assert!(matches!(
            apply_fault_event(&f12, &FaultEvent::new(0.0, FaultKind::F1Causes)),
            Err(Error::IllegalTransition { .. })
        ));
        assert!(apply_fault_event(&f1, &FaultEvent::new(0.0, FaultKind::F1Causes)).is_err());
        let late = FaultEvent::new(3.0, FaultKind::F1Causes);
        assert!(matches!(apply_fault_event(&s, &late), Err(Error::FaultNotDue { .. })));
    }

    #[test]
    fn sensor_noise() {
        let p = params();
        let s = PlantState::steady(&p, 0.925);
        let mut exact = Sensor::new(0.0, 7, 1);
        assert_eq!(exact.measure(&s), s.c_a);

        let mut a = Sensor::new(0.002, 42, 1);
        let mut b = Sensor::new(0.002, 42, 1);
        let ra: Vec<f64> = (0..50).map(|_| a.measure(&s)).collect();
        let rb: Vec<f64> = (0..50).map(|_| b.measure(&s)).collect();
        assert_eq!(ra, rb);
        assert!(ra.iter().any(|v| *v != s.c_a));

        let mut low = s;
        low.c_a = 0.001;
        let mut loud = Sensor::new(10.0, 3, 1);
        let readings: Vec<f64> = (0..100).map(|_| loud.measure(&low)).collect();
        assert!(readings.iter().all(|v| *v >= 0.0));
        assert!(readings.iter().any(|v| *v == 0.0));
    }
}
