//! Regulatory PI controller with safety trip and AUTO/MANUAL operation.
//!
//! The control law is the controller model used by the trace oracle, so it is
//! written to be replayed exactly: `predict_action` and `pi_update` share the
//! same arithmetic path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ControlMode {
    Auto,
    Manual,
}

/// Actuator behaviour when a control cycle receives no sensor data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Failsafe {
    LastKnownGood,
    FailClosed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// Outlet concentration setpoint (mol/m³).
    pub setpoint: f64,
    pub kp_gain: f64,
    pub ki_gain: f64,
    /// Output at zero error and zero integral (m³/min).
    pub u_bias: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Control cycle (min).
    pub sample_period: f64,
    /// Trip level (mol/m³); a reading strictly above it trips the loop.
    pub haz_threshold: f64,
    pub failsafe: Failsafe,
    /// Real-time scheduler: control tasks pre-empt communication tasks.
    pub rtos: bool,
    /// Frames per minute the controller's communication stack can service.
    pub capacity: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            setpoint: 0.4625,
            kp_gain: 2.0,
            ki_gain: 4.0,
            u_bias: 1.0,
            u_min: 0.0,
            u_max: 50.0,
            sample_period: 0.1,
            haz_threshold: 0.9,
            failsafe: Failsafe::LastKnownGood,
            rtos: true,
            capacity: 600.0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.setpoint,
            self.kp_gain,
            self.ki_gain,
            self.u_bias,
            self.u_min,
            self.u_max,
            self.sample_period,
            self.haz_threshold,
            self.capacity,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDomain("controller parameters must be finite"));
        }
        if !(self.u_min < self.u_max) {
            return Err(Error::Config("controller u_min must be below u_max".into()));
        }
        if self.u_min < 0.0 {
            return Err(Error::Config("controller u_min must be non-negative (flow)".into()));
        }
        if !(self.sample_period > 0.0) {
            return Err(Error::Config("controller sample_period must be positive".into()));
        }
        if !(self.haz_threshold > self.setpoint) {
            return Err(Error::Config("haz_threshold must exceed the setpoint".into()));
        }
        if !(self.capacity > 0.0) {
            return Err(Error::Config("controller capacity must be positive".into()));
        }
        Ok(())
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.clamp(self.u_min, self.u_max)
    }

    fn check_range(&self, u: f64) -> Result<()> {
        if u.is_finite() && u >= self.u_min && u <= self.u_max {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                value: u,
                min: self.u_min,
                max: self.u_max,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub mode: ControlMode,
    pub integral: f64,
    pub last_u: f64,
    pub tripped: bool,
    /// Re-seed the integral on the next AUTO update so its output equals `last_u`.
    pub bumpless_pending: bool,
}

impl ControllerState {
    pub fn new(cfg: &ControllerConfig) -> Self {
        Self {
            mode: ControlMode::Auto,
            integral: 0.0,
            last_u: cfg.clamp(cfg.u_bias),
            tripped: false,
            bumpless_pending: false,
        }
    }
}

/// Integral value that makes the next unclamped update at error `e` emit `u`.
pub fn integral_for_output(u: f64, e: f64, cfg: &ControllerConfig) -> f64 {
    if cfg.ki_gain == 0.0 {
        return 0.0;
    }
    (u - cfg.u_bias - cfg.kp_gain * e) / cfg.ki_gain - e * cfg.sample_period
}

fn law(y: f64, cfg: &ControllerConfig, st: &ControllerState) -> (f64, ControllerState) {
    let mut next = *st;
    if st.tripped {
        next.last_u = 0.0;
        return (0.0, next);
    }
    let e = cfg.setpoint - y;
    let integral = if st.bumpless_pending {
        next.bumpless_pending = false;
        integral_for_output(st.last_u, e, cfg)
    } else {
        st.integral
    };
    let candidate = integral + e * cfg.sample_period;
    let raw = cfg.u_bias + cfg.kp_gain * e + cfg.ki_gain * candidate;
    let u = if raw >= cfg.u_min && raw <= cfg.u_max {
        next.integral = candidate;
        raw
    } else {
        // conditional integration: hold the integral while saturated
        next.integral = integral;
        cfg.clamp(cfg.u_bias + cfg.kp_gain * e + cfg.ki_gain * integral)
    };
    next.last_u = u;
    (u, next)
}

/// One control cycle: returns the actuator command and the updated state.
pub fn pi_update(y: f64, cfg: &ControllerConfig, st: &ControllerState) -> Result<(f64, ControllerState)> {
    if st.mode == ControlMode::Manual {
        return Err(Error::ManualMode);
    }
    if !y.is_finite() {
        return Err(Error::NumericDomain("non-finite measurement"));
    }
    Ok(law(y, cfg, st))
}

/// What the controller would emit for `y`, without touching its state.
pub fn predict_action(y: f64, cfg: &ControllerConfig, st: &ControllerState) -> Result<f64> {
    if st.mode == ControlMode::Manual {
        return Err(Error::NotTraceable);
    }
    Ok(law(y, cfg, st).0)
}

/// Latching high-concentration trip. Returns whether the loop is tripped.
pub fn safety_check(y: f64, cfg: &ControllerConfig, st: &ControllerState) -> (bool, ControllerState) {
    let mut next = *st;
    if y > cfg.haz_threshold {
        next.tripped = true;
    }
    if next.tripped {
        next.last_u = 0.0;
    }
    (next.tripped, next)
}

/// Switch between AUTO and MANUAL. Entering MANUAL holds `manual_u` (or the
/// current output); returning to AUTO is bumpless.
pub fn set_control_mode(
    st: &ControllerState,
    mode: ControlMode,
    manual_u: Option<f64>,
    cfg: &ControllerConfig,
) -> Result<ControllerState> {
    if let Some(u) = manual_u {
        cfg.check_range(u)?;
    }
    let mut next = *st;
    match mode {
        ControlMode::Manual => {
            next.mode = ControlMode::Manual;
            next.bumpless_pending = false;
            if let Some(u) = manual_u {
                next.last_u = u;
            }
        }
        ControlMode::Auto => {
            if st.mode == ControlMode::Manual {
                next.bumpless_pending = true;
            }
            next.mode = ControlMode::Auto;
        }
    }
    if next.tripped {
        next.last_u = 0.0;
    }
    Ok(next)
}

/// Operator write of the manual output register.
pub fn manual_write(st: &ControllerState, u: f64, cfg: &ControllerConfig) -> Result<ControllerState> {
    cfg.check_range(u)?;
    if st.mode != ControlMode::Manual {
        return Err(Error::Config("manual output written while in AUTO".into()));
    }
    let mut next = *st;
    next.last_u = if st.tripped { 0.0 } else { u };
    Ok(next)
}
