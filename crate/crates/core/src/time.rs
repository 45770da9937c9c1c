//! Simulation clock. The timeline advances in integer ticks of the plant
//! integration step so that schedules never accumulate floating-point drift.

use serde::{Deserialize, Serialize};

pub type Tick = u64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clock {
    /// Minutes per tick.
    pub dt: f64,
}

impl Clock {
    pub fn new(dt: f64) -> Self {
        Self { dt }
    }

    /// Nearest tick to `minutes`. Negative inputs saturate at tick 0.
    pub fn tick(&self, minutes: f64) -> Tick {
        let t = libm::round(minutes / self.dt);
        if t <= 0.0 {
            0
        } else {
            t as Tick
        }
    }

    pub fn minutes(&self, tick: Tick) -> f64 {
        tick as f64 * self.dt
    }

    /// Number of ticks in a period, or `None` when the period is not an
    /// integer multiple of the step (within 1e-9 relative).
    pub fn ticks_in(&self, period: f64) -> Option<Tick> {
        let n = libm::round(period / self.dt);
        if n < 1.0 || libm::fabs(n * self.dt - period) > 1e-9 * period.max(self.dt) {
            None
        } else {
            Some(n as Tick)
        }
    }
}
