use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// Picoseconds per nanosecond.
pub const PS_PER_NS: u64 = 1_000;

/// Simulation time in integer picoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    /// Rounds a nanosecond quantity to the nearest picosecond.
    ///
    /// Negative or NaN inputs clamp to zero; configuration validation rejects
    /// them before they get here.
    pub fn from_ns(ns: f64) -> Self {
        if ns.is_nan() || ns <= 0.0 {
            return SimTime::ZERO;
        }
        SimTime((ns * PS_PER_NS as f64).round() as u64)
    }

    pub const fn ps(self) -> u64 {
        self.0
    }

    pub fn as_ns(self) -> f64 {
        self.0 as f64 / PS_PER_NS as f64
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    /// Scales by `num / den` with a single rounding step.
    pub fn scale(self, num: u64, den: u64) -> SimTime {
        let wide = self.0 as u128 * num as u128;
        SimTime(((wide + den as u128 / 2) / den as u128) as u64)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ps", self.0)
    }
}

/// A clock domain. The cycle length is kept as the exact rational
/// `1e6 / mhz` picoseconds, so `cycles(n)` rounds once instead of
/// accumulating a rounded period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockDomain {
    mhz: u64,
}

impl ClockDomain {
    pub fn new(mhz: u64) -> Self {
        assert!(mhz > 0, "clock frequency must be positive");
        ClockDomain { mhz }
    }

    pub fn mhz(&self) -> u64 {
        self.mhz
    }

    /// Duration of `n` cycles: `n * 1e6 / mhz` picoseconds, rounded to nearest.
    pub fn cycles(&self, n: u64) -> SimTime {
        let num = n as u128 * 1_000_000;
        let den = self.mhz as u128;
        SimTime(((num + den / 2) / den) as u64)
    }

    /// Number of whole cycles elapsed by `t` (floor).
    pub fn cycles_in(&self, t: SimTime) -> u64 {
        (t.0 as u128 * self.mhz as u128 / 1_000_000) as u64
    }
}
