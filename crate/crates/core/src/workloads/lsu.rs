use serde::{Deserialize, Serialize};

use crate::coherence::{Address, Tier, LINE_BYTES};
use crate::error::{Result, SimError};

pub const LATENCY_LINES: usize = 32;
pub const LATENCY_TRIALS: usize = 1000;
pub const BANDWIDTH_LINES: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LsuMode {
    /// Dependent accesses, one outstanding at a time.
    Latency,
    /// Independent accesses issued one per device cycle.
    Bandwidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccessKind {
    Load,
    Store,
}

/// Device load/store microbenchmark.
///
/// `warmup` is applied before every trial, then `accesses` run; the whole
/// sequence repeats `repeat` times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LsuTrace {
    pub accesses: Vec<(AccessKind, Address)>,
    pub warmup: Vec<(Address, Tier)>,
    pub repeat: usize,
    pub mode: LsuMode,
}

/// Builds the calibration trace for one tier. HMC hits come from repeating
/// the same addresses; LLC and memory placement are re-established before
/// each trial.
pub fn gen_lsu(tier: Tier, mode: LsuMode, base: Address) -> Result<LsuTrace> {
    if base.offset() != 0 {
        return Err(SimError::Misaligned(base.0));
    }
    let (lines, repeat) = match mode {
        LsuMode::Latency => (LATENCY_LINES, LATENCY_TRIALS),
        LsuMode::Bandwidth => (BANDWIDTH_LINES, 2),
    };
    let addrs: Vec<Address> = (0..lines as u64).map(|i| Address(base.0 + i * LINE_BYTES)).collect();
    let warmup = match tier {
        Tier::Hmc => Vec::new(),
        Tier::Llc | Tier::Mem => addrs.iter().map(|a| (*a, tier)).collect(),
        Tier::L1 => return Err(SimError::Config("LSU traces target HMC, LLC or MEM".into())),
    };
    Ok(LsuTrace { accesses: addrs.into_iter().map(|a| (AccessKind::Load, a)).collect(), warmup, repeat, mode })
}
