use serde::{Deserialize, Serialize};

use super::resource::{CreditPool, SlotCalendar};
use crate::coherence::{Address, MemoryMap};
use crate::engine::SimTime;
use crate::error::{Result, SimError};

/// PCIe DMA engine parameters. Times in nanoseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmaConfig {
    /// Fixed per-transfer setup cost.
    pub t_setup: f64,
    /// Minimum spacing between pipelined descriptors.
    pub t_desc_issue: f64,
    pub link_bytes_per_cycle: u64,
    pub freq_mhz: u64,
    /// Fraction of the raw link rate left for payload after packet overhead.
    pub payload_efficiency: f64,
    pub max_outstanding: usize,
    pub write_ack_required: bool,
}

impl Default for DmaConfig {
    fn default() -> Self {
        DmaConfig {
            t_setup: 2320.0,
            t_desc_issue: 64.0 / 0.92,
            link_bytes_per_cycle: 64,
            freq_mhz: 400,
            payload_efficiency: 0.89453125,
            max_outstanding: 64,
            write_ack_required: true,
        }
    }
}

impl DmaConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("t_setup", self.t_setup), ("t_desc_issue", self.t_desc_issue)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("dma.{name} must be a finite value >= 0, got {v}")));
            }
        }
        if !(self.payload_efficiency > 0.0 && self.payload_efficiency <= 1.0) {
            return Err(SimError::Config(format!(
                "dma.payload_efficiency must be in (0, 1], got {}",
                self.payload_efficiency
            )));
        }
        if self.link_bytes_per_cycle == 0 || self.freq_mhz == 0 || self.max_outstanding == 0 {
            return Err(SimError::Config(
                "dma.link_bytes_per_cycle, dma.freq_mhz and dma.max_outstanding must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Raw link rate in GB/s (bytes per ns).
    pub fn peak_gbps(&self) -> f64 {
        self.link_bytes_per_cycle as f64 * self.freq_mhz as f64 / 1000.0
    }

    pub fn payload_gbps(&self) -> f64 {
        self.peak_gbps() * self.payload_efficiency
    }

    /// Time the link is busy moving `size` payload bytes.
    pub fn wire_time(&self, size: u64) -> SimTime {
        SimTime::from_ns(size as f64 / self.payload_gbps())
    }

    pub fn isolated_latency(&self, size: u64) -> SimTime {
        SimTime::from_ns(self.t_setup) + self.wire_time(size)
    }

    /// Steady-state bandwidth of a descriptor stream, in GB/s.
    pub fn stream_gbps(&self, size: u64) -> f64 {
        size as f64 / self.t_desc_issue.max(self.wire_time(size).as_ns())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DmaKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DmaCompletion {
    /// When the descriptor was accepted by the engine.
    pub issued: SimTime,
    /// Data delivered (read) or write acknowledged (write).
    pub done: SimTime,
}

/// Transfer-level DMA engine.
///
/// Each transfer takes an outstanding-descriptor slot, an issue slot of
/// `t_desc_issue`, and link time for its payload; it completes `t_setup`
/// after its payload has crossed the link.
#[derive(Debug, Clone)]
pub struct DmaEngine {
    cfg: DmaConfig,
    map: MemoryMap,
    issue: SlotCalendar,
    wire: SlotCalendar,
    slots: CreditPool,
    transfers: u64,
    bytes: u64,
}

impl DmaEngine {
    pub fn new(cfg: DmaConfig, map: MemoryMap) -> Result<Self> {
        cfg.validate()?;
        Ok(DmaEngine {
            slots: CreditPool::new(cfg.max_outstanding),
            cfg,
            map,
            issue: SlotCalendar::new(),
            wire: SlotCalendar::new(),
            transfers: 0,
            bytes: 0,
        })
    }

    pub fn config(&self) -> &DmaConfig {
        &self.cfg
    }

    pub fn transfer(&mut self, at: SimTime, kind: DmaKind, base: Address, size: u64) -> Result<DmaCompletion> {
        let _ = kind;
        if size == 0 {
            return Err(SimError::Config("DMA transfer size must be >= 1".into()));
        }
        let last = base.0.checked_add(size - 1).ok_or(SimError::AddressFault(base.0))?;
        self.map.require_host(base.line())?;
        self.map.require_host(Address(last).line())?;

        let slot = self.slots.acquire(at);
        let issued = self.issue.reserve(slot.start, SimTime::from_ns(self.cfg.t_desc_issue));
        let wire = self.cfg.wire_time(size);
        let on_wire = self.wire.reserve(issued, wire);
        let done = on_wire + wire + SimTime::from_ns(self.cfg.t_setup);
        self.slots.release(slot, done);
        self.transfers += 1;
        self.bytes += size;
        Ok(DmaCompletion { issued, done })
    }

    /// Drops booking history that ended before `now`.
    pub fn prune(&mut self, now: SimTime) {
        self.issue.prune(now);
        self.wire.prune(now);
    }

    pub fn transfers(&self) -> u64 {
        self.transfers
    }

    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    pub fn peak_outstanding(&self) -> usize {
        self.slots.peak()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engine() -> DmaEngine {
        DmaEngine::new(DmaConfig::default(), MemoryMap::default()).unwrap()
    }

    #[test]
    fn isolated_latency_is_setup_plus_wire() {
        let c = DmaConfig::default();
        let mut e = engine();
        let r = e.transfer(SimTime::ZERO, DmaKind::Read, Address(0x1000), 64).unwrap();
        assert_eq!(r.done, c.isolated_latency(64));
        // 64 B at 22.9 GB/s payload rate
        let expect = 2320.0 + 64.0 / 22.9;
        assert!((r.done.as_ns() - expect).abs() < 0.01);
    }

    #[test]
    fn stream_rate_limited_by_issue_or_wire() {
        let c = DmaConfig::default();
        assert!((c.stream_gbps(64) - 0.92).abs() < 1e-3);
        assert!((c.stream_gbps(256 * 1024) - 22.9).abs() < 1e-3);
        let mut e = engine();
        let n = 200;
        let done: Vec<_> =
            (0..n).map(|i| e.transfer(SimTime::ZERO, DmaKind::Read, Address(i * 64), 64).unwrap().done).collect();
        let span = (done[n as usize - 1] - done[0]).as_ns();
        let gbps = (64 * (n - 1)) as f64 / span;
        assert!((gbps - 0.92).abs() / 0.92 < 0.01, "{gbps}");
    }

    #[test]
    fn range_fault() {
        let mut e = engine();
        let top = MemoryMap::default().host.end;
        assert!(matches!(
            e.transfer(SimTime::ZERO, DmaKind::Write, Address(top - 32), 64),
            Err(SimError::AddressFault(_))
        ));
        assert!(e.transfer(SimTime::ZERO, DmaKind::Write, Address(0), 0).is_err());
    }
}
