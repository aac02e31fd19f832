use serde::{Deserialize, Serialize};

use crate::engine::{ClockDomain, SimTime};
use crate::error::{Result, SimError};

/// Number of NUMA nodes in the modeled dual-socket SNC-4 host.
pub const NUMA_NODES: usize = 8;

/// CXL link and host-side timing, all times in nanoseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyConfig {
    /// Device clock.
    pub device_mhz: u64,
    pub t_hmc_hit: f64,
    /// Device to LLC, one way.
    pub t_link_d2h: f64,
    /// LLC to device, one way.
    pub t_link_h2d: f64,
    pub t_llc_service: f64,
    pub t_dram: f64,
    /// Extra latency for host accesses to device-attached memory.
    pub t_cxlmem_adder: f64,
    /// LLC occupancy per D2H request.
    pub host_occupancy: f64,
    /// Memory-controller occupancy per line fill.
    pub mem_occupancy: f64,
    /// Host core L1 hit latency.
    pub t_l1_hit: f64,
    pub credits: usize,
    /// Memory-leg adder per NUMA node, indexed by node id.
    pub numa_adders: [f64; NUMA_NODES],
    /// Node holding the host buffers the device touches.
    pub home_node: u8,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        LatencyConfig {
            device_mhz: 400,
            t_hmc_hit: 115.0,
            t_link_d2h: 200.0,
            t_link_h2d: 200.0,
            t_llc_service: 60.6,
            t_dram: 112.7,
            t_cxlmem_adder: 70.0,
            host_occupancy: 64.0 / 14.10,
            mem_occupancy: 64.0 / 13.49,
            t_l1_hit: 1.25,
            credits: 256,
            numa_adders: [70.0, 73.0, 82.0, 88.0, 22.0, 20.0, 5.0, 0.0],
            home_node: 7,
        }
    }
}

impl LatencyConfig {
    pub fn validate(&self) -> Result<()> {
        let times = [
            ("t_hmc_hit", self.t_hmc_hit),
            ("t_link_d2h", self.t_link_d2h),
            ("t_link_h2d", self.t_link_h2d),
            ("t_llc_service", self.t_llc_service),
            ("t_dram", self.t_dram),
            ("t_cxlmem_adder", self.t_cxlmem_adder),
            ("host_occupancy", self.host_occupancy),
            ("mem_occupancy", self.mem_occupancy),
            ("t_l1_hit", self.t_l1_hit),
        ];
        for (name, v) in times {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("latency.{name} must be a finite value >= 0, got {v}")));
            }
        }
        if let Some(v) = self.numa_adders.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(SimError::Config(format!("latency.numa_adders entries must be >= 0, got {v}")));
        }
        if self.credits == 0 {
            return Err(SimError::Config("latency.credits must be >= 1".into()));
        }
        if self.device_mhz == 0 {
            return Err(SimError::Config("latency.device_mhz must be >= 1".into()));
        }
        NumaTable::from_config(self).penalty(self.home_node)?;
        Ok(())
    }

    /// Converts to integer picoseconds.
    pub fn resolve(&self) -> Result<Timing> {
        self.validate()?;
        let ns = SimTime::from_ns;
        Ok(Timing {
            clock: ClockDomain::new(self.device_mhz),
            hmc_hit: ns(self.t_hmc_hit),
            link_d2h: ns(self.t_link_d2h),
            link_h2d: ns(self.t_link_h2d),
            llc_service: ns(self.t_llc_service),
            dram: ns(self.t_dram),
            cxlmem_adder: ns(self.t_cxlmem_adder),
            host_occupancy: ns(self.host_occupancy),
            mem_occupancy: ns(self.mem_occupancy),
            l1_hit: ns(self.t_l1_hit),
            credits: self.credits,
            numa: NumaTable::from_config(self),
            home_node: self.home_node,
        })
    }

    /// End-to-end single-request latency of an HMC miss that hits the LLC.
    pub fn llc_hit_ns(&self) -> f64 {
        self.t_hmc_hit + self.t_link_d2h + self.t_llc_service + self.t_link_h2d
    }

    pub fn mem_hit_ns(&self) -> f64 {
        self.llc_hit_ns() + self.t_dram + self.numa_adders[self.home_node as usize % NUMA_NODES]
    }
}

/// [`LatencyConfig`] in simulation ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub clock: ClockDomain,
    pub hmc_hit: SimTime,
    pub link_d2h: SimTime,
    pub link_h2d: SimTime,
    pub llc_service: SimTime,
    pub dram: SimTime,
    pub cxlmem_adder: SimTime,
    pub host_occupancy: SimTime,
    pub mem_occupancy: SimTime,
    pub l1_hit: SimTime,
    pub credits: usize,
    pub numa: NumaTable,
    pub home_node: u8,
}

/// Per-node additive latency on the memory leg.
#[derive(Debug, Clone, PartialEq)]
pub struct NumaTable {
    adders: [SimTime; NUMA_NODES],
}

impl NumaTable {
    pub fn from_config(cfg: &LatencyConfig) -> Self {
        NumaTable { adders: cfg.numa_adders.map(SimTime::from_ns) }
    }

    pub fn penalty(&self, node: u8) -> Result<SimTime> {
        self.adders.get(node as usize).copied().ok_or(SimError::UnknownNode(node))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sums() {
        let c = LatencyConfig::default();
        assert!((c.llc_hit_ns() - 575.6).abs() < 1e-9);
        assert!((c.mem_hit_ns() - 688.3).abs() < 1e-9);
        let t = c.resolve().unwrap();
        assert_eq!((t.hmc_hit + t.link_d2h + t.llc_service + t.link_h2d).ps(), 575_600);
    }

    #[test]
    fn numa_lookup() {
        let t = LatencyConfig::default().resolve().unwrap();
        assert_eq!(t.numa.penalty(3).unwrap(), SimTime::from_ns(88.0));
        assert_eq!(t.numa.penalty(7).unwrap(), SimTime::ZERO);
        assert_eq!(t.numa.penalty(8), Err(SimError::UnknownNode(8)));
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = LatencyConfig::default();
        c.credits = 0;
        assert!(c.validate().is_err());
        let mut c = LatencyConfig::default();
        c.t_dram = -1.0;
        assert!(c.validate().is_err());
        let mut c = LatencyConfig::default();
        c.home_node = 9;
        assert!(matches!(c.validate(), Err(SimError::UnknownNode(9))));
    }
}
