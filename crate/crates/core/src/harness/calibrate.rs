//! Calibration self-check against the published FPGA measurements.

use std::fmt;

use super::config::SimConfig;
use super::suites::{run_experiment, Suite};
use crate::error::{Result, SimError};
use crate::interconnect::DeviceKind;

/// Profiles that were fitted to hardware measurements.
pub const CALIBRATED_PROFILES: [&str; 2] = ["cxl-fpga-400", "pcie-fpga-400"];

/// One published measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Golden {
    pub suite: Suite,
    pub metric: &'static str,
    pub unit: &'static str,
    pub target: f64,
    /// Allowed relative error.
    pub tolerance: f64,
}

const fn g(suite: Suite, metric: &'static str, unit: &'static str, target: f64, tolerance: f64) -> Golden {
    Golden { suite, metric, unit, target, tolerance }
}

/// Measured on the 400 MHz FPGA testbed. Compiled in; never read from config.
pub const GOLDEN: [Golden; 9] = [
    g(Suite::TierLatency, "hmc_hit", "ns", 115.0, 0.02),
    g(Suite::TierLatency, "llc_hit", "ns", 575.6, 0.02),
    g(Suite::TierLatency, "mem_hit", "ns", 688.3, 0.02),
    g(Suite::TierBandwidth, "hmc_hit", "GB/s", 25.07, 0.05),
    g(Suite::TierBandwidth, "llc_hit", "GB/s", 14.10, 0.05),
    g(Suite::TierBandwidth, "mem_hit", "GB/s", 13.49, 0.05),
    g(Suite::DmaSweep, "latency.64B", "ns", 2500.0, 0.10),
    g(Suite::DmaSweep, "bandwidth.64B", "GB/s", 0.92, 0.05),
    g(Suite::DmaSweep, "bandwidth.256KB", "GB/s", 22.9, 0.05),
];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub golden: Golden,
    pub measured: f64,
    /// Signed relative error, in percent.
    pub error_pct: f64,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.error_pct.abs() <= self.golden.tolerance * 100.0 + 1e-9
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    pub profile: String,
    pub rows: Vec<CheckRow>,
}

impl CalibrationTable {
    /// Mean absolute percentage error over all rows.
    pub fn mape(&self) -> f64 {
        self.rows.iter().map(|r| r.error_pct.abs()).sum::<f64>() / self.rows.len() as f64
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(CheckRow::passed)
    }
}

impl fmt::Display for CalibrationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "calibration check: {}", self.profile)?;
        writeln!(
            f,
            "{:<15} {:<22} {:>10} {:>10} {:>8} {:>6}  result",
            "suite", "metric", "target", "measured", "err%", "tol%"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<15} {:<22} {:>10.3} {:>10.3} {:>8.2} {:>6.1}  {}",
                r.golden.suite.name(),
                format!("{} ({})", r.golden.metric, r.golden.unit),
                r.golden.target,
                r.measured,
                r.error_pct,
                r.golden.tolerance * 100.0,
                if r.passed() { "pass" } else { "FAIL" }
            )?;
        }
        write!(f, "MAPE {:.2}%", self.mape())
    }
}

/// Runs the calibration suites that apply to the profile's device and
/// compares medians (latency) or means (bandwidth) against [`GOLDEN`].
/// CXL devices are checked on every row; PCIe devices on the DMA rows.
pub fn calibrate_check(cfg: &SimConfig) -> Result<CalibrationTable> {
    if !CALIBRATED_PROFILES.contains(&cfg.profile.name.as_str()) {
        return Err(SimError::Config(format!(
            "profile `{}` is not calibrated; use one of {}",
            cfg.profile.name,
            CALIBRATED_PROFILES.join(", ")
        )));
    }
    let suites: &[Suite] = match cfg.profile.device {
        DeviceKind::Cxl => &[Suite::TierLatency, Suite::TierBandwidth, Suite::DmaSweep],
        DeviceKind::Pcie => &[Suite::DmaSweep],
    };
    let mut rows = Vec::new();
    for &s in suites {
        let mut c = cfg.clone();
        if s == Suite::DmaSweep {
            c.workload.dma_sizes = vec![64, 256 * 1024];
        }
        let report = run_experiment(s, &c)?;
        for gold in GOLDEN.iter().filter(|x| x.suite == s) {
            let series = report
                .series(gold.metric)
                .ok_or_else(|| SimError::Config(format!("{s} did not report {}", gold.metric)))?;
            let measured = if gold.unit == "ns" { series.median()? } else { series.mean()? };
            rows.push(CheckRow { golden: *gold, measured, error_pct: (measured - gold.target) / gold.target * 100.0 });
        }
    }
    Ok(CalibrationTable { profile: cfg.profile.name.clone(), rows })
}
