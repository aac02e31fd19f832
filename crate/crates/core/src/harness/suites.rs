//! The canned experiment suites.

use std::fmt;
use std::str::FromStr;

use super::config::SimConfig;
use super::report::Report;
use crate::coherence::{Address, Fabric, FabricConfig, Intent, MemoryMap, Tier, LINE_BYTES};
use crate::engine::SimTime;
use crate::error::{Result, SimError};
use crate::interconnect::{DeviceKind, DmaEngine, DmaKind, Profile, NUMA_NODES};
use crate::nic::{run_deserialize, run_rao_bounded, run_serialize, NicDevice, NicTrace, RpcRegions, RpcRun, SerPath};
use crate::workloads::circustent::{gen_circustent, CircusPattern};
use crate::workloads::lsu::{gen_lsu, AccessKind, LsuMode, LsuTrace};
use crate::workloads::rpcbench::gen_rpc_bench;

/// Host buffer the LSU suites load from.
const LSU_BASE: u64 = 0x4000_0000;
/// Idle gap between LSU trials so each starts on a quiet fabric.
const TRIAL_GAP_NS: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    NumaLatency,
    TierLatency,
    TierBandwidth,
    DmaSweep,
    Rao,
    Rpc,
}

impl Suite {
    pub const ALL: [Suite; 6] =
        [Suite::NumaLatency, Suite::TierLatency, Suite::TierBandwidth, Suite::DmaSweep, Suite::Rao, Suite::Rpc];

    pub fn name(self) -> &'static str {
        match self {
            Suite::NumaLatency => "numa-latency",
            Suite::TierLatency => "tier-latency",
            Suite::TierBandwidth => "tier-bandwidth",
            Suite::DmaSweep => "dma-sweep",
            Suite::Rao => "rao",
            Suite::Rpc => "rpc",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| SimError::Config(format!("unknown suite `{s}`")))
    }
}

/// Optional trace capture for a run. Enabled traces collect TSV text.
#[derive(Debug, Clone, Default)]
pub struct Traces {
    pub coherence: Option<String>,
    pub nic: Option<String>,
}

impl Traces {
    pub fn enabled(coherence: bool, nic: bool) -> Traces {
        Traces { coherence: coherence.then(String::new), nic: nic.then(String::new) }
    }

    fn fabric(&self, cfg: &SimConfig, p: &Profile) -> Result<Fabric> {
        let fc = FabricConfig { log_messages: self.coherence.is_some(), ..cfg.topology.clone() };
        Fabric::new(&fc, p.latency.resolve()?)
    }

    fn nic_trace(&self) -> NicTrace {
        if self.nic.is_some() {
            NicTrace::enabled()
        } else {
            NicTrace::default()
        }
    }

    fn keep(&mut self, label: &str, f: &Fabric, t: &NicTrace) {
        if let Some(out) = &mut self.coherence {
            if !f.log().entries().is_empty() {
                out.push_str(&format!("# {label}\n"));
                let mut buf = Vec::new();
                f.log().write_tsv(&mut buf).expect("writing to memory");
                out.push_str(&String::from_utf8(buf).expect("utf-8"));
            }
        }
        if let Some(out) = &mut self.nic {
            if !t.events().is_empty() {
                out.push_str(&format!("# {label}\n"));
                let mut buf = Vec::new();
                t.write_tsv(&mut buf).expect("writing to memory");
                out.push_str(&String::from_utf8(buf).expect("utf-8"));
            }
        }
    }
}

pub fn run_experiment(suite: Suite, cfg: &SimConfig) -> Result<Report> {
    run_experiment_traced(suite, cfg, &mut Traces::default())
}

pub fn run_experiment_traced(suite: Suite, cfg: &SimConfig, traces: &mut Traces) -> Result<Report> {
    cfg.workload.validate()?;
    let mut r = Report::new(suite.name(), cfg);
    let res = match suite {
        Suite::NumaLatency => numa_latency(cfg, traces, &mut r),
        Suite::TierLatency => tier_latency(cfg, traces, &mut r),
        Suite::TierBandwidth => tier_bandwidth(cfg, traces, &mut r),
        Suite::DmaSweep => dma_sweep(cfg, &mut r),
        Suite::Rao => rao(cfg, traces, &mut r),
        Suite::Rpc => rpc(cfg, traces, &mut r),
    };
    res.map_err(|e| e.context(format!("experiment {suite}")))?;
    Ok(r)
}

fn need_cxl(cfg: &SimConfig, suite: &str) -> Result<()> {
    if cfg.profile.device != DeviceKind::Cxl {
        return Err(SimError::Config(format!("{suite} needs a cxl-nic device")));
    }
    Ok(())
}

/// Runs an LSU trace and returns one sample per measured access (latency
/// mode, ns) or per measured trial (bandwidth mode, GB/s). A trace with no
/// warm-up gets one unmeasured pass first, which fills the HMC.
pub fn run_lsu(f: &mut Fabric, t: &LsuTrace) -> Result<Vec<f64>> {
    let cycle = f.timing().clock.cycles(1);
    let gap = SimTime::from_ns(TRIAL_GAP_NS);
    let mut now = SimTime::ZERO;
    let mut out = Vec::new();
    let passes = if t.warmup.is_empty() { t.repeat + 1 } else { t.repeat };
    for pass in 0..passes {
        let measured = !(t.warmup.is_empty() && pass == 0);
        for (a, tier) in &t.warmup {
            f.place_in(*a, *tier)?;
        }
        let access = |f: &mut Fabric, at: SimTime, k: AccessKind, a: Address| match k {
            AccessKind::Load => f.device_load(at, a, Intent::Shared),
            AccessKind::Store => f.device_store(at, a, &[0; 8]),
        };
        match t.mode {
            LsuMode::Latency => {
                for (k, a) in &t.accesses {
                    let acc = access(f, now, *k, *a)?;
                    if measured {
                        out.push((acc.done - now).as_ns());
                    }
                    now = acc.done;
                }
            }
            LsuMode::Bandwidth => {
                let mut first = SimTime::MAX;
                let mut last = SimTime::ZERO;
                for (i, (k, a)) in t.accesses.iter().enumerate() {
                    let acc = access(f, now + SimTime(cycle.ps() * i as u64), *k, *a)?;
                    first = first.min(acc.done);
                    last = last.max(acc.done);
                }
                // steady-state rate between the first and last completion
                if measured {
                    let bytes = (t.accesses.len() as u64 - 1) * LINE_BYTES;
                    out.push(bytes as f64 / (last - first).as_ns());
                }
                now = last;
            }
        }
        now += gap;
    }
    Ok(out)
}

fn lsu_trace(tier: Tier, mode: LsuMode, cfg: &SimConfig) -> Result<LsuTrace> {
    let mut t = gen_lsu(tier, mode, Address(LSU_BASE))?;
    match mode {
        LsuMode::Latency => t.repeat = cfg.workload.latency_trials,
        LsuMode::Bandwidth => {
            t.repeat = cfg.workload.bandwidth_trials;
            t.accesses.truncate(cfg.workload.bandwidth_lines);
            t.warmup.truncate(cfg.workload.bandwidth_lines);
            let need = cfg.workload.bandwidth_lines;
            let have = t.accesses.len();
            for i in have..need {
                let a = Address(LSU_BASE + i as u64 * LINE_BYTES);
                t.accesses.push((AccessKind::Load, a));
                if tier != Tier::Hmc {
                    t.warmup.push((a, tier));
                }
            }
        }
    }
    Ok(t)
}

const TIERS: [(Tier, &str); 3] = [(Tier::Hmc, "hmc_hit"), (Tier::Llc, "llc_hit"), (Tier::Mem, "mem_hit")];

fn tier_latency(cfg: &SimConfig, tr: &mut Traces, r: &mut Report) -> Result<()> {
    need_cxl(cfg, "tier-latency")?;
    for (tier, name) in TIERS {
        let mut f = tr.fabric(cfg, &cfg.profile)?;
        let samples = run_lsu(&mut f, &lsu_trace(tier, LsuMode::Latency, cfg)?)?;
        tr.keep(name, &f, &NicTrace::default());
        r.push(name, "ns", samples);
    }
    Ok(())
}

fn tier_bandwidth(cfg: &SimConfig, tr: &mut Traces, r: &mut Report) -> Result<()> {
    need_cxl(cfg, "tier-bandwidth")?;
    for (tier, name) in TIERS {
        let mut f = tr.fabric(cfg, &cfg.profile)?;
        let samples = run_lsu(&mut f, &lsu_trace(tier, LsuMode::Bandwidth, cfg)?)?;
        tr.keep(name, &f, &NicTrace::default());
        r.push(name, "GB/s", samples);
    }
    Ok(())
}

fn numa_latency(cfg: &SimConfig, tr: &mut Traces, r: &mut Report) -> Result<()> {
    need_cxl(cfg, "numa-latency")?;
    for node in 0..NUMA_NODES as u8 {
        let mut p = cfg.profile.clone();
        p.latency.home_node = node;
        let mut f = tr.fabric(cfg, &p)?;
        let name = format!("node{node}.mem_hit");
        let samples = run_lsu(&mut f, &lsu_trace(Tier::Mem, LsuMode::Latency, cfg)?)?;
        tr.keep(&name, &f, &NicTrace::default());
        r.push(name, "ns", samples);
    }
    Ok(())
}

pub fn size_label(bytes: u64) -> String {
    match bytes {
        b if b >= 1 << 20 && b % (1 << 20) == 0 => format!("{}MB", b >> 20),
        b if b >= 1 << 10 && b % (1 << 10) == 0 => format!("{}KB", b >> 10),
        b => format!("{b}B"),
    }
}

/// Isolated-transfer latency and steady-state stream bandwidth of DMA reads.
fn dma_sweep(cfg: &SimConfig, r: &mut Report) -> Result<()> {
    let w = &cfg.workload;
    let base = 0x4000_0000u64;
    for &size in &w.dma_sizes {
        let mut lat = Vec::new();
        let mut e = DmaEngine::new(cfg.profile.dma.clone(), MemoryMap::default())?;
        let mut now = SimTime::ZERO;
        for _ in 0..w.latency_trials.min(100) {
            let c = e.transfer(now, DmaKind::Read, Address(base), size)?;
            lat.push((c.done - now).as_ns());
            now = c.done + SimTime::from_ns(TRIAL_GAP_NS);
        }
        let mut bw = Vec::new();
        for _ in 0..w.bandwidth_trials {
            let mut e = DmaEngine::new(cfg.profile.dma.clone(), MemoryMap::default())?;
            let done: Vec<SimTime> = (0..w.dma_stream as u64)
                .map(|i| e.transfer(SimTime::ZERO, DmaKind::Read, Address(base + i * size), size).map(|c| c.done))
                .collect::<Result<_>>()?;
            let span = (done[done.len() - 1] - done[0]).as_ns();
            bw.push(((w.dma_stream as u64 - 1) * size) as f64 / span);
        }
        r.push(format!("latency.{}", size_label(size)), "ns", lat);
        r.push(format!("bandwidth.{}", size_label(size)), "GB/s", bw);
    }
    Ok(())
}

/// CXL RAO against PCIe RAO on the same profile, one pattern at a time.
fn rao(cfg: &SimConfig, tr: &mut Traces, r: &mut Report) -> Result<()> {
    let p = &cfg.profile;
    for &k in &cfg.workload.patterns {
        let reqs = gen_circustent(&CircusPattern::suite_default(k, cfg.workload.rao_ops, cfg.seed))?;
        let mut f = tr.fabric(cfg, p)?;
        let mut t = tr.nic_trace();
        let c = run_rao_bounded(NicDevice::Cxl(&mut f), &p.nic, &reqs, &mut t, cfg.engine.max_events)?;
        tr.keep(&format!("{k} cxl"), &f, &t);
        let mut f = tr.fabric(cfg, p)?;
        let mut dma = DmaEngine::new(p.dma.clone(), cfg.topology.map.clone())?;
        let mut t = tr.nic_trace();
        let b = run_rao_bounded(
            NicDevice::Pcie { fabric: &mut f, dma: &mut dma },
            &p.nic,
            &reqs,
            &mut t,
            cfg.engine.max_events,
        )?;
        tr.keep(&format!("{k} pcie"), &f, &t);
        if let Some(e) = c.responses.iter().chain(&b.responses).find_map(|x| x.rejected.clone()) {
            return Err(e.context(format!("pattern {k}")));
        }
        let cxl = format!("{k}.cxl");
        let pcie = format!("{k}.pcie");
        r.push(&cxl, "Mops/s", vec![c.throughput()]);
        r.push(&pcie, "Mops/s", vec![b.throughput()]);
        r.add_ratio(format!("{k}.speedup"), &cxl, &pcie)?;
    }
    Ok(())
}

fn latencies(run: &RpcRun) -> Result<Vec<f64>> {
    if let Some(e) = run.results.iter().find_map(|x| x.rejected.clone()) {
        return Err(e);
    }
    Ok(run.results.iter().map(|x| x.latency().as_ns()).collect())
}

/// Deserialization and the four serialization paths per bench. Speedups
/// are baseline time over candidate time.
fn rpc(cfg: &SimConfig, tr: &mut Traces, r: &mut Report) -> Result<()> {
    let p = &cfg.profile;
    let regions = RpcRegions::default();
    for &b in &cfg.workload.benches {
        let bench = gen_rpc_bench(b, cfg.workload.rpc_messages, cfg.seed)?;
        let wires = bench.encoded()?;
        let tag = |s: &str| format!("B{b}.{s}");

        let mut f = tr.fabric(cfg, p)?;
        let mut t = tr.nic_trace();
        let cxl = run_deserialize(NicDevice::Cxl(&mut f), &p.nic, &regions, &bench.schema, &wires, &mut t)?;
        tr.keep(&tag("deser.cxl"), &f, &t);
        let mut f = tr.fabric(cfg, p)?;
        let mut dma = DmaEngine::new(p.dma.clone(), cfg.topology.map.clone())?;
        let mut t = tr.nic_trace();
        let pcie = run_deserialize(
            NicDevice::Pcie { fabric: &mut f, dma: &mut dma },
            &p.nic,
            &regions,
            &bench.schema,
            &wires,
            &mut t,
        )?;
        tr.keep(&tag("deser.pcie"), &f, &t);
        r.push(tag("deser.cxl"), "ns", latencies(&cxl)?);
        r.push(tag("deser.pcie"), "ns", latencies(&pcie)?);
        r.add_ratio(tag("deser.speedup"), &tag("deser.pcie"), &tag("deser.cxl"))?;

        for path in SerPath::ALL {
            let mut f = tr.fabric(cfg, p)?;
            let mut dma = DmaEngine::new(p.dma.clone(), cfg.topology.map.clone())?;
            let mut t = tr.nic_trace();
            let dev =
                if path.is_cxl() { NicDevice::Cxl(&mut f) } else { NicDevice::Pcie { fabric: &mut f, dma: &mut dma } };
            let run = run_serialize(dev, path, &p.nic, &regions, &bench.schema, &bench.messages, cfg.seed, &mut t)?;
            tr.keep(&tag(&format!("ser.{path}")), &f, &t);
            r.push(tag(&format!("ser.{path}")), "ns", latencies(&run)?);
            r.push(tag(&format!("construct.{path}")), "ns", run.results.iter().map(|x| x.construct.as_ns()).collect());
        }
        let base = tag("ser.rpcnic");
        for path in [SerPath::CxlMem, SerPath::CxlCache, SerPath::CxlCachePrefetch] {
            r.add_ratio(tag(&format!("ser.{path}.speedup")), &base, &tag(&format!("ser.{path}")))?;
        }
        r.add_ratio(tag("ser.prefetch.speedup"), &tag("ser.cxl-cache"), &tag("ser.cxl-cache-pf"))?;
        r.add_ratio(tag("construct.overhead"), &tag("construct.cxl-mem"), &tag("construct.rpcnic"))?;
    }
    Ok(())
}
