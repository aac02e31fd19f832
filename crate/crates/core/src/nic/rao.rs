use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{NicConfig, NicTrace};
use crate::coherence::{Address, Fabric, Tier};
use crate::engine::{ComponentId, Kernel, SimTime, DEFAULT_MAX_EVENTS};
use crate::error::{Result, SimError};
use crate::interconnect::{DmaEngine, DmaKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RaoOp {
    Faa,
    Cas,
    Swap,
    And,
    Or,
    Xor,
}

impl RaoOp {
    pub fn name(self) -> &'static str {
        match self {
            RaoOp::Faa => "FAA",
            RaoOp::Cas => "CAS",
            RaoOp::Swap => "SWAP",
            RaoOp::And => "AND",
            RaoOp::Or => "OR",
            RaoOp::Xor => "XOR",
        }
    }

    pub fn parse(s: &str) -> Option<RaoOp> {
        [RaoOp::Faa, RaoOp::Cas, RaoOp::Swap, RaoOp::And, RaoOp::Or, RaoOp::Xor]
            .into_iter()
            .find(|o| o.name().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaoRequest {
    pub op: RaoOp,
    pub target: Address,
    pub operand_a: u64,
    /// CAS replacement value; unused by other ops.
    pub operand_b: u64,
    pub source: u32,
}

impl RaoRequest {
    pub fn faa(target: u64, add: u64) -> Self {
        RaoRequest { op: RaoOp::Faa, target: Address(target), operand_a: add, operand_b: 0, source: 0 }
    }

    /// The value stored after applying the op to `old`.
    pub fn apply(&self, old: u64) -> u64 {
        let a = self.operand_a;
        match self.op {
            RaoOp::Faa => old.wrapping_add(a),
            RaoOp::Cas if old == a => self.operand_b,
            RaoOp::Cas => old,
            RaoOp::Swap => a,
            RaoOp::And => old & a,
            RaoOp::Or => old | a,
            RaoOp::Xor => old ^ a,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaoResponse {
    pub old_value: u64,
    pub completion: SimTime,
    /// Where the CXL read stage found the line; `None` for PCIe.
    pub tier: Option<Tier>,
    pub rejected: Option<SimError>,
}

#[derive(Debug, Clone)]
pub struct RaoRun {
    /// One response per request, in request order.
    pub responses: Vec<RaoResponse>,
    pub makespan: SimTime,
}

impl RaoRun {
    /// Completed operations per microsecond.
    pub fn throughput(&self) -> f64 {
        self.responses.len() as f64 / (self.makespan.as_ns() / 1000.0)
    }
}

/// The NIC under test, borrowed together with the host it attaches to.
pub enum NicDevice<'a> {
    /// Coherent device: atomics lock lines in the HMC, RPC data moves with
    /// device loads and non-cacheable pushes.
    Cxl(&'a mut Fabric),
    /// DMA-only device.
    Pcie { fabric: &'a mut Fabric, dma: &'a mut DmaEngine },
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Wake(usize),
    Done { pe: usize, key: u64 },
}

/// Runs a batch of RAO requests that are all waiting in the RX buffer at
/// time zero.
///
/// A free PE takes the oldest request among the first `rx_window` whose
/// line (CXL) or word (PCIe) is not already being worked on, so requests to
/// one location complete in arrival order while others overtake them.
pub fn run_rao(dev: NicDevice<'_>, nic: &NicConfig, reqs: &[RaoRequest], trace: &mut NicTrace) -> Result<RaoRun> {
    run_rao_bounded(dev, nic, reqs, trace, DEFAULT_MAX_EVENTS)
}

/// [`run_rao`] with an explicit event ceiling.
pub fn run_rao_bounded(
    mut dev: NicDevice<'_>,
    nic: &NicConfig,
    reqs: &[RaoRequest],
    trace: &mut NicTrace,
    max_events: u64,
) -> Result<RaoRun> {
    nic.validate()?;
    let cycle = match &dev {
        NicDevice::Cxl(f) | NicDevice::Pcie { fabric: f, .. } => f.timing().clock.cycles(1),
    };
    let modify = SimTime(cycle.ps() * nic.rao_modify_cycles);
    let write = SimTime(cycle.ps() * nic.rao_write_cycles);
    let is_cxl = matches!(dev, NicDevice::Cxl(_));

    let mut out: Vec<Option<RaoResponse>> = vec![None; reqs.len()];
    let mut pending: VecDeque<usize> = (0..reqs.len()).collect();
    let mut busy: HashSet<u64> = HashSet::new();
    let mut idle = vec![false; nic.pe_count];
    let mut k: Kernel<Ev> = Kernel::with_max_events(max_events);
    let me = ComponentId(0);
    for pe in 0..nic.pe_count {
        k.schedule(me, Ev::Wake(pe), SimTime::ZERO)?;
    }
    let key_of = |r: &RaoRequest| if is_cxl { r.target.line().raw() } else { r.target.0 };

    let mut dispatch =
        |k: &mut Kernel<Ev>, pe: usize, out: &mut Vec<Option<RaoResponse>>, busy: &mut HashSet<u64>| -> Result<bool> {
            let now = k.now();
            loop {
                let Some(pos) = pending.iter().take(nic.rx_window).position(|&i| !busy.contains(&key_of(&reqs[i])))
                else {
                    return Ok(false);
                };
                let i = pending.remove(pos).expect("position in range");
                let r = reqs[i];
                let engine = format!("PE-{pe}");
                if !r.target.0.is_multiple_of(8) {
                    out[i] = Some(reject(SimError::Misaligned(r.target.0), now));
                    continue;
                }
                let resp = match &mut dev {
                    NicDevice::Cxl(f) => {
                        trace.push(now, engine.as_str(), "lock", r.target.0, 8);
                        match f.device_rmw(now, r.target, modify + write, |old| r.apply(old)) {
                            Ok(rmw) => {
                                trace.push(rmw.unlock, engine.as_str(), "unlock", r.target.0, 8);
                                RaoResponse {
                                    old_value: rmw.old,
                                    completion: rmw.unlock,
                                    tier: Some(rmw.tier),
                                    rejected: None,
                                }
                            }
                            Err(e @ SimError::AddressFault(_)) => reject(e, now),
                            Err(e) => return Err(e),
                        }
                    }
                    NicDevice::Pcie { fabric, dma } => {
                        let rd = match dma.transfer(now, DmaKind::Read, r.target, 8) {
                            Ok(c) => c,
                            Err(e @ SimError::AddressFault(_)) => {
                                out[i] = Some(reject(e, now));
                                continue;
                            }
                            Err(e) => return Err(e),
                        };
                        let bytes = fabric.dma_read(r.target, 8)?;
                        let old = u64::from_le_bytes(bytes.try_into().expect("8 bytes"));
                        fabric.dma_write(r.target, &r.apply(old).to_le_bytes())?;
                        let wr = dma.transfer(rd.done + modify, DmaKind::Write, r.target, 8)?;
                        trace.push(rd.issued, "dma", "read", r.target.0, 8);
                        trace.push(rd.done, "dma", "read-done", r.target.0, 8);
                        trace.push(wr.issued, "dma", "write", r.target.0, 8);
                        trace.push(wr.done, "dma", "write-ack", r.target.0, 8);
                        RaoResponse { old_value: old, completion: wr.done, tier: None, rejected: None }
                    }
                };
                if resp.rejected.is_some() {
                    out[i] = Some(resp);
                    continue;
                }
                let key = key_of(&r);
                busy.insert(key);
                k.schedule_at(me, Ev::Done { pe, key }, resp.completion)?;
                out[i] = Some(resp);
                return Ok(true);
            }
        };

    let makespan = k.run_to_completion(|k, ev| {
        match ev.payload {
            Ev::Wake(pe) => idle[pe] = !dispatch(k, pe, &mut out, &mut busy)?,
            Ev::Done { pe, key } => {
                busy.remove(&key);
                idle[pe] = true;
                for p in 0..idle.len() {
                    if idle[p] {
                        idle[p] = !dispatch(k, p, &mut out, &mut busy)?;
                    }
                }
            }
        }
        Ok(())
    })?;
    let responses = out
        .into_iter()
        .map(|r| r.ok_or_else(|| SimError::Config("RAO request never dispatched".into())))
        .collect::<Result<Vec<_>>>()?;
    Ok(RaoRun { responses, makespan })
}

fn reject(e: SimError, at: SimTime) -> RaoResponse {
    RaoResponse { old_value: 0, completion: at, tier: None, rejected: Some(e) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::{FabricConfig, MemoryMap};
    use crate::interconnect::Profile;

    const X: u64 = 0x4000_0000;

    fn fabric(profile: &str) -> (Fabric, Profile) {
        let p = Profile::named(profile).unwrap();
        (Fabric::new(&FabricConfig::default(), p.latency.resolve().unwrap()).unwrap(), p)
    }

    fn cxl(reqs: &[RaoRequest], init: u64) -> (Fabric, RaoRun, NicTrace) {
        let (mut f, p) = fabric("cxl-asic-1500");
        f.dma_write(Address(X), &init.to_le_bytes()).unwrap();
        let mut t = NicTrace::enabled();
        let run = run_rao(NicDevice::Cxl(&mut f), &p.nic, reqs, &mut t).unwrap();
        (f, run, t)
    }

    fn pcie(reqs: &[RaoRequest]) -> (Fabric, RaoRun, NicTrace) {
        let (mut f, p) = fabric("pcie-asic-1500");
        let mut dma = DmaEngine::new(p.dma.clone(), MemoryMap::default()).unwrap();
        let mut t = NicTrace::enabled();
        let run = run_rao(NicDevice::Pcie { fabric: &mut f, dma: &mut dma }, &p.nic, reqs, &mut t).unwrap();
        (f, run, t)
    }

    #[test]
    fn cas_hits_then_misses() {
        let cas = |a, b| RaoRequest { op: RaoOp::Cas, target: Address(X), operand_a: a, operand_b: b, source: 0 };
        let (f, run, _) = cxl(&[cas(5, 9), cas(5, 7)], 5);
        assert_eq!(run.responses[0].old_value, 5);
        assert_eq!(run.responses[1].old_value, 9);
        assert_eq!(f.peek_u64(Address(X)), 9);
    }

    #[test]
    fn pcie_faa_is_two_transactions_each() {
        let reqs = vec![RaoRequest::faa(X, 1); 3];
        let (f, run, t) = pcie(&reqs);
        assert_eq!(t.count("dma", "read") + t.count("dma", "write"), 6);
        let old: Vec<u64> = run.responses.iter().map(|r| r.old_value).collect();
        assert_eq!(old, vec![0, 1, 2]);
        assert_eq!(f.peek_u64(Address(X)), 3);
        assert!(run.responses.windows(2).all(|w| w[0].completion < w[1].completion));
    }

    #[test]
    fn distinct_words_overlap() {
        let reqs = [RaoRequest::faa(X, 1), RaoRequest::faa(X + 8, 1)];
        let (_, run, t) = pcie(&reqs);
        let reads: Vec<_> = t.events().iter().filter(|e| e.action == "read").map(|e| e.tick).collect();
        assert_eq!(reads.len(), 2);
        // second read is issued before the first FAA completes
        assert!(reads[1] < run.responses[0].completion);
    }

    #[test]
    fn central_counter_settles_in_hmc() {
        let reqs = vec![RaoRequest::faa(X, 1); 1000];
        let (f, run, _) = cxl(&reqs, 0);
        assert_eq!(run.responses[0].tier, Some(Tier::Mem));
        assert!(run.responses[1..].iter().all(|r| r.tier == Some(Tier::Hmc)));
        assert_eq!(f.peek_u64(Address(X)), 1000);
        assert!(run.responses.iter().enumerate().all(|(i, r)| r.old_value == i as u64));
    }

    #[test]
    fn misaligned_target_is_rejected() {
        let (_, run, _) = cxl(&[RaoRequest::faa(X + 3, 1), RaoRequest::faa(X, 2)], 0);
        assert!(matches!(run.responses[0].rejected, Some(SimError::Misaligned(_))));
        assert_eq!(run.responses[1].old_value, 0);
    }

    #[test]
    fn op_names_roundtrip() {
        for op in [RaoOp::Faa, RaoOp::Cas, RaoOp::Swap, RaoOp::And, RaoOp::Or, RaoOp::Xor] {
            assert_eq!(RaoOp::parse(&op.name().to_lowercase()), Some(op));
        }
        let r = RaoRequest { op: RaoOp::Xor, target: Address(0), operand_a: 0b110, operand_b: 0, source: 0 };
        assert_eq!(r.apply(0b011), 0b101);
    }
}
