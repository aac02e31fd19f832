//! RPC deserialization and serialization offload.
//!
//! Both directions run closed loop: message `i + 1` starts when message `i`
//! completes. Deserialization turns wire bytes into host objects (see
//! [`layout`](super::layout)) and publishes the root pointer in a ring.
//! For serialization the CPU first builds the object; that construction
//! time is recorded separately and the measured latency runs from the
//! finished object to the encoded bytes.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layout::{lay_out, line_images, read_object, Layout, Placement, Progress, Step};
use super::prefetch::StridePrefetcher;
use super::{NicConfig, NicDevice, NicTrace};
use crate::coherence::{Address, Fabric, Intent, LineAddr, LineData, Tier, LINE_BYTES};
use crate::engine::{stream_rng, SimTime};
use crate::error::{Result, SimError};
use crate::interconnect::{DmaEngine, DmaKind};
use crate::workloads::codec::{decode_message, encode_message, Message, RpcSchema};

/// Host buffers used by the RPC runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RpcRegions {
    /// Completion ring, one 8-byte slot per message.
    pub ring: u64,
    pub ring_slots: u64,
    /// Decoder output arena (host memory).
    pub rx_arena: u64,
    /// Where the CPU builds objects to send (host memory).
    pub tx_arena: u64,
    /// Arena size; allocation wraps to the start when it runs out.
    pub arena_bytes: u64,
    /// PCIe staging buffer (host memory).
    pub staging: u64,
}

impl Default for RpcRegions {
    fn default() -> Self {
        RpcRegions {
            ring: 0x0f00_0000,
            ring_slots: 4096,
            rx_arena: 0x1000_0000,
            tx_arena: 0x2000_0000,
            arena_bytes: 0x0800_0000,
            staging: 0x3000_0000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SerPath {
    /// CPU stages chunks, rings a doorbell, NIC DMA-reads the staged bytes.
    RpcNic,
    /// CPU builds the object in NIC-attached memory.
    CxlMem,
    /// NIC walks host objects with coherent device loads.
    CxlCache,
    /// As `CxlCache`, with the stride prefetcher on.
    CxlCachePrefetch,
}

impl SerPath {
    pub const ALL: [SerPath; 4] = [SerPath::RpcNic, SerPath::CxlMem, SerPath::CxlCache, SerPath::CxlCachePrefetch];

    pub fn name(self) -> &'static str {
        match self {
            SerPath::RpcNic => "rpcnic",
            SerPath::CxlMem => "cxl-mem",
            SerPath::CxlCache => "cxl-cache",
            SerPath::CxlCachePrefetch => "cxl-cache-pf",
        }
    }

    pub fn is_cxl(self) -> bool {
        self != SerPath::RpcNic
    }
}

impl fmt::Display for SerPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SerPath {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        SerPath::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| SimError::Config(format!("unknown serialization path `{s}`")))
    }
}

/// Outcome of one message.
#[derive(Debug, Clone, PartialEq)]
pub struct RpcResult {
    /// CPU object construction before `start` (serialization only).
    pub construct: SimTime,
    pub start: SimTime,
    pub done: SimTime,
    /// Root object address (deserialization) or encoded bytes
    /// (serialization).
    pub root: Option<Address>,
    pub wire: Option<Vec<u8>>,
    pub rejected: Option<SimError>,
}

impl RpcResult {
    pub fn latency(&self) -> SimTime {
        self.done.saturating_sub(self.start)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpcRun {
    pub results: Vec<RpcResult>,
    pub makespan: SimTime,
}

impl RpcRun {
    /// Mean per-message time in ns over accepted messages.
    pub fn mean_ns(&self) -> f64 {
        self.mean_of(|r| r.latency())
    }

    /// Mean construction time in ns over accepted messages.
    pub fn mean_construct_ns(&self) -> f64 {
        self.mean_of(|r| r.construct)
    }

    fn mean_of(&self, f: impl Fn(&RpcResult) -> SimTime) -> f64 {
        let ok: Vec<f64> = self.results.iter().filter(|r| r.rejected.is_none()).map(|r| f(r).as_ns()).collect();
        if ok.is_empty() {
            return 0.0;
        }
        ok.iter().sum::<f64>() / ok.len() as f64
    }
}

struct Arena {
    base: u64,
    size: u64,
    next: u64,
}

impl Arena {
    fn new(base: u64, size: u64) -> Self {
        Arena { base, size, next: base }
    }

    /// Start of a fresh region able to hold `need` bytes.
    fn take(&mut self, need: u64) -> Result<Address> {
        if need > self.size {
            return Err(SimError::Config(format!("object of {need} B does not fit the {} B arena", self.size)));
        }
        if self.next + need > self.base + self.size {
            self.next = self.base;
        }
        let at = self.next;
        self.next = (at + need).div_ceil(LINE_BYTES) * LINE_BYTES;
        Ok(Address(at))
    }
}

fn byte_cycles(bytes: u64, per_cycle: f64) -> u64 {
    (bytes as f64 / per_cycle).ceil() as u64
}

fn decode_time(fabric: &Fabric, nic: &NicConfig, p: Progress) -> SimTime {
    fabric.timing().clock.cycles(
        nic.decode_cycles_per_message
            + p.fields * nic.decode_cycles_per_field
            + byte_cycles(p.bytes, nic.decode_bytes_per_cycle),
    )
}

fn encode_time(fabric: &Fabric, nic: &NicConfig, fields: u64, bytes: u64) -> SimTime {
    fabric.timing().clock.cycles(
        nic.encode_cycles_per_message
            + fields * nic.encode_cycles_per_field
            + byte_cycles(bytes, nic.encode_bytes_per_cycle),
    )
}

/// Lays out a message twice: once to size it, once at its final address.
/// Scattered messages also start a random distance after the previous one.
fn place(arena: &mut Arena, m: &Message, schema: &RpcSchema, placement: Placement) -> Result<Layout> {
    let probe = lay_out(m, schema, Address(arena.base), placement)?;
    let gap = match placement {
        Placement::Scattered { seed } => stream_rng(seed, "message-gap").random_range(4..=64u64) * LINE_BYTES,
        Placement::Contiguous => 0,
    };
    let at = arena.take(probe.end() - arena.base + gap)?;
    lay_out(m, schema, Address(at.0 + gap), placement)
}

/// Ring entry for a decoded message: the root body, or 0 for a message
/// with no fields (nothing is written for it).
fn ring_value(layout: &Layout) -> u64 {
    if layout.is_empty() {
        0
    } else {
        layout.root.0
    }
}

/// Deserializes each wire message into host objects.
pub fn run_deserialize(
    mut dev: NicDevice<'_>,
    nic: &NicConfig,
    regions: &RpcRegions,
    schema: &RpcSchema,
    wires: &[Vec<u8>],
    trace: &mut NicTrace,
) -> Result<RpcRun> {
    nic.validate()?;
    schema.validate()?;
    let mut arena = Arena::new(regions.rx_arena, regions.arena_bytes);
    let mut now = SimTime::ZERO;
    let mut results = Vec::with_capacity(wires.len());
    for (i, wire) in wires.iter().enumerate() {
        let start = now;
        let ring_slot = Address(regions.ring + (i as u64 % regions.ring_slots) * 8);
        let parsed = decode_message(wire, schema).and_then(|m| place(&mut arena, &m, schema, Placement::Contiguous));
        let layout = match parsed {
            Ok(l) => l,
            Err(e) => {
                let f = match &dev {
                    NicDevice::Cxl(f) | NicDevice::Pcie { fabric: f, .. } => &**f,
                };
                // the decoder still spends its time on the bytes it read
                let done = start + decode_time(f, nic, Progress { fields: 0, bytes: wire.len() as u64 });
                results.push(RpcResult {
                    construct: SimTime::ZERO,
                    start,
                    done,
                    root: None,
                    wire: None,
                    rejected: Some(e),
                });
                now = done;
                continue;
            }
        };
        let total = layout.line_ready.values().copied().max().unwrap_or_default();
        let done = match &mut dev {
            NicDevice::Cxl(f) => deser_cxl(f, nic, &layout, start, total, ring_slot, trace)?,
            NicDevice::Pcie { fabric, dma } => deser_pcie(fabric, dma, nic, &layout, start, total, ring_slot, trace)?,
        };
        results.push(RpcResult {
            construct: SimTime::ZERO,
            start,
            done,
            root: Some(layout.root),
            wire: None,
            rejected: None,
        });
        now = done;
    }
    Ok(RpcRun { results, makespan: now })
}

fn deser_cxl(
    f: &mut Fabric,
    nic: &NicConfig,
    layout: &Layout,
    start: SimTime,
    total: Progress,
    ring_slot: Address,
    trace: &mut NicTrace,
) -> Result<SimTime> {
    let images = layout.lines();
    let mut order: Vec<(SimTime, LineAddr)> =
        layout.line_ready.iter().map(|(l, p)| (start + decode_time(f, nic, *p), *l)).collect();
    order.sort();
    let mut all_go = SimTime::ZERO;
    for (t, line) in order {
        trace.push(t, "deser", "push", line.raw(), LINE_BYTES);
        all_go = all_go.max(f.ncp_push(t, line, images[&line])?);
    }
    let decoded = start + decode_time(f, nic, total);
    let at = all_go.max(decoded);
    trace.push(at, "deser", "ring", ring_slot.0, 8);
    let ring = f.device_store(at, ring_slot, &ring_value(layout).to_le_bytes())?;
    // the consumer polls the ring, pulling the line back to its L1
    f.host_access(ring.done, 0, ring_slot, None)?;
    Ok(ring.done)
}

#[allow(clippy::too_many_arguments)]
fn deser_pcie(
    f: &mut Fabric,
    dma: &mut DmaEngine,
    nic: &NicConfig,
    layout: &Layout,
    start: SimTime,
    total: Progress,
    ring_slot: Address,
    trace: &mut NicTrace,
) -> Result<SimTime> {
    let (base, bytes) = &layout.chunks[0];
    debug_assert_eq!(layout.chunks.len(), 1, "decoder output is contiguous");
    let buf = nic.temp_buffer_bytes as usize;
    let mut acked = SimTime::ZERO;
    let mut issue = start;
    let bytes: &[u8] = if layout.is_empty() { &[] } else { bytes };
    for (k, part) in bytes.chunks(buf).enumerate() {
        let lo = base.0 + (k * buf) as u64;
        let hi = lo + part.len() as u64;
        let ready = layout
            .line_ready
            .range(LineAddr::containing(lo)..LineAddr::containing(hi - 1).offset_lines(1))
            .map(|(_, p)| *p)
            .max()
            .unwrap_or(total);
        issue = issue.max(start + decode_time(f, nic, ready));
        trace.push(issue, "dma", "flush", lo, part.len() as u64);
        let c = dma.transfer(issue, DmaKind::Write, Address(lo), part.len() as u64)?;
        f.dma_write(Address(lo), part)?;
        acked = acked.max(c.done);
    }
    let at = acked.max(start + decode_time(f, nic, total));
    trace.push(at, "dma", "ring", ring_slot.0, 8);
    let c = dma.transfer(at, DmaKind::Write, ring_slot, 8)?;
    f.dma_write(ring_slot, &ring_value(layout).to_le_bytes())?;
    Ok(c.done)
}

/// Serializes each message along `path`. `dev` must be the CXL device for
/// the three CXL paths and the PCIe device for `RpcNic`.
pub fn run_serialize(
    mut dev: NicDevice<'_>,
    path: SerPath,
    nic: &NicConfig,
    regions: &RpcRegions,
    schema: &RpcSchema,
    messages: &[Message],
    seed: u64,
    trace: &mut NicTrace,
) -> Result<RpcRun> {
    nic.validate()?;
    schema.validate()?;
    if path.is_cxl() != matches!(dev, NicDevice::Cxl(_)) {
        return Err(SimError::Config(format!("serialization path {path} does not match the device")));
    }
    let fabric_map = match &dev {
        NicDevice::Cxl(f) | NicDevice::Pcie { fabric: f, .. } => f.map().clone(),
    };
    let mut arena = match path {
        SerPath::CxlMem => Arena::new(fabric_map.device.start, regions.arena_bytes),
        _ => Arena::new(regions.tx_arena, regions.arena_bytes),
    };
    let mut pf = StridePrefetcher::new(nic.prefetch_entries, nic.prefetch_degree);
    let mut now = SimTime::ZERO;
    let mut results = Vec::with_capacity(messages.len());
    for (i, m) in messages.iter().enumerate() {
        let begin = now;
        // host objects come from a general allocator; NIC memory is bump
        // allocated per message
        let placement = match path {
            SerPath::CxlMem => Placement::Contiguous,
            _ => Placement::Scattered { seed: seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) },
        };
        let layout = match place(&mut arena, m, schema, placement) {
            Ok(l) => l,
            Err(e) => {
                results.push(RpcResult {
                    construct: SimTime::ZERO,
                    start: begin,
                    done: begin,
                    root: None,
                    wire: None,
                    rejected: Some(e),
                });
                continue;
            }
        };
        let build =
            SimTime::from_ns(m.field_count() as f64 * nic.cpu_field_ns + layout.payload as f64 * nic.cpu_byte_ns);
        let start = match &mut dev {
            NicDevice::Cxl(f) if path == SerPath::CxlMem => device_build(f, nic, &layout, begin, build)?,
            NicDevice::Cxl(f) | NicDevice::Pcie { fabric: f, .. } => host_build(f, &layout, begin, build)?,
        };
        trace.push(start, "cpu", "built", layout.root.0, layout.bytes());
        let (done, wire) = match (&mut dev, path) {
            (NicDevice::Pcie { fabric, dma }, SerPath::RpcNic) => {
                ser_rpcnic(fabric, dma, nic, regions, schema, &layout, start, trace)?
            }
            (NicDevice::Cxl(f), SerPath::CxlMem) => ser_cxl_mem(f, nic, schema, &layout, start, trace)?,
            (NicDevice::Cxl(f), p) => {
                let pf = (p == SerPath::CxlCachePrefetch).then_some(&mut pf);
                ser_cxl_cache(f, nic, schema, &layout, start, pf, trace)?
            }
            _ => unreachable!("path checked against the device"),
        };
        results.push(RpcResult {
            construct: start - begin,
            start,
            done,
            root: Some(layout.root),
            wire: Some(wire),
            rejected: None,
        });
        now = done;
    }
    Ok(RpcRun { results, makespan: now })
}

/// Construction in NIC memory: CPU work plus the CXL.mem adder on each
/// line written, overlapped `cpu_store_mlp` ways.
fn device_build(f: &mut Fabric, nic: &NicConfig, layout: &Layout, begin: SimTime, build: SimTime) -> Result<SimTime> {
    for (a, bytes) in &layout.chunks {
        f.write_device_memory(*a, bytes)?;
    }
    let per_line = f.timing().cxlmem_adder.scale(1, nic.cpu_store_mlp);
    Ok(begin + build + SimTime(per_line.0 * layout.line_ready.len() as u64))
}

/// CPU stores of every written line, through core 0. Returns when the last
/// store retires.
fn host_build(f: &mut Fabric, layout: &Layout, start: SimTime, build: SimTime) -> Result<SimTime> {
    let mut last = start + build;
    for (line, data) in layout.lines() {
        if layout.line_ready.contains_key(&line) {
            last = last.max(f.host_access(start, 0, Address(line.raw()), Some(&data))?.done);
        }
    }
    Ok(last)
}

fn wire_of(schema: &RpcSchema, m: &Message) -> Result<Vec<u8>> {
    encode_message(m, schema)
}

#[allow(clippy::too_many_arguments)]
fn ser_rpcnic(
    f: &mut Fabric,
    dma: &mut DmaEngine,
    nic: &NicConfig,
    regions: &RpcRegions,
    schema: &RpcSchema,
    layout: &Layout,
    start: SimTime,
    trace: &mut NicTrace,
) -> Result<(SimTime, Vec<u8>)> {
    let mut t = start;
    // gather the chunks into the staging buffer
    let mut staged = Vec::with_capacity(layout.bytes() as usize);
    for (a, len) in &layout.pieces {
        t += SimTime::from_ns(nic.staging_copy_ns);
        trace.push(t, "cpu", "staging-copy", a.0, *len);
    }
    for (a, bytes) in &layout.chunks {
        staged.extend_from_slice(&f.dma_read(*a, bytes.len())?);
    }
    f.dma_write(Address(regions.staging), &staged)?;
    t += SimTime::from_ns(nic.mmio_doorbell_ns);
    trace.push(t, "cpu", "doorbell", regions.staging, 8);
    trace.push(t, "dma", "read", regions.staging, staged.len() as u64);
    let c = dma.transfer(t, DmaKind::Read, Address(regions.staging), staged.len() as u64)?;
    let bytes = f.dma_read(Address(regions.staging), staged.len())?;
    // the staged copy keeps the original addresses as its index
    let mut runs = Vec::with_capacity(layout.chunks.len());
    let mut off = 0;
    for (a, b) in &layout.chunks {
        runs.push((*a, &bytes[off..off + b.len()]));
        off += b.len();
    }
    let images = line_images(&runs);
    let mut read = |a: Address, _: Step| images.get(&a.line()).copied().ok_or(SimError::AddressFault(a.0));
    let m = read_object(schema, schema.root, layout.root, &mut read)?;
    let wire = wire_of(schema, &m)?;
    let done = c.done + encode_time(f, nic, m.field_count() as u64, wire.len() as u64);
    trace.push(done, "encode", "done", layout.root.0, wire.len() as u64);
    Ok((done, wire))
}

fn ser_cxl_mem(
    f: &mut Fabric,
    nic: &NicConfig,
    schema: &RpcSchema,
    layout: &Layout,
    start: SimTime,
    trace: &mut NicTrace,
) -> Result<(SimTime, Vec<u8>)> {
    let mut t = start + f.timing().link_h2d;
    trace.push(t, "cpu", "notify", layout.root.0, layout.bytes());
    // the message sits in one run of NIC memory: one access, then a line
    // per cycle into the encoder's buffer
    let (base, bytes) = &layout.chunks[0];
    let span = LineAddr::containing(base.0 + bytes.len() as u64 - 1).index() - base.line().index() + 1;
    t += f.timing().dram + f.timing().clock.cycles(span);
    let mut read = |a: Address, _: Step| f.read_device_memory(a.line());
    let m = read_object(schema, schema.root, layout.root, &mut read)?;
    let wire = wire_of(schema, &m)?;
    let done = t + encode_time(f, nic, m.field_count() as u64, wire.len() as u64);
    trace.push(done, "encode", "done", layout.root.0, wire.len() as u64);
    Ok((done, wire))
}

#[allow(clippy::too_many_arguments)]
fn ser_cxl_cache(
    f: &mut Fabric,
    nic: &NicConfig,
    schema: &RpcSchema,
    layout: &Layout,
    start: SimTime,
    mut pf: Option<&mut StridePrefetcher>,
    trace: &mut NicTrace,
) -> Result<(SimTime, Vec<u8>)> {
    let mut t = start + f.timing().link_h2d;
    trace.push(t, "cpu", "notify", layout.root.0, 8);
    let map = f.map().clone();
    let cycle = f.timing().clock.cycles(1);
    // the walker reads field by field and keeps the lines of its last
    // load; string bytes after the length word are streamed
    let mut held: Vec<(LineAddr, LineData)> = Vec::new();
    let mut load = |f: &mut Fabric, at: SimTime, line: LineAddr, trace: &mut NicTrace| -> Result<(SimTime, LineData)> {
        let acc = f.device_load(at, Address(line.raw()), Intent::Shared)?;
        if acc.tier != Tier::Hmc {
            if let Some(p) = pf.as_deref_mut() {
                for l in p.on_miss(line, &map) {
                    trace.push(at, "prefetch", "issue", l.raw(), LINE_BYTES);
                    f.device_load(at, Address(l.raw()), Intent::Shared)?;
                }
            }
        }
        Ok((acc.done, acc.data))
    };
    let mut read = |a: Address, step: Step| -> Result<LineData> {
        let line = a.line();
        if let Some((_, d)) = held.iter().find(|(l, _)| *l == line) {
            return Ok(*d);
        }
        let span = match step {
            Step::StringData { end } => LineAddr::containing(end - 1).index() - line.index() + 1,
            _ => 1,
        };
        held.clear();
        let mut last = t;
        for k in 0..span {
            let (done, data) = load(f, t + SimTime(cycle.0 * k), line.offset_lines(k as i64), trace)?;
            last = last.max(done);
            held.push((line.offset_lines(k as i64), data));
        }
        t = last;
        Ok(held[0].1)
    };
    let m = read_object(schema, schema.root, layout.root, &mut read)?;
    let wire = wire_of(schema, &m)?;
    let done = t + encode_time(f, nic, m.field_count() as u64, wire.len() as u64);
    trace.push(done, "encode", "done", layout.root.0, wire.len() as u64);
    Ok((done, wire))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::{FabricConfig, MemoryMap};
    use crate::interconnect::Profile;
    use crate::workloads::codec::Value;
    use crate::workloads::rpcbench::{bench_schema, gen_rpc_bench};

    fn fabric(profile: &str) -> (Fabric, Profile) {
        let p = Profile::named(profile).unwrap();
        (Fabric::new(&FabricConfig::default(), p.latency.resolve().unwrap()).unwrap(), p)
    }

    fn host_object(f: &Fabric, schema: &RpcSchema, root: Address) -> Message {
        read_object(schema, schema.root, root, &mut |a, _| Ok(f.peek_line(a.line()))).unwrap()
    }

    fn deser_both(schema: &RpcSchema, wires: &[Vec<u8>]) -> ((Fabric, RpcRun, NicTrace), (Fabric, RpcRun, NicTrace)) {
        let (mut fc, pc) = fabric("cxl-asic-1500");
        let mut tc = NicTrace::enabled();
        let rc =
            run_deserialize(NicDevice::Cxl(&mut fc), &pc.nic, &RpcRegions::default(), schema, wires, &mut tc).unwrap();
        let (mut fp, pp) = fabric("pcie-asic-1500");
        let mut dma = DmaEngine::new(pp.dma.clone(), MemoryMap::default()).unwrap();
        let mut tp = NicTrace::enabled();
        let rp = run_deserialize(
            NicDevice::Pcie { fabric: &mut fp, dma: &mut dma },
            &pp.nic,
            &RpcRegions::default(),
            schema,
            wires,
            &mut tp,
        )
        .unwrap();
        ((fc, rc, tc), (fp, rp, tp))
    }

    #[test]
    fn deserializers_agree_with_reference() {
        let bench = gen_rpc_bench(3, 40, 5).unwrap();
        let wires = bench.encoded().unwrap();
        let ((fc, rc, _), (fp, rp, _)) = deser_both(&bench.schema, &wires);
        for ((m, a), b) in bench.messages.iter().zip(&rc.results).zip(&rp.results) {
            let root = a.root.unwrap();
            assert_eq!(Some(root), b.root);
            assert_eq!(&host_object(&fc, &bench.schema, root), m);
            let layout = lay_out(m, &bench.schema, root, Placement::Contiguous).unwrap();
            for line in layout.line_ready.keys() {
                assert_eq!(fc.peek_line(*line), fp.peek_line(*line), "line {line}");
            }
        }
    }

    #[test]
    fn packed_scalars_take_one_push() {
        let schema = bench_schema(1);
        let mut m = Message::new(0);
        m.fields = vec![(1, Value::U64(3)), (2, Value::U64(4)), (3, Value::U64(5))];
        let wires = vec![encode_message(&m, &schema).unwrap()];
        let ((_, _, tc), (_, _, tp)) = deser_both(&schema, &wires);
        assert_eq!(tc.count("deser", "push"), 1);
        assert_eq!(tc.count("deser", "ring"), 1);
        assert_eq!(tp.count("dma", "flush"), 1);
        assert_eq!(tp.count("dma", "ring"), 1);
    }

    #[test]
    fn empty_message_only_moves_the_ring() {
        let schema = bench_schema(1);
        let wires = vec![Vec::new()];
        let ((fc, rc, tc), _) = deser_both(&schema, &wires);
        assert_eq!(tc.count("deser", "push"), 0);
        assert_eq!(tc.count("deser", "ring"), 1);
        assert_eq!(fc.peek_u64(Address(RpcRegions::default().ring)), 0);
        assert!(rc.results[0].rejected.is_none());
    }

    #[test]
    fn large_output_takes_two_flushes() {
        let schema = bench_schema(5);
        let mut m = Message::new(0);
        m.fields = vec![(9, Value::Bytes(vec![b'x'; 4900]))];
        let wires = vec![encode_message(&m, &schema).unwrap()];
        let ((_, _, tc), (fp, rp, tp)) = deser_both(&schema, &wires);
        assert_eq!(tp.count("dma", "flush"), 2);
        assert_eq!(tp.count("dma", "ring"), 1);
        assert_eq!(host_object(&fp, &schema, rp.results[0].root.unwrap()), m);
        // 14-word body then an 8-byte length and the padded string
        assert_eq!(tc.count("deser", "push") as u64, (14 * 8 + 8 + 4904u64).div_ceil(64));
    }

    #[test]
    fn malformed_wire_is_rejected_with_offset() {
        let schema = bench_schema(1);
        let wires = vec![vec![0x08, 0x80]];
        let ((_, rc, tc), _) = deser_both(&schema, &wires);
        let e = rc.results[0].rejected.as_ref().unwrap();
        assert!(matches!(e, SimError::Decode { .. }), "{e}");
        assert_eq!(tc.count("deser", "ring"), 0);
    }

    fn serialize(path: SerPath, bench: &crate::workloads::rpcbench::Bench, trace: &mut NicTrace) -> RpcRun {
        let regions = RpcRegions::default();
        if path == SerPath::RpcNic {
            let (mut f, p) = fabric("pcie-asic-1500");
            let mut dma = DmaEngine::new(p.dma.clone(), MemoryMap::default()).unwrap();
            let dev = NicDevice::Pcie { fabric: &mut f, dma: &mut dma };
            run_serialize(dev, path, &p.nic, &regions, &bench.schema, &bench.messages, 3, trace).unwrap()
        } else {
            let (mut f, p) = fabric("cxl-asic-1500");
            run_serialize(NicDevice::Cxl(&mut f), path, &p.nic, &regions, &bench.schema, &bench.messages, 3, trace)
                .unwrap()
        }
    }

    #[test]
    fn serializers_match_reference_encoder() {
        for b in [2, 4] {
            let bench = gen_rpc_bench(b, 25, 8).unwrap();
            let wires = bench.encoded().unwrap();
            for path in SerPath::ALL {
                let run = serialize(path, &bench, &mut NicTrace::default());
                for (r, w) in run.results.iter().zip(&wires) {
                    assert_eq!(r.wire.as_ref(), Some(w), "bench {b} {path}");
                }
            }
        }
    }

    #[test]
    fn staging_copies_follow_field_count() {
        let schema = bench_schema(4);
        let mut child = Message::new(1);
        child.fields = vec![(1, Value::U64(1)), (9, Value::Bytes(b"abc".to_vec()))];
        let mut m = Message::new(0);
        m.fields =
            vec![(12, Value::Msg(child)), (2, Value::U64(7)), (3, Value::U64(8)), (10, Value::Bytes(vec![1; 90]))];
        let one = {
            let mut s = Message::new(0);
            s.fields = vec![(5, Value::U64(42))];
            s
        };
        for (msg, k) in [(m, 5), (one, 1)] {
            let bench = crate::workloads::rpcbench::Bench { id: 4, schema: schema.clone(), messages: vec![msg] };
            let mut t = NicTrace::enabled();
            serialize(SerPath::RpcNic, &bench, &mut t);
            assert_eq!(t.count("cpu", "staging-copy"), k);
            assert_eq!(t.count("cpu", "doorbell"), 1);
            assert_eq!(t.count("dma", "read"), 1);
        }
    }

    #[test]
    fn path_must_match_device() {
        let bench = gen_rpc_bench(1, 1, 0).unwrap();
        let (mut f, p) = fabric("cxl-asic-1500");
        let e = run_serialize(
            NicDevice::Cxl(&mut f),
            SerPath::RpcNic,
            &p.nic,
            &RpcRegions::default(),
            &bench.schema,
            &bench.messages,
            0,
            &mut NicTrace::default(),
        );
        assert!(e.is_err());
        assert_eq!("cxl-cache-pf".parse::<SerPath>().unwrap(), SerPath::CxlCachePrefetch);
    }
}
