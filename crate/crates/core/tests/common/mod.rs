//! Randomized coherence driver shared by the property and acceptance tests.

#![allow(dead_code)]

use std::collections::HashMap;

use cxlsim::coherence::checker::{conservation_violations, directory_violations, lock_violations, swmr_violations};
use cxlsim::coherence::{read_u64, Address, CacheGeometry, Fabric, FabricConfig, Intent, LineAddr};
use cxlsim::engine::{stream_rng, SimTime};
use cxlsim::interconnect::LatencyConfig;
use cxlsim::workloads::codec::{FieldKind, Message, RpcSchema, Value, WireType};
use rand::Rng;

pub const BASE: u64 = 0x10_0000;
pub const CORES: usize = 4;

/// Small caches so 64 lines keep every level evicting.
pub fn tiny_fabric() -> Fabric {
    let cfg = FabricConfig {
        cores: CORES,
        l1: CacheGeometry { capacity: 512, ways: 2 },
        llc: CacheGeometry { capacity: 32 * 64, ways: 4 },
        hmc: CacheGeometry { capacity: 1024, ways: 2 },
        log_messages: true,
        ..FabricConfig::default()
    };
    Fabric::new(&cfg, LatencyConfig::default().resolve().unwrap()).unwrap()
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub steps: usize,
    pub value_errors: Vec<String>,
    pub swmr: Vec<String>,
    pub directory: Vec<String>,
    pub conservation: Vec<String>,
    pub locks: Vec<String>,
}

impl Outcome {
    pub fn clean(&self) -> bool {
        self.value_errors.is_empty()
            && self.swmr.is_empty()
            && self.directory.is_empty()
            && self.conservation.is_empty()
            && self.locks.is_empty()
    }
}

/// Flat sequential memory: one u64 per 8-byte word, zero when untouched.
#[derive(Default)]
struct Oracle(HashMap<u64, u64>);

impl Oracle {
    fn get(&self, a: u64) -> u64 {
        self.0.get(&a).copied().unwrap_or(0)
    }
}

/// Runs `steps` random operations over `lines` host lines. Operations are
/// applied in time order; every read is checked against the oracle, SWMR
/// is checked as it goes, and the directory is checked at the end.
pub fn random_trace(seed: u64, steps: usize, lines: u64) -> Outcome {
    let mut f = tiny_fabric();
    let mut rng = stream_rng(seed, "coherence-trace");
    let mut mem = Oracle::default();
    let mut out = Outcome { steps, ..Outcome::default() };
    let mut now = SimTime::ZERO;
    let hold = SimTime::from_ns(5.0);
    for step in 0..steps {
        now += SimTime::from_ns(rng.random_range(0.0..40.0));
        let line = rng.random_range(0..lines);
        let word = rng.random_range(0..8u64);
        let addr = BASE + line * 64 + word * 8;
        let core = rng.random_range(0..CORES);
        let value: u64 = rng.random();
        let mut check = |what: &str, got: u64, want: u64| {
            if got != want {
                out.value_errors.push(format!("step {step} {what} {addr:#x}: got {got}, oracle {want}"));
            }
        };
        let r = match rng.random_range(0..9) {
            0 => f
                .host_access(now, core, Address(addr), None)
                .map(|a| check("host load", read_u64(&a.data, (word * 8) as usize), mem.get(addr))),
            1 => f.host_access(now, core, Address(addr), Some(&value.to_le_bytes())).map(|_| {
                mem.0.insert(addr, value);
            }),
            2 => f
                .device_load(now, Address(addr), Intent::Shared)
                .map(|a| check("device load", read_u64(&a.data, (word * 8) as usize), mem.get(addr))),
            3 => f.device_store(now, Address(addr), &value.to_le_bytes()).map(|_| {
                mem.0.insert(addr, value);
            }),
            4 => {
                let mut data = [0u8; 64];
                rng.fill(&mut data[..]);
                let l = BASE + line * 64;
                f.ncp_push(now, LineAddr::containing(l), data).map(|_| {
                    for w in 0..8 {
                        mem.0.insert(l + w * 8, read_u64(&data, w as usize * 8));
                    }
                })
            }
            5 => {
                let add = rng.random_range(1..100u64);
                f.device_rmw(now, Address(addr), hold, |old| old.wrapping_add(add)).map(|rmw| {
                    check("rmw old", rmw.old, mem.get(addr));
                    mem.0.insert(addr, mem.get(addr).wrapping_add(add));
                })
            }
            6 => match f.hmc().get(LineAddr::containing(addr)) {
                Some(w) if !w.is_locked(now) => f.hmc_evict(now, Address(addr)).map(|_| ()),
                _ => Ok(()),
            },
            7 => f
                .dma_read(Address(addr), 8)
                .map(|b| check("dma read", u64::from_le_bytes(b.try_into().unwrap()), mem.get(addr))),
            _ => f.dma_write(Address(addr), &value.to_le_bytes()).map(|_| {
                mem.0.insert(addr, value);
            }),
        };
        if let Err(e) = r {
            out.value_errors.push(format!("step {step}: {e}"));
        }
        if step % 1000 == 0 {
            out.swmr.extend(swmr_violations(&f));
        }
    }
    // quiescent: every line reads back as the oracle says
    for line in 0..lines {
        let data = f.peek_line(LineAddr::containing(BASE + line * 64));
        for w in 0..8u64 {
            let a = BASE + line * 64 + w * 8;
            let got = read_u64(&data, w as usize * 8);
            if got != mem.get(a) {
                out.value_errors.push(format!("final {a:#x}: got {got}, oracle {}", mem.get(a)));
            }
        }
    }
    out.swmr.extend(swmr_violations(&f));
    out.directory = directory_violations(&f);
    out.conservation = conservation_violations(f.log());
    out.locks = lock_violations(&f);
    out
}

/// A message of type `ty` with each schema field present at random. Nested
/// children get rarer with depth and stop at the schema's limit.
pub fn random_message(schema: &RpcSchema, ty: usize, depth: usize, rng: &mut impl Rng) -> Message {
    let mut m = Message::new(ty);
    for f in &schema.types[ty].fields {
        if !rng.random_bool(0.6) {
            continue;
        }
        let v = match (f.kind, f.wire) {
            (FieldKind::Scalar, WireType::Fixed32) => Value::U64(rng.random::<u32>() as u64),
            (FieldKind::Scalar, _) => Value::U64(rng.random::<u64>() >> rng.random_range(0..64)),
            (FieldKind::Bytes, _) => {
                let n = rng.random_range(0..48);
                Value::Bytes((0..n).map(|_| rng.random()).collect())
            }
            (FieldKind::Nested(c), _) if depth < schema.max_depth && rng.random_bool(1.0 / depth as f64) => {
                Value::Msg(random_message(schema, c, depth + 1, rng))
            }
            (FieldKind::Nested(_), _) => continue,
        };
        m.fields.push((f.number, v));
    }
    m
}
