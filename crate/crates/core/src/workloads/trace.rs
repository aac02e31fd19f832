//! Line-oriented text form of generated streams.
//!
//! One record per line, whitespace separated: `kind address size operands...`.
//! Addresses are hex with a `0x` prefix. `#` starts a comment.
//!
//! ```text
//! load  0x40000000 64
//! place 0x40000000 64 LLC
//! rao   0x40000008 8 FAA 1 0
//! ```

use std::fmt::Write as _;

use crate::coherence::{Address, Tier};
use crate::error::{Result, SimError};
use crate::nic::{RaoOp, RaoRequest};
use crate::workloads::lsu::{AccessKind, LsuMode, LsuTrace};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    Access(AccessKind, Address),
    Place(Address, Tier),
    Rao(RaoRequest),
}

pub fn lsu_records(t: &LsuTrace) -> Vec<Record> {
    t.warmup
        .iter()
        .map(|(a, tier)| Record::Place(*a, *tier))
        .chain(t.accesses.iter().map(|(k, a)| Record::Access(*k, *a)))
        .collect()
}

pub fn rao_records(reqs: &[RaoRequest]) -> Vec<Record> {
    reqs.iter().copied().map(Record::Rao).collect()
}

pub fn write_records(records: &[Record]) -> String {
    let mut s = String::new();
    for r in records {
        match r {
            Record::Access(AccessKind::Load, a) => writeln!(s, "load {:#x} 64", a.0),
            Record::Access(AccessKind::Store, a) => writeln!(s, "store {:#x} 64", a.0),
            Record::Place(a, t) => writeln!(s, "place {:#x} 64 {}", a.0, t.name()),
            Record::Rao(q) => writeln!(s, "rao {:#x} 8 {} {} {}", q.target.0, q.op.name(), q.operand_a, q.operand_b),
        }
        .expect("writing to a String");
    }
    s
}

pub fn parse_records(text: &str) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |what: &str| SimError::Config(format!("trace line {}: {what}", no + 1));
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 3 {
            return Err(err("expected `kind address size ...`"));
        }
        let addr = f[1]
            .strip_prefix("0x")
            .and_then(|h| u64::from_str_radix(h, 16).ok())
            .map(Address)
            .ok_or_else(|| err("address must be 0x-prefixed hex"))?;
        let num = |s: &str| s.parse::<u64>().map_err(|_| err(&format!("bad number `{s}`")));
        let size = num(f[2])?;
        let rec = match (f[0], &f[3..]) {
            ("load", []) if size == 64 => Record::Access(AccessKind::Load, addr),
            ("store", []) if size == 64 => Record::Access(AccessKind::Store, addr),
            ("place", [t]) => {
                let tier = match *t {
                    "HMC" => Tier::Hmc,
                    "LLC" => Tier::Llc,
                    "MEM" => Tier::Mem,
                    _ => return Err(err("tier must be HMC, LLC or MEM")),
                };
                Record::Place(addr, tier)
            }
            ("rao", [op, a, b]) if size == 8 => Record::Rao(RaoRequest {
                op: RaoOp::parse(op).ok_or_else(|| err("unknown RAO op"))?,
                target: addr,
                operand_a: num(a)?,
                operand_b: num(b)?,
                source: 0,
            }),
            _ => return Err(err("unrecognized record")),
        };
        out.push(rec);
    }
    Ok(out)
}

/// Rebuilds a one-trial LSU trace from records.
pub fn lsu_from_records(records: &[Record], mode: LsuMode) -> Result<LsuTrace> {
    let mut t = LsuTrace { accesses: vec![], warmup: vec![], repeat: 1, mode };
    for r in records {
        match r {
            Record::Access(k, a) => t.accesses.push((*k, *a)),
            Record::Place(a, tier) => t.warmup.push((*a, *tier)),
            Record::Rao(_) => return Err(SimError::Config("RAO record in an LSU trace".into())),
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::lsu::gen_lsu;

    #[test]
    fn roundtrip() {
        let t = gen_lsu(Tier::Llc, LsuMode::Latency, Address(0x4000_0000)).unwrap();
        let text = write_records(&lsu_records(&t));
        let back = lsu_from_records(&parse_records(&text).unwrap(), LsuMode::Latency).unwrap();
        assert_eq!(back.accesses, t.accesses);
        assert_eq!(back.warmup, t.warmup);

        let reqs = vec![RaoRequest { op: RaoOp::Cas, target: Address(8), operand_a: 5, operand_b: 9, source: 0 }];
        let text = write_records(&rao_records(&reqs));
        assert_eq!(text, "rao 0x8 8 CAS 5 9\n");
        assert_eq!(parse_records(&text).unwrap(), rao_records(&reqs));
    }

    #[test]
    fn errors_name_the_line() {
        let e = parse_records("# c\nload 0x0 64\nload 12 64\n").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
    }
}
