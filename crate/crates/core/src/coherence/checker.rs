use std::collections::{BTreeMap, HashMap};

use super::addr::LineAddr;
use super::cache::{CtrlId, Mesi};
use super::directory::{DirState, DirectoryEntry};
use super::fabric::Fabric;
use super::message::{MessageLog, Opcode};

/// Single writer, multiple readers: a line held in E or M has no other copy.
pub fn swmr_violations(f: &Fabric) -> Vec<String> {
    let mut per_line: HashMap<LineAddr, (usize, usize)> = HashMap::new();
    for (_, line, state, _) in f.peer_copies() {
        let e = per_line.entry(line).or_default();
        e.1 += 1;
        if state.is_exclusive() {
            e.0 += 1;
        }
    }
    let mut out: Vec<_> = per_line
        .into_iter()
        .filter(|(_, (excl, total))| *excl > 0 && *total > 1)
        .map(|(line, (excl, total))| format!("line {line:#x}: {excl} exclusive among {total} copies"))
        .collect();
    out.sort();
    out
}

/// Directory entries match the peer caches exactly, and every peer line is
/// also in the LLC.
pub fn directory_violations(f: &Fabric) -> Vec<String> {
    let mut held: HashMap<LineAddr, Vec<(CtrlId, Mesi)>> = HashMap::new();
    for (id, line, state, _) in f.peer_copies() {
        held.entry(line).or_default().push((id, state));
    }
    let mut out = Vec::new();
    for line in held.keys() {
        if !f.llc().contains(*line) {
            out.push(format!("line {line:#x}: held by a peer but not in the LLC"));
        }
    }
    for w in f.llc().iter() {
        let d = w.meta;
        if !d.is_well_formed() {
            out.push(format!("line {:#x}: malformed entry {d:?}", w.line));
            continue;
        }
        let copies = held.get(&w.line).map(Vec::as_slice).unwrap_or(&[]);
        let mut actual = 0u64;
        for (id, _) in copies {
            actual |= DirectoryEntry::bit(*id);
        }
        if actual != d.sharers {
            out.push(format!("line {:#x}: directory sharers {:#b}, caches hold {:#b}", w.line, d.sharers, actual));
        }
        let exclusive_copy = copies.iter().any(|(_, s)| s.is_exclusive());
        if exclusive_copy != (d.state == DirState::Exclusive) {
            out.push(format!("line {:#x}: directory state {:?} disagrees with caches", w.line, d.state));
        }
    }
    out.sort();
    out
}

/// Every request is closed by exactly one terminal Go-class response to
/// the same requester on the same line.
pub fn conservation_violations(log: &MessageLog) -> Vec<String> {
    let mut open: BTreeMap<(u8, LineAddr), i64> = BTreeMap::new();
    for m in log.entries() {
        let k = (m.requester.0, m.line);
        if m.opcode.is_request() {
            *open.entry(k).or_default() += 1;
        } else if m.opcode.is_terminal_go() {
            *open.entry(k).or_default() -= 1;
        }
    }
    open.into_iter()
        .filter(|(_, n)| *n != 0)
        .map(|((r, line), n)| format!("requester {r} line {line:#x}: {n:+} unmatched requests"))
        .collect()
}

/// No snoop completes on a line while a device engine holds its lock.
pub fn lock_violations(f: &Fabric) -> Vec<String> {
    let mut out = Vec::new();
    let mut spans: HashMap<LineAddr, Vec<(u64, u64)>> = HashMap::new();
    for s in f.lock_spans() {
        spans.entry(s.line).or_default().push((s.from.ps(), s.until.ps()));
    }
    for (line, t) in f.snoop_completions() {
        if let Some(v) = spans.get(line) {
            if let Some((a, b)) = v.iter().find(|(a, b)| *a < t.ps() && t.ps() < *b) {
                out.push(format!("line {line:#x}: snoop completed at {t} inside lock [{a}, {b})"));
            }
        }
    }
    out
}

/// Counts messages by opcode, for trace assertions.
pub fn opcode_counts(log: &MessageLog) -> BTreeMap<&'static str, usize> {
    let mut m = BTreeMap::new();
    for e in log.entries() {
        *m.entry(e.opcode.name()).or_default() += 1;
    }
    m
}

pub fn count_opcode(log: &MessageLog, op: Opcode) -> usize {
    log.entries().iter().filter(|m| m.opcode == op).count()
}
