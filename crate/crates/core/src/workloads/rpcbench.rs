//! Synthetic RPC benches with controlled message-size mixes.
//!
//! Every bench shares one schema shape: a chain of message types where
//! level k declares two nested fields 12, 13 pointing at level k+1, then
//! scalar fields 1..=8 and byte-string fields 9..=11. Messages are drawn per
//! size class (≤32 B, 33..=512 B, >512 B) in fixed proportions, so the
//! pooled size distribution holds by construction.

use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::codec::{encode_message, FieldDef, FieldKind, Message, MessageType, RpcSchema, Value, WireType};
use crate::engine::{stream_rng, StreamRng};
use crate::error::{Result, SimError};

pub const BENCHES: [u8; 6] = [1, 2, 3, 4, 5, 6];
const LEVELS: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub fn of(len: usize) -> SizeClass {
        match len {
            0..=32 => SizeClass::Small,
            33..=512 => SizeClass::Medium,
            _ => SizeClass::Large,
        }
    }
}

/// Knobs for one size class of one bench.
#[derive(Debug, Clone)]
struct Shape {
    scalars: RangeInclusive<usize>,
    strings: RangeInclusive<usize>,
    string_len: RangeInclusive<usize>,
    depth: RangeInclusive<usize>,
    /// Chance that a level has a second child.
    branch: f64,
    /// Scalars are drawn from field numbers 1..=scalar_pool.
    scalar_pool: u32,
    /// Inner levels carry this many scalars.
    inner_scalars: RangeInclusive<usize>,
    inner_strings: RangeInclusive<usize>,
}

fn shape(bench: u8, class: SizeClass) -> Shape {
    use SizeClass::*;
    let s = |scalars, strings, string_len, depth, branch, inner_scalars, inner_strings| Shape {
        scalars,
        strings,
        string_len,
        depth,
        branch,
        scalar_pool: 8,
        inner_scalars,
        inner_strings,
    };
    match (bench, class) {
        (1, _) => s(5..=8, 0..=1, 1..=4, 1..=2, 0.0, 1..=3, 0..=0),
        // deep chains of thin levels
        (2, _) => Shape { scalar_pool: 4, ..s(2..=4, 1..=1, 60..=120, 8..=12, 0.1, 1..=3, 0..=0) },
        (3, Small) => s(2..=5, 0..=1, 2..=8, 1..=2, 0.0, 1..=2, 0..=0),
        (3, Medium) => s(3..=8, 1..=3, 8..=90, 2..=4, 0.3, 2..=6, 0..=2),
        (3, Large) => s(3..=8, 1..=2, 300..=1200, 2..=3, 0.3, 2..=6, 0..=2),
        (4, Small) => s(3..=6, 0..=0, 1..=1, 1..=2, 0.0, 1..=2, 0..=0),
        (4, Medium) => s(5..=8, 0..=2, 4..=48, 2..=4, 0.5, 4..=8, 0..=1),
        (4, Large) => s(6..=8, 1..=3, 150..=700, 3..=4, 0.5, 4..=8, 0..=2),
        (5, Small) => s(1..=2, 1..=1, 4..=16, 1..=1, 0.0, 0..=0, 0..=0),
        (5, Medium) => s(1..=3, 1..=3, 64..=150, 1..=2, 0.0, 1..=2, 0..=1),
        (5, Large) => s(1..=3, 1..=3, 1024..=4096, 1..=2, 0.0, 1..=2, 0..=1),
        (6, Small) => s(2..=4, 1..=1, 1..=8, 1..=1, 0.0, 0..=0, 0..=0),
        (6, Medium) => s(2..=5, 1..=2, 40..=200, 1..=3, 0.2, 1..=4, 0..=1),
        (6, Large) => s(2..=5, 1..=2, 600..=2000, 1..=3, 0.2, 1..=4, 0..=1),
        _ => unreachable!("bench ids are checked"),
    }
}

/// Messages of each class per 100, in Small, Medium, Large order.
pub fn class_mix(bench: u8) -> [usize; 3] {
    match bench {
        1 => [100, 0, 0],
        2 => [0, 100, 0],
        5 => [36, 40, 24],
        3 | 4 => [67, 28, 5],
        _ => [66, 29, 5],
    }
}

pub fn bench_schema(bench: u8) -> RpcSchema {
    let types = (0..LEVELS)
        .map(|k| {
            let mut fields = Vec::new();
            if k + 1 < LEVELS {
                for n in 12..=13 {
                    fields.push(FieldDef { number: n, wire: WireType::Len, kind: FieldKind::Nested(k + 1) });
                }
            }
            for n in 1..=8u32 {
                let wire = match n {
                    1..=4 => WireType::Varint,
                    5 | 6 => WireType::Fixed64,
                    _ => WireType::Fixed32,
                };
                fields.push(FieldDef { number: n, wire, kind: FieldKind::Scalar });
            }
            for n in 9..=11 {
                fields.push(FieldDef { number: n, wire: WireType::Len, kind: FieldKind::Bytes });
            }
            MessageType { name: format!("Bench{bench}L{k}"), fields }
        })
        .collect();
    RpcSchema { types, root: 0, max_depth: LEVELS }
}

#[derive(Debug, Clone)]
pub struct Bench {
    pub id: u8,
    pub schema: RpcSchema,
    pub messages: Vec<Message>,
}

impl Bench {
    pub fn encoded(&self) -> Result<Vec<Vec<u8>>> {
        self.messages.iter().map(|m| encode_message(m, &self.schema)).collect()
    }
}

pub fn gen_rpc_bench(bench: u8, n_messages: usize, seed: u64) -> Result<Bench> {
    if !BENCHES.contains(&bench) {
        return Err(SimError::Config(format!("bench must be 1..=6, got {bench}")));
    }
    let schema = bench_schema(bench);
    let mut rng = stream_rng(seed, &format!("rpc-bench/{bench}"));
    let mix = class_mix(bench);
    let mut classes: Vec<SizeClass> = (0..n_messages)
        .map(|i| {
            let r = i % 100;
            if r < mix[0] {
                SizeClass::Small
            } else if r < mix[0] + mix[1] {
                SizeClass::Medium
            } else {
                SizeClass::Large
            }
        })
        .collect();
    classes.shuffle(&mut rng);
    let mut messages = Vec::with_capacity(n_messages);
    for class in classes {
        messages.push(draw(bench, class, &schema, &mut rng)?);
    }
    Ok(Bench { id: bench, schema, messages })
}

fn draw(bench: u8, class: SizeClass, schema: &RpcSchema, rng: &mut StreamRng) -> Result<Message> {
    let sh = shape(bench, class);
    for _ in 0..10_000 {
        let depth = rng.random_range(sh.depth.clone());
        let m = level(0, depth, &sh, rng);
        let len = encode_message(&m, schema)?.len();
        if SizeClass::of(len) == class && len > 0 {
            return Ok(m);
        }
    }
    Err(SimError::Config(format!("bench {bench}: could not draw a {class:?} message")))
}

fn level(k: usize, depth: usize, sh: &Shape, rng: &mut StreamRng) -> Message {
    let (scalars, strings) = if k == 0 {
        (sh.scalars.clone(), sh.strings.clone())
    } else {
        (sh.inner_scalars.clone(), sh.inner_strings.clone())
    };
    let mut m = Message::new(k);
    // schema order: nested, scalars, strings
    if k + 1 < depth && k + 1 < LEVELS {
        m.fields.push((12, Value::Msg(level(k + 1, depth, sh, rng))));
        if rng.random_bool(sh.branch) {
            m.fields.push((13, Value::Msg(level(k + 1, depth, sh, rng))));
        }
    }
    let mut nums: Vec<u32> = (1..=sh.scalar_pool).collect();
    nums.shuffle(rng);
    let mut nums: Vec<u32> = nums.into_iter().take(rng.random_range(scalars)).collect();
    nums.sort_unstable();
    for n in nums {
        let v = match n {
            1..=4 => {
                let bits = rng.random_range(1..=14);
                rng.random_range(0..1u64 << bits)
            }
            5 | 6 => rng.random(),
            _ => rng.random::<u32>() as u64,
        };
        m.fields.push((n, Value::U64(v)));
    }
    let n_str = rng.random_range(strings).min(3);
    for n in 9..9 + n_str as u32 {
        let len = rng.random_range(sh.string_len.clone());
        let bytes = (0..len).map(|_| rng.random_range(b'a'..=b'z')).collect();
        m.fields.push((n, Value::Bytes(bytes)));
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::codec::decode_message;

    #[test]
    fn schemas_are_valid() {
        for b in BENCHES {
            bench_schema(b).validate().unwrap();
        }
    }

    #[test]
    fn classes_follow_mix() {
        for b in BENCHES {
            let bench = gen_rpc_bench(b, 200, 3).unwrap();
            let mut counts = [0usize; 3];
            for w in bench.encoded().unwrap() {
                counts[SizeClass::of(w.len()) as usize] += 1;
            }
            assert_eq!(counts, class_mix(b).map(|c| c * 2), "bench {b}");
        }
    }

    #[test]
    fn roundtrip_sample() {
        let bench = gen_rpc_bench(2, 50, 1).unwrap();
        for m in &bench.messages {
            let w = encode_message(m, &bench.schema).unwrap();
            assert_eq!(&decode_message(&w, &bench.schema).unwrap(), m);
        }
    }

    #[test]
    fn bad_bench_id() {
        assert!(gen_rpc_bench(7, 1, 0).is_err());
    }
}
