//! In-memory object layout shared by the host and the NIC.
//!
//! An object is a body of 8-byte words: a presence bitmap, then one slot per
//! schema field in schema order. A scalar slot holds the value. A byte
//! string slot holds the address of a block (8-byte length, then the bytes
//! padded to 8). A nested slot holds the address of the child's body.

use std::collections::BTreeMap;

use rand::Rng;

use crate::coherence::{Address, LineAddr, LineData, LINE_BYTES};
use crate::engine::stream_rng;
use crate::error::{Result, SimError};
use crate::workloads::codec::{varint_len, FieldKind, Message, RpcSchema, Value, WireType};

const WORD: u64 = 8;

/// How child objects are placed relative to their parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// One bump-allocated run (decoder output).
    Contiguous,
    /// Each child and each string starts a new run some lines further on,
    /// like objects built up by a general-purpose allocator.
    Scattered { seed: u64 },
}

/// Decoder progress: fields finished and wire bytes consumed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Progress {
    pub fields: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: Address,
    /// Contiguous runs of bytes, in allocation order.
    pub chunks: Vec<(Address, Vec<u8>)>,
    /// Number of objects (bodies) in the tree.
    pub objects: usize,
    /// Number of byte-string blocks.
    pub strings: usize,
    /// Field data as separately copyable pieces: one per scalar slot and
    /// one per string block.
    pub pieces: Vec<(Address, u64)>,
    /// Payload bytes (scalars and string contents) written.
    pub payload: u64,
    /// For each line holding written bytes, the decoder progress at which
    /// its last byte is known. Lines with only padding are absent.
    pub line_ready: BTreeMap<LineAddr, Progress>,
}

impl Layout {
    /// True for a message with no fields.
    pub fn is_empty(&self) -> bool {
        self.line_ready.is_empty()
    }

    pub fn bytes(&self) -> u64 {
        self.chunks.iter().map(|(_, b)| b.len() as u64).sum()
    }

    pub fn end(&self) -> u64 {
        self.chunks.iter().map(|(a, b)| a.0 + b.len() as u64).max().unwrap_or(self.root.0)
    }

    /// Full 64-byte images of every touched line (untouched bytes zero).
    pub fn lines(&self) -> BTreeMap<LineAddr, LineData> {
        let runs: Vec<(Address, &[u8])> = self.chunks.iter().map(|(a, b)| (*a, b.as_slice())).collect();
        line_images(&runs)
    }
}

/// Line images of byte runs; bytes outside the runs read as zero.
pub fn line_images(runs: &[(Address, &[u8])]) -> BTreeMap<LineAddr, LineData> {
    let mut out: BTreeMap<LineAddr, LineData> = BTreeMap::new();
    for (a, bytes) in runs {
        for (i, b) in bytes.iter().enumerate() {
            let addr = a.0 + i as u64;
            let l = LineAddr::containing(addr);
            out.entry(l).or_insert([0; 64])[(addr - l.raw()) as usize] = *b;
        }
    }
    out
}

fn body_words(schema: &RpcSchema, type_id: usize) -> u64 {
    1 + schema.types[type_id].fields.len() as u64
}

fn pad8(n: u64) -> u64 {
    n.div_ceil(WORD) * WORD
}

struct Builder<'a> {
    schema: &'a RpcSchema,
    placement: Placement,
    rng: Option<crate::engine::StreamRng>,
    chunks: Vec<(Address, Vec<u8>)>,
    progress: Progress,
    line_ready: BTreeMap<LineAddr, Progress>,
    objects: usize,
    strings: usize,
    pieces: Vec<(Address, u64)>,
    payload: u64,
}

impl Builder<'_> {
    fn cursor(&self) -> u64 {
        let (a, b) = self.chunks.last().expect("started");
        a.0 + b.len() as u64
    }

    /// Reserves `len` bytes in the current run, or in a new run.
    fn alloc(&mut self, len: u64, new_run: bool) -> u64 {
        if let (true, Some(r)) = (new_run, self.rng.as_mut()) {
            let gap = r.random_range(4..=64u64) * LINE_BYTES;
            let start = (self.cursor() + gap).div_ceil(LINE_BYTES) * LINE_BYTES;
            self.chunks.push((Address(start), vec![0; len as usize]));
            return start;
        }
        let at = self.cursor();
        let c = self.chunks.last_mut().expect("started");
        c.1.resize(c.1.len() + len as usize, 0);
        at
    }

    fn mark(&mut self, addr: u64, len: u64) {
        let p = self.progress;
        let first = LineAddr::containing(addr).index();
        let last = LineAddr::containing(addr + len.max(1) - 1).index();
        for l in first..=last {
            let e = self.line_ready.entry(LineAddr::containing(l << 6)).or_default();
            *e = (*e).max(p);
        }
    }

    fn put(&mut self, addr: u64, bytes: &[u8]) {
        let chunk = self
            .chunks
            .iter_mut()
            .rev()
            .find(|(a, b)| a.0 <= addr && addr + bytes.len() as u64 <= a.0 + b.len() as u64)
            .expect("write inside an allocated run");
        let off = (addr - chunk.0 .0) as usize;
        chunk.1[off..off + bytes.len()].copy_from_slice(bytes);
        self.mark(addr, bytes.len() as u64);
    }

    fn object(&mut self, m: &Message, new_run: bool) -> Result<u64> {
        let ty = self
            .schema
            .types
            .get(m.type_id)
            .ok_or_else(|| SimError::Encode(format!("unknown message type {}", m.type_id)))?;
        self.objects += 1;
        let body = self.alloc(body_words(self.schema, m.type_id) * WORD, new_run);
        let mut present = 0u64;
        let mut last_idx = None;
        for (num, v) in &m.fields {
            let (idx, f) = ty.field(*num).ok_or_else(|| SimError::Encode(format!("{} has no field {num}", ty.name)))?;
            if last_idx.is_some_and(|l| idx <= l) {
                return Err(SimError::Encode(format!("{}: fields must appear once, in schema order", ty.name)));
            }
            last_idx = Some(idx);
            present |= 1 << idx;
            let slot = body + (1 + idx as u64) * WORD;
            let key = varint_len(((*num as u64) << 3) | f.wire.code()) as u64;
            match (f.kind, v) {
                (FieldKind::Scalar, Value::U64(x)) => {
                    let n = match f.wire {
                        WireType::Varint => varint_len(*x) as u64,
                        WireType::Fixed64 => 8,
                        _ => 4,
                    };
                    self.progress.fields += 1;
                    self.progress.bytes += key + n;
                    self.payload += 8;
                    self.put(slot, &x.to_le_bytes());
                    self.pieces.push((Address(slot), WORD));
                }
                (FieldKind::Bytes, Value::Bytes(b)) => {
                    let scattered = matches!(self.placement, Placement::Scattered { .. });
                    let blk = self.alloc(WORD + pad8(b.len() as u64), scattered);
                    self.progress.fields += 1;
                    self.progress.bytes += key + varint_len(b.len() as u64) as u64 + b.len() as u64;
                    self.payload += b.len() as u64;
                    self.strings += 1;
                    self.put(blk, &(b.len() as u64).to_le_bytes());
                    if !b.is_empty() {
                        self.put(blk + WORD, b);
                    }
                    self.put(slot, &blk.to_le_bytes());
                    self.pieces.push((Address(blk), WORD + pad8(b.len() as u64)));
                }
                (FieldKind::Nested(_), Value::Msg(child)) => {
                    self.progress.bytes += key;
                    let scattered = matches!(self.placement, Placement::Scattered { .. });
                    let child_at = self.object(child, scattered)?;
                    self.progress.fields += 1;
                    self.put(slot, &child_at.to_le_bytes());
                }
                _ => return Err(SimError::Encode(format!("field {num}: value does not match its declared kind"))),
            }
        }
        // an empty root writes nothing at all
        if present != 0 || self.objects > 1 {
            self.put(body, &present.to_le_bytes());
        }
        Ok(body)
    }
}

/// Lays `m` out starting at `base` (line aligned).
pub fn lay_out(m: &Message, schema: &RpcSchema, base: Address, placement: Placement) -> Result<Layout> {
    if base.offset() != 0 {
        return Err(SimError::Misaligned(base.0));
    }
    let rng = match placement {
        Placement::Scattered { seed } => Some(stream_rng(seed, "object-layout")),
        Placement::Contiguous => None,
    };
    let mut b = Builder {
        schema,
        placement,
        rng,
        chunks: vec![(base, Vec::new())],
        progress: Progress::default(),
        line_ready: BTreeMap::new(),
        objects: 0,
        strings: 0,
        pieces: Vec::new(),
        payload: 0,
    };
    let root = b.object(m, false)?;
    Ok(Layout {
        root: Address(root),
        chunks: b.chunks,
        objects: b.objects,
        strings: b.strings,
        pieces: b.pieces,
        payload: b.payload,
        line_ready: b.line_ready,
    })
}

/// What a walk step is reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// Presence word at the start of a body of `len` bytes. The root body
    /// comes first; every later one is reached through a pointer.
    Body {
        len: u64,
    },
    Slot,
    /// Length word of a string block.
    StringLen,
    /// String bytes that end at `end` (exclusive).
    StringData {
        end: u64,
    },
}

/// Reads an object tree back through `read`, which returns the line holding
/// an address. Every field access goes through `read`, in walk order.
pub fn read_object(
    schema: &RpcSchema,
    type_id: usize,
    body: Address,
    read: &mut dyn FnMut(Address, Step) -> Result<LineData>,
) -> Result<Message> {
    read_at(schema, type_id, body, read, 1)
}

fn word(read: &mut dyn FnMut(Address, Step) -> Result<LineData>, a: u64, step: Step) -> Result<u64> {
    if !a.is_multiple_of(WORD) {
        return Err(SimError::Encode(format!("unaligned object pointer {a:#x}")));
    }
    let line = read(Address(a), step)?;
    let off = (a % LINE_BYTES) as usize;
    Ok(u64::from_le_bytes(line[off..off + 8].try_into().unwrap()))
}

fn read_at(
    schema: &RpcSchema,
    type_id: usize,
    body: Address,
    read: &mut dyn FnMut(Address, Step) -> Result<LineData>,
    depth: usize,
) -> Result<Message> {
    if depth > schema.max_depth {
        return Err(SimError::Encode("object nesting exceeds the schema depth limit".into()));
    }
    let ty = &schema.types[type_id];
    let len = body_words(schema, type_id) * WORD;
    let present = word(read, body.0, Step::Body { len })?;
    let mut m = Message::new(type_id);
    for (idx, f) in ty.fields.iter().enumerate() {
        if present & (1 << idx) == 0 {
            continue;
        }
        let v = word(read, body.0 + (1 + idx as u64) * WORD, Step::Slot)?;
        let value = match f.kind {
            FieldKind::Scalar => Value::U64(v),
            FieldKind::Bytes => {
                let len = word(read, v, Step::StringLen)?;
                if len > 1 << 30 {
                    return Err(SimError::Encode(format!("string block at {v:#x} has implausible length {len}")));
                }
                let mut bytes = Vec::with_capacity(len as usize);
                let mut a = v + WORD;
                let end = v + WORD + len;
                while a < end {
                    let line = read(Address(a), Step::StringData { end })?;
                    let off = (a % LINE_BYTES) as usize;
                    let n = ((LINE_BYTES - off as u64).min(end - a)) as usize;
                    bytes.extend_from_slice(&line[off..off + n]);
                    a += n as u64;
                }
                Value::Bytes(bytes)
            }
            FieldKind::Nested(c) => {
                if v == 0 {
                    return Err(SimError::Encode(format!("null nested reference in {}", ty.name)));
                }
                Value::Msg(read_at(schema, c, Address(v), read, depth + 1)?)
            }
        };
        m.fields.push((f.number, value));
    }
    Ok(m)
}
