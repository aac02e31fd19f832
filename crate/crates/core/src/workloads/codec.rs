//! Protobuf wire format subset: varints, fixed 32/64-bit scalars,
//! length-delimited bytes and nested messages. Decoding is strict.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Longest legal varint for a 64-bit value.
pub const MAX_VARINT_LEN: usize = 10;

pub fn varint_encode(mut v: u64, out: &mut Vec<u8>) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

pub fn varint_len(v: u64) -> usize {
    (64 - v.max(1).leading_zeros() as usize).div_ceil(7)
}

/// Decodes a varint at the start of `bytes`; returns the value and the
/// bytes consumed. `base` is only used to report error offsets.
pub fn varint_decode(bytes: &[u8], base: usize) -> Result<(u64, usize)> {
    let mut v = 0u64;
    for (i, &b) in bytes.iter().take(MAX_VARINT_LEN).enumerate() {
        let group = (b & 0x7f) as u64;
        if i == MAX_VARINT_LEN - 1 && group > 1 {
            return Err(SimError::decode(base + i, "varint overflows 64 bits"));
        }
        v |= group << (7 * i);
        if b & 0x80 == 0 {
            return Ok((v, i + 1));
        }
    }
    if bytes.len() < MAX_VARINT_LEN {
        Err(SimError::decode(base + bytes.len(), "truncated varint"))
    } else {
        Err(SimError::decode(base, "varint longer than 10 bytes"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WireType {
    Varint,
    Fixed64,
    Len,
    Fixed32,
}

impl WireType {
    pub fn code(self) -> u64 {
        match self {
            WireType::Varint => 0,
            WireType::Fixed64 => 1,
            WireType::Len => 2,
            WireType::Fixed32 => 5,
        }
    }

    pub fn from_code(c: u64) -> Option<Self> {
        Some(match c {
            0 => WireType::Varint,
            1 => WireType::Fixed64,
            2 => WireType::Len,
            5 => WireType::Fixed32,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    Scalar,
    Bytes,
    /// Index of the nested message type in the schema.
    Nested(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDef {
    pub number: u32,
    pub wire: WireType,
    pub kind: FieldKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageType {
    pub name: String,
    pub fields: Vec<FieldDef>,
}

impl MessageType {
    pub fn field(&self, number: u32) -> Option<(usize, &FieldDef)> {
        self.fields.iter().enumerate().find(|(_, f)| f.number == number)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RpcSchema {
    pub types: Vec<MessageType>,
    pub root: usize,
    pub max_depth: usize,
}

impl RpcSchema {
    /// Field numbers unique and in range, wire types consistent with kinds,
    /// nested references valid and acyclic.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(SimError::Config(format!("schema: {what}")));
        if self.root >= self.types.len() {
            return bad(format!("root type {} does not exist", self.root));
        }
        for (ti, t) in self.types.iter().enumerate() {
            for (i, f) in t.fields.iter().enumerate() {
                if f.number == 0 || f.number >= 1 << 29 {
                    return bad(format!("{}: field number {} out of range", t.name, f.number));
                }
                if t.fields[..i].iter().any(|g| g.number == f.number) {
                    return bad(format!("{}: duplicate field number {}", t.name, f.number));
                }
                let ok = match f.kind {
                    FieldKind::Scalar => f.wire != WireType::Len,
                    FieldKind::Bytes => f.wire == WireType::Len,
                    FieldKind::Nested(c) => f.wire == WireType::Len && c < self.types.len() && c != ti,
                };
                if !ok {
                    return bad(format!("{}: field {} has inconsistent kind/wire type", t.name, f.number));
                }
            }
        }
        // acyclic: depth-first search with colors
        fn visit(s: &RpcSchema, t: usize, color: &mut [u8]) -> bool {
            if color[t] == 1 {
                return false;
            }
            if color[t] == 2 {
                return true;
            }
            color[t] = 1;
            for f in &s.types[t].fields {
                if let FieldKind::Nested(c) = f.kind {
                    if !visit(s, c, color) {
                        return false;
                    }
                }
            }
            color[t] = 2;
            true
        }
        let mut color = vec![0u8; self.types.len()];
        for t in 0..self.types.len() {
            if !visit(self, t, &mut color) {
                return bad("nested message types form a cycle".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Value {
    U64(u64),
    Bytes(Vec<u8>),
    Msg(Message),
}

/// A decoded message: present fields in wire order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Message {
    pub type_id: usize,
    pub fields: Vec<(u32, Value)>,
}

impl Message {
    pub fn new(type_id: usize) -> Self {
        Message { type_id, fields: Vec::new() }
    }

    /// Nesting depth; a message with no nested fields has depth 1.
    pub fn depth(&self) -> usize {
        1 + self
            .fields
            .iter()
            .map(|(_, v)| match v {
                Value::Msg(m) => m.depth(),
                _ => 0,
            })
            .max()
            .unwrap_or(0)
    }

    /// Every field value in the tree (scalars and byte strings), depth first.
    pub fn field_count(&self) -> usize {
        self.fields
            .iter()
            .map(|(_, v)| match v {
                Value::Msg(m) => 1 + m.field_count(),
                _ => 1,
            })
            .sum()
    }
}

pub fn encode_message(m: &Message, schema: &RpcSchema) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    encode_into(m, schema, 1, &mut out)?;
    Ok(out)
}

fn encode_into(m: &Message, schema: &RpcSchema, depth: usize, out: &mut Vec<u8>) -> Result<()> {
    if depth > schema.max_depth {
        return Err(SimError::Encode(format!("nesting deeper than {}", schema.max_depth)));
    }
    let ty =
        schema.types.get(m.type_id).ok_or_else(|| SimError::Encode(format!("unknown message type {}", m.type_id)))?;
    for (num, v) in &m.fields {
        let (_, f) = ty.field(*num).ok_or_else(|| SimError::Encode(format!("{} has no field {num}", ty.name)))?;
        varint_encode(((*num as u64) << 3) | f.wire.code(), out);
        match (f.kind, v) {
            (FieldKind::Scalar, Value::U64(x)) => match f.wire {
                WireType::Varint => varint_encode(*x, out),
                WireType::Fixed64 => out.extend_from_slice(&x.to_le_bytes()),
                WireType::Fixed32 => {
                    let x = u32::try_from(*x)
                        .map_err(|_| SimError::Encode(format!("field {num}: {x} does not fit 32 bits")))?;
                    out.extend_from_slice(&x.to_le_bytes());
                }
                WireType::Len => unreachable!("validated schema"),
            },
            (FieldKind::Bytes, Value::Bytes(b)) => {
                varint_encode(b.len() as u64, out);
                out.extend_from_slice(b);
            }
            (FieldKind::Nested(t), Value::Msg(child)) => {
                if child.type_id != t {
                    return Err(SimError::Encode(format!("field {num}: nested type {} expected {t}", child.type_id)));
                }
                let mut body = Vec::new();
                encode_into(child, schema, depth + 1, &mut body)?;
                varint_encode(body.len() as u64, out);
                out.extend_from_slice(&body);
            }
            _ => return Err(SimError::Encode(format!("field {num}: value does not match its declared kind"))),
        }
    }
    Ok(())
}

pub fn decode_message(w: &[u8], schema: &RpcSchema) -> Result<Message> {
    decode_at(w, 0, schema.root, schema, 1)
}

fn decode_at(w: &[u8], base: usize, type_id: usize, schema: &RpcSchema, depth: usize) -> Result<Message> {
    if depth > schema.max_depth {
        return Err(SimError::decode(base, format!("nesting deeper than {}", schema.max_depth)));
    }
    let ty = &schema.types[type_id];
    let mut m = Message::new(type_id);
    let mut pos = 0;
    while pos < w.len() {
        let at = base + pos;
        let (key, n) = varint_decode(&w[pos..], at)?;
        pos += n;
        let num = key >> 3;
        let wire =
            WireType::from_code(key & 7).ok_or_else(|| SimError::decode(at, format!("bad wire type {}", key & 7)))?;
        let Some((_, f)) = u32::try_from(num).ok().and_then(|n| ty.field(n)) else {
            return Err(SimError::decode(at, format!("unknown field {num} in {}", ty.name)));
        };
        if f.wire != wire {
            return Err(SimError::decode(at, format!("field {num}: wire type {wire:?}, schema says {:?}", f.wire)));
        }
        let take = |pos: usize, len: usize| -> Result<&[u8]> {
            w.get(pos..pos + len).ok_or_else(|| SimError::decode(base + w.len(), format!("field {num} truncated")))
        };
        let v = match wire {
            WireType::Varint => {
                let (x, n) = varint_decode(&w[pos..], base + pos)?;
                pos += n;
                Value::U64(x)
            }
            WireType::Fixed64 => {
                let b = take(pos, 8)?;
                pos += 8;
                Value::U64(u64::from_le_bytes(b.try_into().unwrap()))
            }
            WireType::Fixed32 => {
                let b = take(pos, 4)?;
                pos += 4;
                Value::U64(u32::from_le_bytes(b.try_into().unwrap()) as u64)
            }
            WireType::Len => {
                let (len, n) = varint_decode(&w[pos..], base + pos)?;
                pos += n;
                let len = usize::try_from(len).map_err(|_| SimError::decode(base + pos, "length too large"))?;
                let body = take(pos, len)?;
                let body_at = base + pos;
                pos += len;
                match f.kind {
                    FieldKind::Nested(t) => Value::Msg(decode_at(body, body_at, t, schema, depth + 1)?),
                    _ => Value::Bytes(body.to_vec()),
                }
            }
        };
        m.fields.push((num as u32, v));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc(v: u64) -> Vec<u8> {
        let mut o = vec![];
        varint_encode(v, &mut o);
        o
    }

    #[test]
    fn varint_vectors() {
        assert_eq!(enc(0), [0x00]);
        assert_eq!(enc(300), [0xAC, 0x02]);
        assert_eq!(enc(u64::MAX).len(), 10);
        assert_eq!(varint_decode(&[0xAC, 0x02], 0).unwrap(), (300, 2));
        for v in [0, 1, 127, 128, 300, 1 << 35, u64::MAX] {
            assert_eq!(varint_len(v), enc(v).len());
        }
    }

    #[test]
    fn varint_errors() {
        assert!(matches!(varint_decode(&[0x80, 0x80], 7), Err(SimError::Decode { offset: 9, .. })));
        assert!(varint_decode(&[0xff; 11], 0).is_err());
        // tenth byte may only carry the top bit
        let mut over = vec![0xff; 9];
        over.push(0x02);
        assert!(varint_decode(&over, 0).is_err());
        assert!(varint_decode(&[], 0).is_err());
    }

    fn schema() -> RpcSchema {
        RpcSchema {
            types: vec![
                MessageType {
                    name: "Outer".into(),
                    fields: vec![
                        FieldDef { number: 1, wire: WireType::Varint, kind: FieldKind::Scalar },
                        FieldDef { number: 2, wire: WireType::Len, kind: FieldKind::Nested(1) },
                        FieldDef { number: 3, wire: WireType::Len, kind: FieldKind::Bytes },
                        FieldDef { number: 4, wire: WireType::Fixed32, kind: FieldKind::Scalar },
                    ],
                },
                MessageType {
                    name: "Inner".into(),
                    fields: vec![FieldDef { number: 1, wire: WireType::Fixed64, kind: FieldKind::Scalar }],
                },
            ],
            root: 0,
            max_depth: 4,
        }
    }

    #[test]
    fn key_bytes() {
        let s = schema();
        let m = Message { type_id: 0, fields: vec![(1, Value::U64(0))] };
        assert_eq!(encode_message(&m, &s).unwrap(), [0x08, 0x00]);
        assert!(encode_message(&Message::new(0), &s).unwrap().is_empty());
    }

    #[test]
    fn nested_is_length_delimited() {
        let s = schema();
        let mut inner_schema = s.clone();
        inner_schema.root = 1;
        let inner = Message { type_id: 1, fields: vec![(1, Value::U64(7))] };
        let inner_bytes = encode_message(&inner, &inner_schema).unwrap();
        assert_eq!(inner_bytes.len(), 9);
        let m = Message { type_id: 0, fields: vec![(2, Value::Msg(inner))] };
        let w = encode_message(&m, &s).unwrap();
        assert_eq!(&w[..2], &[0x12, 0x09]);
        assert_eq!(&w[2..], &inner_bytes[..]);
        assert_eq!(decode_message(&w, &s).unwrap(), m);
    }

    #[test]
    fn strict_decoding() {
        let s = schema();
        // field 9 is not in the schema
        assert!(matches!(decode_message(&[0x48, 0x01], &s), Err(SimError::Decode { offset: 0, .. })));
        // field 1 sent as fixed64
        assert!(decode_message(&[0x09, 0, 0, 0, 0, 0, 0, 0, 0], &s).is_err());
        // truncated bytes field
        assert!(decode_message(&[0x1a, 0x05, 1, 2], &s).is_err());
    }

    #[test]
    fn depth_limit() {
        let mut s = schema();
        s.max_depth = 1;
        let m = Message { type_id: 0, fields: vec![(2, Value::Msg(Message { type_id: 1, fields: vec![] }))] };
        assert!(encode_message(&m, &s).is_err());
        assert!(decode_message(&[0x12, 0x00], &s).is_err());
    }

    #[test]
    fn schema_validation() {
        let mut s = schema();
        assert!(s.validate().is_ok());
        s.types[1].fields.push(FieldDef { number: 2, wire: WireType::Len, kind: FieldKind::Nested(0) });
        assert!(s.validate().is_err());
        let mut s = schema();
        s.types[0].fields[1].number = 1;
        assert!(s.validate().is_err());
    }
}
