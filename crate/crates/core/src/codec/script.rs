//! Scripts as raw bytes with a parsed instruction view.
//!
//! A [`Script`] keeps its exact serialized bytes so that anything read off
//! the wire, including malformed or mutated scripts, round-trips unchanged.
//! [`Script::instructions`] parses on demand. Only a small opcode table is
//! named; every other byte is carried as an opaque [`Opcode`].

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::hash::hash160;

/// Largest data push accepted by standard relay and by the interpreter.
pub const MAX_PUSH_SIZE: usize = 520;

/// A single script opcode byte.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Opcode(pub u8);

pub mod op {
    use super::Opcode;

    pub const OP_0: Opcode = Opcode(0x00);
    pub const OP_PUSHDATA1: Opcode = Opcode(0x4c);
    pub const OP_PUSHDATA2: Opcode = Opcode(0x4d);
    pub const OP_PUSHDATA4: Opcode = Opcode(0x4e);
    pub const OP_1NEGATE: Opcode = Opcode(0x4f);
    pub const OP_1: Opcode = Opcode(0x51);
    pub const OP_16: Opcode = Opcode(0x60);
    pub const OP_VERIFY: Opcode = Opcode(0x69);
    pub const OP_RETURN: Opcode = Opcode(0x6a);
    pub const OP_DROP: Opcode = Opcode(0x75);
    pub const OP_DUP: Opcode = Opcode(0x76);
    pub const OP_EQUAL: Opcode = Opcode(0x87);
    pub const OP_EQUALVERIFY: Opcode = Opcode(0x88);
    pub const OP_HASH160: Opcode = Opcode(0xa9);
    pub const OP_CHECKSIG: Opcode = Opcode(0xac);
    pub const OP_CHECKSIGVERIFY: Opcode = Opcode(0xad);
    pub const OP_CHECKMULTISIG: Opcode = Opcode(0xae);
}

impl Opcode {
    pub fn name(self) -> Option<&'static str> {
        use op::*;
        Some(match self {
            OP_0 => "OP_0",
            OP_PUSHDATA1 => "OP_PUSHDATA1",
            OP_PUSHDATA2 => "OP_PUSHDATA2",
            OP_PUSHDATA4 => "OP_PUSHDATA4",
            OP_1NEGATE => "OP_1NEGATE",
            OP_1 => "OP_1",
            OP_VERIFY => "OP_VERIFY",
            OP_RETURN => "OP_RETURN",
            OP_DROP => "OP_DROP",
            OP_DUP => "OP_DUP",
            OP_EQUAL => "OP_EQUAL",
            OP_EQUALVERIFY => "OP_EQUALVERIFY",
            OP_HASH160 => "OP_HASH160",
            OP_CHECKSIG => "OP_CHECKSIG",
            OP_CHECKSIGVERIFY => "OP_CHECKSIGVERIFY",
            OP_CHECKMULTISIG => "OP_CHECKMULTISIG",
            _ => return None,
        })
    }

    /// Small-integer opcodes OP_1..OP_16 as their numeric value.
    pub fn small_int(self) -> Option<u8> {
        (op::OP_1.0..=op::OP_16.0)
            .contains(&self.0)
            .then(|| self.0 - op::OP_1.0 + 1)
    }
}

/// How a push was encoded, so re-encoding is bit-exact.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PushKind {
    /// Length byte 0x00..=0x4b (0x00 is OP_0, the empty push).
    Direct,
    PushData1,
    PushData2,
    PushData4,
}

impl PushKind {
    /// Smallest encoding able to carry `len` bytes.
    pub fn minimal(len: usize) -> PushKind {
        match len {
            0..=0x4b => PushKind::Direct,
            0x4c..=0xff => PushKind::PushData1,
            0x100..=0xffff => PushKind::PushData2,
            _ => PushKind::PushData4,
        }
    }

    fn prefix_len(self) -> usize {
        match self {
            PushKind::Direct => 1,
            PushKind::PushData1 => 2,
            PushKind::PushData2 => 3,
            PushKind::PushData4 => 5,
        }
    }

    fn capacity(self) -> usize {
        match self {
            PushKind::Direct => 0x4b,
            PushKind::PushData1 => 0xff,
            PushKind::PushData2 => 0xffff,
            PushKind::PushData4 => u32::MAX as usize,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Instruction<'a> {
    Push { data: &'a [u8], kind: PushKind },
    Op(Opcode),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScriptParseError {
    #[error("push at byte {offset} declares {declared} bytes but only {available} remain")]
    TruncatedPush {
        offset: usize,
        declared: usize,
        available: usize,
    },
    #[error("push-length prefix at byte {offset} is truncated")]
    TruncatedPrefix { offset: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScriptBuildError {
    #[error("push of {len} bytes does not fit a {kind:?} prefix")]
    PushTooLarge { len: usize, kind: PushKind },
}

/// Serialized script bytes.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Script(Vec<u8>);

impl Script {
    pub fn new() -> Self {
        Script(Vec::new())
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Script(bytes)
    }

    pub fn builder() -> Builder {
        Builder::default()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn instructions(&self) -> Instructions<'_> {
        Instructions {
            bytes: &self.0,
            pos: 0,
            failed: false,
        }
    }

    /// Parses every instruction, failing on the first malformed push.
    pub fn parse(&self) -> Result<Vec<Instruction<'_>>, ScriptParseError> {
        self.instructions().collect()
    }

    /// `OP_HASH160 <20 bytes> OP_EQUAL`
    pub fn new_p2sh(script_hash: &[u8; 20]) -> Script {
        let mut b = Vec::with_capacity(23);
        b.push(op::OP_HASH160.0);
        b.push(20);
        b.extend_from_slice(script_hash);
        b.push(op::OP_EQUAL.0);
        Script(b)
    }

    /// P2SH output locking to `redeem_script`.
    pub fn p2sh_for(redeem_script: &Script) -> Script {
        Script::new_p2sh(&hash160(redeem_script.as_bytes()))
    }

    /// `OP_DUP OP_HASH160 <20 bytes> OP_EQUALVERIFY OP_CHECKSIG`
    pub fn new_p2pkh(key_hash: &[u8; 20]) -> Script {
        let mut b = Vec::with_capacity(25);
        b.extend_from_slice(&[op::OP_DUP.0, op::OP_HASH160.0, 20]);
        b.extend_from_slice(key_hash);
        b.extend_from_slice(&[op::OP_EQUALVERIFY.0, op::OP_CHECKSIG.0]);
        Script(b)
    }

    /// `OP_RETURN` followed by a single push of `data` (no push when empty).
    pub fn new_op_return(data: &[u8]) -> Script {
        let mut b = Builder::default().push_opcode(op::OP_RETURN);
        if !data.is_empty() {
            b = b.push_slice(data);
        }
        b.into_script()
    }

    pub fn p2sh_hash(&self) -> Option<[u8; 20]> {
        let b = &self.0;
        (b.len() == 23 && b[0] == op::OP_HASH160.0 && b[1] == 20 && b[22] == op::OP_EQUAL.0)
            .then(|| b[2..22].try_into().expect("20 bytes"))
    }

    pub fn is_p2sh(&self) -> bool {
        self.p2sh_hash().is_some()
    }

    pub fn p2pkh_hash(&self) -> Option<[u8; 20]> {
        let b = &self.0;
        (b.len() == 25
            && b[0] == op::OP_DUP.0
            && b[1] == op::OP_HASH160.0
            && b[2] == 20
            && b[23] == op::OP_EQUALVERIFY.0
            && b[24] == op::OP_CHECKSIG.0)
            .then(|| b[3..23].try_into().expect("20 bytes"))
    }

    pub fn is_op_return(&self) -> bool {
        self.0.first() == Some(&op::OP_RETURN.0)
    }

    /// Concatenated push data following the leading `OP_RETURN`.
    ///
    /// Returns `None` when this is not an OP_RETURN script or when anything
    /// other than pushes follows the marker.
    pub fn op_return_data(&self) -> Option<Vec<u8>> {
        if !self.is_op_return() {
            return None;
        }
        let mut data = Vec::new();
        for ins in self.instructions().skip(1) {
            match ins.ok()? {
                Instruction::Push { data: d, .. } => data.extend_from_slice(d),
                Instruction::Op(_) => return None,
            }
        }
        Some(data)
    }

    /// Bare (non-P2SH) multisig: the script ends in OP_CHECKMULTISIG.
    /// `OP_m <keys...> OP_n OP_CHECKMULTISIG`.
    pub fn is_bare_multisig(&self) -> bool {
        let Ok(ins) = self.parse() else { return false };
        let small = |i: &Instruction<'_>| matches!(i, Instruction::Op(o) if o.small_int().is_some_and(|n| n >= 1));
        match ins.as_slice() {
            [first, keys @ .., n, Instruction::Op(last)] if *last == op::OP_CHECKMULTISIG => {
                small(first) && small(n) && keys.iter().all(|k| matches!(k, Instruction::Push { .. }))
            }
            _ => false,
        }
    }

    /// True when the script parses and contains only pushes (OP_1..OP_16
    /// and OP_1NEGATE count as pushes).
    pub fn is_push_only(&self) -> bool {
        self.instructions().all(|ins| match ins {
            Ok(Instruction::Push { .. }) => true,
            Ok(Instruction::Op(o)) => o == op::OP_1NEGATE || o.small_int().is_some(),
            Err(_) => false,
        })
    }

    /// Whether any instruction is one of `opcodes`. Unparsable tails stop
    /// the scan.
    pub fn contains_any(&self, opcodes: &[Opcode]) -> bool {
        self.instructions()
            .map_while(Result::ok)
            .any(|ins| matches!(ins, Instruction::Op(o) if opcodes.contains(&o)))
    }

    /// Length of the largest push; unparsable scripts report the declared
    /// size of the broken push.
    pub fn max_push_len(&self) -> usize {
        let mut max = 0;
        for ins in self.instructions() {
            match ins {
                Ok(Instruction::Push { data, .. }) => max = max.max(data.len()),
                Ok(Instruction::Op(_)) => {}
                Err(ScriptParseError::TruncatedPush { declared, .. }) => max = max.max(declared),
                Err(_) => {}
            }
        }
        max
    }
}

impl fmt::Debug for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Script(")?;
        fmt::Display::fmt(self, f)?;
        f.write_str(")")
    }
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for ins in self.instructions() {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            match ins {
                Ok(Instruction::Push { data, .. }) if data.is_empty() => f.write_str("OP_0")?,
                Ok(Instruction::Push { data, .. }) if data.len() > 16 => {
                    write!(f, "<{} bytes>", data.len())?
                }
                Ok(Instruction::Push { data, .. }) => write!(f, "<{}>", hex::encode(data))?,
                Ok(Instruction::Op(o)) => match o.name() {
                    Some(n) => f.write_str(n)?,
                    None => write!(f, "0x{:02x}", o.0)?,
                },
                Err(e) => write!(f, "<error: {e}>")?,
            }
        }
        Ok(())
    }
}

impl Serialize for Script {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Script {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map(Script).map_err(serde::de::Error::custom)
    }
}

pub struct Instructions<'a> {
    bytes: &'a [u8],
    pos: usize,
    failed: bool,
}

impl<'a> Iterator for Instructions<'a> {
    type Item = Result<Instruction<'a>, ScriptParseError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.pos >= self.bytes.len() {
            return None;
        }
        let offset = self.pos;
        let code = self.bytes[offset];
        let (kind, len_width) = match code {
            0x00..=0x4b => (PushKind::Direct, 0),
            0x4c => (PushKind::PushData1, 1),
            0x4d => (PushKind::PushData2, 2),
            0x4e => (PushKind::PushData4, 4),
            _ => {
                self.pos += 1;
                return Some(Ok(Instruction::Op(Opcode(code))));
            }
        };
        let header_end = offset + 1 + len_width;
        if header_end > self.bytes.len() {
            self.failed = true;
            return Some(Err(ScriptParseError::TruncatedPrefix { offset }));
        }
        let declared = if len_width == 0 {
            code as usize
        } else {
            let mut buf = [0u8; 4];
            buf[..len_width].copy_from_slice(&self.bytes[offset + 1..header_end]);
            u32::from_le_bytes(buf) as usize
        };
        let available = self.bytes.len() - header_end;
        if declared > available {
            self.failed = true;
            return Some(Err(ScriptParseError::TruncatedPush {
                offset,
                declared,
                available,
            }));
        }
        self.pos = header_end + declared;
        Some(Ok(Instruction::Push {
            data: &self.bytes[header_end..self.pos],
            kind,
        }))
    }
}

#[derive(Default, Clone, Debug)]
pub struct Builder(Vec<u8>);

impl Builder {
    /// Pushes `data` with the smallest prefix that fits.
    pub fn push_slice(self, data: &[u8]) -> Builder {
        let kind = PushKind::minimal(data.len());
        self.push_slice_with(data, kind).expect("minimal kind always fits")
    }

    /// Pushes `data` with a specific prefix, e.g. OP_PUSHDATA2 for every
    /// data part of a data-storing script regardless of its length.
    pub fn push_slice_with(mut self, data: &[u8], kind: PushKind) -> Result<Builder, ScriptBuildError> {
        let len = data.len();
        if len > kind.capacity() {
            return Err(ScriptBuildError::PushTooLarge { len, kind });
        }
        self.0.reserve(kind.prefix_len() + len);
        match kind {
            PushKind::Direct => self.0.push(len as u8),
            PushKind::PushData1 => {
                self.0.push(op::OP_PUSHDATA1.0);
                self.0.push(len as u8);
            }
            PushKind::PushData2 => {
                self.0.push(op::OP_PUSHDATA2.0);
                self.0.extend_from_slice(&(len as u16).to_le_bytes());
            }
            PushKind::PushData4 => {
                self.0.push(op::OP_PUSHDATA4.0);
                self.0.extend_from_slice(&(len as u32).to_le_bytes());
            }
        }
        self.0.extend_from_slice(data);
        Ok(self)
    }

    pub fn push_opcode(mut self, opcode: Opcode) -> Builder {
        self.0.push(opcode.0);
        self
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_script(self) -> Script {
        Script(self.0)
    }
}

/// Bytes a push of `len` bytes occupies with prefix `kind`.
pub fn push_size(len: usize, kind: PushKind) -> usize {
    kind.prefix_len() + len
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_multisig_shape() {
        let ms = Script::builder()
            .push_opcode(op::OP_1)
            .push_slice(&[2; 33])
            .push_opcode(op::OP_1)
            .push_opcode(op::OP_CHECKMULTISIG)
            .into_script();
        assert!(ms.is_bare_multisig());
        assert!(!Script::new_op_return(&[0xae]).is_bare_multisig());
        assert!(!Script::from_bytes(vec![op::OP_CHECKMULTISIG.0]).is_bare_multisig());
    }

    /// Re-encodes a parsed script instruction by instruction.
    fn reencode(script: &Script) -> Vec<u8> {
        let mut b = Builder::default();
        for ins in script.parse().unwrap() {
            b = match ins {
                Instruction::Push { data, kind } => b.push_slice_with(data, kind).unwrap(),
                Instruction::Op(o) => b.push_opcode(o),
            };
        }
        b.into_script().into_bytes()
    }

    #[test]
    fn push_encodings_round_trip() {
        let s = Script::builder()
            .push_slice(&[])
            .push_slice(&[1; 75])
            .push_slice(&[2; 76])
            .push_slice(&[3; 300])
            .push_slice_with(&[4; 10], PushKind::PushData2)
            .unwrap()
            .push_opcode(op::OP_HASH160)
            .push_opcode(Opcode(0xfe))
            .into_script();
        assert_eq!(reencode(&s), s.as_bytes());
        let pushes: Vec<_> = s
            .parse()
            .unwrap()
            .into_iter()
            .filter_map(|i| match i {
                Instruction::Push { data, kind } => Some((data.len(), kind)),
                _ => None,
            })
            .collect();
        assert_eq!(
            pushes,
            vec![
                (0, PushKind::Direct),
                (75, PushKind::Direct),
                (76, PushKind::PushData1),
                (300, PushKind::PushData2),
                (10, PushKind::PushData2),
            ]
        );
    }

    #[test]
    fn truncated_push_is_reported() {
        let s = Script::from_bytes(vec![0x4d, 0x08, 0x02, 0xaa]);
        assert!(matches!(
            s.parse(),
            Err(ScriptParseError::TruncatedPush { declared: 520, available: 1, .. })
        ));
        assert_eq!(s.max_push_len(), 520);
        assert!(!s.is_push_only());
        let s = Script::from_bytes(vec![0x4d, 0x08]);
        assert!(matches!(s.parse(), Err(ScriptParseError::TruncatedPrefix { offset: 0 })));
    }

    #[test]
    fn templates() {
        let h = [9u8; 20];
        let p2sh = Script::new_p2sh(&h);
        assert_eq!(p2sh.len(), 23);
        assert_eq!(p2sh.p2sh_hash(), Some(h));
        let p2pkh = Script::new_p2pkh(&h);
        assert_eq!(p2pkh.len(), 25);
        assert_eq!(p2pkh.p2pkh_hash(), Some(h));
        assert!(!p2pkh.is_p2sh());

        let ret = Script::new_op_return(b"hello");
        assert!(ret.is_op_return());
        assert_eq!(ret.op_return_data().unwrap(), b"hello");
        assert_eq!(Script::new_op_return(&[]).as_bytes(), &[0x6a]);
        assert_eq!(Script::new_op_return(&[]).op_return_data().unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn pushdata_overflow_rejected() {
        let err = Script::builder().push_slice_with(&[0; 256], PushKind::PushData1);
        assert!(matches!(err, Err(ScriptBuildError::PushTooLarge { len: 256, .. })));
    }

    #[test]
    fn display_names_known_opcodes() {
        let s = Script::new_p2sh(&[0; 20]);
        assert!(s.to_string().starts_with("OP_HASH160 <20 bytes> OP_EQUAL"));
        assert_eq!(Script::from_bytes(vec![0xb9]).to_string(), "0xb9");
    }
}
