//! The Satoshi transaction tuple and its canonical byte layout.
//!
//! Layout: version (u32 LE), input count, inputs, output count, outputs,
//! locktime (u32 LE). Counts and script lengths are CompactSize varints.
//! Witness data is never written; `witness_flag` exists only so that the
//! tuple is complete and must stay `false`.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use super::hash::{sha256d, Txid};
use super::script::Script;
use super::varint::{decode_varint, varint_len, write_varint};
use super::{DecodeError, EncodeError, ScriptLocation};

/// Consensus ceiling on any single script, in bytes.
pub const MAX_SCRIPT_SIZE: usize = 10_000;

/// Value in base units (10⁻⁸ of a coin).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Amount(pub u64);

impl Amount {
    pub const ZERO: Amount = Amount(0);

    /// Base units per milli-coin (mLTC / mBTC).
    pub const PER_MILLI: u64 = 100_000;

    pub fn from_base(v: u64) -> Self {
        Amount(v)
    }

    pub fn base(self) -> u64 {
        self.0
    }

    pub fn as_milli(self) -> f64 {
        self.0 as f64 / Self::PER_MILLI as f64
    }

    pub fn checked_sub(self, rhs: Amount) -> Option<Amount> {
        self.0.checked_sub(rhs.0).map(Amount)
    }
}

impl Add for Amount {
    type Output = Amount;
    fn add(self, rhs: Amount) -> Amount {
        Amount(self.0 + rhs.0)
    }
}

impl Sub for Amount {
    type Output = Amount;
    fn sub(self, rhs: Amount) -> Amount {
        Amount(self.0 - rhs.0)
    }
}

impl Sum for Amount {
    fn sum<I: Iterator<Item = Amount>>(iter: I) -> Amount {
        Amount(iter.map(|a| a.0).sum())
    }
}

impl fmt::Debug for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} base", self.0)
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct OutPoint {
    pub txid: Txid,
    pub vout: u32,
}

impl OutPoint {
    pub fn new(txid: Txid, vout: u32) -> Self {
        OutPoint { txid, vout }
    }
}

impl fmt::Display for OutPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.txid, self.vout)
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct TxInput {
    pub previous_output: OutPoint,
    pub script_sig: Script,
    pub sequence: u32,
}

impl TxInput {
    pub const FINAL_SEQUENCE: u32 = 0xFFFF_FFFF;

    pub fn new(previous_output: OutPoint, script_sig: Script) -> Self {
        TxInput {
            previous_output,
            script_sig,
            sequence: Self::FINAL_SEQUENCE,
        }
    }

    pub fn serialized_size(&self) -> usize {
        36 + varint_len(self.script_sig.len() as u64) + self.script_sig.len() + 4
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct TxOutput {
    pub value: Amount,
    pub script_pubkey: Script,
}

impl TxOutput {
    pub fn new(value: Amount, script_pubkey: Script) -> Self {
        TxOutput {
            value,
            script_pubkey,
        }
    }

    pub fn serialized_size(&self) -> usize {
        8 + varint_len(self.script_pubkey.len() as u64) + self.script_pubkey.len()
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Transaction {
    pub version: u32,
    /// Segwit marker. Always `false`; serialization refuses `true`.
    #[serde(default)]
    pub witness_flag: bool,
    pub inputs: Vec<TxInput>,
    pub outputs: Vec<TxOutput>,
    pub locktime: u32,
}

impl Transaction {
    pub fn new(inputs: Vec<TxInput>, outputs: Vec<TxOutput>) -> Self {
        Transaction {
            version: 1,
            witness_flag: false,
            inputs,
            outputs,
            locktime: 0,
        }
    }

    /// Serialized length, computed without allocating.
    pub fn serialized_size(&self) -> usize {
        4 + varint_len(self.inputs.len() as u64)
            + self.inputs.iter().map(TxInput::serialized_size).sum::<usize>()
            + varint_len(self.outputs.len() as u64)
            + self.outputs.iter().map(TxOutput::serialized_size).sum::<usize>()
            + 4
    }

    pub fn total_output_value(&self) -> Amount {
        self.outputs.iter().map(|o| o.value).sum()
    }

    pub fn op_return_count(&self) -> usize {
        self.outputs
            .iter()
            .filter(|o| o.script_pubkey.is_op_return())
            .count()
    }

    pub fn serialize(&self) -> Result<Vec<u8>, EncodeError> {
        if self.witness_flag {
            return Err(EncodeError::WitnessUnsupported);
        }
        for (i, input) in self.inputs.iter().enumerate() {
            if input.script_sig.len() > MAX_SCRIPT_SIZE {
                return Err(EncodeError::ScriptTooLarge {
                    location: ScriptLocation::Input(i),
                    len: input.script_sig.len(),
                });
            }
        }
        for (i, output) in self.outputs.iter().enumerate() {
            if output.script_pubkey.len() > MAX_SCRIPT_SIZE {
                return Err(EncodeError::ScriptTooLarge {
                    location: ScriptLocation::Output(i),
                    len: output.script_pubkey.len(),
                });
            }
        }

        let mut out = Vec::with_capacity(self.serialized_size());
        out.extend_from_slice(&self.version.to_le_bytes());
        write_varint(&mut out, self.inputs.len() as u64);
        for input in &self.inputs {
            out.extend_from_slice(input.previous_output.txid.as_bytes());
            out.extend_from_slice(&input.previous_output.vout.to_le_bytes());
            write_varint(&mut out, input.script_sig.len() as u64);
            out.extend_from_slice(input.script_sig.as_bytes());
            out.extend_from_slice(&input.sequence.to_le_bytes());
        }
        write_varint(&mut out, self.outputs.len() as u64);
        for output in &self.outputs {
            out.extend_from_slice(&output.value.0.to_le_bytes());
            write_varint(&mut out, output.script_pubkey.len() as u64);
            out.extend_from_slice(output.script_pubkey.as_bytes());
        }
        out.extend_from_slice(&self.locktime.to_le_bytes());
        Ok(out)
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Transaction, DecodeError> {
        let mut r = Reader { bytes, pos: 0 };
        let version = r.u32()?;
        // A zero input count followed by flag 0x01 is the segwit marker.
        if r.peek() == Some(0x00) && r.peek_at(1) == Some(0x01) {
            return Err(DecodeError::WitnessUnsupported);
        }
        let n_in = r.count()?;
        let mut inputs = Vec::with_capacity(n_in.min(4096));
        for _ in 0..n_in {
            let mut txid = [0u8; 32];
            txid.copy_from_slice(r.take(32)?);
            let vout = r.u32()?;
            let script_sig = r.script()?;
            let sequence = r.u32()?;
            inputs.push(TxInput {
                previous_output: OutPoint::new(Txid(txid), vout),
                script_sig,
                sequence,
            });
        }
        let n_out = r.count()?;
        let mut outputs = Vec::with_capacity(n_out.min(4096));
        for _ in 0..n_out {
            let value = Amount(r.u64()?);
            let script_pubkey = r.script()?;
            outputs.push(TxOutput {
                value,
                script_pubkey,
            });
        }
        let locktime = r.u32()?;
        if r.pos != bytes.len() {
            return Err(DecodeError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(Transaction {
            version,
            witness_flag: false,
            inputs,
            outputs,
            locktime,
        })
    }

    pub fn to_hex(&self) -> Result<String, EncodeError> {
        self.serialize().map(hex::encode)
    }

    pub fn from_hex(s: &str) -> Result<Transaction, DecodeError> {
        let bytes = hex::decode(s.trim()).map_err(|e| DecodeError::Hex(e.to_string()))?;
        Transaction::deserialize(&bytes)
    }
}

/// Double-SHA256 of the serialized transaction.
pub fn txid(tx: &Transaction) -> Result<Txid, EncodeError> {
    tx.serialize().map(|bytes| Txid(sha256d(&bytes)))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::UnexpectedEnd)?;
        let s = self.bytes.get(self.pos..end).ok_or(DecodeError::UnexpectedEnd)?;
        self.pos = end;
        Ok(s)
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<u8> {
        self.bytes.get(self.pos + off).copied()
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn varint(&mut self) -> Result<u64, DecodeError> {
        let (v, used) = decode_varint(&self.bytes[self.pos..])?;
        self.pos += used;
        Ok(v)
    }

    fn count(&mut self) -> Result<usize, DecodeError> {
        let n = self.varint()?;
        // Each element needs at least 9 bytes, so larger counts cannot fit.
        if n > (self.bytes.len() - self.pos) as u64 {
            return Err(DecodeError::UnexpectedEnd);
        }
        Ok(n as usize)
    }

    fn script(&mut self) -> Result<Script, DecodeError> {
        let len = self.varint()?;
        let len = usize::try_from(len).map_err(|_| DecodeError::UnexpectedEnd)?;
        Ok(Script::from_bytes(self.take(len)?.to_vec()))
    }
}
