//! Transaction serialization, script model, interpreter and relay policy.

pub mod hash;
pub mod interpreter;
pub mod script;
pub mod standard;
pub mod transaction;
pub mod varint;

use std::fmt;

pub use hash::{hash160, sha256, sha256d, Txid};
pub use interpreter::{verify_input, ExecError};
pub use script::{op, Builder, Instruction, Opcode, PushKind, Script, MAX_PUSH_SIZE};
pub use standard::{
    check_standard, check_standard_with, Policy, PrevoutLookup, Rule, StandardnessReport,
    Violation,
};
pub use transaction::{txid, Amount, OutPoint, Transaction, TxInput, TxOutput, MAX_SCRIPT_SIZE};
pub use varint::{decode_varint, encode_varint, varint_len, write_varint};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("non-canonical CompactSize encoding")]
    NonCanonicalVarint,
    #[error("{0} trailing bytes after transaction")]
    TrailingBytes(usize),
    #[error("segwit serialization is not supported")]
    WitnessUnsupported,
    #[error("invalid hex: {0}")]
    Hex(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptLocation {
    Input(usize),
    Output(usize),
}

impl fmt::Display for ScriptLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptLocation::Input(i) => write!(f, "input {i}"),
            ScriptLocation::Output(i) => write!(f, "output {i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("segwit serialization is not supported")]
    WitnessUnsupported,
    #[error("script at {location} is {len} bytes, limit 10000")]
    ScriptTooLarge { location: ScriptLocation, len: usize },
}
