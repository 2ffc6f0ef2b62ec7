//! The hash-locked data-storing script.
//!
//! A scriptSig pushes three data parts, then a redeem script that drops an
//! 8-byte tail and checks each part against its hash160:
//!
//! ```text
//! scriptSig:  PUSHDATA2 <a> PUSHDATA2 <b> PUSHDATA2 <c> PUSHDATA1 <redeem>
//! redeem:     <tail> OP_DROP
//!             OP_HASH160 <h(c)> OP_EQUALVERIFY
//!             OP_HASH160 <h(b)> OP_EQUALVERIFY
//!             OP_HASH160 <h(a)> OP_EQUAL
//! ```
//!
//! Only the final comparison leaves a value on the stack.

use serde::{Deserialize, Serialize};

use crate::codec::interpreter::{verify_input, ExecError};
use crate::codec::script::{op, Instruction, PushKind, Script};
use crate::codec::transaction::TxOutput;
use crate::codec::{hash160, varint_len};

use super::chunk::PayloadChunk;
use super::{MaxRateError, PART_SIZE, TAIL_SIZE};

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct DataScript {
    pub script_sig: Script,
    pub redeem_script: Script,
    #[serde(with = "hex::serde")]
    pub p2sh_hash: [u8; 20],
}

impl DataScript {
    /// The P2SH output script this input unlocks.
    pub fn script_pubkey(&self) -> Script {
        Script::new_p2sh(&self.p2sh_hash)
    }
}

pub fn redeem_script_len(tail_len: usize) -> usize {
    // tail push, OP_DROP, and three 23-byte hash checks
    let tail_push = if tail_len == 0 { 1 } else { 1 + tail_len };
    tail_push + 1 + 3 * 23
}

/// scriptSig length for a chunk of `payload_len` bytes.
pub fn script_sig_len(payload_len: usize) -> usize {
    let lt = payload_len.min(TAIL_SIZE);
    3 * 3 + (payload_len - lt) + 2 + redeem_script_len(lt)
}

/// Serialized size of the spending input that carries a chunk.
pub fn data_input_len(payload_len: usize) -> usize {
    let s = script_sig_len(payload_len);
    32 + 4 + varint_len(s as u64) + s + 4
}

pub fn build_data_script(chunk: &PayloadChunk) -> Result<DataScript, MaxRateError> {
    for (name, part) in [("a", &chunk.part_a), ("b", &chunk.part_b), ("c", &chunk.part_c)] {
        if part.len() > PART_SIZE {
            return Err(MaxRateError::PartTooLarge { part: name, len: part.len() });
        }
    }
    if chunk.tail.len() > TAIL_SIZE {
        return Err(MaxRateError::PartTooLarge { part: "tail", len: chunk.tail.len() });
    }

    let redeem_script = Script::builder()
        .push_slice(&chunk.tail)
        .push_opcode(op::OP_DROP)
        .push_opcode(op::OP_HASH160)
        .push_slice(&hash160(&chunk.part_c))
        .push_opcode(op::OP_EQUALVERIFY)
        .push_opcode(op::OP_HASH160)
        .push_slice(&hash160(&chunk.part_b))
        .push_opcode(op::OP_EQUALVERIFY)
        .push_opcode(op::OP_HASH160)
        .push_slice(&hash160(&chunk.part_a))
        .push_opcode(op::OP_EQUAL)
        .into_script();

    let script_sig = Script::builder()
        .push_slice_with(&chunk.part_a, PushKind::PushData2)
        .and_then(|b| b.push_slice_with(&chunk.part_b, PushKind::PushData2))
        .and_then(|b| b.push_slice_with(&chunk.part_c, PushKind::PushData2))
        .and_then(|b| b.push_slice_with(redeem_script.as_bytes(), PushKind::PushData1))
        .expect("part sizes checked above")
        .into_script();

    Ok(DataScript {
        p2sh_hash: hash160(redeem_script.as_bytes()),
        script_sig,
        redeem_script,
    })
}

pub fn check_spend(funding_output: &TxOutput, input_script: &Script) -> Result<(), ExecError> {
    if !funding_output.script_pubkey.is_p2sh() {
        return Err(ExecError::Parse("funding output is not P2SH".into()));
    }
    verify_input(input_script, &funding_output.script_pubkey)
}

/// True iff `input_script` unlocks the P2SH `funding_output`.
pub fn verify_spend(funding_output: &TxOutput, input_script: &Script) -> bool {
    check_spend(funding_output, input_script).is_ok()
}

/// Recovers the chunk bytes from a data-storing scriptSig.
pub fn extract_chunk(script_sig: &Script) -> Result<Vec<u8>, MaxRateError> {
    let bad = |why: &str| MaxRateError::NotDataScript(why.to_string());
    let ins = script_sig.parse().map_err(|e| bad(&e.to_string()))?;
    let pushes: Vec<&[u8]> = ins
        .iter()
        .map(|i| match i {
            Instruction::Push { data, .. } => Ok(*data),
            Instruction::Op(_) => Err(bad("scriptSig has a non-push opcode")),
        })
        .collect::<Result<_, _>>()?;
    let [a, b, c, redeem] = pushes[..] else {
        return Err(bad("expected four pushes"));
    };
    let redeem = Script::from_bytes(redeem.to_vec());
    let tail = match redeem.parse().map_err(|e| bad(&e.to_string()))?.first() {
        Some(Instruction::Push { data, .. }) => data.to_vec(),
        _ => return Err(bad("redeem script does not start with the tail push")),
    };
    let mut out = Vec::with_capacity(a.len() + b.len() + c.len() + tail.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out.extend_from_slice(c);
    out.extend_from_slice(&tail);
    Ok(out)
}
