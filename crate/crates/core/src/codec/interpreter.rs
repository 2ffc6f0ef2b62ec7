//! A small script interpreter covering the opcodes the toolkit produces.
//!
//! Signature opcodes are modeled: a signature is accepted when it is a
//! non-empty blob and the key has a plausible SEC length. No ECDSA is
//! performed.

use super::hash::hash160;
use super::script::{op, Instruction, Opcode, Script, MAX_PUSH_SIZE};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("script does not parse: {0}")]
    Parse(String),
    #[error("stack underflow at {0}")]
    StackUnderflow(&'static str),
    #[error("push of {0} bytes exceeds the element limit")]
    PushTooLarge(usize),
    #[error("OP_EQUALVERIFY failed")]
    EqualVerify,
    #[error("OP_VERIFY failed")]
    Verify,
    #[error("OP_CHECKSIGVERIFY failed")]
    CheckSigVerify,
    #[error("OP_RETURN executed")]
    Return,
    #[error("unsupported opcode 0x{0:02x}")]
    Unsupported(u8),
    #[error("scriptSig must contain only pushes")]
    SigNotPushOnly,
    #[error("script finished with a false top element")]
    EvalFalse,
    #[error("redeem script hash does not match the P2SH output")]
    RedeemHashMismatch,
    #[error("stack must hold exactly one element after execution, found {0}")]
    CleanStack(usize),
}

pub type Stack = Vec<Vec<u8>>;

fn truthy(v: &[u8]) -> bool {
    match v.split_last() {
        None => false,
        Some((last, rest)) => rest.iter().any(|&b| b != 0) || (*last != 0 && *last != 0x80),
    }
}

fn bool_item(b: bool) -> Vec<u8> {
    if b {
        vec![1]
    } else {
        Vec::new()
    }
}

fn pop(stack: &mut Stack, at: &'static str) -> Result<Vec<u8>, ExecError> {
    stack.pop().ok_or(ExecError::StackUnderflow(at))
}

fn plausible_sig(sig: &[u8], key: &[u8]) -> bool {
    !sig.is_empty() && matches!(key.len(), 33 | 65)
}

/// Runs `script` on `stack`.
pub fn execute(script: &Script, stack: &mut Stack) -> Result<(), ExecError> {
    for ins in script.instructions() {
        let ins = ins.map_err(|e| ExecError::Parse(e.to_string()))?;
        match ins {
            Instruction::Push { data, .. } => {
                if data.len() > MAX_PUSH_SIZE {
                    return Err(ExecError::PushTooLarge(data.len()));
                }
                stack.push(data.to_vec());
            }
            Instruction::Op(o) => step(o, stack)?,
        }
    }
    Ok(())
}

fn step(o: Opcode, stack: &mut Stack) -> Result<(), ExecError> {
    if let Some(n) = o.small_int() {
        stack.push(vec![n]);
        return Ok(());
    }
    match o {
        op::OP_1NEGATE => stack.push(vec![0x81]),
        op::OP_DROP => {
            pop(stack, "OP_DROP")?;
        }
        op::OP_DUP => {
            let top = stack.last().cloned().ok_or(ExecError::StackUnderflow("OP_DUP"))?;
            stack.push(top);
        }
        op::OP_HASH160 => {
            let v = pop(stack, "OP_HASH160")?;
            stack.push(hash160(&v).to_vec());
        }
        op::OP_EQUAL | op::OP_EQUALVERIFY => {
            let a = pop(stack, "OP_EQUAL")?;
            let b = pop(stack, "OP_EQUAL")?;
            if o == op::OP_EQUALVERIFY {
                if a != b {
                    return Err(ExecError::EqualVerify);
                }
            } else {
                stack.push(bool_item(a == b));
            }
        }
        op::OP_VERIFY => {
            let v = pop(stack, "OP_VERIFY")?;
            if !truthy(&v) {
                return Err(ExecError::Verify);
            }
        }
        op::OP_CHECKSIG | op::OP_CHECKSIGVERIFY => {
            let key = pop(stack, "OP_CHECKSIG")?;
            let sig = pop(stack, "OP_CHECKSIG")?;
            let ok = plausible_sig(&sig, &key);
            if o == op::OP_CHECKSIGVERIFY {
                if !ok {
                    return Err(ExecError::CheckSigVerify);
                }
            } else {
                stack.push(bool_item(ok));
            }
        }
        op::OP_CHECKMULTISIG => {
            let n = pop(stack, "OP_CHECKMULTISIG")?;
            let n = n.first().copied().unwrap_or(0) as usize;
            let keys: Vec<_> = (0..n)
                .map(|_| pop(stack, "OP_CHECKMULTISIG"))
                .collect::<Result<_, _>>()?;
            let m = pop(stack, "OP_CHECKMULTISIG")?;
            let m = m.first().copied().unwrap_or(0) as usize;
            let sigs: Vec<_> = (0..m)
                .map(|_| pop(stack, "OP_CHECKMULTISIG"))
                .collect::<Result<_, _>>()?;
            pop(stack, "OP_CHECKMULTISIG dummy")?;
            let ok = m <= n && sigs.iter().all(|s| !s.is_empty()) && keys.iter().all(|k| matches!(k.len(), 33 | 65));
            stack.push(bool_item(ok));
        }
        op::OP_RETURN => return Err(ExecError::Return),
        other => return Err(ExecError::Unsupported(other.0)),
    }
    Ok(())
}

/// Full input verification: scriptSig, then scriptPubKey, then the P2SH
/// redeem script when the output is pay-to-script-hash. Standard relay
/// additionally requires a clean stack holding a single true element.
pub fn verify_input(script_sig: &Script, script_pubkey: &Script) -> Result<(), ExecError> {
    if !script_sig.is_push_only() {
        if let Err(e) = script_sig.parse() {
            return Err(ExecError::Parse(e.to_string()));
        }
        return Err(ExecError::SigNotPushOnly);
    }
    let mut stack = Stack::new();
    execute(script_sig, &mut stack)?;
    let sig_stack = stack.clone();

    execute(script_pubkey, &mut stack)?;
    match stack.last() {
        Some(top) if truthy(top) => {}
        _ => {
            return Err(if script_pubkey.is_p2sh() {
                ExecError::RedeemHashMismatch
            } else {
                ExecError::EvalFalse
            })
        }
    }

    if script_pubkey.is_p2sh() {
        let mut stack = sig_stack;
        let redeem = Script::from_bytes(pop(&mut stack, "redeem script")?);
        execute(&redeem, &mut stack)?;
        match stack.last() {
            Some(top) if truthy(top) => {}
            _ => return Err(ExecError::EvalFalse),
        }
        if stack.len() != 1 {
            return Err(ExecError::CleanStack(stack.len()));
        }
    } else if stack.len() != 1 {
        return Err(ExecError::CleanStack(stack.len()));
    }
    Ok(())
}
