//! A staged writer without hash locks, used as the vulnerable reference.
//!
//! Each input pushes three raw data parts followed by a redeem script that
//! drops them and succeeds. Every spending transaction pays its leftover to
//! a P2PKH change output.

use crate::codec::script::{op, Instruction, Script};
use crate::codec::standard::Policy;
use crate::codec::transaction::{txid, Amount, OutPoint, Transaction, TxInput, TxOutput};
use crate::maxrate::{MaxRateError, Source, WalletKey, PART_SIZE};

/// Payload bytes carried by one baseline input.
pub const BASELINE_CHUNK: usize = 3 * PART_SIZE;
pub const BASELINE_INPUTS_PER_TX: usize = 50;
/// Value left in each spending transaction's change output.
pub const BASELINE_CHANGE: Amount = Amount(10_000);

/// `OP_DROP OP_DROP OP_DROP OP_1`: accepts any three pushes.
pub fn baseline_redeem_script() -> Script {
    Script::builder()
        .push_opcode(op::OP_DROP)
        .push_opcode(op::OP_DROP)
        .push_opcode(op::OP_DROP)
        .push_opcode(op::OP_1)
        .into_script()
}

fn data_script_sig(chunk: &[u8]) -> Script {
    let mut b = Script::builder();
    for i in 0..3 {
        let lo = (i * PART_SIZE).min(chunk.len());
        let hi = ((i + 1) * PART_SIZE).min(chunk.len());
        b = b.push_slice(&chunk[lo..hi]);
    }
    b.push_slice(baseline_redeem_script().as_bytes()).into_script()
}

/// Data parts pushed by a baseline input, concatenated.
pub fn baseline_chunk(script_sig: &Script) -> Option<Vec<u8>> {
    let ins = script_sig.parse().ok()?;
    let mut out = Vec::new();
    let [a, b, c, Instruction::Push { data: redeem, .. }] = ins.as_slice() else {
        return None;
    };
    if *redeem != baseline_redeem_script().as_bytes() {
        return None;
    }
    for i in [a, b, c] {
        match i {
            Instruction::Push { data, .. } => out.extend_from_slice(data),
            Instruction::Op(_) => return None,
        }
    }
    Some(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConstruct {
    pub funding: Transaction,
    pub spending: Vec<Transaction>,
}

impl BaselineConstruct {
    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        std::iter::once(&self.funding).chain(&self.spending)
    }

    pub fn reassemble(&self) -> Option<Vec<u8>> {
        let mut out = Vec::new();
        for tx in &self.spending {
            for input in &tx.inputs {
                out.extend(baseline_chunk(&input.script_sig)?);
            }
        }
        Some(out)
    }
}

/// One funding transaction and `ceil(chunks / 50)` spending transactions,
/// paying `fee_rate` per byte throughout. `change_key` receives every
/// spending transaction's change.
pub fn build_baseline(
    payload: &[u8],
    source: &Source,
    change_key: &WalletKey,
    fee_rate: u64,
) -> Result<BaselineConstruct, MaxRateError> {
    if payload.is_empty() {
        return Err(MaxRateError::EmptyPayload);
    }
    let policy = Policy::default();
    let p2sh = Script::p2sh_for(&baseline_redeem_script());
    let p2sh_dust = policy.dust_threshold_for_script(&p2sh).0;
    let chunks: Vec<&[u8]> = payload.chunks(BASELINE_CHUNK).collect();

    // Spending transactions are sized with a placeholder outpoint, which
    // has the same length as the real one.
    let mut groups = Vec::new();
    let mut values = Vec::new();
    for group in chunks.chunks(BASELINE_INPUTS_PER_TX) {
        let draft = Transaction::new(
            group
                .iter()
                .map(|c| TxInput::new(OutPoint::new(Default::default(), 0), data_script_sig(c)))
                .collect(),
            vec![TxOutput::new(BASELINE_CHANGE, change_key.p2pkh())],
        );
        let need = draft.serialized_size() as u64 * fee_rate + BASELINE_CHANGE.0;
        let each = need.div_ceil(group.len() as u64).max(p2sh_dust);
        values.extend(std::iter::repeat_n(Amount(each), group.len()));
        groups.push(draft);
    }

    let script_sig = source.key.unlock(&source.script_pubkey, &source.outpoint)?;
    let mut funding = Transaction::new(
        vec![TxInput::new(source.outpoint, script_sig)],
        values.iter().map(|&v| TxOutput::new(v, p2sh.clone())).collect(),
    );
    funding.outputs.push(TxOutput::new(Amount::ZERO, source.key.p2pkh()));
    let paid: u64 = values.iter().map(|v| v.0).sum();
    let fee = funding.serialized_size() as u64 * fee_rate;
    let change_dust = policy.dust_threshold_for_script(&source.key.p2pkh()).0;
    if source.value.0 < paid + fee + change_dust {
        return Err(MaxRateError::InsufficientFunds {
            needed: Amount(paid + fee + change_dust),
            available: source.value,
        });
    }
    funding.outputs.last_mut().expect("change").value = Amount(source.value.0 - paid - fee);
    let funding_id = txid(&funding)?;

    let mut next = 0u32;
    let mut spending = Vec::new();
    for mut tx in groups {
        let mut total = 0u64;
        for input in &mut tx.inputs {
            input.previous_output = OutPoint::new(funding_id, next);
            total += values[next as usize].0;
            next += 1;
        }
        let fee = tx.serialized_size() as u64 * fee_rate;
        tx.outputs[0].value = Amount(total - fee);
        spending.push(tx);
    }
    Ok(BaselineConstruct { funding, spending })
}
