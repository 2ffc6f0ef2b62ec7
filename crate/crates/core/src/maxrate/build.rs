//! Build funding, spending and preparing transactions from a plan.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::codec::script::{op, Script};
use crate::codec::transaction::{txid, Amount, OutPoint, Transaction, TxInput, TxOutput};
use crate::codec::{hash160, sha256, Txid};

use super::chunk::chunk_payload;
use super::data_script::{build_data_script, extract_chunk, DataScript};
use super::plan::{change_dust, plan_construct, ConstructPlan, CostModel};
use super::{MaxRateError, DATA_TAG, MAX_DATA_OUTPUTS, MAX_INPUTS_PER_SPENDING_TX};

/// Wallet key with modeled signatures.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct WalletKey {
    #[serde(with = "hex::serde")]
    pub pubkey: [u8; 33],
}

impl WalletKey {
    pub fn from_seed(seed: &[u8]) -> WalletKey {
        let mut pubkey = [0u8; 33];
        pubkey[0] = 0x02;
        pubkey[1..].copy_from_slice(&sha256(&[b"wallet-key".as_slice(), seed].concat()));
        WalletKey { pubkey }
    }

    pub fn key_hash(&self) -> [u8; 20] {
        hash160(&self.pubkey)
    }

    pub fn p2pkh(&self) -> Script {
        Script::new_p2pkh(&self.key_hash())
    }

    /// `<key> OP_CHECKSIG`, the redeem script of preparing-tree outputs.
    pub fn tree_redeem_script(&self) -> Script {
        Script::builder().push_slice(&self.pubkey).push_opcode(op::OP_CHECKSIG).into_script()
    }

    pub fn tree_script(&self) -> Script {
        Script::p2sh_for(&self.tree_redeem_script())
    }

    /// A 72-byte DER-shaped blob standing in for a signature over `msg`.
    pub fn sign(&self, msg: &[u8]) -> [u8; 72] {
        let h1 = sha256(&[b"wallet-sig".as_slice(), &self.pubkey, msg].concat());
        let h2 = sha256(&h1);
        let mut sig = [0u8; 72];
        sig[0] = 0x30;
        sig[1] = 0x45;
        sig[2..34].copy_from_slice(&h1);
        sig[34..66].copy_from_slice(&h2);
        sig[66..].copy_from_slice(&h1[..6]);
        sig[71] = 0x01;
        sig
    }

    pub fn unlock(&self, prevout_script: &Script, outpoint: &OutPoint) -> Result<Script, MaxRateError> {
        let msg = [outpoint.txid.0.as_slice(), &outpoint.vout.to_le_bytes()].concat();
        let sig = self.sign(&msg);
        if *prevout_script == self.p2pkh() {
            Ok(Script::builder().push_slice(&sig).push_slice(&self.pubkey).into_script())
        } else if *prevout_script == self.tree_script() {
            Ok(Script::builder()
                .push_slice(&sig)
                .push_slice(self.tree_redeem_script().as_bytes())
                .into_script())
        } else {
            Err(MaxRateError::ForeignSource(outpoint.to_string()))
        }
    }
}

/// A spendable output owned by a [`WalletKey`].
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Source {
    pub outpoint: OutPoint,
    pub value: Amount,
    pub script_pubkey: Script,
    pub key: WalletKey,
}

impl Source {
    pub fn output(&self) -> TxOutput {
        TxOutput::new(self.value, self.script_pubkey.clone())
    }
}

/// Builds a one-input transaction paying `payees` and returning the rest to
/// the source key.
fn fan_out(source: &Source, payees: Vec<TxOutput>, fee_rate: u64) -> Result<Transaction, MaxRateError> {
    let script_sig = source.key.unlock(&source.script_pubkey, &source.outpoint)?;
    let mut tx = Transaction::new(
        vec![TxInput::new(source.outpoint, script_sig)],
        payees,
    );
    tx.outputs.push(TxOutput::new(Amount::ZERO, source.key.p2pkh()));
    let paid: u64 = tx.outputs.iter().map(|o| o.value.0).sum();
    let fee = tx.serialized_size() as u64 * fee_rate;
    let needed = paid + fee + change_dust();
    if source.value.0 < needed {
        return Err(MaxRateError::InsufficientFunds {
            needed: Amount(needed),
            available: source.value,
        });
    }
    tx.outputs.last_mut().expect("change pushed").value = Amount(source.value.0 - paid - fee);
    Ok(tx)
}

fn funding_with_values(
    source: &Source,
    scripts: &[DataScript],
    values: &[Amount],
    fee_rate: u64,
) -> Result<Transaction, MaxRateError> {
    let payees = scripts
        .iter()
        .zip(values)
        .map(|(s, &v)| TxOutput::new(v, s.script_pubkey()))
        .collect();
    fan_out(source, payees, fee_rate)
}

/// Funding transaction `index` of `plan`: one P2SH output per script, valued
/// at the fee its spending input owes, plus change.
pub fn build_funding_tx(
    plan: &ConstructPlan,
    index: usize,
    source: &Source,
    scripts: &[DataScript],
) -> Result<Transaction, MaxRateError> {
    let Some(&outputs) = plan.funding_outputs.get(index) else {
        return Err(MaxRateError::IndexMismatch(format!("no funding transaction {index}")));
    };
    if scripts.len() != outputs - 1 {
        return Err(MaxRateError::IndexMismatch(format!(
            "funding transaction {index} takes {} scripts, got {}",
            outputs - 1,
            scripts.len()
        )));
    }
    let range = plan.funding_chunks(index);
    let values = plan.chunk_output_values();
    funding_with_values(source, scripts, &values[range.start as usize..range.end as usize], plan.fee_rate)
}

/// OP_RETURN data of a spending transaction: tag, directive 0, then a
/// CompactSize-prefixed record of the first chunk index, the input count
/// and a 12-byte payload digest prefix.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct DataMarker {
    pub first_chunk: u32,
    pub input_count: u8,
    pub digest_prefix: [u8; 12],
}

impl DataMarker {
    pub const LEN: usize = 23;

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::LEN);
        out.extend_from_slice(DATA_TAG);
        out.push(0);
        out.push(17);
        out.extend_from_slice(&self.first_chunk.to_le_bytes());
        out.push(self.input_count);
        out.extend_from_slice(&self.digest_prefix);
        out
    }

    pub fn decode(data: &[u8]) -> Option<DataMarker> {
        if data.len() != Self::LEN || &data[..4] != DATA_TAG || data[4] != 0 || data[5] != 17 {
            return None;
        }
        Some(DataMarker {
            first_chunk: u32::from_le_bytes(data[6..10].try_into().ok()?),
            input_count: data[10],
            digest_prefix: data[11..23].try_into().ok()?,
        })
    }

    pub fn from_tx(tx: &Transaction) -> Option<DataMarker> {
        match tx.outputs.as_slice() {
            [out] => Self::decode(&out.script_pubkey.op_return_data()?),
            _ => None,
        }
    }
}

pub fn build_spending_txs(
    plan: &ConstructPlan,
    funding_txids: &[Txid],
    scripts: &[DataScript],
    payload_digest: &[u8; 32],
) -> Result<Vec<Transaction>, MaxRateError> {
    if scripts.len() as u64 != plan.chunk_count {
        return Err(MaxRateError::IndexMismatch(format!(
            "plan has {} chunks, got {} scripts",
            plan.chunk_count,
            scripts.len()
        )));
    }
    if funding_txids.len() as u64 != plan.funding_tx_count {
        return Err(MaxRateError::IndexMismatch(format!(
            "plan has {} funding transactions, got {} txids",
            plan.funding_tx_count,
            funding_txids.len()
        )));
    }
    let digest_prefix: [u8; 12] = payload_digest[..12].try_into().expect("12 bytes");
    let txs = scripts
        .chunks(MAX_INPUTS_PER_SPENDING_TX)
        .enumerate()
        .map(|(j, group)| {
            let first = j * MAX_INPUTS_PER_SPENDING_TX;
            let inputs = group
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let chunk = first + i;
                    let prev = OutPoint::new(
                        funding_txids[chunk / MAX_DATA_OUTPUTS],
                        (chunk % MAX_DATA_OUTPUTS) as u32,
                    );
                    TxInput::new(prev, s.script_sig.clone())
                })
                .collect();
            let marker = DataMarker {
                first_chunk: first as u32,
                input_count: group.len() as u8,
                digest_prefix,
            };
            Transaction::new(
                inputs,
                vec![TxOutput::new(Amount::ZERO, Script::new_op_return(&marker.encode()))],
            )
        })
        .collect();
    Ok(txs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparingTree {
    /// Root level first.
    pub levels: Vec<Vec<Transaction>>,
    /// Outputs that fund each funding transaction, in order.
    pub funding_sources: Vec<Source>,
}

pub fn build_preparing_tree(plan: &ConstructPlan, root_source: &Source) -> Result<PreparingTree, MaxRateError> {
    if plan.preparing_tree_depth == 0 {
        return Err(MaxRateError::NoTree);
    }
    let reqs = plan.preparing_requirements();
    let funding_reqs = plan.funding_requirements();
    let key = root_source.key;
    let tree_script = key.tree_script();

    let mut sources = vec![root_source.clone()];
    let mut levels = Vec::with_capacity(reqs.len());
    for (k, _) in reqs.iter().enumerate() {
        let child_reqs = reqs.get(k + 1).unwrap_or(&funding_reqs);
        let mut level = Vec::with_capacity(sources.len());
        let mut next = Vec::new();
        for (i, source) in sources.iter().enumerate() {
            let payees = child_reqs[plan.preparing_children(k, i)]
                .iter()
                .map(|&v| TxOutput::new(v, tree_script.clone()))
                .collect::<Vec<_>>();
            let n = payees.len();
            let tx = fan_out(source, payees, plan.fee_rate)?;
            let id = txid(&tx)?;
            next.extend((0..n).map(|vout| Source {
                outpoint: OutPoint::new(id, vout as u32),
                value: tx.outputs[vout].value,
                script_pubkey: tree_script.clone(),
                key,
            }));
            level.push(tx);
        }
        levels.push(level);
        sources = next;
    }
    Ok(PreparingTree { levels, funding_sources: sources })
}

/// Which construct stage a transaction belongs to.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Preparing,
    Funding,
    Spending,
}

/// A fully built max-rate write.
#[derive(Clone, Debug, PartialEq)]
pub struct Construct {
    pub plan: ConstructPlan,
    pub payload_digest: [u8; 32],
    pub source: Source,
    pub preparing: Vec<Vec<Transaction>>,
    pub funding: Vec<Transaction>,
    pub spending: Vec<Transaction>,
}

pub fn build_data_scripts(payload: &[u8]) -> Result<Vec<DataScript>, MaxRateError> {
    chunk_payload(payload)?.iter().map(build_data_script).collect()
}

pub fn build_construct(payload: &[u8], model: &CostModel, source: &Source) -> Result<Construct, MaxRateError> {
    let plan = plan_construct(payload.len() as u64, model)?;
    let scripts = build_data_scripts(payload)?;
    let digest = sha256(payload);

    let (preparing, funding_sources) = if plan.preparing_tree_depth == 0 {
        (Vec::new(), vec![source.clone()])
    } else {
        let tree = build_preparing_tree(&plan, source)?;
        (tree.levels, tree.funding_sources)
    };

    let values = plan.chunk_output_values();
    let funding = funding_sources
        .iter()
        .enumerate()
        .map(|(f, src)| {
            let r = plan.funding_chunks(f);
            let (a, b) = (r.start as usize, r.end as usize);
            funding_with_values(src, &scripts[a..b], &values[a..b], plan.fee_rate)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let funding_txids = funding.iter().map(txid).collect::<Result<Vec<_>, _>>()?;
    let spending = build_spending_txs(&plan, &funding_txids, &scripts, &digest)?;

    Ok(Construct {
        plan,
        payload_digest: digest,
        source: source.clone(),
        preparing,
        funding,
        spending,
    })
}

impl Construct {
    /// Every transaction with its role and confirmation epoch, in
    /// submission order.
    pub fn transactions(&self) -> impl Iterator<Item = (Role, u64, &Transaction)> {
        let depth = self.preparing.len() as u64;
        let prep = self
            .preparing
            .iter()
            .enumerate()
            .flat_map(|(k, level)| level.iter().map(move |tx| (Role::Preparing, k as u64, tx)));
        let fund = self.funding.iter().map(move |tx| (Role::Funding, depth, tx));
        let spend = self.spending.iter().map(move |tx| (Role::Spending, depth + 1, tx));
        prep.chain(fund).chain(spend)
    }

    pub fn root_txid(&self) -> Result<Txid, MaxRateError> {
        let root = self.preparing.first().and_then(|l| l.first()).unwrap_or(&self.funding[0]);
        Ok(txid(root)?)
    }

    pub fn total_size(&self) -> u64 {
        self.transactions().map(|(_, _, tx)| tx.serialized_size() as u64).sum()
    }

    /// Payload bytes over the serialized bytes of every construct transaction.
    pub fn measured_goodput(&self) -> f64 {
        self.plan.payload_size as f64 / self.total_size() as f64
    }

    /// Outputs spendable by construct transactions, for fee evaluation.
    pub fn prevouts(&self) -> Result<HashMap<OutPoint, TxOutput>, MaxRateError> {
        let mut map = HashMap::new();
        map.insert(self.source.outpoint, self.source.output());
        for (_, _, tx) in self.transactions() {
            let id = txid(tx)?;
            for (i, out) in tx.outputs.iter().enumerate() {
                map.insert(OutPoint::new(id, i as u32), out.clone());
            }
        }
        Ok(map)
    }

    /// Fee actually paid by all construct transactions.
    pub fn total_fee(&self) -> Result<Amount, MaxRateError> {
        let prevouts = self.prevouts()?;
        let mut fee = 0u64;
        for (_, _, tx) in self.transactions() {
            let inputs: u64 = tx
                .inputs
                .iter()
                .map(|i| prevouts[&i.previous_output].value.0)
                .sum();
            fee += inputs - tx.total_output_value().0;
        }
        Ok(Amount(fee))
    }

    pub fn reassemble(&self) -> Result<Vec<u8>, MaxRateError> {
        let data = reassemble(&self.spending)?;
        if sha256(&data) != self.payload_digest {
            return Err(MaxRateError::DigestMismatch);
        }
        Ok(data)
    }
}

/// Concatenates the chunks carried by a set of spending transactions, in
/// chunk order. Transactions may be given in any order.
pub fn reassemble(spending: &[Transaction]) -> Result<Vec<u8>, MaxRateError> {
    let mut marked = spending
        .iter()
        .map(|tx| {
            DataMarker::from_tx(tx)
                .map(|m| (m, tx))
                .ok_or_else(|| MaxRateError::NotDataScript("spending transaction lacks a data marker".into()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    marked.sort_by_key(|(m, _)| m.first_chunk);
    let mut out = Vec::new();
    let mut expected = 0u32;
    for (m, tx) in marked {
        if m.first_chunk != expected || m.input_count as usize != tx.inputs.len() {
            return Err(MaxRateError::MissingChunks { at: expected });
        }
        for input in &tx.inputs {
            out.extend(extract_chunk(&input.script_sig)?);
        }
        expected += m.input_count as u32;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::standard::check_standard;
    use crate::maxrate::data_script::verify_spend;
    use crate::maxrate::plan::{WALLET_INPUT_LEN, TREE_INPUT_LEN};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn source(value: u64) -> Source {
        let key = WalletKey::from_seed(b"test");
        Source {
            outpoint: OutPoint::new(Txid([9; 32]), 0),
            value: Amount(value),
            script_pubkey: key.p2pkh(),
            key,
        }
    }

    fn payload(n: usize, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen()).collect()
    }

    fn all_standard(c: &Construct) {
        let prevouts = c.prevouts().unwrap();
        for (role, _, tx) in c.transactions() {
            let r = check_standard(tx, Some(&prevouts));
            assert!(r.passed, "{role:?}: {:?}", r.violations);
            assert!(r.unevaluated.is_empty());
            assert!(r.fee_rate.unwrap() >= 1.0);
        }
    }

    #[test]
    fn input_sizes_match_constants() {
        let key = WalletKey::from_seed(b"k");
        let op = OutPoint::new(Txid([1; 32]), 3);
        let p2pkh = TxInput::new(op, key.unlock(&key.p2pkh(), &op).unwrap());
        let tree = TxInput::new(op, key.unlock(&key.tree_script(), &op).unwrap());
        assert_eq!(p2pkh.serialized_size(), WALLET_INPUT_LEN);
        assert_eq!(tree.serialized_size(), TREE_INPUT_LEN);
        assert!(crate::codec::verify_input(&p2pkh.script_sig, &key.p2pkh()).is_ok());
        assert!(crate::codec::verify_input(&tree.script_sig, &key.tree_script()).is_ok());
    }

    #[test]
    fn small_construct_round_trip() {
        let data = payload(10_000, 1);
        let c = build_construct(&data, &CostModel::default(), &source(1_000_000)).unwrap();
        assert_eq!(c.funding.len(), 1);
        assert_eq!(c.spending.len(), 1);
        assert_eq!(c.reassemble().unwrap(), data);
        assert_eq!(c.total_size(), c.plan.construct_total_size);
        assert_eq!(c.total_fee().unwrap(), c.plan.total_fee);
        all_standard(&c);
        let prevouts = c.prevouts().unwrap();
        let r = check_standard(&c.spending[0], Some(&prevouts));
        assert_eq!(r.fee_rate, Some(1.0));
    }

    #[test]
    fn built_sizes_match_plan() {
        let data = payload(400_000, 2);
        let c = build_construct(&data, &CostModel::default(), &source(10_000_000)).unwrap();
        let sizes: Vec<usize> = c.spending.iter().map(|t| t.serialized_size()).collect();
        assert_eq!(sizes, c.plan.spending_tx_sizes);
        assert_eq!(sizes[0], 99_931);
        assert_eq!(c.funding[0].serialized_size(), c.plan.funding_tx_sizes[0]);
    }

    #[test]
    fn funding_outputs_verify_against_spending_inputs() {
        let data = payload(200_000, 3);
        let c = build_construct(&data, &CostModel::default(), &source(10_000_000)).unwrap();
        let prevouts = c.prevouts().unwrap();
        for tx in &c.spending {
            for input in &tx.inputs {
                let out = &prevouts[&input.previous_output];
                assert!(verify_spend(out, &input.script_sig));
            }
        }
    }

    #[test]
    fn change_balances() {
        let data = payload(100_000, 4);
        let src = source(5_000_000);
        let c = build_construct(&data, &CostModel::default(), &src).unwrap();
        let f = &c.funding[0];
        let funded: u64 = f.outputs[..f.outputs.len() - 1].iter().map(|o| o.value.0).sum();
        let change = f.outputs.last().unwrap().value.0;
        assert_eq!(change, 5_000_000 - funded - f.serialized_size() as u64);
        let spend_fees: u64 = c.spending.iter().map(|t| t.serialized_size() as u64).sum();
        assert_eq!(funded, spend_fees);
    }

    #[test]
    fn insufficient_funds_names_shortfall() {
        let data = payload(100_000, 5);
        let err = build_construct(&data, &CostModel::default(), &source(1_000)).unwrap_err();
        match err {
            MaxRateError::InsufficientFunds { needed, available } => {
                assert_eq!(available, Amount(1_000));
                assert!(needed.0 > 100_000);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn exact_requirement_suffices() {
        let data = payload(50_000, 6);
        let plan = plan_construct(50_000, &CostModel::default()).unwrap();
        let c = build_construct(&data, &CostModel::default(), &source(plan.required_source_value.0)).unwrap();
        assert_eq!(c.funding[0].outputs.last().unwrap().value.0, 546);
        assert!(build_construct(&data, &CostModel::default(), &source(plan.required_source_value.0 - 1)).is_err());
    }

    #[test]
    fn two_level_construct() {
        let data = payload(4_603_649 + 1_000, 7);
        let src = source(100_000_000);
        let c = build_construct(&data, &CostModel::default(), &src).unwrap();
        assert_eq!(c.preparing.len(), 1);
        assert_eq!(c.preparing[0].len(), 1);
        assert_eq!(c.preparing[0][0].outputs.len(), 3);
        assert_eq!(c.funding.len(), 2);
        assert_eq!(c.reassemble().unwrap(), data);
        assert_eq!(c.total_size(), c.plan.construct_total_size);
        assert_eq!(c.total_fee().unwrap(), c.plan.total_fee);
        all_standard(&c);
        let epochs: Vec<u64> = c.transactions().map(|(_, e, _)| e).collect();
        assert!(epochs.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*epochs.last().unwrap(), 2);
    }

    #[test]
    fn reassembly_ignores_order() {
        let data = payload(300_000, 8);
        let c = build_construct(&data, &CostModel::default(), &source(10_000_000)).unwrap();
        let mut txs = c.spending.clone();
        txs.reverse();
        assert_eq!(reassemble(&txs).unwrap(), data);
        txs.remove(1);
        assert!(matches!(reassemble(&txs), Err(MaxRateError::MissingChunks { .. })));
    }

    #[test]
    fn tiny_payload_overpays_to_clear_dust() {
        let data = payload(10, 9);
        let c = build_construct(&data, &CostModel::default(), &source(100_000)).unwrap();
        let out = &c.funding[0].outputs[0];
        assert_eq!(out.value, Amount(540));
        assert!(c.spending[0].serialized_size() < 540);
        all_standard(&c);
    }

    #[test]
    fn marker_round_trip() {
        let m = DataMarker { first_chunk: 118, input_count: 59, digest_prefix: [3; 12] };
        let enc = m.encode();
        assert_eq!(enc.len(), DataMarker::LEN);
        assert_eq!(DataMarker::decode(&enc), Some(m));
        assert_eq!(DataMarker::decode(&enc[1..]), None);
    }

    #[test]
    fn wrong_script_count_rejected() {
        let plan = plan_construct(5_000, &CostModel::default()).unwrap();
        let scripts = build_data_scripts(&payload(5_000, 10)).unwrap();
        assert!(matches!(
            build_funding_tx(&plan, 0, &source(1_000_000), &scripts[..2]),
            Err(MaxRateError::IndexMismatch(_))
        ));
        assert!(build_funding_tx(&plan, 0, &source(1_000_000), &scripts).is_ok());
        assert!(matches!(
            build_spending_txs(&plan, &[], &scripts, &[0; 32]),
            Err(MaxRateError::IndexMismatch(_))
        ));
        assert!(matches!(
            build_preparing_tree(&plan, &source(1)),
            Err(MaxRateError::NoTree)
        ));
    }
}
