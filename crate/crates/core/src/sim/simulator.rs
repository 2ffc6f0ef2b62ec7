//! The event loop: admission, block building and confirmation records.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::codec::script::Script;
use crate::codec::standard::{check_standard_with, input_value, Policy, PrevoutLookup, Rule};
use crate::codec::transaction::{txid, Amount, OutPoint, Transaction, TxInput, TxOutput};
use crate::codec::{sha256d, verify_input, Txid};
use crate::maxrate::{Source, WalletKey};

use super::chain::{Block, Chain, BLOCK_HEADER_LEN, MAX_BLOCK_SIZE};
use super::mempool::{Mempool, MempoolEntry};
use super::stats::{MempoolSample, TxRecord};
use super::tx::{SimTx, TxClass};

pub const MAX_ANCESTOR_COUNT: usize = 25;
pub const MAX_ANCESTOR_SIZE: u64 = 101_000;
/// Bytes reserved for the coinbase transaction of every block.
pub const COINBASE_LEN: u32 = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub epoch_seconds: f64,
    /// Draw exponential block intervals from this seed instead of using
    /// fixed epochs.
    pub exponential_seed: Option<u64>,
    pub max_block_size: u64,
    pub policy: Policy,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            epoch_seconds: 150.0,
            exponential_seed: None,
            max_block_size: MAX_BLOCK_SIZE,
            policy: Policy::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("rejected ({rule}): {reason}")]
pub struct Rejection {
    pub rule: Rule,
    pub reason: String,
}

impl Rejection {
    fn new(rule: Rule, reason: impl Into<String>) -> Rejection {
        Rejection { rule, reason: reason.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Admission {
    pub txid: Txid,
    /// Pool transactions spending the same outpoints; at most one side of
    /// each conflict can confirm.
    pub conflicts: Vec<Txid>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eviction {
    pub txid: Txid,
    pub height: u64,
    pub replaced_by: Txid,
}

struct View<'a> {
    utxo: &'a HashMap<OutPoint, TxOutput>,
    mempool: &'a Mempool,
}

impl PrevoutLookup for View<'_> {
    fn prevout(&self, outpoint: &OutPoint) -> Option<TxOutput> {
        if let Some(o) = self.utxo.get(outpoint) {
            return Some(o.clone());
        }
        let entry = self.mempool.get(&outpoint.txid)?;
        entry.tx.tx.as_ref()?.outputs.get(outpoint.vout as usize).cloned()
    }
}

#[derive(Clone, Debug)]
pub struct Simulator {
    pub config: SimConfig,
    now: f64,
    next_block_at: f64,
    rng: Option<ChaCha8Rng>,
    mempool: Mempool,
    chain: Chain,
    utxo: HashMap<OutPoint, TxOutput>,
    confirmed: HashSet<Txid>,
    records: Vec<TxRecord>,
    samples: Vec<MempoolSample>,
    evictions: Vec<Eviction>,
    grant_count: u64,
}

impl Default for Simulator {
    fn default() -> Self {
        Simulator::new(SimConfig::default())
    }
}

impl Simulator {
    pub fn new(config: SimConfig) -> Simulator {
        let mut sim = Simulator {
            rng: config.exponential_seed.map(ChaCha8Rng::seed_from_u64),
            config,
            now: 0.0,
            next_block_at: 0.0,
            mempool: Mempool::default(),
            chain: Chain::new(),
            utxo: HashMap::new(),
            confirmed: HashSet::new(),
            records: Vec::new(),
            samples: Vec::new(),
            evictions: Vec::new(),
            grant_count: 0,
        };
        sim.next_block_at = sim.interval();
        sim
    }

    fn interval(&mut self) -> f64 {
        let w = self.config.epoch_seconds;
        match &mut self.rng {
            Some(rng) => Exp::new(1.0 / w).expect("positive epoch").sample(rng),
            None => w,
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn next_block_at(&self) -> f64 {
        self.next_block_at
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn mempool(&self) -> &Mempool {
        &self.mempool
    }

    pub fn records(&self) -> &[TxRecord] {
        &self.records
    }

    pub fn samples(&self) -> &[MempoolSample] {
        &self.samples
    }

    pub fn evictions(&self) -> &[Eviction] {
        &self.evictions
    }

    pub fn is_confirmed(&self, txid: &Txid) -> bool {
        self.confirmed.contains(txid)
    }

    pub fn utxo(&self, outpoint: &OutPoint) -> Option<&TxOutput> {
        self.utxo.get(outpoint)
    }

    /// Looks an output up among confirmed and pool transactions.
    pub fn prevout(&self, outpoint: &OutPoint) -> Option<TxOutput> {
        View { utxo: &self.utxo, mempool: &self.mempool }.prevout(outpoint)
    }

    /// Outputs spendable right now, for fee and standardness evaluation.
    pub fn lookup(&self) -> impl PrevoutLookup + '_ {
        View { utxo: &self.utxo, mempool: &self.mempool }
    }

    /// Grants a confirmed output to `key`, outside of any block.
    pub fn fund(&mut self, key: &WalletKey, value: Amount) -> Source {
        self.grant_count += 1;
        let tx = Transaction::new(
            vec![TxInput::new(
                OutPoint::new(Txid::ZERO, u32::MAX),
                Script::builder().push_slice(&self.grant_count.to_le_bytes()).into_script(),
            )],
            vec![TxOutput::new(value, key.p2pkh())],
        );
        let id = txid(&tx).expect("grant serializes");
        let outpoint = OutPoint::new(id, 0);
        self.utxo.insert(outpoint, tx.outputs[0].clone());
        self.confirmed.insert(id);
        self.chain.grants.push(Arc::new(tx));
        Source { outpoint, value, script_pubkey: key.p2pkh(), key: *key }
    }

    /// Makes an existing outpoint spendable without its creating
    /// transaction, e.g. the source of an imported manifest. Not persisted
    /// with the chain.
    pub fn grant_output(&mut self, outpoint: OutPoint, output: TxOutput) {
        self.utxo.insert(outpoint, output);
    }

    /// Mines every block due up to `t`, then sets the clock to `t`.
    pub fn advance_to(&mut self, t: f64) {
        while self.next_block_at <= t {
            let at = self.next_block_at;
            self.mine_block(at);
        }
        if t > self.now {
            self.now = t;
        }
    }

    /// Mines the next scheduled block.
    pub fn mine_next(&mut self) -> &Block {
        let at = self.next_block_at;
        self.advance_to(at);
        self.chain.tip().expect("just mined")
    }

    /// Validates a real transaction and admits it at time `t`.
    pub fn submit_tx(&mut self, tx: Transaction, class: TxClass, t: f64) -> Result<Admission, Rejection> {
        self.advance_to(t);
        let id = txid(&tx).map_err(|e| Rejection::new(Rule::Size, e.to_string()))?;
        if self.mempool.contains(&id) || self.confirmed.contains(&id) {
            return Err(Rejection::new(Rule::Duplicate, format!("{id} already known")));
        }
        let view = View { utxo: &self.utxo, mempool: &self.mempool };
        for (i, input) in tx.inputs.iter().enumerate() {
            if view.prevout(&input.previous_output).is_none() {
                return Err(Rejection::new(
                    Rule::MissingInputs,
                    format!("input {i} spends unknown or spent {}", input.previous_output),
                ));
            }
        }
        let value_in = input_value(&tx, &view).expect("inputs resolved");
        let value_out = tx.total_output_value();
        if value_in < value_out {
            return Err(Rejection::new(
                Rule::NegativeFee,
                format!("outputs {value_out} exceed inputs {value_in}"),
            ));
        }
        let report = check_standard_with(&tx, Some(&view), &self.config.policy);
        if let Some(v) = report.violations.first() {
            return Err(Rejection::new(v.rule, v.reason.clone()));
        }
        for (i, input) in tx.inputs.iter().enumerate() {
            let prev = view.prevout(&input.previous_output).expect("resolved");
            if let Err(e) = verify_input(&input.script_sig, &prev.script_pubkey) {
                return Err(Rejection::new(Rule::ScriptVerify, format!("input {i}: {e}")));
            }
        }
        let fee = (value_in - value_out).0;
        let sim_tx = SimTx::from_transaction(tx, fee, class)
            .map_err(|e| Rejection::new(Rule::Size, e.to_string()))?;
        self.admit(sim_tx)
    }

    /// Admits a transaction that carries only sizes and fees. The fee floor,
    /// duplicate and unconfirmed-chain rules still apply.
    pub fn submit_sim(&mut self, tx: SimTx, t: f64) -> Result<Admission, Rejection> {
        self.advance_to(t);
        if self.mempool.contains(&tx.txid) || self.confirmed.contains(&tx.txid) {
            return Err(Rejection::new(Rule::Duplicate, format!("{} already known", tx.txid)));
        }
        let min = self.config.policy.min_fee(tx.size as usize).0;
        if tx.fee < min {
            return Err(Rejection::new(
                Rule::MinFee,
                format!("fee {} below minimum {min} for {} bytes", tx.fee, tx.size),
            ));
        }
        self.admit(tx)
    }

    fn admit(&mut self, tx: SimTx) -> Result<Admission, Rejection> {
        let (count, bytes) = self.mempool.ancestors(&tx);
        if count + 1 > MAX_ANCESTOR_COUNT {
            return Err(Rejection::new(
                Rule::ChainCount,
                format!("{} unconfirmed transactions in chain, limit {MAX_ANCESTOR_COUNT}", count + 1),
            ));
        }
        if bytes + tx.size as u64 > MAX_ANCESTOR_SIZE {
            return Err(Rejection::new(
                Rule::ChainSize,
                format!(
                    "unconfirmed chain of {} bytes, limit {MAX_ANCESTOR_SIZE}",
                    bytes + tx.size as u64
                ),
            ));
        }
        let conflicts = self.mempool.conflicts(&tx);
        let id = tx.txid;
        self.mempool.insert(tx, self.now);
        Ok(Admission { txid: id, conflicts })
    }

    /// Builds a block at time `t` from the pool: highest fee rate first,
    /// earlier arrival on ties, parents before children, at most one
    /// spender per outpoint.
    pub fn mine_block(&mut self, t: f64) -> &Block {
        self.samples.push(MempoolSample {
            time: t,
            count: self.mempool.len(),
            bytes: self.mempool.bytes(),
            maxrate_count: self.mempool.maxrate_count(),
            maxrate_bytes: self.mempool.maxrate_bytes(),
        });
        let height = self.chain.height();
        let coinbase = SimTx {
            txid: Txid(sha256d(&[b"coinbase".as_slice(), &height.to_le_bytes()].concat())),
            size: COINBASE_LEN,
            fee: 0,
            spends: vec![],
            n_outputs: 1,
            class: TxClass::Coinbase,
            payload_bytes: 0,
            writer: None,
            tx: None,
        };
        // header, coinbase and a 3-byte transaction count
        let mut room = self.config.max_block_size - BLOCK_HEADER_LEN - 3 - COINBASE_LEN as u64;
        let mut chosen: Vec<Txid> = Vec::new();
        let mut in_block: HashSet<Txid> = HashSet::new();
        let mut spent: HashSet<OutPoint> = HashSet::new();
        let smallest = self.mempool.iter().map(|e| e.tx.size as u64).min().unwrap_or(0);
        for _pass in 0..4 {
            let mut added = false;
            let mut deferred = false;
            for key in self.mempool.keys() {
                if room < smallest {
                    break;
                }
                if in_block.contains(&key.txid) {
                    continue;
                }
                let e = &self.mempool.get(&key.txid).expect("keyed entry");
                if e.tx.size as u64 > room {
                    continue;
                }
                if e.tx.spends.iter().any(|o| spent.contains(o)) {
                    continue;
                }
                if self.mempool.parents(&e.tx).iter().any(|p| !in_block.contains(p)) {
                    deferred = true;
                    continue;
                }
                room -= e.tx.size as u64;
                spent.extend(e.tx.spends.iter().copied());
                in_block.insert(key.txid);
                chosen.push(key.txid);
                added = true;
            }
            if !(added && deferred) {
                break;
            }
        }

        let mut txs = Vec::with_capacity(chosen.len() + 1);
        txs.push(coinbase);
        let mut entries: Vec<MempoolEntry> = Vec::with_capacity(chosen.len());
        for id in &chosen {
            entries.push(self.mempool.remove(id).expect("chosen from pool"));
        }
        for e in &entries {
            self.records.push(TxRecord {
                txid: e.tx.txid,
                class: e.tx.class,
                writer: e.tx.writer,
                size: e.tx.size,
                fee: e.tx.fee,
                submit_time: e.arrival_time,
                confirm_time: t,
                height,
            });
            self.confirmed.insert(e.tx.txid);
            if let Some(tx) = &e.tx.tx {
                for input in &tx.inputs {
                    self.utxo.remove(&input.previous_output);
                }
                for (i, out) in tx.outputs.iter().enumerate() {
                    if !out.script_pubkey.is_op_return() {
                        self.utxo.insert(OutPoint::new(e.tx.txid, i as u32), out.clone());
                    }
                }
            }
            txs.push(e.tx.clone());
        }

        // drop pool transactions that lost a double spend, with descendants
        let mut losers: BTreeSet<(Txid, Txid)> = BTreeSet::new();
        for e in &entries {
            for o in &e.tx.spends {
                for loser in self.mempool.spenders_of(o) {
                    losers.insert((*loser, e.tx.txid));
                }
            }
        }
        for (loser, winner) in losers {
            for id in self.mempool.with_descendants(&loser) {
                self.mempool.remove(&id);
                self.evictions.push(Eviction { txid: id, height, replaced_by: winner });
            }
        }

        let total_size = Block::size_of(&txs);
        self.chain.push(Block { height, timestamp: t, txs, total_size });
        self.now = self.now.max(t);
        self.next_block_at = t + self.interval();
        self.chain.tip().expect("pushed")
    }

    /// Confirmed outputs, in a stable order.
    pub fn utxo_snapshot(&self) -> Vec<(OutPoint, TxOutput)> {
        let mut v: Vec<_> = self.utxo.iter().map(|(k, v)| (*k, v.clone())).collect();
        v.sort_by_key(|(k, _)| *k);
        v
    }

    pub fn mempool_entries(&self) -> Vec<MempoolEntry> {
        self.mempool.iter().cloned().collect()
    }

    /// Rebuilds a simulator from persisted parts.
    pub fn restore(
        config: SimConfig,
        chain: Chain,
        utxo: Vec<(OutPoint, TxOutput)>,
        mempool: Vec<MempoolEntry>,
        now: f64,
        next_block_at: f64,
    ) -> Simulator {
        let mut sim = Simulator::new(config);
        sim.confirmed = chain
            .blocks_unlogged()
            .iter()
            .flat_map(|b| b.txs.iter().map(|t| t.txid))
            .chain(chain.grants.iter().map(|g| txid(g).expect("grant serializes")))
            .collect();
        sim.grant_count = chain.grants.len() as u64;
        sim.chain = chain;
        sim.utxo = utxo.into_iter().collect();
        let mut entries = mempool;
        entries.sort_by_key(|e| e.seq);
        for e in entries {
            sim.now = e.arrival_time;
            sim.mempool.insert(e.tx, e.arrival_time);
        }
        sim.now = now;
        sim.next_block_at = next_block_at;
        sim
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::standard::check_standard;
    use crate::maxrate::{build_construct, CostModel};

    fn key() -> WalletKey {
        WalletKey::from_seed(b"sim")
    }

    fn pay(source: &Source, value: u64, fee: u64) -> Transaction {
        let sig = source.key.unlock(&source.script_pubkey, &source.outpoint).unwrap();
        Transaction::new(
            vec![TxInput::new(source.outpoint, sig)],
            vec![TxOutput::new(Amount(source.value.0 - value - fee), source.key.p2pkh())]
                .into_iter()
                .chain((value > 0).then(|| TxOutput::new(Amount(value), Script::new_p2pkh(&[3; 20]))))
                .collect(),
        )
    }

    fn next_source(tx: &Transaction, key: WalletKey) -> Source {
        Source {
            outpoint: OutPoint::new(txid(tx).unwrap(), 0),
            value: tx.outputs[0].value,
            script_pubkey: tx.outputs[0].script_pubkey.clone(),
            key,
        }
    }

    fn synthetic(n: u64, fee: u64, size: u32, class: TxClass) -> SimTx {
        SimTx {
            txid: Txid(sha256d(&n.to_le_bytes())),
            size,
            fee,
            spends: vec![OutPoint::new(Txid(sha256d(b"prefunded")), n as u32)],
            n_outputs: 1,
            class,
            payload_bytes: if class == TxClass::Spending { size as u64 } else { 0 },
            writer: None,
            tx: None,
        }
    }

    #[test]
    fn twenty_sixth_chained_tx_rejected() {
        let mut sim = Simulator::default();
        let mut src = sim.fund(&key(), Amount(10_000_000));
        for i in 0..25 {
            let tx = pay(&src, 0, 1_000);
            sim.submit_tx(tx.clone(), TxClass::Financial, 1.0).unwrap_or_else(|e| panic!("{i}: {e}"));
            src = next_source(&tx, key());
        }
        let err = sim.submit_tx(pay(&src, 0, 1_000), TxClass::Financial, 1.0).unwrap_err();
        assert_eq!(err.rule, Rule::ChainCount);
    }

    #[test]
    fn zero_fee_rejected() {
        let mut sim = Simulator::default();
        let src = sim.fund(&key(), Amount(10_000_000));
        let err = sim.submit_tx(pay(&src, 0, 0), TxClass::Financial, 0.0).unwrap_err();
        assert_eq!(err.rule, Rule::MinFee);
        let err = sim.submit_sim(synthetic(1, 0, 250, TxClass::Financial), 0.0).unwrap_err();
        assert_eq!(err.rule, Rule::MinFee);
    }

    #[test]
    fn duplicate_and_missing() {
        let mut sim = Simulator::default();
        let src = sim.fund(&key(), Amount(10_000_000));
        let tx = pay(&src, 0, 500);
        sim.submit_tx(tx.clone(), TxClass::Financial, 0.0).unwrap();
        assert_eq!(sim.submit_tx(tx.clone(), TxClass::Financial, 0.0).unwrap_err().rule, Rule::Duplicate);
        sim.mine_next();
        assert_eq!(sim.submit_tx(tx, TxClass::Financial, 200.0).unwrap_err().rule, Rule::Duplicate);
        // the funded output is now spent
        let again = pay(&src, 0, 600);
        assert_eq!(sim.submit_tx(again, TxClass::Financial, 200.0).unwrap_err().rule, Rule::MissingInputs);
    }

    #[test]
    fn spending_before_funding_confirms() {
        let mut sim = Simulator::default();
        let src = sim.fund(&key(), Amount(10_000_000));
        let data = vec![5u8; 3_000];
        let c = build_construct(&data, &CostModel::default(), &src).unwrap();
        let f = sim.submit_tx(c.funding[0].clone(), TxClass::Funding, 0.0).unwrap();
        assert!(f.conflicts.is_empty());
        let s = sim.submit_tx(c.spending[0].clone(), TxClass::Spending, 0.0);
        assert!(s.is_ok(), "{s:?}");
        let block = sim.mine_next();
        assert_eq!(block.txs.len(), 3);
        assert_eq!(block.txs[1].class, TxClass::Funding);
        assert_eq!(block.txs[2].payload_bytes, 3_000);
    }

    #[test]
    fn oversized_unconfirmed_chain_rejected() {
        let mut sim = Simulator::default();
        let src = sim.fund(&key(), Amount(100_000_000));
        let data = vec![5u8; 200_000];
        let c = build_construct(&data, &CostModel::default(), &src).unwrap();
        sim.submit_tx(c.funding[0].clone(), TxClass::Funding, 0.0).unwrap();
        let err = sim.submit_tx(c.spending[0].clone(), TxClass::Spending, 0.0).unwrap_err();
        assert_eq!(err.rule, Rule::ChainSize);
        sim.mine_next();
        let prevouts = c.prevouts().unwrap();
        assert!(check_standard(&c.spending[0], Some(&prevouts)).passed);
        sim.submit_tx(c.spending[0].clone(), TxClass::Spending, 160.0).unwrap();
    }

    #[test]
    fn two_megabytes_of_maxrate_fill_two_blocks() {
        let mut sim = Simulator::default();
        for i in 0..20 {
            sim.submit_sim(synthetic(i, 99_931, 99_931, TxClass::Spending), 0.0).unwrap();
        }
        let a = sim.mine_next().clone();
        let b = sim.mine_next().clone();
        let c = sim.mine_next().clone();
        assert_eq!(a.txs.len() - 1, 10);
        assert_eq!(b.txs.len() - 1, 10);
        assert_eq!(c.txs.len(), 1);
        assert!(a.total_size <= MAX_BLOCK_SIZE && a.total_size > 999_000);
    }

    #[test]
    fn financial_before_maxrate() {
        let mut sim = Simulator::default();
        for i in 0..12 {
            sim.submit_sim(synthetic(i, 99_931, 99_931, TxClass::Spending), 0.0).unwrap();
        }
        for i in 100..400 {
            sim.submit_sim(synthetic(i, 600, 500, TxClass::Financial), 10.0).unwrap();
        }
        let b = sim.mine_next();
        assert_eq!(b.count(TxClass::Financial), 300);
        assert_eq!(b.count(TxClass::Spending), 8);
    }

    #[test]
    fn empty_pool_gives_empty_block() {
        let mut sim = Simulator::default();
        let b = sim.mine_next();
        assert_eq!(b.txs.len(), 1);
        assert_eq!(b.total_size, 80 + 1 + 200);
    }

    #[test]
    fn tie_rule_and_eviction() {
        let mut sim = Simulator::default();
        let src = sim.fund(&key(), Amount(1_000_000));
        let first = pay(&src, 10_000, 500);
        let second = pay(&src, 20_000, 500);
        sim.submit_tx(first.clone(), TxClass::Financial, 1.0).unwrap();
        let adm = sim.submit_tx(second.clone(), TxClass::Attack, 2.0).unwrap();
        assert_eq!(adm.conflicts, vec![txid(&first).unwrap()]);
        sim.mine_next();
        assert!(sim.is_confirmed(&txid(&first).unwrap()));
        assert!(!sim.mempool().contains(&txid(&second).unwrap()));
        assert_eq!(sim.evictions()[0].txid, txid(&second).unwrap());
    }

    #[test]
    fn exponential_mode_is_seeded() {
        let cfg = SimConfig { exponential_seed: Some(7), ..SimConfig::default() };
        let times = |cfg: &SimConfig| {
            let mut s = Simulator::new(cfg.clone());
            (0..50).map(|_| s.mine_next().timestamp).collect::<Vec<_>>()
        };
        let a = times(&cfg);
        assert_eq!(a, times(&cfg));
        let mean = a.last().unwrap() / 50.0;
        assert!(mean > 75.0 && mean < 300.0, "{mean}");
        assert!(a.windows(2).any(|w| (w[1] - w[0] - 150.0).abs() > 1.0));
    }
}
