//! The pool of unconfirmed transactions, ordered for block building.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use crate::codec::transaction::OutPoint;
use crate::codec::Txid;

use super::tx::{cmp_rate, SimTx};

#[derive(Clone, Debug, PartialEq)]
pub struct MempoolEntry {
    pub tx: SimTx,
    pub arrival_time: f64,
    pub seq: u64,
    /// Unconfirmed ancestors at admission: (count, total bytes), self excluded.
    pub ancestors: (usize, u64),
}

impl MempoolEntry {
    pub fn fee_rate(&self) -> f64 {
        self.tx.fee_rate()
    }

    fn key(&self) -> PriorityKey {
        PriorityKey {
            fee: self.tx.fee,
            size: self.tx.size,
            arrival: self.arrival_time,
            seq: self.seq,
            txid: self.tx.txid,
        }
    }
}

/// Sorts highest fee rate first, then earliest arrival, then admission order.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PriorityKey {
    fee: u64,
    size: u32,
    arrival: f64,
    seq: u64,
    pub(crate) txid: Txid,
}

impl Ord for PriorityKey {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_rate(other.fee, other.size, self.fee, self.size)
            .then(self.arrival.total_cmp(&other.arrival))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for PriorityKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for PriorityKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for PriorityKey {}

#[derive(Clone, Debug, Default)]
pub struct Mempool {
    entries: HashMap<Txid, MempoolEntry>,
    order: BTreeSet<PriorityKey>,
    spenders: HashMap<OutPoint, Vec<Txid>>,
    children: HashMap<Txid, BTreeSet<Txid>>,
    bytes: u64,
    maxrate_count: usize,
    maxrate_bytes: u64,
    next_seq: u64,
}

impl Mempool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    pub fn maxrate_count(&self) -> usize {
        self.maxrate_count
    }

    pub fn maxrate_bytes(&self) -> u64 {
        self.maxrate_bytes
    }

    pub fn contains(&self, txid: &Txid) -> bool {
        self.entries.contains_key(txid)
    }

    pub fn get(&self, txid: &Txid) -> Option<&MempoolEntry> {
        self.entries.get(txid)
    }

    /// Entries in block-building priority order.
    pub fn iter(&self) -> impl Iterator<Item = &MempoolEntry> {
        self.order.iter().map(|k| &self.entries[&k.txid])
    }

    pub(crate) fn keys(&self) -> impl Iterator<Item = &PriorityKey> {
        self.order.iter()
    }

    /// In-pool transactions whose outputs `tx` spends.
    pub fn parents(&self, tx: &SimTx) -> Vec<Txid> {
        let mut out: Vec<Txid> = tx
            .spends
            .iter()
            .map(|o| o.txid)
            .filter(|t| self.entries.contains_key(t))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Unconfirmed ancestors of `tx`: (count, total bytes), self excluded.
    pub fn ancestors(&self, tx: &SimTx) -> (usize, u64) {
        let mut seen = BTreeSet::new();
        let mut stack = self.parents(tx);
        while let Some(t) = stack.pop() {
            if seen.insert(t) {
                stack.extend(self.parents(&self.entries[&t].tx));
            }
        }
        let bytes = seen.iter().map(|t| self.entries[t].tx.size as u64).sum();
        (seen.len(), bytes)
    }

    /// Pool transactions already spending an outpoint `tx` spends.
    pub fn conflicts(&self, tx: &SimTx) -> Vec<Txid> {
        let mut out: Vec<Txid> = tx
            .spends
            .iter()
            .filter_map(|o| self.spenders.get(o))
            .flatten()
            .copied()
            .filter(|t| *t != tx.txid)
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn spenders_of(&self, outpoint: &OutPoint) -> &[Txid] {
        self.spenders.get(outpoint).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn insert(&mut self, tx: SimTx, arrival_time: f64) -> &MempoolEntry {
        let ancestors = self.ancestors(&tx);
        for p in self.parents(&tx) {
            self.children.entry(p).or_default().insert(tx.txid);
        }
        for o in &tx.spends {
            self.spenders.entry(*o).or_default().push(tx.txid);
        }
        self.bytes += tx.size as u64;
        if tx.class.is_maxrate() {
            self.maxrate_count += 1;
            self.maxrate_bytes += tx.size as u64;
        }
        let entry = MempoolEntry { tx, arrival_time, seq: self.next_seq, ancestors };
        self.next_seq += 1;
        self.order.insert(entry.key());
        let id = entry.tx.txid;
        self.entries.insert(id, entry);
        &self.entries[&id]
    }

    pub fn remove(&mut self, txid: &Txid) -> Option<MempoolEntry> {
        let entry = self.entries.remove(txid)?;
        self.order.remove(&entry.key());
        for o in &entry.tx.spends {
            if let Some(v) = self.spenders.get_mut(o) {
                v.retain(|t| t != txid);
                if v.is_empty() {
                    self.spenders.remove(o);
                }
            }
        }
        for p in self.parents(&entry.tx) {
            if let Some(c) = self.children.get_mut(&p) {
                c.remove(txid);
            }
        }
        self.children.remove(txid);
        self.bytes -= entry.tx.size as u64;
        if entry.tx.class.is_maxrate() {
            self.maxrate_count -= 1;
            self.maxrate_bytes -= entry.tx.size as u64;
        }
        Some(entry)
    }

    /// `txid` and every in-pool descendant, parents before children.
    pub fn with_descendants(&self, txid: &Txid) -> Vec<Txid> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        let mut queue = std::collections::VecDeque::from([*txid]);
        while let Some(t) = queue.pop_front() {
            if !self.entries.contains_key(&t) || !seen.insert(t) {
                continue;
            }
            out.push(t);
            if let Some(c) = self.children.get(&t) {
                queue.extend(c.iter().copied());
            }
        }
        out
    }
}
