//! Mined blocks and the record of how they were read.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::codec::transaction::Transaction;
use crate::codec::{varint_len, Txid};

use super::tx::{SimTx, TxClass};

pub const MAX_BLOCK_SIZE: u64 = 1_000_000;
pub const BLOCK_HEADER_LEN: u64 = 80;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub timestamp: f64,
    /// Coinbase first.
    pub txs: Vec<SimTx>,
    pub total_size: u64,
}

impl Block {
    pub fn size_of(txs: &[SimTx]) -> u64 {
        BLOCK_HEADER_LEN + varint_len(txs.len() as u64) as u64 + txs.iter().map(|t| t.size as u64).sum::<u64>()
    }

    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.txs.iter().filter_map(|t| t.tx.as_deref())
    }

    pub fn payload_txs(&self) -> impl Iterator<Item = &SimTx> {
        self.txs.iter().filter(|t| t.carries_payload())
    }

    pub fn count(&self, class: TxClass) -> usize {
        self.txs.iter().filter(|t| t.class == class).count()
    }
}

/// Counts how the chain was read. Sequential block reads are the only
/// access pattern that hides what a reader is interested in.
#[derive(Debug, Default)]
pub struct AccessLog {
    full_reads: AtomicU64,
    selective_fetches: AtomicU64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AccessCounts {
    pub full_reads: u64,
    pub selective_fetches: u64,
}

impl AccessLog {
    pub fn counts(&self) -> AccessCounts {
        AccessCounts {
            full_reads: self.full_reads.load(Ordering::Relaxed),
            selective_fetches: self.selective_fetches.load(Ordering::Relaxed),
        }
    }
}

impl Clone for AccessLog {
    fn clone(&self) -> Self {
        let c = self.counts();
        AccessLog {
            full_reads: AtomicU64::new(c.full_reads),
            selective_fetches: AtomicU64::new(c.selective_fetches),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Chain {
    blocks: Vec<Block>,
    /// Outputs granted outside of blocks, e.g. simulator funding.
    pub grants: Vec<Arc<Transaction>>,
    #[serde(skip)]
    access: AccessLog,
}

impl Chain {
    pub fn new() -> Chain {
        Chain::default()
    }

    pub fn from_blocks(blocks: Vec<Block>, grants: Vec<Arc<Transaction>>) -> Chain {
        Chain { blocks, grants, access: AccessLog::default() }
    }

    /// Number of mined blocks; the next block gets this height.
    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn tip(&self) -> Option<&Block> {
        self.blocks.last()
    }

    pub(crate) fn push(&mut self, block: Block) {
        self.blocks.push(block);
    }

    /// Every block from `height` on, as one sequential read.
    pub fn read_from(&self, height: u64) -> &[Block] {
        self.access.full_reads.fetch_add(1, Ordering::Relaxed);
        &self.blocks[(height as usize).min(self.blocks.len())..]
    }

    pub fn read_all(&self) -> &[Block] {
        self.read_from(0)
    }

    /// Looks up one transaction by id. Recorded as a selective fetch.
    pub fn fetch_tx(&self, txid: &Txid) -> Option<Arc<Transaction>> {
        self.access.selective_fetches.fetch_add(1, Ordering::Relaxed);
        self.blocks
            .iter()
            .flat_map(|b| &b.txs)
            .find(|t| t.txid == *txid)
            .and_then(|t| t.tx.clone())
    }

    /// Blocks without touching the access log, for statistics.
    pub fn blocks_unlogged(&self) -> &[Block] {
        &self.blocks
    }

    pub fn access_counts(&self) -> AccessCounts {
        self.access.counts()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn access_log_counts() {
        let chain = Chain::new();
        assert_eq!(chain.read_all().len(), 0);
        assert_eq!(chain.read_from(5).len(), 0);
        assert!(chain.fetch_tx(&Txid::ZERO).is_none());
        assert_eq!(chain.access_counts(), AccessCounts { full_reads: 2, selective_fetches: 1 });
    }
}
