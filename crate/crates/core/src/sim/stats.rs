//! Confirmation records, utilization and summary statistics.

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::codec::Txid;

use super::chain::Block;
use super::tx::TxClass;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxRecord {
    pub txid: Txid,
    pub class: TxClass,
    pub writer: Option<u32>,
    pub size: u32,
    pub fee: u64,
    pub submit_time: f64,
    pub confirm_time: f64,
    pub height: u64,
}

impl TxRecord {
    pub fn delay(&self) -> f64 {
        self.confirm_time - self.submit_time
    }

    pub fn fee_rate(&self) -> f64 {
        self.fee as f64 / self.size as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MempoolSample {
    pub time: f64,
    pub count: usize,
    pub bytes: u64,
    pub maxrate_count: usize,
    pub maxrate_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockUtilization {
    pub height: u64,
    pub timestamp: f64,
    pub size: u64,
    pub tx_count: usize,
    pub payload_txs: usize,
    pub payload_tx_bytes: u64,
    pub payload_bytes: u64,
    /// Bytes of payload-carrying transactions over block size.
    pub space: f64,
    /// Payload data bytes over block size.
    pub payload_space: f64,
    /// Payload-carrying transactions over all transactions, coinbase included.
    pub txn: f64,
}

fn utilization(block: &Block, is_payload: impl Fn(&super::tx::SimTx) -> bool) -> BlockUtilization {
    let payload: Vec<_> = block.txs.iter().filter(|t| is_payload(t)).collect();
    let payload_tx_bytes: u64 = payload.iter().map(|t| t.size as u64).sum();
    BlockUtilization {
        height: block.height,
        timestamp: block.timestamp,
        size: block.total_size,
        tx_count: block.txs.len(),
        payload_txs: payload.len(),
        payload_tx_bytes,
        payload_bytes: payload.iter().map(|t| t.payload_bytes).sum(),
        space: payload_tx_bytes as f64 / block.total_size as f64,
        payload_space: payload.iter().map(|t| t.payload_bytes).sum::<u64>() as f64 / block.total_size as f64,
        txn: payload.len() as f64 / block.txs.len() as f64,
    }
}

/// Utilization of each block, counting the listed transactions as payload.
pub fn compute_utilization(blocks: &[Block], payload_txids: &HashSet<Txid>) -> Vec<BlockUtilization> {
    blocks.iter().map(|b| utilization(b, |t| payload_txids.contains(&t.txid))).collect()
}

/// Utilization counting every transaction that carries payload bytes.
pub fn block_utilization(blocks: &[Block]) -> Vec<BlockUtilization> {
    blocks.iter().map(|b| utilization(b, |t| t.carries_payload())).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowUtilization {
    pub blocks: usize,
    pub space: f64,
    pub payload_space: f64,
    pub txn: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WriterOutcome {
    pub writer: u32,
    pub payload_bytes: u64,
    pub first_submit: f64,
    /// None while any of the writer's transactions is unconfirmed.
    pub last_confirm: Option<f64>,
    pub transactions: usize,
}

impl WriterOutcome {
    /// Groups confirmed records by writer. `payloads[w]` is writer w's
    /// payload size.
    pub fn collect(records: &[TxRecord], payloads: &[u64]) -> Vec<WriterOutcome> {
        let mut out: Vec<WriterOutcome> = payloads
            .iter()
            .enumerate()
            .map(|(w, &p)| WriterOutcome {
                writer: w as u32,
                payload_bytes: p,
                first_submit: f64::INFINITY,
                last_confirm: Some(f64::NEG_INFINITY),
                transactions: 0,
            })
            .collect();
        for r in records {
            let Some(o) = r.writer.and_then(|w| out.get_mut(w as usize)) else { continue };
            o.first_submit = o.first_submit.min(r.submit_time);
            o.last_confirm = o.last_confirm.map(|t| t.max(r.confirm_time));
            o.transactions += 1;
        }
        for o in &mut out {
            if o.transactions == 0 {
                o.first_submit = 0.0;
                o.last_confirm = None;
            }
        }
        out
    }

    /// Payload bytes per second from first submission to last confirmation.
    pub fn throughput(&self) -> Option<f64> {
        let end = self.last_confirm?;
        let span = end - self.first_submit;
        (span > 0.0).then(|| self.payload_bytes as f64 / span)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelaySummary {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

impl DelaySummary {
    pub fn of(values: &[f64]) -> DelaySummary {
        if values.is_empty() {
            return DelaySummary { count: 0, mean: 0.0, sd: 0.0, min: 0.0, p50: 0.0, p90: 0.0, p99: 0.0, max: 0.0 };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        DelaySummary {
            count: v.len(),
            mean,
            sd: var.sqrt(),
            min: v[0],
            p50: percentile(&v, 0.5),
            p90: percentile(&v, 0.9),
            p99: percentile(&v, 0.99),
            max: v[v.len() - 1],
        }
    }
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.len() == b.len() { 0.0 } else { 1.0 };
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub records: Vec<TxRecord>,
    pub blocks: Vec<BlockUtilization>,
    pub mempool: Vec<MempoolSample>,
    /// Transactions still unconfirmed when the run ended.
    pub unconfirmed: usize,
    pub rejected: usize,
    pub end_time: f64,
    #[serde(default)]
    pub writers: Vec<WriterOutcome>,
}

impl SimStats {
    pub fn delays(&self, classes: &[TxClass]) -> Vec<f64> {
        self.records.iter().filter(|r| classes.contains(&r.class)).map(TxRecord::delay).collect()
    }

    pub fn financial_delays(&self) -> Vec<f64> {
        self.delays(&[TxClass::Financial])
    }

    pub fn maxrate_delays(&self) -> Vec<f64> {
        self.delays(&[TxClass::Preparing, TxClass::Funding, TxClass::Spending])
    }

    pub fn summary(&self, classes: &[TxClass]) -> DelaySummary {
        DelaySummary::of(&self.delays(classes))
    }

    pub fn peak_mempool_bytes(&self) -> u64 {
        self.mempool.iter().map(|s| s.bytes).max().unwrap_or(0)
    }

    pub fn peak_maxrate(&self) -> (usize, u64) {
        let count = self.mempool.iter().map(|s| s.maxrate_count).max().unwrap_or(0);
        let bytes = self.mempool.iter().map(|s| s.maxrate_bytes).max().unwrap_or(0);
        (count, bytes)
    }

    /// Time of the last confirmation among the given classes.
    pub fn last_confirmation(&self, classes: &[TxClass]) -> Option<f64> {
        self.records
            .iter()
            .filter(|r| classes.contains(&r.class))
            .map(|r| r.confirm_time)
            .max_by(f64::total_cmp)
    }

    /// Mean utilization over the blocks from the first to the last one
    /// carrying payload.
    pub fn writing_window_utilization(&self) -> Option<WindowUtilization> {
        let first = self.blocks.iter().position(|b| b.payload_txs > 0)?;
        let last = self.blocks.iter().rposition(|b| b.payload_txs > 0)?;
        let window = &self.blocks[first..=last];
        let n = window.len() as f64;
        let mean = |f: fn(&BlockUtilization) -> f64| window.iter().map(f).sum::<f64>() / n;
        Some(WindowUtilization {
            blocks: window.len(),
            space: mean(|b| b.space),
            payload_space: mean(|b| b.payload_space),
            txn: mean(|b| b.txn),
        })
    }

    pub fn write_tx_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        #[derive(Serialize)]
        struct Row<'a> {
            txid: String,
            class: &'a str,
            writer: Option<u32>,
            size: u32,
            fee_rate: f64,
            submit_time: f64,
            confirm_time: f64,
            delay: f64,
            height: u64,
        }
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(Row {
                txid: r.txid.to_hex(),
                class: r.class.name(),
                writer: r.writer,
                size: r.size,
                fee_rate: r.fee_rate(),
                submit_time: r.submit_time,
                confirm_time: r.confirm_time,
                delay: r.delay(),
                height: r.height,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_block_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for b in &self.blocks {
            w.serialize(b)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::tx::SimTx;

    fn tx(n: u8, size: u32, payload: u64) -> SimTx {
        SimTx {
            txid: Txid([n; 32]),
            size,
            fee: size as u64,
            spends: vec![],
            n_outputs: 1,
            class: if payload > 0 { TxClass::Spending } else { TxClass::Coinbase },
            payload_bytes: payload,
            writer: None,
            tx: None,
        }
    }

    #[test]
    fn ten_full_spending_txs() {
        let mut txs = vec![tx(0, 200, 0)];
        txs.extend((1..=10).map(|n| tx(n, 99_931, 92_512)));
        let size = Block::size_of(&txs);
        let block = Block { height: 0, timestamp: 0.0, txs, total_size: size };
        let u = &block_utilization(std::slice::from_ref(&block))[0];
        assert!(u.space >= 0.999, "{}", u.space);
        assert!((u.txn - 10.0 / 11.0).abs() < 1e-12);
        let ids: HashSet<Txid> = (1..=10).map(|n| Txid([n; 32])).collect();
        assert_eq!(compute_utilization(std::slice::from_ref(&block), &ids)[0], *u);
        let none = compute_utilization(&[block], &HashSet::new());
        assert_eq!((none[0].space, none[0].txn), (0.0, 0.0));
    }

    #[test]
    fn ks_properties() {
        let a: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(ks_distance(&a, &a), 0.0);
        let b: Vec<f64> = (1000..1100).map(f64::from).collect();
        assert_eq!(ks_distance(&a, &b), 1.0);
        let c: Vec<f64> = (50..150).map(f64::from).collect();
        assert!((ks_distance(&a, &c) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn summary_values() {
        let s = DelaySummary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((s.mean, s.min, s.max, s.p50), (2.5, 1.0, 4.0, 2.0));
        assert_eq!(DelaySummary::of(&[]).count, 0);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let stats = SimStats {
            records: vec![TxRecord {
                txid: Txid([1; 32]),
                class: TxClass::Financial,
                writer: None,
                size: 250,
                fee: 500,
                submit_time: 10.0,
                confirm_time: 150.0,
                height: 0,
            }],
            ..SimStats::default()
        };
        let mut out = Vec::new();
        stats.write_tx_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "txid,class,writer,size,fee_rate,submit_time,confirm_time,delay,height"
        );
        assert!(lines.next().unwrap().contains(",financial,,250,2.0,10.0,150.0,140.0,0"));
    }
}
