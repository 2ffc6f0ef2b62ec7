//! Workload files and the deterministic replay loop.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use crate::codec::transaction::{OutPoint, Transaction};
use crate::codec::{sha256d, Txid};
use crate::maxrate::{plan_construct, ConstructPlan, CostModel, Manifest, Role, MAX_DATA_OUTPUTS};

use super::simulator::{SimConfig, Simulator};
use super::stats::{block_utilization, SimStats, WriterOutcome};
use super::tx::{SimTx, TxClass};

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("invalid workload: {0}")]
    Invalid(String),
    #[error("workload parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Plan(#[from] crate::maxrate::MaxRateError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WriterMode {
    /// Funding outputs already confirmed; only spending transactions are
    /// submitted, each at its own time inside the window.
    Prefunded,
    /// The whole construct is submitted level by level, each transaction
    /// released once its parents confirm.
    FundThenSpend,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WriterGroup {
    pub count: u32,
    pub payload_bytes: u64,
    pub mode: WriterMode,
    #[serde(default)]
    pub start: f64,
    #[serde(default)]
    pub window_seconds: f64,
    #[serde(default = "one")]
    pub fee_rate: u64,
}

fn one() -> u64 {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinancialTx {
    pub size: u32,
    pub fee_rate: f64,
    pub arrival: f64,
}

impl FinancialTx {
    pub fn fee(&self) -> u64 {
        (self.size as f64 * self.fee_rate).ceil() as u64
    }
}

/// Poisson arrivals with lognormal sizes and fee rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticTrace {
    pub rate_per_second: f64,
    pub duration_seconds: f64,
    pub mean_size: f64,
    pub size_sigma: f64,
    pub min_size: u32,
    pub max_size: u32,
    pub median_fee_rate: f64,
    pub fee_rate_sigma: f64,
    /// Floor for drawn rates; must stay above 1 lit/B.
    pub min_fee_rate: f64,
    /// Transactions forced to exactly 1 lit/B.
    pub min_rate_count: usize,
}

impl Default for SyntheticTrace {
    fn default() -> Self {
        SyntheticTrace {
            rate_per_second: 0.16,
            duration_seconds: 36.0 * 3600.0,
            mean_size: 500.0,
            size_sigma: 0.6,
            min_size: 110,
            max_size: 50_000,
            median_fee_rate: 20.0,
            fee_rate_sigma: 1.0,
            min_fee_rate: 1.05,
            min_rate_count: 4,
        }
    }
}

impl SyntheticTrace {
    pub fn generate(&self, seed: u64) -> Vec<FinancialTx> {
        let mut rng = stream(seed, 1);
        let gap = Exp::new(self.rate_per_second).expect("positive rate");
        let mu = self.mean_size.ln() - self.size_sigma * self.size_sigma / 2.0;
        let size = LogNormal::new(mu, self.size_sigma).expect("valid sigma");
        let rate = LogNormal::new(self.median_fee_rate.ln(), self.fee_rate_sigma).expect("valid sigma");
        let mut out = Vec::new();
        let mut t = gap.sample(&mut rng);
        while t < self.duration_seconds {
            let s = (size.sample(&mut rng).round() as u32).clamp(self.min_size, self.max_size);
            let r = rate.sample(&mut rng).max(self.min_fee_rate);
            out.push(FinancialTx { size: s, fee_rate: r, arrival: t });
            t += gap.sample(&mut rng);
        }
        for _ in 0..self.min_rate_count.min(out.len()) {
            let i = rng.gen_range(0..out.len());
            out[i].fee_rate = 1.0;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinancialSpec {
    #[serde(default)]
    pub trace: Vec<FinancialTx>,
    #[serde(default)]
    pub synthetic: Option<SyntheticTrace>,
    /// Each trace transaction is replayed this many times, copies spread
    /// uniformly over the trace span.
    #[serde(default = "one_u32")]
    pub multiplier: u32,
}

fn one_u32() -> u32 {
    1
}

impl Default for FinancialSpec {
    fn default() -> Self {
        FinancialSpec { trace: Vec::new(), synthetic: None, multiplier: 1 }
    }
}

impl FinancialSpec {
    /// The explicit trace followed by the synthetic one, multiplied.
    pub fn expand(&self, seed: u64) -> Vec<FinancialTx> {
        let mut base = self.trace.clone();
        if let Some(s) = &self.synthetic {
            base.extend(s.generate(seed));
        }
        if self.multiplier <= 1 || base.is_empty() {
            return base;
        }
        let span = match &self.synthetic {
            Some(s) => s.duration_seconds,
            None => base.iter().map(|t| t.arrival).fold(0.0, f64::max),
        };
        let mut rng = stream(seed, 2);
        let mut out = Vec::with_capacity(base.len() * self.multiplier as usize);
        for tx in &base {
            for _ in 0..self.multiplier {
                out.push(FinancialTx { arrival: rng.gen_range(0.0..=span), ..*tx });
            }
        }
        out
    }
}

/// A built construct replayed from its manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestReplay {
    pub manifest: Manifest,
    /// Value of the output the root transaction spends.
    pub source_value: u64,
    #[serde(default)]
    pub start: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epoch")]
    pub epoch_seconds: f64,
    /// Stop after this many blocks.
    #[serde(default)]
    pub max_epochs: Option<u64>,
    #[serde(default)]
    pub exponential_blocks: bool,
    #[serde(default)]
    pub writers: Vec<WriterGroup>,
    #[serde(default)]
    pub constructs: Vec<ManifestReplay>,
    #[serde(default)]
    pub financial: FinancialSpec,
}

fn default_epoch() -> f64 {
    150.0
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            seed: 0,
            epoch_seconds: 150.0,
            max_epochs: None,
            exponential_blocks: false,
            writers: Vec::new(),
            constructs: Vec::new(),
            financial: FinancialSpec::default(),
        }
    }
}

impl WorkloadSpec {
    pub fn from_json(s: &str) -> Result<WorkloadSpec, WorkloadError> {
        let spec: WorkloadSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("workload serializes")
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: String| Err(WorkloadError::Invalid(m));
        if !(self.epoch_seconds > 0.0) {
            return bad(format!("epoch_seconds {} must be positive", self.epoch_seconds));
        }
        if !(1..=10).contains(&self.financial.multiplier) {
            return bad(format!("financial multiplier {} outside 1..=10", self.financial.multiplier));
        }
        for (i, w) in self.writers.iter().enumerate() {
            if w.payload_bytes == 0 {
                return bad(format!("writer group {i}: empty payload"));
            }
            if w.fee_rate == 0 {
                return bad(format!("writer group {i}: fee rate must be at least 1"));
            }
            if !(w.start >= 0.0 && w.window_seconds >= 0.0) {
                return bad(format!("writer group {i}: negative start or window"));
            }
        }
        for (i, t) in self.financial.trace.iter().enumerate() {
            if t.size == 0 || !(t.fee_rate >= 0.0) || !(t.arrival >= 0.0) {
                return bad(format!("financial tx {i}: size, fee rate and arrival must be non-negative"));
            }
        }
        if let Some(s) = &self.financial.synthetic {
            if !(s.rate_per_second > 0.0 && s.duration_seconds >= 0.0 && s.mean_size > 0.0) {
                return bad("synthetic trace needs positive rate and size".into());
            }
        }
        Ok(())
    }
}

fn stream(seed: u64, n: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n);
    rng
}

fn synthetic_id(parts: &[&[u8]]) -> Txid {
    Txid(sha256d(&parts.concat()))
}

/// One transaction of a writer's construct and the indices of the
/// transactions in the same construct it spends.
#[derive(Clone, Debug)]
pub struct PlannedTx {
    pub tx: SimTx,
    pub parents: Vec<usize>,
}

/// Size-and-fee skeleton of a construct, parents before children.
pub fn construct_skeleton(plan: &ConstructPlan, writer: u32) -> Vec<PlannedTx> {
    let w = writer.to_le_bytes();
    let id = |role: &[u8], a: usize, b: usize| {
        synthetic_id(&[b"writer", &w, role, &(a as u64).to_le_bytes(), &(b as u64).to_le_bytes()])
    };
    let r = plan.fee_rate;
    let mut out: Vec<PlannedTx> = Vec::new();
    let mut level_index: Vec<usize> = Vec::new();
    let root_spend = OutPoint { txid: id(b"source", 0, 0), vout: 0 };
    for (k, sizes) in plan.preparing_tx_sizes.iter().enumerate() {
        let mut this_level = Vec::with_capacity(sizes.len());
        for (i, &size) in sizes.iter().enumerate() {
            let (spends, parents) = if k == 0 {
                (vec![root_spend], vec![])
            } else {
                let p = level_index[i / MAX_DATA_OUTPUTS];
                (vec![OutPoint { txid: out[p].tx.txid, vout: (i % MAX_DATA_OUTPUTS) as u32 }], vec![p])
            };
            this_level.push(out.len());
            out.push(PlannedTx {
                tx: SimTx {
                    txid: id(b"preparing", k, i),
                    size: size as u32,
                    fee: size as u64 * r,
                    spends,
                    n_outputs: plan.preparing_children(k, i).len() as u32 + 1,
                    class: TxClass::Preparing,
                    payload_bytes: 0,
                    writer: Some(writer),
                    tx: None,
                },
                parents,
            });
        }
        level_index = this_level;
    }
    let mut funding_index = Vec::with_capacity(plan.funding_tx_count as usize);
    for (f, &size) in plan.funding_tx_sizes.iter().enumerate() {
        let (spends, parents) = if level_index.is_empty() {
            (vec![root_spend], vec![])
        } else {
            let p = level_index[f / MAX_DATA_OUTPUTS];
            (vec![OutPoint { txid: out[p].tx.txid, vout: (f % MAX_DATA_OUTPUTS) as u32 }], vec![p])
        };
        funding_index.push(out.len());
        out.push(PlannedTx {
            tx: SimTx {
                txid: id(b"funding", f, 0),
                size: size as u32,
                fee: size as u64 * r,
                spends,
                n_outputs: plan.funding_outputs[f] as u32,
                class: TxClass::Funding,
                payload_bytes: 0,
                writer: Some(writer),
                tx: None,
            },
            parents,
        });
    }
    for j in 0..plan.spending_tx_count as usize {
        let first = plan.spending_first_chunk(j);
        let count = plan.inputs_per_spending_tx[j] as u64;
        let mut parents = Vec::new();
        let spends: Vec<OutPoint> = (first..first + count)
            .map(|c| {
                let f = (c / MAX_DATA_OUTPUTS as u64) as usize;
                if parents.last() != Some(&funding_index[f]) {
                    parents.push(funding_index[f]);
                }
                OutPoint { txid: out[funding_index[f]].tx.txid, vout: (c % MAX_DATA_OUTPUTS as u64) as u32 }
            })
            .collect();
        out.push(PlannedTx {
            tx: SimTx {
                txid: id(b"spending", j, 0),
                size: plan.spending_tx_sizes[j] as u32,
                fee: plan.spending_fee_shares(j).iter().sum(),
                spends,
                n_outputs: 1,
                class: TxClass::Spending,
                payload_bytes: (first..first + count).map(|c| plan.chunk_len(c) as u64).sum(),
                writer: Some(writer),
                tx: None,
            },
            parents,
        });
    }
    out
}

/// Skeleton of a built construct from its manifest.
pub fn manifest_skeleton(replay: &ManifestReplay, writer: u32) -> Result<Vec<PlannedTx>, WorkloadError> {
    let decoded = replay.manifest.decode()?;
    let txs: Vec<(Role, Transaction, Txid)> = decoded
        .into_iter()
        .zip(&replay.manifest.transactions)
        .map(|((role, _, tx), m)| (role, tx, m.txid))
        .collect();
    let position: HashMap<Txid, usize> = txs.iter().enumerate().map(|(i, t)| (t.2, i)).collect();
    let mut out = Vec::with_capacity(txs.len());
    for (role, tx, id) in &txs {
        let mut parents = Vec::new();
        let mut value_in = 0u64;
        for input in &tx.inputs {
            let prev = input.previous_output;
            match position.get(&prev.txid) {
                Some(&p) => {
                    if !parents.contains(&p) {
                        parents.push(p);
                    }
                    value_in += txs[p].1.outputs[prev.vout as usize].value.0;
                }
                None => value_in += replay.source_value,
            }
        }
        let fee = value_in.checked_sub(tx.total_output_value().0).ok_or_else(|| {
            WorkloadError::Invalid(format!("{id}: outputs exceed inputs"))
        })?;
        let class = match role {
            Role::Preparing => TxClass::Preparing,
            Role::Funding => TxClass::Funding,
            Role::Spending => TxClass::Spending,
        };
        let mut sim = SimTx::from_transaction(tx.clone(), fee, class)
            .map_err(|e| WorkloadError::Invalid(e.to_string()))?;
        sim.writer = Some(writer);
        out.push(PlannedTx { tx: sim, parents });
    }
    Ok(out)
}

struct Replay {
    nodes: Vec<Option<SimTx>>,
    waiting: Vec<usize>,
    children: HashMap<Txid, Vec<usize>>,
    queue: BinaryHeap<Reverse<(u64, u64, usize)>>,
    seq: u64,
    pending: usize,
}

impl Replay {
    fn schedule(&mut self, t: f64, node: usize) {
        self.queue.push(Reverse((t.max(0.0).to_bits(), self.seq, node)));
        self.seq += 1;
    }

    /// Adds a construct whose roots enter at `t`; later transactions wait
    /// for their parents to confirm.
    fn add_staged(&mut self, skeleton: Vec<PlannedTx>, t: f64) {
        let base = self.nodes.len();
        for p in skeleton {
            let node = self.nodes.len();
            self.waiting.push(p.parents.len());
            for parent in &p.parents {
                let parent_id = self.nodes[base + parent].as_ref().expect("parent earlier").txid;
                self.children.entry(parent_id).or_default().push(node);
            }
            self.nodes.push(Some(p.tx));
            self.pending += 1;
            if p.parents.is_empty() {
                self.schedule(t, node);
            }
        }
    }

    fn add_at(&mut self, tx: SimTx, t: f64) {
        let node = self.nodes.len();
        self.nodes.push(Some(tx));
        self.waiting.push(0);
        self.pending += 1;
        self.schedule(t, node);
    }

    fn release(&mut self, confirmed: &Txid, t: f64) {
        if let Some(kids) = self.children.remove(confirmed) {
            for k in kids {
                self.waiting[k] -= 1;
                if self.waiting[k] == 0 {
                    self.schedule(t, k);
                }
            }
        }
    }
}

/// Replays a workload and collects statistics. Identical specs give
/// identical results.
pub fn run(spec: &WorkloadSpec) -> Result<SimStats, WorkloadError> {
    spec.validate()?;
    let config = SimConfig {
        epoch_seconds: spec.epoch_seconds,
        exponential_seed: spec.exponential_blocks.then_some(spec.seed),
        ..SimConfig::default()
    };
    let mut sim = Simulator::new(config);
    let mut replay = Replay {
        nodes: Vec::new(),
        waiting: Vec::new(),
        children: HashMap::new(),
        queue: BinaryHeap::new(),
        seq: 0,
        pending: 0,
    };

    for (i, f) in spec.financial.expand(spec.seed).iter().enumerate() {
        let tx = SimTx {
            txid: synthetic_id(&[b"financial", &(i as u64).to_le_bytes()]),
            size: f.size,
            fee: f.fee(),
            spends: vec![],
            n_outputs: 2,
            class: TxClass::Financial,
            payload_bytes: 0,
            writer: None,
            tx: None,
        };
        replay.add_at(tx, f.arrival);
    }

    let mut rng = stream(spec.seed, 3);
    let mut writer = 0u32;
    let mut payloads = Vec::new();
    for group in &spec.writers {
        let model = CostModel { fee_rate: group.fee_rate, epoch_seconds: spec.epoch_seconds, ..CostModel::default() };
        let plan = plan_construct(group.payload_bytes, &model)?;
        let in_window = |rng: &mut ChaCha8Rng| {
            if group.window_seconds > 0.0 {
                group.start + rng.gen_range(0.0..group.window_seconds)
            } else {
                group.start
            }
        };
        for _ in 0..group.count {
            let skeleton = construct_skeleton(&plan, writer);
            match group.mode {
                WriterMode::Prefunded => {
                    for p in skeleton.into_iter().filter(|p| p.tx.class == TxClass::Spending) {
                        let t = in_window(&mut rng);
                        replay.add_at(p.tx, t);
                    }
                }
                WriterMode::FundThenSpend => {
                    let t = in_window(&mut rng);
                    replay.add_staged(skeleton, t);
                }
            }
            payloads.push(group.payload_bytes);
            writer += 1;
        }
    }
    for c in &spec.constructs {
        let skeleton = manifest_skeleton(c, writer)?;
        replay.add_staged(skeleton, c.start as f64 * spec.epoch_seconds);
        payloads.push(c.manifest.payload_size);
        writer += 1;
    }

    let mut rejected = 0usize;
    loop {
        if spec.max_epochs.is_some_and(|cap| sim.chain().height() >= cap) {
            break;
        }
        let next = replay.queue.peek().map(|Reverse((bits, _, _))| f64::from_bits(*bits));
        match next {
            Some(t) if t < sim.next_block_at() => {
                let Reverse((_, _, node)) = replay.queue.pop().expect("peeked");
                let tx = replay.nodes[node].take().expect("scheduled once");
                replay.pending -= 1;
                if let Err(e) = sim.submit_sim(tx, t) {
                    log::warn!("workload tx rejected: {e}");
                    rejected += 1;
                }
            }
            _ => {
                if next.is_none() && replay.pending == 0 && sim.mempool().is_empty() {
                    break;
                }
                let block = sim.mine_next();
                let at = block.timestamp;
                let mined: Vec<Txid> = block.txs.iter().filter(|t| t.writer.is_some()).map(|t| t.txid).collect();
                for id in &mined {
                    replay.release(id, at);
                }
            }
        }
    }

    let mut stats = SimStats {
        records: sim.records().to_vec(),
        blocks: block_utilization(sim.chain().blocks_unlogged()),
        mempool: sim.samples().to_vec(),
        unconfirmed: sim.mempool().len() + replay.pending,
        rejected,
        end_time: sim.now(),
        writers: Vec::new(),
    };
    stats.writers = WriterOutcome::collect(&stats.records, &payloads);
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn financial_only(seed: u64) -> WorkloadSpec {
        WorkloadSpec {
            seed,
            financial: FinancialSpec {
                synthetic: Some(SyntheticTrace { duration_seconds: 3600.0, ..SyntheticTrace::default() }),
                ..FinancialSpec::default()
            },
            ..WorkloadSpec::default()
        }
    }

    #[test]
    fn synthetic_rates_above_floor_except_handful() {
        let trace = SyntheticTrace::default().generate(9);
        let ones = trace.iter().filter(|t| t.fee_rate == 1.0).count();
        assert!((1..=4).contains(&ones));
        assert!(trace.iter().all(|t| t.fee_rate == 1.0 || t.fee_rate >= 1.05));
        assert!(trace.iter().all(|t| t.fee() > t.size as u64 || t.fee_rate == 1.0));
        let mean = trace.iter().map(|t| t.size as f64).sum::<f64>() / trace.len() as f64;
        assert!((mean - 500.0).abs() < 25.0, "{mean}");
    }

    #[test]
    fn multiplier_multiplies() {
        let mut f = FinancialSpec {
            synthetic: Some(SyntheticTrace { duration_seconds: 3600.0, ..SyntheticTrace::default() }),
            ..FinancialSpec::default()
        };
        let n = f.expand(1).len();
        f.multiplier = 3;
        assert_eq!(f.expand(1).len(), 3 * n);
    }

    #[test]
    fn deterministic() {
        let mut spec = financial_only(4);
        spec.writers.push(WriterGroup {
            count: 3,
            payload_bytes: 300_000,
            mode: WriterMode::FundThenSpend,
            start: 0.0,
            window_seconds: 600.0,
            fee_rate: 1,
        });
        let a = run(&spec).unwrap();
        let b = run(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn no_writers_matches_baseline() {
        let base = run(&financial_only(2)).unwrap();
        assert!(base.records.iter().all(|r| r.class == TxClass::Financial));
        assert_eq!(base.unconfirmed, 0);
        assert!(base.writing_window_utilization().is_none());
        let again = run(&financial_only(2)).unwrap();
        assert_eq!(base.financial_delays(), again.financial_delays());
    }

    #[test]
    fn staged_writer_waits_for_parents() {
        let spec = WorkloadSpec {
            writers: vec![WriterGroup {
                count: 1,
                payload_bytes: 5_000_000,
                mode: WriterMode::FundThenSpend,
                start: 10.0,
                window_seconds: 0.0,
                fee_rate: 1,
            }],
            ..WorkloadSpec::default()
        };
        let stats = run(&spec).unwrap();
        assert_eq!(stats.unconfirmed, 0);
        assert_eq!(stats.rejected, 0);
        let height = |c: TxClass| {
            stats.records.iter().filter(|r| r.class == c).map(|r| r.height).collect::<Vec<_>>()
        };
        let prep = height(TxClass::Preparing);
        let fund = height(TxClass::Funding);
        let spend = height(TxClass::Spending);
        assert_eq!((prep.len(), fund.len()), (1, 2));
        assert!(fund.iter().all(|h| *h > prep[0]));
        assert!(spend.iter().all(|h| *h > *fund.iter().max().unwrap() || *h > fund[0]));
        let w = &stats.writers[0];
        assert_eq!(w.payload_bytes, 5_000_000);
        assert_eq!(
            stats.records.iter().filter(|r| r.class == TxClass::Spending).count() as u64,
            crate::maxrate::chunk_count(5_000_000).div_ceil(59)
        );
    }

    #[test]
    fn prefunded_submits_spending_only() {
        let spec = WorkloadSpec {
            writers: vec![WriterGroup {
                count: 2,
                payload_bytes: 400_000,
                mode: WriterMode::Prefunded,
                start: 0.0,
                window_seconds: 1000.0,
                fee_rate: 1,
            }],
            ..WorkloadSpec::default()
        };
        let stats = run(&spec).unwrap();
        assert_eq!(stats.records.len(), 10);
        assert!(stats.records.iter().all(|r| r.class == TxClass::Spending));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = WorkloadSpec::default();
        spec.financial.multiplier = 11;
        assert!(matches!(spec.validate(), Err(WorkloadError::Invalid(_))));
        assert!(WorkloadSpec::from_json("{\"epoch_seconds\": -1}").is_err());
        assert!(WorkloadSpec::from_json("{\"writers\": 3}").is_err());
        let ok = WorkloadSpec::from_json(&financial_only(1).to_json()).unwrap();
        assert_eq!(ok, financial_only(1));
    }
}
