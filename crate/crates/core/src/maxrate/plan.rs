//! Construct arithmetic: how many transactions of which sizes a payload needs.

use serde::{Deserialize, Serialize};

use crate::codec::script::Script;
use crate::codec::standard::Policy;
use crate::codec::transaction::Amount;
use crate::codec::varint_len;

use super::chunk::chunk_count;
use super::data_script::data_input_len;
use super::{
    MaxRateError, MAX_DATA_OUTPUTS, MAX_INPUTS_PER_SPENDING_TX, PAYLOAD_PER_SCRIPT,
    SPENDING_OP_RETURN_LEN,
};

/// Input spending a wallet P2PKH output: 72-byte signature and 33-byte key.
pub const WALLET_INPUT_LEN: usize = 148;
/// Input spending a tree output locked to `<key> OP_CHECKSIG` via P2SH.
pub const TREE_INPUT_LEN: usize = 150;
pub const P2SH_OUTPUT_LEN: usize = 32;
pub const P2PKH_OUTPUT_LEN: usize = 34;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    /// Base units per byte.
    pub fee_rate: u64,
    /// Expected seconds between blocks (w).
    pub epoch_seconds: f64,
    /// Upload bandwidth in bytes per second (B).
    pub upload_bandwidth: f64,
    /// Funding outputs one block can confirm (F).
    pub max_funding_outputs_per_block: f64,
    /// Payload bytes per data-storing input (p).
    pub payload_per_script: f64,
    /// Transaction size used by the goodput formula (ts).
    pub tx_size: f64,
    /// Inputs per spending transaction used by the goodput formula (m).
    pub inputs_per_spending_tx: f64,
    /// Outputs per funding transaction used by the goodput formula (f).
    pub outputs_per_funding_tx: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            fee_rate: 1,
            epoch_seconds: 150.0,
            upload_bandwidth: 125e6,
            max_funding_outputs_per_block: 29_370.0,
            payload_per_script: PAYLOAD_PER_SCRIPT as f64,
            tx_size: 100_000.0,
            inputs_per_spending_tx: 59.5,
            outputs_per_funding_tx: 2_937.0,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), MaxRateError> {
        let positive = [
            ("epoch_seconds", self.epoch_seconds),
            ("upload_bandwidth", self.upload_bandwidth),
            ("max_funding_outputs_per_block", self.max_funding_outputs_per_block),
            ("payload_per_script", self.payload_per_script),
            ("tx_size", self.tx_size),
            ("inputs_per_spending_tx", self.inputs_per_spending_tx),
            ("outputs_per_funding_tx", self.outputs_per_funding_tx),
        ];
        if self.fee_rate < 1 {
            return Err(MaxRateError::InvalidModel("fee_rate must be at least 1".into()));
        }
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MaxRateError::InvalidModel(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Splits a spending transaction's fee across its inputs so that every
/// funding output stays above the dust threshold.
///
/// `input_lens` are serialized input sizes; the first input also carries the
/// fixed transaction overhead. When the fee is too small to lift every
/// output over dust, each output is set to exactly the dust threshold and
/// the transaction overpays.
pub fn input_fee_shares(input_lens: &[usize], overhead: usize, fee_rate: u64, dust: u64) -> Vec<u64> {
    let mut shares: Vec<u64> = input_lens.iter().map(|&l| l as u64 * fee_rate).collect();
    if let Some(first) = shares.first_mut() {
        *first += overhead as u64 * fee_rate;
    }
    let total: u64 = shares.iter().sum();
    if total < dust * shares.len() as u64 {
        return vec![dust; shares.len()];
    }
    for i in 0..shares.len() {
        while shares[i] < dust {
            let need = dust - shares[i];
            let (j, &max) = shares
                .iter()
                .enumerate()
                .max_by_key(|&(j, &v)| (v, std::cmp::Reverse(j)))
                .expect("non-empty");
            let give = need.min(max - dust);
            shares[j] -= give;
            shares[i] += give;
        }
    }
    shares
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructPlan {
    pub payload_size: u64,
    pub chunk_count: u64,
    pub last_chunk_len: usize,
    pub fee_rate: u64,
    pub spending_tx_count: u64,
    pub inputs_per_spending_tx: Vec<usize>,
    pub spending_tx_sizes: Vec<usize>,
    pub funding_tx_count: u64,
    /// Outputs of each funding transaction, change included.
    pub funding_outputs: Vec<usize>,
    pub funding_tx_sizes: Vec<usize>,
    pub preparing_tree_depth: u32,
    /// Node count of each preparing level, root level first.
    pub preparing_level_nodes: Vec<usize>,
    pub preparing_tx_sizes: Vec<Vec<usize>>,
    /// Confirmation epochs the construct needs: one per preparing level,
    /// one for funding and one for spending.
    pub epochs: u64,
    /// `1 + ⌈N / (p·F)⌉`, the block-capacity epoch estimate.
    pub formula_epochs: u64,
    pub total_fee: Amount,
    pub construct_total_size: u64,
    /// Value the root source must hold for every change output to clear dust.
    pub required_source_value: Amount,
}

pub fn plan_construct(payload_size: u64, model: &CostModel) -> Result<ConstructPlan, MaxRateError> {
    if payload_size == 0 {
        return Err(MaxRateError::EmptyPayload);
    }
    model.validate()?;
    let r = model.fee_rate;
    let chunks = chunk_count(payload_size);
    let last_chunk_len = (payload_size - (chunks - 1) * PAYLOAD_PER_SCRIPT as u64) as usize;

    let per_tx = MAX_INPUTS_PER_SPENDING_TX as u64;
    let spending_tx_count = chunks.div_ceil(per_tx);
    let inputs_per_spending_tx: Vec<usize> = (0..spending_tx_count)
        .map(|j| (chunks - j * per_tx).min(per_tx) as usize)
        .collect();

    let per_funding = MAX_DATA_OUTPUTS as u64;
    let funding_tx_count = chunks.div_ceil(per_funding);
    let funding_outputs: Vec<usize> = (0..funding_tx_count)
        .map(|j| (chunks - j * per_funding).min(per_funding) as usize + 1)
        .collect();

    let level_nodes = preparing_levels(funding_tx_count);
    let depth = level_nodes.len() as u32;

    let mut plan = ConstructPlan {
        payload_size,
        chunk_count: chunks,
        last_chunk_len,
        fee_rate: r,
        spending_tx_count,
        spending_tx_sizes: Vec::new(),
        inputs_per_spending_tx,
        funding_tx_count,
        funding_outputs,
        funding_tx_sizes: Vec::new(),
        preparing_tree_depth: depth,
        preparing_level_nodes: level_nodes,
        preparing_tx_sizes: Vec::new(),
        epochs: depth as u64 + 2,
        formula_epochs: 1 + (payload_size as f64
            / (model.payload_per_script * model.max_funding_outputs_per_block))
            .ceil() as u64,
        total_fee: Amount::ZERO,
        construct_total_size: 0,
        required_source_value: Amount::ZERO,
    };

    plan.spending_tx_sizes = (0..spending_tx_count as usize)
        .map(|j| spending_tx_len(&plan.spending_input_lens(j)))
        .collect();
    let funding_input = if depth == 0 { WALLET_INPUT_LEN } else { TREE_INPUT_LEN };
    plan.funding_tx_sizes = plan
        .funding_outputs
        .iter()
        .map(|&outs| fan_out_tx_len(funding_input, outs - 1, P2SH_OUTPUT_LEN))
        .collect();
    plan.preparing_tx_sizes = (0..depth as usize)
        .map(|k| {
            let input = if k == 0 { WALLET_INPUT_LEN } else { TREE_INPUT_LEN };
            (0..plan.preparing_level_nodes[k])
                .map(|i| fan_out_tx_len(input, plan.preparing_children(k, i).len(), P2SH_OUTPUT_LEN))
                .collect()
        })
        .collect();

    let spending_fees: u64 = (0..spending_tx_count as usize)
        .map(|j| plan.spending_fee_shares(j).iter().sum::<u64>())
        .sum();
    let funding_size: usize = plan.funding_tx_sizes.iter().sum();
    let preparing_size: usize = plan.preparing_tx_sizes.iter().flatten().sum();
    plan.construct_total_size = (plan.spending_tx_sizes.iter().sum::<usize>()
        + funding_size
        + preparing_size) as u64;
    plan.total_fee = Amount(spending_fees + (funding_size + preparing_size) as u64 * r);
    plan.required_source_value = plan.root_requirement();
    Ok(plan)
}

/// Node counts of the preparing tree above `funding_tx_count` funding
/// transactions, root level first. Empty when one funding transaction
/// suffices.
pub fn preparing_levels(funding_tx_count: u64) -> Vec<usize> {
    let mut levels = Vec::new();
    let mut n = funding_tx_count;
    while n > 1 {
        n = n.div_ceil(MAX_DATA_OUTPUTS as u64);
        levels.push(n as usize);
    }
    levels.reverse();
    levels
}

/// Size of a spending transaction carrying inputs of the given sizes.
pub fn spending_tx_len(input_lens: &[usize]) -> usize {
    4 + varint_len(input_lens.len() as u64) + input_lens.iter().sum::<usize>() + 1 + SPENDING_OP_RETURN_LEN + 4
}

/// Size of a one-input transaction with `data_outputs` outputs of `output_len`
/// bytes plus one P2PKH change output.
pub fn fan_out_tx_len(input_len: usize, data_outputs: usize, output_len: usize) -> usize {
    4 + 1 + input_len + varint_len(data_outputs as u64 + 1) + data_outputs * output_len + P2PKH_OUTPUT_LEN + 4
}

pub(crate) fn p2sh_dust() -> u64 {
    Policy::default().dust_threshold_for_script(&Script::new_p2sh(&[0; 20])).0
}

pub(crate) fn change_dust() -> u64 {
    Policy::default().dust_threshold_for_script(&Script::new_p2pkh(&[0; 20])).0
}

impl ConstructPlan {
    pub fn chunk_len(&self, chunk: u64) -> usize {
        if chunk + 1 == self.chunk_count {
            self.last_chunk_len
        } else {
            PAYLOAD_PER_SCRIPT
        }
    }

    /// First chunk carried by spending transaction `j`.
    pub fn spending_first_chunk(&self, j: usize) -> u64 {
        j as u64 * MAX_INPUTS_PER_SPENDING_TX as u64
    }

    pub fn spending_input_lens(&self, j: usize) -> Vec<usize> {
        let first = self.spending_first_chunk(j);
        (0..self.inputs_per_spending_tx[j] as u64)
            .map(|i| data_input_len(self.chunk_len(first + i)))
            .collect()
    }

    /// Fee owed by each input of spending transaction `j`, which is also the
    /// value of the funding output it spends.
    pub fn spending_fee_shares(&self, j: usize) -> Vec<u64> {
        let lens = self.spending_input_lens(j);
        let overhead = spending_tx_len(&lens) - lens.iter().sum::<usize>();
        input_fee_shares(&lens, overhead, self.fee_rate, p2sh_dust())
    }

    /// Values of every funding output, in chunk order.
    pub fn chunk_output_values(&self) -> Vec<Amount> {
        (0..self.spending_tx_count as usize)
            .flat_map(|j| self.spending_fee_shares(j))
            .map(Amount)
            .collect()
    }

    /// Chunk range funded by funding transaction `f`.
    pub fn funding_chunks(&self, f: usize) -> std::ops::Range<u64> {
        let start = f as u64 * MAX_DATA_OUTPUTS as u64;
        start..start + (self.funding_outputs[f] - 1) as u64
    }

    /// Value a funding transaction's input must carry.
    pub fn funding_requirements(&self) -> Vec<Amount> {
        let values = self.chunk_output_values();
        (0..self.funding_tx_count as usize)
            .map(|f| {
                let range = self.funding_chunks(f);
                let outputs: u64 = values[range.start as usize..range.end as usize]
                    .iter()
                    .map(|a| a.0)
                    .sum();
                Amount(outputs + self.funding_tx_sizes[f] as u64 * self.fee_rate + change_dust())
            })
            .collect()
    }

    /// Children of preparing node `i` at level `k`, as indices into the next
    /// level (or into the funding transactions for the last level).
    pub fn preparing_children(&self, k: usize, i: usize) -> std::ops::Range<usize> {
        let below = if k + 1 < self.preparing_level_nodes.len() {
            self.preparing_level_nodes[k + 1]
        } else {
            self.funding_tx_count as usize
        };
        let start = i * MAX_DATA_OUTPUTS;
        start..(start + MAX_DATA_OUTPUTS).min(below)
    }

    /// Required input value of every preparing node, root level first.
    pub fn preparing_requirements(&self) -> Vec<Vec<Amount>> {
        let mut below = self.funding_requirements();
        let mut levels = Vec::with_capacity(self.preparing_level_nodes.len());
        for k in (0..self.preparing_level_nodes.len()).rev() {
            let level: Vec<Amount> = (0..self.preparing_level_nodes[k])
                .map(|i| {
                    let children: u64 = below[self.preparing_children(k, i)].iter().map(|a| a.0).sum();
                    Amount(children + self.preparing_tx_sizes[k][i] as u64 * self.fee_rate + change_dust())
                })
                .collect();
            below = level.clone();
            levels.push(level);
        }
        levels.reverse();
        levels
    }

    fn root_requirement(&self) -> Amount {
        if self.preparing_tree_depth == 0 {
            self.funding_requirements()[0]
        } else {
            self.preparing_requirements()[0][0]
        }
    }

    pub fn preparing_tx_count(&self) -> usize {
        self.preparing_level_nodes.iter().sum()
    }

    pub fn transaction_count(&self) -> u64 {
        self.preparing_tx_count() as u64 + self.funding_tx_count + self.spending_tx_count
    }

    /// Payload bytes over construct bytes.
    pub fn goodput(&self) -> f64 {
        self.payload_size as f64 / self.construct_total_size as f64
    }
}
