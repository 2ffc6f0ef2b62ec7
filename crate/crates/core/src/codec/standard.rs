//! Relay-policy (standardness) checks.
//!
//! Each rule has one stable id. [`check_standard`] evaluates the
//! transaction-local rules in a fixed order and reports every violation it
//! finds; the unconfirmed-chain rules (`chain-count`, `chain-size`) depend on
//! mempool state and are applied by the simulator.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::script::Script;
use super::transaction::{Amount, OutPoint, Transaction, TxOutput};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Empty,
    Size,
    ScriptsigSize,
    ScriptsigNotPushonly,
    PushSize,
    OutputCount,
    OpRetCount,
    BareMultisig,
    OpRetSize,
    MinFee,
    Dust,
    // Mempool-level rules, checked by the simulator.
    ChainCount,
    ChainSize,
    Duplicate,
    MissingInputs,
    NegativeFee,
    ScriptVerify,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::Empty => "empty",
            Rule::Size => "size",
            Rule::ScriptsigSize => "scriptsig-size",
            Rule::ScriptsigNotPushonly => "scriptsig-not-pushonly",
            Rule::PushSize => "push-size",
            Rule::OutputCount => "output-count",
            Rule::OpRetCount => "op-ret-count",
            Rule::BareMultisig => "bare-multisig",
            Rule::OpRetSize => "op-ret-size",
            Rule::MinFee => "min-fee",
            Rule::Dust => "dust",
            Rule::ChainCount => "chain-count",
            Rule::ChainSize => "chain-size",
            Rule::Duplicate => "duplicate",
            Rule::MissingInputs => "missing-inputs",
            Rule::NegativeFee => "negative-fee",
            Rule::ScriptVerify => "script-verify",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StandardnessReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
    /// Rules that could not be evaluated, e.g. fee rules without input values.
    pub unevaluated: Vec<Rule>,
    /// Fee in base units per byte, when input values were available.
    pub fee_rate: Option<f64>,
}

impl StandardnessReport {
    pub fn has(&self, rule: Rule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    pub fn rules(&self) -> Vec<Rule> {
        self.violations.iter().map(|v| v.rule).collect()
    }

    pub fn first_rule(&self) -> Option<Rule> {
        self.violations.first().map(|v| v.rule)
    }
}

/// Numeric limits applied by [`check_standard`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub max_tx_size: usize,
    pub max_script_sig_size: usize,
    pub max_push_size: usize,
    pub max_outputs: usize,
    pub max_op_return_data: usize,
    /// Minimum relay fee, base units per byte.
    pub min_fee_rate: u64,
    /// Dust relay fee, base units per byte of the spend-plus-output cost.
    pub dust_relay_rate: u64,
}

impl Default for Policy {
    fn default() -> Self {
        Policy {
            max_tx_size: 100_000,
            max_script_sig_size: 1_650,
            max_push_size: 520,
            max_outputs: 2_937,
            max_op_return_data: 80,
            min_fee_rate: 1,
            dust_relay_rate: 3,
        }
    }
}

/// Bytes assumed for the input that will later spend an output, used by
/// the dust rule.
const DUST_SPEND_SIZE: u64 = 148;

impl Policy {
    /// Smallest value a non-OP_RET output may carry.
    pub fn dust_threshold(&self, output: &TxOutput) -> Amount {
        Amount((output.serialized_size() as u64 + DUST_SPEND_SIZE) * self.dust_relay_rate)
    }

    pub fn dust_threshold_for_script(&self, script_pubkey: &Script) -> Amount {
        self.dust_threshold(&TxOutput::new(Amount::ZERO, script_pubkey.clone()))
    }

    pub fn min_fee(&self, size: usize) -> Amount {
        Amount(size as u64 * self.min_fee_rate)
    }
}

/// Resolves the outputs spent by a transaction's inputs.
pub trait PrevoutLookup {
    fn prevout(&self, outpoint: &OutPoint) -> Option<TxOutput>;
}

impl PrevoutLookup for HashMap<OutPoint, TxOutput> {
    fn prevout(&self, outpoint: &OutPoint) -> Option<TxOutput> {
        self.get(outpoint).cloned()
    }
}

impl<T: PrevoutLookup + ?Sized> PrevoutLookup for &T {
    fn prevout(&self, outpoint: &OutPoint) -> Option<TxOutput> {
        (**self).prevout(outpoint)
    }
}

/// Sum of the spent output values, or `None` if any is unknown.
pub fn input_value(tx: &Transaction, ctx: &dyn PrevoutLookup) -> Option<Amount> {
    tx.inputs
        .iter()
        .map(|i| ctx.prevout(&i.previous_output).map(|o| o.value))
        .sum()
}

pub fn check_standard(tx: &Transaction, ctx: Option<&dyn PrevoutLookup>) -> StandardnessReport {
    check_standard_with(tx, ctx, &Policy::default())
}

pub fn check_standard_with(
    tx: &Transaction,
    ctx: Option<&dyn PrevoutLookup>,
    policy: &Policy,
) -> StandardnessReport {
    let mut violations = Vec::new();
    let mut flag = |rule: Rule, reason: String| violations.push(Violation { rule, reason });

    if tx.inputs.is_empty() || tx.outputs.is_empty() {
        flag(
            Rule::Empty,
            format!("{} inputs and {} outputs", tx.inputs.len(), tx.outputs.len()),
        );
    }

    let size = tx.serialized_size();
    if size > policy.max_tx_size {
        flag(Rule::Size, format!("{size} bytes exceeds {}", policy.max_tx_size));
    }

    for (i, input) in tx.inputs.iter().enumerate() {
        let len = input.script_sig.len();
        if len > policy.max_script_sig_size {
            flag(
                Rule::ScriptsigSize,
                format!("input {i} scriptSig is {len} bytes, limit {}", policy.max_script_sig_size),
            );
        }
        if !input.script_sig.is_push_only() {
            flag(Rule::ScriptsigNotPushonly, format!("input {i} scriptSig has non-push opcodes"));
        }
    }

    let scripts = tx
        .inputs
        .iter()
        .enumerate()
        .map(|(i, inp)| (format!("input {i}"), &inp.script_sig))
        .chain(
            tx.outputs
                .iter()
                .enumerate()
                .map(|(i, out)| (format!("output {i}"), &out.script_pubkey)),
        );
    for (place, script) in scripts {
        let max = script.max_push_len();
        if max > policy.max_push_size {
            flag(
                Rule::PushSize,
                format!("{place} pushes {max} bytes, limit {}", policy.max_push_size),
            );
        }
    }

    if tx.outputs.len() > policy.max_outputs {
        flag(
            Rule::OutputCount,
            format!("{} outputs, limit {}", tx.outputs.len(), policy.max_outputs),
        );
    }

    let op_returns = tx.op_return_count();
    if op_returns > 1 {
        flag(Rule::OpRetCount, format!("{op_returns} OP_RETURN outputs, at most 1 allowed"));
    }

    for (i, out) in tx.outputs.iter().enumerate() {
        if out.script_pubkey.is_bare_multisig() {
            flag(Rule::BareMultisig, format!("output {i} is bare multisig"));
        }
    }

    for (i, out) in tx.outputs.iter().enumerate() {
        if !out.script_pubkey.is_op_return() {
            continue;
        }
        match out.script_pubkey.op_return_data() {
            Some(data) if data.len() <= policy.max_op_return_data => {}
            Some(data) => flag(
                Rule::OpRetSize,
                format!(
                    "output {i} carries {} OP_RETURN bytes, limit {}",
                    data.len(),
                    policy.max_op_return_data
                ),
            ),
            None => flag(Rule::OpRetSize, format!("output {i} OP_RETURN payload is not push-only")),
        }
    }

    let mut unevaluated = Vec::new();
    let mut fee_rate = None;
    match ctx.and_then(|c| input_value(tx, c)) {
        Some(value_in) => {
            let value_out = tx.total_output_value();
            let fee = value_in.0 as i128 - value_out.0 as i128;
            fee_rate = Some(fee as f64 / size as f64);
            let required = policy.min_fee(size).0 as i128;
            if fee < required {
                flag(
                    Rule::MinFee,
                    format!("fee {fee} below minimum {required} for {size} bytes"),
                );
            }
        }
        None => unevaluated.push(Rule::MinFee),
    }

    for (i, out) in tx.outputs.iter().enumerate() {
        if out.script_pubkey.is_op_return() {
            continue;
        }
        let threshold = policy.dust_threshold(out);
        if out.value < threshold {
            flag(
                Rule::Dust,
                format!("output {i} value {} below dust threshold {}", out.value, threshold),
            );
        }
    }

    StandardnessReport {
        passed: violations.is_empty(),
        violations,
        unevaluated,
        fee_rate,
    }
}
