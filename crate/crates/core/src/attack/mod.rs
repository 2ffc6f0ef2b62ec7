//! Output- and input-modification attacks raced against their victims.
//!
//! The attacker sees every unconfirmed transaction. A forgery spends the
//! victim's outpoints, so at most one of the two confirms; which one is
//! decided by the simulator's fee-rate and arrival rule.

pub mod baseline;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::codec::script::{op, Instruction, Script};
use crate::codec::standard::{check_standard_with, input_value, Rule};
use crate::codec::transaction::{txid, Amount, Transaction, TxOutput};
use crate::codec::{verify_input, Txid};
use crate::sim::{Simulator, TxClass};

pub use baseline::{
    baseline_chunk, baseline_redeem_script, build_baseline, BaselineConstruct, BASELINE_CHANGE, BASELINE_CHUNK,
};

/// Blocks mined while waiting for a race to settle.
const RACE_BLOCK_LIMIT: usize = 10_000;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    OutputMod,
    InputMod,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::OutputMod => "output-mod",
            AttackKind::InputMod => "input-mod",
        }
    }
}

impl std::str::FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<AttackKind, String> {
        match s {
            "output-mod" => Ok(AttackKind::OutputMod),
            "input-mod" => Ok(AttackKind::InputMod),
            other => Err(format!("unknown attack kind {other:?}, expected output-mod or input-mod")),
        }
    }
}

/// A candidate forgery before it is raced.
#[derive(Clone, Debug, PartialEq)]
pub struct Forgery {
    pub kind: AttackKind,
    pub tx: Option<Transaction>,
    pub standard: bool,
    /// First rule the forgery breaks.
    pub rule: Option<Rule>,
    pub value_stolen: Amount,
    pub reason: String,
}

impl Forgery {
    fn failed(kind: AttackKind, tx: Option<Transaction>, rule: Option<Rule>, reason: String) -> Forgery {
        Forgery { kind, tx, standard: false, rule, value_stolen: Amount::ZERO, reason }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub attack_kind: AttackKind,
    pub victim_txid: Txid,
    pub forged_txid: Option<Txid>,
    #[serde(skip)]
    pub forged_tx: Option<Transaction>,
    pub forged_standard: bool,
    pub forged_mined_first: bool,
    pub data_corrupted: bool,
    pub value_stolen: Amount,
    pub rule: Option<Rule>,
    pub reason: String,
}

impl AttackOutcome {
    /// The forgery confirmed and either changed the stored data or paid the
    /// attacker.
    pub fn succeeded(&self) -> bool {
        self.forged_mined_first && (self.data_corrupted || self.value_stolen.0 > 0)
    }
}

/// An outcome with both transactions in hex, for audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    #[serde(flatten)]
    pub outcome: AttackOutcome,
    pub victim_hex: String,
    pub forged_hex: Option<String>,
}

impl AttackReport {
    pub fn new(outcome: &AttackOutcome, victim: &Transaction) -> AttackReport {
        AttackReport {
            outcome: outcome.clone(),
            victim_hex: victim.to_hex().unwrap_or_default(),
            forged_hex: outcome.forged_tx.as_ref().and_then(|t| t.to_hex().ok()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Sets `input`'s scriptSig byte at `offset` to `value`.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ByteEdit {
    pub input: usize,
    pub offset: usize,
    pub value: u8,
}

pub type Mutation = Vec<ByteEdit>;

fn last_push(script: &Script) -> Option<Script> {
    match script.parse().ok()?.last()? {
        Instruction::Push { data, .. } => Some(Script::from_bytes(data.to_vec())),
        Instruction::Op(_) => None,
    }
}

const SIG_OPS: [crate::codec::Opcode; 3] = [op::OP_CHECKSIG, op::OP_CHECKSIGVERIFY, op::OP_CHECKMULTISIG];

/// Whether spending `input` of `tx` requires a signature, which in a real
/// network would commit to the whole transaction.
fn signature_bound(sim: &Simulator, tx: &Transaction, input: usize) -> bool {
    let i = &tx.inputs[input];
    let Some(prev) = sim.prevout(&i.previous_output) else {
        return false;
    };
    let spk = &prev.script_pubkey;
    if spk.is_p2sh() {
        last_push(&i.script_sig).is_some_and(|r| r.contains_any(&SIG_OPS))
    } else {
        spk.contains_any(&SIG_OPS)
    }
}

fn fee_of(sim: &Simulator, tx: &Transaction) -> Option<i128> {
    let lookup = sim.lookup();
    let value_in = input_value(tx, &lookup)?;
    Some(value_in.0 as i128 - tx.total_output_value().0 as i128)
}

/// Validity and standardness of a forgery against the simulator's current
/// view. Returns the first broken rule.
fn judge(sim: &Simulator, tx: &Transaction) -> Result<(), (Rule, String)> {
    for (i, input) in tx.inputs.iter().enumerate() {
        let prev = sim
            .prevout(&input.previous_output)
            .ok_or((Rule::MissingInputs, format!("input {i} spends an unknown output")))?;
        verify_input(&input.script_sig, &prev.script_pubkey)
            .map_err(|e| (Rule::ScriptVerify, format!("input {i}: {e}")))?;
    }
    match fee_of(sim, tx) {
        Some(f) if f < 0 => return Err((Rule::NegativeFee, format!("outputs exceed inputs by {}", -f))),
        None => return Err((Rule::MissingInputs, "unresolved inputs".into())),
        _ => {}
    }
    let lookup = sim.lookup();
    let report = check_standard_with(tx, Some(&lookup), &sim.config.policy);
    match report.violations.first() {
        Some(v) => Err((v.rule, v.reason.clone())),
        None => Ok(()),
    }
}

/// Rewrites the victim's outputs in the attacker's favour. Value-bearing
/// outputs are redirected to `attacker`; when there are none, the zero-value
/// OP_RET is replaced by a payment to the attacker funded from the fee.
pub fn forge_output_mod(sim: &Simulator, victim: &Transaction, attacker: [u8; 20]) -> Forgery {
    let kind = AttackKind::OutputMod;
    if let Some(i) = (0..victim.inputs.len()).find(|&i| signature_bound(sim, victim, i)) {
        return Forgery::failed(kind, None, None, format!("not applicable: input {i} is signature-bound"));
    }
    let Some(fee) = fee_of(sim, victim) else {
        return Forgery::failed(kind, None, Some(Rule::MissingInputs), "victim inputs unresolved".into());
    };
    let to_attacker = Script::new_p2pkh(&attacker);
    let mut forged = victim.clone();
    let mut stolen = 0u64;
    for out in &mut forged.outputs {
        if out.value.0 > 0 && out.script_pubkey != to_attacker {
            out.script_pubkey = to_attacker.clone();
            stolen += out.value.0;
        }
    }
    if stolen == 0 {
        let policy = &sim.config.policy;
        let Some(k) = forged.outputs.iter().position(|o| o.script_pubkey.is_op_return()) else {
            return Forgery::failed(kind, None, None, "no output to redirect".into());
        };
        forged.outputs[k] = TxOutput::new(Amount::ZERO, to_attacker.clone());
        let surplus = fee - policy.min_fee(forged.serialized_size()).0 as i128;
        let dust = policy.dust_threshold_for_script(&to_attacker).0 as i128;
        // the least the attacker can take while keeping the output relayable
        let take = surplus.max(dust).max(1);
        forged.outputs[k].value = Amount(take.min(u64::MAX as i128) as u64);
        stolen = forged.outputs[k].value.0;
    }
    match judge(sim, &forged) {
        Ok(()) => Forgery {
            kind,
            tx: Some(forged),
            standard: true,
            rule: None,
            value_stolen: Amount(stolen),
            reason: format!("forgery standard, redirects {stolen}"),
        },
        Err((rule, why)) => {
            Forgery::failed(kind, Some(forged), Some(rule), format!("forgery nonstandard: {rule}: {why}"))
        }
    }
}

/// Applies `mutation` to the victim's scriptSigs. Edits past the end of a
/// script or of the input list are ignored.
pub fn apply_mutation(victim: &Transaction, mutation: &[ByteEdit]) -> Transaction {
    let mut tx = victim.clone();
    for e in mutation {
        if let Some(input) = tx.inputs.get_mut(e.input) {
            let mut bytes = input.script_sig.as_bytes().to_vec();
            if let Some(b) = bytes.get_mut(e.offset) {
                *b = e.value;
                input.script_sig = Script::from_bytes(bytes);
            }
        }
    }
    tx
}

pub fn forge_input_mod(sim: &Simulator, victim: &Transaction, mutation: &[ByteEdit]) -> Forgery {
    let kind = AttackKind::InputMod;
    let forged = apply_mutation(victim, mutation);
    if forged == *victim {
        return Forgery::failed(kind, Some(forged), Some(Rule::Duplicate), "forged transaction identical to victim".into());
    }
    let changed: Vec<usize> =
        (0..victim.inputs.len()).filter(|&i| forged.inputs[i].script_sig != victim.inputs[i].script_sig).collect();
    if let Some(&i) = changed.iter().find(|&&i| signature_bound(sim, victim, i)) {
        return Forgery::failed(
            kind,
            Some(forged),
            Some(Rule::ScriptVerify),
            format!("input {i} is signature-bound; the edit voids its signature"),
        );
    }
    match judge(sim, &forged) {
        Ok(()) => Forgery {
            kind,
            tx: Some(forged),
            standard: true,
            rule: None,
            value_stolen: Amount::ZERO,
            reason: format!("mutated inputs {changed:?} still verify"),
        },
        Err((rule, why)) => {
            Forgery::failed(kind, Some(forged), Some(rule), format!("forgery invalid: {rule}: {why}"))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaceOutcome {
    pub victim_confirmed: bool,
    pub forged_confirmed: bool,
    pub height: Option<u64>,
    pub reason: String,
}

/// Submits `victim` at `victim_at` and `forged` at `forged_at`, earlier
/// first (victim first on a tie), then mines until neither is pending.
pub fn race_at(
    sim: &mut Simulator,
    victim: &Transaction,
    victim_at: f64,
    forged: Option<&Transaction>,
    forged_at: f64,
) -> RaceOutcome {
    let vid = txid(victim).expect("victim encodes");
    let fid = forged.map(|f| txid(f).expect("forgery encodes"));
    let mut notes = Vec::new();
    let mut order: Vec<(f64, &Transaction, &str)> = vec![(victim_at, victim, "victim")];
    if let Some(f) = forged {
        order.push((forged_at, f, "forged"));
    }
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (t, tx, who) in order {
        let t = t.max(sim.now());
        if let Err(r) = sim.submit_tx(tx.clone(), TxClass::Attack, t) {
            // the victim may already be pending, which is fine
            if !(who == "victim" && r.rule == Rule::Duplicate) {
                notes.push(format!("{who} rejected: {r}"));
            }
        }
    }
    let pending = |s: &Simulator| s.mempool().contains(&vid) || fid.is_some_and(|f| s.mempool().contains(&f));
    let mut n = 0;
    while pending(sim) && n < RACE_BLOCK_LIMIT {
        sim.mine_next();
        n += 1;
    }
    let victim_confirmed = sim.is_confirmed(&vid);
    let forged_confirmed = fid.is_some_and(|f| sim.is_confirmed(&f));
    let height = [Some(vid), fid]
        .into_iter()
        .flatten()
        .find_map(|id| sim.records().iter().rev().find(|r| r.txid == id).map(|r| r.height));
    let mut reason = match (victim_confirmed, forged_confirmed) {
        (true, false) => "victim confirmed".to_string(),
        (false, true) => "forged confirmed".to_string(),
        (false, false) => "neither confirmed".to_string(),
        (true, true) => "both confirmed".to_string(),
    };
    for n in notes {
        reason.push_str("; ");
        reason.push_str(&n);
    }
    RaceOutcome { victim_confirmed, forged_confirmed, height, reason }
}

/// Races at the current time; a positive `head_start` lets the forgery
/// reach the miner that many seconds before the victim.
pub fn race(sim: &mut Simulator, victim: &Transaction, forged: Option<&Transaction>, head_start: f64) -> RaceOutcome {
    let t0 = sim.now();
    race_at(sim, victim, t0 + head_start.max(0.0), forged, t0 + (-head_start).max(0.0))
}

fn settle(sim: &mut Simulator, victim: &Transaction, forgery: Forgery, head_start: f64) -> AttackOutcome {
    let submit = forgery.tx.as_ref().filter(|_| forgery.standard);
    let race = race(sim, victim, submit, head_start);
    let won = forgery.standard && race.forged_confirmed;
    let data_changed = forgery
        .tx
        .as_ref()
        .is_some_and(|f| f.inputs.iter().zip(&victim.inputs).any(|(a, b)| a.script_sig != b.script_sig));
    AttackOutcome {
        attack_kind: forgery.kind,
        victim_txid: txid(victim).expect("victim encodes"),
        forged_txid: forgery.tx.as_ref().and_then(|t| txid(t).ok()),
        forged_standard: forgery.standard,
        forged_mined_first: won,
        data_corrupted: won && data_changed,
        value_stolen: if won { forgery.value_stolen } else { Amount::ZERO },
        rule: forgery.rule,
        reason: format!("{}; {}", forgery.reason, race.reason),
        forged_tx: forgery.tx,
    }
}

pub fn output_modification_attack(
    sim: &mut Simulator,
    victim: &Transaction,
    attacker: [u8; 20],
    head_start: f64,
) -> AttackOutcome {
    let forgery = forge_output_mod(sim, victim, attacker);
    settle(sim, victim, forgery, head_start)
}

pub fn input_modification_attack(
    sim: &mut Simulator,
    victim: &Transaction,
    mutation: &[ByteEdit],
    head_start: f64,
) -> AttackOutcome {
    let forgery = forge_input_mod(sim, victim, mutation);
    settle(sim, victim, forgery, head_start)
}

/// A uniformly drawn single-byte edit that changes the byte.
pub fn random_mutation(rng: &mut ChaCha8Rng, victim: &Transaction) -> Mutation {
    let input = rng.gen_range(0..victim.inputs.len());
    let script = victim.inputs[input].script_sig.as_bytes();
    let offset = rng.gen_range(0..script.len());
    let value = script[offset] ^ rng.gen_range(1..=255u8);
    vec![ByteEdit { input, offset, value }]
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FuzzSummary {
    pub trials: usize,
    pub standard_forgeries: usize,
    pub forged_mined_first: usize,
    pub corrupted: usize,
    pub value_stolen: u64,
    /// Broken rule and how often.
    pub rules: Vec<(Rule, usize)>,
}

/// Runs `trials` seeded single-byte input mutations against `victim`. Each
/// standard forgery is raced with `head_start` on a copy of `sim`.
pub fn fuzz_input_mod(sim: &Simulator, victim: &Transaction, trials: usize, head_start: f64, seed: u64) -> FuzzSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = FuzzSummary { trials, ..FuzzSummary::default() };
    let mut rules = std::collections::BTreeMap::new();
    for _ in 0..trials {
        let m = random_mutation(&mut rng, victim);
        let forgery = forge_input_mod(sim, victim, &m);
        if let Some(r) = forgery.rule {
            *rules.entry(r).or_insert(0) += 1;
        }
        if forgery.standard {
            summary.standard_forgeries += 1;
            let outcome = settle(&mut sim.clone(), victim, forgery, head_start);
            summary.forged_mined_first += outcome.forged_mined_first as usize;
            summary.corrupted += outcome.data_corrupted as usize;
        }
    }
    summary.rules = rules.into_iter().collect();
    summary
}

/// Output modification with `trials` seeded attacker addresses.
pub fn fuzz_output_mod(sim: &Simulator, victim: &Transaction, trials: usize, head_start: f64, seed: u64) -> FuzzSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = FuzzSummary { trials, ..FuzzSummary::default() };
    let mut rules = std::collections::BTreeMap::new();
    for _ in 0..trials {
        let forgery = forge_output_mod(sim, victim, rng.gen());
        if let Some(r) = forgery.rule {
            *rules.entry(r).or_insert(0) += 1;
        }
        if forgery.standard {
            summary.standard_forgeries += 1;
            let outcome = settle(&mut sim.clone(), victim, forgery, head_start);
            summary.forged_mined_first += outcome.forged_mined_first as usize;
            summary.corrupted += outcome.data_corrupted as usize;
            summary.value_stolen += outcome.value_stolen.0;
        }
    }
    summary.rules = rules.into_iter().collect();
    summary
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub head_start: f64,
    pub trials: usize,
    pub wins: usize,
    pub win_rate: f64,
}

/// Forgery win rate over a grid of head starts. Each trial broadcasts the
/// victim at a uniform phase of the epoch; both transactions then reach the
/// miner after independent exponential delays with mean `mean_latency`.
/// The same draws are reused at every grid point.
pub fn head_start_sweep(
    sim: &Simulator,
    victim: &Transaction,
    forged: &Transaction,
    grid: &[f64],
    trials: usize,
    mean_latency: f64,
    seed: u64,
) -> Vec<SweepPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delay = Exp::new(1.0 / mean_latency.max(1e-9)).expect("positive rate");
    let epoch = sim.config.epoch_seconds;
    let draws: Vec<(f64, f64, f64)> = (0..trials)
        .map(|_| (rng.gen_range(0.0..epoch), delay.sample(&mut rng), delay.sample(&mut rng)))
        .collect();
    let fid = txid(forged).expect("forgery encodes");
    grid.iter()
        .map(|&h| {
            let wins = draws
                .iter()
                .filter(|&&(phase, dv, df)| {
                    let mut s = sim.clone();
                    let t0 = s.now() + phase;
                    race_at(&mut s, victim, t0 + dv, Some(forged), t0 + df - h);
                    s.is_confirmed(&fid)
                })
                .count();
            SweepPoint { head_start: h, trials, wins, win_rate: wins as f64 / trials.max(1) as f64 }
        })
        .collect()
}

#[cfg(test)]
mod tests;
