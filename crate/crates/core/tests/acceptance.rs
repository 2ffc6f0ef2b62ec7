//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so
//! the lines are always printed; exits non-zero if any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uweb::attack::{build_baseline, fuzz_input_mod, fuzz_output_mod};
use uweb::codec::{
    check_standard, op, txid, Amount, OutPoint, Rule, Script, Transaction, TxInput, TxOutput, Txid,
};
use uweb::fs::{access, compress, publish, scan_chain, Directive, FsError, Publisher, PublisherIdentity, Target};
use uweb::maxrate::{
    build_construct, estimate_goodput, estimate_throughput, plan_construct, Construct, CostModel, Role, WalletKey,
};
use uweb::sim::{
    block_utilization, ks_distance, run, FinancialSpec, SimStats, Simulator, SyntheticTrace, TxClass, WorkloadSpec,
    WriterGroup, WriterMode,
};

type Verdict = (bool, String);

fn bytes(n: usize, seed: u64) -> Vec<u8> {
    let mut v = vec![0u8; n];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut v);
    v
}

fn source(key: &WalletKey, value: u64) -> uweb::maxrate::Source {
    uweb::maxrate::Source {
        outpoint: OutPoint::new(Txid([0x11; 32]), 0),
        value: Amount(value),
        script_pubkey: key.p2pkh(),
        key: *key,
    }
}

fn construct(n: usize, seed: u64) -> Construct {
    let key = WalletKey::from_seed(b"acceptance");
    let plan = plan_construct(n as u64, &CostModel::default()).unwrap();
    build_construct(&bytes(n, seed), &CostModel::default(), &source(&key, plan.required_source_value.0)).unwrap()
}

fn c1_capacity() -> Verdict {
    let plan = plan_construct(4_603_648, &CostModel::default()).unwrap();
    let capacity = 2_936u64 * 1_568;
    let ok = plan.funding_tx_count == 1
        && plan.funding_outputs == vec![2_937]
        && plan.spending_tx_count == 50
        && plan.preparing_tree_depth == 0
        && plan.payload_size == capacity
        && plan_construct(capacity + 1, &CostModel::default()).unwrap().funding_tx_count == 2;
    (
        ok,
        format!(
            "{} funding with {:?} outputs, {} spending, capacity {}",
            plan.funding_tx_count, plan.funding_outputs, plan.spending_tx_count, capacity
        ),
    )
}

fn c2a_throughput() -> Verdict {
    let model = CostModel::default();
    let n = 46e6;
    let r = estimate_throughput(n, &model);
    // independent evaluation of N / (w·(1 + N/(p·F)) + N/B)
    let oracle = n / (150.0 * (1.0 + n / (1_568.0 * 29_370.0)) + n / 125e6);
    let ok = (r - 154e3).abs() <= 2e3 && (r - oracle).abs() < 1e-6 * oracle;
    (ok, format!("R(46MB) = {:.2} KB/s (oracle {:.2})", r / 1e3, oracle / 1e3))
}

fn c2b_throughput_limit() -> Verdict {
    let model = CostModel::default();
    let b = model.upload_bandwidth;
    let r = estimate_throughput(1e12, &model);
    let gap = (r - b).abs() / b;
    (gap < 0.01, format!("R(1e12 B) = {:.1} KB/s vs B = {:.0} KB/s, relative gap {:.4}", r / 1e3, b / 1e3, gap))
}

fn c3_goodput(c: &Construct) -> Verdict {
    let n = c.plan.payload_size as f64;
    let measured = c.measured_goodput();
    let formula = estimate_goodput(n, &CostModel::default());
    let oracle = 1.0 / (100_000.0 / 1_568.0 * (1.0 / 2_937.0 + 1.0 / 59.5));
    let ok = (0.898..=0.918).contains(&measured) && (measured - formula).abs() <= 0.01 && (formula - oracle).abs() < 1e-9;
    (
        ok,
        format!(
            "45MB construct: {} txs, measured {:.4}, formula {:.4}, reassembly {}",
            c.transactions().count(),
            measured,
            formula,
            if c.reassemble().is_ok() { "exact" } else { "FAILED" }
        ),
    )
}

fn c4_cost() -> Verdict {
    let c = construct(370_700, 4);
    let fee = c.total_fee().unwrap();
    let mltc = fee.as_milli();
    (
        (3.9..=4.6).contains(&mltc) && fee.0 == c.total_size(),
        format!("{} base units = {:.3} mLTC over {} bytes", fee.0, mltc, c.total_size()),
    )
}

/// A 400,000-byte article whose gzip stream is about 380KB.
fn article() -> Vec<u8> {
    let mut a = bytes(379_880, 5);
    a.extend(std::iter::repeat_n(b' ', 400_000 - a.len()));
    a
}

fn c5_spending_sizes() -> Verdict {
    let gz = compress(&article());
    let key = WalletKey::from_seed(b"c5");
    let plan = plan_construct(gz.len() as u64, &CostModel::default()).unwrap();
    let c = build_construct(&gz, &CostModel::default(), &source(&key, plan.required_source_value.0)).unwrap();
    let sizes: Vec<usize> = c.spending.iter().map(|t| t.serialized_size()).collect();
    let (full, last) = sizes.split_at(sizes.len() - 1);
    let ok = full.len() == 4 && full.iter().all(|&s| s == 99_931) && (last[0] as i64 - 10_876).abs() <= 200;
    (ok, format!("gzip payload {} bytes, spending sizes {:?}", gz.len(), sizes))
}

struct Slack(HashMap<OutPoint, TxOutput>);

impl Slack {
    /// Raises the first input's prevout until `tx` clears the fee floor.
    fn repair(&mut self, tx: &Transaction) {
        let value_in: u64 = tx.inputs.iter().map(|i| self.0[&i.previous_output].value.0).sum();
        let need = tx.serialized_size() as u64 + tx.total_output_value().0;
        if need > value_in {
            self.0.get_mut(&tx.inputs[0].previous_output).unwrap().value.0 += need - value_in;
        }
    }
}

fn rules_of(tx: &Transaction, ctx: &HashMap<OutPoint, TxOutput>) -> Vec<Rule> {
    check_standard(tx, Some(ctx)).rules()
}

fn c6_standardness(constructs: &[&Construct]) -> Verdict {
    let mut generated = 0;
    let mut failed = 0;
    for c in constructs {
        let ctx = c.prevouts().unwrap();
        for (_, _, tx) in c.transactions() {
            generated += 1;
            if !check_standard(tx, Some(&ctx)).violations.is_empty() {
                failed += 1;
            }
        }
    }

    let c = construct(4_603_648, 6);
    let base_ctx = c.prevouts().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut tally: BTreeMap<Rule, (usize, usize)> = BTreeMap::new();
    let mut record = |rule: Rule, got: Vec<Rule>| {
        let e = tally.entry(rule).or_default();
        e.0 += 1;
        e.1 += (got == vec![rule]) as usize;
    };
    let spending_ix = |rng: &mut ChaCha8Rng| rng.gen_range(0..c.spending.len());
    for _ in 0..18 {
        let mut s = Slack(base_ctx.clone());

        let mut t = c.spending[rng.gen_range(0..49)].clone();
        let extra = OutPoint::new(Txid([0xab; 32]), rng.gen());
        s.0.insert(extra, TxOutput::new(Amount(540), Script::new_p2sh(&[0; 20])));
        t.inputs.push(TxInput::new(extra, t.inputs[0].script_sig.clone()));
        s.repair(&t);
        record(Rule::Size, rules_of(&t, &s.0));

        let mut t = c.spending[spending_ix(&mut rng)].clone();
        let k = rng.gen_range(0..t.inputs.len());
        t.inputs[k].script_sig = Script::builder()
            .push_slice(&[1; 520])
            .push_slice(&[2; 520])
            .push_slice(&[3; 520])
            .push_slice(&vec![4; rng.gen_range(100..=140)])
            .into_script();
        s.repair(&t);
        record(Rule::ScriptsigSize, rules_of(&t, &s.0));

        let mut t = c.spending[spending_ix(&mut rng)].clone();
        let k = rng.gen_range(0..t.inputs.len());
        t.inputs[k].script_sig =
            Script::builder().push_slice(&vec![5; rng.gen_range(1..500)]).push_opcode(op::OP_DUP).into_script();
        s.repair(&t);
        record(Rule::ScriptsigNotPushonly, rules_of(&t, &s.0));

        let mut t = c.spending[spending_ix(&mut rng)].clone();
        let k = rng.gen_range(0..t.inputs.len());
        t.inputs[k].script_sig = Script::builder().push_slice(&vec![6; rng.gen_range(521..1_600)]).into_script();
        s.repair(&t);
        record(Rule::PushSize, rules_of(&t, &s.0));

        let mut t = c.funding[0].clone();
        let spk = t.outputs[0].script_pubkey.clone();
        for _ in 0..rng.gen_range(1..3) {
            t.outputs.insert(0, TxOutput::new(Amount(600), spk.clone()));
        }
        s.repair(&t);
        record(Rule::OutputCount, rules_of(&t, &s.0));

        let mut t = c.spending.last().unwrap().clone();
        t.outputs.push(TxOutput::new(Amount::ZERO, Script::new_op_return(&vec![7; rng.gen_range(0..=80)])));
        s.repair(&t);
        record(Rule::OpRetCount, rules_of(&t, &s.0));

        let mut t = c.spending.last().unwrap().clone();
        t.outputs[0] = TxOutput::new(Amount::ZERO, Script::new_op_return(&vec![8; rng.gen_range(81..400)]));
        s.repair(&t);
        record(Rule::OpRetSize, rules_of(&t, &s.0));

        let mut t = c.spending[spending_ix(&mut rng)].clone();
        let ms = Script::builder()
            .push_opcode(op::OP_1)
            .push_slice(&[2; 33])
            .push_opcode(op::OP_1)
            .push_opcode(op::OP_CHECKMULTISIG)
            .into_script();
        t.outputs.push(TxOutput::new(Amount(1_000), ms));
        s.repair(&t);
        record(Rule::BareMultisig, rules_of(&t, &s.0));

        let mut t = c.funding[0].clone();
        let k = rng.gen_range(0..2_936);
        t.outputs[k].value = Amount(rng.gen_range(0..540));
        record(Rule::Dust, rules_of(&t, &s.0));

        let t = c.spending[spending_ix(&mut rng)].clone();
        let mut short = Slack(base_ctx.clone());
        short.0.get_mut(&t.inputs[0].previous_output).unwrap().value.0 -= rng.gen_range(1..=540);
        record(Rule::MinFee, rules_of(&t, &short.0));
    }

    // chained-unconfirmed limits are checked at admission
    for i in 0..10u64 {
        let mut sim = Simulator::default();
        let key = WalletKey::from_seed(&i.to_le_bytes());
        let mut src = sim.fund(&key, Amount(10_000_000));
        let mut got = None;
        for _ in 0..26 {
            let sig = key.unlock(&src.script_pubkey, &src.outpoint).unwrap();
            let mut tx = Transaction::new(
                vec![TxInput::new(src.outpoint, sig)],
                vec![TxOutput::new(Amount(0), key.p2pkh())],
            );
            tx.outputs[0].value = Amount(src.value.0 - 200 - i);
            let now = sim.now();
            match sim.submit_tx(tx.clone(), TxClass::Financial, now) {
                Ok(_) => {
                    src.outpoint = OutPoint::new(txid(&tx).unwrap(), 0);
                    src.value = tx.outputs[0].value;
                }
                Err(r) => {
                    got = Some(r.rule);
                    break;
                }
            }
        }
        record(Rule::ChainCount, got.into_iter().collect());

        let mut sim = Simulator::default();
        let plan = plan_construct(1_568 * (2_000 + i * 50), &CostModel::default()).unwrap();
        let c = build_construct(
            &bytes(plan.payload_size as usize, i),
            &CostModel::default(),
            &sim.fund(&key, plan.required_source_value),
        )
        .unwrap();
        let now = sim.now();
        sim.submit_tx(c.funding[0].clone(), TxClass::Funding, now).unwrap();
        let got = sim.submit_tx(c.spending[0].clone(), TxClass::Spending, now).err().map(|r| r.rule);
        record(Rule::ChainSize, got.into_iter().collect());
    }

    let total: usize = tally.values().map(|v| v.0).sum();
    let right: usize = tally.values().map(|v| v.1).sum();
    let wrong: Vec<String> =
        tally.iter().filter(|(_, v)| v.0 != v.1).map(|(r, v)| format!("{r} {}/{}", v.1, v.0)).collect();
    (
        failed == 0 && generated > 0 && total == 200 && right == total,
        format!(
            "{generated} generated txs, {failed} nonstandard; {right}/{total} mutants rejected with their own rule over {} rules{}",
            tally.len(),
            if wrong.is_empty() { String::new() } else { format!(" (wrong: {})", wrong.join(", ")) }
        ),
    )
}

fn c7_integrity() -> Verdict {
    let key = WalletKey::from_seed(b"c7");
    let mut sim = Simulator::default();
    let payload = bytes(400_000, 7);
    let plan = plan_construct(payload.len() as u64, &CostModel::default()).unwrap();
    let c = build_construct(&payload, &CostModel::default(), &sim.fund(&key, plan.required_source_value)).unwrap();
    for (role, _, tx) in c.transactions() {
        if role != Role::Spending {
            let now = sim.now();
            sim.submit_tx(tx.clone(), TxClass::Funding, now).unwrap();
        }
    }
    sim.mine_next();
    let (mut trials, mut standard, mut succeeded) = (0, 0, 0);
    for (i, victim) in [&c.spending[0], c.spending.last().unwrap()].into_iter().enumerate() {
        let s = fuzz_input_mod(&sim, victim, 5_000, 30.0, 70 + i as u64);
        let o = fuzz_output_mod(&sim, victim, 5_000, 30.0, 80 + i as u64);
        trials += s.trials + o.trials;
        standard += s.standard_forgeries + o.standard_forgeries;
        succeeded += s.corrupted + o.corrupted + (o.value_stolen > 0) as usize;
    }

    let mut sim = Simulator::default();
    let b = build_baseline(&payload[..50_000], &sim.fund(&key, Amount(100_000_000)), &key, 1).unwrap();
    let now = sim.now();
    sim.submit_tx(b.funding.clone(), TxClass::Funding, now).unwrap();
    sim.mine_next();
    let bi = fuzz_input_mod(&sim, &b.spending[0], 200, 30.0, 90);
    let bo = fuzz_output_mod(&sim, &b.spending[0], 20, 30.0, 91);
    let base_input_wins = bi.corrupted;
    let base_output_wins = bo.forged_mined_first * (bo.value_stolen > 0) as usize;
    (
        trials >= 10_000 && standard == 0 && succeeded == 0 && base_input_wins >= 1 && base_output_wins >= 1,
        format!(
            "max-rate: {trials} forgeries, {standard} standard, {succeeded} successful; baseline: {base_input_wins}/200 input-mod corruptions, {base_output_wins}/20 output-mod thefts"
        ),
    )
}

fn writers(count: u32) -> WorkloadSpec {
    WorkloadSpec {
        seed: 7,
        writers: vec![WriterGroup {
            count,
            payload_bytes: 380_005,
            mode: WriterMode::Prefunded,
            start: 0.0,
            window_seconds: 4.0 * 3600.0,
            fee_rate: 1,
        }],
        financial: FinancialSpec {
            synthetic: Some(SyntheticTrace {
                duration_seconds: 60.0 * 3600.0,
                min_rate_count: 0,
                ..SyntheticTrace::default()
            }),
            ..FinancialSpec::default()
        },
        ..WorkloadSpec::default()
    }
}

const MAXRATE: [TxClass; 3] = [TxClass::Preparing, TxClass::Funding, TxClass::Spending];

fn c8_writer_scaling(runs: &[(u32, SimStats)]) -> Verdict {
    let fin: Vec<Vec<f64>> = runs.iter().map(|(_, s)| s.financial_delays()).collect();
    let ks = (0..fin.len())
        .flat_map(|i| (i + 1..fin.len()).map(move |j| (i, j)))
        .map(|(i, j)| ks_distance(&fin[i], &fin[j]))
        .fold(0.0, f64::max);
    let means: Vec<f64> = runs.iter().map(|(_, s)| s.summary(&MAXRATE).mean).collect();
    let monotone = means.windows(2).all(|w| w[0] < w[1]);
    let big = &runs.last().unwrap().1;
    let (peak_txs, peak_bytes) = big.peak_maxrate();
    let gib = peak_bytes as f64 / (1u64 << 30) as f64;
    let last = big.last_confirmation(&MAXRATE).unwrap_or(f64::INFINITY) / 3600.0;
    let window_end = 4.0;
    let drain = last - window_end;
    let ok = ks < 0.01
        && monotone
        && (1.0..=1.1).contains(&gib)
        && (50.0..=55.0).contains(&drain)
        && big.unconfirmed == 0
        && big.financial_delays().len() == runs[0].1.financial_delays().len();
    (
        ok,
        format!(
            "max KS {ks:.4}; max-rate mean delay {:?} s; 3000 writers: peak {peak_txs} txs, {gib:.3} GiB ({:.3} GB), confirmed {drain:.2} h after the window ({last:.2} h from start)",
            means.iter().map(|m| m.round()).collect::<Vec<_>>(),
            peak_bytes as f64 / 1e9
        ),
    )
}

fn multiplier(k: u32) -> WorkloadSpec {
    WorkloadSpec {
        seed: 7,
        writers: [52_000_000u64, 45_000_000, 42_000_000]
            .iter()
            .map(|&p| WriterGroup {
                count: 1,
                payload_bytes: p,
                mode: WriterMode::FundThenSpend,
                start: 0.0,
                window_seconds: 0.0,
                fee_rate: 1,
            })
            .collect(),
        financial: FinancialSpec {
            synthetic: Some(SyntheticTrace { duration_seconds: 36.0 * 3600.0, ..SyntheticTrace::default() }),
            multiplier: k,
            ..FinancialSpec::default()
        },
        ..WorkloadSpec::default()
    }
}

fn c9_multiplier(x3: &SimStats, x10: &SimStats) -> Verdict {
    let m3 = x3.summary(&MAXRATE).mean;
    let m10 = x10.summary(&MAXRATE).mean;
    let f = x3.summary(&[TxClass::Financial]).max.max(x10.summary(&[TxClass::Financial]).max);
    (
        (9_000.0..=14_000.0).contains(&m3) && (12_000.0..=17_000.0).contains(&m10) && f <= 600.0,
        format!("max-rate mean delay 3x {m3:.0} s, 10x {m10:.0} s; financial max {f:.0} s"),
    )
}

fn c10_end_to_end() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut sim = Simulator::default();
    let purse = sim.fund(&WalletKey::from_seed(b"c10"), Amount(100_000_000_000));
    let id = PublisherIdentity::from_seed(b"c10", "archive", b"acceptance archive");
    let (mut p, set) = Publisher::client_setup(id, purse, 1).unwrap();
    publish(&mut sim, &set).unwrap();

    // path -> every version stored, and whether it was removed
    let mut expect: BTreeMap<String, (Vec<Vec<u8>>, bool)> = BTreeMap::new();
    let mut total = 0usize;
    for i in 0..100 {
        let size = (1_000f64 * 10_000f64.powf(rng.gen::<f64>())) as usize;
        let data = if i % 3 == 0 { b"compressible text ".repeat(size / 18 + 1)[..size].to_vec() } else { bytes(size, 1_000 + i) };
        total += size;
        let dir = format!("/d{}", i / 10);
        let name = format!("f{i}.bin");
        let set = p.store(&dir, &name, &data, i % 10 == 0).unwrap();
        publish(&mut sim, &set).unwrap();
        expect.insert(format!("{dir}/{name}"), (vec![data], false));
        if i % 10 == 3 {
            let v2 = bytes(rng.gen_range(1_000..50_000), 5_000 + i);
            publish(&mut sim, &p.store(&dir, &name, &v2, false).unwrap()).unwrap();
            expect.get_mut(&format!("{dir}/{name}")).unwrap().0.push(v2);
        }
        if i % 10 == 7 {
            publish(&mut sim, &p.remove(&dir, &name).unwrap()).unwrap();
            expect.get_mut(&format!("{dir}/{name}")).unwrap().1 = true;
        }
    }

    let index = scan_chain(sim.chain(), 0);
    let mut incremental = scan_chain(sim.chain(), 0);
    incremental.scan(sim.chain());
    let mut errors = Vec::new();
    let (mut exact, mut updated, mut removed) = (0, 0, 0);
    for (path, (versions, gone)) in &expect {
        let file = index.lookup(None, path).unwrap();
        let t: Target = path.parse().unwrap();
        let got = access(&index, sim.chain(), &t);
        if *gone {
            let ops: Vec<Directive> = file.history.iter().map(|o| o.directive).collect();
            if matches!(got, Err(FsError::NotFound(_))) && ops == [Directive::File, Directive::Remove] {
                removed += 1;
            } else {
                errors.push(format!("{path}: removal not honoured"));
            }
            continue;
        }
        match got {
            Ok(d) if d == *versions.last().unwrap() => exact += 1,
            _ => errors.push(format!("{path}: content mismatch")),
        }
        if versions.len() > 1 {
            let first = file.history[0].root.unwrap();
            let ok_old = access(&index, sim.chain(), &Target::Txid(first)).ok().as_ref() == Some(&versions[0]);
            let ok_ops = file.history.iter().map(|o| o.directive).collect::<Vec<_>>() == [Directive::File, Directive::Update];
            if ok_old && ok_ops {
                updated += 1;
            } else {
                errors.push(format!("{path}: update history wrong"));
            }
        }
    }
    let ok = errors.is_empty() && exact == 90 && updated == 10 && removed == 10 && incremental == index;
    (
        ok,
        format!(
            "{} files ({:.1} MB), {exact} live exact, {updated} updates, {removed} removals, chain height {}{}",
            expect.len(),
            total as f64 / 1e6,
            sim.chain().height(),
            if errors.is_empty() { String::new() } else { format!("; {}", errors.join("; ")) }
        ),
    )
}

fn c11a_block_space() -> Verdict {
    let key = WalletKey::from_seed(b"c11");
    let mut sim = Simulator::default();
    let n = 10 * 59 * 1_568;
    let plan = plan_construct(n as u64, &CostModel::default()).unwrap();
    let c = build_construct(&bytes(n, 11), &CostModel::default(), &sim.fund(&key, plan.required_source_value)).unwrap();
    let now = sim.now();
    sim.submit_tx(c.funding[0].clone(), TxClass::Funding, now).unwrap();
    sim.mine_next();
    for tx in &c.spending {
        let now = sim.now();
        sim.submit_tx(tx.clone(), TxClass::Spending, now).unwrap();
    }
    sim.mine_next();
    let u = block_utilization(sim.chain().read_all()).pop().unwrap();
    // ten 99,931-byte transactions over header, one-byte tx count, coinbase and themselves
    let oracle = (10 * 99_931) as f64 / (80 + 1 + 200 + 10 * 99_931) as f64;
    (
        u.payload_txs == 10 && u.space >= 0.999 && (u.space - oracle).abs() < 1e-9,
        format!("{} spending txs, block {} bytes, space {:.5}", u.payload_txs, u.size, u.space),
    )
}

fn utilization_scenario() -> WorkloadSpec {
    let mut spec = writers(359);
    spec.writers[0].mode = WriterMode::FundThenSpend;
    if let Some(s) = spec.financial.synthetic.as_mut() {
        s.min_rate_count = SyntheticTrace::default().min_rate_count;
    }
    spec
}

fn c11b_window_utilization(stats: &SimStats) -> Verdict {
    let u = stats.writing_window_utilization().unwrap();
    (
        (u.payload_space - 0.88).abs() <= 0.03 && (u.txn - 0.30).abs() <= 0.03,
        format!(
            "359 writers, {} window blocks: payload space {:.4} (target 0.88), txn {:.4} (target 0.30), tx-byte space {:.4}",
            u.blocks, u.payload_space, u.txn, u.space
        ),
    )
}

struct Check {
    id: &'static str,
    name: &'static str,
    budget: Duration,
    verdict: Verdict,
    elapsed: Duration,
}

fn timed<F: FnOnce() -> Verdict>(id: &'static str, name: &'static str, budget_s: u64, f: F) -> Check {
    let t = Instant::now();
    let verdict = f();
    Check { id, name, budget: Duration::from_secs(budget_s), verdict, elapsed: t.elapsed() }
}

fn main() {
    let started = Instant::now();
    let checks = std::thread::scope(|s| {
        let c8 = s.spawn(|| {
            let t = Instant::now();
            let runs: Vec<(u32, SimStats)> = std::thread::scope(|s| {
                let hs: Vec<_> = [1u32, 359, 3000]
                    .into_iter()
                    .map(|n| s.spawn(move || (n, run(&writers(n)).unwrap())))
                    .collect();
                hs.into_iter().map(|h| h.join().unwrap()).collect()
            });
            let mut c = timed("8", "writer scaling", 600, || c8_writer_scaling(&runs));
            c.elapsed = t.elapsed();
            c
        });
        let c9 = s.spawn(|| {
            let t = Instant::now();
            let (a, b) = std::thread::scope(|s| {
                let a = s.spawn(|| run(&multiplier(3)).unwrap());
                let b = s.spawn(|| run(&multiplier(10)).unwrap());
                (a.join().unwrap(), b.join().unwrap())
            });
            let mut c = timed("9", "financial multiplier", 600, || c9_multiplier(&a, &b));
            c.elapsed = t.elapsed();
            c
        });
        let c11b = s.spawn(|| {
            let t = Instant::now();
            let stats = run(&utilization_scenario()).unwrap();
            let mut c = timed("11b", "writing-window utilization", 120, || c11b_window_utilization(&stats));
            c.elapsed = t.elapsed();
            c
        });
        let c10 = s.spawn(|| timed("10", "end-to-end directory", 600, c10_end_to_end));
        let c7 = s.spawn(|| timed("7", "integrity attacks", 300, c7_integrity));

        let mut out = vec![
            timed("1", "capacity", 1, c1_capacity),
            timed("2a", "throughput formula", 1, c2a_throughput),
            timed("2b", "throughput limit", 1, c2b_throughput_limit),
        ];
        let t = Instant::now();
        let big = construct(45_000_000, 3);
        let mut c3 = timed("3", "goodput", 120, || c3_goodput(&big));
        c3.elapsed = t.elapsed();
        out.push(c3);
        out.push(timed("4", "cost", 5, c4_cost));
        out.push(timed("5", "spending-tx sizes", 10, c5_spending_sizes));
        let small = construct(1_000, 61);
        let mid = construct(370_700, 62);
        out.push(timed("6", "standardness", 60, || c6_standardness(&[&small, &mid, &big])));
        out.push(c7.join().unwrap());
        out.push(c8.join().unwrap());
        out.push(c9.join().unwrap());
        out.push(c10.join().unwrap());
        out.push(timed("11a", "full-block space", 120, c11a_block_space));
        out.push(c11b.join().unwrap());
        out
    });

    let mut failures = 0;
    let mut stdout = std::io::stdout().lock();
    for c in &checks {
        let in_time = c.elapsed <= c.budget;
        let pass = c.verdict.0 && in_time;
        failures += !pass as usize;
        writeln!(
            stdout,
            "{} criterion {:<3} {:<28} {} [{:.1}s of {}s]",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            c.verdict.1,
            c.elapsed.as_secs_f64(),
            c.budget.as_secs()
        )
        .unwrap();
    }
    writeln!(stdout, "{} of {} criteria passed in {:.1}s", checks.len() - failures, checks.len(), started.elapsed().as_secs_f64())
        .unwrap();
    if failures > 0 {
        std::process::exit(1);
    }
}
