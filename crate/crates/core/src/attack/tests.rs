use super::*;
use crate::codec::Amount;
use crate::maxrate::{build_construct, CostModel, WalletKey};
use rand::RngCore;

fn random_bytes(n: usize, seed: u64) -> Vec<u8> {
    let mut v = vec![0u8; n];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut v);
    v
}

/// A simulator with one max-rate construct's funding confirmed; returns its
/// spending transactions.
fn maxrate_world(payload: usize) -> (Simulator, Vec<Transaction>) {
    let mut sim = Simulator::default();
    let key = WalletKey::from_seed(b"writer");
    let src = sim.fund(&key, Amount(1_000_000_000));
    let c = build_construct(&random_bytes(payload, 1), &CostModel::default(), &src).unwrap();
    for (role, _, tx) in c.transactions() {
        if role != crate::maxrate::Role::Spending {
            let now = sim.now();
            sim.submit_tx(tx.clone(), TxClass::Funding, now).unwrap();
        }
    }
    sim.mine_next();
    (sim, c.spending)
}

fn baseline_world(payload: usize) -> (Simulator, BaselineConstruct) {
    let mut sim = Simulator::default();
    let key = WalletKey::from_seed(b"staged");
    let src = sim.fund(&key, Amount(1_000_000_000));
    let c = build_baseline(&random_bytes(payload, 2), &src, &key, 1).unwrap();
    let now = sim.now();
    sim.submit_tx(c.funding.clone(), TxClass::Funding, now).unwrap();
    sim.mine_next();
    (sim, c)
}

const ATTACKER: [u8; 20] = [0xaa; 20];

#[test]
fn maxrate_output_mod_is_nonstandard() {
    let (mut sim, spending) = maxrate_world(200_000);
    for victim in spending.iter().take(2).chain(spending.last()) {
        let f = forge_output_mod(&sim, victim, ATTACKER);
        assert!(!f.standard);
        assert_eq!(f.rule, Some(Rule::MinFee), "{}", f.reason);
    }
    let out = output_modification_attack(&mut sim, &spending[0], ATTACKER, 10.0);
    assert!(!out.forged_standard && !out.forged_mined_first && !out.succeeded());
    assert!(sim.is_confirmed(&txid(&spending[0]).unwrap()));
}

#[test]
fn baseline_output_mod_steals_change() {
    let (sim, c) = baseline_world(100_000);
    let victim = &c.spending[0];
    let f = forge_output_mod(&sim, victim, ATTACKER);
    assert!(f.standard, "{}", f.reason);
    assert_eq!(f.value_stolen, victim.outputs[0].value);

    let won = output_modification_attack(&mut sim.clone(), victim, ATTACKER, 5.0);
    assert!(won.forged_mined_first && won.succeeded());
    assert_eq!(won.value_stolen, victim.outputs[0].value);
    assert!(!won.data_corrupted);

    let lost = output_modification_attack(&mut sim.clone(), victim, ATTACKER, -5.0);
    assert!(lost.forged_standard && !lost.forged_mined_first && !lost.succeeded());
}

#[test]
fn signature_bound_inputs_not_applicable() {
    let mut sim = Simulator::default();
    let key = WalletKey::from_seed(b"payer");
    let src = sim.fund(&key, Amount(1_000_000));
    let c = build_baseline(&[1, 2, 3], &src, &key, 1).unwrap();
    let f = forge_output_mod(&sim, &c.funding, ATTACKER);
    assert!(f.tx.is_none() && !f.standard);
    assert!(f.reason.starts_with("not applicable"), "{}", f.reason);
    let edit = [ByteEdit { input: 0, offset: 5, value: 0 }];
    let f = forge_input_mod(&sim, &c.funding, &edit);
    assert!(!f.standard);
}

#[test]
fn maxrate_input_mutations_never_verify() {
    let (sim, spending) = maxrate_world(200_000);
    let s = fuzz_input_mod(&sim, &spending[0], 2_000, 10.0, 7);
    assert_eq!((s.standard_forgeries, s.corrupted), (0, 0), "{:?}", s.rules);
    assert_eq!(s.rules.iter().map(|r| r.1).sum::<usize>(), 2_000);
}

#[test]
fn baseline_input_mod_corrupts_data() {
    let (sim, c) = baseline_world(100_000);
    let victim = &c.spending[0];
    // byte 10 lies inside the first pushed part
    let old = victim.inputs[0].script_sig.as_bytes()[10];
    let edit = [ByteEdit { input: 0, offset: 10, value: old ^ 0xff }];
    let mut s = sim.clone();
    let out = input_modification_attack(&mut s, victim, &edit, 1.0);
    assert!(out.forged_standard && out.forged_mined_first && out.data_corrupted, "{}", out.reason);
    assert!(s.evictions().iter().any(|e| e.txid == out.victim_txid) || !s.mempool().contains(&out.victim_txid));
    let lost = input_modification_attack(&mut sim.clone(), victim, &edit, -1.0);
    assert!(!lost.data_corrupted);
}

#[test]
fn empty_mutation_is_identity() {
    let (mut sim, c) = baseline_world(10_000);
    let victim = &c.spending[0];
    assert_eq!(apply_mutation(victim, &[]), *victim);
    let out = input_modification_attack(&mut sim, victim, &[], 10.0);
    assert!(!out.forged_standard && !out.data_corrupted);
    assert_eq!(out.forged_txid, Some(out.victim_txid));
    assert!(sim.is_confirmed(&out.victim_txid));
}

#[test]
fn corruption_implies_standard_win() {
    let (sim, c) = baseline_world(20_000);
    let victim = &c.spending[0];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut corrupted = 0;
    for i in 0..60 {
        let m = random_mutation(&mut rng, victim);
        let h = if i % 2 == 0 { 2.0 } else { -2.0 };
        let out = input_modification_attack(&mut sim.clone(), victim, &m, h);
        if out.data_corrupted {
            assert!(out.forged_mined_first && out.forged_standard);
            corrupted += 1;
        }
    }
    assert!(corrupted > 0);
}

#[test]
fn nonstandard_forgery_always_loses() {
    let (sim, spending) = maxrate_world(50_000);
    let f = forge_output_mod(&sim, &spending[0], ATTACKER);
    for h in [-100.0, 0.0, 100.0] {
        let out = settle(&mut sim.clone(), &spending[0], f.clone(), h);
        assert!(!out.forged_mined_first);
    }
}

#[test]
fn sweep_is_monotone() {
    let (sim, c) = baseline_world(10_000);
    let victim = &c.spending[0];
    let forged = forge_output_mod(&sim, victim, ATTACKER).tx.unwrap();
    let grid = [-20.0, -5.0, 0.0, 5.0, 20.0];
    let pts = head_start_sweep(&sim, victim, &forged, &grid, 40, 4.0, 11);
    assert!(pts.windows(2).all(|w| w[0].win_rate <= w[1].win_rate), "{pts:?}");
    assert!(pts[0].win_rate < 0.1 && pts[4].win_rate > 0.9);
    assert!((pts[2].win_rate - 0.5).abs() < 0.3);
}

#[test]
fn report_round_trips() {
    let (mut sim, c) = baseline_world(5_000);
    let victim = &c.spending[0];
    let out = output_modification_attack(&mut sim, victim, ATTACKER, 1.0);
    let report = AttackReport::new(&out, victim);
    let json = report.to_json();
    assert!(json.contains("\"attack_kind\": \"output-mod\""));
    let back: AttackReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.victim_hex, victim.to_hex().unwrap());
    assert_eq!(back.forged_hex, report.forged_hex);
    assert_eq!(Transaction::from_hex(back.forged_hex.as_deref().unwrap()).unwrap(), out.forged_tx.unwrap());
}

#[test]
fn kinds_parse() {
    assert_eq!("input-mod".parse::<AttackKind>().unwrap(), AttackKind::InputMod);
    assert!("rebind".parse::<AttackKind>().is_err());
}
