//! Race output- and input-modification forgeries against a max-rate
//! spending transaction and against the staged baseline.

use std::error::Error;

use uweb::attack::{
    build_baseline, forge_output_mod, fuzz_input_mod, head_start_sweep, output_modification_attack, AttackReport,
};
use uweb::codec::Amount;
use uweb::maxrate::{build_construct, CostModel, Role, WalletKey};
use uweb::sim::{Simulator, TxClass};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let payload: Vec<u8> = (0..60_000u32).map(|i| (i % 253) as u8).collect();
    let key = WalletKey::from_seed(b"attack-example");
    let attacker = [0xee; 20];

    let mut sim = Simulator::default();
    let c = build_construct(&payload, &CostModel::default(), &sim.fund(&key, Amount(100_000_000)))?;
    for (role, _, tx) in c.transactions() {
        if role != Role::Spending {
            let now = sim.now();
            sim.submit_tx(tx.clone(), TxClass::Funding, now)?;
        }
    }
    sim.mine_next();
    let victim = &c.spending[0];
    let fuzz = fuzz_input_mod(&sim, victim, 1_000, 5.0, 1);
    println!("max-rate input-mod: {} of {} mutations verify", fuzz.standard_forgeries, fuzz.trials);
    let out = output_modification_attack(&mut sim.clone(), victim, attacker, 5.0);
    println!("max-rate output-mod: {}", out.reason);

    let mut sim = Simulator::default();
    let b = build_baseline(&payload, &sim.fund(&key, Amount(100_000_000)), &key, 1)?;
    let now = sim.now();
    sim.submit_tx(b.funding.clone(), TxClass::Funding, now)?;
    sim.mine_next();
    let victim = &b.spending[0];
    let fuzz = fuzz_input_mod(&sim, victim, 200, 5.0, 1);
    println!("baseline input-mod: {} of {} corrupted the data", fuzz.corrupted, fuzz.trials);

    let forged = forge_output_mod(&sim, victim, attacker).tx.expect("baseline forgery");
    for p in head_start_sweep(&sim, victim, &forged, &[-10.0, -2.0, 0.0, 2.0, 10.0], 50, 3.0, 9) {
        println!("head start {:>5}s: forgery wins {:.2}", p.head_start, p.win_rate);
    }
    let out = output_modification_attack(&mut sim, victim, attacker, 5.0);
    println!("baseline output-mod stole {}", out.value_stolen.0);
    println!("{}", AttackReport::new(&out, victim).to_json().lines().take(8).collect::<Vec<_>>().join("\n"));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
