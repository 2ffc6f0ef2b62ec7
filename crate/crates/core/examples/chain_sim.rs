//! Submit a construct to the simulator epoch by epoch and report how full
//! the resulting blocks are.

use std::error::Error;

use uweb::maxrate::{build_construct, CostModel, Role, WalletKey};
use uweb::codec::Amount;
use uweb::sim::{block_utilization, Simulator, TxClass};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut sim = Simulator::default();
    let key = WalletKey::from_seed(b"sim-example");
    let source = sim.fund(&key, Amount(100_000_000));
    let payload = vec![0x5a; 2_000_000];
    let c = build_construct(&payload, &CostModel::default(), &source)?;

    for epoch in 0..c.plan.epochs {
        for (role, e, tx) in c.transactions() {
            if e == epoch {
                let class = match role {
                    Role::Preparing => TxClass::Preparing,
                    Role::Funding => TxClass::Funding,
                    Role::Spending => TxClass::Spending,
                };
                let now = sim.now();
                sim.submit_tx(tx.clone(), class, now)?;
            }
        }
        while !sim.mempool().is_empty() {
            sim.mine_next();
        }
    }

    for b in block_utilization(sim.chain().read_all()) {
        println!(
            "block {:>2} t={:>5}s {:>3} txs {:>7} bytes space {:.4} payload {:.4}",
            b.height, b.timestamp, b.tx_count, b.size, b.space, b.payload_space
        );
    }
    println!(
        "mean spending delay {:.0}s",
        sim.records().iter().filter(|r| r.class == TxClass::Spending).map(|r| r.delay()).sum::<f64>()
            / c.spending.len() as f64
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
