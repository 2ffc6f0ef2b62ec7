//! Build a construct, check every input against its funding output and
//! reassemble the payload from the spending transactions alone.

use std::error::Error;

use uweb::maxrate::{build_construct, reassemble, verify_spend, CostModel, Source, WalletKey};
use uweb::codec::{Amount, OutPoint, Txid};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let payload: Vec<u8> = (0..300_000u32).map(|i| (i.wrapping_mul(2_654_435_761) >> 24) as u8).collect();
    let key = WalletKey::from_seed(b"example");
    let source = Source {
        outpoint: OutPoint::new(Txid([3; 32]), 0),
        value: Amount(10_000_000),
        script_pubkey: key.p2pkh(),
        key,
    };
    let c = build_construct(&payload, &CostModel::default(), &source)?;
    println!(
        "{} funding, {} spending, {} bytes total, goodput {:.4}, fee {}",
        c.funding.len(),
        c.spending.len(),
        c.total_size(),
        c.measured_goodput(),
        c.total_fee()?.0
    );

    let prevouts = c.prevouts()?;
    for tx in &c.spending {
        for input in &tx.inputs {
            assert!(verify_spend(&prevouts[&input.previous_output], &input.script_sig));
        }
    }
    let mut shuffled = c.spending.clone();
    shuffled.reverse();
    assert_eq!(reassemble(&shuffled)?, payload);

    let manifest = c.manifest()?;
    println!("manifest: {} txs, root {}", manifest.transactions.len(), manifest.root_txid);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
