//! Publish a root directory, store and update a file, then find it again by
//! scanning the chain from genesis.

use std::error::Error;

use uweb::codec::Amount;
use uweb::fs::{access, publish, scan_chain, Publisher, PublisherIdentity, Target};
use uweb::maxrate::WalletKey;
use uweb::sim::Simulator;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut sim = Simulator::default();
    let purse = sim.fund(&WalletKey::from_seed(b"news-desk"), Amount(1_000_000_000));
    let identity = PublisherIdentity::from_seed(b"news-desk", "news-desk", b"daily bundles");
    let (mut publisher, setup) = Publisher::client_setup(identity, purse, 1)?;
    publish(&mut sim, &setup)?;

    let day1 = b"<html>monday</html>".repeat(5_000);
    let set = publisher.store("/news", "today.html", &day1, true)?;
    println!("store: {} txs over {} epochs", set.txs.len(), set.epochs());
    publish(&mut sim, &set)?;

    let day2 = b"<html>tuesday</html>".repeat(6_000);
    let set = publisher.store("/news", "today.html", &day2, false)?;
    publish(&mut sim, &set)?;

    let index = scan_chain(sim.chain(), 0);
    let file = index.lookup(Some("news-desk"), "/news/today.html")?;
    println!("{} operations on {}", file.history.len(), file.path);
    let latest = access(&index, sim.chain(), &"news-desk:/news/today.html".parse()?)?;
    assert_eq!(latest, day2);
    let first_root = file.history[0].root.expect("stored content");
    assert_eq!(access(&index, sim.chain(), &Target::Txid(first_root))?, day1);

    let set = publisher.remove("/news", "today.html")?;
    publish(&mut sim, &set)?;
    let index = scan_chain(sim.chain(), 0);
    assert!(access(&index, sim.chain(), &"/news/today.html".parse()?).is_err());
    println!("removed; {} live files", index.live_files().count());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
