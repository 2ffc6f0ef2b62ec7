//! A two-hour workload: synthetic financial traffic plus a group of
//! prefunded writers, summarized per class.

use std::error::Error;

use uweb::sim::{run, FinancialSpec, SyntheticTrace, TxClass, WorkloadSpec, WriterGroup, WriterMode};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let spec = WorkloadSpec {
        seed: 42,
        writers: vec![WriterGroup {
            count: 40,
            payload_bytes: 380_005,
            mode: WriterMode::Prefunded,
            start: 0.0,
            window_seconds: 1800.0,
            fee_rate: 1,
        }],
        financial: FinancialSpec {
            synthetic: Some(SyntheticTrace { duration_seconds: 7200.0, ..SyntheticTrace::default() }),
            ..FinancialSpec::default()
        },
        ..WorkloadSpec::default()
    };
    println!("{}", spec.to_json());
    let stats = run(&spec)?;
    for (name, classes) in [("financial", &[TxClass::Financial][..]), ("spending", &[TxClass::Spending][..])] {
        let s = stats.summary(classes);
        println!("{name}: n={} mean={:.0}s p90={:.0}s max={:.0}s", s.count, s.mean, s.p90, s.max);
    }
    if let Some(u) = stats.writing_window_utilization() {
        println!("writing window: {} blocks, space {:.3}, txn {:.3}", u.blocks, u.space, u.txn);
    }
    stats.write_block_csv(std::io::sink())?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
