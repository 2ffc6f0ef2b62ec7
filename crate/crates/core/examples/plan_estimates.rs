//! Plan max-rate writes of several sizes and compare the closed-form
//! estimates with the planned construct.

use std::error::Error;

use uweb::maxrate::{estimate_cost, estimate_goodput, estimate_throughput, plan_construct, CostModel};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let model = CostModel::default();
    println!("{:>12} {:>5} {:>6} {:>8} {:>6} {:>10} {:>8} {:>8}", "bytes", "prep", "fund", "spend", "epochs", "fee", "goodput", "KB/s");
    for n in [1_568u64, 370_000, 4_603_648, 46_000_000, 140_000_000] {
        let plan = plan_construct(n, &model)?;
        println!(
            "{:>12} {:>5} {:>6} {:>8} {:>6} {:>10} {:>8.4} {:>8.1}",
            n,
            plan.preparing_tx_count(),
            plan.funding_tx_count,
            plan.spending_tx_count,
            plan.epochs,
            plan.total_fee.0,
            plan.goodput(),
            estimate_throughput(n as f64, &model) / 1000.0,
        );
        assert_eq!(estimate_cost(n, &model)?.0, plan.construct_total_size * model.fee_rate);
        let _ = estimate_goodput(n as f64, &model);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
