//! Closed-form throughput, goodput and cost estimates.

use crate::codec::transaction::Amount;

use super::plan::{plan_construct, CostModel};
use super::MaxRateError;

/// Epochs the throughput formula charges for `n` payload bytes:
/// `1 + N / (p·F)`.
pub fn throughput_epochs(n: f64, model: &CostModel) -> f64 {
    1.0 + n / (model.payload_per_script * model.max_funding_outputs_per_block)
}

/// Bytes per second: `N / (w·E + N/B)`.
pub fn estimate_throughput(n: f64, model: &CostModel) -> f64 {
    let e = throughput_epochs(n, model);
    n / (model.epoch_seconds * e + n / model.upload_bandwidth)
}

/// Construct size the goodput formula predicts:
/// `ts · (N/(p·f) + N/(p·m))`.
pub fn estimate_construct_size(n: f64, model: &CostModel) -> f64 {
    let p = model.payload_per_script;
    model.tx_size * (n / (p * model.outputs_per_funding_tx) + n / (p * model.inputs_per_spending_tx))
}

pub fn estimate_goodput(n: f64, model: &CostModel) -> f64 {
    n / estimate_construct_size(n, model)
}

/// Total construct size times the fee rate.
pub fn estimate_cost(payload_size: u64, model: &CostModel) -> Result<Amount, MaxRateError> {
    let plan = plan_construct(payload_size, model)?;
    Ok(Amount(plan.construct_total_size * model.fee_rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn throughput_at_46mb() {
        let r = estimate_throughput(46e6, &CostModel::default());
        // independent evaluation of the same expression
        let e = 1.0 + 46e6 / (1_568.0 * 29_370.0);
        let expect = 46e6 / (150.0 * e + 46e6 / 125e6);
        assert!((r - expect).abs() < 1e-9);
        assert!((r / 1e3 - 154.0).abs() < 2.0, "{r}");
    }

    #[test]
    fn throughput_increases_with_size() {
        let m = CostModel::default();
        let mut prev = 0.0;
        for k in 0..60 {
            let n = 10f64.powf(3.0 + k as f64 * 0.15);
            let r = estimate_throughput(n, &m);
            assert!(r > prev, "{n}");
            prev = r;
        }
    }

    #[test]
    fn goodput_is_size_independent() {
        let m = CostModel::default();
        let g = estimate_goodput(1e6, &m);
        let symbolic = 1_568.0 / (100_000.0 * (1.0 / 2_937.0 + 1.0 / 59.5));
        assert!((g - symbolic).abs() < 1e-12);
        assert!((estimate_goodput(1e9, &m) - g).abs() < 1e-12);
        assert!((g - 0.914).abs() < 0.001, "{g}");
    }

    #[test]
    fn cost_exceeds_payload() {
        let m = CostModel::default();
        for n in [1u64, 1_000, 370_700, 5_000_000] {
            assert!(estimate_cost(n, &m).unwrap().0 > n);
        }
        let double = CostModel { fee_rate: 2, ..m.clone() };
        assert_eq!(
            estimate_cost(10_000, &double).unwrap().0,
            2 * estimate_cost(10_000, &m).unwrap().0
        );
    }
}
