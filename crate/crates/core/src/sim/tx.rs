//! Transactions as the simulator sees them.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::codec::transaction::{txid, OutPoint, Transaction};
use crate::codec::{EncodeError, Txid};
use crate::maxrate::{extract_chunk, DataMarker};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxClass {
    Financial,
    Preparing,
    Funding,
    Spending,
    Entry,
    Coinbase,
    Attack,
}

impl TxClass {
    pub fn name(self) -> &'static str {
        match self {
            TxClass::Financial => "financial",
            TxClass::Preparing => "preparing",
            TxClass::Funding => "funding",
            TxClass::Spending => "spending",
            TxClass::Entry => "entry",
            TxClass::Coinbase => "coinbase",
            TxClass::Attack => "attack",
        }
    }

    /// Transactions that belong to a max-rate construct.
    pub fn is_maxrate(self) -> bool {
        matches!(self, TxClass::Preparing | TxClass::Funding | TxClass::Spending)
    }
}

/// A transaction reduced to what admission and mining need. Real
/// transactions keep their bytes in `tx`; workload replays use synthetic
/// entries without them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTx {
    pub txid: Txid,
    pub size: u32,
    pub fee: u64,
    pub spends: Vec<OutPoint>,
    pub n_outputs: u32,
    pub class: TxClass,
    /// Payload bytes carried in data-storing inputs.
    pub payload_bytes: u64,
    pub writer: Option<u32>,
    #[serde(default, with = "opt_tx_hex", skip_serializing_if = "Option::is_none")]
    pub tx: Option<Arc<Transaction>>,
}

impl SimTx {
    /// Wraps a real transaction. `fee` must already be known; payload bytes
    /// are counted for transactions carrying a data marker.
    pub fn from_transaction(tx: Transaction, fee: u64, class: TxClass) -> Result<SimTx, EncodeError> {
        let payload_bytes = if DataMarker::from_tx(&tx).is_some() {
            tx.inputs
                .iter()
                .filter_map(|i| extract_chunk(&i.script_sig).ok())
                .map(|c| c.len() as u64)
                .sum()
        } else {
            0
        };
        Ok(SimTx {
            txid: txid(&tx)?,
            size: tx.serialized_size() as u32,
            fee,
            spends: tx.inputs.iter().map(|i| i.previous_output).collect(),
            n_outputs: tx.outputs.len() as u32,
            class,
            payload_bytes,
            writer: None,
            tx: Some(Arc::new(tx)),
        })
    }

    pub fn fee_rate(&self) -> f64 {
        self.fee as f64 / self.size as f64
    }

    /// Exact comparison of fee rates.
    pub fn cmp_fee_rate(&self, other: &SimTx) -> Ordering {
        cmp_rate(self.fee, self.size, other.fee, other.size)
    }

    pub fn carries_payload(&self) -> bool {
        self.payload_bytes > 0
    }
}

pub(crate) fn cmp_rate(fee_a: u64, size_a: u32, fee_b: u64, size_b: u32) -> Ordering {
    (fee_a as u128 * size_b as u128).cmp(&(fee_b as u128 * size_a as u128))
}

mod opt_tx_hex {
    use std::sync::Arc;

    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::codec::transaction::Transaction;

    pub fn serialize<S: Serializer>(tx: &Option<Arc<Transaction>>, s: S) -> Result<S::Ok, S::Error> {
        match tx {
            Some(tx) => s.serialize_str(&tx.to_hex().map_err(serde::ser::Error::custom)?),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Arc<Transaction>>, D::Error> {
        let hex: Option<String> = Option::deserialize(d)?;
        hex.map(|h| Transaction::from_hex(&h).map(Arc::new).map_err(D::Error::custom))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(fee: u64, size: u32) -> SimTx {
        SimTx {
            txid: Txid::ZERO,
            size,
            fee,
            spends: vec![],
            n_outputs: 1,
            class: TxClass::Financial,
            payload_bytes: 0,
            writer: None,
            tx: None,
        }
    }

    #[test]
    fn exact_rate_comparison() {
        // 1/3 vs 333333/1000000: floating point would call these close
        assert_eq!(synthetic(1, 3).cmp_fee_rate(&synthetic(333_333, 1_000_000)), Ordering::Greater);
        assert_eq!(synthetic(2, 4).cmp_fee_rate(&synthetic(1, 2)), Ordering::Equal);
        assert_eq!(synthetic(99_931, 99_931).cmp_fee_rate(&synthetic(501, 500)), Ordering::Less);
    }

    #[test]
    fn serde_keeps_transaction_bytes() {
        use crate::codec::{Amount, Script, TxInput, TxOutput};
        let tx = Transaction::new(
            vec![TxInput::new(OutPoint::new(Txid([1; 32]), 0), Script::new())],
            vec![TxOutput::new(Amount(5), Script::new_op_return(b"x"))],
        );
        let s = SimTx::from_transaction(tx, 100, TxClass::Entry).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: SimTx = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let bare = serde_json::to_string(&synthetic(1, 2)).unwrap();
        assert!(!bare.contains("\"tx\""));
        assert_eq!(serde_json::from_str::<SimTx>(&bare).unwrap(), synthetic(1, 2));
    }
}
