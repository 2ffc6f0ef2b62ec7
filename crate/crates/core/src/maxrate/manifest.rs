//! JSON export of a built construct.

use serde::{Deserialize, Serialize};

use crate::codec::transaction::{txid, Transaction};
use crate::codec::Txid;

use super::build::{Construct, Role};
use super::MaxRateError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestTx {
    pub txid: Txid,
    pub role: Role,
    pub epoch: u64,
    pub hex: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub payload_size: u64,
    pub payload_digest: String,
    pub root_txid: Txid,
    pub epochs: u64,
    pub transactions: Vec<ManifestTx>,
}

impl Construct {
    pub fn manifest(&self) -> Result<Manifest, MaxRateError> {
        let transactions = self
            .transactions()
            .map(|(role, epoch, tx)| {
                Ok(ManifestTx { txid: txid(tx)?, role, epoch, hex: tx.to_hex()? })
            })
            .collect::<Result<Vec<_>, MaxRateError>>()?;
        Ok(Manifest {
            payload_size: self.plan.payload_size,
            payload_digest: hex::encode(self.payload_digest),
            root_txid: self.root_txid()?,
            epochs: self.plan.epochs,
            transactions,
        })
    }
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(s: &str) -> Result<Manifest, MaxRateError> {
        serde_json::from_str(s).map_err(|e| MaxRateError::Manifest(e.to_string()))
    }

    /// Decodes every transaction, checking each against its listed txid.
    pub fn decode(&self) -> Result<Vec<(Role, u64, Transaction)>, MaxRateError> {
        self.transactions
            .iter()
            .map(|t| {
                let tx = Transaction::from_hex(&t.hex).map_err(|e| MaxRateError::Manifest(e.to_string()))?;
                if txid(&tx)? != t.txid {
                    return Err(MaxRateError::Manifest(format!("txid mismatch for {}", t.txid)));
                }
                Ok((t.role, t.epoch, tx))
            })
            .collect()
    }
}
