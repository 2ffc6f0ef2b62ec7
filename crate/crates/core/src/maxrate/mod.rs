//! Max-rate data-storing constructs.
//!
//! A payload is cut into 1,568-byte chunks. Each chunk rides in one
//! hash-locked P2SH input; a funding transaction creates up to 2,936 such
//! outputs and spending transactions redeem them 59 at a time. Payloads too
//! large for one funding transaction are served by a tree of preparing
//! transactions.

pub mod build;
pub mod chunk;
pub mod data_script;
pub mod estimate;
pub mod manifest;
pub mod plan;

pub use build::{
    build_construct, build_data_scripts, build_funding_tx, build_preparing_tree, build_spending_txs,
    reassemble, Construct, DataMarker, PreparingTree, Role, Source, WalletKey,
};
pub use chunk::{chunk_count, chunk_payload, PayloadChunk};
pub use data_script::{build_data_script, check_spend, extract_chunk, verify_spend, DataScript};
pub use estimate::{estimate_construct_size, estimate_cost, estimate_goodput, estimate_throughput};
pub use manifest::{Manifest, ManifestTx};
pub use plan::{plan_construct, ConstructPlan, CostModel};

use crate::codec::transaction::Amount;
use crate::codec::EncodeError;

pub const PART_SIZE: usize = 520;
pub const TAIL_SIZE: usize = 8;
pub const PAYLOAD_PER_SCRIPT: usize = 3 * PART_SIZE + TAIL_SIZE;
pub const MAX_INPUTS_PER_SPENDING_TX: usize = 59;
/// Data outputs per funding transaction; one more output holds change.
pub const MAX_DATA_OUTPUTS: usize = 2_936;
pub const MAX_FUNDING_OUTPUTS: usize = MAX_DATA_OUTPUTS + 1;
/// Serialized size of the OP_RETURN output closing a spending transaction.
pub const SPENDING_OP_RETURN_LEN: usize = 34;
pub const DATA_TAG: &[u8; 4] = b"DATA";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MaxRateError {
    #[error("payload is empty")]
    EmptyPayload,
    #[error("chunk of {0} bytes exceeds 1568")]
    ChunkTooLarge(usize),
    #[error("part {part} is {len} bytes, over its limit")]
    PartTooLarge { part: &'static str, len: usize },
    #[error("invalid cost model: {0}")]
    InvalidModel(String),
    #[error("index mismatch: {0}")]
    IndexMismatch(String),
    #[error("insufficient funds: need {needed}, have {available}, short by {}", needed.0 - available.0)]
    InsufficientFunds { needed: Amount, available: Amount },
    #[error("source {0} is not spendable by the wallet key")]
    ForeignSource(String),
    #[error("plan has no preparing tree")]
    NoTree,
    #[error("not a data-storing script: {0}")]
    NotDataScript(String),
    #[error("chunks missing from index {at}")]
    MissingChunks { at: u32 },
    #[error("payload digest does not match")]
    DigestMismatch,
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("manifest: {0}")]
    Manifest(String),
}
