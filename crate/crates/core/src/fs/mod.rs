//! On-chain directory system: publisher setup, signed entries chained
//! through hash-locked outputs, full-chain scanning and content access.

pub mod access;
pub mod entry;
pub mod identity;
pub mod index;
pub mod publisher;

pub use access::{access, fetch_payload, resolve, Target};
pub use entry::{
    decode_stream, encode_stream, init_stream, piece_count, split_pieces, Directive, EntryKind, StreamHeader,
    UWebEntry, INIT_TAG, MAX_PIECE,
};
pub use identity::{scheme, Certificate, KeyedHash, PublisherId, PublisherIdentity, SignatureScheme, KEYED_HASH};
pub use index::{
    append_jsonl, scan_chain, ContentIndex, Cursor, DirectoryRecord, FileOp, FileRecord, IndexRecord,
    PublisherRecord, QuarantineRecord,
};
pub use publisher::{
    chain_redeem_script, chain_script_pubkey, compress, decompress, join_path, normalize_dir, publish,
    ChainOutput, FileState, Publisher, StagedTx, TxSet, CHAIN_VALUE,
};

use crate::codec::transaction::Amount;
use crate::codec::EncodeError;
use crate::maxrate::MaxRateError;
use crate::sim::Rejection;

#[derive(Debug, thiserror::Error)]
pub enum FsError {
    #[error("malformed entry: {0}")]
    Malformed(String),
    #[error("invalid name {0}")]
    InvalidName(String),
    #[error("unknown directory {0}")]
    UnknownDir(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("ambiguous: {0}")]
    Ambiguous(String),
    #[error("content is empty")]
    EmptyContent,
    #[error("insufficient funds: need {needed}, have {available}")]
    InsufficientFunds { needed: Amount, available: Amount },
    #[error("no un-spent chain tip for {0}")]
    NoChainTip(String),
    #[error("incomplete content: {0}")]
    Incomplete(String),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("epoch {0} did not confirm")]
    Stalled(u64),
    #[error(transparent)]
    MaxRate(#[from] MaxRateError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Rejected(#[from] Rejection),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
