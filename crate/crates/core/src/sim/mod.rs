//! Discrete-event chain simulator: mempool admission, fee-priority block
//! building and workload replay.

pub mod chain;
pub mod mempool;
pub mod simulator;
pub mod stats;
pub mod tx;
pub mod workload;

pub use chain::{AccessCounts, Block, Chain, BLOCK_HEADER_LEN, MAX_BLOCK_SIZE};
pub use mempool::{Mempool, MempoolEntry};
pub use simulator::{
    Admission, Eviction, Rejection, SimConfig, Simulator, COINBASE_LEN, MAX_ANCESTOR_COUNT, MAX_ANCESTOR_SIZE,
};
pub use stats::{
    block_utilization, compute_utilization, ks_distance, percentile, BlockUtilization, DelaySummary, WindowUtilization,
    MempoolSample, SimStats, TxRecord, WriterOutcome,
};
pub use tx::{SimTx, TxClass};
pub use workload::{
    construct_skeleton, manifest_skeleton, run, FinancialSpec, FinancialTx, ManifestReplay, PlannedTx,
    SyntheticTrace, WorkloadError, WorkloadSpec, WriterGroup, WriterMode,
};
