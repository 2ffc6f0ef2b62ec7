//! Command-line front end. State-changing commands work on a local state
//! directory holding the simulated chain, the publisher and the index.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{
    build_baseline, forge_input_mod, fuzz_input_mod, input_modification_attack, output_modification_attack,
    random_mutation, AttackKind, AttackReport, ByteEdit, FuzzSummary,
};
use crate::codec::script::{Instruction, Script};
use crate::codec::transaction::{txid, Amount, OutPoint, Transaction, TxOutput};
use crate::codec::{hash160, sha256, Txid};
use crate::fs::{
    access, append_jsonl, publish, scheme, ContentIndex, FsError, Publisher, PublisherIdentity, Target, TxSet,
};
use crate::maxrate::{
    build_construct, estimate_cost, estimate_goodput, estimate_throughput, plan_construct, Construct, CostModel,
    Manifest, MaxRateError, Role, Source, WalletKey,
};
use crate::sim::{Block, Chain, DelaySummary, SimConfig, Simulator, TxClass, WindowUtilization, WorkloadSpec};

#[derive(Parser, Debug)]
#[command(name = "uweb", version, about = "Max-rate storage, directories and attacks on a simulated chain")]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,
    /// Base units per byte.
    #[arg(long, global = true)]
    pub fee_rate: Option<u64>,
    #[arg(long, global = true)]
    pub epoch_seconds: Option<f64>,
    /// Upload bandwidth in bytes per second, for estimates.
    #[arg(long, global = true)]
    pub bandwidth: Option<f64>,
    /// State directory.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Plan a max-rate write of a file and print estimates.
    Plan {
        file: PathBuf,
        /// Also build the construct and write its manifest here.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Create the state directory and publish the root directory.
    Init {
        #[arg(long, default_value = "publisher")]
        subject: String,
        #[arg(long, default_value = "")]
        info: String,
        /// Base units granted to the wallet.
        #[arg(long, default_value_t = 1_000_000_000_000)]
        genesis: u64,
    },
    /// Store a file at `/dir/name`, replacing a live file of that name.
    Store {
        file: PathBuf,
        path: String,
        /// Create the directory if it does not exist.
        #[arg(long)]
        create: bool,
    },
    /// Record the removal of a file.
    Remove { path: String },
    /// Reconstruct a file by path (`/dir/name`, `publisher:/dir/name`) or txid.
    Access {
        target: String,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Bring the index up to the chain tip and list what it knows.
    Scan,
    /// Run a workload file through the simulator.
    Simulate {
        workload: PathBuf,
        /// Per-transaction CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Per-block CSV.
        #[arg(long)]
        blocks_csv: Option<PathBuf>,
    },
    /// Race a forgery against a construct's first spending transaction.
    Attack {
        /// output-mod or input-mod.
        kind: String,
        /// A manifest file, or `maxrate` / `baseline` for a generated construct.
        target: String,
        /// Seconds the forgery reaches the miner before the victim.
        #[arg(long, default_value_t = 1.0)]
        head_start: f64,
        /// Sampled single-byte mutations for input-mod.
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// One explicit mutation `input:offset:value` instead of sampling.
        #[arg(long)]
        edit: Option<String>,
        /// Value of the output a manifest's root spends.
        #[arg(long)]
        source_value: Option<u64>,
        /// Payload size of a generated construct.
        #[arg(long, default_value_t = 100_000)]
        payload_bytes: usize,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input; exit code 2.
    #[error("{0}")]
    Validation(String),
    /// Chain, simulation or state failure; exit code 3.
    #[error("{0}")]
    Chain(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Chain(_) => 3,
        }
    }
}

impl From<FsError> for CliError {
    fn from(e: FsError) -> CliError {
        match e {
            FsError::Malformed(_)
            | FsError::InvalidName(_)
            | FsError::UnknownDir(_)
            | FsError::NotFound(_)
            | FsError::Ambiguous(_)
            | FsError::EmptyContent => CliError::Validation(e.to_string()),
            other => CliError::Chain(other.to_string()),
        }
    }
}

fn chain_err(e: impl std::fmt::Display) -> CliError {
    CliError::Chain(e.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub data_dir: PathBuf,
    pub fee_rate: u64,
    pub epoch_seconds: f64,
    pub bandwidth: f64,
    pub seed: u64,
    /// Signature scheme of new identities.
    pub scheme: u8,
    /// Base units per displayed mLTC.
    pub milli_ratio: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data_dir: PathBuf::from("uweb-state"),
            fee_rate: 1,
            epoch_seconds: 150.0,
            bandwidth: 125e6,
            seed: 0,
            scheme: crate::fs::KEYED_HASH,
            milli_ratio: Amount::PER_MILLI,
        }
    }
}

impl Config {
    pub fn load(cli: &Cli) -> Result<Config, CliError> {
        let mut c = match &cli.config {
            Some(p) => {
                let s = fs::read_to_string(p)
                    .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&s).map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))?
            }
            None => Config::default(),
        };
        if let Some(v) = &cli.data_dir {
            c.data_dir = v.clone();
        }
        if let Some(v) = cli.seed {
            c.seed = v;
        }
        if let Some(v) = cli.fee_rate {
            c.fee_rate = v;
        }
        if let Some(v) = cli.epoch_seconds {
            c.epoch_seconds = v;
        }
        if let Some(v) = cli.bandwidth {
            c.bandwidth = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Validation(m.to_string()));
        if self.fee_rate == 0 {
            return bad("fee_rate must be positive");
        }
        if !(self.epoch_seconds.is_finite() && self.epoch_seconds > 0.0) {
            return bad("epoch_seconds must be positive");
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return bad("bandwidth must be positive");
        }
        if self.milli_ratio == 0 {
            return bad("milli_ratio must be positive");
        }
        if scheme(self.scheme).is_none() {
            return Err(CliError::Validation(format!("unknown signature scheme {}", self.scheme)));
        }
        Ok(())
    }

    pub fn model(&self) -> CostModel {
        CostModel {
            fee_rate: self.fee_rate,
            epoch_seconds: self.epoch_seconds,
            upload_bandwidth: self.bandwidth,
            ..CostModel::default()
        }
    }

    fn sim_config(&self) -> SimConfig {
        SimConfig { epoch_seconds: self.epoch_seconds, ..SimConfig::default() }
    }
}

/// An amount in base units and mLTC.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Money {
    pub base: u64,
    pub mltc: f64,
}

impl Money {
    pub fn new(base: u64, config: &Config) -> Money {
        Money { base, mltc: base as f64 / config.milli_ratio as f64 }
    }
}

impl std::fmt::Display for Money {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} base units ({:.3} mLTC)", self.base, self.mltc)
    }
}

/// Runs the CLI on `args` and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut out = std::io::stdout().lock();
    match execute(&cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

/// Runs a parsed command, writing its report to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let config = Config::load(cli)?;
    match &cli.command {
        Command::Plan { file, manifest } => {
            let r = cmd_plan(&config, file, manifest.as_deref())?;
            let text = format!(
                "{} bytes: {} funding, {} spending, {} preparing, {} epochs\n\
                 construct {} bytes, fee {}\n\
                 throughput estimate {:.1} KB/s, goodput {:.4} (formula {:.4})\n",
                r.payload_size,
                r.funding_txs,
                r.spending_txs,
                r.preparing_txs,
                r.epochs,
                r.construct_size,
                r.fee,
                r.throughput / 1000.0,
                r.goodput,
                r.goodput_formula
            );
            emit(out, cli.json, &r, text)
        }
        Command::Init { subject, info, genesis } => {
            let r = cmd_init(&config, subject, info, *genesis)?;
            let text = format!(
                "publisher {} ({})\nroot directory at {} after {} blocks, fee {}\n",
                r.publisher, r.subject, r.init_txid, r.blocks, r.fee
            );
            emit(out, cli.json, &r, text)
        }
        Command::Store { file, path, create } => {
            let data = read_input(file)?;
            let r = cmd_store(&config, &data, path, *create)?;
            let text = format!(
                "{}: {} txs ({} funding, {} spending, {} preparing, {} entry) over {} epochs, {} blocks\n\
                 root {}\nentry {}\ncost {}\n",
                r.path,
                r.txs,
                r.funding,
                r.spending,
                r.preparing,
                r.entry,
                r.epochs,
                r.blocks,
                r.root.map(|t| t.to_string()).unwrap_or_default(),
                r.entry_txid.map(|t| t.to_string()).unwrap_or_default(),
                r.cost
            );
            emit(out, cli.json, &r, text)
        }
        Command::Remove { path } => {
            let r = cmd_remove(&config, path)?;
            let text = format!("{} removed by {}, cost {}\n", r.path, r.entry_txid.unwrap_or(Txid::ZERO), r.cost);
            emit(out, cli.json, &r, text)
        }
        Command::Access { target, output } => {
            let (r, data) = cmd_access(&config, target)?;
            match output {
                Some(p) => {
                    fs::write(p, &data).map_err(chain_err)?;
                    let text = format!("{} bytes from root {} written to {}\n", r.bytes, r.root, p.display());
                    emit(out, cli.json, &r, text)
                }
                None if cli.json => emit(out, true, &r, String::new()),
                None => out.write_all(&data).map_err(chain_err),
            }
        }
        Command::Scan => {
            let r = cmd_scan(&config)?;
            let mut text = format!(
                "height {}: {} publishers, {} directories, {} live files, {} quarantined, {} new records\n",
                r.height, r.publishers, r.directories, r.live_files.len(), r.quarantined, r.new_records
            );
            for f in &r.live_files {
                text.push_str(&format!("  {}  {}\n", f.root, f.path));
            }
            emit(out, cli.json, &r, text)
        }
        Command::Simulate { workload, csv, blocks_csv } => {
            let r = cmd_simulate(cli, &config, workload, csv.as_deref(), blocks_csv.as_deref())?;
            let mut text = format!("{} blocks, {} confirmed, {} unconfirmed, {} rejected\n", r.blocks, r.confirmed, r.unconfirmed, r.rejected);
            for (name, s) in [("financial", &r.financial), ("max-rate", &r.maxrate)] {
                text.push_str(&format!(
                    "{name:>9} delay (s): n={} mean={:.1} p50={:.1} p90={:.1} p99={:.1} max={:.1}\n",
                    s.count, s.mean, s.p50, s.p90, s.p99, s.max
                ));
            }
            text.push_str(&format!(
                "peak mempool {} bytes; max-rate peak {} txs / {} bytes\n",
                r.peak_mempool_bytes, r.peak_maxrate_count, r.peak_maxrate_bytes
            ));
            if let Some(u) = &r.utilization {
                text.push_str(&format!(
                    "writing window: {} blocks, space {:.4}, payload space {:.4}, txn {:.4}\n",
                    u.blocks, u.space, u.payload_space, u.txn
                ));
            }
            emit(out, cli.json, &r, text)
        }
        Command::Attack { kind, target, head_start, trials, edit, source_value, payload_bytes } => {
            let kind: AttackKind = kind.parse().map_err(CliError::Validation)?;
            let opts = AttackOpts {
                head_start: *head_start,
                trials: *trials,
                edit: edit.as_deref().map(parse_edit).transpose()?,
                source_value: *source_value,
                payload_bytes: *payload_bytes,
            };
            let r = cmd_attack(&config, kind, target, &opts)?;
            let mut text = format!("{} against {}: {}\n", kind.name(), r.target, r.message);
            if let Some(s) = &r.fuzz {
                text.push_str(&format!(
                    "{} mutations: {} standard, {} mined first, {} corrupted\n",
                    s.trials, s.standard_forgeries, s.forged_mined_first, s.corrupted
                ));
            }
            text.push_str(&format!("{}\n", r.report.outcome.reason));
            emit(out, cli.json, &r, text)
        }
    }
}

fn emit<T: Serialize>(out: &mut dyn Write, json: bool, report: &T, text: String) -> Result<(), CliError> {
    let s = if json { serde_json::to_string_pretty(report).map_err(chain_err)? + "\n" } else { text };
    out.write_all(s.as_bytes()).map_err(chain_err)
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub payload_size: u64,
    pub preparing_txs: usize,
    pub funding_txs: u64,
    pub spending_txs: u64,
    pub epochs: u64,
    pub formula_epochs: u64,
    pub construct_size: u64,
    pub fee: Money,
    pub estimated_cost: Money,
    /// Bytes per second.
    pub throughput: f64,
    pub goodput: f64,
    pub goodput_formula: f64,
    pub manifest: Option<PathBuf>,
}

fn wallet_key(config: &Config) -> WalletKey {
    WalletKey::from_seed(format!("uweb-wallet-{}", config.seed).as_bytes())
}

/// A construct source outside any simulator, for offline manifests.
fn offline_source(config: &Config, value: Amount) -> Source {
    let key = wallet_key(config);
    let outpoint = OutPoint::new(Txid(sha256(format!("uweb-source-{}", config.seed).as_bytes())), 0);
    Source { outpoint, value, script_pubkey: key.p2pkh(), key }
}

pub fn cmd_plan(config: &Config, file: &Path, manifest: Option<&Path>) -> Result<PlanReport, CliError> {
    let data = read_input(file)?;
    if data.is_empty() {
        return Err(CliError::Validation(format!("{} is empty", file.display())));
    }
    let model = config.model();
    let plan = plan_construct(data.len() as u64, &model).map_err(|e| CliError::Validation(e.to_string()))?;
    let n = data.len() as f64;
    if let Some(path) = manifest {
        let c = build_construct(&data, &model, &offline_source(config, plan.required_source_value)).map_err(chain_err)?;
        fs::write(path, c.manifest().map_err(chain_err)?.to_json()).map_err(chain_err)?;
    }
    Ok(PlanReport {
        payload_size: plan.payload_size,
        preparing_txs: plan.preparing_tx_count(),
        funding_txs: plan.funding_tx_count,
        spending_txs: plan.spending_tx_count,
        epochs: plan.epochs,
        formula_epochs: plan.formula_epochs,
        construct_size: plan.construct_total_size,
        fee: Money::new(plan.total_fee.0, config),
        estimated_cost: Money::new(estimate_cost(plan.payload_size, &model).map_err(chain_err)?.0, config),
        throughput: estimate_throughput(n, &model),
        goodput: plan.goodput(),
        goodput_formula: estimate_goodput(n, &model),
        manifest: manifest.map(Path::to_path_buf),
    })
}

/// Everything but the blocks, which live in `chain.jsonl`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct SavedState {
    config: SimConfig,
    now: f64,
    next_block_at: f64,
    utxo: Vec<(OutPoint, TxOutput)>,
    grants: Vec<Arc<Transaction>>,
    publisher: Publisher,
}

/// A locked state directory. The lock is released on drop.
struct StateDir {
    dir: PathBuf,
}

impl StateDir {
    const LOCK: &'static str = "uweb.lock";

    fn open(dir: &Path, create: bool) -> Result<StateDir, CliError> {
        if create {
            fs::create_dir_all(dir).map_err(chain_err)?;
        } else if !dir.join("state.json").exists() {
            return Err(CliError::Validation(format!("{} is not initialized; run init first", dir.display())));
        }
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(dir.join(Self::LOCK))
            .map_err(|e| CliError::Chain(format!("cannot lock {}: {e}", dir.display())))?;
        Ok(StateDir { dir: dir.to_path_buf() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn load(&self) -> Result<(Simulator, Publisher), CliError> {
        let state: SavedState = serde_json::from_str(&fs::read_to_string(self.path("state.json")).map_err(chain_err)?)
            .map_err(chain_err)?;
        let mut blocks = Vec::new();
        let chain_file = File::open(self.path("chain.jsonl")).map_err(chain_err)?;
        for line in BufReader::new(chain_file).lines() {
            let line = line.map_err(chain_err)?;
            if !line.trim().is_empty() {
                blocks.push(serde_json::from_str::<Block>(&line).map_err(chain_err)?);
            }
        }
        let chain = Chain::from_blocks(blocks, state.grants);
        let sim = Simulator::restore(state.config, chain, state.utxo, Vec::new(), state.now, state.next_block_at);
        Ok((sim, state.publisher))
    }

    /// Appends blocks above `saved_height` and rewrites the state file.
    fn save(&self, sim: &Simulator, publisher: &Publisher, saved_height: u64) -> Result<(), CliError> {
        if !sim.mempool().is_empty() {
            return Err(CliError::Chain("refusing to save with unconfirmed transactions".into()));
        }
        let file = OpenOptions::new().create(true).append(true).open(self.path("chain.jsonl")).map_err(chain_err)?;
        let mut w = BufWriter::new(file);
        for b in &sim.chain().blocks_unlogged()[saved_height as usize..] {
            serde_json::to_writer(&mut w, b).map_err(chain_err)?;
            w.write_all(b"\n").map_err(chain_err)?;
        }
        w.flush().map_err(chain_err)?;
        let state = SavedState {
            config: sim.config.clone(),
            now: sim.now(),
            next_block_at: sim.next_block_at(),
            utxo: sim.utxo_snapshot(),
            grants: sim.chain().grants.clone(),
            publisher: publisher.clone(),
        };
        let tmp = self.path("state.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&state).map_err(chain_err)?).map_err(chain_err)?;
        fs::rename(tmp, self.path("state.json")).map_err(chain_err)
    }

    /// The persisted index brought up to the chain tip.
    fn sync_index(&self, chain: &Chain) -> Result<(ContentIndex, usize), CliError> {
        let path = self.path("index.jsonl");
        let mut index = match File::open(&path) {
            Ok(f) => ContentIndex::from_jsonl(BufReader::new(f))?,
            Err(_) => ContentIndex::default(),
        };
        let new = index.scan(chain);
        let f = OpenOptions::new().create(true).append(true).open(&path).map_err(chain_err)?;
        append_jsonl(&new, BufWriter::new(f))?;
        Ok((index, new.len()))
    }
}

impl Drop for StateDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.dir.join(Self::LOCK));
    }
}

/// Fee paid by a set, resolving inputs against the set and the chain.
fn set_fee(sim: &Simulator, set: &TxSet) -> Result<u64, CliError> {
    let mut outs: HashMap<OutPoint, Amount> = HashMap::new();
    for s in &set.txs {
        let id = txid(&s.tx).map_err(chain_err)?;
        for (i, o) in s.tx.outputs.iter().enumerate() {
            outs.insert(OutPoint::new(id, i as u32), o.value);
        }
    }
    let mut fee = 0u64;
    for s in &set.txs {
        let mut value_in = 0u64;
        for i in &s.tx.inputs {
            let v = outs.get(&i.previous_output).copied().or_else(|| sim.prevout(&i.previous_output).map(|o| o.value));
            value_in += v.ok_or_else(|| CliError::Chain(format!("unresolved input {}", i.previous_output)))?.0;
        }
        fee += value_in - s.tx.total_output_value().0;
    }
    Ok(fee)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitReport {
    pub publisher: String,
    pub subject: String,
    pub init_txid: Txid,
    pub txs: usize,
    pub blocks: u64,
    pub fee: Money,
    pub balance: Money,
}

pub fn cmd_init(config: &Config, subject: &str, info: &str, genesis: u64) -> Result<InitReport, CliError> {
    if config.data_dir.join("state.json").exists() {
        return Err(CliError::Validation(format!("{} is already initialized", config.data_dir.display())));
    }
    let dir = StateDir::open(&config.data_dir, true)?;
    let mut sim = Simulator::new(config.sim_config());
    let purse = sim.fund(&wallet_key(config), Amount(genesis));
    let seed = format!("uweb-identity-{}-{subject}", config.seed);
    let identity = PublisherIdentity::from_seed(seed.as_bytes(), subject, info.as_bytes());
    let (publisher, set) = Publisher::client_setup(identity, purse, config.fee_rate)?;
    let fee = set_fee(&sim, &set)?;
    let blocks = publish(&mut sim, &set)?;
    fs::write(dir.path("chain.jsonl"), b"").map_err(chain_err)?;
    dir.save(&sim, &publisher, 0)?;
    dir.sync_index(sim.chain())?;
    Ok(InitReport {
        publisher: publisher.identity.id().to_string(),
        subject: subject.to_string(),
        init_txid: publisher.init_txid,
        txs: set.txs.len(),
        blocks,
        fee: Money::new(fee, config),
        balance: Money::new(publisher.purse.value.0, config),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreReport {
    pub path: String,
    pub bytes: usize,
    pub stored_bytes: usize,
    pub txs: usize,
    pub preparing: usize,
    pub funding: usize,
    pub spending: usize,
    pub entry: usize,
    pub epochs: u64,
    pub blocks: u64,
    pub root: Option<Txid>,
    pub entry_txid: Option<Txid>,
    pub cost: Money,
    pub balance: Money,
}

fn split(path: &str) -> Result<(String, String), CliError> {
    crate::fs::publisher::split_path(path)
        .map(|(d, n)| (d, n.to_string()))
        .ok_or_else(|| CliError::Validation(format!("{path:?} is not of the form /dir/name")))
}

fn commit(config: &Config, path: &str, bytes: usize, op: impl FnOnce(&mut Publisher) -> Result<TxSet, FsError>) -> Result<StoreReport, CliError> {
    let dir = StateDir::open(&config.data_dir, false)?;
    let (mut sim, mut publisher) = dir.load()?;
    let height = sim.chain().height();
    let set = op(&mut publisher)?;
    let fee = set_fee(&sim, &set)?;
    let blocks = publish(&mut sim, &set)?;
    dir.save(&sim, &publisher, height)?;
    dir.sync_index(sim.chain())?;
    let stored = set.txs.iter().filter(|s| s.class == TxClass::Spending).map(|s| {
        s.tx.inputs.iter().filter_map(|i| crate::maxrate::extract_chunk(&i.script_sig).ok()).map(|c| c.len()).sum::<usize>()
    }).sum();
    Ok(StoreReport {
        path: path.to_string(),
        bytes,
        stored_bytes: stored,
        txs: set.txs.len(),
        preparing: set.count(TxClass::Preparing),
        funding: set.count(TxClass::Funding),
        spending: set.count(TxClass::Spending),
        entry: set.count(TxClass::Entry),
        epochs: set.epochs(),
        blocks,
        root: set.root,
        entry_txid: set.entry,
        cost: Money::new(fee, config),
        balance: Money::new(publisher.purse.value.0, config),
    })
}

pub fn cmd_store(config: &Config, data: &[u8], path: &str, create: bool) -> Result<StoreReport, CliError> {
    let (d, name) = split(path)?;
    commit(config, path, data.len(), |p| p.store(&d, &name, data, create))
}

pub fn cmd_remove(config: &Config, path: &str) -> Result<StoreReport, CliError> {
    let (d, name) = split(path)?;
    commit(config, path, 0, |p| p.remove(&d, &name))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccessReport {
    pub target: String,
    pub root: Txid,
    pub bytes: usize,
    pub sha256: String,
}

pub fn cmd_access(config: &Config, target: &str) -> Result<(AccessReport, Vec<u8>), CliError> {
    let t: Target = target.parse()?;
    let dir = StateDir::open(&config.data_dir, false)?;
    let (sim, _) = dir.load()?;
    let (index, _) = dir.sync_index(sim.chain())?;
    let root = crate::fs::resolve(&index, &t)?;
    let data = access(&index, sim.chain(), &t)?;
    Ok((
        AccessReport { target: target.to_string(), root, bytes: data.len(), sha256: hex::encode(sha256(&data)) },
        data,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ListedFile {
    pub publisher: String,
    pub path: String,
    pub root: Txid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub height: u64,
    pub publishers: usize,
    pub directories: usize,
    pub quarantined: usize,
    pub new_records: usize,
    pub live_files: Vec<ListedFile>,
}

pub fn cmd_scan(config: &Config) -> Result<ScanReport, CliError> {
    let dir = StateDir::open(&config.data_dir, false)?;
    let (sim, _) = dir.load()?;
    let (index, new_records) = dir.sync_index(sim.chain())?;
    Ok(ScanReport {
        height: index.scan_height,
        publishers: index.publishers.len(),
        directories: index.directories.len(),
        quarantined: index.quarantine.len(),
        new_records,
        live_files: index
            .live_files()
            .map(|f| ListedFile {
                publisher: f.publisher.to_string(),
                path: f.path.clone(),
                root: f.current_root().unwrap_or(Txid::ZERO),
            })
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub seed: u64,
    pub blocks: usize,
    pub confirmed: usize,
    pub unconfirmed: usize,
    pub rejected: usize,
    pub end_time: f64,
    pub financial: DelaySummary,
    pub maxrate: DelaySummary,
    pub peak_mempool_bytes: u64,
    pub peak_maxrate_count: usize,
    pub peak_maxrate_bytes: u64,
    pub last_maxrate_confirmation: Option<f64>,
    pub utilization: Option<WindowUtilization>,
}

pub fn cmd_simulate(
    cli: &Cli,
    config: &Config,
    workload: &Path,
    csv: Option<&Path>,
    blocks_csv: Option<&Path>,
) -> Result<SimulateReport, CliError> {
    let text = fs::read_to_string(workload)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", workload.display())))?;
    let mut spec = WorkloadSpec::from_json(&text).map_err(|e| CliError::Validation(e.to_string()))?;
    if cli.seed.is_some() {
        spec.seed = config.seed;
    }
    if cli.epoch_seconds.is_some() {
        spec.epoch_seconds = config.epoch_seconds;
    }
    let stats = crate::sim::run(&spec).map_err(|e| match e {
        crate::sim::WorkloadError::Plan(p) => chain_err(p),
        other => CliError::Validation(other.to_string()),
    })?;
    if let Some(p) = csv {
        stats.write_tx_csv(File::create(p).map_err(chain_err)?).map_err(chain_err)?;
    }
    if let Some(p) = blocks_csv {
        stats.write_block_csv(File::create(p).map_err(chain_err)?).map_err(chain_err)?;
    }
    let (peak_count, peak_bytes) = stats.peak_maxrate();
    Ok(SimulateReport {
        seed: spec.seed,
        blocks: stats.blocks.len(),
        confirmed: stats.records.len(),
        unconfirmed: stats.unconfirmed,
        rejected: stats.rejected,
        end_time: stats.end_time,
        financial: DelaySummary::of(&stats.financial_delays()),
        maxrate: DelaySummary::of(&stats.maxrate_delays()),
        peak_mempool_bytes: stats.peak_mempool_bytes(),
        peak_maxrate_count: peak_count,
        peak_maxrate_bytes: peak_bytes,
        last_maxrate_confirmation: stats
            .last_confirmation(&[TxClass::Preparing, TxClass::Funding, TxClass::Spending]),
        utilization: stats.writing_window_utilization(),
    })
}

pub struct AttackOpts {
    pub head_start: f64,
    pub trials: usize,
    pub edit: Option<ByteEdit>,
    pub source_value: Option<u64>,
    pub payload_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackCliReport {
    pub target: String,
    pub message: String,
    pub fuzz: Option<FuzzSummary>,
    pub report: AttackReport,
}

fn parse_edit(s: &str) -> Result<ByteEdit, CliError> {
    let bad = || CliError::Validation(format!("edit {s:?} is not input:offset:value"));
    let parts: Vec<&str> = s.split(':').collect();
    let [i, o, v] = parts[..] else { return Err(bad()) };
    Ok(ByteEdit {
        input: i.parse().map_err(|_| bad())?,
        offset: o.parse().map_err(|_| bad())?,
        value: v.parse().map_err(|_| bad())?,
    })
}

/// Confirms every non-spending transaction epoch by epoch.
fn confirm_staged(sim: &mut Simulator, staged: Vec<(u64, TxClass, Transaction)>) -> Result<(), CliError> {
    let set = TxSet {
        txs: staged.into_iter().map(|(epoch, class, tx)| crate::fs::StagedTx { epoch, class, tx }).collect(),
        root: None,
        entry: None,
    };
    publish(sim, &set)?;
    Ok(())
}

fn role_class(role: Role) -> TxClass {
    match role {
        Role::Preparing => TxClass::Preparing,
        Role::Funding => TxClass::Funding,
        Role::Spending => TxClass::Spending,
    }
}

fn staged_construct(sim: &mut Simulator, c: &Construct) -> Result<Vec<Transaction>, CliError> {
    let parents = c
        .transactions()
        .filter(|(r, _, _)| *r != Role::Spending)
        .map(|(r, e, tx)| (e, role_class(r), tx.clone()))
        .collect();
    confirm_staged(sim, parents)?;
    Ok(c.spending.clone())
}

/// The output a manifest's root spends, granted to the simulator.
fn grant_manifest_source(sim: &mut Simulator, root: &Transaction, value: Option<u64>, fee_rate: u64) -> Result<(), CliError> {
    let input = root.inputs.first().ok_or_else(|| CliError::Validation("root has no inputs".into()))?;
    let pubkey = match input.script_sig.parse().ok().and_then(|i| i.last().cloned()) {
        Some(Instruction::Push { data, .. }) => data.to_vec(),
        _ => return Err(CliError::Validation("root input does not end with a key push".into())),
    };
    let value = value.unwrap_or(root.total_output_value().0 + root.serialized_size() as u64 * fee_rate);
    sim.grant_output(input.previous_output, TxOutput::new(Amount(value), Script::new_p2pkh(&hash160(&pubkey))));
    Ok(())
}

pub fn cmd_attack(config: &Config, kind: AttackKind, target: &str, opts: &AttackOpts) -> Result<AttackCliReport, CliError> {
    let mut sim = Simulator::new(config.sim_config());
    let key = wallet_key(config);
    let mut payload = vec![0u8; opts.payload_bytes.max(1)];
    ChaCha8Rng::seed_from_u64(config.seed).fill_bytes(&mut payload);
    let victims = match target {
        "maxrate" => {
            let source = sim.fund(&key, Amount(u64::MAX / 4));
            let c = build_construct(&payload, &config.model(), &source).map_err(chain_err)?;
            staged_construct(&mut sim, &c)?
        }
        "baseline" => {
            let source = sim.fund(&key, Amount(u64::MAX / 4));
            let c = build_baseline(&payload, &source, &key, config.fee_rate).map_err(chain_err)?;
            confirm_staged(&mut sim, vec![(0, TxClass::Funding, c.funding.clone())])?;
            c.spending
        }
        path => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read manifest {path}: {e}")))?;
            let m = Manifest::from_json(&text).map_err(|e| CliError::Validation(e.to_string()))?;
            let txs = m.decode().map_err(|e: MaxRateError| CliError::Validation(e.to_string()))?;
            let root = &txs.first().ok_or_else(|| CliError::Validation("manifest is empty".into()))?.2;
            grant_manifest_source(&mut sim, root, opts.source_value, config.fee_rate)?;
            let (spending, parents): (Vec<_>, Vec<_>) = txs.into_iter().partition(|(r, _, _)| *r == Role::Spending);
            confirm_staged(&mut sim, parents.into_iter().map(|(r, e, tx)| (e, role_class(r), tx)).collect())?;
            spending.into_iter().map(|(_, _, tx)| tx).collect()
        }
    };
    let victim = victims.first().ok_or_else(|| CliError::Validation("target has no spending transaction".into()))?.clone();
    let attacker = hash160(format!("uweb-attacker-{}", config.seed).as_bytes());

    let (outcome, fuzz) = match kind {
        AttackKind::OutputMod => (output_modification_attack(&mut sim, &victim, attacker, opts.head_start), None),
        AttackKind::InputMod => {
            let (mutation, fuzz) = match opts.edit {
                Some(e) => (vec![e], None),
                None => {
                    let summary = fuzz_input_mod(&sim, &victim, opts.trials, opts.head_start, config.seed);
                    // race a standard forgery if sampling finds one
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                    let first = random_mutation(&mut rng, &victim);
                    let mut pick = first.clone();
                    for _ in 0..opts.trials {
                        let m = random_mutation(&mut rng, &victim);
                        if forge_input_mod(&sim, &victim, &m).standard {
                            pick = m;
                            break;
                        }
                    }
                    (pick, Some(summary))
                }
            };
            (input_modification_attack(&mut sim, &victim, &mutation, opts.head_start), fuzz)
        }
    };
    let message = if !outcome.forged_standard {
        match outcome.rule {
            Some(rule) => format!("forgery nonstandard: {rule}"),
            None => "not applicable".to_string(),
        }
    } else if outcome.data_corrupted {
        "corruption succeeded".to_string()
    } else if outcome.succeeded() {
        format!("theft succeeded: {} base units", outcome.value_stolen.0)
    } else {
        "forgery lost the race".to_string()
    };
    Ok(AttackCliReport {
        target: target.to_string(),
        message,
        fuzz,
        report: AttackReport::new(&outcome, &victim),
    })
}
