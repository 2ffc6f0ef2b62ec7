//! Publisher-side construction of setup, store, update and remove
//! transaction sets.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::codec::script::{op, Script};
use crate::codec::transaction::{txid, Amount, OutPoint, Transaction, TxInput, TxOutput};
use crate::codec::{hash160, Txid};
use crate::maxrate::{build_construct, CostModel, Role, Source};
use crate::sim::{Simulator, TxClass};

use super::entry::{init_stream, split_pieces, Directive, UWebEntry};
use super::identity::PublisherIdentity;
use super::FsError;

/// Value locked in each chaining output.
pub const CHAIN_VALUE: Amount = Amount(1_000);
const CHANGE_DUST: u64 = 546;

pub fn chain_redeem_script(secret: &[u8; 32]) -> Script {
    Script::builder()
        .push_opcode(op::OP_HASH160)
        .push_slice(&hash160(secret))
        .push_opcode(op::OP_EQUAL)
        .into_script()
}

pub fn chain_script_pubkey(secret: &[u8; 32]) -> Script {
    Script::p2sh_for(&chain_redeem_script(secret))
}

fn chain_unlock(secret: &[u8; 32]) -> Script {
    Script::builder()
        .push_slice(secret)
        .push_slice(chain_redeem_script(secret).as_bytes())
        .into_script()
}

/// An unspent hash-locked output that continues an entry chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub outpoint: OutPoint,
    pub value: Amount,
    pub secret_index: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagedTx {
    /// Blocks after the set's first submission at which this transaction
    /// may be sent; every earlier epoch must be confirmed first.
    pub epoch: u64,
    pub class: TxClass,
    pub tx: Transaction,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxSet {
    pub txs: Vec<StagedTx>,
    /// Root of the max-rate construct, when the set stores content.
    pub root: Option<Txid>,
    /// First transaction of the last entry in the set.
    pub entry: Option<Txid>,
}

impl TxSet {
    pub fn epochs(&self) -> u64 {
        self.txs.iter().map(|t| t.epoch + 1).max().unwrap_or(0)
    }

    pub fn count(&self, class: TxClass) -> usize {
        self.txs.iter().filter(|t| t.class == class).count()
    }

    pub fn total_size(&self) -> u64 {
        self.txs.iter().map(|t| t.tx.serialized_size() as u64).sum()
    }

    pub fn txids(&self) -> Result<Vec<Txid>, FsError> {
        self.txs.iter().map(|t| Ok(txid(&t.tx)?)).collect()
    }
}

/// Submits a set epoch by epoch, mining until each epoch confirms. Returns
/// the number of blocks mined.
pub fn publish(sim: &mut Simulator, set: &TxSet) -> Result<u64, FsError> {
    const MAX_BLOCKS_PER_EPOCH: u64 = 10_000;
    let mut mined = 0;
    for e in 0..set.epochs() {
        let mut ids = Vec::new();
        for s in set.txs.iter().filter(|s| s.epoch == e) {
            ids.push(txid(&s.tx)?);
            let now = sim.now();
            sim.submit_tx(s.tx.clone(), s.class, now)?;
        }
        let mut waited = 0;
        while !ids.iter().all(|id| sim.is_confirmed(id)) {
            if waited == MAX_BLOCKS_PER_EPOCH {
                return Err(FsError::Stalled(e));
            }
            sim.mine_next();
            waited += 1;
        }
        mined += waited;
    }
    Ok(mined)
}

pub fn compress(data: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(data).expect("writing to memory");
    enc.finish().expect("writing to memory")
}

pub fn decompress(data: &[u8]) -> Result<Vec<u8>, std::io::Error> {
    let mut out = Vec::new();
    GzDecoder::new(data).read_to_end(&mut out)?;
    Ok(out)
}

/// Canonical form of a directory path: `/` or `/a/b`.
pub fn normalize_dir(dir: &str) -> Result<String, FsError> {
    if !dir.starts_with('/') {
        return Err(FsError::InvalidName(format!("{dir:?} is not absolute")));
    }
    let parts: Vec<&str> = dir.split('/').filter(|p| !p.is_empty()).collect();
    for p in &parts {
        check_name(p)?;
    }
    Ok(format!("/{}", parts.join("/")))
}

pub(crate) fn check_name(name: &str) -> Result<(), FsError> {
    if name.is_empty() || name == "." || name == ".." || name.contains('/') || name.contains(':') {
        return Err(FsError::InvalidName(format!("{name:?}")));
    }
    Ok(())
}

pub fn join_path(dir: &str, name: &str) -> String {
    if dir == "/" {
        format!("/{name}")
    } else {
        format!("{dir}/{name}")
    }
}

pub fn split_path(dir: &str) -> Option<(String, &str)> {
    let (parent, name) = dir.rsplit_once('/')?;
    if name.is_empty() {
        return None;
    }
    Some((if parent.is_empty() { "/".to_string() } else { parent.to_string() }, name))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileState {
    pub root: Txid,
    pub live: bool,
}

/// Local state of a publisher: wallet output, chain tips and file table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Publisher {
    pub identity: PublisherIdentity,
    pub purse: Source,
    pub fee_rate: u64,
    pub dirs: BTreeMap<String, ChainOutput>,
    pub files: BTreeMap<String, FileState>,
    pub init_txid: Txid,
    next_secret: u64,
}

impl Publisher {
    /// Writes the root directory: certificate-carrying INIT entries whose
    /// last chaining output starts the root OP chain.
    pub fn client_setup(
        identity: PublisherIdentity,
        purse: Source,
        fee_rate: u64,
    ) -> Result<(Publisher, TxSet), FsError> {
        let mut p = Publisher {
            identity,
            purse,
            fee_rate: fee_rate.max(1),
            dirs: BTreeMap::new(),
            files: BTreeMap::new(),
            init_txid: Txid::ZERO,
            next_secret: 0,
        };
        let mut set = TxSet::default();
        let stream = init_stream(&p.identity.certificate);
        let (tip, _, first) = p.entry_txs(&stream, None, 0, 0, &mut set)?;
        p.dirs.insert("/".into(), tip);
        p.init_txid = first;
        set.entry = Some(first);
        Ok((p, set))
    }

    pub fn is_live(&self, path: &str) -> bool {
        self.files.get(path).is_some_and(|f| f.live)
    }

    fn take_secret(&mut self) -> u64 {
        self.next_secret += 1;
        self.next_secret - 1
    }

    /// Chains one entry's pieces off `chain_in`, funding each piece from the
    /// purse. The last piece also opens `heads` new chains. Returns the
    /// continuing tip, the new heads and the first piece's txid.
    fn entry_txs(
        &mut self,
        stream: &[u8],
        chain_in: Option<ChainOutput>,
        heads: usize,
        epoch: u64,
        set: &mut TxSet,
    ) -> Result<(ChainOutput, Vec<ChainOutput>, Txid), FsError> {
        let pieces = split_pieces(stream);
        let mut chain = chain_in;
        let mut first = None;
        let mut new_heads = Vec::new();
        for (i, piece) in pieces.iter().enumerate() {
            let last = i + 1 == pieces.len();
            let mut inputs = Vec::new();
            let mut value_in = 0u64;
            if let Some(c) = chain {
                inputs.push(TxInput::new(c.outpoint, chain_unlock(&self.identity.chain_secret(c.secret_index))));
                value_in += c.value.0;
            }
            let purse = self.purse.clone();
            inputs.push(TxInput::new(purse.outpoint, purse.key.unlock(&purse.script_pubkey, &purse.outpoint)?));
            value_in += purse.value.0;

            let next = self.take_secret();
            let mut outputs = vec![
                TxOutput::new(Amount::ZERO, Script::new_op_return(piece)),
                TxOutput::new(CHAIN_VALUE, chain_script_pubkey(&self.identity.chain_secret(next))),
            ];
            let head_secrets: Vec<u64> = if last { (0..heads).map(|_| self.take_secret()).collect() } else { vec![] };
            for &h in &head_secrets {
                outputs.push(TxOutput::new(CHAIN_VALUE, chain_script_pubkey(&self.identity.chain_secret(h))));
            }
            outputs.push(TxOutput::new(Amount::ZERO, purse.key.p2pkh()));
            let mut tx = Transaction::new(inputs, outputs);
            let fee = tx.serialized_size() as u64 * self.fee_rate;
            let paid = tx.total_output_value().0;
            if value_in < paid + fee + CHANGE_DUST {
                return Err(FsError::InsufficientFunds {
                    needed: Amount(paid + fee + CHANGE_DUST - chain.map_or(0, |c| c.value.0)),
                    available: purse.value,
                });
            }
            let change = value_in - paid - fee;
            let n = tx.outputs.len();
            tx.outputs[n - 1].value = Amount(change);
            let id = txid(&tx)?;
            first.get_or_insert(id);
            self.purse = Source {
                outpoint: OutPoint::new(id, n as u32 - 1),
                value: Amount(change),
                script_pubkey: purse.script_pubkey.clone(),
                key: purse.key,
            };
            chain = Some(ChainOutput { outpoint: OutPoint::new(id, 1), value: CHAIN_VALUE, secret_index: next });
            for (j, &h) in head_secrets.iter().enumerate() {
                new_heads.push(ChainOutput {
                    outpoint: OutPoint::new(id, 2 + j as u32),
                    value: CHAIN_VALUE,
                    secret_index: h,
                });
            }
            set.txs.push(StagedTx { epoch, class: TxClass::Entry, tx });
        }
        Ok((chain.expect("at least one piece"), new_heads, first.expect("at least one piece")))
    }

    /// Appends a signed entry to the chain of `dir`.
    fn append(
        &mut self,
        dir: &str,
        entry: &UWebEntry,
        heads: usize,
        epoch: u64,
        set: &mut TxSet,
    ) -> Result<(Vec<ChainOutput>, Txid), FsError> {
        let tip = *self.dirs.get(dir).ok_or_else(|| FsError::NoChainTip(dir.to_string()))?;
        let (tip, heads, first) = self.entry_txs(&entry.stream(), Some(tip), heads, epoch, set)?;
        self.dirs.insert(dir.to_string(), tip);
        set.entry = Some(first);
        Ok((heads, first))
    }

    fn mkdir_into(&mut self, dir: &str, set: &mut TxSet) -> Result<(), FsError> {
        if self.dirs.contains_key(dir) {
            return Ok(());
        }
        let (parent, name) = split_path(dir).ok_or_else(|| FsError::InvalidName(dir.to_string()))?;
        self.mkdir_into(&parent, set)?;
        let entry = UWebEntry::signed(&self.identity, Directive::Mkdir, None, name);
        let (heads, _) = self.append(&parent, &entry, 1, 0, set)?;
        self.dirs.insert(dir.to_string(), heads[0]);
        Ok(())
    }

    /// Creates `dir` and any missing parents.
    pub fn mkdir(&mut self, dir: &str) -> Result<TxSet, FsError> {
        let dir = normalize_dir(dir)?;
        let mut next = self.clone();
        let mut set = TxSet::default();
        next.mkdir_into(&dir, &mut set)?;
        *self = next;
        Ok(set)
    }

    /// Compresses and writes `data`, then records it under `dir/fname` with
    /// a FILE entry, or an UPDATE entry when the name is already live.
    pub fn store(&mut self, dir: &str, fname: &str, data: &[u8], create: bool) -> Result<TxSet, FsError> {
        self.write(dir, fname, data, create, false)
    }

    pub fn update(&mut self, dir: &str, fname: &str, data: &[u8]) -> Result<TxSet, FsError> {
        self.write(dir, fname, data, false, true)
    }

    fn write(&mut self, dir: &str, fname: &str, data: &[u8], create: bool, must_exist: bool) -> Result<TxSet, FsError> {
        let dir = normalize_dir(dir)?;
        check_name(fname)?;
        if data.is_empty() {
            return Err(FsError::EmptyContent);
        }
        let path = join_path(&dir, fname);
        if must_exist && !self.is_live(&path) {
            return Err(FsError::NotFound(path));
        }
        let mut next = self.clone();
        let mut set = TxSet::default();
        if !next.dirs.contains_key(&dir) {
            if !create {
                return Err(FsError::UnknownDir(dir));
            }
            next.mkdir_into(&dir, &mut set)?;
        }
        let mkdir_epochs = set.epochs();
        let model = CostModel { fee_rate: next.fee_rate, ..CostModel::default() };
        let construct = build_construct(&compress(data), &model, &next.purse)?;
        for (role, epoch, tx) in construct.transactions() {
            let class = match role {
                Role::Preparing => TxClass::Preparing,
                Role::Funding => TxClass::Funding,
                Role::Spending => TxClass::Spending,
            };
            set.txs.push(StagedTx { epoch: mkdir_epochs + epoch, class, tx: tx.clone() });
        }
        let root_tx = construct.preparing.first().and_then(|l| l.first()).unwrap_or(&construct.funding[0]);
        let root = txid(root_tx)?;
        let change = root_tx.outputs.last().expect("construct change");
        next.purse = Source {
            outpoint: OutPoint::new(root, root_tx.outputs.len() as u32 - 1),
            value: change.value,
            script_pubkey: change.script_pubkey.clone(),
            key: next.purse.key,
        };
        let directive = if next.is_live(&path) { Directive::Update } else { Directive::File };
        let entry = UWebEntry::signed(&next.identity, directive, Some(root), fname);
        let epoch = mkdir_epochs + construct.plan.epochs - 1;
        next.append(&dir, &entry, 0, epoch, &mut set)?;
        next.files.insert(path, FileState { root, live: true });
        set.root = Some(root);
        *self = next;
        Ok(set)
    }

    pub fn remove(&mut self, dir: &str, fname: &str) -> Result<TxSet, FsError> {
        let dir = normalize_dir(dir)?;
        check_name(fname)?;
        let path = join_path(&dir, fname);
        if !self.is_live(&path) {
            return Err(FsError::NotFound(path));
        }
        let mut next = self.clone();
        let mut set = TxSet::default();
        let entry = UWebEntry::signed(&next.identity, Directive::Remove, None, fname);
        next.append(&dir, &entry, 0, 0, &mut set)?;
        if let Some(f) = next.files.get_mut(&path) {
            f.live = false;
        }
        *self = next;
        Ok(set)
    }
}
