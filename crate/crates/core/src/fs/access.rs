//! Content reconstruction from the complete local chain.

use std::collections::{HashMap, HashSet};
use std::str::FromStr;

use crate::codec::transaction::{OutPoint, Transaction};
use crate::codec::{sha256, Txid};
use crate::maxrate::{extract_chunk, DataMarker};
use crate::sim::Chain;

use super::index::ContentIndex;
use super::publisher::decompress;
use super::FsError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    /// `/dir/file`, or `publisher:/dir/file` to pick a publisher by subject
    /// or id prefix.
    Path { publisher: Option<String>, path: String },
    /// A content root, or the txid of the entry that recorded it.
    Txid(Txid),
}

impl FromStr for Target {
    type Err = FsError;

    fn from_str(s: &str) -> Result<Target, FsError> {
        if s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Txid::from_str(s).map(Target::Txid).map_err(|e| FsError::InvalidName(e.to_string()));
        }
        if s.starts_with('/') {
            return Ok(Target::Path { publisher: None, path: s.to_string() });
        }
        match s.split_once(':') {
            Some((p, path)) if path.starts_with('/') => {
                Ok(Target::Path { publisher: Some(p.to_string()), path: path.to_string() })
            }
            _ => Err(FsError::InvalidName(format!("{s:?} is neither a path nor a txid"))),
        }
    }
}

/// Content root named by `target`.
pub fn resolve(index: &ContentIndex, target: &Target) -> Result<Txid, FsError> {
    match target {
        Target::Path { publisher, path } => {
            let file = index.lookup(publisher.as_deref(), path)?;
            file.current_root().ok_or_else(|| FsError::NotFound(path.clone()))
        }
        Target::Txid(t) => Ok(index
            .find_by_txid(t)
            .and_then(|f| f.history.iter().find(|op| op.entry_txid == *t).and_then(|op| op.root))
            .unwrap_or(*t)),
    }
}

/// Reassembles the stored (compressed) payload under `root` by walking the
/// chain from it. Chunk order follows the tree: outputs in vout order,
/// depth first. Data markers are only cross-checked, so a rewritten marker
/// cannot reorder or hide content. Reads the whole chain once; no
/// transaction is fetched individually.
pub fn fetch_payload(chain: &Chain, root: Txid) -> Result<Vec<u8>, FsError> {
    let blocks = chain.read_all();
    let mut txs: HashMap<Txid, &Transaction> = HashMap::new();
    let mut spender: HashMap<OutPoint, (Txid, usize)> = HashMap::new();
    for b in blocks {
        for t in &b.txs {
            if let Some(tx) = &t.tx {
                txs.insert(t.txid, tx);
                for (n, i) in tx.inputs.iter().enumerate() {
                    spender.insert(i.previous_output, (t.txid, n));
                }
            }
        }
    }
    let root_tx = txs.get(&root).ok_or_else(|| FsError::Incomplete(format!("root {root} not on chain")))?;
    if DataMarker::from_tx(root_tx).is_some() {
        return Err(FsError::Incomplete(format!("{root} is a spending transaction, not a root")));
    }
    let mut data = Vec::new();
    let mut spending = HashSet::new();
    walk(&txs, &spender, root, &mut data, &mut spending)?;
    if spending.is_empty() {
        return Err(FsError::Incomplete(format!("no data under {root}")));
    }
    let digest = sha256(&data);
    for id in &spending {
        match DataMarker::from_tx(txs[id]) {
            Some(m) if m.digest_prefix == digest[..m.digest_prefix.len()] => {}
            _ => log::warn!("spending transaction {id} carries a stale or foreign data marker"),
        }
    }
    Ok(data)
}

fn walk(
    txs: &HashMap<Txid, &Transaction>,
    spender: &HashMap<OutPoint, (Txid, usize)>,
    id: Txid,
    data: &mut Vec<u8>,
    spending: &mut HashSet<Txid>,
) -> Result<(), FsError> {
    let tx = txs[&id];
    // funding and preparing outputs are P2SH; change is P2PKH
    for (vout, out) in tx.outputs.iter().enumerate() {
        if !out.script_pubkey.is_p2sh() {
            continue;
        }
        let op = OutPoint::new(id, vout as u32);
        let &(child, n) = spender.get(&op).ok_or_else(|| FsError::Incomplete(format!("output {op} unspent")))?;
        match extract_chunk(&txs[&child].inputs[n].script_sig) {
            Ok(chunk) => {
                data.extend(chunk);
                spending.insert(child);
            }
            Err(_) => walk(txs, spender, child, data, spending)?,
        }
    }
    Ok(())
}

/// Original bytes of `target`.
pub fn access(index: &ContentIndex, chain: &Chain, target: &Target) -> Result<Vec<u8>, FsError> {
    let root = resolve(index, target)?;
    let payload = fetch_payload(chain, root)?;
    decompress(&payload).map_err(|e| FsError::Integrity(format!("decompression failed: {e}")))
}
