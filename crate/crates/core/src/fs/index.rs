//! Full-chain scanner and the content index it builds.
//!
//! Scanning is a single pass in block order. Every live chaining output is
//! tracked by a cursor, so a rescan that resumes from `scan_height` takes the
//! same path a scan from genesis would.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::codec::transaction::{OutPoint, Transaction};
use crate::codec::Txid;
use crate::sim::Chain;

use super::entry::{Directive, EntryKind, StreamHeader, UWebEntry, INIT_TAG};
use super::identity::{Certificate, PublisherId};
use super::publisher::{check_name, join_path};
use super::FsError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cursor {
    /// None while the publisher's INIT entry is still being read.
    pub publisher: Option<PublisherId>,
    pub dir: String,
    /// First transaction of the entry being read.
    pub first_txid: Txid,
    /// Bytes of an entry whose remaining pieces are still to come.
    #[serde(with = "hex::serde")]
    pub pending: Vec<u8>,
}

/// One line of the index file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum IndexRecord {
    Publisher { id: PublisherId, certificate: Certificate, init_txid: Txid, height: u64 },
    Directory { publisher: PublisherId, path: String, entry_txid: Txid, height: u64 },
    File { publisher: PublisherId, path: String, directive: Directive, root: Option<Txid>, entry_txid: Txid, height: u64 },
    Quarantine { txid: Txid, height: u64, reason: String },
    Cursor { outpoint: OutPoint, cursor: Option<Cursor> },
    Scanned { height: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublisherRecord {
    pub certificate: Certificate,
    pub init_txid: Txid,
    pub height: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectoryRecord {
    pub publisher: PublisherId,
    pub path: String,
    pub entry_txid: Txid,
    pub height: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileOp {
    pub directive: Directive,
    pub root: Option<Txid>,
    pub entry_txid: Txid,
    pub height: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub publisher: PublisherId,
    pub path: String,
    /// Every operation on the file in chain order.
    pub history: Vec<FileOp>,
}

impl FileRecord {
    pub fn is_live(&self) -> bool {
        self.history.last().is_some_and(|op| op.directive != Directive::Remove)
    }

    /// Root transaction of the current content.
    pub fn current_root(&self) -> Option<Txid> {
        if self.is_live() {
            self.history.last().and_then(|op| op.root)
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantineRecord {
    pub txid: Txid,
    pub height: u64,
    pub reason: String,
}

fn key(publisher: PublisherId, path: &str) -> String {
    format!("{publisher}:{path}")
}

#[derive(Clone, Debug, Default)]
pub struct ContentIndex {
    /// Blocks below this height have been processed.
    pub scan_height: u64,
    pub publishers: BTreeMap<PublisherId, PublisherRecord>,
    /// Keyed by `publisher:path`.
    pub directories: BTreeMap<String, DirectoryRecord>,
    /// Keyed by `publisher:path`.
    pub files: BTreeMap<String, FileRecord>,
    pub quarantine: Vec<QuarantineRecord>,
    pub cursors: BTreeMap<OutPoint, Cursor>,
    log: Vec<IndexRecord>,
}

impl PartialEq for ContentIndex {
    fn eq(&self, other: &Self) -> bool {
        self.scan_height == other.scan_height
            && self.publishers == other.publishers
            && self.directories == other.directories
            && self.files == other.files
            && self.quarantine == other.quarantine
            && self.cursors == other.cursors
    }
}

/// Scans `chain` from `from_height` into a fresh index.
pub fn scan_chain(chain: &Chain, from_height: u64) -> ContentIndex {
    let mut index = ContentIndex { scan_height: from_height, ..ContentIndex::default() };
    index.scan(chain);
    index
}

impl ContentIndex {
    pub fn apply(&mut self, rec: IndexRecord) {
        match &rec {
            IndexRecord::Publisher { id, certificate, init_txid, height } => {
                self.publishers.insert(
                    *id,
                    PublisherRecord { certificate: certificate.clone(), init_txid: *init_txid, height: *height },
                );
            }
            IndexRecord::Directory { publisher, path, entry_txid, height } => {
                self.directories.insert(
                    key(*publisher, path),
                    DirectoryRecord { publisher: *publisher, path: path.clone(), entry_txid: *entry_txid, height: *height },
                );
            }
            IndexRecord::File { publisher, path, directive, root, entry_txid, height } => {
                self.files
                    .entry(key(*publisher, path))
                    .or_insert_with(|| FileRecord { publisher: *publisher, path: path.clone(), history: Vec::new() })
                    .history
                    .push(FileOp { directive: *directive, root: *root, entry_txid: *entry_txid, height: *height });
            }
            IndexRecord::Quarantine { txid, height, reason } => {
                self.quarantine.push(QuarantineRecord { txid: *txid, height: *height, reason: reason.clone() });
            }
            IndexRecord::Cursor { outpoint, cursor } => match cursor {
                Some(c) => {
                    self.cursors.insert(*outpoint, c.clone());
                }
                None => {
                    self.cursors.remove(outpoint);
                }
            },
            IndexRecord::Scanned { height } => self.scan_height = *height,
        }
        self.log.push(rec);
    }

    pub fn records(&self) -> &[IndexRecord] {
        &self.log
    }

    /// Processes every block from `scan_height` to the tip and returns the
    /// records produced.
    pub fn scan(&mut self, chain: &Chain) -> Vec<IndexRecord> {
        self.scan_to(chain, chain.height())
    }

    /// Processes blocks from `scan_height` up to, not including, `end`.
    pub fn scan_to(&mut self, chain: &Chain, end: u64) -> Vec<IndexRecord> {
        let start = self.log.len();
        let from = self.scan_height;
        if end > from {
            for block in chain.read_from(from).iter().take_while(|b| b.height < end) {
                for t in &block.txs {
                    if let Some(tx) = &t.tx {
                        self.process(tx, t.txid, block.height);
                    }
                }
            }
            self.apply(IndexRecord::Scanned { height: end.min(chain.height()).max(from) });
        }
        self.log[start..].to_vec()
    }

    fn quarantine(&mut self, txid: Txid, height: u64, reason: impl Into<String>) {
        let reason = reason.into();
        log::warn!("quarantined {txid}: {reason}");
        self.apply(IndexRecord::Quarantine { txid, height, reason });
    }

    fn process(&mut self, tx: &Transaction, txid: Txid, height: u64) {
        let data = tx.outputs.first().and_then(|o| o.script_pubkey.op_return_data());
        let spent = tx.inputs.iter().map(|i| i.previous_output).find(|o| self.cursors.contains_key(o));
        if let Some(op) = spent {
            let cursor = self.cursors[&op].clone();
            self.apply(IndexRecord::Cursor { outpoint: op, cursor: None });
            match data {
                Some(d) => self.advance(cursor, &d, tx, txid, height),
                None => self.quarantine(txid, height, "chaining output spent without an entry"),
            }
        } else if let Some(d) = data.filter(|d| d.starts_with(INIT_TAG)) {
            let cursor = Cursor { publisher: None, dir: String::new(), first_txid: txid, pending: Vec::new() };
            self.advance(cursor, &d, tx, txid, height);
        }
    }

    fn advance(&mut self, cursor: Cursor, data: &[u8], tx: &Transaction, txid: Txid, height: u64) {
        let first_txid = if cursor.pending.is_empty() { txid } else { cursor.first_txid };
        let mut stream = cursor.pending.clone();
        stream.extend_from_slice(data);
        let header = match StreamHeader::parse(&stream) {
            Ok(h) => h,
            Err(e) => return self.quarantine(first_txid, height, e.to_string()),
        };
        if (cursor.publisher.is_none()) != (header.kind == EntryKind::Init) {
            return self.quarantine(first_txid, height, format!("unexpected {:?} entry", header.kind));
        }
        let next = OutPoint::new(txid, 1);
        let has_next = tx.outputs.get(1).is_some_and(|o| o.script_pubkey.is_p2sh());
        if stream.len() < header.total_len() {
            if !has_next {
                return self.quarantine(first_txid, height, "entry truncated");
            }
            let pending = Cursor { pending: stream, first_txid, ..cursor };
            return self.apply(IndexRecord::Cursor { outpoint: next, cursor: Some(pending) });
        }
        let continue_chain = |index: &mut ContentIndex, publisher: PublisherId, dir: &str| {
            if has_next {
                let c = Cursor { publisher: Some(publisher), dir: dir.to_string(), first_txid: txid, pending: Vec::new() };
                index.apply(IndexRecord::Cursor { outpoint: next, cursor: Some(c) });
            } else {
                index.quarantine(txid, height, format!("chain of {dir} ends without a chaining output"));
            }
        };
        let overrun = stream.len() > header.total_len();
        let meta = &stream[header.header_len..header.total_len().min(stream.len())];

        let Some(publisher) = cursor.publisher else {
            if overrun {
                return self.quarantine(first_txid, height, "INIT entry overruns its length");
            }
            let cert = match Certificate::decode(meta) {
                Ok(c) => c,
                Err(e) => return self.quarantine(first_txid, height, e.to_string()),
            };
            if !cert.verify() {
                return self.quarantine(first_txid, height, "certificate signature invalid");
            }
            let id = cert.publisher_id();
            if self.publishers.contains_key(&id) {
                return self.quarantine(first_txid, height, format!("publisher {id} already initialized"));
            }
            if !has_next {
                return self.quarantine(first_txid, height, "INIT without a root chaining output");
            }
            self.apply(IndexRecord::Publisher { id, certificate: cert, init_txid: first_txid, height });
            self.apply(IndexRecord::Directory { publisher: id, path: "/".into(), entry_txid: first_txid, height });
            return continue_chain(self, id, "/");
        };

        continue_chain(self, publisher, &cursor.dir);
        if overrun {
            return self.quarantine(first_txid, height, "entry overruns its length");
        }
        let entry = match UWebEntry::decode(header.directive, meta) {
            Ok(e) => e,
            Err(e) => return self.quarantine(first_txid, height, e.to_string()),
        };
        let cert = &self.publishers[&publisher].certificate;
        if !entry.verify(cert) {
            return self.quarantine(first_txid, height, "entry signature invalid");
        }
        if check_name(&entry.name).is_err() {
            return self.quarantine(first_txid, height, format!("invalid name {:?}", entry.name));
        }
        let path = join_path(&cursor.dir, &entry.name);
        match entry.directive {
            Directive::Mkdir => {
                if self.directories.contains_key(&key(publisher, &path)) {
                    return self.quarantine(first_txid, height, format!("{path} already exists"));
                }
                if !tx.outputs.get(2).is_some_and(|o| o.script_pubkey.is_p2sh()) {
                    return self.quarantine(first_txid, height, format!("{path} has no chaining output"));
                }
                self.apply(IndexRecord::Directory { publisher, path: path.clone(), entry_txid: first_txid, height });
                let c = Cursor { publisher: Some(publisher), dir: path, first_txid: txid, pending: Vec::new() };
                self.apply(IndexRecord::Cursor { outpoint: OutPoint::new(txid, 2), cursor: Some(c) });
            }
            Directive::File | Directive::Update | Directive::Remove => {
                let live = self.files.get(&key(publisher, &path)).is_some_and(FileRecord::is_live);
                if entry.directive != Directive::File && !live {
                    return self.quarantine(first_txid, height, format!("{:?} of missing {path}", entry.directive));
                }
                self.apply(IndexRecord::File {
                    publisher,
                    path,
                    directive: entry.directive,
                    root: entry.target,
                    entry_txid: first_txid,
                    height,
                });
            }
            Directive::Init => unreachable!("INIT kind checked above"),
        }
    }

    pub fn file(&self, publisher: PublisherId, path: &str) -> Option<&FileRecord> {
        self.files.get(&key(publisher, path))
    }

    /// Publishers whose id starts with `name` (hex) or whose certificate
    /// subject equals it.
    pub fn find_publishers(&self, name: &str) -> Vec<PublisherId> {
        self.publishers
            .iter()
            .filter(|(id, r)| r.certificate.subject == name || id.to_string().starts_with(&name.to_lowercase()))
            .map(|(id, _)| *id)
            .collect()
    }

    /// The file at `path`, optionally restricted to one publisher.
    pub fn lookup(&self, publisher: Option<&str>, path: &str) -> Result<&FileRecord, FsError> {
        let candidates: Vec<&FileRecord> = match publisher {
            Some(p) => self.find_publishers(p).into_iter().filter_map(|id| self.file(id, path)).collect(),
            None => self.files.values().filter(|f| f.path == path).collect(),
        };
        match candidates.as_slice() {
            [] => Err(FsError::NotFound(path.to_string())),
            [one] => Ok(one),
            _ => Err(FsError::Ambiguous(format!("{path} exists under {} publishers", candidates.len()))),
        }
    }

    /// The file whose history mentions `txid` as an entry or content root.
    pub fn find_by_txid(&self, txid: &Txid) -> Option<&FileRecord> {
        self.files
            .values()
            .find(|f| f.history.iter().any(|op| op.entry_txid == *txid || op.root == Some(*txid)))
    }

    pub fn live_files(&self) -> impl Iterator<Item = &FileRecord> {
        self.files.values().filter(|f| f.is_live())
    }

    pub fn write_jsonl<W: Write>(&self, out: W) -> Result<(), FsError> {
        append_jsonl(&self.log, out)
    }

    /// Rebuilds an index by replaying its record file.
    pub fn from_jsonl<R: BufRead>(input: R) -> Result<ContentIndex, FsError> {
        let mut index = ContentIndex::default();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            index.apply(serde_json::from_str(&line)?);
        }
        Ok(index)
    }
}

pub fn append_jsonl<W: Write>(records: &[IndexRecord], mut out: W) -> Result<(), FsError> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
