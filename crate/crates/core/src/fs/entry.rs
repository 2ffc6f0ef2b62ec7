//! UWeb entry streams and their split into 80-byte OP_RETURN pieces.
//!
//! A logical entry is `tag || directive || CompactSize(len) || meta`. Streams
//! longer than one OP_RETURN continue in transactions that spend the
//! previous piece's chaining output.

use serde::{Deserialize, Serialize};

use crate::codec::{decode_varint, varint_len, write_varint, Txid};

use super::identity::{scheme, take_bytes, Certificate, PublisherId, PublisherIdentity};
use super::FsError;

pub const MAX_PIECE: usize = 80;
pub const INIT_TAG: &[u8; 8] = b"DIR INIT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryKind {
    Init,
    Dir,
    Data,
    Op,
}

impl EntryKind {
    pub fn tag(self) -> &'static [u8] {
        match self {
            EntryKind::Init => INIT_TAG,
            EntryKind::Dir => b"DIRE",
            EntryKind::Data => b"DATA",
            EntryKind::Op => b"OPER",
        }
    }

    pub fn from_prefix(bytes: &[u8]) -> Option<EntryKind> {
        [EntryKind::Init, EntryKind::Dir, EntryKind::Data, EntryKind::Op]
            .into_iter()
            .find(|k| bytes.starts_with(k.tag()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Directive {
    Init = 0x00,
    File = 0x01,
    Update = 0x02,
    Remove = 0x03,
    Mkdir = 0x04,
}

impl Directive {
    pub fn from_byte(b: u8) -> Option<Directive> {
        Some(match b {
            0x00 => Directive::Init,
            0x01 => Directive::File,
            0x02 => Directive::Update,
            0x03 => Directive::Remove,
            0x04 => Directive::Mkdir,
            _ => return None,
        })
    }

    /// The entry kind that carries this directive.
    pub fn kind(self) -> EntryKind {
        match self {
            Directive::Init => EntryKind::Init,
            Directive::File | Directive::Mkdir => EntryKind::Dir,
            Directive::Update | Directive::Remove => EntryKind::Op,
        }
    }

    pub fn has_target(self) -> bool {
        matches!(self, Directive::File | Directive::Update)
    }
}

pub fn encode_stream(kind: EntryKind, directive: Directive, meta: &[u8]) -> Vec<u8> {
    let mut out = kind.tag().to_vec();
    out.push(directive as u8);
    write_varint(&mut out, meta.len() as u64);
    out.extend_from_slice(meta);
    out
}

pub fn split_pieces(stream: &[u8]) -> Vec<Vec<u8>> {
    stream.chunks(MAX_PIECE).map(<[u8]>::to_vec).collect()
}

/// Number of entries needed for `meta_len` bytes of metadata.
pub fn piece_count(kind: EntryKind, meta_len: usize) -> usize {
    (kind.tag().len() + 1 + varint_len(meta_len as u64) + meta_len).div_ceil(MAX_PIECE)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamHeader {
    pub kind: EntryKind,
    pub directive: Directive,
    pub header_len: usize,
    pub meta_len: usize,
}

impl StreamHeader {
    pub fn total_len(&self) -> usize {
        self.header_len + self.meta_len
    }

    /// Reads the header from the start of a first piece.
    pub fn parse(first: &[u8]) -> Result<StreamHeader, FsError> {
        let kind = EntryKind::from_prefix(first).ok_or_else(|| FsError::Malformed("unknown entry tag".into()))?;
        let at = kind.tag().len();
        let d = *first.get(at).ok_or_else(|| FsError::Malformed("missing directive".into()))?;
        let directive =
            Directive::from_byte(d).ok_or_else(|| FsError::Malformed(format!("unknown directive 0x{d:02x}")))?;
        if kind != EntryKind::Data && directive.kind() != kind {
            return Err(FsError::Malformed(format!("directive {directive:?} under {kind:?} tag")));
        }
        let (len, used) = decode_varint(&first[at + 1..]).map_err(|e| FsError::Malformed(e.to_string()))?;
        Ok(StreamHeader { kind, directive, header_len: at + 1 + used, meta_len: len as usize })
    }
}

pub fn decode_stream(stream: &[u8]) -> Result<(StreamHeader, &[u8]), FsError> {
    let h = StreamHeader::parse(stream)?;
    if stream.len() != h.total_len() {
        return Err(FsError::Malformed(format!(
            "entry stream of {} bytes, header says {}",
            stream.len(),
            h.total_len()
        )));
    }
    Ok((h, &stream[h.header_len..]))
}

pub fn init_stream(cert: &Certificate) -> Vec<u8> {
    encode_stream(EntryKind::Init, Directive::Init, &cert.encode())
}

/// A signed directory or operation entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UWebEntry {
    pub directive: Directive,
    /// Root transaction of the content, for FILE and UPDATE.
    pub target: Option<Txid>,
    /// File name, or the new directory's name for MKDIR.
    pub name: String,
    pub scheme: u8,
    #[serde(with = "hex::serde")]
    pub signature: Vec<u8>,
}

impl UWebEntry {
    pub fn signed(
        identity: &PublisherIdentity,
        directive: Directive,
        target: Option<Txid>,
        name: &str,
    ) -> UWebEntry {
        let mut e = UWebEntry {
            directive,
            target,
            name: name.to_string(),
            scheme: identity.certificate.scheme,
            signature: Vec::new(),
        };
        e.signature = identity.sign(&e.message(identity.id()));
        e
    }

    pub fn kind(&self) -> EntryKind {
        self.directive.kind()
    }

    fn body_prefix(&self) -> Vec<u8> {
        let mut out = Vec::new();
        if let Some(t) = &self.target {
            out.extend_from_slice(&t.0);
        }
        write_varint(&mut out, self.name.len() as u64);
        out.extend_from_slice(self.name.as_bytes());
        out.push(self.scheme);
        out
    }

    /// Bytes covered by the signature. The publisher id keeps an entry from
    /// being replayed under another publisher.
    fn message(&self, publisher: PublisherId) -> Vec<u8> {
        let mut out = b"UWEB-ENTRY".to_vec();
        out.extend_from_slice(&publisher.0);
        out.extend_from_slice(self.kind().tag());
        out.push(self.directive as u8);
        out.extend(self.body_prefix());
        out
    }

    pub fn meta(&self) -> Vec<u8> {
        let mut out = self.body_prefix();
        write_varint(&mut out, self.signature.len() as u64);
        out.extend_from_slice(&self.signature);
        out
    }

    pub fn stream(&self) -> Vec<u8> {
        encode_stream(self.kind(), self.directive, &self.meta())
    }

    pub fn decode(directive: Directive, meta: &[u8]) -> Result<UWebEntry, FsError> {
        if directive == Directive::Init {
            return Err(FsError::Malformed("INIT carries a certificate, not an entry".into()));
        }
        let mut buf = meta;
        let target = if directive.has_target() {
            if buf.len() < 32 {
                return Err(FsError::Malformed("truncated target".into()));
            }
            let mut t = [0u8; 32];
            t.copy_from_slice(&buf[..32]);
            buf = &buf[32..];
            Some(Txid(t))
        } else {
            None
        };
        let name = String::from_utf8(take_bytes(&mut buf)?.to_vec())
            .map_err(|_| FsError::Malformed("name is not UTF-8".into()))?;
        let (&scheme, rest) = buf.split_first().ok_or_else(|| FsError::Malformed("missing scheme".into()))?;
        buf = rest;
        let signature = take_bytes(&mut buf)?.to_vec();
        if !buf.is_empty() {
            return Err(FsError::Malformed(format!("{} trailing entry bytes", buf.len())));
        }
        Ok(UWebEntry { directive, target, name, scheme, signature })
    }

    pub fn verify(&self, cert: &Certificate) -> bool {
        self.scheme == cert.scheme
            && scheme(self.scheme)
                .is_some_and(|s| s.verify(&cert.public_key, &self.message(cert.publisher_id()), &self.signature))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn init_tag_bytes() {
        assert_eq!(hex::encode_upper(INIT_TAG), "44495220494E4954");
        let id = PublisherIdentity::from_seed(b"a", "a", b"");
        assert!(init_stream(&id.certificate).starts_with(&[0x44, 0x49, 0x52, 0x20, 0x49, 0x4e, 0x49, 0x54]));
    }

    #[test]
    fn kilobyte_certificate_piece_count() {
        let id = PublisherIdentity::from_seed(b"a", "alice", &[7u8; 941]);
        let cert = id.certificate.encode();
        assert_eq!(cert.len(), 1024);
        let stream = init_stream(&id.certificate);
        let pieces = split_pieces(&stream);
        // tag, directive and a three-byte CompactSize precede the certificate
        let expected = (cert.len() + 8 + 1 + 3).div_ceil(80);
        assert_eq!(expected, 13);
        assert_eq!(pieces.len(), expected);
        assert_eq!(piece_count(EntryKind::Init, cert.len()), expected);
        assert!(pieces.iter().all(|p| p.len() <= MAX_PIECE));
        assert_eq!(pieces.concat(), stream);
    }

    #[test]
    fn short_file_entry_fits_one_piece() {
        let id = PublisherIdentity::from_seed(b"a", "a", b"");
        let e = UWebEntry::signed(&id, Directive::File, Some(Txid([3; 32])), "day1.gz");
        assert_eq!(split_pieces(&e.stream()).len(), 1);
    }

    #[test]
    fn entry_signature_gate() {
        let id = PublisherIdentity::from_seed(b"a", "a", b"");
        let other = PublisherIdentity::from_seed(b"b", "b", b"");
        let e = UWebEntry::signed(&id, Directive::Remove, None, "f");
        assert!(e.verify(&id.certificate));
        assert!(!e.verify(&other.certificate));
        let mut bad = e.clone();
        bad.signature[0] ^= 1;
        assert!(!bad.verify(&id.certificate));
        let mut renamed = e;
        renamed.name = "g".into();
        assert!(!renamed.verify(&id.certificate));
    }

    #[test]
    fn header_rejects_mismatched_directive() {
        let s = encode_stream(EntryKind::Op, Directive::File, b"");
        assert!(StreamHeader::parse(&s).is_err());
        assert!(StreamHeader::parse(b"XXXX\x01\x00").is_err());
        assert!(StreamHeader::parse(b"OPER\x09\x00").is_err());
    }

    proptest! {
        #[test]
        fn entry_round_trip(name in "[a-z0-9._-]{0,120}", target in any::<[u8; 32]>(), d in 1u8..=4) {
            let id = PublisherIdentity::from_seed(b"p", "p", b"");
            let directive = Directive::from_byte(d).unwrap();
            let t = directive.has_target().then_some(Txid(target));
            let e = UWebEntry::signed(&id, directive, t, &name);
            let stream = e.stream();
            let joined = split_pieces(&stream).concat();
            let (h, meta) = decode_stream(&joined).unwrap();
            prop_assert_eq!(h.directive, directive);
            prop_assert_eq!(h.kind, directive.kind());
            let back = UWebEntry::decode(h.directive, meta).unwrap();
            prop_assert!(back.verify(&id.certificate));
            prop_assert_eq!(back, e);
        }
    }
}
