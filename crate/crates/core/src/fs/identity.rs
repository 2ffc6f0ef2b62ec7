//! Publisher keys, certificates and detached signatures.

use serde::{Deserialize, Serialize};

use crate::codec::{decode_varint, hash160, sha256, write_varint};

use super::FsError;

/// A detached-signature scheme, identified on chain by one byte.
pub trait SignatureScheme {
    fn id(&self) -> u8;
    fn public_key(&self, secret: &[u8; 32]) -> Vec<u8>;
    fn sign(&self, secret: &[u8; 32], msg: &[u8]) -> Vec<u8>;
    fn verify(&self, public_key: &[u8], msg: &[u8], sig: &[u8]) -> bool;
}

/// Deterministic keyed-hash stand-in for a real signature scheme. Anyone
/// holding the public key can produce valid signatures, so it only models
/// the verification path.
#[derive(Clone, Copy, Debug, Default)]
pub struct KeyedHash;

pub const KEYED_HASH: u8 = 0x01;

impl SignatureScheme for KeyedHash {
    fn id(&self) -> u8 {
        KEYED_HASH
    }

    fn public_key(&self, secret: &[u8; 32]) -> Vec<u8> {
        sha256(&[b"uweb-pk".as_slice(), secret].concat()).to_vec()
    }

    fn sign(&self, secret: &[u8; 32], msg: &[u8]) -> Vec<u8> {
        let pk = self.public_key(secret);
        sha256(&[b"uweb-sig".as_slice(), &pk, msg].concat()).to_vec()
    }

    fn verify(&self, public_key: &[u8], msg: &[u8], sig: &[u8]) -> bool {
        sig == sha256(&[b"uweb-sig".as_slice(), public_key, msg].concat())
    }
}

pub fn scheme(id: u8) -> Option<&'static dyn SignatureScheme> {
    match id {
        KEYED_HASH => Some(&KeyedHash),
        _ => None,
    }
}

pub const CERT_MAGIC: &[u8; 6] = b"UWCERT";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub scheme: u8,
    #[serde(with = "hex::serde")]
    pub public_key: Vec<u8>,
    pub subject: String,
    /// Free-form publisher metadata.
    #[serde(with = "hex::serde")]
    pub info: Vec<u8>,
    #[serde(with = "hex::serde")]
    pub signature: Vec<u8>,
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    write_varint(out, b.len() as u64);
    out.extend_from_slice(b);
}

pub(crate) fn take_bytes<'a>(buf: &mut &'a [u8]) -> Result<&'a [u8], FsError> {
    let (len, used) = decode_varint(buf).map_err(|e| FsError::Malformed(e.to_string()))?;
    let rest = &buf[used..];
    let len = usize::try_from(len).map_err(|_| FsError::Malformed("length overflow".into()))?;
    if rest.len() < len {
        return Err(FsError::Malformed(format!("field of {len} bytes truncated")));
    }
    let (field, tail) = rest.split_at(len);
    *buf = tail;
    Ok(field)
}

impl Certificate {
    fn signed_part(&self) -> Vec<u8> {
        let mut out = CERT_MAGIC.to_vec();
        out.push(1);
        out.push(self.scheme);
        put_bytes(&mut out, &self.public_key);
        put_bytes(&mut out, self.subject.as_bytes());
        put_bytes(&mut out, &self.info);
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.signed_part();
        put_bytes(&mut out, &self.signature);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Certificate, FsError> {
        let mut buf = bytes;
        if buf.len() < 8 || &buf[..6] != CERT_MAGIC {
            return Err(FsError::Malformed("not a certificate".into()));
        }
        if buf[6] != 1 {
            return Err(FsError::Malformed(format!("certificate version {}", buf[6])));
        }
        let scheme = buf[7];
        buf = &buf[8..];
        let public_key = take_bytes(&mut buf)?.to_vec();
        let subject = String::from_utf8(take_bytes(&mut buf)?.to_vec())
            .map_err(|_| FsError::Malformed("subject is not UTF-8".into()))?;
        let info = take_bytes(&mut buf)?.to_vec();
        let signature = take_bytes(&mut buf)?.to_vec();
        if !buf.is_empty() {
            return Err(FsError::Malformed(format!("{} trailing certificate bytes", buf.len())));
        }
        Ok(Certificate { scheme, public_key, subject, info, signature })
    }

    /// Checks the self-signature.
    pub fn verify(&self) -> bool {
        scheme(self.scheme).is_some_and(|s| s.verify(&self.public_key, &self.signed_part(), &self.signature))
    }

    pub fn publisher_id(&self) -> PublisherId {
        PublisherId(hash160(&self.public_key))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PublisherId(#[serde(with = "hex::serde")] pub [u8; 20]);

impl std::fmt::Display for PublisherId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl std::fmt::Debug for PublisherId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PublisherId({self})")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublisherIdentity {
    pub certificate: Certificate,
    #[serde(with = "hex::serde")]
    secret: [u8; 32],
}

impl PublisherIdentity {
    /// Derives a keyed-hash identity from `seed` with a self-signed
    /// certificate.
    pub fn from_seed(seed: &[u8], subject: &str, info: &[u8]) -> PublisherIdentity {
        let secret = sha256(&[b"uweb-secret".as_slice(), seed].concat());
        let s = KeyedHash;
        let mut certificate = Certificate {
            scheme: s.id(),
            public_key: s.public_key(&secret),
            subject: subject.to_string(),
            info: info.to_vec(),
            signature: Vec::new(),
        };
        certificate.signature = s.sign(&secret, &certificate.signed_part());
        PublisherIdentity { certificate, secret }
    }

    pub fn public_key(&self) -> &[u8] {
        &self.certificate.public_key
    }

    pub fn id(&self) -> PublisherId {
        self.certificate.publisher_id()
    }

    pub fn sign(&self, msg: &[u8]) -> Vec<u8> {
        scheme(self.certificate.scheme).expect("known scheme").sign(&self.secret, msg)
    }

    /// Per-output secret for hash-locked chaining outputs.
    pub(crate) fn chain_secret(&self, index: u64) -> [u8; 32] {
        sha256(&[b"uweb-chain".as_slice(), &self.secret, &index.to_le_bytes()].concat())
    }
}
