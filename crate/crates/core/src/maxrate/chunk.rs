//! Splitting a payload into per-input chunks.

use serde::{Deserialize, Serialize};

use super::{MaxRateError, PART_SIZE, PAYLOAD_PER_SCRIPT, TAIL_SIZE};

/// The payload bytes carried by one data-storing input.
///
/// Concatenating `part_a ∥ part_b ∥ part_c ∥ tail` gives the chunk's slice of
/// the payload.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct PayloadChunk {
    pub index: usize,
    #[serde(with = "hex::serde")]
    pub part_a: Vec<u8>,
    #[serde(with = "hex::serde")]
    pub part_b: Vec<u8>,
    #[serde(with = "hex::serde")]
    pub part_c: Vec<u8>,
    #[serde(with = "hex::serde")]
    pub tail: Vec<u8>,
}

impl PayloadChunk {
    /// Splits up to 1,568 bytes across the four slots. Short slices fill the
    /// tail first and then a, b, c, so the parts shrink in the order c, b, a.
    pub fn from_slice(index: usize, data: &[u8]) -> Result<PayloadChunk, MaxRateError> {
        if data.len() > PAYLOAD_PER_SCRIPT {
            return Err(MaxRateError::ChunkTooLarge(data.len()));
        }
        let lt = data.len().min(TAIL_SIZE);
        let rest = data.len() - lt;
        let la = rest.min(PART_SIZE);
        let lb = (rest - la).min(PART_SIZE);
        let (a, tail_start) = data.split_at(la);
        let (b, tail_start) = tail_start.split_at(lb);
        let (c, tail) = tail_start.split_at(rest - la - lb);
        Ok(PayloadChunk {
            index,
            part_a: a.to_vec(),
            part_b: b.to_vec(),
            part_c: c.to_vec(),
            tail: tail.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.part_a.len() + self.part_b.len() + self.part_c.len() + self.tail.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len());
        self.append_to(&mut out);
        out
    }

    pub fn append_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.part_a);
        out.extend_from_slice(&self.part_b);
        out.extend_from_slice(&self.part_c);
        out.extend_from_slice(&self.tail);
    }
}

pub fn chunk_count(payload_size: u64) -> u64 {
    payload_size.div_ceil(PAYLOAD_PER_SCRIPT as u64)
}

pub fn chunk_payload(data: &[u8]) -> Result<Vec<PayloadChunk>, MaxRateError> {
    if data.is_empty() {
        return Err(MaxRateError::EmptyPayload);
    }
    data.chunks(PAYLOAD_PER_SCRIPT)
        .enumerate()
        .map(|(i, c)| PayloadChunk::from_slice(i, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_fit_is_one_chunk() {
        let chunks = chunk_payload(&[7; 1_568]).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].part_a.len(), 520);
        assert_eq!(chunks[0].part_c.len(), 520);
        assert_eq!(chunks[0].tail.len(), 8);
    }

    #[test]
    fn single_epoch_capacity() {
        let chunks = chunk_payload(&vec![1; 2_936 * 1_568]).unwrap();
        assert_eq!(chunks.len(), 2_936);
        assert!(chunks.iter().all(|c| c.len() == 1_568));
        assert_eq!(chunk_count(4_603_648), 2_936);
        assert_eq!(chunk_count(4_603_649), 2_937);
    }

    #[test]
    fn empty_rejected() {
        assert_eq!(chunk_payload(&[]), Err(MaxRateError::EmptyPayload));
    }

    #[test]
    fn short_chunk_shrinks_c_then_b_then_a() {
        let data: Vec<u8> = (0..1_000u32).map(|i| i as u8).collect();
        let c = PayloadChunk::from_slice(0, &data).unwrap();
        assert_eq!((c.part_a.len(), c.part_b.len(), c.part_c.len(), c.tail.len()), (520, 472, 0, 8));
        let c = PayloadChunk::from_slice(0, &data[..5]).unwrap();
        assert_eq!((c.part_a.len(), c.part_b.len(), c.part_c.len(), c.tail.len()), (0, 0, 0, 5));
        assert_eq!(c.bytes(), &data[..5]);
    }

    proptest! {
        #[test]
        fn lossless(data in proptest::collection::vec(any::<u8>(), 1..10_000)) {
            let chunks = chunk_payload(&data).unwrap();
            prop_assert_eq!(chunks.len() as u64, chunk_count(data.len() as u64));
            let mut out = Vec::new();
            for (i, c) in chunks.iter().enumerate() {
                prop_assert_eq!(c.index, i);
                if i + 1 < chunks.len() {
                    prop_assert_eq!(c.len(), 1_568);
                }
                c.append_to(&mut out);
            }
            prop_assert_eq!(out, data);
        }
    }
}
