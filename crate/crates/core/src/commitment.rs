//! Salted chunk-tree commitments with selective disclosure of byte ranges.
//!
//! A transcript is cut into `chunk_size` chunks. Leaf `i` is
//! `SHA256(0x00 || i as u64 BE || salt_i || chunk_i)` with an independent
//! 16-byte salt per chunk; interior nodes are `SHA256(0x01 || left || right)`.
//! A level with an odd number of nodes pairs its last node with the padding
//! hash `SHA256(0x02 || "VET/pad")`. The empty transcript commits to
//! `SHA256("VET/empty-leaf")`.
//!
//! A disclosure reveals the minimal set of chunks covering the requested
//! ranges, plus a deduplicated multiproof: the sibling hashes that cannot be
//! derived from revealed chunks, listed level by level, left to right.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::canonical::{hex_array, hex_bytes, string_num};

pub const SALT_LEN: usize = 16;
pub const DEFAULT_CHUNK_SIZE: u64 = 16;

const LEAF_TAG: u8 = 0x00;
const NODE_TAG: u8 = 0x01;
const PAD_TAG: u8 = 0x02;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Digest(#[serde(with = "hex_array")] pub [u8; 32]);

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", hex::encode(&self.0[..8]))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

pub fn empty_root() -> Digest {
    Digest(Sha256::digest(b"VET/empty-leaf").into())
}

fn pad_hash() -> Digest {
    let mut h = Sha256::new();
    h.update([PAD_TAG]);
    h.update(b"VET/pad");
    Digest(h.finalize().into())
}

pub fn leaf_hash(index: u64, salt: &[u8; SALT_LEN], chunk: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update([LEAF_TAG]);
    h.update(index.to_be_bytes());
    h.update(salt);
    h.update(chunk);
    Digest(h.finalize().into())
}

fn node_hash(left: &Digest, right: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update([NODE_TAG]);
    h.update(left.0);
    h.update(right.0);
    Digest(h.finalize().into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByteRange {
    #[serde(with = "string_num")]
    pub offset: u64,
    #[serde(with = "string_num")]
    pub length: u64,
}

impl ByteRange {
    pub fn new(offset: u64, length: u64) -> Self {
        Self { offset, length }
    }

    pub fn end(&self) -> u64 {
        self.offset + self.length
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptCommitment {
    pub root: Digest,
    #[serde(with = "string_num")]
    pub chunk_size: u64,
    #[serde(with = "string_num")]
    pub total_length: u64,
}

impl TranscriptCommitment {
    pub fn leaf_count(&self) -> u64 {
        leaf_count(self.total_length, self.chunk_size)
    }
}

/// Prover-side witness: the plaintext and one salt per chunk.
#[derive(Clone, PartialEq, Eq)]
pub struct Opening {
    pub chunk_size: u64,
    pub salts: Vec<[u8; SALT_LEN]>,
    pub plaintext: Vec<u8>,
}

impl fmt::Debug for Opening {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Opening").field("chunk_size", &self.chunk_size).field("chunks", &self.salts.len()).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevealedChunk {
    #[serde(with = "string_num")]
    pub index: u64,
    #[serde(with = "hex_array")]
    pub salt: [u8; SALT_LEN],
    #[serde(with = "hex_bytes")]
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disclosure {
    pub ranges: Vec<ByteRange>,
    pub chunks: Vec<RevealedChunk>,
    pub proof: Vec<Digest>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DisclosureError {
    #[error("range {offset}+{length} exceeds transcript length {total}")]
    OutOfBounds { offset: u64, length: u64, total: u64 },
    #[error("chunk size must be at least 1")]
    ZeroChunkSize,
    #[error("authentication path does not reach the committed root")]
    BadPath,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("revealed chunks do not match the claimed ranges: {0}")]
    Inconsistent(String),
}

pub fn leaf_count(total_length: u64, chunk_size: u64) -> u64 {
    total_length.div_ceil(chunk_size)
}

/// Sorts, drops empty ranges, and merges overlapping or adjacent ones.
pub fn normalize_ranges(ranges: &[ByteRange]) -> Vec<ByteRange> {
    let mut sorted: Vec<ByteRange> = ranges.iter().copied().filter(|r| r.length > 0).collect();
    sorted.sort();
    let mut out: Vec<ByteRange> = Vec::with_capacity(sorted.len());
    for r in sorted {
        match out.last_mut() {
            Some(last) if r.offset <= last.end() => {
                let end = last.end().max(r.end());
                last.length = end - last.offset;
            }
            _ => out.push(r),
        }
    }
    out
}

/// Indices of every chunk that overlaps at least one range.
pub fn chunk_cover(ranges: &[ByteRange], chunk_size: u64) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    for r in ranges.iter().filter(|r| r.length > 0) {
        let first = r.offset / chunk_size;
        let last = (r.end() - 1) / chunk_size;
        out.extend(first..=last);
    }
    out
}

fn chunk_bounds(index: u64, chunk_size: u64, total: u64) -> (usize, usize) {
    let start = index * chunk_size;
    let end = (start + chunk_size).min(total);
    (start as usize, end as usize)
}

/// Commits to `transcript`, drawing one fresh salt per chunk from `rng`.
pub fn commit<R: RngCore>(transcript: &[u8], chunk_size: u64, rng: &mut R) -> (TranscriptCommitment, Opening) {
    assert!(chunk_size >= 1, "chunk_size must be at least 1");
    let n = leaf_count(transcript.len() as u64, chunk_size) as usize;
    let salts: Vec<[u8; SALT_LEN]> = (0..n)
        .map(|_| {
            let mut s = [0u8; SALT_LEN];
            rng.fill_bytes(&mut s);
            s
        })
        .collect();
    let opening = Opening { chunk_size, salts, plaintext: transcript.to_vec() };
    (opening.commitment(), opening)
}

impl Opening {
    fn leaves(&self) -> Vec<Digest> {
        let total = self.plaintext.len() as u64;
        self.salts
            .iter()
            .enumerate()
            .map(|(i, salt)| {
                let (s, e) = chunk_bounds(i as u64, self.chunk_size, total);
                leaf_hash(i as u64, salt, &self.plaintext[s..e])
            })
            .collect()
    }

    /// Recomputes the commitment from the witness.
    pub fn commitment(&self) -> TranscriptCommitment {
        let levels = tree_levels(self.leaves());
        let root = levels.last().and_then(|l| l.first()).copied().unwrap_or_else(empty_root);
        TranscriptCommitment { root, chunk_size: self.chunk_size, total_length: self.plaintext.len() as u64 }
    }

    /// Reveals the minimal chunk cover of `ranges`.
    pub fn disclose(&self, ranges: &[ByteRange]) -> Result<Disclosure, DisclosureError> {
        let total = self.plaintext.len() as u64;
        for r in ranges {
            if r.offset.checked_add(r.length).is_none_or(|end| end > total) || (r.length > 0 && r.offset >= total) {
                return Err(DisclosureError::OutOfBounds { offset: r.offset, length: r.length, total });
            }
        }
        let ranges = normalize_ranges(ranges);
        let cover = chunk_cover(&ranges, self.chunk_size);
        let chunks = cover
            .iter()
            .map(|&i| {
                let (s, e) = chunk_bounds(i, self.chunk_size, total);
                RevealedChunk { index: i, salt: self.salts[i as usize], bytes: self.plaintext[s..e].to_vec() }
            })
            .collect();
        let levels = tree_levels(self.leaves());
        let proof = multiproof(&levels, &cover);
        Ok(Disclosure { ranges, chunks, proof })
    }
}

fn tree_levels(leaves: Vec<Digest>) -> Vec<Vec<Digest>> {
    if leaves.is_empty() {
        return Vec::new();
    }
    let pad = pad_hash();
    let mut levels = vec![leaves];
    while levels.last().unwrap().len() > 1 {
        let prev = levels.last().unwrap();
        let next = prev.chunks(2).map(|pair| node_hash(&pair[0], pair.get(1).unwrap_or(&pad))).collect();
        levels.push(next);
    }
    levels
}

fn multiproof(levels: &[Vec<Digest>], revealed: &BTreeSet<u64>) -> Vec<Digest> {
    let mut proof = Vec::new();
    if revealed.is_empty() || levels.is_empty() {
        return proof;
    }
    let mut known: BTreeSet<usize> = revealed.iter().map(|&i| i as usize).collect();
    for level in &levels[..levels.len() - 1] {
        let mut parents = BTreeSet::new();
        for &i in &known {
            let sibling = i ^ 1;
            if sibling < level.len() && !known.contains(&sibling) {
                proof.push(level[sibling]);
            }
            parents.insert(i / 2);
        }
        known = parents;
    }
    proof
}

/// Checks a disclosure against a commitment and returns the bytes of every
/// claimed range.
pub fn verify_disclosure(commitment: &TranscriptCommitment, disclosure: &Disclosure) -> Result<BTreeMap<ByteRange, Vec<u8>>, DisclosureError> {
    let chunk_size = commitment.chunk_size;
    if chunk_size == 0 {
        return Err(DisclosureError::ZeroChunkSize);
    }
    let total = commitment.total_length;
    let n = commitment.leaf_count();

    if normalize_ranges(&disclosure.ranges) != disclosure.ranges {
        return Err(DisclosureError::Inconsistent("ranges are not normalized".into()));
    }
    for r in &disclosure.ranges {
        if r.end() > total {
            return Err(DisclosureError::OutOfBounds { offset: r.offset, length: r.length, total });
        }
    }
    let cover = chunk_cover(&disclosure.ranges, chunk_size);
    let indices: Vec<u64> = disclosure.chunks.iter().map(|c| c.index).collect();
    if !indices.windows(2).all(|w| w[0] < w[1]) {
        return Err(DisclosureError::Inconsistent("chunks not strictly ordered".into()));
    }
    if indices.iter().copied().collect::<BTreeSet<_>>() != cover {
        return Err(DisclosureError::Inconsistent("revealed chunks are not the minimal cover".into()));
    }

    let mut known: BTreeMap<usize, Digest> = BTreeMap::new();
    for chunk in &disclosure.chunks {
        if chunk.index >= n {
            return Err(DisclosureError::Inconsistent(format!("chunk {} beyond leaf count {n}", chunk.index)));
        }
        let (s, e) = chunk_bounds(chunk.index, chunk_size, total);
        if chunk.bytes.len() != e - s {
            return Err(DisclosureError::LengthMismatch(format!("chunk {} has {} bytes, expected {}", chunk.index, chunk.bytes.len(), e - s)));
        }
        known.insert(chunk.index as usize, leaf_hash(chunk.index, &chunk.salt, &chunk.bytes));
    }

    if n == 0 {
        if commitment.root != empty_root() || !disclosure.proof.is_empty() {
            return Err(DisclosureError::BadPath);
        }
    } else if !known.is_empty() {
        let pad = pad_hash();
        let mut proof = disclosure.proof.iter();
        let mut width = n as usize;
        while width > 1 {
            let mut parents = BTreeMap::new();
            for (&i, digest) in &known {
                let parent = i / 2;
                if parents.contains_key(&parent) {
                    continue;
                }
                let (left, right) = if i % 2 == 0 {
                    let right = if i + 1 >= width {
                        pad
                    } else if let Some(d) = known.get(&(i + 1)) {
                        *d
                    } else {
                        *proof.next().ok_or(DisclosureError::BadPath)?
                    };
                    (*digest, right)
                } else {
                    let left = match known.get(&(i - 1)) {
                        Some(d) => *d,
                        None => *proof.next().ok_or(DisclosureError::BadPath)?,
                    };
                    (left, *digest)
                };
                parents.insert(parent, node_hash(&left, &right));
            }
            known = parents;
            width = width.div_ceil(2);
        }
        if proof.next().is_some() || known.get(&0) != Some(&commitment.root) {
            return Err(DisclosureError::BadPath);
        }
    } else if !disclosure.proof.is_empty() {
        return Err(DisclosureError::Inconsistent("proof hashes without revealed chunks".into()));
    }

    let mut out = BTreeMap::new();
    for r in &disclosure.ranges {
        let mut bytes = Vec::with_capacity(r.length as usize);
        let mut pos = r.offset;
        while pos < r.end() {
            let idx = pos / chunk_size;
            let chunk = disclosure
                .chunks
                .binary_search_by_key(&idx, |c| c.index)
                .map(|k| &disclosure.chunks[k])
                .map_err(|_| DisclosureError::Inconsistent(format!("range byte {pos} not covered")))?;
            let within = (pos - idx * chunk_size) as usize;
            let take = ((r.end() - pos) as usize).min(chunk.bytes.len() - within);
            bytes.extend_from_slice(&chunk.bytes[within..within + take]);
            pos += take as u64;
        }
        out.insert(*r, bytes);
    }
    Ok(out)
}
