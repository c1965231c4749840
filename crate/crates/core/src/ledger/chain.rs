use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LedgerError, Payload};
use crate::canonical::{is_canonical, to_canonical_json};

/// SHA-256 digest, serialized as 64 lowercase hex characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest32(pub [u8; 32]);

impl Digest32 {
    pub const ZERO: Digest32 = Digest32([0; 32]);

    pub fn to_hex(self) -> String {
        hex::encode(self.0)
    }
}

impl Serialize for Digest32 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest32 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        // uppercase hex would re-serialize differently
        if s.len() != 64 || s.bytes().any(|b| !matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(serde::de::Error::custom("digest must be 64 lowercase hex characters"));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Digest32(out))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainEntry {
    pub index: u64,
    pub prev_hash: Digest32,
    /// SHA-256 of the payload's canonical JSON.
    pub payload_hash: Digest32,
    pub payload: Payload,
}

pub fn payload_hash(payload: &Payload) -> Digest32 {
    let json = to_canonical_json(payload).expect("payload serializes");
    Digest32(Sha256::digest(json.as_bytes()).into())
}

impl ChainEntry {
    pub fn new(index: u64, prev_hash: Digest32, payload: Payload) -> Self {
        Self {
            index,
            prev_hash,
            payload_hash: payload_hash(&payload),
            payload,
        }
    }

    /// SHA-256 over `index (u64 little-endian) || prev_hash || payload_hash`.
    pub fn entry_hash(&self) -> Digest32 {
        let mut h = Sha256::new();
        h.update(self.index.to_le_bytes());
        h.update(self.prev_hash.0);
        h.update(self.payload_hash.0);
        Digest32(h.finalize().into())
    }

    pub fn canonical_json(&self) -> String {
        to_canonical_json(self).expect("entry serializes")
    }
}

/// Where and why a chain stops being trustworthy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrityFailure {
    pub first_bad_index: u64,
    pub reason: String,
}

/// Verifies indices, hash linkage and payload digests; reports the first
/// position at which any of them fails.
pub fn check_integrity(entries: &[ChainEntry]) -> Result<(), IntegrityFailure> {
    let mut prev = Digest32::ZERO;
    for (i, e) in entries.iter().enumerate() {
        let fail = |reason: &str| {
            Err(IntegrityFailure {
                first_bad_index: i as u64,
                reason: reason.to_string(),
            })
        };
        if e.index != i as u64 {
            return fail("index out of sequence");
        }
        if e.prev_hash != prev {
            return fail("prev_hash does not match the preceding entry");
        }
        if e.payload_hash != payload_hash(&e.payload) {
            return fail("payload_hash does not match the payload");
        }
        prev = e.entry_hash();
    }
    Ok(())
}

/// Writes one frame: a big-endian `u32` byte length, then the entry's canonical JSON.
pub fn write_frame(out: &mut impl Write, entry: &ChainEntry) -> std::io::Result<()> {
    let json = entry.canonical_json();
    let len = u32::try_from(json.len()).map_err(|_| std::io::Error::other("entry exceeds 4 GiB"))?;
    out.write_all(&len.to_be_bytes())?;
    out.write_all(json.as_bytes())
}

/// Splits a chain file into entries. Framing, UTF-8, JSON and canonical-form
/// errors are reported at the position of the frame they occur in.
pub fn decode_frames(bytes: &[u8]) -> Result<Vec<ChainEntry>, IntegrityFailure> {
    let mut entries = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let fail = |reason: String| IntegrityFailure {
            first_bad_index: entries.len() as u64,
            reason,
        };
        let header = bytes
            .get(pos..pos + 4)
            .ok_or_else(|| fail("truncated length prefix".into()))?;
        let len = u32::from_be_bytes(header.try_into().expect("4 bytes")) as usize;
        let body = bytes
            .get(pos + 4..pos + 4 + len)
            .ok_or_else(|| fail("frame extends past end of file".into()))?;
        let text = std::str::from_utf8(body).map_err(|_| fail("frame is not UTF-8".into()))?;
        if !is_canonical(text) {
            return Err(fail("frame is not canonical JSON".into()));
        }
        let entry: ChainEntry =
            serde_json::from_str(text).map_err(|e| fail(format!("malformed entry: {e}")))?;
        entries.push(entry);
        pos += 4 + len;
    }
    Ok(entries)
}

/// Reads and fully checks a chain from any byte source.
pub fn read_chain(mut input: impl Read) -> Result<Vec<ChainEntry>, LedgerError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let entries = decode_frames(&bytes).map_err(LedgerError::Integrity)?;
    check_integrity(&entries).map_err(LedgerError::Integrity)?;
    Ok(entries)
}

/// Integrity of a chain file on disk, localizing damage to an entry index.
pub fn check_file_integrity(bytes: &[u8]) -> Result<usize, IntegrityFailure> {
    let entries = decode_frames(bytes)?;
    check_integrity(&entries)?;
    Ok(entries.len())
}
