//! Append-only, hash-chained ledger with the submission/verification
//! contract semantics and certificate records.
//!
//! Every state change appends one [`ChainEntry`]. Entry hashes use SHA-256
//! over `index (u64 LE) || prev_hash || payload_hash`, where `payload_hash`
//! is SHA-256 of the payload's canonical JSON (sorted keys, compact, UTF-8).
//! The genesis entry's `prev_hash` is 32 zero bytes.
//!
//! On disk the chain is a sequence of frames, each a big-endian `u32` byte
//! count followed by the entry's canonical JSON, so every frame body starts
//! with the bytes `{"index":`.

mod chain;

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anomaly::SmartCertificate;
use crate::clock::Clock;

pub use chain::{
    check_file_integrity, check_integrity, decode_frames, payload_hash, read_chain, write_frame,
    ChainEntry, Digest32, IntegrityFailure,
};

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("Biological information cannot be empty.")]
    EmptyBiologicalInfo,
    #[error("Evaluation cannot be empty.")]
    EmptyEvaluation,
    #[error("Submission does not exist.")]
    SubmissionNotFound,
    #[error("Only the patient can verify the submission.")]
    NotSubmitter,
    #[error("Submission is already verified.")]
    AlreadyVerified,
    #[error("invalid address: expected 64 hex characters")]
    BadAddress,
    #[error("chain integrity failure at entry {}: {}", .0.first_bad_index, .0.reason)]
    Integrity(IntegrityFailure),
    #[error("chain entry {index} is inconsistent with the contract: {reason}")]
    Replay { index: u64, reason: String },
    #[error("ledger I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Opaque 32-byte identity written as 64 lowercase hex characters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Address(String);

impl Address {
    /// Accepts upper- or lowercase hex and normalizes to lowercase.
    pub fn parse(text: &str) -> Result<Self, LedgerError> {
        if text.len() == 64 && text.bytes().all(|b| b.is_ascii_hexdigit()) {
            Ok(Address(text.to_ascii_lowercase()))
        } else {
            Err(LedgerError::BadAddress)
        }
    }

    /// Deterministic address derived from a small integer, for tests and demos.
    pub fn from_index(i: u64) -> Self {
        let mut bytes = [0u8; 32];
        bytes[24..].copy_from_slice(&i.to_be_bytes());
        Address(hex::encode(bytes))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for Address {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        // stored addresses must already be normalized
        if s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(serde::de::Error::custom("address must be lowercase"));
        }
        Address::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmissionRecord {
    pub submission_id: u64,
    pub submitter: Address,
    pub biological_info: String,
    pub evaluation: String,
    pub timestamp: u64,
    /// Always false inside the chain; the current state lives in the index.
    pub is_verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateRecord {
    pub certificate_id: u64,
    pub submission_id: u64,
    pub certificate: SmartCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationEvent {
    pub submission_id: u64,
    pub caller: Address,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Submission(SubmissionRecord),
    Certificate(CertificateRecord),
    Verification(VerificationEvent),
}

/// Emitted once per accepted submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSubmitted {
    pub submission_id: u64,
    pub submitter: Address,
    pub biological_info: String,
    pub evaluation: String,
    pub timestamp: u64,
}

/// In-memory chain plus derived indices, optionally mirrored to a file.
///
/// All mutation goes through `&mut self`, so a single writer is enforced by
/// the borrow checker; callers sharing a ledger wrap it in a lock.
#[derive(Debug, Default)]
pub struct Ledger {
    entries: Vec<ChainEntry>,
    submissions: Vec<SubmissionRecord>,
    certificates: Vec<CertificateRecord>,
    events: Vec<DataSubmitted>,
    file: Option<(PathBuf, BufWriter<File>)>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens (or creates) a chain file, verifying and replaying its entries.
    pub fn open(path: &Path) -> Result<Self, LedgerError> {
        let mut ledger = if path.exists() {
            let bytes = std::fs::read(path)?;
            Self::from_entries(decode_frames(&bytes).map_err(LedgerError::Integrity)?)?
        } else {
            Self::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        ledger.file = Some((path.to_path_buf(), BufWriter::new(file)));
        Ok(ledger)
    }

    /// Rebuilds the indices from a chain, rejecting any tampering or any
    /// entry the contract could not have produced.
    pub fn from_entries(entries: Vec<ChainEntry>) -> Result<Self, LedgerError> {
        check_integrity(&entries).map_err(LedgerError::Integrity)?;
        let mut ledger = Self::new();
        for e in &entries {
            let bad = |reason: &str| LedgerError::Replay {
                index: e.index,
                reason: reason.to_string(),
            };
            match &e.payload {
                Payload::Submission(s) => {
                    if s.submission_id != ledger.submissions.len() as u64 || s.is_verified {
                        return Err(bad("unexpected submission id or verified flag"));
                    }
                    if s.biological_info.is_empty() || s.evaluation.is_empty() {
                        return Err(bad("empty submission field"));
                    }
                    ledger.index_submission(s.clone());
                }
                Payload::Certificate(c) => {
                    if c.certificate_id != ledger.certificates.len() as u64
                        || c.submission_id >= ledger.submissions.len() as u64
                    {
                        return Err(bad("unexpected certificate id or unknown submission"));
                    }
                    ledger.certificates.push(c.clone());
                }
                Payload::Verification(v) => {
                    let s = ledger
                        .submissions
                        .get_mut(v.submission_id as usize)
                        .ok_or_else(|| bad("verification of unknown submission"))?;
                    if s.submitter != v.caller || s.is_verified {
                        return Err(bad("verification not permitted"));
                    }
                    s.is_verified = true;
                }
            }
        }
        ledger.entries = entries;
        Ok(ledger)
    }

    fn index_submission(&mut self, s: SubmissionRecord) {
        self.events.push(DataSubmitted {
            submission_id: s.submission_id,
            submitter: s.submitter.clone(),
            biological_info: s.biological_info.clone(),
            evaluation: s.evaluation.clone(),
            timestamp: s.timestamp,
        });
        self.submissions.push(s);
    }

    fn append(&mut self, payload: Payload) -> Result<(), LedgerError> {
        let prev = self.entries.last().map_or(Digest32::ZERO, ChainEntry::entry_hash);
        let entry = ChainEntry::new(self.entries.len() as u64, prev, payload);
        if let Some((_, w)) = &mut self.file {
            write_frame(w, &entry)?;
            w.flush()?;
            w.get_ref().sync_data()?;
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn submit_data(
        &mut self,
        submitter: &Address,
        biological_info: &str,
        evaluation: &str,
        clock: &dyn Clock,
    ) -> Result<u64, LedgerError> {
        if biological_info.is_empty() {
            return Err(LedgerError::EmptyBiologicalInfo);
        }
        if evaluation.is_empty() {
            return Err(LedgerError::EmptyEvaluation);
        }
        let record = SubmissionRecord {
            submission_id: self.submissions.len() as u64,
            submitter: submitter.clone(),
            biological_info: biological_info.to_string(),
            evaluation: evaluation.to_string(),
            timestamp: clock.now(),
            is_verified: false,
        };
        self.append(Payload::Submission(record.clone()))?;
        let id = record.submission_id;
        self.index_submission(record);
        Ok(id)
    }

    pub fn verify_submission(
        &mut self,
        caller: &Address,
        submission_id: u64,
        clock: &dyn Clock,
    ) -> Result<(), LedgerError> {
        let s = self
            .submissions
            .get(submission_id as usize)
            .ok_or(LedgerError::SubmissionNotFound)?;
        if &s.submitter != caller {
            return Err(LedgerError::NotSubmitter);
        }
        if s.is_verified {
            return Err(LedgerError::AlreadyVerified);
        }
        self.append(Payload::Verification(VerificationEvent {
            submission_id,
            caller: caller.clone(),
            timestamp: clock.now(),
        }))?;
        self.submissions[submission_id as usize].is_verified = true;
        Ok(())
    }

    pub fn record_certificate(
        &mut self,
        certificate: SmartCertificate,
        submission_id: u64,
    ) -> Result<u64, LedgerError> {
        if submission_id >= self.submissions.len() as u64 {
            return Err(LedgerError::SubmissionNotFound);
        }
        let record = CertificateRecord {
            certificate_id: self.certificates.len() as u64,
            submission_id,
            certificate,
        };
        self.append(Payload::Certificate(record.clone()))?;
        self.certificates.push(record);
        Ok(self.certificates.len() as u64 - 1)
    }

    pub fn submission(&self, id: u64) -> Option<&SubmissionRecord> {
        self.submissions.get(id as usize)
    }

    pub fn submissions(&self) -> &[SubmissionRecord] {
        &self.submissions
    }

    pub fn certificates(&self) -> &[CertificateRecord] {
        &self.certificates
    }

    pub fn certificates_for(&self, submission_id: u64) -> impl Iterator<Item = &CertificateRecord> {
        self.certificates.iter().filter(move |c| c.submission_id == submission_id)
    }

    pub fn events(&self) -> &[DataSubmitted] {
        &self.events
    }

    pub fn entries(&self) -> &[ChainEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn check_integrity(&self) -> Result<(), IntegrityFailure> {
        check_integrity(&self.entries)
    }

    /// The whole chain as a JSON array of entries.
    pub fn export_json(&self) -> String {
        export_json(&self.entries)
    }
}

pub fn export_json(entries: &[ChainEntry]) -> String {
    crate::canonical::to_canonical_json(entries).expect("entries serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anomaly::AnomalyType;
    use crate::clock::FixedClock;
    use std::collections::BTreeMap;

    fn cert() -> SmartCertificate {
        SmartCertificate {
            anomaly_type: AnomalyType::None,
            timestamp: 9,
            metadata: BTreeMap::from([("score".to_string(), serde_json::json!(0.25))]),
            notes: "ok".into(),
        }
    }

    #[test]
    fn failure_modes_leave_ledger_unchanged() {
        let clock = FixedClock(100);
        let (alice, bob) = (Address::from_index(1), Address::from_index(2));
        let mut l = Ledger::new();
        assert!(matches!(l.submit_data(&alice, "", "e", &clock), Err(LedgerError::EmptyBiologicalInfo)));
        assert!(matches!(l.submit_data(&alice, "b", "", &clock), Err(LedgerError::EmptyEvaluation)));
        assert!(l.is_empty());
        assert_eq!(l.submit_data(&alice, "b", "e", &clock).unwrap(), 0);
        assert_eq!(l.events().len(), 1);
        let before = l.entries().to_vec();
        let err = l.verify_submission(&bob, 0, &clock).unwrap_err();
        assert_eq!(err.to_string(), "Only the patient can verify the submission.");
        let err = l.verify_submission(&alice, 5, &clock).unwrap_err();
        assert_eq!(err.to_string(), "Submission does not exist.");
        assert_eq!(l.entries(), before.as_slice());
        l.verify_submission(&alice, 0, &clock).unwrap();
        assert!(l.submission(0).unwrap().is_verified);
        let before = l.entries().to_vec();
        let err = l.verify_submission(&alice, 0, &clock).unwrap_err();
        assert_eq!(err.to_string(), "Submission is already verified.");
        assert_eq!(l.entries(), before.as_slice());
        assert_eq!(
            LedgerError::EmptyBiologicalInfo.to_string(),
            "Biological information cannot be empty."
        );
    }

    #[test]
    fn ids_are_sequential_and_certificates_ordered() {
        let clock = FixedClock(1);
        let a = Address::from_index(7);
        let mut l = Ledger::new();
        assert_eq!(l.submit_data(&a, "x", "y", &clock).unwrap(), 0);
        assert_eq!(l.submit_data(&a, "x2", "y2", &clock).unwrap(), 1);
        assert_eq!(l.submission(1).unwrap().biological_info, "x2");
        assert_eq!(l.record_certificate(cert(), 1).unwrap(), 0);
        assert_eq!(l.record_certificate(cert(), 1).unwrap(), 1);
        assert_eq!(l.certificates_for(1).count(), 2);
        assert!(matches!(l.record_certificate(cert(), 999), Err(LedgerError::SubmissionNotFound)));
        assert_eq!(l.len(), 4);
        assert!(l.check_integrity().is_ok());
    }

    #[test]
    fn genesis_and_linkage() {
        let mut l = Ledger::new();
        let a = Address::from_index(3);
        l.submit_data(&a, "b", "e", &FixedClock(5)).unwrap();
        l.submit_data(&a, "b", "e", &FixedClock(6)).unwrap();
        assert_eq!(l.entries()[0].prev_hash, Digest32::ZERO);
        assert_eq!(l.entries()[1].prev_hash, l.entries()[0].entry_hash());
    }

    #[test]
    fn canonical_payload_pins() {
        let p = Payload::Verification(VerificationEvent {
            submission_id: 2,
            caller: Address::from_index(1),
            timestamp: 7,
        });
        let json = crate::canonical::to_canonical_json(&p).unwrap();
        assert_eq!(
            json,
            format!(r#"{{"caller":"{}","submission_id":2,"timestamp":7,"type":"verification"}}"#, "0".repeat(63) + "1")
        );
    }

    #[test]
    fn tamper_cases() {
        let clock = FixedClock(1);
        let a = Address::from_index(1);
        let mut l = Ledger::new();
        for i in 0..5 {
            l.submit_data(&a, &format!("b{i}"), "e", &clock).unwrap();
        }
        let mut swapped = l.entries().to_vec();
        swapped.swap(2, 3);
        assert_eq!(check_integrity(&swapped).unwrap_err().first_bad_index, 2);

        let mut edited = l.entries().to_vec();
        if let Payload::Submission(s) = &mut edited[3].payload {
            s.evaluation.push('!');
        }
        assert_eq!(check_integrity(&edited).unwrap_err().first_bad_index, 3);

        let mut relinked = l.entries().to_vec();
        relinked[4].prev_hash = Digest32::ZERO;
        assert_eq!(check_integrity(&relinked).unwrap_err().first_bad_index, 4);
    }

    #[test]
    fn file_frames_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.bin");
        let a = Address::from_index(1);
        {
            let mut l = Ledger::open(&path).unwrap();
            l.submit_data(&a, "b", "e", &FixedClock(3)).unwrap();
            l.record_certificate(cert(), 0).unwrap();
        }
        let bytes = std::fs::read(&path).unwrap();
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        assert!(bytes[4..].starts_with(br#"{"index":0,"payload":{"#));
        assert_eq!(bytes[4 + len..].len() > 4, true);
        assert_eq!(check_file_integrity(&bytes).unwrap(), 2);
        let mut l = Ledger::open(&path).unwrap();
        assert_eq!(l.len(), 2);
        l.verify_submission(&a, 0, &FixedClock(4)).unwrap();
        drop(l);
        let reopened = Ledger::open(&path).unwrap();
        assert!(reopened.submission(0).unwrap().is_verified);
        assert_eq!(reopened.export_json(), export_json(reopened.entries()));
        let arr: Vec<ChainEntry> = serde_json::from_str(&reopened.export_json()).unwrap();
        assert_eq!(arr.len(), 3);
    }

    #[test]
    fn addresses() {
        let up = "AB".repeat(32);
        assert_eq!(Address::parse(&up).unwrap().as_str(), "ab".repeat(32));
        assert!(Address::parse("abc").is_err());
        assert!(Address::parse(&"zz".repeat(32)).is_err());
        assert!(serde_json::from_str::<Address>(&format!("\"{up}\"")).is_err());
    }

    #[test]
    fn replay_rejects_impossible_chains() {
        let a = Address::from_index(1);
        let b = Address::from_index(2);
        let mut l = Ledger::new();
        l.submit_data(&a, "x", "y", &FixedClock(1)).unwrap();
        let mut entries = l.entries().to_vec();
        let forged = ChainEntry::new(
            1,
            entries[0].entry_hash(),
            Payload::Verification(VerificationEvent { submission_id: 0, caller: b, timestamp: 2 }),
        );
        entries.push(forged);
        assert!(matches!(Ledger::from_entries(entries), Err(LedgerError::Replay { index: 1, .. })));
    }
}
