//! Sequencer: envelope admission, signed preconfirmations, batch sealing,
//! and the append-only data-availability log.
//!
//! Admission runs only stateless checks (payload shape, signature) so the
//! mempool stays cheap; nonce and balance validation happen at execution.
//! Ordering is strict FIFO by arrival, and every admitted envelope gets a
//! preconfirmation binding its digest to the assigned sequence number
//! under the sequencer's key.
//!
//! DA log file layout (`da.log`): a sequence of framed records, each
//! `4-byte little-endian length || record bytes || SHA-256(record bytes)`.
//! The first record is the header `b"VDA1" || version (1 byte) ||
//! sequencer public key (32 bytes)`; every following record is a
//! canonically encoded [`Batch`].

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec::{decode_seq, encode_seq, CodecError, Decode, Encode};
use crate::domain::{
    batch_commitment, envelope_digest, verify_envelope_signature, Address, BatchCommitment,
    Keypair, TransactionEnvelope, TransferTx, TxKind,
};
use crate::hash::{sha256, sha256_concat, Digest};
use crate::store::StateRoot;

pub const DA_MAGIC: &[u8; 4] = b"VDA1";
pub const DA_VERSION: u8 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SequencerError {
    #[error("payload does not decode for its kind, or the kind is not user-submittable")]
    BadFormat,

    #[error("envelope signature invalid")]
    BadSignature,

    #[error("an envelope with this sender and nonce is already pending")]
    DuplicateNonce,

    #[error("mempool is empty")]
    NoWork,
}

#[derive(Debug, Error)]
pub enum DaLogError {
    #[error("da log io: {0}")]
    Io(#[from] std::io::Error),

    #[error("batch index {0} not found")]
    NotFound(u64),

    #[error("corrupt record at byte offset {offset}")]
    Corrupt { offset: u64 },

    #[error("bad header record")]
    BadHeader,
}

/// Sequencer's signed binding of an envelope digest to its assigned
/// position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Preconfirmation {
    pub envelope_digest: Digest,
    pub sequence: u64,
    pub signature: [u8; 64],
}

fn preconfirmation_digest(envelope_digest: &Digest, sequence: u64) -> Digest {
    sha256_concat(&[envelope_digest.as_bytes(), &sequence.to_le_bytes()])
}

/// Client-side check of a preconfirmation against the sequencer's
/// published key.
pub fn verify_preconfirmation(sequencer_public_key: &[u8; 32], pc: &Preconfirmation) -> bool {
    let Ok(key) = ed25519_dalek::VerifyingKey::from_bytes(sequencer_public_key) else {
        return false;
    };
    let signature = ed25519_dalek::Signature::from_bytes(&pc.signature);
    key.verify_strict(
        preconfirmation_digest(&pc.envelope_digest, pc.sequence).as_bytes(),
        &signature,
    )
    .is_ok()
}

/// An admitted envelope with its arrival sequence number.
#[derive(Debug, Clone)]
pub struct PendingEnvelope {
    pub envelope: TransactionEnvelope,
    pub sequence: u64,
}

/// A sealed but not yet executed batch.
#[derive(Debug, Clone)]
pub struct SealedBatch {
    pub batch_index: u64,
    pub envelopes: Vec<TransactionEnvelope>,
    pub sequences: Vec<u64>,
    pub commitment: BatchCommitment,
}

impl SealedBatch {
    /// Fills in the execution results, producing the publishable record.
    pub fn into_batch(
        self,
        pre_root: StateRoot,
        post_root: StateRoot,
        tx_roots: Vec<StateRoot>,
    ) -> Batch {
        debug_assert_eq!(tx_roots.len(), self.envelopes.len());
        Batch {
            batch_index: self.batch_index,
            envelopes: self.envelopes,
            commitment: self.commitment,
            pre_root,
            post_root,
            tx_roots,
        }
    }
}

/// Executed batch as published to the DA log: ordered envelopes, the
/// commitment, the pre/post roots, and the declared root after each
/// transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub batch_index: u64,
    pub envelopes: Vec<TransactionEnvelope>,
    pub commitment: BatchCommitment,
    pub pre_root: StateRoot,
    pub post_root: StateRoot,
    pub tx_roots: Vec<StateRoot>,
}

impl Encode for Batch {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.batch_index.encode_into(out);
        encode_seq(&self.envelopes, out);
        self.commitment.encode_into(out);
        self.pre_root.encode_into(out);
        self.post_root.encode_into(out);
        encode_seq(&self.tx_roots, out);
    }
}

impl Decode for Batch {
    fn decode_from(input: &mut &[u8]) -> Result<Self, CodecError> {
        Ok(Batch {
            batch_index: u64::decode_from(input)?,
            envelopes: decode_seq(input)?,
            commitment: BatchCommitment::decode_from(input)?,
            pre_root: StateRoot::decode_from(input)?,
            post_root: StateRoot::decode_from(input)?,
            tx_roots: decode_seq(input)?,
        })
    }
}

/// FIFO mempool with single-admission per (sender, nonce) and signed
/// preconfirmations.
pub struct Sequencer {
    keypair: Keypair,
    pending: Vec<PendingEnvelope>,
    pending_index: HashSet<(Address, u64)>,
    next_sequence: u64,
    next_batch_index: u64,
}

impl Sequencer {
    pub fn new(keypair: Keypair) -> Sequencer {
        Sequencer {
            keypair,
            pending: Vec::new(),
            pending_index: HashSet::new(),
            next_sequence: 0,
            next_batch_index: 0,
        }
    }

    pub fn public_key(&self) -> [u8; 32] {
        self.keypair.public_key()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn next_batch_index(&self) -> u64 {
        self.next_batch_index
    }

    /// Restores ordering counters when rebuilding from persisted state.
    pub fn resume_at(&mut self, next_sequence: u64, next_batch_index: u64) {
        self.next_sequence = next_sequence;
        self.next_batch_index = next_batch_index;
    }

    pub fn pending(&self) -> &[PendingEnvelope] {
        &self.pending
    }

    /// Re-inserts a previously admitted envelope with its original
    /// sequence number (inbox recovery).
    pub fn restore(&mut self, envelope: TransactionEnvelope, sequence: u64) {
        self.pending_index
            .insert((envelope.sender_address(), envelope.nonce));
        self.pending.push(PendingEnvelope {
            envelope,
            sequence,
        });
        self.next_sequence = self.next_sequence.max(sequence + 1);
    }

    /// Admits an envelope after stateless checks and returns the signed
    /// preconfirmation for its assigned position.
    pub fn submit(
        &mut self,
        envelope: TransactionEnvelope,
    ) -> Result<Preconfirmation, SequencerError> {
        // Only signed user transactions are admissible; grants enter via
        // the genesis batch.
        if envelope.tx_kind != TxKind::Transfer {
            return Err(SequencerError::BadFormat);
        }
        if TransferTx::decode_all(&envelope.payload).is_err() {
            return Err(SequencerError::BadFormat);
        }
        if !verify_envelope_signature(&envelope) {
            return Err(SequencerError::BadSignature);
        }
        let key = (envelope.sender_address(), envelope.nonce);
        if !self.pending_index.insert(key) {
            return Err(SequencerError::DuplicateNonce);
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        let digest = envelope_digest(&envelope);
        let signature = self
            .keypair
            .sign_digest(&preconfirmation_digest(&digest, sequence));
        self.pending.push(PendingEnvelope {
            envelope,
            sequence,
        });
        Ok(Preconfirmation {
            envelope_digest: digest,
            sequence,
            signature,
        })
    }

    /// Drains up to `max_size` envelopes in arrival order into a sealed
    /// batch.
    pub fn seal_batch(&mut self, max_size: usize) -> Result<SealedBatch, SequencerError> {
        if self.pending.is_empty() {
            return Err(SequencerError::NoWork);
        }
        let take = max_size.min(self.pending.len());
        let drained: Vec<PendingEnvelope> = self.pending.drain(..take).collect();
        for entry in &drained {
            self.pending_index
                .remove(&(entry.envelope.sender_address(), entry.envelope.nonce));
        }
        let (envelopes, sequences): (Vec<_>, Vec<_>) = drained
            .into_iter()
            .map(|e| (e.envelope, e.sequence))
            .unzip();
        let digests: Vec<Digest> = envelopes.iter().map(envelope_digest).collect();
        let commitment = batch_commitment(&digests).expect("non-empty batch");
        let batch_index = self.next_batch_index;
        self.next_batch_index += 1;
        Ok(SealedBatch {
            batch_index,
            envelopes,
            sequences,
            commitment,
        })
    }

    /// Seals a batch from externally supplied envelopes (the genesis
    /// path), bypassing admission.
    pub fn seal_direct(
        &mut self,
        envelopes: Vec<TransactionEnvelope>,
    ) -> Result<SealedBatch, SequencerError> {
        if envelopes.is_empty() {
            return Err(SequencerError::NoWork);
        }
        let digests: Vec<Digest> = envelopes.iter().map(envelope_digest).collect();
        let commitment = batch_commitment(&digests).expect("non-empty batch");
        let batch_index = self.next_batch_index;
        self.next_batch_index += 1;
        Ok(SealedBatch {
            batch_index,
            sequences: Vec::new(),
            envelopes,
            commitment,
        })
    }
}

/// Append-only data-availability log over a single file.
pub struct DaLog {
    path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DaHeader {
    pub version: u8,
    pub sequencer_public_key: [u8; 32],
}

impl DaLog {
    /// Opens the log, writing the header record if the file is new.
    pub fn open_or_create(
        path: &Path,
        sequencer_public_key: &[u8; 32],
    ) -> Result<DaLog, DaLogError> {
        let log = DaLog {
            path: path.to_path_buf(),
        };
        let needs_header = match std::fs::metadata(path) {
            Ok(meta) => meta.len() == 0,
            Err(_) => true,
        };
        if needs_header {
            let mut header = Vec::with_capacity(37);
            header.extend_from_slice(DA_MAGIC);
            header.push(DA_VERSION);
            header.extend_from_slice(sequencer_public_key);
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            write_framed(&mut file, &header)?;
        } else {
            // Validate the existing header eagerly.
            log.header()?;
        }
        Ok(log)
    }

    /// Opens an existing log read-only-style (no header is written);
    /// fails when the file is missing or its header is invalid.
    pub fn open_existing(path: &Path) -> Result<DaLog, DaLogError> {
        let log = DaLog {
            path: path.to_path_buf(),
        };
        log.header()?;
        Ok(log)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn header(&self) -> Result<DaHeader, DaLogError> {
        let records = self.read_frames(Some(1))?;
        let Some((_, bytes)) = records.first() else {
            return Err(DaLogError::BadHeader);
        };
        parse_header(bytes).ok_or(DaLogError::BadHeader)
    }

    /// Appends an executed batch; returns the byte offset of its record.
    pub fn publish(&self, batch: &Batch) -> Result<u64, DaLogError> {
        let mut file = OpenOptions::new().append(true).open(&self.path)?;
        let offset = file.metadata()?.len();
        write_framed(&mut file, &batch.encode())?;
        Ok(offset)
    }

    /// Returns the latest record for `batch_index`. A batch republished
    /// after a reverted claim supersedes its earlier record.
    pub fn read_batch(&self, batch_index: u64) -> Result<Batch, DaLogError> {
        let mut found = None;
        for entry in self.read_batches()? {
            if entry.batch.batch_index == batch_index {
                found = Some(entry.batch);
            }
        }
        found.ok_or(DaLogError::NotFound(batch_index))
    }

    /// Reads every batch record in file order with its byte offset.
    pub fn read_batches(&self) -> Result<Vec<DaEntry>, DaLogError> {
        let frames = self.read_frames(None)?;
        let mut batches = Vec::new();
        for (i, (offset, bytes)) in frames.iter().enumerate() {
            if i == 0 {
                if parse_header(bytes).is_none() {
                    return Err(DaLogError::BadHeader);
                }
                continue;
            }
            let batch = Batch::decode_all(bytes).map_err(|_| DaLogError::Corrupt {
                offset: *offset,
            })?;
            batches.push(DaEntry {
                offset: *offset,
                batch,
            });
        }
        Ok(batches)
    }

    fn read_frames(&self, limit: Option<usize>) -> Result<Vec<(u64, Vec<u8>)>, DaLogError> {
        let mut data = Vec::new();
        File::open(&self.path)?.read_to_end(&mut data)?;
        let mut frames = Vec::new();
        let mut offset = 0usize;
        while offset < data.len() {
            let frame_start = offset as u64;
            if data.len() - offset < 4 {
                return Err(DaLogError::Corrupt {
                    offset: frame_start,
                });
            }
            let len =
                u32::from_le_bytes(data[offset..offset + 4].try_into().unwrap()) as usize;
            offset += 4;
            if data.len() - offset < len + 32 {
                return Err(DaLogError::Corrupt {
                    offset: frame_start,
                });
            }
            let bytes = &data[offset..offset + len];
            let checksum = &data[offset + len..offset + len + 32];
            if sha256(bytes).as_bytes() != checksum {
                return Err(DaLogError::Corrupt {
                    offset: frame_start,
                });
            }
            frames.push((frame_start, bytes.to_vec()));
            offset += len + 32;
            if let Some(limit) = limit {
                if frames.len() >= limit {
                    break;
                }
            }
        }
        Ok(frames)
    }
}

/// One published batch with its byte offset in the log file.
#[derive(Debug, Clone)]
pub struct DaEntry {
    pub offset: u64,
    pub batch: Batch,
}

fn parse_header(bytes: &[u8]) -> Option<DaHeader> {
    if bytes.len() != 37 || &bytes[..4] != DA_MAGIC {
        return None;
    }
    Some(DaHeader {
        version: bytes[4],
        sequencer_public_key: bytes[5..37].try_into().unwrap(),
    })
}

fn write_framed(file: &mut File, bytes: &[u8]) -> Result<(), DaLogError> {
    let mut frame = Vec::with_capacity(4 + bytes.len() + 32);
    frame.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    frame.extend_from_slice(bytes);
    frame.extend_from_slice(sha256(bytes).as_bytes());
    file.write_all(&frame)?;
    Ok(())
}
