//! Per-batch execution logs.
//!
//! A log opens with the batch commitment and pre-root, accumulates one
//! step entry per transaction (its envelope, status, witnessed reads and
//! writes, and the intermediate root after the step), then is sealed with
//! the final root and a digest over everything preceding it. A finalized
//! log is immutable and is the entire witness a replay verifier needs.
//!
//! The builder is a prover-side integrity gate: appends are rejected when
//! step indices skip, embedded witnesses fail verification, or roots do
//! not chain.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::codec::{decode_seq, encode_seq, CodecError, Decode, Encode};
use crate::domain::{BatchCommitment, TransactionEnvelope};
use crate::hash::{sha256, Digest};
use crate::lifecycle::{
    reads_verify_against, writes_verify_against, TxStatus, WitnessedRead, WitnessedWrite,
};
use crate::store::StateRoot;

/// File extension for serialized execution logs.
pub const VLOG_EXTENSION: &str = "vlog";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("step index {got} out of order, expected {expected}")]
    OutOfOrderIndex { expected: u32, got: u32 },

    #[error("embedded witness does not verify against its anchored root")]
    BadWitness,

    #[error("rejected step must carry no writes and leave the root unchanged")]
    BadRejectedStep,

    #[error("step count {got} does not match batch commitment tx count {expected}")]
    StepCountMismatch { expected: u32, got: u32 },

    #[error("cannot finalize an empty log")]
    EmptyLog,

    #[error("final root does not equal the last intermediate root")]
    FinalRootMismatch,

    #[error("log digest mismatch")]
    DigestMismatch,

    #[error("malformed log bytes: {0}")]
    Codec(#[from] CodecError),

    #[error("log io: {0}")]
    Io(#[from] std::io::Error),
}

/// Fixed portion written before any step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogHeader {
    pub commitment: BatchCommitment,
    pub pre_root: StateRoot,
    pub tx_count: u32,
}

impl Encode for LogHeader {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.commitment.encode_into(out);
        self.pre_root.0.encode_into(out);
        self.tx_count.encode_into(out);
    }
}

impl Decode for LogHeader {
    fn decode_from(input: &mut &[u8]) -> Result<Self, CodecError> {
        Ok(LogHeader {
            commitment: BatchCommitment::decode_from(input)?,
            pre_root: StateRoot(Digest::decode_from(input)?),
            tx_count: u32::decode_from(input)?,
        })
    }
}

/// One transaction's record: status, witnesses, and the root after it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepEntry {
    pub tx_index: u32,
    pub envelope: TransactionEnvelope,
    pub status: TxStatus,
    pub reads: Vec<WitnessedRead>,
    pub writes: Vec<WitnessedWrite>,
    /// Root after this transaction; equals the previous root for rejected
    /// transactions.
    pub intermediate_root: StateRoot,
}

impl Encode for StepEntry {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.tx_index.encode_into(out);
        self.envelope.encode_into(out);
        self.status.encode_into(out);
        encode_seq(&self.reads, out);
        encode_seq(&self.writes, out);
        self.intermediate_root.0.encode_into(out);
    }
}

impl Decode for StepEntry {
    fn decode_from(input: &mut &[u8]) -> Result<Self, CodecError> {
        Ok(StepEntry {
            tx_index: u32::decode_from(input)?,
            envelope: TransactionEnvelope::decode_from(input)?,
            status: TxStatus::decode_from(input)?,
            reads: decode_seq(input)?,
            writes: decode_seq(input)?,
            intermediate_root: StateRoot(Digest::decode_from(input)?),
        })
    }
}

/// Log under construction; becomes an [`ExecutionLog`] at finalize.
pub struct LogBuilder {
    header: LogHeader,
    steps: Vec<StepEntry>,
}

impl LogBuilder {
    pub fn new(commitment: BatchCommitment, pre_root: StateRoot) -> LogBuilder {
        LogBuilder {
            header: LogHeader {
                commitment,
                pre_root,
                tx_count: commitment.tx_count,
            },
            steps: Vec::new(),
        }
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    fn previous_root(&self) -> StateRoot {
        self.steps
            .last()
            .map(|s| s.intermediate_root)
            .unwrap_or(self.header.pre_root)
    }

    /// Appends a step after checking its index, witness proofs, and root
    /// chaining.
    pub fn append(&mut self, step: StepEntry) -> Result<(), LogError> {
        let expected = self.steps.len() as u32;
        if step.tx_index != expected {
            return Err(LogError::OutOfOrderIndex {
                expected,
                got: step.tx_index,
            });
        }
        let prev = self.previous_root();
        if !reads_verify_against(&step.reads, prev) {
            return Err(LogError::BadWitness);
        }
        match step.status {
            TxStatus::Success => {
                if !writes_verify_against(&step.writes, step.intermediate_root) {
                    return Err(LogError::BadWitness);
                }
            }
            TxStatus::Rejected(_) => {
                if !step.writes.is_empty() || step.intermediate_root != prev {
                    return Err(LogError::BadRejectedStep);
                }
            }
        }
        self.steps.push(step);
        Ok(())
    }

    /// Seals the log with the final root and computes the log digest.
    pub fn finalize(self, final_root: StateRoot) -> Result<ExecutionLog, LogError> {
        if self.steps.is_empty() {
            return Err(LogError::EmptyLog);
        }
        if self.steps.len() as u32 != self.header.tx_count {
            return Err(LogError::StepCountMismatch {
                expected: self.header.tx_count,
                got: self.steps.len() as u32,
            });
        }
        if self.previous_root() != final_root {
            return Err(LogError::FinalRootMismatch);
        }
        let mut body = Vec::new();
        encode_body(&self.header, &self.steps, &final_root, &mut body);
        let log_digest = sha256(&body);
        Ok(ExecutionLog {
            header: self.header,
            steps: self.steps,
            final_root,
            log_digest,
        })
    }
}

fn encode_body(header: &LogHeader, steps: &[StepEntry], final_root: &StateRoot, out: &mut Vec<u8>) {
    header.encode_into(out);
    encode_seq(steps, out);
    final_root.0.encode_into(out);
}

/// Immutable, digest-sealed record of one batch execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionLog {
    header: LogHeader,
    steps: Vec<StepEntry>,
    final_root: StateRoot,
    log_digest: Digest,
}

impl ExecutionLog {
    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn steps(&self) -> &[StepEntry] {
        &self.steps
    }

    pub fn final_root(&self) -> StateRoot {
        self.final_root
    }

    pub fn log_digest(&self) -> Digest {
        self.log_digest
    }

    /// Recomputes the digest over the encoded body. True for any log
    /// produced by [`LogBuilder::finalize`]; false once any field has been
    /// altered after the fact.
    pub fn digest_is_consistent(&self) -> bool {
        let mut body = Vec::new();
        encode_body(&self.header, &self.steps, &self.final_root, &mut body);
        sha256(&body) == self.log_digest
    }

    /// Hands the finalized log to a proof backend.
    pub fn submit_to_prover<B: crate::prover::ProofBackend>(
        &self,
        backend: &B,
    ) -> Result<crate::prover::Proof, crate::prover::ProverError> {
        backend.prove(self)
    }

    pub fn write_file(&self, path: &Path) -> Result<(), LogError> {
        Ok(fs::write(path, self.encode())?)
    }

    pub fn read_file(path: &Path) -> Result<ExecutionLog, LogError> {
        Ok(ExecutionLog::decode_all(&fs::read(path)?)?)
    }

    /// Test-only escape hatch: rebuilds a log from parts without any
    /// builder checks, recomputing the digest the way an adversarial
    /// prover could. Lets tests construct internally-consistent but
    /// dishonest logs.
    #[doc(hidden)]
    pub fn from_raw_parts(
        header: LogHeader,
        steps: Vec<StepEntry>,
        final_root: StateRoot,
    ) -> ExecutionLog {
        let mut body = Vec::new();
        encode_body(&header, &steps, &final_root, &mut body);
        let log_digest = sha256(&body);
        ExecutionLog {
            header,
            steps,
            final_root,
            log_digest,
        }
    }
}

impl Encode for ExecutionLog {
    fn encode_into(&self, out: &mut Vec<u8>) {
        encode_body(&self.header, &self.steps, &self.final_root, out);
        self.log_digest.encode_into(out);
    }
}

impl Decode for ExecutionLog {
    fn decode_from(input: &mut &[u8]) -> Result<Self, CodecError> {
        let header = LogHeader::decode_from(input)?;
        let steps = decode_seq(input)?;
        let final_root = StateRoot(Digest::decode_from(input)?);
        let log_digest = Digest::decode_from(input)?;
        let log = ExecutionLog {
            header,
            steps,
            final_root,
            log_digest,
        };
        if !log.digest_is_consistent() {
            return Err(CodecError::InvalidValue("log digest"));
        }
        Ok(log)
    }
}

/// Pure structural check of a finalized log, with no store access: every
/// step's reads verify against the previous intermediate root, writes
/// verify against the step's own root, rejected steps leave the root
/// unchanged, and the final root equals the last intermediate root.
pub fn check_log_chain(log: &ExecutionLog) -> Result<(), LogError> {
    let mut prev = log.header.pre_root;
    for step in &log.steps {
        if !reads_verify_against(&step.reads, prev) {
            return Err(LogError::BadWitness);
        }
        match step.status {
            TxStatus::Success => {
                if !writes_verify_against(&step.writes, step.intermediate_root) {
                    return Err(LogError::BadWitness);
                }
            }
            TxStatus::Rejected(_) => {
                if !step.writes.is_empty() || step.intermediate_root != prev {
                    return Err(LogError::BadRejectedStep);
                }
            }
        }
        prev = step.intermediate_root;
    }
    if prev != log.final_root {
        return Err(LogError::FinalRootMismatch);
    }
    if !log.digest_is_consistent() {
        return Err(LogError::DigestMismatch);
    }
    Ok(())
}
