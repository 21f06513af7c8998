//! Proof backends over finalized execution logs, and aggregation of
//! chained batch proofs.
//!
//! Every proof carries the claimed `(S', S, C)` triple it attests to; the
//! settlement verifier checks that binding before anything else. The
//! replay backend packages the full execution log as the proof body; the
//! optimistic backend emits a bare claim to be guarded by the challenge
//! window instead of upfront verification. Aggregation concatenates
//! chained proofs under a commitment over their batch commitments, keeping
//! the verification interface identical to a single batch.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::codec::{CodecError, Decode, Encode};
use crate::domain::{batch_commitment, BatchCommitment};
use crate::hash::Digest;
use crate::log::ExecutionLog;
use crate::store::StateRoot;

/// File extension for serialized proofs.
pub const VPROOF_EXTENSION: &str = "vproof";

const TAG_REPLAY: u8 = 1;
const TAG_OPTIMISTIC: u8 = 2;
const TAG_AGGREGATED: u8 = 3;

#[derive(Debug, Error)]
pub enum ProverError {
    #[error("cannot aggregate an empty proof list")]
    EmptyAggregation,

    #[error("proof chain mismatch at position {position}: previous post-root {expected}, next pre-root {got}")]
    ChainMismatch {
        position: usize,
        expected: StateRoot,
        got: StateRoot,
    },

    #[error("malformed proof bytes: {0}")]
    Codec(#[from] CodecError),

    #[error("proof io: {0}")]
    Io(#[from] std::io::Error),
}

/// Verification artifact consumed by `verify(S', S, C, proof)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proof {
    /// Claimed updated state root (`S'`).
    pub claimed_post: StateRoot,
    /// Claimed previous state root (`S`).
    pub claimed_pre: StateRoot,
    /// Claimed batch commitment (`C`).
    pub claimed_commitment: BatchCommitment,
    pub body: ProofBody,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProofBody {
    /// Full witness package: verification statelessly re-executes the
    /// batch from the log.
    Replay(ExecutionLog),
    /// Bare optimistic claim; accepted pending the challenge window.
    OptimisticClaim,
    /// Ordered chained proofs covering consecutive batches.
    Aggregated(Vec<Proof>),
}

impl Proof {
    pub fn variant_name(&self) -> &'static str {
        match self.body {
            ProofBody::Replay(_) => "replay",
            ProofBody::OptimisticClaim => "optimistic-claim",
            ProofBody::Aggregated(_) => "aggregated",
        }
    }

    pub fn write_file(&self, path: &Path) -> Result<(), ProverError> {
        Ok(fs::write(path, self.encode())?)
    }

    pub fn read_file(path: &Path) -> Result<Proof, ProverError> {
        Ok(Proof::decode_all(&fs::read(path)?)?)
    }
}

impl Encode for Proof {
    fn encode_into(&self, out: &mut Vec<u8>) {
        let (tag, body) = match &self.body {
            ProofBody::Replay(log) => (TAG_REPLAY, log.encode()),
            ProofBody::OptimisticClaim => (TAG_OPTIMISTIC, Vec::new()),
            ProofBody::Aggregated(inner) => {
                let mut body = Vec::new();
                crate::codec::encode_seq(inner, &mut body);
                (TAG_AGGREGATED, body)
            }
        };
        out.push(tag);
        self.claimed_post.0.encode_into(out);
        self.claimed_pre.0.encode_into(out);
        self.claimed_commitment.encode_into(out);
        (body.len() as u64).encode_into(out);
        out.extend_from_slice(&body);
    }
}

impl Decode for Proof {
    fn decode_from(input: &mut &[u8]) -> Result<Self, CodecError> {
        let tag = u8::decode_from(input)?;
        let claimed_post = StateRoot(Digest::decode_from(input)?);
        let claimed_pre = StateRoot(Digest::decode_from(input)?);
        let claimed_commitment = BatchCommitment::decode_from(input)?;
        let body_len = u64::decode_from(input)? as usize;
        let body_bytes = crate::codec::take(input, body_len)?;
        let body = match tag {
            TAG_REPLAY => ProofBody::Replay(ExecutionLog::decode_all(body_bytes)?),
            TAG_OPTIMISTIC => {
                if !body_bytes.is_empty() {
                    return Err(CodecError::InvalidValue("optimistic claim body"));
                }
                ProofBody::OptimisticClaim
            }
            TAG_AGGREGATED => {
                let mut rest = body_bytes;
                let inner = crate::codec::decode_seq(&mut rest)?;
                if !rest.is_empty() {
                    return Err(CodecError::TrailingBytes(rest.len()));
                }
                ProofBody::Aggregated(inner)
            }
            tag => {
                return Err(CodecError::InvalidTag {
                    tag,
                    type_name: "Proof",
                })
            }
        };
        Ok(Proof {
            claimed_post,
            claimed_pre,
            claimed_commitment,
            body,
        })
    }
}

/// Pluggable proof backend: anything that turns a finalized log into a
/// proof artifact for its `(S', S, C)` triple.
pub trait ProofBackend {
    fn prove(&self, log: &ExecutionLog) -> Result<Proof, ProverError>;
}

/// Validity-style backend: the proof is the witness package itself.
#[derive(Debug, Default, Clone, Copy)]
pub struct ReplayBackend;

impl ProofBackend for ReplayBackend {
    fn prove(&self, log: &ExecutionLog) -> Result<Proof, ProverError> {
        Ok(prove_replay(log))
    }
}

/// Optimistic backend: posts the claimed triple without witnesses.
#[derive(Debug, Default, Clone, Copy)]
pub struct OptimisticBackend;

impl ProofBackend for OptimisticBackend {
    fn prove(&self, log: &ExecutionLog) -> Result<Proof, ProverError> {
        Ok(Proof {
            claimed_post: log.final_root(),
            claimed_pre: log.header().pre_root,
            claimed_commitment: log.header().commitment,
            body: ProofBody::OptimisticClaim,
        })
    }
}

/// Packages a finalized log as a replay proof claiming the log's own
/// `(S', S, C)` triple.
pub fn prove_replay(log: &ExecutionLog) -> Proof {
    Proof {
        claimed_post: log.final_root(),
        claimed_pre: log.header().pre_root,
        claimed_commitment: log.header().commitment,
        body: ProofBody::Replay(log.clone()),
    }
}

/// Aggregates consecutive batch proofs into one artifact spanning
/// `(S of first, S' of last)`, committed by a Merkle root over the inner
/// batch commitments. Each proof's pre-root must equal its predecessor's
/// post-root.
pub fn aggregate(proofs: &[Proof]) -> Result<Proof, ProverError> {
    if proofs.is_empty() {
        return Err(ProverError::EmptyAggregation);
    }
    for (i, pair) in proofs.windows(2).enumerate() {
        if pair[1].claimed_pre != pair[0].claimed_post {
            return Err(ProverError::ChainMismatch {
                position: i + 1,
                expected: pair[0].claimed_post,
                got: pair[1].claimed_pre,
            });
        }
    }
    let inner_digests: Vec<Digest> = proofs.iter().map(|p| p.claimed_commitment.digest).collect();
    let commitment = batch_commitment(&inner_digests).expect("non-empty aggregation");
    Ok(Proof {
        claimed_post: proofs.last().unwrap().claimed_post,
        claimed_pre: proofs[0].claimed_pre,
        claimed_commitment: commitment,
        body: ProofBody::Aggregated(proofs.to_vec()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{GrantTx, Keypair, TransactionEnvelope};
    use crate::lifecycle::apply_batch;
    use crate::store::AuthenticatedStore;

    fn keypair(seed: u8) -> Keypair {
        Keypair::from_seed([seed; 32])
    }

    fn two_chained_logs() -> (ExecutionLog, ExecutionLog) {
        let alice = keypair(1);
        let bob = keypair(2);
        let mut store = AuthenticatedStore::new();
        apply_batch(
            &mut store,
            &[TransactionEnvelope::genesis_grant(GrantTx {
                to: alice.address(),
                amount: 100,
            })],
        )
        .unwrap();
        let first = apply_batch(&mut store, &[alice.signed_transfer(bob.address(), 10, 0)])
            .unwrap()
            .log;
        let second = apply_batch(&mut store, &[bob.signed_transfer(alice.address(), 4, 0)])
            .unwrap()
            .log;
        (first, second)
    }

    #[test]
    fn replay_proof_claims_the_log_triple() {
        let (log, _) = two_chained_logs();
        let proof = prove_replay(&log);
        assert_eq!(proof.claimed_pre, log.header().pre_root);
        assert_eq!(proof.claimed_post, log.final_root());
        assert_eq!(proof.claimed_commitment, log.header().commitment);
    }

    #[test]
    fn identical_logs_give_byte_identical_proofs() {
        let (log, _) = two_chained_logs();
        assert_eq!(prove_replay(&log).encode(), prove_replay(&log).encode());
    }

    #[test]
    fn proof_wire_format_round_trips() {
        let (first, second) = two_chained_logs();
        for proof in [
            prove_replay(&first),
            OptimisticBackend.prove(&first).unwrap(),
            aggregate(&[prove_replay(&first), prove_replay(&second)]).unwrap(),
        ] {
            let bytes = proof.encode();
            assert_eq!(Proof::decode_all(&bytes).unwrap(), proof);
        }
    }

    #[test]
    fn proof_wire_format_layout() {
        let (log, _) = two_chained_logs();
        let proof = prove_replay(&log);
        let bytes = proof.encode();
        assert_eq!(bytes[0], TAG_REPLAY);
        assert_eq!(&bytes[1..33], proof.claimed_post.0.as_bytes());
        assert_eq!(&bytes[33..65], proof.claimed_pre.0.as_bytes());
        // 36-byte commitment then an 8-byte little-endian body length.
        let body_len =
            u64::from_le_bytes(bytes[101..109].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 109 + body_len);
    }

    #[test]
    fn aggregate_of_chained_proofs_spans_endpoints() {
        let (first, second) = two_chained_logs();
        let p1 = prove_replay(&first);
        let p2 = prove_replay(&second);
        let agg = aggregate(&[p1.clone(), p2.clone()]).unwrap();
        assert_eq!(agg.claimed_pre, p1.claimed_pre);
        assert_eq!(agg.claimed_post, p2.claimed_post);
        let expected = batch_commitment(&[
            p1.claimed_commitment.digest,
            p2.claimed_commitment.digest,
        ])
        .unwrap();
        assert_eq!(agg.claimed_commitment, expected);
    }

    #[test]
    fn broken_chain_is_rejected() {
        let (first, second) = two_chained_logs();
        let p1 = prove_replay(&first);
        let p2 = prove_replay(&second);
        assert!(matches!(
            aggregate(&[p2, p1]),
            Err(ProverError::ChainMismatch { position: 1, .. })
        ));
    }

    #[test]
    fn empty_aggregation_is_rejected() {
        assert!(matches!(
            aggregate(&[]),
            Err(ProverError::EmptyAggregation)
        ));
    }

    #[test]
    fn proof_file_round_trips() {
        let (log, _) = two_chained_logs();
        let proof = prove_replay(&log);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(format!("batch.{VPROOF_EXTENSION}"));
        proof.write_file(&path).unwrap();
        assert_eq!(Proof::read_file(&path).unwrap(), proof);
    }
}
