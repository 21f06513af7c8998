//! Simulated settlement layer.
//!
//! [`verify`] is the unified stateless entry point: given only
//! `(S', S, C, proof)` it decides whether the proof attests the state
//! transition `(S, C) -> S'`. For replay proofs that means re-deriving the
//! batch commitment from the envelopes, checking every witness against its
//! anchored root, re-executing each handler from the witnessed reads
//! alone, and reconstructing each intermediate root from the pre-state
//! witnesses — so a claimed root that changes anything beyond the declared
//! writes is rejected.
//!
//! [`SettlementContract`] holds the canonical root and adjudicates both
//! pathways: validity submissions verified upfront, and optimistic claims
//! guarded by a logical-tick challenge window during which a watcher can
//! submit a transaction-level fraud proof.

use std::fmt;
use std::io::{self, Write};

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::domain::{
    batch_commitment, envelope_digest, verify_batch_inclusion, BatchCommitment,
    BatchInclusionProof,
};
use crate::hash::{leaf_digest, node_digest, sha256, Digest, TREE_DEPTH};
use crate::lifecycle::replay_step;
use crate::log::StepEntry;
use crate::prover::{Proof, ProofBody};
use crate::store::{verify_proof, AuthenticatedStore, StateRoot};

/// Machine-readable reasons for rejecting a proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum VerifyError {
    /// The proof's claimed `(S', S, C)` does not match the arguments, or
    /// the proof body is bound to a different triple.
    #[error("claimed triple does not match verification arguments")]
    TripleMismatch,

    /// The log digest does not cover the presented body.
    #[error("log digest mismatch")]
    DigestMismatch,

    /// The batch commitment cannot be recomputed from the envelopes.
    #[error("batch commitment mismatch")]
    CommitmentMismatch,

    /// A witness proof failed verification, a written key lacks a read
    /// witness, or the pre-state witnesses are inconsistent.
    #[error("witness verification failed")]
    BadWitness,

    /// Deterministic re-execution from the witnessed reads disagrees with
    /// the recorded status or writes.
    #[error("re-execution diverges from the recorded outcome")]
    ExecutionMismatch,

    /// An intermediate or final root does not follow from the writes.
    #[error("root transition mismatch")]
    RootMismatch,

    /// Aggregated inner proofs do not chain or do not span the endpoints.
    #[error("aggregated proof chain mismatch")]
    ChainMismatch,

    /// Structural defect in the proof body.
    #[error("malformed proof: {0}")]
    Malformed(&'static str),
}

/// Stateless verification of `(S, C) -> S'` under `proof`.
pub fn verify(
    s_prime: StateRoot,
    s: StateRoot,
    c: BatchCommitment,
    proof: &Proof,
) -> Result<(), VerifyError> {
    if proof.claimed_post != s_prime || proof.claimed_pre != s || proof.claimed_commitment != c {
        return Err(VerifyError::TripleMismatch);
    }
    match &proof.body {
        ProofBody::Replay(log) => {
            if log.header().pre_root != s
                || log.final_root() != s_prime
                || log.header().commitment != c
            {
                return Err(VerifyError::TripleMismatch);
            }
            if !log.digest_is_consistent() {
                return Err(VerifyError::DigestMismatch);
            }
            if log.steps().len() as u32 != c.tx_count {
                return Err(VerifyError::Malformed("step count"));
            }
            let digests: Vec<Digest> =
                log.steps().iter().map(|s| envelope_digest(&s.envelope)).collect();
            match batch_commitment(&digests) {
                Ok(recomputed) if recomputed == c => {}
                _ => return Err(VerifyError::CommitmentMismatch),
            }

            let mut prev = s;
            for (i, step) in log.steps().iter().enumerate() {
                if step.tx_index != i as u32 {
                    return Err(VerifyError::Malformed("step index"));
                }
                prev = verify_step(prev, s, step)?;
            }
            if prev != s_prime {
                return Err(VerifyError::RootMismatch);
            }
            Ok(())
        }
        // An optimistic claim carries no witnesses; it "verifies" pending
        // the challenge window, so only the triple binding applies.
        ProofBody::OptimisticClaim => Ok(()),
        ProofBody::Aggregated(inner) => {
            if inner.is_empty() {
                return Err(VerifyError::Malformed("empty aggregation"));
            }
            if inner[0].claimed_pre != s || inner.last().unwrap().claimed_post != s_prime {
                return Err(VerifyError::ChainMismatch);
            }
            for pair in inner.windows(2) {
                if pair[1].claimed_pre != pair[0].claimed_post {
                    return Err(VerifyError::ChainMismatch);
                }
            }
            let digests: Vec<Digest> =
                inner.iter().map(|p| p.claimed_commitment.digest).collect();
            match batch_commitment(&digests) {
                Ok(recomputed) if recomputed == c => {}
                _ => return Err(VerifyError::CommitmentMismatch),
            }
            for p in inner {
                verify(p.claimed_post, p.claimed_pre, p.claimed_commitment, p)?;
            }
            Ok(())
        }
    }
}

type NodeMap = FxHashMap<(u16, [u8; 32]), Digest>;

fn record_node(map: &mut NodeMap, depth: usize, prefix: [u8; 32], d: Digest) -> Result<(), VerifyError> {
    match map.insert((depth as u16, prefix), d) {
        // Witnesses anchored at one root must agree wherever their paths
        // overlap; a conflict means a forged proof (or a hash collision).
        Some(existing) if existing != d => Err(VerifyError::BadWitness),
        _ => Ok(()),
    }
}

/// Folds a leaf to the root along its path, recording every on-path and
/// sibling digest of the pre-state tree into `known`.
fn fold_recording(
    kd: &Digest,
    leaf: Digest,
    siblings: &[Digest],
    known: &mut NodeMap,
) -> Result<Digest, VerifyError> {
    let mut current = leaf;
    let mut path = *kd.as_bytes();
    record_node(known, TREE_DEPTH, path, current)?;
    for (i, sibling) in siblings.iter().enumerate() {
        let parent_depth = TREE_DEPTH - 1 - i;
        let byte = parent_depth / 8;
        let mask = 1u8 << (7 - parent_depth % 8);
        let mut sibling_prefix = path;
        sibling_prefix[byte] ^= mask;
        record_node(known, parent_depth + 1, sibling_prefix, *sibling)?;
        current = if path[byte] & mask != 0 {
            node_digest(sibling, &current)
        } else {
            node_digest(&current, sibling)
        };
        path[byte] &= !mask;
        record_node(known, parent_depth, path, current)?;
    }
    Ok(current)
}

/// Verifies one step against the root before it, returning the root after
/// it. `batch_pre_root` is the batch's `S`, which gates genesis grants.
pub(crate) fn verify_step(
    prev: StateRoot,
    batch_pre_root: StateRoot,
    step: &StepEntry,
) -> Result<StateRoot, VerifyError> {
    let written_keys: std::collections::HashSet<&[u8]> =
        step.writes.iter().map(|w| w.key.as_slice()).collect();

    // Verify every read against the pre-state. Reads of keys that are
    // also written double as the pre-state evidence for the root
    // reconstruction, so their folds are recorded rather than repeated.
    let mut known = NodeMap::default();
    for read in &step.reads {
        if read.pre_root != prev {
            return Err(VerifyError::BadWitness);
        }
        let Some(leaf) = crate::store::proof_shape(&read.proof, &read.key, read.value.as_deref())
        else {
            return Err(VerifyError::BadWitness);
        };
        let folded = if written_keys.contains(read.key.as_slice()) {
            fold_recording(&read.proof.key_digest, leaf, &read.proof.siblings, &mut known)?
        } else {
            crate::store::fold_proof(&read.proof.key_digest, leaf, &read.proof.siblings)
        };
        if folded != prev.0 {
            return Err(VerifyError::BadWitness);
        }
    }

    let replayed =
        replay_step(&step.envelope, batch_pre_root, &step.reads).ok_or(VerifyError::BadWitness)?;
    if replayed.status != step.status {
        return Err(VerifyError::ExecutionMismatch);
    }

    match step.status {
        crate::lifecycle::TxStatus::Rejected(_) => {
            if !step.writes.is_empty() {
                return Err(VerifyError::Malformed("rejected step with writes"));
            }
            if step.intermediate_root != prev {
                return Err(VerifyError::RootMismatch);
            }
            Ok(prev)
        }
        crate::lifecycle::TxStatus::Success => {
            let recorded: Vec<(Vec<u8>, Option<Vec<u8>>)> = step
                .writes
                .iter()
                .map(|w| (w.key.clone(), w.new_value.clone()))
                .collect();
            if replayed.writes != recorded {
                return Err(VerifyError::ExecutionMismatch);
            }
            if written_keys.len() != step.writes.len() {
                return Err(VerifyError::Malformed("duplicate write key"));
            }
            let read_keys: std::collections::HashSet<&[u8]> =
                step.reads.iter().map(|r| r.key.as_slice()).collect();
            for write in &step.writes {
                if write.post_root != step.intermediate_root
                    || !verify_proof(
                        &step.intermediate_root,
                        &write.key,
                        write.new_value.as_deref(),
                        &write.proof_of_new,
                    )
                {
                    return Err(VerifyError::BadWitness);
                }
                // The rebuild needs the pre-state of every written key.
                if !read_keys.contains(write.key.as_slice()) {
                    return Err(VerifyError::BadWitness);
                }
            }
            let rebuilt = apply_writes_to_root(prev, &known, &step.writes)?;
            if rebuilt != step.intermediate_root {
                return Err(VerifyError::RootMismatch);
            }
            Ok(step.intermediate_root)
        }
    }
}

/// Reconstructs the root after replacing the written leaves in the
/// pre-state.
///
/// `known` carries the pre-state node digests pinned by the verified read
/// witnesses of the written keys. The written leaves are replaced and
/// every affected ancestor recomputed bottom-up; untouched children come
/// from `known`. Because the root commits to the whole tree, equality of
/// the result with the claimed post-root proves the transition changed
/// exactly the declared keys.
fn apply_writes_to_root(
    prev: StateRoot,
    known: &NodeMap,
    writes: &[crate::lifecycle::WitnessedWrite],
) -> Result<StateRoot, VerifyError> {
    if writes.is_empty() {
        return Ok(prev);
    }

    // (depth, prefix) -> digest after the writes, seeded with new leaves.
    let mut updated = NodeMap::default();
    let mut paths = Vec::with_capacity(writes.len());
    for write in writes {
        let kd = sha256(&write.key);
        let new_leaf = match &write.new_value {
            Some(v) => leaf_digest(&kd, &sha256(v)),
            None => Digest::ZERO,
        };
        record_node(&mut updated, TREE_DEPTH, *kd.as_bytes(), new_leaf)?;
        paths.push(kd);
    }

    // Recompute affected ancestors bottom-up. Children are either on an
    // updated path (recomputed at the deeper level) or untouched pre-state
    // nodes recorded during the read folds.
    for depth in (0..TREE_DEPTH).rev() {
        for kd in &paths {
            let prefix = prefix_of(kd, depth);
            if updated.contains_key(&(depth as u16, prefix)) {
                continue;
            }
            let byte = depth / 8;
            let mask = 1u8 << (7 - depth % 8);
            let mut left_prefix = prefix;
            left_prefix[byte] &= !mask;
            let mut right_prefix = prefix;
            right_prefix[byte] |= mask;
            let child = |map_prefix: [u8; 32]| {
                let id = ((depth + 1) as u16, map_prefix);
                updated.get(&id).or_else(|| known.get(&id)).copied()
            };
            let left = child(left_prefix).ok_or(VerifyError::BadWitness)?;
            let right = child(right_prefix).ok_or(VerifyError::BadWitness)?;
            updated.insert((depth as u16, prefix), node_digest(&left, &right));
        }
    }

    let root = updated
        .get(&(0u16, [0u8; 32]))
        .copied()
        .ok_or(VerifyError::BadWitness)?;
    Ok(StateRoot(root))
}

fn prefix_of(kd: &Digest, depth: usize) -> [u8; 32] {
    let mut prefix = [0u8; 32];
    let full = depth / 8;
    prefix[..full].copy_from_slice(&kd.as_bytes()[..full]);
    if depth % 8 != 0 {
        prefix[full] = kd.as_bytes()[full] & (0xffu8 << (8 - depth % 8));
    }
    prefix
}

/// How a transition reached the canonical chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SettlementMode {
    Validity,
    Optimistic,
}

impl SettlementMode {
    pub fn name(&self) -> &'static str {
        match self {
            SettlementMode::Validity => "validity",
            SettlementMode::Optimistic => "optimistic",
        }
    }

    pub fn from_name(name: &str) -> Option<SettlementMode> {
        match name {
            "validity" => Some(SettlementMode::Validity),
            "optimistic" => Some(SettlementMode::Optimistic),
            _ => None,
        }
    }
}

/// One finalized transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalizedRecord {
    pub pre_root: StateRoot,
    pub post_root: StateRoot,
    pub commitment: BatchCommitment,
    pub mode: SettlementMode,
    pub tick: u64,
}

impl FinalizedRecord {
    /// Line format: `S S' C_digest tx_count mode tick`, hex roots.
    pub fn to_line(&self) -> String {
        format!(
            "{} {} {} {} {} {}",
            self.pre_root,
            self.post_root,
            self.commitment.digest,
            self.commitment.tx_count,
            self.mode.name(),
            self.tick
        )
    }

    pub fn parse_line(line: &str) -> Option<FinalizedRecord> {
        let mut fields = line.split_ascii_whitespace();
        let pre_root = StateRoot::from_hex(fields.next()?)?;
        let post_root = StateRoot::from_hex(fields.next()?)?;
        let digest = Digest::from_hex(fields.next()?)?;
        let tx_count = fields.next()?.parse().ok()?;
        let mode = SettlementMode::from_name(fields.next()?)?;
        let tick = fields.next()?.parse().ok()?;
        if fields.next().is_some() {
            return None;
        }
        Some(FinalizedRecord {
            pre_root,
            post_root,
            commitment: BatchCommitment {
                digest,
                tx_count,
            },
            mode,
            tick,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClaimStatus {
    Pending,
    Finalized,
    Reverted,
}

/// Identifier of an optimistic claim within one contract instance.
pub type ClaimId = u64;

/// A posted optimistic state transition awaiting its challenge window.
#[derive(Debug, Clone)]
pub struct OptimisticClaim {
    pub id: ClaimId,
    pub pre_root: StateRoot,
    pub post_root: StateRoot,
    pub commitment: BatchCommitment,
    /// Declared root after each transaction; the surface a fraud proof
    /// pinpoints against.
    pub tx_roots: Vec<StateRoot>,
    pub submitted_at: u64,
    pub status: ClaimStatus,
}

/// Claim data as posted by the sequencer pipeline.
#[derive(Debug, Clone)]
pub struct ClaimSubmission {
    pub post_root: StateRoot,
    pub pre_root: StateRoot,
    pub commitment: BatchCommitment,
    pub tx_roots: Vec<StateRoot>,
}

/// Transaction-level fraud proof: the correct execution of the first
/// transaction whose declared root diverges.
#[derive(Debug, Clone)]
pub struct FraudProof {
    pub claim_id: ClaimId,
    pub tx_index: u32,
    /// Honest step with witnesses anchored at the agreed prior root (the
    /// declared chain is undisputed before the first divergence).
    pub correct_step: StepEntry,
    /// The claim's declared root at `tx_index`, cited as wrong.
    pub claimed_root: StateRoot,
    /// Shows the step's envelope is leaf `tx_index` of the claim's batch
    /// commitment.
    pub envelope_inclusion: BatchInclusionProof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SettlementError {
    /// Submission's pre-root is not the canonical root.
    #[error("stale base: submission does not extend the canonical root")]
    StaleBase,

    #[error("proof rejected: {0}")]
    Rejected(VerifyError),

    /// A claim is already pending; only one may be open at a time.
    #[error("a pending claim already exists")]
    ClaimPending,

    #[error("claim structure invalid: {0}")]
    BadClaim(&'static str),

    #[error("unknown claim id")]
    UnknownClaim,

    /// The claim already finalized (or was reverted); the window is shut.
    #[error("challenge window closed")]
    WindowClosed,

    /// Fraud proof witnesses do not verify against the agreed root.
    #[error("fraud proof witnesses invalid")]
    BadWitness,

    /// Correct re-execution matches the claim; nothing to revert.
    #[error("no divergence: claim matches honest re-execution")]
    NoDivergence,
}

/// The settlement contract: canonical root, finalized history, pending
/// optimistic claims, and the logical clock.
pub struct SettlementContract {
    canonical_root: StateRoot,
    history: Vec<FinalizedRecord>,
    claims: Vec<OptimisticClaim>,
    logical_clock: u64,
    challenge_window: u64,
}

impl SettlementContract {
    /// Fresh contract anchored at the empty-tree root.
    pub fn new(challenge_window: u64) -> SettlementContract {
        SettlementContract {
            canonical_root: AuthenticatedStore::empty_root(),
            history: Vec::new(),
            claims: Vec::new(),
            logical_clock: 0,
            challenge_window,
        }
    }

    /// Rebuilds a contract from exported history lines.
    pub fn from_history(
        challenge_window: u64,
        history: Vec<FinalizedRecord>,
    ) -> SettlementContract {
        let canonical_root = history
            .last()
            .map(|r| r.post_root)
            .unwrap_or(AuthenticatedStore::empty_root());
        let logical_clock = history.last().map(|r| r.tick).unwrap_or(0);
        SettlementContract {
            canonical_root,
            history,
            claims: Vec::new(),
            logical_clock,
            challenge_window,
        }
    }

    pub fn canonical_root(&self) -> StateRoot {
        self.canonical_root
    }

    pub fn logical_clock(&self) -> u64 {
        self.logical_clock
    }

    pub fn challenge_window(&self) -> u64 {
        self.challenge_window
    }

    pub fn history(&self) -> &[FinalizedRecord] {
        &self.history
    }

    pub fn claim(&self, id: ClaimId) -> Option<&OptimisticClaim> {
        self.claims.get(id as usize)
    }

    pub fn pending_claims(&self) -> impl Iterator<Item = &OptimisticClaim> {
        self.claims
            .iter()
            .filter(|c| c.status == ClaimStatus::Pending)
    }

    /// Verifies and finalizes a validity submission.
    pub fn submit_validity(
        &mut self,
        s_prime: StateRoot,
        s: StateRoot,
        c: BatchCommitment,
        proof: &Proof,
    ) -> Result<(), SettlementError> {
        if s != self.canonical_root {
            return Err(SettlementError::StaleBase);
        }
        verify(s_prime, s, c, proof).map_err(SettlementError::Rejected)?;
        self.canonical_root = s_prime;
        self.history.push(FinalizedRecord {
            pre_root: s,
            post_root: s_prime,
            commitment: c,
            mode: SettlementMode::Validity,
            tick: self.logical_clock,
        });
        Ok(())
    }

    /// Posts an optimistic claim; it finalizes after the challenge window
    /// unless a fraud proof reverts it first.
    pub fn submit_optimistic_claim(
        &mut self,
        claim: ClaimSubmission,
    ) -> Result<ClaimId, SettlementError> {
        if claim.pre_root != self.canonical_root {
            return Err(SettlementError::StaleBase);
        }
        if self.pending_claims().next().is_some() {
            return Err(SettlementError::ClaimPending);
        }
        if claim.tx_roots.len() != claim.commitment.tx_count as usize {
            return Err(SettlementError::BadClaim("tx root count"));
        }
        if claim.tx_roots.last() != Some(&claim.post_root) {
            return Err(SettlementError::BadClaim("last tx root must equal S'"));
        }
        let id = self.claims.len() as ClaimId;
        self.claims.push(OptimisticClaim {
            id,
            pre_root: claim.pre_root,
            post_root: claim.post_root,
            commitment: claim.commitment,
            tx_roots: claim.tx_roots,
            submitted_at: self.logical_clock,
            status: ClaimStatus::Pending,
        });
        Ok(id)
    }

    /// Advances the logical clock.
    pub fn tick(&mut self, n: u64) {
        self.logical_clock += n;
    }

    /// Finalizes every pending claim whose window has elapsed, advancing
    /// the canonical root. Returns the finalized claim ids.
    pub fn finalize_ready(&mut self) -> Vec<ClaimId> {
        let mut finalized = Vec::new();
        for i in 0..self.claims.len() {
            let ready = {
                let claim = &self.claims[i];
                claim.status == ClaimStatus::Pending
                    && self.logical_clock >= claim.submitted_at + self.challenge_window
                    && claim.pre_root == self.canonical_root
            };
            if ready {
                self.claims[i].status = ClaimStatus::Finalized;
                let claim = &self.claims[i];
                self.canonical_root = claim.post_root;
                self.history.push(FinalizedRecord {
                    pre_root: claim.pre_root,
                    post_root: claim.post_root,
                    commitment: claim.commitment,
                    mode: SettlementMode::Optimistic,
                    tick: self.logical_clock,
                });
                finalized.push(claim.id);
            }
        }
        finalized
    }

    /// Adjudicates a fraud proof against a pending claim.
    ///
    /// Accepts iff the cited envelope is proven inside the claim's batch
    /// commitment, the step's witnesses verify against the agreed prior
    /// root, honest re-execution of that single transaction is internally
    /// consistent, and the resulting root differs from the declared one.
    /// On acceptance the claim is marked reverted and the canonical root
    /// stays put.
    pub fn submit_fraud_proof(&mut self, fraud: &FraudProof) -> Result<(), SettlementError> {
        let claim = self
            .claims
            .get(fraud.claim_id as usize)
            .ok_or(SettlementError::UnknownClaim)?;
        if claim.status != ClaimStatus::Pending {
            return Err(SettlementError::WindowClosed);
        }
        let tx_index = fraud.tx_index as usize;
        if tx_index >= claim.tx_roots.len() {
            return Err(SettlementError::BadWitness);
        }
        if fraud.claimed_root != claim.tx_roots[tx_index] {
            return Err(SettlementError::BadWitness);
        }
        if fraud.correct_step.tx_index != fraud.tx_index {
            return Err(SettlementError::BadWitness);
        }
        let env_digest = envelope_digest(&fraud.correct_step.envelope);
        if fraud.envelope_inclusion.index != fraud.tx_index
            || !verify_batch_inclusion(&claim.commitment, &env_digest, &fraud.envelope_inclusion)
        {
            return Err(SettlementError::BadWitness);
        }
        // Before the first divergence the declared chain is undisputed, so
        // the declared root preceding the cited index is the agreed
        // pre-state for re-execution.
        let agreed_prev = if tx_index == 0 {
            claim.pre_root
        } else {
            claim.tx_roots[tx_index - 1]
        };
        let honest_root = verify_step(agreed_prev, claim.pre_root, &fraud.correct_step)
            .map_err(|_| SettlementError::BadWitness)?;
        if honest_root == fraud.claimed_root {
            return Err(SettlementError::NoDivergence);
        }
        self.claims[fraud.claim_id as usize].status = ClaimStatus::Reverted;
        Ok(())
    }

    /// Writes the finalized history as line-delimited records.
    pub fn export_history<W: Write>(&self, mut w: W) -> io::Result<()> {
        for record in &self.history {
            writeln!(w, "{}", record.to_line())?;
        }
        Ok(())
    }
}

impl fmt::Debug for SettlementContract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SettlementContract")
            .field("canonical_root", &self.canonical_root)
            .field("finalized", &self.history.len())
            .field("claims", &self.claims.len())
            .field("logical_clock", &self.logical_clock)
            .finish()
    }
}
