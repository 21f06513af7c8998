//! Transaction lifecycle execution.
//!
//! Every transaction runs through the same staged sequence: pre-checks
//! against signatures and nonces, state reads witnessed by inclusion or
//! exclusion proofs against the transaction's pre-root, handler execution
//! with all writes staged in memory, then an atomic commit that applies
//! the staged writes and witnesses each final value against the
//! transaction's post-root. A rejected transaction leaves the store
//! untouched and its receipt carries equal pre and post roots.
//!
//! Handlers are written once against the [`StateAccess`] trait. The engine
//! runs them over a store-backed [`StateView`] that records witnesses; the
//! stateless verifier re-runs the identical handler over a view backed
//! only by the recorded reads (see [`replay_step`]).

use std::collections::HashMap;

use thiserror::Error;

use crate::codec::{decode_seq, encode_seq, CodecError, Decode, Encode};
use crate::domain::{
    batch_commitment, envelope_digest, verify_envelope_signature, Balance, BatchCommitment, Event,
    GrantTx, TransactionEnvelope, TransferTx, TxKind,
};
use crate::hash::{sha256_concat, Digest};
use crate::log::{ExecutionLog, LogBuilder, LogError, StepEntry};
use crate::store::{verify_proof, AuthenticatedStore, MerkleProof, StateRoot};

/// Why a transaction was rejected. Rejected transactions consume no nonce
/// and leave the state root unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    /// Payload failed to decode for its declared kind, or a stored value
    /// was malformed.
    BadFormat,
    BadSignature,
    /// Envelope nonce does not equal the sender's stored nonce.
    BadNonce,
    /// `tx.from` differs from the address derived from the signing key.
    SenderMismatch,
    InsufficientFunds,
    Overflow,
    /// Genesis grants are only valid while the batch pre-root is the
    /// empty-tree root.
    GenesisClosed,
}

impl RejectReason {
    pub fn code(&self) -> u8 {
        match self {
            RejectReason::BadFormat => 0,
            RejectReason::BadSignature => 1,
            RejectReason::BadNonce => 2,
            RejectReason::SenderMismatch => 3,
            RejectReason::InsufficientFunds => 4,
            RejectReason::Overflow => 5,
            RejectReason::GenesisClosed => 6,
        }
    }

    pub fn from_code(code: u8) -> Option<RejectReason> {
        Some(match code {
            0 => RejectReason::BadFormat,
            1 => RejectReason::BadSignature,
            2 => RejectReason::BadNonce,
            3 => RejectReason::SenderMismatch,
            4 => RejectReason::InsufficientFunds,
            5 => RejectReason::Overflow,
            6 => RejectReason::GenesisClosed,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            RejectReason::BadFormat => "bad-format",
            RejectReason::BadSignature => "bad-signature",
            RejectReason::BadNonce => "bad-nonce",
            RejectReason::SenderMismatch => "sender-mismatch",
            RejectReason::InsufficientFunds => "insufficient-funds",
            RejectReason::Overflow => "overflow",
            RejectReason::GenesisClosed => "genesis-closed",
        }
    }

    pub fn from_name(name: &str) -> Option<RejectReason> {
        (0..=6).map(|c| Self::from_code(c).unwrap()).find(|r| r.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TxStatus {
    Success,
    Rejected(RejectReason),
}

impl Encode for TxStatus {
    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            TxStatus::Success => out.push(0),
            TxStatus::Rejected(reason) => {
                out.push(1);
                out.push(reason.code());
            }
        }
    }
}

impl Decode for TxStatus {
    fn decode_from(input: &mut &[u8]) -> Result<Self, CodecError> {
        match u8::decode_from(input)? {
            0 => Ok(TxStatus::Success),
            1 => {
                let code = u8::decode_from(input)?;
                RejectReason::from_code(code)
                    .map(TxStatus::Rejected)
                    .ok_or(CodecError::InvalidValue("RejectReason"))
            }
            tag => Err(CodecError::InvalidTag {
                tag,
                type_name: "TxStatus",
            }),
        }
    }
}

/// A state read witnessed against the transaction's pre-root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessedRead {
    pub key: Vec<u8>,
    pub value: Option<Vec<u8>>,
    pub proof: MerkleProof,
    pub pre_root: StateRoot,
}

/// A state write witnessed against the transaction's post-root.
/// `new_value` of `None` records a deletion (exclusion proof).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessedWrite {
    pub key: Vec<u8>,
    pub new_value: Option<Vec<u8>>,
    pub post_root: StateRoot,
    pub proof_of_new: MerkleProof,
}

impl Encode for MerkleProof {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.key_digest.encode_into(out);
        match &self.leaf_value_digest {
            Some(vd) => {
                out.push(1);
                vd.encode_into(out);
            }
            None => out.push(0),
        }
        encode_seq(&self.siblings, out);
    }
}

impl Decode for MerkleProof {
    fn decode_from(input: &mut &[u8]) -> Result<Self, CodecError> {
        let key_digest = Digest::decode_from(input)?;
        let leaf_value_digest = Option::<Digest>::decode_from(input)?;
        let siblings = decode_seq(input)?;
        Ok(MerkleProof {
            key_digest,
            leaf_present: leaf_value_digest.is_some(),
            leaf_value_digest,
            siblings,
        })
    }
}

impl Encode for WitnessedRead {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.key.encode_into(out);
        self.value.encode_into(out);
        self.proof.encode_into(out);
        self.pre_root.0.encode_into(out);
    }
}

impl Decode for WitnessedRead {
    fn decode_from(input: &mut &[u8]) -> Result<Self, CodecError> {
        Ok(WitnessedRead {
            key: Vec::<u8>::decode_from(input)?,
            value: Option::<Vec<u8>>::decode_from(input)?,
            proof: MerkleProof::decode_from(input)?,
            pre_root: StateRoot(Digest::decode_from(input)?),
        })
    }
}

impl Encode for WitnessedWrite {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.key.encode_into(out);
        self.new_value.encode_into(out);
        self.post_root.0.encode_into(out);
        self.proof_of_new.encode_into(out);
    }
}

impl Decode for WitnessedWrite {
    fn decode_from(input: &mut &[u8]) -> Result<Self, CodecError> {
        Ok(WitnessedWrite {
            key: Vec::<u8>::decode_from(input)?,
            new_value: Option::<Vec<u8>>::decode_from(input)?,
            post_root: StateRoot(Digest::decode_from(input)?),
            proof_of_new: MerkleProof::decode_from(input)?,
        })
    }
}

/// Outcome record for one executed transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub envelope_digest: Digest,
    pub status: TxStatus,
    pub events: Vec<Event>,
    pub pre_root: StateRoot,
    pub post_root: StateRoot,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("empty batch")]
    EmptyBatch,

    #[error("execution log construction failed: {0}")]
    Log(#[from] LogError),
}

/// State keys are namespaced hashes so balances and system data share one
/// authenticated store.
pub fn balance_key(address: &crate::domain::Address) -> Vec<u8> {
    sha256_concat(&[b"vrc20/balance", &address.0]).as_bytes().to_vec()
}

pub fn nonce_key(address: &crate::domain::Address) -> Vec<u8> {
    sha256_concat(&[b"sys/nonce", &address.0]).as_bytes().to_vec()
}

fn decode_balance(value: Option<&[u8]>) -> Result<Balance, RejectReason> {
    match value {
        None => Ok(0),
        Some(bytes) => {
            let arr: [u8; 16] = bytes.try_into().map_err(|_| RejectReason::BadFormat)?;
            Ok(Balance::from_le_bytes(arr))
        }
    }
}

fn decode_nonce(value: Option<&[u8]>) -> Result<u64, RejectReason> {
    match value {
        None => Ok(0),
        Some(bytes) => {
            let arr: [u8; 8] = bytes.try_into().map_err(|_| RejectReason::BadFormat)?;
            Ok(u64::from_le_bytes(arr))
        }
    }
}

/// Handler-facing state surface. Reads serve uncommitted writes from the
/// same transaction; writes are staged until commit.
pub trait StateAccess {
    /// Reads a key. Fails only on the verifier path when the witness set
    /// is missing the key.
    fn get(&mut self, key: &[u8]) -> Result<Option<Vec<u8>>, WitnessGap>;
    fn set(&mut self, key: &[u8], value: Vec<u8>);
    fn emit(&mut self, event: Event);
}

/// A read could not be served from the recorded witnesses.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no witnessed read for accessed key")]
pub struct WitnessGap;

/// Ordered staged writes: program order of first write per key, final
/// value per key.
#[derive(Default)]
struct StagedWrites {
    order: Vec<Vec<u8>>,
    values: HashMap<Vec<u8>, Option<Vec<u8>>>,
}

impl StagedWrites {
    fn get(&self, key: &[u8]) -> Option<&Option<Vec<u8>>> {
        self.values.get(key)
    }

    fn set(&mut self, key: &[u8], value: Option<Vec<u8>>) {
        if !self.values.contains_key(key) {
            self.order.push(key.to_vec());
        }
        self.values.insert(key.to_vec(), value);
    }

    fn into_ordered(mut self) -> Vec<(Vec<u8>, Option<Vec<u8>>)> {
        self.order
            .drain(..)
            .map(|key| {
                let value = self.values.remove(&key).unwrap();
                (key, value)
            })
            .collect()
    }
}

/// Store-backed view that witnesses the first read of each key against
/// the transaction pre-root and stages writes until commit.
pub struct StateView<'a> {
    store: &'a mut AuthenticatedStore,
    pre_root: StateRoot,
    reads: Vec<WitnessedRead>,
    read_cache: HashMap<Vec<u8>, Option<Vec<u8>>>,
    staged: StagedWrites,
    events: Vec<Event>,
}

impl<'a> StateView<'a> {
    pub fn new(store: &'a mut AuthenticatedStore) -> Self {
        let pre_root = store.root();
        StateView {
            store,
            pre_root,
            reads: Vec::new(),
            read_cache: HashMap::new(),
            staged: StagedWrites::default(),
            events: Vec::new(),
        }
    }

    pub fn recorded_reads(&self) -> &[WitnessedRead] {
        &self.reads
    }
}

impl StateAccess for StateView<'_> {
    fn get(&mut self, key: &[u8]) -> Result<Option<Vec<u8>>, WitnessGap> {
        if let Some(staged) = self.staged.get(key) {
            return Ok(staged.clone());
        }
        if let Some(cached) = self.read_cache.get(key) {
            return Ok(cached.clone());
        }
        let (value, proof) = self.store.get_with_proof(key);
        debug_assert_eq!(self.store.root(), self.pre_root);
        self.reads.push(WitnessedRead {
            key: key.to_vec(),
            value: value.clone(),
            proof,
            pre_root: self.pre_root,
        });
        self.read_cache.insert(key.to_vec(), value.clone());
        Ok(value)
    }

    fn set(&mut self, key: &[u8], value: Vec<u8>) {
        self.staged.set(key, Some(value));
    }

    fn emit(&mut self, event: Event) {
        self.events.push(event);
    }
}

/// Verifier-side view backed only by witnessed reads.
pub struct WitnessView {
    reads: HashMap<Vec<u8>, Option<Vec<u8>>>,
    staged: StagedWrites,
    events: Vec<Event>,
}

impl WitnessView {
    pub fn new(reads: &[WitnessedRead]) -> Self {
        let map = reads
            .iter()
            .map(|r| (r.key.clone(), r.value.clone()))
            .collect();
        WitnessView {
            reads: map,
            staged: StagedWrites::default(),
            events: Vec::new(),
        }
    }
}

impl StateAccess for WitnessView {
    fn get(&mut self, key: &[u8]) -> Result<Option<Vec<u8>>, WitnessGap> {
        if let Some(staged) = self.staged.get(key) {
            return Ok(staged.clone());
        }
        self.reads.get(key).cloned().ok_or(WitnessGap)
    }

    fn set(&mut self, key: &[u8], value: Vec<u8>) {
        self.staged.set(key, Some(value));
    }

    fn emit(&mut self, event: Event) {
        self.events.push(event);
    }
}

/// Per-batch execution context.
#[derive(Debug, Clone, Copy)]
pub struct ExecutionContext {
    /// Root at the start of the batch; genesis grants are valid only when
    /// this is the empty-tree root.
    pub batch_pre_root: StateRoot,
}

enum Outcome {
    Transfer(TransferTx),
    Grant(GrantTx),
}

/// Runs the pre-checks: payload decodes for the kind, signature verifies,
/// nonce matches the stored nonce (0 when absent), and the payload sender
/// equals the signer address. Nonce reads go through `state` so they are
/// witnessed.
fn preprocess(
    env: &TransactionEnvelope,
    ctx: &ExecutionContext,
    state: &mut impl StateAccess,
) -> Result<Outcome, StepFailure> {
    match env.tx_kind {
        TxKind::GenesisGrant => {
            let grant =
                GrantTx::decode_all(&env.payload).map_err(|_| RejectReason::BadFormat)?;
            if ctx.batch_pre_root != AuthenticatedStore::empty_root() {
                return Err(RejectReason::GenesisClosed.into());
            }
            Ok(Outcome::Grant(grant))
        }
        TxKind::Transfer => {
            let tx =
                TransferTx::decode_all(&env.payload).map_err(|_| RejectReason::BadFormat)?;
            if !verify_envelope_signature(env) {
                return Err(RejectReason::BadSignature.into());
            }
            let sender = env.sender_address();
            let stored_nonce = decode_nonce(state.get(&nonce_key(&sender))?.as_deref())?;
            if env.nonce != stored_nonce {
                return Err(RejectReason::BadNonce.into());
            }
            if tx.from != sender {
                return Err(RejectReason::SenderMismatch.into());
            }
            Ok(Outcome::Transfer(tx))
        }
    }
}

enum StepFailure {
    Rejected(RejectReason),
    MissingWitness,
}

impl From<RejectReason> for StepFailure {
    fn from(reason: RejectReason) -> Self {
        StepFailure::Rejected(reason)
    }
}

impl From<WitnessGap> for StepFailure {
    fn from(_: WitnessGap) -> Self {
        StepFailure::MissingWitness
    }
}

/// Token transfer handler.
///
/// The recipient balance is read after the sender debit is staged, so a
/// self-transfer observes the debited balance and nets to no change.
fn handle_transfer(tx: &TransferTx, state: &mut impl StateAccess) -> Result<(), StepFailure> {
    let from_key = balance_key(&tx.from);
    let from_balance = decode_balance(state.get(&from_key)?.as_deref())?;
    if tx.amount > from_balance {
        return Err(RejectReason::InsufficientFunds.into());
    }
    state.set(&from_key, (from_balance - tx.amount).to_le_bytes().to_vec());

    let to_key = balance_key(&tx.to);
    let to_balance = decode_balance(state.get(&to_key)?.as_deref())?;
    let Some(credited) = to_balance.checked_add(tx.amount) else {
        return Err(RejectReason::Overflow.into());
    };
    state.set(&to_key, credited.to_le_bytes().to_vec());

    state.emit(Event::Transfer(crate::domain::TransferEvent {
        from: tx.from,
        to: tx.to,
        amount: tx.amount,
    }));
    Ok(())
}

fn handle_grant(tx: &GrantTx, state: &mut impl StateAccess) -> Result<(), StepFailure> {
    let to_key = balance_key(&tx.to);
    let balance = decode_balance(state.get(&to_key)?.as_deref())?;
    let Some(credited) = balance.checked_add(tx.amount) else {
        return Err(RejectReason::Overflow.into());
    };
    state.set(&to_key, credited.to_le_bytes().to_vec());
    state.emit(Event::Grant(crate::domain::GrantEvent {
        to: tx.to,
        amount: tx.amount,
    }));
    Ok(())
}

/// Runs preprocessing, the handler, and the nonce increment against any
/// state surface. Shared by the executing engine and the stateless
/// verifier so both derive the same outcome from the same reads.
fn run_transaction(
    env: &TransactionEnvelope,
    ctx: &ExecutionContext,
    state: &mut impl StateAccess,
) -> Result<(), StepFailure> {
    let outcome = preprocess(env, ctx, state)?;
    match outcome {
        Outcome::Transfer(tx) => {
            handle_transfer(&tx, state)?;
            // Nonce advances only on success; a rejected transaction must
            // leave no trace in state.
            let sender = env.sender_address();
            let stored = decode_nonce(state.get(&nonce_key(&sender))?.as_deref())?;
            state.set(&nonce_key(&sender), (stored + 1).to_le_bytes().to_vec());
            Ok(())
        }
        Outcome::Grant(tx) => handle_grant(&tx, state),
    }
}

/// Witness fragment produced by one transaction.
#[derive(Debug, Clone)]
pub struct StepWitness {
    pub reads: Vec<WitnessedRead>,
    pub writes: Vec<WitnessedWrite>,
}

/// Executes one envelope against the store.
///
/// On success the staged writes and the nonce increment are applied
/// atomically and each distinct written key is witnessed against the new
/// root. On any rejection the store is rolled back to the entry
/// checkpoint and the receipt carries equal pre and post roots.
pub fn apply_transaction(
    store: &mut AuthenticatedStore,
    env: &TransactionEnvelope,
    ctx: &ExecutionContext,
) -> (Receipt, StepWitness) {
    let pre_root = store.root();
    let cp = store.checkpoint();

    let mut view = StateView::new(store);
    let result = run_transaction(env, ctx, &mut view);
    let StateView {
        reads,
        staged,
        events,
        ..
    } = view;

    match result {
        Ok(()) => {
            let ordered = staged.into_ordered();
            for (key, value) in &ordered {
                match value {
                    Some(v) => store.put(key, v),
                    None => store.delete(key),
                };
            }
            let post_root = store.root();
            store.release(cp).expect("entry checkpoint is live");
            let writes = ordered
                .into_iter()
                .map(|(key, value)| {
                    let (_, proof) = store.get_with_proof(&key);
                    WitnessedWrite {
                        key,
                        new_value: value,
                        post_root,
                        proof_of_new: proof,
                    }
                })
                .collect();
            (
                Receipt {
                    envelope_digest: envelope_digest(env),
                    status: TxStatus::Success,
                    events,
                    pre_root,
                    post_root,
                },
                StepWitness {
                    reads,
                    writes,
                },
            )
        }
        Err(failure) => {
            store.rollback(cp).expect("entry checkpoint is live");
            debug_assert_eq!(store.root(), pre_root);
            let reason = match failure {
                StepFailure::Rejected(reason) => reason,
                // A store-backed view always answers reads.
                StepFailure::MissingWitness => unreachable!("store-backed reads are total"),
            };
            (
                Receipt {
                    envelope_digest: envelope_digest(env),
                    status: TxStatus::Rejected(reason),
                    events: Vec::new(),
                    pre_root,
                    post_root: pre_root,
                },
                StepWitness {
                    reads,
                    writes: Vec::new(),
                },
            )
        }
    }
}

/// Result of executing a whole batch.
#[derive(Debug)]
pub struct BatchExecution {
    pub pre_root: StateRoot,
    pub post_root: StateRoot,
    pub commitment: BatchCommitment,
    pub log: ExecutionLog,
    pub receipts: Vec<Receipt>,
}

/// Applies an ordered batch of envelopes, producing the state roots, the
/// batch commitment, receipts, and the execution log. Rejected
/// transactions stay in the commitment and receipts but contribute no
/// state change.
pub fn apply_batch(
    store: &mut AuthenticatedStore,
    envelopes: &[TransactionEnvelope],
) -> Result<BatchExecution, EngineError> {
    if envelopes.is_empty() {
        return Err(EngineError::EmptyBatch);
    }
    let pre_root = store.root();
    let digests: Vec<Digest> = envelopes.iter().map(envelope_digest).collect();
    let commitment = batch_commitment(&digests).expect("non-empty batch");
    let ctx = ExecutionContext {
        batch_pre_root: pre_root,
    };

    let mut builder = LogBuilder::new(commitment, pre_root);
    let mut receipts = Vec::with_capacity(envelopes.len());
    for (tx_index, env) in envelopes.iter().enumerate() {
        let (receipt, witness) = apply_transaction(store, env, &ctx);
        builder.append(StepEntry {
            tx_index: tx_index as u32,
            envelope: env.clone(),
            status: receipt.status,
            reads: witness.reads,
            writes: witness.writes,
            intermediate_root: receipt.post_root,
        })?;
        receipts.push(receipt);
    }
    let post_root = store.root();
    let log = builder.finalize(post_root)?;
    Ok(BatchExecution {
        pre_root,
        post_root,
        commitment,
        log,
        receipts,
    })
}

/// Outcome of re-executing one step from its witnessed reads alone.
pub struct ReplayedStep {
    pub status: TxStatus,
    /// Staged writes in program order: (key, final value).
    pub writes: Vec<(Vec<u8>, Option<Vec<u8>>)>,
    pub events: Vec<Event>,
}

/// Deterministically re-executes a transaction using only its witnessed
/// reads. Returns `None` when the handler accessed a key absent from the
/// witness set, which a verifier treats as an invalid witness package.
pub fn replay_step(
    env: &TransactionEnvelope,
    batch_pre_root: StateRoot,
    reads: &[WitnessedRead],
) -> Option<ReplayedStep> {
    let ctx = ExecutionContext {
        batch_pre_root,
    };
    let mut view = WitnessView::new(reads);
    let result = run_transaction(env, &ctx, &mut view);
    let WitnessView {
        staged,
        events,
        ..
    } = view;
    match result {
        Ok(()) => Some(ReplayedStep {
            status: TxStatus::Success,
            writes: staged.into_ordered(),
            events,
        }),
        Err(StepFailure::Rejected(reason)) => Some(ReplayedStep {
            status: TxStatus::Rejected(reason),
            writes: Vec::new(),
            events: Vec::new(),
        }),
        Err(StepFailure::MissingWitness) => None,
    }
}

/// Checks every read witness in a step against `anchor` (the root before
/// the transaction).
pub fn reads_verify_against(reads: &[WitnessedRead], anchor: StateRoot) -> bool {
    reads.iter().all(|r| {
        r.pre_root == anchor && verify_proof(&anchor, &r.key, r.value.as_deref(), &r.proof)
    })
}

/// Checks every write witness in a step against `anchor` (the root after
/// the transaction).
pub fn writes_verify_against(writes: &[WitnessedWrite], anchor: StateRoot) -> bool {
    writes.iter().all(|w| {
        w.post_root == anchor
            && verify_proof(&anchor, &w.key, w.new_value.as_deref(), &w.proof_of_new)
    })
}
