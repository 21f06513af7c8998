//! Deterministic state-machine runtime over a Merkle-authenticated
//! key-value store.
//!
//! The crate wires together the pieces of a verifiable application stack
//! at desk scale:
//!
//! - [`store`] — sparse Merkle tree store with inclusion/exclusion proofs
//!   and checkpoint/rollback
//! - [`domain`] — canonical encoding, signed transaction envelopes, token
//!   transfer payloads, events, and batch commitments
//! - [`lifecycle`] — the staged transaction lifecycle: pre-checks,
//!   witnessed state reads, handler execution, witnessed writes, receipts
//! - [`log`] — per-batch execution logs binding every read, write, and
//!   intermediate root under a single digest
//! - [`prover`] — proof backends over finalized logs (replay witnesses,
//!   optimistic claims) and aggregation of chained batch proofs
//! - [`settlement`] — the stateless `verify(S', S, C, proof)` entry point,
//!   the canonical-root registry, and the optimistic claim/fraud-proof
//!   pathway with a logical-tick challenge window
//! - [`sequencer`] — mempool admission, signed preconfirmations, batch
//!   sealing, and the append-only data-availability log
//! - [`node`] — the orchestration layer: pipeline driving
//!   sequencer → engine → prover → settlement, the independent watcher,
//!   and the receipt/event index
//! - [`reference`] — a plain, hash-free ledger interpreter used as a
//!   differential-testing oracle
//!
//! Start with the runnable examples (`cargo run --example token_transfer`)
//! or the `veristate` CLI.

pub mod codec;
pub mod domain;
pub mod hash;
pub mod lifecycle;
pub mod log;
pub mod node;
pub mod prover;
pub mod reference;
pub mod sequencer;
pub mod settlement;
pub mod store;

pub use domain::{Address, Balance, BatchCommitment, TransactionEnvelope, TransferTx};
pub use hash::Digest;
pub use lifecycle::{Receipt, RejectReason, TxStatus};
pub use log::ExecutionLog;
pub use prover::Proof;
pub use settlement::{verify, SettlementContract};
pub use store::{AuthenticatedStore, MerkleProof, StateRoot};
