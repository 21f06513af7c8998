//! Shared fixtures for the integration suites: deterministic randomized
//! workload generation with oracle-predicted outcomes, and node setup
//! over a temporary data directory.

#![allow(dead_code)]

use std::path::Path;

use rand::Rng;

use veristate::domain::{Balance, Keypair, TransactionEnvelope};
use veristate::lifecycle::TxStatus;
use veristate::node::{BatchOutcome, GenesisGrant, Node, NodeConfig, ProofMode};
use veristate::reference::ReferenceLedger;

/// A generated workload together with the oracle's view of it.
pub struct Workload {
    pub actors: Vec<Keypair>,
    pub grants: Vec<GenesisGrant>,
    pub envelopes: Vec<TransactionEnvelope>,
    /// Expected execution status per envelope, as predicted by the
    /// reference interpreter.
    pub expected: Vec<TxStatus>,
    /// Reference ledger state after the whole workload.
    pub reference: ReferenceLedger,
}

impl Workload {
    /// Total granted supply as a (high, low) 256-bit pair; the whale
    /// account sits near `u128::MAX`, so a plain sum would overflow.
    pub fn total_supply(&self) -> (u128, u128) {
        wide_sum(self.grants.iter().map(|g| g.amount))
    }
}

/// Sums balances without overflow: (high, low) limbs.
pub fn wide_sum(amounts: impl Iterator<Item = Balance>) -> (u128, u128) {
    let mut high = 0u128;
    let mut low = 0u128;
    for amount in amounts {
        let (sum, carry) = low.overflowing_add(amount);
        low = sum;
        high += carry as u128;
    }
    (high, low)
}

/// Builds a workload of `n_transfers` envelopes over `n_actors` accounts,
/// mixing valid transfers with execution-level rejections (insufficient
/// funds, stale nonces, recipient overflow). All envelopes pass stateless
/// admission checks.
pub fn random_workload<R: Rng>(rng: &mut R, n_actors: usize, n_transfers: usize) -> Workload {
    assert!(n_actors >= 2);
    let actors: Vec<Keypair> = (0..n_actors)
        .map(|_| Keypair::from_seed(rng.random()))
        .collect();

    let mut reference = ReferenceLedger::new();
    let mut grants = Vec::new();
    // Ordinary accounts get small balances; the last actor is a whale
    // whose balance sits near the ceiling so overflow rejections are
    // reachable with small amounts.
    for (i, actor) in actors.iter().enumerate() {
        let amount = if i + 1 == n_actors {
            Balance::MAX - 10
        } else {
            rng.random_range(100..2_000)
        };
        grants.push(GenesisGrant {
            address: actor.address(),
            amount,
        });
        reference.grant(actor.address(), amount);
    }

    let mut envelopes = Vec::with_capacity(n_transfers);
    let mut expected = Vec::with_capacity(n_transfers);
    for _ in 0..n_transfers {
        let sender = &actors[rng.random_range(0..n_actors - 1)];
        let recipient = &actors[rng.random_range(0..n_actors)];
        let balance = reference.balance(&sender.address());
        let nonce = reference.nonce(&sender.address());

        let env = match rng.random_range(0..10u8) {
            // Valid transfer (possibly to self, possibly zero amount).
            0..=6 => {
                let amount = rng.random_range(0..=balance.min(1_000_000));
                sender.signed_transfer(recipient.address(), amount, nonce)
            }
            // Insufficient funds.
            7 => {
                let amount = balance + rng.random_range(1..1_000);
                sender.signed_transfer(recipient.address(), amount, nonce)
            }
            // Stale or future nonce.
            8 => {
                let bad_nonce = nonce + rng.random_range(1..5);
                sender.signed_transfer(recipient.address(), 1, bad_nonce)
            }
            // Recipient overflow: a small amount to the whale.
            _ => {
                let whale = actors.last().unwrap().address();
                let amount = rng.random_range(11..100).min(balance);
                sender.signed_transfer(whale, amount, nonce)
            }
        };
        expected.push(reference.apply_envelope(&env, false));
        envelopes.push(env);
    }

    Workload {
        actors,
        grants,
        envelopes,
        expected,
        reference,
    }
}

/// Writes a sequencer key and returns a config rooted at `dir`.
pub fn node_config(
    dir: &Path,
    proof_mode: ProofMode,
    grants: Vec<GenesisGrant>,
) -> NodeConfig {
    let key_file = dir.join("sequencer.key");
    veristate::node::write_key_file(&key_file, [42u8; 32]).unwrap();
    NodeConfig {
        data_dir: dir.join("data"),
        proof_mode,
        challenge_window: 10,
        batch_max_size: 32,
        sequencer_key_file: key_file,
        genesis: grants,
    }
}

/// Builds a workload of only-valid transfers; sender nonces strictly
/// increase, so no (sender, nonce) slot is ever contested at admission.
pub fn valid_workload<R: Rng>(rng: &mut R, n_actors: usize, n_transfers: usize) -> Workload {
    assert!(n_actors >= 2);
    let actors: Vec<Keypair> = (0..n_actors)
        .map(|_| Keypair::from_seed(rng.random()))
        .collect();
    let mut reference = ReferenceLedger::new();
    let mut grants = Vec::new();
    for actor in &actors {
        let amount = rng.random_range(1_000..10_000);
        grants.push(GenesisGrant {
            address: actor.address(),
            amount,
        });
        reference.grant(actor.address(), amount);
    }
    let mut envelopes = Vec::with_capacity(n_transfers);
    let mut expected = Vec::with_capacity(n_transfers);
    for _ in 0..n_transfers {
        let sender = &actors[rng.random_range(0..n_actors)];
        let recipient = &actors[rng.random_range(0..n_actors)];
        let balance = reference.balance(&sender.address());
        let nonce = reference.nonce(&sender.address());
        let env = sender.signed_transfer(recipient.address(), rng.random_range(0..=balance), nonce);
        expected.push(reference.apply_envelope(&env, false));
        envelopes.push(env);
    }
    assert!(expected.iter().all(|s| *s == TxStatus::Success));
    Workload {
        actors,
        grants,
        envelopes,
        expected,
        reference,
    }
}

/// Opens a node over a fresh data directory and drives the whole workload
/// through it, returning every settled batch outcome (genesis included).
pub fn run_workload(dir: &Path, proof_mode: ProofMode, workload: &Workload) -> (Node, Vec<BatchOutcome>) {
    let config = node_config(dir, proof_mode, workload.grants.clone());
    let mut node = Node::open(config).unwrap();
    let outcomes = drive(&mut node, &workload.envelopes);
    (node, outcomes)
}

/// Submits envelopes in order, sealing as needed, and settles everything.
/// A nonce slot blocked by a pending rejected-to-be envelope is flushed by
/// sealing a batch, as a client resubmitting after a rejection would
/// experience.
pub fn drive(node: &mut Node, envelopes: &[TransactionEnvelope]) -> Vec<BatchOutcome> {
    use veristate::node::NodeError;
    use veristate::sequencer::SequencerError;
    let mut outcomes = Vec::new();
    for env in envelopes {
        loop {
            match node.submit(env.clone()) {
                Ok(_) => break,
                // The contested slot clears once the pending envelope is
                // sealed; large mempools may need more than one batch.
                Err(NodeError::Sequencer(SequencerError::DuplicateNonce)) => {
                    outcomes.push(node.seal_and_settle().unwrap());
                }
                Err(other) => panic!("unexpected admission failure: {other}"),
            }
        }
    }
    outcomes.extend(node.run().unwrap());
    outcomes
}
