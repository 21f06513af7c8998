//! Proof aggregation: chain several batch proofs into one artifact whose
//! verification interface is identical to a single batch — one call
//! covers the whole span `(S_first, S'_last)`.
//!
//! ```sh
//! cargo run --example proof_aggregation
//! ```

use veristate::domain::{GrantTx, Keypair, TransactionEnvelope};
use veristate::lifecycle::apply_batch;
use veristate::prover::{aggregate, prove_replay, ProverError};
use veristate::store::AuthenticatedStore;
use veristate::verify;

fn main() {
    let alice = Keypair::from_seed([1; 32]);
    let bob = Keypair::from_seed([2; 32]);

    let mut store = AuthenticatedStore::new();
    let genesis = apply_batch(
        &mut store,
        &[TransactionEnvelope::genesis_grant(GrantTx {
            to: alice.address(),
            amount: 10_000,
        })],
    )
    .unwrap();

    // Five consecutive batches, each proven independently.
    let mut proofs = vec![prove_replay(&genesis.log)];
    let mut nonce = 0;
    for round in 0..4u64 {
        let run = apply_batch(
            &mut store,
            &[
                alice.signed_transfer(bob.address(), 100 + round as u128, nonce),
                alice.signed_transfer(bob.address(), 1, nonce + 1),
            ],
        )
        .unwrap();
        nonce += 2;
        proofs.push(prove_replay(&run.log));
    }
    println!("proved {} batches", proofs.len());

    // Aggregate: endpoints span genesis to the latest root; C becomes a
    // commitment over the inner batch commitments.
    let aggregated = aggregate(&proofs).unwrap();
    println!(
        "aggregated claim: {} -> {} under {}",
        aggregated.claimed_pre, aggregated.claimed_post, aggregated.claimed_commitment
    );
    verify(
        aggregated.claimed_post,
        aggregated.claimed_pre,
        aggregated.claimed_commitment,
        &aggregated,
    )
    .unwrap();
    println!("one verification covered all {} batches", proofs.len());

    // Chaining is enforced: swapping two proofs breaks S' -> S linkage.
    let mut shuffled = proofs.clone();
    shuffled.swap(1, 2);
    match aggregate(&shuffled) {
        Err(ProverError::ChainMismatch {
            position,
            ..
        }) => println!("swapped proofs rejected at position {position}"),
        other => panic!("expected chain mismatch, got {other:?}"),
    }
}
