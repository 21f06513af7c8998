//! The token-transfer lifecycle: genesis grants, a successful transfer
//! with its emitted event, and the three canonical rejection cases
//! (insufficient funds, recipient overflow, stale nonce) leaving the
//! state root untouched.
//!
//! ```sh
//! cargo run --example token_transfer
//! ```

use veristate::domain::{Balance, GrantTx, Keypair, TransactionEnvelope};
use veristate::lifecycle::{apply_batch, apply_transaction, ExecutionContext};
use veristate::store::AuthenticatedStore;
use veristate::{RejectReason, TxStatus};

fn main() {
    let alice = Keypair::from_seed([1; 32]);
    let bob = Keypair::from_seed([2; 32]);
    let whale = Keypair::from_seed([3; 32]);

    // Fund accounts with a genesis batch (only valid from the empty root).
    let mut store = AuthenticatedStore::new();
    let grants = vec![
        TransactionEnvelope::genesis_grant(GrantTx {
            to: alice.address(),
            amount: 100,
        }),
        TransactionEnvelope::genesis_grant(GrantTx {
            to: whale.address(),
            amount: Balance::MAX - 5,
        }),
    ];
    apply_batch(&mut store, &grants).unwrap();
    println!("funded root {}", store.root());

    let ctx = ExecutionContext {
        batch_pre_root: store.root(),
    };

    // Success: alice -> bob, 30 tokens, nonce 0.
    let (receipt, witness) =
        apply_transaction(&mut store, &alice.signed_transfer(bob.address(), 30, 0), &ctx);
    assert_eq!(receipt.status, TxStatus::Success);
    println!(
        "transfer settled: {} -> {} event(s): {:?}",
        receipt.pre_root, receipt.post_root, receipt.events
    );
    println!(
        "witnessed {} reads and {} writes for the prover",
        witness.reads.len(),
        witness.writes.len()
    );

    // Insufficient funds: alice has 70 left.
    let before = store.root();
    let (receipt, _) =
        apply_transaction(&mut store, &alice.signed_transfer(bob.address(), 500, 1), &ctx);
    assert_eq!(
        receipt.status,
        TxStatus::Rejected(RejectReason::InsufficientFunds)
    );
    assert_eq!(store.root(), before);
    println!("overdraft rejected, root unchanged");

    // Recipient overflow: the whale cannot absorb 30 more.
    let (receipt, _) = apply_transaction(
        &mut store,
        &alice.signed_transfer(whale.address(), 30, 1),
        &ctx,
    );
    assert_eq!(receipt.status, TxStatus::Rejected(RejectReason::Overflow));
    assert_eq!(store.root(), before);
    println!("overflow rejected, root unchanged");

    // Stale nonce: nonce 0 was consumed by the successful transfer.
    let (receipt, _) =
        apply_transaction(&mut store, &alice.signed_transfer(bob.address(), 1, 0), &ctx);
    assert_eq!(receipt.status, TxStatus::Rejected(RejectReason::BadNonce));
    println!("replayed nonce rejected");

    // Rejections consume no nonce, so nonce 1 still works.
    let (receipt, _) =
        apply_transaction(&mut store, &alice.signed_transfer(bob.address(), 70, 1), &ctx);
    assert_eq!(receipt.status, TxStatus::Success);
    println!("alice emptied her account; final root {}", store.root());
}
