//! Execution logs: the per-batch witness record that makes stateless
//! re-verification possible. Runs a small batch, walks the step entries,
//! checks the chain property, and round-trips the `.vlog` file format.
//!
//! ```sh
//! cargo run --example execution_log
//! ```

use veristate::codec::Encode;
use veristate::domain::{GrantTx, Keypair, TransactionEnvelope};
use veristate::lifecycle::apply_batch;
use veristate::log::{check_log_chain, ExecutionLog};
use veristate::store::AuthenticatedStore;

fn main() {
    let alice = Keypair::from_seed([1; 32]);
    let bob = Keypair::from_seed([2; 32]);

    let mut store = AuthenticatedStore::new();
    apply_batch(
        &mut store,
        &[TransactionEnvelope::genesis_grant(GrantTx {
            to: alice.address(),
            amount: 1_000,
        })],
    )
    .unwrap();

    let run = apply_batch(
        &mut store,
        &[
            alice.signed_transfer(bob.address(), 400, 0),
            bob.signed_transfer(alice.address(), 150, 0),
            alice.signed_transfer(bob.address(), 999_999, 1), // will be rejected
        ],
    )
    .unwrap();
    let log = run.log;

    println!(
        "log over batch C={} covers {} -> {}",
        log.header().commitment,
        log.header().pre_root,
        log.final_root()
    );
    for step in log.steps() {
        println!(
            "  tx {}: {:?}, {} reads, {} writes, root after {}",
            step.tx_index,
            step.status,
            step.reads.len(),
            step.writes.len(),
            step.intermediate_root
        );
    }

    // The chain property is checkable without any store: every read
    // verifies against the previous root, every write against the step's
    // own root, and the final root closes the chain.
    check_log_chain(&log).unwrap();
    println!("chain property holds");

    // Logs are digest-sealed; the .vlog file is the canonical encoding.
    let dir = std::env::temp_dir();
    let path = dir.join("example-batch.vlog");
    log.write_file(&path).unwrap();
    let reloaded = ExecutionLog::read_file(&path).unwrap();
    assert_eq!(reloaded, log);
    println!(
        "wrote {} ({} bytes), digest {}",
        path.display(),
        log.encode().len(),
        log.log_digest()
    );

    // Any post-finalization tampering breaks the digest on decode.
    let mut bytes = log.encode();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    assert!(veristate::codec::Decode::decode_all(&bytes)
        .map(|_: ExecutionLog| ())
        .is_err());
    println!("tampered bytes fail to decode");

    std::fs::remove_file(&path).ok();
}
