//! The optimistic pathway end to end: a sequencer posts claims that
//! finalize after a logical-tick challenge window, a watcher replays the
//! published data independently, and a corrupted claim is reverted by a
//! transaction-level fraud proof before it can finalize.
//!
//! ```sh
//! cargo run --example optimistic_watcher
//! ```

use veristate::domain::{GrantTx, Keypair, TransactionEnvelope};
use veristate::node::{FaultSpec, Node, NodeConfig, ProofMode, WatchReport, Watcher};
use veristate::settlement::SettlementContract;

fn main() {
    let dir = tempfile_dir();
    let alice = Keypair::from_seed([1; 32]);
    let bob = Keypair::from_seed([2; 32]);

    let key_file = dir.join("sequencer.key");
    veristate::node::write_key_file(&key_file, [9; 32]).unwrap();
    let config = NodeConfig {
        data_dir: dir.join("data"),
        proof_mode: ProofMode::Optimistic,
        challenge_window: 10,
        batch_max_size: 8,
        sequencer_key_file: key_file,
        genesis: vec![veristate::node::GenesisGrant {
            address: alice.address(),
            amount: 1_000,
        }],
    };

    let mut node = Node::open(config).unwrap();
    println!("genesis settled optimistically at {}", node.canonical_root());

    // Corrupt the declared roots of batch 2 before it is claimed.
    node.inject_fault(FaultSpec {
        batch_index: 2,
        tx_index: None,
    });

    let mut nonce = 0;
    for round in 0..3u64 {
        for _ in 0..3 {
            node.submit(alice.signed_transfer(bob.address(), 10, nonce))
                .unwrap();
            nonce += 1;
        }
        let outcome = node.seal_and_settle().unwrap();
        println!(
            "batch {} settled at {}{}",
            outcome.batch_index,
            outcome.post_root,
            if outcome.fault_reverted {
                " (corrupted claim reverted, honest claim resubmitted)"
            } else {
                ""
            }
        );
    }

    println!(
        "claims: {} total, canonical root {}",
        node.settlement().history().len(),
        node.canonical_root()
    );

    // An outside auditor replays the DA log from scratch. The superseded
    // corrupt record shows up as divergent; the live chain checks out.
    let mut watcher = Watcher::new();
    let mut scratch = SettlementContract::new(10);
    for report in watcher.scan(node.da_log(), &mut scratch).unwrap() {
        match report {
            WatchReport::Honest {
                batch_index,
            } => println!("audit: batch {batch_index} honest"),
            WatchReport::DivergentUnclaimed {
                batch_index,
            } => println!("audit: batch {batch_index} record diverges (historical, superseded)"),
            other => println!("audit: {other:?}"),
        }
    }
    assert_eq!(watcher.replayed_root(), node.canonical_root());
    println!("auditor reproduces the canonical root");

    std::fs::remove_dir_all(&dir).ok();
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("veristate-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
