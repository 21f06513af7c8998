//! Everything wired together: a node in validity (replay-proof) mode
//! sequencing user transfers into batches, proving and settling each one,
//! indexing the emitted events, and answering queries — with the final
//! root cross-checked against the plain reference interpreter.
//!
//! ```sh
//! cargo run --example full_pipeline
//! ```

use veristate::domain::{EventKind, Keypair};
use veristate::node::{EventFilter, GenesisGrant, Node, NodeConfig, ProofMode};
use veristate::reference::ReferenceLedger;

fn main() {
    let dir = std::env::temp_dir().join(format!("veristate-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();

    let users: Vec<Keypair> = (1..=4).map(|i| Keypair::from_seed([i; 32])).collect();
    let key_file = dir.join("sequencer.key");
    veristate::node::write_key_file(&key_file, [77; 32]).unwrap();

    let config = NodeConfig {
        data_dir: dir.join("data"),
        proof_mode: ProofMode::Replay,
        challenge_window: 10,
        batch_max_size: 5,
        sequencer_key_file: key_file,
        genesis: users
            .iter()
            .map(|u| GenesisGrant {
                address: u.address(),
                amount: 1_000,
            })
            .collect(),
    };

    // Mirror every step on the hash-free reference interpreter.
    let mut oracle = ReferenceLedger::new();
    for user in &users {
        oracle.grant(user.address(), 1_000);
    }

    let mut node = Node::open(config).unwrap();
    println!("genesis root {}", node.canonical_root());

    // A dozen transfers round-robin between the users.
    let mut nonces = [0u64; 4];
    for i in 0..12usize {
        let from = i % users.len();
        let to = (i + 1) % users.len();
        let amount = (i as u128 + 1) * 7;
        let env = users[from].signed_transfer(users[to].address(), amount, nonces[from]);
        nonces[from] += 1;
        oracle.apply_envelope(&env, false);
        let pc = node.submit(env).unwrap();
        println!("submitted seq {} ({})", pc.sequence, pc.envelope_digest);
    }

    for outcome in node.run().unwrap() {
        println!(
            "batch {}: {} tx -> {}",
            outcome.batch_index,
            outcome.receipts.len(),
            outcome.post_root
        );
    }

    assert_eq!(node.canonical_root(), oracle.rebuild_store().root());
    println!("canonical root matches the reference interpreter");

    // Query the index: everything user 1 participated in.
    let filter = EventFilter {
        address: Some(users[1].address()),
        kind: Some(EventKind::Transfer),
        ..Default::default()
    };
    println!("transfers touching {}:", users[1].address());
    for ev in node.query(&filter) {
        println!("  batch {} tx {}: {:?}", ev.batch_index, ev.tx_index, ev.event);
    }

    // The state snapshot is reproducible from the node at any point.
    let mut snapshot = Vec::new();
    node.dump_state(&mut snapshot).unwrap();
    println!("state snapshot: {} bytes", snapshot.len());

    std::fs::remove_dir_all(&dir).ok();
}
