//! The authenticated store: puts, deletes, inclusion/exclusion proofs,
//! checkpoint/rollback, and the snapshot dump format.
//!
//! ```sh
//! cargo run --example authenticated_kv
//! ```

use veristate::store::{verify_proof, AuthenticatedStore};

fn main() {
    let mut store = AuthenticatedStore::new();
    println!("empty root    {}", store.root());

    store.put(b"alice", b"100");
    store.put(b"bob", b"50");
    let root = store.put(b"carol", b"7");
    println!("3-entry root  {root}");

    // The root is a pure function of the mapping: insertion order and
    // overwritten history do not matter.
    let mut reordered = AuthenticatedStore::new();
    reordered.put(b"carol", b"7");
    reordered.put(b"bob", b"999");
    reordered.put(b"alice", b"100");
    reordered.put(b"bob", b"50");
    assert_eq!(reordered.root(), root);
    println!("reordered writes reach the same root");

    // Inclusion proof: verifiable with nothing but the root.
    let (value, proof) = store.get_with_proof(b"bob");
    assert_eq!(value.as_deref(), Some(b"50".as_ref()));
    assert!(verify_proof(&store.root(), b"bob", Some(b"50"), &proof));
    assert!(!verify_proof(&store.root(), b"bob", Some(b"51"), &proof));
    println!("inclusion proof for bob=50 verifies; bob=51 rejects");

    // Exclusion proof: absence is provable too.
    let (none, absent_proof) = store.get_with_proof(b"mallory");
    assert!(none.is_none());
    assert!(verify_proof(&store.root(), b"mallory", None, &absent_proof));
    println!("exclusion proof for mallory verifies");

    // Checkpoint, speculate, roll back.
    let cp = store.checkpoint();
    store.put(b"alice", b"0");
    store.delete(b"carol");
    println!("speculated root {}", store.root());
    store.rollback(cp).unwrap();
    assert_eq!(store.root(), root);
    println!("rolled back to  {}", store.root());

    // Snapshot dump: records sorted by key digest, root self-check at the
    // end.
    let mut dump = Vec::new();
    store.write_snapshot(&mut dump).unwrap();
    let reloaded = AuthenticatedStore::read_snapshot(&dump[..]).unwrap();
    assert_eq!(reloaded.root(), root);
    println!("snapshot is {} bytes and reloads to the same root", dump.len());
}
