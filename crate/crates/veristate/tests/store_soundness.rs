//! Store-level soundness and determinism properties: no mutated proof may
//! verify, any insertion order yields the same root, and deletion flips
//! inclusion into exclusion under the new root.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use veristate::store::{verify_proof, AuthenticatedStore};

#[test]
fn no_single_bit_mutation_verifies() {
    const KEYS: usize = 1_000;
    const TRIALS: usize = 10_000;

    let mut rng = ChaCha20Rng::seed_from_u64(0x5017);
    let mut store = AuthenticatedStore::new();
    let mut keys: Vec<Vec<u8>> = Vec::with_capacity(KEYS);
    for i in 0..KEYS {
        let key = format!("key-{i}").into_bytes();
        let value: Vec<u8> = (0..rng.random_range(1..40usize)).map(|_| rng.random()).collect();
        store.put(&key, &value);
        keys.push(key);
    }
    let root = store.root();

    let mut rejected = 0usize;
    for _ in 0..TRIALS {
        let key = &keys[rng.random_range(0..KEYS)];
        let (value, mut proof) = store.get_with_proof(key);
        let mut value = value.expect("inserted key present");
        let mut key = key.clone();

        // Flip exactly one bit in the siblings, the value, or the key.
        match rng.random_range(0..3u8) {
            0 => {
                let sibling = rng.random_range(0..proof.siblings.len());
                proof.siblings[sibling].0[rng.random_range(0..32)] ^=
                    1 << rng.random_range(0..8);
            }
            1 => {
                let at = rng.random_range(0..value.len());
                value[at] ^= 1 << rng.random_range(0..8);
            }
            _ => {
                let at = rng.random_range(0..key.len());
                key[at] ^= 1 << rng.random_range(0..8);
            }
        }

        if !verify_proof(&root, &key, Some(&value), &proof) {
            rejected += 1;
        }
    }
    assert_eq!(rejected, TRIALS, "every mutated proof must be rejected");
}

#[test]
fn mutated_exclusion_proofs_are_rejected_too() {
    let mut rng = ChaCha20Rng::seed_from_u64(0x5018);
    let mut store = AuthenticatedStore::new();
    for i in 0..100 {
        store.put(format!("key-{i}").as_bytes(), b"value");
    }
    let root = store.root();
    for trial in 0..1_000 {
        let absent = format!("absent-{trial}");
        let (none, mut proof) = store.get_with_proof(absent.as_bytes());
        assert!(none.is_none());
        assert!(verify_proof(&root, absent.as_bytes(), None, &proof));
        let sibling = rng.random_range(0..proof.siblings.len());
        proof.siblings[sibling].0[rng.random_range(0..32)] ^= 1 << rng.random_range(0..8);
        assert!(!verify_proof(&root, absent.as_bytes(), None, &proof));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Any permutation of any set of writes produces the same root.
    #[test]
    fn root_is_insertion_order_independent(
        pairs in proptest::collection::btree_map(
            proptest::collection::vec(any::<u8>(), 1..24),
            proptest::collection::vec(any::<u8>(), 1..24),
            1..40,
        ),
        seed in any::<u64>(),
    ) {
        let baseline = {
            let mut store = AuthenticatedStore::new();
            for (k, v) in &pairs {
                store.put(k, v);
            }
            store.root()
        };

        let mut shuffled: Vec<_> = pairs.iter().collect();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let mut store = AuthenticatedStore::new();
        for (k, v) in shuffled {
            store.put(k, v);
        }
        prop_assert_eq!(store.root(), baseline);
    }

    /// Deleting a key turns its inclusion proof into a verifying
    /// exclusion proof against the new root.
    #[test]
    fn delete_flips_inclusion_to_exclusion(
        pairs in proptest::collection::btree_map(
            proptest::collection::vec(any::<u8>(), 1..16),
            proptest::collection::vec(any::<u8>(), 1..16),
            2..20,
        ),
    ) {
        let mut store = AuthenticatedStore::new();
        for (k, v) in &pairs {
            store.put(k, v);
        }
        let victim = pairs.keys().next().unwrap().clone();
        let (value, proof) = store.get_with_proof(&victim);
        prop_assert!(verify_proof(&store.root(), &victim, value.as_deref(), &proof));

        store.delete(&victim);
        let (gone, exclusion) = store.get_with_proof(&victim);
        prop_assert!(gone.is_none());
        prop_assert!(verify_proof(&store.root(), &victim, None, &exclusion));
        // The old inclusion proof no longer verifies anywhere.
        prop_assert!(!verify_proof(&store.root(), &victim, value.as_deref(), &proof));
    }
}
