//! SHA-256 digests and the domain-separated hashing rules shared by the
//! authenticated store, batch commitments, and proof verification.
//!
//! Hash domains:
//! - leaf node:     `H(0x00 || key_digest || value_digest)`
//! - internal node: `H(0x01 || left || right)`
//! - empty leaf:    the all-zero digest (not hashed)
//!
//! The distinct prefixes prevent a leaf from being reinterpreted as an
//! internal node or vice versa.

use std::fmt;
use std::sync::LazyLock;

use sha2::{Digest as _, Sha256};

/// Tree depth of the sparse Merkle tree: one level per bit of a SHA-256
/// key digest.
pub const TREE_DEPTH: usize = 256;

const LEAF_PREFIX: u8 = 0x00;
const NODE_PREFIX: u8 = 0x01;

/// A 32-byte SHA-256 commitment value.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    /// The all-zero digest, used as the empty-leaf marker.
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Parses a 64-character hex string.
    pub fn from_hex(s: &str) -> Option<Digest> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Digest(arr))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl From<[u8; 32]> for Digest {
    fn from(bytes: [u8; 32]) -> Self {
        Digest(bytes)
    }
}

/// SHA-256 of raw bytes.
pub fn sha256(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// SHA-256 over several slices without intermediate allocation.
pub fn sha256_concat(parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    Digest(hasher.finalize().into())
}

/// Leaf digest: `H(0x00 || key_digest || value_digest)`.
pub fn leaf_digest(key_digest: &Digest, value_digest: &Digest) -> Digest {
    sha256_concat(&[&[LEAF_PREFIX], &key_digest.0, &value_digest.0])
}

/// Internal node digest: `H(0x01 || left || right)`.
pub fn node_digest(left: &Digest, right: &Digest) -> Digest {
    sha256_concat(&[&[NODE_PREFIX], &left.0, &right.0])
}

/// Digest of an absent leaf.
pub fn empty_leaf_digest() -> Digest {
    Digest::ZERO
}

/// Default subtree digests per level. `DEFAULT_DIGESTS[d]` is the digest of
/// a node at depth `d` whose entire subtree is empty; `DEFAULT_DIGESTS[256]`
/// is the empty leaf, `DEFAULT_DIGESTS[0]` the empty-tree root.
static DEFAULT_DIGESTS: LazyLock<[Digest; TREE_DEPTH + 1]> = LazyLock::new(|| {
    let mut defaults = [Digest::ZERO; TREE_DEPTH + 1];
    defaults[TREE_DEPTH] = empty_leaf_digest();
    for depth in (0..TREE_DEPTH).rev() {
        let child = defaults[depth + 1];
        defaults[depth] = node_digest(&child, &child);
    }
    defaults
});

/// Digest of an all-empty subtree rooted at `depth`.
pub fn default_digest(depth: usize) -> Digest {
    DEFAULT_DIGESTS[depth]
}

/// Bit `index` (0 = most significant bit of byte 0) of a key digest.
/// Bit `i` selects the child taken when descending from depth `i` to
/// depth `i + 1`: 0 = left, 1 = right.
pub fn path_bit(key_digest: &Digest, index: usize) -> bool {
    (key_digest.0[index / 8] >> (7 - index % 8)) & 1 == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_hex_round_trip() {
        let d = sha256(b"abc");
        assert_eq!(Digest::from_hex(&d.to_hex()), Some(d));
        assert_eq!(Digest::from_hex("zz"), None);
    }

    #[test]
    fn sha256_matches_known_vector() {
        // SHA256("abc") from FIPS 180-2.
        assert_eq!(
            sha256(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn leaf_and_node_domains_are_distinct() {
        let a = sha256(b"a");
        let b = sha256(b"b");
        assert_ne!(leaf_digest(&a, &b), node_digest(&a, &b));
    }

    #[test]
    fn default_digests_fold_from_empty_leaf() {
        assert_eq!(default_digest(TREE_DEPTH), Digest::ZERO);
        let expected = node_digest(&Digest::ZERO, &Digest::ZERO);
        assert_eq!(default_digest(TREE_DEPTH - 1), expected);
        let expected_up = node_digest(&expected, &expected);
        assert_eq!(default_digest(TREE_DEPTH - 2), expected_up);
    }

    #[test]
    fn path_bits_are_msb_first() {
        let mut bytes = [0u8; 32];
        bytes[0] = 0b1000_0000;
        bytes[1] = 0b0000_0001;
        let d = Digest(bytes);
        assert!(path_bit(&d, 0));
        assert!(!path_bit(&d, 1));
        assert!(path_bit(&d, 15));
        assert!(!path_bit(&d, 255));
    }
}
