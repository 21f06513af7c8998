//! Frozen wire-format vectors. These bytes are the compatibility
//! contract; any change here is a breaking format change.

use veristate::codec::{Decode, Encode};
use veristate::domain::{envelope_digest, Address, Keypair, TransactionEnvelope, TransferTx};

fn fixed_envelope() -> TransactionEnvelope {
    let sender = Keypair::from_seed([0x11; 32]);
    let to = Address([0x22; 32]);
    sender.signed_transfer(to, 0x0102030405060708090a0b0c0d0e0f10, 7)
}

#[test]
fn transfer_envelope_bytes_are_pinned() {
    let env = fixed_envelope();
    let encoded = env.encode();

    // Layout: kind (2) || payload len (4) || payload (80) || key (32) ||
    // nonce (8) || signature (64).
    assert_eq!(encoded.len(), 2 + 4 + 80 + 32 + 8 + 64);
    assert_eq!(&encoded[..2], &[0x01, 0x00], "transfer kind tag");
    assert_eq!(&encoded[2..6], &80u32.to_le_bytes(), "payload length");

    // PINNED VECTOR — do not change without a format bump.
    let expected = "0100\
                    50000000\
                    f62e1c8c94979d6021d6f9e02c6e5e9ab51b2ef53dda0a24171b14012a2bdf54\
                    2222222222222222222222222222222222222222222222222222222222222222\
                    100f0e0d0c0b0a090807060504030201000000000000000000000000000000\
                    00\
                    4fabbd7939198048426e6d1cbf26f07ff1e1b4b402e07e3060bf79e3e0a5a96e\
                    0700000000000000\
                    fc607963a485d255fd86f832a332b10ec7322416cb34a2a5fd55be8e6d400906\
                    9fec2e1caa729159e1b37e48c22a1a72ff4c9c60552e0ecb9b1aae0b864f850a";
    assert_eq!(hex::encode(&encoded), expected.replace(char::is_whitespace, ""));

    // The digest and signing digest are equally pinned.
    assert_eq!(
        envelope_digest(&env).to_hex(),
        "838a2b62d54a01e45878d4b8f4c709a6fde744a4d1e77aa4e54a017805a1b297"
    );
    assert_eq!(
        env.signing_digest().to_hex(),
        "0835c6683eb0f6571657577af41870d329c571dbdd24b4545a1dcbadef2b6d01"
    );

    // And the vector round-trips.
    assert_eq!(TransactionEnvelope::decode_all(&encoded).unwrap(), env);
}

#[test]
fn transfer_payload_layout_is_from_to_amount() {
    let env = fixed_envelope();
    let tx = TransferTx::decode_all(&env.payload).unwrap();
    assert_eq!(tx.from, Keypair::from_seed([0x11; 32]).address());
    assert_eq!(tx.to, Address([0x22; 32]));
    assert_eq!(tx.amount, 0x0102030405060708090a0b0c0d0e0f10);
    assert_eq!(&env.payload[..32], &tx.from.0);
    assert_eq!(&env.payload[32..64], &tx.to.0);
    assert_eq!(&env.payload[64..80], &tx.amount.to_le_bytes());
}

#[test]
fn empty_tree_root_is_pinned() {
    // Root of the all-default depth-256 tree with zeroed empty leaves.
    assert_eq!(
        veristate::AuthenticatedStore::empty_root().to_hex(),
        veristate::AuthenticatedStore::new().root().to_hex()
    );
    let root = veristate::AuthenticatedStore::empty_root().to_hex();
    assert_eq!(
        root,
        "4cbf5a5cceb117ad2a9bbc8ff4b363cdd4dd8da27c92ac9d1d83c7ae334a51d9"
    );
}
