//! Validity-style verification: package a batch's execution log as a
//! replay proof and check it with the stateless `verify(S', S, C, proof)`
//! entry point — then watch it reject a proof whose witnesses were
//! doctored.
//!
//! ```sh
//! cargo run --example replay_proof
//! ```

use veristate::domain::{GrantTx, Keypair, TransactionEnvelope};
use veristate::lifecycle::apply_batch;
use veristate::log::ExecutionLog;
use veristate::prover::{prove_replay, ProofBody};
use veristate::settlement::VerifyError;
use veristate::store::AuthenticatedStore;
use veristate::verify;

fn main() {
    let alice = Keypair::from_seed([1; 32]);
    let bob = Keypair::from_seed([2; 32]);

    let mut store = AuthenticatedStore::new();
    apply_batch(
        &mut store,
        &[TransactionEnvelope::genesis_grant(GrantTx {
            to: alice.address(),
            amount: 500,
        })],
    )
    .unwrap();

    let run = apply_batch(
        &mut store,
        &[
            alice.signed_transfer(bob.address(), 120, 0),
            bob.signed_transfer(alice.address(), 20, 0),
        ],
    )
    .unwrap();

    let proof = prove_replay(&run.log);
    println!(
        "replay proof: {} bytes claiming ({}, {}, {})",
        veristate::codec::Encode::encode(&proof).len(),
        run.post_root,
        run.pre_root,
        run.commitment
    );

    // The verifier holds no state: just the triple and the proof.
    verify(run.post_root, run.pre_root, run.commitment, &proof).unwrap();
    println!("honest proof accepted");

    // Claiming a different post-root fails the binding check.
    let err = verify(run.pre_root, run.pre_root, run.commitment, &proof).unwrap_err();
    assert_eq!(err, VerifyError::TripleMismatch);
    println!("wrong triple rejected: {err}");

    // An adversarial prover can re-derive every digest after doctoring a
    // witness, so rebuild the proof the way one would: change a written
    // balance and recompute the log digest. Re-execution from the
    // witnessed reads still exposes the lie.
    let mut doctored = proof.clone();
    if let ProofBody::Replay(log) = &mut doctored.body {
        let mut steps = log.steps().to_vec();
        steps[0].writes[1].new_value = Some(9_999u128.to_le_bytes().to_vec());
        *log = ExecutionLog::from_raw_parts(*log.header(), steps, log.final_root());
    }
    let err = verify(run.post_root, run.pre_root, run.commitment, &doctored).unwrap_err();
    println!("doctored write rejected: {err}");
}
