//! Plain-map ledger interpreter used as a differential-testing oracle.
//!
//! Re-implements the transaction semantics directly over hash-free balance
//! and nonce maps, with no Merkle tree, no witnessing, and no staging
//! machinery. Tests run workloads through both this interpreter and the
//! real pipeline, then rebuild the final mapping into a fresh
//! authenticated store and compare roots byte-for-byte.
//!
//! The interpreter mirrors one engine detail intentionally: a successful
//! handler writes a balance entry for every key it touches, even when the
//! value is unchanged or zero, because those writes create leaves in the
//! authenticated store.

use std::collections::BTreeMap;

use crate::domain::{
    verify_envelope_signature, Address, Balance, GrantTx, TransactionEnvelope, TransferTx, TxKind,
};
use crate::codec::Decode;
use crate::lifecycle::{balance_key, nonce_key, RejectReason, TxStatus};
use crate::store::AuthenticatedStore;

#[derive(Default, Clone)]
pub struct ReferenceLedger {
    balances: BTreeMap<Address, Balance>,
    nonces: BTreeMap<Address, u64>,
}

impl ReferenceLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_pristine(&self) -> bool {
        self.balances.is_empty() && self.nonces.is_empty()
    }

    pub fn balance(&self, address: &Address) -> Balance {
        self.balances.get(address).copied().unwrap_or(0)
    }

    pub fn nonce(&self, address: &Address) -> u64 {
        self.nonces.get(address).copied().unwrap_or(0)
    }

    pub fn total_supply(&self) -> Balance {
        self.balances.values().sum()
    }

    /// Directly credits a balance, as a genesis grant would.
    pub fn grant(&mut self, to: Address, amount: Balance) {
        let balance = self.balance(&to);
        self.balances.insert(to, balance + amount);
    }

    /// Applies a batch with the same genesis rule as the engine: grants
    /// are valid only when the ledger is pristine at batch start.
    pub fn apply_batch(&mut self, envelopes: &[TransactionEnvelope]) -> Vec<TxStatus> {
        let genesis_open = self.is_pristine();
        envelopes
            .iter()
            .map(|env| self.apply_envelope(env, genesis_open))
            .collect()
    }

    pub fn apply_envelope(
        &mut self,
        env: &TransactionEnvelope,
        genesis_open: bool,
    ) -> TxStatus {
        match self.try_apply(env, genesis_open) {
            Ok(()) => TxStatus::Success,
            Err(reason) => TxStatus::Rejected(reason),
        }
    }

    fn try_apply(
        &mut self,
        env: &TransactionEnvelope,
        genesis_open: bool,
    ) -> Result<(), RejectReason> {
        match env.tx_kind {
            TxKind::GenesisGrant => {
                let grant =
                    GrantTx::decode_all(&env.payload).map_err(|_| RejectReason::BadFormat)?;
                if !genesis_open {
                    return Err(RejectReason::GenesisClosed);
                }
                let balance = self.balance(&grant.to);
                let credited = balance
                    .checked_add(grant.amount)
                    .ok_or(RejectReason::Overflow)?;
                self.balances.insert(grant.to, credited);
                Ok(())
            }
            TxKind::Transfer => {
                let tx =
                    TransferTx::decode_all(&env.payload).map_err(|_| RejectReason::BadFormat)?;
                if !verify_envelope_signature(env) {
                    return Err(RejectReason::BadSignature);
                }
                let sender = env.sender_address();
                if env.nonce != self.nonce(&sender) {
                    return Err(RejectReason::BadNonce);
                }
                if tx.from != sender {
                    return Err(RejectReason::SenderMismatch);
                }
                let from_balance = self.balance(&tx.from);
                if tx.amount > from_balance {
                    return Err(RejectReason::InsufficientFunds);
                }
                let debited = from_balance - tx.amount;
                // A self-transfer observes the debited balance, as the
                // handler's read-your-writes view does.
                let to_balance = if tx.to == tx.from {
                    debited
                } else {
                    self.balance(&tx.to)
                };
                let credited = to_balance
                    .checked_add(tx.amount)
                    .ok_or(RejectReason::Overflow)?;
                self.balances.insert(tx.from, debited);
                self.balances.insert(tx.to, credited);
                self.nonces.insert(sender, env.nonce + 1);
                Ok(())
            }
        }
    }

    /// Rebuilds the ledger into a fresh authenticated store, producing the
    /// root the real pipeline must match.
    pub fn rebuild_store(&self) -> AuthenticatedStore {
        let mut store = AuthenticatedStore::new();
        for (address, balance) in &self.balances {
            store.put(&balance_key(address), &balance.to_le_bytes());
        }
        for (address, nonce) in &self.nonces {
            store.put(&nonce_key(address), &nonce.to_le_bytes());
        }
        store
    }
}
