//! Node orchestration: drives sequencer -> engine -> prover -> settlement,
//! persists the data-availability log, receipts, and settlement history
//! under a data directory, runs the watcher, and serves event queries.
//!
//! Data directory layout:
//!
//! ```text
//! <data_dir>/
//!   da.log           append-only data-availability log
//!   inbox.log        admitted-but-unsealed envelopes with sequence numbers
//!   receipts.log     line-delimited receipt export
//!   settlement.log   line-delimited finalized-history export
//!   proofs/          batch-<n>.vlog and batch-<n>.vproof artifacts
//! ```
//!
//! A restarted node rebuilds its store by replaying the DA batches listed
//! in the settlement history, and rebuilds the event index from the
//! receipt export alone.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Address, Balance, Event, EventKind, GrantTx, Keypair, TransactionEnvelope, TxKind,
};
use crate::hash::Digest;
use crate::lifecycle::{apply_batch, EngineError, Receipt, RejectReason, TxStatus};
use crate::prover::{prove_replay, ProverError};
use crate::sequencer::{
    Batch, DaLog, DaLogError, Preconfirmation, SealedBatch, Sequencer, SequencerError,
};
use crate::settlement::{
    ClaimStatus, ClaimSubmission, FinalizedRecord, FraudProof, SettlementContract,
    SettlementError,
};
use crate::store::{AuthenticatedStore, StateRoot};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProofMode {
    Replay,
    Optimistic,
}

impl ProofMode {
    pub fn name(&self) -> &'static str {
        match self {
            ProofMode::Replay => "replay",
            ProofMode::Optimistic => "optimistic",
        }
    }

    pub fn from_name(name: &str) -> Option<ProofMode> {
        match name {
            "replay" => Some(ProofMode::Replay),
            "optimistic" => Some(ProofMode::Optimistic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenesisGrant {
    pub address: Address,
    pub amount: Balance,
}

/// Node configuration, stored as a single TOML file. The data directory
/// may be overridden with the `VERISTATE_DATA_DIR` environment variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeConfig {
    pub data_dir: PathBuf,
    pub proof_mode: ProofMode,
    pub challenge_window: u64,
    pub batch_max_size: usize,
    pub sequencer_key_file: PathBuf,
    pub genesis: Vec<GenesisGrant>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config io: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("invalid config field {field}: {detail}")]
    Invalid {
        field: &'static str,
        detail: String,
    },
}

#[derive(Serialize, Deserialize)]
struct ConfigFile {
    data_dir: String,
    proof_mode: String,
    challenge_window: u64,
    batch_max_size: u32,
    sequencer_key_file: String,
    #[serde(default)]
    genesis: Vec<GenesisEntry>,
}

#[derive(Serialize, Deserialize)]
struct GenesisEntry {
    address: String,
    /// Decimal string; TOML integers cannot carry a full 128-bit amount.
    amount: String,
}

impl NodeConfig {
    pub fn from_toml_str(text: &str) -> Result<NodeConfig, ConfigError> {
        let raw: ConfigFile = toml::from_str(text)?;
        let proof_mode =
            ProofMode::from_name(&raw.proof_mode).ok_or_else(|| ConfigError::Invalid {
                field: "proof_mode",
                detail: format!("unknown mode {:?}", raw.proof_mode),
            })?;
        let mut genesis = Vec::with_capacity(raw.genesis.len());
        for entry in &raw.genesis {
            let address =
                Address::from_hex(&entry.address).ok_or_else(|| ConfigError::Invalid {
                    field: "genesis.address",
                    detail: format!("not a 32-byte hex string: {:?}", entry.address),
                })?;
            let amount = entry.amount.parse().map_err(|_| ConfigError::Invalid {
                field: "genesis.amount",
                detail: format!("not a decimal amount: {:?}", entry.amount),
            })?;
            genesis.push(GenesisGrant {
                address,
                amount,
            });
        }
        Ok(NodeConfig {
            data_dir: PathBuf::from(raw.data_dir),
            proof_mode,
            challenge_window: raw.challenge_window,
            batch_max_size: raw.batch_max_size as usize,
            sequencer_key_file: PathBuf::from(raw.sequencer_key_file),
            genesis,
        })
    }

    pub fn to_toml_string(&self) -> String {
        let raw = ConfigFile {
            data_dir: self.data_dir.display().to_string(),
            proof_mode: self.proof_mode.name().to_string(),
            challenge_window: self.challenge_window,
            batch_max_size: self.batch_max_size as u32,
            sequencer_key_file: self.sequencer_key_file.display().to_string(),
            genesis: self
                .genesis
                .iter()
                .map(|g| GenesisEntry {
                    address: g.address.to_hex(),
                    amount: g.amount.to_string(),
                })
                .collect(),
        };
        toml::to_string(&raw).expect("config serializes")
    }

    /// Loads a config file, resolving relative paths against the file's
    /// directory and applying the data-dir environment override.
    pub fn load(path: &Path) -> Result<NodeConfig, ConfigError> {
        let text = fs::read_to_string(path)?;
        let mut config = Self::from_toml_str(&text)?;
        if let Ok(override_dir) = std::env::var("VERISTATE_DATA_DIR") {
            config.data_dir = PathBuf::from(override_dir);
        }
        let base = path.parent().unwrap_or(Path::new("."));
        if config.data_dir.is_relative() {
            config.data_dir = base.join(&config.data_dir);
        }
        if config.sequencer_key_file.is_relative() {
            config.sequencer_key_file = base.join(&config.sequencer_key_file);
        }
        Ok(config)
    }
}

/// One event at its position in the chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedEvent {
    pub batch_index: u64,
    pub tx_index: u32,
    pub ordinal: u32,
    pub event: Event,
}

#[derive(Debug, Clone, Default)]
pub struct EventFilter {
    pub address: Option<Address>,
    pub kind: Option<EventKind>,
    /// Inclusive batch range.
    pub batch_range: Option<(u64, u64)>,
}

type Position = (u64, u32, u32);

/// Receipt-derived event index with secondary indexes by address and kind.
#[derive(Default)]
pub struct EventIndex {
    by_position: BTreeMap<Position, Event>,
    by_address: HashMap<Address, BTreeSet<Position>>,
    by_kind: HashMap<EventKind, BTreeSet<Position>>,
}

impl EventIndex {
    pub fn new() -> EventIndex {
        EventIndex::default()
    }

    pub fn ingest_receipt(&mut self, batch_index: u64, tx_index: u32, receipt: &Receipt) {
        for (ordinal, event) in receipt.events.iter().enumerate() {
            let position = (batch_index, tx_index, ordinal as u32);
            self.by_position.insert(position, *event);
            self.by_kind.entry(event.kind()).or_default().insert(position);
            match event {
                Event::Transfer(e) => {
                    self.by_address.entry(e.from).or_default().insert(position);
                    self.by_address.entry(e.to).or_default().insert(position);
                }
                Event::Grant(e) => {
                    self.by_address.entry(e.to).or_default().insert(position);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.by_position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_position.is_empty()
    }

    /// Events matching the filter, ordered by (batch, tx, ordinal).
    pub fn query(&self, filter: &EventFilter) -> Vec<IndexedEvent> {
        let in_range = |pos: &Position| match filter.batch_range {
            Some((lo, hi)) => pos.0 >= lo && pos.0 <= hi,
            None => true,
        };
        let collect = |positions: Box<dyn Iterator<Item = Position> + '_>| {
            positions
                .filter(in_range)
                .map(|pos| IndexedEvent {
                    batch_index: pos.0,
                    tx_index: pos.1,
                    ordinal: pos.2,
                    event: self.by_position[&pos],
                })
                .filter(|ev| filter.kind.is_none_or(|k| ev.event.kind() == k))
                .filter(|ev| {
                    filter
                        .address
                        .is_none_or(|addr| ev.event.touches(&addr))
                })
                .collect()
        };
        match (&filter.address, &filter.kind) {
            (Some(addr), _) => match self.by_address.get(addr) {
                Some(set) => collect(Box::new(set.iter().copied())),
                None => Vec::new(),
            },
            (None, Some(kind)) => match self.by_kind.get(kind) {
                Some(set) => collect(Box::new(set.iter().copied())),
                None => Vec::new(),
            },
            (None, None) => collect(Box::new(self.by_position.keys().copied())),
        }
    }
}

/// A receipt at its chain position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceiptRecord {
    pub batch_index: u64,
    pub tx_index: u32,
    pub receipt: Receipt,
}

impl ReceiptRecord {
    /// Line format: `batch tx digest status pre post [event ...]` where
    /// status is `success` or `rejected=<reason>` and each event is
    /// `transfer:<from>:<to>:<amount>` or `grant:<to>:<amount>`.
    pub fn to_line(&self) -> String {
        let status = match self.receipt.status {
            TxStatus::Success => "success".to_string(),
            TxStatus::Rejected(reason) => format!("rejected={}", reason.name()),
        };
        let mut line = format!(
            "{} {} {} {} {} {}",
            self.batch_index,
            self.tx_index,
            self.receipt.envelope_digest,
            status,
            self.receipt.pre_root,
            self.receipt.post_root
        );
        for event in &self.receipt.events {
            match event {
                Event::Transfer(e) => {
                    write!(line, " transfer:{}:{}:{}", e.from, e.to, e.amount).unwrap()
                }
                Event::Grant(e) => write!(line, " grant:{}:{}", e.to, e.amount).unwrap(),
            }
        }
        line
    }

    pub fn parse_line(line: &str) -> Option<ReceiptRecord> {
        let mut fields = line.split_ascii_whitespace();
        let batch_index = fields.next()?.parse().ok()?;
        let tx_index = fields.next()?.parse().ok()?;
        let envelope_digest = Digest::from_hex(fields.next()?)?;
        let status_field = fields.next()?;
        let status = if status_field == "success" {
            TxStatus::Success
        } else {
            let reason = status_field.strip_prefix("rejected=")?;
            TxStatus::Rejected(RejectReason::from_name(reason)?)
        };
        let pre_root = StateRoot::from_hex(fields.next()?)?;
        let post_root = StateRoot::from_hex(fields.next()?)?;
        let mut events = Vec::new();
        for token in fields {
            let mut parts = token.split(':');
            match parts.next()? {
                "transfer" => events.push(Event::Transfer(crate::domain::TransferEvent {
                    from: Address::from_hex(parts.next()?)?,
                    to: Address::from_hex(parts.next()?)?,
                    amount: parts.next()?.parse().ok()?,
                })),
                "grant" => events.push(Event::Grant(crate::domain::GrantEvent {
                    to: Address::from_hex(parts.next()?)?,
                    amount: parts.next()?.parse().ok()?,
                })),
                _ => return None,
            }
            if parts.next().is_some() {
                return None;
            }
        }
        Some(ReceiptRecord {
            batch_index,
            tx_index,
            receipt: Receipt {
                envelope_digest,
                status,
                events,
                pre_root,
                post_root,
            },
        })
    }
}

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("node io: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Engine(#[from] EngineError),

    #[error(transparent)]
    Sequencer(#[from] SequencerError),

    #[error(transparent)]
    DaLog(#[from] DaLogError),

    #[error(transparent)]
    Prover(#[from] ProverError),

    #[error(transparent)]
    Watcher(#[from] WatchError),

    /// Settlement refused a submission the node believed honest; by the
    /// safety invariant this indicates an implementation bug, so the
    /// pipeline halts.
    #[error("settlement rejected an honest submission: {0}")]
    SettlementRejected(SettlementError),

    #[error("recovery diverged: DA replay does not reproduce the settled history ({0})")]
    RecoveryDiverged(String),

    #[error("key file {path}: {detail}")]
    KeyFile {
        path: PathBuf,
        detail: String,
    },
}

/// Fault injection for exercising the optimistic pathway: corrupts the
/// declared roots of one batch before claiming it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultSpec {
    pub batch_index: u64,
    /// Which declared transaction root to corrupt; `None` corrupts the
    /// last one (and the declared `S'` with it).
    pub tx_index: Option<u32>,
}

/// Outcome of settling one batch through the pipeline.
#[derive(Debug)]
pub struct BatchOutcome {
    pub batch_index: u64,
    pub pre_root: StateRoot,
    pub post_root: StateRoot,
    pub receipts: Vec<Receipt>,
    /// True when an injected fault was reverted by the watcher before the
    /// honest re-submission finalized.
    pub fault_reverted: bool,
}

/// Loads a 32-byte hex seed from a key file.
pub fn load_keypair(path: &Path) -> Result<Keypair, NodeError> {
    let text = fs::read_to_string(path).map_err(|e| NodeError::KeyFile {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let bytes = hex::decode(text.trim()).map_err(|e| NodeError::KeyFile {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let seed: [u8; 32] = bytes.try_into().map_err(|_| NodeError::KeyFile {
        path: path.to_path_buf(),
        detail: "seed must be 32 bytes of hex".to_string(),
    })?;
    Ok(Keypair::from_seed(seed))
}

/// Writes a key file with a fresh or provided seed.
pub fn write_key_file(path: &Path, seed: [u8; 32]) -> Result<Keypair, NodeError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, hex::encode(seed))?;
    Ok(Keypair::from_seed(seed))
}

pub struct Node {
    config: NodeConfig,
    store: AuthenticatedStore,
    sequencer: Sequencer,
    settlement: SettlementContract,
    da: DaLog,
    index: EventIndex,
    receipts: Vec<ReceiptRecord>,
    watcher: Watcher,
    faults: Vec<FaultSpec>,
    persisted_history: usize,
}

impl Node {
    fn paths(config: &NodeConfig) -> (PathBuf, PathBuf, PathBuf, PathBuf, PathBuf) {
        let d = &config.data_dir;
        (
            d.join("da.log"),
            d.join("inbox.log"),
            d.join("receipts.log"),
            d.join("settlement.log"),
            d.join("proofs"),
        )
    }

    /// Opens a node over the data directory, initializing genesis on
    /// first start and otherwise recovering from the DA log and
    /// settlement history.
    pub fn open(config: NodeConfig) -> Result<Node, NodeError> {
        let (da_path, inbox_path, receipts_path, settlement_path, proofs_dir) =
            Self::paths(&config);
        fs::create_dir_all(&config.data_dir)?;
        fs::create_dir_all(proofs_dir)?;
        let keypair = load_keypair(&config.sequencer_key_file)?;
        let da = DaLog::open_or_create(&da_path, &keypair.public_key())?;

        let fresh = !settlement_path.exists();
        let settlement = if fresh {
            SettlementContract::new(config.challenge_window)
        } else {
            let mut history = Vec::new();
            for (number, line) in fs::read_to_string(&settlement_path)?.lines().enumerate() {
                let record =
                    FinalizedRecord::parse_line(line).ok_or_else(|| {
                        NodeError::RecoveryDiverged(format!(
                            "settlement history line {} unparseable",
                            number + 1
                        ))
                    })?;
                history.push(record);
            }
            SettlementContract::from_history(config.challenge_window, history)
        };
        let persisted_history = settlement.history().len();

        let mut node = Node {
            sequencer: Sequencer::new(keypair),
            store: AuthenticatedStore::new(),
            settlement,
            da,
            index: EventIndex::new(),
            receipts: Vec::new(),
            watcher: Watcher::new(),
            faults: Vec::new(),
            persisted_history,
            config,
        };

        if fresh {
            fs::write(&receipts_path, "")?;
            fs::write(&inbox_path, "")?;
            fs::write(&settlement_path, "")?;
            node.run_genesis()?;
        } else {
            node.replay_settled_history()?;
            node.load_receipts(&receipts_path)?;
            node.load_inbox(&inbox_path)?;
        }
        Ok(node)
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn canonical_root(&self) -> StateRoot {
        self.settlement.canonical_root()
    }

    pub fn settlement(&self) -> &SettlementContract {
        &self.settlement
    }

    pub fn store(&self) -> &AuthenticatedStore {
        &self.store
    }

    pub fn da_log(&self) -> &DaLog {
        &self.da
    }

    pub fn receipts(&self) -> &[ReceiptRecord] {
        &self.receipts
    }

    pub fn sequencer_public_key(&self) -> [u8; 32] {
        self.sequencer.public_key()
    }

    pub fn pending_len(&self) -> usize {
        self.sequencer.pending_len()
    }

    /// Schedules declared-root corruption for a future batch (optimistic
    /// mode only).
    pub fn inject_fault(&mut self, fault: FaultSpec) {
        self.faults.push(fault);
    }

    /// Admits an envelope into the persistent mempool.
    pub fn submit(
        &mut self,
        envelope: TransactionEnvelope,
    ) -> Result<Preconfirmation, NodeError> {
        let pc = self.sequencer.submit(envelope.clone())?;
        let (_, inbox_path, ..) = Self::paths(&self.config);
        let mut file = fs::OpenOptions::new().append(true).open(&inbox_path)?;
        writeln!(
            file,
            "{} {}",
            pc.sequence,
            hex::encode(crate::codec::Encode::encode(&envelope))
        )?;
        Ok(pc)
    }

    /// Seals one batch and drives it through execute, prove/claim,
    /// settle, and index. `NoWork` when the mempool is empty.
    pub fn seal_and_settle(&mut self) -> Result<BatchOutcome, NodeError> {
        let sealed = self.sequencer.seal_batch(self.config.batch_max_size)?;
        self.rewrite_inbox()?;
        self.settle_sealed(sealed)
    }

    /// Processes the whole mempool, one batch at a time.
    pub fn run(&mut self) -> Result<Vec<BatchOutcome>, NodeError> {
        let mut outcomes = Vec::new();
        loop {
            match self.seal_and_settle() {
                Ok(outcome) => outcomes.push(outcome),
                Err(NodeError::Sequencer(SequencerError::NoWork)) => break,
                Err(other) => return Err(other),
            }
        }
        Ok(outcomes)
    }

    pub fn query(&self, filter: &EventFilter) -> Vec<IndexedEvent> {
        self.index.query(filter)
    }

    /// Writes the current store as a snapshot dump.
    pub fn dump_state<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        self.store.write_snapshot(w)
    }

    fn run_genesis(&mut self) -> Result<(), NodeError> {
        if self.config.genesis.is_empty() {
            return Ok(());
        }
        let envelopes: Vec<TransactionEnvelope> = self
            .config
            .genesis
            .iter()
            .map(|g| {
                TransactionEnvelope::genesis_grant(GrantTx {
                    to: g.address,
                    amount: g.amount,
                })
            })
            .collect();
        let sealed = self.sequencer.seal_direct(envelopes)?;
        self.settle_sealed(sealed)?;
        Ok(())
    }

    fn settle_sealed(&mut self, sealed: SealedBatch) -> Result<BatchOutcome, NodeError> {
        let batch_index = sealed.batch_index;
        let run = apply_batch(&mut self.store, &sealed.envelopes)?;
        let honest_roots: Vec<StateRoot> = run
            .log
            .steps()
            .iter()
            .map(|s| s.intermediate_root)
            .collect();

        let (.., proofs_dir) = Self::paths(&self.config);
        run.log
            .write_file(&proofs_dir.join(format!("batch-{batch_index}.vlog")))
            .map_err(|e| match e {
                crate::log::LogError::Io(io) => NodeError::Io(io),
                other => NodeError::Engine(EngineError::Log(other)),
            })?;
        let proof = prove_replay(&run.log);
        proof.write_file(&proofs_dir.join(format!("batch-{batch_index}.vproof")))?;

        let fault = self
            .faults
            .iter()
            .position(|f| f.batch_index == batch_index)
            .map(|i| self.faults.remove(i));

        let mut fault_reverted = false;
        match self.config.proof_mode {
            ProofMode::Replay => {
                let batch =
                    sealed.into_batch(run.pre_root, run.post_root, honest_roots.clone());
                self.da.publish(&batch)?;
                self.settlement
                    .submit_validity(run.post_root, run.pre_root, run.commitment, &proof)
                    .map_err(NodeError::SettlementRejected)?;
                self.watcher.scan(&self.da, &mut self.settlement)?;
            }
            ProofMode::Optimistic => {
                if let Some(fault) = fault {
                    fault_reverted = true;
                    let mut corrupted_roots = honest_roots.clone();
                    let target = fault
                        .tx_index
                        .map(|i| i as usize)
                        .unwrap_or(corrupted_roots.len() - 1)
                        .min(corrupted_roots.len() - 1);
                    corrupted_roots[target].0 .0[0] ^= 0xff;
                    let corrupted_post = *corrupted_roots.last().unwrap();
                    let corrupted_batch = sealed
                        .clone()
                        .into_batch(run.pre_root, corrupted_post, corrupted_roots.clone());
                    self.da.publish(&corrupted_batch)?;
                    let claim_id = self
                        .settlement
                        .submit_optimistic_claim(ClaimSubmission {
                            post_root: corrupted_post,
                            pre_root: run.pre_root,
                            commitment: run.commitment,
                            tx_roots: corrupted_roots,
                        })
                        .map_err(NodeError::SettlementRejected)?;
                    let reports = self.watcher.scan(&self.da, &mut self.settlement)?;
                    let reverted = self
                        .settlement
                        .claim(claim_id)
                        .map(|c| c.status == ClaimStatus::Reverted)
                        .unwrap_or(false);
                    if !reverted {
                        return Err(NodeError::RecoveryDiverged(format!(
                            "injected fault in batch {batch_index} was not reverted \
                             (watcher reports: {reports:?})"
                        )));
                    }
                }
                // Honest submission (first attempt, or re-execution after
                // the injected fault was reverted).
                let batch = sealed.into_batch(run.pre_root, run.post_root, honest_roots.clone());
                self.da.publish(&batch)?;
                let claim_id = self
                    .settlement
                    .submit_optimistic_claim(ClaimSubmission {
                        post_root: run.post_root,
                        pre_root: run.pre_root,
                        commitment: run.commitment,
                        tx_roots: honest_roots,
                    })
                    .map_err(NodeError::SettlementRejected)?;
                self.watcher.scan(&self.da, &mut self.settlement)?;
                self.settlement.tick(self.config.challenge_window);
                let finalized = self.settlement.finalize_ready();
                if !finalized.contains(&claim_id) {
                    return Err(NodeError::SettlementRejected(SettlementError::StaleBase));
                }
            }
        }

        for (tx_index, receipt) in run.receipts.iter().enumerate() {
            let record = ReceiptRecord {
                batch_index,
                tx_index: tx_index as u32,
                receipt: receipt.clone(),
            };
            self.index
                .ingest_receipt(batch_index, tx_index as u32, receipt);
            self.receipts.push(record);
        }
        self.append_receipt_lines(run.receipts.len())?;
        self.append_history_lines()?;

        Ok(BatchOutcome {
            batch_index,
            pre_root: run.pre_root,
            post_root: run.post_root,
            receipts: run.receipts,
            fault_reverted,
        })
    }

    fn append_receipt_lines(&mut self, count: usize) -> Result<(), NodeError> {
        let (_, _, receipts_path, ..) = Self::paths(&self.config);
        let mut file = fs::OpenOptions::new().append(true).open(&receipts_path)?;
        for record in &self.receipts[self.receipts.len() - count..] {
            writeln!(file, "{}", record.to_line())?;
        }
        Ok(())
    }

    fn append_history_lines(&mut self) -> Result<(), NodeError> {
        let (.., settlement_path, _) = Self::paths(&self.config);
        let mut file = fs::OpenOptions::new().append(true).open(&settlement_path)?;
        for record in &self.settlement.history()[self.persisted_history..] {
            writeln!(file, "{}", record.to_line())?;
        }
        self.persisted_history = self.settlement.history().len();
        Ok(())
    }

    /// Replays DA batches along the settled history to rebuild the store.
    fn replay_settled_history(&mut self) -> Result<(), NodeError> {
        let entries = self.da.read_batches()?;
        let mut by_key: HashMap<(StateRoot, Digest), &Batch> = HashMap::new();
        for entry in &entries {
            by_key.insert(
                (entry.batch.pre_root, entry.batch.commitment.digest),
                &entry.batch,
            );
        }
        let mut max_batch_index = None;
        let mut user_txs = 0u64;
        let history: Vec<FinalizedRecord> = self.settlement.history().to_vec();
        for record in &history {
            let batch = by_key
                .get(&(record.pre_root, record.commitment.digest))
                .copied()
                .ok_or_else(|| {
                    NodeError::RecoveryDiverged(format!(
                        "no DA record for settled batch with pre-root {}",
                        record.pre_root
                    ))
                })?;
            let run = apply_batch(&mut self.store, &batch.envelopes)?;
            if run.post_root != record.post_root {
                return Err(NodeError::RecoveryDiverged(format!(
                    "batch {} replays to {}, history says {}",
                    batch.batch_index, run.post_root, record.post_root
                )));
            }
            max_batch_index = Some(max_batch_index.unwrap_or(0).max(batch.batch_index));
            user_txs += batch
                .envelopes
                .iter()
                .filter(|e| e.tx_kind == TxKind::Transfer)
                .count() as u64;
        }
        if self.store.root() != self.settlement.canonical_root() {
            return Err(NodeError::RecoveryDiverged(format!(
                "replayed root {} != canonical {}",
                self.store.root(),
                self.settlement.canonical_root()
            )));
        }
        let next_batch = max_batch_index.map(|i| i + 1).unwrap_or(0);
        self.sequencer.resume_at(user_txs, next_batch);
        Ok(())
    }

    fn load_receipts(&mut self, receipts_path: &Path) -> Result<(), NodeError> {
        for (number, line) in fs::read_to_string(receipts_path)?.lines().enumerate() {
            let record = ReceiptRecord::parse_line(line).ok_or_else(|| {
                NodeError::RecoveryDiverged(format!(
                    "receipts line {} unparseable",
                    number + 1
                ))
            })?;
            self.index
                .ingest_receipt(record.batch_index, record.tx_index, &record.receipt);
            self.receipts.push(record);
        }
        Ok(())
    }

    fn load_inbox(&mut self, inbox_path: &Path) -> Result<(), NodeError> {
        for line in fs::read_to_string(inbox_path)?.lines() {
            let Some((seq, env_hex)) = line.split_once(' ') else {
                continue;
            };
            let sequence: u64 = seq.parse().map_err(|_| {
                NodeError::RecoveryDiverged("inbox sequence unparseable".to_string())
            })?;
            let bytes = hex::decode(env_hex).map_err(|_| {
                NodeError::RecoveryDiverged("inbox envelope unparseable".to_string())
            })?;
            let envelope = <TransactionEnvelope as crate::codec::Decode>::decode_all(&bytes)
                .map_err(|_| {
                    NodeError::RecoveryDiverged("inbox envelope undecodable".to_string())
                })?;
            self.sequencer.restore(envelope, sequence);
        }
        Ok(())
    }

    fn rewrite_inbox(&self) -> Result<(), NodeError> {
        let (_, inbox_path, ..) = Self::paths(&self.config);
        let mut out = String::new();
        for entry in self.sequencer.pending() {
            out.push_str(&format!(
                "{} {}\n",
                entry.sequence,
                hex::encode(crate::codec::Encode::encode(&entry.envelope))
            ));
        }
        fs::write(&inbox_path, out)?;
        Ok(())
    }
}

/// Independent watcher: replays published batches with its own engine
/// instance, sharing only the DA log, and challenges any pending claim
/// whose declared roots diverge from honest re-execution.
pub struct Watcher {
    store: AuthenticatedStore,
    records_scanned: usize,
}

/// What the watcher found in one scanned record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WatchReport {
    /// Declared roots match honest re-execution.
    Honest { batch_index: u64 },
    /// Divergence found and a fraud proof was accepted.
    FraudProven {
        batch_index: u64,
        tx_index: u32,
        claim_id: u64,
    },
    /// Divergence found but no pending claim references the batch.
    DivergentUnclaimed { batch_index: u64 },
    /// Record does not extend the watcher's replayed state.
    SkippedStale { batch_index: u64 },
}

#[derive(Debug, Error)]
pub enum WatchError {
    #[error(transparent)]
    Da(#[from] DaLogError),

    #[error(transparent)]
    Engine(#[from] EngineError),

    #[error("fraud proof construction failed: {0}")]
    FraudProof(SettlementError),
}

impl Default for Watcher {
    fn default() -> Self {
        Self::new()
    }
}

impl Watcher {
    pub fn new() -> Watcher {
        Watcher {
            store: AuthenticatedStore::new(),
            records_scanned: 0,
        }
    }

    pub fn replayed_root(&self) -> StateRoot {
        self.store.root()
    }

    /// Scans records appended since the last call, replaying each and
    /// challenging divergent pending claims.
    pub fn scan(
        &mut self,
        da: &DaLog,
        settlement: &mut SettlementContract,
    ) -> Result<Vec<WatchReport>, WatchError> {
        let entries = da.read_batches()?;
        let mut reports = Vec::new();
        for entry in entries.iter().skip(self.records_scanned) {
            reports.push(self.inspect(&entry.batch, settlement)?);
            self.records_scanned += 1;
        }
        Ok(reports)
    }

    fn inspect(
        &mut self,
        batch: &Batch,
        settlement: &mut SettlementContract,
    ) -> Result<WatchReport, WatchError> {
        if batch.pre_root != self.store.root() {
            return Ok(WatchReport::SkippedStale {
                batch_index: batch.batch_index,
            });
        }
        let cp = self.store.checkpoint();
        let run = apply_batch(&mut self.store, &batch.envelopes)?;
        let honest_roots: Vec<StateRoot> = run
            .log
            .steps()
            .iter()
            .map(|s| s.intermediate_root)
            .collect();

        let divergence = honest_roots
            .iter()
            .zip(&batch.tx_roots)
            .position(|(honest, declared)| honest != declared)
            .or_else(|| {
                // Structural mismatch counts as divergence at the end.
                (honest_roots.len() != batch.tx_roots.len()
                    || run.post_root != batch.post_root)
                    .then_some(honest_roots.len().saturating_sub(1))
            });

        match divergence {
            None => {
                self.store.release(cp).expect("scan checkpoint is live");
                Ok(WatchReport::Honest {
                    batch_index: batch.batch_index,
                })
            }
            Some(tx_index) => {
                // Honest state must not advance over a record that should
                // be reverted.
                self.store.rollback(cp).expect("scan checkpoint is live");
                let claim = settlement
                    .pending_claims()
                    .find(|c| {
                        c.pre_root == batch.pre_root && c.commitment == batch.commitment
                    })
                    .map(|c| (c.id, c.tx_roots.clone()));
                let Some((claim_id, claimed_roots)) = claim else {
                    return Ok(WatchReport::DivergentUnclaimed {
                        batch_index: batch.batch_index,
                    });
                };
                let digests: Vec<Digest> = batch
                    .envelopes
                    .iter()
                    .map(crate::domain::envelope_digest)
                    .collect();
                let fraud = FraudProof {
                    claim_id,
                    tx_index: tx_index as u32,
                    correct_step: run.log.steps()[tx_index].clone(),
                    claimed_root: claimed_roots[tx_index],
                    envelope_inclusion: crate::domain::batch_inclusion_proof(
                        &digests,
                        tx_index as u32,
                    )
                    .expect("tx index within batch"),
                };
                settlement
                    .submit_fraud_proof(&fraud)
                    .map_err(WatchError::FraudProof)?;
                Ok(WatchReport::FraudProven {
                    batch_index: batch.batch_index,
                    tx_index: tx_index as u32,
                    claim_id,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{GrantEvent, Keypair, TransferEvent};
    use crate::hash::sha256;

    fn keypair(seed: u8) -> Keypair {
        Keypair::from_seed([seed; 32])
    }

    fn sample_config() -> NodeConfig {
        NodeConfig {
            data_dir: PathBuf::from("data"),
            proof_mode: ProofMode::Optimistic,
            challenge_window: 10,
            batch_max_size: 64,
            sequencer_key_file: PathBuf::from("keys/sequencer.key"),
            genesis: vec![GenesisGrant {
                address: keypair(1).address(),
                amount: u128::MAX / 2,
            }],
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config = sample_config();
        let text = config.to_toml_string();
        assert_eq!(NodeConfig::from_toml_str(&text).unwrap(), config);
    }

    #[test]
    fn config_rejects_bad_fields() {
        let mut bad_mode = sample_config();
        bad_mode.proof_mode = ProofMode::Replay;
        let text = bad_mode.to_toml_string().replace("replay", "zk");
        assert!(NodeConfig::from_toml_str(&text).is_err());

        let bad_amount = sample_config().to_toml_string().replace(
            &(u128::MAX / 2).to_string(),
            "not-a-number",
        );
        assert!(NodeConfig::from_toml_str(&bad_amount).is_err());
    }

    fn sample_receipt(events: Vec<Event>, status: TxStatus) -> Receipt {
        Receipt {
            envelope_digest: sha256(b"env"),
            status,
            events,
            pre_root: StateRoot(sha256(b"pre")),
            post_root: StateRoot(sha256(b"post")),
        }
    }

    #[test]
    fn receipt_lines_round_trip() {
        let records = [
            ReceiptRecord {
                batch_index: 3,
                tx_index: 1,
                receipt: sample_receipt(
                    vec![
                        Event::Transfer(TransferEvent {
                            from: keypair(1).address(),
                            to: keypair(2).address(),
                            amount: 12345,
                        }),
                        Event::Grant(GrantEvent {
                            to: keypair(3).address(),
                            amount: u128::MAX,
                        }),
                    ],
                    TxStatus::Success,
                ),
            },
            ReceiptRecord {
                batch_index: 0,
                tx_index: 0,
                receipt: sample_receipt(
                    Vec::new(),
                    TxStatus::Rejected(RejectReason::InsufficientFunds),
                ),
            },
        ];
        for record in records {
            let line = record.to_line();
            assert_eq!(ReceiptRecord::parse_line(&line), Some(record));
        }
        assert_eq!(ReceiptRecord::parse_line("not a receipt"), None);
    }

    fn indexed(events: &[(u64, u32, Vec<Event>)]) -> EventIndex {
        let mut index = EventIndex::new();
        for (batch, tx, events) in events {
            index.ingest_receipt(
                *batch,
                *tx,
                &sample_receipt(events.clone(), TxStatus::Success),
            );
        }
        index
    }

    #[test]
    fn query_filters_by_address_kind_and_range() {
        let a = keypair(1).address();
        let b = keypair(2).address();
        let c = keypair(3).address();
        let transfer_ab = Event::Transfer(TransferEvent {
            from: a,
            to: b,
            amount: 1,
        });
        let transfer_bc = Event::Transfer(TransferEvent {
            from: b,
            to: c,
            amount: 2,
        });
        let grant_a = Event::Grant(GrantEvent {
            to: a,
            amount: 3,
        });
        let index = indexed(&[
            (0, 0, vec![grant_a]),
            (1, 0, vec![transfer_ab]),
            (2, 1, vec![transfer_bc]),
        ]);

        let by_b = index.query(&EventFilter {
            address: Some(b),
            ..Default::default()
        });
        assert_eq!(by_b.len(), 2);
        assert_eq!(by_b[0].batch_index, 1);
        assert_eq!(by_b[1].batch_index, 2);

        let grants = index.query(&EventFilter {
            kind: Some(EventKind::Grant),
            ..Default::default()
        });
        assert_eq!(grants.len(), 1);
        assert_eq!(grants[0].event, grant_a);

        let ranged = index.query(&EventFilter {
            batch_range: Some((1, 1)),
            ..Default::default()
        });
        assert_eq!(ranged.len(), 1);
        assert_eq!(ranged[0].event, transfer_ab);

        let disjoint = index.query(&EventFilter {
            address: Some(keypair(9).address()),
            ..Default::default()
        });
        assert!(disjoint.is_empty());
    }

    #[test]
    fn query_results_are_position_ordered() {
        let a = keypair(1).address();
        let grant = Event::Grant(GrantEvent {
            to: a,
            amount: 1,
        });
        let index = indexed(&[
            (2, 0, vec![grant]),
            (0, 1, vec![grant, grant]),
            (0, 0, vec![grant]),
        ]);
        let all = index.query(&EventFilter::default());
        let positions: Vec<Position> = all
            .iter()
            .map(|e| (e.batch_index, e.tx_index, e.ordinal))
            .collect();
        assert_eq!(
            positions,
            vec![(0, 0, 0), (0, 1, 0), (0, 1, 1), (2, 0, 0)]
        );
    }
}
