//! `veristate` CLI: drives a node over a data directory described by a
//! single TOML config file.
//!
//! Exit codes: 0 on success/accept, 1 on reject or verification failure,
//! 2 on usage or configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use veristate::codec::Decode;
use veristate::domain::{Address, BatchCommitment, TransactionEnvelope};
use veristate::hash::Digest;
use veristate::node::{
    load_keypair, write_key_file, EventFilter, FaultSpec, Node, NodeConfig, ProofMode,
    WatchReport, Watcher,
};
use veristate::prover::Proof;
use veristate::settlement::SettlementContract;
use veristate::store::StateRoot;

#[derive(Parser)]
#[command(name = "veristate", version, about = "Verifiable state machine node")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Path to the node config file.
    #[arg(long, default_value = "veristate.toml")]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an Ed25519 key file (32-byte hex seed).
    Keygen {
        /// Where to write the key file.
        #[arg(long)]
        out: PathBuf,
        /// Optional fixed seed (64 hex chars) for reproducible keys.
        #[arg(long)]
        seed: Option<String>,
    },
    /// Sign a transfer and submit it to the node's mempool.
    SubmitTx {
        #[command(flatten)]
        config: ConfigArg,
        /// Sender key file; required unless --file is given.
        #[arg(long, required_unless_present = "file")]
        key: Option<PathBuf>,
        /// Recipient address (64 hex chars).
        #[arg(long, required_unless_present = "file")]
        to: Option<String>,
        /// Amount to transfer.
        #[arg(long, required_unless_present = "file")]
        amount: Option<u128>,
        /// Sender nonce (must equal the stored nonce; starts at 0).
        #[arg(long, default_value_t = 0)]
        nonce: u64,
        /// Submit a pre-built envelope from a file instead of flags.
        #[arg(long, conflicts_with_all = ["key", "to", "amount"])]
        file: Option<PathBuf>,
    },
    /// Seal one batch from the mempool and settle it.
    Seal {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Run the pipeline until the mempool is empty.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        /// Corrupt the declared roots of this batch index before claiming
        /// it (optimistic mode only); the watcher must revert it.
        #[arg(long)]
        inject_fault: Option<u64>,
    },
    /// Independently replay the DA log and audit declared roots.
    Watch {
        #[command(flatten)]
        config: ConfigArg,
        /// DA log path; defaults to <data_dir>/da.log.
        #[arg(long)]
        da_log: Option<PathBuf>,
    },
    /// Verify a proof file offline against an (S', S, C) triple.
    VerifyProof {
        /// Path to a .vproof file.
        #[arg(long)]
        proof: PathBuf,
        /// Claimed updated state root S' (64 hex chars).
        #[arg(long)]
        post: String,
        /// Claimed previous state root S (64 hex chars).
        #[arg(long)]
        pre: String,
        /// Batch commitment digest (64 hex chars).
        #[arg(long)]
        commitment: String,
        /// Batch commitment transaction count.
        #[arg(long)]
        tx_count: u32,
    },
    /// Query indexed events.
    Query {
        #[command(flatten)]
        config: ConfigArg,
        /// Only events touching this address.
        #[arg(long)]
        address: Option<String>,
        /// Only events of this kind (transfer | grant).
        #[arg(long)]
        kind: Option<String>,
        /// Inclusive start of the batch range.
        #[arg(long)]
        from_batch: Option<u64>,
        /// Inclusive end of the batch range.
        #[arg(long)]
        to_batch: Option<u64>,
    },
    /// Write the current state as a snapshot dump.
    DumpState {
        #[command(flatten)]
        config: ConfigArg,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure modes mapped to exit codes.
enum CliError {
    /// Exit 1: a well-formed request was rejected.
    Rejected(String),
    /// Exit 2: bad arguments, config, or environment.
    Usage(String),
}

impl CliError {
    fn report(self) -> ExitCode {
        match self {
            CliError::Rejected(msg) => {
                eprintln!("rejected: {msg}");
                ExitCode::from(1)
            }
            CliError::Usage(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
        }
    }
}

fn usage<E: std::fmt::Display>(err: E) -> CliError {
    CliError::Usage(err.to_string())
}

fn parse_digest(field: &str, value: &str) -> Result<Digest, CliError> {
    Digest::from_hex(value)
        .ok_or_else(|| CliError::Usage(format!("{field} must be 64 hex characters")))
}

fn load_node(config: &ConfigArg) -> Result<Node, CliError> {
    let config = NodeConfig::load(&config.config).map_err(usage)?;
    Node::open(config).map_err(|e| CliError::Rejected(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => err.report(),
    }
}

fn run(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Keygen {
            out,
            seed,
        } => {
            let seed = match seed {
                Some(hex_seed) => hex::decode(hex_seed)
                    .ok()
                    .and_then(|b| <[u8; 32]>::try_from(b).ok())
                    .ok_or_else(|| CliError::Usage("--seed must be 64 hex characters".into()))?,
                None => rand::random(),
            };
            let keypair = write_key_file(&out, seed).map_err(usage)?;
            println!("public-key {}", hex::encode(keypair.public_key()));
            println!("address {}", keypair.address());
            Ok(ExitCode::SUCCESS)
        }
        Command::SubmitTx {
            config,
            key,
            to,
            amount,
            nonce,
            file,
        } => {
            let envelope = match file {
                Some(path) => {
                    let bytes = std::fs::read(&path).map_err(usage)?;
                    TransactionEnvelope::decode_all(&bytes).map_err(usage)?
                }
                None => {
                    let keypair = load_keypair(&key.unwrap()).map_err(usage)?;
                    let to = Address::from_hex(&to.unwrap())
                        .ok_or_else(|| CliError::Usage("--to must be 64 hex characters".into()))?;
                    keypair.signed_transfer(to, amount.unwrap(), nonce)
                }
            };
            let mut node = load_node(&config)?;
            let pc = node
                .submit(envelope)
                .map_err(|e| CliError::Rejected(e.to_string()))?;
            println!("envelope {}", pc.envelope_digest);
            println!("sequence {}", pc.sequence);
            println!("preconfirmation {}", hex::encode(pc.signature));
            Ok(ExitCode::SUCCESS)
        }
        Command::Seal {
            config,
        } => {
            let mut node = load_node(&config)?;
            let outcome = node
                .seal_and_settle()
                .map_err(|e| CliError::Rejected(e.to_string()))?;
            print_outcome(&outcome);
            println!("canonical-root {}", node.canonical_root());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            config,
            inject_fault,
        } => {
            let mut node = load_node(&config)?;
            if let Some(batch_index) = inject_fault {
                if node.config().proof_mode != ProofMode::Optimistic {
                    return Err(CliError::Usage(
                        "--inject-fault requires proof_mode = \"optimistic\"".into(),
                    ));
                }
                node.inject_fault(FaultSpec {
                    batch_index,
                    tx_index: None,
                });
            }
            let outcomes = node
                .run()
                .map_err(|e| CliError::Rejected(e.to_string()))?;
            for outcome in &outcomes {
                print_outcome(outcome);
            }
            println!("canonical-root {}", node.canonical_root());
            Ok(ExitCode::SUCCESS)
        }
        Command::Watch {
            config,
            da_log,
        } => {
            let node_config = NodeConfig::load(&config.config).map_err(usage)?;
            let da_path = da_log.unwrap_or_else(|| node_config.data_dir.join("da.log"));
            let da = veristate::sequencer::DaLog::open_existing(&da_path)
                .map_err(|e| CliError::Rejected(e.to_string()))?;
            // Audit-only: replay against a throwaway contract with no
            // pending claims.
            let mut settlement = SettlementContract::new(node_config.challenge_window);
            let mut watcher = Watcher::new();
            let reports = watcher
                .scan(&da, &mut settlement)
                .map_err(|e| CliError::Rejected(e.to_string()))?;
            let mut divergent = 0u32;
            for report in &reports {
                match report {
                    WatchReport::Honest {
                        batch_index,
                    } => println!("batch {batch_index} honest"),
                    WatchReport::FraudProven {
                        batch_index,
                        tx_index,
                        claim_id,
                    } => {
                        divergent += 1;
                        println!(
                            "batch {batch_index} fraud proven at tx {tx_index} (claim {claim_id})"
                        );
                    }
                    WatchReport::DivergentUnclaimed {
                        batch_index,
                    } => {
                        divergent += 1;
                        println!("batch {batch_index} declared roots diverge from replay");
                    }
                    WatchReport::SkippedStale {
                        batch_index,
                    } => println!("batch {batch_index} skipped (superseded record)"),
                }
            }
            println!("replayed-root {}", watcher.replayed_root());
            if divergent > 0 {
                return Err(CliError::Rejected(format!(
                    "{divergent} divergent record(s) found"
                )));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyProof {
            proof,
            post,
            pre,
            commitment,
            tx_count,
        } => {
            let proof = Proof::read_file(&proof).map_err(usage)?;
            let s_prime = StateRoot(parse_digest("--post", &post)?);
            let s = StateRoot(parse_digest("--pre", &pre)?);
            let c = BatchCommitment {
                digest: parse_digest("--commitment", &commitment)?,
                tx_count,
            };
            match veristate::verify(s_prime, s, c, &proof) {
                Ok(()) => {
                    println!("accept ({})", proof.variant_name());
                    Ok(ExitCode::SUCCESS)
                }
                Err(reason) => Err(CliError::Rejected(reason.to_string())),
            }
        }
        Command::Query {
            config,
            address,
            kind,
            from_batch,
            to_batch,
        } => {
            let node = load_node(&config)?;
            let filter = EventFilter {
                address: match address {
                    Some(a) => Some(Address::from_hex(&a).ok_or_else(|| {
                        CliError::Usage("--address must be 64 hex characters".into())
                    })?),
                    None => None,
                },
                kind: match kind {
                    Some(k) => Some(
                        veristate::domain::EventKind::from_name(&k)
                            .ok_or_else(|| CliError::Usage(format!("unknown kind {k:?}")))?,
                    ),
                    None => None,
                },
                batch_range: match (from_batch, to_batch) {
                    (None, None) => None,
                    (lo, hi) => Some((lo.unwrap_or(0), hi.unwrap_or(u64::MAX))),
                },
            };
            for ev in node.query(&filter) {
                let body = match ev.event {
                    veristate::domain::Event::Transfer(e) => {
                        format!("transfer:{}:{}:{}", e.from, e.to, e.amount)
                    }
                    veristate::domain::Event::Grant(e) => format!("grant:{}:{}", e.to, e.amount),
                };
                println!("{} {} {} {}", ev.batch_index, ev.tx_index, ev.ordinal, body);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::DumpState {
            config,
            out,
        } => {
            let node = load_node(&config)?;
            match out {
                Some(path) => {
                    let file = std::fs::File::create(path).map_err(usage)?;
                    node.dump_state(file).map_err(usage)?;
                }
                None => {
                    let stdout = std::io::stdout();
                    node.dump_state(stdout.lock()).map_err(usage)?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn print_outcome(outcome: &veristate::node::BatchOutcome) {
    let rejected = outcome
        .receipts
        .iter()
        .filter(|r| !matches!(r.status, veristate::TxStatus::Success))
        .count();
    println!(
        "batch {} settled: {} tx ({} rejected){} post-root {}",
        outcome.batch_index,
        outcome.receipts.len(),
        rejected,
        if outcome.fault_reverted {
            ", injected fault reverted"
        } else {
            ""
        },
        outcome.post_root
    );
}
