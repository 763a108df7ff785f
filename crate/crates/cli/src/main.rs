use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};
use qds_core::finite_key::SecurityTargets;
use qds_core::protocol::{round_signature_length, select_positions, sign, Role};

use qds_netcli::config::{planned_message_bits, RunConfig};
use qds_netcli::exit::{exit_code, ExitKind, Failure};
use qds_netcli::files::{self, encode_bundle, read_bundle, read_json, read_store, write_atomic, write_json, write_store};
use qds_netcli::pipeline::{self, analyze_record, outcome_failure, render_summary, session_seeds};
use qds_netcli::reference::LinkRecord;
use qds_netcli::reproduce::{render, reproduce_table};

/// Quantum digital signature toolkit: finite-key analysis, network
/// simulation, signing and verification.
///
/// Exit codes: 0 success, 1 other error, 2 malformed input, 3 link insecure,
/// 4 simulation failure, 5 reconciliation failure, 6 signature rejected,
/// 7 key exhausted or positions already consumed, 8 corrupt store or bundle,
/// 9 signing session aborted. Set QDS_LOG (error..trace) for diagnostics.
#[derive(Parser)]
#[command(name = "qds", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-key analysis of one link file; prints or writes a security report.
    Analyze {
        /// JSON with `intensity`, `tally` and optionally `targets`.
        file: PathBuf,
        /// Overall ε target; together with --message-bits replaces the file's targets.
        #[arg(long, requires = "message_bits")]
        eps_target: Option<f64>,
        #[arg(long, requires = "eps_target")]
        message_bits: Option<u64>,
        /// Measured error-correction leakage in bits.
        #[arg(long, requires = "eps_target")]
        lambda_ec: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full run: both links, reconciliation, analysis, distribution and one signing session.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Recomputes the bundled reference links and compares with the published values.
    ReproduceTable {
        /// Also write the comparison as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Key generation and distribution only; writes the three key stores.
    KeygenSim {
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Signs a document with Alice's store, consuming 2L key bits.
    Sign {
        message: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Session file from keygen-sim supplying L.
        #[arg(long, required_unless_present = "len_bits")]
        session: Option<PathBuf>,
        /// Signature length; rounded up to a multiple of 8.
        #[arg(long)]
        len_bits: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verifies a bundle as Bob then Charlie, consuming the announced bits of both stores.
    Verify {
        bundle: PathBuf,
        #[arg(long)]
        bob_store: PathBuf,
        #[arg(long)]
        charlie_store: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QDS_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze { file, eps_target, message_bits, lambda_ec, out } => {
            analyze(&file, eps_target.zip(message_bits), lambda_ec, out.as_deref())
        }
        Command::Simulate { config, out_dir } => simulate(&config, &out_dir),
        Command::ReproduceTable { out } => reproduce(out.as_deref()),
        Command::KeygenSim { config, out_dir } => keygen(&config, &out_dir),
        Command::Sign { message, store, session, len_bits, seed, out } => {
            sign_file(&message, &store, session.as_deref(), len_bits, seed, &out)
        }
        Command::Verify { bundle, bob_store, charlie_store } => verify(&bundle, &bob_store, &charlie_store),
    }
}

fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_json(p, value).map_err(Failure::from)?,
        None => print!("{}", String::from_utf8(files::to_json(value)).expect("JSON is UTF-8")),
    }
    Ok(())
}

fn analyze(file: &Path, targets: Option<(f64, u64)>, lambda_ec: Option<f64>, out: Option<&Path>) -> Result<()> {
    let rec: LinkRecord = read_json(file).map_err(Failure::from)?;
    let targets = targets.map(|(eps, m)| SecurityTargets { lambda_ec_bits: lambda_ec, ..SecurityTargets::new(eps, m) });
    let report = analyze_record(&rec, targets).with_context(|| format!("analyzing {}", file.display()))?;
    emit_json(&report, out)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn simulate(config: &Path, out_dir: &Path) -> Result<()> {
    let (cfg, base) = RunConfig::load(config)?;
    let message = cfg
        .read_message(&base)?
        .ok_or_else(|| Failure::new(ExitKind::Parse, "simulate needs message_path in the config"))?;
    let outcome = pipeline::simulate(&cfg, &message)?;
    create_dir(out_dir)?;
    write_json(&out_dir.join("outcome.json"), &outcome).map_err(Failure::from)?;
    write_json(&out_dir.join("report_bob.json"), &outcome.session.bob.report).map_err(Failure::from)?;
    write_json(&out_dir.join("report_charlie.json"), &outcome.session.charlie.report).map_err(Failure::from)?;
    let summary = render_summary(&outcome);
    write_atomic(&out_dir.join("summary.txt"), summary.as_bytes()).map_err(Failure::from)?;
    print!("{summary}");
    match outcome_failure(&outcome) {
        Some(f) => Err(f.into()),
        None => Ok(()),
    }
}

fn reproduce(out: Option<&Path>) -> Result<()> {
    let report = reproduce_table();
    print!("{}", render(&report));
    if let Some(p) = out {
        write_json(p, &report).map_err(Failure::from)?;
    }
    if !report.all_pass {
        return Err(Failure::new(ExitKind::Generic, "some rows are outside tolerance").into());
    }
    Ok(())
}

fn keygen(config: &Path, out_dir: &Path) -> Result<()> {
    let (cfg, base) = RunConfig::load(config)?;
    let message = cfg.read_message(&base)?;
    let m = planned_message_bits(&cfg, message.as_deref())?;
    let (session, dist) = pipeline::keygen(&cfg, m)?;
    create_dir(out_dir)?;
    for (name, store) in [("alice", &dist.alice), ("bob", &dist.bob), ("charlie", &dist.charlie)] {
        write_store(&out_dir.join(format!("{name}.store")), store).map_err(Failure::from)?;
    }
    write_json(&out_dir.join("session.json"), &session).map_err(Failure::from)?;
    println!("L = {} bits, eps = {:.3e}, {} key bits per party", session.len_bits, session.eps, session.key_bits);
    Ok(())
}

/// The fields of a session file that `sign` needs.
#[derive(serde::Deserialize)]
struct SessionInfo {
    len_bits: u64,
    message_len_bits: u64,
}

fn sign_file(message: &Path, store_path: &Path, session: Option<&Path>, len_bits: Option<u64>, seed: u64, out: &Path) -> Result<()> {
    let msg = files::read_bytes(message).map_err(Failure::from)?;
    if msg.is_empty() {
        return Err(Failure::new(ExitKind::Parse, "message is empty").into());
    }
    let planned: Option<SessionInfo> = session.map(read_json).transpose().map_err(Failure::from)?;
    let len = match (len_bits, &planned) {
        (Some(l), _) => round_signature_length(l.max(1)),
        (None, Some(s)) => s.len_bits,
        (None, None) => unreachable!("clap requires one of them"),
    };
    if let Some(s) = &planned {
        if 8 * msg.len() as u64 > s.message_len_bits {
            warn!("message is {} bits, longer than the {} bits L was derived for", 8 * msg.len(), s.message_len_bits);
        }
    }
    let mut store = read_store(store_path).map_err(Failure::from)?;
    if store.owner != Role::Alice {
        return Err(Failure::new(ExitKind::Malformed, format!("{} is not the signer's store", store_path.display())).into());
    }
    let (position_seed, p_seed) = session_seeds(seed, store.len() - store.available());
    let ann = select_positions(&mut store, len as usize, position_seed).map_err(pipeline::protocol_failure)?;
    let (x, y) = store.split(&ann);
    let bundle = sign(&msg, &x, &y, p_seed).map_err(pipeline::protocol_failure)?;
    // the bundle goes out first: a crash between the two writes wastes key
    // bits but never reuses them
    write_atomic(out, &encode_bundle(&bundle, &ann)).map_err(Failure::from)?;
    write_store(store_path, &store).map_err(Failure::from)?;
    info!("signed {} bytes with L = {len}; {} key bits left", msg.len(), store.available());
    println!("signed: L = {len} bits, {} unused key bits remain", store.available());
    Ok(())
}

fn verify(bundle_path: &Path, bob_path: &Path, charlie_path: &Path) -> Result<()> {
    let mut bob = read_store(bob_path).map_err(Failure::from)?;
    let mut charlie = read_store(charlie_path).map_err(Failure::from)?;
    for (s, role, p) in [(&bob, Role::Bob, bob_path), (&charlie, Role::Charlie, charlie_path)] {
        if s.owner != role {
            return Err(Failure::new(ExitKind::Malformed, format!("{} is not {role}'s store", p.display())).into());
        }
    }
    let (bundle, ann) = read_bundle(bundle_path).map_err(Failure::from)?;
    let (at_bob, at_charlie) = pipeline::verify_with_stores(&bundle, &ann, &mut bob, &mut charlie)?;
    files::write_atomic_all(&[(bob_path, files::encode_store(&bob)), (charlie_path, files::encode_store(&charlie))])
        .map_err(Failure::from)?;
    println!("Bob: {}", pipeline::decision_text(&Some(at_bob.clone())));
    println!("Charlie: {}", pipeline::decision_text(&Some(at_charlie.clone())));
    if !(at_bob.is_accept() && at_charlie.is_accept()) {
        return Err(Failure::new(ExitKind::Reject, "signature rejected").into());
    }
    Ok(())
}
