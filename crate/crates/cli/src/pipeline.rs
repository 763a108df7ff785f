//! The stages behind the commands: link simulation, reconciliation,
//! finite-key analysis, distribution and one signing session.

use std::time::Duration;

use log::{debug, info};
use qds_core::cascade::{reconcile_with_transcript, CascadeError, Transcript, ReconciliationConfig, ReconciliationResult, Sender};
use qds_core::channel::{simulate_kgp_with, SimOptions};
use qds_core::finite_key::{
    min_signature_length, DetectionTally, FiniteKeyError, LinkBounds, SecurityReport, SecurityTargets,
};
use qds_core::protocol::{
    run_distribution, run_messaging, run_messaging_on, truncate_to_common, AliceBehaviour, Behaviours, BobBehaviour,
    Decision, Distribution, KeyStore, MessagingOutcome, ProtocolError, ReconciledLink, RunStatus, SigningRequest,
    TranscriptEntry,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{LinkConfig, RunConfig, TransportKind};
use crate::exit::{ExitKind, Failure};
use crate::files::sha256_hex;
use crate::reference::LinkRecord;
use crate::transport::{loopback_network, reconcile_over_socket};
use crate::wire::{cascade_frame, protocol_frame};

const SESSION_TIMEOUT: Duration = Duration::from_secs(60);

/// Deterministic 64-bit seed for one purpose, derived from a base seed.
pub fn derive_seed(label: &str, seed: u64, counter: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update(seed.to_be_bytes());
    h.update(counter.to_be_bytes());
    u64::from_be_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// Position and digest-key seeds of a signing session. Mixing in the count of
/// already consumed bits keeps repeated sessions from one base seed distinct.
pub fn session_seeds(seed: u64, used_bits: usize) -> (u64, u64) {
    (derive_seed("positions", seed, used_bits as u64), derive_seed("digest-key", seed, used_bits as u64))
}

pub fn finite_key_failure(e: FiniteKeyError) -> Failure {
    let kind = match e {
        FiniteKeyError::LinkInsecure { .. } | FiniteKeyError::InsufficientData(_) => ExitKind::LinkInsecure,
        _ => ExitKind::Parse,
    };
    Failure::new(kind, e.to_string())
}

pub fn protocol_failure(e: ProtocolError) -> Failure {
    let kind = match e {
        ProtocolError::KeyExhausted { .. } | ProtocolError::PositionConsumed(_) => ExitKind::KeyExhausted,
        ProtocolError::PositionOutOfRange { .. } | ProtocolError::DuplicatePosition(_) | ProtocolError::InvalidArgument(_) => {
            ExitKind::Malformed
        }
        ProtocolError::DistributionFailure(_) => ExitKind::Reconciliation,
        ProtocolError::Hash(_) | ProtocolError::Transport(_) | ProtocolError::UnexpectedMessage(_) => ExitKind::Aborted,
    };
    Failure::new(kind, e.to_string())
}

fn cascade_failure(link: &str, e: CascadeError) -> Failure {
    Failure::new(ExitKind::Reconciliation, format!("{link} link: {e}"))
}

/// `analyze`: minimal signature length and its report for one link file.
/// Explicit arguments override the file's targets.
pub fn analyze_record(rec: &LinkRecord, targets: Option<SecurityTargets>) -> Result<SecurityReport, Failure> {
    let targets = targets
        .or(rec.targets)
        .ok_or_else(|| Failure::new(ExitKind::Parse, "no security targets in the file or on the command line"))?;
    rec.tally.validate().map_err(finite_key_failure)?;
    rec.intensity.validate().map_err(finite_key_failure)?;
    let (_, report) = min_signature_length(&rec.tally, &rec.intensity, &targets).map_err(finite_key_failure)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CascadeSummary {
    pub messages: usize,
    pub frame_bytes: usize,
    pub parity_requests: usize,
    pub parity_bits: u64,
    pub tag_bits: u32,
    /// SHA-256 of all frames in order; equal transcripts hash equal.
    pub sha256: String,
}

pub fn summarize_cascade(t: &Transcript) -> CascadeSummary {
    let mut h = Sha256::new();
    let mut s = CascadeSummary { messages: t.len(), frame_bytes: 0, parity_requests: 0, parity_bits: 0, tag_bits: 0, sha256: String::new() };
    for (from, m) in t {
        let bytes = cascade_frame(m).encode();
        s.frame_bytes += bytes.len();
        h.update(&bytes);
        match m {
            qds_core::cascade::CascadeMessage::ParityRequest { .. } => s.parity_requests += 1,
            qds_core::cascade::CascadeMessage::ParityAnswer { parities } => s.parity_bits += parities.len() as u64,
            qds_core::cascade::CascadeMessage::TagExchange { tag } if *from == Sender::Corrector => s.tag_bits = tag.bits,
            _ => {}
        }
    }
    s.sha256 = hex::encode(h.finalize());
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkSummary {
    pub tally: DetectionTally,
    pub sifted_bits: usize,
    pub corrected_errors: usize,
    pub reconciliation_rounds: usize,
    pub verified: bool,
    /// Measured λ_EC: parity bits disclosed by reconciliation.
    pub lambda_ec_bits: u64,
    pub leakage_bits: u64,
    pub efficiency: f64,
    /// Shortest secure signature length of this link alone.
    pub min_len_bits: u64,
    /// Bounds at the session's signature length.
    pub report: SecurityReport,
    pub cascade: CascadeSummary,
}

struct LinkRun {
    summary: LinkSummary,
    link: ReconciledLink,
    bounds: LinkBounds,
    targets: SecurityTargets,
}

fn run_link(name: &str, cfg: &LinkConfig, run: &RunConfig, message_bits: u64) -> Result<LinkRun, Failure> {
    let options = SimOptions { sampler: cfg.sampler, workers: None };
    let batch = simulate_kgp_with(cfg.n_pulses, &cfg.intensity, &cfg.channel, cfg.seed, options)
        .map_err(|e| Failure::new(ExitKind::Simulation, format!("{name} link: {e}")))?;
    let tally = batch.tally;
    info!("{name}: {} sifted Z bits, E_Z = {:.4}%", batch.alice_bits.len(), 100.0 * tally.e_z());

    let rc = ReconciliationConfig {
        round_key_len: run.reconciliation.round_key_len,
        passes: run.reconciliation.passes,
        eps_cor: run.targets.eps_cor,
        seed: derive_seed("cascade", cfg.seed, 0),
        qber_estimate: tally.e_z(),
    };
    // Alice corrects her measured bits towards the sender's
    let (alice, peer, transcript) = match run.transport {
        TransportKind::InProcess => reconcile_with_transcript(&batch.alice_bits, &batch.sender_bits, &rc),
        TransportKind::Socket => reconcile_over_socket(&batch.alice_bits, &batch.sender_bits, &rc),
    }
    .map_err(|e| cascade_failure(name, e))?;
    if !(alice.verified && peer.verified) {
        return Err(Failure::new(ExitKind::Reconciliation, format!("{name} link: verification tags differ")));
    }
    debug!("{name}: {} parity bits, {} corrections", alice.parity_bits, alice.flipped.len());

    let targets = run.security_targets(message_bits, alice.parity_bits as f64);
    let (min_len, report) = min_signature_length(&tally, &cfg.intensity, &targets)
        .map_err(|e| Failure::new(finite_key_failure(e.clone()).kind, format!("{name} link: {e}")))?;
    let bounds = LinkBounds::new(&tally, &cfg.intensity, &targets).map_err(finite_key_failure)?;
    info!("{name}: L = {min_len}, eps = {:.3e}", report.eps);

    let summary = LinkSummary {
        tally,
        sifted_bits: batch.alice_bits.len(),
        corrected_errors: alice.flipped.len(),
        reconciliation_rounds: alice.rounds_used,
        verified: true,
        lambda_ec_bits: alice.parity_bits,
        leakage_bits: alice.leakage_bits,
        efficiency: efficiency(&alice, tally.e_z()),
        min_len_bits: min_len,
        report,
        cascade: summarize_cascade(&transcript),
    };
    Ok(LinkRun { summary, link: ReconciledLink::from_results(&alice, &peer), bounds, targets })
}

fn efficiency(r: &ReconciliationResult, e: f64) -> f64 {
    if e > 0.0 {
        r.efficiency(e)
    } else {
        0.0
    }
}

/// Result of the distribution stage: both link analyses at the common length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Session {
    /// Signature length: the larger of the two links' minima.
    pub len_bits: u64,
    /// Overall ε at `len_bits`: the worse of the two links.
    pub eps: f64,
    /// Full-document signatures per second, limited by the slower link.
    pub signature_rate_tps: f64,
    pub message_len_bits: u64,
    /// Key bits held by each party after truncation to the common length.
    pub key_bits: usize,
    pub transport: TransportKind,
    pub bob: LinkSummary,
    pub charlie: LinkSummary,
}

pub fn keygen(run: &RunConfig, message_bits: u64) -> Result<(Session, Distribution), Failure> {
    let b = run_link("Bob", &run.links.bob, run, message_bits)?;
    let c = run_link("Charlie", &run.links.charlie, run, message_bits)?;
    let len_bits = b.summary.min_len_bits.max(c.summary.min_len_bits);

    let mut links = [b, c];
    for l in &mut links {
        let eval = l.bounds.evaluate(len_bits, &l.targets).map_err(finite_key_failure)?;
        l.summary.report = l.bounds.report(&eval, l.summary.tally.accumulation_time_s);
    }
    let [mut b, mut c] = links;
    let eps = b.summary.report.eps.max(c.summary.report.eps);
    let rate = b.summary.report.signature_rate_tps.min(c.summary.report.signature_rate_tps);

    truncate_to_common(&mut b.link, &mut c.link);
    let dist = run_distribution(&b.link, &c.link).map_err(protocol_failure)?;
    let key_bits = dist.alice.len();
    info!("distribution: {key_bits} key bits per party, L = {len_bits}, eps = {eps:.3e}");

    let session = Session {
        len_bits,
        eps,
        signature_rate_tps: rate,
        message_len_bits: message_bits,
        key_bits,
        transport: run.transport,
        bob: b.summary,
        charlie: c.summary,
    };
    Ok((session, dist))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MessageSummary {
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub from: String,
    pub to: String,
    pub bytes: usize,
    pub sha256: String,
}

pub fn summarize_messages(log: &[TranscriptEntry]) -> Vec<MessageSummary> {
    log.iter()
        .map(|e| {
            let bytes = protocol_frame(&e.message).encode();
            MessageSummary {
                kind: e.message.kind(),
                from: e.from.to_string(),
                to: e.to.to_string(),
                bytes: bytes.len(),
                sha256: sha256_hex(&bytes),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartyTranscripts {
    pub alice: Vec<MessageSummary>,
    pub bob: Vec<MessageSummary>,
    pub charlie: Vec<MessageSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    /// `completed` or the abort reason.
    pub status: String,
    pub bob: Option<Decision>,
    pub charlie: Option<Decision>,
    pub accepted: bool,
    pub message_len_bits: u64,
    pub message_sha256: String,
    pub len_bits: u64,
    pub eps: f64,
    pub signature_rate_tps: f64,
    pub lambda_ec_bits: LinkPair<u64>,
    pub session: Session,
    pub transcripts: PartyTranscripts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LinkPair<T> {
    pub bob: T,
    pub charlie: T,
}

pub fn behaviours(run: &RunConfig) -> Behaviours {
    Behaviours {
        alice: run.adversary.alice_corrupt_seed.map_or(AliceBehaviour::Honest, |seed| AliceBehaviour::CorruptKeys { seed }),
        bob: if run.adversary.bob_tamper { BobBehaviour::TamperForward } else { BobBehaviour::Honest },
    }
}

/// One signing session of `message` over the configured transport.
pub fn sign_session(run: &RunConfig, dist: &mut Distribution, len_bits: u64, message: &[u8]) -> Result<MessagingOutcome, Failure> {
    let (position_seed, p_seed) = session_seeds(run.signing_seed, dist.alice.len() - dist.alice.available());
    let req = SigningRequest { message: message.to_vec(), len_bits: len_bits as usize, position_seed, p_seed };
    let b = behaviours(run);
    match run.transport {
        TransportKind::InProcess => run_messaging(dist, &req, b),
        TransportKind::Socket => {
            let endpoints = loopback_network(SESSION_TIMEOUT).map_err(protocol_failure)?;
            run_messaging_on(dist, &req, b, endpoints)
        }
    }
    .map_err(protocol_failure)
}

pub fn simulate(run: &RunConfig, message: &[u8]) -> Result<Outcome, Failure> {
    if message.is_empty() {
        return Err(Failure::new(ExitKind::Parse, "message is empty"));
    }
    let m = 8 * message.len() as u64;
    let (session, mut dist) = keygen(run, m)?;
    let out = sign_session(run, &mut dist, session.len_bits, message)?;
    let status = match &out.status {
        RunStatus::Completed => "completed".to_string(),
        RunStatus::Aborted(why) => format!("aborted: {why}"),
    };
    let accepted = out.bob.as_ref().is_some_and(Decision::is_accept) && out.charlie.as_ref().is_some_and(Decision::is_accept);
    Ok(Outcome {
        status,
        bob: out.bob,
        charlie: out.charlie,
        accepted,
        message_len_bits: m,
        message_sha256: sha256_hex(message),
        len_bits: session.len_bits,
        eps: session.eps,
        signature_rate_tps: session.signature_rate_tps,
        lambda_ec_bits: LinkPair { bob: session.bob.lambda_ec_bits, charlie: session.charlie.lambda_ec_bits },
        transcripts: PartyTranscripts {
            alice: summarize_messages(&out.transcripts.alice),
            bob: summarize_messages(&out.transcripts.bob),
            charlie: summarize_messages(&out.transcripts.charlie),
        },
        session,
    })
}

/// The failure an outcome maps to, if any.
pub fn outcome_failure(o: &Outcome) -> Option<Failure> {
    if o.status != "completed" {
        return Some(Failure::new(ExitKind::Aborted, o.status.clone()));
    }
    if !o.accepted {
        return Some(Failure::new(
            ExitKind::Reject,
            format!("signature rejected (Bob: {}, Charlie: {})", decision_text(&o.bob), decision_text(&o.charlie)),
        ));
    }
    None
}

pub fn decision_text(d: &Option<Decision>) -> String {
    match d {
        None => "no decision".into(),
        Some(Decision::Accept) => "accept".into(),
        Some(Decision::Reject(r)) => format!("reject ({r:?})"),
    }
}

/// Human-readable summary of a finished run.
pub fn render_summary(o: &Outcome) -> String {
    let s = &o.session;
    let link = |name: &str, l: &LinkSummary| {
        format!(
            "{name:<8} sifted {:>10}  E_Z {:.3}%  lambda_EC {:>9}  f {:.3}  L_min {:>6}  eps {:.3e}\n",
            l.sifted_bits,
            100.0 * l.report.e_z,
            l.lambda_ec_bits,
            l.efficiency,
            l.min_len_bits,
            l.report.eps
        )
    };
    format!(
        "status    {}\nBob       {}\nCharlie   {}\nmessage   {} bits, sha256 {}\nL         {} bits\neps       {:.3e}\nR_S       {:.4e} tps\nkey bits  {} per party ({} transport)\n\n{}{}",
        o.status,
        decision_text(&o.bob),
        decision_text(&o.charlie),
        o.message_len_bits,
        o.message_sha256,
        o.len_bits,
        o.eps,
        o.signature_rate_tps,
        s.key_bits,
        s.transport.name(),
        link("Bob", &s.bob),
        link("Charlie", &s.charlie),
    )
}

/// Store-file counterpart of a receiver's messaging step: take the share for
/// the announced positions from both stores, then check the bundle as Bob and,
/// if Bob accepts, as Charlie.
pub fn verify_with_stores(
    bundle: &qds_core::protocol::SignatureBundle,
    ann: &qds_core::protocol::PositionAnnouncement,
    bob: &mut KeyStore,
    charlie: &mut KeyStore,
) -> Result<(Decision, Decision), Failure> {
    let (b0, c0) = (bob.clone(), charlie.clone());
    let shares = bob.take_share(ann).and_then(|b| charlie.take_share(ann).map(|c| (b, c)));
    let (bs, cs) = match shares {
        Ok(s) => s,
        Err(e) => {
            *bob = b0;
            *charlie = c0;
            return Err(protocol_failure(e));
        }
    };
    let at_bob = qds_core::protocol::verify_as_receiver(bundle, &bs, &cs);
    let at_charlie = if at_bob.is_accept() {
        qds_core::protocol::verify_as_receiver(bundle, &cs, &bs)
    } else {
        Decision::Reject(qds_core::protocol::RejectReason::ShortCircuited)
    };
    Ok((at_bob, at_charlie))
}
