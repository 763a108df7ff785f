//! Message-driven drivers for Alice, Bob and Charlie.
//!
//! Each driver is sequential and touches only its own store; everything it
//! learns arrives through an [`Endpoint`]. [`run_messaging`] wires the three
//! drivers together in-process, one thread per role.
//!
//! Message order of one signing session:
//!
//! 1. Alice → Bob, Alice → Charlie: position announcement
//! 2. Alice → Bob: signature bundle
//! 3. Bob → Charlie: the bundle as received, then Bob's key share
//! 4. Charlie → Bob: Charlie's key share
//! 5. Bob verifies and sends his decision to Charlie
//! 6. Charlie verifies only if Bob accepted

use std::collections::HashMap;
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    select_positions, sign, verify_as_receiver, Decision, Distribution, KeyShare, KeyStore, PositionAnnouncement,
    ProtocolError, RejectReason, Role, SignatureBundle,
};
use crate::bits::BitString;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionNotice {
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtocolMessage {
    Positions(PositionAnnouncement),
    Bundle(SignatureBundle),
    Share(KeyShare),
    Decision(DecisionNotice),
}

impl ProtocolMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ProtocolMessage::Positions(_) => "position-announcement",
            ProtocolMessage::Bundle(_) => "signature-bundle",
            ProtocolMessage::Share(_) => "key-share",
            ProtocolMessage::Decision(_) => "decision",
        }
    }
}

pub trait Endpoint {
    fn role(&self) -> Role;
    fn send(&mut self, to: Role, msg: ProtocolMessage) -> Result<(), ProtocolError>;
    fn recv(&mut self, from: Role) -> Result<ProtocolMessage, ProtocolError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub from: Role,
    pub to: Role,
    pub message: ProtocolMessage,
}

/// Wraps an endpoint and logs every message it sends or receives.
pub struct Recorder<E> {
    inner: E,
    log: Vec<TranscriptEntry>,
}

impl<E: Endpoint> Recorder<E> {
    pub fn new(inner: E) -> Self {
        Self { inner, log: Vec::new() }
    }

    pub fn into_log(self) -> Vec<TranscriptEntry> {
        self.log
    }
}

impl<E: Endpoint> Endpoint for Recorder<E> {
    fn role(&self) -> Role {
        self.inner.role()
    }

    fn send(&mut self, to: Role, msg: ProtocolMessage) -> Result<(), ProtocolError> {
        self.log.push(TranscriptEntry { from: self.role(), to, message: msg.clone() });
        self.inner.send(to, msg)
    }

    fn recv(&mut self, from: Role) -> Result<ProtocolMessage, ProtocolError> {
        let msg = self.inner.recv(from)?;
        self.log.push(TranscriptEntry { from, to: self.role(), message: msg.clone() });
        Ok(msg)
    }
}

/// In-process endpoint over one mpsc channel per ordered pair of roles.
pub struct ChannelEndpoint {
    role: Role,
    tx: HashMap<Role, Sender<ProtocolMessage>>,
    rx: HashMap<Role, Receiver<ProtocolMessage>>,
    timeout: Duration,
}

impl Endpoint for ChannelEndpoint {
    fn role(&self) -> Role {
        self.role
    }

    fn send(&mut self, to: Role, msg: ProtocolMessage) -> Result<(), ProtocolError> {
        let tx = self.tx.get(&to).ok_or_else(|| ProtocolError::Transport(format!("no link to {to}")))?;
        tx.send(msg).map_err(|_| ProtocolError::Transport(format!("{to} hung up")))
    }

    fn recv(&mut self, from: Role) -> Result<ProtocolMessage, ProtocolError> {
        let rx = self.rx.get(&from).ok_or_else(|| ProtocolError::Transport(format!("no link from {from}")))?;
        rx.recv_timeout(self.timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => ProtocolError::Transport(format!("timed out waiting for {from}")),
            RecvTimeoutError::Disconnected => ProtocolError::Transport(format!("{from} hung up")),
        })
    }
}

/// Endpoints for Alice, Bob and Charlie, fully connected.
pub fn in_process_network(timeout: Duration) -> [ChannelEndpoint; 3] {
    let roles = [Role::Alice, Role::Bob, Role::Charlie];
    let mut eps = roles.map(|role| ChannelEndpoint { role, tx: HashMap::new(), rx: HashMap::new(), timeout });
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                let (tx, rx) = channel();
                eps[i].tx.insert(roles[j], tx);
                eps[j].rx.insert(roles[i], rx);
            }
        }
    }
    eps
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigningRequest {
    pub message: Vec<u8>,
    pub len_bits: usize,
    pub position_seed: u64,
    pub p_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AliceBehaviour {
    #[default]
    Honest,
    /// Signs with keys unrelated to the receivers' shares.
    CorruptKeys { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BobBehaviour {
    #[default]
    Honest,
    /// Alters the message before forwarding the bundle to Charlie.
    TamperForward,
}

fn unexpected(want: &str, got: &ProtocolMessage) -> ProtocolError {
    ProtocolError::UnexpectedMessage(format!("expected {want}, got {}", got.kind()))
}

fn recv_positions<E: Endpoint>(ep: &mut E, from: Role) -> Result<PositionAnnouncement, ProtocolError> {
    match ep.recv(from)? {
        ProtocolMessage::Positions(a) => Ok(a),
        other => Err(unexpected("position-announcement", &other)),
    }
}

fn recv_bundle<E: Endpoint>(ep: &mut E, from: Role) -> Result<SignatureBundle, ProtocolError> {
    match ep.recv(from)? {
        ProtocolMessage::Bundle(b) => Ok(b),
        other => Err(unexpected("signature-bundle", &other)),
    }
}

fn recv_share<E: Endpoint>(ep: &mut E, from: Role) -> Result<KeyShare, ProtocolError> {
    match ep.recv(from)? {
        ProtocolMessage::Share(s) => Ok(s),
        other => Err(unexpected("key-share", &other)),
    }
}

pub fn run_alice<E: Endpoint>(
    ep: &mut E,
    store: &mut KeyStore,
    req: &SigningRequest,
    behaviour: AliceBehaviour,
) -> Result<SignatureBundle, ProtocolError> {
    let ann = select_positions(store, req.len_bits, req.position_seed)?;
    let (x_a, y_a) = match behaviour {
        AliceBehaviour::Honest => store.split(&ann),
        AliceBehaviour::CorruptKeys { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (BitString::random(req.len_bits, &mut rng), BitString::random(req.len_bits, &mut rng))
        }
    };
    ep.send(Role::Bob, ProtocolMessage::Positions(ann.clone()))?;
    ep.send(Role::Charlie, ProtocolMessage::Positions(ann))?;
    let bundle = sign(&req.message, &x_a, &y_a, req.p_seed)?;
    ep.send(Role::Bob, ProtocolMessage::Bundle(bundle.clone()))?;
    Ok(bundle)
}

pub fn run_bob<E: Endpoint>(ep: &mut E, store: &mut KeyStore, behaviour: BobBehaviour) -> Result<Decision, ProtocolError> {
    let ann = recv_positions(ep, Role::Alice)?;
    let own = store.take_share(&ann)?;
    let bundle = recv_bundle(ep, Role::Alice)?;
    let mut forwarded = bundle.clone();
    if behaviour == BobBehaviour::TamperForward {
        if let Some(b) = forwarded.message.first_mut() {
            *b ^= 1;
        }
    }
    ep.send(Role::Charlie, ProtocolMessage::Bundle(forwarded))?;
    ep.send(Role::Charlie, ProtocolMessage::Share(own.clone()))?;
    let peer = recv_share(ep, Role::Charlie)?;
    let decision = verify_as_receiver(&bundle, &own, &peer);
    ep.send(Role::Charlie, ProtocolMessage::Decision(DecisionNotice { accepted: decision.is_accept() }))?;
    Ok(decision)
}

pub fn run_charlie<E: Endpoint>(ep: &mut E, store: &mut KeyStore) -> Result<Decision, ProtocolError> {
    let ann = recv_positions(ep, Role::Alice)?;
    let own = store.take_share(&ann)?;
    let bundle = recv_bundle(ep, Role::Bob)?;
    let peer = recv_share(ep, Role::Bob)?;
    ep.send(Role::Bob, ProtocolMessage::Share(own.clone()))?;
    let notice = match ep.recv(Role::Bob)? {
        ProtocolMessage::Decision(n) => n,
        other => return Err(unexpected("decision", &other)),
    };
    if !notice.accepted {
        return Ok(Decision::Reject(RejectReason::ShortCircuited));
    }
    Ok(verify_as_receiver(&bundle, &own, &peer))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Behaviours {
    pub alice: AliceBehaviour,
    pub bob: BobBehaviour,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Completed,
    Aborted(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Transcripts {
    pub alice: Vec<TranscriptEntry>,
    pub bob: Vec<TranscriptEntry>,
    pub charlie: Vec<TranscriptEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessagingOutcome {
    pub status: RunStatus,
    pub bundle: Option<SignatureBundle>,
    pub bob: Option<Decision>,
    pub charlie: Option<Decision>,
    pub transcripts: Transcripts,
}

/// Runs one signing session over in-process channels, one thread per role.
pub fn run_messaging(
    dist: &mut Distribution,
    req: &SigningRequest,
    behaviours: Behaviours,
) -> Result<MessagingOutcome, ProtocolError> {
    run_messaging_on(dist, req, behaviours, in_process_network(Duration::from_secs(30)))
}

fn check_available(dist: &Distribution, req: &SigningRequest) -> Result<(), ProtocolError> {
    let needed = 2 * req.len_bits;
    for s in [&dist.alice, &dist.bob, &dist.charlie] {
        if s.available() < needed {
            return Err(ProtocolError::KeyExhausted { needed, available: s.available() });
        }
    }
    Ok(())
}

/// Runs one signing session over caller-supplied endpoints for Alice, Bob
/// and Charlie, in that order.
pub fn run_messaging_on<E: Endpoint + Send>(
    dist: &mut Distribution,
    req: &SigningRequest,
    behaviours: Behaviours,
    endpoints: [E; 3],
) -> Result<MessagingOutcome, ProtocolError> {
    check_available(dist, req)?;
    for (ep, role) in endpoints.iter().zip([Role::Alice, Role::Bob, Role::Charlie]) {
        if ep.role() != role {
            return Err(ProtocolError::InvalidArgument(format!("endpoint for {} given in {role}'s slot", ep.role())));
        }
    }
    let [a, b, c] = endpoints;
    let Distribution { alice, bob, charlie } = dist;
    let (ra, rb, rc) = std::thread::scope(|scope| {
        let ta = scope.spawn(move || {
            let mut ep = Recorder::new(a);
            let r = run_alice(&mut ep, alice, req, behaviours.alice);
            (r, ep.into_log())
        });
        let tb = scope.spawn(move || {
            let mut ep = Recorder::new(b);
            let r = run_bob(&mut ep, bob, behaviours.bob);
            (r, ep.into_log())
        });
        let tc = scope.spawn(move || {
            let mut ep = Recorder::new(c);
            let r = run_charlie(&mut ep, charlie);
            (r, ep.into_log())
        });
        let panicked = "role thread panicked";
        (ta.join().expect(panicked), tb.join().expect(panicked), tc.join().expect(panicked))
    });
    let transcripts = Transcripts { alice: ra.1, bob: rb.1, charlie: rc.1 };
    let errors: Vec<String> = [
        ra.0.as_ref().err().map(|e| format!("Alice: {e}")),
        rb.0.as_ref().err().map(|e| format!("Bob: {e}")),
        rc.0.as_ref().err().map(|e| format!("Charlie: {e}")),
    ]
    .into_iter()
    .flatten()
    .collect();
    let status = if errors.is_empty() { RunStatus::Completed } else { RunStatus::Aborted(errors.join("; ")) };
    Ok(MessagingOutcome { status, bundle: ra.0.ok(), bob: rb.0.ok(), charlie: rc.0.ok(), transcripts })
}
