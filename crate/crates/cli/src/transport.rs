//! TCP transports: a framed [`Endpoint`] for the signing roles and a framed
//! [`ParityChannel`] for reconciliation.
//!
//! Every party connection gets its own reader thread that decodes frames
//! into a per-peer queue, so frames from one peer stay ordered while
//! different peers are served independently.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError};
use std::thread::JoinHandle;
use std::time::Duration;

use qds_core::cascade::{
    CascadeCorrector, CascadeError, CascadeMessage, CascadeResponder, ParityChannel, ReconciliationConfig,
    ReconciliationResult, Sender, Tag, Transcript,
};
use qds_core::protocol::{Endpoint, ProtocolError, ProtocolMessage, Role};
use qds_core::BitString;

use crate::frame::Frame;
use crate::wire::{cascade_frame, control_frame, parse_cascade, parse_control, parse_protocol, protocol_frame, Control};

const ROLES: [Role; 3] = [Role::Alice, Role::Bob, Role::Charlie];

fn index(role: Role) -> usize {
    ROLES.iter().position(|&r| r == role).expect("three roles")
}

fn transport_err(e: impl std::fmt::Display) -> ProtocolError {
    ProtocolError::Transport(e.to_string())
}

type Inbox = Receiver<Result<ProtocolMessage, String>>;

pub struct SocketEndpoint {
    role: Role,
    writers: HashMap<Role, TcpStream>,
    inboxes: HashMap<Role, Inbox>,
    readers: Vec<JoinHandle<()>>,
    timeout: Duration,
}

impl SocketEndpoint {
    /// Connects `role` to its peers. Each role dials the peers listed after
    /// it and accepts the ones before it on `listener`; the dialer
    /// introduces itself with a hello frame.
    pub fn establish(
        role: Role,
        listener: &TcpListener,
        peers: &HashMap<Role, SocketAddr>,
        timeout: Duration,
    ) -> Result<Self, ProtocolError> {
        let me = index(role);
        let mut streams = HashMap::new();
        for &peer in &ROLES[me + 1..] {
            let addr = peers.get(&peer).ok_or_else(|| transport_err(format!("no address for {peer}")))?;
            let mut s = TcpStream::connect_timeout(addr, timeout).map_err(transport_err)?;
            control_frame(&Control::Hello { role }).write_to(&mut s).map_err(transport_err)?;
            streams.insert(peer, s);
        }
        for _ in 0..me {
            let (mut s, _) = listener.accept().map_err(transport_err)?;
            s.set_read_timeout(Some(timeout)).map_err(transport_err)?;
            let hello = Frame::read_from(&mut s)
                .map_err(transport_err)?
                .ok_or_else(|| transport_err("peer closed before hello"))?;
            let peer = match parse_control(&hello).map_err(transport_err)? {
                Control::Hello { role: r } if index(r) < me && !streams.contains_key(&r) => r,
                other => return Err(transport_err(format!("unexpected greeting {other:?}"))),
            };
            s.set_read_timeout(None).map_err(transport_err)?;
            streams.insert(peer, s);
        }
        let mut ep = Self { role, writers: HashMap::new(), inboxes: HashMap::new(), readers: Vec::new(), timeout };
        for (peer, s) in streams {
            s.set_nodelay(true).map_err(transport_err)?;
            let reader = s.try_clone().map_err(transport_err)?;
            let (tx, rx) = channel();
            ep.readers.push(std::thread::spawn(move || {
                let mut r = BufReader::new(reader);
                loop {
                    let item = match Frame::read_from(&mut r) {
                        Ok(Some(f)) => parse_protocol(&f).map_err(|e| e.to_string()),
                        Ok(None) => break,
                        Err(e) => Err(e.to_string()),
                    };
                    let failed = item.is_err();
                    if tx.send(item).is_err() || failed {
                        break;
                    }
                }
            }));
            ep.writers.insert(peer, s);
            ep.inboxes.insert(peer, rx);
        }
        Ok(ep)
    }
}

impl Endpoint for SocketEndpoint {
    fn role(&self) -> Role {
        self.role
    }

    fn send(&mut self, to: Role, msg: ProtocolMessage) -> Result<(), ProtocolError> {
        let s = self.writers.get_mut(&to).ok_or_else(|| transport_err(format!("no connection to {to}")))?;
        protocol_frame(&msg).write_to(s).map_err(|e| transport_err(format!("send to {to}: {e}")))
    }

    fn recv(&mut self, from: Role) -> Result<ProtocolMessage, ProtocolError> {
        let rx = self.inboxes.get(&from).ok_or_else(|| transport_err(format!("no connection from {from}")))?;
        match rx.recv_timeout(self.timeout) {
            Ok(Ok(m)) => Ok(m),
            Ok(Err(e)) => Err(transport_err(format!("from {from}: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(transport_err(format!("timed out waiting for {from}"))),
            Err(RecvTimeoutError::Disconnected) => Err(transport_err(format!("{from} hung up"))),
        }
    }
}

impl Drop for SocketEndpoint {
    fn drop(&mut self) {
        for s in self.writers.values() {
            let _ = s.shutdown(Shutdown::Both);
        }
        for h in self.readers.drain(..) {
            let _ = h.join();
        }
    }
}

/// Three fully connected endpoints over loopback TCP with OS-assigned ports.
pub fn loopback_network(timeout: Duration) -> Result<[SocketEndpoint; 3], ProtocolError> {
    let listeners: Vec<TcpListener> =
        ROLES.iter().map(|_| TcpListener::bind("127.0.0.1:0")).collect::<Result<_, _>>().map_err(transport_err)?;
    let addrs: HashMap<Role, SocketAddr> = ROLES
        .iter()
        .zip(&listeners)
        .map(|(&r, l)| l.local_addr().map(|a| (r, a)))
        .collect::<Result<_, _>>()
        .map_err(transport_err)?;
    // dialing completes against the listen backlog, so in role order a
    // single thread never waits on a peer that has not started yet
    let a = SocketEndpoint::establish(Role::Alice, &listeners[0], &addrs, timeout)?;
    let b = SocketEndpoint::establish(Role::Bob, &listeners[1], &addrs, timeout)?;
    let c = SocketEndpoint::establish(Role::Charlie, &listeners[2], &addrs, timeout)?;
    Ok([a, b, c])
}

fn cascade_io(e: impl std::fmt::Display) -> CascadeError {
    CascadeError::Transport(e.to_string())
}

/// Corrector side of reconciliation over a TCP stream.
pub struct FramedParityChannel {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    transcript: Option<Transcript>,
}

impl FramedParityChannel {
    pub fn new(stream: TcpStream, record: bool) -> Result<Self, CascadeError> {
        stream.set_nodelay(true).map_err(cascade_io)?;
        let reader = BufReader::new(stream.try_clone().map_err(cascade_io)?);
        Ok(Self { reader, writer: BufWriter::new(stream), transcript: record.then(Vec::new) })
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript.unwrap_or_default()
    }

    fn exchange(&mut self, msg: CascadeMessage) -> Result<CascadeMessage, CascadeError> {
        cascade_frame(&msg).write_to(&mut self.writer).map_err(cascade_io)?;
        self.writer.flush().map_err(cascade_io)?;
        let frame = Frame::read_from(&mut self.reader)
            .map_err(cascade_io)?
            .ok_or_else(|| cascade_io("responder closed the connection"))?;
        let reply = parse_cascade(&frame).map_err(cascade_io)?;
        if let Some(t) = self.transcript.as_mut() {
            t.push((Sender::Corrector, msg));
            t.push((Sender::Responder, reply.clone()));
        }
        Ok(reply)
    }
}

impl ParityChannel for FramedParityChannel {
    fn parities(&mut self, round: u32, pass: u32, ranges: &[(u32, u32)]) -> Result<Vec<bool>, CascadeError> {
        match self.exchange(CascadeMessage::ParityRequest { round, pass, ranges: ranges.to_vec() })? {
            CascadeMessage::ParityAnswer { parities } if parities.len() == ranges.len() => Ok(parities),
            other => Err(CascadeError::Protocol(format!("bad reply to a parity request: {other:?}"))),
        }
    }

    fn exchange_tag(&mut self, tag: Tag) -> Result<Tag, CascadeError> {
        match self.exchange(CascadeMessage::TagExchange { tag })? {
            CascadeMessage::TagExchange { tag } => Ok(tag),
            other => Err(CascadeError::Protocol(format!("bad reply to a tag exchange: {other:?}"))),
        }
    }
}

/// Answers reconciliation requests on `stream` until the corrector hangs up.
pub fn serve_responder(stream: TcpStream, responder: &mut CascadeResponder) -> Result<(), CascadeError> {
    stream.set_nodelay(true).map_err(cascade_io)?;
    let mut reader = BufReader::new(stream.try_clone().map_err(cascade_io)?);
    let mut writer = BufWriter::new(stream);
    while let Some(frame) = Frame::read_from(&mut reader).map_err(cascade_io)? {
        let reply = parse_cascade(&frame).map_err(cascade_io).and_then(|m| responder.handle(&m));
        match reply {
            Ok(r) => cascade_frame(&r).write_to(&mut writer).map_err(cascade_io)?,
            Err(e) => {
                let _ = control_frame(&Control::Error(e.to_string())).write_to(&mut writer);
                let _ = writer.flush();
                return Err(e);
            }
        }
        writer.flush().map_err(cascade_io)?;
    }
    Ok(())
}

/// Reconciles two keys with the responder behind a loopback socket.
pub fn reconcile_over_socket(
    key_a: &BitString,
    key_b: &BitString,
    cfg: &ReconciliationConfig,
) -> Result<(ReconciliationResult, ReconciliationResult, Transcript), CascadeError> {
    if key_a.len() != key_b.len() {
        return Err(CascadeError::LengthMismatch(key_a.len(), key_b.len()));
    }
    let listener = TcpListener::bind("127.0.0.1:0").map_err(cascade_io)?;
    let addr = listener.local_addr().map_err(cascade_io)?;
    let mut responder = CascadeResponder::new(key_b.clone(), *cfg)?;
    let corrector = CascadeCorrector::new(key_a.clone(), *cfg)?;
    std::thread::scope(|scope| {
        let served = scope.spawn(|| {
            let (stream, _) = listener.accept().map_err(cascade_io)?;
            serve_responder(stream, &mut responder)
        });
        let run = TcpStream::connect(addr).map_err(cascade_io).and_then(|s| {
            let mut ch = FramedParityChannel::new(s, true)?;
            let r = corrector.run(&mut ch)?;
            Ok((r, ch.into_transcript()))
        });
        // dropping the channel above closed the stream and ends the serve loop
        let served = served.join().expect("responder thread panicked");
        let (a, t) = run?;
        served?;
        Ok((a, t))
    })
    .map(|(a, t)| (a, responder.finish(), t))
}
