//! Payload encoding: every message becomes one [`Frame`] whose payload is the
//! bincode encoding of the message body.

use bincode::Options;
use qds_core::cascade::CascadeMessage;
use qds_core::protocol::{DecisionNotice, ProtocolMessage, Role};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::frame::{Frame, FrameError, MsgType, MAX_PAYLOAD};

/// Connection management and error reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Control {
    /// First frame on every party connection, naming the connecting role.
    Hello { role: Role },
    /// The peer gave up; the text says why.
    Error(String),
}

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("{kind} payload does not decode: {reason}")]
    Payload { kind: &'static str, reason: String },
    #[error("expected a {expected} frame, got {got}")]
    WrongType { expected: &'static str, got: &'static str },
    #[error("peer reported: {0}")]
    Remote(String),
}

fn codec() -> impl Options {
    bincode::DefaultOptions::new().with_limit(MAX_PAYLOAD as u64)
}

pub fn encode_body<T: Serialize>(value: &T) -> Vec<u8> {
    codec().serialize(value).expect("in-memory serialization of plain data")
}

pub fn decode_body<T: DeserializeOwned>(kind: MsgType, payload: &[u8]) -> Result<T, WireError> {
    codec().deserialize(payload).map_err(|e| WireError::Payload { kind: kind.name(), reason: e.to_string() })
}

pub fn protocol_type(msg: &ProtocolMessage) -> MsgType {
    match msg {
        ProtocolMessage::Positions(_) => MsgType::PositionAnnouncement,
        ProtocolMessage::Bundle(_) => MsgType::SignatureBundle,
        ProtocolMessage::Share(_) => MsgType::KeyShare,
        ProtocolMessage::Decision(_) => MsgType::Decision,
    }
}

pub fn protocol_frame(msg: &ProtocolMessage) -> Frame {
    let payload = match msg {
        ProtocolMessage::Positions(a) => encode_body(a),
        ProtocolMessage::Bundle(b) => encode_body(b),
        ProtocolMessage::Share(s) => encode_body(s),
        ProtocolMessage::Decision(d) => encode_body(d),
    };
    Frame::new(protocol_type(msg), payload)
}

pub fn parse_protocol(frame: &Frame) -> Result<ProtocolMessage, WireError> {
    let t = frame.msg_type;
    let p = &frame.payload;
    Ok(match t {
        MsgType::PositionAnnouncement => ProtocolMessage::Positions(decode_body(t, p)?),
        MsgType::SignatureBundle => ProtocolMessage::Bundle(decode_body(t, p)?),
        MsgType::KeyShare => ProtocolMessage::Share(decode_body(t, p)?),
        MsgType::Decision => ProtocolMessage::Decision(decode_body::<DecisionNotice>(t, p)?),
        MsgType::Control => return Err(remote_or_wrong(frame, "protocol")),
        other => return Err(WireError::WrongType { expected: "protocol", got: other.name() }),
    })
}

pub fn cascade_frame(msg: &CascadeMessage) -> Frame {
    let t = match msg {
        CascadeMessage::ParityRequest { .. } => MsgType::ParityRequest,
        CascadeMessage::ParityAnswer { .. } => MsgType::ParityAnswer,
        CascadeMessage::TagExchange { .. } => MsgType::TagExchange,
    };
    Frame::new(t, encode_body(msg))
}

pub fn parse_cascade(frame: &Frame) -> Result<CascadeMessage, WireError> {
    let t = frame.msg_type;
    let msg: CascadeMessage = match t {
        MsgType::ParityRequest | MsgType::ParityAnswer | MsgType::TagExchange => decode_body(t, &frame.payload)?,
        MsgType::Control => return Err(remote_or_wrong(frame, "reconciliation")),
        other => return Err(WireError::WrongType { expected: "reconciliation", got: other.name() }),
    };
    // the type byte must agree with the body
    if cascade_frame(&msg).msg_type != t {
        return Err(WireError::Payload { kind: t.name(), reason: "body is a different message".into() });
    }
    Ok(msg)
}

pub fn control_frame(c: &Control) -> Frame {
    Frame::new(MsgType::Control, encode_body(c))
}

pub fn parse_control(frame: &Frame) -> Result<Control, WireError> {
    match frame.msg_type {
        MsgType::Control => decode_body(MsgType::Control, &frame.payload),
        other => Err(WireError::WrongType { expected: "control", got: other.name() }),
    }
}

fn remote_or_wrong(frame: &Frame, expected: &'static str) -> WireError {
    match parse_control(frame) {
        Ok(Control::Error(e)) => WireError::Remote(e),
        _ => WireError::WrongType { expected, got: "control" },
    }
}
