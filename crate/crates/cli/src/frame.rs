//! The binary frame used on the wire and in bundle/store files.
//!
//! ```text
//! +------+------+-----------+----------------+
//! | QDS1 | type | length BE | payload        |
//! | 4 B  | 1 B  | 4 B       | `length` bytes |
//! +------+------+-----------+----------------+
//! ```

use std::io::{self, Read, Write};

pub const MAGIC: [u8; 4] = *b"QDS1";
pub const HEADER_LEN: usize = 9;
/// Largest payload accepted when parsing.
pub const MAX_PAYLOAD: u32 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    ParityRequest = 1,
    ParityAnswer = 2,
    TagExchange = 3,
    PositionAnnouncement = 4,
    SignatureBundle = 5,
    KeyShare = 6,
    Decision = 7,
    Control = 8,
}

impl MsgType {
    pub const ALL: [MsgType; 8] = [
        MsgType::ParityRequest,
        MsgType::ParityAnswer,
        MsgType::TagExchange,
        MsgType::PositionAnnouncement,
        MsgType::SignatureBundle,
        MsgType::KeyShare,
        MsgType::Decision,
        MsgType::Control,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MsgType::ParityRequest => "parity-request",
            MsgType::ParityAnswer => "parity-answer",
            MsgType::TagExchange => "tag-exchange",
            MsgType::PositionAnnouncement => "position-announcement",
            MsgType::SignatureBundle => "signature-bundle",
            MsgType::KeyShare => "key-share",
            MsgType::Decision => "decision",
            MsgType::Control => "control",
        }
    }
}

impl TryFrom<u8> for MsgType {
    type Error = FrameError;

    fn try_from(b: u8) -> Result<Self, FrameError> {
        MsgType::ALL.get((b as usize).wrapping_sub(1)).copied().ok_or(FrameError::UnknownType(b))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("truncated frame: need {needed} bytes, have {got}")]
    Truncated { needed: usize, got: usize },
    #[error("payload of {0} bytes exceeds the limit")]
    TooLarge(u32),
    #[error("{0} trailing bytes after the frame")]
    Trailing(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Self { msg_type, payload }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&self.encode())
    }

    fn parse_header(h: &[u8; HEADER_LEN]) -> Result<(MsgType, u32), FrameError> {
        let magic: [u8; 4] = h[..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(FrameError::BadMagic(magic));
        }
        let t = MsgType::try_from(h[4])?;
        let len = u32::from_be_bytes(h[5..9].try_into().expect("4 bytes"));
        if len > MAX_PAYLOAD {
            return Err(FrameError::TooLarge(len));
        }
        Ok((t, len))
    }

    /// Parses one frame from the front of `bytes`, returning the rest.
    pub fn decode(bytes: &[u8]) -> Result<(Frame, &[u8]), FrameError> {
        let header: &[u8; HEADER_LEN] = bytes
            .get(..HEADER_LEN)
            .and_then(|h| h.try_into().ok())
            .ok_or(FrameError::Truncated { needed: HEADER_LEN, got: bytes.len() })?;
        let (msg_type, len) = Self::parse_header(header)?;
        let end = HEADER_LEN + len as usize;
        if bytes.len() < end {
            return Err(FrameError::Truncated { needed: end, got: bytes.len() });
        }
        Ok((Frame { msg_type, payload: bytes[HEADER_LEN..end].to_vec() }, &bytes[end..]))
    }

    /// Parses exactly one frame.
    pub fn decode_exact(bytes: &[u8]) -> Result<Frame, FrameError> {
        let (f, rest) = Self::decode(bytes)?;
        if !rest.is_empty() {
            return Err(FrameError::Trailing(rest.len()));
        }
        Ok(f)
    }

    /// Reads one frame; `None` on a clean end of stream before any header byte.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Option<Frame>, FrameError> {
        let mut header = [0u8; HEADER_LEN];
        let mut got = 0;
        while got < HEADER_LEN {
            match r.read(&mut header[got..]) {
                Ok(0) if got == 0 => return Ok(None),
                Ok(0) => return Err(FrameError::Truncated { needed: HEADER_LEN, got }),
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let (msg_type, len) = Self::parse_header(&header)?;
        let mut payload = vec![0u8; len as usize];
        r.read_exact(&mut payload).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => FrameError::Truncated { needed: HEADER_LEN + len as usize, got: HEADER_LEN },
            _ => FrameError::Io(e),
        })?;
        Ok(Some(Frame { msg_type, payload }))
    }
}
