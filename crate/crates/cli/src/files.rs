//! On-disk formats. JSON for tallies, reports and configs; frames for key
//! stores and signature bundles.
//!
//! A store file is one control frame whose payload is the SHA-256 of the
//! encoded store followed by the encoded store. A bundle file is a
//! signature-bundle frame followed by the position-announcement frame that
//! tells the receivers which key bits to use.

use std::io::Write;
use std::path::{Path, PathBuf};

use qds_core::protocol::{KeyStore, PositionAnnouncement, ProtocolMessage, SignatureBundle};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::frame::{Frame, MsgType};
use crate::wire::{decode_body, encode_body, parse_protocol, protocol_frame};

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{path}: corrupt: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FileError + '_ {
    move |source| FileError::Io { path: path.to_path_buf(), source }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, FileError> {
    std::fs::read(path).map_err(io_err(path))
}

pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, FileError> {
    serde_json::from_str(text).map_err(|e| FileError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FileError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_json(path, &text)
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("plain data serializes");
    v.push(b'\n');
    v
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    }
}

/// Writes through a temporary file in the same directory and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FileError> {
    let mut tmp = tempfile::NamedTempFile::new_in(parent_dir(path)).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| FileError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

/// Stages every file before renaming any, so a failure while writing leaves
/// all targets untouched.
pub fn write_atomic_all(files: &[(&Path, Vec<u8>)]) -> Result<(), FileError> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, bytes) in files {
        let mut tmp = tempfile::NamedTempFile::new_in(parent_dir(path)).map_err(io_err(path))?;
        tmp.write_all(bytes).map_err(io_err(path))?;
        tmp.as_file().sync_all().map_err(io_err(path))?;
        staged.push((*path, tmp));
    }
    for (path, tmp) in staged {
        tmp.persist(path).map_err(|e| FileError::Io { path: path.to_path_buf(), source: e.error })?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FileError> {
    write_atomic(path, &to_json(value))
}

pub fn encode_store(store: &KeyStore) -> Vec<u8> {
    let body = encode_body(store);
    let mut payload = Sha256::digest(&body).to_vec();
    payload.extend_from_slice(&body);
    Frame::new(MsgType::Control, payload).encode()
}

pub fn decode_store(path: &Path, bytes: &[u8]) -> Result<KeyStore, FileError> {
    let corrupt = |reason: String| FileError::Corrupt { path: path.to_path_buf(), reason };
    let frame = Frame::decode_exact(bytes).map_err(|e| corrupt(e.to_string()))?;
    if frame.msg_type != MsgType::Control || frame.payload.len() < 32 {
        return Err(corrupt("not a key store".into()));
    }
    let (sum, body) = frame.payload.split_at(32);
    if Sha256::digest(body).as_slice() != sum {
        return Err(corrupt("checksum mismatch".into()));
    }
    decode_body(MsgType::Control, body).map_err(|e| corrupt(e.to_string()))
}

pub fn read_store(path: &Path) -> Result<KeyStore, FileError> {
    decode_store(path, &read_bytes(path)?)
}

pub fn write_store(path: &Path, store: &KeyStore) -> Result<(), FileError> {
    write_atomic(path, &encode_store(store))
}

pub fn encode_bundle(bundle: &SignatureBundle, ann: &PositionAnnouncement) -> Vec<u8> {
    let mut out = protocol_frame(&ProtocolMessage::Bundle(bundle.clone())).encode();
    out.extend(protocol_frame(&ProtocolMessage::Positions(ann.clone())).encode());
    out
}

pub fn decode_bundle(path: &Path, bytes: &[u8]) -> Result<(SignatureBundle, PositionAnnouncement), FileError> {
    let corrupt = |reason: String| FileError::Corrupt { path: path.to_path_buf(), reason };
    let (first, rest) = Frame::decode(bytes).map_err(|e| corrupt(e.to_string()))?;
    let second = Frame::decode_exact(rest).map_err(|e| corrupt(e.to_string()))?;
    match (parse_protocol(&first), parse_protocol(&second)) {
        (Ok(ProtocolMessage::Bundle(b)), Ok(ProtocolMessage::Positions(a))) => Ok((b, a)),
        (Err(e), _) | (_, Err(e)) => Err(corrupt(e.to_string())),
        _ => Err(corrupt("expected a signature bundle followed by positions".into())),
    }
}

pub fn read_bundle(path: &Path) -> Result<(SignatureBundle, PositionAnnouncement), FileError> {
    decode_bundle(path, &read_bytes(path)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
