//! Framing, transports, file formats and the command implementations behind
//! the `qds` binary.

pub mod config;
pub mod exit;
pub mod files;
pub mod frame;
pub mod pipeline;
pub mod reference;
pub mod reproduce;
pub mod transport;
pub mod wire;
