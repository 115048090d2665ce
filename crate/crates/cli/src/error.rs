use std::net::SocketAddr;

use handlink_core::config::ConfigError;
use handlink_core::emulator::ScriptParseError;
use handlink_core::session::SessionError;
use handlink_core::wire::FingerCountMismatch;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("cannot resolve {0}")]
    Resolve(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Script(#[from] ScriptParseError),
    #[error("glove session misconfigured: {0}")]
    Session(#[from] FingerCountMismatch),
    #[error(transparent)]
    Log(#[from] SessionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl RuntimeError {
    /// 1 for configuration problems, 2 for bind and I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RuntimeError::Config(_) | RuntimeError::Script(_) | RuntimeError::Session(_) => 1,
            _ => 2,
        }
    }
}
