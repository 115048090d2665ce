//! Runtime side of handlink: sockets, threads and files around the
//! deterministic core.
//!
//! Each subcommand of the `handlink` binary maps to one entry point here so
//! the same loops can be started in-process by tests on ephemeral ports.

pub mod console;
pub mod emulate;
pub mod error;
pub mod host;
pub mod sim;
pub mod tools;

use std::net::{SocketAddr, ToSocketAddrs};
use std::time::{SystemTime, UNIX_EPOCH};

pub use error::RuntimeError;

/// Wall clock in nanoseconds since the Unix epoch.
pub fn now_ns() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_nanos() as u64)
}

pub fn resolve(host: &str, port: u16) -> Result<SocketAddr, RuntimeError> {
    (host, port)
        .to_socket_addrs()
        .map_err(|_| RuntimeError::Resolve(format!("{host}:{port}")))?
        .next()
        .ok_or_else(|| RuntimeError::Resolve(format!("{host}:{port}")))
}

pub(crate) fn bind_udp(addr: SocketAddr) -> Result<std::net::UdpSocket, RuntimeError> {
    std::net::UdpSocket::bind(addr).map_err(|source| RuntimeError::Bind { addr, source })
}

pub(crate) fn bind_tcp(addr: SocketAddr) -> Result<std::net::TcpListener, RuntimeError> {
    std::net::TcpListener::bind(addr).map_err(|source| RuntimeError::Bind { addr, source })
}

pub(crate) fn is_timeout(e: &std::io::Error) -> bool {
    matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut)
}
