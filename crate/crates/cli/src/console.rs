//! WebSocket bridge for the operator console on `/ws`.
//!
//! Outbound: every console message of the pipeline (commands, telemetry,
//! gesture and haptic events, pose frames). Inbound: `{"cmd":...}` operator
//! actions go to the pipeline, `{"emu":...}` steering messages are forwarded
//! to the glove emulator's port.

use std::net::{SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use handlink_core::channel::{Broadcast, BoundedFifo};
use handlink_core::wire::ControlMessage;
use tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tungstenite::http::StatusCode;
use tungstenite::{Message, WebSocket};

use crate::host::Inbound;
use crate::{is_timeout, now_ns};

pub const WS_PATH: &str = "/ws";
const POLL: Duration = Duration::from_millis(20);

/// What a console message asks for.
#[derive(Debug, Clone, PartialEq)]
pub enum ConsoleRequest {
    Control(handlink_core::wire::ControlAction),
    Emulate(String),
}

pub fn parse_request(text: &str) -> Option<ConsoleRequest> {
    if let Ok(m) = serde_json::from_str::<ControlMessage>(text) {
        return Some(ConsoleRequest::Control(m.cmd));
    }
    handlink_core::emulator::EmuPose::from_emu_json(text.as_bytes())
        .ok()
        .map(|_| ConsoleRequest::Emulate(text.to_owned()))
}

pub fn spawn_console(
    listener: TcpListener,
    messages: Broadcast<String>,
    inbound: BoundedFifo<Inbound>,
    emulator: SocketAddr,
    stop: Arc<AtomicBool>,
) -> std::io::Result<JoinHandle<()>> {
    listener.set_nonblocking(true)?;
    std::thread::Builder::new().name("console".into()).spawn(move || {
        let mut clients = Vec::new();
        while !stop.load(Ordering::Relaxed) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    let sub = messages.subscribe(256);
                    let inbound = inbound.clone();
                    let stop = Arc::clone(&stop);
                    let spawned = std::thread::Builder::new()
                        .name(format!("console-{peer}"))
                        .spawn(move || serve_client(stream, sub, inbound, emulator, stop));
                    match spawned {
                        Ok(h) => clients.push(h),
                        Err(e) => log::warn!("cannot start console client thread: {e}"),
                    }
                }
                Err(e) if is_timeout(&e) => std::thread::sleep(POLL),
                Err(e) => {
                    log::warn!("console accept failed: {e}");
                    std::thread::sleep(POLL);
                }
            }
        }
        for c in clients {
            let _ = c.join();
        }
    })
}

fn check_path(req: &Request, resp: Response) -> Result<Response, ErrorResponse> {
    if req.uri().path() == WS_PATH {
        Ok(resp)
    } else {
        let mut err = ErrorResponse::new(Some("not found".into()));
        *err.status_mut() = StatusCode::NOT_FOUND;
        Err(err)
    }
}

fn serve_client(
    stream: TcpStream,
    sub: BoundedFifo<String>,
    inbound: BoundedFifo<Inbound>,
    emulator: SocketAddr,
    stop: Arc<AtomicBool>,
) {
    let _ = stream.set_nonblocking(false);
    let mut ws = match tungstenite::accept_hdr(stream, check_path) {
        Ok(ws) => ws,
        Err(e) => {
            log::debug!("console handshake rejected: {e}");
            sub.close();
            return;
        }
    };
    let _ = ws.get_mut().set_read_timeout(Some(POLL));
    let forward = UdpSocket::bind("0.0.0.0:0").ok();
    log::info!("console connected");
    let result = client_loop(&mut ws, &sub, &inbound, emulator, forward.as_ref(), &stop);
    if let Err(e) = result {
        log::debug!("console client closed: {e}");
    }
    sub.close();
    let _ = ws.close(None);
    let _ = ws.flush();
}

fn client_loop(
    ws: &mut WebSocket<TcpStream>,
    sub: &BoundedFifo<String>,
    inbound: &BoundedFifo<Inbound>,
    emulator: SocketAddr,
    forward: Option<&UdpSocket>,
    stop: &AtomicBool,
) -> Result<(), tungstenite::Error> {
    while !stop.load(Ordering::Relaxed) {
        match ws.read() {
            Ok(Message::Text(text)) => match parse_request(&text) {
                Some(ConsoleRequest::Control(a)) => inbound.push(Inbound::Control(a, now_ns())),
                Some(ConsoleRequest::Emulate(t)) => {
                    if let Some(sock) = forward {
                        let _ = sock.send_to(t.as_bytes(), emulator);
                    }
                }
                None => log::debug!("ignoring console message {text}"),
            },
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if is_timeout(&e) => {}
            Err(e) => return Err(e),
        }
        while let Some(m) = sub.try_pop() {
            ws.write(Message::text(m))?;
        }
        match ws.flush() {
            Ok(()) => {}
            Err(tungstenite::Error::Io(e)) if is_timeout(&e) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}
