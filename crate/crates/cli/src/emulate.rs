//! Emulator runtime: plays a script in real time, or synthesizes packets from
//! a pose steered by keyboard lines and console `{"emu":...}` messages.

use std::io::BufRead;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use handlink_core::config::EmulatorConfig;
use handlink_core::emulator::{EmuPayload, EmuPose, GloveSynth, Script, ScriptPlayer, SteeredPose};
use handlink_core::wire::{self, ControlAction, ControlMessage, SessionHeader};
use handlink_core::Euler;

use crate::{bind_udp, is_timeout, RuntimeError};

/// Interactive steering slews at most this fast, rad/s.
pub const STEER_RATE: f64 = 2.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EmuSummary {
    pub packets: u64,
    pub controls: u64,
}

fn sender(target: SocketAddr) -> Result<UdpSocket, RuntimeError> {
    let any: SocketAddr = if target.is_ipv6() { "[::]:0" } else { "0.0.0.0:0" }
        .parse()
        .expect("literal address");
    bind_udp(any)
}

fn sleep_until(due: Instant) {
    let now = Instant::now();
    if due > now {
        std::thread::sleep(due - now);
    }
}

/// Sends the script's frames at their scheduled times. `on_send` sees every
/// frame right after it left the socket.
pub fn run_script(
    script: Script,
    cfg: &EmulatorConfig,
    target: SocketAddr,
    stop: &AtomicBool,
    mut on_send: impl FnMut(&handlink_core::emulator::EmuFrame),
) -> Result<EmuSummary, RuntimeError> {
    script.validate()?;
    let sock = sender(target)?;
    let start = Instant::now();
    let mut summary = EmuSummary::default();
    for frame in ScriptPlayer::new(script, cfg) {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        sleep_until(start + Duration::from_secs_f64(frame.t));
        sock.send_to(&frame.payload.to_bytes(), target)?;
        match frame.payload {
            EmuPayload::Packet(_) => summary.packets += 1,
            EmuPayload::Control(_) => summary.controls += 1,
            EmuPayload::Header(_) => {}
        }
        on_send(&frame);
    }
    Ok(summary)
}

/// One parsed keyboard line.
#[derive(Debug, Clone, PartialEq)]
pub enum KeyCommand {
    Pose(EmuPose),
    Wrist([f64; 3]),
    Finger(usize, f64),
    Grip(bool),
    Neutral,
    Control(ControlAction),
    Quit,
}

/// `wrist <r> <p> <y>` and `finger <i> <pitch>` take degrees; also `grip`,
/// `release`, `neutral`, `reset`, `arm`, `disarm`, `quit`, or a raw
/// `{"emu":...}` message in radians.
pub fn parse_key_line(line: &str) -> Result<KeyCommand, String> {
    let line = line.trim();
    if line.starts_with('{') {
        return EmuPose::from_emu_json(line.as_bytes())
            .map(KeyCommand::Pose)
            .map_err(|e| e.to_string());
    }
    let mut words = line.split_whitespace();
    let head = words.next().unwrap_or("");
    let nums: Result<Vec<f64>, _> = words.map(str::parse::<f64>).collect();
    let nums = nums.map_err(|e| format!("bad number: {e}"))?;
    match (head, nums.as_slice()) {
        ("wrist" | "w", [r, p, y]) => Ok(KeyCommand::Wrist([*r, *p, *y])),
        ("finger" | "f", [i, p]) if *i >= 0.0 && i.fract() == 0.0 => Ok(KeyCommand::Finger(*i as usize, *p)),
        ("grip" | "g", []) => Ok(KeyCommand::Grip(true)),
        ("release" | "o", []) => Ok(KeyCommand::Grip(false)),
        ("neutral" | "n", []) => Ok(KeyCommand::Neutral),
        ("reset", []) => Ok(KeyCommand::Control(ControlAction::ResetPose)),
        ("arm", []) => Ok(KeyCommand::Control(ControlAction::Arm)),
        ("disarm", []) => Ok(KeyCommand::Control(ControlAction::Disarm)),
        ("quit" | "q", []) => Ok(KeyCommand::Quit),
        _ => Err(format!("unknown command: {line}")),
    }
}

/// Finger pitch used by the `grip` shortcut, degrees.
const GRIP_DEG: f64 = -70.0;

fn apply_key(steer: &mut SteeredPose, cmd: KeyCommand) -> Option<ControlAction> {
    let mut target = steer.target.clone();
    match cmd {
        KeyCommand::Pose(p) => target = p,
        KeyCommand::Wrist([r, p, y]) => target.wrist = Euler::from_degrees(r, p, y),
        KeyCommand::Finger(i, p) => {
            if let Some(f) = target.fingers.get_mut(i) {
                *f = p.to_radians();
            }
        }
        KeyCommand::Grip(close) => {
            let v = if close { GRIP_DEG.to_radians() } else { 0.0 };
            target.fingers.iter_mut().for_each(|f| *f = v);
        }
        KeyCommand::Neutral => target = EmuPose::neutral(target.fingers.len()),
        KeyCommand::Control(a) => return Some(a),
        KeyCommand::Quit => return None,
    }
    if !steer.set_target(target) {
        log::warn!("pose ignored: wrong finger count or non-finite value");
    }
    None
}

/// Streams packets for a steered pose until `stop` is set or input asks to
/// quit. Keyboard lines come from `input`; `listen`, if given, receives
/// `{"emu":...}` steering and `{"vib":...}` actuator messages.
pub fn run_interactive(
    header: SessionHeader,
    cfg: &EmulatorConfig,
    target: SocketAddr,
    listen: Option<UdpSocket>,
    input: impl BufRead + Send + 'static,
    stop: Arc<AtomicBool>,
) -> Result<EmuSummary, RuntimeError> {
    let sock = sender(target)?;
    let steer = Arc::new(Mutex::new(SteeredPose::new(header.fingers, STEER_RATE)));
    let pending: Arc<Mutex<Vec<ControlAction>>> = Arc::default();

    {
        let steer = Arc::clone(&steer);
        let pending = Arc::clone(&pending);
        let stop = Arc::clone(&stop);
        std::thread::Builder::new().name("emu-keys".into()).spawn(move || {
            for line in input.lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                match parse_key_line(&line) {
                    Ok(KeyCommand::Quit) => break,
                    Ok(cmd) => {
                        if let Some(a) = apply_key(&mut steer.lock().unwrap(), cmd) {
                            pending.lock().unwrap().push(a);
                        }
                    }
                    Err(e) => eprintln!("{e}"),
                }
            }
            stop.store(true, Ordering::SeqCst);
        })?;
    }
    if let Some(l) = listen {
        let steer = Arc::clone(&steer);
        let stop = Arc::clone(&stop);
        l.set_read_timeout(Some(Duration::from_millis(50)))?;
        std::thread::Builder::new().name("emu-rx".into()).spawn(move || {
            let mut buf = vec![0u8; 4096];
            while !stop.load(Ordering::Relaxed) {
                match l.recv_from(&mut buf) {
                    Ok((n, _)) => {
                        let msg = &buf[..n];
                        if let Ok(p) = EmuPose::from_emu_json(msg) {
                            apply_key(&mut steer.lock().unwrap(), KeyCommand::Pose(p));
                        } else {
                            log::info!("actuator: {}", String::from_utf8_lossy(msg));
                        }
                    }
                    Err(e) if is_timeout(&e) => {}
                    Err(e) => {
                        log::warn!("emulator receive failed: {e}");
                        break;
                    }
                }
            }
        })?;
    }

    sock.send_to(&wire::serialize_header(&header), target)?;
    let mut synth = GloveSynth::new(header.rate_hz, cfg);
    let dt = 1.0 / f64::from(header.rate_hz);
    let start = Instant::now();
    let mut summary = EmuSummary::default();
    let mut k: u64 = 0;
    while !stop.load(Ordering::Relaxed) {
        sleep_until(start + Duration::from_secs_f64(k as f64 * dt));
        for a in pending.lock().unwrap().drain(..) {
            sock.send_to(ControlMessage { cmd: a }.to_json().as_bytes(), target)?;
            summary.controls += 1;
        }
        let pose = steer.lock().unwrap().advance(dt).clone();
        let t_device = k * 1_000_000 / u64::from(header.rate_hz);
        sock.send_to(&wire::serialize_packet(&synth.packet(&pose, t_device)), target)?;
        summary.packets += 1;
        k += 1;
    }
    Ok(summary)
}
