//! Real-time simulator loop: latest command from a mailbox, fixed-step
//! integration, decimated telemetry over UDP.

use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use handlink_core::channel::Mailbox;
use handlink_core::config::Config;
use handlink_core::mapper::ControlCommand;
use handlink_core::sim::{GripperState, SimParams, TelemetryClock, UavState, WaypointTracker};

use crate::{bind_udp, is_timeout, resolve, RuntimeError};

#[derive(Debug)]
pub struct SimOptions {
    pub command_bind: SocketAddr,
    pub telemetry_target: SocketAddr,
    /// Already bound command socket; `command_bind` is ignored when set.
    pub command_socket: Option<UdpSocket>,
}

impl SimOptions {
    pub fn from_config(cfg: &Config) -> Result<Self, RuntimeError> {
        Ok(Self {
            command_bind: resolve(&cfg.net.bind, cfg.net.command_port)?,
            telemetry_target: resolve(&cfg.net.pipeline_host, cfg.net.telemetry_port)?,
            command_socket: None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SimStatus {
    pub state: UavState,
    pub tracker: WaypointTracker,
    /// Simulation time at which the gripper last finished closing.
    pub gripper_closed_at: Option<f64>,
    pub grasped_at: Option<f64>,
    pub commands: u64,
    pub malformed: u64,
    pub telemetry_sent: u64,
}

pub struct SimHandle {
    pub command_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    status: Arc<Mutex<SimStatus>>,
    threads: Vec<JoinHandle<()>>,
}

impl SimHandle {
    pub fn status(&self) -> SimStatus {
        self.status.lock().unwrap().clone()
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    pub fn stop(mut self) -> SimStatus {
        self.stop.store(true, Ordering::SeqCst);
        self.join()
    }

    pub fn join(&mut self) -> SimStatus {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        self.status()
    }
}

/// One fixed step of the simulator with its bookkeeping; shared by the
/// real-time loop and in-process tests.
pub struct SimCore {
    params: SimParams,
    dt: f64,
    clock: TelemetryClock,
    pub status: SimStatus,
    pub command: ControlCommand,
}

impl SimCore {
    pub fn new(cfg: &Config) -> Self {
        let params = cfg.sim_params();
        let state = UavState::at(cfg.sim.spawn, &params);
        Self {
            params,
            dt: cfg.sim.dt,
            clock: TelemetryClock::new(cfg.sim.dt, cfg.sim.telemetry_hz),
            status: SimStatus {
                tracker: WaypointTracker::new(cfg.sim.waypoints.clone(), cfg.sim.waypoint_tolerance),
                state,
                gripper_closed_at: None,
                grasped_at: None,
                commands: 0,
                malformed: 0,
                telemetry_sent: 0,
            },
            command: ControlCommand::hover(cfg.sim.spawn[2]),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances one step and returns telemetry text when due.
    pub fn step(&mut self) -> Option<String> {
        let st = &mut self.status;
        let was_closed = st.state.gripper == GripperState::Closed;
        let was_grasped = st.state.object_grasped();
        st.state.step(&self.command, self.dt, &self.params).expect("validated dt");
        if !was_closed && st.state.gripper == GripperState::Closed {
            st.gripper_closed_at = Some(st.state.t_sim);
        }
        if !was_grasped && st.state.object_grasped() {
            st.grasped_at = Some(st.state.t_sim);
        }
        let before = st.tracker.reached();
        st.tracker.observe(&st.state.position);
        for (i, (now, was)) in st.tracker.reached().into_iter().zip(before).enumerate() {
            if now && !was {
                log::info!("waypoint {} reached at t={:.2}s", i + 1, st.state.t_sim);
            }
        }
        self.clock.tick(&st.state).map(|t| {
            st.telemetry_sent += 1;
            t.to_json()
        })
    }
}

pub fn spawn_sim(cfg: &Config, opts: SimOptions) -> Result<SimHandle, RuntimeError> {
    cfg.validate()?;
    let sock = match opts.command_socket {
        Some(s) => s,
        None => bind_udp(opts.command_bind)?,
    };
    let command_addr = sock.local_addr()?;
    let unspecified: SocketAddr = if opts.telemetry_target.is_ipv6() { "[::]:0" } else { "0.0.0.0:0" }
        .parse()
        .expect("literal address");
    let tx = bind_udp(unspecified)?;
    sock.set_read_timeout(Some(Duration::from_millis(50)))?;

    let stop = Arc::new(AtomicBool::new(false));
    let mailbox: Mailbox<ControlCommand> = Mailbox::default();
    let malformed = Arc::new(AtomicU64::new(0));
    let received = Arc::new(AtomicU64::new(0));
    let mut core = SimCore::new(cfg);
    let status = Arc::new(Mutex::new(core.status.clone()));

    let reader = {
        let stop = Arc::clone(&stop);
        let mailbox = mailbox.clone();
        let malformed = Arc::clone(&malformed);
        let received = Arc::clone(&received);
        std::thread::Builder::new().name("sim-rx".into()).spawn(move || {
            let mut buf = vec![0u8; 4096];
            while !stop.load(Ordering::Relaxed) {
                match sock.recv_from(&mut buf) {
                    Ok((n, _)) => match ControlCommand::from_json(&buf[..n]) {
                        Ok(c) => {
                            received.fetch_add(1, Ordering::Relaxed);
                            mailbox.put(c);
                        }
                        Err(e) => {
                            malformed.fetch_add(1, Ordering::Relaxed);
                            log::debug!("malformed command: {e}");
                        }
                    },
                    Err(e) if is_timeout(&e) => {}
                    Err(e) => {
                        log::warn!("command receive failed: {e}");
                        std::thread::sleep(Duration::from_millis(50));
                    }
                }
            }
        })?
    };

    let stepper = {
        let stop = Arc::clone(&stop);
        let status = Arc::clone(&status);
        let target = opts.telemetry_target;
        std::thread::Builder::new().name("sim".into()).spawn(move || {
            let start = Instant::now();
            let dt = core.dt();
            let mut k: u64 = 0;
            while !stop.load(Ordering::Relaxed) {
                k += 1;
                let due = start + Duration::from_secs_f64(k as f64 * dt);
                let now = Instant::now();
                if due > now {
                    std::thread::sleep(due - now);
                }
                if let Some(c) = mailbox.take() {
                    core.command = c;
                }
                if let Some(text) = core.step() {
                    if let Err(e) = tx.send_to(text.as_bytes(), target) {
                        log::debug!("telemetry send failed: {e}");
                    }
                }
                core.status.commands = received.load(Ordering::Relaxed);
                core.status.malformed = malformed.load(Ordering::Relaxed);
                *status.lock().unwrap() = core.status.clone();
            }
        })?
    };

    Ok(SimHandle {
        command_addr,
        stop,
        status,
        threads: vec![reader, stepper],
    })
}

/// Result of flying a script through pipeline and simulator in lockstep.
#[derive(Debug, Clone)]
pub struct LockstepTrace {
    /// Every session record the host produced, in order.
    pub records: Vec<(handlink_core::session::Stream, String)>,
    pub commands: Vec<ControlCommand>,
    /// Gesture events with the pipeline lock state right after the packet.
    pub events: Vec<(handlink_core::gesture::GestureEvent, bool)>,
    /// Device time and lock state after every accepted packet.
    pub locks: Vec<(u64, bool)>,
    pub telemetry: Vec<handlink_core::sim::TelemetryPacket>,
    pub haptics: Vec<handlink_core::haptic::HapticEvent>,
    pub status: SimStatus,
}

/// Plays `script` into a [`HostLoop`](handlink_core::pipeline::HostLoop)
/// and steps the simulator once per glove sample period, with no sockets and
/// no sleeping. Deterministic for a given configuration.
pub fn run_lockstep(cfg: &Config, script: handlink_core::emulator::Script) -> Result<LockstepTrace, RuntimeError> {
    use handlink_core::emulator::{EmuPayload, ScriptPlayer};
    use handlink_core::pipeline::{HostInput, HostLoop, HostOutput};

    cfg.validate()?;
    script.validate()?;
    let steps = ((1.0 / f64::from(script.rate_hz)) / cfg.sim.dt).round().max(1.0) as usize;
    let mut host = HostLoop::new(cfg);
    let mut core = SimCore::new(cfg);
    let mut trace = LockstepTrace {
        records: Vec::new(),
        commands: Vec::new(),
        events: Vec::new(),
        locks: Vec::new(),
        telemetry: Vec::new(),
        haptics: Vec::new(),
        status: core.status.clone(),
    };
    fn absorb(trace: &mut LockstepTrace, step: handlink_core::pipeline::HostStep, locked: bool) -> Option<ControlCommand> {
        trace.records.extend(step.records);
        let mut cmd = None;
        for o in step.outputs {
            match o {
                HostOutput::Command(c) => {
                    trace.commands.push(c);
                    cmd = Some(c);
                }
                HostOutput::Gesture(e) => trace.events.push((e, locked)),
                HostOutput::Haptic(h) => trace.haptics.push(h),
                HostOutput::Telemetry(t) => trace.telemetry.push(t),
                HostOutput::Pose(_) => {}
            }
        }
        cmd
    }

    for frame in ScriptPlayer::new(script, &cfg.emulator) {
        let bytes = frame.payload.to_bytes();
        let step = host.handle(HostInput::Glove(&bytes))?;
        let locked = host.pipeline().locked();
        let is_packet = matches!(frame.payload, EmuPayload::Packet(_));
        let cmd = absorb(&mut trace, step, locked);
        if let Some(c) = cmd {
            core.command = c;
        }
        if !is_packet {
            continue;
        }
        if let EmuPayload::Packet(p) = &frame.payload {
            trace.locks.push((p.t_device, locked));
        }
        for _ in 0..steps {
            if let Some(text) = core.step() {
                let step = host.handle(HostInput::Telemetry(text.as_bytes()))?;
                let locked = host.pipeline().locked();
                absorb(&mut trace, step, locked);
            }
        }
    }
    trace.status = core.status.clone();
    Ok(trace)
}
