//! The live pipeline: UDP readers feed one FIFO, a single thread drives the
//! [`HostLoop`] and fans results out to the UAV, the glove and the console.

use std::net::{SocketAddr, UdpSocket};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use handlink_core::channel::{Broadcast, BoundedFifo};
use handlink_core::config::Config;
use handlink_core::mapper::ControlCommand;
use handlink_core::pipeline::{HostInput, HostLoop, HostOutput};
use handlink_core::session::{SessionRecord, SessionWriter};
use handlink_core::wire::{ControlAction, IngestReport};

use crate::{bind_tcp, bind_udp, is_timeout, now_ns, resolve, RuntimeError};

const READ_TIMEOUT: Duration = Duration::from_millis(50);
const CONSOLE_QUEUE: usize = 512;

/// One item on the pipeline's inbound FIFO, stamped at receipt.
#[derive(Debug, Clone)]
pub enum Inbound {
    Glove(Vec<u8>, u64),
    Telemetry(Vec<u8>, u64),
    Control(ControlAction, u64),
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub glove_bind: SocketAddr,
    pub telemetry_bind: SocketAddr,
    /// `None` disables the console bridge.
    pub console_bind: Option<SocketAddr>,
    pub command_target: SocketAddr,
    pub actuator_target: SocketAddr,
    pub record: Option<PathBuf>,
}

impl PipelineOptions {
    pub fn from_config(cfg: &Config) -> Result<Self, RuntimeError> {
        let n = &cfg.net;
        Ok(Self {
            glove_bind: resolve(&n.bind, n.glove_port)?,
            telemetry_bind: resolve(&n.bind, n.telemetry_port)?,
            console_bind: Some(resolve(&n.bind, n.console_port)?),
            command_target: resolve(&n.uav_host, n.command_port)?,
            actuator_target: resolve(&n.glove_host, n.actuator_port)?,
            record: None,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineSummary {
    pub report: IngestReport,
    /// Inbound items lost to FIFO overflow.
    pub overflowed: u64,
    pub records_written: u64,
    pub telemetry_malformed: u64,
    pub last_command: Option<ControlCommand>,
}

pub struct PipelineHandle {
    pub glove_addr: SocketAddr,
    pub telemetry_addr: SocketAddr,
    pub console_addr: Option<SocketAddr>,
    stop: Arc<AtomicBool>,
    inbound: BoundedFifo<Inbound>,
    console: Broadcast<String>,
    status: Arc<Mutex<PipelineSummary>>,
    readers: Vec<JoinHandle<()>>,
    main: Option<JoinHandle<Result<PipelineSummary, RuntimeError>>>,
}

impl PipelineHandle {
    /// Injects an operator action as if it came from the console.
    pub fn control(&self, action: ControlAction) {
        self.inbound.push(Inbound::Control(action, now_ns()));
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    /// Subscribes to the console message stream.
    pub fn subscribe(&self) -> BoundedFifo<String> {
        self.console.subscribe(CONSOLE_QUEUE)
    }

    pub fn status(&self) -> PipelineSummary {
        self.status.lock().unwrap().clone()
    }

    pub fn is_finished(&self) -> bool {
        self.main.as_ref().is_none_or(|m| m.is_finished())
    }

    /// Signals every loop to stop and waits for the final summary.
    pub fn stop(mut self) -> Result<PipelineSummary, RuntimeError> {
        self.stop.store(true, Ordering::SeqCst);
        self.join()
    }

    /// Waits until the loops exit on their own or through the stop flag.
    pub fn join(&mut self) -> Result<PipelineSummary, RuntimeError> {
        let res = match self.main.take() {
            Some(m) => m.join().map_err(|_| RuntimeError::Other("pipeline thread panicked".into()))?,
            None => Ok(self.status()),
        };
        self.stop.store(true, Ordering::SeqCst);
        for r in self.readers.drain(..) {
            let _ = r.join();
        }
        res
    }
}

fn spawn_reader(
    name: &str,
    sock: UdpSocket,
    stop: Arc<AtomicBool>,
    out: BoundedFifo<Inbound>,
    wrap: fn(Vec<u8>, u64) -> Inbound,
) -> std::io::Result<JoinHandle<()>> {
    sock.set_read_timeout(Some(READ_TIMEOUT))?;
    std::thread::Builder::new().name(name.into()).spawn(move || {
        let mut buf = vec![0u8; 65_536];
        while !stop.load(Ordering::Relaxed) {
            match sock.recv_from(&mut buf) {
                Ok((n, _)) => out.push(wrap(buf[..n].to_vec(), now_ns())),
                Err(e) if is_timeout(&e) => {}
                Err(e) => {
                    log::warn!("udp receive failed: {e}");
                    std::thread::sleep(READ_TIMEOUT);
                }
            }
        }
    })
}

/// Binds every socket, then starts the reader, console and pipeline threads.
pub fn spawn_pipeline(cfg: &Config, opts: PipelineOptions) -> Result<PipelineHandle, RuntimeError> {
    cfg.validate()?;
    let glove = bind_udp(opts.glove_bind)?;
    let telemetry = bind_udp(opts.telemetry_bind)?;
    let unspecified: SocketAddr = if opts.command_target.is_ipv6() { "[::]:0" } else { "0.0.0.0:0" }
        .parse()
        .expect("literal address");
    let out = bind_udp(unspecified)?;
    let listener = opts.console_bind.map(bind_tcp).transpose()?;
    let mut writer = opts.record.as_ref().map(SessionWriter::create).transpose()?;

    let stop = Arc::new(AtomicBool::new(false));
    let inbound: BoundedFifo<Inbound> = BoundedFifo::new(cfg.net.queue_capacity);
    let console: Broadcast<String> = Broadcast::default();
    let status = Arc::new(Mutex::new(PipelineSummary::default()));

    let glove_addr = glove.local_addr()?;
    let telemetry_addr = telemetry.local_addr()?;
    let console_addr = listener.as_ref().map(|l| l.local_addr()).transpose()?;

    let mut readers = vec![
        spawn_reader("glove-rx", glove, Arc::clone(&stop), inbound.clone(), Inbound::Glove)?,
        spawn_reader("telemetry-rx", telemetry, Arc::clone(&stop), inbound.clone(), Inbound::Telemetry)?,
    ];
    if let Some(l) = listener {
        readers.push(crate::console::spawn_console(
            l,
            console.clone(),
            inbound.clone(),
            opts.actuator_target,
            Arc::clone(&stop),
        )?);
    }

    let watchdog = Duration::from_secs_f64(cfg.mapper.watchdog_s);
    let mut host = HostLoop::new(cfg);
    let main = {
        let stop = Arc::clone(&stop);
        let inbound = inbound.clone();
        let console = console.clone();
        let status = Arc::clone(&status);
        let command_target = opts.command_target;
        let actuator_target = opts.actuator_target;
        std::thread::Builder::new().name("pipeline".into()).spawn(move || {
            let mut last_t = 0u64;
            let mut last_glove: Option<Instant> = None;
            let mut watchdog_fired = false;
            let mut written = 0u64;
            let mut summary = PipelineSummary::default();
            loop {
                let item = inbound.pop_timeout(Duration::from_millis(5));
                if item.is_none() && stop.load(Ordering::Relaxed) {
                    break;
                }
                let (input, t_recv) = match &item {
                    Some(Inbound::Glove(b, t)) => (Some(HostInput::Glove(b)), *t),
                    Some(Inbound::Telemetry(b, t)) => (Some(HostInput::Telemetry(b)), *t),
                    Some(Inbound::Control(a, t)) => (Some(HostInput::Control(*a)), *t),
                    None => {
                        let expired = last_glove.is_some_and(|t| t.elapsed() > watchdog);
                        if expired && !watchdog_fired {
                            watchdog_fired = true;
                            log::warn!("glove stream lost, hovering");
                            (Some(HostInput::StreamLoss), now_ns())
                        } else {
                            (None, 0)
                        }
                    }
                };
                let Some(input) = input else { continue };
                // Receipt stamps come from several threads; keep the log monotone.
                let t_host = t_recv.max(last_t);
                last_t = t_host;

                let step = host.handle(input)?;
                if let Some(w) = writer.as_mut() {
                    for (stream, text) in &step.records {
                        let rec = SessionRecord::new(*stream, t_host, text.as_str())?;
                        w.append(&rec)?;
                        written += 1;
                    }
                }
                for o in step.outputs {
                    match o {
                        HostOutput::Command(c) => {
                            if matches!(input, HostInput::Glove(_)) {
                                last_glove = Some(Instant::now());
                                watchdog_fired = false;
                            }
                            let text = c.to_json();
                            if let Err(e) = out.send_to(text.as_bytes(), command_target) {
                                log::debug!("command send failed: {e}");
                            }
                            console.send(text);
                            summary.last_command = Some(c);
                        }
                        HostOutput::Gesture(e) => {
                            log::info!("gesture {}", e.kind.as_str());
                            console.send(e.to_json());
                        }
                        HostOutput::Haptic(h) => {
                            let _ = out.send_to(h.actuator_json().as_bytes(), actuator_target);
                            console.send(h.console_json());
                        }
                        HostOutput::Telemetry(t) => console.send(t.to_json()),
                        HostOutput::Pose(p) => console.send(p.to_json()),
                    }
                }
                summary.report = host.pipeline().report();
                summary.overflowed = inbound.overflowed();
                summary.records_written = written;
                summary.telemetry_malformed = host.telemetry_malformed();
                *status.lock().unwrap() = summary.clone();
            }
            summary.report = host.pipeline().report();
            summary.overflowed = inbound.overflowed();
            *status.lock().unwrap() = summary.clone();
            Ok(summary)
        })?
    };

    Ok(PipelineHandle {
        glove_addr,
        telemetry_addr,
        console_addr,
        stop,
        inbound,
        console,
        status,
        readers,
        main: Some(main),
    })
}
