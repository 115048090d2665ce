use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use handlink_core::config::Config;
use handlink_core::emulator::Script;
use handlink_core::session::ReplaySpeed;
use handlink_cli::host::{spawn_pipeline, PipelineOptions};
use handlink_cli::sim::{spawn_sim, SimOptions};
use handlink_cli::{emulate, resolve, tools, RuntimeError};

#[derive(Parser)]
#[command(name = "handlink", version, about = "Glove-to-UAV teleoperation pipeline, simulator and tools")]
struct Cli {
    /// TOML configuration file; defaults apply to every missing key.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct NetArgs {
    /// Local address to bind listening sockets on.
    #[arg(long)]
    bind: Option<String>,
    /// Glove packets in.
    #[arg(long)]
    glove_port: Option<u16>,
    /// Simulator telemetry in.
    #[arg(long)]
    telemetry_port: Option<u16>,
    /// UAV commands out.
    #[arg(long)]
    command_port: Option<u16>,
    /// Vibration messages and emulator steering out.
    #[arg(long)]
    actuator_port: Option<u16>,
    /// WebSocket console (TCP).
    #[arg(long)]
    console_port: Option<u16>,
    /// Where commands are sent.
    #[arg(long)]
    uav_host: Option<String>,
    /// Where vibration messages are sent.
    #[arg(long)]
    glove_host: Option<String>,
    /// Where the emulator and simulator send their datagrams.
    #[arg(long)]
    pipeline_host: Option<String>,
}

impl NetArgs {
    fn apply(&self, cfg: &mut Config) {
        let n = &mut cfg.net;
        if let Some(v) = &self.bind {
            n.bind = v.clone();
        }
        if let Some(v) = self.glove_port {
            n.glove_port = v;
        }
        if let Some(v) = self.telemetry_port {
            n.telemetry_port = v;
        }
        if let Some(v) = self.command_port {
            n.command_port = v;
        }
        if let Some(v) = self.actuator_port {
            n.actuator_port = v;
        }
        if let Some(v) = self.console_port {
            n.console_port = v;
        }
        if let Some(v) = &self.uav_host {
            n.uav_host = v.clone();
        }
        if let Some(v) = &self.glove_host {
            n.glove_host = v.clone();
        }
        if let Some(v) = &self.pipeline_host {
            n.pipeline_host = v.clone();
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the live glove → command pipeline with telemetry haptics and the console bridge.
    Pipeline {
        #[command(flatten)]
        net: NetArgs,
        /// Also write a session log.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Do not serve the WebSocket console.
        #[arg(long)]
        no_console: bool,
    },
    /// Run the pipeline and record the session to a file.
    Record {
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        net: NetArgs,
        #[arg(long)]
        no_console: bool,
    },
    /// Run the kinematic UAV simulator.
    Sim {
        #[command(flatten)]
        net: NetArgs,
    },
    /// Send emulated glove packets from a script or interactive input.
    Emulate {
        /// Keyframe script (TOML).
        #[arg(long, conflicts_with = "interactive", required_unless_present = "interactive")]
        script: Option<PathBuf>,
        /// Steer from stdin lines and console messages.
        #[arg(long)]
        interactive: bool,
        /// Override the noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Disable sensor noise.
        #[arg(long)]
        noiseless: bool,
        #[command(flatten)]
        net: NetArgs,
    },
    /// Re-run a recorded session through the pipeline and compare outputs.
    Replay {
        /// Session log (JSON lines).
        log: PathBuf,
        /// Playback speed multiplier; `inf` for batch mode.
        #[arg(long, default_value = "inf")]
        speed: f64,
        /// Send regenerated commands to the UAV port.
        #[arg(long)]
        send: bool,
        #[command(flatten)]
        net: NetArgs,
    },
    /// Flatten a session log into one CSV per stream.
    ExportCsv {
        log: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn load_config(path: Option<&PathBuf>) -> Result<Config, RuntimeError> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

fn interrupt_flag() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let f = Arc::clone(&flag);
    if let Err(e) = ctrlc::set_handler(move || f.store(true, Ordering::SeqCst)) {
        log::warn!("cannot install interrupt handler: {e}");
    }
    flag
}

fn wait_for(flag: &AtomicBool, also: impl Fn() -> bool) {
    while !flag.load(Ordering::Relaxed) && !also() {
        std::thread::sleep(Duration::from_millis(50));
    }
}

fn run_pipeline(mut cfg: Config, net: &NetArgs, record: Option<PathBuf>, no_console: bool) -> Result<(), RuntimeError> {
    net.apply(&mut cfg);
    cfg.validate()?;
    let mut opts = PipelineOptions::from_config(&cfg)?;
    opts.record = record;
    if no_console {
        opts.console_bind = None;
    }
    let interrupted = interrupt_flag();
    let mut handle = spawn_pipeline(&cfg, opts)?;
    log::info!("glove on {}, telemetry on {}", handle.glove_addr, handle.telemetry_addr);
    if let Some(c) = handle.console_addr {
        log::info!("console on ws://{c}/ws");
    }
    wait_for(&interrupted, || handle.is_finished());
    handle.stop_flag().store(true, Ordering::SeqCst);
    let summary = handle.join()?;
    println!("ingest: {}", summary.report);
    if summary.overflowed > 0 {
        println!("inbound overflow: {}", summary.overflowed);
    }
    if summary.records_written > 0 {
        println!("session records written: {}", summary.records_written);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), RuntimeError> {
    let cfg = load_config(cli.config.as_ref())?;
    match cli.command {
        Command::Pipeline { net, record, no_console } => run_pipeline(cfg, &net, record, no_console),
        Command::Record { out, net, no_console } => run_pipeline(cfg, &net, Some(out), no_console),
        Command::Sim { net } => {
            let mut cfg = cfg;
            net.apply(&mut cfg);
            cfg.validate()?;
            let interrupted = interrupt_flag();
            let handle = spawn_sim(&cfg, SimOptions::from_config(&cfg)?)?;
            log::info!("simulator listening on {}", handle.command_addr);
            wait_for(&interrupted, || false);
            let status = handle.stop();
            let s = &status.state;
            println!(
                "final state: t={:.2}s p=[{:.3}, {:.3}, {:.3}] v=[{:.3}, {:.3}, {:.3}] yaw={:.3} gripper={} grasped={}",
                s.t_sim,
                s.position.x,
                s.position.y,
                s.position.z,
                s.velocity.x,
                s.velocity.y,
                s.velocity.z,
                s.yaw,
                s.gripper.as_str(),
                s.object_grasped()
            );
            for (i, d) in status.tracker.closest.iter().enumerate() {
                println!("waypoint {}: closest approach {:.3} m", i + 1, d);
            }
            Ok(())
        }
        Command::Emulate { script, interactive, seed, noiseless, net } => {
            let mut cfg = cfg;
            net.apply(&mut cfg);
            if let Some(s) = seed {
                cfg.emulator.seed = s;
            }
            if noiseless {
                cfg.emulator.gyro_noise = 0.0;
                cfg.emulator.accel_noise = 0.0;
            }
            cfg.validate()?;
            let target = resolve(&cfg.net.pipeline_host, cfg.net.glove_port)?;
            let interrupted = interrupt_flag();
            let summary = if interactive {
                let listen = resolve(&cfg.net.bind, cfg.net.actuator_port)?;
                let sock = std::net::UdpSocket::bind(listen).map_err(|source| RuntimeError::Bind { addr: listen, source })?;
                eprintln!("commands: wrist r p y | finger i pitch | grip | release | neutral | reset | arm | disarm | quit");
                let stdin = std::io::BufReader::new(std::io::stdin());
                emulate::run_interactive(cfg.header(), &cfg.emulator, target, Some(sock), stdin, interrupted)?
            } else {
                let path = script.expect("clap enforces --script");
                let script = Script::load(&path)?;
                emulate::run_script(script, &cfg.emulator, target, &interrupted, |_| {})?
            };
            println!("sent {} packets and {} control messages", summary.packets, summary.controls);
            Ok(())
        }
        Command::Replay { log, speed, send, net } => {
            let mut cfg = cfg;
            net.apply(&mut cfg);
            cfg.validate()?;
            let speed = ReplaySpeed::from_multiplier(speed)?;
            let target = if send { Some(resolve(&cfg.net.uav_host, cfg.net.command_port)?) } else { None };
            let out = tools::replay_file(&cfg, &log, speed, target)?;
            let c = &out.comparison;
            println!(
                "replayed {} records ({} corrupt) in {:.2}s: {} recorded outputs, {} regenerated",
                out.records,
                out.corrupt,
                out.wall.as_secs_f64(),
                c.recorded.len(),
                c.replayed.len()
            );
            match c.first_mismatch() {
                None => println!("command and event streams identical"),
                Some(i) => println!("streams differ at output {i}"),
            }
            Ok(())
        }
        Command::ExportCsv { log, out_dir } => {
            for (path, rows) in tools::export_csv(&log, &out_dir)? {
                println!("{}: {rows} rows", path.display());
            }
            Ok(())
        }
        Command::ShowConfig => {
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
