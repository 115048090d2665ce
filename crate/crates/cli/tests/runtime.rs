use std::net::{SocketAddr, UdpSocket};
use std::path::Path;
use std::process::Command;
use std::sync::atomic::AtomicBool;
use std::time::{Duration, Instant};

use handlink_cli::emulate::run_script;
use handlink_cli::host::{spawn_pipeline, PipelineOptions};
use handlink_cli::tools::{export_csv, replay_file};
use handlink_core::config::Config;
use handlink_core::emulator::{Script, ScriptPlayer};
use handlink_core::pipeline::{HostInput, HostLoop};
use handlink_core::session::{read_session, ReplaySpeed, SessionRecord, SessionWriter, Stream};
use handlink_core::wire::ControlAction;
use tungstenite::Message;

fn loopback() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

fn options(actuator: SocketAddr, console: bool, record: Option<&Path>) -> PipelineOptions {
    PipelineOptions {
        glove_bind: loopback(),
        telemetry_bind: loopback(),
        console_bind: console.then(loopback),
        command_target: UdpSocket::bind(loopback()).unwrap().local_addr().unwrap(),
        actuator_target: actuator,
        record: record.map(Path::to_owned),
    }
}

fn short_script(seconds: f64) -> Script {
    Script::new(100, 2)
        .key(0.0, [0.0, 0.0, 0.0], &[0.0, 0.0])
        .key(seconds * 0.5, [0.0, -20.0, 0.0], &[0.0, 0.0])
        .key(seconds, [0.0, 0.0, 0.0], &[0.0, 0.0])
}

/// Writes a session the way the live pipeline would, stamping each input
/// with its scripted send time.
fn synthetic_session(path: &Path, script: Script) -> usize {
    let cfg = Config::default();
    let mut host = HostLoop::new(&cfg);
    let mut w = SessionWriter::create(path).unwrap();
    let mut n = 0;
    for frame in ScriptPlayer::new(script, &cfg.emulator) {
        let bytes = frame.payload.to_bytes();
        let t_host = 1_000_000_000 + (frame.t * 1e9) as u64;
        for (stream, text) in host.handle(HostInput::Glove(&bytes)).unwrap().records {
            w.append(&SessionRecord::new(stream, t_host, text).unwrap()).unwrap();
            n += 1;
        }
    }
    drop(w);
    n
}

#[test]
fn websocket_bridge() {
    let tmp = tempfile::tempdir().unwrap();
    let log = tmp.path().join("ws.jsonl");
    let emu = UdpSocket::bind(loopback()).unwrap();
    emu.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
    let handle = spawn_pipeline(&Config::default(), options(emu.local_addr().unwrap(), true, Some(&log))).unwrap();
    let console = handle.console_addr.unwrap();

    let err = tungstenite::connect(format!("ws://{console}/other")).unwrap_err();
    match err {
        tungstenite::Error::Http(resp) => assert_eq!(resp.status(), 404),
        other => panic!("expected a 404, got {other}"),
    }

    let (mut ws, _) = tungstenite::connect(format!("ws://{console}/ws")).unwrap();
    std::thread::sleep(Duration::from_millis(100));
    let tel = r#"{"tel":{"p":[0.0,0.0,1.0],"v":[0.5,0.0,0.0],"yaw":0.0,"grip":"open","speed":0.5},"seq":1,"t":0.02}"#;
    UdpSocket::bind(loopback()).unwrap().send_to(tel.as_bytes(), handle.telemetry_addr).unwrap();
    let deadline = Instant::now() + Duration::from_secs(3);
    let got = loop {
        assert!(Instant::now() < deadline, "no telemetry on the console socket");
        if let Message::Text(t) = ws.read().unwrap() {
            if t.contains("\"tel\"") {
                break t;
            }
        }
    };
    let v: serde_json::Value = serde_json::from_str(&got).unwrap();
    assert_eq!(v["tel"]["speed"], 0.5);

    ws.send(Message::text(r#"{"cmd":"disarm"}"#)).unwrap();
    let steer = r#"{"emu":{"wrist":[0.0,-0.3,0.0],"fingers":[0.0,0.0]}}"#;
    ws.send(Message::text(steer)).unwrap();
    let mut buf = [0u8; 256];
    let n = emu.recv(&mut buf).unwrap();
    assert_eq!(std::str::from_utf8(&buf[..n]).unwrap(), steer);

    std::thread::sleep(Duration::from_millis(100));
    let _ = ws.close(None);
    handle.stop().unwrap();
    let (records, corrupt) = read_session(&log).unwrap();
    assert_eq!(corrupt, 0);
    assert!(records.iter().any(|r| r.stream == Stream::Event && r.payload_str() == r#"{"cmd":"disarm"}"#));
    assert!(records.iter().any(|r| r.stream == Stream::Telemetry));
}

#[test]
fn quiescent_loopback_run_drops_nothing() {
    let actuator = UdpSocket::bind(loopback()).unwrap();
    let handle = spawn_pipeline(&Config::default(), options(actuator.local_addr().unwrap(), false, None)).unwrap();
    let stop = AtomicBool::new(false);
    let sent = run_script(short_script(2.0), &Config::default().emulator, handle.glove_addr, &stop, |_| {}).unwrap();
    handle.control(ControlAction::Disarm);
    std::thread::sleep(Duration::from_millis(100));
    let summary = handle.stop().unwrap();
    // The header datagram counts as received too.
    assert_eq!(summary.report.received, sent.packets + 1);
    assert_eq!(summary.report.dropped, 0);
    assert_eq!(summary.report.reordered, 0);
    assert_eq!(summary.report.malformed, 0);
    assert_eq!(summary.overflowed, 0);
    assert_eq!(summary.last_command.unwrap().v_forward, 0.0);
}

#[test]
fn replay_speed_scales_wall_time() {
    let tmp = tempfile::tempdir().unwrap();
    let log = tmp.path().join("s.jsonl");
    synthetic_session(&log, short_script(2.0));
    let cfg = Config::default();
    let out = replay_file(&cfg, &log, ReplaySpeed::from_multiplier(2.0).unwrap(), None).unwrap();
    let wall = out.wall.as_secs_f64();
    assert!((wall - 1.0).abs() <= 0.05, "2x replay of 2 s took {wall:.3} s");
    assert!(out.comparison.identical());

    let batch = replay_file(&cfg, &log, ReplaySpeed::Batch, None).unwrap();
    assert!(batch.wall < Duration::from_millis(500));
    assert_eq!(batch.comparison, out.comparison);
}

#[test]
fn replay_notices_tampered_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let log = tmp.path().join("s.jsonl");
    synthetic_session(&log, short_script(2.0));
    let text = std::fs::read_to_string(&log).unwrap();
    let tampered = text.replacen(r#""vf":0.0"#, r#""vf":0.5"#, 1);
    assert_ne!(text, tampered);
    std::fs::write(&log, tampered).unwrap();
    let out = replay_file(&Config::default(), &log, ReplaySpeed::Batch, None).unwrap();
    assert!(!out.comparison.identical());
}

#[test]
fn csv_export_has_one_file_per_stream() {
    let tmp = tempfile::tempdir().unwrap();
    let log = tmp.path().join("s.jsonl");
    synthetic_session(&log, short_script(1.0));
    let (records, _) = read_session(&log).unwrap();
    let out = tmp.path().join("csv");
    let written = export_csv(&log, &out).unwrap();
    let names: Vec<String> =
        written.iter().map(|(p, _)| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert!(names.contains(&"glove.csv".to_owned()) && names.contains(&"command.csv".to_owned()));
    let total: usize = written.iter().map(|(_, n)| n).sum();
    assert_eq!(total, records.len());

    let mut rdr = csv::Reader::from_path(out.join("command.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(&headers[0], "t_host");
    assert!(headers.iter().any(|h| h == "cmd.vf"));
    let first = rdr.records().next().unwrap().unwrap();
    assert!(first[0].parse::<u64>().unwrap() >= 1_000_000_000);
}

#[test]
fn binary_reports_config_errors() {
    let exe = env!("CARGO_BIN_EXE_handlink");
    let out = Command::new(exe).arg("show-config").output().unwrap();
    assert!(out.status.success());
    let shown = String::from_utf8(out.stdout).unwrap();
    assert_eq!(Config::from_toml(&shown).unwrap(), Config::default());

    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[filters]\nalpha = 1.5\n").unwrap();
    let out = Command::new(exe).args(["--config", bad.to_str().unwrap(), "show-config"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
}
