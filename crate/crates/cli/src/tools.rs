//! Offline session tools: replay through the pipeline and CSV export.

use std::collections::BTreeMap;
use std::net::{SocketAddr, UdpSocket};
use std::path::{Path, PathBuf};

use handlink_core::config::Config;
use handlink_core::pipeline::{record_input, HostLoop, HostOutput, ReplayComparison};
use handlink_core::session::{read_session, replay, ReplaySpeed, Stream};
use serde_json::Value;

use crate::RuntimeError;

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub records: usize,
    pub corrupt: u64,
    pub comparison: ReplayComparison,
    pub wall: std::time::Duration,
}

fn is_output(stream: Stream, text: &str) -> bool {
    matches!(stream, Stream::Command | Stream::Event)
        && record_input(&handlink_core::session::SessionRecord::new(stream, 0, text).expect("valid json")).is_none()
}

/// Re-runs a recorded session through a fresh pipeline. With a finite speed
/// the inputs are paced by their recorded host timestamps; regenerated
/// commands are sent to `command_target` if given.
pub fn replay_file(
    cfg: &Config,
    path: &Path,
    speed: ReplaySpeed,
    command_target: Option<SocketAddr>,
) -> Result<ReplayOutcome, RuntimeError> {
    let (records, corrupt) = read_session(path)?;
    let n = records.len();
    let sock = command_target.map(|_| UdpSocket::bind("0.0.0.0:0")).transpose()?;
    let mut host = HostLoop::new(cfg);
    let mut cmp = ReplayComparison::default();
    let start = std::time::Instant::now();
    for rec in replay(records, speed) {
        match record_input(&rec) {
            Some(input) => {
                let step = host.handle(input)?;
                cmp.replayed.extend(step.records.into_iter().filter(|(s, t)| is_output(*s, t)));
                if let (Some(sock), Some(target)) = (&sock, command_target) {
                    for o in &step.outputs {
                        if let HostOutput::Command(c) = o {
                            let _ = sock.send_to(c.to_json().as_bytes(), target);
                        }
                    }
                }
            }
            None => cmp.recorded.push((rec.stream, rec.payload_str().to_owned())),
        }
    }
    Ok(ReplayOutcome {
        records: n,
        corrupt,
        comparison: cmp,
        wall: start.elapsed(),
    })
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_owned() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        Value::String(s) => out.push((prefix.to_owned(), s.clone())),
        Value::Null => out.push((prefix.to_owned(), String::new())),
        other => out.push((prefix.to_owned(), other.to_string())),
    }
}

/// Writes one CSV per stream (`glove.csv`, `command.csv`, ...) with a
/// `t_host` column followed by the flattened payload fields. Returns the
/// files written with their row counts.
pub fn export_csv(path: &Path, out_dir: &Path) -> Result<Vec<(PathBuf, usize)>, RuntimeError> {
    let (records, corrupt) = read_session(path)?;
    if corrupt > 0 {
        log::warn!("{corrupt} corrupt records skipped");
    }
    let mut tables: BTreeMap<&'static str, (Vec<String>, Vec<(u64, Vec<(String, String)>)>)> = BTreeMap::new();
    for rec in &records {
        let name = match rec.stream {
            Stream::Glove => "glove",
            Stream::Command => "command",
            Stream::Telemetry => "telemetry",
            Stream::Event => "event",
        };
        let value: Value = serde_json::from_str(rec.payload_str()).map_err(|e| RuntimeError::Other(e.to_string()))?;
        let mut fields = Vec::new();
        flatten("", &value, &mut fields);
        let (columns, rows) = tables.entry(name).or_default();
        for (k, _) in &fields {
            if !columns.contains(k) {
                columns.push(k.clone());
            }
        }
        rows.push((rec.t_host, fields));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (name, (columns, rows)) in tables {
        let file = out_dir.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_path(&file).map_err(|e| RuntimeError::Other(e.to_string()))?;
        let csv_err = |e: csv::Error| RuntimeError::Other(e.to_string());
        w.write_record(std::iter::once("t_host").chain(columns.iter().map(String::as_str)))
            .map_err(csv_err)?;
        for (t, fields) in &rows {
            let map: BTreeMap<&str, &str> = fields.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
            let mut row = vec![t.to_string()];
            row.extend(columns.iter().map(|c| map.get(c.as_str()).copied().unwrap_or("").to_owned()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        written.push((file, rows.len()));
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_nested() {
        let v: Value = serde_json::from_str(r#"{"tel":{"p":[1,2.5,3],"grip":"open"},"seq":4,"x":null}"#).unwrap();
        let mut out = Vec::new();
        flatten("", &v, &mut out);
        let keys: Vec<&str> = out.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(keys, ["seq", "tel.grip", "tel.p.0", "tel.p.1", "tel.p.2", "x"]);
        assert_eq!(out[3].1, "2.5");
    }
}
