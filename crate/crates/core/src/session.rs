//! Session recording, replay and time alignment.
//!
//! A session file is UTF-8, one JSON record per line:
//!
//! ```text
//! {"s":"glove","t":1690000000000000000,"d":{"seq":0,"t":0,"palm":{..},"fingers":[..]}}
//! ```
//!
//! `t` is the host receive time in nanoseconds and is non-decreasing within a
//! file. `d` holds the original payload byte-for-byte.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Glove,
    Command,
    Telemetry,
    Event,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionRecord {
    #[serde(rename = "s")]
    pub stream: Stream,
    #[serde(rename = "t")]
    pub t_host: u64,
    #[serde(rename = "d")]
    pub payload: Box<RawValue>,
}

impl PartialEq for SessionRecord {
    fn eq(&self, other: &Self) -> bool {
        self.stream == other.stream && self.t_host == other.t_host && self.payload.get() == other.payload.get()
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("host clock went backwards: {t_host} after {last}")]
    ClockRegression { last: u64, t_host: u64 },
    #[error("payload is not a JSON document: {0}")]
    InvalidPayload(#[from] serde_json::Error),
    #[error("replay speed must be positive, got {0}")]
    InvalidSpeed(f64),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl SessionRecord {
    pub fn new(stream: Stream, t_host: u64, payload: impl Into<String>) -> Result<Self, SessionError> {
        Ok(Self {
            stream,
            t_host,
            payload: RawValue::from_string(payload.into())?,
        })
    }

    pub fn payload_str(&self) -> &str {
        self.payload.get()
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Single writer for one session file.
pub struct SessionWriter<W: Write = BufWriter<File>> {
    out: W,
    last: Option<u64>,
    written: u64,
}

impl SessionWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        Ok(Self::new(BufWriter::new(file)))
    }
}

impl<W: Write> SessionWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            last: None,
            written: 0,
        }
    }

    pub fn last_t_host(&self) -> Option<u64> {
        self.last
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn append(&mut self, rec: &SessionRecord) -> Result<(), SessionError> {
        if let Some(last) = self.last {
            if rec.t_host < last {
                return Err(SessionError::ClockRegression { last, t_host: rec.t_host });
            }
        }
        let mut line = rec.to_line();
        line.push('\n');
        self.out.write_all(line.as_bytes())?;
        self.out.flush()?;
        self.last = Some(rec.t_host);
        self.written += 1;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parses session lines, skipping corrupt ones and counting them.
pub struct SessionReader<R: BufRead> {
    lines: io::Lines<R>,
    corrupt: u64,
}

impl SessionReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        Ok(Self::new(BufReader::new(File::open(path)?)))
    }
}

impl<R: BufRead> SessionReader<R> {
    pub fn new(input: R) -> Self {
        Self {
            lines: input.lines(),
            corrupt: 0,
        }
    }

    pub fn corrupt(&self) -> u64 {
        self.corrupt
    }
}

impl<R: BufRead> Iterator for SessionReader<R> {
    type Item = Result<SessionRecord, SessionError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) if e.kind() == io::ErrorKind::InvalidData => {
                    self.corrupt += 1;
                    continue;
                }
                Err(e) => return Some(Err(e.into())),
            };
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<SessionRecord>(&line) {
                Ok(rec) => return Some(Ok(rec)),
                Err(e) => {
                    log::warn!("skipping corrupt session record: {e}");
                    self.corrupt += 1;
                }
            }
        }
    }
}

/// Reads a whole file; returns the records and the number of corrupt lines.
pub fn read_session(path: impl AsRef<Path>) -> Result<(Vec<SessionRecord>, u64), SessionError> {
    let mut reader = SessionReader::open(path)?;
    let records = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok((records, reader.corrupt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReplaySpeed {
    /// No delays at all.
    Batch,
    Scaled(f64),
}

impl ReplaySpeed {
    pub fn from_multiplier(speed: f64) -> Result<Self, SessionError> {
        if speed.is_infinite() && speed > 0.0 {
            Ok(ReplaySpeed::Batch)
        } else if speed > 0.0 {
            Ok(ReplaySpeed::Scaled(speed))
        } else {
            Err(SessionError::InvalidSpeed(speed))
        }
    }
}

/// Re-emits records with inter-record gaps scaled by `1/speed`. Timing is
/// anchored to the first record so sleep overshoot does not accumulate.
pub struct Replay<I> {
    records: I,
    speed: ReplaySpeed,
    anchor: Option<(Instant, u64)>,
}

pub fn replay<I>(records: I, speed: ReplaySpeed) -> Replay<I::IntoIter>
where
    I: IntoIterator<Item = SessionRecord>,
{
    Replay {
        records: records.into_iter(),
        speed,
        anchor: None,
    }
}

impl<I: Iterator<Item = SessionRecord>> Iterator for Replay<I> {
    type Item = SessionRecord;

    fn next(&mut self) -> Option<SessionRecord> {
        let rec = self.records.next()?;
        if let ReplaySpeed::Scaled(speed) = self.speed {
            match self.anchor {
                None => self.anchor = Some((Instant::now(), rec.t_host)),
                Some((start, t0)) => {
                    let offset = rec.t_host.saturating_sub(t0) as f64 / speed;
                    let due = start + Duration::from_nanos(offset as u64);
                    let now = Instant::now();
                    if due > now {
                        std::thread::sleep(due - now);
                    }
                }
            }
        }
        Some(rec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// Index of the nearest glove record at or before the telemetry record.
    Glove(usize),
    NoPriorGlove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimelineEntry {
    pub stream: Stream,
    /// Index into the input slice for `stream`.
    pub index: usize,
    pub t_host: u64,
    /// Set for telemetry entries only.
    pub pairing: Option<Pairing>,
}

/// Merge-sorts both streams by `t_host` (glove first on ties) and pairs every
/// telemetry record with its nearest-preceding glove record.
pub fn align(glove: &[SessionRecord], telemetry: &[SessionRecord]) -> Vec<TimelineEntry> {
    let mut out = Vec::with_capacity(glove.len() + telemetry.len());
    let (mut gi, mut ti) = (0, 0);
    while gi < glove.len() || ti < telemetry.len() {
        let take_glove = match (glove.get(gi), telemetry.get(ti)) {
            (Some(g), Some(t)) => g.t_host <= t.t_host,
            (Some(_), None) => true,
            _ => false,
        };
        if take_glove {
            out.push(TimelineEntry {
                stream: Stream::Glove,
                index: gi,
                t_host: glove[gi].t_host,
                pairing: None,
            });
            gi += 1;
        } else {
            let pairing = if gi == 0 { Pairing::NoPriorGlove } else { Pairing::Glove(gi - 1) };
            out.push(TimelineEntry {
                stream: Stream::Telemetry,
                index: ti,
                t_host: telemetry[ti].t_host,
                pairing: Some(pairing),
            });
            ti += 1;
        }
    }
    out
}
