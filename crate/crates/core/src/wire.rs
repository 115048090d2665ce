//! Glove datagram codec and sequence-aware ingestion.
//!
//! Every UDP datagram on the glove port carries one UTF-8 JSON document:
//!
//! ```text
//! {"seq":0,"t":0,"palm":{"g":[0.0,0.0,0.0],"a":[0.0,0.0,9.81]},"fingers":[{"g":[..],"a":[..]}]}
//! {"hdr":1,"fingers":2,"rate_hz":100}
//! {"cmd":"reset_pose"}
//! ```
//!
//! `t` is device time in microseconds since boot, `g` is angular rate in rad/s
//! and `a` is specific force in m/s², both in the body frame.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const DEFAULT_GLOVE_PORT: u16 = 47800;
pub const DEFAULT_TELEMETRY_PORT: u16 = 47801;
pub const DEFAULT_COMMAND_PORT: u16 = 47802;
pub const DEFAULT_ACTUATOR_PORT: u16 = 47803;

pub const DEFAULT_FINGER_COUNT: usize = 2;
pub const DEFAULT_RATE_HZ: u32 = 100;
pub const MAX_FINGERS: usize = 5;

/// One gyro + accelerometer sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuReading {
    /// rad/s
    pub gyro: Vector3<f64>,
    /// m/s²
    pub accel: Vector3<f64>,
}

impl ImuReading {
    pub fn new(gyro: [f64; 3], accel: [f64; 3]) -> Self {
        Self {
            gyro: Vector3::from(gyro),
            accel: Vector3::from(accel),
        }
    }

    /// Gravity-aligned reading at rest.
    pub fn at_rest() -> Self {
        Self::new([0.0; 3], [0.0, 0.0, crate::GRAVITY])
    }

    pub fn is_finite(&self) -> bool {
        self.gyro.iter().chain(self.accel.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlovePacket {
    pub seq: u32,
    /// Microseconds since device boot.
    pub t_device: u64,
    pub palm: ImuReading,
    pub fingers: Vec<ImuReading>,
    /// Host receive time, ns since the Unix epoch. Never on the wire.
    pub t_host: Option<u64>,
}

impl GlovePacket {
    pub fn received_at(mut self, t_host: u64) -> Self {
        self.t_host = Some(t_host);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionHeader {
    pub hdr: u32,
    pub fingers: usize,
    pub rate_hz: u32,
}

impl SessionHeader {
    pub fn new(fingers: usize, rate_hz: u32) -> Self {
        Self {
            hdr: 1,
            fingers,
            rate_hz,
        }
    }
}

impl Default for SessionHeader {
    fn default() -> Self {
        Self::new(DEFAULT_FINGER_COUNT, DEFAULT_RATE_HZ)
    }
}

/// Operator actions carried as `{"cmd":"..."}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlAction {
    ResetPose,
    Arm,
    Disarm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlMessage {
    pub cmd: ControlAction,
}

impl ControlMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("control message serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Datagram {
    Header(SessionHeader),
    Packet(GlovePacket),
    Control(ControlAction),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed datagram: {0}")]
    MalformedSyntax(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("non-finite numeric value")]
    NonFiniteValue,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireImu {
    g: [f64; 3],
    a: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WirePacket {
    seq: u32,
    t: u64,
    palm: WireImu,
    fingers: Vec<WireImu>,
}

impl From<&ImuReading> for WireImu {
    fn from(r: &ImuReading) -> Self {
        Self {
            g: r.gyro.into(),
            a: r.accel.into(),
        }
    }
}

impl From<WireImu> for ImuReading {
    fn from(w: WireImu) -> Self {
        ImuReading::new(w.g, w.a)
    }
}

fn parse_value(datagram: &[u8]) -> Result<Value, ParseError> {
    serde_json::from_slice::<Value>(datagram).map_err(|e| {
        // Literals like 1e999 are lexically valid but overflow f64.
        if e.to_string().starts_with("number out of range") {
            ParseError::NonFiniteValue
        } else {
            ParseError::MalformedSyntax(e.to_string())
        }
    })
}

fn packet_from_value(value: Value) -> Result<GlovePacket, ParseError> {
    let wire: WirePacket =
        serde_json::from_value(value).map_err(|e| ParseError::SchemaViolation(e.to_string()))?;
    if wire.fingers.is_empty() || wire.fingers.len() > MAX_FINGERS {
        return Err(ParseError::SchemaViolation(format!(
            "finger count {} outside 1..={MAX_FINGERS}",
            wire.fingers.len()
        )));
    }
    let packet = GlovePacket {
        seq: wire.seq,
        t_device: wire.t,
        palm: wire.palm.into(),
        fingers: wire.fingers.into_iter().map(Into::into).collect(),
        t_host: None,
    };
    if !packet.palm.is_finite() || !packet.fingers.iter().all(ImuReading::is_finite) {
        return Err(ParseError::NonFiniteValue);
    }
    Ok(packet)
}

/// Decodes one glove data packet. Headers and control messages are rejected
/// as schema violations; use [`parse_datagram`] on a mixed stream.
pub fn parse_packet(datagram: &[u8]) -> Result<GlovePacket, ParseError> {
    packet_from_value(parse_value(datagram)?)
}

/// Decodes anything that may arrive on the glove port.
pub fn parse_datagram(datagram: &[u8]) -> Result<Datagram, ParseError> {
    let value = parse_value(datagram)?;
    let schema = |e: serde_json::Error| ParseError::SchemaViolation(e.to_string());
    match &value {
        Value::Object(map) if map.contains_key("hdr") => {
            let header: SessionHeader = serde_json::from_value(value).map_err(schema)?;
            if header.fingers == 0 || header.fingers > MAX_FINGERS || header.rate_hz == 0 {
                return Err(ParseError::SchemaViolation(format!(
                    "invalid session header {header:?}"
                )));
            }
            Ok(Datagram::Header(header))
        }
        Value::Object(map) if map.contains_key("cmd") => {
            let msg: ControlMessage = serde_json::from_value(value).map_err(schema)?;
            Ok(Datagram::Control(msg.cmd))
        }
        _ => packet_from_value(value).map(Datagram::Packet),
    }
}

/// Canonical wire text: `seq`, `t`, `palm`, `fingers`, in that order.
pub fn serialize_packet(p: &GlovePacket) -> Vec<u8> {
    let wire = WirePacket {
        seq: p.seq,
        t: p.t_device,
        palm: (&p.palm).into(),
        fingers: p.fingers.iter().map(Into::into).collect(),
    };
    serde_json::to_vec(&wire).expect("packet serializes")
}

pub fn serialize_header(h: &SessionHeader) -> Vec<u8> {
    serde_json::to_vec(h).expect("header serializes")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub received: u64,
    pub dropped: u64,
    pub reordered: u64,
    pub malformed: u64,
}

impl std::fmt::Display for IngestReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "received={} dropped={} reordered={} malformed={}",
            self.received, self.dropped, self.reordered, self.malformed
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Discard,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("packet carries {got} finger readings, session declared {expected}")]
pub struct FingerCountMismatch {
    pub expected: usize,
    pub got: usize,
}

/// Sequence bookkeeping for one glove session. Owned by a single ingestion loop.
#[derive(Debug, Clone)]
pub struct IngestState {
    header: SessionHeader,
    last: Option<(u32, u64)>,
    report: IngestReport,
}

impl IngestState {
    pub fn new(header: SessionHeader) -> Self {
        Self {
            header,
            last: None,
            report: IngestReport::default(),
        }
    }

    pub fn header(&self) -> SessionHeader {
        self.header
    }

    pub fn report(&self) -> IngestReport {
        self.report
    }

    pub fn expected_fingers(&self) -> usize {
        self.header.fingers
    }

    /// Applies a session header. Returns true when it starts a new session
    /// (different finger count or rate); a repeated identical header is a no-op.
    pub fn observe_header(&mut self, header: SessionHeader) -> bool {
        self.report.received += 1;
        if header == self.header {
            return false;
        }
        self.header = header;
        self.last = None;
        true
    }

    /// A datagram that arrived but could not be decoded.
    pub fn observe_malformed(&mut self) {
        self.report.malformed += 1;
    }

    /// Any other well-formed datagram (control messages).
    pub fn observe_other(&mut self) {
        self.report.received += 1;
    }

    pub fn ingest_step(&mut self, p: &GlovePacket) -> Result<Verdict, FingerCountMismatch> {
        self.report.received += 1;
        if p.fingers.len() != self.header.fingers {
            return Err(FingerCountMismatch {
                expected: self.header.fingers,
                got: p.fingers.len(),
            });
        }
        match self.last {
            None => {}
            Some((seq, t)) => {
                // A newer seq with a stale device clock is treated like a regression.
                if p.seq <= seq || p.t_device <= t {
                    self.report.reordered += 1;
                    return Ok(Verdict::Discard);
                }
                self.report.dropped += u64::from(p.seq - seq - 1);
            }
        }
        self.last = Some((p.seq, p.t_device));
        Ok(Verdict::Accept)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_packet(seq: u32, t: u64, fingers: usize) -> GlovePacket {
        GlovePacket {
            seq,
            t_device: t,
            palm: ImuReading::new([0.0; 3], [0.0; 3]),
            fingers: vec![ImuReading::new([0.0; 3], [0.0; 3]); fingers],
            t_host: None,
        }
    }

    #[test]
    fn parses_minimal_packet() {
        let text = br#"{"seq":0,"t":0,"palm":{"g":[0.0,0.0,0.0],"a":[0.0,0.0,0.0]},"fingers":[{"g":[0.0,0.0,0.0],"a":[0.0,0.0,0.0]}]}"#;
        assert_eq!(parse_packet(text).unwrap(), zero_packet(0, 0, 1));
    }

    #[test]
    fn zero_packet_canonical_text() {
        let mut p = zero_packet(0, 0, 1);
        p.palm.accel.z = 9.81;
        assert_eq!(
            String::from_utf8(serialize_packet(&p)).unwrap(),
            r#"{"seq":0,"t":0,"palm":{"g":[0.0,0.0,0.0],"a":[0.0,0.0,9.81]},"fingers":[{"g":[0.0,0.0,0.0],"a":[0.0,0.0,0.0]}]}"#
        );
    }

    #[test]
    fn five_fingers_keep_order() {
        let mut p = zero_packet(3, 7, 5);
        for (i, f) in p.fingers.iter_mut().enumerate() {
            f.gyro.x = i as f64;
        }
        let text = String::from_utf8(serialize_packet(&p)).unwrap();
        let mut last = 0;
        for i in 0..5 {
            let needle = format!(r#"{{"g":[{}.0,"#, i);
            let at = text[last..].find(&needle).expect("finger in order") + last;
            last = at + 1;
        }
        assert_eq!(parse_packet(text.as_bytes()).unwrap(), p);
    }

    #[test]
    fn missing_palm_is_schema_violation() {
        let text = br#"{"seq":0,"t":0,"fingers":[{"g":[0.0,0.0,0.0],"a":[0.0,0.0,0.0]}]}"#;
        assert!(matches!(parse_packet(text), Err(ParseError::SchemaViolation(_))));
    }

    #[test]
    fn extra_field_and_wrong_type_are_schema_violations() {
        let extra = br#"{"seq":0,"t":0,"x":1,"palm":{"g":[0,0,0],"a":[0,0,0]},"fingers":[{"g":[0,0,0],"a":[0,0,0]}]}"#;
        assert!(matches!(parse_packet(extra), Err(ParseError::SchemaViolation(_))));
        let wrong = br#"{"seq":"0","t":0,"palm":{"g":[0,0,0],"a":[0,0,0]},"fingers":[{"g":[0,0,0],"a":[0,0,0]}]}"#;
        assert!(matches!(parse_packet(wrong), Err(ParseError::SchemaViolation(_))));
        let short = br#"{"seq":0,"t":0,"palm":{"g":[0,0],"a":[0,0,0]},"fingers":[{"g":[0,0,0],"a":[0,0,0]}]}"#;
        assert!(matches!(parse_packet(short), Err(ParseError::SchemaViolation(_))));
        let none = br#"{"seq":0,"t":0,"palm":{"g":[0,0,0],"a":[0,0,0]},"fingers":[]}"#;
        assert!(matches!(parse_packet(none), Err(ParseError::SchemaViolation(_))));
    }

    #[test]
    fn syntax_and_overflow_errors() {
        assert!(matches!(parse_packet(b"{\"seq\":"), Err(ParseError::MalformedSyntax(_))));
        assert!(matches!(parse_packet(&[0xff, 0xfe]), Err(ParseError::MalformedSyntax(_))));
        assert!(matches!(parse_packet(b"NaN"), Err(ParseError::MalformedSyntax(_))));
        let huge = br#"{"seq":0,"t":0,"palm":{"g":[1e999,0,0],"a":[0,0,0]},"fingers":[{"g":[0,0,0],"a":[0,0,0]}]}"#;
        assert_eq!(parse_packet(huge), Err(ParseError::NonFiniteValue));
    }

    #[test]
    fn datagram_variants() {
        assert_eq!(
            parse_datagram(br#"{"hdr":1,"fingers":2,"rate_hz":100}"#).unwrap(),
            Datagram::Header(SessionHeader::default())
        );
        assert_eq!(
            parse_datagram(br#"{"cmd":"reset_pose"}"#).unwrap(),
            Datagram::Control(ControlAction::ResetPose)
        );
        assert!(parse_datagram(br#"{"cmd":"fly_away"}"#).is_err());
        assert!(parse_datagram(br#"{"hdr":1,"fingers":0,"rate_hz":100}"#).is_err());
        assert_eq!(
            String::from_utf8(serialize_header(&SessionHeader::default())).unwrap(),
            r#"{"hdr":1,"fingers":2,"rate_hz":100}"#
        );
    }

    fn run(seqs: &[u32]) -> (Vec<Verdict>, IngestReport) {
        let mut st = IngestState::new(SessionHeader::new(1, 100));
        let v = seqs
            .iter()
            .map(|&s| st.ingest_step(&zero_packet(s, 1000 * (s as u64 + 1), 1)).unwrap())
            .collect();
        (v, st.report())
    }

    #[test]
    fn ingest_in_order() {
        let (v, r) = run(&[0, 1, 2]);
        assert_eq!(v, vec![Verdict::Accept; 3]);
        assert_eq!(r.dropped, 0);
    }

    #[test]
    fn ingest_gap_counts_drops() {
        let (v, r) = run(&[0, 2]);
        assert_eq!(v, vec![Verdict::Accept; 2]);
        assert_eq!(r.dropped, 1);
    }

    #[test]
    fn ingest_regression_discards() {
        let (v, r) = run(&[0, 2, 1]);
        assert_eq!(v, vec![Verdict::Accept, Verdict::Accept, Verdict::Discard]);
        assert_eq!(r.reordered, 1);
        assert_eq!(r.dropped, 1);
        let (v, r) = run(&[5, 5]);
        assert_eq!(v[1], Verdict::Discard);
        assert_eq!(r.reordered, 1);
    }

    #[test]
    fn ingest_stale_device_clock_discarded() {
        let mut st = IngestState::new(SessionHeader::new(1, 100));
        assert_eq!(st.ingest_step(&zero_packet(0, 500, 1)), Ok(Verdict::Accept));
        assert_eq!(st.ingest_step(&zero_packet(1, 500, 1)), Ok(Verdict::Discard));
    }

    #[test]
    fn ingest_finger_mismatch_is_fatal() {
        let mut st = IngestState::new(SessionHeader::default());
        assert_eq!(
            st.ingest_step(&zero_packet(0, 0, 3)),
            Err(FingerCountMismatch { expected: 2, got: 3 })
        );
    }

    #[test]
    fn new_header_restarts_sequence() {
        let mut st = IngestState::new(SessionHeader::new(1, 100));
        st.ingest_step(&zero_packet(10, 10, 1)).unwrap();
        assert!(!st.observe_header(SessionHeader::new(1, 100)));
        assert!(st.observe_header(SessionHeader::new(3, 100)));
        assert_eq!(st.ingest_step(&zero_packet(0, 1, 3)), Ok(Verdict::Accept));
        st.observe_malformed();
        let r = st.report();
        assert_eq!(r.received, 4);
        assert_eq!(r.malformed, 1);
    }
}
