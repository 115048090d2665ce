//! The host side of the loop as one deterministic state machine.
//!
//! [`Pipeline`] owns everything between a glove datagram and a
//! [`ControlCommand`]; [`HostLoop`] adds the telemetry → haptic path and
//! produces the session-log records for every input it consumes. The live
//! runtime and batch replay drive the same `HostLoop`, which is what makes
//! replayed command and event streams identical to the recorded ones.

use nalgebra::UnitQuaternion;
use serde_json::json;

use crate::config::Config;
use crate::fusion::attitude::quat_to_euler;
use crate::fusion::complementary::ComplementaryState;
use crate::fusion::madgwick::QuaternionState;
use crate::fusion::median::ImuMedian;
use crate::fusion::offset::OffsetCalibrator;
use crate::gesture::{FingerPose, FingerState, GestureEngine, GestureEvent, GestureParams};
use crate::haptic::{HapticEvent, HapticMonitor};
use crate::mapper::{apply_events, map_attitude, rate_limit, ControlCommand, MapperParams};
use crate::pose::{LockState, PoseParams, ReferencePose};
use crate::session::{SessionRecord, Stream};
use crate::sim::TelemetryPacket;
use crate::wire::{
    self, ControlAction, ControlMessage, Datagram, FingerCountMismatch, GlovePacket, ImuReading,
    IngestReport, IngestState, SessionHeader, Verdict,
};
use crate::Euler;

/// Median filter and bias compensation for one IMU.
#[derive(Debug, Clone)]
struct FrontEnd {
    median: ImuMedian,
    offset: OffsetCalibrator,
}

impl FrontEnd {
    fn new(cfg: &Config) -> Self {
        Self {
            median: ImuMedian::new(cfg.filters.median_half_width),
            offset: OffsetCalibrator::new(cfg.filters.calibration_samples),
        }
    }

    fn run(&mut self, r: &ImuReading) -> ImuReading {
        let m = self.median.push(r);
        self.offset.process(&m)
    }
}

/// What the console shows about the hand.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    /// Wrist relative to the reference, once one exists.
    pub wrist: Option<Euler>,
    pub fingers: Vec<FingerState>,
    pub locked: bool,
    pub armed: bool,
    pub report: IngestReport,
}

fn label_str(l: FingerPose) -> &'static str {
    match l {
        FingerPose::Open => "open",
        FingerPose::Closed => "closed",
        FingerPose::Indeterminate => "indeterminate",
    }
}

impl PoseFrame {
    pub fn to_json(&self) -> String {
        json!({
            "pose": {
                "wrist": self.wrist.map(|w| w.as_array()),
                "fingers": self.fingers.iter().map(|f| json!({
                    "pitch": f.pitch,
                    "label": label_str(f.label),
                })).collect::<Vec<_>>(),
                "locked": self.locked,
                "armed": self.armed,
            },
            "ingest": self.report,
        })
        .to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub command: ControlCommand,
    pub events: Vec<GestureEvent>,
    pub frame: PoseFrame,
}

/// Glove packets in, commands and gesture events out.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: Config,
    pose_p: PoseParams,
    gesture_p: GestureParams,
    mapper_p: MapperParams,
    ingest: IngestState,
    front: Vec<FrontEnd>,
    wrist: QuaternionState,
    fingers: Vec<ComplementaryState>,
    first_t: Option<u64>,
    last_t: Option<u64>,
    reference: ReferencePose,
    auto_reset_done: bool,
    reset_requested: bool,
    lock: LockState,
    gestures: GestureEngine,
    /// Altitude target and gripper carried between packets.
    setpoint: ControlCommand,
    command: ControlCommand,
    armed: bool,
}

impl Pipeline {
    /// `cfg` must already be validated.
    pub fn new(cfg: &Config) -> Self {
        let header = cfg.header();
        let hover = ControlCommand::hover(cfg.mapper.initial_altitude);
        let mut p = Self {
            cfg: cfg.clone(),
            pose_p: cfg.pose_params(),
            gesture_p: cfg.gesture_params(),
            mapper_p: cfg.mapper_params(),
            ingest: IngestState::new(header),
            front: Vec::new(),
            wrist: QuaternionState::new(cfg.filters.beta),
            fingers: Vec::new(),
            first_t: None,
            last_t: None,
            reference: ReferencePose::default(),
            auto_reset_done: false,
            reset_requested: false,
            lock: LockState::default(),
            gestures: GestureEngine::new(header.fingers, cfg.gesture_params()),
            setpoint: hover,
            command: hover,
            armed: cfg.mapper.start_armed,
        };
        p.restart(header);
        p
    }

    /// Drops all estimator and reference state for a new glove session. The
    /// altitude target, gripper and arming survive.
    fn restart(&mut self, header: SessionHeader) {
        self.front = (0..=header.fingers).map(|_| FrontEnd::new(&self.cfg)).collect();
        self.wrist = QuaternionState::new(self.cfg.filters.beta);
        self.fingers = vec![ComplementaryState::new(self.cfg.filters.alpha); header.fingers];
        self.first_t = None;
        self.last_t = None;
        self.reference = ReferencePose::default();
        self.auto_reset_done = false;
        self.reset_requested = false;
        self.lock = LockState::default();
        self.gestures = GestureEngine::new(header.fingers, self.gesture_p);
    }

    pub fn report(&self) -> IngestReport {
        self.ingest.report()
    }

    pub fn armed(&self) -> bool {
        self.armed
    }

    pub fn locked(&self) -> bool {
        self.lock.locked
    }

    pub fn reference(&self) -> &ReferencePose {
        &self.reference
    }

    pub fn last_command(&self) -> ControlCommand {
        self.command
    }

    pub fn wrist_orientation(&self) -> UnitQuaternion<f64> {
        self.wrist.orientation()
    }

    pub fn observe_malformed(&mut self) {
        self.ingest.observe_malformed();
    }

    /// Returns true when the header starts a new session.
    pub fn header(&mut self, h: SessionHeader) -> bool {
        let fresh = self.ingest.observe_header(h);
        if fresh {
            log::info!("new glove session: {} fingers at {} Hz", h.fingers, h.rate_hz);
            self.restart(h);
        }
        fresh
    }

    /// Applies an operator action. Returns a command to send immediately, if
    /// the action changes what the UAV should be doing right now.
    pub fn control(&mut self, action: ControlAction) -> Option<ControlCommand> {
        match action {
            ControlAction::ResetPose => {
                self.reset_requested = true;
                None
            }
            ControlAction::Arm => {
                self.armed = true;
                None
            }
            ControlAction::Disarm => {
                self.armed = false;
                self.command = self.command.stopped();
                Some(self.command)
            }
        }
    }

    /// Glove stream went silent past the watchdog: hover in place.
    pub fn stream_lost(&mut self) -> ControlCommand {
        self.command = self.command.stopped();
        self.setpoint.altitude_target = self.command.altitude_target;
        self.command
    }

    fn estimator_age(&self, t: u64) -> f64 {
        self.first_t.map_or(0.0, |t0| t.saturating_sub(t0) as f64 * 1e-6)
    }

    /// Ingests one packet; `None` when it was discarded as stale.
    pub fn packet(&mut self, p: &GlovePacket) -> Result<Option<StepOutput>, FingerCountMismatch> {
        if self.ingest.ingest_step(p)? == Verdict::Discard {
            return Ok(None);
        }
        Ok(Some(self.process(p)))
    }

    fn process(&mut self, p: &GlovePacket) -> StepOutput {
        let t = p.t_device;
        let rate = f64::from(self.ingest.header().rate_hz);
        let dt = self.last_t.map_or(1.0 / rate, |l| (t - l) as f64 * 1e-6);
        let first = self.first_t.is_none();
        self.first_t.get_or_insert(t);
        self.last_t = Some(t);

        let palm = self.front[0].run(&p.palm);
        let fingers: Vec<ImuReading> =
            p.fingers.iter().enumerate().map(|(i, r)| self.front[i + 1].run(r)).collect();
        if first {
            self.wrist.seed(&palm);
            for (f, r) in self.fingers.iter_mut().zip(&fingers) {
                f.seed(r);
            }
        } else {
            if let Err(e) = self.wrist.update(&palm, dt) {
                log::warn!("wrist filter: {e}");
            }
            for (f, r) in self.fingers.iter_mut().zip(&fingers) {
                if let Err(e) = f.update(r, dt) {
                    log::warn!("finger filter: {e}");
                }
            }
        }

        let q = self.wrist.orientation();
        let wrist_abs = quat_to_euler(&q);
        // Flexion is measured against the palm so wrist tilt does not read as
        // a finger gesture.
        let flexion: Vec<f64> = self.fingers.iter().map(|f| f.pitch - wrist_abs.pitch).collect();

        let age = self.estimator_age(t);
        if !self.auto_reset_done && self.cfg.pose.auto_reset && age >= self.pose_p.warmup_s {
            self.reset_requested = true;
        }
        if self.reset_requested {
            self.reset_requested = false;
            match ReferencePose::reset(q, &flexion, age, &self.pose_p) {
                Ok(r) => {
                    self.reference = r;
                    self.auto_reset_done = true;
                    self.lock = LockState::default();
                    self.gestures = GestureEngine::new(flexion.len(), self.gesture_p);
                }
                Err(e) => log::warn!("reset ignored: {e}"),
            }
        } else {
            self.reference.zero_back_update(&q, palm.gyro.norm(), dt, &self.pose_p);
        }

        let mut events = Vec::new();
        let wrist_rel = self.reference.relative_orientation(&q).ok();
        if let Some(rel) = wrist_rel {
            self.lock.update(&rel, dt, &self.pose_p);
            let rel_fingers = self.reference.relative_fingers(&flexion);
            events = self.gestures.step(&rel_fingers, rel.yaw, self.lock.locked, t);
        }

        let command = match wrist_rel {
            Some(rel) if self.armed => {
                self.setpoint = apply_events(&self.setpoint, &events, self.mapper_p.altitude_step);
                let (v_forward, v_lateral, yaw_rate) = map_attitude(&rel, &self.mapper_p);
                let target = ControlCommand {
                    v_forward,
                    v_lateral,
                    yaw_rate,
                    t_device: t,
                    ..self.setpoint
                };
                rate_limit(&self.command, &target, dt, &self.mapper_p)
            }
            _ => ControlCommand {
                t_device: t,
                ..self.setpoint.stopped()
            },
        };
        self.command = command;

        StepOutput {
            command,
            events,
            frame: PoseFrame {
                wrist: wrist_rel,
                fingers: self.gestures.fingers().to_vec(),
                locked: self.lock.locked,
                armed: self.armed,
                report: self.ingest.report(),
            },
        }
    }
}

/// Everything the host consumes.
#[derive(Debug, Clone, Copy)]
pub enum HostInput<'a> {
    /// A datagram from the glove port.
    Glove(&'a [u8]),
    /// A datagram from the telemetry port.
    Telemetry(&'a [u8]),
    /// Operator action from the console.
    Control(ControlAction),
    /// The glove watchdog expired.
    StreamLoss,
}

/// Everything the host produces, in emission order.
#[derive(Debug, Clone, PartialEq)]
pub enum HostOutput {
    Command(ControlCommand),
    Gesture(GestureEvent),
    Haptic(HapticEvent),
    Telemetry(TelemetryPacket),
    Pose(PoseFrame),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HostStep {
    /// Records to append to the session log: the input first, then outputs.
    pub records: Vec<(Stream, String)>,
    pub outputs: Vec<HostOutput>,
}

impl HostStep {
    fn output(&mut self, out: HostOutput) {
        match &out {
            HostOutput::Command(c) => self.records.push((Stream::Command, c.to_json())),
            HostOutput::Gesture(e) => self.records.push((Stream::Event, e.to_json())),
            HostOutput::Haptic(h) => self.records.push((Stream::Event, h.console_json())),
            HostOutput::Telemetry(_) | HostOutput::Pose(_) => {}
        }
        self.outputs.push(out);
    }
}

pub const WATCHDOG_EVENT: &str = r#"{"watchdog":"hover"}"#;

/// Console pose frames are sent on every n-th accepted packet.
pub const POSE_FRAME_DECIMATION: u64 = 4;

/// [`Pipeline`] plus the haptic monitor, with session-log bookkeeping.
#[derive(Debug, Clone)]
pub struct HostLoop {
    pipeline: Pipeline,
    haptic: HapticMonitor,
    accepted: u64,
    telemetry_malformed: u64,
}

impl HostLoop {
    /// `cfg` must already be validated.
    pub fn new(cfg: &Config) -> Self {
        Self {
            pipeline: Pipeline::new(cfg),
            haptic: HapticMonitor::new(cfg.haptic_params()).expect("validated haptic thresholds"),
            accepted: 0,
            telemetry_malformed: 0,
        }
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn haptic(&self) -> &HapticMonitor {
        &self.haptic
    }

    pub fn telemetry_malformed(&self) -> u64 {
        self.telemetry_malformed
    }

    fn control(&mut self, action: ControlAction, step: &mut HostStep) {
        step.records.push((Stream::Event, ControlMessage { cmd: action }.to_json()));
        if let Some(c) = self.pipeline.control(action) {
            step.output(HostOutput::Command(c));
        }
    }

    pub fn handle(&mut self, input: HostInput<'_>) -> Result<HostStep, FingerCountMismatch> {
        let mut step = HostStep::default();
        match input {
            HostInput::Glove(bytes) => match wire::parse_datagram(bytes) {
                Err(e) => {
                    log::debug!("malformed glove datagram: {e}");
                    self.pipeline.observe_malformed();
                }
                Ok(Datagram::Header(h)) => {
                    step.records.push((Stream::Glove, String::from_utf8(wire::serialize_header(&h)).expect("utf-8")));
                    self.pipeline.header(h);
                }
                Ok(Datagram::Control(a)) => {
                    self.pipeline.ingest.observe_other();
                    self.control(a, &mut step);
                }
                Ok(Datagram::Packet(p)) => {
                    step.records.push((Stream::Glove, String::from_utf8(wire::serialize_packet(&p)).expect("utf-8")));
                    if let Some(out) = self.pipeline.packet(&p)? {
                        self.accepted += 1;
                        for e in out.events {
                            step.output(HostOutput::Gesture(e));
                        }
                        step.output(HostOutput::Command(out.command));
                        if self.accepted % POSE_FRAME_DECIMATION == 1 {
                            step.output(HostOutput::Pose(out.frame));
                        }
                    }
                }
            },
            HostInput::Telemetry(bytes) => match TelemetryPacket::from_json(bytes) {
                Err(e) => {
                    log::debug!("malformed telemetry: {e}");
                    self.telemetry_malformed += 1;
                }
                Ok(tel) => {
                    step.records.push((Stream::Telemetry, tel.to_json()));
                    for h in self.haptic.monitor_step(&tel) {
                        step.output(HostOutput::Haptic(h));
                    }
                    step.output(HostOutput::Telemetry(tel));
                }
            },
            HostInput::Control(a) => self.control(a, &mut step),
            HostInput::StreamLoss => {
                step.records.push((Stream::Event, WATCHDOG_EVENT.to_owned()));
                let c = self.pipeline.stream_lost();
                step.output(HostOutput::Command(c));
            }
        }
        Ok(step)
    }
}

/// Recorded and regenerated output streams of a batch replay.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayComparison {
    pub recorded: Vec<(Stream, String)>,
    pub replayed: Vec<(Stream, String)>,
}

impl ReplayComparison {
    pub fn identical(&self) -> bool {
        self.recorded == self.replayed
    }

    /// Index of the first differing record.
    pub fn first_mismatch(&self) -> Option<usize> {
        let n = self.recorded.len().min(self.replayed.len());
        (0..n)
            .find(|&i| self.recorded[i] != self.replayed[i])
            .or((self.recorded.len() != self.replayed.len()).then_some(n))
    }
}

/// Classifies a logged record as a host input, or `None` for outputs.
pub fn record_input(rec: &SessionRecord) -> Option<HostInput<'_>> {
    let text = rec.payload_str();
    match rec.stream {
        Stream::Glove => Some(HostInput::Glove(text.as_bytes())),
        Stream::Telemetry => Some(HostInput::Telemetry(text.as_bytes())),
        Stream::Command => None,
        Stream::Event => {
            if text == WATCHDOG_EVENT {
                Some(HostInput::StreamLoss)
            } else if let Ok(m) = serde_json::from_str::<ControlMessage>(text) {
                Some(HostInput::Control(m.cmd))
            } else {
                None
            }
        }
    }
}

/// Feeds every input record of a session through a fresh [`HostLoop`] and
/// collects the command and event records it produces next to the recorded
/// ones.
pub fn replay_session<'a>(
    cfg: &Config,
    records: impl IntoIterator<Item = &'a SessionRecord>,
) -> Result<ReplayComparison, FingerCountMismatch> {
    let mut host = HostLoop::new(cfg);
    let mut cmp = ReplayComparison::default();
    for rec in records {
        match record_input(rec) {
            Some(input) => {
                let step = host.handle(input)?;
                cmp.replayed.extend(
                    step.records
                        .into_iter()
                        .filter(|(s, _)| matches!(s, Stream::Command | Stream::Event))
                        .filter(|(_, text)| !is_input_event(text)),
                );
            }
            None => cmp.recorded.push((rec.stream, rec.payload_str().to_owned())),
        }
    }
    Ok(cmp)
}

fn is_input_event(text: &str) -> bool {
    text == WATCHDOG_EVENT || serde_json::from_str::<ControlMessage>(text).is_ok()
}
