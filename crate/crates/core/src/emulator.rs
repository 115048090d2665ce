//! Glove emulator: turns scripted or interactively steered hand poses into
//! the packets a real glove would send.
//!
//! Each IMU's orientation is built from the pose, gyro readings are the
//! body-frame rotation between consecutive orientations divided by the sample
//! period, and accelerometer readings are gravity rotated into the body frame.
//! A finger IMU sits on the palm rotated about the palm's y axis by the finger
//! pitch, so flexion (negative pitch) tips the finger down.

use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EmulatorConfig;
use crate::fusion::attitude::{euler_to_quat, Euler};
use crate::wire::{
    self, ControlAction, ControlMessage, GlovePacket, ImuReading, SessionHeader,
};
use crate::GRAVITY;

#[derive(Debug, Error)]
pub enum ScriptParseError {
    #[error("cannot parse script: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid script: {0}")]
    Invalid(String),
}

/// A hand pose: wrist Euler angles and per-finger pitch, radians.
#[derive(Debug, Clone, PartialEq)]
pub struct EmuPose {
    pub wrist: Euler,
    pub fingers: Vec<f64>,
}

impl EmuPose {
    pub fn neutral(fingers: usize) -> Self {
        Self {
            wrist: Euler::default(),
            fingers: vec![0.0; fingers],
        }
    }

    /// Parses a console steering message `{"emu":{"wrist":[r,p,y],"fingers":[..]}}`.
    pub fn from_emu_json(text: &[u8]) -> Result<Self, serde_json::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Body {
            wrist: [f64; 3],
            fingers: Vec<f64>,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Msg {
            emu: Body,
        }
        let m: Msg = serde_json::from_slice(text)?;
        Ok(Self {
            wrist: Euler::new(m.emu.wrist[0], m.emu.wrist[1], m.emu.wrist[2]),
            fingers: m.emu.fingers,
        })
    }

    pub fn to_emu_json(&self) -> String {
        serde_json::json!({
            "emu": { "wrist": self.wrist.as_array(), "fingers": self.fingers }
        })
        .to_string()
    }

    fn is_finite(&self) -> bool {
        self.wrist.as_array().iter().chain(&self.fingers).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub t: f64,
    /// Wrist roll, pitch, yaw in degrees.
    pub wrist: [f64; 3],
    /// Finger pitches in degrees.
    pub fingers: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedAction {
    pub t: f64,
    pub action: ControlAction,
}

fn default_rate() -> u32 {
    wire::DEFAULT_RATE_HZ
}

fn default_fingers() -> usize {
    wire::DEFAULT_FINGER_COUNT
}

/// Timed pose keyframes, linearly interpolated, plus timed control actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    #[serde(default = "default_rate")]
    pub rate_hz: u32,
    #[serde(default = "default_fingers")]
    pub fingers: usize,
    /// Defaults to the last keyframe or action time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default, rename = "keyframe")]
    pub keyframes: Vec<Keyframe>,
    #[serde(default, rename = "action")]
    pub actions: Vec<TimedAction>,
}

impl Script {
    pub fn new(rate_hz: u32, fingers: usize) -> Self {
        Self {
            rate_hz,
            fingers,
            duration: None,
            keyframes: Vec::new(),
            actions: Vec::new(),
        }
    }

    /// Appends a keyframe; angles in degrees.
    pub fn key(mut self, t: f64, wrist: [f64; 3], fingers: &[f64]) -> Self {
        self.keyframes.push(Keyframe {
            t,
            wrist,
            fingers: fingers.to_vec(),
        });
        self
    }

    pub fn action(mut self, t: f64, action: ControlAction) -> Self {
        self.actions.push(TimedAction { t, action });
        self
    }

    pub fn parse(text: &str) -> Result<Self, ScriptParseError> {
        let s: Script = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ScriptParseError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ScriptParseError::Invalid(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("script serializes")
    }

    pub fn validate(&self) -> Result<(), ScriptParseError> {
        let bad = |m: String| Err(ScriptParseError::Invalid(m));
        if self.rate_hz == 0 {
            return bad("rate_hz must be positive".into());
        }
        if !(1..=wire::MAX_FINGERS).contains(&self.fingers) {
            return bad(format!("fingers must be 1..={}", wire::MAX_FINGERS));
        }
        if self.keyframes.is_empty() {
            return bad("at least one keyframe is required".into());
        }
        let mut last = f64::NEG_INFINITY;
        for (i, k) in self.keyframes.iter().enumerate() {
            if !(k.t.is_finite() && k.t >= 0.0) {
                return bad(format!("keyframe {i}: time must be finite and >= 0"));
            }
            if k.t <= last {
                return bad(format!("keyframe {i}: times must strictly increase"));
            }
            last = k.t;
            if k.fingers.len() != self.fingers {
                return bad(format!(
                    "keyframe {i}: {} finger angles, expected {}",
                    k.fingers.len(),
                    self.fingers
                ));
            }
            if !k.wrist.iter().chain(&k.fingers).all(|v| v.is_finite()) {
                return bad(format!("keyframe {i}: non-finite angle"));
            }
        }
        for (i, a) in self.actions.iter().enumerate() {
            if !(a.t.is_finite() && a.t >= 0.0) {
                return bad(format!("action {i}: time must be finite and >= 0"));
            }
        }
        if let Some(d) = self.duration {
            if !(d.is_finite() && d >= 0.0) {
                return bad("duration must be finite and >= 0".into());
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.duration.unwrap_or_else(|| {
            let k = self.keyframes.last().map_or(0.0, |k| k.t);
            self.actions.iter().map(|a| a.t).fold(k, f64::max)
        })
    }

    pub fn header(&self) -> SessionHeader {
        SessionHeader::new(self.fingers, self.rate_hz)
    }

    /// Pose at time `t`, holding the first/last keyframe outside their range.
    pub fn pose_at(&self, t: f64) -> EmuPose {
        let ks = &self.keyframes;
        let i = ks.partition_point(|k| k.t <= t);
        let (a, b, w) = if i == 0 {
            (&ks[0], &ks[0], 0.0)
        } else if i == ks.len() {
            (&ks[i - 1], &ks[i - 1], 0.0)
        } else {
            let (a, b) = (&ks[i - 1], &ks[i]);
            (a, b, (t - a.t) / (b.t - a.t))
        };
        let lerp = |x: f64, y: f64| (x + (y - x) * w).to_radians();
        EmuPose {
            wrist: Euler::new(
                lerp(a.wrist[0], b.wrist[0]),
                lerp(a.wrist[1], b.wrist[1]),
                lerp(a.wrist[2], b.wrist[2]),
            ),
            fingers: a.fingers.iter().zip(&b.fingers).map(|(&x, &y)| lerp(x, y)).collect(),
        }
    }
}

pub fn finger_orientation(wrist: &UnitQuaternion<f64>, pitch: f64) -> UnitQuaternion<f64> {
    wrist * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), pitch)
}

/// Synthesizes IMU readings from successive poses.
#[derive(Debug, Clone)]
pub struct GloveSynth {
    dt: f64,
    gyro_bias: Vector3<f64>,
    gyro_noise: Option<Normal<f64>>,
    accel_noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
    prev: Option<Vec<UnitQuaternion<f64>>>,
    seq: u32,
}

fn noise(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"))
}

impl GloveSynth {
    pub fn new(rate_hz: u32, cfg: &EmulatorConfig) -> Self {
        Self {
            dt: 1.0 / f64::from(rate_hz),
            gyro_bias: Vector3::from(cfg.gyro_bias),
            gyro_noise: noise(cfg.gyro_noise),
            accel_noise: noise(cfg.accel_noise),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            prev: None,
            seq: 0,
        }
    }

    fn sample(&mut self, n: &Option<Normal<f64>>) -> Vector3<f64> {
        match n {
            Some(d) => Vector3::new(d.sample(&mut self.rng), d.sample(&mut self.rng), d.sample(&mut self.rng)),
            None => Vector3::zeros(),
        }
    }

    fn reading(&mut self, prev: Option<&UnitQuaternion<f64>>, q: &UnitQuaternion<f64>) -> ImuReading {
        let omega = prev.map_or_else(Vector3::zeros, |p| (p.inverse() * q).scaled_axis() / self.dt);
        let gn = self.gyro_noise;
        let an = self.accel_noise;
        let gyro = omega + self.gyro_bias + self.sample(&gn);
        let accel = q.inverse_transform_vector(&Vector3::new(0.0, 0.0, GRAVITY)) + self.sample(&an);
        ImuReading { gyro, accel }
    }

    /// Next packet for `pose` at device time `t_device` µs.
    pub fn packet(&mut self, pose: &EmuPose, t_device: u64) -> GlovePacket {
        assert!(pose.is_finite(), "pose must be finite");
        let wrist = euler_to_quat(pose.wrist);
        let mut qs = Vec::with_capacity(1 + pose.fingers.len());
        qs.push(wrist);
        qs.extend(pose.fingers.iter().map(|&p| finger_orientation(&wrist, p)));
        let prev = self.prev.take().filter(|p| p.len() == qs.len());
        let mut readings: Vec<ImuReading> = qs
            .iter()
            .enumerate()
            .map(|(i, q)| self.reading(prev.as_ref().map(|p| &p[i]), q))
            .collect();
        self.prev = Some(qs);
        let palm = readings.remove(0);
        let seq = self.seq;
        self.seq = self.seq.wrapping_add(1);
        GlovePacket {
            seq,
            t_device,
            palm,
            fingers: readings,
            t_host: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmuPayload {
    Header(SessionHeader),
    Packet(GlovePacket),
    Control(ControlAction),
}

impl EmuPayload {
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            EmuPayload::Header(h) => wire::serialize_header(h),
            EmuPayload::Packet(p) => wire::serialize_packet(p),
            EmuPayload::Control(a) => ControlMessage { cmd: *a }.to_json().into_bytes(),
        }
    }
}

/// One datagram to send, `t` seconds after the script starts.
#[derive(Debug, Clone, PartialEq)]
pub struct EmuFrame {
    pub t: f64,
    pub payload: EmuPayload,
}

/// Plays a script: the session header, then one packet per sample period with
/// scripted actions interleaved at their times (before a packet due at the
/// same instant).
pub struct ScriptPlayer {
    script: Script,
    synth: GloveSynth,
    actions: Vec<TimedAction>,
    next_action: usize,
    k: u64,
    samples: u64,
    header_sent: bool,
}

impl ScriptPlayer {
    pub fn new(script: Script, cfg: &EmulatorConfig) -> Self {
        let mut actions = script.actions.clone();
        actions.sort_by(|a, b| a.t.total_cmp(&b.t));
        let samples = (script.duration() * f64::from(script.rate_hz) + 1e-9).floor() as u64 + 1;
        Self {
            synth: GloveSynth::new(script.rate_hz, cfg),
            script,
            actions,
            next_action: 0,
            k: 0,
            samples,
            header_sent: false,
        }
    }

    pub fn script(&self) -> &Script {
        &self.script
    }

    /// Device timestamp of sample `k`, µs.
    pub fn t_device(&self, k: u64) -> u64 {
        k * 1_000_000 / u64::from(self.script.rate_hz)
    }
}

impl Iterator for ScriptPlayer {
    type Item = EmuFrame;

    fn next(&mut self) -> Option<EmuFrame> {
        if !self.header_sent {
            self.header_sent = true;
            return Some(EmuFrame {
                t: 0.0,
                payload: EmuPayload::Header(self.script.header()),
            });
        }
        let t_sample = self.k as f64 / f64::from(self.script.rate_hz);
        if let Some(a) = self.actions.get(self.next_action) {
            if a.t <= t_sample || self.k >= self.samples {
                self.next_action += 1;
                return Some(EmuFrame {
                    t: a.t,
                    payload: EmuPayload::Control(a.action),
                });
            }
        }
        if self.k >= self.samples {
            return None;
        }
        let pose = self.script.pose_at(t_sample);
        let t_device = self.t_device(self.k);
        self.k += 1;
        Some(EmuFrame {
            t: t_sample,
            payload: EmuPayload::Packet(self.synth.packet(&pose, t_device)),
        })
    }
}

/// Interactive steering: the pose slews toward the latest target at a bounded
/// angular rate so step inputs do not produce single-sample gyro spikes.
#[derive(Debug, Clone)]
pub struct SteeredPose {
    pub target: EmuPose,
    pub current: EmuPose,
    /// rad/s
    pub slew_rate: f64,
}

impl SteeredPose {
    pub fn new(fingers: usize, slew_rate: f64) -> Self {
        Self {
            target: EmuPose::neutral(fingers),
            current: EmuPose::neutral(fingers),
            slew_rate,
        }
    }

    /// Ignores targets with the wrong finger count or non-finite values.
    pub fn set_target(&mut self, pose: EmuPose) -> bool {
        if pose.fingers.len() != self.current.fingers.len() || !pose.is_finite() {
            return false;
        }
        self.target = pose;
        true
    }

    pub fn advance(&mut self, dt: f64) -> &EmuPose {
        let step = self.slew_rate * dt;
        let toward = |c: f64, t: f64| c + (t - c).clamp(-step, step);
        let (c, t) = (&mut self.current, &self.target);
        c.wrist = Euler::new(
            toward(c.wrist.roll, t.wrist.roll),
            toward(c.wrist.pitch, t.wrist.pitch),
            toward(c.wrist.yaw, t.wrist.yaw),
        );
        for (f, &tf) in c.fingers.iter_mut().zip(&t.fingers) {
            *f = toward(*f, tf);
        }
        &self.current
    }
}
