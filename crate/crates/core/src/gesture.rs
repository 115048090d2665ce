//! Finger-pose classification and discrete gesture events.
//!
//! * grip: every tracked finger closing emits [`GestureKind::GripClose`],
//!   every finger opening again emits [`GestureKind::GripOpen`];
//! * altitude step: a quick flex-and-release of the altitude finger (index 1)
//!   while the remaining fingers stay open. The step goes down when the wrist
//!   is yawed past the modifier angle, up otherwise.
//!
//! Events are edge-triggered. While the finger lock is engaged, labels keep
//! tracking the hand but nothing is emitted and no pending gesture survives,
//! so unlocking never produces a late event.

use serde::{Deserialize, Serialize};

/// Flexion is negative pitch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FingerPose {
    Open,
    Closed,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GestureParams {
    /// Pitch below which a finger is closed, rad.
    pub close_below: f64,
    /// Pitch above which a finger is open, rad.
    pub open_above: f64,
    /// Longest flex-and-release that counts as an altitude step, s.
    pub altitude_window_s: f64,
    /// Wrist yaw at or below this turns an altitude step into a step down, rad.
    pub step_down_yaw: f64,
}

impl Default for GestureParams {
    fn default() -> Self {
        Self {
            close_below: (-50f64).to_radians(),
            open_above: (-30f64).to_radians(),
            altitude_window_s: 0.5,
            step_down_yaw: (-15f64).to_radians(),
        }
    }
}

pub fn classify_finger(pitch: f64, prev: FingerPose, params: &GestureParams) -> FingerPose {
    if pitch < params.close_below {
        FingerPose::Closed
    } else if pitch > params.open_above {
        FingerPose::Open
    } else {
        prev
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureKind {
    GripClose,
    GripOpen,
    AltitudeStepUp,
    AltitudeStepDown,
}

impl GestureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GestureKind::GripClose => "grip_close",
            GestureKind::GripOpen => "grip_open",
            GestureKind::AltitudeStepUp => "altitude_step_up",
            GestureKind::AltitudeStepDown => "altitude_step_down",
        }
    }
}

/// Serialized as `{"evt":"grip_close","t":123}` with `t` in device µs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GestureEvent {
    #[serde(rename = "evt")]
    pub kind: GestureKind,
    #[serde(rename = "t")]
    pub t_device: u64,
}

impl GestureEvent {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FingerState {
    pub pitch: f64,
    pub label: FingerPose,
}

const ALTITUDE_FINGER: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct GestureEngine {
    params: GestureParams,
    fingers: Vec<FingerState>,
    grip: Option<FingerPose>,
    flex_started: Option<u64>,
}

impl GestureEngine {
    pub fn new(finger_count: usize, params: GestureParams) -> Self {
        assert!(finger_count >= 1, "at least one finger is required");
        Self {
            params,
            fingers: vec![
                FingerState {
                    pitch: 0.0,
                    label: FingerPose::Indeterminate,
                };
                finger_count
            ],
            grip: None,
            flex_started: None,
        }
    }

    pub fn fingers(&self) -> &[FingerState] {
        &self.fingers
    }

    pub fn altitude_finger(&self) -> Option<usize> {
        (self.fingers.len() >= 2).then_some(ALTITUDE_FINGER)
    }

    fn conjunction(&self) -> Option<FingerPose> {
        let first = self.fingers[0].label;
        if first != FingerPose::Indeterminate && self.fingers.iter().all(|f| f.label == first) {
            Some(first)
        } else {
            None
        }
    }

    fn grip_fingers_open(&self) -> bool {
        self.fingers
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != self.altitude_finger())
            .all(|(_, f)| f.label == FingerPose::Open)
    }

    /// Advances the engine by one sample. `pitches` are finger pitches relative
    /// to the reference pose, `wrist_yaw` the relative wrist yaw.
    pub fn step(&mut self, pitches: &[f64], wrist_yaw: f64, locked: bool, t_device: u64) -> Vec<GestureEvent> {
        assert_eq!(pitches.len(), self.fingers.len(), "finger count changed mid-session");
        let prev: Vec<FingerPose> = self.fingers.iter().map(|f| f.label).collect();
        for (f, &p) in self.fingers.iter_mut().zip(pitches) {
            f.pitch = p;
            f.label = classify_finger(p, f.label, &self.params);
        }

        let mut events = Vec::new();
        let emit = |kind, events: &mut Vec<GestureEvent>| {
            if !locked {
                events.push(GestureEvent { kind, t_device });
            }
        };

        if let Some(c) = self.conjunction() {
            match self.grip {
                None => self.grip = Some(c),
                Some(g) if g != c => {
                    self.grip = Some(c);
                    let kind = if c == FingerPose::Closed {
                        GestureKind::GripClose
                    } else {
                        GestureKind::GripOpen
                    };
                    emit(kind, &mut events);
                }
                _ => {}
            }
        }

        if locked {
            self.flex_started = None;
            return events;
        }

        if let Some(alt) = self.altitude_finger() {
            let now = self.fingers[alt].label;
            if !self.grip_fingers_open() {
                self.flex_started = None;
            } else if prev[alt] == FingerPose::Open && now == FingerPose::Closed {
                self.flex_started = Some(t_device);
            } else if prev[alt] == FingerPose::Closed && now == FingerPose::Open {
                if let Some(t0) = self.flex_started.take() {
                    let held = t_device.saturating_sub(t0) as f64 * 1e-6;
                    if held <= self.params.altitude_window_s {
                        let kind = if wrist_yaw <= self.params.step_down_yaw {
                            GestureKind::AltitudeStepDown
                        } else {
                            GestureKind::AltitudeStepUp
                        };
                        emit(kind, &mut events);
                    }
                }
            }
        }
        events
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    #[test]
    fn classify_thresholds() {
        let p = GestureParams::default();
        assert_eq!(classify_finger(deg(-60.0), FingerPose::Open, &p), FingerPose::Closed);
        assert_eq!(classify_finger(deg(-40.0), FingerPose::Closed, &p), FingerPose::Closed);
        assert_eq!(classify_finger(deg(-40.0), FingerPose::Open, &p), FingerPose::Open);
        assert_eq!(classify_finger(deg(-20.0), FingerPose::Closed, &p), FingerPose::Open);
        assert_eq!(classify_finger(deg(-40.0), FingerPose::Indeterminate, &p), FingerPose::Indeterminate);
    }

    #[test]
    fn sweep_has_one_close_and_one_open() {
        let p = GestureParams::default();
        let mut label = FingerPose::Open;
        let (mut closes, mut opens) = (0, 0);
        let sweep = (0..=400).map(|i| -20.0 - 40.0 * i as f64 / 400.0).chain((0..=400).map(|i| -60.0 + 40.0 * i as f64 / 400.0));
        for d in sweep {
            let next = classify_finger(deg(d), label, &p);
            match (label, next) {
                (FingerPose::Open, FingerPose::Closed) => closes += 1,
                (FingerPose::Closed, FingerPose::Open) => opens += 1,
                _ => {}
            }
            label = next;
        }
        assert_eq!((closes, opens), (1, 1));
    }

    fn run(engine: &mut GestureEngine, trace: &[(u64, [f64; 2], bool)]) -> Vec<GestureEvent> {
        trace
            .iter()
            .flat_map(|&(t, f, locked)| engine.step(&[deg(f[0]), deg(f[1])], 0.0, locked, t))
            .collect()
    }

    #[test]
    fn grip_close_when_all_fingers_close() {
        let mut e = GestureEngine::new(2, GestureParams::default());
        let ev = run(&mut e, &[(0, [0.0, 0.0], false), (10_000, [-60.0, -60.0], false)]);
        assert_eq!(ev, vec![GestureEvent { kind: GestureKind::GripClose, t_device: 10_000 }]);
        let ev = run(&mut e, &[(20_000, [-60.0, 0.0], false), (30_000, [0.0, 0.0], false)]);
        assert_eq!(ev, vec![GestureEvent { kind: GestureKind::GripOpen, t_device: 30_000 }]);
    }

    #[test]
    fn locked_transition_is_never_emitted() {
        let mut e = GestureEngine::new(2, GestureParams::default());
        let ev = run(
            &mut e,
            &[
                (0, [0.0, 0.0], false),
                (10_000, [-60.0, -60.0], true),
                (20_000, [-60.0, -60.0], false),
                (30_000, [-60.0, -60.0], false),
            ],
        );
        assert!(ev.is_empty());
    }

    fn flex(hold_ms: u64) -> Vec<(u64, [f64; 2], bool)> {
        let mut trace = vec![(0, [0.0, 0.0], false)];
        let t0 = 100_000;
        trace.push((t0, [0.0, -60.0], false));
        trace.push((t0 + hold_ms * 1000, [0.0, 0.0], false));
        trace
    }

    #[test]
    fn quick_flex_steps_altitude() {
        let mut e = GestureEngine::new(2, GestureParams::default());
        assert_eq!(
            run(&mut e, &flex(300)),
            vec![GestureEvent { kind: GestureKind::AltitudeStepUp, t_device: 400_000 }]
        );
        let mut e = GestureEngine::new(2, GestureParams::default());
        assert!(run(&mut e, &flex(800)).is_empty());
    }

    #[test]
    fn yaw_modifier_steps_down() {
        let mut e = GestureEngine::new(2, GestureParams::default());
        e.step(&[0.0, 0.0], 0.0, false, 0);
        e.step(&[0.0, deg(-70.0)], deg(-20.0), false, 10_000);
        let ev = e.step(&[0.0, 0.0], deg(-20.0), false, 200_000);
        assert_eq!(ev[0].kind, GestureKind::AltitudeStepDown);
    }

    #[test]
    fn single_finger_has_no_altitude_channel() {
        let mut e = GestureEngine::new(1, GestureParams::default());
        assert_eq!(e.altitude_finger(), None);
        e.step(&[0.0], 0.0, false, 0);
        assert_eq!(e.step(&[deg(-70.0)], 0.0, false, 1)[0].kind, GestureKind::GripClose);
    }

    #[test]
    fn event_json() {
        let ev = GestureEvent { kind: GestureKind::GripClose, t_device: 42 };
        assert_eq!(ev.to_json(), r#"{"evt":"grip_close","t":42}"#);
    }
}
