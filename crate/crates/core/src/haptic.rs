//! Speed-threshold warnings for the glove's vibration motors.
//!
//! Each level is a Schmitt trigger: it switches on when telemetry speed goes
//! above its threshold and off only once speed drops below threshold − h.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LEVELS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HapticParams {
    pub thresholds: [f64; LEVELS],
    pub hysteresis: f64,
}

impl Default for HapticParams {
    fn default() -> Self {
        Self {
            thresholds: [0.7, 0.9],
            hysteresis: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("haptic thresholds must satisfy 0 < T1 - h, h > 0 and T1 < T2 (got {thresholds:?}, h={hysteresis})")]
pub struct BadThresholds {
    pub thresholds: [f64; LEVELS],
    pub hysteresis: f64,
}

impl HapticParams {
    pub fn validate(&self) -> Result<(), BadThresholds> {
        let [t1, t2] = self.thresholds;
        let h = self.hysteresis;
        if h > 0.0 && t1 - h > 0.0 && t1 < t2 && t2.is_finite() {
            Ok(())
        } else {
            Err(BadThresholds {
                thresholds: self.thresholds,
                hysteresis: h,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HapticKind {
    WarnOn(u8),
    WarnOff(u8),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HapticEvent {
    pub kind: HapticKind,
    pub speed_at_trigger: f64,
    pub t_sim: f64,
}

impl HapticEvent {
    pub fn level(&self) -> u8 {
        match self.kind {
            HapticKind::WarnOn(l) | HapticKind::WarnOff(l) => l,
        }
    }

    pub fn is_on(&self) -> bool {
        matches!(self.kind, HapticKind::WarnOn(_))
    }

    /// Actuator message for the glove: `{"vib":{"level":1,"on":true}}`.
    pub fn actuator_json(&self) -> String {
        format!(r#"{{"vib":{{"level":{},"on":{}}}}}"#, self.level(), self.is_on())
    }

    /// Console/log form, the actuator message plus trigger speed and time.
    pub fn console_json(&self) -> String {
        serde_json::json!({
            "vib": { "level": self.level(), "on": self.is_on() },
            "speed": self.speed_at_trigger,
            "t": self.t_sim,
        })
        .to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HapticMonitor {
    params: HapticParams,
    active: [bool; LEVELS],
}

impl HapticMonitor {
    pub fn new(params: HapticParams) -> Result<Self, BadThresholds> {
        params.validate()?;
        Ok(Self {
            params,
            active: [false; LEVELS],
        })
    }

    pub fn active(&self) -> [bool; LEVELS] {
        self.active
    }

    /// On-events are reported in ascending level order, off-events descending,
    /// so level 2 is never active without level 1.
    pub fn step(&mut self, speed: f64, t_sim: f64) -> Vec<HapticEvent> {
        let mut events = Vec::new();
        let ev = |kind| HapticEvent {
            kind,
            speed_at_trigger: speed,
            t_sim,
        };
        for level in (0..LEVELS).rev() {
            if self.active[level] && speed < self.params.thresholds[level] - self.params.hysteresis {
                self.active[level] = false;
                events.push(ev(HapticKind::WarnOff(level as u8 + 1)));
            }
        }
        for level in 0..LEVELS {
            if !self.active[level] && speed > self.params.thresholds[level] {
                self.active[level] = true;
                events.push(ev(HapticKind::WarnOn(level as u8 + 1)));
            }
        }
        events
    }

    pub fn monitor_step(&mut self, tel: &crate::sim::TelemetryPacket) -> Vec<HapticEvent> {
        self.step(tel.speed(), tel.t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(m: &mut HapticMonitor, trace: &[f64]) -> Vec<HapticKind> {
        trace.iter().flat_map(|&s| m.step(s, 0.0)).map(|e| e.kind).collect()
    }

    #[test]
    fn single_crossing() {
        let mut m = HapticMonitor::new(HapticParams::default()).unwrap();
        assert_eq!(kinds(&mut m, &[0.5, 0.8]), vec![HapticKind::WarnOn(1)]);
    }

    #[test]
    fn hysteresis_suppresses_chatter() {
        let mut m = HapticMonitor::new(HapticParams::default()).unwrap();
        assert_eq!(kinds(&mut m, &[0.72]), vec![HapticKind::WarnOn(1)]);
        let osc: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 0.68 } else { 0.72 }).collect();
        assert!(kinds(&mut m, &osc).is_empty());
        assert_eq!(kinds(&mut m, &[0.59]), vec![HapticKind::WarnOff(1)]);
    }

    #[test]
    fn jump_to_level_two_and_back() {
        let mut m = HapticMonitor::new(HapticParams::default()).unwrap();
        assert_eq!(kinds(&mut m, &[1.2]), vec![HapticKind::WarnOn(1), HapticKind::WarnOn(2)]);
        assert_eq!(kinds(&mut m, &[0.0]), vec![HapticKind::WarnOff(2), HapticKind::WarnOff(1)]);
    }

    #[test]
    fn rejects_bad_thresholds() {
        for p in [
            HapticParams { thresholds: [0.9, 0.7], hysteresis: 0.1 },
            HapticParams { thresholds: [0.7, 0.9], hysteresis: 0.0 },
            HapticParams { thresholds: [0.05, 0.9], hysteresis: 0.1 },
        ] {
            assert!(HapticMonitor::new(p).is_err());
        }
    }

    #[test]
    fn messages() {
        let e = HapticEvent { kind: HapticKind::WarnOn(1), speed_at_trigger: 0.75, t_sim: 2.0 };
        assert_eq!(e.actuator_json(), r#"{"vib":{"level":1,"on":true}}"#);
        let v: serde_json::Value = serde_json::from_str(&e.console_json()).unwrap();
        assert_eq!(v["vib"]["on"], true);
        assert_eq!(v["speed"], 0.75);
    }
}
