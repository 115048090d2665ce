//! Wrist attitude and gesture events → UAV velocity commands.
//!
//! Pitching the hand forward (negative pitch) flies forward, rolling right
//! flies right and yaw commands a yaw rate. Each axis has a deadzone and
//! saturates at the full-scale tilt. Altitude is a stepped absolute target.

use serde::{Deserialize, Serialize};

use crate::fusion::attitude::Euler;
use crate::gesture::{GestureEvent, GestureKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperCommand {
    #[default]
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapperParams {
    pub v_max: f64,
    pub omega_max: f64,
    pub deadzone: f64,
    pub full_scale: f64,
    pub altitude_step: f64,
    /// Velocity slew limit, m/s².
    pub accel_limit: f64,
    /// Yaw-rate slew limit, rad/s².
    pub yaw_accel_limit: f64,
}

impl Default for MapperParams {
    fn default() -> Self {
        Self {
            v_max: 1.0,
            omega_max: 0.8,
            deadzone: 5f64.to_radians(),
            full_scale: 30f64.to_radians(),
            altitude_step: 0.25,
            accel_limit: 2.0,
            yaw_accel_limit: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    /// m/s, positive forward.
    pub v_forward: f64,
    /// m/s, positive right.
    pub v_lateral: f64,
    /// Absolute altitude target, m.
    pub altitude_target: f64,
    /// rad/s, positive counterclockwise.
    pub yaw_rate: f64,
    pub gripper: GripperCommand,
    pub t_device: u64,
}

impl ControlCommand {
    pub fn hover(altitude_target: f64) -> Self {
        Self {
            v_forward: 0.0,
            v_lateral: 0.0,
            altitude_target,
            yaw_rate: 0.0,
            gripper: GripperCommand::Open,
            t_device: 0,
        }
    }

    /// Same altitude and gripper, zero motion.
    pub fn stopped(&self) -> Self {
        Self {
            v_forward: 0.0,
            v_lateral: 0.0,
            yaw_rate: 0.0,
            ..*self
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&WireCommand::from(self)).expect("command serializes")
    }

    pub fn from_json(text: &[u8]) -> Result<Self, serde_json::Error> {
        let w: WireCommand = serde_json::from_slice(text)?;
        Ok(w.into())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireCommandBody {
    vf: f64,
    vl: f64,
    alt: f64,
    yr: f64,
    grip: GripperCommand,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireCommand {
    cmd: WireCommandBody,
    t: u64,
}

impl From<&ControlCommand> for WireCommand {
    fn from(c: &ControlCommand) -> Self {
        Self {
            cmd: WireCommandBody {
                vf: c.v_forward,
                vl: c.v_lateral,
                alt: c.altitude_target,
                yr: c.yaw_rate,
                grip: c.gripper,
            },
            t: c.t_device,
        }
    }
}

impl From<WireCommand> for ControlCommand {
    fn from(w: WireCommand) -> Self {
        Self {
            v_forward: w.cmd.vf,
            v_lateral: w.cmd.vl,
            altitude_target: w.cmd.alt,
            yaw_rate: w.cmd.yr,
            gripper: w.cmd.grip,
            t_device: w.t,
        }
    }
}

/// Deadzone + linear ramp + saturation, odd in `angle`, range [-1, 1].
pub fn shape_axis(angle: f64, deadzone: f64, full_scale: f64) -> f64 {
    let mag = angle.abs();
    if !(mag > deadzone) {
        return 0.0;
    }
    ((mag - deadzone) / (full_scale - deadzone)).clamp(0.0, 1.0).copysign(angle)
}

/// Returns `(v_forward, v_lateral, yaw_rate)`.
pub fn map_attitude(wrist: &Euler, p: &MapperParams) -> (f64, f64, f64) {
    let s = |a: f64| shape_axis(a, p.deadzone, p.full_scale);
    let v_forward = p.v_max * s(-wrist.pitch);
    let v_lateral = p.v_max * s(wrist.roll);
    let yaw_rate = p.omega_max * s(wrist.yaw);
    (v_forward + 0.0, v_lateral + 0.0, yaw_rate + 0.0)
}

pub fn apply_events(cmd: &ControlCommand, events: &[GestureEvent], altitude_step: f64) -> ControlCommand {
    let mut out = *cmd;
    for ev in events {
        match ev.kind {
            GestureKind::GripClose => out.gripper = GripperCommand::Closed,
            GestureKind::GripOpen => out.gripper = GripperCommand::Open,
            GestureKind::AltitudeStepUp => out.altitude_target += altitude_step,
            GestureKind::AltitudeStepDown => {
                out.altitude_target = (out.altitude_target - altitude_step).max(0.0)
            }
        }
    }
    out
}

fn slew(prev: f64, next: f64, max_step: f64) -> f64 {
    let delta = next - prev;
    // Snap when within rounding of the limit so fixed-step ramps land exactly.
    if delta.abs() <= max_step * (1.0 + 1e-9) {
        next
    } else {
        prev + max_step.copysign(delta)
    }
}

/// Limits how fast the continuous channels move; altitude target, gripper and
/// timestamp come from `next` unchanged.
pub fn rate_limit(prev: &ControlCommand, next: &ControlCommand, dt: f64, p: &MapperParams) -> ControlCommand {
    let dt = dt.max(0.0);
    ControlCommand {
        v_forward: slew(prev.v_forward, next.v_forward, p.accel_limit * dt),
        v_lateral: slew(prev.v_lateral, next.v_lateral, p.accel_limit * dt),
        yaw_rate: slew(prev.yaw_rate, next.yaw_rate, p.yaw_accel_limit * dt),
        ..*next
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> MapperParams {
        MapperParams::default()
    }

    #[test]
    fn neutral_is_zero() {
        assert_eq!(map_attitude(&Euler::default(), &p()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn full_scale_forward() {
        let (vf, vl, yr) = map_attitude(&Euler::from_degrees(0.0, -30.0, 0.0), &p());
        assert!((vf - 1.0).abs() < 1e-12);
        assert_eq!((vl, yr), (0.0, 0.0));
    }

    #[test]
    fn midpoint_roll() {
        let (_, vl, _) = map_attitude(&Euler::from_degrees(17.5, 0.0, 0.0), &p());
        assert!((vl - 0.5).abs() < 1e-12);
    }

    #[test]
    fn deadzone_edge_and_sign() {
        let (vf, vl, yr) = map_attitude(&Euler::from_degrees(-5.0, 5.0, -5.0), &p());
        assert_eq!((vf, vl, yr), (0.0, 0.0, 0.0));
        assert!(vf.is_sign_positive() && vl.is_sign_positive() && yr.is_sign_positive());
        let (_, _, yr) = map_attitude(&Euler::from_degrees(0.0, 0.0, 40.0), &p());
        assert!((yr - 0.8).abs() < 1e-12);
    }

    #[test]
    fn events_update_command() {
        let base = ControlCommand::hover(1.0);
        assert_eq!(apply_events(&base, &[], 0.25), base);
        let up = apply_events(&base, &[GestureEvent { kind: GestureKind::AltitudeStepUp, t_device: 0 }], 0.25);
        assert!((up.altitude_target - 1.25).abs() < 1e-12);
        let low = ControlCommand::hover(0.1);
        let down = apply_events(&low, &[GestureEvent { kind: GestureKind::AltitudeStepDown, t_device: 0 }], 0.25);
        assert_eq!(down.altitude_target, 0.0);
        let grip = apply_events(&base, &[GestureEvent { kind: GestureKind::GripClose, t_device: 0 }], 0.25);
        assert_eq!(grip.gripper, GripperCommand::Closed);
    }

    #[test]
    fn slew_arithmetic() {
        let prev = ControlCommand::hover(1.0);
        let next = ControlCommand { v_forward: 1.0, ..prev };
        let out = rate_limit(&prev, &next, 0.01, &p());
        assert!((out.v_forward - 0.02).abs() < 1e-15);
        assert_eq!(rate_limit(&next, &next, 0.01, &p()), next);
    }

    #[test]
    fn step_reaches_setpoint_in_expected_ticks() {
        let params = p();
        for &(v_max, dt) in &[(1.0, 0.01), (0.7, 0.01), (1.0, 0.02), (0.33, 0.005)] {
            let expected = (v_max / (params.accel_limit * dt) - 1e-9).ceil() as usize;
            let target = ControlCommand { v_forward: v_max, ..ControlCommand::hover(1.0) };
            let mut cmd = ControlCommand::hover(1.0);
            let mut ticks = 0;
            while cmd.v_forward != v_max {
                cmd = rate_limit(&cmd, &target, dt, &params);
                ticks += 1;
                assert!(ticks <= expected, "overshot tick budget for {v_max} @ {dt}");
            }
            assert_eq!(ticks, expected, "{v_max} @ {dt}");
        }
    }

    #[test]
    fn command_wire_format() {
        let c = ControlCommand { t_device: 5, ..ControlCommand::hover(1.0) };
        assert_eq!(
            c.to_json(),
            r#"{"cmd":{"vf":0.0,"vl":0.0,"alt":1.0,"yr":0.0,"grip":"open"},"t":5}"#
        );
        assert_eq!(ControlCommand::from_json(c.to_json().as_bytes()).unwrap(), c);
    }
}
