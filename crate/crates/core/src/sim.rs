//! Kinematic UAV with a gripper.
//!
//! Horizontal velocity follows the commanded body-frame setpoint through a
//! first-order lag, altitude tracks the stepped target through a saturated
//! first-order position loop and yaw integrates the commanded rate. The
//! gripper needs a fixed travel time to open or close. Integration is
//! fixed-step explicit Euler.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::attitude::wrap_pi;
use crate::mapper::{ControlCommand, GripperCommand};

pub const DEFAULT_SIM_DT: f64 = 0.01;
pub const DEFAULT_TELEMETRY_HZ: f64 = 50.0;
pub const MAX_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SimError {
    #[error("simulation step {0} outside (0, {MAX_DT}]")]
    InvalidDt(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspZone {
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    /// Horizontal velocity time constant, s.
    pub tau: f64,
    /// Altitude loop time constant, s.
    pub tau_z: f64,
    /// Climb/descent rate limit, m/s.
    pub vz_max: f64,
    pub gripper_travel_s: f64,
    /// Used only for the speed sanity bound of 1.5·v_max.
    pub v_max: f64,
    pub grasp_zone: Option<GraspZone>,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            tau: 0.3,
            tau_z: 1.0,
            vz_max: 0.5,
            gripper_travel_s: 0.5,
            v_max: 1.0,
            grasp_zone: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GripperState {
    Open,
    Closed,
    /// `progress` runs from 0 to 1 toward `toward`.
    Moving { toward: GripperCommand, progress: f64 },
}

impl GripperState {
    pub fn as_str(&self) -> &'static str {
        match self {
            GripperState::Open => "open",
            GripperState::Closed => "closed",
            GripperState::Moving { .. } => "moving",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspObject {
    pub position: Vector3<f64>,
    pub grasped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UavState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub yaw: f64,
    pub gripper: GripperState,
    pub t_sim: f64,
    pub object: Option<GraspObject>,
}

impl UavState {
    pub fn at(position: [f64; 3], params: &SimParams) -> Self {
        Self {
            position: Vector3::from(position),
            velocity: Vector3::zeros(),
            yaw: 0.0,
            gripper: GripperState::Open,
            t_sim: 0.0,
            object: params.grasp_zone.map(|z| GraspObject {
                position: Vector3::from(z.center),
                grasped: false,
            }),
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    pub fn object_grasped(&self) -> bool {
        self.object.is_some_and(|o| o.grasped)
    }

    pub fn step(&mut self, cmd: &ControlCommand, dt: f64, params: &SimParams) -> Result<(), SimError> {
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(SimError::InvalidDt(dt));
        }
        self.position += self.velocity * dt;
        if self.position.z < 0.0 {
            self.position.z = 0.0;
        }

        let (s, c) = self.yaw.sin_cos();
        let vx_cmd = cmd.v_forward * c + cmd.v_lateral * s;
        let vy_cmd = cmd.v_forward * s - cmd.v_lateral * c;
        self.velocity.x += dt * (vx_cmd - self.velocity.x) / params.tau;
        self.velocity.y += dt * (vy_cmd - self.velocity.y) / params.tau;
        let target_z = cmd.altitude_target.max(0.0);
        self.velocity.z = ((target_z - self.position.z) / params.tau_z).clamp(-params.vz_max, params.vz_max);
        if self.position.z <= 0.0 && self.velocity.z < 0.0 {
            self.velocity.z = 0.0;
        }
        let bound = 1.5 * params.v_max;
        let speed = self.velocity.norm();
        if speed > bound {
            self.velocity *= bound / speed;
        }

        self.yaw = wrap_pi(self.yaw + cmd.yaw_rate * dt);
        self.step_gripper(cmd.gripper, dt, params);
        if let Some(obj) = self.object.as_mut().filter(|o| o.grasped) {
            obj.position = self.position;
        }
        self.t_sim += dt;
        Ok(())
    }

    fn step_gripper(&mut self, want: GripperCommand, dt: f64, params: &SimParams) {
        let advance = dt / params.gripper_travel_s;
        self.gripper = match (self.gripper, want) {
            (GripperState::Open, GripperCommand::Open) => GripperState::Open,
            (GripperState::Closed, GripperCommand::Closed) => GripperState::Closed,
            (GripperState::Open, GripperCommand::Closed) | (GripperState::Closed, GripperCommand::Open) => {
                GripperState::Moving { toward: want, progress: advance }
            }
            (GripperState::Moving { toward, progress }, want) => {
                let progress = if toward == want { progress + advance } else { 1.0 - progress + advance };
                GripperState::Moving { toward: want, progress }
            }
        };
        if let GripperState::Moving { toward, progress } = self.gripper {
            if toward == GripperCommand::Open {
                self.release_object();
            }
            if progress >= 1.0 - 1e-9 {
                self.gripper = match toward {
                    GripperCommand::Open => GripperState::Open,
                    GripperCommand::Closed => GripperState::Closed,
                };
                if toward == GripperCommand::Closed {
                    self.try_grasp(params);
                }
            }
        }
    }

    fn try_grasp(&mut self, params: &SimParams) {
        let (Some(zone), Some(obj)) = (params.grasp_zone, self.object.as_mut()) else {
            return;
        };
        if !obj.grasped && (self.position - obj.position).norm() <= zone.radius {
            obj.grasped = true;
            log::info!("object grasped at t={:.2}s", self.t_sim);
        }
    }

    fn release_object(&mut self) {
        if let Some(obj) = self.object.as_mut().filter(|o| o.grasped) {
            obj.grasped = false;
            obj.position = self.position;
            log::info!("object released at t={:.2}s", self.t_sim);
        }
    }
}

/// `{"tel":{"p":[x,y,z],"v":[vx,vy,vz],"yaw":0.0,"grip":"open","speed":0.0},"seq":0,"t":0.0}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryPacket {
    pub tel: TelemetryBody,
    pub seq: u64,
    /// Simulation time, s.
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemetryBody {
    pub p: [f64; 3],
    pub v: [f64; 3],
    pub yaw: f64,
    pub grip: String,
    pub speed: f64,
}

impl TelemetryPacket {
    pub fn from_state(state: &UavState, seq: u64) -> Self {
        Self {
            tel: TelemetryBody {
                p: state.position.into(),
                v: state.velocity.into(),
                yaw: state.yaw,
                grip: state.gripper.as_str().to_owned(),
                speed: state.speed(),
            },
            seq,
            t: state.t_sim,
        }
    }

    pub fn speed(&self) -> f64 {
        self.tel.speed
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("telemetry serializes")
    }

    pub fn from_json(text: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(text)
    }

    /// Velocity along the vehicle's heading, m/s.
    pub fn forward_speed(&self) -> f64 {
        let (s, c) = self.tel.yaw.sin_cos();
        self.tel.v[0] * c + self.tel.v[1] * s
    }
}

/// Decimates the simulation rate down to the telemetry rate.
#[derive(Debug, Clone)]
pub struct TelemetryClock {
    every: u64,
    steps: u64,
    seq: u64,
}

impl TelemetryClock {
    pub fn new(sim_dt: f64, telemetry_hz: f64) -> Self {
        let every = (1.0 / (sim_dt * telemetry_hz)).round().max(1.0) as u64;
        Self { every, steps: 0, seq: 0 }
    }

    /// Call once per simulation step, after stepping.
    pub fn tick(&mut self, state: &UavState) -> Option<TelemetryPacket> {
        self.steps += 1;
        if !self.steps.is_multiple_of(self.every) {
            return None;
        }
        let pkt = TelemetryPacket::from_state(state, self.seq);
        self.seq += 1;
        Some(pkt)
    }
}

/// Records the closest approach to each waypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointTracker {
    pub waypoints: Vec<[f64; 3]>,
    pub tolerance: f64,
    pub closest: Vec<f64>,
}

impl WaypointTracker {
    pub fn new(waypoints: Vec<[f64; 3]>, tolerance: f64) -> Self {
        let closest = vec![f64::INFINITY; waypoints.len()];
        Self {
            waypoints,
            tolerance,
            closest,
        }
    }

    pub fn observe(&mut self, position: &Vector3<f64>) {
        for (wp, best) in self.waypoints.iter().zip(self.closest.iter_mut()) {
            let d = (position - Vector3::from(*wp)).norm();
            if d < *best {
                *best = d;
            }
        }
    }

    pub fn reached(&self) -> Vec<bool> {
        self.closest.iter().map(|d| *d <= self.tolerance).collect()
    }

    pub fn all_reached(&self) -> bool {
        self.closest.iter().all(|d| *d <= self.tolerance)
    }
}
