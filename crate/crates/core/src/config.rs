//! TOML configuration shared by every subcommand. Angles are in degrees
//! here and converted to radians when building module parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gesture::GestureParams;
use crate::haptic::HapticParams;
use crate::mapper::MapperParams;
use crate::pose::PoseParams;
use crate::sim::{GraspZone, SimParams};
use crate::wire::{self, SessionHeader};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize configuration: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Address the pipeline and simulator bind to.
    pub bind: String,
    pub glove_port: u16,
    pub telemetry_port: u16,
    pub command_port: u16,
    pub actuator_port: u16,
    pub console_port: u16,
    /// Where the pipeline sends commands.
    pub uav_host: String,
    /// Where the pipeline sends actuator messages and emulator pose updates.
    pub glove_host: String,
    /// Where the emulator and simulator send their streams.
    pub pipeline_host: String,
    /// Capacity of the inbound FIFO between socket readers and the pipeline.
    pub queue_capacity: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            glove_port: wire::DEFAULT_GLOVE_PORT,
            telemetry_port: wire::DEFAULT_TELEMETRY_PORT,
            command_port: wire::DEFAULT_COMMAND_PORT,
            actuator_port: wire::DEFAULT_ACTUATOR_PORT,
            console_port: 8080,
            uav_host: "127.0.0.1".into(),
            glove_host: "127.0.0.1".into(),
            pipeline_host: "127.0.0.1".into(),
            queue_capacity: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GloveConfig {
    pub fingers: usize,
    pub rate_hz: u32,
}

impl Default for GloveConfig {
    fn default() -> Self {
        Self {
            fingers: wire::DEFAULT_FINGER_COUNT,
            rate_hz: wire::DEFAULT_RATE_HZ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub median_half_width: usize,
    pub alpha: f64,
    pub beta: f64,
    pub calibration_samples: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            median_half_width: crate::fusion::median::DEFAULT_HALF_WIDTH,
            alpha: crate::fusion::complementary::DEFAULT_ALPHA,
            beta: crate::fusion::madgwick::DEFAULT_BETA,
            calibration_samples: crate::fusion::offset::MIN_CALIBRATION_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseConfig {
    pub warmup_s: f64,
    pub zero_back_band_deg: f64,
    pub zero_back_rate: f64,
    pub still_gate: f64,
    pub lock_release_s: f64,
    /// Capture the reference automatically once the estimators are warm.
    pub auto_reset: bool,
}

impl Default for PoseConfig {
    fn default() -> Self {
        Self {
            warmup_s: 1.0,
            zero_back_band_deg: 5.0,
            zero_back_rate: 0.02,
            still_gate: 0.05,
            lock_release_s: 0.3,
            auto_reset: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GestureConfig {
    pub close_deg: f64,
    pub open_deg: f64,
    pub altitude_window_s: f64,
    pub step_down_yaw_deg: f64,
}

impl Default for GestureConfig {
    fn default() -> Self {
        Self {
            close_deg: -50.0,
            open_deg: -30.0,
            altitude_window_s: 0.5,
            step_down_yaw_deg: -15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapperConfig {
    pub v_max: f64,
    pub omega_max: f64,
    pub deadzone_deg: f64,
    pub full_scale_deg: f64,
    pub altitude_step: f64,
    pub accel_limit: f64,
    pub yaw_accel_limit: f64,
    pub watchdog_s: f64,
    pub initial_altitude: f64,
    pub start_armed: bool,
}

impl Default for MapperConfig {
    fn default() -> Self {
        Self {
            v_max: 1.0,
            omega_max: 0.8,
            deadzone_deg: 5.0,
            full_scale_deg: 30.0,
            altitude_step: 0.25,
            accel_limit: 2.0,
            yaw_accel_limit: 4.0,
            watchdog_s: 0.2,
            initial_altitude: 1.0,
            start_armed: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub telemetry_hz: f64,
    pub tau: f64,
    pub tau_z: f64,
    pub vz_max: f64,
    pub gripper_travel_s: f64,
    pub spawn: [f64; 3],
    pub waypoint_tolerance: f64,
    pub waypoints: Vec<[f64; 3]>,
    pub grasp_zone: Option<GraspZone>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: crate::sim::DEFAULT_SIM_DT,
            telemetry_hz: crate::sim::DEFAULT_TELEMETRY_HZ,
            tau: 0.3,
            tau_z: 1.0,
            vz_max: 0.5,
            gripper_travel_s: 0.5,
            spawn: [0.0, 0.0, 1.0],
            waypoint_tolerance: 0.3,
            waypoints: Vec::new(),
            grasp_zone: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HapticConfig {
    pub warn_speed: f64,
    pub alarm_speed: f64,
    pub hysteresis: f64,
}

impl Default for HapticConfig {
    fn default() -> Self {
        let p = HapticParams::default();
        Self {
            warn_speed: p.thresholds[0],
            alarm_speed: p.thresholds[1],
            hysteresis: p.hysteresis,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmulatorConfig {
    pub gyro_noise: f64,
    pub accel_noise: f64,
    pub gyro_bias: [f64; 3],
    pub seed: u64,
}

impl Default for EmulatorConfig {
    fn default() -> Self {
        Self {
            gyro_noise: 0.005,
            accel_noise: 0.05,
            gyro_bias: [0.0; 3],
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub net: NetConfig,
    pub glove: GloveConfig,
    pub filters: FilterConfig,
    pub pose: PoseConfig,
    pub gesture: GestureConfig,
    pub mapper: MapperConfig,
    pub sim: SimConfig,
    pub haptic: HapticConfig,
    pub emulator: EmulatorConfig,
}

fn check(ok: bool, what: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Invalid(what.to_owned()))
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let f = &self.filters;
        check((0.0..=1.0).contains(&f.alpha), "filters.alpha must lie in [0, 1]")?;
        check(f.beta >= 0.0 && f.beta.is_finite(), "filters.beta must be >= 0")?;
        check(f.median_half_width >= 1, "filters.median_half_width must be >= 1")?;
        check(
            f.calibration_samples >= crate::fusion::offset::MIN_CALIBRATION_SAMPLES,
            "filters.calibration_samples must be >= 100",
        )?;
        let g = &self.glove;
        check(
            (1..=wire::MAX_FINGERS).contains(&g.fingers),
            "glove.fingers must be between 1 and 5",
        )?;
        check(g.rate_hz > 0, "glove.rate_hz must be positive")?;
        let p = &self.pose;
        check(p.warmup_s >= 0.0, "pose.warmup_s must be >= 0")?;
        check(positive(p.zero_back_band_deg), "pose.zero_back_band_deg must be positive")?;
        check(p.zero_back_rate >= 0.0, "pose.zero_back_rate must be >= 0")?;
        check(positive(p.still_gate), "pose.still_gate must be positive")?;
        check(p.lock_release_s >= 0.0, "pose.lock_release_s must be >= 0")?;
        let ge = &self.gesture;
        check(ge.close_deg < ge.open_deg, "gesture.close_deg must be below gesture.open_deg")?;
        check(positive(ge.altitude_window_s), "gesture.altitude_window_s must be positive")?;
        let m = &self.mapper;
        check(positive(m.v_max), "mapper.v_max must be positive")?;
        check(positive(m.omega_max), "mapper.omega_max must be positive")?;
        check(
            m.deadzone_deg >= 0.0 && m.deadzone_deg < m.full_scale_deg,
            "mapper.deadzone_deg must be >= 0 and below mapper.full_scale_deg",
        )?;
        check(positive(m.altitude_step), "mapper.altitude_step must be positive")?;
        check(positive(m.accel_limit), "mapper.accel_limit must be positive")?;
        check(positive(m.yaw_accel_limit), "mapper.yaw_accel_limit must be positive")?;
        check(positive(m.watchdog_s), "mapper.watchdog_s must be positive")?;
        check(m.initial_altitude >= 0.0, "mapper.initial_altitude must be >= 0")?;
        let s = &self.sim;
        check(s.dt > 0.0 && s.dt <= crate::sim::MAX_DT, "sim.dt must lie in (0, 0.1]")?;
        check(positive(s.telemetry_hz), "sim.telemetry_hz must be positive")?;
        check(positive(s.tau) && positive(s.tau_z), "sim time constants must be positive")?;
        check(positive(s.vz_max), "sim.vz_max must be positive")?;
        check(positive(s.gripper_travel_s), "sim.gripper_travel_s must be positive")?;
        check(s.spawn[2] >= 0.0, "sim.spawn must not be below ground")?;
        check(s.waypoint_tolerance > 0.0, "sim.waypoint_tolerance must be positive")?;
        if let Some(z) = &s.grasp_zone {
            check(positive(z.radius), "sim.grasp_zone.radius must be positive")?;
        }
        self.haptic_params()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let e = &self.emulator;
        check(e.gyro_noise >= 0.0 && e.accel_noise >= 0.0, "emulator noise must be >= 0")?;
        check(self.net.queue_capacity > 0, "net.queue_capacity must be positive")?;
        Ok(())
    }

    pub fn header(&self) -> SessionHeader {
        SessionHeader::new(self.glove.fingers, self.glove.rate_hz)
    }

    pub fn pose_params(&self) -> PoseParams {
        PoseParams {
            warmup_s: self.pose.warmup_s,
            zero_back_band: self.pose.zero_back_band_deg.to_radians(),
            zero_back_rate: self.pose.zero_back_rate,
            still_gate: self.pose.still_gate,
            lock_deadzone: self.mapper.deadzone_deg.to_radians(),
            lock_release_s: self.pose.lock_release_s,
        }
    }

    pub fn gesture_params(&self) -> GestureParams {
        GestureParams {
            close_below: self.gesture.close_deg.to_radians(),
            open_above: self.gesture.open_deg.to_radians(),
            altitude_window_s: self.gesture.altitude_window_s,
            step_down_yaw: self.gesture.step_down_yaw_deg.to_radians(),
        }
    }

    pub fn mapper_params(&self) -> MapperParams {
        let m = &self.mapper;
        MapperParams {
            v_max: m.v_max,
            omega_max: m.omega_max,
            deadzone: m.deadzone_deg.to_radians(),
            full_scale: m.full_scale_deg.to_radians(),
            altitude_step: m.altitude_step,
            accel_limit: m.accel_limit,
            yaw_accel_limit: m.yaw_accel_limit,
        }
    }

    pub fn sim_params(&self) -> SimParams {
        let s = &self.sim;
        SimParams {
            tau: s.tau,
            tau_z: s.tau_z,
            vz_max: s.vz_max,
            gripper_travel_s: s.gripper_travel_s,
            v_max: self.mapper.v_max,
            grasp_zone: s.grasp_zone,
        }
    }

    pub fn haptic_params(&self) -> HapticParams {
        HapticParams {
            thresholds: [self.haptic.warn_speed, self.haptic.alarm_speed],
            hysteresis: self.haptic.hysteresis,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn alpha_out_of_range_rejected() {
        let err = Config::from_toml("[filters]\nalpha = 1.5\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(ref m) if m.contains("alpha")), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(Config::from_toml("[filters]\ngamma = 1\n"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = Config::from_toml("[mapper]\nv_max = 2.0\n").unwrap();
        assert_eq!(cfg.mapper.v_max, 2.0);
        assert_eq!(cfg.filters, FilterConfig::default());
    }

    #[test]
    fn round_trip_through_toml() {
        let mut cfg = Config::default();
        cfg.sim.grasp_zone = Some(GraspZone { center: [2.0, -0.5, 0.75], radius: 0.3 });
        cfg.sim.waypoints = vec![[1.0, 2.0, 1.0], [0.1, 0.2, 0.3]];
        cfg.filters.alpha = 0.97;
        cfg.emulator.gyro_bias = [0.001, -0.002, 0.0];
        let text = cfg.to_toml().unwrap();
        let back = Config::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml().unwrap(), text);
    }
}
