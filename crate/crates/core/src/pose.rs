//! Operator zero reference: manual reset, slow drift absorption near neutral
//! ("zero-back") and the finger lock that gates discrete gestures while the
//! wrist is actively commanding flight.

use nalgebra::UnitQuaternion;
use thiserror::Error;

use crate::fusion::attitude::{quat_to_euler, Euler};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseParams {
    /// Minimum estimator age before a reset is accepted, s.
    pub warmup_s: f64,
    /// Zero-back acts only while the relative rotation is below this, rad.
    pub zero_back_band: f64,
    /// Fraction of the remaining deviation removed per second.
    pub zero_back_rate: f64,
    /// Zero-back acts only while the gyro magnitude is below this, rad/s.
    pub still_gate: f64,
    /// Wrist roll/pitch deadzone that defines "active control", rad.
    pub lock_deadzone: f64,
    /// Time spent back inside the deadzone before gestures unlock, s.
    pub lock_release_s: f64,
}

impl Default for PoseParams {
    fn default() -> Self {
        Self {
            warmup_s: 1.0,
            zero_back_band: 5f64.to_radians(),
            zero_back_rate: 0.02,
            still_gate: 0.05,
            lock_deadzone: 5f64.to_radians(),
            lock_release_s: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("orientation estimators are not warm yet")]
pub struct EstimatorCold;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePose {
    pub q_ref: UnitQuaternion<f64>,
    /// Per-finger pitch at reset, rad.
    pub finger_ref: Vec<f64>,
    pub established: bool,
}

impl Default for ReferencePose {
    fn default() -> Self {
        Self {
            q_ref: UnitQuaternion::identity(),
            finger_ref: Vec::new(),
            established: false,
        }
    }
}

impl ReferencePose {
    /// Captures the current pose as the new zero. `estimator_age_s` is how long
    /// the filters have been running.
    pub fn reset(
        current_wrist: UnitQuaternion<f64>,
        current_fingers: &[f64],
        estimator_age_s: f64,
        params: &PoseParams,
    ) -> Result<Self, EstimatorCold> {
        if estimator_age_s < params.warmup_s {
            return Err(EstimatorCold);
        }
        Ok(Self {
            q_ref: current_wrist,
            finger_ref: current_fingers.to_vec(),
            established: true,
        })
    }

    pub fn relative_orientation(&self, current: &UnitQuaternion<f64>) -> Result<Euler, EstimatorCold> {
        if !self.established {
            return Err(EstimatorCold);
        }
        Ok(quat_to_euler(&(self.q_ref.inverse() * current)))
    }

    /// Finger pitches relative to their reset values.
    pub fn relative_fingers(&self, pitches: &[f64]) -> Vec<f64> {
        pitches
            .iter()
            .enumerate()
            .map(|(i, p)| p - self.finger_ref.get(i).copied().unwrap_or(0.0))
            .collect()
    }

    /// Slews `q_ref` toward `current` while the hand is still and close to
    /// neutral. Outside that band the reference is left untouched.
    pub fn zero_back_update(
        &mut self,
        current: &UnitQuaternion<f64>,
        gyro_mag: f64,
        dt: f64,
        params: &PoseParams,
    ) {
        if !self.established || !(gyro_mag < params.still_gate) || !(dt > 0.0) {
            return;
        }
        let deviation = self.q_ref.angle_to(current);
        if !(deviation < params.zero_back_band) || deviation == 0.0 {
            return;
        }
        let t = (params.zero_back_rate * dt).min(1.0);
        self.q_ref = self.q_ref.slerp(current, t);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LockState {
    pub locked: bool,
    /// Seconds left before unlocking, counting only time spent in the deadzone.
    pub unlock_timer: f64,
}

impl LockState {
    pub fn update(&mut self, wrist_relative: &Euler, dt: f64, params: &PoseParams) {
        let active = wrist_relative.roll.abs() > params.lock_deadzone
            || wrist_relative.pitch.abs() > params.lock_deadzone;
        if active {
            self.locked = true;
            self.unlock_timer = params.lock_release_s;
        } else if self.locked {
            self.unlock_timer -= dt.max(0.0);
            // Tolerate accumulated rounding from fixed-step dt sums.
            if self.unlock_timer <= 1e-9 {
                self.locked = false;
                self.unlock_timer = 0.0;
            }
        }
    }
}
