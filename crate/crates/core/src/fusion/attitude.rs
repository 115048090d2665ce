//! Quaternion ↔ Euler conversion, aerospace Z-Y-X intrinsic convention.
//!
//! A quaternion here rotates body-frame vectors into the world frame
//! (`R = Rz(yaw)·Ry(pitch)·Rx(roll)`), world z up.

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

/// `|sin(pitch)|` above this is treated as gimbal lock.
pub const GIMBAL_LOCK_THRESHOLD: f64 = 1.0 - 1e-6;

/// Roll, pitch, yaw in radians.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Euler {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Euler {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn from_degrees(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(roll.to_radians(), pitch.to_radians(), yaw.to_radians())
    }

    pub fn to_degrees(self) -> [f64; 3] {
        [self.roll.to_degrees(), self.pitch.to_degrees(), self.yaw.to_degrees()]
    }

    pub fn as_array(self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }
}

/// Wraps an angle to (-π, π].
pub fn wrap_pi(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

pub fn quat_to_euler(q: &UnitQuaternion<f64>) -> Euler {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    let sinp = 2.0 * (w * y - z * x);
    if sinp.abs() > GIMBAL_LOCK_THRESHOLD {
        // Only yaw - roll (or yaw + roll) is observable; roll is pinned to zero.
        let pitch = std::f64::consts::FRAC_PI_2.copysign(sinp);
        let yaw = if sinp > 0.0 {
            -2.0 * x.atan2(w)
        } else {
            2.0 * x.atan2(w)
        };
        return Euler::new(0.0, pitch, wrap_pi(yaw));
    }
    let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
    let pitch = sinp.asin();
    let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
    Euler::new(roll, pitch, yaw)
}

pub fn euler_to_quat(e: Euler) -> UnitQuaternion<f64> {
    let (sr, cr) = (e.roll * 0.5).sin_cos();
    let (sp, cp) = (e.pitch * 0.5).sin_cos();
    let (sy, cy) = (e.yaw * 0.5).sin_cos();
    UnitQuaternion::new_normalize(Quaternion::new(
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ))
}
