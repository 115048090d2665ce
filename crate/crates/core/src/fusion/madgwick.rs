//! Madgwick gradient-descent orientation filter, IMU (gyro + accel) variant.
//!
//! The rate of change of the orientation quaternion is the gyro term
//! `½ q ⊗ (0, ω)` minus a step of size `β` along the normalized gradient of
//! `f(q) = q* ⊗ (0, 0, 0, 1) ⊗ q − â`, the mismatch between predicted and
//! measured gravity direction in the body frame.

use nalgebra::{Quaternion, UnitQuaternion};

use super::{complementary::accel_tilt, FilterError, ACCEL_GUARD};
use crate::fusion::attitude::{euler_to_quat, Euler};
use crate::wire::ImuReading;

pub const DEFAULT_BETA: f64 = 0.1;

const GRADIENT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuaternionState {
    q: UnitQuaternion<f64>,
    beta: f64,
    pub last_t_device: Option<u64>,
}

impl QuaternionState {
    pub fn new(beta: f64) -> Self {
        Self::with_orientation(UnitQuaternion::identity(), beta)
    }

    /// # Panics
    /// If `beta` is negative or not finite.
    pub fn with_orientation(q: UnitQuaternion<f64>, beta: f64) -> Self {
        assert!(beta >= 0.0 && beta.is_finite(), "beta must be a finite non-negative gain");
        Self {
            q,
            beta,
            last_t_device: None,
        }
    }

    pub fn orientation(&self) -> UnitQuaternion<f64> {
        self.q
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Initializes roll and pitch from the accelerometer, yaw zero.
    pub fn seed(&mut self, r: &ImuReading) {
        if let Ok([roll, pitch, _]) = accel_tilt(&r.accel) {
            self.q = euler_to_quat(Euler::new(roll, pitch, 0.0));
        }
    }

    pub fn update(&mut self, r: &ImuReading, dt: f64) -> Result<(), FilterError> {
        if !(dt > 0.0) {
            return Err(FilterError::NonPositiveDt(dt));
        }
        let q = self.q.into_inner();
        let (q0, q1, q2, q3) = (q.w, q.i, q.j, q.k);
        let (gx, gy, gz) = (r.gyro.x, r.gyro.y, r.gyro.z);

        // ½ q ⊗ (0, ω)
        let mut d0 = 0.5 * (-q1 * gx - q2 * gy - q3 * gz);
        let mut d1 = 0.5 * (q0 * gx + q2 * gz - q3 * gy);
        let mut d2 = 0.5 * (q0 * gy - q1 * gz + q3 * gx);
        let mut d3 = 0.5 * (q0 * gz + q1 * gy - q2 * gx);

        let a_norm = r.accel.norm();
        if a_norm > ACCEL_GUARD {
            let (ax, ay, az) = (r.accel.x / a_norm, r.accel.y / a_norm, r.accel.z / a_norm);

            let f1 = 2.0 * (q1 * q3 - q0 * q2) - ax;
            let f2 = 2.0 * (q0 * q1 + q2 * q3) - ay;
            let f3 = 2.0 * (0.5 - q1 * q1 - q2 * q2) - az;

            // Jᵀ f
            let s0 = -2.0 * q2 * f1 + 2.0 * q1 * f2;
            let s1 = 2.0 * q3 * f1 + 2.0 * q0 * f2 - 4.0 * q1 * f3;
            let s2 = -2.0 * q0 * f1 + 2.0 * q3 * f2 - 4.0 * q2 * f3;
            let s3 = 2.0 * q1 * f1 + 2.0 * q2 * f2;

            let s_norm = (s0 * s0 + s1 * s1 + s2 * s2 + s3 * s3).sqrt();
            // A residual at rounding level has no usable direction.
            if s_norm > GRADIENT_FLOOR {
                let k = self.beta / s_norm;
                d0 -= k * s0;
                d1 -= k * s1;
                d2 -= k * s2;
                d3 -= k * s3;
            }
        }

        let next = Quaternion::new(q0 + d0 * dt, q1 + d1 * dt, q2 + d2 * dt, q3 + d3 * dt);
        self.q = UnitQuaternion::new_normalize(next);
        Ok(())
    }
}
