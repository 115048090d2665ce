//! Orientation estimation for the glove IMUs.
//!
//! Each IMU runs its own chain: [`median::ImuMedian`] outlier suppression,
//! [`offset::ZeroOffset`] gyro bias removal, then either the
//! [`complementary::ComplementaryState`] (fingers) or the
//! [`madgwick::QuaternionState`] (wrist/palm).

pub mod attitude;
pub mod complementary;
pub mod madgwick;
pub mod median;
pub mod offset;

use thiserror::Error;

/// Accelerometer magnitudes at or below this are treated as free fall.
pub const ACCEL_GUARD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum FilterError {
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("accelerometer magnitude {0} too small for a tilt estimate")]
    DegenerateAccel(f64),
}
