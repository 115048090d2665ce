//! First-order complementary filter for the finger IMUs.
//!
//! Roll and pitch are tracked independently: the gyro-integrated angle
//! `θ_ω = θ_prev + ω·Δt` is blended with the accelerometer tilt as
//! `θ̂ = α·θ_ω + (1 − α)·θ_a`. Yaw is not observable and stays zero.

use super::{FilterError, ACCEL_GUARD};
use crate::wire::ImuReading;
use nalgebra::Vector3;

pub const DEFAULT_ALPHA: f64 = 0.98;

/// Accelerometer tilt `(θ_x, θ_y, θ_z)`, with `θ_z` fixed at zero.
pub fn accel_tilt(a: &Vector3<f64>) -> Result<[f64; 3], FilterError> {
    let norm = a.norm();
    if !(norm > ACCEL_GUARD) {
        return Err(FilterError::DegenerateAccel(norm));
    }
    let roll = a.y.atan2(a.z);
    let pitch = (-a.x).atan2((a.y * a.y + a.z * a.z).sqrt());
    Ok([roll, pitch, 0.0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplementaryState {
    pub roll: f64,
    pub pitch: f64,
    alpha: f64,
    pub last_t_device: Option<u64>,
}

impl ComplementaryState {
    /// # Panics
    /// If `alpha` is outside `[0, 1]`.
    pub fn new(alpha: f64) -> Self {
        assert!((0.0..=1.0).contains(&alpha), "alpha must lie in [0, 1]");
        Self {
            roll: 0.0,
            pitch: 0.0,
            alpha,
            last_t_device: None,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Starts from the accelerometer tilt instead of zero.
    pub fn seed(&mut self, r: &ImuReading) {
        if let Ok([roll, pitch, _]) = accel_tilt(&r.accel) {
            self.roll = roll;
            self.pitch = pitch;
        }
    }

    pub fn update(&mut self, r: &ImuReading, dt: f64) -> Result<(), FilterError> {
        if !(dt > 0.0) {
            return Err(FilterError::NonPositiveDt(dt));
        }
        let roll_w = self.roll + r.gyro.x * dt;
        let pitch_w = self.pitch + r.gyro.y * dt;
        match accel_tilt(&r.accel) {
            Ok([roll_a, pitch_a, _]) => {
                self.roll = self.alpha * roll_w + (1.0 - self.alpha) * roll_a;
                self.pitch = self.alpha * pitch_w + (1.0 - self.alpha) * pitch_a;
            }
            Err(_) => {
                self.roll = roll_w;
                self.pitch = pitch_w;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn tilt_cases() {
        assert_eq!(accel_tilt(&Vector3::new(0.0, 0.0, 9.81)).unwrap(), [0.0, 0.0, 0.0]);
        assert_eq!(accel_tilt(&Vector3::new(0.0, 9.81, 0.0)).unwrap(), [FRAC_PI_2, 0.0, 0.0]);
        // atan2(0, 0) = 0 for the roll term.
        assert_eq!(accel_tilt(&Vector3::new(-9.81, 0.0, 0.0)).unwrap(), [0.0, FRAC_PI_2, 0.0]);
    }

    #[test]
    fn tilt_guard() {
        assert!(matches!(
            accel_tilt(&Vector3::new(0.0, 0.0, 0.5)),
            Err(FilterError::DegenerateAccel(_))
        ));
        assert!(accel_tilt(&Vector3::new(0.0, 0.0, 0.51)).is_ok());
    }

    #[test]
    fn alpha_one_is_pure_gyro() {
        let mut s = ComplementaryState::new(1.0);
        s.update(&ImuReading::new([0.1, 0.0, 0.0], [3.0, -4.0, 2.0]), 0.01).unwrap();
        assert!((s.roll - 0.001).abs() < 1e-15);
        assert_eq!(s.pitch, 0.0);
    }

    #[test]
    fn alpha_zero_is_pure_accel() {
        let mut s = ComplementaryState::new(0.0);
        s.roll = 0.7;
        s.update(&ImuReading::new([5.0, -3.0, 1.0], [0.0, 0.0, 9.81]), 0.01).unwrap();
        assert_eq!((s.roll, s.pitch), (0.0, 0.0));
    }

    #[test]
    fn degenerate_accel_integrates_gyro() {
        let mut s = ComplementaryState::new(0.5);
        s.update(&ImuReading::new([0.2, -0.1, 0.0], [0.0; 3]), 0.1).unwrap();
        assert!((s.roll - 0.02).abs() < 1e-15);
        assert!((s.pitch + 0.01).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_dt() {
        let mut s = ComplementaryState::new(0.98);
        assert_eq!(
            s.update(&ImuReading::at_rest(), 0.0),
            Err(FilterError::NonPositiveDt(0.0))
        );
        assert!(s.update(&ImuReading::at_rest(), -1.0).is_err());
    }

    #[test]
    fn geometric_convergence_examples() {
        let tilt = 10f64.to_radians();
        let a = [-9.81 * tilt.sin(), 0.0, 9.81 * tilt.cos()];
        let mut s = ComplementaryState::new(0.98);
        for _ in 0..300 {
            s.update(&ImuReading::new([0.0; 3], a), 0.01).unwrap();
        }
        let err_deg = (tilt - s.pitch).to_degrees();
        assert!((err_deg - 10.0 * 0.98f64.powi(300)).abs() < 1e-10);
        assert!((err_deg - 0.023).abs() < 0.001);
    }
}
