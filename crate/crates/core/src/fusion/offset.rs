//! Gyro zero-offset estimation from a rest window.

use nalgebra::Vector3;
use thiserror::Error;

use crate::wire::ImuReading;

pub const MIN_CALIBRATION_SAMPLES: usize = 100;
/// Maximum deviation of any gyro axis from the running mean while at rest, rad/s.
pub const MOTION_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CalibrationError {
    #[error("calibration needs at least {MIN_CALIBRATION_SAMPLES} samples, got {0}")]
    InsufficientSamples(usize),
    #[error("motion detected at calibration sample {index} (deviation {deviation:.3} rad/s)")]
    MotionDuringCalibration { index: usize, deviation: f64 },
}

/// Frozen gyro bias. The accelerometer is not corrected since gravity is
/// present during the rest window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroOffset {
    pub gyro_bias: Vector3<f64>,
    pub samples: usize,
}

impl ZeroOffset {
    pub fn none() -> Self {
        Self {
            gyro_bias: Vector3::zeros(),
            samples: 0,
        }
    }

    pub fn calibrate(samples: &[ImuReading]) -> Result<Self, CalibrationError> {
        if samples.len() < MIN_CALIBRATION_SAMPLES {
            return Err(CalibrationError::InsufficientSamples(samples.len()));
        }
        let mut mean = Vector3::zeros();
        for (i, s) in samples.iter().enumerate() {
            if i > 0 {
                let deviation = (s.gyro - mean).amax();
                if deviation > MOTION_THRESHOLD {
                    return Err(CalibrationError::MotionDuringCalibration { index: i, deviation });
                }
            }
            mean += (s.gyro - mean) / (i + 1) as f64;
        }
        // Recompute with a plain sum so the bias is exactly the arithmetic mean.
        let sum: Vector3<f64> = samples.iter().map(|s| s.gyro).sum();
        Ok(Self {
            gyro_bias: sum / samples.len() as f64,
            samples: samples.len(),
        })
    }

    pub fn apply(&self, r: &ImuReading) -> ImuReading {
        ImuReading {
            gyro: r.gyro - self.gyro_bias,
            accel: r.accel,
        }
    }
}

/// Collects rest samples until `target` is reached, then freezes the bias.
/// Motion restarts the window.
#[derive(Debug, Clone)]
pub struct OffsetCalibrator {
    target: usize,
    window: Vec<ImuReading>,
    offset: Option<ZeroOffset>,
}

impl OffsetCalibrator {
    pub fn new(target: usize) -> Self {
        Self {
            target: target.max(MIN_CALIBRATION_SAMPLES),
            window: Vec::new(),
            offset: None,
        }
    }

    pub fn offset(&self) -> Option<ZeroOffset> {
        self.offset
    }

    /// Feeds one sample and returns it bias-compensated (uncorrected until
    /// calibration completes).
    pub fn process(&mut self, r: &ImuReading) -> ImuReading {
        if let Some(off) = &self.offset {
            return off.apply(r);
        }
        self.window.push(*r);
        if self.window.len() >= self.target {
            match ZeroOffset::calibrate(&self.window) {
                Ok(off) => {
                    log::debug!("gyro bias calibrated: {:?}", off.gyro_bias);
                    self.offset = Some(off);
                    self.window = Vec::new();
                }
                Err(e) => {
                    log::warn!("zero-offset calibration restarted: {e}");
                    self.window.clear();
                }
            }
        }
        *r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn constant(n: usize, g: [f64; 3]) -> Vec<ImuReading> {
        vec![ImuReading::new(g, [0.0, 0.0, 9.81]); n]
    }

    #[test]
    fn constant_bias_is_recovered() {
        let off = ZeroOffset::calibrate(&constant(100, [0.01, -0.02, 0.0])).unwrap();
        assert!((off.gyro_bias - Vector3::new(0.01, -0.02, 0.0)).norm() < 1e-15);
        let r = off.apply(&ImuReading::new([0.01, -0.02, 0.0], [1.0, 2.0, 3.0]));
        assert!(r.gyro.norm() < 1e-15);
        assert_eq!(r.accel, Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn too_few_samples() {
        assert_eq!(
            ZeroOffset::calibrate(&constant(99, [0.0; 3])),
            Err(CalibrationError::InsufficientSamples(99))
        );
    }

    #[test]
    fn motion_is_rejected() {
        let mut s = constant(200, [0.0; 3]);
        s[150].gyro.y = 0.5;
        assert!(matches!(
            ZeroOffset::calibrate(&s),
            Err(CalibrationError::MotionDuringCalibration { index: 150, .. })
        ));
    }

    #[test]
    fn noise_mean_within_standard_error() {
        let sigma = 0.01;
        let n = 1000;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let normal = Normal::new(0.0, sigma).unwrap();
        let samples: Vec<_> = (0..n)
            .map(|_| {
                ImuReading::new(
                    [normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)],
                    [0.0, 0.0, 9.81],
                )
            })
            .collect();
        let off = ZeroOffset::calibrate(&samples).unwrap();
        let bound = 3.0 * sigma / (n as f64).sqrt();
        assert!(off.gyro_bias.amax() < bound, "{:?} vs {bound}", off.gyro_bias);
    }

    #[test]
    fn calibrator_freezes_after_window() {
        let mut c = OffsetCalibrator::new(100);
        let r = ImuReading::new([0.02, 0.0, 0.0], [0.0, 0.0, 9.81]);
        for _ in 0..99 {
            assert_eq!(c.process(&r).gyro.x, 0.02);
        }
        c.process(&r);
        assert!(c.offset().is_some());
        assert!(c.process(&r).gyro.x.abs() < 1e-15);
    }
}
