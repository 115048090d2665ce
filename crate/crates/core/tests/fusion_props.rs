use handlink_core::fusion::attitude::{euler_to_quat, quat_to_euler, Euler};
use handlink_core::fusion::complementary::{accel_tilt, ComplementaryState};
use handlink_core::fusion::madgwick::QuaternionState;
use handlink_core::fusion::median::MedianWindow;
use handlink_core::ImuReading;
use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI};

/// Median of the trailing window by full sort; pass-through while filling.
fn sorted_median(xs: &[f64], k: usize, n: usize) -> f64 {
    let len = 2 * n + 1;
    if k + 1 < len {
        return xs[k];
    }
    let mut w = xs[k + 1 - len..=k].to_vec();
    w.sort_by(|a, b| a.partial_cmp(b).unwrap());
    w[n]
}

proptest! {
    #[test]
    fn median_matches_sort(n in prop::sample::select(vec![1usize, 2, 4]),
                           xs in prop::collection::vec(-1e3f64..1e3, 0..200)) {
        let mut m = MedianWindow::new(n);
        for (k, &x) in xs.iter().enumerate() {
            prop_assert_eq!(m.push(x), sorted_median(&xs, k, n));
        }
    }

    #[test]
    fn median_with_impulses(xs in prop::collection::vec(prop_oneof![
        8 => -1.0f64..1.0,
        1 => Just(1e9),
        1 => Just(-1e9),
    ], 5..100)) {
        let mut m = MedianWindow::new(2);
        for (k, &x) in xs.iter().enumerate() {
            prop_assert_eq!(m.push(x), sorted_median(&xs, k, 2));
        }
    }

    #[test]
    fn tilt_is_scale_invariant(ax in -20f64..20.0, ay in -20f64..20.0, az in -20f64..20.0, s in 0.1f64..100.0) {
        let a = Vector3::new(ax, ay, az);
        prop_assume!(a.norm() > 0.6 && a.norm() * s > 0.6);
        let t1 = accel_tilt(&a).unwrap();
        let t2 = accel_tilt(&(a * s)).unwrap();
        prop_assert!((t1[0] - t2[0]).abs() < 1e-12);
        prop_assert!((t1[1] - t2[1]).abs() < 1e-12);
    }

    #[test]
    fn euler_round_trip(roll in -PI..PI, pitch in -(FRAC_PI_2 - 1e-3)..(FRAC_PI_2 - 1e-3), yaw in -PI..PI) {
        let e = Euler::new(roll, pitch, yaw);
        let back = quat_to_euler(&euler_to_quat(e));
        let d = |a: f64, b: f64| (a - b + PI).rem_euclid(2.0 * PI) - PI;
        prop_assert!(d(back.roll, roll).abs() < 1e-9, "{:?} vs {:?}", back, e);
        prop_assert!((back.pitch - pitch).abs() < 1e-9);
        prop_assert!(d(back.yaw, yaw).abs() < 1e-9);
    }

    #[test]
    fn quaternion_round_trip_any_rotation(x in -1f64..1.0, y in -1f64..1.0, z in -1f64..1.0, angle in 0f64..PI) {
        let axis = Vector3::new(x, y, z);
        prop_assume!(axis.norm() > 1e-3);
        let q = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        let back = euler_to_quat(quat_to_euler(&q));
        prop_assert!(back.angle_to(&q) < 1e-6);
    }

    #[test]
    fn madgwick_stays_unit(steps in prop::collection::vec(
        (prop::array::uniform3(-5f64..5.0), prop::array::uniform3(-20f64..20.0)), 1..200)) {
        let mut s = QuaternionState::new(0.1);
        for (g, a) in steps {
            s.update(&ImuReading::new(g, a), 0.01).unwrap();
            let q = s.orientation().into_inner();
            prop_assert!((q.norm() - 1.0).abs() < 1e-12);
            prop_assert!(q.coords.iter().all(|c| c.is_finite()));
        }
    }

    #[test]
    fn complementary_converges_geometrically(alpha in 0f64..=1.0, tilt in -60f64..60.0) {
        let tilt = tilt.to_radians();
        let accel = Vector3::new(-tilt.sin(), 0.0, tilt.cos()) * 9.81;
        let mut s = ComplementaryState::new(alpha);
        let r = ImuReading { gyro: Vector3::zeros(), accel };
        let mut err = tilt;
        for _ in 0..200 {
            s.update(&r, 0.01).unwrap();
            err *= alpha;
            prop_assert!(((tilt - s.pitch) - err).abs() < 1e-12);
        }
    }
}
