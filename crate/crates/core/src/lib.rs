//! Core of the handlink glove teleoperation loop.
//!
//! The crate is organised along the three data flows of the system:
//!
//! * glove → host: [`wire`] decodes timestamped IMU packets, [`fusion`]
//!   estimates palm and finger orientation, [`pose`] keeps the operator's
//!   zero reference and [`gesture`] turns finger motion into discrete events;
//! * host → UAV: [`mapper`] converts wrist attitude and events into
//!   [`mapper::ControlCommand`]s which fly the kinematic [`sim`];
//! * UAV → host: [`sim::TelemetryPacket`]s feed the [`haptic`] speed monitor.
//!
//! [`pipeline`] wires the glove→command path into a single deterministic
//! state machine, [`emulator`] synthesizes glove packets from scripted poses
//! and [`session`] records, replays and aligns all streams.

pub mod channel;
pub mod config;
pub mod emulator;
pub mod fusion;
pub mod gesture;
pub mod haptic;
pub mod mapper;
pub mod pipeline;
pub mod pose;
pub mod session;
pub mod sim;
pub mod wire;

pub use fusion::attitude::{euler_to_quat, quat_to_euler, Euler};
pub use wire::{GlovePacket, ImuReading};

/// Standard gravity used by the emulator and tests, m/s².
pub const GRAVITY: f64 = 9.81;
