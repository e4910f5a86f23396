//! Downlink channel acquisition for FDD massive MIMO with shifted-FFT
//! pilots, path aligning of the time-domain aggregate channel, Kalman
//! tracking at the mobile, and compressed feedback recovered at the base
//! station.

pub mod channel_model;
pub mod csi_feedback_dumb;
pub mod csi_feedback_smart;
pub mod error;
pub mod kalman_smart_ms;
pub mod linalg;
pub mod mmse_estimation;
pub mod path_align;
pub mod pilots_tac;
pub mod precoding_metrics;
pub mod selftest;
pub mod sim_harness;

pub use error::{Error, Result};
