//! 360° relative localization from an equirectangular camera.
//!
//! The sphere is split into overlapping circular caps ([`partition`]), each
//! cap is rectified to a square pinhole tile ([`rectifier`]), tiles are
//! searched for square fiducials ([`fiducial`]) in a last-seen-first order
//! ([`tracker`]), and [`sim`] provides a ground-truth scene generator.

pub mod config;
pub mod error;
pub mod fiducial;
pub mod partition;
pub mod rectifier;
pub mod report;
pub mod sim;
pub mod sphere_geometry;
pub mod tracker;

pub use error::{Error, Result};
