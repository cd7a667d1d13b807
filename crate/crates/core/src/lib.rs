//! Deterministic 2D kinematic simulation of internal-angle transport.
//!
//! A "fluxon" carries an internal angle that advances with the polar angle of
//! its position relative to a charged source (coupling `xi`) and relative to
//! every particle of a random bath of integer-coupled charges. Individual
//! angles are randomized by the bath, but the change of the *relative* angle
//! between fluxons over a closed loop recovers `2*pi*n*xi` mod `2*pi`, where
//! `n` is the loop's winding number around the source.
//!
//! Modules follow the pipeline: [`geometry`] provides branch-cut-safe angle
//! accumulation, [`model`] declares worlds and prescribed trajectories,
//! [`dynamics`] advances the ledgers, [`experiments`] packages the scenario
//! builders, and [`stats`] holds the circular statistics used by the
//! ensemble analyses.

pub mod dynamics;
pub mod experiments;
pub mod geometry;
pub mod model;
pub mod stats;

pub use geometry::{Point2, UnwrappedAngle, WindingCount};
