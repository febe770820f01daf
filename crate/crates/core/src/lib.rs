//! Search-based generation of lane-keeping road tests.
//!
//! Roads live in Frenet space as curvature profiles ([`geometry`]), a desk
//! simulator labels where a lane-keeping agent leaves its lane
//! ([`simulator`]), a causal transformer learns those labels
//! ([`discriminator`]) and serves as the fitness of a genetic algorithm
//! ([`evolution`]). [`analysis`] reproduces the budgeted evaluation.

pub mod analysis;
pub mod discriminator;
pub mod error;
pub mod evolution;
pub mod formats;
pub mod geometry;
pub mod plot;
pub mod simulator;
pub mod spline;

pub use error::{Error, Result};
pub use geometry::{genome_distance, reconstruct, validate, CartesianRoad, Pose, RoadGenome, ValidityReport, Violation};
pub use spline::smooth;
