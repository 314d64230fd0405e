//! Data-driven kinematic control for a three-tendon continuum robot: a
//! synthetic plant, a benchmark of eight regressors, polynomial distillation
//! of the learned map and closed-loop validation of the resulting controller.

pub mod cli;
pub mod dataset;
pub mod distill;
pub mod error;
pub mod evalkit;
pub mod models;
pub mod numerics;
pub mod plant;

pub use error::{Error, Result};
pub use models::{fit, Family, RegressorSpec, TrainedModel};
pub use plant::{PlantParams, PlantPreset, PoseAngles, TendonDelta};
