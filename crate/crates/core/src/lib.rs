pub mod baseline;
pub mod cli;
pub mod csdf;
pub mod error;
pub mod follower;
pub mod kinematics;
pub mod planner;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
