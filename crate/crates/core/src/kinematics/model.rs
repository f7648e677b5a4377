//! JSON robot model files and the bundled models.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{Capsule, Joint, KinematicChain};
use crate::error::{Error, Result};

const PLANAR3: &str = include_str!("../../models/planar3.json");
const SPATIAL7: &str = include_str!("../../models/spatial7.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub axis: [f64; 3],
    pub origin: [f64; 3],
    #[serde(default)]
    pub parent: Option<usize>,
    pub pos_limits: [f64; 2],
    pub vel_limits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapsuleSpec {
    pub frame_a: usize,
    pub frame_b: usize,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModelFile {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub joints: Vec<JointSpec>,
    #[serde(default)]
    pub tool_origin: [f64; 3],
    pub skeleton_frames: Vec<usize>,
    #[serde(default)]
    pub interpolation_counts: Vec<usize>,
    #[serde(default)]
    pub capsules: Vec<CapsuleSpec>,
    #[serde(default)]
    pub capsule_exclusions: Vec<[usize; 2]>,
}

impl RobotModelFile {
    pub fn into_chain(self) -> Result<KinematicChain> {
        let joints = self
            .joints
            .iter()
            .map(|j| Joint {
                axis: Vector3::from(j.axis),
                origin: Vector3::from(j.origin),
                parent: j.parent,
                pos_limits: j.pos_limits,
                vel_limit: j.vel_limits,
            })
            .collect();
        let capsules = self
            .capsules
            .iter()
            .map(|c| Capsule {
                frame_a: c.frame_a,
                frame_b: c.frame_b,
                radius: c.radius,
            })
            .collect();
        let exclusions: Vec<(usize, usize)> =
            self.capsule_exclusions.iter().map(|p| (p[0], p[1])).collect();
        KinematicChain::new(
            self.name,
            joints,
            Vector3::from(self.tool_origin),
            self.skeleton_frames,
            self.interpolation_counts,
            capsules,
            &exclusions,
        )
    }
}

impl KinematicChain {
    pub fn from_json_str(json: &str) -> Result<Self> {
        let file: RobotModelFile =
            serde_json::from_str(json).map_err(|e| Error::json("<robot model>", e))?;
        file.into_chain()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: RobotModelFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        file.into_chain()
    }

    /// `planar3` (3-DOF planar desk arm) or `spatial7` (7-DOF, Panda-like).
    pub fn bundled(name: &str) -> Option<Self> {
        let json = match name {
            "planar3" => PLANAR3,
            "spatial7" => SPATIAL7,
            _ => return None,
        };
        Some(Self::from_json_str(json).expect("bundled robot model is valid"))
    }

    /// Bundled model name or a path to a model file.
    pub fn resolve(reference: &str, base_dir: Option<&Path>) -> Result<Self> {
        if let Some(chain) = Self::bundled(reference) {
            return Ok(chain);
        }
        let path = Path::new(reference);
        match base_dir {
            Some(dir) if path.is_relative() => Self::from_file(dir.join(path)),
            _ => Self::from_file(path),
        }
    }

    pub fn bundled_names() -> &'static [&'static str] {
        &["planar3", "spatial7"]
    }
}
