//! Serial revolute chains: forward kinematics, control points, point
//! Jacobians, joint limits and capsule self-collision.
//!
//! Frame indexing: frame `i < dof` is the frame of joint `i` after its
//! rotation, and frame `dof` is the tool (end-effector) frame, rigidly offset
//! from the last joint. Every frame is world-aligned at the zero
//! configuration, so a joint is fully described by its axis and the offset of
//! its origin from the parent origin.

mod capsule;
mod model;

pub use capsule::{segment_segment_distance, self_collision_distance};
pub(crate) use capsule::self_collision_from_frames as capsule_self_clearance;
pub use model::{CapsuleSpec, JointSpec, RobotModelFile};

use nalgebra::{DVector, Isometry3, Matrix3xX, Translation3, Unit, UnitQuaternion, Vector3};
use rand::Rng;

use crate::error::{Error, Result};

/// Joint angles in radians.
pub type Configuration = DVector<f64>;

/// Default number of points inserted between consecutive skeleton frames.
pub const DEFAULT_INTERPOLATION_COUNT: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    /// Unit rotation axis expressed in the parent frame.
    pub axis: Vector3<f64>,
    /// Origin offset from the parent frame origin, in the parent frame (meters).
    pub origin: Vector3<f64>,
    /// Parent joint index; `None` attaches to the world base.
    pub parent: Option<usize>,
    pub pos_limits: [f64; 2],
    /// Absolute velocity limit (rad/s).
    pub vel_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub frame_a: usize,
    pub frame_b: usize,
    pub radius: f64,
}

/// Where a control point comes from, in layout order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointSource {
    Skeleton { frame: usize },
    Interpolated { frame_a: usize, frame_b: usize, t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    Body,
    AttachedObject,
}

/// Points sampled on a grasped object, expressed in `grasp_frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttachedObject {
    pub surface_points: Vec<Vector3<f64>>,
    pub grasp_frame: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlPointSet {
    pub points: Vec<Vector3<f64>>,
    pub kinds: Vec<PointKind>,
}

impl ControlPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// World poses of every frame plus the world-frame joint axes.
#[derive(Debug, Clone)]
pub struct ChainFrames {
    pub poses: Vec<Isometry3<f64>>,
    pub axes: Vec<Vector3<f64>>,
}

impl ChainFrames {
    pub fn origin(&self, frame: usize) -> Vector3<f64> {
        self.poses[frame].translation.vector
    }
}

#[derive(Debug, Clone)]
pub struct KinematicChain {
    name: String,
    joints: Vec<Joint>,
    tool_origin: Vector3<f64>,
    skeleton_frames: Vec<usize>,
    interpolation_counts: Vec<usize>,
    capsules: Vec<Capsule>,
    capsule_pairs: Vec<(usize, usize)>,
    /// Per frame: whether joint `i` moves it.
    influence: Vec<Vec<bool>>,
    layout: Vec<PointSource>,
}

impl KinematicChain {
    /// Builds and validates a chain. Capsule pairs sharing a frame are
    /// excluded from self-collision automatically, in addition to
    /// `capsule_exclusions`.
    pub fn new(
        name: impl Into<String>,
        joints: Vec<Joint>,
        tool_origin: Vector3<f64>,
        skeleton_frames: Vec<usize>,
        interpolation_counts: Vec<usize>,
        capsules: Vec<Capsule>,
        capsule_exclusions: &[(usize, usize)],
    ) -> Result<Self> {
        let dof = joints.len();
        if dof == 0 {
            return Err(Error::invalid("chain needs at least one joint"));
        }
        let mut joints = joints;
        for (i, j) in joints.iter_mut().enumerate() {
            if let Some(p) = j.parent {
                if p >= i {
                    return Err(Error::invalid(format!(
                        "joint {i}: parent {p} must precede the joint"
                    )));
                }
            }
            let n = j.axis.norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::invalid(format!("joint {i}: axis must be non-zero")));
            }
            j.axis /= n;
            if !(j.pos_limits[0] < j.pos_limits[1]) {
                return Err(Error::invalid(format!(
                    "joint {i}: lower limit must be below upper limit"
                )));
            }
            if !(j.vel_limit > 0.0) {
                return Err(Error::invalid(format!(
                    "joint {i}: velocity limit must be positive"
                )));
            }
        }
        let frame_count = dof + 1;
        if skeleton_frames.len() < 2 {
            return Err(Error::invalid("need at least two skeleton frames"));
        }
        if let Some(&f) = skeleton_frames.iter().find(|&&f| f >= frame_count) {
            return Err(Error::invalid(format!("skeleton frame {f} out of range")));
        }
        let interpolation_counts = if interpolation_counts.is_empty() {
            vec![DEFAULT_INTERPOLATION_COUNT; skeleton_frames.len() - 1]
        } else {
            interpolation_counts
        };
        if interpolation_counts.len() != skeleton_frames.len() - 1 {
            return Err(Error::invalid(format!(
                "expected {} interpolation counts, got {}",
                skeleton_frames.len() - 1,
                interpolation_counts.len()
            )));
        }
        for (i, c) in capsules.iter().enumerate() {
            if !(c.radius > 0.0) {
                return Err(Error::invalid(format!("capsule {i}: radius must be positive")));
            }
            if c.frame_a >= frame_count || c.frame_b >= frame_count {
                return Err(Error::invalid(format!("capsule {i}: frame out of range")));
            }
        }

        // Which joints move each frame.
        let mut influence = vec![vec![false; dof]; frame_count];
        for i in 0..dof {
            if let Some(p) = joints[i].parent {
                influence[i] = influence[p].clone();
            }
            influence[i][i] = true;
        }
        influence[dof] = influence[dof - 1].clone();

        let mut capsule_pairs = Vec::new();
        for a in 0..capsules.len() {
            for b in (a + 1)..capsules.len() {
                let (ca, cb) = (capsules[a], capsules[b]);
                let shares = ca.frame_a == cb.frame_a
                    || ca.frame_a == cb.frame_b
                    || ca.frame_b == cb.frame_a
                    || ca.frame_b == cb.frame_b;
                let excluded = capsule_exclusions
                    .iter()
                    .any(|&(x, y)| (x == a && y == b) || (x == b && y == a));
                if !shares && !excluded {
                    capsule_pairs.push((a, b));
                }
            }
        }

        let mut layout = Vec::new();
        for (s, &frame) in skeleton_frames.iter().enumerate() {
            layout.push(PointSource::Skeleton { frame });
            if let Some(&count) = interpolation_counts.get(s) {
                let next = skeleton_frames[s + 1];
                for k in 1..=count {
                    layout.push(PointSource::Interpolated {
                        frame_a: frame,
                        frame_b: next,
                        t: k as f64 / (count + 1) as f64,
                    });
                }
            }
        }

        Ok(Self {
            name: name.into(),
            joints,
            tool_origin,
            skeleton_frames,
            interpolation_counts,
            capsules,
            capsule_pairs,
            influence,
            layout,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn frame_count(&self) -> usize {
        self.joints.len() + 1
    }

    /// Index of the tool frame.
    pub fn ee_frame(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn tool_origin(&self) -> &Vector3<f64> {
        &self.tool_origin
    }

    pub fn skeleton_frames(&self) -> &[usize] {
        &self.skeleton_frames
    }

    pub fn interpolation_counts(&self) -> &[usize] {
        &self.interpolation_counts
    }

    pub fn capsules(&self) -> &[Capsule] {
        &self.capsules
    }

    /// Capsule index pairs checked for self-collision.
    pub fn capsule_pairs(&self) -> &[(usize, usize)] {
        &self.capsule_pairs
    }

    /// Body control point layout (attached points follow these).
    pub fn layout(&self) -> &[PointSource] {
        &self.layout
    }

    pub fn body_point_count(&self) -> usize {
        self.layout.len()
    }

    pub fn lower_limits(&self) -> Configuration {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.pos_limits[0]))
    }

    pub fn upper_limits(&self) -> Configuration {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.pos_limits[1]))
    }

    pub fn velocity_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.vel_limit))
    }

    /// True when joint `joint` moves frame `frame`.
    pub fn influences(&self, joint: usize, frame: usize) -> bool {
        self.influence[frame][joint]
    }

    pub fn check_dimension(&self, q: &Configuration) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::DimensionMismatch {
                expected: self.dof(),
                actual: q.len(),
            });
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("configuration has non-finite entries"));
        }
        Ok(())
    }

    /// Poses of all frames and the world-frame joint axes.
    pub fn frames(&self, q: &Configuration) -> Result<ChainFrames> {
        self.check_dimension(q)?;
        Ok(self.frames_unchecked(q.as_slice()))
    }

    pub(crate) fn frames_unchecked(&self, q: &[f64]) -> ChainFrames {
        let dof = self.dof();
        let mut poses: Vec<Isometry3<f64>> = Vec::with_capacity(dof + 1);
        let mut axes = Vec::with_capacity(dof);
        for (i, joint) in self.joints.iter().enumerate() {
            let parent = match joint.parent {
                Some(p) => poses[p],
                None => Isometry3::identity(),
            };
            let rot = UnitQuaternion::from_axis_angle(&Unit::new_unchecked(joint.axis), q[i]);
            let local = Isometry3::from_parts(Translation3::from(joint.origin), rot);
            let pose = parent * local;
            axes.push(pose.rotation * joint.axis);
            poses.push(pose);
        }
        let tool = poses[dof - 1] * Translation3::from(self.tool_origin);
        poses.push(tool);
        ChainFrames { poses, axes }
    }

    /// World-frame poses, one per frame (joint frames then the tool frame).
    pub fn forward_kinematics(&self, q: &Configuration) -> Result<Vec<Isometry3<f64>>> {
        Ok(self.frames(q)?.poses)
    }

    pub fn generate_control_points(
        &self,
        q: &Configuration,
        attached: Option<&AttachedObject>,
    ) -> Result<ControlPointSet> {
        let frames = self.frames(q)?;
        self.check_attached(attached)?;
        let mut points = Vec::with_capacity(self.layout.len());
        self.control_points_into(&frames, attached, &mut points);
        let mut kinds = vec![PointKind::Body; self.layout.len()];
        kinds.resize(points.len(), PointKind::AttachedObject);
        Ok(ControlPointSet { points, kinds })
    }

    pub(crate) fn check_attached(&self, attached: Option<&AttachedObject>) -> Result<()> {
        if let Some(obj) = attached {
            if obj.grasp_frame >= self.frame_count() {
                return Err(Error::invalid("attached object grasp frame out of range"));
            }
            if obj.surface_points.is_empty() {
                return Err(Error::invalid("attached object has no surface points"));
            }
        }
        Ok(())
    }

    pub(crate) fn control_points_into(
        &self,
        frames: &ChainFrames,
        attached: Option<&AttachedObject>,
        out: &mut Vec<Vector3<f64>>,
    ) {
        out.clear();
        for src in &self.layout {
            out.push(match *src {
                PointSource::Skeleton { frame } => frames.origin(frame),
                PointSource::Interpolated { frame_a, frame_b, t } => {
                    frames.origin(frame_a) * (1.0 - t) + frames.origin(frame_b) * t
                }
            });
        }
        if let Some(obj) = attached {
            let pose = frames.poses[obj.grasp_frame];
            out.extend(
                obj.surface_points
                    .iter()
                    .map(|p| pose.transform_point(&(*p).into()).coords),
            );
        }
    }

    /// Linear-velocity Jacobian (3 × dof) of a point rigidly attached to `frame`.
    pub fn point_jacobian(
        &self,
        frames: &ChainFrames,
        frame: usize,
        point: &Vector3<f64>,
    ) -> Matrix3xX<f64> {
        let mut jac = Matrix3xX::zeros(self.dof());
        for i in 0..self.dof() {
            if self.influence[frame][i] {
                let col = frames.axes[i].cross(&(point - frames.origin(i)));
                jac.set_column(i, &col);
            }
        }
        jac
    }

    /// Jacobian of control point `index` (layout order, attached points last).
    pub(crate) fn control_point_jacobian(
        &self,
        frames: &ChainFrames,
        index: usize,
        attached: Option<&AttachedObject>,
    ) -> Matrix3xX<f64> {
        match self.layout.get(index) {
            Some(&PointSource::Skeleton { frame }) => {
                self.point_jacobian(frames, frame, &frames.origin(frame))
            }
            Some(&PointSource::Interpolated { frame_a, frame_b, t }) => {
                let ja = self.point_jacobian(frames, frame_a, &frames.origin(frame_a));
                let jb = self.point_jacobian(frames, frame_b, &frames.origin(frame_b));
                ja * (1.0 - t) + jb * t
            }
            None => {
                let obj = attached.expect("attached control point without an attached object");
                let local = obj.surface_points[index - self.layout.len()];
                let pose = frames.poses[obj.grasp_frame];
                let world = pose.transform_point(&local.into()).coords;
                self.point_jacobian(frames, obj.grasp_frame, &world)
            }
        }
    }

    /// Per-control-point 3 × dof Jacobians, in control point order.
    pub fn control_point_jacobians(
        &self,
        q: &Configuration,
        attached: Option<&AttachedObject>,
    ) -> Result<Vec<Matrix3xX<f64>>> {
        let frames = self.frames(q)?;
        self.check_attached(attached)?;
        let n = self.layout.len() + attached.map_or(0, |a| a.surface_points.len());
        Ok((0..n)
            .map(|i| self.control_point_jacobian(&frames, i, attached))
            .collect())
    }

    /// Elementwise projection onto the joint-limit box.
    pub fn clamp_to_joint_limits(&self, q: &Configuration) -> Configuration {
        let mut out = q.clone();
        for (v, j) in out.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.pos_limits[0], j.pos_limits[1]);
        }
        out
    }

    pub fn within_limits(&self, q: &Configuration) -> bool {
        q.len() == self.dof()
            && q.iter()
                .zip(&self.joints)
                .all(|(v, j)| *v >= j.pos_limits[0] && *v <= j.pos_limits[1])
    }

    /// Uniform sample inside the limit box shrunk by `margin` on each side.
    pub fn random_configuration<R: Rng + ?Sized>(&self, rng: &mut R, margin: f64) -> Configuration {
        DVector::from_iterator(
            self.dof(),
            self.joints.iter().map(|j| {
                let lo = j.pos_limits[0] + margin;
                let hi = j.pos_limits[1] - margin;
                if lo < hi {
                    rng.random_range(lo..hi)
                } else {
                    0.5 * (j.pos_limits[0] + j.pos_limits[1])
                }
            }),
        )
    }

    /// Copy of the chain with its base moved by `offset` in the world frame.
    pub fn translated(&self, offset: &Vector3<f64>) -> Self {
        let mut out = self.clone();
        for j in out.joints.iter_mut().filter(|j| j.parent.is_none()) {
            j.origin += offset;
        }
        out
    }
}
