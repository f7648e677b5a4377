//! Workspace SDF over point clouds and the configuration-space SDF.
//!
//! All distances are exact brute-force scans. Batched queries fan out over
//! configurations; each configuration is evaluated by the same sequential
//! kernel, so batch results are bit-identical to single queries regardless
//! of the thread count.

mod io;

pub use io::{load_cloud, read_binary, read_xyz, write_binary, CloudSidecar, CLOUD_MAGIC};

use nalgebra::{DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{AttachedObject, Configuration, KinematicChain};

/// Obstacle point cloud snapshot (meters, world frame). Points are kept in
/// structure-of-arrays form for the distance kernels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneCloud {
    xs: Vec<f64>,
    ys: Vec<f64>,
    zs: Vec<f64>,
    obstacle_ids: Vec<u32>,
    timestamp: f64,
}

impl SceneCloud {
    pub fn new(points: &[Vector3<f64>], obstacle_ids: Vec<u32>, timestamp: f64) -> Result<Self> {
        if obstacle_ids.len() != points.len() {
            return Err(Error::invalid(format!(
                "{} obstacle ids for {} points",
                obstacle_ids.len(),
                points.len()
            )));
        }
        if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("scene cloud has non-finite coordinates"));
        }
        Ok(Self {
            xs: points.iter().map(|p| p.x).collect(),
            ys: points.iter().map(|p| p.y).collect(),
            zs: points.iter().map(|p| p.z).collect(),
            obstacle_ids,
            timestamp,
        })
    }

    /// Cloud whose points all belong to obstacle 0.
    pub fn from_points(points: &[Vector3<f64>]) -> Result<Self> {
        Self::new(points, vec![0; points.len()], 0.0)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn with_timestamp(mut self, t: f64) -> Self {
        self.timestamp = t;
        self
    }

    pub fn obstacle_ids(&self) -> &[u32] {
        &self.obstacle_ids
    }

    pub fn point(&self, k: usize) -> Vector3<f64> {
        Vector3::new(self.xs[k], self.ys[k], self.zs[k])
    }

    pub fn points(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        (0..self.len()).map(move |k| self.point(k))
    }

    /// Appends another cloud; the timestamp of `self` is kept.
    pub fn extend(&mut self, other: &SceneCloud) {
        self.xs.extend_from_slice(&other.xs);
        self.ys.extend_from_slice(&other.ys);
        self.zs.extend_from_slice(&other.zs);
        self.obstacle_ids.extend_from_slice(&other.obstacle_ids);
    }

    pub fn translated(&self, offset: &Vector3<f64>) -> Self {
        Self {
            xs: self.xs.iter().map(|v| v + offset.x).collect(),
            ys: self.ys.iter().map(|v| v + offset.y).collect(),
            zs: self.zs.iter().map(|v| v + offset.z).collect(),
            obstacle_ids: self.obstacle_ids.clone(),
            timestamp: self.timestamp,
        }
    }

    fn require_points(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyCloud)
        } else {
            Ok(())
        }
    }

    /// Squared distance to the nearest point and its lowest index.
    fn nearest_sq(&self, x: &Vector3<f64>) -> (f64, usize) {
        let mut best = f64::INFINITY;
        let mut idx = 0;
        for k in 0..self.xs.len() {
            let dx = x.x - self.xs[k];
            let dy = x.y - self.ys[k];
            let dz = x.z - self.zs[k];
            let d = dx * dx + dy * dy + dz * dz;
            if d < best {
                best = d;
                idx = k;
            }
        }
        (best, idx)
    }

    /// Squared nearest distance only; four independent lanes so the loop
    /// vectorizes. `min` is exact, so the result equals `nearest_sq`.
    fn min_sq(&self, x: &Vector3<f64>) -> f64 {
        const LANES: usize = 4;
        let n = self.xs.len();
        let body = n - n % LANES;
        let mut acc = [f64::INFINITY; LANES];
        let (xs, ys, zs) = (&self.xs[..body], &self.ys[..body], &self.zs[..body]);
        for ((cx, cy), cz) in xs
            .chunks_exact(LANES)
            .zip(ys.chunks_exact(LANES))
            .zip(zs.chunks_exact(LANES))
        {
            for l in 0..LANES {
                let dx = x.x - cx[l];
                let dy = x.y - cy[l];
                let dz = x.z - cz[l];
                let d = dx * dx + dy * dy + dz * dz;
                acc[l] = if d < acc[l] { d } else { acc[l] };
            }
        }
        let mut best = acc.iter().copied().fold(f64::INFINITY, f64::min);
        for k in body..n {
            let dx = x.x - self.xs[k];
            let dy = x.y - self.ys[k];
            let dz = x.z - self.zs[k];
            let d = dx * dx + dy * dy + dz * dz;
            if d < best {
                best = d;
            }
        }
        best
    }

    /// True when some point lies within `radius` of `x` (inclusive).
    pub(crate) fn any_within(&self, x: &Vector3<f64>, radius: f64) -> bool {
        let r2 = radius * radius;
        (0..self.xs.len()).any(|k| {
            let dx = x.x - self.xs[k];
            let dy = x.y - self.ys[k];
            let dz = x.z - self.zs[k];
            dx * dx + dy * dy + dz * dz <= r2
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsdfParams {
    /// SDF offset (meters).
    pub rho: f64,
    /// Safety threshold (meters).
    pub r: f64,
}

impl Default for CsdfParams {
    fn default() -> Self {
        Self { rho: 0.02, r: 0.05 }
    }
}

impl CsdfParams {
    pub fn validate(&self) -> Result<()> {
        if self.rho > 0.0 && self.r > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid("rho and r must be positive"))
        }
    }

    /// Converts a C-SDF value back to the raw nearest distance.
    pub fn raw_clearance(&self, csdf: f64) -> f64 {
        csdf + self.r + self.rho
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsdfResult {
    pub value: f64,
    pub witness_control: usize,
    pub witness_scene: usize,
    pub gradient: Option<DVector<f64>>,
    /// Witness distance is zero; the gradient is reported as zero.
    pub degenerate: bool,
}

/// `min_k |x - s_k| - rho`.
pub fn sdf_point(x: &Vector3<f64>, cloud: &SceneCloud, rho: f64) -> Result<f64> {
    cloud.require_points()?;
    Ok(cloud.min_sq(x).sqrt() - rho)
}

fn csdf_from_points(points: &[Vector3<f64>], cloud: &SceneCloud, params: &CsdfParams) -> CsdfResult {
    let mut best = f64::INFINITY;
    let (mut wj, mut wk) = (0, 0);
    for (j, c) in points.iter().enumerate() {
        let (d, k) = cloud.nearest_sq(c);
        if d < best {
            best = d;
            wj = j;
            wk = k;
        }
    }
    CsdfResult {
        value: best.sqrt() - params.rho - params.r,
        witness_control: wj,
        witness_scene: wk,
        gradient: None,
        degenerate: best == 0.0,
    }
}

fn csdf_value_from_points(points: &[Vector3<f64>], cloud: &SceneCloud, params: &CsdfParams) -> f64 {
    let best = points
        .iter()
        .map(|c| cloud.min_sq(c))
        .fold(f64::INFINITY, f64::min);
    best.sqrt() - params.rho - params.r
}

/// C-SDF value and witness pair (no gradient).
pub fn csdf(
    chain: &KinematicChain,
    q: &Configuration,
    cloud: &SceneCloud,
    params: &CsdfParams,
    attached: Option<&AttachedObject>,
) -> Result<CsdfResult> {
    cloud.require_points()?;
    let cps = chain.generate_control_points(q, attached)?;
    Ok(csdf_from_points(&cps.points, cloud, params))
}

/// C-SDF value, witness pair and gradient with respect to the joint angles.
///
/// At ties the lowest (control, scene) index pair is the witness. When the
/// witness distance is zero the gradient is zero and `degenerate` is set.
pub fn csdf_with_gradient(
    chain: &KinematicChain,
    q: &Configuration,
    cloud: &SceneCloud,
    params: &CsdfParams,
    attached: Option<&AttachedObject>,
) -> Result<CsdfResult> {
    cloud.require_points()?;
    chain.check_attached(attached)?;
    let frames = chain.frames(q)?;
    let mut points = Vec::new();
    chain.control_points_into(&frames, attached, &mut points);
    let mut res = csdf_from_points(&points, cloud, params);
    let grad = if res.degenerate {
        DVector::zeros(chain.dof())
    } else {
        let c = points[res.witness_control];
        let s = cloud.point(res.witness_scene);
        let dir = (c - s).normalize();
        let jac = chain.control_point_jacobian(&frames, res.witness_control, attached);
        jac.transpose() * dir
    };
    res.gradient = Some(grad);
    Ok(res)
}

/// Gradient of the C-SDF and the degenerate flag.
pub fn csdf_gradient(
    chain: &KinematicChain,
    q: &Configuration,
    cloud: &SceneCloud,
    params: &CsdfParams,
    attached: Option<&AttachedObject>,
) -> Result<(DVector<f64>, bool)> {
    let res = csdf_with_gradient(chain, q, cloud, params, attached)?;
    Ok((res.gradient.expect("gradient requested"), res.degenerate))
}

/// C-SDF values for many configurations, in input order.
pub fn csdf_batch(
    chain: &KinematicChain,
    qs: &[Configuration],
    cloud: &SceneCloud,
    params: &CsdfParams,
    attached: Option<&AttachedObject>,
) -> Result<Vec<f64>> {
    if qs.is_empty() {
        return Err(Error::invalid("batch must contain at least one configuration"));
    }
    cloud.require_points()?;
    chain.check_attached(attached)?;
    for q in qs {
        chain.check_dimension(q)?;
    }
    Ok(qs
        .par_iter()
        .map_init(Vec::new, |buf, q| {
            let frames = chain.frames_unchecked(q.as_slice());
            chain.control_points_into(&frames, attached, buf);
            csdf_value_from_points(buf, cloud, params)
        })
        .collect())
}

/// Per-configuration scene C-SDF and capsule self-clearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchEvaluation {
    /// `None` when the scene cloud was empty.
    pub csdf: Option<Vec<f64>>,
    pub self_clearance: Vec<f64>,
}

/// Evaluates configurations stored row-major in `flat` (stride = dof).
/// An empty cloud yields no C-SDF values instead of an error.
pub fn evaluate_flat_batch(
    chain: &KinematicChain,
    flat: &[f64],
    cloud: &SceneCloud,
    params: &CsdfParams,
    attached: Option<&AttachedObject>,
    with_self: bool,
) -> BatchEvaluation {
    let dof = chain.dof();
    let have_cloud = !cloud.is_empty();
    let pairs: Vec<(f64, f64)> = flat
        .par_chunks(dof)
        .map_init(Vec::new, |buf, q| {
            let frames = chain.frames_unchecked(q);
            let c = if have_cloud {
                chain.control_points_into(&frames, attached, buf);
                csdf_value_from_points(buf, cloud, params)
            } else {
                f64::INFINITY
            };
            let s = if with_self {
                crate::kinematics::capsule_self_clearance(chain, &frames)
            } else {
                f64::INFINITY
            };
            (c, s)
        })
        .collect();
    let (csdf, self_clearance): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    BatchEvaluation {
        csdf: have_cloud.then_some(csdf),
        self_clearance,
    }
}

/// True when C-SDF(q) > 0, with an early exit on the first violating pair.
pub fn is_collision_free(
    chain: &KinematicChain,
    q: &[f64],
    cloud: &SceneCloud,
    params: &CsdfParams,
    attached: Option<&AttachedObject>,
    scratch: &mut Vec<Vector3<f64>>,
) -> bool {
    let frames = chain.frames_unchecked(q);
    chain.control_points_into(&frames, attached, scratch);
    // value > 0  <=>  sqrt(d2) - rho - r > 0 for every pair; evaluate with the
    // exact same arithmetic as the value path.
    let limit = (params.rho + params.r) * (1.0 + 1e-9);
    scratch.iter().all(|c| {
        if cloud.any_within(c, limit) {
            // Borderline candidates are resolved with the exact formula.
            cloud.min_sq(c).sqrt() - params.rho - params.r > 0.0
        } else {
            true
        }
    })
}
