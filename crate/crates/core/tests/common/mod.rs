#![allow(dead_code)]

use nalgebra::{DVector, Vector3};
use ramp_core::kinematics::{Capsule, Joint, KinematicChain};

pub type Mat4 = [[f64; 4]; 4];

pub fn joint(axis: [f64; 3], origin: [f64; 3], parent: Option<usize>, lim: f64) -> Joint {
    Joint {
        axis: Vector3::from(axis),
        origin: Vector3::from(origin),
        parent,
        pos_limits: [-lim, lim],
        vel_limit: 1.0,
    }
}

/// Planar arm in the xy plane with unit z axes.
pub fn planar(links: &[f64], interp: usize) -> KinematicChain {
    let mut joints = Vec::new();
    for (i, _) in links.iter().enumerate() {
        let origin = if i == 0 { [0.0; 3] } else { [links[i - 1], 0.0, 0.0] };
        joints.push(joint([0.0, 0.0, 1.0], origin, i.checked_sub(1), 3.0));
    }
    let dof = links.len();
    let frames: Vec<usize> = (0..=dof).collect();
    let capsules = (0..dof)
        .map(|i| Capsule { frame_a: i, frame_b: i + 1, radius: 0.05 })
        .collect();
    KinematicChain::new(
        "planar",
        joints,
        Vector3::new(*links.last().unwrap(), 0.0, 0.0),
        frames,
        vec![interp; dof],
        capsules,
        &[],
    )
    .unwrap()
}

/// Three-joint spatial chain with mixed, non-axis-aligned axes.
pub fn spatial3() -> KinematicChain {
    let joints = vec![
        joint([0.0, 0.0, 1.0], [0.1, -0.2, 0.3], None, 2.8),
        joint([0.0, 1.0, 0.0], [0.0, 0.0, 0.4], Some(0), 2.8),
        joint([1.0, 1.0, 0.5], [0.35, 0.05, 0.0], Some(1), 2.8),
    ];
    KinematicChain::new(
        "spatial3",
        joints,
        Vector3::new(0.2, 0.0, 0.1),
        vec![0, 1, 2, 3],
        vec![3, 3, 3],
        vec![
            Capsule { frame_a: 0, frame_b: 1, radius: 0.04 },
            Capsule { frame_a: 1, frame_b: 2, radius: 0.04 },
            Capsule { frame_a: 2, frame_b: 3, radius: 0.03 },
        ],
        &[],
    )
    .unwrap()
}

pub fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Homogeneous transform `Trans(origin) * Rot(axis, angle)` built from the
/// Rodrigues formula.
pub fn joint_matrix(axis: &Vector3<f64>, origin: &Vector3<f64>, angle: f64) -> Mat4 {
    let n = axis.norm();
    let (x, y, z) = (axis.x / n, axis.y / n, axis.z / n);
    let (s, c) = angle.sin_cos();
    let v = 1.0 - c;
    [
        [c + x * x * v, x * y * v - z * s, x * z * v + y * s, origin.x],
        [y * x * v + z * s, c + y * y * v, y * z * v - x * s, origin.y],
        [z * x * v - y * s, z * y * v + x * s, c + z * z * v, origin.z],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

/// World transforms of every frame (joints then tool) by explicit matrix products.
pub fn oracle_frames(chain: &KinematicChain, q: &DVector<f64>) -> Vec<Mat4> {
    let mut out: Vec<Mat4> = Vec::new();
    for (i, j) in chain.joints().iter().enumerate() {
        let local = joint_matrix(&j.axis, &j.origin, q[i]);
        let world = match j.parent {
            Some(p) => mat_mul(&out[p], &local),
            None => local,
        };
        out.push(world);
    }
    let t = chain.tool_origin();
    let tool = [
        [1.0, 0.0, 0.0, t.x],
        [0.0, 1.0, 0.0, t.y],
        [0.0, 0.0, 1.0, t.z],
        [0.0, 0.0, 0.0, 1.0],
    ];
    let last = out[out.len() - 1];
    out.push(mat_mul(&last, &tool));
    out
}

pub fn origin_of(m: &Mat4) -> Vector3<f64> {
    Vector3::new(m[0][3], m[1][3], m[2][3])
}

/// Dense control-point x scene-point distance matrix, reduced by min.
pub fn dense_csdf(points: &[Vector3<f64>], cloud: &[Vector3<f64>], rho: f64, r: f64) -> f64 {
    let mut matrix = vec![vec![0.0; cloud.len()]; points.len()];
    for (j, c) in points.iter().enumerate() {
        for (k, s) in cloud.iter().enumerate() {
            let dx = c.x - s.x;
            let dy = c.y - s.y;
            let dz = c.z - s.z;
            matrix[j][k] = dx * dx + dy * dy + dz * dz;
        }
    }
    let best = matrix
        .iter()
        .flat_map(|row| row.iter().copied())
        .fold(f64::INFINITY, f64::min);
    best.sqrt() - rho - r
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}
