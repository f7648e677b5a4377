use nalgebra::Vector3;

use super::{Configuration, KinematicChain};
use crate::error::Result;

/// Shortest distance between segments `[p1, q1]` and `[p2, q2]`.
pub fn segment_segment_distance(
    p1: &Vector3<f64>,
    q1: &Vector3<f64>,
    p2: &Vector3<f64>,
    q2: &Vector3<f64>,
) -> f64 {
    let (c1, c2) = closest_points(p1, q1, p2, q2);
    (c1 - c2).norm()
}

fn closest_points(
    p1: &Vector3<f64>,
    q1: &Vector3<f64>,
    p2: &Vector3<f64>,
    q2: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    const EPS: f64 = 1e-14;
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);

    let (s, t) = if a <= EPS && e <= EPS {
        (0.0, 0.0)
    } else if a <= EPS {
        (0.0, (f / e).clamp(0.0, 1.0))
    } else {
        let c = d1.dot(&r);
        if e <= EPS {
            ((-c / a).clamp(0.0, 1.0), 0.0)
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s = if denom > EPS * a * e {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
            (s, t)
        }
    };
    (p1 + d1 * s, p2 + d2 * t)
}

/// Minimum signed clearance between non-adjacent capsule pairs (meters).
///
/// Negative values mean the capsules interpenetrate. Chains without any
/// checked pair report `f64::INFINITY`.
pub fn self_collision_distance(chain: &KinematicChain, q: &Configuration) -> Result<f64> {
    let frames = chain.frames(q)?;
    Ok(self_collision_from_frames(chain, &frames))
}

pub(crate) fn self_collision_from_frames(chain: &KinematicChain, frames: &super::ChainFrames) -> f64 {
    let caps = chain.capsules();
    chain
        .capsule_pairs()
        .iter()
        .map(|&(a, b)| {
            let (ca, cb) = (caps[a], caps[b]);
            segment_segment_distance(
                &frames.origin(ca.frame_a),
                &frames.origin(ca.frame_b),
                &frames.origin(cb.frame_a),
                &frames.origin(cb.frame_b),
            ) - ca.radius
                - cb.radius
        })
        .fold(f64::INFINITY, f64::min)
}
