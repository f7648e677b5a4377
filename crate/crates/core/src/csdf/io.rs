//! Point cloud files.
//!
//! Binary layout (little endian): 4-byte magic `RPCL`, u32 format version,
//! u64 point count, then `count` f32 triplets. Obstacle ids and the capture
//! timestamp live in an optional JSON sidecar next to the binary file
//! (`<name>.json`). Plain text files hold one `x y z [id]` row per line.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::SceneCloud;
use crate::error::{Error, Result};

pub const CLOUD_MAGIC: [u8; 4] = *b"RPCL";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CloudSidecar {
    pub obstacle_ids: Vec<u32>,
    #[serde(default)]
    pub timestamp: f64,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes the binary cloud and its sidecar.
pub fn write_binary(path: impl AsRef<Path>, cloud: &SceneCloud) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(16 + cloud.len() * 12);
    buf.extend_from_slice(&CLOUD_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    for p in cloud.points() {
        for v in p.iter() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;

    let side = CloudSidecar {
        obstacle_ids: cloud.obstacle_ids().to_vec(),
        timestamp: cloud.timestamp(),
    };
    let side_path = sidecar_path(path);
    let json = serde_json::to_string(&side).expect("sidecar serializes");
    std::fs::write(&side_path, json).map_err(|e| Error::io(&side_path, e))
}

/// Reads a binary cloud; ids default to 0 when the sidecar is absent.
pub fn read_binary(path: impl AsRef<Path>) -> Result<SceneCloud> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::invalid(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || bytes[..4] != CLOUD_MAGIC {
        return Err(bad("not a point cloud file (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != count.checked_mul(12).ok_or_else(|| bad("count overflow"))? {
        return Err(bad(&format!("expected {count} points, file holds {} bytes", body.len())));
    }
    let points: Vec<Vector3<f64>> = body
        .chunks_exact(12)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes(c[i..i + 4].try_into().unwrap()) as f64;
            Vector3::new(f(0), f(4), f(8))
        })
        .collect();

    let side_path = sidecar_path(path);
    let side = if side_path.exists() {
        let text = std::fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
        serde_json::from_str::<CloudSidecar>(&text).map_err(|e| Error::json(&side_path, e))?
    } else {
        CloudSidecar {
            obstacle_ids: vec![0; count],
            timestamp: 0.0,
        }
    };
    SceneCloud::new(&points, side.obstacle_ids, side.timestamp)
}

/// Reads whitespace-separated `x y z [id]` rows; `#` starts a comment.
pub fn read_xyz(path: impl AsRef<Path>) -> Result<SceneCloud> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    let mut ids = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            column: 1,
            message: msg,
        };
        if fields.len() < 3 || fields.len() > 4 {
            return Err(parse_err(format!("expected 3 or 4 fields, got {}", fields.len())));
        }
        let mut xyz = [0.0; 3];
        for (slot, f) in xyz.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|e| parse_err(format!("{f:?}: {e}")))?;
        }
        points.push(Vector3::from(xyz));
        ids.push(match fields.get(3) {
            Some(f) => f.parse().map_err(|e| parse_err(format!("{f:?}: {e}")))?,
            None => 0,
        });
    }
    SceneCloud::new(&points, ids, 0.0)
}

/// Dispatches on extension: `.xyz`/`.txt` are text, anything else binary.
pub fn load_cloud(path: impl AsRef<Path>) -> Result<SceneCloud> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("xyz") | Some("txt") => read_xyz(path),
        _ => read_binary(path),
    }
}
