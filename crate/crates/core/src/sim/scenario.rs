use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::{DVector, Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csdf::SceneCloud;
use crate::error::{Error, Result};
use crate::kinematics::{Configuration, KinematicChain};
use crate::rng::SeedStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Box { half_extents: [f64; 3] },
    Sphere { radius: f64 },
    /// Axis along the local z axis.
    Cylinder { radius: f64, half_height: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub id: u32,
    pub shape: Shape,
    pub center: [f64; 3],
    /// Roll, pitch, yaw (radians).
    #[serde(default)]
    pub rpy: [f64; 3],
    /// Surface sampling density (points per square meter).
    pub density: f64,
}

impl ObstacleSpec {
    pub fn pose(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.center[0], self.center[1], self.center[2]),
            UnitQuaternion::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]),
        )
    }

    fn validate(&self) -> Result<()> {
        let dims: Vec<f64> = match &self.shape {
            Shape::Box { half_extents } => half_extents.to_vec(),
            Shape::Sphere { radius } => vec![*radius],
            Shape::Cylinder { radius, half_height } => vec![*radius, *half_height],
        };
        if dims.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::invalid(format!("obstacle {} has a non-positive size", self.id)));
        }
        if !(self.density > 0.0) || !self.density.is_finite() {
            return Err(Error::invalid(format!(
                "obstacle {} needs a positive sampling density",
                self.id
            )));
        }
        Ok(())
    }

    /// Signed distance from a world point to the primitive surface
    /// (negative inside).
    pub fn signed_distance(&self, p: &Vector3<f64>, offset: &Vector3<f64>) -> f64 {
        let local = self
            .pose()
            .inverse_transform_point(&Point3::from(p - offset))
            .coords;
        match &self.shape {
            Shape::Sphere { radius } => local.norm() - radius,
            Shape::Box { half_extents } => {
                let q = local.abs() - Vector3::from(*half_extents);
                q.map(|v| v.max(0.0)).norm() + q.max().min(0.0)
            }
            Shape::Cylinder { radius, half_height } => {
                let dr = local.xy().norm() - radius;
                let dz = local.z.abs() - half_height;
                dr.max(dz).min(0.0) + (dr.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt()
            }
        }
    }

    /// Stratified surface samples with seeded jitter, in world coordinates.
    pub fn sample_surface(&self, rng: &mut ChaCha8Rng) -> Result<Vec<Vector3<f64>>> {
        self.validate()?;
        let mut local = Vec::new();
        match &self.shape {
            Shape::Box { half_extents: h } => {
                for axis in 0..3 {
                    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                    for sign in [-1.0, 1.0] {
                        let area = 4.0 * h[u] * h[v];
                        let (nu, nv) = grid_dims(self.count(area), h[u], h[v]);
                        for i in 0..nu {
                            for j in 0..nv {
                                let mut p = Vector3::zeros();
                                p[axis] = sign * h[axis];
                                p[u] = -h[u] + 2.0 * h[u] * (i as f64 + rng.random::<f64>()) / nu as f64;
                                p[v] = -h[v] + 2.0 * h[v] * (j as f64 + rng.random::<f64>()) / nv as f64;
                                local.push(p);
                            }
                        }
                    }
                }
            }
            Shape::Sphere { radius } => {
                let n = self.count(4.0 * PI * radius * radius);
                // Uniform in (z, azimuth) is uniform on the sphere.
                let (nz, na) = grid_dims(n, 1.0, PI);
                for i in 0..nz {
                    for j in 0..na {
                        let z = -1.0 + 2.0 * (i as f64 + rng.random::<f64>()) / nz as f64;
                        let a = 2.0 * PI * (j as f64 + rng.random::<f64>()) / na as f64;
                        let s = (1.0 - z * z).max(0.0).sqrt();
                        local.push(Vector3::new(s * a.cos(), s * a.sin(), z) * *radius);
                    }
                }
            }
            Shape::Cylinder { radius, half_height } => {
                let (r, hh) = (*radius, *half_height);
                let (na, nz) = grid_dims(self.count(4.0 * PI * r * hh), PI * r, hh);
                for i in 0..na {
                    for j in 0..nz {
                        let a = 2.0 * PI * (i as f64 + rng.random::<f64>()) / na as f64;
                        let z = -hh + 2.0 * hh * (j as f64 + rng.random::<f64>()) / nz as f64;
                        local.push(Vector3::new(r * a.cos(), r * a.sin(), z));
                    }
                }
                for sign in [-1.0, 1.0] {
                    // Uniform in (radius^2, azimuth) is uniform on the disk.
                    let (nr, na) = grid_dims(self.count(PI * r * r), 1.0, PI);
                    for i in 0..nr {
                        for j in 0..na {
                            let rr = r * ((i as f64 + rng.random::<f64>()) / nr as f64).sqrt();
                            let a = 2.0 * PI * (j as f64 + rng.random::<f64>()) / na as f64;
                            local.push(Vector3::new(rr * a.cos(), rr * a.sin(), sign * hh));
                        }
                    }
                }
            }
        }
        let pose = self.pose();
        Ok(local
            .into_iter()
            .map(|p| pose.transform_point(&Point3::from(p)).coords)
            .collect())
    }

    fn count(&self, area: f64) -> usize {
        ((area * self.density).round() as usize).max(1)
    }
}

/// Grid of about `n` cells over a patch with side lengths proportional to
/// `a` and `b`.
fn grid_dims(n: usize, a: f64, b: f64) -> (usize, usize) {
    let nu = ((n as f64 * a / b).sqrt().round() as usize).max(1);
    let nv = ((n as f64 / nu as f64).round() as usize).max(1);
    (nu, nv)
}

/// Obstacle translating with constant velocity inside `[start_time, end_time]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingObstacle {
    pub obstacle: ObstacleSpec,
    pub velocity: [f64; 3],
    #[serde(default)]
    pub start_time: f64,
    /// Motion stops after this time; `None` keeps it moving.
    #[serde(default)]
    pub end_time: Option<f64>,
}

impl MovingObstacle {
    /// Displacement from the start pose at time `t`.
    pub fn offset(&self, t: f64) -> Vector3<f64> {
        let end = self.end_time.unwrap_or(f64::INFINITY);
        let active = t.clamp(self.start_time, end.max(self.start_time)) - self.start_time;
        Vector3::from(self.velocity) * active
    }
}

/// Random start/goal generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairSpec {
    /// Minimum joint-space distance between start and goal (radians).
    pub min_distance: f64,
    /// Required C-SDF at start and goal (meters).
    pub clearance: f64,
    /// Required capsule self-clearance at start and goal (meters).
    pub self_clearance: f64,
    /// Grid cells per joint for the connectivity filter (robots with at
    /// most three joints); 0 disables it.
    pub grid_resolution: usize,
    /// Margin kept from the joint limits when sampling (radians).
    pub limit_margin: f64,
}

impl Default for PairSpec {
    fn default() -> Self {
        Self {
            min_distance: 1.5,
            clearance: 0.03,
            self_clearance: 0.01,
            grid_resolution: 40,
            limit_margin: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Bundled model name or path to a robot JSON file.
    pub robot: String,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub moving_obstacle: Option<MovingObstacle>,
    #[serde(default)]
    pub start: Option<Vec<f64>>,
    #[serde(default)]
    pub goal: Option<Vec<f64>>,
    #[serde(default)]
    pub pairs: PairSpec,
    /// Episode timeout (seconds).
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    /// Interval between cloud snapshots given to the planner (seconds).
    #[serde(default = "default_perception")]
    pub perception_period: f64,
    #[serde(default)]
    pub sampling_seed: u64,
    /// Collision is declared at raw clearance at or below this margin.
    #[serde(default)]
    pub collision_margin: f64,
    /// Directory used to resolve a relative robot path (not serialized).
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_timeout() -> f64 {
    20.0
}

fn default_perception() -> f64 {
    0.05
}

impl Scenario {
    pub fn from_json_str(json: &str, path: &Path) -> Result<Self> {
        let mut s: Scenario = serde_json::from_str(json).map_err(|e| Error::json(path, e))?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn load_robot(&self) -> Result<KinematicChain> {
        KinematicChain::resolve(&self.robot, self.base_dir.as_deref())
    }

    pub fn validate(&self) -> Result<()> {
        for o in &self.obstacles {
            o.validate()?;
        }
        if let Some(m) = &self.moving_obstacle {
            m.obstacle.validate()?;
        }
        if !(self.timeout > 0.0) || !(self.perception_period > 0.0) {
            return Err(Error::invalid("timeout and perception period must be positive"));
        }
        Ok(())
    }

    pub fn fixed_pair(&self) -> Option<(Configuration, Configuration)> {
        match (&self.start, &self.goal) {
            (Some(s), Some(g)) => Some((DVector::from_column_slice(s), DVector::from_column_slice(g))),
            _ => None,
        }
    }
}

/// Sampled scene: static cloud, the moving obstacle's cloud at its start
/// pose, and the primitives for exact penetration tests.
#[derive(Debug, Clone)]
pub struct Scene {
    static_cloud: SceneCloud,
    moving_cloud: Option<SceneCloud>,
    obstacles: Vec<ObstacleSpec>,
    moving: Option<MovingObstacle>,
}

impl Scene {
    pub fn build(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let seeds = SeedStream::new(scenario.sampling_seed);
        let sample = |o: &ObstacleSpec, index: u64| -> Result<SceneCloud> {
            let mut rng = seeds.derive_index("obstacle", index).rng();
            let pts = o.sample_surface(&mut rng)?;
            SceneCloud::new(&pts, vec![o.id; pts.len()], 0.0)
        };
        let mut static_cloud = SceneCloud::default();
        for (i, o) in scenario.obstacles.iter().enumerate() {
            static_cloud.extend(&sample(o, i as u64)?);
        }
        let moving_cloud = match &scenario.moving_obstacle {
            Some(m) => Some(sample(&m.obstacle, u64::MAX)?),
            None => None,
        };
        if static_cloud.is_empty() && moving_cloud.is_none() {
            return Err(Error::invalid(format!("scenario {} has no obstacles", scenario.name)));
        }
        Ok(Self {
            static_cloud,
            moving_cloud,
            obstacles: scenario.obstacles.clone(),
            moving: scenario.moving_obstacle.clone(),
        })
    }

    pub fn is_dynamic(&self) -> bool {
        self.moving.is_some()
    }

    /// Cloud at time `t` (moving obstacle translated by its offset).
    pub fn cloud_at(&self, t: f64) -> SceneCloud {
        let mut cloud = self.static_cloud.clone();
        if let (Some(mc), Some(m)) = (&self.moving_cloud, &self.moving) {
            cloud.extend(&mc.translated(&m.offset(t)));
        }
        cloud.with_timestamp(t)
    }

    /// Lowest signed distance of `p` to any primitive at time `t`.
    pub fn primitive_distance(&self, p: &Vector3<f64>, t: f64) -> f64 {
        let zero = Vector3::zeros();
        let mut d = self
            .obstacles
            .iter()
            .map(|o| o.signed_distance(p, &zero))
            .fold(f64::INFINITY, f64::min);
        if let Some(m) = &self.moving {
            d = d.min(m.obstacle.signed_distance(p, &m.offset(t)));
        }
        d
    }
}

/// Cloud for `scenario` at time `t`.
pub fn build_scene_cloud(scenario: &Scenario, t: f64) -> Result<SceneCloud> {
    Ok(Scene::build(scenario)?.cloud_at(t))
}

/// Planar desk scenes for the 3-joint arm: a few slab-like boxes and
/// cylinders scattered around the base, leaving the base region clear.
pub fn desk_scenes(count: usize, seed: u64) -> Vec<Scenario> {
    let stream = SeedStream::new(seed).derive("desk_scenes");
    (0..count)
        .map(|i| {
            let mut rng = stream.derive_index("scene", i as u64).rng();
            let n = rng.random_range(3..=5);
            let mut obstacles: Vec<ObstacleSpec> = Vec::new();
            let mut placed: Vec<(Vector3<f64>, f64)> = Vec::new();
            let mut attempts = 0;
            while obstacles.len() < n && attempts < 1000 {
                attempts += 1;
                let size = rng.random_range(0.03..0.06);
                let radius = rng.random_range(0.3..0.65);
                let angle = rng.random_range(-PI..PI);
                let c = Vector3::new(radius * angle.cos(), radius * angle.sin(), 0.0);
                if placed.iter().any(|(p, s)| (p - c).norm() < s + size + 0.16) {
                    continue;
                }
                placed.push((c, size));
                let shape = if rng.random::<bool>() {
                    Shape::Box {
                        half_extents: [size, rng.random_range(0.03..0.06), 0.03],
                    }
                } else {
                    Shape::Cylinder {
                        radius: size,
                        half_height: 0.03,
                    }
                };
                obstacles.push(ObstacleSpec {
                    id: obstacles.len() as u32 + 1,
                    shape,
                    center: [c.x, c.y, 0.0],
                    rpy: [0.0, 0.0, rng.random_range(-PI..PI)],
                    density: 1500.0,
                });
            }
            Scenario {
                name: format!("desk_{i:02}"),
                robot: "planar3".into(),
                obstacles,
                moving_obstacle: None,
                start: None,
                goal: None,
                pairs: PairSpec::default(),
                timeout: 20.0,
                perception_period: 0.05,
                sampling_seed: seed.wrapping_add(i as u64),
                collision_margin: 0.0,
                base_dir: None,
            }
        })
        .collect()
}
