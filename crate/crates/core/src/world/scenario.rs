//! Scenario files: target geometry, hidden obstacles with reveal triggers,
//! the nominal path, camera and kinematic limits.
//!
//! Files store angles in degrees; the in-memory [`Scenario`] uses radians.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{Aabb, CellState, SurfaceModel, VoxelGrid, VoxelIndex};
use crate::error::{Error, Result};
use crate::geom::{CameraConfig, FrustumParams, Vec3, PITCH_MAX, PITCH_MIN};
use crate::path::{NodeKind, PathNode, ScanPath};
use crate::vis;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDoc {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeDoc {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boxes: Vec<BoxDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub voxel_list: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerDoc {
    /// `always`, `range` (param: meters or null for the LiDAR range) or
    /// `linked` (param: id of another obstacle set).
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub param: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleDoc {
    pub id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boxes: Vec<BoxDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub voxel_list: Vec<[f64; 3]>,
    pub trigger: TriggerDoc,
    /// Optional seeded horizontal displacement bound (meters).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub p: [f64; 3],
    pub theta_deg: f64,
    pub psi_deg: f64,
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDoc {
    pub alpha_h_deg: f64,
    pub alpha_v_deg: f64,
    pub r_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsDoc {
    pub v_max: f64,
    pub omega_max_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsDoc {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

fn default_lidar_range() -> f64 {
    15.0
}

/// On-disk scenario document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub resolution: f64,
    pub bounds: BoundsDoc,
    pub target: ShapeDoc,
    #[serde(default)]
    pub obstacles: Vec<ObstacleDoc>,
    pub nominal_path: Vec<NodeDoc>,
    pub camera: CameraDoc,
    pub limits: LimitsDoc,
    #[serde(default = "default_lidar_range")]
    pub lidar_range: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Trigger {
    Always,
    /// Revealed voxel by voxel within this sensor distance, line of sight permitting.
    Range(f64),
    /// Revealed as a whole once the referenced set has any revealed voxel.
    Linked(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObstacleSet {
    pub id: String,
    pub voxels: Vec<VoxelIndex>,
    pub trigger: Trigger,
}

/// Kinematic limits (m/s, rad/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub v_max: f64,
    pub omega_max: f64,
}

/// Validated scenario with derived geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub doc: ScenarioFile,
    /// Grid holding only the target geometry.
    pub base_grid: VoxelGrid,
    pub surface: SurfaceModel,
    pub obstacles: Vec<ObstacleSet>,
    /// Nominal path with intended subsets attached to viewpoints.
    pub nominal: ScanPath,
    pub camera: FrustumParams,
    pub limits: Limits,
    pub lidar_range: f64,
    pub seed: u64,
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn finite3(a: &[f64; 3]) -> bool {
    a.iter().all(|x| x.is_finite())
}

fn voxelize(grid: &VoxelGrid, shape_boxes: &[BoxDoc], list: &[[f64; 3]], field: &str) -> Result<Vec<VoxelIndex>> {
    let mut out = BTreeSet::new();
    let res = grid.resolution();
    for (bi, b) in shape_boxes.iter().enumerate() {
        let f = format!("{field}.boxes[{bi}]");
        if !finite3(&b.min) || !finite3(&b.max) || (0..3).any(|i| b.min[i] > b.max[i]) {
            return Err(Error::invalid(f, "min must be <= max and finite"));
        }
        let lo = v3(b.min);
        let hi = v3(b.max);
        let bmin = grid.bounds().min;
        let dims = grid.dims();
        let mut rng = [(0i32, 0i32); 3];
        for i in 0..3 {
            let a = (((lo[i] - bmin[i]) / res) - 0.5 - 1e-9).ceil() as i32;
            let z = (((hi[i] - bmin[i]) / res) - 0.5 + 1e-9).floor() as i32;
            rng[i] = (a.max(0), z.min(dims[i] - 1));
        }
        for z in rng[2].0..=rng[2].1 {
            for y in rng[1].0..=rng[1].1 {
                for x in rng[0].0..=rng[0].1 {
                    out.insert([x, y, z]);
                }
            }
        }
    }
    for (pi, p) in list.iter().enumerate() {
        let f = format!("{field}.voxel_list[{pi}]");
        if !finite3(p) {
            return Err(Error::invalid(f, "non-finite coordinate"));
        }
        let idx = grid
            .index_of(&v3(*p))
            .ok_or_else(|| Error::invalid(f, "outside bounds"))?;
        out.insert(idx);
    }
    Ok(out.into_iter().collect())
}

impl Scenario {
    /// Validates a document and derives grids, surface and intended subsets.
    pub fn from_doc(doc: ScenarioFile) -> Result<Self> {
        let d = &doc;
        if !(d.resolution > 0.0 && d.resolution.is_finite()) {
            return Err(Error::invalid("resolution", "must be positive"));
        }
        if !finite3(&d.bounds.min) || !finite3(&d.bounds.max) || (0..3).any(|i| d.bounds.min[i] >= d.bounds.max[i]) {
            return Err(Error::invalid("bounds", "min must be < max on every axis"));
        }
        let bounds = Aabb::new(v3(d.bounds.min), v3(d.bounds.max));
        let mut base_grid = VoxelGrid::new(bounds, d.resolution)?;

        let target = voxelize(&base_grid, &d.target.boxes, &d.target.voxel_list, "target")?;
        if target.is_empty() {
            return Err(Error::invalid("target", "no target voxels inside bounds"));
        }
        for v in &target {
            base_grid.set(*v, CellState::Target)?;
        }

        let camera = FrustumParams::from_degrees(d.camera.alpha_h_deg, d.camera.alpha_v_deg, d.camera.r_max)?;
        if !(d.limits.v_max > 0.0 && d.limits.v_max.is_finite()) {
            return Err(Error::invalid("limits.v_max", "must be positive"));
        }
        if !(d.limits.omega_max_deg > 0.0 && d.limits.omega_max_deg.is_finite()) {
            return Err(Error::invalid("limits.omega_max_deg", "must be positive"));
        }
        if !(d.lidar_range > 0.0 && d.lidar_range.is_finite()) {
            return Err(Error::invalid("lidar_range", "must be positive"));
        }

        let mut ids = HashMap::new();
        for (i, o) in d.obstacles.iter().enumerate() {
            if ids.insert(o.id.clone(), i).is_some() {
                return Err(Error::invalid(format!("obstacles[{i}].id"), format!("duplicate id `{}`", o.id)));
            }
        }
        let mut obstacles = Vec::with_capacity(d.obstacles.len());
        for (i, o) in d.obstacles.iter().enumerate() {
            let field = format!("obstacles[{i}]");
            let trigger = match o.trigger.kind.as_str() {
                "always" => Trigger::Always,
                "range" => match &o.trigger.param {
                    None | Some(serde_json::Value::Null) => Trigger::Range(d.lidar_range),
                    Some(v) => match v.as_f64() {
                        Some(r) if r > 0.0 => Trigger::Range(r),
                        _ => return Err(Error::invalid(format!("{field}.trigger.param"), "range must be a positive number")),
                    },
                },
                "linked" => {
                    let name = o.trigger.param.as_ref().and_then(|v| v.as_str()).ok_or_else(|| {
                        Error::invalid(format!("{field}.trigger.param"), "linked trigger needs an obstacle id")
                    })?;
                    match ids.get(name) {
                        Some(&j) if j != i => Trigger::Linked(j),
                        Some(_) => return Err(Error::invalid(format!("{field}.trigger.param"), "set cannot link to itself")),
                        None => {
                            return Err(Error::invalid(
                                format!("{field}.trigger.param"),
                                format!("unknown obstacle set `{name}`"),
                            ))
                        }
                    }
                }
                other => {
                    return Err(Error::invalid(format!("{field}.trigger.type"), format!("unknown trigger `{other}`")))
                }
            };
            let mut voxels = voxelize(&base_grid, &o.boxes, &o.voxel_list, &field)?;
            if voxels.is_empty() {
                return Err(Error::invalid(field, "obstacle set has no voxels inside bounds"));
            }
            if let Some(j) = o.jitter {
                if !(j >= 0.0 && j.is_finite()) {
                    return Err(Error::invalid(format!("{field}.jitter"), "must be non-negative"));
                }
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(d.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)));
                let k = (j / d.resolution).floor() as i32;
                let (dx, dy) = if k > 0 { (rng.gen_range(-k..=k), rng.gen_range(-k..=k)) } else { (0, 0) };
                voxels = voxels
                    .into_iter()
                    .map(|v| [v[0] + dx, v[1] + dy, v[2]])
                    .filter(|v| base_grid.in_grid(*v))
                    .collect();
            }
            voxels.retain(|v| base_grid.state(*v) != CellState::Target);
            obstacles.push(ObstacleSet {
                id: o.id.clone(),
                voxels,
                trigger,
            });
        }

        let surface = SurfaceModel::from_grid(&base_grid);
        if d.nominal_path.is_empty() {
            return Err(Error::invalid("nominal_path", "empty path"));
        }
        let mut nodes = Vec::with_capacity(d.nominal_path.len());
        for (i, n) in d.nominal_path.iter().enumerate() {
            let field = format!("nominal_path[{i}]");
            if !finite3(&n.p) || !bounds.contains(&v3(n.p)) {
                return Err(Error::invalid(format!("{field}.p"), "outside bounds"));
            }
            let pitch = n.theta_deg.to_radians();
            if !(PITCH_MIN - 1e-9..=PITCH_MAX + 1e-9).contains(&pitch) {
                return Err(Error::invalid(format!("{field}.theta_deg"), "outside gimbal limits [-80, 30]"));
            }
            if !n.psi_deg.is_finite() {
                return Err(Error::invalid(format!("{field}.psi_deg"), "non-finite"));
            }
            let config = CameraConfig::new(v3(n.p), pitch, n.psi_deg.to_radians());
            nodes.push(match n.kind {
                NodeKind::Waypoint => PathNode::waypoint(config),
                NodeKind::Viewpoint => {
                    let elements = vis::intended_subset(&config, &surface, &base_grid, &camera);
                    if elements.is_empty() {
                        return Err(Error::invalid(field, "viewpoint observes no target element"));
                    }
                    PathNode::viewpoint(config, elements)
                }
            });
        }
        let nominal = ScanPath::new(nodes);
        if nominal.viewpoint_indices().is_empty() {
            return Err(Error::invalid("nominal_path", "no viewpoint"));
        }

        Ok(Self {
            limits: Limits {
                v_max: d.limits.v_max,
                omega_max: d.limits.omega_max_deg.to_radians(),
            },
            lidar_range: d.lidar_range,
            seed: d.seed,
            doc,
            base_grid,
            surface,
            obstacles,
            nominal,
            camera,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_doc(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("scenario document serializes")
    }

    /// Same scenario with a different seed (re-derives jittered obstacles).
    pub fn with_seed(&self, seed: u64) -> Result<Self> {
        let mut doc = self.doc.clone();
        doc.seed = seed;
        Self::from_doc(doc)
    }

    /// All hidden obstacle voxels.
    pub fn hidden_voxel_count(&self) -> usize {
        self.obstacles.iter().map(|o| o.voxels.len()).sum()
    }

    /// Grid with the target and every obstacle set already revealed.
    pub fn ground_truth_grid(&self) -> VoxelGrid {
        let mut g = self.base_grid.clone();
        for o in &self.obstacles {
            for v in &o.voxels {
                let _ = g.set(*v, CellState::Obstacle);
            }
        }
        g
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_json(&text)
}

pub fn save_scenario(path: impl AsRef<Path>, scenario: &Scenario) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scenario.to_json()).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
