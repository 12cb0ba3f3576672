//! Occupancy world: voxel grid, target surface, scenario files and the
//! simulated LiDAR reveal.

mod grid;
mod scenario;

pub use grid::{
    Aabb, CellState, LabelFilter, Occupant, RayHit, VoxelGrid, VoxelIndex, LOCAL_CAP,
};
pub use scenario::{
    load_scenario, save_scenario, BoundsDoc, BoxDoc, CameraDoc, LimitsDoc, NodeDoc, ObstacleDoc,
    ObstacleSet, ScenarioFile, ShapeDoc, Scenario, Trigger, TriggerDoc, Limits,
};

use serde::{Deserialize, Serialize};

use crate::geom::Vec3;

/// One discretized patch of the target surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceElement {
    pub id: usize,
    pub p: Vec3,
    pub normal: Vec3,
    pub voxel: VoxelIndex,
}

/// Target surface as a list of exposed target voxels.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct SurfaceModel {
    pub elements: Vec<SurfaceElement>,
    pub element_size: f64,
}

const FACES: [[i32; 3]; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

impl SurfaceModel {
    /// Every target voxel with at least one non-target face neighbor becomes an
    /// element centered on the voxel; its normal averages the exposed faces.
    pub fn from_grid(grid: &VoxelGrid) -> Self {
        let mut voxels: Vec<VoxelIndex> = grid
            .occupied_centers(LabelFilter::Target)
            .iter()
            .filter_map(|c| grid.index_of(c))
            .collect();
        voxels.sort();
        let mut elements = Vec::new();
        for v in voxels {
            let mut n = Vec3::zeros();
            let mut first = None;
            for f in FACES {
                let nb = [v[0] + f[0], v[1] + f[1], v[2] + f[2]];
                if grid.state(nb) != CellState::Target {
                    let fv = Vec3::new(f[0] as f64, f[1] as f64, f[2] as f64);
                    n += fv;
                    first.get_or_insert(fv);
                }
            }
            let Some(first) = first else { continue };
            let normal = if n.norm() > 1e-9 { n.normalize() } else { first };
            elements.push(SurfaceElement {
                id: elements.len(),
                p: grid.center(v),
                normal,
                voxel: v,
            });
        }
        Self {
            elements,
            element_size: grid.resolution(),
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// Simulated LiDAR discovery. Marks as obstacle every hidden voxel that is
/// in range of `sensor` with a clear line of sight on the current grid
/// (evaluated before any of this call's insertions), plus always-visible
/// sets and sets linked to a set revealed in this call. Returns the number
/// of newly occupied voxels.
pub fn reveal(grid: &mut VoxelGrid, sensor: &Vec3, scenario: &Scenario) -> usize {
    let mut newly: Vec<VoxelIndex> = Vec::new();
    let mut set_touched = vec![false; scenario.obstacles.len()];
    let mut set_seen = vec![false; scenario.obstacles.len()];
    for (si, set) in scenario.obstacles.iter().enumerate() {
        set_seen[si] = set.voxels.iter().any(|v| grid.state(*v) == CellState::Obstacle);
        let range = match set.trigger {
            Trigger::Always => {
                for v in &set.voxels {
                    if !grid.state(*v).is_occupied() {
                        newly.push(*v);
                        set_touched[si] = true;
                    }
                }
                continue;
            }
            Trigger::Range(r) => r,
            Trigger::Linked(_) => continue,
        };
        let r2 = range * range;
        for v in &set.voxels {
            if grid.state(*v).is_occupied() {
                continue;
            }
            let c = grid.center(*v);
            if (c - sensor).norm_squared() > r2 {
                continue;
            }
            if !grid.raycast(sensor, &c).blocked {
                newly.push(*v);
                set_touched[si] = true;
            }
        }
    }
    for set in &scenario.obstacles {
        if let Trigger::Linked(parent) = set.trigger {
            if set_touched[parent] || set_seen[parent] {
                for v in &set.voxels {
                    if !grid.state(*v).is_occupied() {
                        newly.push(*v);
                    }
                }
            }
        }
    }
    newly.sort();
    newly.dedup();
    let mut count = 0;
    for v in newly {
        if let Ok(true) = grid.set(v, CellState::Obstacle) {
            count += 1;
        }
    }
    count
}
