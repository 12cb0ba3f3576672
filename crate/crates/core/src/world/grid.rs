//! Dense voxel occupancy grid with a block index over occupied cells.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{CameraConfig, HalfSpaceSet, Vec3};

/// Integer voxel index.
pub type VoxelIndex = [i32; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    #[default]
    Unknown,
    Free,
    Target,
    Obstacle,
}

impl CellState {
    pub fn is_occupied(self) -> bool {
        matches!(self, CellState::Target | CellState::Obstacle)
    }
}

/// Label of an occupied voxel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupant {
    Target,
    Obstacle,
}

/// Which occupied voxels a query considers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelFilter {
    Obstacle,
    Target,
    Any,
}

impl LabelFilter {
    fn accepts(self, state: CellState) -> bool {
        match self {
            LabelFilter::Obstacle => state == CellState::Obstacle,
            LabelFilter::Target => state == CellState::Target,
            LabelFilter::Any => state.is_occupied(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn dist2(&self, p: &Vec3) -> f64 {
        (0..3)
            .map(|i| {
                let d = (self.min[i] - p[i]).max(p[i] - self.max[i]).max(0.0);
                d * d
            })
            .sum()
    }
}

/// Result of a segment traversal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayHit {
    pub blocked: bool,
    pub hit_point: Option<Vec3>,
    pub hit_label: Option<Occupant>,
}

impl RayHit {
    pub const CLEAR: RayHit = RayHit {
        blocked: false,
        hit_point: None,
        hit_label: None,
    };
}

const BLOCK: i32 = 8;

/// Maximum number of samples returned by [`VoxelGrid::local_voxels`].
pub const LOCAL_CAP: usize = 64;

#[derive(Clone, Debug, Default, PartialEq)]
struct Block {
    obstacles: Vec<Vec3>,
    targets: Vec<Vec3>,
}

/// Online occupancy map.
///
/// Cells outside the bounds are reported as unknown. Unknown and free cells
/// are both treated as empty by every query.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    resolution: f64,
    bounds: Aabb,
    dims: [i32; 3],
    cells: Vec<CellState>,
    blocks: BTreeMap<VoxelIndex, Block>,
    n_obstacle: usize,
    n_target: usize,
    version: u64,
    removals: u64,
}

impl VoxelGrid {
    pub fn new(bounds: Aabb, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::invalid("resolution", "must be positive"));
        }
        let mut dims = [0i32; 3];
        for i in 0..3 {
            let ext = bounds.max[i] - bounds.min[i];
            if !(ext > 0.0) {
                return Err(Error::invalid("bounds", "max must exceed min on every axis"));
            }
            dims[i] = (ext / resolution - 1e-9).ceil().max(1.0) as i32;
        }
        let n = dims.iter().map(|&d| d as usize).product::<usize>();
        if n > 64_000_000 {
            return Err(Error::invalid("bounds", "grid exceeds 64M voxels"));
        }
        Ok(Self {
            resolution,
            bounds,
            dims,
            cells: vec![CellState::Unknown; n],
            blocks: BTreeMap::new(),
            n_obstacle: 0,
            n_target: 0,
            version: 0,
            removals: 0,
        })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn dims(&self) -> [i32; 3] {
        self.dims
    }

    /// Monotone counter bumped on every change of occupancy.
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Number of obstacle voxels ever cleared; unchanged while obstacles only accumulate.
    pub fn removals(&self) -> u64 {
        self.removals
    }

    pub fn obstacle_count(&self) -> usize {
        self.n_obstacle
    }

    pub fn target_count(&self) -> usize {
        self.n_target
    }

    /// Half of the voxel space diagonal.
    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.resolution * 3f64.sqrt()
    }

    fn raw_index(&self, p: &Vec3) -> VoxelIndex {
        let g = (p - self.bounds.min) / self.resolution;
        [g.x.floor() as i32, g.y.floor() as i32, g.z.floor() as i32]
    }

    pub fn in_grid(&self, idx: VoxelIndex) -> bool {
        (0..3).all(|i| idx[i] >= 0 && idx[i] < self.dims[i])
    }

    /// Voxel containing `p`, if inside the bounds.
    pub fn index_of(&self, p: &Vec3) -> Option<VoxelIndex> {
        if !self.bounds.contains(p) {
            return None;
        }
        let mut idx = self.raw_index(p);
        for i in 0..3 {
            idx[i] = idx[i].min(self.dims[i] - 1);
        }
        Some(idx)
    }

    pub fn center(&self, idx: VoxelIndex) -> Vec3 {
        self.bounds.min
            + Vec3::new(
                idx[0] as f64 + 0.5,
                idx[1] as f64 + 0.5,
                idx[2] as f64 + 0.5,
            ) * self.resolution
    }

    fn lin(&self, idx: VoxelIndex) -> usize {
        (idx[0] as usize)
            + (self.dims[0] as usize) * ((idx[1] as usize) + (self.dims[1] as usize) * idx[2] as usize)
    }

    pub fn state(&self, idx: VoxelIndex) -> CellState {
        if self.in_grid(idx) {
            self.cells[self.lin(idx)]
        } else {
            CellState::Unknown
        }
    }

    pub fn state_at(&self, p: &Vec3) -> CellState {
        self.index_of(p).map_or(CellState::Unknown, |i| self.state(i))
    }

    fn block_of(idx: VoxelIndex) -> VoxelIndex {
        [
            idx[0].div_euclid(BLOCK),
            idx[1].div_euclid(BLOCK),
            idx[2].div_euclid(BLOCK),
        ]
    }

    /// Sets a cell. Returns whether the cell changed.
    ///
    /// Occupied labels never flip between target and obstacle; such requests
    /// are rejected with an error.
    pub fn set(&mut self, idx: VoxelIndex, state: CellState) -> Result<bool> {
        if !self.in_grid(idx) {
            return Err(Error::invalid("voxel", format!("index {idx:?} outside bounds")));
        }
        let li = self.lin(idx);
        let old = self.cells[li];
        if old == state {
            return Ok(false);
        }
        if old.is_occupied() && state.is_occupied() {
            return Err(Error::invalid(
                "voxel",
                format!("cannot relabel {old:?} voxel {idx:?} as {state:?}"),
            ));
        }
        let c = self.center(idx);
        let bk = Self::block_of(idx);
        match old {
            CellState::Obstacle => {
                self.n_obstacle -= 1;
                self.removals += 1;
                if let Some(b) = self.blocks.get_mut(&bk) {
                    b.obstacles.retain(|x| *x != c);
                }
            }
            CellState::Target => {
                self.n_target -= 1;
                if let Some(b) = self.blocks.get_mut(&bk) {
                    b.targets.retain(|x| *x != c);
                }
            }
            _ => {}
        }
        match state {
            CellState::Obstacle => {
                self.n_obstacle += 1;
                self.blocks.entry(bk).or_default().obstacles.push(c);
            }
            CellState::Target => {
                self.n_target += 1;
                self.blocks.entry(bk).or_default().targets.push(c);
            }
            _ => {}
        }
        self.cells[li] = state;
        self.version += 1;
        Ok(true)
    }

    fn block_aabb(&self, bk: VoxelIndex) -> Aabb {
        let lo = self.center([bk[0] * BLOCK, bk[1] * BLOCK, bk[2] * BLOCK]);
        let hi = self.center([
            bk[0] * BLOCK + BLOCK - 1,
            bk[1] * BLOCK + BLOCK - 1,
            bk[2] * BLOCK + BLOCK - 1,
        ]);
        Aabb::new(lo, hi)
    }

    fn block_lists<'a>(&'a self, b: &'a Block, filter: LabelFilter) -> [&'a [Vec3]; 2] {
        match filter {
            LabelFilter::Obstacle => [&b.obstacles, &[]],
            LabelFilter::Target => [&b.targets, &[]],
            LabelFilter::Any => [&b.obstacles, &b.targets],
        }
    }

    /// Centers of all occupied voxels of the given label, in deterministic order.
    pub fn occupied_centers(&self, filter: LabelFilter) -> Vec<Vec3> {
        let mut out = Vec::new();
        for b in self.blocks.values() {
            for list in self.block_lists(b, filter) {
                out.extend_from_slice(list);
            }
        }
        out
    }

    /// First occupied voxel met by the segment `from -> to`.
    ///
    /// The voxel containing `from` is skipped. When `to` lies in a target voxel
    /// the ray is treated as terminating at a surface element: target voxels
    /// within one voxel (26-neighborhood) of the end voxel are ignored.
    pub fn raycast(&self, from: &Vec3, to: &Vec3) -> RayHit {
        self.raycast_filtered(from, to, LabelFilter::Any)
    }

    /// [`raycast`](Self::raycast) restricted to occupants accepted by `filter`.
    pub fn raycast_filtered(&self, from: &Vec3, to: &Vec3, filter: LabelFilter) -> RayHit {
        let start = self.raw_index(from);
        let end = self.raw_index(to);
        let end_is_target = self.state(end) == CellState::Target;
        let check = |idx: VoxelIndex| -> Option<Occupant> {
            let st = self.state(idx);
            if !filter.accepts(st) {
                return None;
            }
            if st == CellState::Target && end_is_target {
                let cheb = (0..3).map(|i| (idx[i] - end[i]).abs()).max().unwrap_or(0);
                if cheb <= 1 {
                    return None;
                }
            }
            match st {
                CellState::Target => Some(Occupant::Target),
                CellState::Obstacle => Some(Occupant::Obstacle),
                _ => None,
            }
        };
        let hit = |t: f64, occ: Occupant| RayHit {
            blocked: true,
            hit_point: Some(from + (to - from) * t),
            hit_label: Some(occ),
        };

        if start == end {
            return RayHit::CLEAR;
        }
        let g0 = (from - self.bounds.min) / self.resolution;
        let g1 = (to - self.bounds.min) / self.resolution;
        let dir = g1 - g0;
        let mut cur = start;
        let mut step = [0i32; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for i in 0..3 {
            if dir[i] > 0.0 {
                step[i] = 1;
                t_max[i] = ((cur[i] as f64 + 1.0) - g0[i]) / dir[i];
                t_delta[i] = 1.0 / dir[i];
            } else if dir[i] < 0.0 {
                step[i] = -1;
                t_max[i] = (cur[i] as f64 - g0[i]) / dir[i];
                t_delta[i] = -1.0 / dir[i];
            }
        }
        let max_steps = (0..3).map(|i| (end[i] - start[i]).abs()).sum::<i32>() + 3;
        for _ in 0..max_steps {
            let axis = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                0
            } else if t_max[1] <= t_max[2] {
                1
            } else {
                2
            };
            let t = t_max[axis];
            if t > 1.0 {
                break;
            }
            cur[axis] += step[axis];
            t_max[axis] += t_delta[axis];
            if let Some(occ) = check(cur) {
                return hit(t.max(0.0), occ);
            }
            if cur == end {
                break;
            }
        }
        RayHit::CLEAR
    }

    /// Distance from `x` to the nearest occupied voxel center minus the half
    /// diagonal, floored at zero; `f64::INFINITY` when nothing is occupied.
    pub fn min_clearance(&self, x: &Vec3) -> f64 {
        if self.n_obstacle + self.n_target == 0 {
            return f64::INFINITY;
        }
        let mut order: Vec<(f64, &Block)> = self
            .blocks
            .iter()
            .filter(|(_, b)| !b.obstacles.is_empty() || !b.targets.is_empty())
            .map(|(k, b)| (self.block_aabb(*k).dist2(x), b))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best2 = f64::INFINITY;
        for (lb2, b) in order {
            if lb2 > best2 {
                break;
            }
            for c in b.obstacles.iter().chain(b.targets.iter()) {
                best2 = best2.min((c - x).norm_squared());
            }
        }
        (best2.sqrt() - self.half_diagonal()).max(0.0)
    }

    /// Whether `min_clearance(x) >= d_min`, checking only nearby cells.
    pub fn is_clear(&self, x: &Vec3, d_min: f64) -> bool {
        if self.n_obstacle + self.n_target == 0 {
            return true;
        }
        let reach = d_min + self.half_diagonal();
        let r = (reach / self.resolution).ceil() as i32 + 1;
        let c = self.raw_index(x);
        let lim2 = reach * reach;
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    let idx = [c[0] + dx, c[1] + dy, c[2] + dz];
                    if !self.in_grid(idx) || !self.state(idx).is_occupied() {
                        continue;
                    }
                    if (self.center(idx) - x).norm_squared() < lim2 {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Whether every point of the segment `a..b` passes [`Self::is_clear`].
    pub fn is_segment_clear(&self, a: &Vec3, b: &Vec3, d_min: f64) -> bool {
        if self.n_obstacle + self.n_target == 0 {
            return true;
        }
        let reach = d_min + self.half_diagonal();
        let lim2 = reach * reach;
        let lo = self.raw_index(&(a.inf(b) - Vec3::repeat(reach)));
        let hi = self.raw_index(&(a.sup(b) + Vec3::repeat(reach)));
        let d = b - a;
        let len2 = d.norm_squared();
        for z in lo[2].max(0)..=hi[2].min(self.dims[2] - 1) {
            for y in lo[1].max(0)..=hi[1].min(self.dims[1] - 1) {
                for x in lo[0].max(0)..=hi[0].min(self.dims[0] - 1) {
                    let idx = [x, y, z];
                    if !self.state(idx).is_occupied() {
                        continue;
                    }
                    let c = self.center(idx);
                    let t = if len2 > 0.0 { ((c - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
                    if (a + d * t - c).norm_squared() < lim2 {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Occupied voxel centers of the given label inside the frustum.
    pub fn voxels_in_frustum(&self, hs: &HalfSpaceSet, filter: LabelFilter) -> Vec<Vec3> {
        let mut out = Vec::new();
        self.visit_in_frustum(hs, filter, |c| {
            out.push(*c);
            false
        });
        out
    }

    /// Whether any occupied voxel of the given label lies inside the frustum.
    pub fn any_in_frustum(&self, hs: &HalfSpaceSet, filter: LabelFilter) -> bool {
        let mut found = false;
        self.visit_in_frustum(hs, filter, |_| {
            found = true;
            true
        });
        found
    }

    fn visit_in_frustum<F: FnMut(&Vec3) -> bool>(&self, hs: &HalfSpaceSet, filter: LabelFilter, mut f: F) {
        for (k, b) in &self.blocks {
            let lists = self.block_lists(b, filter);
            if lists.iter().all(|l| l.is_empty()) {
                continue;
            }
            let bb = self.block_aabb(*k);
            if !hs.may_intersect_aabb(&bb.min, &bb.max) {
                continue;
            }
            for list in lists {
                for c in list {
                    if hs.contains(c) && f(c) {
                        return;
                    }
                }
            }
        }
    }

    /// Obstacle voxel centers within `radius` of `q.p`, nearest first, at most `cap`.
    pub fn local_voxels(&self, q: &CameraConfig, radius: f64, cap: usize) -> Vec<Vec3> {
        let r2 = radius * radius;
        let mut found: Vec<(f64, Vec3)> = Vec::new();
        for (k, b) in &self.blocks {
            if b.obstacles.is_empty() || self.block_aabb(*k).dist2(&q.p) > r2 {
                continue;
            }
            for c in &b.obstacles {
                let d2 = (c - q.p).norm_squared();
                if d2 <= r2 {
                    found.push((d2, *c));
                }
            }
        }
        found.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.x.total_cmp(&b.1.x))
                .then(a.1.y.total_cmp(&b.1.y))
                .then(a.1.z.total_cmp(&b.1.z))
        });
        found.truncate(cap);
        found.into_iter().map(|(_, c)| c).collect()
    }
}
