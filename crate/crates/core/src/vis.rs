//! Visibility predicates over a grid snapshot.
//!
//! Two strengths of "clean" are used by the planner:
//! - [`occ`] is the FoV-level test: any obstacle voxel center inside the frustum.
//!   Candidate repair, connectors and the occlusion-rate metric use it.
//! - viewpoint qualification additionally needs every intended element to be
//!   ray-visible ([`classify_viewpoints`]).
//!
//! Target voxels never count for [`occ`]; they still block rays.

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{make_frustum, CameraConfig, FrustumParams, HalfSpaceSet};
use crate::path::ScanPath;
use crate::world::{LabelFilter, SurfaceElement, SurfaceModel, VoxelGrid};

pub use crate::path::IntendedSubset;

/// Set of covered surface elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverageSet {
    bits: FixedBitSet,
}

impl CoverageSet {
    pub fn new(n: usize) -> Self {
        Self {
            bits: FixedBitSet::with_capacity(n),
        }
    }

    pub fn from_ids(n: usize, ids: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::new(n);
        for i in ids {
            s.insert(i);
        }
        s
    }

    pub fn insert(&mut self, id: usize) {
        self.bits.insert(id);
    }

    pub fn contains(&self, id: usize) -> bool {
        self.bits.contains(id)
    }

    pub fn union_with(&mut self, other: &CoverageSet) {
        self.bits.union_with(&other.bits);
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn universe(&self) -> usize {
        self.bits.len()
    }

    /// `covered / |S|`; zero for an empty surface.
    pub fn ratio(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.bits.len() as f64
        }
    }

    pub fn is_superset(&self, other: &CoverageSet) -> bool {
        self.bits.is_superset(&other.bits)
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.ones()
    }
}

/// Element inside the frustum and not occluded by any non-self voxel.
pub fn element_visible(q: &CameraConfig, e: &SurfaceElement, grid: &VoxelGrid, params: &FrustumParams) -> bool {
    element_visible_in(q, &make_frustum(q, params), e, grid)
}

pub(crate) fn element_visible_in(q: &CameraConfig, hs: &HalfSpaceSet, e: &SurfaceElement, grid: &VoxelGrid) -> bool {
    hs.contains(&e.p) && !grid.raycast(&q.p, &e.p).blocked
}

/// FoV-level occlusion: some obstacle voxel center lies inside the frustum.
pub fn occ(q: &CameraConfig, grid: &VoxelGrid, params: &FrustumParams) -> bool {
    grid.any_in_frustum(&make_frustum(q, params), LabelFilter::Obstacle)
}

/// Elements a viewpoint is expected to observe: inside its frustum and
/// ray-visible on `grid`.
pub fn intended_subset(q: &CameraConfig, surface: &SurfaceModel, grid: &VoxelGrid, params: &FrustumParams) -> Vec<usize> {
    let hs = make_frustum(q, params);
    surface
        .elements
        .iter()
        .filter(|e| element_visible_in(q, &hs, e, grid))
        .map(|e| e.id)
        .collect()
}

/// All elements visible from `q` (frustum + raycast).
pub fn visible_elements(q: &CameraConfig, surface: &SurfaceModel, grid: &VoxelGrid, params: &FrustumParams) -> Vec<usize> {
    intended_subset(q, surface, grid, params)
}

/// Elements of `subset` whose ray from `q.p` is not blocked by target voxels.
/// Obstacle blockage is ignored here.
pub fn visible_subset(q: &CameraConfig, subset: &[usize], surface: &SurfaceModel, grid: &VoxelGrid) -> Vec<usize> {
    subset
        .iter()
        .copied()
        .filter(|&id| !grid.raycast_filtered(&q.p, &surface.elements[id].p, LabelFilter::Target).blocked)
        .collect()
}

/// Why a viewpoint failed qualification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disqualification {
    Clearance,
    Occluded,
    ElementBlocked,
}

/// Qualification test for one viewpoint.
pub fn qualify(
    q: &CameraConfig,
    intended: &[usize],
    surface: &SurfaceModel,
    grid: &VoxelGrid,
    params: &FrustumParams,
    d_min: f64,
) -> Option<Disqualification> {
    if !grid.is_clear(&q.p, d_min) {
        return Some(Disqualification::Clearance);
    }
    let hs = make_frustum(q, params);
    if grid.any_in_frustum(&hs, LabelFilter::Obstacle) {
        return Some(Disqualification::Occluded);
    }
    if intended.iter().any(|&id| !element_visible_in(q, &hs, &surface.elements[id], grid)) {
        return Some(Disqualification::ElementBlocked);
    }
    None
}

/// Viewpoints split into qualified and invalid node indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Classification {
    pub qualified: Vec<usize>,
    pub invalid: Vec<usize>,
}

/// Classifies every viewpoint node of `path`.
pub fn classify_viewpoints(
    path: &ScanPath,
    surface: &SurfaceModel,
    grid: &VoxelGrid,
    params: &FrustumParams,
    d_min: f64,
) -> Result<Classification> {
    classify_nodes(path, &path.viewpoint_indices(), surface, grid, params, d_min)
}

/// Classifies the given viewpoint node indices.
pub fn classify_nodes(
    path: &ScanPath,
    indices: &[usize],
    surface: &SurfaceModel,
    grid: &VoxelGrid,
    params: &FrustumParams,
    d_min: f64,
) -> Result<Classification> {
    let mut out = Classification::default();
    for &i in indices {
        let node = &path.nodes[i];
        let intended = node
            .intended
            .as_ref()
            .ok_or(Error::Precondition("viewpoint without intended subset"))?;
        match qualify(&node.config, &intended.elements, surface, grid, params, d_min) {
            None => out.qualified.push(i),
            Some(_) => out.invalid.push(i),
        }
    }
    Ok(out)
}

/// Union of elements visible from each `(config, grid snapshot)` pair.
pub fn coverage(views: &[(CameraConfig, &VoxelGrid)], surface: &SurfaceModel, params: &FrustumParams) -> CoverageSet {
    let mut cov = CoverageSet::new(surface.len());
    for (q, g) in views {
        for id in visible_elements(q, surface, g, params) {
            cov.insert(id);
        }
    }
    cov
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::path::PathNode;
    use crate::world::{Aabb, CellState};

    fn wall_grid() -> (VoxelGrid, SurfaceModel) {
        // thin wall at x = 4, facing -x
        let mut g = VoxelGrid::new(Aabb::new(Vec3::new(0.0, -3.0, -1.0), Vec3::new(6.0, 3.0, 3.0)), 0.1).unwrap();
        for y in -5..5 {
            for z in 5..15 {
                let i = g.index_of(&Vec3::new(4.05, y as f64 * 0.1 + 0.05, z as f64 * 0.1 + 0.05)).unwrap();
                g.set(i, CellState::Target).unwrap();
            }
        }
        let s = SurfaceModel::from_grid(&g);
        (g, s)
    }

    fn params() -> FrustumParams {
        FrustumParams::from_degrees(80.0, 65.0, 5.0).unwrap()
    }

    fn cam() -> CameraConfig {
        CameraConfig::new(Vec3::new(1.05, 0.05, 1.05), 0.0, 0.0)
    }

    fn put(g: &mut VoxelGrid, p: Vec3, st: CellState) {
        let i = g.index_of(&p).unwrap();
        g.set(i, st).unwrap();
    }

    #[test]
    fn element_visibility_cases() {
        let (mut g, s) = wall_grid();
        let q = cam();
        let on_axis = s.elements.iter().find(|e| (e.p.y - 0.05).abs() < 1e-9 && (e.p.z - 1.05).abs() < 1e-9).unwrap();
        assert!(element_visible(&q, on_axis, &g, &params()));
        // outside the cone: look away
        let away = CameraConfig::new(q.p, 0.0, std::f64::consts::PI);
        assert!(!element_visible(&away, on_axis, &g, &params()));
        put(&mut g, Vec3::new(2.55, 0.05, 1.05), CellState::Obstacle);
        assert!(!element_visible(&q, on_axis, &g, &params()));
    }

    #[test]
    fn occ_cases() {
        let (mut g, _) = wall_grid();
        let q = cam();
        assert!(!occ(&q, &g, &params()));
        put(&mut g, Vec3::new(2.05, 0.05, 1.05), CellState::Target);
        assert!(!occ(&q, &g, &params()));
        let (mut g, _) = wall_grid();
        put(&mut g, Vec3::new(2.05, 0.05, 1.05), CellState::Obstacle);
        assert!(occ(&q, &g, &params()));
    }

    #[test]
    fn occ_matches_frustum_query() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let (mut g, _) = wall_grid();
        for _ in 0..30 {
            put(&mut g, Vec3::new(rng.gen_range(0.0..3.9), rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..3.0)), CellState::Obstacle);
        }
        for _ in 0..200 {
            let q = CameraConfig::new(
                Vec3::new(rng.gen_range(0.0..4.0), rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..3.0)),
                rng.gen_range(-1.3..0.5),
                rng.gen_range(-3.1..3.1),
            );
            let hs = make_frustum(&q, &params());
            assert_eq!(occ(&q, &g, &params()), !g.voxels_in_frustum(&hs, LabelFilter::Obstacle).is_empty());
        }
    }

    fn one_vp_path(q: CameraConfig, s: &SurfaceModel, g: &VoxelGrid) -> ScanPath {
        let elems = intended_subset(&q, s, g, &params());
        ScanPath::new(vec![PathNode::viewpoint(q, elems), PathNode::waypoint(q)])
    }

    #[test]
    fn classify_cases() {
        let (g, s) = wall_grid();
        let path = one_vp_path(cam(), &s, &g);
        let c = classify_viewpoints(&path, &s, &g, &params(), 0.2).unwrap();
        assert_eq!(c.qualified, vec![0]);
        assert!(c.invalid.is_empty());

        // obstacle at d_min/2 behind the camera: clearance failure only
        let mut g2 = g.clone();
        put(&mut g2, Vec3::new(0.95, 0.05, 1.05), CellState::Obstacle);
        assert_eq!(
            qualify(&cam(), &path.nodes[0].intended.as_ref().unwrap().elements, &s, &g2, &params(), 0.2),
            Some(Disqualification::Clearance)
        );
        let c = classify_viewpoints(&path, &s, &g2, &params(), 0.2).unwrap();
        assert_eq!(c.invalid, vec![0]);

        let mut bad = path.clone();
        bad.nodes[0].intended = None;
        assert!(classify_viewpoints(&bad, &s, &g, &params(), 0.2).is_err());
    }

    #[test]
    fn classify_single_blocked_element() {
        let (g, s) = wall_grid();
        let q = cam();
        let path = one_vp_path(q, &s, &g);
        let intended = &path.nodes[0].intended.as_ref().unwrap().elements;
        // a target voxel (does not trigger occ) blocking exactly one element
        let mut g2 = g.clone();
        let e = &s.elements[intended[intended.len() / 2]];
        let mid = q.p + (e.p - q.p) * 0.5;
        put(&mut g2, mid, CellState::Target);
        let blocked: Vec<usize> = intended
            .iter()
            .copied()
            .filter(|&id| g2.raycast(&q.p, &s.elements[id].p).blocked)
            .collect();
        assert!(!blocked.is_empty());
        assert!(!occ(&q, &g2, &params()));
        assert_eq!(
            qualify(&q, intended, &s, &g2, &params(), 0.2),
            Some(Disqualification::ElementBlocked)
        );
    }

    #[test]
    fn visible_subset_cases() {
        let (g, s) = wall_grid();
        let q = cam();
        let all = intended_subset(&q, &s, &g, &params());
        assert_eq!(visible_subset(&q, &all, &s, &g), all);
        assert!(visible_subset(&q, &[], &s, &g).is_empty());
    }

    #[test]
    fn visible_subset_l_shape() {
        // L-shaped target: a wing at x = 2.5 hides part of the x = 4 wall
        let (mut g, _) = wall_grid();
        for y in 0..5 {
            for z in 5..15 {
                put(&mut g, Vec3::new(2.55, y as f64 * 0.1 + 0.05, z as f64 * 0.1 + 0.05), CellState::Target);
            }
        }
        let s = SurfaceModel::from_grid(&g);
        let q = cam();
        let hs = make_frustum(&q, &params());
        let in_view: Vec<usize> = s.elements.iter().filter(|e| hs.contains(&e.p)).map(|e| e.id).collect();
        let vis = visible_subset(&q, &in_view, &s, &g);
        assert!(vis.len() < in_view.len());
        // oracle: segment/box slab test against the wing box, shrunk and grown by 1e-6
        let seg_hits = |a: &Vec3, b: &Vec3, lo: Vec3, hi: Vec3| -> bool {
            let (mut t0, mut t1) = (0.0f64, 1.0f64);
            for i in 0..3 {
                let d = b[i] - a[i];
                if d.abs() < 1e-15 {
                    if a[i] < lo[i] || a[i] > hi[i] {
                        return false;
                    }
                } else {
                    let (mut ta, mut tb) = ((lo[i] - a[i]) / d, (hi[i] - a[i]) / d);
                    if ta > tb {
                        std::mem::swap(&mut ta, &mut tb);
                    }
                    t0 = t0.max(ta);
                    t1 = t1.min(tb);
                }
            }
            t0 <= t1
        };
        let (lo, hi) = (Vec3::new(2.5, 0.0, 0.5), Vec3::new(2.6, 0.5, 1.5));
        let eps = Vec3::repeat(1e-6);
        for &id in &in_view {
            let e = &s.elements[id];
            if e.p.x < 3.0 {
                continue; // wing elements themselves
            }
            let removed = !vis.contains(&id);
            if seg_hits(&q.p, &e.p, lo + eps, hi - eps) {
                assert!(removed, "element {id} should be hidden");
            }
            if !seg_hits(&q.p, &e.p, lo - eps, hi + eps) {
                assert!(!removed, "element {id} should be visible");
            }
        }
    }

    #[test]
    fn coverage_cases() {
        let (g, s) = wall_grid();
        let q = CameraConfig::new(Vec3::new(0.5, 0.05, 1.05), 0.0, 0.0);
        let c = coverage(&[(q, &g)], &s, &params());
        // the whole 1 m x 1 m wall fits in view from 3.5 m
        assert_eq!(c.ratio(), 1.0);
        assert_eq!(coverage(&[], &s, &params()).ratio(), 0.0);
        let q2 = CameraConfig::new(Vec3::new(3.0, 0.5, 1.5), 0.0, 0.0);
        let a = coverage(&[(q2, &g)], &s, &params());
        let ab = coverage(&[(q2, &g), (q, &g)], &s, &params());
        assert!(ab.is_superset(&a));
    }
}
