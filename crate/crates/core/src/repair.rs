//! Level-I viewpoint repair: sampled candidates on a sphere around each
//! invalid viewpoint's anchor, a closed-form standoff shift along the viewing
//! direction, a bounded attitude refinement, and greedy set completion.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::clock::Budget;
use crate::error::{Error, Result};
use crate::geom::{bearings, look_angles, make_frustum, view_dir, Attitude, CameraConfig, FrustumParams, HalfSpaceSet, Vec3};
use crate::params::PlannerParams;
use crate::path::PathNode;
use crate::vis::{visible_subset, CoverageSet};
use crate::world::{LabelFilter, SurfaceModel, VoxelGrid};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemplateDir {
    pub pitch: f64,
    pub yaw: f64,
    pub u: Vec3,
}

/// Canonical-frame ray directions (forward = +x), nearest to the axis first.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionTemplate {
    pub dirs: Vec<TemplateDir>,
    pub dtheta: f64,
    pub dpsi: f64,
}

/// Largest `n` with `n * step` strictly below `bound`.
fn open_steps(bound: f64, step: f64) -> i32 {
    ((bound / step) * (1.0 - 1e-12)).ceil() as i32 - 1
}

pub fn build_template(params: &FrustumParams, dtheta: f64, dpsi: f64) -> Result<DirectionTemplate> {
    if !(dtheta > 0.0 && dtheta <= params.alpha_v + 1e-12) || !(dpsi > 0.0 && dpsi <= params.alpha_h + 1e-12) {
        return Err(Error::Precondition("template steps must lie in (0, alpha]"));
    }
    let nt = open_steps(params.alpha_v, dtheta).max(0);
    let np = open_steps(params.alpha_h, dpsi).max(0);
    let mut idx: Vec<(i32, i32)> = Vec::new();
    for n in -nt..=nt {
        for m in -np..=np {
            idx.push((n, m));
        }
    }
    idx.sort_by_key(|&(n, m)| (n * n + m * m, n, m));
    let dirs = idx
        .into_iter()
        .map(|(n, m)| {
            let pitch = n as f64 * dtheta;
            let yaw = m as f64 * dpsi;
            TemplateDir {
                pitch,
                yaw,
                u: view_dir(pitch, yaw),
            }
        })
        .collect();
    Ok(DirectionTemplate { dirs, dtheta, dpsi })
}

const WEISZFELD_ITERS: usize = 50;
const WEISZFELD_TOL: f64 = 1e-6;

/// Geometric median by Weiszfeld iteration from the centroid.
pub fn anchor(points: &[Vec3]) -> Result<Vec3> {
    if points.is_empty() {
        return Err(Error::Precondition("anchor of an empty subset"));
    }
    let mut x = points.iter().sum::<Vec3>() / points.len() as f64;
    for _ in 0..WEISZFELD_ITERS {
        let mut num = Vec3::zeros();
        let mut den = 0.0;
        for p in points {
            let mut d = (x - p).norm();
            if d < 1e-12 {
                x += Vec3::repeat(1e-9);
                d = (x - p).norm();
            }
            num += p / d;
            den += 1.0 / d;
        }
        let next = num / den;
        let step = (next - x).norm();
        x = next;
        if step < WEISZFELD_TOL {
            break;
        }
    }
    Ok(x)
}

/// Frame whose first column is the direction from the anchor back toward `v`.
fn template_rotation(v: &CameraConfig) -> [Vec3; 3] {
    let back = -v.forward();
    let (pitch, yaw) = look_angles(&back);
    let frame = CameraConfig { p: Vec3::zeros(), pitch, yaw }.frame();
    [frame.0, frame.1, frame.2]
}

/// Candidates on the sphere of radius `r_max` around `m`, each looking at `m`.
pub fn instantiate_candidates(v: &CameraConfig, m: &Vec3, tpl: &DirectionTemplate, params: &FrustumParams) -> Vec<CameraConfig> {
    let r = template_rotation(v);
    tpl.dirs
        .iter()
        .map(|t| {
            let dir = r[0] * t.u.x + r[1] * t.u.y + r[2] * t.u.z;
            CameraConfig::looking_at(m + dir * params.r_max, m)
        })
        .collect()
}

/// Smallest forward shift that pushes every obstacle sample at least `d_min`
/// outside some plane. `None` when an obstacle has no receding plane.
pub fn s_lower_bound(hs: &HalfSpaceSet, d: &Vec3, o_in: &[Vec3], d_min: f64) -> Option<f64> {
    let mut s_lb = 0.0f64;
    for o in o_in {
        let mut best = f64::INFINITY;
        for pl in &hs.planes {
            let nd = pl.n.dot(d);
            if nd < 0.0 {
                best = best.min((d_min - pl.eval(o)) / -nd);
            }
        }
        if !best.is_finite() {
            return None;
        }
        s_lb = s_lb.max(best);
    }
    Some(s_lb)
}

/// Shift range over which an element stays inside the shifted frustum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInterval {
    pub id: usize,
    pub lo: f64,
    pub hi: f64,
}

impl BoundInterval {
    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }
}

pub fn element_interval(id: usize, e: &Vec3, hs: &HalfSpaceSet, d: &Vec3) -> BoundInterval {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for pl in &hs.planes {
        let a = pl.eval(e);
        let b = pl.n.dot(d);
        if b.abs() < 1e-12 {
            if a > 0.0 {
                return BoundInterval { id, lo: f64::INFINITY, hi: f64::NEG_INFINITY };
            }
        } else if b > 0.0 {
            lo = lo.max(a / b);
        } else {
            hi = hi.min(a / b);
        }
    }
    BoundInterval { id, lo, hi }
}

/// Endpoint sweep for the smallest `s >= s_lb` of maximal interval overlap.
pub fn optimal_shift(intervals: &[BoundInterval], s_lb: f64) -> (f64, usize) {
    let mut events: Vec<(f64, u8)> = Vec::with_capacity(intervals.len() * 2);
    for iv in intervals {
        let lo = iv.lo.max(s_lb);
        if lo > iv.hi {
            continue;
        }
        events.push((lo, 0));
        events.push((iv.hi, 1));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (mut cur, mut best, mut at) = (0usize, 0usize, s_lb);
    for (x, kind) in events {
        if kind == 0 {
            cur += 1;
            if cur > best {
                best = cur;
                at = x;
            }
        } else {
            cur -= 1;
        }
    }
    (at, best)
}

/// Obstacle samples near the frustum boundary: within `r_max`, in front, and
/// at most 30 degrees beyond either half-angle.
pub fn neighbor_obstacles(q: &CameraConfig, grid: &VoxelGrid, params: &FrustumParams) -> Vec<Vec3> {
    let slack = 30f64.to_radians();
    grid.local_voxels(q, params.r_max, usize::MAX)
        .into_iter()
        .filter(|o| {
            if q.to_camera(o).x <= 0.0 {
                return false;
            }
            match bearings(q, o) {
                Ok((bh, bv)) => bh.abs() <= params.alpha_h / 2.0 + slack && bv.abs() <= params.alpha_v / 2.0 + slack,
                Err(_) => false,
            }
        })
        .collect()
}

/// Attitude perturbation bounds before the closest obstacle bearing reaches a side plane.
pub fn angular_margins(q: &CameraConfig, o_nb: &[Vec3], params: &FrustumParams, eta_max: f64) -> (f64, f64) {
    let mut eh = eta_max;
    let mut ev = eta_max;
    for o in o_nb {
        if let Ok((bh, bv)) = bearings(q, o) {
            eh = eh.min(bh.abs() - params.alpha_h / 2.0);
            ev = ev.min(bv.abs() - params.alpha_v / 2.0);
        }
    }
    (eh.clamp(0.0, eta_max), ev.clamp(0.0, eta_max))
}

/// Clean-frustum coverage score: `None` when an obstacle sample lies in the frustum.
fn clean_count(q: &CameraConfig, pts: &[Vec3], grid: &VoxelGrid, params: &FrustumParams, budget: &mut Budget) -> Option<usize> {
    budget.work.occ_evals += 1;
    let hs = make_frustum(q, params);
    if grid.any_in_frustum(&hs, LabelFilter::Obstacle) {
        return None;
    }
    Some(pts.iter().filter(|e| hs.contains(e)).count())
}

fn better(a: Option<usize>, b: Option<usize>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => x > y,
        (Some(_), None) => true,
        _ => false,
    }
}

/// Coordinate-wise bisection, yaw then pitch, inside `[psi +- eta_h] x [theta +- eta_v]`.
/// Only strictly better clean attitudes replace the incumbent.
pub fn refine_attitude(
    q: &CameraConfig,
    eta: (f64, f64),
    s_vis: &[Vec3],
    grid: &VoxelGrid,
    params: &FrustumParams,
    n_bis: usize,
    budget: &mut Budget,
) -> Attitude {
    let mut best_att = q.attitude();
    let mut best = clean_count(q, s_vis, grid, params, budget);
    if s_vis.is_empty() {
        return best_att;
    }
    let centroid = s_vis.iter().sum::<Vec3>() / s_vis.len() as f64;
    let (tp, ty) = look_angles(&(centroid - q.p));
    for axis in 0..2 {
        let eta_axis = if axis == 0 { eta.0 } else { eta.1 };
        if eta_axis <= 0.0 {
            continue;
        }
        let base = best_att;
        let center = if axis == 0 { base.yaw } else { base.pitch };
        let want = if axis == 0 { center + crate::geom::angle_diff(center, ty) } else { tp };
        let mut lo = center - eta_axis;
        let mut hi = center + eta_axis;
        let desired = want.clamp(lo, hi);
        let at = |v: f64| {
            if axis == 0 {
                Attitude::new(base.pitch, v)
            } else {
                Attitude::new(v, base.yaw)
            }
        };
        let try_att = |v: f64, best: &mut Option<usize>, best_att: &mut Attitude, budget: &mut Budget| {
            let att = at(v);
            let c = q.with_attitude(att);
            let f = clean_count(&c, s_vis, grid, params, budget);
            if better(f, *best) {
                *best = f;
                *best_att = c.attitude();
            }
            f
        };
        try_att(desired, &mut best, &mut best_att, budget);
        for _ in 0..n_bis {
            let mid = 0.5 * (lo + hi);
            let fa = try_att(0.5 * (lo + mid), &mut best, &mut best_att, budget);
            let fb = try_att(0.5 * (mid + hi), &mut best, &mut best_att, budget);
            if better(fa, fb) {
                hi = mid;
            } else if better(fb, fa) {
                lo = mid;
            } else if desired < mid {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    best_att
}

/// A repaired-viewpoint proposal.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub config: CameraConfig,
    /// Node index of the invalid viewpoint this candidate replaces.
    pub source: usize,
    pub s_lb: f64,
    pub s_star: f64,
    /// Elements of the source's intended subset visible from `config`.
    pub cov: CoverageSet,
}

/// Read-only inputs shared by all repairs in one window.
pub struct RepairContext<'a> {
    pub surface: &'a SurfaceModel,
    pub grid: &'a VoxelGrid,
    pub camera: &'a FrustumParams,
    pub params: &'a PlannerParams,
    pub template: &'a DirectionTemplate,
}

/// Candidate pool for one invalid viewpoint. Stops early when `budget` expires.
pub fn repair_viewpoint(source: usize, node: &PathNode, ctx: &RepairContext, budget: &mut Budget) -> Result<Vec<Candidate>> {
    let intended = node
        .intended
        .as_ref()
        .ok_or(Error::Precondition("viewpoint without intended subset"))?;
    let s_i = &intended.elements;
    let pts: Vec<Vec3> = s_i.iter().map(|&id| ctx.surface.elements[id].p).collect();
    let m = anchor(&pts)?;
    let d_min = ctx.params.d_min;
    let eta_max = ctx.params.eta_max_deg.to_radians();
    let mut pool = Vec::new();
    for c0 in instantiate_candidates(&node.config, &m, ctx.template, ctx.camera) {
        if budget.expired() {
            break;
        }
        let hs0 = make_frustum(&c0, ctx.camera);
        let d = c0.forward();
        budget.work.occ_evals += 1;
        let o_in = ctx.grid.voxels_in_frustum(&hs0, LabelFilter::Obstacle);
        let Some(s_lb) = s_lower_bound(&hs0, &d, &o_in, d_min) else {
            continue;
        };
        budget.work.raycasts += s_i.len() as u64;
        let s_vis = visible_subset(&c0, s_i, ctx.surface, ctx.grid);
        let intervals: Vec<BoundInterval> = s_vis
            .iter()
            .map(|&id| element_interval(id, &ctx.surface.elements[id].p, &hs0, &d))
            .collect();
        let (s_star, count) = optimal_shift(&intervals, s_lb);
        if count == 0 {
            continue;
        }
        let c1 = CameraConfig { p: c0.p + d * s_star, ..c0 };
        budget.work.clearance_checks += 1;
        if !ctx.grid.bounds().contains(&c1.p) || !ctx.grid.is_clear(&c1.p, d_min) {
            continue;
        }
        let vis_pts: Vec<Vec3> = s_vis.iter().map(|&id| ctx.surface.elements[id].p).collect();
        let o_nb = neighbor_obstacles(&c1, ctx.grid, ctx.camera);
        let eta = angular_margins(&c1, &o_nb, ctx.camera, eta_max);
        let att = refine_attitude(&c1, eta, &vis_pts, ctx.grid, ctx.camera, ctx.params.n_bis, budget);
        let c2 = c1.with_attitude(att);
        let hs2 = make_frustum(&c2, ctx.camera);
        budget.work.occ_evals += 1;
        if ctx.grid.any_in_frustum(&hs2, LabelFilter::Obstacle) {
            continue;
        }
        budget.work.raycasts += s_vis.len() as u64;
        let cov = CoverageSet::from_ids(
            ctx.surface.len(),
            s_vis
                .iter()
                .copied()
                .filter(|&id| crate::vis::element_visible_in(&c2, &hs2, &ctx.surface.elements[id], ctx.grid)),
        );
        if cov.count() == 0 {
            continue;
        }
        pool.push(Candidate {
            config: c2,
            source,
            s_lb,
            s_star,
            cov,
        });
    }
    Ok(pool)
}

/// Candidate pool together with the viewpoint it replaces.
#[derive(Clone, Debug)]
pub struct Pool {
    pub source: usize,
    pub origin: Vec3,
    pub intended: Vec<usize>,
    pub candidates: Vec<Candidate>,
}

pub fn replacement_score(c: &Candidate, pool: &Pool, lambda_d: f64) -> f64 {
    let hit = pool.intended.iter().filter(|&&id| c.cov.contains(id)).count();
    let ratio = if pool.intended.is_empty() { 0.0 } else { hit as f64 / pool.intended.len() as f64 };
    ratio - lambda_d * (c.config.p - pool.origin).norm()
}

fn lex(a: &Vec3, b: &Vec3) -> Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.z.total_cmp(&b.z))
}

/// One replacement per pool (index into its candidates), `None` for empty pools.
pub fn select_replacements(pools: &[Pool], lambda_d: f64) -> Vec<Option<usize>> {
    pools
        .iter()
        .map(|pool| {
            let mut best: Option<(usize, f64, f64)> = None;
            for (i, c) in pool.candidates.iter().enumerate() {
                let s = replacement_score(c, pool, lambda_d);
                let disp = (c.config.p - pool.origin).norm();
                let wins = match best {
                    None => true,
                    Some((bi, bs, bd)) => s
                        .total_cmp(&bs)
                        .then(bd.total_cmp(&disp))
                        .then(lex(&pool.candidates[bi].config.p, &c.config.p))
                        .is_gt(),
                };
                if wins {
                    best = Some((i, s, disp));
                }
            }
            best.map(|b| b.0)
        })
        .collect()
}

/// Result of greedy set completion.
#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    /// Indices into the candidate list, in pick order.
    pub added: Vec<usize>,
    pub residual: CoverageSet,
}

fn nearest(p: &Vec3, set: &[Vec3]) -> f64 {
    set.iter().map(|q| (q - p).norm()).fold(f64::INFINITY, f64::min)
}

/// Score of adding candidate `p` with coverage `cov` given the uncovered set.
pub fn completion_score(cov: &CoverageSet, p: &Vec3, uncovered: &CoverageSet, v_cur: &[Vec3], lambda_d: f64) -> (usize, f64) {
    let gain = uncovered.ones().filter(|&id| cov.contains(id)).count();
    let dnn = if v_cur.is_empty() { 0.0 } else { nearest(p, v_cur) };
    let u = uncovered.count().max(1) as f64;
    (gain, gain as f64 / u - lambda_d * dnn)
}

/// Greedily adds candidates until `uncovered` is empty or nothing new can be seen.
pub fn complete_coverage(
    candidates: &[CameraConfig],
    covers: &[CoverageSet],
    v_cur: &[Vec3],
    uncovered: &CoverageSet,
    lambda_d: f64,
) -> Completion {
    let mut u = uncovered.clone();
    let mut cur: Vec<Vec3> = v_cur.to_vec();
    let mut used = vec![false; candidates.len()];
    let mut added = Vec::new();
    while u.count() > 0 {
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, c) in candidates.iter().enumerate() {
            if used[i] {
                continue;
            }
            let (gain, score) = completion_score(&covers[i], &c.p, &u, &cur, lambda_d);
            if gain == 0 {
                continue;
            }
            let dnn = if cur.is_empty() { 0.0 } else { nearest(&c.p, &cur) };
            let wins = match best {
                None => true,
                Some((bi, bs, bd)) => score
                    .total_cmp(&bs)
                    .then(bd.total_cmp(&dnn))
                    .then(lex(&candidates[bi].p, &c.p))
                    .is_gt(),
            };
            if wins {
                best = Some((i, score, dnn));
            }
        }
        let Some((i, _, _)) = best else { break };
        used[i] = true;
        added.push(i);
        cur.push(candidates[i].p);
        let remaining: Vec<usize> = u.ones().filter(|&id| !covers[i].contains(id)).collect();
        u = CoverageSet::from_ids(u.universe(), remaining);
    }
    Completion { added, residual: u }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ClockMode;
    use crate::geom::{shift_offsets, Plane};
    use crate::vis::{intended_subset, occ};
    use crate::world::{Aabb, CellState};
    use approx::assert_abs_diff_eq;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn deg(x: f64) -> f64 {
        x.to_radians()
    }

    fn fp() -> FrustumParams {
        FrustumParams::from_degrees(80.0, 65.0, 7.0).unwrap()
    }

    fn unlimited() -> Budget {
        Budget::unlimited(ClockMode::Virtual)
    }

    /// Wall target 2 m x 1.5 m at x = 6, facing -x.
    fn wall_scene() -> (VoxelGrid, SurfaceModel) {
        let mut g = VoxelGrid::new(Aabb::new(Vec3::new(-2.0, -6.0, -1.0), Vec3::new(8.0, 6.0, 5.0)), 0.1).unwrap();
        for y in -10..10 {
            for z in 0..15 {
                let i = g.index_of(&Vec3::new(6.05, y as f64 * 0.1 + 0.05, z as f64 * 0.1 + 0.05)).unwrap();
                g.set(i, CellState::Target).unwrap();
            }
        }
        let s = SurfaceModel::from_grid(&g);
        (g, s)
    }

    fn put_box(g: &mut VoxelGrid, lo: Vec3, hi: Vec3) {
        let r = g.resolution();
        let mut x = lo.x + r / 2.0;
        while x < hi.x {
            let mut y = lo.y + r / 2.0;
            while y < hi.y {
                let mut z = lo.z + r / 2.0;
                while z < hi.z {
                    if let Some(i) = g.index_of(&Vec3::new(x, y, z)) {
                        if g.state(i) == CellState::Unknown || g.state(i) == CellState::Free {
                            g.set(i, CellState::Obstacle).unwrap();
                        }
                    }
                    z += r;
                }
                y += r;
            }
            x += r;
        }
    }

    fn viewpoint(g: &VoxelGrid, s: &SurfaceModel) -> PathNode {
        let c = CameraConfig::new(Vec3::new(1.55, 0.05, 0.75), 0.0, 0.0);
        PathNode::viewpoint(c, intended_subset(&c, s, g, &fp()))
    }

    #[test]
    fn template_counts() {
        let p = FrustumParams::from_degrees(90.0, 90.0, 5.0).unwrap();
        let t = build_template(&p, deg(45.0), deg(45.0)).unwrap();
        assert_eq!(t.dirs.len(), 9);
        assert_eq!(t.dirs[0].pitch, 0.0);
        assert_eq!(t.dirs[0].yaw, 0.0);
        let t = build_template(&p, deg(90.0), deg(45.0)).unwrap();
        assert!(t.dirs.iter().all(|d| d.pitch == 0.0));
        assert_eq!(t.dirs.len(), 3);
        let t = build_template(&fp(), deg(15.0), deg(15.0)).unwrap();
        assert_eq!(t.dirs.len(), 9 * 11);
        for d in &t.dirs {
            assert_abs_diff_eq!(d.u.norm(), 1.0, epsilon = 1e-12);
            assert!(d.pitch.abs() < fp().alpha_v && d.yaw.abs() < fp().alpha_h);
        }
        assert!(build_template(&fp(), 0.0, deg(15.0)).is_err());
    }

    #[test]
    fn anchor_cases() {
        let one = [Vec3::new(1.0, 2.0, 3.0)];
        assert_abs_diff_eq!((anchor(&one).unwrap() - one[0]).norm(), 0.0, epsilon = 1e-6);
        let sq = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(0.0, 2.0, 0.0),
            Vec3::new(2.0, 2.0, 0.0),
        ];
        assert_abs_diff_eq!((anchor(&sq).unwrap() - Vec3::new(1.0, 1.0, 0.0)).norm(), 0.0, epsilon = 1e-6);
        assert!(anchor(&[]).is_err());
    }

    #[test]
    fn anchor_matches_grid_search() {
        let tri = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let sum = |x: &Vec3| tri.iter().map(|p| (x - p).norm()).sum::<f64>();
        let mut best = f64::INFINITY;
        for i in 0..=1000 {
            for j in 0..=1000 {
                best = best.min(sum(&Vec3::new(i as f64 * 1e-3, j as f64 * 1e-3, 0.0)));
            }
        }
        let m = anchor(&tri).unwrap();
        assert!((sum(&m) - best).abs() <= 1e-4, "{} vs {}", sum(&m), best);
    }

    #[test]
    fn candidates_on_sphere_facing_anchor() {
        let tpl = build_template(&fp(), deg(15.0), deg(15.0)).unwrap();
        let m = Vec3::new(1.0, -2.0, 3.0);
        let v = CameraConfig::new(Vec3::new(5.0, -2.0, 3.0), 0.0, deg(180.0));
        let cs = instantiate_candidates(&v, &m, &tpl, &fp());
        assert_eq!(cs.len(), tpl.dirs.len());
        // looking along -x: the axis sample sits at m + r x and looks back along -x
        assert_abs_diff_eq!((cs[0].p - (m + Vec3::new(7.0, 0.0, 0.0))).norm(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!((cs[0].forward() - Vec3::new(-1.0, 0.0, 0.0)).norm(), 0.0, epsilon = 1e-9);
        for c in &cs {
            assert_abs_diff_eq!((c.p - m).norm(), 7.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn candidate_rotation_matches_euler_oracle() {
        let tpl = build_template(&fp(), deg(15.0), deg(15.0)).unwrap();
        let m = Vec3::zeros();
        for (vp, vy) in [(0.0, 90.0), (-30.0, 45.0), (20.0, -120.0), (-80.0, 10.0)] {
            let v = CameraConfig::new(Vec3::new(0.0, -3.0, 0.0), deg(vp), deg(vy));
            let cs = instantiate_candidates(&v, &m, &tpl, &fp());
            let (bp, by) = look_angles(&(-v.forward()));
            let rot = Rotation3::from_euler_angles(0.0, -bp, by);
            for (c, t) in cs.iter().zip(&tpl.dirs) {
                let want = rot * t.u * 7.0;
                assert_abs_diff_eq!((c.p - want).norm(), 0.0, epsilon = 1e-9);
            }
        }
        // viewpoint looking along +y: the axis sample lies on the camera side, -y
        let v = CameraConfig::new(Vec3::new(0.0, -3.0, 0.0), 0.0, deg(90.0));
        let cs = instantiate_candidates(&v, &m, &tpl, &fp());
        assert_abs_diff_eq!((cs[0].p - Vec3::new(0.0, -7.0, 0.0)).norm(), 0.0, epsilon = 1e-9);
    }

    fn expelled(hs: &HalfSpaceSet, d: &Vec3, s: f64, o: &Vec3, d_min: f64) -> bool {
        shift_offsets(hs, d, s).max_slack(o) >= d_min
    }

    #[test]
    fn s_lb_empty_is_zero() {
        let c = CameraConfig::new(Vec3::zeros(), 0.0, 0.0);
        let hs = make_frustum(&c, &fp());
        assert_eq!(s_lower_bound(&hs, &c.forward(), &[], 0.2), Some(0.0));
    }

    #[test]
    fn s_lb_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 200 {
            let c = CameraConfig::new(
                Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                rng.gen_range(-1.2..0.5),
                rng.gen_range(-3.0..3.0),
            );
            let hs = make_frustum(&c, &fp());
            let o = c.p + view_dir(c.pitch + rng.gen_range(-0.5..0.5), c.yaw + rng.gen_range(-0.6..0.6)) * rng.gen_range(0.3..6.5);
            if !hs.contains(&o) {
                continue;
            }
            let d = c.forward();
            let s_lb = s_lower_bound(&hs, &d, &[o], 0.2).unwrap();
            let mut s = 0.0;
            while !expelled(&hs, &d, s, &o, 0.2) {
                s += 1e-3;
            }
            assert!((s - s_lb).abs() <= 1e-3 + 1e-9, "scan {s} vs {s_lb}");
            assert!(expelled(&hs, &d, s_lb + 1e-9, &o, 0.2));
            if s_lb > 1e-3 {
                assert!(!expelled(&hs, &d, s_lb - 1e-3, &o, 0.2));
            }
            checked += 1;
        }
    }

    #[test]
    fn s_lb_infeasible_without_receding_plane() {
        // every plane normal has a non-negative component along d
        let d = Vec3::new(1.0, 0.0, 0.0);
        let mk = |n: Vec3| Plane { n: n.normalize(), h: -1.0 };
        let planes = [
            mk(Vec3::new(1.0, 1.0, 0.0)),
            mk(Vec3::new(1.0, -1.0, 0.0)),
            mk(Vec3::new(1.0, 0.0, 1.0)),
            mk(Vec3::new(1.0, 0.0, -1.0)),
            mk(Vec3::new(1.0, 0.0, 0.0)),
        ];
        let hs = HalfSpaceSet::from_planes(planes, Vec3::new(-100.0, 0.0, 0.0), d);
        let o = Vec3::zeros();
        assert!(hs.contains(&o));
        assert!(planes.iter().all(|p| p.n.dot(&d) >= 0.0));
        assert_eq!(s_lower_bound(&hs, &d, &[o], 0.2), None);
    }

    fn scan_interval(e: &Vec3, hs: &HalfSpaceSet, d: &Vec3, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let n = ((hi - lo) / 1e-3) as usize;
        let mut first = None;
        let mut last = None;
        for k in 0..=n {
            let s = lo + k as f64 * 1e-3;
            if shift_offsets(hs, d, s).planes.iter().all(|p| p.eval(e) <= 0.0) {
                first.get_or_insert(s);
                last = Some(s);
            }
        }
        first.zip(last)
    }

    #[test]
    fn element_interval_matches_scan() {
        let c = CameraConfig::new(Vec3::zeros(), 0.0, 0.0);
        let hs = make_frustum(&c, &fp());
        let d = c.forward();
        let e = Vec3::new(3.5, 0.0, 0.0);
        let iv = element_interval(0, &e, &hs, &d);
        assert!(iv.lo < 0.0 && iv.hi > 0.0);
        assert_abs_diff_eq!(iv.hi, 3.5, epsilon = 1e-12);
        let e2 = Vec3::new(3.0, 1.5, 0.4);
        let iv2 = element_interval(1, &e2, &hs, &d);
        let (a, b) = scan_interval(&e2, &hs, &d, -6.0, 6.0).unwrap();
        assert!((a - iv2.lo).abs() <= 1e-3 && (b - iv2.hi).abs() <= 1e-3);
        // far to the left: the cone never widens enough before the far plane passes
        let e3 = Vec3::new(1.0, 7.0, 0.0);
        assert!(element_interval(2, &e3, &hs, &d).is_empty());
        assert!(scan_interval(&e3, &hs, &d, -20.0, 20.0).is_none());
        let iv4 = element_interval(3, &Vec3::new(0.5, 3.0, 0.0), &hs, &Vec3::new(0.0, 0.0, 1.0));
        assert!(iv4.is_empty());
        assert!(scan_interval(&Vec3::new(0.5, 3.0, 0.0), &hs, &Vec3::new(0.0, 0.0, 1.0), -6.0, 6.0).is_none());
    }

    #[test]
    fn element_interval_degenerate_plane() {
        let hs = HalfSpaceSet::from_planes(
            [
                Plane { n: Vec3::new(0.0, 1.0, 0.0), h: -1.0 },
                Plane { n: Vec3::new(0.0, -1.0, 0.0), h: -1.0 },
                Plane { n: Vec3::new(0.0, 0.0, 1.0), h: -1.0 },
                Plane { n: Vec3::new(0.0, 0.0, -1.0), h: -1.0 },
                Plane { n: Vec3::new(1.0, 0.0, 0.0), h: -1.0 },
            ],
            Vec3::new(-100.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
        );
        let d = Vec3::new(1.0, 0.0, 0.0);
        let inside = element_interval(0, &Vec3::new(0.0, 0.0, 0.0), &hs, &d);
        assert_eq!(inside.lo, -1.0);
        assert_eq!(inside.hi, f64::INFINITY);
        assert!(element_interval(1, &Vec3::new(0.0, 2.0, 0.0), &hs, &d).is_empty());
    }

    fn iv(lo: f64, hi: f64) -> BoundInterval {
        BoundInterval { id: 0, lo, hi }
    }

    #[test]
    fn optimal_shift_examples() {
        assert_eq!(optimal_shift(&[iv(0.0, 2.0), iv(1.0, 3.0), iv(2.5, 4.0)], 0.0), (1.0, 2));
        assert_eq!(optimal_shift(&[iv(5.0, 6.0)], 0.0), (5.0, 1));
        assert_eq!(optimal_shift(&[iv(0.0, 2.0), iv(5.0, 6.0)], 10.0), (10.0, 0));
        assert_eq!(optimal_shift(&[], 0.5), (0.5, 0));
        assert_eq!(optimal_shift(&[iv(0.0, 1.0), iv(1.0, 2.0)], 0.0), (1.0, 2));
    }

    /// Evaluates the overlap at every endpoint and at `s_lb`.
    fn shift_brute(ivs: &[BoundInterval], s_lb: f64) -> (f64, usize) {
        let mut pts = vec![s_lb];
        for i in ivs {
            pts.push(i.lo);
            pts.push(i.hi);
        }
        pts.retain(|&p| p >= s_lb && p.is_finite());
        pts.sort_by(f64::total_cmp);
        let mut best = (s_lb, 0);
        for p in pts {
            let c = ivs.iter().filter(|i| i.lo <= p && p <= i.hi).count();
            if c > best.1 {
                best = (p, c);
            }
        }
        best
    }

    #[test]
    fn optimal_shift_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let n = rng.gen_range(0..12);
            let ivs: Vec<BoundInterval> = (0..n)
                .map(|_| {
                    let a = (rng.gen_range(-5.0..5.0f64) * 4.0).round() / 4.0;
                    let w = (rng.gen_range(-1.0..4.0f64) * 4.0).round() / 4.0;
                    iv(a, a + w)
                })
                .collect();
            let s_lb = (rng.gen_range(-2.0..3.0f64) * 4.0).round() / 4.0;
            assert_eq!(optimal_shift(&ivs, s_lb), shift_brute(&ivs, s_lb), "{ivs:?} {s_lb}");
        }
    }

    #[test]
    fn margins_cases() {
        let q = CameraConfig::new(Vec3::zeros(), 0.0, 0.0);
        let p = FrustumParams::from_degrees(80.0, 65.0, 7.0).unwrap();
        let o = Vec3::new(deg(50.0).cos(), deg(50.0).sin(), 0.0) * 2.0;
        let (eh, ev) = angular_margins(&q, &[o], &p, deg(30.0));
        assert_abs_diff_eq!(eh, deg(10.0), epsilon = 1e-12);
        assert_eq!(ev, 0.0);
        let inside = Vec3::new(2.0, 0.5, 0.0);
        assert_eq!(angular_margins(&q, &[inside], &p, deg(30.0)).0, 0.0);
        assert_eq!(angular_margins(&q, &[], &p, deg(30.0)), (deg(30.0), deg(30.0)));
    }

    fn count_in(q: &CameraConfig, pts: &[Vec3], p: &FrustumParams) -> usize {
        let hs = make_frustum(q, p);
        pts.iter().filter(|e| hs.contains(e)).count()
    }

    #[test]
    fn refine_centered_and_zero_bounds() {
        let (g, s) = wall_scene();
        let q = CameraConfig::new(Vec3::new(1.55, 0.05, 0.75), 0.0, 0.0);
        let pts: Vec<Vec3> = s.elements.iter().map(|e| e.p).collect();
        let mut b = unlimited();
        assert_eq!(refine_attitude(&q, (deg(10.0), deg(10.0)), &pts, &g, &fp(), 10, &mut b), q.attitude());
        let off = q.with_attitude(Attitude::new(0.0, deg(20.0)));
        assert_eq!(refine_attitude(&off, (0.0, 0.0), &pts, &g, &fp(), 10, &mut b), off.attitude());
    }

    #[test]
    fn refine_yaw_matches_dense_search() {
        // a wide wall close by: only part of it fits in the FoV
        let mut g = VoxelGrid::new(Aabb::new(Vec3::new(-1.0, -6.0, -1.0), Vec3::new(4.0, 6.0, 3.0)), 0.1).unwrap();
        for y in -40..40 {
            for z in 7..8 {
                let i = g.index_of(&Vec3::new(2.05, y as f64 * 0.1 + 0.05, z as f64 * 0.1 + 0.05)).unwrap();
                g.set(i, CellState::Target).unwrap();
            }
        }
        let s = SurfaceModel::from_grid(&g);
        let pts: Vec<Vec3> = s.elements.iter().filter(|e| e.p.y > -2.0 && e.p.y < 1.2).map(|e| e.p).collect();
        let q = CameraConfig::new(Vec3::new(0.0, 0.0, 0.75), 0.0, deg(5.0));
        let mut b = unlimited();
        let att = refine_attitude(&q, (deg(10.0), 0.0), &pts, &g, &fp(), 10, &mut b);
        let got = count_in(&q.with_attitude(att), &pts, &fp());
        assert!(got >= count_in(&q, &pts, &fp()));
        assert!(att.yaw < deg(5.0));
        let mut best = 0;
        let mut k = -20;
        while k <= 20 {
            let c = q.with_attitude(Attitude::new(0.0, deg(5.0 + 0.5 * k as f64)));
            best = best.max(count_in(&c, &pts, &fp()));
            k += 1;
        }
        assert!(got + 1 >= best, "{got} vs {best}");
        assert!(!occ(&q.with_attitude(att), &g, &fp()));
    }

    fn ctx_parts() -> (PlannerParams, DirectionTemplate) {
        let params = PlannerParams::default();
        let tpl = build_template(&fp(), deg(15.0), deg(15.0)).unwrap();
        (params, tpl)
    }

    fn check_candidate(c: &Candidate, g: &VoxelGrid, d_min: f64) {
        assert!(!occ(&c.config, g, &fp()));
        assert!(g.min_clearance(&c.config.p) >= d_min);
        assert!(c.s_star >= c.s_lb && c.s_lb >= 0.0);
        assert!(c.cov.count() > 0);
    }

    #[test]
    fn repair_without_obstacles_covers_everything() {
        let (g, s) = wall_scene();
        let node = viewpoint(&g, &s);
        let (params, tpl) = ctx_parts();
        let ctx = RepairContext { surface: &s, grid: &g, camera: &fp(), params: &params, template: &tpl };
        let pool = repair_viewpoint(0, &node, &ctx, &mut unlimited()).unwrap();
        let n = node.intended.as_ref().unwrap().elements.len();
        assert!(pool.iter().any(|c| c.cov.count() == n));
        for c in &pool {
            check_candidate(c, &g, params.d_min);
        }
    }

    #[test]
    fn repair_around_occluder() {
        let (mut g, s) = wall_scene();
        let node = viewpoint(&g, &s);
        put_box(&mut g, Vec3::new(3.5, -0.5, 0.2), Vec3::new(3.8, 0.5, 1.3));
        assert!(occ(&node.config, &g, &fp()));
        let (params, tpl) = ctx_parts();
        let ctx = RepairContext { surface: &s, grid: &g, camera: &fp(), params: &params, template: &tpl };
        let pool = repair_viewpoint(0, &node, &ctx, &mut unlimited()).unwrap();
        assert!(!pool.is_empty());
        for c in &pool {
            check_candidate(c, &g, params.d_min);
            for id in c.cov.ones() {
                assert!(crate::vis::element_visible(&c.config, &s.elements[id], &g, &fp()));
            }
        }
    }

    #[test]
    fn repair_enclosed_target_is_empty() {
        let (mut g, s) = wall_scene();
        let node = viewpoint(&g, &s);
        put_box(&mut g, Vec3::new(5.5, -1.5, -0.5), Vec3::new(6.0, 1.5, 2.0));
        put_box(&mut g, Vec3::new(6.1, -1.5, -0.5), Vec3::new(6.6, 1.5, 2.0));
        put_box(&mut g, Vec3::new(6.0, -1.5, -0.5), Vec3::new(6.1, -1.0, 2.0));
        put_box(&mut g, Vec3::new(6.0, 1.0, -0.5), Vec3::new(6.1, 1.5, 2.0));
        put_box(&mut g, Vec3::new(6.0, -1.0, -0.5), Vec3::new(6.1, 1.0, 0.0));
        put_box(&mut g, Vec3::new(6.0, -1.0, 1.5), Vec3::new(6.1, 1.0, 2.0));
        let (params, tpl) = ctx_parts();
        let ctx = RepairContext { surface: &s, grid: &g, camera: &fp(), params: &params, template: &tpl };
        assert!(repair_viewpoint(0, &node, &ctx, &mut unlimited()).unwrap().is_empty());
    }

    fn cand(p: Vec3, ids: &[usize], n: usize) -> Candidate {
        Candidate {
            config: CameraConfig::new(p, 0.0, 0.0),
            source: 0,
            s_lb: 0.0,
            s_star: 0.0,
            cov: CoverageSet::from_ids(n, ids.iter().copied()),
        }
    }

    #[test]
    fn selection_examples() {
        let pool = Pool {
            source: 0,
            origin: Vec3::zeros(),
            intended: vec![0, 1],
            candidates: vec![cand(Vec3::new(2.0, 0.0, 0.0), &[0, 1], 2), cand(Vec3::new(1.0, 0.0, 0.0), &[0, 1], 2)],
        };
        assert_eq!(select_replacements(&[pool], 5.0), vec![Some(1)]);
        let pool = Pool {
            source: 0,
            origin: Vec3::zeros(),
            intended: vec![0, 1],
            candidates: vec![cand(Vec3::new(2.0, 0.0, 0.0), &[0, 1], 2), cand(Vec3::new(0.1, 0.0, 0.0), &[0], 2)],
        };
        assert_abs_diff_eq!(replacement_score(&pool.candidates[0], &pool, 5.0), -9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(replacement_score(&pool.candidates[1], &pool, 5.0), 0.0, epsilon = 1e-12);
        let empty = Pool { candidates: vec![], ..pool.clone() };
        assert_eq!(select_replacements(&[pool, empty], 5.0), vec![Some(1), None]);
    }

    #[test]
    fn selection_matches_exhaustive_scoring() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let n = 6;
            let k = rng.gen_range(1..8);
            let cands: Vec<Candidate> = (0..k)
                .map(|_| {
                    let p = Vec3::new(rng.gen_range(-2..3) as f64, rng.gen_range(-2..3) as f64, 0.0) * 0.5;
                    let ids: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
                    cand(p, &ids, n)
                })
                .collect();
            let pool = Pool { source: 0, origin: Vec3::zeros(), intended: (0..n).collect(), candidates: cands };
            let pick = select_replacements(std::slice::from_ref(&pool), 0.4)[0].unwrap();
            let best = pool.candidates.iter().map(|c| replacement_score(c, &pool, 0.4)).fold(f64::NEG_INFINITY, f64::max);
            let ps = replacement_score(&pool.candidates[pick], &pool, 0.4);
            assert_eq!(ps, best);
            let dp = pool.candidates[pick].config.p.norm();
            for c in &pool.candidates {
                if replacement_score(c, &pool, 0.4) == best {
                    assert!(c.config.p.norm() >= dp);
                }
            }
        }
    }

    #[test]
    fn completion_examples() {
        let u0 = CoverageSet::new(4);
        let r = complete_coverage(&[CameraConfig::new(Vec3::zeros(), 0.0, 0.0)], &[CoverageSet::from_ids(4, [1])], &[], &u0, 5.0);
        assert!(r.added.is_empty());
        let u = CoverageSet::from_ids(4, [2]);
        let cfgs = [CameraConfig::new(Vec3::zeros(), 0.0, 0.0), CameraConfig::new(Vec3::new(1.0, 0.0, 0.0), 0.0, 0.0)];
        let covers = [CoverageSet::from_ids(4, [0]), CoverageSet::from_ids(4, [2, 3])];
        let r = complete_coverage(&cfgs, &covers, &[Vec3::zeros()], &u, 5.0);
        assert_eq!(r.added, vec![1]);
        assert_eq!(r.residual.count(), 0);
        let u = CoverageSet::from_ids(4, [2, 3]);
        let r = complete_coverage(&cfgs[..1], &covers[..1], &[], &u, 5.0);
        assert!(r.added.is_empty());
        assert_eq!(r.residual.count(), 2);
    }

    #[test]
    fn completion_greedy_picks_are_maximal() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let n = 10;
            let k = rng.gen_range(1..9);
            let cfgs: Vec<CameraConfig> = (0..k)
                .map(|_| CameraConfig::new(Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), 0.0), 0.0, 0.0))
                .collect();
            let covers: Vec<CoverageSet> = (0..k)
                .map(|_| CoverageSet::from_ids(n, (0..n).filter(|_| rng.gen_bool(0.3))))
                .collect();
            let v_cur = vec![Vec3::zeros()];
            let u0 = CoverageSet::from_ids(n, 0..n);
            let r = complete_coverage(&cfgs, &covers, &v_cur, &u0, 0.05);
            // replay: each pick maximizes the score among remaining useful candidates
            let mut u = u0.clone();
            let mut cur = v_cur.clone();
            let mut used = vec![false; k];
            for &pick in &r.added {
                let mut best = f64::NEG_INFINITY;
                for i in 0..k {
                    if used[i] {
                        continue;
                    }
                    let (gain, score) = completion_score(&covers[i], &cfgs[i].p, &u, &cur, 0.05);
                    if gain > 0 {
                        best = best.max(score);
                    }
                }
                let (gain, score) = completion_score(&covers[pick], &cfgs[pick].p, &u, &cur, 0.05);
                assert!(gain > 0);
                assert_eq!(score, best);
                let before = u.count();
                u = CoverageSet::from_ids(n, u.ones().filter(|&id| !covers[pick].contains(id)).collect::<Vec<_>>());
                assert!(u.count() < before);
                used[pick] = true;
                cur.push(cfgs[pick].p);
            }
            assert_eq!(u, r.residual);
            for i in 0..k {
                if !used[i] {
                    assert_eq!(completion_score(&covers[i], &cfgs[i].p, &u, &cur, 0.05).0, 0);
                }
            }
        }
    }
}
