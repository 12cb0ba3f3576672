//! Brute-force cross-checks of the fast algorithms at small sizes.
//!
//! Every suite takes the implementation under test as a function argument so
//! faults can be injected; [`run_suite`] wires in the real ones.

use std::collections::{HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::clock::{Budget, ClockMode};
use crate::error::{Error, Result};
use crate::geom::{make_frustum, shift_offsets, view_dir, CameraConfig, FrustumParams, HalfSpaceSet, Vec3, PITCH_MAX, PITCH_MIN};
use crate::phiastar::{lattice_point, lift, search_region, search_with, snap, SearchMode, SearchParams, VisCache};
use crate::repair::{optimal_shift, s_lower_bound, BoundInterval};
use crate::sim::chamfer;
use crate::tour::{is_feasible, reorder, tour_cost, TourProblem, TourSolution};
use crate::world::{Aabb, CellState, LabelFilter, VoxelGrid};

pub const SUITES: [&str; 5] = ["sweep", "slb", "phiastar", "sop", "chamfer"];

const SCAN_STEP: f64 = 1e-3;
const SOP_GAP: f64 = 0.10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub cases: usize,
    pub failures: usize,
    /// First failing case, shrunk where the input is a list.
    pub counterexample: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn new(suite: &str, cases: usize) -> Self {
        Self {
            suite: suite.into(),
            cases,
            failures: 0,
            counterexample: None,
        }
    }

    fn fail(&mut self, dump: impl FnOnce() -> String) {
        self.failures += 1;
        if self.counterexample.is_none() {
            self.counterexample = Some(dump());
        }
    }
}

pub fn default_cases(suite: &str) -> Option<usize> {
    Some(match suite {
        "sweep" => 1000,
        "slb" => 200,
        "phiastar" => 50,
        "sop" => 100,
        "chamfer" => 100,
        _ => return None,
    })
}

/// Runs one suite against the real implementation with `cases` instances
/// (the suite default when `None`).
pub fn run_suite(suite: &str, cases: Option<usize>, seed: u64) -> Result<SuiteReport> {
    let n = match (cases, default_cases(suite)) {
        (_, None) => return Err(Error::invalid("suite", format!("unknown suite `{suite}` (known: {})", SUITES.join(", ")))),
        (Some(n), _) => n,
        (None, Some(n)) => n,
    };
    Ok(match suite {
        "sweep" => sweep_suite(n, seed, optimal_shift),
        "slb" => slb_suite(n, seed, s_lower_bound),
        "phiastar" => phiastar_suite(n, seed, phiastar_feasible),
        "sop" => sop_suite(n, seed, reorder),
        _ => chamfer_suite(n, seed, |a, b| chamfer(a, b).unwrap_or(f64::NAN)),
    })
}

/// Greedy one-at-a-time removal while the case keeps failing.
fn shrink<T: Clone>(mut items: Vec<T>, fails: impl Fn(&[T]) -> bool) -> Vec<T> {
    let mut i = 0;
    while i < items.len() {
        let mut trial = items.clone();
        trial.remove(i);
        if fails(&trial) {
            items = trial;
        } else {
            i += 1;
        }
    }
    items
}

/// Overlap count at every finite endpoint and at `s_lb`; smallest best point wins.
pub fn shift_by_scan(ivs: &[BoundInterval], s_lb: f64) -> (f64, usize) {
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

pub fn sweep_suite(cases: usize, seed: u64, f: impl Fn(&[BoundInterval], f64) -> (f64, usize)) -> SuiteReport {
    let mut rep = SuiteReport::new("sweep", cases);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // quarter-metre endpoints make ties common
    let q = |x: f64| (x * 4.0).round() / 4.0;
    for _ in 0..cases {
        let n = rng.gen_range(0..12);
        let ivs: Vec<BoundInterval> = (0..n)
            .map(|id| {
                let lo = q(rng.gen_range(-5.0..5.0));
                BoundInterval { id, lo, hi: lo + q(rng.gen_range(-1.0..4.0)) }
            })
            .collect();
        let s_lb = q(rng.gen_range(-2.0..3.0));
        let bad = |v: &[BoundInterval]| f(v, s_lb) != shift_by_scan(v, s_lb);
        if bad(&ivs) {
            rep.fail(|| {
                let min = shrink(ivs.clone(), bad);
                format!("s_lb={s_lb} intervals={:?} got={:?} want={:?}", min, f(&min, s_lb), shift_by_scan(&min, s_lb))
            });
        }
    }
    rep
}

fn expelled(hs: &HalfSpaceSet, d: &Vec3, s: f64, o: &Vec3, d_min: f64) -> bool {
    shift_offsets(hs, d, s).max_slack(o) >= d_min
}

pub fn slb_suite(cases: usize, seed: u64, f: impl Fn(&HalfSpaceSet, &Vec3, &[Vec3], f64) -> Option<f64>) -> SuiteReport {
    let mut rep = SuiteReport::new("slb", cases);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = FrustumParams::from_degrees(80.0, 65.0, 7.0).unwrap();
    let d_min = 0.2;
    let mut done = 0;
    while done < cases {
        let c = CameraConfig::new(
            Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            rng.gen_range(-1.2..0.5),
            rng.gen_range(-3.0..3.0),
        );
        let hs = make_frustum(&c, &cam);
        let o = c.p + view_dir(c.pitch + rng.gen_range(-0.5..0.5), c.yaw + rng.gen_range(-0.6..0.6)) * rng.gen_range(0.3..6.5);
        if !hs.contains(&o) {
            continue;
        }
        done += 1;
        let d = c.forward();
        let mut s = 0.0;
        while !expelled(&hs, &d, s, &o, d_min) && s < 20.0 {
            s += SCAN_STEP;
        }
        let ok = match f(&hs, &d, &[o], d_min) {
            Some(got) => (got - s).abs() <= SCAN_STEP + 1e-9,
            None => false,
        };
        if !ok {
            rep.fail(|| format!("camera={c:?} obstacle={o:?} got={:?} scan={s}", f(&hs, &d, &[o], d_min)));
        }
    }
    rep
}

/// One connector feasibility instance on a grid of at most 20^3 voxels.
#[derive(Clone, Debug)]
pub struct ConnectorCase {
    pub grid: VoxelGrid,
    pub camera: FrustumParams,
    pub params: SearchParams,
    pub a: CameraConfig,
    pub b: CameraConfig,
}

fn fill_box(g: &mut VoxelGrid, lo: Vec3, hi: Vec3) {
    let r = g.resolution();
    let mut x = lo.x + 0.5 * r;
    while x < hi.x {
        let mut y = lo.y + 0.5 * r;
        while y < hi.y {
            let mut z = lo.z + 0.5 * r;
            while z < hi.z {
                if let Some(ix) = g.index_of(&Vec3::new(x, y, z)) {
                    let _ = g.set(ix, CellState::Obstacle);
                }
                z += r;
            }
            y += r;
        }
        x += r;
    }
}

/// Random 2 m cube at 0.1 m with a few boxes and, half the time, a wall
/// between the endpoints with or without a gap.
pub fn connector_case(rng: &mut ChaCha8Rng) -> ConnectorCase {
    let mut grid = VoxelGrid::new(Aabb::new(Vec3::zeros(), Vec3::repeat(2.0)), 0.1).unwrap();
    let r = |rng: &mut ChaCha8Rng, a: f64, b: f64| (rng.gen_range(a..b) * 10.0f64).round() / 10.0;
    if rng.gen_bool(0.5) {
        let x = r(rng, 0.8, 1.1);
        fill_box(&mut grid, Vec3::new(x, 0.0, 0.0), Vec3::new(x + 0.2, 2.0, 2.0));
        if rng.gen_bool(0.7) {
            let (y, z) = (r(rng, 0.2, 1.2), r(rng, 0.2, 1.2));
            let w = r(rng, 0.5, 0.8);
            let hole = |g: &mut VoxelGrid| {
                let res = g.resolution();
                let mut yy = y + 0.5 * res;
                while yy < y + w {
                    let mut zz = z + 0.5 * res;
                    while zz < z + w {
                        for xx in [x + 0.05, x + 0.15] {
                            if let Some(ix) = g.index_of(&Vec3::new(xx, yy, zz)) {
                                let _ = g.set(ix, CellState::Free);
                            }
                        }
                        zz += res;
                    }
                    yy += res;
                }
            };
            hole(&mut grid);
        }
    }
    for _ in 0..rng.gen_range(1..=3) {
        let lo = Vec3::new(r(rng, 0.0, 1.7), r(rng, 0.0, 1.7), r(rng, 0.0, 1.5));
        let size = Vec3::new(r(rng, 0.1, 0.4), r(rng, 0.1, 0.4), r(rng, 0.2, 0.5));
        fill_box(&mut grid, lo, lo + size);
    }
    let camera = FrustumParams::from_degrees(80.0, 65.0, rng.gen_range(0.6..1.5)).unwrap();
    let params = SearchParams {
        d_min: 0.1,
        budget_ms: 1e12,
        clock: ClockMode::Virtual,
        ..SearchParams::default()
    };
    let yaws = [0.0, 90.0, 180.0, -90.0];
    let endpoint = |rng: &mut ChaCha8Rng, xs: (f64, f64)| loop {
        let p = Vec3::new(r(rng, xs.0, xs.1), r(rng, 0.2, 1.8), r(rng, 0.2, 1.8));
        let yaw = yaws[rng.gen_range(0..4)];
        if grid.is_clear(&p, params.d_min) {
            return CameraConfig::new(p, 0.0, f64::to_radians(yaw));
        }
    };
    let a = endpoint(rng, (0.2, 0.7));
    let b = endpoint(rng, (1.4, 1.8));
    ConnectorCase { grid, camera, params, a, b }
}

fn occluded(q: &CameraConfig, grid: &VoxelGrid, camera: &FrustumParams) -> bool {
    grid.any_in_frustum(&make_frustum(q, camera), LabelFilter::Obstacle)
}

/// Exhaustive breadth-first search over (lattice cell, pitch cell, yaw cell)
/// states. Attitude cells are the quantization-grid offsets within the
/// correction bound around the interpolated attitude; a state is admissible
/// when clear and clean, and a step is admissible when the segment between
/// the cells is clear. Returns whether the goal cell is reachable.
pub fn connector_bfs(case: &ConnectorCase) -> bool {
    let ConnectorCase { grid, camera, params, a, b } = case;
    let step = params.step;
    let ks = snap(&a.p, step);
    let kg = snap(&b.p, step);
    let (lo, hi) = search_region(&a.p, &b.p, grid, params);
    let np = (params.correct_bound / params.dtheta + 1e-9).floor() as i32;
    let ny = (params.correct_bound / params.dpsi + 1e-9).floor() as i32;
    let admissible = |k: [i64; 3]| -> Option<(i32, i32)> {
        let p = lattice_point(k, step);
        if !grid.is_clear(&p, params.d_min) {
            return None;
        }
        let base = lift(&p, a, b).ok()?;
        let base = CameraConfig::new(p, base.pitch, base.yaw);
        for i in -np..=np {
            let pitch = base.pitch + i as f64 * params.dtheta;
            if !(PITCH_MIN - 1e-12..=PITCH_MAX + 1e-12).contains(&pitch) {
                continue;
            }
            for j in -ny..=ny {
                let q = CameraConfig::new(p, pitch, base.yaw + j as f64 * params.dpsi);
                if !occluded(&q, grid, camera) {
                    return Some((i, j));
                }
            }
        }
        None
    };
    let mut seen: HashSet<[i64; 3]> = HashSet::new();
    let mut queue: VecDeque<([i64; 3], (i32, i32))> = VecDeque::new();
    seen.insert(ks);
    queue.push_back((ks, (0, 0)));
    while let Some((k, _att)) = queue.pop_front() {
        if k == kg {
            return true;
        }
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                for dz in -1..=1i64 {
                    let n = [k[0] + dx, k[1] + dy, k[2] + dz];
                    if seen.contains(&n) {
                        continue;
                    }
                    if n == kg {
                        seen.insert(n);
                        queue.push_back((n, (0, 0)));
                        continue;
                    }
                    if !(0..3).all(|i| n[i] >= lo[i] && n[i] <= hi[i]) {
                        continue;
                    }
                    let Some(att) = admissible(n) else {
                        seen.insert(n);
                        continue;
                    };
                    // a blocked step may still be entered from another side
                    if grid.is_segment_clear(&lattice_point(k, step), &lattice_point(n, step), params.d_min) {
                        seen.insert(n);
                        queue.push_back((n, att));
                    }
                }
            }
        }
    }
    false
}

/// Feasibility verdict of the visibility-constrained connector search.
pub fn phiastar_feasible(case: &ConnectorCase) -> bool {
    let mut cache = VisCache::new();
    let mut budget = Budget::new(case.params.clock, case.params.budget_ms);
    search_with(&case.a, &case.b, &case.grid, &case.camera, &case.params, SearchMode::Visibility, Some(&mut cache), &mut budget)
        .result
        .is_ok()
}

pub fn phiastar_suite(cases: usize, seed: u64, f: impl Fn(&ConnectorCase) -> bool) -> SuiteReport {
    let mut rep = SuiteReport::new("phiastar", cases);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        let case = connector_case(&mut rng);
        let (got, want) = (f(&case), connector_bfs(&case));
        if got != want {
            rep.fail(|| {
                format!(
                    "a={:?} b={:?} r_max={} obstacles={:?} got={got} bfs={want}",
                    case.a,
                    case.b,
                    case.camera.r_max,
                    case.grid.occupied_centers(LabelFilter::Obstacle).len()
                )
            });
        }
    }
    rep
}

/// Cheapest feasible tour by full permutation enumeration.
pub fn sop_enumerate(pr: &TourProblem) -> Option<f64> {
    fn rec(items: &mut Vec<usize>, k: usize, pr: &TourProblem, best: &mut Option<f64>) {
        if k == items.len() {
            let mut order = vec![pr.start];
            order.extend_from_slice(items);
            if is_feasible(&order, pr) {
                let c = tour_cost(&order, &pr.points);
                if best.is_none_or(|b| c < b) {
                    *best = Some(c);
                }
            }
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            rec(items, k + 1, pr, best);
            items.swap(k, i);
        }
    }
    let mut rest: Vec<usize> = (0..pr.points.len()).filter(|&v| v != pr.start).collect();
    let mut best = None;
    rec(&mut rest, 0, pr, &mut best);
    best
}

pub fn sop_suite(cases: usize, seed: u64, f: impl Fn(&TourProblem) -> TourSolution) -> SuiteReport {
    let mut rep = SuiteReport::new("sop", cases);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        let n = rng.gen_range(3..=9);
        let points: Vec<Vec3> = (0..n).map(|_| Vec3::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), 0.0)).collect();
        let anchors: Vec<usize> = (1..n).filter(|_| rng.gen_bool(0.5)).collect();
        let end = if rng.gen_bool(0.3) { Some(n - 1) } else { None };
        let pr = TourProblem { points, anchors, start: 0, end };
        let sol = f(&pr);
        let opt = sop_enumerate(&pr).unwrap_or(f64::INFINITY);
        let ok = is_feasible(&sol.order, &pr) && (sol.total_cost - tour_cost(&sol.order, &pr.points)).abs() <= 1e-9 && sol.total_cost <= opt * (1.0 + SOP_GAP) + 1e-9;
        if !ok {
            rep.fail(|| format!("problem={pr:?} got={sol:?} optimum={opt}"));
        }
    }
    rep
}

/// Mean nearest distance both ways by explicit double loops.
pub fn chamfer_double_loop(a: &[Vec3], b: &[Vec3]) -> f64 {
    let mut ab = 0.0;
    for p in a {
        let mut m = f64::INFINITY;
        for q in b {
            let d = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2)).sqrt();
            if d < m {
                m = d;
            }
        }
        ab += m;
    }
    let mut ba = 0.0;
    for q in b {
        let mut m = f64::INFINITY;
        for p in a {
            let d = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2)).sqrt();
            if d < m {
                m = d;
            }
        }
        ba += m;
    }
    ab / a.len() as f64 + ba / b.len() as f64
}

pub fn chamfer_suite(cases: usize, seed: u64, f: impl Fn(&[Vec3], &[Vec3]) -> f64) -> SuiteReport {
    let mut rep = SuiteReport::new("chamfer", cases);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = |rng: &mut ChaCha8Rng| -> Vec<Vec3> {
        (0..rng.gen_range(1..30))
            .map(|_| Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(0.0..3.0)))
            .collect()
    };
    for _ in 0..cases {
        let a = pts(&mut rng);
        let b = pts(&mut rng);
        let got = f(&a, &b);
        let want = chamfer_double_loop(&a, &b);
        if got.to_bits() != want.to_bits() {
            rep.fail(|| format!("a={a:?} b={b:?} got={got} want={want}"));
        }
    }
    rep
}
