//! Level-II connector search: weighted A* over a position lattice where every
//! expanded position is lifted to a camera configuration by attitude
//! interpolation and must sense cleanly, with minimal attitude correction and
//! a quantized visibility cache.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::clock::{Budget, ClockMode};
use crate::error::{Error, Result};
use crate::geom::{interp_attitude, make_frustum, Attitude, CameraConfig, Face, FrustumParams, Vec3, PITCH_MAX, PITCH_MIN};
use crate::params::PlannerParams;
use crate::world::{LabelFilter, VoxelGrid};

/// Radius of the local obstacle query used to pick the correcting obstacle.
const LOCAL_RADIUS: f64 = 3.0;
const LOCAL_CAP: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Lattice step (m).
    pub step: f64,
    pub lambda_heu: f64,
    pub d_min: f64,
    pub budget_ms: f64,
    pub n_bis: usize,
    /// Cache and fallback-grid quantization (rad).
    pub dtheta: f64,
    pub dpsi: f64,
    /// Per-axis attitude correction bound (rad).
    pub correct_bound: f64,
    /// Inflation of the start/goal box bounding the search (m).
    pub margin: f64,
    pub clock: ClockMode,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self::from_planner(&PlannerParams::default())
    }
}

impl SearchParams {
    pub fn from_planner(p: &PlannerParams) -> Self {
        Self {
            step: p.step,
            lambda_heu: p.lambda_heu,
            d_min: p.d_min,
            budget_ms: p.budget_ms,
            n_bis: p.n_bis,
            dtheta: p.cache_dtheta_deg.to_radians(),
            dpsi: p.cache_dpsi_deg.to_radians(),
            correct_bound: p.eta_max_deg.to_radians(),
            margin: p.search_margin,
            clock: p.clock,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) {
            return Err(Error::invalid("search.step", "must be positive"));
        }
        if !(self.lambda_heu >= 1.0) {
            return Err(Error::invalid("search.lambda_heu", "must be >= 1"));
        }
        if !(self.budget_ms > 0.0) {
            return Err(Error::invalid("search.budget_ms", "must be positive"));
        }
        if !(self.dtheta > 0.0 && self.dpsi > 0.0) {
            return Err(Error::invalid("search.dtheta", "quantization must be positive"));
        }
        Ok(())
    }
}

/// Interpolated attitude at `p` between the segment's end configurations.
pub fn lift(p: &Vec3, a: &CameraConfig, b: &CameraConfig) -> Result<Attitude> {
    let da = (p - a.p).norm();
    let db = (p - b.p).norm();
    if da + db <= 0.0 {
        return Err(Error::Degenerate("degenerate lift"));
    }
    Ok(interp_attitude(a.attitude(), b.attitude(), da / (da + db)))
}

fn occ_at(q: &CameraConfig, grid: &VoxelGrid, camera: &FrustumParams, budget: &mut Budget) -> bool {
    budget.work.occ_evals += 1;
    grid.any_in_frustum(&make_frustum(q, camera), LabelFilter::Obstacle)
}

/// Attitude offset applied to `q`, or `None` if it leaves the pitch range.
fn offset(q: &CameraConfig, dpitch: f64, dyaw: f64) -> Option<CameraConfig> {
    let pitch = q.pitch + dpitch;
    if !(PITCH_MIN - 1e-12..=PITCH_MAX + 1e-12).contains(&pitch) {
        return None;
    }
    Some(CameraConfig::new(q.p, pitch, q.yaw + dyaw))
}

/// Side plane nearest to the in-frustum obstacle sample closest to the
/// frustum boundary (ties: nearest to the camera).
fn violated_face(q: &CameraConfig, grid: &VoxelGrid, camera: &FrustumParams) -> Option<Face> {
    let hs = make_frustum(q, camera);
    let mut samples: Vec<Vec3> = grid
        .local_voxels(q, LOCAL_RADIUS, LOCAL_CAP)
        .into_iter()
        .filter(|o| hs.contains(o))
        .collect();
    if samples.is_empty() {
        let mut all = grid.voxels_in_frustum(&hs, LabelFilter::Obstacle);
        all.sort_by(|a, b| (a - q.p).norm_squared().total_cmp(&(b - q.p).norm_squared()));
        all.truncate(LOCAL_CAP);
        samples = all;
    }
    let mut best: Option<(f64, f64, Face)> = None;
    for o in &samples {
        let (face, slack) = Face::SIDES
            .iter()
            .map(|&f| (f, hs.plane(f).eval(o).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let dist = (o - q.p).norm();
        if best.is_none_or(|(s, d, _)| slack < s || (slack == s && dist < d)) {
            best = Some((slack, dist, face));
        }
    }
    best.map(|b| b.2)
}

/// Largest multiple of `grid` not exceeding `bound`.
fn grid_floor(bound: f64, grid: f64) -> f64 {
    (bound / grid + 1e-9).floor() * grid
}

/// Minimum-perturbation attitude that clears the frustum of obstacle samples.
/// Bisects along each axis in both directions (yaw first, the direction that
/// pushes the critical obstacle out through its nearest plane tried first),
/// then along the diagonal, then scans the quantization grid inside the bound.
/// Every returned attitude has been verified clean. `Ok(None)` means FAIL.
pub fn attitude_correct(
    q: &CameraConfig,
    grid: &VoxelGrid,
    camera: &FrustumParams,
    params: &SearchParams,
    budget: &mut Budget,
) -> Result<Option<Attitude>> {
    if !occ_at(q, grid, camera, budget) {
        return Err(Error::Precondition("attitude correction on a clean configuration"));
    }
    let face = violated_face(q, grid, camera);
    let yaw_sign = match face {
        Some(Face::Right) => 1.0,
        _ => -1.0,
    };
    let pitch_sign = match face {
        Some(Face::Down) => 1.0,
        _ => -1.0,
    };
    let yaw_bound = grid_floor(params.correct_bound, params.dpsi);
    let pitch_bound = grid_floor(params.correct_bound, params.dtheta);
    let mut found: Option<(f64, CameraConfig)> = None;
    let consider = |cost: f64, c: CameraConfig, found: &mut Option<(f64, CameraConfig)>| {
        if found.as_ref().is_none_or(|(b, _)| cost < *b) {
            *found = Some((cost, c));
        }
    };
    // (dpitch, dyaw) unit directions
    let mut dirs: Vec<(f64, f64, f64)> = Vec::new();
    for s in [yaw_sign, -yaw_sign] {
        dirs.push((0.0, s, yaw_bound));
    }
    for s in [pitch_sign, -pitch_sign] {
        let room = if s > 0.0 { PITCH_MAX - q.pitch } else { q.pitch - PITCH_MIN };
        dirs.push((s, 0.0, grid_floor(pitch_bound.min(room.max(0.0)), params.dtheta)));
    }
    let room = if pitch_sign > 0.0 { PITCH_MAX - q.pitch } else { q.pitch - PITCH_MIN };
    let diag = grid_floor(yaw_bound.min(pitch_bound).min(room.max(0.0)), params.dtheta.max(params.dpsi));
    dirs.push((pitch_sign, yaw_sign, diag));
    for (dp, dy, bound) in dirs {
        if bound <= 0.0 {
            continue;
        }
        let Some(end) = offset(q, dp * bound, dy * bound) else { continue };
        if occ_at(&end, grid, camera, budget) {
            continue;
        }
        let (mut lo, mut hi) = (0.0, bound);
        let mut hi_cfg = end;
        for _ in 0..params.n_bis {
            let mid = 0.5 * (lo + hi);
            match offset(q, dp * mid, dy * mid) {
                Some(c) if !occ_at(&c, grid, camera, budget) => {
                    hi = mid;
                    hi_cfg = c;
                }
                _ => lo = mid,
            }
        }
        consider(hi * (dp.abs() + dy.abs()), hi_cfg, &mut found);
    }
    if found.is_none() {
        let ny = (yaw_bound / params.dpsi).round() as i32;
        let np = (pitch_bound / params.dtheta).round() as i32;
        let mut cells: Vec<(i32, i32)> = Vec::new();
        for i in -np..=np {
            for j in -ny..=ny {
                if i != 0 || j != 0 {
                    cells.push((i, j));
                }
            }
        }
        cells.sort_by(|a, b| {
            let ca = a.0.abs() as f64 * params.dtheta + a.1.abs() as f64 * params.dpsi;
            let cb = b.0.abs() as f64 * params.dtheta + b.1.abs() as f64 * params.dpsi;
            ca.total_cmp(&cb).then(a.cmp(b))
        });
        for (i, j) in cells {
            if let Some(c) = offset(q, i as f64 * params.dtheta, j as f64 * params.dpsi) {
                if !occ_at(&c, grid, camera, budget) {
                    found = Some((0.0, c));
                    break;
                }
            }
        }
    }
    Ok(found.map(|(_, c)| c.attitude()))
}

pub type CacheKey = [i64; 5];

/// `(floor(p / step), floor(pitch / dtheta), floor(yaw / dpsi))`.
pub fn cache_key(q: &CameraConfig, params: &SearchParams) -> CacheKey {
    [
        (q.p.x / params.step).floor() as i64,
        (q.p.y / params.step).floor() as i64,
        (q.p.z / params.step).floor() as i64,
        (q.pitch / params.dtheta).floor() as i64,
        (q.yaw / params.dpsi).floor() as i64,
    ]
}

fn lattice_key(k: [i64; 3], att: &Attitude, params: &SearchParams) -> CacheKey {
    [
        k[0],
        k[1],
        k[2],
        (att.pitch / params.dtheta).floor() as i64,
        (att.yaw / params.dpsi).floor() as i64,
    ]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CacheEntry {
    /// Clean attitude (the queried one or its correction).
    Clean(Attitude),
    Dirty,
}

/// Per-session memo of clean-sensing verdicts.
///
/// While obstacles only accumulate, `Dirty` verdicts stay valid and `Clean`
/// ones are re-checked once against the newer grid; any obstacle removal
/// drops everything.
#[derive(Clone, Debug, Default)]
pub struct VisCache {
    version: u64,
    removals: Option<u64>,
    map: HashMap<CacheKey, (CacheEntry, u64)>,
    pub hits: u64,
    pub misses: u64,
}

impl VisCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sync(&mut self, grid: &VoxelGrid) {
        if self.removals != Some(grid.removals()) {
            self.map.clear();
            self.removals = Some(grid.removals());
        }
        self.version = grid.version();
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Entry and whether it was stored against the current grid version.
    pub fn get(&self, k: &CacheKey) -> Option<(CacheEntry, bool)> {
        self.map.get(k).map(|(e, v)| (*e, *v == self.version))
    }

    pub fn insert(&mut self, k: CacheKey, e: CacheEntry) {
        self.map.insert(k, (e, self.version));
    }
}

/// Clean, clear sequence of configurations joining two configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Connector {
    pub configs: Vec<CameraConfig>,
    pub length: f64,
    /// Distance from the goal to its lattice snap.
    pub snap_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    Unreachable,
    Occluded,
    Budget,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub expansions: u64,
    pub occ_evals: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub corrections: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub result: std::result::Result<Connector, FailReason>,
    pub stats: SearchStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchMode {
    /// Every node must sense cleanly.
    Visibility,
    /// Clearance only; attitudes are the interpolated ones.
    ClearanceOnly,
}

#[derive(Clone, Copy)]
struct Open {
    f: f64,
    seq: u64,
    k: [i64; 3],
}

impl PartialEq for Open {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        // min-heap on (f, seq)
        o.f.total_cmp(&self.f).then(o.seq.cmp(&self.seq))
    }
}

struct NodeInfo {
    g: f64,
    parent: Option<[i64; 3]>,
    att: Attitude,
    closed: bool,
}

/// Lattice region searched for a connector: the endpoints' bounding box
/// inflated by `margin`, clipped to the grid.
pub fn search_region(a: &Vec3, b: &Vec3, grid: &VoxelGrid, params: &SearchParams) -> ([i64; 3], [i64; 3]) {
    let bounds = grid.bounds();
    let mut lo = [0i64; 3];
    let mut hi = [0i64; 3];
    for i in 0..3 {
        let mn = (a[i].min(b[i]) - params.margin).max(bounds.min[i]);
        let mx = (a[i].max(b[i]) + params.margin).min(bounds.max[i]);
        lo[i] = (mn / params.step).ceil() as i64;
        hi[i] = (mx / params.step).floor() as i64;
    }
    (lo, hi)
}

pub fn snap(p: &Vec3, step: f64) -> [i64; 3] {
    [
        (p.x / step).round() as i64,
        (p.y / step).round() as i64,
        (p.z / step).round() as i64,
    ]
}

pub fn lattice_point(k: [i64; 3], step: f64) -> Vec3 {
    Vec3::new(k[0] as f64 * step, k[1] as f64 * step, k[2] as f64 * step)
}

/// Clean-sensing attitude for lattice node `k`, consulting and filling the cache.
#[allow(clippy::too_many_arguments)]
pub(crate) fn clean_attitude(
    k: [i64; 3],
    p: &Vec3,
    a: &CameraConfig,
    b: &CameraConfig,
    grid: &VoxelGrid,
    camera: &FrustumParams,
    params: &SearchParams,
    cache: Option<&mut VisCache>,
    stats: &mut SearchStats,
    budget: &mut Budget,
) -> Option<Attitude> {
    let lifted = lift(p, a, b).ok()?;
    let q = CameraConfig::new(*p, lifted.pitch, lifted.yaw);
    let key = lattice_key(k, &q.attitude(), params);
    let mut cache = cache;
    if let Some(c) = cache.as_deref_mut() {
        match c.get(&key) {
            Some((CacheEntry::Dirty, _)) | Some((CacheEntry::Clean(_), true)) => {
                stats.cache_hits += 1;
                c.hits += 1;
                return match c.get(&key).unwrap().0 {
                    CacheEntry::Clean(att) => Some(att),
                    CacheEntry::Dirty => None,
                };
            }
            Some((CacheEntry::Clean(att), false)) => {
                let before = budget.work.occ_evals;
                let still = !occ_at(&CameraConfig::new(*p, att.pitch, att.yaw), grid, camera, budget);
                stats.occ_evals += budget.work.occ_evals - before;
                if still {
                    stats.cache_hits += 1;
                    c.hits += 1;
                    c.insert(key, CacheEntry::Clean(att));
                    return Some(att);
                }
            }
            None => {}
        }
        c.misses += 1;
    }
    stats.cache_misses += 1;
    let before = budget.work.occ_evals;
    let verdict = if !occ_at(&q, grid, camera, budget) {
        Some(q.attitude())
    } else {
        stats.corrections += 1;
        attitude_correct(&q, grid, camera, params, budget).ok().flatten()
    };
    stats.occ_evals += budget.work.occ_evals - before;
    if let Some(c) = cache {
        c.insert(key, verdict.map_or(CacheEntry::Dirty, CacheEntry::Clean));
    }
    verdict
}

/// Connector search with the simple interface: fresh cache, own budget.
pub fn search(a: &CameraConfig, b: &CameraConfig, grid: &VoxelGrid, camera: &FrustumParams, params: &SearchParams) -> SearchOutcome {
    let mut cache = VisCache::new();
    let mut budget = Budget::new(params.clock, params.budget_ms);
    search_with(a, b, grid, camera, params, SearchMode::Visibility, Some(&mut cache), &mut budget)
}

#[allow(clippy::too_many_arguments)]
pub fn search_with(
    a: &CameraConfig,
    b: &CameraConfig,
    grid: &VoxelGrid,
    camera: &FrustumParams,
    params: &SearchParams,
    mode: SearchMode,
    mut cache: Option<&mut VisCache>,
    budget: &mut Budget,
) -> SearchOutcome {
    let mut stats = SearchStats::default();
    if let Some(c) = cache.as_deref_mut() {
        c.sync(grid);
    }
    let step = params.step;
    let ks = snap(&a.p, step);
    let kg = snap(&b.p, step);
    let snap_residual = (lattice_point(kg, step) - b.p).norm();
    let (lo, hi) = search_region(&a.p, &b.p, grid, params);
    let in_region = |k: [i64; 3]| (0..3).all(|i| k[i] >= lo[i] && k[i] <= hi[i]);
    let goal_p = lattice_point(kg, step);
    let h = |k: [i64; 3]| params.lambda_heu * (lattice_point(k, step) - goal_p).norm();

    let mut nodes: HashMap<[i64; 3], NodeInfo> = HashMap::new();
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;
    nodes.insert(
        ks,
        NodeInfo {
            g: 0.0,
            parent: None,
            att: a.attitude(),
            closed: false,
        },
    );
    open.push(Open { f: h(ks), seq, k: ks });
    let mut dirty_seen = false;
    let mut found = false;
    let mut out_of_time = false;
    while let Some(Open { k, .. }) = open.pop() {
        let info = nodes.get_mut(&k).unwrap();
        if info.closed {
            continue;
        }
        info.closed = true;
        let g_cur = info.g;
        if k == kg {
            found = true;
            break;
        }
        if budget.expired() {
            out_of_time = true;
            break;
        }
        stats.expansions += 1;
        budget.work.expansions += 1;
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                for dz in -1..=1i64 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let n = [k[0] + dx, k[1] + dy, k[2] + dz];
                    if n != kg && !in_region(n) {
                        continue;
                    }
                    let g_new = g_cur + step * ((dx * dx + dy * dy + dz * dz) as f64).sqrt();
                    if let Some(e) = nodes.get(&n) {
                        if e.closed || e.g <= g_new {
                            continue;
                        }
                    }
                    let p = lattice_point(n, step);
                    let att = if n == kg {
                        b.attitude()
                    } else {
                        budget.work.clearance_checks += 1;
                        if !grid.is_segment_clear(&lattice_point(k, step), &p, params.d_min) {
                            continue;
                        }
                        let known = nodes.get(&n).map(|e| e.att);
                        match (known, mode) {
                            (Some(att), _) => att,
                            (None, SearchMode::ClearanceOnly) => match lift(&p, a, b) {
                                Ok(att) => CameraConfig::new(p, att.pitch, att.yaw).attitude(),
                                Err(_) => continue,
                            },
                            (None, SearchMode::Visibility) => {
                                match clean_attitude(n, &p, a, b, grid, camera, params, cache.as_deref_mut(), &mut stats, budget) {
                                    Some(att) => att,
                                    None => {
                                        dirty_seen = true;
                                        continue;
                                    }
                                }
                            }
                        }
                    };
                    seq += 1;
                    nodes.insert(
                        n,
                        NodeInfo {
                            g: g_new,
                            parent: Some(k),
                            att,
                            closed: false,
                        },
                    );
                    open.push(Open { f: g_new + h(n), seq, k: n });
                }
            }
        }
    }
    if found {
        let mut chain = vec![kg];
        let mut cur = kg;
        while let Some(p) = nodes[&cur].parent {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        let mut configs = Vec::with_capacity(chain.len());
        for (i, k) in chain.iter().enumerate() {
            if i == 0 {
                configs.push(*a);
            } else if i + 1 == chain.len() {
                configs.push(*b);
            } else {
                let att = nodes[k].att;
                configs.push(CameraConfig::new(lattice_point(*k, step), att.pitch, att.yaw));
            }
        }
        if chain.len() == 1 {
            configs.push(*b);
        }
        let length = configs.windows(2).map(|w| (w[1].p - w[0].p).norm()).sum();
        return SearchOutcome {
            result: Ok(Connector {
                configs,
                length,
                snap_residual,
            }),
            stats,
        };
    }
    let reason = if out_of_time {
        FailReason::Budget
    } else if dirty_seen {
        // distinguish a blocked corridor from an occluded one
        let probe = search_with(a, b, grid, camera, params, SearchMode::ClearanceOnly, None, budget);
        match probe.result {
            Ok(_) => FailReason::Occluded,
            Err(FailReason::Budget) => FailReason::Budget,
            Err(_) => FailReason::Unreachable,
        }
    } else {
        FailReason::Unreachable
    };
    SearchOutcome { result: Err(reason), stats }
}

/// Independent re-check: endpoints, unit lattice steps, clearance along
/// interior steps and clean sensing.
pub fn validate_connector(
    c: &Connector,
    a: &CameraConfig,
    b: &CameraConfig,
    grid: &VoxelGrid,
    camera: &FrustumParams,
    params: &SearchParams,
    require_clean: bool,
) -> bool {
    if c.configs.first() != Some(a) || c.configs.last() != Some(b) {
        return false;
    }
    let n = c.configs.len();
    for (i, q) in c.configs.iter().enumerate() {
        let interior = i > 0 && i + 1 < n;
        if interior && !grid.is_clear(&q.p, params.d_min) {
            return false;
        }
        if interior && require_clean && grid.any_in_frustum(&make_frustum(q, camera), LabelFilter::Obstacle) {
            return false;
        }
    }
    for i in 1..n.saturating_sub(2) {
        let (p, q) = (c.configs[i].p, c.configs[i + 1].p);
        if (q - p).iter().any(|x| x.abs() > params.step * (1.0 + 1e-9)) || !grid.is_segment_clear(&p, &q, params.d_min) {
            return false;
        }
    }
    true
}
