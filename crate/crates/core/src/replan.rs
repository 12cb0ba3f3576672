//! Receding-horizon replanning: trigger detection, window extraction, the
//! repair/reorder/connect pipeline under a time budget, splicing, and time
//! parameterization.

use serde::{Deserialize, Serialize};

use crate::clock::Budget;
use crate::error::{Error, Result};
use crate::geom::{interp_attitude, make_frustum, normalize_angle, CameraConfig, FrustumParams, Vec3};
use crate::params::PlannerParams;
use crate::path::{PathNode, ScanPath};
use crate::phiastar::{attitude_correct, search_with, FailReason, SearchMode, SearchParams, VisCache};
use crate::repair::{complete_coverage, repair_viewpoint, select_replacements, Candidate, DirectionTemplate, Pool, RepairContext};
use crate::tour::{reorder, TourProblem};
use crate::vis::{element_visible_in, qualify, CoverageSet};
use crate::world::{LabelFilter, Limits, SurfaceModel, VoxelGrid};

/// Planner behavior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Clearance plus clean sensing.
    VisibilityAware,
    /// Clearance only; occlusion is ignored.
    ClearanceOnly,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "visibility-aware" => Ok(Mode::VisibilityAware),
            "clearance-only" => Ok(Mode::ClearanceOnly),
            _ => Err(Error::invalid("mode", format!("unknown mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::VisibilityAware => "visibility-aware",
            Mode::ClearanceOnly => "clearance-only",
        })
    }
}

/// Why replanning was requested.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "node", rename_all = "snake_case")]
pub enum Trigger {
    Clearance(usize),
    Occlusion(usize),
    ElementBlocked(usize),
    WaypointOcclusion(usize),
    /// Edge leaving the given node.
    EdgeClearance(usize),
    EdgeOcclusion(usize),
    Periodic,
}

impl Trigger {
    pub fn is_violation(&self) -> bool {
        !matches!(self, Trigger::Periodic)
    }
}

/// Read-only inputs for one replanning call.
#[derive(Clone, Copy)]
pub struct PlanContext<'a> {
    pub surface: &'a SurfaceModel,
    pub camera: &'a FrustumParams,
    pub params: &'a PlannerParams,
    pub template: &'a DirectionTemplate,
    pub mode: Mode,
}

impl PlanContext<'_> {
    fn search_params(&self) -> SearchParams {
        SearchParams::from_planner(self.params)
    }
}

fn is_occ(q: &CameraConfig, grid: &VoxelGrid, camera: &FrustumParams, budget: &mut Budget) -> bool {
    budget.work.occ_evals += 1;
    grid.any_in_frustum(&make_frustum(q, camera), LabelFilter::Obstacle)
}

/// Interior samples of the straight edge `a -> b`, spaced at most `step`
/// apart in position and 2 degrees in attitude.
pub fn edge_samples(a: &CameraConfig, b: &CameraConfig, step: f64) -> Vec<CameraConfig> {
    let dist = (b.p - a.p).norm();
    let dang = (b.pitch - a.pitch).abs().max(normalize_angle(b.yaw - a.yaw).abs());
    let n = ((dist / step).ceil().max((dang / 2f64.to_radians()).ceil()) as usize).max(1);
    (1..n)
        .map(|k| {
            let rho = k as f64 / n as f64;
            let att = interp_attitude(a.attitude(), b.attitude(), rho);
            CameraConfig::new(a.p + (b.p - a.p) * rho, att.pitch, att.yaw)
        })
        .collect()
}

/// First violation on the straight edge between two nodes, if any.
fn edge_violation(a: &CameraConfig, b: &CameraConfig, grid: &VoxelGrid, ctx: &PlanContext, budget: &mut Budget) -> Option<bool> {
    for q in edge_samples(a, b, ctx.params.step) {
        budget.work.clearance_checks += 1;
        if !grid.is_clear(&q.p, ctx.params.d_min) {
            return Some(false);
        }
        if ctx.mode == Mode::VisibilityAware && is_occ(&q, grid, ctx.camera, budget) {
            return Some(true);
        }
    }
    None
}

fn node_violation(i: usize, node: &PathNode, grid: &VoxelGrid, ctx: &PlanContext, budget: &mut Budget) -> Option<Trigger> {
    budget.work.clearance_checks += 1;
    if !grid.is_clear(&node.config.p, ctx.params.d_min) {
        return Some(Trigger::Clearance(i));
    }
    if ctx.mode == Mode::ClearanceOnly {
        return None;
    }
    match &node.intended {
        Some(s) if node.is_viewpoint() => {
            budget.work.occ_evals += 1;
            budget.work.raycasts += s.elements.len() as u64;
            match qualify(&node.config, &s.elements, ctx.surface, grid, ctx.camera, ctx.params.d_min) {
                None => None,
                Some(crate::vis::Disqualification::Clearance) => Some(Trigger::Clearance(i)),
                Some(crate::vis::Disqualification::Occluded) => Some(Trigger::Occlusion(i)),
                Some(crate::vis::Disqualification::ElementBlocked) => Some(Trigger::ElementBlocked(i)),
            }
        }
        _ => is_occ(&node.config, grid, ctx.camera, budget).then_some(Trigger::WaypointOcclusion(i)),
    }
}

/// Scans the window ahead of `exec_idx` for violations; falls back to
/// `Periodic` when `since_refresh` reached the refresh interval.
pub fn should_replan(
    path: &ScanPath,
    exec_idx: usize,
    grid: &VoxelGrid,
    ctx: &PlanContext,
    since_refresh: f64,
    budget: &mut Budget,
) -> Option<Trigger> {
    let w = extract_window(path, exec_idx, ctx.params.horizon);
    for i in w.i_s..=w.i_e {
        if i > w.i_s {
            if let Some(t) = node_violation(i, &path.nodes[i], grid, ctx, budget) {
                return Some(t);
            }
        }
        if i < w.i_e {
            match edge_violation(&path.nodes[i].config, &path.nodes[i + 1].config, grid, ctx, budget) {
                Some(false) => return Some(Trigger::EdgeClearance(i)),
                Some(true) => return Some(Trigger::EdgeOcclusion(i)),
                None => {}
            }
        }
    }
    (since_refresh >= ctx.params.refresh_s).then_some(Trigger::Periodic)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplanWindow {
    pub i_s: usize,
    pub i_e: usize,
}

/// `i_e` is the first node whose arc length from `exec_idx` reaches `horizon`,
/// clamped to the path end.
pub fn extract_window(path: &ScanPath, exec_idx: usize, horizon: f64) -> ReplanWindow {
    let last = path.len().saturating_sub(1);
    let mut acc = 0.0;
    let mut i_e = exec_idx;
    while i_e < last && acc < horizon {
        acc += (path.nodes[i_e + 1].config.p - path.nodes[i_e].config.p).norm();
        i_e += 1;
    }
    ReplanWindow { i_s: exec_idx, i_e }
}

/// Grows the window forward until its exit node is itself valid.
fn grow_window(path: &ScanPath, mut w: ReplanWindow, grid: &VoxelGrid, ctx: &PlanContext, budget: &mut Budget) -> (ReplanWindow, bool) {
    let last = path.len() - 1;
    loop {
        if w.i_e > w.i_s && node_violation(w.i_e, &path.nodes[w.i_e], grid, ctx, budget).is_none() {
            return (w, true);
        }
        if w.i_e == last {
            return (w, w.i_e == w.i_s);
        }
        w.i_e += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplanStatus {
    /// Nothing to repair; window returned unchanged.
    Identity,
    /// Repaired and fully re-validated.
    Ok,
    /// Repaired, but some connectors fell back to clearance-only search.
    Dirty,
    /// Irreparable elements remain, or the budget expired (input returned).
    Degraded,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub classify: f64,
    pub repair: f64,
    pub select: f64,
    pub complete: f64,
    pub reorder: f64,
    pub connect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplanReport {
    pub status: ReplanStatus,
    pub trigger: Option<Trigger>,
    pub window: ReplanWindow,
    /// Invalid viewpoint node indices (in the input path).
    pub invalid: Vec<usize>,
    /// Invalid viewpoints whose candidate pool was empty.
    pub unrepaired: Vec<usize>,
    /// `(source node, displacement)` for each selected replacement.
    pub replaced: Vec<(usize, f64)>,
    pub added: usize,
    /// Window elements no viewpoint of the repaired window sees.
    pub residual: Vec<usize>,
    pub dirty_connectors: usize,
    /// Stages cut short by the budget.
    pub partial: Vec<String>,
    /// True when the returned window is the unmodified input.
    pub returned_input: bool,
    /// Window elements seen by the input window's viewpoints on this grid.
    pub nominal_coverage: usize,
    /// Window elements seen by the returned window's viewpoints.
    pub repaired_coverage: usize,
    pub stage_ms: StageTimes,
    pub latency_ms: f64,
}

impl ReplanReport {
    fn new(window: ReplanWindow, trigger: Option<Trigger>) -> Self {
        Self {
            status: ReplanStatus::Identity,
            trigger,
            window,
            invalid: Vec::new(),
            unrepaired: Vec::new(),
            replaced: Vec::new(),
            added: 0,
            residual: Vec::new(),
            dirty_connectors: 0,
            partial: Vec::new(),
            returned_input: true,
            nominal_coverage: 0,
            repaired_coverage: 0,
            stage_ms: StageTimes::default(),
            latency_ms: 0.0,
        }
    }
}

fn window_elements(nodes: &[PathNode], universe: usize) -> CoverageSet {
    let mut s = CoverageSet::new(universe);
    for n in nodes {
        if let Some(i) = &n.intended {
            for &id in &i.elements {
                s.insert(id);
            }
        }
    }
    s
}

fn visible_among(q: &CameraConfig, ids: &CoverageSet, surface: &SurfaceModel, grid: &VoxelGrid, camera: &FrustumParams, budget: &mut Budget) -> CoverageSet {
    let hs = make_frustum(q, camera);
    let mut out = CoverageSet::new(surface.len());
    for id in ids.ones() {
        let e = &surface.elements[id];
        if hs.contains(&e.p) {
            budget.work.raycasts += 1;
            if element_visible_in(q, &hs, e, grid) {
                out.insert(id);
            }
        }
    }
    out
}

fn achieved(nodes: &[PathNode], s: &CoverageSet, surface: &SurfaceModel, grid: &VoxelGrid, camera: &FrustumParams, budget: &mut Budget) -> usize {
    let mut cov = CoverageSet::new(surface.len());
    for n in nodes.iter().filter(|n| n.is_viewpoint()) {
        cov.union_with(&visible_among(&n.config, s, surface, grid, camera, budget));
    }
    cov.count()
}

/// Result of one window repair.
#[derive(Clone, Debug)]
pub struct WindowRepair {
    pub nodes: Vec<PathNode>,
    pub report: ReplanReport,
}

/// Connector between two configurations as the interior configurations to insert.
enum Link {
    Clean(Vec<CameraConfig>),
    Dirty(Vec<CameraConfig>),
    Failed,
}

/// Holds the previous attitude along a connector wherever it stays clean,
/// so the camera only turns where it has to.
fn hold_attitudes(configs: &[CameraConfig], grid: &VoxelGrid, ctx: &PlanContext, budget: &mut Budget) -> Vec<CameraConfig> {
    let mut out = configs.to_vec();
    let n = out.len();
    for i in 1..n.saturating_sub(1) {
        let prev = out[i - 1];
        let held = CameraConfig::new(out[i].p, prev.pitch, prev.yaw);
        if held.attitude() != out[i].attitude() && !is_occ(&held, grid, ctx.camera, budget) {
            out[i] = held;
        }
    }
    out
}

/// Clean realization of the motion `a -> b`: turn in place first, translate
/// first, or split at a corrected midpoint, up to `depth` times.
fn realize_edge(a: &CameraConfig, b: &CameraConfig, grid: &VoxelGrid, ctx: &PlanContext, depth: u32, budget: &mut Budget) -> Option<Vec<CameraConfig>> {
    if edge_violation(a, b, grid, ctx, budget).is_none() {
        return Some(Vec::new());
    }
    let turn_first = CameraConfig::new(a.p, b.pitch, b.yaw);
    let move_first = CameraConfig::new(b.p, a.pitch, a.yaw);
    for m in [turn_first, move_first] {
        if !is_occ(&m, grid, ctx.camera, budget)
            && edge_violation(a, &m, grid, ctx, budget).is_none()
            && edge_violation(&m, b, grid, ctx, budget).is_none()
        {
            return Some(vec![m]);
        }
    }
    if depth == 0 {
        return None;
    }
    let att = interp_attitude(a.attitude(), b.attitude(), 0.5);
    let mid = CameraConfig::new((a.p + b.p) * 0.5, att.pitch, att.yaw);
    budget.work.clearance_checks += 1;
    if !grid.is_clear(&mid.p, ctx.params.d_min) {
        return None;
    }
    let mut options = vec![mid.with_attitude(a.attitude()), mid.with_attitude(b.attitude()), mid];
    if is_occ(&mid, grid, ctx.camera, budget) {
        if let Ok(Some(c)) = attitude_correct(&mid, grid, ctx.camera, &ctx.search_params(), budget) {
            options.push(mid.with_attitude(c));
        }
    }
    for m in options {
        if is_occ(&m, grid, ctx.camera, budget) {
            continue;
        }
        let Some(left) = realize_edge(a, &m, grid, ctx, depth - 1, budget) else { continue };
        let Some(right) = realize_edge(&m, b, grid, ctx, depth - 1, budget) else { continue };
        let mut v = left;
        v.push(m);
        v.extend(right);
        return Some(v);
    }
    None
}

/// Realizes every edge of a lattice connector; returns the configurations and
/// the number of edges left unclean.
fn realize_edges(configs: &[CameraConfig], grid: &VoxelGrid, ctx: &PlanContext, budget: &mut Budget) -> (Vec<CameraConfig>, usize) {
    let mut out = vec![configs[0]];
    let mut failed = 0;
    for w in configs.windows(2) {
        match realize_edge(&w[0], &w[1], grid, ctx, 3, budget) {
            Some(v) => out.extend(v),
            None => failed += 1,
        }
        out.push(w[1]);
    }
    (out, failed)
}

fn connect(a: &CameraConfig, b: &CameraConfig, grid: &VoxelGrid, ctx: &PlanContext, cache: &mut VisCache, share_ms: f64, budget: &mut Budget) -> Link {
    if edge_violation(a, b, grid, ctx, budget).is_none() {
        return Link::Clean(Vec::new());
    }
    let sp = ctx.search_params();
    let interior = |c: &crate::phiastar::Connector| c.configs[1..c.configs.len() - 1].to_vec();
    if ctx.mode == Mode::VisibilityAware {
        let mut child = budget.child(share_ms);
        let out = search_with(a, b, grid, ctx.camera, &sp, SearchMode::Visibility, Some(cache), &mut child);
        budget.absorb(&child);
        if let Ok(c) = &out.result {
            let held = hold_attitudes(&c.configs, grid, ctx, budget);
            let (full, failed) = realize_edges(&held, grid, ctx, budget);
            let inner = full[1..full.len() - 1].to_vec();
            return if failed == 0 { Link::Clean(inner) } else { Link::Dirty(inner) };
        }
        if out.result == Err(FailReason::Unreachable) {
            return Link::Failed;
        }
    }
    let out = search_with(a, b, grid, ctx.camera, &sp, SearchMode::ClearanceOnly, None, budget);
    match out.result {
        Ok(c) if ctx.mode == Mode::ClearanceOnly => Link::Clean(interior(&c)),
        Ok(c) => Link::Dirty(interior(&c)),
        Err(_) => Link::Failed,
    }
}

/// Repairs the window `path[w.i_s..=w.i_e]`. The entry node is kept; the exit
/// node is kept when `exit_fixed`.
pub fn replan_window(
    path: &ScanPath,
    w: ReplanWindow,
    exit_fixed: bool,
    grid: &VoxelGrid,
    ctx: &PlanContext,
    trigger: Option<Trigger>,
    cache: &mut VisCache,
    budget: &mut Budget,
) -> Result<WindowRepair> {
    let input: Vec<PathNode> = path.nodes[w.i_s..=w.i_e].to_vec();
    let mut report = ReplanReport::new(w, trigger);
    let surface = ctx.surface;
    let universe = surface.len();
    let s_window = window_elements(&input[1..], universe);
    let identity = |mut report: ReplanReport, status: ReplanStatus, budget: &mut Budget| {
        report.status = status;
        report.returned_input = true;
        report.repaired_coverage = report.nominal_coverage;
        report.latency_ms = budget.elapsed_ms();
        WindowRepair {
            nodes: input.clone(),
            report,
        }
    };

    // classify
    let t0 = budget.elapsed_ms();
    let interior_end = if exit_fixed { w.i_e } else { w.i_e + 1 };
    let mut qualified = Vec::new();
    let mut invalid = Vec::new();
    let mut other_violation = false;
    for i in w.i_s + 1..interior_end {
        let n = &path.nodes[i];
        if n.is_viewpoint() {
            if n.intended.is_none() {
                return Err(Error::Precondition("viewpoint without intended subset"));
            }
            match node_violation(i, n, grid, ctx, budget) {
                None => qualified.push(i),
                Some(_) => invalid.push(i),
            }
        } else if node_violation(i, n, grid, ctx, budget).is_some() {
            other_violation = true;
        }
    }
    let entry = path.nodes[w.i_s].config;
    let entry_turn = if ctx.mode == Mode::VisibilityAware && is_occ(&entry, grid, ctx.camera, budget) {
        other_violation = true;
        attitude_correct(&entry, grid, ctx.camera, &ctx.search_params(), budget).ok().flatten().map(|att| entry.with_attitude(att))
    } else {
        None
    };
    for i in w.i_s..w.i_e {
        if !other_violation && edge_violation(&path.nodes[i].config, &path.nodes[i + 1].config, grid, ctx, budget).is_some() {
            other_violation = true;
        }
    }
    report.nominal_coverage = achieved(&input[1..], &s_window, surface, grid, ctx.camera, budget);
    report.invalid = invalid.clone();
    report.stage_ms.classify = budget.elapsed_ms() - t0;
    if invalid.is_empty() && !other_violation {
        return Ok(identity(report, ReplanStatus::Identity, budget));
    }
    if budget.expired() {
        report.partial.push("classify".into());
        return Ok(identity(report, ReplanStatus::Degraded, budget));
    }

    let total = budget.remaining_ms();
    let mut new_vps: Vec<PathNode> = Vec::new();
    if ctx.mode == Mode::VisibilityAware {
        // repair
        let t1 = budget.elapsed_ms();
        let rctx = RepairContext {
            surface,
            grid,
            camera: ctx.camera,
            params: ctx.params,
            template: ctx.template,
        };
        let mut stage = budget.child(total * 0.4);
        let mut pools = Vec::with_capacity(invalid.len());
        for &i in &invalid {
            let node = &path.nodes[i];
            let candidates = repair_viewpoint(i, node, &rctx, &mut stage)?;
            pools.push(Pool {
                source: i,
                origin: node.config.p,
                intended: node.intended.as_ref().unwrap().elements.clone(),
                candidates,
            });
        }
        if stage.expired() {
            report.partial.push("repair".into());
        }
        budget.absorb(&stage);
        report.stage_ms.repair = budget.elapsed_ms() - t1;

        // select
        let t2 = budget.elapsed_ms();
        let picks = select_replacements(&pools, ctx.params.lambda_d);
        let mut chosen: Vec<Candidate> = Vec::new();
        for (pool, pick) in pools.iter().zip(&picks) {
            match pick {
                Some(k) => {
                    let c = &pool.candidates[*k];
                    report.replaced.push((pool.source, (c.config.p - pool.origin).norm()));
                    chosen.push(c.clone());
                }
                None => report.unrepaired.push(pool.source),
            }
        }
        report.stage_ms.select = budget.elapsed_ms() - t2;

        // complete
        let t3 = budget.elapsed_ms();
        let mut cur: Vec<CameraConfig> = qualified.iter().map(|&i| path.nodes[i].config).collect();
        if exit_fixed && input[input.len() - 1].is_viewpoint() {
            cur.push(input[input.len() - 1].config);
        }
        cur.extend(chosen.iter().map(|c| c.config));
        let mut covered = CoverageSet::new(universe);
        for q in &cur {
            covered.union_with(&visible_among(q, &s_window, surface, grid, ctx.camera, budget));
        }
        let uncovered = CoverageSet::from_ids(universe, s_window.ones().filter(|&id| !covered.contains(id)));
        let rest: Vec<&Candidate> = pools
            .iter()
            .zip(&picks)
            .flat_map(|(p, pick)| p.candidates.iter().enumerate().filter(move |(k, _)| Some(*k) != *pick).map(|(_, c)| c))
            .collect();
        let mut extra: Vec<CameraConfig> = Vec::new();
        let mut residual = uncovered.clone();
        if uncovered.count() > 0 && !rest.is_empty() {
            let cfgs: Vec<CameraConfig> = rest.iter().map(|c| c.config).collect();
            let mut covers = Vec::with_capacity(cfgs.len());
            for q in &cfgs {
                if budget.expired() {
                    break;
                }
                covers.push(visible_among(q, &uncovered, surface, grid, ctx.camera, budget));
            }
            if covers.len() < cfgs.len() {
                report.partial.push("complete".into());
            }
            let cur_p: Vec<Vec3> = cur.iter().map(|c| c.p).collect();
            let done = complete_coverage(&cfgs[..covers.len()], &covers, &cur_p, &uncovered, ctx.params.lambda_d);
            extra = done.added.iter().map(|&k| cfgs[k]).collect();
            residual = done.residual;
        }
        report.added = extra.len();
        report.residual = residual.ones().collect();
        for q in chosen.iter().map(|c| c.config).chain(extra) {
            let vis = visible_among(&q, &s_window, surface, grid, ctx.camera, budget);
            new_vps.push(PathNode::viewpoint(q, vis.ones().collect()));
        }
        report.stage_ms.complete = budget.elapsed_ms() - t3;
    } else {
        // clearance-only: move colliding viewpoints to the nearest clear spot
        let t1 = budget.elapsed_ms();
        for &i in &invalid {
            let n = &path.nodes[i];
            match nearest_clear(&n.config.p, grid, ctx.params, budget) {
                Some(p) => {
                    report.replaced.push((i, (p - n.config.p).norm()));
                    let mut moved = n.clone();
                    moved.config.p = p;
                    new_vps.push(moved);
                }
                None => report.unrepaired.push(i),
            }
        }
        report.stage_ms.repair = budget.elapsed_ms() - t1;
    }
    if budget.expired() {
        return Ok(identity(report, ReplanStatus::Degraded, budget));
    }

    // reorder
    let t4 = budget.elapsed_ms();
    let mut nodes: Vec<PathNode> = vec![input[0].clone()];
    let mut anchors = Vec::new();
    for &i in &qualified {
        anchors.push(nodes.len());
        nodes.push(path.nodes[i].clone());
    }
    let n_fixed = nodes.len();
    nodes.extend(new_vps);
    let end = if exit_fixed {
        nodes.push(input[input.len() - 1].clone());
        Some(nodes.len() - 1)
    } else {
        None
    };
    let order = if ctx.mode == Mode::ClearanceOnly {
        // keep the nominal progression: moved viewpoints stay in their slots
        let mut ord: Vec<(usize, usize)> = Vec::new();
        let mut slot = |node_idx: usize, src: usize| ord.push((src, node_idx));
        slot(0, w.i_s);
        for (k, &i) in qualified.iter().enumerate() {
            slot(k + 1, i);
        }
        let mut moved_src: Vec<usize> = invalid.iter().copied().filter(|i| !report.unrepaired.contains(i)).collect();
        moved_src.sort();
        for (k, &i) in moved_src.iter().enumerate() {
            slot(n_fixed + k, i);
        }
        if let Some(e) = end {
            slot(e, w.i_e);
        }
        ord.sort();
        ord.into_iter().map(|(_, n)| n).collect::<Vec<_>>()
    } else {
        let problem = TourProblem {
            points: nodes.iter().map(|n| n.config.p).collect(),
            anchors,
            start: 0,
            end,
        };
        reorder(&problem).order
    };
    report.stage_ms.reorder = budget.elapsed_ms() - t4;

    // connect
    let t5 = budget.elapsed_ms();
    let mut out: Vec<PathNode> = vec![nodes[order[0]].clone()];
    if let Some(t) = entry_turn {
        out.push(PathNode::waypoint(t));
    }
    let pairs = order.len() - 1;
    let mut failed = false;
    for k in 0..pairs {
        if budget.expired() {
            report.partial.push("connect".into());
            report.stage_ms.connect = budget.elapsed_ms() - t5;
            return Ok(identity(report, ReplanStatus::Degraded, budget));
        }
        let a = match (k, entry_turn) {
            (0, Some(t)) => t,
            _ => nodes[order[k]].config,
        };
        let b = nodes[order[k + 1]].config;
        let share = budget.remaining_ms() / (pairs - k) as f64;
        match connect(&a, &b, grid, ctx, cache, share, budget) {
            Link::Clean(v) => out.extend(v.into_iter().map(PathNode::waypoint)),
            Link::Dirty(v) => {
                report.dirty_connectors += 1;
                out.extend(v.into_iter().map(PathNode::waypoint));
            }
            Link::Failed => failed = true,
        }
        out.push(nodes[order[k + 1]].clone());
    }
    report.stage_ms.connect = budget.elapsed_ms() - t5;
    if failed {
        report.partial.push("connect".into());
        return Ok(identity(report, ReplanStatus::Degraded, budget));
    }
    report.returned_input = false;
    report.repaired_coverage = achieved(&out[1..], &s_window, surface, grid, ctx.camera, budget);
    report.status = if !report.residual.is_empty() && !report.unrepaired.is_empty() {
        ReplanStatus::Degraded
    } else if report.dirty_connectors > 0 {
        ReplanStatus::Dirty
    } else {
        ReplanStatus::Ok
    };
    report.latency_ms = budget.elapsed_ms();
    Ok(WindowRepair { nodes: out, report })
}

/// Nearest clear lattice point within 2 m, searched in growing shells.
fn nearest_clear(p: &Vec3, grid: &VoxelGrid, params: &PlannerParams, budget: &mut Budget) -> Option<Vec3> {
    let step = params.step;
    let max_r = (2.0 / step).ceil() as i64;
    for r in 1..=max_r {
        let mut best: Option<(f64, Vec3)> = None;
        for dx in -r..=r {
            for dy in -r..=r {
                for dz in -r..=r {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                        continue;
                    }
                    let q = p + Vec3::new(dx as f64, dy as f64, dz as f64) * step;
                    if !grid.bounds().contains(&q) {
                        continue;
                    }
                    budget.work.clearance_checks += 1;
                    if grid.is_clear(&q, params.d_min) {
                        let d = (q - p).norm();
                        if best.is_none_or(|(bd, _)| d < bd) {
                            best = Some((d, q));
                        }
                    }
                }
            }
        }
        if let Some((_, q)) = best {
            return Some(q);
        }
    }
    None
}

/// `path[..i_s] ++ repaired ++ path[i_e + 1..]`; the repaired window must
/// start and end on the window's boundary configurations.
pub fn splice(path: &ScanPath, w: ReplanWindow, repaired: &[PathNode], exit_fixed: bool) -> Result<ScanPath> {
    let first = repaired.first().ok_or_else(|| Error::Splice("empty repaired window".into()))?;
    if first.config != path.nodes[w.i_s].config {
        return Err(Error::Splice(format!("entry mismatch at node {}", w.i_s)));
    }
    if exit_fixed && repaired.last().unwrap().config != path.nodes[w.i_e].config {
        return Err(Error::Splice(format!("exit mismatch at node {}", w.i_e)));
    }
    let mut nodes = path.nodes[..w.i_s].to_vec();
    nodes.extend_from_slice(repaired);
    nodes.extend_from_slice(&path.nodes[w.i_e + 1..]);
    Ok(ScanPath::new(nodes))
}

/// Outcome of the plug-in entry point.
#[derive(Clone, Debug)]
pub struct ReplanOutcome {
    pub path: ScanPath,
    pub report: ReplanReport,
}

/// Plug-in entry point: window extraction, repair and splice. `cache` may be
/// kept across calls on the same (growing) grid.
pub fn replan(
    path: &ScanPath,
    exec_idx: usize,
    grid: &VoxelGrid,
    ctx: &PlanContext,
    trigger: Option<Trigger>,
    cache: &mut VisCache,
    budget: &mut Budget,
) -> Result<ReplanOutcome> {
    if exec_idx >= path.len() {
        return Err(Error::Precondition("execution index past the path end"));
    }
    let w0 = extract_window(path, exec_idx, ctx.params.horizon);
    let (w, exit_fixed) = grow_window(path, w0, grid, ctx, budget);
    let rep = replan_window(path, w, exit_fixed, grid, ctx, trigger, cache, budget)?;
    let exit_fixed = exit_fixed || rep.report.returned_input;
    let new_path = if rep.report.returned_input {
        path.clone()
    } else {
        splice(path, w, &rep.nodes, exit_fixed)?
    };
    Ok(ReplanOutcome {
        path: new_path,
        report: rep.report,
    })
}

/// Timestamped path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedTrajectory {
    /// Arrival time at each node.
    pub times: Vec<f64>,
    pub durations: Vec<f64>,
    pub total: f64,
}

/// Duration of one edge under the speed limits.
pub fn edge_duration(a: &CameraConfig, b: &CameraConfig, limits: &Limits) -> f64 {
    let lin = (b.p - a.p).norm() / limits.v_max;
    let pitch = (b.pitch - a.pitch).abs() / limits.omega_max;
    let yaw = normalize_angle(b.yaw - a.yaw).abs() / limits.omega_max;
    lin.max(pitch).max(yaw)
}

pub fn time_parameterize(path: &ScanPath, limits: &Limits) -> TimedTrajectory {
    let mut times = vec![0.0];
    let mut durations = Vec::new();
    for w in path.nodes.windows(2) {
        let d = edge_duration(&w[0].config, &w[1].config, limits);
        durations.push(d);
        times.push(times.last().unwrap() + d);
    }
    let total = *times.last().unwrap();
    TimedTrajectory { times, durations, total }
}
