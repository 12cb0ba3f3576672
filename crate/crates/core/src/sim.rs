//! Closed-loop scenario execution and run metrics.

use serde::{Deserialize, Serialize};

use crate::clock::Budget;
use crate::error::{Error, Result};
use crate::geom::{interp_attitude, CameraConfig, Vec3};
use crate::params::PlannerParams;
use crate::path::{PathNode, ScanPath};
use crate::replan::{edge_duration, replan, should_replan, time_parameterize, Mode, PlanContext, ReplanReport, ReplanStatus, Trigger};
use crate::phiastar::VisCache;
use crate::repair::build_template;
use crate::vis::{occ, visible_elements, CoverageSet};
use crate::world::{reveal, Scenario};

/// Visibility-adjusted efficiency `CR * (100 - OR) / FT`, with `cr` and `or`
/// in percent and `ft` in seconds.
pub fn vae(cr: f64, or: f64, ft: f64) -> f64 {
    cr * (100.0 - or) / ft
}

/// Symmetric Chamfer distance: mean nearest distance A to B plus B to A.
pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Degenerate("chamfer of an empty point set"));
    }
    let one_way = |x: &[Vec3], y: &[Vec3]| {
        x.iter()
            .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / x.len() as f64
    };
    Ok(one_way(a, b) + one_way(b, a))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Degraded,
    Timeout,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::Degraded => 2,
            RunStatus::Timeout => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub config: CameraConfig,
    pub occluded: bool,
    pub new_covered: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplanEvent {
    pub t: f64,
    pub exec_node: usize,
    pub trigger: Trigger,
    pub report: ReplanReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub seed: u64,
    pub status: RunStatus,
    pub ft: f64,
    pub cr: f64,
    pub or: f64,
    pub vae: f64,
    pub cl_mean: f64,
    pub cl_max: f64,
    pub d_set: f64,
    pub j_dev: f64,
    pub nominal_ft: f64,
    pub frames: usize,
    /// Occlusion is counted over every frame of the flight.
    pub or_scope: String,
    pub occlusion_trace: Vec<bool>,
    /// First frame time each target element was seen, if ever.
    pub first_seen: Vec<Option<f64>>,
    pub replans: Vec<ReplanEvent>,
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub frames: Vec<Frame>,
    pub final_path: ScanPath,
}

/// Executes `scenario` closed-loop at the scenario's kinematic limits.
pub fn run(scenario: &Scenario, params: &PlannerParams, mode: Mode) -> Result<RunOutput> {
    params.validate()?;
    let template = build_template(&scenario.camera, params.template_dtheta_deg.to_radians(), params.template_dpsi_deg.to_radians())?;
    let ctx = PlanContext {
        surface: &scenario.surface,
        camera: &scenario.camera,
        params,
        template: &template,
        mode,
    };
    let limits = scenario.limits;
    let dt = 1.0 / params.frame_rate;
    let nominal_ft = time_parameterize(&scenario.nominal, &limits).total;
    let watchdog = params.watchdog_factor * nominal_ft.max(dt);

    let mut grid = scenario.base_grid.clone();
    let mut path = scenario.nominal.clone();
    let n_el = scenario.surface.len();
    let mut seen = CoverageSet::new(n_el);
    let mut first_seen: Vec<Option<f64>> = vec![None; n_el];
    let mut frames: Vec<Frame> = Vec::new();
    let mut events: Vec<ReplanEvent> = Vec::new();
    let mut j_dev = 0.0;
    let mut degraded = false;
    let mut cache = VisCache::new();
    // grid version and edge at which a replan last failed to clean the window
    let mut settled: Option<(u64, usize)> = None;

    // position: node k at time t_k, moving towards k + 1
    let mut k = 0usize;
    let mut t_k = 0.0;
    let mut since_refresh = 0.0;
    let mut frame_idx = 0u64;
    let mut finished_at: Option<f64> = None;
    let mut arrived = true;
    let mut timeout = false;

    let config_at = |path: &ScanPath, k: usize, tau: f64, dur: f64| -> CameraConfig {
        let a = &path.nodes[k].config;
        if k + 1 >= path.len() || dur <= 0.0 {
            return *a;
        }
        let b = &path.nodes[k + 1].config;
        let rho = (tau / dur).clamp(0.0, 1.0);
        let att = interp_attitude(a.attitude(), b.attitude(), rho);
        CameraConfig::new(a.p + (b.p - a.p) * rho, att.pitch, att.yaw)
    };

    loop {
        let t = frame_idx as f64 * dt;
        let mut dur = if k + 1 < path.len() { edge_duration(&path.nodes[k].config, &path.nodes[k + 1].config, &limits) } else { 0.0 };
        while k + 1 < path.len() && t >= t_k + dur {
            t_k += dur;
            k += 1;
            arrived = true;
            dur = if k + 1 < path.len() { edge_duration(&path.nodes[k].config, &path.nodes[k + 1].config, &limits) } else { 0.0 };
        }
        let at_end = k + 1 >= path.len();
        let (t_frame, mut q) = if at_end {
            finished_at = Some(t_k);
            (t_k, path.nodes[k].config)
        } else {
            (t, config_at(&path, k, t - t_k, dur))
        };

        let revealed = reveal(&mut grid, &q.p, scenario);
        if !at_end {
            let mut budget = Budget::unlimited(params.clock);
            let check = revealed > 0 || arrived || since_refresh >= params.refresh_s;
            let quiet = settled.is_some_and(|(v, e)| v == grid.version() && e == k);
            let scan_ctx = if quiet {
                PlanContext { mode: Mode::ClearanceOnly, ..ctx }
            } else {
                ctx
            };
            let trig = if check {
                should_replan(&path, k, &grid, &scan_ctx, since_refresh, &mut budget)
            } else {
                None
            };
            if check {
                since_refresh = 0.0;
            }
            if let Some(trigger) = trig.filter(|t| t.is_violation()) {
                if t_frame > t_k {
                    // split the current edge at the present configuration
                    path.nodes.insert(k + 1, PathNode::waypoint(q));
                    path.reindex();
                    k += 1;
                    t_k = t_frame;
                }
                let mut budget = Budget::new(params.clock, params.budget_ms);
                let out = replan(&path, k, &grid, &ctx, Some(trigger), &mut cache, &mut budget)?;
                j_dev += out.report.replaced.iter().map(|(_, d)| d).sum::<f64>();
                degraded |= out.report.status == ReplanStatus::Degraded;
                settled = matches!(out.report.status, ReplanStatus::Dirty | ReplanStatus::Degraded).then(|| (grid.version(), k));
                log::debug!("t={t_frame:.2} replan {:?} -> {:?}", trigger, out.report.status);
                events.push(ReplanEvent {
                    t: t_frame,
                    exec_node: k,
                    trigger,
                    report: out.report,
                });
                path = out.path;
                q = path.nodes[k].config;
            }
        }
        arrived = false;

        let occluded = occ(&q, &grid, &scenario.camera);
        let mut new_covered = Vec::new();
        for id in visible_elements(&q, &scenario.surface, &grid, &scenario.camera) {
            if !seen.contains(id) {
                seen.insert(id);
                first_seen[id] = Some(t_frame);
                new_covered.push(id);
            }
        }
        frames.push(Frame {
            t: t_frame,
            config: q,
            occluded,
            new_covered,
        });
        if at_end {
            break;
        }
        if t_frame > watchdog {
            timeout = true;
            finished_at = Some(t_frame);
            break;
        }
        since_refresh += dt;
        frame_idx += 1;
    }

    let ft = finished_at.unwrap_or(0.0);
    let cr = 100.0 * seen.ratio();
    let or = 100.0 * frames.iter().filter(|f| f.occluded).count() as f64 / frames.len() as f64;
    let cls: Vec<f64> = events.iter().map(|e| e.report.latency_ms).collect();
    let (cl_mean, cl_max) = if cls.is_empty() {
        (0.0, 0.0)
    } else {
        (cls.iter().sum::<f64>() / cls.len() as f64, cls.iter().cloned().fold(0.0, f64::max))
    };
    let exec_vps: Vec<Vec3> = path.viewpoint_indices().iter().map(|&i| path.nodes[i].config.p).collect();
    let nom_vps: Vec<Vec3> = scenario.nominal.viewpoint_indices().iter().map(|&i| scenario.nominal.nodes[i].config.p).collect();
    let d_set = if exec_vps.is_empty() { 0.0 } else { chamfer(&exec_vps, &nom_vps)? };
    let status = if timeout {
        RunStatus::Timeout
    } else if degraded {
        RunStatus::Degraded
    } else {
        RunStatus::Ok
    };
    let report = RunReport {
        mode,
        seed: scenario.seed,
        status,
        ft,
        cr,
        or,
        vae: if ft > 0.0 { vae(cr, or, ft) } else { 0.0 },
        cl_mean,
        cl_max,
        d_set,
        j_dev,
        nominal_ft,
        frames: frames.len(),
        or_scope: "whole_flight".into(),
        occlusion_trace: frames.iter().map(|f| f.occluded).collect(),
        first_seen,
        replans: events,
    };
    Ok(RunOutput {
        report,
        frames,
        final_path: path,
    })
}

/// Trace as JSON lines: one record per frame, then one per replan event.
pub fn trace_jsonl(out: &RunOutput) -> String {
    let mut s = String::new();
    for f in &out.frames {
        let v = serde_json::json!({ "type": "frame", "frame": f });
        s.push_str(&v.to_string());
        s.push('\n');
    }
    for e in &out.report.replans {
        let v = serde_json::json!({ "type": "replan", "event": e });
        s.push_str(&v.to_string());
        s.push('\n');
    }
    s
}

/// Plot data: `t,x,y,z,theta,psi,occluded` with angles in degrees.
pub fn frames_csv(frames: &[Frame]) -> String {
    let mut s = String::from("t,x,y,z,theta,psi,occluded\n");
    for f in frames {
        let c = &f.config;
        s.push_str(&format!(
            "{:.3},{:.4},{:.4},{:.4},{:.3},{:.3},{}\n",
            f.t,
            c.p.x,
            c.p.y,
            c.p.z,
            c.pitch.to_degrees(),
            c.yaw.to_degrees(),
            u8::from(f.occluded)
        ));
    }
    s
}
