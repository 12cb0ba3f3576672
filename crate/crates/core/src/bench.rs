//! Connector benchmark: visibility-constrained search against the
//! clearance-only baseline on seeded start/goal pairs.

use std::time::Instant;

use serde::Serialize;

use crate::clock::Budget;
use crate::params::PlannerParams;
use crate::phiastar::{search_with, validate_connector, SearchMode, SearchParams, VisCache};
use crate::scenes::connector_pairs;
use crate::vis::occ;
use crate::world::Scenario;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairResult {
    pub vis_ok: bool,
    pub vis_len: Option<f64>,
    pub clr_len: Option<f64>,
    pub vis_nodes: usize,
    pub vis_occluded: usize,
    pub clr_nodes: usize,
    pub clr_occluded: usize,
    pub cold_occ_evals: u64,
    pub warm_occ_evals: u64,
    pub vis_ms: f64,
    pub clr_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConnectorBench {
    pub pairs: Vec<PairResult>,
    /// Share of connector nodes whose frustum holds an obstacle (percent).
    pub vis_or: f64,
    pub clr_or: f64,
    /// Mean per-pair length ratio over pairs both searches solved.
    pub len_ratio: f64,
    /// Warm-cache occ evaluations relative to the cold run.
    pub warm_ratio: f64,
    pub all_valid: bool,
    pub wall_ms: f64,
}

/// Runs both searches on `n` seeded pairs of the fully revealed scene, with
/// no time limit, then repeats each visibility search on its warm cache.
pub fn connector_bench(scenario: &Scenario, params: &PlannerParams, n: usize, seed: u64) -> ConnectorBench {
    let t0 = Instant::now();
    let grid = scenario.ground_truth_grid();
    let camera = &scenario.camera;
    let sp = SearchParams::from_planner(params);
    let mut pairs = Vec::with_capacity(n);
    let mut all_valid = true;
    for (a, b) in connector_pairs(scenario, n, 4.0, params.d_min, seed) {
        let count_occ = |cs: &[crate::geom::CameraConfig]| cs.iter().filter(|q| occ(q, &grid, camera)).count();

        let mut cache = VisCache::new();
        let t = Instant::now();
        let mut budget = Budget::unlimited(params.clock);
        let cold = search_with(&a, &b, &grid, camera, &sp, SearchMode::Visibility, Some(&mut cache), &mut budget);
        let vis_ms = t.elapsed().as_secs_f64() * 1000.0;
        let mut budget = Budget::unlimited(params.clock);
        let warm = search_with(&a, &b, &grid, camera, &sp, SearchMode::Visibility, Some(&mut cache), &mut budget);

        let t = Instant::now();
        let mut budget = Budget::unlimited(params.clock);
        let clr = search_with(&a, &b, &grid, camera, &sp, SearchMode::ClearanceOnly, None, &mut budget);
        let clr_ms = t.elapsed().as_secs_f64() * 1000.0;

        let (vis_nodes, vis_occluded) = match &cold.result {
            Ok(c) => {
                all_valid &= validate_connector(c, &a, &b, &grid, camera, &sp, true);
                (c.configs.len(), count_occ(&c.configs))
            }
            Err(_) => (0, 0),
        };
        let (clr_nodes, clr_occluded) = match &clr.result {
            Ok(c) => (c.configs.len(), count_occ(&c.configs)),
            Err(_) => (0, 0),
        };
        pairs.push(PairResult {
            vis_ok: cold.result.is_ok(),
            vis_len: cold.result.as_ref().ok().map(|c| c.length),
            clr_len: clr.result.as_ref().ok().map(|c| c.length),
            vis_nodes,
            vis_occluded,
            clr_nodes,
            clr_occluded,
            cold_occ_evals: cold.stats.occ_evals,
            warm_occ_evals: warm.stats.occ_evals,
            vis_ms,
            clr_ms,
        });
    }
    let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    let sum = |f: fn(&PairResult) -> usize| pairs.iter().map(f).sum::<usize>();
    let ratios: Vec<f64> = pairs
        .iter()
        .filter_map(|p| Some(p.vis_len? / p.clr_len?))
        .collect();
    let cold: u64 = pairs.iter().map(|p| p.cold_occ_evals).sum();
    let warm: u64 = pairs.iter().map(|p| p.warm_occ_evals).sum();
    ConnectorBench {
        vis_or: pct(sum(|p| p.vis_occluded), sum(|p| p.vis_nodes)),
        clr_or: pct(sum(|p| p.clr_occluded), sum(|p| p.clr_nodes)),
        len_ratio: if ratios.is_empty() { f64::NAN } else { ratios.iter().sum::<f64>() / ratios.len() as f64 },
        warm_ratio: if cold == 0 { 0.0 } else { warm as f64 / cold as f64 },
        all_valid,
        wall_ms: t0.elapsed().as_secs_f64() * 1000.0,
        pairs,
    }
}
