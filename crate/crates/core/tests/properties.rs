use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use visia::clock::{Budget, ClockMode};
use visia::geom::{bearings, make_frustum, CameraConfig, FrustumParams, Vec3};
use visia::oracle::connector_case;
use visia::params::PlannerParams;
use visia::path::{PathNode, ScanPath};
use visia::phiastar::{lattice_point, search_with, validate_connector, SearchMode, SearchParams, VisCache};
use visia::repair::{build_template, repair_viewpoint, RepairContext};
use visia::replan::{splice, Mode, ReplanWindow};
use visia::scenes::wall_doc;
use visia::sim::{self, vae};
use visia::tour::{is_feasible, reorder, TourProblem};
use visia::vis::{qualify, visible_subset};
use visia::world::{reveal, Aabb, BoxDoc, CellState, LabelFilter, ObstacleDoc, Scenario, TriggerDoc, VoxelGrid};

fn cam() -> FrustumParams {
    FrustumParams::from_degrees(80.0, 65.0, 7.0).unwrap()
}

fn config() -> impl Strategy<Value = CameraConfig> {
    (-3.0..3.0f64, -3.0..3.0f64, 0.0..3.0f64, -1.39..0.52f64, -3.1..3.1f64)
        .prop_map(|(x, y, z, pitch, yaw)| CameraConfig::new(Vec3::new(x, y, z), pitch, yaw))
}

fn point() -> impl Strategy<Value = Vec3> {
    (-8.0..8.0f64, -8.0..8.0f64, -8.0..8.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

/// 6 x 6 x 3 m grid at 0.25 m with a few random obstacle boxes.
fn random_grid(seed: u64) -> VoxelGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = VoxelGrid::new(Aabb::new(Vec3::new(-3.0, -3.0, 0.0), Vec3::new(3.0, 3.0, 3.0)), 0.25).unwrap();
    for _ in 0..rng.gen_range(1..5) {
        let lo = Vec3::new(rng.gen_range(-3.0..2.5), rng.gen_range(-3.0..2.5), rng.gen_range(0.0..2.5));
        let size = Vec3::new(rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.5));
        let mut x = lo.x;
        while x < lo.x + size.x {
            let mut y = lo.y;
            while y < lo.y + size.y {
                let mut z = lo.z;
                while z < lo.z + size.z {
                    if let Some(ix) = g.index_of(&Vec3::new(x, y, z)) {
                        g.set(ix, CellState::Obstacle).unwrap();
                    }
                    z += 0.25;
                }
                y += 0.25;
            }
            x += 0.25;
        }
    }
    g
}

/// Wall scene with random always-visible boxes between the lane and the wall.
fn cluttered_wall(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut doc = wall_doc(false);
    doc.obstacles = (0..rng.gen_range(1..4))
        .map(|i| {
            let x = rng.gen_range(0.0..19.0);
            let y = rng.gen_range(2.6..5.0);
            ObstacleDoc {
                id: format!("b{i}"),
                boxes: vec![BoxDoc { min: [x, y, 0.0], max: [x + 0.5, y + 0.5, rng.gen_range(0.5..3.0)] }],
                voxel_list: Vec::new(),
                trigger: TriggerDoc { kind: "always".into(), param: None },
                jitter: None,
            }
        })
        .collect();
    Scenario::from_doc(doc).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mirror_cone_excluded(q in config(), x in point()) {
        let hs = make_frustum(&q, &cam());
        if q.to_camera(&x).x < 0.0 {
            prop_assert!(!hs.contains(&x));
        }
    }

    #[test]
    fn bearings_agree_with_half_spaces(q in config(), x in point()) {
        let p = cam();
        let hs = make_frustum(&q, &p);
        let c = q.to_camera(&x);
        prop_assume!(hs.planes.iter().all(|pl| pl.eval(&x).abs() > 1e-9));
        prop_assume!(c.x.abs() > 1e-9);
        let (bh, bv) = bearings(&q, &x).unwrap();
        let by_angles = c.x > 0.0 && c.x <= p.r_max && bh.abs() <= p.alpha_h / 2.0 && bv.abs() <= p.alpha_v / 2.0;
        prop_assert_eq!(hs.contains(&x), by_angles);
    }

    #[test]
    fn tour_orders_feasible_and_deterministic(seed in any::<u64>(), n in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n).map(|_| Vec3::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), rng.gen_range(0.0..3.0))).collect();
        let anchors: Vec<usize> = (1..n).filter(|_| rng.gen_bool(0.4)).collect();
        let end = if n > 2 && rng.gen_bool(0.3) { Some(n - 1) } else { None };
        let pr = TourProblem { points, anchors, start: 0, end };
        let s = reorder(&pr);
        prop_assert!(is_feasible(&s.order, &pr));
        prop_assert_eq!(s, reorder(&pr));
    }

    #[test]
    fn splice_keeps_outside_nodes(n in 3usize..12, a in 0usize..12, len in 0usize..6, extra in 0usize..4) {
        let i_s = a % (n - 1);
        let i_e = (i_s + len).min(n - 1);
        let nodes: Vec<PathNode> = (0..n).map(|i| PathNode::waypoint(CameraConfig::new(Vec3::new(i as f64, 0.0, 1.0), 0.0, 0.0))).collect();
        let path = ScanPath::new(nodes);
        let mut repaired = vec![path.nodes[i_s].clone()];
        for k in 0..extra {
            repaired.push(PathNode::waypoint(CameraConfig::new(Vec3::new(i_s as f64 + 0.1 * (k + 1) as f64, 1.0, 1.0), 0.0, 0.0)));
        }
        repaired.push(path.nodes[i_e].clone());
        let w = ReplanWindow { i_s, i_e };
        let out = splice(&path, w, &repaired, true).unwrap();
        prop_assert_eq!(out.len(), n - (i_e - i_s + 1) + repaired.len());
        for i in 0..i_s {
            prop_assert_eq!(&out.nodes[i].config, &path.nodes[i].config);
        }
        let tail = n - i_e - 1;
        for k in 0..tail {
            prop_assert_eq!(&out.nodes[out.len() - 1 - k].config, &path.nodes[n - 1 - k].config);
        }
    }

    #[test]
    fn vae_identity(cr in 0.0..100.0f64, or in 0.0..100.0f64, ft in 0.1..500.0f64) {
        let v = vae(cr, or, ft);
        prop_assert!((v * ft - cr * (100.0 - or)).abs() <= 1e-9 * (1.0 + cr * 100.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn frustum_query_matches_filter(seed in any::<u64>(), q in config()) {
        let g = random_grid(seed);
        let hs = make_frustum(&q, &cam());
        let mut fast = g.voxels_in_frustum(&hs, LabelFilter::Obstacle);
        let mut slow: Vec<Vec3> = g.occupied_centers(LabelFilter::Obstacle).into_iter().filter(|c| hs.contains(c)).collect();
        let key = |v: &Vec3| (v.x.to_bits(), v.y.to_bits(), v.z.to_bits());
        fast.sort_by_key(key);
        slow.sort_by_key(key);
        prop_assert_eq!(&fast, &slow);
        prop_assert_eq!(g.any_in_frustum(&hs, LabelFilter::Obstacle), !slow.is_empty());
        prop_assert_eq!(visia::vis::occ(&q, &g, &cam()), !slow.is_empty());
    }

    #[test]
    fn raycast_symmetric_when_unblocked(seed in any::<u64>(), a in (-2.9..2.9f64, -2.9..2.9f64, 0.1..2.9f64), b in (-2.9..2.9f64, -2.9..2.9f64, 0.1..2.9f64)) {
        let g = random_grid(seed);
        let (a, b) = (Vec3::new(a.0, a.1, a.2), Vec3::new(b.0, b.1, b.2));
        prop_assume!(!g.state_at(&a).is_occupied() && !g.state_at(&b).is_occupied());
        let ab = g.raycast(&a, &b).blocked;
        let ba = g.raycast(&b, &a).blocked;
        if !ab || !ba {
            prop_assert_eq!(ab, ba);
        }
    }

    #[test]
    fn qualification_only_lost_under_reveal(seed in any::<u64>(), vp in 0usize..8, extra in any::<u64>()) {
        let s = cluttered_wall(seed);
        let node = &s.nominal.nodes[vp];
        let intended = node.intended.as_ref().unwrap().elements.clone();
        let g = s.ground_truth_grid();
        let mut g2 = g.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(extra);
        for _ in 0..40 {
            let p = Vec3::new(rng.gen_range(0.0..20.0), rng.gen_range(2.5..5.5), rng.gen_range(0.0..3.0));
            if let Some(ix) = g2.index_of(&p) {
                if g2.state(ix) == CellState::Free {
                    g2.set(ix, CellState::Obstacle).unwrap();
                }
            }
        }
        let before = qualify(&node.config, &intended, &s.surface, &g, &s.camera, 0.2);
        let after = qualify(&node.config, &intended, &s.surface, &g2, &s.camera, 0.2);
        if before.is_some() {
            prop_assert!(after.is_some());
        }
        let vis = visible_subset(&node.config, &intended, &s.surface, &g2);
        prop_assert!(vis.iter().all(|e| intended.contains(e)));
    }

    #[test]
    fn reveal_is_monotone(seed in 0u64..50) {
        let s = visia::scenes::builtin("wall").unwrap().with_seed(seed).unwrap();
        let mut g = s.base_grid.clone();
        let mut prev = g.occupied_centers(LabelFilter::Any);
        for i in 0..=20 {
            reveal(&mut g, &Vec3::new(i as f64, 2.0, 1.5), &s);
            let cur = g.occupied_centers(LabelFilter::Any);
            prop_assert!(cur.len() >= prev.len());
            for c in &prev {
                prop_assert!(g.state_at(c).is_occupied());
            }
            prev = cur;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn candidates_certified(seed in any::<u64>(), vp in 0usize..8) {
        let s = cluttered_wall(seed);
        let g = s.ground_truth_grid();
        let params = PlannerParams::default();
        let tpl = build_template(&s.camera, 15f64.to_radians(), 15f64.to_radians()).unwrap();
        let ctx = RepairContext { surface: &s.surface, grid: &g, camera: &s.camera, params: &params, template: &tpl };
        let mut b = Budget::unlimited(ClockMode::Virtual);
        let pool = repair_viewpoint(vp, &s.nominal.nodes[vp], &ctx, &mut b).unwrap();
        for c in &pool {
            prop_assert!(!visia::vis::occ(&c.config, &g, &s.camera));
            prop_assert!(g.is_clear(&c.config.p, params.d_min));
            prop_assert!(c.s_star >= c.s_lb - 1e-12);
            prop_assert!(c.cov.count() > 0);
        }
    }

    #[test]
    fn connectors_revalidate_and_cache_is_sound(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = connector_case(&mut rng);
        let mut cache = VisCache::new();
        let mut b1 = Budget::unlimited(ClockMode::Virtual);
        let with = search_with(&case.a, &case.b, &case.grid, &case.camera, &case.params, SearchMode::Visibility, Some(&mut cache), &mut b1);
        let mut b2 = Budget::unlimited(ClockMode::Virtual);
        let without = search_with(&case.a, &case.b, &case.grid, &case.camera, &case.params, SearchMode::Visibility, None, &mut b2);
        prop_assert_eq!(&with.result, &without.result);
        if let Ok(c) = &with.result {
            prop_assert!(validate_connector(c, &case.a, &case.b, &case.grid, &case.camera, &case.params, true));
        }
    }

    #[test]
    fn unit_heuristic_finds_lattice_shortest_path(d in (-12i64..12, -12i64..12, -8i64..8)) {
        let g = VoxelGrid::new(Aabb::new(Vec3::repeat(-2.0), Vec3::repeat(2.0)), 0.1).unwrap();
        let params = SearchParams { lambda_heu: 1.0, d_min: 0.0, budget_ms: 1e12, ..SearchParams::default() };
        let a = CameraConfig::new(Vec3::zeros(), 0.0, 0.0);
        let b = CameraConfig::new(lattice_point([d.0, d.1, d.2], params.step), 0.0, 0.0);
        let mut budget = Budget::unlimited(ClockMode::Virtual);
        let out = search_with(&a, &b, &g, &cam(), &params, SearchMode::ClearanceOnly, None, &mut budget);
        let mut s = [d.0.abs() as f64, d.1.abs() as f64, d.2.abs() as f64];
        s.sort_by(|x, y| y.total_cmp(x));
        let want = params.step * (3f64.sqrt() * s[2] + 2f64.sqrt() * (s[1] - s[2]) + (s[0] - s[1]));
        prop_assert!((out.result.unwrap().length - want).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn run_metrics_consistent(seed in 0u64..1000) {
        let s = visia::scenes::builtin("wall").unwrap().with_seed(seed).unwrap();
        let out = sim::run(&s, &PlannerParams::default(), Mode::VisibilityAware).unwrap();
        let r = &out.report;
        prop_assert!((r.vae - vae(r.cr, r.or, r.ft)).abs() <= 1e-6 * r.vae.abs().max(1.0));
        let mut seen = std::collections::HashSet::new();
        for f in &out.frames {
            for e in &f.new_covered {
                prop_assert!(seen.insert(*e));
            }
        }
        prop_assert!((100.0 * seen.len() as f64 / s.surface.len() as f64 - r.cr).abs() < 1e-9);
        let again = sim::run(&s, &PlannerParams::default(), Mode::VisibilityAware).unwrap();
        prop_assert_eq!(serde_json::to_string(&again.report).unwrap(), serde_json::to_string(r).unwrap());
    }

    #[test]
    fn modes_agree_without_obstacles(seed in 0u64..1000) {
        let s = visia::scenes::builtin("open-wall").unwrap().with_seed(seed).unwrap();
        let v = sim::run(&s, &PlannerParams::default(), Mode::VisibilityAware).unwrap().report;
        let mut c = sim::run(&s, &PlannerParams::default(), Mode::ClearanceOnly).unwrap().report;
        c.mode = v.mode;
        prop_assert_eq!(serde_json::to_string(&v).unwrap(), serde_json::to_string(&c).unwrap());
    }
}
