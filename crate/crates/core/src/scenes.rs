//! Built-in desk scenes, addressable as `builtin:<name>`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{CameraConfig, Vec3};
use crate::path::NodeKind;
use crate::vis::occ;
use crate::world::{BoxDoc, CameraDoc, LimitsDoc, NodeDoc, ObstacleDoc, Scenario, ScenarioFile, ShapeDoc, TriggerDoc};

pub const NAMES: [&str; 4] = ["wall", "open-wall", "corridor", "pillars"];

fn bx(min: [f64; 3], max: [f64; 3]) -> BoxDoc {
    BoxDoc { min, max }
}

fn range(r: f64) -> TriggerDoc {
    TriggerDoc {
        kind: "range".into(),
        param: Some(serde_json::json!(r)),
    }
}

fn vp(x: f64, y: f64, z: f64, psi: f64) -> NodeDoc {
    NodeDoc {
        p: [x, y, z],
        theta_deg: 0.0,
        psi_deg: psi,
        kind: NodeKind::Viewpoint,
    }
}

fn base(resolution: f64, min: [f64; 3], max: [f64; 3], target: Vec<BoxDoc>, nominal: Vec<NodeDoc>) -> ScenarioFile {
    ScenarioFile {
        resolution,
        bounds: crate::world::BoundsDoc { min, max },
        target: ShapeDoc {
            boxes: target,
            voxel_list: Vec::new(),
        },
        obstacles: Vec::new(),
        nominal_path: nominal,
        camera: CameraDoc {
            alpha_h_deg: 80.0,
            alpha_v_deg: 65.0,
            r_max: 7.0,
        },
        limits: LimitsDoc {
            v_max: 1.0,
            omega_max_deg: 20.0,
        },
        lidar_range: 15.0,
        seed: 0,
    }
}

/// 20 m wall scanned from a lane 4 m in front of it; waist-high crates stand
/// 1 m in front of the lane, revealed within 8 m.
pub fn wall_doc(with_pillars: bool) -> ScenarioFile {
    let nominal = (0..8).map(|i| vp(1.0 + 2.5 * i as f64, 2.0, 1.5, 90.0)).collect();
    let mut doc = base(0.25, [-3.0, -1.0, 0.0], [23.0, 9.0, 4.5], vec![bx([0.0, 6.0, 0.0], [20.0, 6.25, 3.0])], nominal);
    if with_pillars {
        doc.obstacles = [3.0, 7.0, 11.0, 15.0, 19.0]
            .iter()
            .enumerate()
            .map(|(i, &x)| ObstacleDoc {
                id: format!("crate{i}"),
                boxes: vec![bx([x - 0.25, 2.75, 0.0], [x + 0.25, 3.25, 1.25])],
                voxel_list: Vec::new(),
                trigger: range(8.0),
                jitter: Some(0.5),
            })
            .collect();
    }
    doc
}

/// 20 m corridor whose side walls are the target, with waist-high boxes
/// protruding from alternating walls every 3 m.
pub fn corridor_doc() -> ScenarioFile {
    let nominal = (0..5).map(|i| vp(2.0 + 4.0 * i as f64, 2.0, 1.6, if i % 2 == 0 { -90.0 } else { 90.0 })).collect();
    let mut doc = base(
        0.4,
        [0.0, 0.0, 0.0],
        [20.0, 4.0, 3.2],
        vec![bx([0.0, 0.0, 0.0], [20.0, 0.4, 3.2]), bx([0.0, 3.6, 0.0], [20.0, 4.0, 3.2])],
        nominal,
    );
    doc.obstacles = (0..6)
        .map(|i| {
            let x = 1.5 + 3.0 * i as f64;
            let (y0, y1) = if i % 2 == 0 { (0.4, 1.2) } else { (2.8, 3.6) };
            ObstacleDoc {
                id: format!("box{i}"),
                boxes: vec![bx([x, y0, 0.0], [x + 0.8, y1, 1.2])],
                voxel_list: Vec::new(),
                trigger: TriggerDoc {
                    kind: "always".into(),
                    param: None,
                },
                jitter: None,
            }
        })
        .collect();
    doc
}

/// 15 x 15 m field of scattered pillars in front of a target wall on its
/// far side.
pub fn pillars_doc() -> ScenarioFile {
    let nominal = (0..5).map(|i| vp(1.5 + 3.0 * i as f64, 9.0, 1.5, 90.0)).collect();
    let mut doc = base(0.25, [0.0, 0.0, 0.0], [15.0, 15.0, 4.0], vec![bx([0.0, 14.5, 0.0], [15.0, 15.0, 3.0])], nominal);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut placed: Vec<(f64, f64)> = Vec::new();
    while placed.len() < 12 {
        let x = rng.gen_range(1.0..14.0);
        let y = rng.gen_range(1.0..12.5);
        if placed.iter().any(|&(a, b)| (a - x).hypot(b - y) < 2.5) {
            continue;
        }
        placed.push((x, y));
    }
    doc.obstacles = placed
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let h = 1.5 + 1.5 * (i % 3) as f64 / 2.0;
            ObstacleDoc {
                id: format!("pillar{i}"),
                boxes: vec![bx([x - 0.25, y - 0.25, 0.0], [x + 0.25, y + 0.25, h])],
                voxel_list: Vec::new(),
                trigger: TriggerDoc {
                    kind: "always".into(),
                    param: None,
                },
                jitter: None,
            }
        })
        .collect();
    doc
}

pub fn builtin_doc(name: &str) -> Result<ScenarioFile> {
    Ok(match name {
        "wall" => wall_doc(true),
        "open-wall" => wall_doc(false),
        "corridor" => corridor_doc(),
        "pillars" => pillars_doc(),
        _ => return Err(Error::invalid("scenario", format!("unknown builtin `{name}` (known: {})", NAMES.join(", ")))),
    })
}

pub fn builtin(name: &str) -> Result<Scenario> {
    Scenario::from_doc(builtin_doc(name)?)
}

/// Seeded start/goal pairs for connector benchmarks: clear, clean
/// configurations at least `min_sep` apart, looking along one of the four
/// horizontal axes.
pub fn connector_pairs(scenario: &Scenario, n: usize, min_sep: f64, d_min: f64, seed: u64) -> Vec<(CameraConfig, CameraConfig)> {
    let grid = scenario.ground_truth_grid();
    let b = grid.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng| loop {
        let p = Vec3::new(
            rng.gen_range(b.min.x + 0.5..b.max.x - 0.5),
            rng.gen_range(b.min.y + 0.5..b.max.y - 0.5),
            rng.gen_range(1.0..(b.max.z - 0.8).max(1.2)),
        );
        let yaw = (rng.gen_range(0..4) as f64 * 90.0 - 90.0).to_radians();
        let q = CameraConfig::new(p, 0.0, yaw);
        if grid.is_clear(&q.p, d_min) && !occ(&q, &grid, &scenario.camera) {
            return q;
        }
    };
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a = sample(&mut rng);
        let g = sample(&mut rng);
        if (a.p - g.p).norm() >= min_sep {
            out.push((a, g));
        }
    }
    out
}
