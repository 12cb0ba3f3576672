//! Scan path representation shared by the planner stages.

use serde::{Deserialize, Serialize};

use crate::geom::{CameraConfig, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Viewpoint,
    Waypoint,
}

/// Target elements a viewpoint is responsible for observing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntendedSubset {
    pub viewpoint: usize,
    pub elements: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathNode {
    pub config: CameraConfig,
    pub kind: NodeKind,
    /// Present on viewpoints only.
    pub intended: Option<IntendedSubset>,
}

impl PathNode {
    pub fn waypoint(config: CameraConfig) -> Self {
        Self {
            config,
            kind: NodeKind::Waypoint,
            intended: None,
        }
    }

    pub fn viewpoint(config: CameraConfig, elements: Vec<usize>) -> Self {
        Self {
            config,
            kind: NodeKind::Viewpoint,
            intended: Some(IntendedSubset {
                viewpoint: 0,
                elements,
            }),
        }
    }

    pub fn is_viewpoint(&self) -> bool {
        self.kind == NodeKind::Viewpoint
    }
}

/// Ordered viewpoints and waypoints.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanPath {
    pub nodes: Vec<PathNode>,
}

impl ScanPath {
    pub fn new(nodes: Vec<PathNode>) -> Self {
        let mut p = Self { nodes };
        p.reindex();
        p
    }

    /// Rewrites each intended subset's viewpoint index to its node index.
    pub fn reindex(&mut self) {
        for (i, n) in self.nodes.iter_mut().enumerate() {
            if let Some(s) = n.intended.as_mut() {
                s.viewpoint = i;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn viewpoint_indices(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_viewpoint())
            .collect()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.nodes.iter().map(|n| n.config.p).collect()
    }

    /// Euclidean length of the polyline between node indices `a..=b`.
    pub fn arc_length(&self, a: usize, b: usize) -> f64 {
        (a..b)
            .map(|i| (self.nodes[i + 1].config.p - self.nodes[i].config.p).norm())
            .sum()
    }
}
