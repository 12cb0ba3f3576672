//! Time budgets measured either on the wall clock or on a deterministic
//! work meter.
//!
//! The virtual clock converts counted operations into milliseconds with fixed
//! unit costs, so budget decisions and reported latencies are reproducible
//! bit for bit across runs and machines.

use std::time::Instant;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    Wall,
    #[default]
    Virtual,
}

/// Operation counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Work {
    pub occ_evals: u64,
    pub raycasts: u64,
    pub expansions: u64,
    pub clearance_checks: u64,
}

impl Work {
    // Unit costs in microseconds, measured on a desktop-class core for
    // desk-scale scenes (0.25 m voxels, a few thousand occupied voxels).
    const OCC_US: f64 = 2.0;
    const RAY_US: f64 = 0.3;
    const EXPAND_US: f64 = 0.5;
    const CLEAR_US: f64 = 0.2;

    pub fn virtual_ms(&self) -> f64 {
        (self.occ_evals as f64 * Self::OCC_US
            + self.raycasts as f64 * Self::RAY_US
            + self.expansions as f64 * Self::EXPAND_US
            + self.clearance_checks as f64 * Self::CLEAR_US)
            / 1000.0
    }

    pub fn add(&mut self, o: &Work) {
        self.occ_evals += o.occ_evals;
        self.raycasts += o.raycasts;
        self.expansions += o.expansions;
        self.clearance_checks += o.clearance_checks;
    }
}

/// A running time budget.
#[derive(Clone, Debug)]
pub struct Budget {
    mode: ClockMode,
    start: Instant,
    limit_ms: f64,
    pub work: Work,
}

impl Budget {
    pub fn new(mode: ClockMode, limit_ms: f64) -> Self {
        Self {
            mode,
            start: Instant::now(),
            limit_ms,
            work: Work::default(),
        }
    }

    pub fn unlimited(mode: ClockMode) -> Self {
        Self::new(mode, f64::INFINITY)
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn limit_ms(&self) -> f64 {
        self.limit_ms
    }

    pub fn elapsed_ms(&self) -> f64 {
        match self.mode {
            ClockMode::Wall => self.start.elapsed().as_secs_f64() * 1000.0,
            ClockMode::Virtual => self.work.virtual_ms(),
        }
    }

    pub fn remaining_ms(&self) -> f64 {
        (self.limit_ms - self.elapsed_ms()).max(0.0)
    }

    pub fn expired(&self) -> bool {
        self.elapsed_ms() >= self.limit_ms
    }

    /// Sub-budget ending at `elapsed + ms`, clipped to this budget's limit.
    /// Work charged to the child must be merged back with [`absorb`](Self::absorb).
    pub fn child(&self, ms: f64) -> Budget {
        let limit = (self.elapsed_ms() + ms).min(self.limit_ms);
        Budget {
            mode: self.mode,
            start: self.start,
            limit_ms: limit,
            work: self.work,
        }
    }

    /// Takes over the work counted by a child created from this budget.
    pub fn absorb(&mut self, child: &Budget) {
        self.work = child.work;
    }
}
