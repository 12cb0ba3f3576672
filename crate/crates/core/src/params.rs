//! Planner configuration.

use serde::{Deserialize, Serialize};

use crate::clock::ClockMode;
use crate::error::{Error, Result};

/// Tunable parameters for the replanning pipeline and the simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    /// UAV radius / safety clearance (m).
    pub d_min: f64,
    /// Displacement penalty for replacement selection and completion.
    pub lambda_d: f64,
    /// Direction template pitch step (deg).
    pub template_dtheta_deg: f64,
    /// Direction template yaw step (deg).
    pub template_dpsi_deg: f64,
    /// Bisection iterations per axis.
    pub n_bis: usize,
    /// Attitude search bound when nothing constrains it (deg).
    pub eta_max_deg: f64,
    /// Lattice step for the connector search (m).
    pub step: f64,
    pub lambda_heu: f64,
    /// Visibility cache quantization (deg).
    pub cache_dtheta_deg: f64,
    pub cache_dpsi_deg: f64,
    /// Inflation of the start/goal box that bounds the connector search (m).
    pub search_margin: f64,
    /// Receding horizon (m).
    pub horizon: f64,
    /// Per-call replanning budget (ms).
    pub budget_ms: f64,
    /// Periodic refresh interval (s of simulated time).
    pub refresh_s: f64,
    /// Frame sampling rate (Hz).
    pub frame_rate: f64,
    /// Watchdog as a multiple of the nominal flight time.
    pub watchdog_factor: f64,
    pub clock: ClockMode,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            d_min: 0.2,
            lambda_d: 5.0,
            template_dtheta_deg: 15.0,
            template_dpsi_deg: 15.0,
            n_bis: 10,
            eta_max_deg: 30.0,
            step: 0.1,
            lambda_heu: 10.0,
            cache_dtheta_deg: 5.0,
            cache_dpsi_deg: 5.0,
            search_margin: 3.0,
            horizon: 10.0,
            budget_ms: 50.0,
            refresh_s: 1.0,
            frame_rate: 10.0,
            watchdog_factor: 10.0,
            clock: ClockMode::Virtual,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, f: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("planner.{f}"), "must be positive"))
            }
        };
        let nonneg = |v: f64, f: &str| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("planner.{f}"), "must be non-negative"))
            }
        };
        nonneg(self.d_min, "d_min")?;
        nonneg(self.lambda_d, "lambda_d")?;
        pos(self.template_dtheta_deg, "template_dtheta_deg")?;
        pos(self.template_dpsi_deg, "template_dpsi_deg")?;
        nonneg(self.eta_max_deg, "eta_max_deg")?;
        pos(self.step, "step")?;
        if !(self.lambda_heu >= 1.0) {
            return Err(Error::invalid("planner.lambda_heu", "must be >= 1"));
        }
        pos(self.cache_dtheta_deg, "cache_dtheta_deg")?;
        pos(self.cache_dpsi_deg, "cache_dpsi_deg")?;
        nonneg(self.search_margin, "search_margin")?;
        nonneg(self.horizon, "horizon")?;
        nonneg(self.budget_ms, "budget_ms")?;
        pos(self.refresh_s, "refresh_s")?;
        pos(self.frame_rate, "frame_rate")?;
        pos(self.watchdog_factor, "watchdog_factor")?;
        Ok(())
    }
}
