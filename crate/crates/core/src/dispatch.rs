//! System-wide net-load minimization.
//!
//! The objective `sum_t |sum_i G - sum_i E_n|` is separable by hour and each
//! hour only depends on the total expected demand, so the optimum clamps the
//! total generation into the feasible demand range and scales every bus's
//! schedule by the same factor. Storage then absorbs what is left, and line
//! flows are reported for the final injections.

use serde::Serialize;
use thiserror::Error;

use crate::bess::{self, BessError, BessSchedule};
use crate::network::{self, FeederTree, FlowResult, NetworkError};
use crate::scenario::{Matrix, ScenarioConfig};

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("pro-rata allocation undefined at hour {hour}: total schedule {total}")]
    Degenerate { hour: usize, total: f64 },
    #[error(transparent)]
    Bess(#[from] BessError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchPlan {
    pub expected_load: Matrix,
    /// Per-hour scaling factor applied to every bus's schedule.
    pub scale: Vec<f64>,
    pub net_load: Vec<f64>,
    pub residual_after_bess: Vec<f64>,
    pub bess_schedule: BessSchedule,
    pub flows: FlowResult,
}

/// Optimal total expected demand for one hour and the scale factor that
/// realizes it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourSolution {
    pub total: f64,
    pub scale: f64,
}

/// Clamps `generation` into `[(1 - delta) sched, (1 + delta) sched]`.
pub fn solve_hour(total_generation: f64, total_scheduled: f64, delta: f64, hour: usize) -> Result<HourSolution, DispatchError> {
    if !total_scheduled.is_finite() || total_scheduled < 0.0 {
        return Err(DispatchError::Degenerate { hour, total: total_scheduled });
    }
    if total_scheduled == 0.0 {
        return Ok(HourSolution { total: 0.0, scale: 1.0 });
    }
    let lo = (1.0 - delta) * total_scheduled;
    let hi = (1.0 + delta) * total_scheduled;
    let total = total_generation.clamp(lo, hi);
    let scale = (total / total_scheduled).clamp(1.0 - delta, 1.0 + delta);
    Ok(HourSolution { total, scale })
}

/// Solves the lower level for the whole horizon.
pub fn solve_lower(config: &ScenarioConfig) -> Result<DispatchPlan, DispatchError> {
    let (n, h) = (config.num_buses(), config.horizon());
    let mut expected_load = vec![vec![0.0; h]; n];
    let mut scale = vec![1.0; h];
    let mut net_load = vec![0.0; h];
    for t in 0..h {
        let sol = solve_hour(config.total_generation(t), config.total_scheduled(t), config.delta, t)?;
        scale[t] = sol.scale;
        for bus in 0..n {
            expected_load[bus][t] = sol.scale * config.scheduled_load[bus][t];
        }
        let demand: f64 = expected_load.iter().map(|row| row[t]).sum();
        net_load[t] = config.total_generation(t) - demand;
    }

    let bess_schedule = bess::dispatch_residual(&config.bess_specs, &net_load, config.timestep_hours)?;
    let residual_after_bess = (0..h).map(|t| net_load[t] - bess_schedule.total_net(t)).collect();

    let tree = FeederTree::from_edges(n, &config.topology)?;
    let injection = nodal_injection(config, &expected_load, &bess_schedule);
    let flows = network::compute_flows(&tree, &injection)?;

    Ok(DispatchPlan {
        expected_load,
        scale,
        net_load,
        residual_after_bess,
        bess_schedule,
        flows,
    })
}

/// Net injection `G - E_n - E_bess` per bus and hour.
pub fn nodal_injection(config: &ScenarioConfig, expected_load: &Matrix, bess: &BessSchedule) -> Matrix {
    let mut inj: Matrix = config
        .generation
        .iter()
        .zip(expected_load)
        .map(|(g, e)| g.iter().zip(e).map(|(g, e)| g - e).collect())
        .collect();
    for (unit, spec) in config.bess_specs.iter().enumerate() {
        for (t, net) in bess.net[unit].iter().enumerate() {
            inj[spec.bus.0][t] -= net;
        }
    }
    inj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::presets::single_bus;

    #[test]
    fn target_inside_box() {
        let plan = solve_lower(&single_bus(&[1.0], &[1.1])).unwrap();
        assert!((plan.expected_load[0][0] - 1.1).abs() < 1e-15);
        assert!(plan.net_load[0].abs() < 1e-15);
    }

    #[test]
    fn target_clamped_to_box() {
        let plan = solve_lower(&single_bus(&[1.0], &[1.5])).unwrap();
        assert!((plan.expected_load[0][0] - 1.2).abs() < 1e-15);
        assert!((plan.net_load[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn all_zero_schedule_hour_keeps_zero_demand() {
        let plan = solve_lower(&single_bus(&[0.0, 1.0], &[0.4, 0.0])).unwrap();
        assert_eq!(plan.expected_load[0][0], 0.0);
        assert_eq!(plan.net_load[0], 0.4);
        assert!((plan.expected_load[0][1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn negative_total_is_degenerate() {
        assert!(matches!(solve_hour(1.0, -1.0, 0.2, 4), Err(DispatchError::Degenerate { hour: 4, .. })));
    }

    #[test]
    fn zero_delta_keeps_schedule() {
        let mut cfg = single_bus(&[0.7, 1.3], &[2.0, 0.0]);
        cfg.delta = 0.0;
        let plan = solve_lower(&cfg).unwrap();
        assert_eq!(plan.expected_load, cfg.scheduled_load);
    }
}
