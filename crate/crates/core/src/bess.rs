//! Battery storage dispatch against a residual net load.
//!
//! Sign conventions: `residual > 0` is surplus generation to absorb, and a
//! unit's `net = p_ch - p_dis` is its consumption.

use serde::Serialize;
use thiserror::Error;

use crate::scenario::{bess_spec_violations, BessSpec, Matrix};

/// Tolerance used when checking schedules.
pub const SCHEDULE_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum BessError {
    #[error("invalid spec for unit {unit}: {reason}")]
    Spec { unit: usize, reason: String },
    #[error("timestep must be positive, got {0}")]
    Timestep(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BessSchedule {
    pub p_ch: Matrix,
    pub p_dis: Matrix,
    /// `[unit][hour + 1]`, `soc[u][0]` is the initial state.
    pub soc: Matrix,
    pub net: Matrix,
}

impl BessSchedule {
    pub fn num_units(&self) -> usize {
        self.p_ch.len()
    }

    /// Total consumption of all units at `hour`.
    pub fn total_net(&self, hour: usize) -> f64 {
        self.net.iter().map(|row| row[hour]).sum()
    }
}

/// Splits `amount` across units proportionally to `weights`, never exceeding
/// a unit's `caps`; capacity left over by saturated units is redistributed.
fn water_fill(amount: f64, caps: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut alloc = vec![0.0; caps.len()];
    let mut active: Vec<usize> = (0..caps.len()).filter(|&u| caps[u] > 0.0 && weights[u] > 0.0).collect();
    let mut remaining = amount;
    while remaining > 0.0 && !active.is_empty() {
        let wsum: f64 = active.iter().map(|&u| weights[u]).sum();
        let saturated: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&u| remaining * weights[u] / wsum >= caps[u])
            .collect();
        if saturated.is_empty() {
            for &u in &active {
                alloc[u] = (remaining * weights[u] / wsum).min(caps[u]);
            }
            break;
        }
        for &u in &saturated {
            alloc[u] = caps[u];
            remaining -= caps[u];
        }
        active.retain(|u| !saturated.contains(u));
    }
    alloc
}

/// Greedy forward dispatch: each hour charges surplus or discharges deficit,
/// up to power and energy limits, split across units in proportion to their
/// power rating.
pub fn dispatch_residual(specs: &[BessSpec], residual: &[f64], dt: f64) -> Result<BessSchedule, BessError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(BessError::Timestep(dt));
    }
    for (unit, spec) in specs.iter().enumerate() {
        if let Some(reason) = bess_spec_violations(spec).into_iter().next() {
            return Err(BessError::Spec { unit, reason });
        }
    }
    let hours = residual.len();
    let units = specs.len();
    let mut sched = BessSchedule {
        p_ch: vec![vec![0.0; hours]; units],
        p_dis: vec![vec![0.0; hours]; units],
        soc: specs.iter().map(|s| {
            let mut v = vec![0.0; hours + 1];
            v[0] = s.soc_initial;
            v
        }).collect(),
        net: vec![vec![0.0; hours]; units],
    };

    for (t, &r) in residual.iter().enumerate() {
        if r > 0.0 {
            let caps: Vec<f64> = specs
                .iter()
                .enumerate()
                .map(|(u, s)| s.p_ch_max.min((s.soc_max - sched.soc[u][t]) / (s.eta * dt)).max(0.0))
                .collect();
            let weights: Vec<f64> = specs.iter().map(|s| s.p_ch_max).collect();
            for (u, p) in water_fill(r, &caps, &weights).into_iter().enumerate() {
                sched.p_ch[u][t] = p;
            }
        } else if r < 0.0 {
            let caps: Vec<f64> = specs
                .iter()
                .enumerate()
                .map(|(u, s)| s.p_dis_max.min((sched.soc[u][t] - s.soc_min) * s.eta / dt).max(0.0))
                .collect();
            let weights: Vec<f64> = specs.iter().map(|s| s.p_dis_max).collect();
            for (u, p) in water_fill(-r, &caps, &weights).into_iter().enumerate() {
                sched.p_dis[u][t] = p;
            }
        }
        for (u, s) in specs.iter().enumerate() {
            let (ch, dis) = (sched.p_ch[u][t], sched.p_dis[u][t]);
            sched.net[u][t] = ch - dis;
            sched.soc[u][t + 1] = sched.soc[u][t] + dt * (s.eta * ch - dis / s.eta);
        }
    }
    Ok(sched)
}

/// Lists every violated power, complementarity, SOC-bound and SOC-dynamics
/// constraint of `schedule`. Empty means the schedule is physically valid.
pub fn verify_schedule(specs: &[BessSpec], schedule: &BessSchedule, dt: f64) -> Vec<String> {
    let mut out = Vec::new();
    let units = specs.len();
    if schedule.p_ch.len() != units
        || schedule.p_dis.len() != units
        || schedule.soc.len() != units
        || schedule.net.len() != units
    {
        out.push(format!("schedule does not have {units} units"));
        return out;
    }
    for (u, s) in specs.iter().enumerate() {
        let hours = schedule.p_ch[u].len();
        if schedule.p_dis[u].len() != hours || schedule.net[u].len() != hours || schedule.soc[u].len() != hours + 1 {
            out.push(format!("inconsistent horizon for unit {u}"));
            continue;
        }
        if (schedule.soc[u][0] - s.soc_initial).abs() > SCHEDULE_TOL {
            out.push(format!("initial soc mismatch at unit {u}"));
        }
        for t in 0..hours {
            let (ch, dis) = (schedule.p_ch[u][t], schedule.p_dis[u][t]);
            if !(-SCHEDULE_TOL..=s.p_ch_max + SCHEDULE_TOL).contains(&ch) {
                out.push(format!("charge limit violated at unit {u} hour {t}"));
            }
            if !(-SCHEDULE_TOL..=s.p_dis_max + SCHEDULE_TOL).contains(&dis) {
                out.push(format!("discharge limit violated at unit {u} hour {t}"));
            }
            if ch.abs() > SCHEDULE_TOL && dis.abs() > SCHEDULE_TOL {
                out.push(format!("complementarity violated at unit {u} hour {t}"));
            }
            if (schedule.net[u][t] - (ch - dis)).abs() > SCHEDULE_TOL {
                out.push(format!("net power mismatch at unit {u} hour {t}"));
            }
            let expected = schedule.soc[u][t] + dt * (s.eta * ch - dis / s.eta);
            if (schedule.soc[u][t + 1] - expected).abs() > SCHEDULE_TOL {
                out.push(format!("soc dynamics violated at unit {u} hour {t}"));
            }
        }
        for (t, soc) in schedule.soc[u].iter().enumerate() {
            if *soc < s.soc_min - SCHEDULE_TOL || *soc > s.soc_max + SCHEDULE_TOL {
                out.push(format!("soc bound violated at unit {u} step {t}"));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::BusId;
    use proptest::prelude::*;

    fn unit(p: f64, soc_min: f64, soc_max: f64, soc0: f64, eta: f64) -> BessSpec {
        BessSpec {
            bus: BusId(0),
            p_ch_max: p,
            p_dis_max: p,
            soc_min,
            soc_max,
            soc_initial: soc0,
            eta,
        }
    }

    #[test]
    fn empty_battery_cannot_discharge() {
        let s = dispatch_residual(&[unit(1.5, 0.3, 2.7, 0.3, 0.95)], &[-1.0], 1.0).unwrap();
        assert_eq!(s.p_dis[0][0], 0.0);
        assert_eq!(s.net[0][0], 0.0);
    }

    #[test]
    fn soc_update_substitution() {
        let spec = unit(0.1, 0.0, 3.0, 0.5, 0.95);
        let s = dispatch_residual(&[spec], &[0.1], 1.0).unwrap();
        assert_eq!(s.p_ch[0][0], 0.1);
        assert!((s.soc[0][1] - 0.595).abs() < 1e-15);
    }

    #[test]
    fn identical_units_split_evenly() {
        let specs = [unit(1.5, 0.3, 2.7, 1.5, 0.95), unit(1.5, 0.3, 2.7, 1.5, 0.95)];
        let s = dispatch_residual(&specs, &[2.0], 1.0).unwrap();
        assert_eq!(s.p_ch[0][0], 1.0);
        assert_eq!(s.p_ch[1][0], 1.0);
    }

    #[test]
    fn saturated_unit_spills_to_neighbour() {
        // Unit 0 has 0.2 MWh of headroom, unit 1 plenty.
        let specs = [unit(1.0, 0.0, 1.2, 1.0, 1.0), unit(1.0, 0.0, 5.0, 0.0, 1.0)];
        let s = dispatch_residual(&specs, &[1.5], 1.0).unwrap();
        assert!((s.p_ch[0][0] - 0.2).abs() < 1e-12);
        assert!((s.p_ch[1][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_limit_is_spec_error() {
        let mut spec = unit(1.0, 0.0, 1.0, 0.5, 0.9);
        spec.p_dis_max = -0.1;
        assert!(matches!(dispatch_residual(&[spec], &[0.0], 1.0), Err(BessError::Spec { unit: 0, .. })));
    }

    #[test]
    fn verify_flags_simultaneous_charge_discharge() {
        let specs = [unit(1.0, 0.0, 3.0, 1.0, 1.0)];
        let mut s = dispatch_residual(&specs, &[0.0; 5], 1.0).unwrap();
        s.p_ch[0][3] = 0.1;
        s.p_dis[0][3] = 0.1;
        let v = verify_schedule(&specs, &s, 1.0);
        assert_eq!(v, vec!["complementarity violated at unit 0 hour 3".to_string()]);
    }

    #[test]
    fn verify_flags_soc_overflow() {
        let specs = [unit(1.0, 0.0, 1.0, 0.5, 1.0)];
        let mut s = dispatch_residual(&specs, &[0.0; 2], 1.0).unwrap();
        s.p_ch[0][0] = 0.8;
        s.net[0][0] = 0.8;
        s.soc[0][1] = 1.3;
        s.soc[0][2] = 1.3;
        let v = verify_schedule(&specs, &s, 1.0);
        assert!(v.iter().any(|m| m.starts_with("soc bound violated")), "{v:?}");
    }

    fn spec_strategy() -> impl Strategy<Value = BessSpec> {
        (0.0..2.0f64, 0.0..2.0f64, 0.0..1.0f64, 0.0..3.0f64, 0.0..1.0f64, 0.5..=1.0f64).prop_map(
            |(pc, pd, lo, span, frac, eta)| BessSpec {
                bus: BusId(0),
                p_ch_max: pc,
                p_dis_max: pd,
                soc_min: lo,
                soc_max: lo + span,
                soc_initial: lo + frac * span,
                eta,
            },
        )
    }

    proptest! {
        #[test]
        fn dispatch_is_valid_and_helpful(
            specs in prop::collection::vec(spec_strategy(), 0..4),
            residual in prop::collection::vec(-4.0..4.0f64, 1..24),
            dt in prop::sample::select(vec![0.25, 0.5, 1.0]),
        ) {
            let s = dispatch_residual(&specs, &residual, dt).unwrap();
            prop_assert!(verify_schedule(&specs, &s, dt).is_empty());
            for (t, r) in residual.iter().enumerate() {
                let after = r - s.total_net(t);
                prop_assert!(after.abs() <= r.abs() + 1e-12);
                prop_assert!(after * r >= -1e-12, "residual never flips sign");
            }
            for (u, spec) in specs.iter().enumerate() {
                let flow: f64 = (0..residual.len())
                    .map(|t| spec.eta * s.p_ch[u][t] - s.p_dis[u][t] / spec.eta)
                    .sum();
                let h = residual.len();
                prop_assert!((s.soc[u][h] - s.soc[u][0] - dt * flow).abs() < 1e-9);
            }
        }
    }
}
