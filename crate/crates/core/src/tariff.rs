//! Incentive-based tariff with a penalty-free tolerance band.
//!
//! Inside `[e_lo, e_hi]` the consumer pays the base rate `p_mid`; outside the
//! band the rate grows linearly with the distance to the nearest band edge.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{Matrix, ScenarioConfig};

/// Slack allowed when checking expected loads against the flexibility box.
const BOX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TariffBand {
    pub e_lo: f64,
    pub e_hi: f64,
    pub p_mid: f64,
    pub slope_lo: f64,
    pub slope_hi: f64,
}

impl TariffBand {
    /// Rate paid when consuming `e` MW, evaluated branch by branch. The
    /// middle branch is used at the breakpoints themselves.
    pub fn price(&self, e: f64) -> f64 {
        if e < self.e_lo {
            self.slope_lo * (self.e_lo - e) + self.p_mid
        } else if e > self.e_hi {
            self.slope_hi * (e - self.e_hi) + self.p_mid
        } else {
            self.p_mid
        }
    }

    /// Same rate written as base plus two hinge penalties.
    pub fn price_hinge_form(&self, e: f64) -> f64 {
        self.p_mid + self.slope_lo * (self.e_lo - e).max(0.0) + self.slope_hi * (e - self.e_hi).max(0.0)
    }

    pub fn contains(&self, e: f64) -> bool {
        self.e_lo <= e && e <= self.e_hi
    }

    pub fn is_valid(&self) -> bool {
        [self.e_lo, self.e_hi, self.p_mid, self.slope_lo, self.slope_hi]
            .iter()
            .all(|v| v.is_finite())
            && self.e_lo <= self.e_hi
            && self.slope_lo >= 0.0
            && self.slope_hi >= 0.0
            && self.p_mid >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TariffSchedule {
    /// `[bus][hour]`
    pub bands: Vec<Vec<TariffBand>>,
    pub expected_load: Matrix,
}

impl TariffSchedule {
    pub fn band(&self, bus: usize, hour: usize) -> &TariffBand {
        &self.bands[bus][hour]
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TariffError {
    #[error("expected load outside the flexibility box at bus {bus} hour {hour}: {value} not in [{lo}, {hi}]")]
    Precondition {
        bus: usize,
        hour: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("expected load has the wrong shape")]
    Shape,
}

/// Derives the tolerance band for every bus and hour from the scheduled and
/// expected loads: `e_lo = (1 - eps) min(E_sch, E_n)`,
/// `e_hi = (1 + eps) max(E_sch, E_n)`. The band always contains the schedule.
pub fn build_bands(config: &ScenarioConfig, expected_load: &Matrix) -> Result<TariffSchedule, TariffError> {
    let (n, h) = (config.num_buses(), config.horizon());
    if expected_load.len() != n || expected_load.iter().any(|r| r.len() != h) {
        return Err(TariffError::Shape);
    }
    let eps = config.epsilon;
    let mut bands = Vec::with_capacity(n);
    for bus in 0..n {
        let mut row = Vec::with_capacity(h);
        for hour in 0..h {
            let sch = config.scheduled_load[bus][hour];
            let en = expected_load[bus][hour];
            let lo = (1.0 - config.delta) * sch;
            let hi = (1.0 + config.delta) * sch;
            if !(en >= lo - BOX_TOL && en <= hi + BOX_TOL) {
                return Err(TariffError::Precondition { bus, hour, value: en, lo, hi });
            }
            row.push(TariffBand {
                e_lo: (1.0 - eps) * sch.min(en),
                e_hi: (1.0 + eps) * sch.max(en),
                p_mid: config.price_mid[bus][hour],
                slope_lo: config.price_lo_slope[bus][hour],
                slope_hi: config.price_hi_slope[bus][hour],
            });
        }
        bands.push(row);
    }
    Ok(TariffSchedule {
        bands,
        expected_load: expected_load.clone(),
    })
}
