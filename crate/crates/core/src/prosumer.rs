//! Prosumer rescheduling against the tariff and bid extraction.
//!
//! Each bus-hour is solved on its own: maximize
//! `g(E) = f(E) - price(E) * E` over the flexibility bounds. On each of the
//! three tariff segments `g` is a quadratic in `E`, so the global maximum is
//! among the segment stationary points, the band edges and the flexibility
//! bounds.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{BusId, HourIndex, Matrix, ScenarioConfig, UtilityFn};
use crate::tariff::{TariffBand, TariffSchedule};

/// Deviations at or below this many MW do not produce a bid.
pub const BID_TOL: f64 = 1e-9;

/// Two candidate objectives closer than this are treated as a tie.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ProsumerError {
    #[error("flexibility bounds inverted: {lo} > {hi}")]
    Bounds { lo: f64, hi: f64 },
    #[error("invalid tariff band")]
    Band,
    #[error("bus {bus} hour {hour}: {source}")]
    At {
        bus: usize,
        hour: usize,
        source: Box<ProsumerError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Direction {
    /// Consume less than scheduled.
    Down,
    /// Consume more than scheduled.
    Up,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Up => 1.0,
            Direction::Down => -1.0,
        }
    }

    pub fn of(deviation: f64) -> Self {
        if deviation >= 0.0 {
            Direction::Up
        } else {
            Direction::Down
        }
    }
}

impl From<Direction> for i8 {
    fn from(d: Direction) -> i8 {
        match d {
            Direction::Up => 1,
            Direction::Down => -1,
        }
    }
}

impl TryFrom<i8> for Direction {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Direction::Up),
            -1 => Ok(Direction::Down),
            other => Err(format!("direction must be +1 or -1, got {other}")),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", i8::from(*self))
    }
}

/// An offer to deviate from the schedule at `bus` during `hour`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlexBid {
    pub bus: BusId,
    pub hour: HourIndex,
    pub quantity: f64,
    pub direction: Direction,
    pub unit_price: f64,
}

impl FlexBid {
    /// At most one bid exists per bus-hour, so this identifies a bid across
    /// clearing stages.
    pub fn bid_key(&self) -> (BusId, HourIndex) {
        (self.bus, self.hour)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsumptionPlan {
    pub actual_load: Matrix,
    /// Sum over hours of `g(E_a)` per bus.
    pub objective_value: Vec<f64>,
}

/// The prosumer's hourly surplus `f(E) - price(E) * E`.
pub fn net_value(band: &TariffBand, util: &UtilityFn, e: f64) -> f64 {
    util.value(e) - band.price(e) * e
}

/// Coefficients `(a, b)` of `g(E) = a E^2 + b E` on the segment containing `e`.
fn segment_quadratic(band: &TariffBand, util: &UtilityFn, e: f64) -> (f64, f64) {
    if e < band.e_lo {
        (band.slope_lo - util.beta, util.alpha - band.p_mid - band.slope_lo * band.e_lo)
    } else if e > band.e_hi {
        (-(util.beta + band.slope_hi), util.alpha - band.p_mid + band.slope_hi * band.e_hi)
    } else {
        (-util.beta, util.alpha - band.p_mid)
    }
}

/// Derivative of `g` at `e`, using the segment `e` falls in.
pub fn marginal_value(band: &TariffBand, util: &UtilityFn, e: f64) -> f64 {
    let (a, b) = segment_quadratic(band, util, e);
    2.0 * a * e + b
}

/// Stationary points of the below-band, in-band and above-band quadratics,
/// whether or not they fall inside their segment.
pub fn stationary_points(band: &TariffBand, util: &UtilityFn) -> [Option<f64>; 3] {
    let probes = [band.e_lo - 1.0, 0.5 * (band.e_lo + band.e_hi), band.e_hi + 1.0];
    probes.map(|p| {
        let (a, b) = segment_quadratic(band, util, p);
        (a != 0.0).then(|| -b / (2.0 * a))
    })
}

/// Exact maximizer of the prosumer surplus over `[fl_lo, fl_hi]`, returned as
/// `(consumption, surplus)`.
///
/// Ties go to the candidate nearest the band midpoint, then to the smaller
/// consumption.
pub fn optimize_consumption(
    band: &TariffBand,
    util: &UtilityFn,
    fl_lo: f64,
    fl_hi: f64,
) -> Result<(f64, f64), ProsumerError> {
    if !(fl_lo <= fl_hi) {
        return Err(ProsumerError::Bounds { lo: fl_lo, hi: fl_hi });
    }
    if !band.is_valid() {
        return Err(ProsumerError::Band);
    }
    let segments = [
        (f64::NEG_INFINITY, band.e_lo),
        (band.e_lo, band.e_hi),
        (band.e_hi, f64::INFINITY),
    ];
    let mut candidates = vec![fl_lo, fl_hi];
    for edge in [band.e_lo, band.e_hi] {
        if fl_lo <= edge && edge <= fl_hi {
            candidates.push(edge);
        }
    }
    for (point, (lo, hi)) in stationary_points(band, util).into_iter().zip(segments) {
        if let Some(e) = point {
            if lo <= e && e <= hi && fl_lo <= e && e <= fl_hi {
                candidates.push(e);
            }
        }
    }

    let mid = 0.5 * (band.e_lo + band.e_hi);
    let mut best = (candidates[0], net_value(band, util, candidates[0]));
    for &e in &candidates[1..] {
        let v = net_value(band, util, e);
        let scale = v.abs().max(best.1.abs()).max(1.0);
        if v > best.1 + TIE_TOL * scale {
            best = (e, v);
        } else if (v - best.1).abs() <= TIE_TOL * scale {
            let (d_new, d_old) = ((e - mid).abs(), (best.0 - mid).abs());
            if d_new < d_old || (d_new == d_old && e < best.0) {
                best = (e, v);
            }
        }
    }
    Ok(best)
}

/// Solves every bus-hour against the published tariff.
pub fn optimize_plan(config: &ScenarioConfig, tariff: &TariffSchedule) -> Result<ConsumptionPlan, ProsumerError> {
    let (n, h) = (config.num_buses(), config.horizon());
    let mut actual_load = vec![vec![0.0; h]; n];
    let mut objective_value = vec![0.0; n];
    for bus in 0..n {
        let util = &config.utility_params[bus];
        for hour in 0..h {
            let (e, v) = optimize_consumption(
                tariff.band(bus, hour),
                util,
                config.flex_lo[bus][hour],
                config.flex_hi[bus][hour],
            )
            .map_err(|source| ProsumerError::At {
                bus,
                hour,
                source: Box::new(source),
            })?;
            actual_load[bus][hour] = e;
            objective_value[bus] += v;
        }
    }
    Ok(ConsumptionPlan {
        actual_load,
        objective_value,
    })
}

/// One bid per bus-hour whose rescheduled load deviates from the schedule,
/// ordered by hour then bus.
pub fn make_bids(plan: &ConsumptionPlan, scheduled: &Matrix, prices: &Matrix) -> Vec<FlexBid> {
    let n = plan.actual_load.len();
    let h = plan.actual_load.first().map_or(0, Vec::len);
    let mut bids = Vec::new();
    for hour in 0..h {
        for bus in 0..n {
            let dev = plan.actual_load[bus][hour] - scheduled[bus][hour];
            if dev.abs() > BID_TOL {
                bids.push(FlexBid {
                    bus: BusId(bus),
                    hour: HourIndex(hour),
                    quantity: dev.abs(),
                    direction: Direction::of(dev),
                    unit_price: prices[bus][hour],
                });
            }
        }
    }
    bids
}
