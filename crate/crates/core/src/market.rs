//! Day-ahead and real-time clearing of flexibility bids.
//!
//! Day-ahead, each hour is cleared independently by merit order. The supply
//! balance is
//!
//! ```text
//! sum G + sum BESS supply + E_c - sum (E_sch + d * E_b) >= 0
//! ```
//!
//! and the operator pays `lambda * E_b` per cleared bid plus `pi * E_c` for
//! imports. Downward bids relax the balance, so they displace imports while
//! they are cheaper than `pi`. Upward bids tighten it and carry a non-negative
//! price, so clearing one never improves the objective; they are left in the
//! book for real-time use.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::DispatchPlan;
use crate::prosumer::{ConsumptionPlan, Direction, FlexBid, BID_TOL};
use crate::scenario::{BusId, HourIndex, ScenarioConfig};
use crate::tariff::TariffSchedule;

/// Allowed negative slack in the supply balance.
pub const BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("inconsistent bid at bus {bus} hour {hour}: {reason}")]
    Consistency { bus: usize, hour: usize, reason: String },
    #[error("invalid real-time requirement: {0}")]
    Requirement(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptedBid {
    pub bid: FlexBid,
    pub cleared_qty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClearingResult {
    pub accepted: Vec<AcceptedBid>,
    /// Import `E_c` per hour. Empty for real-time results.
    pub import_qty: Vec<f64>,
    /// Bids with their remaining (uncleared) quantities.
    pub residual_book: Vec<FlexBid>,
    pub objective: f64,
    /// Requirement left unmet after the book ran out (real-time only).
    pub shortfall: f64,
}

impl ClearingResult {
    pub fn cleared_total(&self) -> f64 {
        self.accepted.iter().map(|a| a.cleared_qty).sum()
    }
}

/// A flexibility need arising during operation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RtRequirement {
    pub hour: HourIndex,
    pub quantity: f64,
    /// `Up` asks for more consumption, `Down` for less.
    pub direction: Direction,
}

impl std::str::FromStr for RtRequirement {
    type Err = MarketError;

    /// Parses `hour:qty_mw:dir` where `dir` is `+1`, `1`, `up`, `-1` or `down`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MarketError::Requirement(format!("expected hour:qty_mw:dir, got {s:?}"));
        let mut parts = s.split(':');
        let (Some(h), Some(q), Some(d), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        let hour = h.trim().parse::<usize>().map_err(|_| bad())?;
        let quantity = q.trim().parse::<f64>().map_err(|_| bad())?;
        if !(quantity.is_finite() && quantity >= 0.0) {
            return Err(MarketError::Requirement(format!("quantity must be >= 0, got {quantity}")));
        }
        let direction = match d.trim().to_ascii_lowercase().as_str() {
            "+1" | "1" | "up" => Direction::Up,
            "-1" | "down" => Direction::Down,
            _ => return Err(bad()),
        };
        Ok(RtRequirement {
            hour: HourIndex(hour),
            quantity,
            direction,
        })
    }
}

/// Takes up to `want` out of `available`, returning `(taken, rest)` with
/// `taken + rest == available` exactly in floating point.
pub(crate) fn split_exact(available: f64, want: f64) -> (f64, f64) {
    if want >= available {
        return (available, 0.0);
    }
    let rest = available - want;
    (available - rest, rest)
}

/// Merit order: ascending price, downward before upward, then bus.
fn merit_key(a: &FlexBid, b: &FlexBid) -> std::cmp::Ordering {
    a.unit_price
        .total_cmp(&b.unit_price)
        .then(a.direction.cmp(&b.direction))
        .then(a.bus.cmp(&b.bus))
}

/// Single-hour day-ahead clearing. `slack` is the pre-clearing balance
/// `sum G + BESS supply - sum E_sch`. Returns cleared quantity per bid (in
/// input order), the rest left per bid, and the import.
pub fn clear_hour(bids: &[FlexBid], slack: f64, import_price: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let mut cleared = vec![0.0; bids.len()];
    let mut rest: Vec<f64> = bids.iter().map(|b| b.quantity).collect();
    let mut deficit = (-slack).max(0.0);

    let mut order: Vec<usize> = (0..bids.len()).collect();
    order.sort_by(|&i, &j| merit_key(&bids[i], &bids[j]));
    for i in order {
        let bid = &bids[i];
        if bid.direction != Direction::Down || deficit <= 0.0 || bid.unit_price >= import_price {
            continue;
        }
        let (taken, left) = split_exact(bid.quantity, deficit);
        if left > 0.0 {
            deficit = 0.0;
        } else {
            deficit = (deficit - taken).max(0.0);
        }
        cleared[i] = taken;
        rest[i] = left;
    }
    (cleared, rest, deficit)
}

/// Pre-clearing supply balance for `hour`, counting battery discharge as
/// supply and charging as demand.
pub fn pre_clearing_slack(config: &ScenarioConfig, plan: &DispatchPlan, hour: usize) -> f64 {
    config.total_generation(hour) - plan.bess_schedule.total_net(hour) - config.total_scheduled(hour)
}

fn check_bid(
    bid: &FlexBid,
    config: &ScenarioConfig,
    consumption: &ConsumptionPlan,
    seen: &mut HashSet<(BusId, HourIndex)>,
) -> Result<(), MarketError> {
    let (bus, hour) = (bid.bus.0, bid.hour.0);
    let fail = |reason: &str| MarketError::Consistency {
        bus,
        hour,
        reason: reason.to_string(),
    };
    if bus >= config.num_buses() {
        return Err(fail("unknown bus"));
    }
    if hour >= config.horizon() {
        return Err(fail("unknown hour"));
    }
    if !(bid.quantity.is_finite() && bid.quantity > 0.0) {
        return Err(fail("quantity must be positive"));
    }
    if !(bid.unit_price.is_finite() && bid.unit_price >= 0.0) {
        return Err(fail("unit price must be non-negative"));
    }
    let dev = consumption.actual_load[bus][hour] - config.scheduled_load[bus][hour];
    if bid.quantity > dev.abs() + BID_TOL || Direction::of(dev) != bid.direction {
        return Err(fail("bid exceeds the rescheduled deviation"));
    }
    if !seen.insert(bid.bid_key()) {
        return Err(fail("duplicate bid"));
    }
    Ok(())
}

/// Clears the day-ahead market hour by hour.
pub fn clear_day_ahead(
    bids: &[FlexBid],
    plan: &DispatchPlan,
    config: &ScenarioConfig,
    tariff: &TariffSchedule,
    consumption: &ConsumptionPlan,
) -> Result<ClearingResult, MarketError> {
    let mut seen = HashSet::new();
    for bid in bids {
        check_bid(bid, config, consumption, &mut seen)?;
    }
    let h = config.horizon();
    let mut by_hour: Vec<Vec<usize>> = vec![Vec::new(); h];
    for (i, bid) in bids.iter().enumerate() {
        by_hour[bid.hour.0].push(i);
    }

    let mut cleared = vec![0.0; bids.len()];
    let mut rest: Vec<f64> = bids.iter().map(|b| b.quantity).collect();
    let mut import_qty = vec![0.0; h];
    let mut objective = 0.0;
    for t in 0..h {
        let hour_bids: Vec<FlexBid> = by_hour[t].iter().map(|&i| bids[i]).collect();
        let pi = config.import_price[t];
        let (c, r, import) = clear_hour(&hour_bids, pre_clearing_slack(config, plan, t), pi);
        for (k, &i) in by_hour[t].iter().enumerate() {
            cleared[i] = c[k];
            rest[i] = r[k];
            objective -= bids[i].unit_price * c[k];
        }
        import_qty[t] = import;
        objective -= pi * import;
        for bus in 0..config.num_buses() {
            let e = consumption.actual_load[bus][t];
            objective += tariff.band(bus, t).price(e) * e;
        }
    }

    let accepted = bids
        .iter()
        .zip(&cleared)
        .filter(|(_, &c)| c > 0.0)
        .map(|(b, &c)| AcceptedBid { bid: *b, cleared_qty: c })
        .collect();
    let residual_book = bids
        .iter()
        .zip(&rest)
        .filter(|(_, &r)| r > 0.0)
        .map(|(b, &r)| FlexBid { quantity: r, ..*b })
        .collect();
    Ok(ClearingResult {
        accepted,
        import_qty,
        residual_book,
        objective,
        shortfall: 0.0,
    })
}

/// Clears a real-time requirement from the residual day-ahead book, cheapest
/// matching bid first. Partial clearing of the marginal bid is allowed; an
/// unmet remainder is reported as `shortfall`.
pub fn clear_real_time(residual_book: &[FlexBid], req: &RtRequirement) -> Result<ClearingResult, MarketError> {
    if !(req.quantity.is_finite() && req.quantity >= 0.0) {
        return Err(MarketError::Requirement(format!("quantity must be >= 0, got {}", req.quantity)));
    }
    let mut book = residual_book.to_vec();
    let mut order: Vec<usize> = (0..book.len())
        .filter(|&i| book[i].hour == req.hour && book[i].direction == req.direction)
        .collect();
    order.sort_by(|&i, &j| merit_key(&book[i], &book[j]));

    let mut need = req.quantity;
    let mut accepted = Vec::new();
    let mut objective = 0.0;
    for i in order {
        if need <= 0.0 {
            break;
        }
        let (taken, left) = split_exact(book[i].quantity, need);
        need = if left > 0.0 { 0.0 } else { (need - taken).max(0.0) };
        accepted.push(AcceptedBid {
            bid: book[i],
            cleared_qty: taken,
        });
        objective -= book[i].unit_price * taken;
        book[i].quantity = left;
    }
    book.retain(|b| b.quantity > 0.0);
    Ok(ClearingResult {
        accepted,
        import_qty: Vec::new(),
        residual_book: book,
        objective,
        shortfall: need,
    })
}

/// Post-clearing supply balance per hour; each entry must be
/// `>= -BALANCE_TOL`.
pub fn supply_slack(config: &ScenarioConfig, plan: &DispatchPlan, da: &ClearingResult) -> Vec<f64> {
    let mut slack: Vec<f64> = (0..config.horizon())
        .map(|t| pre_clearing_slack(config, plan, t) + da.import_qty[t])
        .collect();
    for a in &da.accepted {
        slack[a.bid.hour.0] -= a.bid.direction.sign() * a.cleared_qty;
    }
    slack
}

/// Checks, for every bid, `da + (rt_1 + (... + (rt_k + remaining))) ==
/// offered` with exact floating-point equality. Stages are nested from the
/// last one outward, matching how each stage split its input quantity.
pub fn conservation_violations(
    bids: &[FlexBid],
    da: &ClearingResult,
    rt: &[ClearingResult],
) -> Vec<String> {
    let key = |b: &FlexBid| (b.bus, b.hour);
    let remaining: HashMap<_, f64> = rt
        .last()
        .map_or(&da.residual_book, |r| &r.residual_book)
        .iter()
        .map(|b| (key(b), b.quantity))
        .collect();
    let stage_map = |res: &ClearingResult| -> HashMap<(BusId, HourIndex), f64> {
        let mut m = HashMap::new();
        for a in &res.accepted {
            *m.entry(key(&a.bid)).or_insert(0.0) += a.cleared_qty;
        }
        m
    };
    let stages: Vec<_> = std::iter::once(da).chain(rt).map(stage_map).collect();

    let mut out = Vec::new();
    for bid in bids {
        let k = key(bid);
        let mut total = remaining.get(&k).copied().unwrap_or(0.0);
        for stage in stages.iter().rev() {
            total += stage.get(&k).copied().unwrap_or(0.0);
        }
        if total != bid.quantity {
            out.push(format!(
                "bid mass not conserved at bus {} hour {}: {} != {}",
                bid.bus, bid.hour, total, bid.quantity
            ));
        }
    }
    out
}

/// Within each hour and direction, a cleared bid implies every strictly
/// cheaper bid of the same direction in `book` was cleared in full.
pub fn merit_order_violations(book: &[FlexBid], result: &ClearingResult) -> Vec<String> {
    let mut cleared: HashMap<(BusId, HourIndex), f64> = HashMap::new();
    for a in &result.accepted {
        *cleared.entry(a.bid.bid_key()).or_insert(0.0) += a.cleared_qty;
    }
    let mut out = Vec::new();
    for a in &result.accepted {
        for other in book {
            if other.hour == a.bid.hour
                && other.direction == a.bid.direction
                && other.unit_price < a.bid.unit_price
                && cleared.get(&other.bid_key()).copied().unwrap_or(0.0) != other.quantity
            {
                out.push(format!(
                    "bid at bus {} hour {} cleared before cheaper bus {}",
                    a.bid.bus, a.bid.hour, other.bus
                ));
            }
        }
    }
    out
}
