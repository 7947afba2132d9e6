//! Brute-force reference solvers and randomized cross-checks.
//!
//! Nothing here calls into the closed-form solvers it checks: each oracle
//! scans or enumerates the feasible set directly and evaluates the objective
//! from its definition. The `check_*` functions draw seeded random instances,
//! run both routes and report the largest disagreement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dispatch;
use crate::market;
use crate::prosumer::{self, Direction, FlexBid};
use crate::scenario::{presets, BusId, HourIndex, UtilityFn};
use crate::tariff::TariffBand;

/// Outcome of a randomized cross-check.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub name: &'static str,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub failures: Vec<String>,
}

impl OracleReport {
    fn new(name: &'static str, tolerance: f64) -> Self {
        OracleReport {
            name,
            instances: 0,
            max_error: 0.0,
            tolerance,
            failures: Vec::new(),
        }
    }

    fn record(&mut self, err: f64, context: impl FnOnce() -> String) {
        self.max_error = self.max_error.max(err);
        if !(err <= self.tolerance) {
            self.failures.push(context());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Minimum of `|generation - S|` over a uniform scan of the total demand `S`
/// across `[(1 - delta) sched, (1 + delta) sched]` with spacing `step`.
pub fn lower_hour_scan(total_generation: f64, total_scheduled: f64, delta: f64, step: f64) -> f64 {
    let lo = (1.0 - delta) * total_scheduled;
    let hi = (1.0 + delta) * total_scheduled;
    let steps = ((hi - lo) / step).ceil() as usize;
    (0..=steps)
        .map(|k| (lo + k as f64 * step).min(hi))
        .map(|s| (total_generation - s).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Dense grid over each bus's own box `[(1-delta) E_i, (1+delta) E_i]` with
/// `points` samples per bus. Exponential in the bus count; keep it small.
pub fn lower_hour_grid(total_generation: f64, scheduled: &[f64], delta: f64, points: usize) -> f64 {
    fn walk(acc: f64, rest: &[f64], delta: f64, points: usize, gen: f64, best: &mut f64) {
        match rest.split_first() {
            None => *best = best.min((gen - acc).abs()),
            Some((&e, tail)) => {
                let lo = (1.0 - delta) * e;
                let hi = (1.0 + delta) * e;
                for k in 0..points {
                    let x = lo + (hi - lo) * k as f64 / (points - 1).max(1) as f64;
                    walk(acc + x, tail, delta, points, gen, best);
                }
            }
        }
    }
    let mut best = f64::INFINITY;
    walk(0.0, scheduled, delta, points, total_generation, &mut best);
    best
}

/// Grid search for the prosumer problem over `[lo, hi]` with `points`
/// uniformly spaced samples plus the tariff breakpoints (where the objective
/// has kinks). Returns `(argmax, max)`.
pub fn consumption_grid(band: &TariffBand, util: &UtilityFn, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    let g = |e: f64| util.alpha * e - util.beta * e * e - band.price_hinge_form(e) * e;
    let mut best = (lo, g(lo));
    let samples = (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1).max(1) as f64)
        .chain([band.e_lo, band.e_hi].into_iter().filter(|e| lo <= *e && *e <= hi));
    for e in samples {
        let v = g(e);
        if v > best.1 {
            best = (e, v);
        }
    }
    best
}

/// Operator cost `sum lambda x + pi E_c` of a clearing decision for one hour,
/// with the import set to the smallest value satisfying the balance.
pub fn hour_cost(bids: &[FlexBid], cleared: &[f64], slack: f64, import_price: f64) -> f64 {
    let mut balance = slack;
    let mut cost = 0.0;
    for (b, x) in bids.iter().zip(cleared) {
        balance -= b.direction.sign() * x;
        cost += b.unit_price * x;
    }
    cost + import_price * (-balance).max(0.0)
}

/// Minimum operator cost over all clearing decisions with every bid either
/// untouched, fully cleared, or (for at most one bid) partially cleared at a
/// multiple of `step`.
pub fn market_hour_brute_force(bids: &[FlexBid], slack: f64, import_price: f64, step: f64) -> f64 {
    let n = bids.len();
    assert!(n <= 16, "enumeration over {n} bids is too large");
    let relax = |b: &FlexBid| -b.direction.sign();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        let mut balance = slack;
        let mut cost = 0.0;
        for (i, b) in bids.iter().enumerate() {
            if mask & (1 << i) != 0 {
                balance += relax(b) * b.quantity;
                cost += b.unit_price * b.quantity;
            }
        }
        best = best.min(cost + import_price * (-balance).max(0.0));
        for (j, b) in bids.iter().enumerate() {
            if mask & (1 << j) != 0 {
                continue;
            }
            let levels = (b.quantity / step).round() as usize;
            for k in 1..levels {
                let x = k as f64 * step;
                let bal = balance + relax(b) * x;
                best = best.min(cost + b.unit_price * x + import_price * (-bal).max(0.0));
            }
        }
    }
    best
}

/// Lower level: per-hour total-demand scan at `1e-4` MW against
/// `solve_lower`, and the exact distance-to-box optimum against the clamp.
pub fn check_lower(instances: usize, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::new("lower", 1e-3);
    let mut exact_mismatches = Vec::new();
    for i in 0..instances {
        let buses = rng.gen_range(1..=5);
        let hours = rng.gen_range(1..=6);
        let cfg = presets::random_scenario(&mut rng, buses, hours);
        let plan = match dispatch::solve_lower(&cfg) {
            Ok(p) => p,
            Err(e) => {
                report.failures.push(format!("instance {i}: {e}"));
                continue;
            }
        };
        let mut ours = 0.0;
        let mut oracle = 0.0;
        for t in 0..hours {
            let (g, s) = (cfg.total_generation(t), cfg.total_scheduled(t));
            ours += plan.net_load[t].abs() * cfg.timestep_hours;
            oracle += lower_hour_scan(g, s, cfg.delta, 1e-4) * cfg.timestep_hours;

            let (lo, hi) = ((1.0 - cfg.delta) * s, (1.0 + cfg.delta) * s);
            let analytic = (lo - g).max(g - hi).max(0.0);
            let sol = dispatch::solve_hour(g, s, cfg.delta, t).expect("valid hour");
            if (g - sol.total).abs() != analytic {
                exact_mismatches.push(format!("instance {i} hour {t}: clamp {} vs analytic {analytic}", (g - sol.total).abs()));
            }
        }
        report.record((ours - oracle).abs(), || format!("instance {i}: {ours} vs scan {oracle}"));
        // The scan can never beat the exact optimum.
        if oracle < ours - 1e-9 {
            report.failures.push(format!("instance {i}: scan {oracle} beats closed form {ours}"));
        }
        report.instances += 1;
    }
    report.failures.extend(exact_mismatches);
    report
}

/// Random `(band, utility, lo, hi)` instance.
pub fn random_prosumer_instance<R: Rng>(rng: &mut R) -> (TariffBand, UtilityFn, f64, f64) {
    let e_lo = rng.gen_range(0.0..1.5);
    let band = TariffBand {
        e_lo,
        e_hi: e_lo + rng.gen_range(0.0..1.0),
        p_mid: rng.gen_range(10.0..100.0),
        slope_lo: rng.gen_range(0.0..5.0),
        slope_hi: rng.gen_range(0.0..5.0),
    };
    let util = UtilityFn {
        alpha: rng.gen_range(0.0..150.0),
        beta: rng.gen_range(0.0..20.0),
    };
    let lo = rng.gen_range(0.0..2.0);
    let hi = lo + rng.gen_range(0.0..2.0);
    (band, util, lo, hi)
}

/// Middle level: exact candidate search against a `points`-sample grid.
/// Objective must agree within `1e-8`; the maximizer within one grid step.
pub fn check_prosumer(instances: usize, seed: u64, points: usize) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::new("prosumer", 1e-8);
    for i in 0..instances {
        let (band, util, lo, hi) = random_prosumer_instance(&mut rng);
        let (e, v) = prosumer::optimize_consumption(&band, &util, lo, hi).expect("valid instance");
        let (ge, gv) = consumption_grid(&band, &util, lo, hi, points);
        let resolution = (hi - lo) / (points - 1).max(1) as f64;
        report.record((v - gv).abs(), || format!("instance {i}: objective {v} vs grid {gv}"));
        if gv > v + 1e-12 * v.abs().max(1.0) {
            report.failures.push(format!("instance {i}: grid {gv} beats exact {v}"));
        }
        if (e - ge).abs() > resolution + 1e-12 {
            report.failures.push(format!("instance {i}: argmax {e} vs grid {ge} (step {resolution})"));
        }
        report.instances += 1;
    }
    report
}

/// Random single-hour market with up to `max_bids` bids. Quantities and the
/// slack are multiples of `1e-3` MW so the enumeration grid contains the
/// optimum.
pub fn random_market_hour<R: Rng>(rng: &mut R, max_bids: usize) -> (Vec<FlexBid>, f64, f64) {
    let n = rng.gen_range(0..=max_bids);
    let bids = (0..n)
        .map(|b| FlexBid {
            bus: BusId(b),
            hour: HourIndex(0),
            quantity: rng.gen_range(1..=200) as f64 * 1e-3,
            direction: if rng.gen_bool(0.6) { Direction::Down } else { Direction::Up },
            unit_price: rng.gen_range(0.0..150.0),
        })
        .collect();
    let slack = rng.gen_range(-1500..=500) as f64 * 1e-3;
    let import_price = rng.gen_range(20.0..150.0);
    (bids, slack, import_price)
}

/// Upper level: merit-order clearing against exhaustive enumeration.
pub fn check_market(instances: usize, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::new("market", 1e-6);
    for i in 0..instances {
        let (bids, slack, pi) = random_market_hour(&mut rng, 10);
        let (cleared, _, _) = market::clear_hour(&bids, slack, pi);
        let ours = hour_cost(&bids, &cleared, slack, pi);
        let oracle = market_hour_brute_force(&bids, slack, pi, 1e-3);
        report.record((ours - oracle).abs(), || format!("instance {i}: greedy cost {ours} vs enumeration {oracle}"));
        report.instances += 1;
    }
    report
}

/// Tariff: branch form against hinge form on random points, plus continuity
/// at both breakpoints.
pub fn check_tariff(instances: usize, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::new("tariff", 1e-12);
    for i in 0..instances {
        let e_lo = rng.gen_range(0.0..2.0);
        let band = TariffBand {
            e_lo,
            e_hi: e_lo + rng.gen_range(0.0..1.0),
            p_mid: rng.gen_range(0.0..100.0),
            slope_lo: rng.gen_range(0.0..5.0),
            slope_hi: rng.gen_range(0.0..5.0),
        };
        let e = rng.gen_range(0.0..4.0);
        let scale = band.price(e).abs().max(1.0);
        report.record((band.price(e) - band.price_hinge_form(e)).abs() / scale, || {
            format!("instance {i}: forms disagree at {e}")
        });
        for edge in [band.e_lo, band.e_hi] {
            let below = band.slope_lo * (band.e_lo - edge).max(0.0) + band.p_mid;
            let above = band.slope_hi * (edge - band.e_hi).max(0.0) + band.p_mid;
            report.record((band.price(edge) - below).abs().max((band.price(edge) - above).abs()), || {
                format!("instance {i}: discontinuous at {edge}")
            });
        }
        report.instances += 1;
    }
    report
}
