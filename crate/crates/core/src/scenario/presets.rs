//! Built-in scenarios.
//!
//! The two IEEE 33-bus cases use synthetic hourly profiles: a daytime PV bell
//! with an evening load peak (`ieee33_pv`), and wind-dominated supply with a
//! daytime load peak (`enowa_wind`). Battery energy ratings and initial states
//! are synthetic as well.

use rand::Rng;

use super::{BessSpec, BusId, Matrix, ScenarioConfig, UtilityFn};

/// IEEE 33-bus feeder edges, 0-based, bus 0 at the substation.
pub fn ieee33_edges() -> Vec<(BusId, BusId)> {
    let mut edges: Vec<(usize, usize)> = (0..17).map(|i| (i, i + 1)).collect();
    edges.extend([(1, 18), (18, 19), (19, 20), (20, 21)]);
    edges.extend([(2, 22), (22, 23), (23, 24)]);
    edges.extend([(5, 25), (25, 26), (26, 27), (27, 28), (28, 29), (29, 30), (30, 31), (31, 32)]);
    edges.into_iter().map(|(p, c)| (BusId(p), BusId(c))).collect()
}

/// Nominal active loads of the IEEE 33-bus case in MW (total 3.715 MW).
pub const IEEE33_LOAD_MW: [f64; 33] = [
    0.0, 0.10, 0.09, 0.12, 0.06, 0.06, 0.20, 0.20, 0.06, 0.06, 0.045, 0.06, 0.06, 0.12, 0.06, 0.06, 0.06, 0.09,
    0.09, 0.09, 0.09, 0.09, 0.09, 0.42, 0.42, 0.06, 0.06, 0.06, 0.12, 0.20, 0.15, 0.21, 0.06,
];

/// PV buses and nameplate capacities (MW).
pub const PV_UNITS: [(usize, f64); 4] = [(13, 1.2), (17, 0.715), (24, 1.2), (32, 0.6)];

/// Buses hosting the two 1.5 MW storage units.
pub const BESS_BUSES: [usize; 2] = [9, 29];

/// Evening-peak residential shape, per unit of nominal load.
const LOAD_SHAPE_EVENING: [f64; 24] = [
    0.55, 0.50, 0.48, 0.47, 0.48, 0.55, 0.65, 0.72, 0.72, 0.70, 0.68, 0.66, 0.65, 0.66, 0.68, 0.72, 0.80, 0.90,
    0.98, 1.00, 0.95, 0.85, 0.72, 0.62,
];

/// Daytime-peak commercial shape.
const LOAD_SHAPE_DAYTIME: [f64; 24] = [
    0.50, 0.47, 0.45, 0.45, 0.47, 0.52, 0.62, 0.75, 0.88, 0.96, 1.00, 1.00, 0.98, 1.00, 0.98, 0.94, 0.88, 0.80,
    0.74, 0.70, 0.66, 0.62, 0.57, 0.53,
];

/// Wind availability, per unit of installed capacity.
const WIND_SHAPE: [f64; 24] = [
    0.82, 0.72, 0.58, 0.50, 0.60, 0.66, 0.62, 0.50, 0.40, 0.34, 0.30, 0.28, 0.28, 0.30, 0.34, 0.40, 0.48, 0.56,
    0.62, 0.68, 0.72, 0.76, 0.78, 0.80,
];

/// Import price ($/MWh): cheap overnight, expensive in the evening.
const IMPORT_PRICE: [f64; 24] = [
    42.0, 40.0, 38.0, 37.0, 38.0, 42.0, 50.0, 58.0, 60.0, 56.0, 52.0, 48.0, 46.0, 47.0, 50.0, 56.0, 66.0, 78.0,
    88.0, 92.0, 86.0, 72.0, 58.0, 48.0,
];

/// Clear-sky PV output per unit of capacity, zero outside 06:00-18:00.
fn pv_shape(hour: usize) -> f64 {
    let x = hour as f64;
    if (6.0..=18.0).contains(&x) {
        (std::f64::consts::PI * (x - 6.0) / 12.0).sin().powf(1.5)
    } else {
        0.0
    }
}

/// Per-bus bid price factor in (0.5, 0.95): a fixed low-discrepancy spread
/// over the feeder.
fn rho(bus: usize) -> f64 {
    let frac = (bus as f64 * 0.618_033_988_749_895).fract();
    0.52 + 0.41 * frac
}

fn per_bus(n: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Matrix {
    (0..n).map(|b| (0..h).map(|t| f(b, t)).collect()).collect()
}

fn ieee33_storage() -> Vec<BessSpec> {
    BESS_BUSES
        .iter()
        .map(|&b| BessSpec {
            bus: BusId(b),
            p_ch_max: 1.5,
            p_dis_max: 1.5,
            soc_min: 0.3,
            soc_max: 2.7,
            soc_initial: 1.5,
            eta: 0.95,
        })
        .collect()
}

/// Strength of the prosumer response relative to the renewable surplus
/// ratio. Above one, flexibility offered in an hour exceeds what balancing
/// that hour needs, so clearing selects among bids.
const RESPONSIVENESS: f64 = 1.5;

/// Common IEEE 33-bus construction.
///
/// Utility is fixed per bus; the base rate is set per bus-hour so that each
/// prosumer's surplus peaks at its schedule scaled by
/// `1 + RESPONSIVENESS * (r - 1)`, where `r` is the hour's generation to
/// scheduled-demand ratio clamped to `[1 - delta, 1 + delta]`. Cheap
/// renewable hours thus pull consumption up and scarce hours push it down.
fn ieee33(id: &str, description: &str, load_shape: &[f64; 24], generation: Matrix) -> ScenarioConfig {
    let (n, h) = (33, 24);
    let delta = 0.2;
    let scheduled = per_bus(n, h, |b, t| IEEE33_LOAD_MW[b] * load_shape[t]);
    let total_sched: Vec<f64> = (0..h).map(|t| scheduled.iter().map(|r| r[t]).sum()).collect();
    let total_gen: Vec<f64> = (0..h).map(|t| generation.iter().map(|r| r[t]).sum()).collect();
    let pull: Vec<f64> = (0..h)
        .map(|t| {
            let ratio = (total_gen[t] / total_sched[t]).clamp(1.0 - delta, 1.0 + delta);
            1.0 + RESPONSIVENESS * (ratio - 1.0)
        })
        .collect();

    let utility_params: Vec<UtilityFn> = (0..n)
        .map(|b| {
            let nominal = IEEE33_LOAD_MW[b].max(1e-3);
            let k = 17.0 + 2.0 * (b as f64 * 0.37).sin();
            UtilityFn {
                alpha: 60.0 + 0.6 * k,
                beta: k / nominal,
            }
        })
        .collect();
    let price_mid = per_bus(n, h, |b, t| {
        let u = &utility_params[b];
        u.alpha - 2.0 * u.beta * scheduled[b][t] * pull[t]
    });

    ScenarioConfig {
        id: id.into(),
        description: description.into(),
        topology: ieee33_edges(),
        flex_lo: per_bus(n, h, |b, t| (1.0 - delta) * scheduled[b][t]),
        flex_hi: per_bus(n, h, |b, t| (1.0 + delta) * scheduled[b][t]),
        scheduled_load: scheduled,
        generation,
        bess_specs: ieee33_storage(),
        delta,
        epsilon: 0.05,
        eta: 0.95,
        price_mid,
        price_lo_slope: vec![vec![1.0; h]; n],
        price_hi_slope: vec![vec![1.0; h]; n],
        import_price: IMPORT_PRICE.to_vec(),
        bid_price_factor: (0..n).map(rho).collect(),
        utility_params,
        timestep_hours: 1.0,
    }
}

/// IEEE 33-bus feeder with four PV units and two storage units, evening-peak
/// demand.
pub fn ieee33_pv() -> ScenarioConfig {
    let generation = per_bus(33, 24, |b, t| {
        PV_UNITS
            .iter()
            .find(|(bus, _)| *bus == b)
            .map_or(0.0, |(_, cap)| cap * pv_shape(t))
    });
    ieee33(
        "ieee33-pv",
        "Synthetic profiles: PV bell curve, evening-peak demand",
        &LOAD_SHAPE_EVENING,
        generation,
    )
}

/// Wind plus PV supply with a daytime demand peak.
pub fn enowa_wind() -> ScenarioConfig {
    // Wind at the PV buses' feeder ends, with a smaller PV share.
    const WIND_UNITS: [(usize, f64); 2] = [(17, 1.6), (32, 1.4)];
    let generation = per_bus(33, 24, |b, t| {
        let wind = WIND_UNITS.iter().find(|(bus, _)| *bus == b).map_or(0.0, |(_, c)| c * WIND_SHAPE[t]);
        let pv = PV_UNITS.iter().find(|(bus, _)| *bus == b).map_or(0.0, |(_, c)| 0.5 * c * pv_shape(t));
        wind + pv
    });
    let mut cfg = ieee33(
        "enowa-wind",
        "Synthetic profiles: wind-dominated supply, daytime-peak demand",
        &LOAD_SHAPE_DAYTIME,
        generation,
    );
    // Bus 4 is the cheapest bidder after the two cheapest feeders.
    cfg.bid_price_factor[4] = 0.82;
    cfg
}

/// Single-bus scenario with flat prices and a `+-delta` flexibility box.
pub fn single_bus(scheduled: &[f64], generation: &[f64]) -> ScenarioConfig {
    let h = scheduled.len();
    let delta = 0.2;
    ScenarioConfig {
        id: "single-bus".into(),
        description: String::new(),
        topology: vec![],
        scheduled_load: vec![scheduled.to_vec()],
        generation: vec![generation.to_vec()],
        bess_specs: vec![],
        delta,
        epsilon: 0.05,
        eta: 0.95,
        price_mid: vec![vec![50.0; h]],
        price_lo_slope: vec![vec![1.0; h]],
        price_hi_slope: vec![vec![1.0; h]],
        import_price: vec![100.0; h],
        bid_price_factor: vec![0.7],
        utility_params: vec![UtilityFn { alpha: 80.0, beta: 15.0 }],
        flex_lo: vec![scheduled.iter().map(|s| (1.0 - delta) * s).collect()],
        flex_hi: vec![scheduled.iter().map(|s| (1.0 + delta) * s).collect()],
        timestep_hours: 1.0,
    }
}

/// Random valid scenario on a random tree with `buses` buses and `hours`
/// hours. Some buses and hours are given zero schedule to exercise the
/// degenerate paths.
pub fn random_scenario<R: Rng>(rng: &mut R, buses: usize, hours: usize) -> ScenarioConfig {
    let topology = (1..buses).map(|c| (BusId(rng.gen_range(0..c)), BusId(c))).collect();
    let delta = rng.gen_range(0.0..0.5);
    let scheduled = per_bus(buses, hours, |_, _| 0.0)
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..2.0) })
                .collect::<Vec<f64>>()
        })
        .collect::<Matrix>();
    let generation = (0..buses)
        .map(|_| {
            let cap = if rng.gen_bool(0.5) { rng.gen_range(0.0..4.0) } else { 0.0 };
            (0..hours).map(|_| cap * rng.gen_range(0.0..1.0)).collect()
        })
        .collect();
    let width = rng.gen_range(0.0..0.5);
    let flex_lo = scheduled
        .iter()
        .map(|r| r.iter().map(|s| (1.0 - width) * s).collect())
        .collect();
    let flex_hi = scheduled
        .iter()
        .map(|r| r.iter().map(|s| (1.0 + width) * s).collect())
        .collect();
    let units = rng.gen_range(0..3);
    let bess_specs = (0..units)
        .map(|_| {
            let cap = rng.gen_range(0.1..4.0);
            let lo = rng.gen_range(0.0..0.3) * cap;
            let hi = cap - rng.gen_range(0.0..0.3) * cap;
            BessSpec {
                bus: BusId(rng.gen_range(0..buses)),
                p_ch_max: rng.gen_range(0.0..2.0),
                p_dis_max: rng.gen_range(0.0..2.0),
                soc_min: lo,
                soc_max: hi,
                soc_initial: rng.gen_range(lo..=hi),
                eta: rng.gen_range(0.8..=1.0),
            }
        })
        .collect();
    let mut prices = |lo: f64, hi: f64| per_bus(buses, hours, |_, _| 0.0).into_iter().map(|r| r.into_iter().map(|_| rng.gen_range(lo..hi)).collect()).collect::<Matrix>();
    let price_mid = prices(20.0, 80.0);
    let price_lo_slope = prices(0.0, 5.0);
    let price_hi_slope = prices(0.0, 5.0);
    ScenarioConfig {
        id: "random".into(),
        description: String::new(),
        topology,
        scheduled_load: scheduled,
        generation,
        bess_specs,
        delta,
        epsilon: rng.gen_range(0.0..0.2),
        eta: rng.gen_range(0.8..=1.0),
        price_mid,
        price_lo_slope,
        price_hi_slope,
        import_price: (0..hours).map(|_| rng.gen_range(20.0..150.0)).collect(),
        bid_price_factor: (0..buses).map(|_| rng.gen_range(0.5..0.95)).collect(),
        utility_params: (0..buses)
            .map(|_| UtilityFn {
                alpha: rng.gen_range(20.0..150.0),
                beta: rng.gen_range(0.0..30.0),
            })
            .collect(),
        flex_lo,
        flex_hi,
        timestep_hours: 1.0,
    }
}
