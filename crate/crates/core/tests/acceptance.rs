//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p flexmarket-core --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use flexmarket_core::bess::{dispatch_residual, verify_schedule};
use flexmarket_core::market::{self, BALANCE_TOL};
use flexmarket_core::oracle;
use flexmarket_core::reporting::{self, FigureOptions};
use flexmarket_core::scenario::{presets, BessSpec, BusId, ScenarioConfig};
use flexmarket_core::{build_bands, run_pipeline, solve_lower, write_outputs, Direction, RtRequirement, RunRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("runtime {took:.2?} exceeds {limit:?}"))
}

fn report(failures: &[String]) -> Result<(), String> {
    ensure(failures.is_empty(), || {
        let shown: Vec<_> = failures.iter().take(3).cloned().collect();
        format!("{} failures, e.g. {}", failures.len(), shown.join("; "))
    })
}

fn run(cfg: &ScenarioConfig, reqs: &[RtRequirement]) -> Result<RunRecord, String> {
    run_pipeline(cfg, reqs).map_err(|e| e.to_string())
}

fn tariff_correctness() -> Outcome {
    let start = Instant::now();
    let r = oracle::check_tariff(10_000, 1);
    report(&r.failures)?;
    let mut mismatches = Vec::new();
    for (name, cfg, _) in common::bundled() {
        let plan = solve_lower(&cfg).map_err(|e| e.to_string())?;
        let tariff = build_bands(&cfg, &plan.expected_load).map_err(|e| e.to_string())?;
        for bus in 0..cfg.num_buses() {
            for t in 0..cfg.horizon() {
                let band = tariff.band(bus, t);
                if band.price(cfg.scheduled_load[bus][t]) != band.p_mid {
                    mismatches.push(format!("{name} bus {bus} hour {t}"));
                }
            }
        }
    }
    report(&mismatches)?;
    within(Duration::from_secs(1), start)?;
    Ok(format!("{} pairs, max form gap {:e}, price(E_sch) = P_mid on bundled scenarios", r.instances, r.max_error))
}

fn band_containment() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = Vec::new();
    let mut checked = 0usize;
    for i in 0..100 {
        let buses = rng.gen_range(1..=12);
        let hours = rng.gen_range(1..=24);
        let cfg = presets::random_scenario(&mut rng, buses, hours);
        let plan = solve_lower(&cfg).map_err(|e| e.to_string())?;
        let tariff = build_bands(&cfg, &plan.expected_load).map_err(|e| e.to_string())?;
        for bus in 0..buses {
            for t in 0..hours {
                let b = tariff.band(bus, t);
                let s = cfg.scheduled_load[bus][t];
                checked += 1;
                if !(b.e_lo <= s && s <= b.e_hi) {
                    failures.push(format!("scenario {i} bus {bus} hour {t}: {s} not in [{}, {}]", b.e_lo, b.e_hi));
                }
            }
        }
    }
    report(&failures)?;
    within(Duration::from_secs(5), start)?;
    Ok(format!("100 scenarios, {checked} bus-hours"))
}

fn lower_level() -> Outcome {
    let start = Instant::now();
    let r = oracle::check_lower(200, 3);
    report(&r.failures)?;
    within(Duration::from_secs(30), start)?;
    Ok(format!("{} instances, max gap to scan {:e} MWh, clamp exact", r.instances, r.max_error))
}

fn bess_model() -> Outcome {
    let mut failures = Vec::new();
    let mut schedules = 0;
    let mut check = |label: &str, specs: &[BessSpec], residual: &[f64], dt: f64| -> Result<(), String> {
        let s = dispatch_residual(specs, residual, dt).map_err(|e| e.to_string())?;
        schedules += 1;
        failures.extend(verify_schedule(specs, &s, dt).into_iter().map(|v| format!("{label}: {v}")));
        for (t, r) in residual.iter().enumerate() {
            let after = r - s.total_net(t);
            if after.abs() > r.abs() {
                failures.push(format!("{label} hour {t}: |{after}| > |{r}|"));
            }
        }
        Ok(())
    };

    for (name, cfg, _) in common::bundled() {
        let plan = solve_lower(&cfg).map_err(|e| e.to_string())?;
        check(&name, &cfg.bess_specs, &plan.net_load, cfg.timestep_hours)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..200 {
        let units = rng.gen_range(1..=3);
        let specs: Vec<BessSpec> = (0..units)
            .map(|u| {
                let soc_min = rng.gen_range(0.0..0.5);
                let soc_max = soc_min + rng.gen_range(0.1..3.0);
                BessSpec {
                    bus: BusId(u),
                    p_ch_max: rng.gen_range(0.0..2.0),
                    p_dis_max: rng.gen_range(0.0..2.0),
                    soc_min,
                    soc_max,
                    soc_initial: rng.gen_range(soc_min..=soc_max),
                    eta: rng.gen_range(0.5..=1.0),
                }
            })
            .collect();
        let residual: Vec<f64> = (0..24).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let dt = [1.0, 0.5, 0.25][i % 3];
        check(&format!("random {i}"), &specs, &residual, dt)?;
    }

    let unit = BessSpec {
        bus: BusId(0),
        p_ch_max: 0.1,
        p_dis_max: 0.1,
        soc_min: 0.0,
        soc_max: 3.0,
        soc_initial: 0.5,
        eta: 0.95,
    };
    let s = dispatch_residual(&[unit], &[0.1], 1.0).map_err(|e| e.to_string())?;
    ensure(s.p_ch[0][0] == 0.1 && s.soc[0][1] == 0.595, || format!("soc example gave {}", s.soc[0][1]))?;
    report(&failures)?;
    Ok(format!("{schedules} schedules verified, soc example 0.595 exact"))
}

fn middle_level() -> Outcome {
    let start = Instant::now();
    let r = oracle::check_prosumer(500, 5, 100_001);
    report(&r.failures)?;
    within(Duration::from_secs(10), start)?;
    Ok(format!("{} instances, max objective gap {:e}", r.instances, r.max_error))
}

fn merit_order_on(rec: &RunRecord) -> Vec<String> {
    let mut v = market::merit_order_violations(&rec.bids, &rec.da_result);
    let mut book = &rec.da_result.residual_book;
    for (_, res) in &rec.rt_results {
        v.extend(market::merit_order_violations(book, res));
        book = &res.residual_book;
    }
    v
}

fn upper_level() -> Outcome {
    let start = Instant::now();
    let r = oracle::check_market(200, 6);
    report(&r.failures)?;
    let mut violations = Vec::new();
    for (name, cfg, reqs) in common::bundled() {
        let rec = run(&cfg, &reqs)?;
        violations.extend(merit_order_on(&rec).into_iter().map(|v| format!("{name}: {v}")));
    }
    report(&violations)?;
    within(Duration::from_secs(60), start)?;
    Ok(format!("{} instances, max objective gap {:e}, bundled runs merit-ordered", r.instances, r.max_error))
}

/// Real-time clearing took bids from the residual book in ascending price
/// order and met the requirement.
fn ascending_residual_clearing(rec: &RunRecord) -> Result<(RtRequirement, Vec<(usize, f64)>), String> {
    let (req, res) = rec.rt_results.first().ok_or("no real-time requirement")?;
    ensure(!res.accepted.is_empty(), || "real-time cleared nothing".into())?;
    ensure(res.shortfall == 0.0, || format!("shortfall {}", res.shortfall))?;
    ensure((res.cleared_total() - req.quantity).abs() <= 1e-12, || {
        format!("cleared {} of {}", res.cleared_total(), req.quantity)
    })?;
    let prices: Vec<(usize, f64)> = res.accepted.iter().map(|a| (a.bid.bus.0, a.bid.unit_price)).collect();
    ensure(prices.windows(2).all(|w| w[0].1 <= w[1].1), || format!("not ascending: {prices:?}"))?;
    for a in &res.accepted {
        let offered = rec
            .da_result
            .residual_book
            .iter()
            .find(|b| b.bid_key() == a.bid.bid_key())
            .ok_or_else(|| format!("bus {} not in the residual book", a.bid.bus))?;
        ensure(a.cleared_qty <= offered.quantity, || format!("bus {} over-cleared", a.bid.bus))?;
    }
    report(&market::merit_order_violations(&rec.da_result.residual_book, res))?;
    Ok((*req, prices))
}

fn scenario_a() -> Outcome {
    let start = Instant::now();
    let cfg = common::load("ieee33_pv.json");
    ensure(cfg.delta == 0.2 && cfg.eta == 0.95 && cfg.epsilon == 0.05, || "parameters differ".into())?;
    let reqs = vec![common::BUNDLED[0].1.parse().map_err(|e: market::MarketError| e.to_string())?];
    let rec = run(&cfg, &reqs)?;

    let bus = 7;
    let surplus_up = (0..cfg.horizon()).filter(|&t| {
        cfg.total_generation(t) > cfg.total_scheduled(t)
            && rec.consumption.actual_load[bus][t] > cfg.scheduled_load[bus][t]
    });
    let night_down = (0..cfg.horizon()).filter(|&t| {
        cfg.total_generation(t) == 0.0 && rec.consumption.actual_load[bus][t] < cfg.scheduled_load[bus][t]
    });
    let (up, down) = (surplus_up.count(), night_down.count());
    ensure(up >= 1, || "bus 7 never above schedule in a surplus hour".into())?;
    ensure(down >= 1, || "bus 7 never below schedule at night".into())?;
    report(&market::merit_order_violations(&rec.bids, &rec.da_result))?;
    let (req, prices) = ascending_residual_clearing(&rec)?;
    within(Duration::from_secs(10), start)?;
    let buses: Vec<String> = prices.iter().map(|(b, p)| format!("{b}@{p:.2}")).collect();
    Ok(format!(
        "bus 7 up in {up} surplus hours, down in {down} night hours; {} MW at hour {} cleared {}",
        req.quantity,
        req.hour,
        buses.join(" < ")
    ))
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn scenario_b() -> Outcome {
    let start = Instant::now();
    let cfg = common::load("enowa_wind.json");
    let reqs = vec![common::BUNDLED[1].1.parse().map_err(|e: market::MarketError| e.to_string())?];
    let rec = run(&cfg, &reqs)?;

    let h = cfg.horizon();
    let ratio: Vec<f64> = (0..h).map(|t| cfg.total_generation(t) / cfg.total_scheduled(t)).collect();
    let shift: Vec<f64> = (0..h)
        .map(|t| {
            let actual: f64 = rec.consumption.actual_load.iter().map(|r| r[t]).sum();
            actual / cfg.total_scheduled(t) - 1.0
        })
        .collect();
    let rho = correlation(&ratio, &shift);
    ensure(rho > 0.5, || format!("consumption shift weakly tied to generation (r = {rho:.3})"))?;

    let (req, res) = &rec.rt_results[0];
    let hour = req.hour;
    let hour_bids: Vec<_> = rec.bids.iter().filter(|b| b.hour == hour && b.direction == req.direction).collect();
    let cheapest = hour_bids
        .iter()
        .min_by(|a, b| a.unit_price.total_cmp(&b.unit_price))
        .ok_or("no bids at the requirement hour")?;
    let cheapest_left = rec
        .da_result
        .residual_book
        .iter()
        .find(|b| b.bid_key() == cheapest.bid_key())
        .map_or(0.0, |b| b.quantity);
    ensure(cheapest_left == 0.0, || format!("cheapest bus {} still has {cheapest_left} MW", cheapest.bus))?;
    let (_, prices) = ascending_residual_clearing(&rec)?;
    let first = res.accepted[0].bid.bus;
    ensure(first == BusId(4), || format!("real-time took bus {first} first, expected bus 4"))?;
    let next_priced = rec
        .da_result
        .residual_book
        .iter()
        .filter(|b| b.hour == hour && b.direction == req.direction)
        .min_by(|a, b| a.unit_price.total_cmp(&b.unit_price))
        .map(|b| b.bus);
    ensure(next_priced == Some(first), || "bus 4 is not the cheapest residual bid".into())?;
    let da_hour = rec.da_result.accepted.iter().filter(|a| a.bid.hour == hour).count();
    within(Duration::from_secs(10), start)?;
    Ok(format!(
        "shift-generation correlation {rho:.3}; hour {hour}: {da_hour} bids cleared day-ahead incl. cheapest bus {}, real time took bus 4 then {} more",
        cheapest.bus,
        prices.len() - 1
    ))
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn end_to_end(cfg: &ScenarioConfig, reqs: &[RtRequirement], dir: &Path) -> Result<(), String> {
    let rec = run(cfg, reqs)?;
    write_outputs(&rec, dir).map_err(|e| e.to_string())?;
    let opts = FigureOptions {
        capacity_hour: reqs[0].hour.0,
        ..FigureOptions::default()
    };
    reporting::write_figure_tables(&reporting::figure_tables(&rec, opts), dir.join("figures"))
        .map_err(|e| e.to_string())?;
    Ok(())
}

fn determinism() -> Outcome {
    let mut files = 0;
    for (name, cfg, reqs) in common::bundled() {
        let a = tempfile::tempdir().map_err(|e| e.to_string())?;
        let b = tempfile::tempdir().map_err(|e| e.to_string())?;
        end_to_end(&cfg, &reqs, a.path())?;
        end_to_end(&cfg, &reqs, b.path())?;
        let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
        ensure(sa == sb, || format!("{name}: output directories differ"))?;
        files += sa.len();
    }
    Ok(format!("{files} files byte-identical across repeated runs"))
}

fn conservation() -> Outcome {
    let mut runs: Vec<(String, ScenarioConfig, Vec<RtRequirement>)> = common::bundled();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for i in 0..100 {
        let buses = rng.gen_range(1..=8);
        let hours = rng.gen_range(1..=12);
        let cfg = presets::random_scenario(&mut rng, buses, hours);
        let reqs = (0..rng.gen_range(0..=4))
            .map(|_| RtRequirement {
                hour: flexmarket_core::HourIndex(rng.gen_range(0..hours)),
                quantity: rng.gen_range(0.0..0.5),
                direction: if rng.gen_bool(0.5) { Direction::Up } else { Direction::Down },
            })
            .collect();
        runs.push((format!("random {i}"), cfg, reqs));
    }
    let mut failures = Vec::new();
    let mut bids = 0;
    let mut min_slack = f64::INFINITY;
    for (name, cfg, reqs) in &runs {
        let rec = run(cfg, reqs)?;
        bids += rec.bids.len();
        let rt: Vec<_> = rec.rt_results.iter().map(|(_, r)| r.clone()).collect();
        failures.extend(
            market::conservation_violations(&rec.bids, &rec.da_result, &rt)
                .into_iter()
                .map(|v| format!("{name}: {v}")),
        );
        for (t, s) in market::supply_slack(cfg, &rec.dispatch, &rec.da_result).into_iter().enumerate() {
            min_slack = min_slack.min(s);
            if s < -BALANCE_TOL {
                failures.push(format!("{name} hour {t}: slack {s}"));
            }
        }
    }
    report(&failures)?;
    Ok(format!("{} runs, {bids} bids conserved exactly, min supply slack {min_slack:e}", runs.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("tariff correctness", tariff_correctness),
        ("band containment", band_containment),
        ("lower-level optimality", lower_level),
        ("BESS model", bess_model),
        ("middle-level exactness", middle_level),
        ("upper-level oracle equivalence", upper_level),
        ("scenario A (IEEE-33 PV)", scenario_a),
        ("scenario B (wind, daytime peak)", scenario_b),
        ("determinism", determinism),
        ("conservation", conservation),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS [{}] {name}: {detail} ({took:.2?})", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name}: {why} ({took:.2?})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
