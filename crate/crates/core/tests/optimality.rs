mod common;

use flexmarket_core::oracle;
use flexmarket_core::prosumer::{self, net_value};
use flexmarket_core::scenario::presets;
use flexmarket_core::{build_bands, run_pipeline, solve_lower, Direction};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn lower_level_beats_per_bus_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..30 {
        let cfg = presets::random_scenario(&mut rng, 4, 3);
        let plan = solve_lower(&cfg).unwrap();
        for t in 0..cfg.horizon() {
            let sched: Vec<f64> = cfg.scheduled_load.iter().map(|r| r[t]).collect();
            let grid = oracle::lower_hour_grid(cfg.total_generation(t), &sched, cfg.delta, 21);
            assert!(plan.net_load[t].abs() <= grid + 1e-12);
        }
    }
}

#[test]
fn prosumer_solutions_are_separable() {
    // Perturbing one bus's utility must leave every other bus-hour untouched.
    let cfg = presets::ieee33_pv();
    let plan = solve_lower(&cfg).unwrap();
    let tariff = build_bands(&cfg, &plan.expected_load).unwrap();
    let base = prosumer::optimize_plan(&cfg, &tariff).unwrap();

    let mut other = cfg.clone();
    other.utility_params[7].alpha += 25.0;
    let changed = prosumer::optimize_plan(&other, &tariff).unwrap();
    for bus in (0..cfg.num_buses()).filter(|&b| b != 7) {
        assert_eq!(base.actual_load[bus], changed.actual_load[bus]);
    }
    for bus in 0..cfg.num_buses() {
        for t in 0..cfg.horizon() {
            let (e, _) = prosumer::optimize_consumption(
                tariff.band(bus, t),
                &cfg.utility_params[bus],
                cfg.flex_lo[bus][t],
                cfg.flex_hi[bus][t],
            )
            .unwrap();
            assert_eq!(e, base.actual_load[bus][t]);
        }
    }
}

#[test]
fn prosumer_optimum_has_no_improving_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..2000 {
        let (band, util, lo, hi) = oracle::random_prosumer_instance(&mut rng);
        let (e, v) = prosumer::optimize_consumption(&band, &util, lo, hi).unwrap();
        // g is continuous and piecewise concave-or-convex quadratic; a small
        // feasible step either way cannot improve a global maximum.
        for step in [1e-3, 1e-5] {
            for x in [e - step, e + step] {
                if lo <= x && x <= hi {
                    assert!(net_value(&band, &util, x) <= v + 1e-12 * v.abs().max(1.0));
                }
            }
        }
    }
}

#[test]
fn day_ahead_import_only_after_cheaper_bids_exhausted() {
    for (name, cfg, reqs) in common::bundled() {
        let rec = run_pipeline(&cfg, &reqs).unwrap();
        for t in 0..cfg.horizon() {
            let import = rec.da_result.import_qty[t];
            let pi = cfg.import_price[t];
            let residual_cheap_down = rec
                .da_result
                .residual_book
                .iter()
                .filter(|b| b.hour.0 == t && b.direction == Direction::Down && b.unit_price < pi)
                .count();
            if import > 0.0 {
                assert_eq!(residual_cheap_down, 0, "{name} hour {t}: imports while cheaper bids remain");
            }
        }
        assert!(rec
            .da_result
            .accepted
            .iter()
            .all(|a| a.bid.direction == Direction::Down));
    }
}
