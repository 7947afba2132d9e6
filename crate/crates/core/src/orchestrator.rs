//! End-to-end day-ahead and real-time run over one scenario, and the CSV
//! artifacts documenting each message exchanged along the way.
//!
//! Stage order: net-load dispatch, tariff bands, prosumer rescheduling, bid
//! submission, day-ahead clearing, then real-time requirements in list order,
//! each consuming the book left by its predecessor.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dispatch::{self, DispatchError, DispatchPlan};
use crate::market::{self, ClearingResult, MarketError, RtRequirement};
use crate::prosumer::{self, ConsumptionPlan, FlexBid, ProsumerError};
use crate::reporting::{self, MetricsSummary};
use crate::scenario::ScenarioConfig;
use crate::tariff::{self, TariffError, TariffSchedule};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("[validate] {}", .0.join("; "))]
    Validate(Vec<String>),
    #[error("[dispatch] {0}")]
    Dispatch(#[from] DispatchError),
    #[error("[tariff] {0}")]
    Tariff(#[from] TariffError),
    #[error("[prosumer] {0}")]
    Prosumer(#[from] ProsumerError),
    #[error("[market] {0}")]
    Market(#[from] MarketError),
    #[error("[output] {0}")]
    Io(#[from] io::Error),
    #[error("[output] {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario_id: String,
    pub horizon: usize,
    pub num_buses: usize,
    pub scheduled_load: Vec<Vec<f64>>,
    pub dispatch: DispatchPlan,
    pub tariff: TariffSchedule,
    pub consumption: ConsumptionPlan,
    pub bids: Vec<FlexBid>,
    pub da_result: ClearingResult,
    pub rt_results: Vec<(RtRequirement, ClearingResult)>,
    pub metrics: MetricsSummary,
}

pub fn run_pipeline(config: &ScenarioConfig, rt_reqs: &[RtRequirement]) -> Result<RunRecord, PipelineError> {
    let violations = config.validate();
    if !violations.is_empty() {
        return Err(PipelineError::Validate(violations));
    }
    let plan = dispatch::solve_lower(config)?;
    let tariff = tariff::build_bands(config, &plan.expected_load)?;
    let consumption = prosumer::optimize_plan(config, &tariff)?;
    let bids = prosumer::make_bids(&consumption, &config.scheduled_load, &config.bid_prices());
    let da_result = market::clear_day_ahead(&bids, &plan, config, &tariff, &consumption)?;

    let mut rt_results = Vec::with_capacity(rt_reqs.len());
    let mut book = da_result.residual_book.clone();
    for req in rt_reqs {
        if req.hour.0 >= config.horizon() {
            return Err(MarketError::Requirement(format!("hour {} outside the horizon", req.hour)).into());
        }
        let res = market::clear_real_time(&book, req)?;
        book = res.residual_book.clone();
        rt_results.push((*req, res));
    }

    let mut record = RunRecord {
        scenario_id: config.id.clone(),
        horizon: config.horizon(),
        num_buses: config.num_buses(),
        scheduled_load: config.scheduled_load.clone(),
        dispatch: plan,
        tariff,
        consumption,
        bids,
        da_result,
        rt_results,
        metrics: MetricsSummary::default(),
    };
    record.metrics = reporting::summarize(&record, config);
    Ok(record)
}

/// Formats a float so that parsing it back yields the same value. Negative
/// zero is written as `0`.
pub(crate) fn num(v: f64) -> String {
    format!("{}", v + 0.0)
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub const OUTPUT_FILES: [&str; 7] = [
    "dispatch.csv",
    "tariff.csv",
    "consumption.csv",
    "bids.csv",
    "clearing_da.csv",
    "clearing_rt.csv",
    "metrics.csv",
];

/// Writes the seven run artifacts into `out_dir` and returns their paths.
/// Identical records produce byte-identical files.
pub fn write_outputs(record: &RunRecord, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, PipelineError> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let paths: Vec<PathBuf> = OUTPUT_FILES.iter().map(|f| dir.join(f)).collect();
    let (n, h) = (record.num_buses, record.horizon);
    let plan = &record.dispatch;

    let mut rows = Vec::new();
    let mut series = |name: &str, entity: Option<usize>, values: &[f64]| {
        for (t, v) in values.iter().enumerate() {
            rows.push(vec![
                name.to_string(),
                entity.map(|e| e.to_string()).unwrap_or_default(),
                t.to_string(),
                num(*v),
            ]);
        }
    };
    for (bus, row) in plan.expected_load.iter().enumerate() {
        series("expected_load", Some(bus), row);
    }
    series("scale", None, &plan.scale);
    series("net_load", None, &plan.net_load);
    series("residual_after_bess", None, &plan.residual_after_bess);
    let bess = &plan.bess_schedule;
    for u in 0..bess.num_units() {
        series("bess_p_ch", Some(u), &bess.p_ch[u]);
        series("bess_p_dis", Some(u), &bess.p_dis[u]);
        series("bess_soc", Some(u), &bess.soc[u]);
    }
    for (e, row) in plan.flows.flow.iter().enumerate() {
        series("flow", Some(e), row);
    }
    series("root_import", None, &plan.flows.root_import);
    write_csv(&paths[0], &["series", "entity", "hour", "value"], rows)?;

    let mut rows = Vec::new();
    for bus in 0..n {
        for t in 0..h {
            let b = record.tariff.band(bus, t);
            rows.push(vec![
                bus.to_string(),
                t.to_string(),
                num(record.scheduled_load[bus][t]),
                num(record.tariff.expected_load[bus][t]),
                num(b.e_lo),
                num(b.e_hi),
                num(b.p_mid),
                num(b.slope_lo),
                num(b.slope_hi),
            ]);
        }
    }
    write_csv(
        &paths[1],
        &["bus", "hour", "scheduled", "expected", "e_lo", "e_hi", "p_mid", "slope_lo", "slope_hi"],
        rows,
    )?;

    let mut rows = Vec::new();
    for bus in 0..n {
        for t in 0..h {
            let e = record.consumption.actual_load[bus][t];
            rows.push(vec![
                bus.to_string(),
                t.to_string(),
                num(record.scheduled_load[bus][t]),
                num(e),
                num(record.tariff.band(bus, t).price(e)),
            ]);
        }
    }
    write_csv(&paths[2], &["bus", "hour", "scheduled", "actual", "price"], rows)?;

    let rows = record.bids.iter().map(|b| {
        vec![
            b.bus.to_string(),
            b.hour.to_string(),
            num(b.quantity),
            b.direction.to_string(),
            num(b.unit_price),
        ]
    });
    write_csv(&paths[3], &["bus", "hour", "quantity", "direction", "unit_price"], rows)?;

    let da = &record.da_result;
    let mut rows: Vec<Vec<String>> = da
        .accepted
        .iter()
        .map(|a| {
            vec![
                "bid".into(),
                "DA".into(),
                a.bid.hour.to_string(),
                a.bid.bus.to_string(),
                a.bid.direction.to_string(),
                num(a.cleared_qty),
                num(a.bid.unit_price),
            ]
        })
        .collect();
    for (t, e_c) in da.import_qty.iter().enumerate() {
        rows.push(vec![
            "import".into(),
            "DA".into(),
            t.to_string(),
            String::new(),
            String::new(),
            num(*e_c),
            String::new(),
        ]);
    }
    write_csv(
        &paths[4],
        &["record", "stage", "hour", "bus", "direction", "cleared_qty", "unit_price"],
        rows,
    )?;

    let mut rows = Vec::new();
    for (k, (req, res)) in record.rt_results.iter().enumerate() {
        rows.push(vec![
            "requirement".into(),
            "RT".into(),
            k.to_string(),
            req.hour.to_string(),
            String::new(),
            req.direction.to_string(),
            num(req.quantity),
            String::new(),
        ]);
        for a in &res.accepted {
            rows.push(vec![
                "bid".into(),
                "RT".into(),
                k.to_string(),
                a.bid.hour.to_string(),
                a.bid.bus.to_string(),
                a.bid.direction.to_string(),
                num(a.cleared_qty),
                num(a.bid.unit_price),
            ]);
        }
        rows.push(vec![
            "shortfall".into(),
            "RT".into(),
            k.to_string(),
            req.hour.to_string(),
            String::new(),
            req.direction.to_string(),
            num(res.shortfall),
            String::new(),
        ]);
    }
    write_csv(
        &paths[5],
        &["record", "stage", "requirement", "hour", "bus", "direction", "cleared_qty", "unit_price"],
        rows,
    )?;

    write_csv(&paths[6], &["metric", "value"], record.metrics.rows())?;
    Ok(paths)
}
