//! Run metrics and plot-ready tables.
//!
//! Every table is a pure function of [`FigureInputs`], which can be extracted
//! either from an in-memory [`RunRecord`] or from the CSV artifacts written by
//! [`write_outputs`](crate::orchestrator::write_outputs). Both routes yield
//! identical tables.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::orchestrator::{num, PipelineError, RunRecord};
use crate::prosumer::{self, Direction};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub net_load_l1_before: f64,
    pub net_load_l1_after: f64,
    pub residual_after_bess_l1: f64,
    pub total_upper_objective: f64,
    /// Per bus: change in hourly surplus from rescheduling plus payments for
    /// cleared bids.
    pub per_bus_revenue_delta: Vec<f64>,
    pub offered_mwh: f64,
    pub da_cleared_mwh: f64,
    pub rt_cleared_mwh: f64,
    pub import_mwh: f64,
    pub bid_acceptance_rate: f64,
}

impl MetricsSummary {
    pub(crate) fn rows(&self) -> Vec<Vec<String>> {
        let mut rows = vec![
            ("net_load_l1_before", self.net_load_l1_before),
            ("net_load_l1_after", self.net_load_l1_after),
            ("residual_after_bess_l1", self.residual_after_bess_l1),
            ("total_upper_objective", self.total_upper_objective),
            ("offered_mwh", self.offered_mwh),
            ("da_cleared_mwh", self.da_cleared_mwh),
            ("rt_cleared_mwh", self.rt_cleared_mwh),
            ("import_mwh", self.import_mwh),
            ("bid_acceptance_rate", self.bid_acceptance_rate),
        ]
        .into_iter()
        .map(|(k, v)| vec![k.to_string(), num(v)])
        .collect::<Vec<_>>();
        for (bus, v) in self.per_bus_revenue_delta.iter().enumerate() {
            rows.push(vec![format!("revenue_delta_bus_{bus}"), num(*v)]);
        }
        rows
    }
}

pub fn summarize(record: &RunRecord, config: &ScenarioConfig) -> MetricsSummary {
    let dt = config.timestep_hours;
    let h = record.horizon;
    let net_load_l1_before = (0..h)
        .map(|t| (config.total_generation(t) - config.total_scheduled(t)).abs() * dt)
        .sum();
    let net_load_l1_after: f64 = record.dispatch.net_load.iter().map(|v| v.abs() * dt).sum();
    let residual_after_bess_l1 = record.dispatch.residual_after_bess.iter().map(|v| v.abs() * dt).sum();

    let mut per_bus_revenue_delta = vec![0.0; record.num_buses];
    for (bus, delta) in per_bus_revenue_delta.iter_mut().enumerate() {
        let util = &config.utility_params[bus];
        for t in 0..h {
            let band = record.tariff.band(bus, t);
            *delta += prosumer::net_value(band, util, record.consumption.actual_load[bus][t])
                - prosumer::net_value(band, util, config.scheduled_load[bus][t]);
        }
    }
    let rt = record.rt_results.iter().map(|(_, r)| r);
    for a in record.da_result.accepted.iter().chain(rt.flat_map(|r| r.accepted.iter())) {
        per_bus_revenue_delta[a.bid.bus.0] += a.bid.unit_price * a.cleared_qty;
    }

    let offered_mwh: f64 = record.bids.iter().map(|b| b.quantity * dt).sum();
    let da_cleared_mwh = record.da_result.cleared_total() * dt;
    let rt_cleared_mwh: f64 = record.rt_results.iter().map(|(_, r)| r.cleared_total() * dt).sum();
    let rt_objective: f64 = record.rt_results.iter().map(|(_, r)| r.objective).sum();
    MetricsSummary {
        net_load_l1_before,
        net_load_l1_after,
        residual_after_bess_l1,
        total_upper_objective: record.da_result.objective + rt_objective,
        per_bus_revenue_delta,
        offered_mwh,
        da_cleared_mwh,
        rt_cleared_mwh,
        import_mwh: record.da_result.import_qty.iter().sum::<f64>() * dt,
        bid_acceptance_rate: if offered_mwh > 0.0 {
            (da_cleared_mwh + rt_cleared_mwh) / offered_mwh
        } else {
            0.0
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FigureOptions {
    /// Bus whose demand comparison is tabulated.
    pub focus_bus: usize,
    /// Hour for the capacity-versus-cleared table.
    pub capacity_hour: usize,
}

impl Default for FigureOptions {
    fn default() -> Self {
        FigureOptions {
            focus_bus: 7,
            capacity_hour: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Cleared {
    requirement: Option<usize>,
    bus: usize,
    hour: usize,
    direction: Direction,
    qty: f64,
    price: f64,
}

/// Everything the figure tables are built from.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureInputs {
    /// `(scheduled, expected, actual, e_lo, e_hi)` per `[bus][hour]`.
    demand: Vec<Vec<[f64; 5]>>,
    /// `(bus, hour, direction, quantity, unit_price)` for every offered bid.
    bids: Vec<(usize, usize, Direction, f64, f64)>,
    cleared_da: Vec<Cleared>,
    cleared_rt: Vec<Cleared>,
}

impl FigureInputs {
    pub fn from_record(record: &RunRecord) -> Self {
        let demand = (0..record.num_buses)
            .map(|bus| {
                (0..record.horizon)
                    .map(|t| {
                        let b = record.tariff.band(bus, t);
                        [
                            record.scheduled_load[bus][t],
                            record.tariff.expected_load[bus][t],
                            record.consumption.actual_load[bus][t],
                            b.e_lo,
                            b.e_hi,
                        ]
                    })
                    .collect()
            })
            .collect();
        let bids = record
            .bids
            .iter()
            .map(|b| (b.bus.0, b.hour.0, b.direction, b.quantity, b.unit_price))
            .collect();
        let cleared = |req: Option<usize>, a: &crate::market::AcceptedBid| Cleared {
            requirement: req,
            bus: a.bid.bus.0,
            hour: a.bid.hour.0,
            direction: a.bid.direction,
            qty: a.cleared_qty,
            price: a.bid.unit_price,
        };
        FigureInputs {
            demand,
            bids,
            cleared_da: record.da_result.accepted.iter().map(|a| cleared(None, a)).collect(),
            cleared_rt: record
                .rt_results
                .iter()
                .enumerate()
                .flat_map(|(k, (_, r))| r.accepted.iter().map(move |a| cleared(Some(k), a)))
                .collect(),
        }
    }

    /// Rebuilds the inputs from a directory written by `write_outputs`.
    pub fn from_output_dir(dir: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let dir = dir.as_ref();
        let read = |name: &str| -> Result<Vec<HashMap<String, String>>, PipelineError> {
            let mut r = csv::Reader::from_path(dir.join(name))?;
            let header = r.headers()?.clone();
            r.records()
                .map(|rec| {
                    let rec = rec?;
                    Ok(header.iter().map(String::from).zip(rec.iter().map(String::from)).collect())
                })
                .collect()
        };
        let bad = |what: String| PipelineError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, what));
        let f = |row: &HashMap<String, String>, k: &str| -> Result<f64, PipelineError> {
            row.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(format!("bad float column {k}")))
        };
        let u = |row: &HashMap<String, String>, k: &str| -> Result<usize, PipelineError> {
            row.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(format!("bad index column {k}")))
        };
        let d = |row: &HashMap<String, String>| -> Result<Direction, PipelineError> {
            row.get("direction")
                .and_then(|v| v.parse::<i8>().ok())
                .and_then(|v| Direction::try_from(v).ok())
                .ok_or_else(|| bad("bad direction".into()))
        };

        let tariff = read("tariff.csv")?;
        let consumption = read("consumption.csv")?;
        let n = tariff.iter().map(|r| u(r, "bus")).collect::<Result<Vec<_>, _>>()?.into_iter().max().map_or(0, |m| m + 1);
        let h = tariff.iter().map(|r| u(r, "hour")).collect::<Result<Vec<_>, _>>()?.into_iter().max().map_or(0, |m| m + 1);
        let mut demand = vec![vec![[0.0; 5]; h]; n];
        for row in &tariff {
            let cell = &mut demand[u(row, "bus")?][u(row, "hour")?];
            cell[0] = f(row, "scheduled")?;
            cell[1] = f(row, "expected")?;
            cell[3] = f(row, "e_lo")?;
            cell[4] = f(row, "e_hi")?;
        }
        for row in &consumption {
            demand[u(row, "bus")?][u(row, "hour")?][2] = f(row, "actual")?;
        }

        let bids = read("bids.csv")?
            .iter()
            .map(|r| Ok((u(r, "bus")?, u(r, "hour")?, d(r)?, f(r, "quantity")?, f(r, "unit_price")?)))
            .collect::<Result<Vec<_>, PipelineError>>()?;
        let cleared_rows = |name: &str, rt: bool| -> Result<Vec<Cleared>, PipelineError> {
            read(name)?
                .iter()
                .filter(|r| r.get("record").map(String::as_str) == Some("bid"))
                .map(|r| {
                    Ok(Cleared {
                        requirement: if rt { Some(u(r, "requirement")?) } else { None },
                        bus: u(r, "bus")?,
                        hour: u(r, "hour")?,
                        direction: d(r)?,
                        qty: f(r, "cleared_qty")?,
                        price: f(r, "unit_price")?,
                    })
                })
                .collect()
        };
        Ok(FigureInputs {
            demand,
            bids,
            cleared_da: cleared_rows("clearing_da.csv", false)?,
            cleared_rt: cleared_rows("clearing_rt.csv", true)?,
        })
    }
}

/// Builds the named plot-ready tables from a run record.
pub fn figure_tables(record: &RunRecord, opts: FigureOptions) -> BTreeMap<String, Table> {
    tables_from_inputs(&FigureInputs::from_record(record), opts)
}

pub fn tables_from_inputs(inputs: &FigureInputs, opts: FigureOptions) -> BTreeMap<String, Table> {
    let mut out = BTreeMap::new();

    let mut demand = Table::new(&["hour", "scheduled", "expected", "actual", "band_lo", "band_hi"]);
    if let Some(rows) = inputs.demand.get(opts.focus_bus) {
        for (t, c) in rows.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(c.iter().map(|v| num(*v)));
            demand.rows.push(row);
        }
    }
    out.insert(format!("bus{}_demand", opts.focus_bus), demand);

    let mut prices = Table::new(&["bus", "hour", "direction", "unit_price"]);
    let mut sorted_bids = inputs.bids.clone();
    sorted_bids.sort_by_key(|b| (b.0, b.1));
    for (bus, hour, dir, _, price) in &sorted_bids {
        prices.rows.push(vec![bus.to_string(), hour.to_string(), dir.to_string(), num(*price)]);
    }
    out.insert("bid_prices".into(), prices);

    let mut da = Table::new(&["bus", "hour", "direction", "qty", "unit_price"]);
    for c in &inputs.cleared_da {
        da.rows.push(vec![c.bus.to_string(), c.hour.to_string(), c.direction.to_string(), num(c.qty), num(c.price)]);
    }
    out.insert("cleared_da".into(), da);

    let mut rt = Table::new(&["requirement", "bus", "hour", "direction", "qty", "unit_price"]);
    for c in &inputs.cleared_rt {
        rt.rows.push(vec![
            c.requirement.unwrap_or_default().to_string(),
            c.bus.to_string(),
            c.hour.to_string(),
            c.direction.to_string(),
            num(c.qty),
            num(c.price),
        ]);
    }
    out.insert("cleared_rt".into(), rt);

    let hour = opts.capacity_hour;
    let mut cap = Table::new(&["bus", "direction", "unit_price", "offered", "cleared_da", "cleared_rt"]);
    for (bus, h, dir, qty, price) in sorted_bids.iter().filter(|b| b.1 == hour) {
        let sum = |list: &[Cleared]| -> f64 {
            list.iter().filter(|c| c.bus == *bus && c.hour == *h).map(|c| c.qty).sum()
        };
        cap.rows.push(vec![
            bus.to_string(),
            dir.to_string(),
            num(*price),
            num(*qty),
            num(sum(&inputs.cleared_da)),
            num(sum(&inputs.cleared_rt)),
        ]);
    }
    out.insert(format!("capacity_h{hour}"), cap);
    out
}

/// Writes each table as `<dir>/<name>.csv`.
pub fn write_figure_tables(tables: &BTreeMap<String, Table>, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, PipelineError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (name, table) in tables {
        let path = dir.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}
