//! Incentive-tariff flexibility markets on radial distribution feeders.
//!
//! A run proceeds in three levels:
//!
//! 1. the market operator minimizes absolute system net load by rescaling
//!    flexible demand ([`dispatch`]), dispatches storage on what remains
//!    ([`bess`]) and publishes tolerance-band tariffs ([`tariff`]);
//! 2. each prosumer re-optimizes its consumption against its tariff and
//!    offers the deviation from its schedule as a bid ([`prosumer`]);
//! 3. the operator clears bids day-ahead against imports, then serves
//!    real-time requirements from the leftover book ([`market`]).
//!
//! [`orchestrator::run_pipeline`] chains the stages; [`reporting`] turns a
//! run into metrics and plot-ready tables. [`oracle`] holds brute-force
//! reference solvers used to cross-check the closed-form ones.

pub mod bess;
pub mod dispatch;
pub mod market;
pub mod network;
pub mod oracle;
pub mod orchestrator;
pub mod prosumer;
pub mod reporting;
pub mod scenario;
pub mod tariff;

pub use bess::{BessSchedule, dispatch_residual, verify_schedule};
pub use dispatch::{DispatchPlan, solve_lower};
pub use market::{ClearingResult, RtRequirement, clear_day_ahead, clear_real_time};
pub use network::{FeederTree, FlowResult, compute_flows};
pub use orchestrator::{PipelineError, RunRecord, run_pipeline, write_outputs};
pub use prosumer::{ConsumptionPlan, Direction, FlexBid, make_bids, optimize_consumption};
pub use reporting::{MetricsSummary, figure_tables, summarize};
pub use scenario::{BessSpec, BusId, HourIndex, ScenarioConfig, UtilityFn, load_scenario};
pub use tariff::{TariffBand, TariffSchedule, build_bands};
