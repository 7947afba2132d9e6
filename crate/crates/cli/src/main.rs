//! `flexmarket` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use flexmarket_core::oracle::{self, OracleReport};
use flexmarket_core::reporting::{self, FigureOptions};
use flexmarket_core::scenario::{self, presets, ScenarioError};
use flexmarket_core::{RtRequirement, run_pipeline, write_outputs};

#[derive(Parser)]
#[command(name = "flexmarket", version, about = "Tri-level flexibility market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full day-ahead and real-time pipeline and write CSV artifacts.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Real-time requirement as `hour:qty_mw:dir` with dir in {up, down, +1, -1}.
        #[arg(long = "rt-req", value_name = "HOUR:QTY_MW:DIR")]
        rt_req: Vec<RtRequirement>,
        #[arg(long)]
        out: PathBuf,
        /// Bus whose demand comparison goes into the figure tables.
        #[arg(long, default_value_t = FigureOptions::default().focus_bus)]
        focus_bus: usize,
        /// Hour tabulated in the capacity-versus-cleared figure table
        /// [default: hour of the first requirement, else 20].
        #[arg(long)]
        capacity_hour: Option<usize>,
    },
    /// Check a scenario file and list every violated constraint.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Cross-check a closed-form solver against its brute-force oracle.
    Oracle {
        #[arg(value_enum)]
        which: OracleKind,
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a built-in scenario as JSON.
    Preset {
        #[arg(value_enum)]
        name: PresetName,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    Lower,
    Prosumer,
    Market,
    Tariff,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetName {
    Ieee33Pv,
    EnowaWind,
}

fn print_report(r: &OracleReport) {
    println!(
        "{}: instances={} max_error={:e} tolerance={:e} failures={}",
        r.name,
        r.instances,
        r.max_error,
        r.tolerance,
        r.failures.len()
    );
    for f in &r.failures {
        eprintln!("  {f}");
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            scenario,
            rt_req,
            out,
            focus_bus,
            capacity_hour,
        } => {
            let config = scenario::load_scenario(&scenario)
                .with_context(|| format!("[validate] cannot load {}", scenario.display()))?;
            let record = run_pipeline(&config, &rt_req)?;
            let mut written = write_outputs(&record, &out)?;
            let tables = reporting::figure_tables(
                &record,
                FigureOptions {
                    focus_bus,
                    capacity_hour: capacity_hour
                        .or(rt_req.first().map(|r| r.hour.0))
                        .unwrap_or(FigureOptions::default().capacity_hour),
                },
            );
            written.extend(reporting::write_figure_tables(&tables, out.join("figures"))?);
            for p in written {
                println!("{}", p.display());
            }
            Ok(true)
        }
        Command::Validate { scenario } => match scenario::load_scenario(&scenario) {
            Ok(config) => {
                println!("ok: {} buses, {} hours", config.num_buses(), config.horizon());
                Ok(true)
            }
            Err(ScenarioError::Validation(violations)) => {
                for v in &violations {
                    eprintln!("[validate] {v}");
                }
                Ok(false)
            }
            Err(e) => Err(e).with_context(|| format!("[validate] cannot load {}", scenario.display())),
        },
        Command::Oracle { which, instances, seed } => {
            let report = match which {
                OracleKind::Lower => oracle::check_lower(instances, seed),
                OracleKind::Prosumer => oracle::check_prosumer(instances, seed, 100_001),
                OracleKind::Market => oracle::check_market(instances, seed),
                OracleKind::Tariff => oracle::check_tariff(instances, seed),
            };
            print_report(&report);
            Ok(report.passed())
        }
        Command::Preset { name, out } => {
            let config = match name {
                PresetName::Ieee33Pv => presets::ieee33_pv(),
                PresetName::EnowaWind => presets::enowa_wind(),
            };
            scenario::save_scenario(&config, &out).with_context(|| format!("[output] cannot write {}", out.display()))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
