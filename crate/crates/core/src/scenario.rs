//! Experiment description: feeder topology, hourly profiles, device specs and
//! global parameters, loaded from a single JSON document.
//!
//! A [`ScenarioConfig`] is immutable once loaded and validated. All powers are
//! in MW, energies in MWh and prices in $/MWh. Matrices are indexed
//! `[bus][hour]`.

pub mod presets;

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row-major `[bus][hour]` (or `[unit][hour]`, `[edge][hour]`) matrix.
pub type Matrix = Vec<Vec<f64>>;

/// 0-based bus index within the feeder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub usize);

/// 0-based hour of the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HourIndex(pub usize);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for HourIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Battery energy storage unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BessSpec {
    pub bus: BusId,
    pub p_ch_max: f64,
    pub p_dis_max: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_initial: f64,
    pub eta: f64,
}

/// Concave quadratic utility `f(E) = alpha * E - beta * E^2` of a prosumer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityFn {
    pub alpha: f64,
    pub beta: f64,
}

impl UtilityFn {
    pub fn value(&self, e: f64) -> f64 {
        self.alpha * e - self.beta * e * e
    }
}

fn default_timestep() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: String,
    #[serde(default)]
    pub description: String,
    /// Directed feeder edges `(parent, child)`. Bus 0 is the feeder head.
    pub topology: Vec<(BusId, BusId)>,
    pub scheduled_load: Matrix,
    pub generation: Matrix,
    #[serde(default)]
    pub bess_specs: Vec<BessSpec>,
    pub delta: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub price_mid: Matrix,
    pub price_lo_slope: Matrix,
    pub price_hi_slope: Matrix,
    pub import_price: Vec<f64>,
    /// Per-bus factor `rho`; bid prices are `rho[bus] * import_price[hour]`.
    pub bid_price_factor: Vec<f64>,
    pub utility_params: Vec<UtilityFn>,
    pub flex_lo: Matrix,
    pub flex_hi: Matrix,
    #[serde(default = "default_timestep")]
    pub timestep_hours: f64,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {}", .0.join("; "))]
    Validation(Vec<String>),
}

impl ScenarioConfig {
    pub fn num_buses(&self) -> usize {
        self.scheduled_load.len()
    }

    pub fn horizon(&self) -> usize {
        self.scheduled_load.first().map_or(0, Vec::len)
    }

    /// Flexibility bid prices `lambda[bus][hour] = rho[bus] * pi[hour]`.
    pub fn bid_prices(&self) -> Matrix {
        self.bid_price_factor
            .iter()
            .map(|rho| self.import_price.iter().map(|pi| rho * pi).collect())
            .collect()
    }

    pub fn total_generation(&self, hour: usize) -> f64 {
        self.generation.iter().map(|row| row[hour]).sum()
    }

    pub fn total_scheduled(&self, hour: usize) -> f64 {
        self.scheduled_load.iter().map(|row| row[hour]).sum()
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let config: ScenarioConfig = serde_json::from_str(text)?;
        let violations = config.validate();
        if violations.is_empty() {
            Ok(config)
        } else {
            Err(ScenarioError::Validation(violations))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization is infallible")
    }

    /// Checks every structural and physical invariant, returning one message
    /// per violation. An empty list means the scenario is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.num_buses();
        let h = self.horizon();
        if n == 0 {
            out.push("scenario has no buses".to_string());
        }
        if h == 0 {
            out.push("scenario has an empty horizon".to_string());
        }

        let bus_hour = [
            ("scheduled_load", &self.scheduled_load),
            ("generation", &self.generation),
            ("price_mid", &self.price_mid),
            ("price_lo_slope", &self.price_lo_slope),
            ("price_hi_slope", &self.price_hi_slope),
            ("flex_lo", &self.flex_lo),
            ("flex_hi", &self.flex_hi),
        ];
        let mut shapes_ok = true;
        for (name, m) in bus_hour {
            if m.len() != n {
                out.push(format!("{name} has {} rows, expected {n}", m.len()));
                shapes_ok = false;
                continue;
            }
            for (bus, row) in m.iter().enumerate() {
                if row.len() != h {
                    out.push(format!("{name} bus {bus} has {} hours, expected {h}", row.len()));
                    shapes_ok = false;
                }
            }
        }
        if self.import_price.len() != h {
            out.push(format!("import_price has {} hours, expected {h}", self.import_price.len()));
        }
        if self.bid_price_factor.len() != n {
            out.push(format!("bid_price_factor has {} entries, expected {n}", self.bid_price_factor.len()));
        }
        if self.utility_params.len() != n {
            out.push(format!("utility_params has {} entries, expected {n}", self.utility_params.len()));
        }

        if n > 0 {
            if let Err(msg) = check_tree(n, &self.topology) {
                out.push(msg);
            }
        }

        if shapes_ok {
            // Quantities that must be finite and non-negative.
            for (name, m) in [
                ("scheduled_load", &self.scheduled_load),
                ("generation", &self.generation),
                ("price_mid", &self.price_mid),
                ("price_lo_slope", &self.price_lo_slope),
                ("price_hi_slope", &self.price_hi_slope),
                ("flex_lo", &self.flex_lo),
                ("flex_hi", &self.flex_hi),
            ] {
                for (bus, row) in m.iter().enumerate() {
                    for (hour, v) in row.iter().enumerate() {
                        if !v.is_finite() || *v < 0.0 {
                            out.push(format!("{name} invalid at bus {bus} hour {hour}: {v}"));
                        }
                    }
                }
            }
            for bus in 0..n {
                for hour in 0..h {
                    let sch = self.scheduled_load[bus][hour];
                    if !(self.flex_lo[bus][hour] <= sch && sch <= self.flex_hi[bus][hour]) {
                        out.push(format!("flex_bounds violated at bus {bus} hour {hour}"));
                    }
                }
            }
        }
        for (hour, pi) in self.import_price.iter().enumerate() {
            if !pi.is_finite() || *pi < 0.0 {
                out.push(format!("import_price invalid at hour {hour}: {pi}"));
            }
        }
        for (bus, rho) in self.bid_price_factor.iter().enumerate() {
            if !rho.is_finite() || *rho < 0.0 {
                out.push(format!("bid_price_factor invalid at bus {bus}: {rho}"));
            }
        }
        for (bus, u) in self.utility_params.iter().enumerate() {
            if !u.alpha.is_finite() || !u.beta.is_finite() || u.beta < 0.0 {
                out.push(format!("utility_params invalid at bus {bus} (beta must be >= 0)"));
            }
        }

        if !(0.0..1.0).contains(&self.delta) {
            out.push("delta out of range".to_string());
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            out.push("epsilon out of range".to_string());
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            out.push("eta out of range".to_string());
        }
        if !(self.timestep_hours.is_finite() && self.timestep_hours > 0.0) {
            out.push("timestep_hours must be positive".to_string());
        }

        for (unit, spec) in self.bess_specs.iter().enumerate() {
            if spec.bus.0 >= n {
                out.push(format!("bess unit {unit} references unknown bus {}", spec.bus));
            }
            out.extend(bess_spec_violations(spec).into_iter().map(|m| format!("bess unit {unit}: {m}")));
        }
        out
    }
}

pub(crate) fn bess_spec_violations(spec: &BessSpec) -> Vec<String> {
    let mut out = Vec::new();
    let fields = [
        spec.p_ch_max,
        spec.p_dis_max,
        spec.soc_min,
        spec.soc_max,
        spec.soc_initial,
        spec.eta,
    ];
    if fields.iter().any(|v| !v.is_finite()) {
        out.push("non-finite parameter".to_string());
        return out;
    }
    if spec.p_ch_max < 0.0 || spec.p_dis_max < 0.0 {
        out.push("negative power limit".to_string());
    }
    if !(0.0 <= spec.soc_min && spec.soc_min <= spec.soc_initial && spec.soc_initial <= spec.soc_max) {
        out.push("soc bounds must satisfy 0 <= soc_min <= soc_initial <= soc_max".to_string());
    }
    if !(spec.eta > 0.0 && spec.eta <= 1.0) {
        out.push("eta out of range".to_string());
    }
    out
}

/// Ensures the edge list is a tree rooted at bus 0 covering all `n` buses.
fn check_tree(n: usize, edges: &[(BusId, BusId)]) -> Result<(), String> {
    if let Some((p, c)) = edges.iter().find(|(p, c)| p.0 >= n || c.0 >= n) {
        return Err(format!("topology edge ({p}, {c}) references an unknown bus"));
    }
    let mut children = vec![Vec::new(); n];
    let mut has_parent = vec![false; n];
    for &(p, c) in edges {
        if has_parent[c.0] || c.0 == 0 {
            return Err("topology not a tree".to_string());
        }
        has_parent[c.0] = true;
        children[p.0].push(c.0);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(b) = queue.pop_front() {
        for &c in &children[b] {
            if seen[c] {
                return Err("topology not a tree".to_string());
            }
            seen[c] = true;
            queue.push_back(c);
        }
    }
    if edges.len() != n - 1 || seen.iter().any(|s| !s) {
        return Err("topology not a tree".to_string());
    }
    Ok(())
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let text = fs::read_to_string(path)?;
    ScenarioConfig::from_json(&text)
}

pub fn save_scenario(config: &ScenarioConfig, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let mut text = config.to_json();
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
