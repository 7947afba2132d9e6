#![allow(dead_code)]

use std::path::PathBuf;

use flexmarket_core::scenario::{self, ScenarioConfig};
use flexmarket_core::RtRequirement;

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Bundled scenario files with the real-time requirement each one ships with.
pub const BUNDLED: [(&str, &str); 2] = [("ieee33_pv.json", "15:0.03:down"), ("enowa_wind.json", "3:0.03:down")];

pub fn load(file: &str) -> ScenarioConfig {
    scenario::load_scenario(scenario_dir().join(file)).expect("bundled scenario loads")
}

pub fn bundled() -> Vec<(String, ScenarioConfig, Vec<RtRequirement>)> {
    BUNDLED
        .iter()
        .map(|(file, req)| (file.to_string(), load(file), vec![req.parse().expect("requirement parses")]))
        .collect()
}
