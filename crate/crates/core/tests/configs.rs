//! Every shipped configuration parses, validates, and matches the built-in defaults.

use std::path::Path;

use nsplab::harness::{Config, ExperimentPlan, Scenario};

#[test]
fn shipped_configs_reproduce_defaults() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let config = Config::load(&path).unwrap();
            let scenario: Scenario = config.string("scenario", "").unwrap().parse().unwrap();
            let plan = ExperimentPlan::from_config(scenario, &config).unwrap();
            assert_eq!(plan, ExperimentPlan::defaults(scenario), "{}", path.display());
            seen += 1;
        }
    }
    assert_eq!(seen, 5);
}
