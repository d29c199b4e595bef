//! Record output: `record.json`, `summary.csv`, `criteria.csv` and one CSV per series.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::run::RunRecord;
use crate::Result;

pub const RECORD_FILE: &str = "record.json";

/// One row per cell; metric columns are the sorted union over cells.
pub fn summary_csv(record: &RunRecord) -> String {
    let names: BTreeSet<&str> = record.cells.iter().flat_map(|c| c.metrics.keys().map(String::as_str)).collect();
    let mut out = String::from("epsilon,delta,status");
    for n in &names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for cell in &record.cells {
        let status = if cell.ok() { "ok" } else { "failed" };
        let _ = write!(out, "{},{},{status}", opt(cell.epsilon), opt(cell.delta));
        for n in &names {
            out.push(',');
            out.push_str(&opt(cell.metric(n)));
        }
        out.push('\n');
    }
    out
}

pub fn criteria_csv(record: &RunRecord) -> String {
    let mut out = String::from("id,name,passed,detail\n");
    for c in &record.criteria {
        let _ = writeln!(out, "{},{},{},\"{}\"", c.id, c.name, c.passed, c.detail.replace('"', "'"));
    }
    out
}

/// Human-readable summary, one PASS/FAIL line per criterion.
pub fn render_text(record: &RunRecord) -> String {
    let mut out = format!("scenario {} plan {}\n", record.plan.scenario.id(), &record.plan_hash[..16]);
    for cell in &record.cells {
        if let Some(err) = &cell.error {
            let _ = writeln!(out, "cell epsilon={:?} delta={:?} FAILED: {err}", cell.epsilon, cell.delta);
        }
    }
    for (name, fit) in &record.fits {
        let _ = writeln!(
            out,
            "fit {name}: slope {:.4} [{:.4}, {:.4}] R^2 {:.5} ({} points)",
            fit.slope, fit.ci_low, fit.ci_high, fit.r_squared, fit.points
        );
    }
    for c in &record.criteria {
        let _ = writeln!(out, "criterion {:>2} {:<26} {}  {}", c.id, c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
    }
    out
}

/// Writes every artifact of `record` under `dir` and returns the paths.
pub fn write_record(dir: &Path, record: &RunRecord) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, text)?;
        written.push(path);
        Ok(())
    };
    put(RECORD_FILE, serde_json::to_string_pretty(record)?)?;
    put("summary.csv", summary_csv(record))?;
    put("criteria.csv", criteria_csv(record))?;
    for s in &record.series {
        put(&format!("{}.csv", s.name), s.to_csv())?;
    }
    Ok(written)
}

/// Reads `record.json` from a directory or a direct file path.
pub fn load_record(path: &Path) -> Result<RunRecord> {
    let file = if path.is_dir() { path.join(RECORD_FILE) } else { path.to_path_buf() };
    Ok(serde_json::from_str(&fs::read_to_string(file)?)?)
}
