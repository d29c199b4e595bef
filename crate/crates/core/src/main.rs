use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nsplab::harness::checkpoint;
use nsplab::harness::report::{load_record, render_text, write_record};
use nsplab::harness::run::{limit_run, run, scaled_params, simulate};
use nsplab::harness::{Config, ExperimentPlan, RunRecord, Scenario};
use nsplab::Result;

#[derive(Parser)]
#[command(name = "nsplab", version, about = "Zero-electron-mass limit experiments for Navier-Stokes-Poisson flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Single compressible run at the first epsilon; writes a final checkpoint
    Simulate(Common),
    /// Exact-propagator run with decay fit, energy balance and local decay
    Acoustic(Common),
    /// Reference incompressible run; writes a final checkpoint
    Limit(Common),
    /// Full scenario sweep
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Overrides the `scenario` key of the configuration
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Korn quotient survey on two resolutions
    Korn(Common),
    /// Re-render CSV and text from a stored record
    Report {
        /// Directory holding record.json, or the file itself
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_plan(common: &Common, scenario: Option<Scenario>) -> Result<ExperimentPlan> {
    let config = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let scenario = match scenario {
        Some(s) => s,
        None => config.string("scenario", "quasineutral_rate")?.parse()?,
    };
    let mut plan = ExperimentPlan::from_config(scenario, &config)?;
    if let Some(seed) = common.seed {
        plan.seed = seed;
    }
    Ok(plan)
}

fn finish(out: &Path, record: &RunRecord) -> Result<i32> {
    write_record(out, record)?;
    print!("{}", render_text(record));
    Ok(record.exit_code())
}

fn execute(cli: Cli) -> Result<i32> {
    let started = Instant::now();
    let code = match cli.command {
        Command::Simulate(common) => {
            let plan = load_plan(&common, Some(Scenario::QuasineutralRate))?;
            let (record, state) = simulate(&plan)?;
            std::fs::create_dir_all(&common.out)?;
            let params = scaled_params(&plan, plan.epsilons[0])?;
            checkpoint::save(&common.out.join("final.chk"), &state, plan.grid, serde_json::to_value(params)?)?;
            finish(&common.out, &record)?
        }
        Command::Limit(common) => {
            let plan = load_plan(&common, Some(Scenario::ViscousLimit))?;
            let (record, state) = limit_run(&plan)?;
            std::fs::create_dir_all(&common.out)?;
            checkpoint::save(&common.out.join("limit.chk"), &state, plan.grid, serde_json::to_value(plan.limit)?)?;
            finish(&common.out, &record)?
        }
        Command::Acoustic(common) => {
            let plan = load_plan(&common, Some(Scenario::AcousticDecay))?;
            finish(&common.out, &run(&plan, common.threads)?)?
        }
        Command::Korn(common) => {
            let plan = load_plan(&common, Some(Scenario::KornSurvey))?;
            finish(&common.out, &run(&plan, common.threads)?)?
        }
        Command::Sweep { common, scenario } => {
            let scenario = scenario.map(|s| s.parse()).transpose()?;
            let plan = load_plan(&common, scenario)?;
            finish(&common.out, &run(&plan, common.threads)?)?
        }
        Command::Report { out } => {
            let record = load_record(&out)?;
            let dir = if out.is_dir() { out.clone() } else { out.parent().map(Path::to_path_buf).unwrap_or_default() };
            finish(&dir, &record)?
        }
    };
    eprintln!("elapsed {:.1}s", started.elapsed().as_secs_f64());
    Ok(code)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

