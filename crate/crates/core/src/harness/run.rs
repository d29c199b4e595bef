//! Scenario orchestration. Cells run on a rayon pool and are merged in plan
//! order; a failing cell is recorded and never aborts its siblings.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::fit::{fit_rate, RateFit};
use super::plan::{ExperimentPlan, Scenario};
use crate::acoustic::{acoustic_initial_data, decay_exponent, velocity_potential, AcousticOperator, AcousticParams, ModeField, Window};
use crate::fields::leray;
use crate::limits::{IncompressibleState, LimitParams, LimitSolver};
use crate::monitor::{gronwall_budget, gronwall_parts, korn_quotient, ChiEntry, Corrector, GronwallSample};
use crate::nsp::{make_ill_prepared, FluidState, IllPreparedData, Integrator, RunSummary, ScaledParams};
use crate::synth::random_vector;
use crate::waveguide::{CrossSection, GridSpec, WaveguideGrid};
use crate::{Error, Result, VectorField};

/// Relative slack allowed on the energy inequality.
pub const ENERGY_SLACK: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    /// `None` on success.
    pub error: Option<String>,
    pub exit_code: Option<i32>,
    pub metrics: BTreeMap<String, f64>,
}

impl CellRecord {
    fn new(epsilon: Option<f64>, delta: Option<f64>) -> Self {
        Self { epsilon, delta, error: None, exit_code: None, metrics: BTreeMap::new() }
    }

    fn failed(epsilon: Option<f64>, delta: Option<f64>, err: &Error) -> Self {
        Self { error: Some(err.to_string()), exit_code: Some(err.exit_code()), ..Self::new(epsilon, delta) }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// A table destined for one gnuplot-ready CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub plan_hash: String,
    pub plan: ExperimentPlan,
    pub cells: Vec<CellRecord>,
    pub fits: BTreeMap<String, RateFit>,
    pub chi: Vec<ChiEntry>,
    pub criteria: Vec<CriterionOutcome>,
    pub series: Vec<Series>,
}

impl RunRecord {
    fn new(plan: &ExperimentPlan) -> Self {
        Self {
            plan_hash: plan.hash(),
            plan: plan.clone(),
            cells: Vec::new(),
            fits: BTreeMap::new(),
            chi: Vec::new(),
            criteria: Vec::new(),
            series: Vec::new(),
        }
    }

    fn criterion(&mut self, id: u8, name: &str, passed: bool, detail: String) {
        self.criteria.push(CriterionOutcome { id, name: name.into(), passed, detail });
    }

    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    /// 0 when every criterion passes, 3 when a cell failed numerically, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.cells.iter().any(|c| !c.ok()) {
            self.cells.iter().filter_map(|c| c.exit_code).max().unwrap_or(3)
        } else if self.all_passed() {
            0
        } else {
            1
        }
    }

    /// Hex SHA-256 of the canonical JSON form; equal plans and seeds give equal hashes.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("records serialize")))
    }
}

/// Runs `plan` on a pool of `threads` workers (0 picks the rayon default).
pub fn run(plan: &ExperimentPlan, threads: usize) -> Result<RunRecord> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match plan.scenario {
        Scenario::QuasineutralRate => quasineutral_rate(plan),
        Scenario::ViscousLimit => viscous_limit(plan),
        Scenario::InviscidLimit => inviscid_limit(plan),
        Scenario::AcousticDecay => acoustic_decay(plan),
        Scenario::KornSurvey => korn_survey(plan),
    })
}

pub fn scaled_params(plan: &ExperimentPlan, epsilon: f64) -> Result<ScaledParams> {
    let mut params = ScaledParams::new(epsilon, plan.viscosity.at(epsilon), plan.tau, plan.nbar)?.with_pressure(plan.pressure);
    params.cfl = plan.cfl;
    params.validate()?;
    Ok(params)
}

/// Per-output diagnostics of one compressible trajectory.
struct Trajectory {
    series: Series,
    summary: RunSummary,
    final_state: FluidState,
}

const TRAJECTORY_COLUMNS: [&str; 8] =
    ["t", "density_dev", "kinetic_norm", "field_norm", "energy", "dissipated", "dissipation_rate", "lhs"];

impl Trajectory {
    fn column(&self, name: &str) -> impl Iterator<Item = f64> + '_ {
        let i = TRAJECTORY_COLUMNS.iter().position(|c| *c == name).expect("known column");
        self.series.rows.iter().map(move |r| r[i])
    }

    fn sup(&self, name: &str) -> f64 {
        self.column(name).fold(0.0, f64::max)
    }

    /// Largest relative excess of `E(t) + ∫D` over its initial value.
    fn energy_excess(&self) -> f64 {
        let lhs: Vec<f64> = self.column("lhs").collect();
        lhs.iter().map(|v| (v - lhs[0]) / lhs[0].abs().max(f64::MIN_POSITIVE)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest dissipation rate and smallest increment of the accumulated dissipation.
    fn min_dissipation(&self) -> f64 {
        let acc: Vec<f64> = self.column("dissipated").collect();
        let increments = acc.windows(2).map(|w| w[1] - w[0]);
        self.column("dissipation_rate").chain(increments).fold(f64::INFINITY, f64::min)
    }

    fn record_into(&self, cell: &mut CellRecord) {
        cell.metrics.insert("sup_density_dev".into(), self.sup("density_dev"));
        cell.metrics.insert("final_density_dev".into(), self.column("density_dev").last().unwrap_or(f64::NAN));
        cell.metrics.insert("sup_kinetic_norm".into(), self.sup("kinetic_norm"));
        cell.metrics.insert("sup_field_norm".into(), self.sup("field_norm"));
        cell.metrics.insert("energy_excess".into(), self.energy_excess());
        cell.metrics.insert("min_dissipation".into(), self.min_dissipation());
        cell.metrics.insert("steps".into(), self.summary.steps as f64);
        cell.metrics.insert("mass_drift".into(), (self.summary.final_mass - self.summary.initial_mass).abs());
    }
}

/// Integrates the ill-prepared data of `plan` at `epsilon`; `extra` sees
/// every output snapshot together with its output index.
fn trajectory<F>(plan: &ExperimentPlan, grid: &WaveguideGrid, data: &IllPreparedData, mut extra: F) -> Result<Trajectory>
where
    F: FnMut(usize, &FluidState) -> Result<()>,
{
    let params = scaled_params(plan, data.epsilon)?;
    let integrator = Integrator::new(grid.clone(), params)?;
    let eps = data.epsilon;
    let nbar = plan.nbar;
    let mut series = Series::new(format!("nsp_eps{eps}"), &TRAJECTORY_COLUMNS);
    let mut failure = None;
    let mut index = 0;
    let (final_state, summary) = integrator.run(data.state(), plan.horizon, plan.output_dt, |snap| {
        let state = snap.state;
        let energy = integrator.energy(state).total();
        let kinetic = grid.integrate(&(&state.density * &state.velocity().norm_sq())).sqrt();
        let field = grid.norm_l2_vector(&integrator.field(state).gradient) / eps;
        let deviation = grid.norm_l2(&state.density.mapv(|n| n - nbar));
        let rate = integrator.dissipation_rate(state);
        series.rows.push(vec![state.t, deviation, kinetic, field, energy, snap.dissipated, rate, energy + snap.dissipated]);
        if failure.is_none() {
            if let Err(e) = extra(index, state) {
                failure = Some(e);
            }
        }
        index += 1;
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Trajectory { series, summary, final_state })
}

fn ill_prepared(plan: &ExperimentPlan, grid: &WaveguideGrid, epsilon: f64) -> Result<IllPreparedData> {
    make_ill_prepared(plan.profile, epsilon, plan.nbar, grid)
}

/// Single compressible run at the first `ε` of the plan.
pub fn simulate(plan: &ExperimentPlan) -> Result<(RunRecord, FluidState)> {
    let grid = WaveguideGrid::new(plan.grid)?;
    let eps = *plan.epsilons.first().ok_or_else(|| Error::Config("the epsilon list is empty".into()))?;
    let data = ill_prepared(plan, &grid, eps)?;
    let traj = trajectory(plan, &grid, &data, |_, _| Ok(()))?;
    let mut record = RunRecord::new(plan);
    let mut cell = CellRecord::new(Some(eps), None);
    traj.record_into(&mut cell);
    record.cells.push(cell);
    energy_criterion(&mut record);
    record.series.push(traj.series);
    Ok((record, traj.final_state))
}

fn energy_criterion(record: &mut RunRecord) {
    let ok: Vec<&CellRecord> = record.cells.iter().filter(|c| c.ok() && c.metrics.contains_key("energy_excess")).collect();
    let excess = ok.iter().filter_map(|c| c.metric("energy_excess")).fold(f64::NEG_INFINITY, f64::max);
    let min_d = ok.iter().filter_map(|c| c.metric("min_dissipation")).fold(f64::INFINITY, f64::min);
    let passed = !ok.is_empty() && ok.len() == record.cells.len() && excess <= ENERGY_SLACK && min_d >= 0.0;
    record.criterion(
        2,
        "energy inequality",
        passed,
        format!("max relative excess {excess:.3e} (limit {ENERGY_SLACK:e}), min dissipation {min_d:.3e}, {} trajectories", ok.len()),
    );
}

fn cell_metric(cells: &[CellRecord], name: &str) -> Option<Vec<(f64, f64)>> {
    cells.iter().map(|c| Some((c.epsilon?, c.metric(name)?))).collect()
}

fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

fn quasineutral_rate(plan: &ExperimentPlan) -> Result<RunRecord> {
    let grid = WaveguideGrid::new(plan.grid)?;
    let results: Vec<(CellRecord, Option<Series>)> = plan
        .epsilons
        .par_iter()
        .map(|&eps| {
            let outcome = ill_prepared(plan, &grid, eps).and_then(|data| trajectory(plan, &grid, &data, |_, _| Ok(())));
            match outcome {
                Ok(traj) => {
                    let mut cell = CellRecord::new(Some(eps), None);
                    traj.record_into(&mut cell);
                    (cell, Some(traj.series))
                }
                Err(e) => (CellRecord::failed(Some(eps), None, &e), None),
            }
        })
        .collect();
    let mut record = RunRecord::new(plan);
    for (cell, series) in results {
        record.cells.push(cell);
        record.series.extend(series);
    }

    match cell_metric(&record.cells, "sup_density_dev") {
        Some(points) => {
            let (xs, ys): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
            match fit_rate(&xs, &ys) {
                Ok(fit) => {
                    let passed = fit.slope >= 0.9 && fit.r_squared >= 0.98;
                    let detail = format!(
                        "slope {:.4} (95% CI [{:.4}, {:.4}]), R^2 {:.5}; need slope >= 0.9 and R^2 >= 0.98",
                        fit.slope, fit.ci_low, fit.ci_high, fit.r_squared
                    );
                    record.fits.insert("density_deviation".into(), fit);
                    record.criterion(1, "quasineutrality rate", passed, detail);
                }
                Err(e) => record.criterion(1, "quasineutrality rate", false, e.to_string()),
            }
        }
        None => record.criterion(1, "quasineutrality rate", false, "a sweep cell failed".into()),
    }
    // the supremum is usually attained at t = 0, so the final-time rate is kept as a diagnostic
    if let Some(points) = cell_metric(&record.cells, "final_density_dev") {
        let (xs, ys): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        if let Ok(fit) = fit_rate(&xs, &ys) {
            record.fits.insert("density_deviation_final".into(), fit);
        }
    }
    energy_criterion(&mut record);
    uniform_bounds_criterion(&mut record);
    Ok(record)
}

fn uniform_bounds_criterion(record: &mut RunRecord) {
    let spread = |name: &str| {
        cell_metric(&record.cells, name).map(|pts| {
            let max = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            let min = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            (max, min)
        })
    };
    match (spread("sup_kinetic_norm"), spread("sup_field_norm")) {
        (Some((kmax, kmin)), Some((fmax, fmin))) => {
            let passed = kmax <= 1.5 * kmin && fmax <= 1.5 * fmin;
            record.criterion(
                3,
                "uniform bounds",
                passed,
                format!("sqrt(n)u: max/min {:.4}, grad(phi)/eps: max/min {:.4}; need <= 1.5", kmax / kmin, fmax / fmin),
            );
        }
        _ => record.criterion(3, "uniform bounds", false, "a sweep cell failed".into()),
    }
}

/// Limit trajectory sampled at the compressible output times.
fn limit_snapshots(plan: &ExperimentPlan, grid: &WaveguideGrid, params: LimitParams, u0: &VectorField) -> Result<Vec<IncompressibleState>> {
    let solver = LimitSolver::new(grid.clone(), params)?;
    let initial = solver.initial_state(u0)?;
    let mut out = Vec::new();
    solver.run(initial, plan.horizon, plan.output_dt, plan.limit.max_dt, |s| out.push(s.clone()))?;
    Ok(out)
}

fn axial_mask(grid: &WaveguideGrid, half_width: f64) -> Array2<f64> {
    grid.sample(|y, _| if y.abs() <= half_width { 1.0 } else { 0.0 })
}

/// Trapezoid rule on possibly uneven abscissae.
fn trapezoid(ts: &[f64], values: &[f64]) -> f64 {
    ts.windows(2).zip(values.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

fn viscous_limit(plan: &ExperimentPlan) -> Result<RunRecord> {
    let grid = WaveguideGrid::new(plan.grid)?;
    let mu = match plan.viscosity {
        crate::nsp::ViscosityRule::Fixed(mu) => mu,
        _ => return Err(Error::Config("viscous_limit needs a fixed viscosity".into())),
    };
    let u0 = ill_prepared(plan, &grid, plan.epsilons[0])?.velocity;
    let limit = limit_snapshots(plan, &grid, LimitParams::ns_brinkman(mu, plan.tau, plan.nbar), &u0)?;
    let mask = axial_mask(&grid, plan.limit.window);

    let results: Vec<(CellRecord, Option<Series>)> = plan
        .epsilons
        .par_iter()
        .map(|&eps| {
            let mut times = Vec::new();
            let mut errors = Vec::new();
            let outcome = ill_prepared(plan, &grid, eps).and_then(|data| {
                trajectory(plan, &grid, &data, |k, state| {
                    let reference = limit.get(k).ok_or_else(|| Error::Config("limit output times differ".into()))?;
                    let solenoidal = leray(&grid, &state.momentum)?.scaled(1.0 / plan.nbar);
                    let diff = solenoidal.sub(&reference.velocity);
                    times.push(state.t);
                    errors.push(grid.integrate(&(&mask * &diff.norm_sq())));
                    Ok(())
                })
            });
            match outcome {
                Ok(traj) => {
                    let mut cell = CellRecord::new(Some(eps), None);
                    traj.record_into(&mut cell);
                    cell.metrics.insert("limit_error".into(), trapezoid(&times, &errors).sqrt());
                    cell.metrics.insert("sup_limit_error".into(), errors.iter().fold(0.0f64, |a, &b| a.max(b)).sqrt());
                    (cell, Some(traj.series))
                }
                Err(e) => (CellRecord::failed(Some(eps), None, &e), None),
            }
        })
        .collect();
    let mut record = RunRecord::new(plan);
    for (cell, series) in results {
        record.cells.push(cell);
        record.series.extend(series);
    }
    match cell_metric(&record.cells, "limit_error") {
        Some(points) => {
            let errs: Vec<f64> = points.iter().map(|p| p.1).collect();
            let first = errs[0];
            let last = *errs.last().unwrap();
            let passed = strictly_decreasing(&errs) && last <= 0.5 * first;
            if let Ok(fit) = fit_rate(&points.iter().map(|p| p.0).collect::<Vec<_>>(), &errs) {
                record.fits.insert("viscous_limit_error".into(), fit);
            }
            let list: Vec<String> = errs.iter().map(|e| format!("{e:.4e}")).collect();
            record.criterion(
                7,
                "viscous limit",
                passed,
                format!("L2((0,T)xK) errors [{}], final/coarsest {:.4}; need monotone and <= 0.5", list.join(", "), last / first),
            );
        }
        None => record.criterion(7, "viscous limit", false, "a sweep cell failed".into()),
    }
    energy_criterion(&mut record);
    Ok(record)
}

/// Smoothed acoustic data `([N₀]_δ/n̄, [Ψ₀]_δ)` for every `δ` of the plan.
fn acoustic_correctors(plan: &ExperimentPlan, grid: &WaveguideGrid, data: &IllPreparedData) -> Result<Vec<ModeField>> {
    let psi0 = velocity_potential(grid, &data.velocity)?;
    plan.deltas
        .iter()
        .map(|&delta| {
            let spec = plan.smoothing(delta)?;
            let n_smooth = grid.smooth_project(&data.fluctuation, &spec)?;
            let n_smooth = &n_smooth - grid.mean(&n_smooth);
            let psi_smooth = grid.smooth_project(&psi0, &spec)?;
            acoustic_initial_data(grid, plan.nbar, &n_smooth, &psi_smooth)
        })
        .collect()
}

fn inviscid_limit(plan: &ExperimentPlan) -> Result<RunRecord> {
    let grid = WaveguideGrid::new(plan.grid)?;
    let base = ill_prepared(plan, &grid, plan.epsilons[0])?;
    let limit = limit_snapshots(plan, &grid, LimitParams::euler_damped(plan.tau, plan.nbar), &base.velocity)?;
    let initial_modes = acoustic_correctors(plan, &grid, &base)?;
    let nd = plan.deltas.len();

    let results: Vec<(Vec<CellRecord>, Option<Series>)> = plan
        .epsilons
        .par_iter()
        .map(|&eps| {
            let mut sup_kinetic = vec![0.0f64; nd];
            let mut sup_total = vec![f64::NEG_INFINITY; nd];
            let outcome = scaled_params(plan, eps).and_then(|params| {
                let op = AcousticOperator::new(&grid, &params)?;
                let data = ill_prepared(plan, &grid, eps)?;
                trajectory(plan, &grid, &data, |k, state| {
                    let reference = limit.get(k).ok_or_else(|| Error::Config("limit output times differ".into()))?;
                    for (j, modes) in initial_modes.iter().enumerate() {
                        let now = op.propagate(modes, state.t);
                        let (s, psi) = (now.s(&grid), now.psi(&grid));
                        let corrector = Corrector { limit: &reference.velocity, psi: &psi, s: &s };
                        let parts = gronwall_parts(&grid, state, &corrector, &params)?;
                        sup_kinetic[j] = sup_kinetic[j].max(parts.kinetic);
                        sup_total[j] = sup_total[j].max(parts.total());
                    }
                    Ok(())
                })
            });
            match outcome {
                Ok(traj) => {
                    let cells = plan
                        .deltas
                        .iter()
                        .enumerate()
                        .map(|(j, &delta)| {
                            let mut cell = CellRecord::new(Some(eps), Some(delta));
                            traj.record_into(&mut cell);
                            cell.metrics.insert("sup_gronwall_kinetic".into(), sup_kinetic[j]);
                            cell.metrics.insert("sup_gronwall_total".into(), sup_total[j]);
                            cell
                        })
                        .collect();
                    (cells, Some(traj.series))
                }
                Err(e) => (plan.deltas.iter().map(|&d| CellRecord::failed(Some(eps), Some(d), &e)).collect(), None),
            }
        })
        .collect();
    let mut record = RunRecord::new(plan);
    for (cells, series) in results {
        record.cells.extend(cells);
        record.series.extend(series);
    }

    let samples: Option<Vec<GronwallSample>> = record
        .cells
        .iter()
        .map(|c| Some(GronwallSample { epsilon: c.epsilon?, delta: c.delta?, sup_kinetic: c.metric("sup_gronwall_kinetic")? }))
        .collect();
    match samples {
        Some(samples) => {
            let finest = plan.deltas[nd - 1];
            let at_finest: Vec<f64> = samples.iter().filter(|s| s.delta == finest).map(|s| s.sup_kinetic).collect();
            let chi = gronwall_budget(&samples);
            let (chi_ok, chi_text) = match &chi {
                Ok(table) => {
                    let values: Vec<f64> = table.iter().map(|e| e.chi).collect();
                    let text: Vec<String> = table.iter().map(|e| format!("chi({})={:.4e}", e.delta, e.chi)).collect();
                    (strictly_decreasing(&values), text.join(", "))
                }
                Err(e) => (false, e.to_string()),
            };
            let list: Vec<String> = at_finest.iter().map(|v| format!("{v:.4e}")).collect();
            record.criterion(
                8,
                "inviscid limit",
                strictly_decreasing(&at_finest) && chi_ok,
                format!("sup kinetic at delta {finest}: [{}]; {chi_text}; need both decreasing", list.join(", ")),
            );
            record.chi = chi.unwrap_or_default();
        }
        None => record.criterion(8, "inviscid limit", false, "a sweep cell failed".into()),
    }
    energy_criterion(&mut record);
    Ok(record)
}

fn acoustic_params(plan: &ExperimentPlan, epsilon: f64, tau: f64) -> Result<AcousticParams> {
    let mut params = scaled_params(plan, epsilon)?;
    params.tau = tau;
    Ok(AcousticParams::from_scaled(&params))
}

fn sup_norm(f: &Array2<f64>) -> f64 {
    f.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn acoustic_decay(plan: &ExperimentPlan) -> Result<RunRecord> {
    let grid = WaveguideGrid::new(plan.grid)?;
    let a = &plan.acoustic;
    let eps = plan.epsilons[0];
    let data = ill_prepared(plan, &grid, eps)?;
    let psi0 = velocity_potential(&grid, &data.velocity)?;
    let modes = acoustic_initial_data(&grid, plan.nbar, &data.fluctuation, &psi0)?;
    let mut record = RunRecord::new(plan);

    // dispersive decay on geometric samples of the θ = t/ε clock
    let op = AcousticOperator::with_params(&grid, acoustic_params(plan, eps, a.tau)?)?;
    let ratio = a.theta1 / a.theta0;
    let times: Vec<f64> =
        (0..a.samples).map(|k| eps * a.theta0 * ratio.powf(k as f64 / (a.samples - 1) as f64)).collect();
    let sups: Vec<f64> = times.par_iter().map(|&t| sup_norm(&op.propagate(&modes, t).s(&grid))).collect();
    let mut decay = Series::new("acoustic_decay", &["t", "theta", "sup_s"]);
    decay.rows = times.iter().zip(&sups).map(|(&t, &s)| vec![t, t / eps, s]).collect();
    record.series.push(decay);
    let mut cell = CellRecord::new(Some(eps), None);
    match decay_exponent(&times, &sups, eps) {
        Ok(alpha) => {
            cell.metrics.insert("alpha".into(), alpha);
            record.criterion(4, "dispersive decay", (0.35..=0.65).contains(&alpha), format!("alpha {alpha:.4}; need [0.35, 0.65]"));
        }
        Err(e) => record.criterion(4, "dispersive decay", false, e.to_string()),
    }

    // conservation over 10³ applications, then the damped balance
    let conservative = AcousticOperator::with_params(&grid, acoustic_params(plan, eps, f64::INFINITY)?)?;
    let e0 = conservative.energy(&modes);
    let mut current = modes.clone();
    for _ in 0..1000 {
        current = conservative.propagate(&current, eps);
    }
    let drift = (conservative.energy(&current) - e0).abs() / e0;
    let damped = AcousticOperator::with_params(&grid, acoustic_params(plan, eps, 1.0)?)?;
    let balance = |samples: usize| {
        let horizon = 1.0;
        let h = horizon / (samples - 1) as f64;
        let rates: Vec<f64> = (0..samples).map(|k| damped.dissipation_rate(&damped.propagate(&modes, k as f64 * h))).collect();
        let lost = crate::quadrature::simpson_uniform(h, &rates);
        (damped.energy(&damped.propagate(&modes, horizon)) + lost - damped.energy(&modes)).abs() / damped.energy(&modes)
    };
    let (coarse, fine) = (balance(1001), balance(2001));
    cell.metrics.insert("conservation_drift".into(), drift);
    cell.metrics.insert("damped_residual_coarse".into(), coarse);
    cell.metrics.insert("damped_residual_fine".into(), fine);
    let order_ok = fine <= 1e-12 || coarse / fine >= 10.0;
    record.criterion(
        5,
        "acoustic energy balance",
        drift <= 1e-11 && fine <= 1e-7 && order_ok,
        format!(
            "conservation drift {drift:.3e} (limit 1e-11); damped residual {coarse:.3e} -> {fine:.3e} on halving the step (ratio {:.1})",
            coarse / fine
        ),
    );
    record.cells.push(cell);

    // RAGE-style windowed average across the local ε list
    let window = Window::Axial { half_width: a.window, ramp: 1.0 };
    let averages: Vec<(f64, Result<f64>)> = a
        .local_epsilons
        .par_iter()
        .map(|&e| {
            let value = acoustic_params(plan, e, a.tau)
                .and_then(|p| AcousticOperator::with_params(&grid, p))
                .and_then(|op| op.local_energy_average(&modes, window, a.horizon, 401));
            (e, value)
        })
        .collect();
    let mut values = Vec::new();
    for (e, value) in averages {
        match value {
            Ok(v) => {
                let mut cell = CellRecord::new(Some(e), None);
                cell.metrics.insert("local_energy_average".into(), v);
                record.cells.push(cell);
                values.push(v);
            }
            Err(err) => record.cells.push(CellRecord::failed(Some(e), None, &err)),
        }
    }
    let list: Vec<String> = values.iter().map(|v| format!("{v:.4e}")).collect();
    record.criterion(
        6,
        "local energy decay",
        values.len() == a.local_epsilons.len() && strictly_decreasing(&values),
        format!("windowed averages [{}]; need strictly decreasing", list.join(", ")),
    );
    Ok(record)
}

/// Largest Korn quotient over random tangential fields and random axial sets.
pub fn korn_worst(grid: &WaveguideGrid, fields: usize, fraction: f64, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = ((grid.ny() as f64 * fraction).round() as usize).max(1);
    let mut worst = 0.0f64;
    for _ in 0..fields {
        let w = random_vector(grid, 4, 2, &mut rng);
        let start = rng.random_range(0..grid.ny());
        let mask: Vec<bool> = (0..grid.ny()).map(|i| (i + grid.ny() - start) % grid.ny() < width).collect();
        if let Some(q) = korn_quotient(grid, &w, &mask, fraction + 1.0 / grid.ny() as f64)?.value() {
            worst = worst.max(q);
        }
    }
    Ok(worst)
}

fn korn_survey(plan: &ExperimentPlan) -> Result<RunRecord> {
    let (height, points) = match plan.grid.cross_section {
        CrossSection::Interval { height, points } => (height, points),
        _ => return Err(Error::Config("korn survey runs on the strip".into())),
    };
    let k = plan.korn;
    let specs = [
        GridSpec::strip(plan.grid.radius, k.ny, height, points),
        GridSpec::strip(plan.grid.radius, 2 * k.ny, height, 2 * points - 1),
    ];
    let results: Vec<(GridSpec, Result<f64>)> = specs
        .par_iter()
        .enumerate()
        .map(|(i, &spec)| (spec, WaveguideGrid::new(spec).and_then(|g| korn_worst(&g, k.fields, k.fraction, plan.seed + i as u64))))
        .collect();
    let mut record = RunRecord::new(plan);
    let mut worst = Vec::new();
    let mut table = Series::new("korn_survey", &["ny", "points", "worst_quotient"]);
    for (spec, value) in results {
        let points = match spec.cross_section {
            CrossSection::Interval { points, .. } => points,
            _ => 0,
        };
        match value {
            Ok(q) => {
                let mut cell = CellRecord::new(None, None);
                cell.metrics.insert("ny".into(), spec.ny as f64);
                cell.metrics.insert("worst_quotient".into(), q);
                record.cells.push(cell);
                table.rows.push(vec![spec.ny as f64, points as f64, q]);
                worst.push(q);
            }
            Err(e) => record.cells.push(CellRecord::failed(None, None, &e)),
        }
    }
    record.series.push(table);
    let passed = worst.len() == 2 && worst.iter().all(|q| q.is_finite() && *q > 0.0) && {
        let (hi, lo) = (worst[0].max(worst[1]), worst[0].min(worst[1]));
        hi / lo < 2.0
    };
    let detail = match worst.as_slice() {
        [a, b] => format!("worst quotient {a:.4} (coarse) vs {b:.4} (fine), ratio {:.3}; need < 2", a.max(*b) / a.min(*b)),
        _ => "a survey grid failed".into(),
    };
    record.criterion(10, "korn quotient stability", passed, detail);
    Ok(record)
}

/// Reference incompressible run on the projected profile velocity.
pub fn limit_run(plan: &ExperimentPlan) -> Result<(RunRecord, IncompressibleState)> {
    let grid = WaveguideGrid::new(plan.grid)?;
    if grid.dim() != 2 {
        return Err(Error::Config("the limit solver needs a two-dimensional grid".into()));
    }
    let l = plan.limit;
    let mut params = LimitParams { kind: l.kind, mu: l.mu, tau: l.tau, nbar: plan.nbar, cfl: plan.cfl };
    if l.kind == crate::limits::LimitKind::EulerDamped {
        params.mu = 0.0;
    }
    let solver = LimitSolver::new(grid.clone(), params)?;
    let u0 = ill_prepared(plan, &grid, 1.0)?.velocity;
    let initial = solver.initial_state(&u0)?;
    let mut monitor = solver.smoothness_monitor(&initial);
    let mut series = Series::new("limit", &["t", "energy", "dissipation_rate", "max_gradient"]);
    let final_state = solver.run(initial, plan.horizon, plan.output_dt, l.max_dt, |s| {
        solver.update_monitor(&mut monitor, s);
        series.rows.push(vec![s.t, solver.energy(s), solver.dissipation_rate(s), solver.max_gradient(s)]);
    })?;
    let mut record = RunRecord::new(plan);
    let mut cell = CellRecord::new(None, None);
    let energies: Vec<f64> = series.rows.iter().map(|r| r[1]).collect();
    let increase = energies.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    cell.metrics.insert("max_energy_increase".into(), increase);
    cell.metrics.insert("final_energy".into(), *energies.last().unwrap());
    if let Some(t) = monitor.exceeded_at {
        cell.metrics.insert("smoothness_exceeded_at".into(), t);
    }
    record.cells.push(cell);
    record.series.push(series);
    Ok((record, final_state))
}
