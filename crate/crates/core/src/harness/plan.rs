//! Experiment plans: one scenario, its parameter sweep, and defaults sized so
//! every run finishes before the fastest acoustic front wraps the axial period.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Config;
use crate::limits::LimitKind;
use crate::nsp::{Profile, ViscosityRule};
use crate::thermo::{Perturbation, PressureLaw};
use crate::waveguide::{CrossSection, GridSpec, SmoothingSpec, WaveguideGrid};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    QuasineutralRate,
    ViscousLimit,
    InviscidLimit,
    AcousticDecay,
    KornSurvey,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "quasineutral_rate" => Ok(Scenario::QuasineutralRate),
            "viscous_limit" => Ok(Scenario::ViscousLimit),
            "inviscid_limit" => Ok(Scenario::InviscidLimit),
            "acoustic_decay" => Ok(Scenario::AcousticDecay),
            "korn_survey" => Ok(Scenario::KornSurvey),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

impl Scenario {
    pub fn id(&self) -> &'static str {
        match self {
            Scenario::QuasineutralRate => "quasineutral_rate",
            Scenario::ViscousLimit => "viscous_limit",
            Scenario::InviscidLimit => "inviscid_limit",
            Scenario::AcousticDecay => "acoustic_decay",
            Scenario::KornSurvey => "korn_survey",
        }
    }

    /// Scenarios that fit a rate across the `ε` list.
    pub fn needs_rate(&self) -> bool {
        matches!(self, Scenario::QuasineutralRate | Scenario::ViscousLimit | Scenario::InviscidLimit)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcousticPlan {
    #[serde(with = "crate::serde_ext")]
    pub tau: f64,
    /// Decay fit window on the Klein-Gordon clock `θ = t/ε`.
    pub theta0: f64,
    pub theta1: f64,
    pub samples: usize,
    /// Half width of the local-energy window.
    pub window: f64,
    /// Horizon of the local-energy average.
    pub horizon: f64,
    pub local_epsilons: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitPlan {
    pub kind: LimitKind,
    pub mu: f64,
    #[serde(with = "crate::serde_ext")]
    pub tau: f64,
    /// Axial half width of the comparison set `K`.
    pub window: f64,
    pub max_dt: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KornPlan {
    pub fields: usize,
    pub fraction: f64,
    /// Axial points of the coarse grid; the fine grid doubles both directions.
    pub ny: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub scenario: Scenario,
    pub epsilons: Vec<f64>,
    pub deltas: Vec<f64>,
    pub smoothing_width: Option<f64>,
    pub viscosity: ViscosityRule,
    pub grid: GridSpec,
    pub profile: Profile,
    pub horizon: f64,
    pub output_dt: f64,
    pub seed: u64,
    #[serde(with = "crate::serde_ext")]
    pub tau: f64,
    pub nbar: f64,
    pub cfl: f64,
    pub pressure: PressureLaw,
    pub acoustic: AcousticPlan,
    pub limit: LimitPlan,
    pub korn: KornPlan,
}

const DEFAULT_EPSILONS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
const DEFAULT_DELTAS: [f64; 3] = [0.5, 0.25, 0.125];

fn strip_grid() -> GridSpec {
    GridSpec::strip(8.5, 512, 1.0, 17)
}

impl ExperimentPlan {
    pub fn defaults(scenario: Scenario) -> Self {
        let base = Self {
            scenario,
            epsilons: DEFAULT_EPSILONS.to_vec(),
            deltas: Vec::new(),
            smoothing_width: None,
            viscosity: ViscosityRule::Fixed(0.05),
            grid: GridSpec::line(10.0, 1024),
            profile: Profile::GaussBump,
            horizon: 0.5,
            output_dt: 0.01,
            seed: 0,
            tau: 1.0,
            nbar: 1.0,
            cfl: crate::nsp::DEFAULT_CFL,
            pressure: PressureLaw::default(),
            acoustic: AcousticPlan {
                tau: f64::INFINITY,
                theta0: 10.0,
                theta1: 100.0,
                samples: 20,
                window: 2.0,
                horizon: 1.0,
                local_epsilons: vec![0.2, 0.1, 0.05],
            },
            limit: LimitPlan { kind: LimitKind::NsBrinkman, mu: 0.05, tau: 1.0, window: 4.0, max_dt: 5e-3 },
            korn: KornPlan { fields: 200, fraction: 0.1, ny: 32 },
        };
        match scenario {
            Scenario::QuasineutralRate => base,
            Scenario::ViscousLimit => Self { grid: strip_grid(), ..base },
            Scenario::InviscidLimit => Self {
                grid: strip_grid(),
                deltas: DEFAULT_DELTAS.to_vec(),
                viscosity: ViscosityRule::Scaled { kappa: 1.0, exponent: 2.0 },
                limit: LimitPlan { kind: LimitKind::EulerDamped, mu: 0.0, ..base.limit },
                ..base
            },
            Scenario::AcousticDecay => Self {
                grid: GridSpec::line(64.0, 4096),
                epsilons: vec![0.1],
                profile: Profile::CompactBump,
                tau: f64::INFINITY,
                ..base
            },
            Scenario::KornSurvey => Self { grid: GridSpec::strip(2.0, 32, 1.0, 9), epsilons: Vec::new(), ..base },
        }
    }

    /// Defaults for `scenario` overridden by `config`.
    pub fn from_config(scenario: Scenario, config: &Config) -> Result<Self> {
        let mut plan = Self::defaults(scenario);
        let c = config;
        plan.seed = c.u64("seed", plan.seed)?;
        if c.contains("profile") {
            plan.profile = c.string("profile", "")?.parse()?;
        }
        plan.grid = grid_from_config(c, plan.grid)?;
        if c.contains("pressure.a") || c.contains("pressure.perturbation") {
            let mut law = PressureLaw::power(c.f64("pressure.a", plan.pressure.scale())?)?;
            if c.contains("pressure.perturbation") {
                law = law.with_perturbation(Perturbation::parse(&c.string("pressure.perturbation", "")?)?)?;
            }
            plan.pressure = law;
        }
        let eps_key = if scenario == Scenario::AcousticDecay { "acoustic.epsilon" } else { "nsp.epsilon" };
        plan.epsilons = c.f64_list(eps_key, &plan.epsilons)?;
        if c.contains("nsp.mu") {
            let exponent = c.f64("nsp.mu_exponent", 1.0)?;
            plan.viscosity = ViscosityRule::parse(&c.string("nsp.mu", "")?, exponent)?;
        } else if let ViscosityRule::Scaled { kappa, .. } = plan.viscosity {
            if c.contains("nsp.mu_exponent") {
                plan.viscosity = ViscosityRule::Scaled { kappa, exponent: c.f64("nsp.mu_exponent", 2.0)? };
            }
        }
        plan.tau = c.f64("nsp.tau", plan.tau)?;
        plan.nbar = c.f64("nsp.nbar", plan.nbar)?;
        plan.horizon = c.f64("nsp.T_final", plan.horizon)?;
        plan.cfl = c.f64("nsp.cfl", plan.cfl)?;
        plan.output_dt = c.f64("nsp.output_dt", plan.output_dt)?;
        plan.deltas = c.f64_list("smoothing.delta", &plan.deltas)?;
        if c.contains("smoothing.width") {
            plan.smoothing_width = Some(c.f64("smoothing.width", 0.0)?);
        }

        let a = &mut plan.acoustic;
        a.tau = c.f64("acoustic.tau", a.tau)?;
        a.theta0 = c.f64("acoustic.t0", a.theta0)?;
        a.theta1 = c.f64("acoustic.t1", a.theta1)?;
        a.samples = c.usize("acoustic.samples", a.samples)?;
        a.window = c.f64("acoustic.window", a.window)?;
        a.horizon = c.f64("acoustic.horizon", a.horizon)?;
        a.local_epsilons = c.f64_list("acoustic.local_epsilon", &a.local_epsilons)?;
        if scenario == Scenario::AcousticDecay {
            plan.tau = a.tau;
        }

        let l = &mut plan.limit;
        if c.contains("limit.kind") {
            l.kind = c.string("limit.kind", "")?.parse()?;
        }
        l.mu = c.f64("limit.mu", l.mu)?;
        l.tau = c.f64("limit.tau", l.tau)?;
        l.window = c.f64("limit.window", l.window)?;
        l.max_dt = c.f64("limit.max_dt", l.max_dt)?;
        if c.contains("limit.T_final") {
            plan.horizon = c.f64("limit.T_final", plan.horizon)?;
        }

        let k = &mut plan.korn;
        k.fields = c.usize("korn.fields", k.fields)?;
        k.fraction = c.f64("korn.fraction", k.fraction)?;
        k.ny = c.usize("korn.ny", k.ny)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = WaveguideGrid::new(self.grid)?;
        let sound = self.pressure.pressure_derivative(self.nbar)?.sqrt();
        if !(self.nbar > 0.0 && self.tau > 0.0) {
            return Err(Error::Config("nbar and tau must be positive".into()));
        }
        if self.scenario != Scenario::KornSurvey {
            check_decreasing("epsilon", &self.epsilons)?;
            if self.epsilons.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
                return Err(Error::Config("every epsilon must lie in (0, 1]".into()));
            }
        }
        if self.scenario.needs_rate() && self.epsilons.len() < 3 {
            return Err(Error::Config(format!("a rate fit needs at least 3 epsilon values, got {}", self.epsilons.len())));
        }
        match self.scenario {
            Scenario::QuasineutralRate | Scenario::ViscousLimit | Scenario::InviscidLimit => {
                if !(self.horizon > 0.0 && self.output_dt > 0.0 && self.output_dt <= self.horizon) {
                    return Err(Error::Config("need 0 < output_dt <= T_final".into()));
                }
                for &eps in &self.epsilons {
                    let wrap = grid.wrap_time(sound / eps);
                    if self.horizon >= wrap {
                        return Err(Error::Config(format!(
                            "T_final {} reaches the wrap time {wrap:.4} at epsilon {eps}; enlarge grid.radius",
                            self.horizon
                        )));
                    }
                }
                if self.profile.support_radius() > PI * self.grid.radius {
                    return Err(Error::Config("profile support exceeds the grid".into()));
                }
                if matches!(self.scenario, Scenario::ViscousLimit | Scenario::InviscidLimit) {
                    if grid.dim() != 2 {
                        return Err(Error::Config("limit scenarios need a two-dimensional grid".into()));
                    }
                    if !(self.limit.window > 0.0 && self.limit.window < PI * self.grid.radius) {
                        return Err(Error::Config("limit.window must lie inside the grid".into()));
                    }
                }
                if self.scenario == Scenario::InviscidLimit {
                    check_decreasing("delta", &self.deltas)?;
                    for &delta in &self.deltas {
                        self.smoothing(delta)?.validate(&grid)?;
                    }
                }
            }
            Scenario::AcousticDecay => {
                let a = &self.acoustic;
                if !(a.theta0 > 0.0 && a.theta1 > a.theta0) || a.samples < 10 {
                    return Err(Error::Config("decay window needs 0 < t0 < t1 and >= 10 samples".into()));
                }
                // the front travels at most √p' on the θ clock
                if a.theta1 * sound >= PI * self.grid.radius {
                    return Err(Error::Config(format!("decay window reaches the wrap at theta = {}", PI * self.grid.radius / sound)));
                }
                check_decreasing("acoustic.local_epsilon", &a.local_epsilons)?;
                if a.window + 1.0 > PI * self.grid.radius || !(a.horizon > 0.0) {
                    return Err(Error::Config("acoustic window or horizon out of range".into()));
                }
            }
            Scenario::KornSurvey => {
                let k = &self.korn;
                if k.fields == 0 || !(k.fraction > 0.0 && k.fraction < 1.0) {
                    return Err(Error::Config("korn survey needs fields > 0 and 0 < fraction < 1".into()));
                }
                if !matches!(self.grid.cross_section, CrossSection::Interval { .. }) {
                    return Err(Error::Config("korn survey runs on the strip".into()));
                }
            }
        }
        Ok(())
    }

    pub fn smoothing(&self, delta: f64) -> Result<SmoothingSpec> {
        let spec = SmoothingSpec::new(delta)?;
        match self.smoothing_width {
            Some(w) => spec.with_width(w),
            None => Ok(spec),
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("plans serialize");
        hex::encode(Sha256::digest(bytes))
    }
}

fn check_decreasing(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Config(format!("the {name} list is empty")));
    }
    if values.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config(format!("the {name} list must decrease strictly")));
    }
    Ok(())
}

fn grid_from_config(c: &Config, default: GridSpec) -> Result<GridSpec> {
    let radius = c.f64("grid.radius", default.radius)?;
    let ny = c.usize("grid.ny", default.ny)?;
    let (default_kind, default_height, default_points) = match default.cross_section {
        CrossSection::Point => ("none", 1.0, 17),
        CrossSection::Interval { height, points } => ("interval", height, points),
        CrossSection::Periodic { length, points } => ("periodic", length, points),
    };
    let kind = c.string("grid.cross_section", default_kind)?;
    let height = c.f64("grid.height", default_height)?;
    let points = c.usize("grid.points", default_points)?;
    match kind.as_str() {
        "none" => Ok(GridSpec::line(radius, ny)),
        "interval" => Ok(GridSpec::strip(radius, ny, height, points)),
        "periodic" => Ok(GridSpec::doubly_periodic(radius, ny, height, points)),
        other => Err(Error::Config(format!("unknown cross_section `{other}`"))),
    }
}
