//! Pseudospectral SSP-RK3 integrator for the scaled Navier-Stokes-Poisson
//! system in conservative variables `(n, m = n u)`:
//!
//! ```text
//! ∂t n + div m = 0
//! ∂t m + div(m ⊗ u) + ∇p(n)/ε² = div S + n∇Φ/ε² - m/τ,   ΔΦ = n - n̄
//! ```
//!
//! with `S = μ(∇u + ∇ᵀu - (2/3) div u I)` and slip walls on the strip.

use std::f64::consts::PI;
use std::str::FromStr;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::field::VectorField;
use crate::fields::{poisson_spectral, solve_poisson_neumann, PoissonSolution};
use crate::synth::{compact_bump, gauss};
use crate::thermo::PressureLaw;
use crate::waveguide::{CrossSection, Parity, WaveguideGrid};
use crate::{Error, Result};

/// Density floor below which a run is aborted.
pub const DENSITY_FLOOR: f64 = 1e-8;
/// Default acoustic Courant number.
pub const DEFAULT_CFL: f64 = 0.4;

/// Scaled coefficients of the system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledParams {
    pub epsilon: f64,
    pub mu: f64,
    /// Relaxation time; `f64::INFINITY` switches damping off.
    #[serde(with = "crate::serde_ext")]
    pub tau: f64,
    pub nbar: f64,
    pub pressure: PressureLaw,
    pub cfl: f64,
}

impl ScaledParams {
    pub fn new(epsilon: f64, mu: f64, tau: f64, nbar: f64) -> Result<Self> {
        let params = Self { epsilon, mu, tau, nbar, pressure: PressureLaw::default(), cfl: DEFAULT_CFL };
        params.validate()?;
        Ok(params)
    }

    pub fn with_pressure(mut self, pressure: PressureLaw) -> Self {
        self.pressure = pressure;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1], got {}", self.epsilon)));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!("viscosity must be nonnegative, got {}", self.mu)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("relaxation time must be positive, got {}", self.tau)));
        }
        if !(self.nbar > 0.0 && self.nbar.is_finite()) {
            return Err(Error::Config(format!("background density must be positive, got {}", self.nbar)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        Ok(())
    }

    /// `1/τ`, zero without damping.
    pub fn damping(&self) -> f64 {
        if self.tau.is_finite() {
            1.0 / self.tau
        } else {
            0.0
        }
    }

    /// `p'(n̄)`.
    pub fn sound_speed_sq(&self) -> f64 {
        self.pressure.dp(self.nbar)
    }

    /// `c_ε = √p'(n̄) / ε`.
    pub fn sound_speed(&self) -> f64 {
        self.sound_speed_sq().sqrt() / self.epsilon
    }
}

/// Viscosity rule of a sweep: fixed, or `κ ε^a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ViscosityRule {
    Fixed(f64),
    Scaled { kappa: f64, exponent: f64 },
}

impl ViscosityRule {
    pub fn at(&self, epsilon: f64) -> f64 {
        match *self {
            ViscosityRule::Fixed(mu) => mu,
            ViscosityRule::Scaled { kappa, exponent } => kappa * epsilon.powf(exponent),
        }
    }

    /// Parses `0.05` or `scaled:κ` (the exponent is supplied separately).
    pub fn parse(value: &str, exponent: f64) -> Result<Self> {
        let value = value.trim();
        if let Some(kappa) = value.strip_prefix("scaled:") {
            let kappa = kappa
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad viscosity scale `{kappa}`")))?;
            Ok(ViscosityRule::Scaled { kappa, exponent })
        } else {
            value
                .parse()
                .map(ViscosityRule::Fixed)
                .map_err(|_| Error::Config(format!("bad viscosity `{value}`")))
        }
    }
}

/// Density and momentum at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct FluidState {
    pub t: f64,
    pub density: Array2<f64>,
    pub momentum: VectorField,
}

impl FluidState {
    pub fn velocity(&self) -> VectorField {
        self.momentum.div_scalar(&self.density)
    }

    /// `N = (n - n̄)/ε`.
    pub fn fluctuation(&self, params: &ScaledParams) -> Array2<f64> {
        self.density.mapv(|n| (n - params.nbar) / params.epsilon)
    }

    pub fn min_density(&self) -> f64 {
        self.density.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn is_finite(&self) -> bool {
        self.density.iter().all(|v| v.is_finite()) && self.momentum.is_finite()
    }
}

/// Time derivatives of `(n, m)`.
#[derive(Clone, Debug)]
pub struct Rates {
    pub density: Array2<f64>,
    pub momentum: VectorField,
}

/// Named initial-data profiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    Zero,
    GaussBump,
    CompactBump,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "zero" => Ok(Profile::Zero),
            "gauss-bump" => Ok(Profile::GaussBump),
            "compact-bump" => Ok(Profile::CompactBump),
            other => Err(Error::Config(format!("unknown profile `{other}`"))),
        }
    }
}

impl Profile {
    pub fn id(&self) -> &'static str {
        match self {
            Profile::Zero => "zero",
            Profile::GaussBump => "gauss-bump",
            Profile::CompactBump => "compact-bump",
        }
    }

    /// Axial radius outside of which the profile vanishes to rounding.
    pub fn support_radius(&self) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::GaussBump => 6.0,
            Profile::CompactBump => 2.0,
        }
    }

    /// `N₀` before the discrete mean is removed.
    fn fluctuation(&self, y: f64, z: f64, height: Option<f64>) -> f64 {
        let wall = height.map_or(0.0, |h| (PI * z / h).cos());
        match self {
            Profile::Zero => 0.0,
            Profile::GaussBump => (1.0 - 2.0 * y * y) * gauss(y, 1.0) + 0.5 * gauss(y, 1.0) * wall,
            Profile::CompactBump => compact_bump(y, 1.0) * (1.0 + 0.5 * wall),
        }
    }

    /// `u₀`: a gradient pulse on the line; vortex plus gradient pulse on the strip.
    fn velocity(&self, y: f64, z: f64, height: Option<f64>) -> [f64; 2] {
        if *self != Profile::GaussBump {
            return [0.0, 0.0];
        }
        let g = gauss(y, 1.0);
        let dg = -2.0 * y * g;
        match height {
            None => [y * g, 0.0],
            Some(h) => {
                let k = PI / h;
                let (c, s) = ((k * z).cos(), (k * z).sin());
                // ∇⊥[g sin kz] + ½∇[g (1 + cos kz)]
                let vortex = [g * k * c, -dg * s];
                let grad = [0.5 * dg * (1.0 + c), -0.5 * g * k * s];
                [vortex[0] + grad[0], vortex[1] + grad[1]]
            }
        }
    }
}

/// Ill-prepared initial data `n₀ = n̄ + εN₀`, `u₀`, `Φ₀ = Δ_N^{-1}[n₀ - n̄]`.
#[derive(Clone, Debug)]
pub struct IllPreparedData {
    pub epsilon: f64,
    pub nbar: f64,
    pub fluctuation: Array2<f64>,
    pub velocity: VectorField,
    pub density: Array2<f64>,
    pub potential: PoissonSolution,
}

impl IllPreparedData {
    pub fn state(&self) -> FluidState {
        FluidState { t: 0.0, density: self.density.clone(), momentum: self.velocity.times_scalar(&self.density) }
    }
}

pub fn make_ill_prepared(profile: Profile, epsilon: f64, nbar: f64, grid: &WaveguideGrid) -> Result<IllPreparedData> {
    let room = PI * grid.radius();
    if profile.support_radius() > room {
        return Err(Error::Config(format!(
            "profile `{}` needs axial radius {} but the grid half period is {room}",
            profile.id(),
            profile.support_radius()
        )));
    }
    let height = match grid.cross_section() {
        CrossSection::Interval { height, .. } => Some(height),
        CrossSection::Periodic { length, .. } => Some(length),
        CrossSection::Point => None,
    };
    let raw = grid.sample(|y, z| profile.fluctuation(y, z, height));
    let fluctuation = &raw - grid.mean(&raw);
    let comps = (0..grid.dim())
        .map(|d| {
            let mut c = grid.sample(|y, z| profile.velocity(y, z, height)[d]);
            grid.symmetrize(&mut c, grid.velocity_parity(d));
            c
        })
        .collect();
    let velocity = VectorField::from_components(comps);
    let density = fluctuation.mapv(|v| nbar + epsilon * v);
    let potential = solve_poisson_neumann(grid, &(&fluctuation * epsilon))?;
    Ok(IllPreparedData { epsilon, nbar, fluctuation, velocity, density, potential })
}

/// Energy functional parts at `r = n̄`, `U = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub internal: f64,
    pub field: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.kinetic + self.internal + self.field
    }
}

/// Snapshot handed to run observers.
pub struct Snapshot<'a> {
    pub state: &'a FluidState,
    /// `∫₀ᵗ D` accumulated with the stage weights of the integrator.
    pub dissipated: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub final_time: f64,
    pub dissipated: f64,
    pub initial_mass: f64,
    pub final_mass: f64,
}

/// One trajectory's integrator.
#[derive(Clone, Debug)]
pub struct Integrator {
    grid: WaveguideGrid,
    params: ScaledParams,
}

impl Integrator {
    pub fn new(grid: WaveguideGrid, params: ScaledParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { grid, params })
    }

    pub fn grid(&self) -> &WaveguideGrid {
        &self.grid
    }

    pub fn params(&self) -> &ScaledParams {
        &self.params
    }

    /// Band-limits and symmetrizes a state built from `(n, u)`.
    pub fn prepare(&self, density: Array2<f64>, velocity: &VectorField, t: f64) -> Result<FluidState> {
        if density.dim() != self.grid.shape() || velocity.dim() != self.grid.dim() {
            return Err(Error::GridMismatch("initial state shape".into()));
        }
        let momentum = velocity.times_scalar(&density);
        let mut state = FluidState { t, density, momentum };
        self.band_limit(&mut state);
        self.check_positive(&state)?;
        Ok(state)
    }

    fn band_limit(&self, state: &mut FluidState) {
        let g = &self.grid;
        let mut spec = g.forward(&state.density);
        g.dealias(&mut spec);
        state.density = g.inverse(&spec);
        for d in 0..state.momentum.dim() {
            let mut spec = g.forward(state.momentum.component(d));
            g.dealias(&mut spec);
            *state.momentum.component_mut(d) = g.inverse(&spec);
        }
        self.symmetrize(state);
    }

    fn symmetrize(&self, state: &mut FluidState) {
        self.grid.symmetrize(&mut state.density, Parity::Even);
        self.grid.symmetrize_vector(&mut state.momentum);
    }

    fn check_positive(&self, state: &FluidState) -> Result<()> {
        let min = state.min_density();
        if !(min >= DENSITY_FLOOR) {
            if min.is_nan() {
                return Err(Error::Instability { t: state.t, diagnostic: "density is NaN".into() });
            }
            return Err(Error::Positivity { t: state.t, min_density: min });
        }
        Ok(())
    }

    /// Electric potential and field for the current density.
    pub fn field(&self, state: &FluidState) -> PoissonSolution {
        let q = state.density.mapv(|n| n - self.params.nbar);
        poisson_spectral(&self.grid, &self.grid.forward(&q))
    }

    pub fn rhs(&self, state: &FluidState) -> Result<Rates> {
        self.check_positive(state)?;
        let g = &self.grid;
        let p = &self.params;
        let dim = g.dim();
        let eps2 = p.epsilon * p.epsilon;
        let u = state.velocity();
        let m_hat: Vec<Array2<Complex64>> = state.momentum.components().iter().map(|c| g.forward(c)).collect();
        let u_hat: Vec<Array2<Complex64>> = u.components().iter().map(|c| g.forward(c)).collect();
        let pressure_hat = g.forward(&state.density.mapv(|n| p.pressure.p(n)));
        let field = self.field(state);
        let i = Complex64::new(0.0, 1.0);

        let mut density_hat = Array2::<Complex64>::zeros(g.shape());
        for (d, mh) in m_hat.iter().enumerate() {
            Zip::indexed(&mut density_hat).and(mh).for_each(|(a, b), r, &v| {
                *r -= i * g.k_deriv(d, a, b) * v;
            });
        }

        let mut div_u_hat = Array2::<Complex64>::zeros(g.shape());
        for (d, uh) in u_hat.iter().enumerate() {
            Zip::indexed(&mut div_u_hat).and(uh).for_each(|(a, b), r, &v| {
                *r += i * g.k_deriv(d, a, b) * v;
            });
        }

        let mut momentum = Vec::with_capacity(dim);
        for c in 0..dim {
            let mut rate = Array2::<Complex64>::zeros(g.shape());
            // -div(m_c u)
            for j in 0..dim {
                let flux = g.forward(&(state.momentum.component(c) * u.component(j)));
                Zip::indexed(&mut rate).and(&flux).for_each(|(a, b), r, &v| {
                    *r -= i * g.k_deriv(j, a, b) * v;
                });
            }
            let force = g.forward(&(&state.density * field.gradient.component(c)));
            let damping = p.damping();
            for ((a, b), r) in rate.indexed_iter_mut() {
                let kc = g.k_deriv(c, a, b);
                let kk: f64 = (0..dim).map(|d| g.k_deriv(d, a, b).powi(2)).sum();
                let idx = [a, b];
                *r += -i * kc * pressure_hat[idx] / eps2
                    + p.mu * (-kk * u_hat[c][idx] + i * kc * div_u_hat[idx] / 3.0)
                    + force[idx] / eps2
                    - damping * m_hat[c][idx];
            }
            g.dealias(&mut rate);
            momentum.push(g.inverse(&rate));
        }
        g.dealias(&mut density_hat);
        Ok(Rates { density: g.inverse(&density_hat), momentum: VectorField::from_components(momentum) })
    }

    /// Largest admissible step: acoustic CFL plus a diffusive bound.
    pub fn cfl_limit(&self, state: &FluidState) -> f64 {
        let p = &self.params;
        let max_n = state.density.iter().fold(0.0f64, |m, &v| m.max(v));
        let max_dp = p.pressure.dp(max_n).max(p.pressure.dp(p.nbar));
        let h = self.grid.min_spacing();
        let acoustic = p.cfl * h * p.epsilon / max_dp.sqrt();
        if p.mu > 0.0 {
            let min_n = state.min_density().max(DENSITY_FLOOR);
            let diffusive = p.cfl * h * h * min_n / (p.mu * (4.0 / 3.0) * self.grid.dim() as f64);
            acoustic.min(diffusive)
        } else {
            acoustic
        }
    }

    pub fn step(&self, state: &FluidState, dt: f64) -> Result<FluidState> {
        self.step_with_dissipation(state, dt).map(|(s, _)| s)
    }

    /// One SSP-RK3 step; also returns `∫ D dt` over the step.
    pub fn step_with_dissipation(&self, state: &FluidState, dt: f64) -> Result<(FluidState, f64)> {
        let limit = self.cfl_limit(state);
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, limit });
        }
        let combine = |a: &FluidState, wa: f64, b: &FluidState, wb: f64, rate: &Rates, t: f64| {
            let mut density = &a.density * wa + &b.density * wb;
            density.scaled_add(wb * dt, &rate.density);
            let mut momentum = a.momentum.scaled(wa);
            momentum.axpy(wb, &b.momentum);
            momentum.axpy(wb * dt, &rate.momentum);
            FluidState { t, density, momentum }
        };
        let d0 = self.dissipation_rate(state);
        let r0 = self.rhs(state)?;
        let s1 = combine(state, 0.0, state, 1.0, &r0, state.t + dt);
        let d1 = self.dissipation_rate(&s1);
        let r1 = self.rhs(&s1)?;
        let s2 = combine(state, 0.75, &s1, 0.25, &r1, state.t + 0.5 * dt);
        let d2 = self.dissipation_rate(&s2);
        let r2 = self.rhs(&s2)?;
        let mut s3 = combine(state, 1.0 / 3.0, &s2, 2.0 / 3.0, &r2, state.t + dt);
        self.symmetrize(&mut s3);
        if !s3.is_finite() {
            return Err(Error::Instability {
                t: s3.t,
                diagnostic: format!(
                    "non-finite state after step dt = {dt:.3e}; entering min n = {:.3e}, max |m| = {:.3e}",
                    state.min_density(),
                    state.momentum.max_abs()
                ),
            });
        }
        self.check_positive(&s3)?;
        Ok((s3, dt * (d0 / 6.0 + d1 / 6.0 + 2.0 * d2 / 3.0)))
    }

    /// `∫ S:∇u + (1/τ) ∫ n|u|²`.
    pub fn dissipation_rate(&self, state: &FluidState) -> f64 {
        let g = &self.grid;
        let p = &self.params;
        let u = state.velocity();
        let mut rate = p.damping() * g.integrate(&(&state.density * &u.norm_sq()));
        if p.mu > 0.0 {
            rate += p.mu * g.integrate(&stress_contraction(g, &u));
        }
        rate
    }

    pub fn energy(&self, state: &FluidState) -> EnergyParts {
        let g = &self.grid;
        let p = &self.params;
        let eps2 = p.epsilon * p.epsilon;
        let u = state.velocity();
        let field = self.field(state);
        EnergyParts {
            kinetic: 0.5 * g.integrate(&(&state.density * &u.norm_sq())),
            internal: g.integrate(&p.pressure.relative_entropy_field(&state.density, p.nbar)) / eps2,
            field: 0.5 * g.integrate(&field.gradient.norm_sq()) / eps2,
        }
    }

    pub fn mass(&self, state: &FluidState) -> f64 {
        self.grid.integrate(&state.density)
    }

    /// Integrates to `t_final`, calling `observer` at `t = 0` and every
    /// `output_dt`; steps are shortened to land on output times exactly.
    pub fn run<F>(&self, initial: FluidState, t_final: f64, output_dt: f64, mut observer: F) -> Result<(FluidState, RunSummary)>
    where
        F: FnMut(&Snapshot<'_>),
    {
        if !(t_final >= initial.t && output_dt > 0.0) {
            return Err(Error::Config(format!("bad horizon {t_final} or output cadence {output_dt}")));
        }
        let initial_mass = self.mass(&initial);
        let mut state = initial;
        let mut dissipated = 0.0;
        let mut steps = 0;
        observer(&Snapshot { state: &state, dissipated, steps });
        let outputs = ((t_final - state.t) / output_dt - 1e-9).ceil().max(0.0) as usize;
        let start = state.t;
        for k in 1..=outputs {
            let target = (start + k as f64 * output_dt).min(t_final);
            while state.t < target - 1e-14 * target.max(1.0) {
                let remaining = target - state.t;
                let limit = self.cfl_limit(&state);
                let sub = (remaining / limit).ceil().max(1.0);
                let dt = remaining / sub;
                let (next, d) = self.step_with_dissipation(&state, dt)?;
                state = next;
                dissipated += d;
                steps += 1;
            }
            state.t = target;
            observer(&Snapshot { state: &state, dissipated, steps });
        }
        let final_mass = self.mass(&state);
        let summary = RunSummary { steps, final_time: state.t, dissipated, initial_mass, final_mass };
        Ok((state, summary))
    }
}

/// Pointwise `S:∇u / μ` for `S = μ(∇u + ∇ᵀu - (2/3) div u I)`.
pub fn stress_contraction(grid: &WaveguideGrid, u: &VectorField) -> Array2<f64> {
    let dim = u.dim();
    let grads: Vec<VectorField> = u.components().iter().map(|c| grid.gradient(c)).collect();
    let mut out = grid.zeros();
    let mut div = grid.zeros();
    for (d, gd) in grads.iter().enumerate() {
        div += gd.component(d);
    }
    for a in 0..dim {
        for b in 0..dim {
            let gab = grads[a].component(b);
            let gba = grads[b].component(a);
            Zip::from(&mut out).and(gab).and(gba).for_each(|o, &x, &y| *o += (x + y) * x);
        }
    }
    Zip::from(&mut out).and(&div).for_each(|o, &dv| *o -= 2.0 / 3.0 * dv * dv);
    out
}
