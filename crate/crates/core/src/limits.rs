//! Reference solvers for the limit systems:
//!
//! ```text
//! n̄(∂t U + U·∇U) + ∇Π = μ ΔU - (n̄/τ) U,   div U = 0      (Navier-Stokes-Brinkman)
//! ∂t v + v·∇v + ∇Π = -v/τ,                 div v = 0      (damped Euler)
//! ```
//!
//! The pressure is eliminated by the Leray projection. Time stepping is a
//! Lawson (integrating-factor) form of Kutta's RK3, so the linear viscous and
//! damping parts are integrated exactly per mode.

use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::field::VectorField;
use crate::fields::{helmholtz_unchecked, leray};
use crate::nsp::stress_contraction;
use crate::quadrature::simpson_uniform;
use crate::waveguide::WaveguideGrid;
use crate::{Error, Result};

/// Growth of `‖∇v‖∞` past which the smooth-solution window is closed.
pub const SMOOTHNESS_FACTOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    NsBrinkman,
    EulerDamped,
}

impl FromStr for LimitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ns_brinkman" => Ok(LimitKind::NsBrinkman),
            "euler_damped" => Ok(LimitKind::EulerDamped),
            other => Err(Error::Config(format!("unknown limit kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IncompressibleState {
    pub t: f64,
    pub velocity: VectorField,
}

/// `v₀ = H[u₀]`.
pub fn project_initial(grid: &WaveguideGrid, u0: &VectorField) -> Result<VectorField> {
    leray(grid, u0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitParams {
    pub kind: LimitKind,
    /// Ignored by the Euler kind.
    pub mu: f64,
    #[serde(with = "crate::serde_ext")]
    pub tau: f64,
    pub nbar: f64,
    pub cfl: f64,
}

impl LimitParams {
    pub fn ns_brinkman(mu: f64, tau: f64, nbar: f64) -> Self {
        Self { kind: LimitKind::NsBrinkman, mu, tau, nbar, cfl: 0.4 }
    }

    pub fn euler_damped(tau: f64, nbar: f64) -> Self {
        Self { kind: LimitKind::EulerDamped, mu: 0.0, tau, nbar, cfl: 0.4 }
    }

    fn viscosity(&self) -> f64 {
        match self.kind {
            LimitKind::NsBrinkman => self.mu / self.nbar,
            LimitKind::EulerDamped => 0.0,
        }
    }

    fn damping(&self) -> f64 {
        if self.tau.is_finite() {
            1.0 / self.tau
        } else {
            0.0
        }
    }
}

/// Tracks `‖∇v‖∞` against its initial value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothnessMonitor {
    pub initial: f64,
    pub current: f64,
    /// Time at which the threshold was first crossed.
    pub exceeded_at: Option<f64>,
}

impl SmoothnessMonitor {
    pub fn is_open(&self) -> bool {
        self.exceeded_at.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct LimitSolver {
    grid: WaveguideGrid,
    params: LimitParams,
    /// `exp(-36 (k/k_max)^36)` for the Euler kind, 1 otherwise.
    filter: Array2<f64>,
}

impl LimitSolver {
    pub fn new(grid: WaveguideGrid, params: LimitParams) -> Result<Self> {
        if !(params.mu >= 0.0 && params.tau > 0.0 && params.nbar > 0.0) {
            return Err(Error::Config("limit solver needs mu >= 0, tau > 0, nbar > 0".into()));
        }
        let mut filter = Array2::from_elem(grid.shape(), 1.0);
        if params.kind == LimitKind::EulerDamped {
            let ky_max = grid.ky().iter().fold(0.0f64, |m, k| m.max(k.abs()));
            let kz_max = grid.kz().iter().fold(0.0f64, |m, k| m.max(k.abs()));
            for ((i, j), f) in filter.indexed_iter_mut() {
                let ry = if ky_max > 0.0 { grid.ky()[i].abs() / ky_max } else { 0.0 };
                let rz = if kz_max > 0.0 { grid.kz()[j].abs() / kz_max } else { 0.0 };
                *f = (-36.0 * ry.max(rz).powi(36)).exp();
            }
        }
        Ok(Self { grid, params, filter })
    }

    pub fn grid(&self) -> &WaveguideGrid {
        &self.grid
    }

    pub fn params(&self) -> &LimitParams {
        &self.params
    }

    pub fn initial_state(&self, u0: &VectorField) -> Result<IncompressibleState> {
        Ok(IncompressibleState { t: 0.0, velocity: project_initial(&self.grid, u0)? })
    }

    /// `-H[U·∇U]`, dealiased.
    pub fn advection(&self, u: &VectorField) -> VectorField {
        let g = &self.grid;
        let grads: Vec<VectorField> = u.components().iter().map(|c| g.gradient(c)).collect();
        let comps = (0..u.dim())
            .map(|c| {
                let mut acc = g.zeros();
                for j in 0..u.dim() {
                    acc = acc + u.component(j) * grads[c].component(j);
                }
                let mut spec = g.forward(&acc);
                g.dealias(&mut spec);
                -g.inverse(&spec)
            })
            .collect();
        helmholtz_unchecked(g, &VectorField::from_components(comps)).solenoidal
    }

    /// `e^{-(ν|k|² + 1/τ) h}` per mode.
    fn linear_flow(&self, u: &VectorField, h: f64) -> VectorField {
        let g = &self.grid;
        let nu = self.params.viscosity();
        let damping = self.params.damping();
        VectorField::from_components(
            u.components()
                .iter()
                .map(|c| {
                    let mut spec = g.forward(c);
                    for ((i, j), v) in spec.indexed_iter_mut() {
                        *v *= (-(nu * g.k2(i, j) + damping) * h).exp();
                    }
                    g.inverse(&spec)
                })
                .collect(),
        )
    }

    fn apply_filter(&self, u: &mut VectorField) {
        if self.params.kind != LimitKind::EulerDamped {
            return;
        }
        let g = &self.grid;
        for c in u.components_mut() {
            let mut spec: Array2<Complex64> = g.forward(c);
            spec.zip_mut_with(&self.filter, |v, &f| *v *= f);
            *c = g.inverse(&spec);
        }
    }

    pub fn cfl_limit(&self, state: &IncompressibleState) -> f64 {
        let speed = state.velocity.max_abs();
        if speed > 0.0 {
            self.params.cfl * self.grid.min_spacing() / speed
        } else {
            f64::INFINITY
        }
    }

    pub fn step(&self, state: &IncompressibleState, dt: f64) -> Result<IncompressibleState> {
        let limit = self.cfl_limit(state);
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, limit });
        }
        let u = &state.velocity;
        let k1 = self.advection(u);
        let mut a = u.clone();
        a.axpy(0.5 * dt, &k1);
        let a = self.linear_flow(&a, 0.5 * dt);
        let k2 = self.advection(&a);
        let mut b = u.clone();
        b.axpy(-dt, &k1);
        let mut b = self.linear_flow(&b, dt);
        b.axpy(2.0 * dt, &self.linear_flow(&k2, 0.5 * dt));
        let k3 = self.advection(&b);
        let mut tail = self.linear_flow(&k1, dt);
        tail.axpy(4.0, &self.linear_flow(&k2, 0.5 * dt));
        tail.axpy(1.0, &k3);
        let mut next = self.linear_flow(u, dt);
        next.axpy(dt / 6.0, &tail);
        self.apply_filter(&mut next);
        self.grid.symmetrize_vector(&mut next);
        if !next.is_finite() {
            return Err(Error::Instability {
                t: state.t + dt,
                diagnostic: format!("limit velocity non-finite after dt = {dt:.3e}; entering max |v| = {:.3e}", u.max_abs()),
            });
        }
        Ok(IncompressibleState { t: state.t + dt, velocity: next })
    }

    /// Integrates to `t_final`, observing at `t = 0` and every `output_dt`.
    /// Steps never exceed `max_dt` and land on output times exactly.
    pub fn run<F>(
        &self,
        initial: IncompressibleState,
        t_final: f64,
        output_dt: f64,
        max_dt: f64,
        mut observer: F,
    ) -> Result<IncompressibleState>
    where
        F: FnMut(&IncompressibleState),
    {
        if !(output_dt > 0.0 && max_dt > 0.0 && t_final >= initial.t) {
            return Err(Error::Config("bad limit horizon or cadence".into()));
        }
        let mut state = initial;
        observer(&state);
        let start = state.t;
        let outputs = ((t_final - start) / output_dt - 1e-9).ceil().max(0.0) as usize;
        for k in 1..=outputs {
            let target = (start + k as f64 * output_dt).min(t_final);
            while state.t < target - 1e-14 * target.max(1.0) {
                let remaining = target - state.t;
                let cap = self.cfl_limit(&state).min(max_dt);
                let dt = remaining / (remaining / cap).ceil().max(1.0);
                state = self.step(&state, dt)?;
            }
            state.t = target;
            observer(&state);
        }
        Ok(state)
    }

    /// `½ n̄ ‖U‖²`.
    pub fn energy(&self, state: &IncompressibleState) -> f64 {
        0.5 * self.params.nbar * self.grid.integrate(&state.velocity.norm_sq())
    }

    /// `μ ∫ S(∇U):∇U / μ + (n̄/τ) ‖U‖²` with `μ = n̄ ν`.
    pub fn dissipation_rate(&self, state: &IncompressibleState) -> f64 {
        let g = &self.grid;
        let p = &self.params;
        let mut rate = p.nbar * p.damping() * g.integrate(&state.velocity.norm_sq());
        let mu = p.nbar * p.viscosity();
        if mu > 0.0 {
            rate += mu * g.integrate(&stress_contraction(g, &state.velocity));
        }
        rate
    }

    /// Pressure `Π` from the gradient part of `-n̄ U·∇U`.
    pub fn pressure(&self, state: &IncompressibleState) -> Array2<f64> {
        let g = &self.grid;
        let u = &state.velocity;
        let grads: Vec<VectorField> = u.components().iter().map(|c| g.gradient(c)).collect();
        let comps = (0..u.dim())
            .map(|c| {
                let mut acc = g.zeros();
                for j in 0..u.dim() {
                    acc = acc + u.component(j) * grads[c].component(j);
                }
                acc * (-self.params.nbar)
            })
            .collect();
        helmholtz_unchecked(g, &VectorField::from_components(comps)).potential
    }

    pub fn smoothness_monitor(&self, initial: &IncompressibleState) -> SmoothnessMonitor {
        let g0 = self.max_gradient(initial);
        SmoothnessMonitor { initial: g0, current: g0, exceeded_at: None }
    }

    pub fn update_monitor(&self, monitor: &mut SmoothnessMonitor, state: &IncompressibleState) {
        monitor.current = self.max_gradient(state);
        if monitor.exceeded_at.is_none() && monitor.current > SMOOTHNESS_FACTOR * monitor.initial.max(f64::MIN_POSITIVE) {
            monitor.exceeded_at = Some(state.t);
        }
    }

    /// `‖∇v‖∞` over all components.
    pub fn max_gradient(&self, state: &IncompressibleState) -> f64 {
        state.velocity.components().iter().map(|c| self.grid.gradient(c).max_abs()).fold(0.0, f64::max)
    }

    /// Residual of the weak form tested against `θ(t) w(x)`, `θ = cos²(πt/(2T))`:
    ///
    /// ```text
    /// ∫₀ᵀ [θ' n̄∫U·w + θ(n̄∫(U⊗U):∇w - ∫S(∇U):∇w - (n̄/τ)∫U·w)] dt + n̄∫U₀·w
    /// ```
    ///
    /// `samples` are uniform in time from 0 to `T` with an odd count.
    pub fn weak_residual(&self, samples: &[IncompressibleState], w: &VectorField) -> Result<f64> {
        let g = &self.grid;
        let p = &self.params;
        if samples.len() < 3 || samples.len().is_multiple_of(2) {
            return Err(Error::Config("weak residual needs an odd number (>= 3) of samples".into()));
        }
        let t0 = samples[0].t;
        let horizon = samples.last().unwrap().t - t0;
        let h = horizon / (samples.len() - 1) as f64;
        if samples.iter().enumerate().any(|(k, s)| (s.t - t0 - k as f64 * h).abs() > 1e-9 * horizon.max(1.0)) {
            return Err(Error::Config("weak residual samples must be uniform in time".into()));
        }
        let half_pi = std::f64::consts::FRAC_PI_2 / horizon;
        let grad_w: Vec<VectorField> = w.components().iter().map(|c| g.gradient(c)).collect();
        let mu = p.nbar * p.viscosity();
        let values: Vec<f64> = samples
            .iter()
            .map(|s| {
                let t = s.t - t0;
                let theta = (half_pi * t).cos().powi(2);
                let dtheta = -half_pi * (2.0 * half_pi * t).sin();
                let u = &s.velocity;
                let uw = g.inner_vector(u, w);
                let mut convect = 0.0;
                let mut viscous = 0.0;
                let grad_u: Vec<VectorField> = u.components().iter().map(|c| g.gradient(c)).collect();
                let div = g.divergence(u);
                for a in 0..u.dim() {
                    for b in 0..u.dim() {
                        let wab = grad_w[a].component(b);
                        convect += g.inner(&(u.component(a) * u.component(b)), wab);
                        let mut sab = grad_u[a].component(b) + grad_u[b].component(a);
                        if a == b {
                            sab = sab - &div * (2.0 / 3.0);
                        }
                        viscous += g.inner(&sab, wab);
                    }
                }
                dtheta * p.nbar * uw + theta * (p.nbar * convect - mu * viscous - p.nbar * p.damping() * uw)
            })
            .collect();
        Ok(simpson_uniform(h, &values) + p.nbar * g.inner_vector(&samples[0].velocity, w))
    }
}
