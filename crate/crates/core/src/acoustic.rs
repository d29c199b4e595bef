//! Exact mode-space propagator for the scaled acoustic system
//!
//! ```text
//! ε ∂t s + ΔΨ = 0
//! ε ∂t ∇Ψ + p'(n̄)∇s - n̄ ∇Δ_N^{-1} s + (ε/τ)∇Ψ = 0
//! ```
//!
//! Per mode with `a = λ_k + ξ²` this is `s'' + s'/τ + (A/ε²) s = 0`, `A = p'(n̄) a + n̄`,
//! a damped Klein-Gordon oscillator. The mean mode is excluded throughout.

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fields::{check_compatibility, helmholtz, inverse_neumann, InversePower};
use crate::field::VectorField;
use crate::nsp::ScaledParams;
use crate::quadrature::{gauss_legendre, simpson_uniform};
use crate::thermo::smoothstep;
use crate::waveguide::WaveguideGrid;
use crate::{Error, Result};

/// Tolerance on the mean of acoustic initial data.
pub const MEAN_TOL: f64 = 1e-10;

/// Scalar coefficients of the acoustic system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcousticParams {
    /// `p'(n̄)`
    pub sound_sq: f64,
    pub nbar: f64,
    pub epsilon: f64,
    /// `f64::INFINITY` for the undamped system.
    #[serde(with = "crate::serde_ext")]
    pub tau: f64,
}

impl AcousticParams {
    pub fn from_scaled(params: &ScaledParams) -> Self {
        Self { sound_sq: params.sound_speed_sq(), nbar: params.nbar, epsilon: params.epsilon, tau: params.tau }
    }

    /// `γ = 1/(2τ)`.
    pub fn gamma(&self) -> f64 {
        if self.tau.is_finite() {
            0.5 / self.tau
        } else {
            0.0
        }
    }

    /// `n̄ - ε²/(4τ²)`; must be positive.
    pub fn mass(&self) -> f64 {
        let g = self.epsilon * self.gamma();
        self.nbar - g * g
    }

    /// Klein-Gordon frequency `√(p' ξ² + p' λ + n̄ - ε²/(4τ²))` on the `t/ε` clock.
    pub fn kg_frequency(&self, lambda: f64, xi: f64) -> Result<f64> {
        let mass = self.mass();
        if !(mass > 0.0) {
            return Err(Error::Regime { mass });
        }
        Ok((self.sound_sq * (xi * xi + lambda) + mass).sqrt())
    }

    /// Oscillation frequency on the physical clock for `a = λ + ξ²`.
    fn omega(&self, a: f64) -> f64 {
        (self.sound_sq * a + self.mass()).sqrt() / self.epsilon
    }
}

/// Complex mode amplitudes of `s` and `Ψ` on the grid's spectral lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeField {
    pub t: f64,
    pub s_hat: Array2<Complex64>,
    pub psi_hat: Array2<Complex64>,
}

impl ModeField {
    pub fn zeros(grid: &WaveguideGrid) -> Self {
        Self { t: 0.0, s_hat: Array2::zeros(grid.shape()), psi_hat: Array2::zeros(grid.shape()) }
    }

    /// Transforms physical `(s, Ψ)`, dropping the mean and Nyquist modes
    /// (the latter have no first derivative).
    pub fn from_fields(grid: &WaveguideGrid, s: &Array2<f64>, psi: &Array2<f64>) -> Self {
        let mut s_hat = grid.forward(s);
        let mut psi_hat = grid.forward(psi);
        let nyquist = |i: usize, j: usize| {
            (grid.ky()[i] != 0.0 && grid.ky_deriv()[i] == 0.0) || (grid.kz()[j] != 0.0 && grid.kz_deriv()[j] == 0.0)
        };
        Zip::indexed(&mut s_hat).and(&mut psi_hat).for_each(|(i, j), s, p| {
            if (i, j) == (0, 0) || nyquist(i, j) {
                *s = Complex64::default();
                *p = Complex64::default();
            }
        });
        Self { t: 0.0, s_hat, psi_hat }
    }

    pub fn s(&self, grid: &WaveguideGrid) -> Array2<f64> {
        grid.inverse(&self.s_hat)
    }

    pub fn psi(&self, grid: &WaveguideGrid) -> Array2<f64> {
        grid.inverse(&self.psi_hat)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { t: self.t, s_hat: &self.s_hat * factor, psi_hat: &self.psi_hat * factor }
    }
}

/// Forcing of the `s` equation, `s'' + s'/τ + (A/ε²)s = f`, sampled in mode space.
#[derive(Clone, Debug)]
pub struct Forcing {
    pub times: Vec<f64>,
    pub samples: Vec<Array2<Complex64>>,
}

impl Forcing {
    pub fn new(times: Vec<f64>, samples: Vec<Array2<Complex64>>) -> Result<Self> {
        if times.len() != samples.len() || times.len() < 2 {
            return Err(Error::Config("forcing needs at least two samples, one per time".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("forcing times must increase strictly".into()));
        }
        Ok(Self { times, samples })
    }

    /// Samples `f(t)` of the same field at every time.
    pub fn constant(times: Vec<f64>, value: &Array2<Complex64>) -> Result<Self> {
        let samples = vec![value.clone(); times.len()];
        Self::new(times, samples)
    }
}

/// Smoothed axial window `χ(y)`: 1 on `|y| ≤ half_width`, ramping to 0 over `ramp`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Window {
    Whole,
    Axial { half_width: f64, ramp: f64 },
}

impl Window {
    pub fn weight(&self, y: f64) -> f64 {
        match *self {
            Window::Whole => 1.0,
            Window::Axial { half_width, ramp } => {
                let excess = y.abs() - half_width;
                if excess <= 0.0 {
                    1.0
                } else if excess >= ramp {
                    0.0
                } else {
                    1.0 - smoothstep(excess / ramp)
                }
            }
        }
    }
}

/// `A = -p'(n̄)Δ_N + n̄` on one grid, with its exact propagator.
#[derive(Clone, Debug)]
pub struct AcousticOperator {
    grid: WaveguideGrid,
    params: AcousticParams,
}

impl AcousticOperator {
    pub fn new(grid: &WaveguideGrid, params: &ScaledParams) -> Result<Self> {
        Self::with_params(grid, AcousticParams::from_scaled(params))
    }

    pub fn with_params(grid: &WaveguideGrid, params: AcousticParams) -> Result<Self> {
        let mass = params.mass();
        if !(mass > 0.0) {
            return Err(Error::Regime { mass });
        }
        if !(params.sound_sq > 0.0 && params.epsilon > 0.0) {
            return Err(Error::Config("acoustic coefficients must be positive".into()));
        }
        Ok(Self { grid: grid.clone(), params })
    }

    pub fn grid(&self) -> &WaveguideGrid {
        &self.grid
    }

    pub fn params(&self) -> &AcousticParams {
        &self.params
    }

    /// Symbol `p'(n̄)(λ_k + ξ²) + n̄`.
    pub fn symbol(&self, i: usize, j: usize) -> f64 {
        self.params.sound_sq * self.grid.k2(i, j) + self.params.nbar
    }

    /// Klein-Gordon frequency of cross mode `k` at axial wavenumber `ξ`.
    pub fn kg_frequency(&self, k: usize, xi: f64) -> Result<f64> {
        self.params.kg_frequency(self.grid.eigenvalue(k), xi)
    }

    /// Fastest physical-clock frequency among the resolved modes.
    pub fn max_frequency(&self) -> f64 {
        let (ny, nz) = self.grid.shape();
        let mut top = 0.0f64;
        for i in 0..ny {
            for j in 0..nz {
                top = top.max(self.grid.k2(i, j));
            }
        }
        self.params.omega(top)
    }

    /// Exact evolution of every mode by `t`.
    pub fn propagate(&self, modes: &ModeField, t: f64) -> ModeField {
        let p = &self.params;
        let gamma = p.gamma();
        let eps = p.epsilon;
        let mut out = ModeField { t: modes.t + t, s_hat: modes.s_hat.clone(), psi_hat: modes.psi_hat.clone() };
        Zip::indexed(&mut out.s_hat).and(&mut out.psi_hat).for_each(|(i, j), s, psi| {
            let a = self.grid.k2(i, j);
            if a == 0.0 {
                *s = Complex64::default();
                *psi = Complex64::default();
                return;
            }
            let omega = p.omega(a);
            let (sin, cos) = (omega * t).sin_cos();
            let decay = (-gamma * t).exp();
            let s0 = *s;
            let ds0 = *psi * (a / eps);
            let d = (ds0 + s0 * gamma) / omega;
            let st = (s0 * cos + d * sin) * decay;
            let dst = (ds0 * cos - (d * gamma + s0 * omega) * sin) * decay;
            *s = st;
            *psi = dst * (eps / a);
        });
        out
    }

    /// Propagation plus the Duhamel integral of `forcing` over `[0, t]`.
    ///
    /// The forcing is interpolated linearly between samples; each interval is
    /// integrated with 8-point Gauss-Legendre.
    pub fn duhamel(&self, modes: &ModeField, forcing: &Forcing, t: f64) -> Result<ModeField> {
        let mut out = self.propagate(modes, t);
        if t <= 0.0 {
            return Ok(out);
        }
        let times = &forcing.times;
        if times[0] > 1e-14 * t.max(1.0) || *times.last().unwrap() < t * (1.0 - 1e-14) {
            return Err(Error::Config(format!("forcing samples [{}, {}] do not cover [0, {t}]", times[0], times.last().unwrap())));
        }
        let active: Vec<(usize, usize)> = forcing.samples[0]
            .indexed_iter()
            .filter(|&((i, j), _)| {
                self.grid.k2(i, j) > 0.0 && forcing.samples.iter().any(|f| f[[i, j]].norm() > 0.0)
            })
            .map(|(ij, _)| ij)
            .collect();
        let fastest = active.iter().map(|&(i, j)| self.params.omega(self.grid.k2(i, j))).fold(0.0, f64::max);
        if fastest > 0.0 {
            let limit = 2.0 * std::f64::consts::PI / fastest / 8.0;
            let spacing = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            if spacing > limit * (1.0 + 1e-12) {
                return Err(Error::Sampling { spacing, limit });
            }
        }
        let (nodes, weights) = gauss_legendre(8);
        let gamma = self.params.gamma();
        let eps = self.params.epsilon;
        for &(i, j) in &active {
            let a = self.grid.k2(i, j);
            let omega = self.params.omega(a);
            let mut s_acc = Complex64::default();
            let mut ds_acc = Complex64::default();
            for (w, win) in times.windows(2).enumerate() {
                let (lo, hi) = (win[0], win[1].min(t));
                if hi <= lo {
                    break;
                }
                let (f0, f1) = (forcing.samples[w][[i, j]], forcing.samples[w + 1][[i, j]]);
                let half = 0.5 * (hi - lo);
                let mid = 0.5 * (hi + lo);
                for (x, wt) in nodes.iter().zip(&weights) {
                    let sigma = mid + half * x;
                    let theta = (sigma - win[0]) / (win[1] - win[0]);
                    let f = f0 * (1.0 - theta) + f1 * theta;
                    let lag = t - sigma;
                    let decay = (-gamma * lag).exp();
                    let (sin, cos) = (omega * lag).sin_cos();
                    s_acc += f * (wt * half * decay * sin / omega);
                    ds_acc += f * (wt * half * decay * (cos - gamma * sin / omega));
                }
            }
            out.s_hat[[i, j]] += s_acc;
            out.psi_hat[[i, j]] += ds_acc * (eps / a);
        }
        Ok(out)
    }

    /// `Σ a|Ψ̂|² + p'|ŝ|² + n̄|ŝ|²/a`, i.e. `∫|∇Ψ|² + p'|s|² + n̄|(-Δ_N)^{-1/2}s|²`.
    pub fn energy(&self, modes: &ModeField) -> f64 {
        let p = &self.params;
        let mut acc = 0.0;
        Zip::indexed(&modes.s_hat).and(&modes.psi_hat).for_each(|(i, j), s, psi| {
            let a = self.grid.k2(i, j);
            if a > 0.0 {
                acc += a * psi.norm_sqr() + (p.sound_sq + p.nbar / a) * s.norm_sqr();
            }
        });
        acc * self.parseval_weight()
    }

    /// `(2/τ) ∫|∇Ψ|²`, the energy loss rate.
    pub fn dissipation_rate(&self, modes: &ModeField) -> f64 {
        let mut acc = 0.0;
        Zip::indexed(&modes.psi_hat).for_each(|(i, j), psi| acc += self.grid.k2(i, j) * psi.norm_sqr());
        4.0 * self.params.gamma() * acc * self.parseval_weight()
    }

    /// Converts `Σ|f̂|²` into `∫|f|²`.
    fn parseval_weight(&self) -> f64 {
        let (ny, nz) = self.grid.shape();
        let n = (ny * nz) as f64;
        self.grid.integrate(&self.grid.zeros().mapv(|_| 1.0)) / (n * n)
    }

    /// Pointwise energy density `|∇Ψ|² + p'|s|² + n̄|(-Δ_N)^{-1/2}s|²`.
    pub fn energy_density(&self, modes: &ModeField) -> Array2<f64> {
        let g = &self.grid;
        let p = &self.params;
        let s = modes.s(g);
        let mut half = modes.s_hat.clone();
        for ((i, j), c) in half.indexed_iter_mut() {
            let a = g.k2(i, j);
            *c = if a > 0.0 { *c / a.sqrt() } else { Complex64::default() };
        }
        let half = g.inverse(&half);
        let grad = g.gradient(&modes.psi(g));
        let mut out = grad.norm_sq();
        Zip::from(&mut out).and(&s).and(&half).for_each(|e, &sv, &hv| {
            *e += p.sound_sq * sv * sv + p.nbar * hv * hv;
        });
        out
    }

    /// `-(1/ε)∇[(A/a) N]`, the linearized momentum rate at rest for `n = n̄ + εN`.
    pub fn linear_momentum_rate(&self, fluctuation: &Array2<f64>) -> VectorField {
        let g = &self.grid;
        let mut spec = g.forward(fluctuation);
        for ((i, j), c) in spec.indexed_iter_mut() {
            let a = g.k2(i, j);
            *c = if a > 0.0 { *c * (self.symbol(i, j) / a) } else { Complex64::default() };
        }
        let q = g.inverse(&spec);
        g.gradient(&q).scaled(-1.0 / self.params.epsilon)
    }

    /// `(1/T) ∫₀ᵀ ∫ χ e(t) dt` by composite Simpson on `samples` (made odd) points.
    pub fn local_energy_average(&self, initial: &ModeField, window: Window, horizon: f64, samples: usize) -> Result<f64> {
        if let Window::Axial { half_width, ramp } = window {
            if !(half_width >= 0.0 && ramp > 0.0) || half_width + ramp > std::f64::consts::PI * self.grid.radius() {
                return Err(Error::Config(format!(
                    "window |y| <= {half_width} + {ramp} exceeds the grid half period {}",
                    std::f64::consts::PI * self.grid.radius()
                )));
            }
        }
        if !(horizon > 0.0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        let samples = (samples.max(3) / 2) * 2 + 1;
        let chi = self.grid.sample(|y, _| window.weight(y));
        let h = horizon / (samples - 1) as f64;
        let values: Vec<f64> = (0..samples)
            .map(|k| {
                let modes = self.propagate(initial, k as f64 * h);
                self.grid.integrate(&(&chi * &self.energy_density(&modes)))
            })
            .collect();
        Ok(simpson_uniform(h, &values) / horizon)
    }
}

/// Acoustic data `s(0) = [N₀]_δ / n̄`, `Ψ(0) = [Ψ₀]_δ`.
pub fn acoustic_initial_data(grid: &WaveguideGrid, nbar: f64, n0_smooth: &Array2<f64>, psi0_smooth: &Array2<f64>) -> Result<ModeField> {
    let s = n0_smooth / nbar;
    let integral = grid.integrate(&s);
    let scale = grid.l1(&s).max(1.0);
    if integral.abs() > MEAN_TOL * scale {
        return Err(Error::Compatibility { integral, l1: grid.l1(&s) });
    }
    Ok(ModeField::from_fields(grid, &s, psi0_smooth))
}

/// `Ψ₀` with `∇Ψ₀ = H⊥[u₀]`, the gradient part of `u₀`.
pub fn velocity_potential(grid: &WaveguideGrid, u0: &VectorField) -> Result<Array2<f64>> {
    Ok(helmholtz(grid, u0)?.potential)
}

/// Least-squares `α` in `h ~ (1 + t/ε)^{-α}` from sup-norm samples.
pub fn decay_exponent(times: &[f64], sup_norms: &[f64], epsilon: f64) -> Result<f64> {
    if times.len() != sup_norms.len() || times.len() < 10 {
        return Err(Error::Fit(format!("decay fit needs at least 10 samples, got {}", times.len())));
    }
    if !(times[0] > 0.0) {
        return Err(Error::Fit("decay fit window must start at t0 > 0".into()));
    }
    if sup_norms.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::Fit("sup norms must be positive".into()));
    }
    let x: Vec<f64> = times.iter().map(|t| (1.0 + t / epsilon).ln()).collect();
    let y: Vec<f64> = sup_norms.iter().map(|h| h.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::Fit("decay fit needs distinct times".into()));
    }
    Ok(-sxy / sxx)
}

/// `‖f‖_{H^m} = ‖(1 + |k|²)^{m/2} f̂‖`.
pub fn sobolev_norm(grid: &WaveguideGrid, f: &Array2<f64>, m: u32) -> f64 {
    let mut spec = grid.forward(f);
    for ((i, j), c) in spec.indexed_iter_mut() {
        *c *= (1.0 + grid.k2(i, j)).powf(0.5 * m as f64);
    }
    grid.norm_l2(&grid.inverse(&spec))
}

/// Mean-free check shared with callers that pre-smooth data.
pub fn check_mean_free(grid: &WaveguideGrid, s: &Array2<f64>) -> Result<()> {
    check_compatibility(grid, s)
}

/// `(-Δ_N)^{-1/2} s`.
pub fn inverse_sqrt_laplacian(grid: &WaveguideGrid, s: &Array2<f64>) -> Result<Array2<f64>> {
    inverse_neumann(grid, s, InversePower::Half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{compact_bump, random_mean_free};
    use crate::waveguide::GridSpec;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn params(eps: f64, tau: f64) -> AcousticParams {
        AcousticParams { sound_sq: 5.0 / 3.0, nbar: 1.0, epsilon: eps, tau }
    }

    /// RK4 on `ε ŝ' = a Ψ̂`, `ε Ψ̂' = -(p' + n̄/a) ŝ - (ε/τ) Ψ̂` for one complex mode.
    fn rk4_mode(p: &AcousticParams, a: f64, s: Complex64, psi: Complex64, t: f64, dt: f64) -> (Complex64, Complex64) {
        let damp = if p.tau.is_finite() { 1.0 / p.tau } else { 0.0 };
        let f = |s: Complex64, psi: Complex64| {
            (psi * (a / p.epsilon), -s * ((p.sound_sq + p.nbar / a) / p.epsilon) - psi * damp)
        };
        let steps = (t / dt).round() as usize;
        let h = t / steps as f64;
        let (mut s, mut psi) = (s, psi);
        for _ in 0..steps {
            let k1 = f(s, psi);
            let k2 = f(s + k1.0 * (h / 2.0), psi + k1.1 * (h / 2.0));
            let k3 = f(s + k2.0 * (h / 2.0), psi + k2.1 * (h / 2.0));
            let k4 = f(s + k3.0 * h, psi + k3.1 * h);
            s += (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (h / 6.0);
            psi += (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (h / 6.0);
        }
        (s, psi)
    }

    fn single_mode(grid: &WaveguideGrid, i: usize, s: Complex64, psi: Complex64) -> ModeField {
        let mut m = ModeField::zeros(grid);
        m.s_hat[[i, 0]] = s;
        m.psi_hat[[i, 0]] = psi;
        m
    }

    #[test]
    fn kg_frequency_examples() {
        let p = params(0.1, f64::INFINITY);
        assert_eq!(p.kg_frequency(0.0, 0.0).unwrap(), 1.0);
        assert_relative_eq!(p.kg_frequency(0.0, 1.0).unwrap(), (8.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        let strip = WaveguideGrid::new(GridSpec::strip(1.0, 16, 1.0, 9)).unwrap();
        let op = AcousticOperator::with_params(&strip, p).unwrap();
        let w = op.kg_frequency(1, 0.0).unwrap();
        assert_relative_eq!(w, (5.0 * std::f64::consts::PI.powi(2) / 3.0 + 1.0).sqrt(), epsilon = 1e-12);
        assert!((w - 4.1772).abs() < 1e-4);
        // mass term n̄ - ε²/(4τ²) ≤ 0
        let bad = AcousticParams { tau: 0.1, epsilon: 1.0, ..p };
        assert!(matches!(bad.kg_frequency(0.0, 1.0), Err(Error::Regime { .. })));
    }

    #[test]
    fn kg_frequency_matches_mode_oscillation() {
        // the brute-force undamped oscillator returns after one period 2πε/ω
        let grid = WaveguideGrid::new(GridSpec::line(1.0, 16)).unwrap();
        let p = params(0.5, f64::INFINITY);
        let w = p.kg_frequency(0.0, 1.0).unwrap();
        let period = 2.0 * std::f64::consts::PI * p.epsilon / w;
        let s0 = Complex64::new(1.0, 0.0);
        let (s, psi) = rk4_mode(&p, 1.0, s0, Complex64::default(), period, 1e-5);
        assert!((s - s0).norm() < 1e-9 && psi.norm() < 1e-9);
        let _ = grid;
    }

    #[test]
    fn propagate_examples() {
        let grid = WaveguideGrid::new(GridSpec::line(1.0, 16)).unwrap();
        let op = AcousticOperator::with_params(&grid, params(0.2, f64::INFINITY)).unwrap();
        let zero = op.propagate(&ModeField::zeros(&grid), 1.3);
        assert!(zero.s_hat.iter().all(|c| c.norm() == 0.0));
        let m = single_mode(&grid, 1, Complex64::new(0.3, -0.1), Complex64::new(0.05, 0.2));
        let w = op.kg_frequency(0, 1.0).unwrap();
        let back = op.propagate(&m, 2.0 * std::f64::consts::PI * 0.2 / w);
        assert!((&back.s_hat - &m.s_hat).iter().all(|c| c.norm() < 1e-12));
        assert!((&back.psi_hat - &m.psi_hat).iter().all(|c| c.norm() < 1e-12));

        // damped: the envelope shrinks by e^{-t/(2τ)}, checked against RK4
        let damped = AcousticOperator::with_params(&grid, params(0.2, 1.0)).unwrap();
        let e0 = damped.energy(&m);
        let out = damped.propagate(&m, 1.0);
        let (s, psi) = rk4_mode(damped.params(), 1.0, m.s_hat[[1, 0]], m.psi_hat[[1, 0]], 1.0, 1e-5);
        assert!((out.s_hat[[1, 0]] - s).norm() < 1e-9);
        assert!((out.psi_hat[[1, 0]] - psi).norm() < 1e-9);
        // envelope of the undamped-equivalent oscillator: multiply back by e^{t/2τ}
        let undamped_energy = damped.energy(&out.scaled((0.5f64).exp()));
        assert!(undamped_energy <= e0 * 1.6 && undamped_energy >= e0 / 1.6);
        assert_relative_eq!((-0.5f64).exp(), 0.606531, epsilon = 1e-6);
    }

    #[test]
    fn propagate_matches_rk4_on_random_modes() {
        let grid = WaveguideGrid::new(GridSpec::strip(1.0, 8, 1.0, 5)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..5 {
            let eps = [0.5, 0.2, 0.1, 0.3, 0.25][trial];
            let p = params(eps, if trial % 2 == 0 { f64::INFINITY } else { 2.0 });
            let op = AcousticOperator::with_params(&grid, p).unwrap();
            let s = random_mean_free(&grid, 2, 1, &mut rng);
            let psi = random_mean_free(&grid, 2, 1, &mut rng);
            let modes = ModeField::from_fields(&grid, &s, &psi);
            let t = 0.05;
            let out = op.propagate(&modes, t);
            for ((i, j), &a_s) in modes.s_hat.indexed_iter() {
                let a = grid.k2(i, j);
                if a == 0.0 || (a_s.norm() == 0.0 && modes.psi_hat[[i, j]].norm() == 0.0) {
                    continue;
                }
                let (rs, rp) = rk4_mode(&p, a, a_s, modes.psi_hat[[i, j]], t, 1e-5 * eps);
                let scale = a_s.norm().max(modes.psi_hat[[i, j]].norm()).max(1.0);
                assert!((out.s_hat[[i, j]] - rs).norm() < 1e-7 * scale, "trial {trial} mode ({i},{j})");
                assert!((out.psi_hat[[i, j]] - rp).norm() < 1e-7 * scale);
            }
        }
    }

    #[test]
    fn z3_holds_along_propagation() {
        // ε dŝ/dt = a Ψ̂, with the derivative taken by a centered difference in t
        let grid = WaveguideGrid::new(GridSpec::line(2.0, 32)).unwrap();
        let op = AcousticOperator::with_params(&grid, params(0.3, 1.5)).unwrap();
        let m = single_mode(&grid, 3, Complex64::new(0.7, 0.0), Complex64::new(0.0, 0.4));
        let (t, h) = (0.4, 1e-5);
        let fwd = op.propagate(&m, t + h);
        let bwd = op.propagate(&m, t - h);
        let mid = op.propagate(&m, t);
        let lhs = (fwd.s_hat[[3, 0]] - bwd.s_hat[[3, 0]]) * (0.3 / (2.0 * h));
        let rhs = mid.psi_hat[[3, 0]] * grid.k2(3, 0);
        assert!((lhs - rhs).norm() < 1e-8 * rhs.norm().max(1.0));
    }

    #[test]
    fn kg_substitution_identity() {
        // e^{t/2τ} s solves the undamped recurrence s_{k+1} + s_{k-1} = 2 cos(ω h) s_k
        let grid = WaveguideGrid::new(GridSpec::line(1.0, 16)).unwrap();
        let p = params(0.25, 0.8);
        let op = AcousticOperator::with_params(&grid, p).unwrap();
        let m = single_mode(&grid, 2, Complex64::new(0.4, 0.1), Complex64::new(-0.2, 0.3));
        let omega = p.kg_frequency(0.0, 2.0).unwrap() / p.epsilon;
        let h = 0.013;
        let lifted = |k: usize| {
            let t = k as f64 * h;
            op.propagate(&m, t).s_hat[[2, 0]] * (t / (2.0 * p.tau)).exp()
        };
        for k in 1..50 {
            let r = lifted(k + 1) + lifted(k - 1) - lifted(k) * (2.0 * (omega * h).cos());
            assert!(r.norm() < 1e-10, "k = {k}: {}", r.norm());
        }
    }

    #[test]
    fn energy_is_conserved_and_dissipated() {
        let grid = WaveguideGrid::new(GridSpec::strip(2.0, 32, 1.0, 9)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let modes = ModeField::from_fields(&grid, &random_mean_free(&grid, 6, 3, &mut rng), &random_mean_free(&grid, 6, 3, &mut rng));
        let op = AcousticOperator::with_params(&grid, params(0.1, f64::INFINITY)).unwrap();
        let e0 = op.energy(&modes);
        let mut m = modes.clone();
        for _ in 0..1000 {
            m = op.propagate(&m, 0.0137);
        }
        assert!((op.energy(&m) - e0).abs() < 1e-11 * e0);

        // physical-space energy agrees with the mode sum
        let dens = grid.integrate(&op.energy_density(&modes));
        assert!((dens - e0).abs() < 1e-9 * e0);

        // damped: dE/dt = -(2/τ)∫|∇Ψ|², by a centered difference
        let op = AcousticOperator::with_params(&grid, params(0.1, 0.7)).unwrap();
        let h = 1e-5;
        let mid = op.propagate(&modes, 0.2);
        let de = (op.energy(&op.propagate(&modes, 0.2 + h)) - op.energy(&op.propagate(&modes, 0.2 - h))) / (2.0 * h);
        let rate = op.dissipation_rate(&mid);
        assert!((de + rate).abs() < 1e-6 * rate.max(1.0), "{de} vs {rate}");
        assert!(op.energy(&op.propagate(&modes, 1.0)) < e0);
    }

    #[test]
    fn duhamel_examples() {
        let grid = WaveguideGrid::new(GridSpec::line(1.0, 16)).unwrap();
        let p = params(0.2, f64::INFINITY);
        let op = AcousticOperator::with_params(&grid, p).unwrap();
        let m = single_mode(&grid, 1, Complex64::new(0.3, 0.0), Complex64::new(0.1, 0.0));
        let t = 0.7;
        let times: Vec<f64> = (0..=400).map(|k| k as f64 * t / 400.0).collect();
        let zero = Forcing::constant(times.clone(), &Array2::zeros(grid.shape())).unwrap();
        assert_eq!(op.duhamel(&m, &zero, t).unwrap(), op.propagate(&m, t));

        let mut f = Array2::zeros(grid.shape());
        f[[1, 0]] = Complex64::new(2.0, -1.0);
        let forcing = Forcing::constant(times.clone(), &f).unwrap();
        let empty = ModeField::zeros(&grid);
        let out = op.duhamel(&empty, &forcing, t).unwrap();
        let w = p.kg_frequency(0.0, 1.0).unwrap() / p.epsilon;
        let closed = f[[1, 0]] * ((1.0 - (w * t).cos()) / (w * w));
        assert!((out.s_hat[[1, 0]] - closed).norm() < 1e-8 * closed.norm());
        // ε ŝ' = a Ψ̂ with ŝ' = F sin(ωt)/ω
        let closed_psi = f[[1, 0]] * ((w * t).sin() / w) * (p.epsilon / grid.k2(1, 0));
        assert!((out.psi_hat[[1, 0]] - closed_psi).norm() < 1e-8 * closed_psi.norm());

        let doubled = op.duhamel(&empty, &Forcing::constant(times, &(&f * 2.0)).unwrap(), t).unwrap();
        assert!((doubled.s_hat[[1, 0]] - out.s_hat[[1, 0]] * 2.0).norm() < 1e-14);

        let coarse = Forcing::constant(vec![0.0, t], &f).unwrap();
        assert!(matches!(op.duhamel(&empty, &coarse, t), Err(Error::Sampling { .. })));
    }

    #[test]
    fn initial_data_examples() {
        let grid = WaveguideGrid::new(GridSpec::strip(2.0, 32, 1.0, 9)).unwrap();
        // divergence-free velocity has no potential part
        // ∇⊥[sin(y/2) sin(πz)]
        let pi = std::f64::consts::PI;
        let v = VectorField::from_components(vec![
            grid.sample(|y, z| pi * (y / 2.0).sin() * (pi * z).cos()),
            grid.sample(|y, z| -0.5 * (y / 2.0).cos() * (pi * z).sin()),
        ]);
        let pot = velocity_potential(&grid, &v).unwrap();
        assert!(pot.iter().all(|x| x.abs() < 1e-12));

        // N₀ = 0, single Ψ mode: ∂t s(0) = a Ψ̂ / ε
        let line = WaveguideGrid::new(GridSpec::line(1.0, 32)).unwrap();
        let psi0 = line.sample(|y, _| (2.0 * y).cos());
        let modes = acoustic_initial_data(&line, 1.0, &line.zeros(), &psi0).unwrap();
        assert!(modes.s_hat.iter().all(|c| c.norm() == 0.0));
        let op = AcousticOperator::with_params(&line, params(0.5, f64::INFINITY)).unwrap();
        let h = 1e-6;
        let ds = (op.propagate(&modes, h).s(&line) - op.propagate(&modes, -h).s(&line)) / (2.0 * h);
        let expected = psi0.mapv(|v| 4.0 * v / 0.5);
        assert!((&ds - &expected).iter().all(|x| x.abs() < 1e-6));

        // round trip
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let s = random_mean_free(&grid, 5, 3, &mut rng);
        let p = random_mean_free(&grid, 5, 3, &mut rng);
        let m = acoustic_initial_data(&grid, 1.0, &s, &p).unwrap();
        assert!((&m.s(&grid) - &s).iter().all(|x| x.abs() < 1e-12));
        assert!((&m.psi(&grid) - &p).iter().all(|x| x.abs() < 1e-12));

        let biased = s.mapv(|x| x + 0.1);
        assert!(acoustic_initial_data(&grid, 1.0, &biased, &p).is_err());
    }

    #[test]
    fn decay_exponent_examples() {
        let times: Vec<f64> = (1..=20).map(|k| k as f64).collect();
        let h: Vec<f64> = times.iter().map(|t| (1.0 + t).powf(-0.5)).collect();
        assert_relative_eq!(decay_exponent(&times, &h, 1.0).unwrap(), 0.5, epsilon = 1e-12);
        assert!(decay_exponent(&times[..5], &h[..5], 1.0).is_err());
        let mut shifted = times.clone();
        shifted[0] = 0.0;
        assert!(decay_exponent(&shifted, &h, 1.0).is_err());

        // a single plane wave does not disperse
        let grid = WaveguideGrid::new(GridSpec::line(1.0, 32)).unwrap();
        let op = AcousticOperator::with_params(&grid, params(1.0, f64::INFINITY)).unwrap();
        let m = acoustic_initial_data(&grid, 1.0, &grid.sample(|y, _| (3.0 * y).cos()), &grid.sample(|y, _| (3.0 * y).sin())).unwrap();
        let ts: Vec<f64> = (1..=30).map(|k| k as f64 * 0.37).collect();
        let sup: Vec<f64> = ts
            .iter()
            .map(|&t| op.propagate(&m, t).s(&grid).iter().fold(0.0f64, |a, v| a.max(v.abs())))
            .collect();
        assert!(decay_exponent(&ts, &sup, 1.0).unwrap().abs() < 0.05);
    }

    #[test]
    fn dispersive_decay_in_one_dimension() {
        let grid = WaveguideGrid::new(GridSpec::line(64.0, 4096)).unwrap();
        let eps = 0.1;
        let op = AcousticOperator::with_params(&grid, params(eps, f64::INFINITY)).unwrap();
        let raw = grid.sample(|y, _| compact_bump(y, 1.0));
        let n0 = &raw - grid.mean(&raw);
        let modes = acoustic_initial_data(&grid, 1.0, &n0, &grid.zeros()).unwrap();
        // KG clock θ = t/ε from 10 to 100; speed √p' keeps the front inside πR
        let ts: Vec<f64> = (0..20).map(|k| eps * 10.0 * 10f64.powf(k as f64 / 19.0)).collect();
        let sup: Vec<f64> = ts
            .iter()
            .map(|&t| op.propagate(&modes, t).s(&grid).iter().fold(0.0f64, |a, v| a.max(v.abs())))
            .collect();
        let alpha = decay_exponent(&ts, &sup, eps).unwrap();
        assert!((0.35..=0.65).contains(&alpha), "alpha {alpha}");
    }

    #[test]
    fn local_energy_average_examples() {
        let grid = WaveguideGrid::new(GridSpec::line(16.0, 1024)).unwrap();
        let raw = grid.sample(|y, _| compact_bump(y, 1.0));
        let n0 = &raw - grid.mean(&raw);
        let modes = acoustic_initial_data(&grid, 1.0, &n0, &grid.zeros()).unwrap();
        let window = Window::Axial { half_width: 2.0, ramp: 1.0 };
        let zero = AcousticOperator::with_params(&grid, params(0.2, f64::INFINITY)).unwrap();
        assert_eq!(zero.local_energy_average(&ModeField::zeros(&grid), window, 1.0, 33).unwrap(), 0.0);
        let whole = zero.local_energy_average(&modes, Window::Whole, 1.0, 33).unwrap();
        assert!((whole - zero.energy(&modes)).abs() < 1e-9 * whole, "{whole} vs {}", zero.energy(&modes));
        let mut prev = f64::INFINITY;
        for eps in [0.2, 0.1, 0.05] {
            let op = AcousticOperator::with_params(&grid, params(eps, f64::INFINITY)).unwrap();
            let v = op.local_energy_average(&modes, window, 1.0, 401).unwrap();
            assert!(v < prev, "eps {eps}: {v} !< {prev}");
            prev = v;
        }
        let wide = Window::Axial { half_width: 60.0, ramp: 1.0 };
        assert!(zero.local_energy_average(&modes, wide, 1.0, 33).is_err());
    }
}
