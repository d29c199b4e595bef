//! Diagnostics evaluated on stored snapshots: the scaled relative entropy and
//! its remainder, the Gronwall budget of the combined limit, the Korn
//! quotient, and the square-root entropy defect.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::field::VectorField;
use crate::fields::{inverse_neumann, poisson_spectral, InversePower};
use crate::nsp::{stress_contraction, FluidState, ScaledParams};
use crate::waveguide::WaveguideGrid;
use crate::{Error, Result};

/// Left side of the scaled relative entropy
/// `∫ ½n|u - U|² + E(n, r)/ε² + |∇Φ|²/(2ε²)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub t: f64,
    pub kinetic: f64,
    pub internal: f64,
    pub field: f64,
}

impl EntropyReport {
    pub fn total(&self) -> f64 {
        self.kinetic + self.internal + self.field
    }

    pub const CSV_HEADER: &'static str = "t,kinetic,internal,field,total";

    pub fn csv_row(&self) -> String {
        format!("{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}", self.t, self.kinetic, self.internal, self.field, self.total())
    }
}

/// Test fields `(r, U)` with their time derivatives.
#[derive(Clone, Debug)]
pub struct TestFields {
    pub r: Array2<f64>,
    pub r_t: Array2<f64>,
    pub u: VectorField,
    pub u_t: VectorField,
}

impl TestFields {
    /// `r ≡ n̄`, `U ≡ 0`.
    pub fn rest(grid: &WaveguideGrid, nbar: f64) -> Self {
        Self { r: grid.sample(|_, _| nbar), r_t: grid.zeros(), u: grid.zero_vector(), u_t: grid.zero_vector() }
    }
}

fn check_test_fields(grid: &WaveguideGrid, r: &Array2<f64>, u: &VectorField) -> Result<()> {
    if r.dim() != grid.shape() || u.shape() != grid.shape() || u.dim() != grid.dim() {
        return Err(Error::GridMismatch("test fields do not match the grid".into()));
    }
    let min = r.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if !(min > 0.0) {
        return Err(Error::Domain(format!("test density must be positive, min {min}")));
    }
    Ok(())
}

pub fn relative_entropy(
    grid: &WaveguideGrid,
    state: &FluidState,
    r: &Array2<f64>,
    u_test: &VectorField,
    params: &ScaledParams,
) -> Result<EntropyReport> {
    check_test_fields(grid, r, u_test)?;
    let eps2 = params.epsilon * params.epsilon;
    let law = &params.pressure;
    let rel = state.velocity().sub(u_test);
    let mut e = grid.zeros();
    Zip::from(&mut e).and(&state.density).and(r).for_each(|e, &n, &rv| *e = law.e(n.max(0.0), rv));
    let phi = poisson_spectral(grid, &grid.forward(&state.density.mapv(|n| n - params.nbar)));
    Ok(EntropyReport {
        t: state.t,
        kinetic: 0.5 * grid.integrate(&(&state.density * &rel.norm_sq())),
        internal: grid.integrate(&e) / eps2,
        field: 0.5 * grid.integrate(&phi.gradient.norm_sq()) / eps2,
    })
}

/// Relative dissipation `∫[S(∇u) - S(∇U)]:∇(u - U) + (1/τ)∫n|u - U|²`.
pub fn relative_dissipation(grid: &WaveguideGrid, state: &FluidState, u_test: &VectorField, params: &ScaledParams) -> f64 {
    let rel = state.velocity().sub(u_test);
    let mut out = params.damping() * grid.integrate(&(&state.density * &rel.norm_sq()));
    if params.mu > 0.0 {
        out += params.mu * grid.integrate(&stress_contraction(grid, &rel));
    }
    out
}

/// The remainder, term by term, in the ε-scaling of the rescaled system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RemainderTerms {
    /// `∫ n(∂tU + u·∇U)·(U - u)`
    pub inertial: f64,
    /// `∫ S(∇U):∇(U - u)`
    pub viscous: f64,
    /// `(1/τ) ∫ n U·(U - u)`
    pub damping: f64,
    /// `-(1/ε²) ∫ n ∇Φ·U`
    pub field: f64,
    /// `(1/ε²) ∫ (r - n) ∂t P(r)`
    pub pressure_time: f64,
    /// `(1/ε²) ∫ ∇P(r)·(rU - nu)`
    pub pressure_flux: f64,
    /// `-(1/ε²) ∫ div U (n(P(n) - P(r)) - E(n, r))`
    pub pressure_div: f64,
}

impl RemainderTerms {
    pub fn total(&self) -> f64 {
        self.inertial + self.viscous + self.damping + self.field + self.pressure_time + self.pressure_flux + self.pressure_div
    }
}

pub fn remainder(grid: &WaveguideGrid, state: &FluidState, test: &TestFields, params: &ScaledParams) -> Result<RemainderTerms> {
    check_test_fields(grid, &test.r, &test.u)?;
    let dim = grid.dim();
    let eps2 = params.epsilon * params.epsilon;
    let law = &params.pressure;
    let n = &state.density;
    let u = state.velocity();
    let big_u = &test.u;
    let diff = big_u.sub(&u);
    let grads: Vec<VectorField> = big_u.components().iter().map(|c| grid.gradient(c)).collect();

    // ∂tU + u·∇U
    let mut material = test.u_t.clone();
    for (c, gc) in grads.iter().enumerate() {
        for j in 0..dim {
            *material.component_mut(c) += &(u.component(j) * gc.component(j));
        }
    }
    let inertial = grid.integrate(&(n * &material.dot(&diff)));

    let mut viscous = 0.0;
    if params.mu > 0.0 {
        let diff_grads: Vec<VectorField> = diff.components().iter().map(|c| grid.gradient(c)).collect();
        let div_u = grid.divergence(big_u);
        let mut acc = grid.zeros();
        for a in 0..dim {
            for b in 0..dim {
                let mut s_ab = grads[a].component(b) + grads[b].component(a);
                if a == b {
                    s_ab = s_ab - &div_u * (2.0 / 3.0);
                }
                acc = acc + s_ab * diff_grads[a].component(b);
            }
        }
        viscous = params.mu * grid.integrate(&acc);
    }

    let damping = params.damping() * grid.integrate(&(n * &big_u.dot(&diff)));
    let phi = poisson_spectral(grid, &grid.forward(&n.mapv(|v| v - params.nbar)));
    let field = -grid.integrate(&(n * &phi.gradient.dot(big_u))) / eps2;

    let p_r = test.r.mapv(|r| law.big_p(r));
    let p_r_t = Zip::from(&test.r).and(&test.r_t).map_collect(|&r, &rt| law.dp(r) / r * rt);
    let pressure_time = grid.integrate(&((&test.r - n) * &p_r_t)) / eps2;
    let grad_p_r = grid.gradient(&p_r);
    let flux = big_u.times_scalar(&test.r).sub(&state.momentum);
    let pressure_flux = grid.integrate(&grad_p_r.dot(&flux)) / eps2;
    let div_u = grid.divergence(big_u);
    let mut bracket = grid.zeros();
    Zip::from(&mut bracket).and(n).and(&test.r).for_each(|b, &nv, &rv| {
        let nv = nv.max(0.0);
        *b = nv * (law.big_p(nv) - law.big_p(rv)) - law.e(nv, rv);
    });
    let pressure_div = -grid.integrate(&(&div_u * &bracket)) / eps2;

    Ok(RemainderTerms { inertial, viscous, damping, field, pressure_time, pressure_flux, pressure_div })
}

/// `current + dissipated - initial` for the energy functional; nonpositive when the inequality holds.
pub fn energy_slack(initial: f64, current: f64, dissipated: f64) -> f64 {
    current + dissipated - initial
}

/// Acoustic and limit fields compared against one compressible snapshot.
pub struct Corrector<'a> {
    /// Limit velocity `v`.
    pub limit: &'a VectorField,
    /// Acoustic potential `Ψ`.
    pub psi: &'a Array2<f64>,
    /// Acoustic density `s`.
    pub s: &'a Array2<f64>,
}

/// Parts of the Gronwall-closed functional at one time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GronwallParts {
    /// `∫ ½ n |u - v - ∇Ψ|²`
    pub kinetic: f64,
    /// `∫ E(n, n̄)/ε² - p'(n̄) N s + p'(n̄)(n̄/2)|s|²`
    pub internal: f64,
    /// `∫ ½|∇Φ/ε|² + n̄ N Δ_N^{-1}s + (n̄²/2)|(-Δ_N)^{-1/2}s|²`
    pub field: f64,
}

impl GronwallParts {
    pub fn total(&self) -> f64 {
        self.kinetic + self.internal + self.field
    }
}

pub fn gronwall_parts(grid: &WaveguideGrid, state: &FluidState, corrector: &Corrector<'_>, params: &ScaledParams) -> Result<GronwallParts> {
    let shape = grid.shape();
    if corrector.limit.shape() != shape || corrector.psi.dim() != shape || corrector.s.dim() != shape {
        return Err(Error::GridMismatch("corrector fields do not match the compressible grid".into()));
    }
    let eps = params.epsilon;
    let nbar = params.nbar;
    let dp = params.sound_speed_sq();
    let law = &params.pressure;
    let rel = state.velocity().sub(corrector.limit).sub(&grid.gradient(corrector.psi));
    let kinetic = 0.5 * grid.integrate(&(&state.density * &rel.norm_sq()));

    let big_n = state.fluctuation(params);
    let s = corrector.s;
    let mut internal = grid.zeros();
    Zip::from(&mut internal).and(&state.density).and(&big_n).and(s).for_each(|o, &n, &nn, &sv| {
        *o = law.e(n.max(0.0), nbar) / (eps * eps) - dp * nn * sv + 0.5 * dp * nbar * sv * sv;
    });

    let phi = poisson_spectral(grid, &grid.forward(&state.density.mapv(|n| n - nbar)));
    let s_mean_free = s - grid.mean(s);
    let inv = inverse_neumann(grid, &s_mean_free, InversePower::Full)?;
    let half = inverse_neumann(grid, &s_mean_free, InversePower::Half)?;
    // Δ_N^{-1} = -(-Δ_N)^{-1}
    let field = 0.5 * grid.integrate(&phi.gradient.norm_sq()) / (eps * eps) - nbar * grid.inner(&big_n, &inv)
        + 0.5 * nbar * nbar * grid.integrate(&half.mapv(|v| v * v));
    Ok(GronwallParts { kinetic, internal: grid.integrate(&internal), field })
}

/// Initial mismatch block of the Gronwall bound, assembled from the profile data
/// `(N₀, u₀)`, the smoothed acoustic data `s(0) = [N₀]_δ/n̄`, `Ψ(0) = [Ψ₀]_δ`, and `v₀ = H[u₀]`.
pub fn initial_mismatch(
    grid: &WaveguideGrid,
    fluctuation: &Array2<f64>,
    u0: &VectorField,
    v0: &VectorField,
    s0: &Array2<f64>,
    psi0: &Array2<f64>,
    params: &ScaledParams,
) -> Result<GronwallParts> {
    let eps = params.epsilon;
    let nbar = params.nbar;
    let dp = params.sound_speed_sq();
    let n0 = fluctuation.mapv(|v| nbar + eps * v);
    let rel = u0.sub(v0).sub(&grid.gradient(psi0));
    let kinetic = 0.5 * grid.integrate(&(&n0 * &rel.norm_sq()));
    let e0 = params.pressure.relative_entropy_field(&n0, nbar);
    let internal = grid.integrate(&e0) / (eps * eps) - dp * grid.inner(fluctuation, s0)
        + 0.5 * dp * nbar * grid.integrate(&s0.mapv(|v| v * v));
    // ∇Φ₀/ε = ∇Δ_N^{-1} N₀
    let phi_over_eps = poisson_spectral(grid, &grid.forward(fluctuation));
    let s_mean_free = s0 - grid.mean(s0);
    let inv = inverse_neumann(grid, &s_mean_free, InversePower::Full)?;
    let half = inverse_neumann(grid, &s_mean_free, InversePower::Half)?;
    let field = 0.5 * grid.integrate(&phi_over_eps.gradient.norm_sq()) - nbar * grid.inner(fluctuation, &inv)
        + 0.5 * nbar * nbar * grid.integrate(&half.mapv(|v| v * v));
    Ok(GronwallParts { kinetic, internal, field })
}

/// One `(ε, δ)` measurement of `sup_t ∫ ½n|u - v - ∇Ψ|²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GronwallSample {
    pub epsilon: f64,
    pub delta: f64,
    pub sup_kinetic: f64,
}

/// `χ(δ)` from linear extrapolation to `ε = 0`, with the fitted `ε`-slope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiEntry {
    pub delta: f64,
    pub chi: f64,
    pub slope: f64,
    pub points: usize,
}

pub fn gronwall_budget(samples: &[GronwallSample]) -> Result<Vec<ChiEntry>> {
    let mut deltas: Vec<f64> = samples.iter().map(|s| s.delta).collect();
    deltas.sort_by(|a, b| b.total_cmp(a));
    deltas.dedup();
    deltas
        .into_iter()
        .map(|delta| {
            let pts: Vec<(f64, f64)> =
                samples.iter().filter(|s| s.delta == delta).map(|s| (s.epsilon, s.sup_kinetic)).collect();
            let mut eps: Vec<f64> = pts.iter().map(|p| p.0).collect();
            eps.sort_by(f64::total_cmp);
            eps.dedup();
            if eps.len() < 2 {
                return Err(Error::Fit(format!("delta {delta}: need two distinct epsilon values")));
            }
            let n = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let slope = sxy / sxx;
            Ok(ChiEntry { delta, chi: my - slope * mx, slope, points: pts.len() })
        })
        .collect()
}

/// Outcome of a Korn quotient evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum KornQuotient {
    Value(f64),
    /// Numerator and denominator both vanish.
    Degenerate,
}

impl KornQuotient {
    pub fn value(&self) -> Option<f64> {
        match self {
            KornQuotient::Value(v) => Some(*v),
            KornQuotient::Degenerate => None,
        }
    }
}

/// `(‖w‖² + ‖∇w‖²) / (‖∇w + ∇ᵀw - (2/3) div w I‖² + ∫_{Ω∖V} |w|²)`, with `V`
/// given as an axial mask (`true` inside `V`) extended over the cross-section.
pub fn korn_quotient(grid: &WaveguideGrid, w: &VectorField, axial_mask: &[bool], max_fraction: f64) -> Result<KornQuotient> {
    if axial_mask.len() != grid.ny() || w.shape() != grid.shape() {
        return Err(Error::GridMismatch("Korn mask or field does not match the grid".into()));
    }
    let fraction = axial_mask.iter().filter(|&&b| b).count() as f64 / grid.ny() as f64;
    if fraction > max_fraction {
        return Err(Error::Config(format!("excluded set covers {fraction:.3} of the axis, limit {max_fraction}")));
    }
    let flux = grid.wall_flux(w);
    if flux > 1e-10 * (1.0 + w.max_abs()) {
        return Err(Error::BoundaryFlux { flux });
    }
    let dim = w.dim();
    let grads: Vec<VectorField> = w.components().iter().map(|c| grid.gradient(c)).collect();
    let div = grid.divergence(w);
    let mut grad_sq = grid.zeros();
    let mut sym_sq = grid.zeros();
    for a in 0..dim {
        for b in 0..dim {
            let gab = grads[a].component(b);
            grad_sq = grad_sq + gab * gab;
            let mut s = gab + grads[b].component(a);
            if a == b {
                s = s - &div * (2.0 / 3.0);
            }
            sym_sq = sym_sq + &s * &s;
        }
    }
    let w_sq = w.norm_sq();
    let mut outside = w_sq.clone();
    for (i, row) in outside.outer_iter_mut().enumerate() {
        if axial_mask[i] {
            row.into_iter().for_each(|v| *v = 0.0);
        }
    }
    let num = grid.integrate(&w_sq) + grid.integrate(&grad_sq);
    let den = grid.integrate(&sym_sq) + grid.integrate(&outside);
    if den < 1e-14 {
        return if num < 1e-14 { Ok(KornQuotient::Degenerate) } else { Ok(KornQuotient::Value(f64::INFINITY)) };
    }
    Ok(KornQuotient::Value(num / den))
}

/// `(∫|f|^q)^{1/q}`.
pub fn lq_norm(grid: &WaveguideGrid, f: &Array2<f64>, q: f64) -> f64 {
    grid.integrate(&f.mapv(|v| v.abs().powf(q))).powf(1.0 / q)
}

/// `‖√(E(n, n̄)/ε²) - √(p'(n̄)/(2n̄)) |N|‖_{L^{4/3}}`.
pub fn sqrt_entropy_defect(grid: &WaveguideGrid, state: &FluidState, params: &ScaledParams) -> f64 {
    let eps = params.epsilon;
    let coef = (params.sound_speed_sq() / (2.0 * params.nbar)).sqrt();
    let law = &params.pressure;
    let defect = state.density.mapv(|n| {
        let big_n = (n - params.nbar) / eps;
        (law.e(n.max(0.0), params.nbar)).max(0.0).sqrt() / eps - coef * big_n.abs()
    });
    lq_norm(grid, &defect, 4.0 / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustic::{acoustic_initial_data, velocity_potential};
    use crate::limits::project_initial;
    use crate::nsp::{make_ill_prepared, Integrator, Profile};
    use crate::synth::{random_mean_free, random_vector};
    use crate::waveguide::{GridSpec, SmoothingSpec};
    use rand::{Rng, SeedableRng};

    fn strip(ny: usize, m: usize) -> WaveguideGrid {
        WaveguideGrid::new(GridSpec::strip(2.0, ny, 1.0, m)).unwrap()
    }

    fn random_state(grid: &WaveguideGrid, eps: f64, seed: u64) -> FluidState {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let big_n = random_mean_free(grid, 4, 2, &mut rng);
        let density = big_n.mapv(|v| 1.0 + 0.1 * eps * v);
        let u = random_vector(grid, 4, 2, &mut rng);
        FluidState { t: 0.0, momentum: u.times_scalar(&density), density }
    }

    #[test]
    fn entropy_examples() {
        let grid = strip(32, 9);
        let params = ScaledParams::new(0.2, 0.05, 1.0, 1.0).unwrap();
        let rest = TestFields::rest(&grid, 1.0);
        let eq = FluidState { t: 0.0, density: grid.sample(|_, _| 1.0), momentum: grid.zero_vector() };
        let rep = relative_entropy(&grid, &eq, &rest.r, &rest.u, &params).unwrap();
        assert_eq!(rep.total(), 0.0);

        let state = random_state(&grid, 0.2, 1);
        let own = relative_entropy(&grid, &state, &state.density, &state.velocity(), &params).unwrap();
        assert!(own.kinetic.abs() < 1e-14 && own.internal.abs() < 1e-14);
        let phi = poisson_spectral(&grid, &grid.forward(&state.density.mapv(|n| n - 1.0)));
        assert!((own.field - 0.5 * grid.integrate(&phi.gradient.norm_sq()) / 0.04).abs() < 1e-14);
        assert!(relative_entropy(&grid, &state, &grid.zeros(), &rest.u, &params).is_err());

        // reduces to the energy functional at r = n̄, U = 0
        let int = Integrator::new(grid.clone(), params).unwrap();
        let at_rest = relative_entropy(&grid, &state, &rest.r, &rest.u, &params).unwrap();
        assert!((at_rest.total() - int.energy(&state).total()).abs() < 1e-13);
        assert!(EntropyReport::CSV_HEADER.split(',').count() == at_rest.csv_row().split(',').count());
    }

    #[test]
    fn entropy_taylor_expansion_in_r() {
        // E(n, n̄+h) = E(n, n̄) + h ∂_r E + O(h²) with ∂_r E(n, r) = -P'(r)(n - r)
        let grid = strip(32, 9);
        let params = ScaledParams::new(0.3, 0.0, 1.0, 1.0).unwrap();
        for seed in 0..5 {
            let state = random_state(&grid, 0.3, seed);
            let u = grid.zero_vector();
            let base = relative_entropy(&grid, &state, &grid.sample(|_, _| 1.0), &u, &params).unwrap().internal;
            let slope = -grid.integrate(&state.density.mapv(|n| params.pressure.dp(1.0) / 1.0 * (n - 1.0))) / 0.09;
            let mut errs = Vec::new();
            for h in [1e-3, 5e-4] {
                let shifted = relative_entropy(&grid, &state, &grid.sample(|_, _| 1.0 + h), &u, &params).unwrap().internal;
                errs.push((shifted - base - h * slope).abs());
            }
            assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
        }
    }

    #[test]
    fn remainder_vanishes_at_rest() {
        let grid = strip(32, 9);
        let params = ScaledParams::new(0.2, 0.05, 1.0, 1.0).unwrap();
        let state = random_state(&grid, 0.2, 3);
        let rest = TestFields::rest(&grid, 1.0);
        let r = remainder(&grid, &state, &rest, &params).unwrap();
        assert!(r.total().abs() < 1e-14, "{r:?}");

        // equilibrium against a steady divergence-free U with r = n̄
        let eq = FluidState { t: 0.0, density: grid.sample(|_, _| 1.0), momentum: grid.zero_vector() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let u = project_initial(&grid, &random_vector(&grid, 3, 2, &mut rng)).unwrap();
        let steady = TestFields { u, u_t: grid.zero_vector(), ..TestFields::rest(&grid, 1.0) };
        let inviscid = ScaledParams { mu: 0.0, tau: f64::INFINITY, ..params };
        let r = remainder(&grid, &eq, &steady, &inviscid).unwrap();
        // only the inertial term survives: ∫ U·∇U·U = 0 for div-free U with U·n = 0
        assert!(r.total().abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn entropy_balance_along_trajectory() {
        // d/dt E_rel + D_rel = R for smooth solutions, by centered differences
        let grid = WaveguideGrid::new(GridSpec::strip(2.0, 64, 1.0, 17)).unwrap();
        let eps = 0.5;
        let params = ScaledParams::new(eps, 0.05, 1.0, 1.0).unwrap();
        let int = Integrator::new(grid.clone(), params).unwrap();
        let data = make_ill_prepared(Profile::GaussBump, eps, 1.0, &grid).unwrap();
        let mut state = int.prepare(data.density, &data.velocity, 0.0).unwrap();
        let tests = |t: f64| {
            let r = grid.sample(|y, z| 1.0 + 0.05 * (y / 2.0).cos() * (std::f64::consts::PI * z).cos() * (1.0 + t));
            let r_t = grid.sample(|y, z| 0.05 * (y / 2.0).cos() * (std::f64::consts::PI * z).cos());
            let amp = 0.2 * (1.0 + t * t);
            let u = VectorField::from_components(vec![
                grid.sample(|y, z| amp * (y / 2.0).sin() * (std::f64::consts::PI * z).cos()),
                grid.sample(|y, z| amp * (y / 2.0).cos() * (std::f64::consts::PI * z).sin()),
            ]);
            let u_t = u.scaled(2.0 * t / (1.0 + t * t));
            TestFields { r, r_t, u, u_t }
        };
        // fourth-order centered difference in time
        let h = 2e-4;
        let mut history = Vec::new();
        for _ in 0..5 {
            let f = tests(state.t);
            history.push((state.clone(), relative_entropy(&grid, &state, &f.r, &f.u, &params).unwrap().total()));
            state = int.step(&state, h).unwrap();
        }
        let (mid, _) = &history[2];
        let f = tests(mid.t);
        let e: Vec<f64> = history.iter().map(|x| x.1).collect();
        let de = (e[0] - 8.0 * e[1] + 8.0 * e[3] - e[4]) / (12.0 * h);
        let d = relative_dissipation(&grid, mid, &f.u, &params);
        let r = remainder(&grid, mid, &f, &params).unwrap().total();
        let scale = de.abs() + d + r.abs();
        assert!((de + d - r).abs() < 1e-6 * scale.max(1.0), "dE {de} D {d} R {r}");
    }

    #[test]
    fn gronwall_synthetic_zero() {
        let grid = strip(32, 9);
        let params = ScaledParams::new(0.2, 0.0, 1.0, 1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let u = random_vector(&grid, 3, 2, &mut rng);
        let state = FluidState { t: 0.0, density: grid.sample(|_, _| 1.0), momentum: u.clone() };
        let zero = grid.zeros();
        let parts = gronwall_parts(&grid, &state, &Corrector { limit: &u, psi: &zero, s: &zero }, &params).unwrap();
        assert!(parts.total().abs() < 1e-14);
    }

    #[test]
    fn gronwall_initial_block_matches_profile_data() {
        let grid = WaveguideGrid::new(GridSpec::strip(8.5, 256, 1.0, 17)).unwrap();
        let eps = 0.1;
        let params = ScaledParams::new(eps, 0.05, 1.0, 1.0).unwrap();
        let data = make_ill_prepared(Profile::GaussBump, eps, 1.0, &grid).unwrap();
        let smoothing = SmoothingSpec::new(0.5).unwrap();
        let n_smooth = grid.smooth_project(&data.fluctuation, &smoothing).unwrap();
        let n_smooth = &n_smooth - grid.mean(&n_smooth);
        let psi0 = velocity_potential(&grid, &data.velocity).unwrap();
        let psi_smooth = grid.smooth_project(&psi0, &smoothing).unwrap();
        let modes = acoustic_initial_data(&grid, 1.0, &n_smooth, &psi_smooth).unwrap();
        let (s0, psi) = (modes.s(&grid), modes.psi(&grid));
        let v0 = project_initial(&grid, &data.velocity).unwrap();
        let state = data.state();
        let lhs = gronwall_parts(&grid, &state, &Corrector { limit: &v0, psi: &psi, s: &s0 }, &params).unwrap();
        let rhs = initial_mismatch(&grid, &data.fluctuation, &data.velocity, &v0, &s0, &psi, &params).unwrap();
        for (a, b) in [(lhs.kinetic, rhs.kinetic), (lhs.internal, rhs.internal), (lhs.field, rhs.field)] {
            assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "{lhs:?} vs {rhs:?}");
        }
        assert!(lhs.total() >= -1e-10);
    }

    #[test]
    fn gronwall_budget_extrapolates() {
        let samples: Vec<GronwallSample> = [0.5, 0.25]
            .iter()
            .flat_map(|&delta| {
                [0.2, 0.1, 0.05].iter().map(move |&e| GronwallSample { epsilon: e, delta, sup_kinetic: delta + 3.0 * e })
            })
            .collect();
        let table = gronwall_budget(&samples).unwrap();
        assert_eq!(table.len(), 2);
        assert!((table[0].chi - 0.5).abs() < 1e-12 && (table[1].chi - 0.25).abs() < 1e-12);
        assert!((table[0].slope - 3.0).abs() < 1e-12);
        assert!(gronwall_budget(&samples[..1]).is_err());
    }

    #[test]
    fn korn_examples() {
        let grid = strip(32, 9);
        let none = vec![false; grid.ny()];
        let w = VectorField::from_components(vec![grid.sample(|_, _| 1.0), grid.zeros()]);
        let q = korn_quotient(&grid, &w, &none, 0.25).unwrap().value().unwrap();
        assert!((q - 1.0).abs() < 1e-12);
        assert_eq!(korn_quotient(&grid, &grid.zero_vector(), &none, 0.25).unwrap(), KornQuotient::Degenerate);
        let mut big = none.clone();
        big.iter_mut().take(16).for_each(|b| *b = true);
        assert!(korn_quotient(&grid, &w, &big, 0.25).is_err());
    }

    #[test]
    fn korn_bounds_without_excluded_set() {
        // In two dimensions ‖A‖² = 2‖∇w‖² + (2/9)‖div w‖² and ‖div w‖² ≤ 2‖∇w‖²,
        // so 9/22 ≤ Q ≤ 1 with Q = 1 only for constant fields.
        let grid = strip(32, 9);
        let none = vec![false; grid.ny()];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let mut below_one = 0;
        for _ in 0..50 {
            let w = random_vector(&grid, 5, 3, &mut rng);
            let q = korn_quotient(&grid, &w, &none, 0.25).unwrap().value().unwrap();
            assert!((9.0 / 22.0 - 1e-10..=1.0 + 1e-10).contains(&q), "{q}");
            if q < 1.0 - 1e-3 {
                below_one += 1;
            }
        }
        assert!(below_one > 0);
        // a pure shear w = (sin z', 0) sits strictly below 1
        let shear = VectorField::from_components(vec![grid.sample(|_, z| (std::f64::consts::PI * z).cos()), grid.zeros()]);
        let q = korn_quotient(&grid, &shear, &none, 0.25).unwrap().value().unwrap();
        let k2 = std::f64::consts::PI.powi(2);
        assert!((q - (1.0 + k2) / (1.0 + 2.0 * k2)).abs() < 1e-10);
    }

    #[test]
    fn korn_survey_is_resolution_stable() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let survey = |grid: &WaveguideGrid, rng: &mut rand_chacha::ChaCha8Rng| {
            let width = grid.ny() / 10;
            let mut worst = 0.0f64;
            for _ in 0..200 {
                let w = random_vector(grid, 4, 2, rng);
                let start = rng.random_range(0..grid.ny());
                let mask: Vec<bool> = (0..grid.ny()).map(|i| (i + grid.ny() - start) % grid.ny() < width).collect();
                worst = worst.max(korn_quotient(grid, &w, &mask, 0.25).unwrap().value().unwrap());
            }
            worst
        };
        let coarse = survey(&strip(32, 9), &mut rng);
        let fine = survey(&strip(64, 17), &mut rng);
        assert!(coarse.is_finite() && fine.is_finite());
        assert!(coarse.max(fine) / coarse.min(fine) < 2.0, "{coarse} {fine}");
    }

    #[test]
    fn sqrt_entropy_defect_shrinks_with_epsilon() {
        let grid = strip(64, 9);
        let params = |e| ScaledParams::new(e, 0.0, 1.0, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for eps in [0.2, 0.1, 0.05] {
            let data = make_ill_prepared(Profile::GaussBump, eps, 1.0, &grid).unwrap();
            let d = sqrt_entropy_defect(&grid, &data.state(), &params(eps));
            assert!(d < prev);
            prev = d;
        }
    }
}
