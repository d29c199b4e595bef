//! Neumann Poisson solver, Helmholtz decomposition and fractional inverse
//! Laplacians, all diagonal in the cross-mode × axial-Fourier basis.

use ndarray::Array2;
use num_complex::Complex64;

use crate::field::VectorField;
use crate::waveguide::WaveguideGrid;
use crate::{Error, Result};

/// Relative tolerance of the Neumann compatibility condition `∫q = 0`.
pub const COMPATIBILITY_TOL: f64 = 1e-10;
/// Largest admissible normal velocity on the walls.
pub const WALL_FLUX_TOL: f64 = 1e-8;

/// Mean-zero solution of `ΔΦ = q` with Neumann walls.
#[derive(Clone, Debug)]
pub struct PoissonSolution {
    pub potential: Array2<f64>,
    pub gradient: VectorField,
}

/// `v = H[v] + ∇Ψ`.
#[derive(Clone, Debug)]
pub struct HelmholtzParts {
    pub solenoidal: VectorField,
    pub gradient: VectorField,
    pub potential: Array2<f64>,
}

pub fn check_compatibility(grid: &WaveguideGrid, q: &Array2<f64>) -> Result<()> {
    let integral = grid.integrate(q);
    let l1 = grid.l1(q);
    if integral.abs() > COMPATIBILITY_TOL * l1 {
        return Err(Error::Compatibility { integral, l1 });
    }
    Ok(())
}

pub fn solve_poisson_neumann(grid: &WaveguideGrid, q: &Array2<f64>) -> Result<PoissonSolution> {
    if q.dim() != grid.shape() {
        return Err(Error::GridMismatch("Poisson source shape".into()));
    }
    check_compatibility(grid, q)?;
    Ok(poisson_spectral(grid, &grid.forward(q)))
}

/// Poisson solve from a source spectrum; the mean mode is discarded.
pub(crate) fn poisson_spectral(grid: &WaveguideGrid, q_hat: &Array2<Complex64>) -> PoissonSolution {
    let mut phi_hat = q_hat.clone();
    for ((i, j), c) in phi_hat.indexed_iter_mut() {
        let k2 = grid.k2(i, j);
        *c = if k2 > 0.0 { -*c / k2 } else { Complex64::default() };
    }
    let gradient = VectorField::from_components(
        (0..grid.dim()).map(|d| grid.inverse(&grid.derivative_spectrum(&phi_hat, d))).collect(),
    );
    PoissonSolution { potential: grid.inverse(&phi_hat), gradient }
}

pub fn helmholtz(grid: &WaveguideGrid, v: &VectorField) -> Result<HelmholtzParts> {
    if v.dim() != grid.dim() || v.shape() != grid.shape() {
        return Err(Error::GridMismatch("Helmholtz input shape".into()));
    }
    let flux = grid.wall_flux(v);
    if flux > WALL_FLUX_TOL {
        return Err(Error::BoundaryFlux { flux });
    }
    Ok(helmholtz_unchecked(grid, v))
}

pub(crate) fn helmholtz_unchecked(grid: &WaveguideGrid, v: &VectorField) -> HelmholtzParts {
    let dim = grid.dim();
    let spectra: Vec<Array2<Complex64>> = v.components().iter().map(|c| grid.forward(c)).collect();
    let mut psi_hat = Array2::<Complex64>::zeros(grid.shape());
    for ((i, j), psi) in psi_hat.indexed_iter_mut() {
        let mut kk = 0.0;
        let mut kv = Complex64::default();
        for (d, s) in spectra.iter().enumerate() {
            let k = grid.k_deriv(d, i, j);
            kk += k * k;
            kv += s[[i, j]] * k;
        }
        if kk > 0.0 {
            *psi = Complex64::new(0.0, -1.0) * kv / kk;
        }
    }
    let gradient =
        VectorField::from_components((0..dim).map(|d| grid.inverse(&grid.derivative_spectrum(&psi_hat, d))).collect());
    let solenoidal = v.sub(&gradient);
    HelmholtzParts { solenoidal, gradient, potential: grid.inverse(&psi_hat) }
}

/// Leray projector `H[v]`.
pub fn leray(grid: &WaveguideGrid, v: &VectorField) -> Result<VectorField> {
    helmholtz(grid, v).map(|p| p.solenoidal)
}

/// Power of the Neumann Laplacian inverse.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InversePower {
    /// `(-Δ_N)^{-1}`
    Full,
    /// `(-Δ_N)^{-1/2}`
    Half,
}

impl InversePower {
    fn exponent(self) -> f64 {
        match self {
            InversePower::Full => -1.0,
            InversePower::Half => -0.5,
        }
    }
}

/// Applies `(λ_k + ξ²)^{power}` on mean-free data.
pub fn inverse_neumann(grid: &WaveguideGrid, s: &Array2<f64>, power: InversePower) -> Result<Array2<f64>> {
    check_compatibility(grid, s)?;
    let exponent = power.exponent();
    let mut spec = grid.forward(s);
    for ((i, j), c) in spec.indexed_iter_mut() {
        let k2 = grid.k2(i, j);
        *c = if k2 > 0.0 { *c * k2.powf(exponent) } else { Complex64::default() };
    }
    Ok(grid.inverse(&spec))
}
