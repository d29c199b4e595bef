//! Synthetic fields: random band-limited data with the grid's parities,
//! localized bumps and the Taylor-Green vortex.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::field::VectorField;
use crate::waveguide::{CrossSection, Parity, WaveguideGrid};

/// `(λ_k, w_k)` pairs for the cross-section.
type CrossBasis = Vec<(f64, Box<dyn Fn(f64) -> f64>)>;

/// Cross-section basis functions of the requested parity, up to `max_mode`.
fn cross_basis(grid: &WaveguideGrid, max_mode: usize, parity: Parity) -> CrossBasis {
    match grid.cross_section() {
        CrossSection::Point => match parity {
            Parity::Even => vec![(0.0, Box::new(|_| 1.0))],
            Parity::Odd => Vec::new(),
        },
        CrossSection::Interval { height, points } => {
            let top = max_mode.min(points / 3);
            let range: Vec<usize> = match parity {
                Parity::Even => (0..=top).collect(),
                Parity::Odd => (1..=top).collect(),
            };
            range
                .into_iter()
                .map(|b| {
                    let k = b as f64 * PI / height;
                    let f: Box<dyn Fn(f64) -> f64> = match parity {
                        Parity::Even => Box::new(move |z: f64| (k * z).cos()),
                        Parity::Odd => Box::new(move |z: f64| (k * z).sin()),
                    };
                    (k, f)
                })
                .collect()
        }
        CrossSection::Periodic { length, points } => {
            let top = max_mode.min(points / 3);
            let mut out: CrossBasis = vec![(0.0, Box::new(|_| 1.0))];
            for b in 1..=top {
                let k = 2.0 * PI * b as f64 / length;
                out.push((k, Box::new(move |z: f64| (k * z).cos())));
                out.push((k, Box::new(move |z: f64| (k * z).sin())));
            }
            out
        }
    }
}

fn random_with_parity<R: Rng>(
    grid: &WaveguideGrid,
    axial_modes: usize,
    cross_modes: usize,
    parity: Parity,
    rng: &mut R,
) -> Array2<f64> {
    let ys = grid.y_coords();
    let zs = grid.z_coords();
    let radius = grid.radius();
    let top = axial_modes.min(grid.ny() / 3);
    let mut out = grid.zeros();
    for (kz, basis) in cross_basis(grid, cross_modes, parity) {
        let zcol: Vec<f64> = zs.iter().map(|&z| basis(z)).collect();
        for a in 0..=top {
            let ky = a as f64 / radius;
            let decay = 1.0 / (1.0 + ky * ky + kz * kz);
            let c: f64 = StandardNormal.sample(rng);
            let s: f64 = if a == 0 { 0.0 } else { StandardNormal.sample(rng) };
            for (i, &y) in ys.iter().enumerate() {
                let axial = decay * (c * (ky * y).cos() + s * (ky * y).sin());
                for (j, &w) in zcol.iter().enumerate() {
                    out[[i, j]] += axial * w;
                }
            }
        }
    }
    out
}

/// Random band-limited scalar field (even in the cross-section).
pub fn random_scalar<R: Rng>(grid: &WaveguideGrid, axial_modes: usize, cross_modes: usize, rng: &mut R) -> Array2<f64> {
    random_with_parity(grid, axial_modes, cross_modes, Parity::Even, rng)
}

/// Random band-limited scalar field with zero mean.
pub fn random_mean_free<R: Rng>(grid: &WaveguideGrid, axial_modes: usize, cross_modes: usize, rng: &mut R) -> Array2<f64> {
    let f = random_scalar(grid, axial_modes, cross_modes, rng);
    let mean = grid.mean(&f);
    f - mean
}

/// Random band-limited vector field that is tangential on the walls.
pub fn random_vector<R: Rng>(grid: &WaveguideGrid, axial_modes: usize, cross_modes: usize, rng: &mut R) -> VectorField {
    VectorField::from_components(
        (0..grid.dim())
            .map(|d| random_with_parity(grid, axial_modes, cross_modes, grid.velocity_parity(d), rng))
            .collect(),
    )
}

/// `exp(-y²/w²)`.
pub fn gauss(y: f64, width: f64) -> f64 {
    (-(y / width).powi(2)).exp()
}

/// `C^∞` bump `exp(1 - 1/(1 - (y/r)²))` supported in `|y| < r`, with peak 1.
pub fn compact_bump(y: f64, radius: f64) -> f64 {
    let s = y / radius;
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// Taylor-Green vortex `(cos y sin z, -sin y cos z)` on a `2π`-periodic square.
///
/// `None` when the grid is not doubly periodic.
pub fn taylor_green(grid: &WaveguideGrid) -> Option<VectorField> {
    match grid.cross_section() {
        CrossSection::Periodic { length, .. } => {
            let kz = 2.0 * PI / length;
            let ky = 1.0 / grid.radius();
            let uy = grid.sample(|y, z| (ky * y).cos() * (kz * z).sin());
            let uz = grid.sample(|y, z| -(ky / kz) * (ky * y).sin() * (kz * z).cos());
            Some(VectorField::from_components(vec![uy, uz]))
        }
        _ => None,
    }
}
