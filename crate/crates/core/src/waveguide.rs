//! Waveguide grids `B × T_R`: a periodic axial direction of length `2πR`
//! times a bounded cross-section carrying Neumann data.
//!
//! Every field is stored as a periodic `ny × nz` array with `z` contiguous.
//! The interval cross-section `[0, H]` is stored through its even mirror
//! extension to `[0, 2H)`, so cosine (Neumann) and sine (Dirichlet) series
//! become ordinary Fourier series. Scalars and the axial velocity are even in
//! `z`, the normal velocity is odd.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::field::VectorField;
use crate::thermo::smoothstep;
use crate::{Error, Result};

/// Bounded cross-section `B`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CrossSection {
    /// No cross-section: the pure axial line.
    Point,
    /// `[0, height]` with Neumann walls, sampled at `points` nodes including both walls.
    Interval { height: f64, points: usize },
    /// Periodic cross-section of the given length (doubly periodic surrogate).
    Periodic { length: f64, points: usize },
}

impl CrossSection {
    /// `|B|`.
    pub fn measure(&self) -> f64 {
        match *self {
            CrossSection::Point => 1.0,
            CrossSection::Interval { height, .. } => height,
            CrossSection::Periodic { length, .. } => length,
        }
    }

    /// Number of resolved cross-section eigenmodes.
    pub fn mode_count(&self) -> usize {
        match *self {
            CrossSection::Point => 1,
            CrossSection::Interval { points, .. } => points,
            CrossSection::Periodic { points, .. } => points,
        }
    }
}

/// Grid parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Axial truncation radius; the axial period is `2πR`.
    pub radius: f64,
    /// Axial points, a power of two.
    pub ny: usize,
    pub cross_section: CrossSection,
}

impl GridSpec {
    pub fn line(radius: f64, ny: usize) -> Self {
        Self { radius, ny, cross_section: CrossSection::Point }
    }

    pub fn strip(radius: f64, ny: usize, height: f64, points: usize) -> Self {
        Self { radius, ny, cross_section: CrossSection::Interval { height, points } }
    }

    pub fn doubly_periodic(radius: f64, ny: usize, length: f64, points: usize) -> Self {
        Self { radius, ny, cross_section: CrossSection::Periodic { length, points } }
    }
}

/// Symmetry of a stored field under the cross-section mirror `z ↦ 2H - z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// Discrete waveguide with FFT plans and wavenumber tables.
#[derive(Clone)]
pub struct WaveguideGrid {
    spec: GridSpec,
    nz: usize,
    dy: f64,
    dz: f64,
    ky: Vec<f64>,
    ky_deriv: Vec<f64>,
    kz: Vec<f64>,
    kz_deriv: Vec<f64>,
    keep_y: Vec<bool>,
    keep_z: Vec<bool>,
    fy: Arc<dyn Fft<f64>>,
    fy_inv: Arc<dyn Fft<f64>>,
    fz: Arc<dyn Fft<f64>>,
    fz_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for WaveguideGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WaveguideGrid")
            .field("spec", &self.spec)
            .field("ny", &self.ny())
            .field("nz", &self.nz)
            .finish()
    }
}

impl PartialEq for WaveguideGrid {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

fn wavenumbers(n: usize, unit: f64) -> (Vec<f64>, Vec<f64>) {
    let full: Vec<f64> = (0..n)
        .map(|j| {
            let m = if j <= n / 2 { j as i64 } else { j as i64 - n as i64 };
            let m = if n.is_multiple_of(2) && j == n / 2 { -(m.abs()) } else { m };
            m as f64 * unit
        })
        .collect();
    let deriv = full
        .iter()
        .enumerate()
        .map(|(j, &k)| if n.is_multiple_of(2) && j == n / 2 { 0.0 } else { k })
        .collect();
    (full, deriv)
}

fn dealias_mask(n: usize) -> Vec<bool> {
    (0..n)
        .map(|j| {
            let m = if j <= n / 2 { j } else { n - j };
            n == 1 || 3 * m < n
        })
        .collect()
}

impl WaveguideGrid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        if !(spec.radius.is_finite() && spec.radius > 0.0) {
            return Err(Error::Config(format!("grid radius must be positive, got {}", spec.radius)));
        }
        if spec.ny < 4 || !spec.ny.is_power_of_two() {
            return Err(Error::Config(format!("grid.Ny must be a power of two >= 4, got {}", spec.ny)));
        }
        let (nz, dz, kz_unit) = match spec.cross_section {
            CrossSection::Point => (1, 1.0, 0.0),
            CrossSection::Interval { height, points } => {
                if !(height > 0.0) || points < 3 {
                    return Err(Error::Config(format!(
                        "interval cross-section needs height > 0 and >= 3 points, got ({height}, {points})"
                    )));
                }
                let dz = height / (points - 1) as f64;
                (2 * (points - 1), dz, PI / height)
            }
            CrossSection::Periodic { length, points } => {
                if !(length > 0.0) || points < 4 || points % 2 != 0 {
                    return Err(Error::Config(format!(
                        "periodic cross-section needs length > 0 and an even point count >= 4, got ({length}, {points})"
                    )));
                }
                (points, length / points as f64, 2.0 * PI / length)
            }
        };
        let (ky, ky_deriv) = wavenumbers(spec.ny, 1.0 / spec.radius);
        let (kz, kz_deriv) = wavenumbers(nz, kz_unit);
        let mut planner = FftPlanner::new();
        Ok(Self {
            spec,
            nz,
            dy: 2.0 * PI * spec.radius / spec.ny as f64,
            dz,
            ky,
            ky_deriv,
            kz,
            kz_deriv,
            keep_y: dealias_mask(spec.ny),
            keep_z: dealias_mask(nz),
            fy: planner.plan_fft_forward(spec.ny),
            fy_inv: planner.plan_fft_inverse(spec.ny),
            fz: planner.plan_fft_forward(nz),
            fz_inv: planner.plan_fft_inverse(nz),
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn cross_section(&self) -> CrossSection {
        self.spec.cross_section
    }

    pub fn radius(&self) -> f64 {
        self.spec.radius
    }

    pub fn ny(&self) -> usize {
        self.spec.ny
    }

    /// Stored cross-section columns (mirror-extended for the interval).
    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.spec.ny, self.nz)
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    /// Cross-section spacing; 1 on the line.
    pub fn dz(&self) -> f64 {
        self.dz
    }

    /// Smallest physical spacing.
    pub fn min_spacing(&self) -> f64 {
        match self.spec.cross_section {
            CrossSection::Point => self.dy,
            _ => self.dy.min(self.dz),
        }
    }

    /// Spatial dimension of the stored velocity field.
    pub fn dim(&self) -> usize {
        match self.spec.cross_section {
            CrossSection::Point => 1,
            _ => 2,
        }
    }

    pub fn is_mirrored(&self) -> bool {
        matches!(self.spec.cross_section, CrossSection::Interval { .. })
    }

    /// `|Ω| = 2πR |B|`.
    pub fn volume(&self) -> f64 {
        2.0 * PI * self.spec.radius * self.spec.cross_section.measure()
    }

    /// Axial nodes `y_j = -πR + jΔy`.
    pub fn y_coords(&self) -> Vec<f64> {
        (0..self.spec.ny).map(|j| -PI * self.spec.radius + j as f64 * self.dy).collect()
    }

    /// Cross-section coordinate of each stored column (mirror coordinate for the interval).
    pub fn z_coords(&self) -> Vec<f64> {
        match self.spec.cross_section {
            CrossSection::Point => vec![0.0],
            _ => (0..self.nz).map(|j| j as f64 * self.dz).collect(),
        }
    }

    /// Physical cross-section nodes (the first `M` stored columns for the interval).
    pub fn physical_z(&self) -> Vec<f64> {
        match self.spec.cross_section {
            CrossSection::Interval { points, .. } => self.z_coords()[..points].to_vec(),
            _ => self.z_coords(),
        }
    }

    pub fn zeros(&self) -> Array2<f64> {
        Array2::zeros(self.shape())
    }

    pub fn zero_vector(&self) -> VectorField {
        VectorField::zeros(self.dim(), self.shape())
    }

    /// Samples `f(y, z)` on every stored node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Array2<f64> {
        let ys = self.y_coords();
        let zs = self.z_coords();
        Array2::from_shape_fn(self.shape(), |(i, j)| f(ys[i], zs[j]))
    }

    /// `∫_Ω f` by the periodic rectangle rule (trapezoid on the interval walls).
    pub fn integrate(&self, f: &Array2<f64>) -> f64 {
        let s: f64 = f.sum();
        match self.spec.cross_section {
            CrossSection::Point => self.dy * s,
            CrossSection::Interval { .. } => 0.5 * self.dy * self.dz * s,
            CrossSection::Periodic { .. } => self.dy * self.dz * s,
        }
    }

    /// `∫_Ω |f|`.
    pub fn l1(&self, f: &Array2<f64>) -> f64 {
        self.integrate(&f.mapv(f64::abs))
    }

    pub fn inner(&self, a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        self.integrate(&(a * b))
    }

    pub fn norm_l2(&self, f: &Array2<f64>) -> f64 {
        self.inner(f, f).max(0.0).sqrt()
    }

    pub fn mean(&self, f: &Array2<f64>) -> f64 {
        self.integrate(f) / self.volume()
    }

    pub fn inner_vector(&self, a: &VectorField, b: &VectorField) -> f64 {
        self.integrate(&a.dot(b))
    }

    pub fn norm_l2_vector(&self, v: &VectorField) -> f64 {
        self.inner_vector(v, v).max(0.0).sqrt()
    }

    /// Full axial wavenumbers `ξ_j = j/R` (Nyquist kept, negative sign).
    pub fn ky(&self) -> &[f64] {
        &self.ky
    }

    /// Axial wavenumbers for first derivatives (Nyquist zeroed).
    pub fn ky_deriv(&self) -> &[f64] {
        &self.ky_deriv
    }

    pub fn kz(&self) -> &[f64] {
        &self.kz
    }

    pub fn kz_deriv(&self) -> &[f64] {
        &self.kz_deriv
    }

    /// `|k|²` symbol of `-Δ` at spectral index `(i, j)`.
    pub fn k2(&self, i: usize, j: usize) -> f64 {
        self.ky[i] * self.ky[i] + self.kz[j] * self.kz[j]
    }

    /// Derivative wavenumber of direction `d` (0 axial, 1 cross) at `(i, j)`.
    pub fn k_deriv(&self, d: usize, i: usize, j: usize) -> f64 {
        if d == 0 {
            self.ky_deriv[i]
        } else {
            self.kz_deriv[j]
        }
    }

    pub fn forward(&self, f: &Array2<f64>) -> Array2<Complex64> {
        let mut data = f.mapv(|v| Complex64::new(v, 0.0));
        self.transform(&mut data, false);
        data
    }

    pub fn forward_complex(&self, data: &mut Array2<Complex64>) {
        self.transform(data, false);
    }

    /// Inverse transform, keeping the real part.
    pub fn inverse(&self, spectrum: &Array2<Complex64>) -> Array2<f64> {
        let mut data = spectrum.clone();
        self.transform(&mut data, true);
        data.mapv(|c| c.re)
    }

    pub fn inverse_complex(&self, data: &mut Array2<Complex64>) {
        self.transform(data, true);
    }

    fn transform(&self, data: &mut Array2<Complex64>, inverse: bool) {
        let (ny, nz) = self.shape();
        assert_eq!(data.dim(), (ny, nz), "field shape does not match the grid");
        if !data.is_standard_layout() {
            *data = data.as_standard_layout().into_owned();
        }
        let (fy, fz) = if inverse { (&self.fy_inv, &self.fz_inv) } else { (&self.fy, &self.fz) };
        let slice = data.as_slice_mut().expect("standard layout");
        if nz > 1 {
            let mut scratch = vec![Complex64::default(); fz.get_inplace_scratch_len()];
            fz.process_with_scratch(slice, &mut scratch);
        }
        let mut scratch = vec![Complex64::default(); fy.get_inplace_scratch_len()];
        if nz == 1 {
            fy.process_with_scratch(slice, &mut scratch);
        } else {
            let mut columns = vec![Complex64::default(); ny * nz];
            for i in 0..ny {
                for j in 0..nz {
                    columns[j * ny + i] = slice[i * nz + j];
                }
            }
            fy.process_with_scratch(&mut columns, &mut scratch);
            for i in 0..ny {
                for j in 0..nz {
                    slice[i * nz + j] = columns[j * ny + i];
                }
            }
        }
        if inverse {
            let norm = 1.0 / (ny * nz) as f64;
            slice.iter_mut().for_each(|c| *c *= norm);
        }
    }

    /// Zeroes spectral coefficients outside the 2/3 band.
    pub fn dealias(&self, spectrum: &mut Array2<Complex64>) {
        for ((i, j), c) in spectrum.indexed_iter_mut() {
            if !(self.keep_y[i] && self.keep_z[j]) {
                *c = Complex64::default();
            }
        }
    }

    /// Spectral derivative of a spectrum in direction `d`.
    pub fn derivative_spectrum(&self, spectrum: &Array2<Complex64>, d: usize) -> Array2<Complex64> {
        let mut out = spectrum.clone();
        for ((i, j), c) in out.indexed_iter_mut() {
            *c *= Complex64::new(0.0, self.k_deriv(d, i, j));
        }
        out
    }

    pub fn derivative(&self, f: &Array2<f64>, d: usize) -> Array2<f64> {
        self.inverse(&self.derivative_spectrum(&self.forward(f), d))
    }

    pub fn gradient(&self, f: &Array2<f64>) -> VectorField {
        let spec = self.forward(f);
        VectorField::from_components(
            (0..self.dim()).map(|d| self.inverse(&self.derivative_spectrum(&spec, d))).collect(),
        )
    }

    pub fn divergence(&self, v: &VectorField) -> Array2<f64> {
        let mut acc = Array2::<Complex64>::zeros(self.shape());
        for d in 0..v.dim() {
            acc += &self.derivative_spectrum(&self.forward(v.component(d)), d);
        }
        self.inverse(&acc)
    }

    pub fn laplacian(&self, f: &Array2<f64>) -> Array2<f64> {
        let mut spec = self.forward(f);
        for ((i, j), c) in spec.indexed_iter_mut() {
            *c *= -self.k2(i, j);
        }
        self.inverse(&spec)
    }

    /// Projects a stored field onto the requested mirror parity.
    pub fn symmetrize(&self, f: &mut Array2<f64>, parity: Parity) {
        if !self.is_mirrored() {
            return;
        }
        let nz = self.nz;
        let m = nz / 2;
        for mut row in f.rows_mut() {
            match parity {
                Parity::Even => {
                    for j in 1..m {
                        let avg = 0.5 * (row[j] + row[nz - j]);
                        row[j] = avg;
                        row[nz - j] = avg;
                    }
                }
                Parity::Odd => {
                    row[0] = 0.0;
                    row[m] = 0.0;
                    for j in 1..m {
                        let avg = 0.5 * (row[j] - row[nz - j]);
                        row[j] = avg;
                        row[nz - j] = -avg;
                    }
                }
            }
        }
    }

    /// Parity of velocity component `d`.
    pub fn velocity_parity(&self, d: usize) -> Parity {
        if d == 1 && self.is_mirrored() {
            Parity::Odd
        } else {
            Parity::Even
        }
    }

    pub fn symmetrize_vector(&self, v: &mut VectorField) {
        for d in 0..v.dim() {
            let parity = self.velocity_parity(d);
            self.symmetrize(v.component_mut(d), parity);
        }
    }

    /// Largest normal velocity on the cross-section walls; zero without walls.
    pub fn wall_flux(&self, v: &VectorField) -> f64 {
        match self.spec.cross_section {
            CrossSection::Interval { points, .. } if v.dim() > 1 => {
                let uz = v.component(1);
                let top = points - 1;
                uz.column(0)
                    .iter()
                    .chain(uz.column(top).iter())
                    .fold(0.0f64, |m, &x| m.max(x.abs()))
            }
            _ => 0.0,
        }
    }

    /// Time for a signal of speed `c` to travel half the axial period.
    pub fn wrap_time(&self, speed: f64) -> f64 {
        2.0 * PI * self.spec.radius / (2.0 * speed)
    }

    /// Neumann eigenpairs `(λ_k, w_k)` sampled at [`Self::physical_z`],
    /// orthonormal in the cross-section mean inner product.
    pub fn neumann_eigenpairs(&self, count: usize) -> Result<Vec<(f64, Vec<f64>)>> {
        let available = self.spec.cross_section.mode_count();
        if count > available {
            return Err(Error::Capacity { requested: count, available });
        }
        let zs = self.physical_z();
        Ok((0..count)
            .map(|k| (self.eigenvalue(k), zs.iter().map(|&z| self.eigenfunction(k, z)).collect()))
            .collect())
    }

    /// `λ_k`, ascending in `k`.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        match self.spec.cross_section {
            CrossSection::Point => 0.0,
            CrossSection::Interval { height, .. } => (k as f64 * PI / height).powi(2),
            CrossSection::Periodic { length, .. } => {
                let m = k.div_ceil(2);
                (2.0 * PI * m as f64 / length).powi(2)
            }
        }
    }

    /// `w_k(z)`.
    pub fn eigenfunction(&self, k: usize, z: f64) -> f64 {
        match self.spec.cross_section {
            CrossSection::Point => 1.0,
            CrossSection::Interval { height, points } => {
                let c = (k as f64 * PI * z / height).cos();
                if k == 0 || k == points - 1 {
                    c
                } else {
                    2f64.sqrt() * c
                }
            }
            CrossSection::Periodic { length, points } => {
                if k == 0 {
                    return 1.0;
                }
                let m = k.div_ceil(2);
                let arg = 2.0 * PI * m as f64 * z / length;
                if k == points - 1 {
                    arg.cos()
                } else if k % 2 == 1 {
                    2f64.sqrt() * arg.cos()
                } else {
                    2f64.sqrt() * arg.sin()
                }
            }
        }
    }

    /// Quadrature weights of the cross-section mean over [`Self::physical_z`].
    pub fn cross_section_weights(&self) -> Vec<f64> {
        match self.spec.cross_section {
            CrossSection::Point => vec![1.0],
            CrossSection::Interval { points, .. } => {
                let w = 1.0 / (points - 1) as f64;
                (0..points)
                    .map(|j| if j == 0 || j == points - 1 { 0.5 * w } else { w })
                    .collect()
            }
            CrossSection::Periodic { points, .. } => vec![1.0 / points as f64; points],
        }
    }

    /// `A_k[g](y) = |B|^{-1} ∫_B g(y, z) w_k(z) dz` at every axial node.
    pub fn cross_section_project(&self, g: &Array2<f64>, k: usize) -> Result<Array1<f64>> {
        let available = self.spec.cross_section.mode_count();
        if k >= available {
            return Err(Error::Capacity { requested: k + 1, available });
        }
        let weighted: Vec<f64> = self
            .cross_section_weights()
            .iter()
            .zip(self.physical_z())
            .map(|(w, z)| w * self.eigenfunction(k, z))
            .collect();
        Ok(g.rows()
            .into_iter()
            .map(|row| weighted.iter().zip(row.iter()).map(|(w, v)| w * v).sum())
            .collect())
    }

    /// `Σ_k a_k(y) w_k(z)` over the supplied axial coefficient functions.
    pub fn synthesize_modes(&self, coefficients: &[(usize, Array1<f64>)]) -> Array2<f64> {
        let zs = self.z_coords();
        let mut out = self.zeros();
        for (k, a) in coefficients {
            let w: Vec<f64> = zs.iter().map(|&z| self.eigenfunction(*k, z)).collect();
            Zip::indexed(&mut out).for_each(|(i, j), o| *o += a[i] * w[j]);
        }
        out
    }

    /// Applies an axial Fourier multiplier to a 1D axial function.
    pub fn axial_multiplier(&self, a: &Array1<f64>, symbol: impl Fn(f64) -> f64) -> Array1<f64> {
        let ny = self.spec.ny;
        let mut buf: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut scratch = vec![Complex64::default(); self.fy.get_inplace_scratch_len()];
        self.fy.process_with_scratch(&mut buf, &mut scratch);
        for (c, &xi) in buf.iter_mut().zip(&self.ky) {
            *c *= symbol(xi);
        }
        self.fy_inv.process_with_scratch(&mut buf, &mut scratch);
        buf.iter().map(|c| c.re / ny as f64).collect()
    }

    /// Smoothing operator `[g]_δ`.
    pub fn smooth_project(&self, g: &Array2<f64>, spec: &SmoothingSpec) -> Result<Array2<f64>> {
        spec.validate(self)?;
        if g.dim() != self.shape() {
            return Err(Error::GridMismatch("smoothing input shape".into()));
        }
        let ys = self.y_coords();
        let ramp: Array1<f64> = ys.iter().map(|&y| spec.ramp(y)).collect();
        let kept = spec.mode_cutoff().min(self.spec.cross_section.mode_count());
        let width = spec.width();
        let mut coefficients = Vec::with_capacity(kept);
        for k in 0..kept {
            let a = self.cross_section_project(g, k)? * &ramp;
            let a = self.axial_multiplier(&a, |xi| (-(width * xi).powi(2) / 4.0).exp());
            coefficients.push((k, a));
        }
        Ok(self.synthesize_modes(&coefficients))
    }
}

/// Parameters of the smoothing operator `[·]_δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSpec {
    delta: f64,
    width: f64,
}

impl SmoothingSpec {
    /// Mollifier width defaults to `δ`.
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Config(format!("smoothing.delta must be positive, got {delta}")));
        }
        Ok(Self { delta, width: delta })
    }

    pub fn with_width(mut self, width: f64) -> Result<Self> {
        if !(width.is_finite() && width >= 0.0) {
            return Err(Error::Config(format!("mollifier width must be nonnegative, got {width}")));
        }
        self.width = width;
        Ok(self)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Number of kept cross-section modes: all `k < 1/δ`.
    pub fn mode_cutoff(&self) -> usize {
        (1.0 / self.delta).ceil() as usize
    }

    pub fn inner_radius(&self) -> f64 {
        1.0 / self.delta
    }

    pub fn outer_radius(&self) -> f64 {
        2.0 / self.delta
    }

    /// `ψ_δ(y)`: 1 on `|y| ≤ 1/δ`, 0 on `|y| ≥ 2/δ`, C² in between.
    pub fn ramp(&self, y: f64) -> f64 {
        let r = y.abs();
        let (a, b) = (self.inner_radius(), self.outer_radius());
        smoothstep((b - r) / (b - a))
    }

    pub fn validate(&self, grid: &WaveguideGrid) -> Result<()> {
        let room = PI * grid.radius();
        if self.outer_radius() > room {
            return Err(Error::GridMismatch(format!(
                "smoothing radius 2/δ = {} exceeds the half period πR = {room}",
                self.outer_radius()
            )));
        }
        Ok(())
    }
}
