use ndarray::{Array2, Zip};

/// Vector field on a waveguide grid: one array per velocity direction
/// (axial first, then cross-section when present).
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    comps: Vec<Array2<f64>>,
}

impl VectorField {
    pub fn zeros(dim: usize, shape: (usize, usize)) -> Self {
        Self { comps: (0..dim).map(|_| Array2::zeros(shape)).collect() }
    }

    /// Panics when the components disagree in shape.
    pub fn from_components(comps: Vec<Array2<f64>>) -> Self {
        assert!(!comps.is_empty(), "vector field needs at least one component");
        let shape = comps[0].raw_dim();
        assert!(comps.iter().all(|c| c.raw_dim() == shape), "component shapes differ");
        Self { comps }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.comps[0].dim()
    }

    pub fn component(&self, i: usize) -> &Array2<f64> {
        &self.comps[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut Array2<f64> {
        &mut self.comps[i]
    }

    pub fn components(&self) -> &[Array2<f64>] {
        &self.comps
    }

    pub fn components_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.comps
    }

    pub fn into_components(self) -> Vec<Array2<f64>> {
        self.comps
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { comps: self.comps.iter().map(|c| c * factor).collect() }
    }

    /// `self + factor * other`, in place.
    pub fn axpy(&mut self, factor: f64, other: &Self) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            a.scaled_add(factor, b);
        }
    }

    /// Pointwise product with a scalar field.
    pub fn times_scalar(&self, s: &Array2<f64>) -> Self {
        Self { comps: self.comps.iter().map(|c| c * s).collect() }
    }

    /// Pointwise quotient by a scalar field.
    pub fn div_scalar(&self, s: &Array2<f64>) -> Self {
        Self { comps: self.comps.iter().map(|c| c / s).collect() }
    }

    /// Pointwise dot product.
    pub fn dot(&self, other: &Self) -> Array2<f64> {
        let mut out = Array2::zeros(self.comps[0].raw_dim());
        for (a, b) in self.comps.iter().zip(&other.comps) {
            Zip::from(&mut out).and(a).and(b).for_each(|o, &x, &y| *o += x * y);
        }
        out
    }

    /// Pointwise `|v|²`.
    pub fn norm_sq(&self) -> Array2<f64> {
        self.dot(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.dim(), other.dim(), "vector dimension mismatch");
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| {
                let mut out = a.clone();
                Zip::from(&mut out).and(b).for_each(|x, &y| *x = f(*x, y));
                out
            })
            .collect();
        Self { comps }
    }
}
