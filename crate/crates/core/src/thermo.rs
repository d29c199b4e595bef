//! Barotropic electron pressure and the thermodynamic potentials built on it.
//!
//! The default law is `p(n) = a n^{5/3}`; a smooth low-density perturbation
//! vanishing at zero may be added. For the pure power law the enthalpy
//! `H(n) = n ∫_1^n p(s)/s² ds` and its derivatives are evaluated in closed
//! form, otherwise the perturbation part is integrated adaptively.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::quadrature::adaptive_simpson;
use crate::{Error, Result};

const GAMMA: f64 = 5.0 / 3.0;
/// Lower density cutoff used by the limiting quadrature for `H(0+)`.
const QUAD_FLOOR: f64 = 1e-12;

/// Smooth perturbation added to the power law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Perturbation {
    /// `b n e^{-n}`: vanishes at zero and decays at infinity.
    ExpLinear { b: f64 },
}

impl Perturbation {
    /// Parses an expression id such as `exp-linear:0.2`.
    pub fn parse(id: &str) -> Result<Self> {
        let (name, arg) = id
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("perturbation id `{id}` has no parameter")))?;
        let b: f64 = arg
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad perturbation parameter `{arg}`")))?;
        match name.trim() {
            "exp-linear" => Ok(Perturbation::ExpLinear { b }),
            other => Err(Error::Config(format!("unknown perturbation `{other}`"))),
        }
    }

    fn value(&self, n: f64) -> f64 {
        match *self {
            Perturbation::ExpLinear { b } => b * n * (-n).exp(),
        }
    }

    fn derivative(&self, n: f64) -> f64 {
        match *self {
            Perturbation::ExpLinear { b } => b * (1.0 - n) * (-n).exp(),
        }
    }

    /// `∫_1^n q(s)/s² ds`, integrated in the log variable where the integrand is smooth.
    fn enthalpy_integral(&self, n: f64) -> f64 {
        let f = |x: f64| {
            let s = x.exp();
            self.value(s) / s
        };
        adaptive_simpson(&f, 0.0, n.ln(), 1e-14)
    }
}

/// Barotropic pressure law with growth `p'(n) ~ p_∞ n^{2/3}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureLaw {
    a: f64,
    perturbation: Option<Perturbation>,
}

impl Default for PressureLaw {
    fn default() -> Self {
        Self { a: 1.0, perturbation: None }
    }
}

impl PressureLaw {
    pub fn power(a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::Config(format!("pressure scale must be positive, got {a}")));
        }
        Ok(Self { a, perturbation: None })
    }

    /// Adds a perturbation and verifies monotonicity by sampling `p'` on a log grid.
    pub fn with_perturbation(mut self, perturbation: Perturbation) -> Result<Self> {
        self.perturbation = Some(perturbation);
        let monotone = (0..=400)
            .map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / 400.0))
            .all(|n| self.dp(n) > 0.0);
        if !monotone {
            return Err(Error::Config("perturbed pressure law is not monotone".into()));
        }
        Ok(self)
    }

    pub fn scale(&self) -> f64 {
        self.a
    }

    pub fn perturbation(&self) -> Option<Perturbation> {
        self.perturbation
    }

    pub fn is_pure_power(&self) -> bool {
        self.perturbation.is_none()
    }

    /// Limit of `p'(n)/n^{2/3}` as `n → ∞`.
    pub fn p_infinity(&self) -> f64 {
        GAMMA * self.a
    }

    pub fn pressure(&self, n: f64) -> Result<f64> {
        check_nonneg(n)?;
        Ok(self.p(n))
    }

    /// `p'(n)`.
    pub fn pressure_derivative(&self, n: f64) -> Result<f64> {
        check_nonneg(n)?;
        Ok(self.dp(n))
    }

    /// Enthalpy `H(n) = n ∫_1^n p(s)/s² ds`.
    pub fn enthalpy(&self, n: f64) -> Result<f64> {
        if !(n > 0.0) {
            return Err(Error::Domain(format!("enthalpy needs n > 0, got {n}")));
        }
        Ok(self.h(n))
    }

    /// `P = H'`.
    pub fn enthalpy_derivative(&self, n: f64) -> Result<f64> {
        if !(n > 0.0) {
            return Err(Error::Domain(format!("enthalpy derivative needs n > 0, got {n}")));
        }
        Ok(self.big_p(n))
    }

    /// `H''(n) = p'(n)/n`.
    pub fn enthalpy_second(&self, n: f64) -> Result<f64> {
        if !(n > 0.0) {
            return Err(Error::Domain(format!("H'' needs n > 0, got {n}")));
        }
        Ok(self.dp(n) / n)
    }

    /// Bregman divergence `E(n, r) = H(n) - H'(r)(n - r) - H(r)`.
    pub fn relative_entropy(&self, n: f64, r: f64) -> Result<f64> {
        check_nonneg(n)?;
        if !(r > 0.0) {
            return Err(Error::Domain(format!("relative entropy needs r > 0, got {r}")));
        }
        Ok(self.e(n, r))
    }

    // Unchecked kernels used in field loops after the caller validated the data.

    pub(crate) fn p(&self, n: f64) -> f64 {
        let base = self.a * n.powf(GAMMA);
        match self.perturbation {
            Some(q) => base + q.value(n),
            None => base,
        }
    }

    pub(crate) fn dp(&self, n: f64) -> f64 {
        let base = GAMMA * self.a * n.powf(GAMMA - 1.0);
        match self.perturbation {
            Some(q) => base + q.derivative(n),
            None => base,
        }
    }

    pub(crate) fn h(&self, n: f64) -> f64 {
        if n <= 0.0 {
            return self.h_at_zero();
        }
        let base = 1.5 * self.a * (n.powf(GAMMA) - n);
        match self.perturbation {
            Some(q) => base + n * q.enthalpy_integral(n),
            None => base,
        }
    }

    fn h_at_zero(&self) -> f64 {
        match self.perturbation {
            None => 0.0,
            Some(q) => QUAD_FLOOR * q.enthalpy_integral(QUAD_FLOOR),
        }
    }

    pub(crate) fn big_p(&self, n: f64) -> f64 {
        let base = 2.5 * self.a * n.powf(GAMMA - 1.0) - 1.5 * self.a;
        match self.perturbation {
            Some(q) => base + q.enthalpy_integral(n) + q.value(n) / n,
            None => base,
        }
    }

    pub(crate) fn e(&self, n: f64, r: f64) -> f64 {
        self.h(n) - self.big_p(r) * (n - r) - self.h(r)
    }

    /// Pointwise `E(n, r)` with a constant reference density.
    pub fn relative_entropy_field(&self, n: &Array2<f64>, r: f64) -> Array2<f64> {
        n.mapv(|v| self.e(v.max(0.0), r))
    }
}

fn check_nonneg(n: f64) -> Result<()> {
    if n >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("density must be nonnegative, got {n}")))
    }
}

/// Density cutoff `χ` selecting the essential regime around the background `n̄`.
///
/// `χ ≡ 1` on `[n̄/2, 2n̄]`, `χ ≡ 0` outside `[n̄/4, 4n̄]`, joined by quintic
/// smoothsteps (C²).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EssCutoff {
    nbar: f64,
}

impl EssCutoff {
    pub fn new(nbar: f64) -> Result<Self> {
        if !(nbar > 0.0) {
            return Err(Error::Config(format!("background density must be positive, got {nbar}")));
        }
        Ok(Self { nbar })
    }

    pub fn chi(&self, n: f64) -> f64 {
        let lo0 = 0.25 * self.nbar;
        let lo1 = 0.5 * self.nbar;
        let hi0 = 2.0 * self.nbar;
        let hi1 = 4.0 * self.nbar;
        if n <= lo0 || n >= hi1 {
            0.0
        } else if n < lo1 {
            smoothstep((n - lo0) / (lo1 - lo0))
        } else if n <= hi0 {
            1.0
        } else {
            smoothstep((hi1 - n) / (hi1 - hi0))
        }
    }

    /// Splits `quantity` into `χ(n) h` and `(1 - χ(n)) h`; the parts add back to `h` bit-exactly.
    pub fn split(&self, density: &Array2<f64>, quantity: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let mut ess = Array2::zeros(quantity.raw_dim());
        let mut res = Array2::zeros(quantity.raw_dim());
        Zip::from(&mut ess)
            .and(&mut res)
            .and(density)
            .and(quantity)
            .for_each(|e, r, &n, &h| {
                // The larger part is rounded, the smaller one is an exact difference.
                let chi = self.chi(n);
                if chi >= 0.5 {
                    *e = chi * h;
                    *r = h - *e;
                } else {
                    *r = (1.0 - chi) * h;
                    *e = h - *r;
                }
            });
        (ess, res)
    }
}

/// Essential/residual split of the density field itself.
pub fn ess_res_split(n: &Array2<f64>, cutoff: &EssCutoff) -> (Array2<f64>, Array2<f64>) {
    cutoff.split(n, n)
}

/// Quintic smoothstep on `[0, 1]`, C² at both ends.
pub(crate) fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    /// Composite 5-point Gauss-Legendre in the log variable, independent of
    /// the adaptive Simpson path used by the implementation.
    fn h_oracle(law: &PressureLaw, n: f64) -> f64 {
        let (x, w) = crate::quadrature::gauss_legendre(5);
        let (a, b) = (0.0, n.ln());
        let panels = 4000;
        let h = (b - a) / panels as f64;
        let mut acc = 0.0;
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for (xi, wi) in x.iter().zip(&w) {
                let s = (mid + 0.5 * h * xi).exp();
                acc += 0.5 * h * wi * law.p(s) / s;
            }
        }
        n * acc
    }

    #[test]
    fn pressure_examples() {
        let law = PressureLaw::default();
        assert_eq!(law.pressure(0.0).unwrap(), 0.0);
        assert_eq!(law.pressure(1.0).unwrap(), 1.0);
        for n in [1e-3, 0.5, 1.0, 7.0, 1e4] {
            let ratio = law.pressure_derivative(n).unwrap() / n.powf(2.0 / 3.0);
            assert!((ratio - 5.0 / 3.0).abs() < 1e-12);
        }
        assert!(matches!(law.pressure(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn growth_condition_limit() {
        let law = PressureLaw::default()
            .with_perturbation(Perturbation::ExpLinear { b: 0.3 })
            .unwrap();
        let ratios: Vec<f64> = [1e2, 1e4, 1e6]
            .iter()
            .map(|&n| law.dp(n) / f64::powf(n, 2.0 / 3.0))
            .collect();
        assert!((ratios[1] - ratios[0]).abs() < 1e-6);
        assert!((ratios[2] - ratios[1]).abs() < 1e-6);
        assert!((ratios[2] - law.p_infinity()).abs() < 1e-6);
        assert_eq!(law.pressure(0.0).unwrap(), 0.0);
    }

    #[test]
    fn nonmonotone_perturbation_rejected() {
        let res = PressureLaw::default().with_perturbation(Perturbation::ExpLinear { b: -50.0 });
        assert!(matches!(res, Err(Error::Config(_))));
        assert!(Perturbation::parse("exp-linear:0.1").is_ok());
        assert!(Perturbation::parse("wobble:0.1").is_err());
    }

    #[test]
    fn enthalpy_examples() {
        let law = PressureLaw::default();
        assert_eq!(law.enthalpy(1.0).unwrap(), 0.0);
        // frozen from the quadrature oracle
        let h2 = h_oracle(&law, 2.0);
        assert!((h2 - 1.762203).abs() < 1e-6);
        assert!((law.enthalpy(2.0).unwrap() - h2).abs() < 1e-9);
        let h_half = h_oracle(&law, 0.5);
        assert!((h_half - (-0.277530)).abs() < 1e-6);
        assert!((law.enthalpy(0.5).unwrap() - h_half).abs() < 1e-9);
        assert!(law.enthalpy(0.0).is_err());
    }

    #[test]
    fn closed_form_matches_quadrature_on_log_grid() {
        let law = PressureLaw::default();
        for i in 0..=60 {
            let n = 10f64.powf(-3.0 + 6.0 * i as f64 / 60.0);
            let closed = law.h(n);
            let quad = h_oracle(&law, n);
            assert!(
                (closed - quad).abs() <= 1e-9 * (1.0 + closed.abs()),
                "n = {n}: {closed} vs {quad}"
            );
        }
    }

    #[test]
    fn perturbed_enthalpy_matches_oracle() {
        let law = PressureLaw::default()
            .with_perturbation(Perturbation::ExpLinear { b: 0.2 })
            .unwrap();
        for n in [0.01, 0.3, 1.0, 2.5, 40.0] {
            let h = law.h(n);
            let quad = h_oracle(&law, n);
            assert!((h - quad).abs() <= 1e-9 * (1.0 + h.abs()), "n = {n}");
        }
        // P = H' by central differences
        for n in [0.4, 1.7] {
            let step = 1e-5;
            let fd = (law.h(n + step) - law.h(n - step)) / (2.0 * step);
            assert!((fd - law.big_p(n)).abs() < 1e-8);
        }
        assert!(law.relative_entropy(0.0, 1.0).unwrap() >= 0.0);
    }

    #[test]
    fn relative_entropy_examples() {
        let law = PressureLaw::default();
        assert_eq!(law.relative_entropy(1.0, 1.0).unwrap(), 0.0);
        let e21 = law.relative_entropy(2.0, 1.0).unwrap();
        let oracle = h_oracle(&law, 2.0) - 1.0;
        assert!((e21 - oracle).abs() < 1e-9);
        assert!((e21 - 0.762203).abs() < 1e-6);
        // H''(1)/2 = 5/6 via the finite-difference second derivative of H
        let hh = 1e-3;
        let fd2 = (law.h(1.0 + hh) - 2.0 * law.h(1.0) + law.h(1.0 - hh)) / (hh * hh);
        assert!((fd2 / 2.0 - 5.0 / 6.0).abs() < 1e-3);
        let ratio = law.relative_entropy(1.0 + hh, 1.0).unwrap() / (hh * hh);
        assert!((ratio - 5.0 / 6.0).abs() < 1e-3);
        assert!(law.relative_entropy(1.0, 0.0).is_err());
        // E(0, r) = r P(r) - H(r)
        assert_eq!(law.relative_entropy(0.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn quadratic_lower_bound_near_background() {
        let law = PressureLaw::default();
        let nbar: f64 = 1.3;
        // H'' = (5/3) n^{-1/3} is decreasing, so its infimum sits at 3n̄/2.
        let c = 0.5 * (5.0 / 3.0) * (1.5 * nbar).powf(-1.0 / 3.0);
        for i in 0..=200 {
            let n = nbar * (0.5 + i as f64 / 200.0);
            let e = law.relative_entropy(n, nbar).unwrap();
            assert!(e >= c * (n - nbar).powi(2) - 1e-14, "n = {n}");
        }
    }

    proptest! {
        #[test]
        fn bregman_nonnegativity(n in 0.0f64..10.0, r in 0.1f64..10.0) {
            let law = PressureLaw::default();
            prop_assert!(law.relative_entropy(n, r).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn bregman_nonnegativity_ten_thousand_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let law = PressureLaw::default();
        for _ in 0..10_000 {
            let n = rng.random_range(0.0..10.0);
            let r = rng.random_range(0.1..10.0);
            assert!(law.relative_entropy(n, r).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn ess_res_examples() {
        let cut = EssCutoff::new(1.0).unwrap();
        let n = Array2::from_elem((4, 1), 1.0);
        let (ess, res) = ess_res_split(&n, &cut);
        assert!(ess.iter().all(|&v| v == 1.0));
        assert!(res.iter().all(|&v| v == 0.0));

        let mut n = Array2::from_elem((3, 1), 1.0);
        n[[1, 0]] = 0.0;
        let (ess, res) = ess_res_split(&n, &cut);
        assert_eq!(ess[[1, 0]], 0.0);
        assert_eq!(res[[1, 0]], 0.0);
        assert_eq!(cut.chi(0.2), 0.0);
        assert_eq!(cut.chi(5.0), 0.0);
        assert!(cut.chi(0.3) > 0.0 && cut.chi(0.3) < 1.0);
    }

    #[test]
    fn ess_res_reassembles_bit_exactly() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let cut = EssCutoff::new(1.0).unwrap();
        for _ in 0..20 {
            let n = Array2::from_shape_fn((64, 8), |_| rng.random_range(0.0..5.0));
            let h = Array2::from_shape_fn((64, 8), |_| rng.random_range(-3.0..3.0));
            let (ess, res) = cut.split(&n, &h);
            Zip::from(&ess).and(&res).and(&h).for_each(|&e, &r, &v| assert_eq!(e + r, v));
        }
    }
}
