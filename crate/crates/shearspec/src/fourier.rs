//! Fourier-side primitives: truncated Fourier series on the circle, the
//! normalized inner product, Sobolev norms, mode projections, and shear
//! profiles.
//!
//! A function is stored by its coefficients `f_j`, `|j| <= N`, in the basis
//! `e^{ijy}`; position `p = j + N` in the backing vector. The inner product is
//! `<f,g> = sum_j f_j conj(g_j)`, which equals `(1/2pi) int_0^{2pi} f conj(g)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used by the real-valued / zero-average structure checks.
pub const STRUCTURE_TOL: f64 = 1e-12;

/// A truncated Fourier series `sum_{|j| <= N} f_j e^{ijy}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierFunction {
    max_mode: usize,
    coeffs: Vec<Complex64>,
}

impl FourierFunction {
    /// Builds a function from its `2N+1` coefficients ordered `j = -N..N`.
    pub fn new(max_mode: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if max_mode == 0 {
            return Err(Error::Domain("max_mode must be >= 1".into()));
        }
        if coeffs.len() != 2 * max_mode + 1 {
            return Err(Error::Domain(format!(
                "expected {} coefficients for max_mode {}, got {}",
                2 * max_mode + 1,
                max_mode,
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Domain("non-finite coefficient".into()));
        }
        Ok(Self { max_mode, coeffs })
    }

    /// The zero function on `|j| <= N`.
    pub fn zeros(max_mode: usize) -> Self {
        Self {
            max_mode,
            coeffs: vec![Complex64::ZERO; 2 * max_mode + 1],
        }
    }

    /// The constant function `c`.
    pub fn constant(c: Complex64, max_mode: usize) -> Self {
        let mut f = Self::zeros(max_mode);
        f.set_coeff(0, c);
        f
    }

    /// The pure mode `e^{ijy}`.
    pub fn unit_mode(j: i64, max_mode: usize) -> Self {
        let mut f = Self::zeros(max_mode);
        f.set_coeff(j, Complex64::ONE);
        f
    }

    /// Builds a function from sparse `(mode, value)` pairs.
    pub fn from_modes(max_mode: usize, modes: &[(i64, Complex64)]) -> Result<Self> {
        let mut f = Self::zeros(max_mode);
        for &(j, v) in modes {
            if j.unsigned_abs() as usize > max_mode {
                return Err(Error::Domain(format!(
                    "mode {} outside |j| <= {}",
                    j, max_mode
                )));
            }
            f.set_coeff(j, v);
        }
        Ok(f)
    }

    /// Largest represented mode index `N`.
    pub fn max_mode(&self) -> usize {
        self.max_mode
    }

    /// Coefficient `f_j`; zero outside the stored range.
    pub fn coeff(&self, j: i64) -> Complex64 {
        let n = self.max_mode as i64;
        if j.abs() > n {
            Complex64::ZERO
        } else {
            self.coeffs[(j + n) as usize]
        }
    }

    /// Overwrites `f_j`. Panics if `|j| > N`.
    pub fn set_coeff(&mut self, j: i64, v: Complex64) {
        let n = self.max_mode as i64;
        assert!(j.abs() <= n, "mode {} outside |j| <= {}", j, n);
        self.coeffs[(j + n) as usize] = v;
    }

    /// Backing coefficient slice, ordered `j = -N..N`.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// True when all conjugate-symmetry defects `|f_{-j} - conj(f_j)|` are below `tol`.
    pub fn is_real_valued(&self, tol: f64) -> bool {
        (0..=self.max_mode as i64).all(|j| (self.coeff(-j) - self.coeff(j).conj()).norm() <= tol)
    }

    /// True when `|f_0| <= tol`.
    pub fn has_zero_average(&self, tol: f64) -> bool {
        self.coeff(0).norm() <= tol
    }

    /// Spectral derivative of order `m`: multiplies `f_j` by `(ij)^m`.
    pub fn derivative(&self, order: u32) -> Self {
        let n = self.max_mode as i64;
        let coeffs = (-n..=n)
            .map(|j| Complex64::new(0.0, j as f64).powu(order) * self.coeff(j))
            .collect();
        Self {
            max_mode: self.max_mode,
            coeffs,
        }
    }

    /// Point evaluation `sum_j f_j e^{ijy}`.
    pub fn evaluate(&self, y: f64) -> Complex64 {
        let n = self.max_mode as i64;
        (-n..=n)
            .map(|j| self.coeff(j) * Complex64::new(0.0, j as f64 * y).exp())
            .sum()
    }

    /// Same function represented on `|j| <= m`, `m >= N`.
    pub fn pad_to(&self, m: usize) -> Self {
        assert!(m >= self.max_mode);
        let mut f = Self::zeros(m);
        let n = self.max_mode as i64;
        for j in -n..=n {
            f.set_coeff(j, self.coeff(j));
        }
        f
    }

    /// Pointwise sum; the result lives on the larger mode range.
    pub fn add(&self, other: &Self) -> Self {
        let m = self.max_mode.max(other.max_mode);
        let n = m as i64;
        let coeffs = (-n..=n).map(|j| self.coeff(j) + other.coeff(j)).collect();
        Self {
            max_mode: m,
            coeffs,
        }
    }

    /// Pointwise difference; the result lives on the larger mode range.
    pub fn sub(&self, other: &Self) -> Self {
        let m = self.max_mode.max(other.max_mode);
        let n = m as i64;
        let coeffs = (-n..=n).map(|j| self.coeff(j) - other.coeff(j)).collect();
        Self {
            max_mode: m,
            coeffs,
        }
    }

    /// Scalar multiple.
    pub fn scale(&self, a: Complex64) -> Self {
        Self {
            max_mode: self.max_mode,
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
        }
    }
}

/// Normalized inner product `<f,g> = sum_j f_j conj(g_j)`, conjugate-linear
/// in the second slot. Functions on different mode ranges are zero-padded.
pub fn inner_product(f: &FourierFunction, g: &FourierFunction) -> Complex64 {
    let n = f.max_mode.max(g.max_mode) as i64;
    (-n..=n).map(|j| f.coeff(j) * g.coeff(j).conj()).sum()
}

/// The L2 norm `<f,f>^{1/2}`.
pub fn l2_norm(f: &FourierFunction) -> f64 {
    inner_product(f, f).re.max(0.0).sqrt()
}

/// Sobolev norm `(sum_j <j>^{2s} |f_j|^2)^{1/2}` with `<j> = (1+j^2)^{1/2}`.
///
/// `s = 0` recovers the L2 norm. Requires `s >= 0`.
pub fn sobolev_norm(f: &FourierFunction, s: f64) -> f64 {
    assert!(s >= 0.0, "sobolev index must be >= 0");
    let n = f.max_mode as i64;
    (-n..=n)
        .map(|j| {
            let w = (1.0 + (j as f64) * (j as f64)).powf(s);
            w * f.coeff(j).norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

/// Mode projections used throughout the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    /// The average: keeps `f_0` only.
    Zero,
    /// The zero-average part: removes `f_0`.
    Nonzero,
    /// The pair `{+j, -j}`, `j >= 1`: keeps `f_j e^{ijy} + f_{-j} e^{-ijy}`.
    Pair(usize),
}

/// Applies `Pi_0`, `Pi_{!=}`, or `Pi_j` to `f`.
pub fn project(f: &FourierFunction, which: Projection) -> FourierFunction {
    let mut out = FourierFunction::zeros(f.max_mode());
    match which {
        Projection::Zero => out.set_coeff(0, f.coeff(0)),
        Projection::Nonzero => {
            out = f.clone();
            out.set_coeff(0, Complex64::ZERO);
        }
        Projection::Pair(j) => {
            assert!(
                (1..=f.max_mode()).contains(&j),
                "pair index {} outside 1..={}",
                j,
                f.max_mode()
            );
            let j = j as i64;
            out.set_coeff(j, f.coeff(j));
            out.set_coeff(-j, f.coeff(-j));
        }
    }
    out
}

/// Antiderivative `dy^{-1} f`: divides `f_j` by `ij`. Fails when `f` has a
/// nonzero average.
pub fn partial_y_inverse(f: &FourierFunction) -> Result<FourierFunction> {
    if !f.has_zero_average(STRUCTURE_TOL) {
        return Err(Error::Domain(format!(
            "antiderivative of a function with nonzero average |f_0| = {:.3e}",
            f.coeff(0).norm()
        )));
    }
    let mut out = FourierFunction::zeros(f.max_mode());
    let n = f.max_mode() as i64;
    for j in -n..=n {
        if j != 0 {
            out.set_coeff(j, f.coeff(j) / Complex64::new(0.0, j as f64));
        }
    }
    Ok(out)
}

/// A real-valued, zero-average shear profile `U(y)` together with the Sobolev
/// index used when its regularity enters a bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearProfile {
    base: FourierFunction,
    sobolev_index: f64,
}

impl ShearProfile {
    /// Validates and wraps a profile: real-valued, zero-average, not
    /// identically zero, `s >= 0`.
    pub fn new(base: FourierFunction, sobolev_index: f64) -> Result<Self> {
        if !base.is_real_valued(STRUCTURE_TOL) {
            return Err(Error::Domain("shear profile must be real-valued".into()));
        }
        if !base.has_zero_average(STRUCTURE_TOL) {
            return Err(Error::Domain("shear profile must have zero average".into()));
        }
        if !(sobolev_index >= 0.0) {
            return Err(Error::Domain("sobolev index must be >= 0".into()));
        }
        if l2_norm(&base) == 0.0 {
            return Err(Error::Domain("shear profile must be nonzero".into()));
        }
        Ok(Self {
            base,
            sobolev_index,
        })
    }

    /// Named presets:
    ///
    /// * `kolmogorov`: `U = sin y`,
    /// * `kolmogorov-<m>`: `U = sin(m y)`,
    /// * `sin1cos5`: `U = sin y + cos 5y`.
    pub fn preset(name: &str) -> Result<Self> {
        let half_i = Complex64::new(0.0, 0.5);
        match name {
            "kolmogorov" => {
                let f = FourierFunction::from_modes(1, &[(1, -half_i), (-1, half_i)])?;
                Self::new(f, 2.0)
            }
            "sin1cos5" => {
                let half = Complex64::new(0.5, 0.0);
                let f = FourierFunction::from_modes(
                    5,
                    &[(1, -half_i), (-1, half_i), (5, half), (-5, half)],
                )?;
                Self::new(f, 2.0)
            }
            _ => {
                if let Some(ms) = name.strip_prefix("kolmogorov-") {
                    let m: usize = ms.parse().map_err(|_| {
                        Error::Domain(format!("cannot parse preset parameter in '{}'", name))
                    })?;
                    if m == 0 {
                        return Err(Error::Domain("kolmogorov-m needs m >= 1".into()));
                    }
                    let f = FourierFunction::from_modes(
                        m,
                        &[(m as i64, -half_i), (-(m as i64), half_i)],
                    )?;
                    Self::new(f, 2.0)
                } else {
                    Err(Error::Domain(format!("unknown profile preset '{}'", name)))
                }
            }
        }
    }

    /// The underlying Fourier series.
    pub fn function(&self) -> &FourierFunction {
        &self.base
    }

    /// Sobolev index attached at construction.
    pub fn sobolev_index(&self) -> f64 {
        self.sobolev_index
    }

    /// Largest mode with a nonzero coefficient.
    pub fn band(&self) -> usize {
        let n = self.base.max_mode() as i64;
        (1..=n)
            .rev()
            .find(|&j| self.base.coeff(j).norm() > 0.0 || self.base.coeff(-j).norm() > 0.0)
            .unwrap_or(0) as usize
    }

    /// Grid-max estimate of `||U||_{C^2} = sup|U| + sup|U'| + sup|U''|`.
    pub fn c2_norm(&self) -> f64 {
        let pts = (16 * self.base.max_mode().max(4)).max(1024);
        let sup = |f: &FourierFunction| {
            (0..pts)
                .map(|k| f.evaluate(2.0 * std::f64::consts::PI * k as f64 / pts as f64).norm())
                .fold(0.0_f64, f64::max)
        };
        sup(&self.base) + sup(&self.base.derivative(1)) + sup(&self.base.derivative(2))
    }

    /// Sobolev norm of the profile at index `s`.
    pub fn h_norm(&self, s: f64) -> f64 {
        sobolev_norm(&self.base, s)
    }
}

/// Long-wave instability margin `||dy^{-1} U|| - nu`; positive means the flow
/// is unstable to the long-wave mode in the small-`eps` limit.
pub fn instability_margin(u: &ShearProfile, nu: f64) -> f64 {
    assert!(nu > 0.0, "viscosity must be positive");
    let anti = partial_y_inverse(u.function()).expect("profiles have zero average");
    l2_norm(&anti) - nu
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Quadrature oracle for the normalized inner product:
    /// `(1/P) sum_k f(y_k) conj(g(y_k))`, `y_k = 2pi k/P`, exact for
    /// band-limited inputs once `P >= N_f + N_g + 1`.
    fn quadrature_inner(f: &FourierFunction, g: &FourierFunction, pts: usize) -> Complex64 {
        (0..pts)
            .map(|k| {
                let y = 2.0 * std::f64::consts::PI * k as f64 / pts as f64;
                f.evaluate(y) * g.evaluate(y).conj()
            })
            .sum::<Complex64>()
            / pts as f64
    }

    fn sin_profile() -> ShearProfile {
        ShearProfile::preset("kolmogorov").unwrap()
    }

    #[test]
    fn inner_product_matches_quadrature_for_sine() {
        let u = sin_profile();
        let exact = inner_product(u.function(), u.function());
        let quad = quadrature_inner(u.function(), u.function(), 512);
        assert_abs_diff_eq!(exact.re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(exact.im, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(exact.re, quad.re, epsilon = 1e-13);
        assert_abs_diff_eq!(exact.im, quad.im, epsilon = 1e-13);
    }

    #[test]
    fn distinct_modes_are_orthogonal() {
        let e1 = FourierFunction::unit_mode(1, 3);
        let e2 = FourierFunction::unit_mode(2, 3);
        assert_eq!(inner_product(&e1, &e2), Complex64::ZERO);
        let one = FourierFunction::constant(Complex64::ONE, 2);
        assert_eq!(inner_product(&one, &one), Complex64::ONE);
    }

    #[test]
    fn inner_product_is_conjugate_symmetric() {
        let f = FourierFunction::from_modes(
            2,
            &[(0, Complex64::new(1.0, 2.0)), (2, Complex64::new(-0.5, 0.25))],
        )
        .unwrap();
        let g = FourierFunction::from_modes(
            2,
            &[(-1, Complex64::new(0.3, -0.7)), (2, Complex64::new(0.1, 0.9))],
        )
        .unwrap();
        let fg = inner_product(&f, &g);
        let gf = inner_product(&g, &f);
        assert_abs_diff_eq!(fg.re, gf.re, epsilon = 1e-15);
        assert_abs_diff_eq!(fg.im, -gf.im, epsilon = 1e-15);
    }

    #[test]
    fn sobolev_norm_examples() {
        let u = sin_profile();
        assert_abs_diff_eq!(sobolev_norm(u.function(), 0.0), 0.5_f64.sqrt(), epsilon = 1e-15);
        assert_eq!(sobolev_norm(&FourierFunction::zeros(3), 2.0), 0.0);
        let e2 = FourierFunction::unit_mode(2, 2);
        assert_abs_diff_eq!(sobolev_norm(&e2, 1.0), 5.0_f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn projections_split_constant_plus_sine() {
        let three = FourierFunction::constant(Complex64::new(3.0, 0.0), 1);
        let f = three.add(sin_profile().function());
        let p0 = project(&f, Projection::Zero);
        let pn = project(&f, Projection::Nonzero);
        assert_eq!(p0.coeff(0), Complex64::new(3.0, 0.0));
        assert_eq!(p0.coeff(1), Complex64::ZERO);
        assert_eq!(pn.coeff(0), Complex64::ZERO);
        assert_eq!(pn.coeff(1), sin_profile().function().coeff(1));
        let p1 = project(&f, Projection::Pair(1));
        assert_eq!(p1.coeff(1), f.coeff(1));
        assert_eq!(p1.coeff(-1), f.coeff(-1));
        assert_eq!(p1.coeff(0), Complex64::ZERO);
    }

    #[test]
    fn antiderivative_of_sine_is_minus_cosine() {
        let u = sin_profile();
        let anti = partial_y_inverse(u.function()).unwrap();
        let minus_half = Complex64::new(-0.5, 0.0);
        assert_abs_diff_eq!((anti.coeff(1) - minus_half).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((anti.coeff(-1) - minus_half).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn antiderivative_divides_by_ij() {
        let f = FourierFunction::unit_mode(3, 3);
        let anti = partial_y_inverse(&f).unwrap();
        let expect = Complex64::ONE / Complex64::new(0.0, 3.0);
        assert_abs_diff_eq!((anti.coeff(3) - expect).norm(), 0.0, epsilon = 1e-16);
    }

    #[test]
    fn antiderivative_rejects_nonzero_average() {
        let f = FourierFunction::constant(Complex64::ONE, 1);
        assert!(matches!(partial_y_inverse(&f), Err(Error::Domain(_))));
    }

    #[test]
    fn margin_values_for_kolmogorov() {
        let u = sin_profile();
        assert_abs_diff_eq!(instability_margin(&u, 0.4), 0.5_f64.sqrt() - 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(instability_margin(&u, 0.75), 0.5_f64.sqrt() - 0.75, epsilon = 1e-12);
        assert!(instability_margin(&u, 0.4) > 0.0);
        assert!(instability_margin(&u, 0.75) < 0.0);
    }

    #[test]
    fn presets_have_expected_values() {
        let u = sin_profile();
        assert_eq!(u.band(), 1);
        let y = std::f64::consts::FRAC_PI_2;
        assert_abs_diff_eq!(u.function().evaluate(y).re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(u.function().evaluate(y).im, 0.0, epsilon = 1e-14);

        let w = ShearProfile::preset("sin1cos5").unwrap();
        assert_eq!(w.band(), 5);
        for &y in &[0.3_f64, 1.9, 4.4] {
            let expect = y.sin() + (5.0 * y).cos();
            assert_abs_diff_eq!(w.function().evaluate(y).re, expect, epsilon = 1e-12);
        }

        let k3 = ShearProfile::preset("kolmogorov-3").unwrap();
        assert_eq!(k3.band(), 3);
        assert_abs_diff_eq!(k3.function().evaluate(0.7).re, (2.1_f64).sin(), epsilon = 1e-13);

        assert!(ShearProfile::preset("nope").is_err());
        assert!(ShearProfile::preset("kolmogorov-0").is_err());
    }

    #[test]
    fn c2_norm_of_sine_is_three() {
        assert_abs_diff_eq!(sin_profile().c2_norm(), 3.0, epsilon = 1e-6);
    }

    #[test]
    fn profile_construction_rejects_bad_inputs() {
        let complex_f =
            FourierFunction::from_modes(1, &[(1, Complex64::new(1.0, 0.0))]).unwrap();
        assert!(ShearProfile::new(complex_f, 2.0).is_err());
        let mean_f = FourierFunction::constant(Complex64::ONE, 1);
        assert!(ShearProfile::new(mean_f, 2.0).is_err());
        assert!(ShearProfile::new(FourierFunction::zeros(1), 2.0).is_err());
    }

    #[test]
    fn structure_flags() {
        let u = sin_profile();
        assert!(u.function().is_real_valued(1e-15));
        assert!(u.function().has_zero_average(1e-15));
        let mut f = FourierFunction::zeros(1);
        f.set_coeff(1, Complex64::new(0.0, 1.0));
        assert!(!f.is_real_valued(1e-15));
    }

    fn coeff_strategy() -> impl Strategy<Value = Complex64> {
        (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| Complex64::new(re, im))
    }

    fn function_strategy(n: usize) -> impl Strategy<Value = FourierFunction> {
        prop::collection::vec(coeff_strategy(), 2 * n + 1)
            .prop_map(move |coeffs| FourierFunction::new(n, coeffs).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn parseval_matches_quadrature(f in function_strategy(6), g in function_strategy(6)) {
            let exact = inner_product(&f, &g);
            let quad = quadrature_inner(&f, &g, 25);
            let scale = 1.0 + exact.norm();
            prop_assert!((exact - quad).norm() <= 1e-12 * scale);
        }

        #[test]
        fn projection_algebra(f in function_strategy(5)) {
            let p0 = project(&f, Projection::Zero);
            let pn = project(&f, Projection::Nonzero);
            prop_assert_eq!(project(&p0, Projection::Zero), p0.clone());
            prop_assert_eq!(project(&pn, Projection::Nonzero), pn.clone());
            prop_assert_eq!(project(&pn, Projection::Zero), FourierFunction::zeros(5));
            let mut sum = p0;
            for j in 1..=5 {
                sum = sum.add(&project(&f, Projection::Pair(j)));
            }
            let diff = sum.sub(&f);
            prop_assert!(l2_norm(&diff) == 0.0);
        }

        #[test]
        fn antiderivative_inverts_derivative(f in function_strategy(5)) {
            let g = project(&f, Projection::Nonzero);
            let back = partial_y_inverse(&g).unwrap().derivative(1);
            for j in -5i64..=5 {
                let err = (back.coeff(j) - g.coeff(j)).norm();
                prop_assert!(err <= 1e-15 * (1.0 + g.coeff(j).norm()));
            }
        }

        #[test]
        fn sobolev_norm_symmetries(f in function_strategy(5), c in 0.0..6.28f64, s in 0.0..3.0f64) {
            let n = 5i64;
            let reflected = FourierFunction::new(
                5,
                (-n..=n).map(|j| f.coeff(-j)).collect(),
            ).unwrap();
            let translated = FourierFunction::new(
                5,
                (-n..=n).map(|j| f.coeff(j) * Complex64::new(0.0, j as f64 * c).exp()).collect(),
            ).unwrap();
            let base = sobolev_norm(&f, s);
            prop_assert!((sobolev_norm(&reflected, s) - base).abs() <= 1e-12 * (1.0 + base));
            prop_assert!((sobolev_norm(&translated, s) - base).abs() <= 1e-12 * (1.0 + base));
        }

        #[test]
        fn sobolev_norm_monotone_in_s(f in function_strategy(5)) {
            let n0 = sobolev_norm(&f, 0.0);
            let n1 = sobolev_norm(&f, 1.0);
            let n2 = sobolev_norm(&f, 2.0);
            prop_assert!(n0 <= n1 * (1.0 + 1e-15) && n1 <= n2 * (1.0 + 1e-15));
            prop_assert!((n0 - l2_norm(&f)).abs() <= 1e-14 * (1.0 + n0));
        }
    }
}
