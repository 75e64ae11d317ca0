//! Periodic pseudo-spectral calculus on uniform grids `τ_j = 2πj/n`.
//!
//! Coefficient convention: `h(τ) = Σ_k ĥ_k e^{ikτ}` with
//! `ĥ_k = (1/n) Σ_j h(τ_j) e^{-ikτ_j}`, stored in FFT order (index `j`
//! holds mode `j` for `j ≤ n/2` and mode `j - n` above). With this
//! normalization Parseval reads `∫|h|² = 2π Σ|ĥ_k|²`. The Nyquist mode is
//! real and represents `ĥ_{n/2} cos(nτ/2)`; it is dropped by odd-order
//! derivatives and by the Hilbert transform.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

type PlanCache = Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>;

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<PlanCache> = OnceLock::new();
    let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry((n, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

/// Signed wavenumber of FFT index `j` on an `n`-point grid.
#[inline]
pub fn wavenumber(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Grid node `τ_j = 2πj/n`.
#[inline]
pub fn node(j: usize, n: usize) -> f64 {
    2.0 * PI * j as f64 / n as f64
}

fn check_grid(n: usize) -> Result<()> {
    if n < 16 || !n.is_multiple_of(2) {
        Err(Error::InvalidGrid(n))
    } else {
        Ok(())
    }
}

/// A real 2π-periodic function sampled on a uniform grid.
#[derive(Debug, Clone)]
pub struct SpectralFunction {
    values: Vec<f64>,
    coeffs: OnceLock<Vec<Complex64>>,
}

impl PartialEq for SpectralFunction {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values
    }
}

impl SpectralFunction {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        check_grid(values.len())?;
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self::from_values_unchecked(values))
    }

    pub(crate) fn from_values_unchecked(values: Vec<f64>) -> Self {
        Self {
            values,
            coeffs: OnceLock::new(),
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_values((0..n).map(|j| f(node(j, n))).collect())
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::from_values(vec![c; n])
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::constant(n, 0.0)
    }

    /// `c0 + Σ (a_k cos kτ + b_k sin kτ)` sampled on `n` points.
    pub fn from_modes(n: usize, c0: f64, modes: &[(usize, f64, f64)]) -> Result<Self> {
        Self::from_fn(n, |t| {
            c0 + modes
                .iter()
                .map(|&(k, a, b)| a * (k as f64 * t).cos() + b * (k as f64 * t).sin())
                .sum::<f64>()
        })
    }

    /// Builds samples from FFT-ordered coefficients. Only the
    /// conjugate-symmetric part is kept, so the result is always real.
    pub fn from_coeffs(coeffs: &[Complex64]) -> Result<Self> {
        let n = coeffs.len();
        check_grid(n)?;
        let mut buf: Vec<Complex64> = (0..n)
            .map(|j| {
                let mirror = coeffs[(n - j) % n].conj();
                0.5 * (coeffs[j] + mirror)
            })
            .collect();
        plan(n, true).process(&mut buf);
        Self::from_values(buf.iter().map(|c| c.re).collect())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// FFT-ordered coefficients, computed once and cached.
    pub fn coeffs(&self) -> &[Complex64] {
        self.coeffs.get_or_init(|| {
            let n = self.n();
            let mut buf: Vec<Complex64> = self
                .values
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect();
            plan(n, false).process(&mut buf);
            let scale = 1.0 / n as f64;
            buf.iter_mut().for_each(|c| *c *= scale);
            buf
        })
    }

    /// Coefficient of mode `k`, zero outside `|k| ≤ n/2`.
    pub fn coeff(&self, k: i64) -> Complex64 {
        let n = self.n() as i64;
        if k.abs() > n / 2 {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs()[k.rem_euclid(n) as usize]
    }

    fn with_multiplier(&self, m: impl Fn(i64, bool) -> Complex64) -> Self {
        let n = self.n();
        let c: Vec<Complex64> = self
            .coeffs()
            .iter()
            .enumerate()
            .map(|(j, &c)| c * m(wavenumber(j, n), j == n / 2))
            .collect();
        Self::from_coeffs(&c).expect("multiplier preserves grid and finiteness")
    }

    /// Spectral derivative of the given order (1 ≤ order ≤ 4).
    pub fn differentiate(&self, order: u32) -> Result<Self> {
        if !(1..=4).contains(&order) {
            return Err(Error::Config(format!(
                "derivative order {order} outside 1..=4"
            )));
        }
        Ok(self.with_multiplier(|k, nyquist| {
            if nyquist && order % 2 == 1 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k as f64).powu(order)
            }
        }))
    }

    /// First derivative; shorthand used throughout the operator code.
    pub fn d(&self) -> Self {
        self.differentiate(1).expect("order 1 is valid")
    }

    /// Periodic Hilbert transform, symbol `-i sign(k)`.
    pub fn hilbert(&self) -> Self {
        self.with_multiplier(|k, nyquist| {
            if nyquist || k == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, -(k.signum() as f64))
            }
        })
    }

    /// Generic Fourier multiplier with a real symbol.
    pub fn fourier_multiplier(&self, symbol: impl Fn(i64) -> f64) -> Self {
        self.with_multiplier(|k, _| Complex64::new(symbol(k), 0.0))
    }

    /// Discrete Bessel-potential norm `(2π Σ (1+k²)^s |ĥ_k|²)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let n = self.n();
        let sum: f64 = self
            .coeffs()
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let k = wavenumber(j, n) as f64;
                (1.0 + k * k).powf(s) * c.norm_sqr()
            })
            .sum();
        (2.0 * PI * sum).sqrt()
    }

    /// Trigonometric interpolation onto `m` points.
    pub fn resample(&self, m: usize) -> Result<Self> {
        check_grid(m)?;
        let n = self.n();
        if m == n {
            return Ok(self.clone());
        }
        let src = self.coeffs();
        let mut dst = vec![Complex64::new(0.0, 0.0); m];
        let half = n.min(m) / 2;
        for k in 0..half {
            dst[k] = src[k];
            if k > 0 {
                dst[m - k] = src[n - k];
            }
        }
        if m > n {
            let nyq = src[n / 2];
            dst[n / 2] = 0.5 * nyq;
            dst[m - n / 2] = 0.5 * nyq;
        } else {
            dst[m / 2] = Complex64::new(2.0 * src[m / 2].re, 0.0);
        }
        Self::from_coeffs(&dst)
    }

    /// Trapezoidal mean `⟨h⟩`.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.n() as f64
    }

    /// Trapezoidal integral over one period.
    pub fn integral(&self) -> f64 {
        2.0 * PI * self.mean()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Quadrature `L₂(𝕋)` inner product.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.n(), other.n(), "grid mismatch");
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        2.0 * PI * s / self.n() as f64
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Evaluates the trigonometric interpolant at an arbitrary angle.
    pub fn evaluate_at(&self, tau: f64) -> f64 {
        self.eval_series(tau, 0)
    }

    /// Derivative of the trigonometric interpolant at an arbitrary angle.
    pub fn derivative_at(&self, tau: f64) -> f64 {
        self.eval_series(tau, 1)
    }

    fn eval_series(&self, tau: f64, order: u32) -> f64 {
        let n = self.n();
        let c = self.coeffs();
        let mut acc = if order == 0 { c[0].re } else { 0.0 };
        for (k, ck) in c.iter().enumerate().take(n / 2).skip(1) {
            let e = Complex64::from_polar(1.0, k as f64 * tau);
            let dk = Complex64::new(0.0, k as f64).powu(order);
            acc += 2.0 * (ck * e * dk).re;
        }
        let kn = (n / 2) as f64;
        let nyq = c[n / 2].re;
        acc += match order {
            0 => nyq * (kn * tau).cos(),
            _ => -nyq * kn * (kn * tau).sin(),
        };
        acc
    }

    /// Zeroes every mode with `|k| > kmax`.
    pub fn project_band(&self, kmax: usize) -> Self {
        if kmax >= self.n() / 2 {
            return self.clone();
        }
        self.with_multiplier(|k, _| {
            if k.unsigned_abs() as usize > kmax {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_values_unchecked(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn add_constant(&self, a: f64) -> Self {
        self.map(|v| v + a)
    }

    /// Pointwise combination of several functions on a common grid.
    pub fn combine(inputs: &[&Self], f: impl Fn(&[f64]) -> f64) -> Self {
        let n = inputs[0].n();
        assert!(inputs.iter().all(|h| h.n() == n), "grid mismatch");
        let mut args = vec![0.0; inputs.len()];
        let values = (0..n)
            .map(|j| {
                for (a, h) in args.iter_mut().zip(inputs) {
                    *a = h.values[j];
                }
                f(&args)
            })
            .collect();
        Self::from_values_unchecked(values)
    }

    /// Like [`combine`](Self::combine) but evaluated on a grid refined by
    /// the 3/2 rule and truncated back, which removes the quadratic aliasing
    /// of pointwise products.
    pub fn combine_dealiased(inputs: &[&Self], f: impl Fn(&[f64]) -> f64) -> Self {
        let n = inputs[0].n();
        let m = padded_size(n);
        let padded: Vec<Self> = inputs
            .iter()
            .map(|h| h.resample(m).expect("padded grid is valid"))
            .collect();
        let refs: Vec<&Self> = padded.iter().collect();
        Self::combine(&refs, f)
            .resample(n)
            .expect("original grid is valid")
    }

    pub fn mul_dealiased(&self, other: &Self) -> Self {
        Self::combine_dealiased(&[self, other], |a| a[0] * a[1])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Smallest even grid size of at least `3n/2`.
pub fn padded_size(n: usize) -> usize {
    let m = (3 * n).div_ceil(2);
    m + m % 2
}

/// Seeded random band-limited function with modes `1..=max_mode` and an
/// optional mean term; coefficients uniform in `[-1, 1]`.
pub fn random_band_limited(
    n: usize,
    max_mode: usize,
    with_mean: bool,
    seed: u64,
) -> Result<SpectralFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c0 = if with_mean {
        rng.random_range(-1.0..1.0)
    } else {
        0.0
    };
    let modes: Vec<(usize, f64, f64)> = (1..=max_mode)
        .map(|k| (k, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    SpectralFunction::from_modes(n, c0, &modes)
}

macro_rules! pointwise_op {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&SpectralFunction> for &SpectralFunction {
            type Output = SpectralFunction;
            fn $method(self, rhs: &SpectralFunction) -> SpectralFunction {
                assert_eq!(self.n(), rhs.n(), "grid mismatch");
                SpectralFunction::from_values_unchecked(
                    self.values.iter().zip(&rhs.values).map(|(a, b)| a $op b).collect(),
                )
            }
        }
    };
}

pointwise_op!(Add, add, +);
pointwise_op!(Sub, sub, -);
pointwise_op!(Mul, mul, *);

impl Neg for &SpectralFunction {
    type Output = SpectralFunction;
    fn neg(self) -> SpectralFunction {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_diff(a: &SpectralFunction, b: &SpectralFunction) -> f64 {
        (a - b).max_abs()
    }

    #[test]
    fn rejects_bad_grids() {
        assert_eq!(SpectralFunction::zeros(15), Err(Error::InvalidGrid(15)));
        assert_eq!(SpectralFunction::zeros(8), Err(Error::InvalidGrid(8)));
        let mut v = vec![0.0; 16];
        v[3] = f64::NAN;
        assert_eq!(
            SpectralFunction::from_values(v),
            Err(Error::NonFinite { index: 3 })
        );
    }

    #[test]
    fn derivative_of_pure_modes() {
        let n = 32;
        let c = SpectralFunction::from_fn(n, f64::cos).unwrap();
        let s = SpectralFunction::from_fn(n, |t| -t.sin()).unwrap();
        assert!(max_diff(&c.differentiate(1).unwrap(), &s) < 1e-14);

        let one = SpectralFunction::constant(n, 1.0).unwrap();
        assert!(one.differentiate(1).unwrap().max_abs() < 1e-15);

        let c2 = SpectralFunction::from_fn(n, |t| (2.0 * t).cos()).unwrap();
        let expect = SpectralFunction::from_fn(n, |t| 8.0 * (2.0 * t).sin()).unwrap();
        let e3 = max_diff(&c2.differentiate(3).unwrap(), &expect);
        assert!(e3 < 1e-11, "{e3}");

        assert!(c.differentiate(5).is_err());
        assert!(c.differentiate(0).is_err());
    }

    #[test]
    fn odd_derivative_drops_nyquist() {
        let n = 16;
        let alt = SpectralFunction::from_fn(n, |t| (8.0 * t).cos()).unwrap();
        assert!(alt.d().max_abs() < 1e-14);
        let second = alt.differentiate(2).unwrap();
        assert!((second.values()[0] + 64.0).abs() < 1e-10);
    }

    #[test]
    fn hilbert_of_pure_modes() {
        let n = 32;
        for k in 1..5 {
            let kf = k as f64;
            let c = SpectralFunction::from_fn(n, |t| (kf * t).cos()).unwrap();
            let s = SpectralFunction::from_fn(n, |t| (kf * t).sin()).unwrap();
            assert!(max_diff(&c.hilbert(), &s) < 1e-14);
        }
        let s = SpectralFunction::from_fn(n, f64::sin).unwrap();
        let mc = SpectralFunction::from_fn(n, |t| -t.cos()).unwrap();
        assert!(max_diff(&s.hilbert(), &mc) < 1e-14);
        let c = SpectralFunction::constant(n, 3.5).unwrap();
        assert!(c.hilbert().max_abs() < 1e-15);
    }

    #[test]
    fn sobolev_norm_examples() {
        let n = 32;
        assert_eq!(SpectralFunction::zeros(n).unwrap().sobolev_norm(1.5), 0.0);
        let one = SpectralFunction::constant(n, 1.0).unwrap();
        assert!((one.sobolev_norm(0.0) - (2.0 * PI).sqrt()).abs() < 1e-14);
        // ‖cos‖²_{H¹} = ‖cos‖₂² + ‖sin‖₂² = 2π, checked against quadrature.
        let c = SpectralFunction::from_fn(n, f64::cos).unwrap();
        let quad = c.inner(&c) + c.d().inner(&c.d());
        assert!((quad - 2.0 * PI).abs() < 1e-13);
        assert!((c.sobolev_norm(1.0) - quad.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn resample_examples() {
        let c3 = SpectralFunction::from_fn(64, |t| (3.0 * t).cos()).unwrap();
        let up = c3.resample(128).unwrap();
        let exact = SpectralFunction::from_fn(128, |t| (3.0 * t).cos()).unwrap();
        assert!(max_diff(&up, &exact) <= 1e-13);

        let h = random_band_limited(32, 8, true, 11).unwrap();
        assert_eq!(h.resample(32).unwrap().values(), h.values());

        let fine = h.resample(256).unwrap();
        let oracle = random_band_limited(256, 8, true, 11).unwrap();
        assert!(max_diff(&fine, &oracle) < 1e-12);
        let back = fine.resample(32).unwrap();
        assert!(max_diff(&back, &h) < 1e-12);
    }

    #[test]
    fn mean_examples() {
        let n = 32;
        assert_eq!(SpectralFunction::constant(n, 1.0).unwrap().mean(), 1.0);
        for k in 1..6 {
            let kf = k as f64;
            let c = SpectralFunction::from_fn(n, |t| (kf * t).cos()).unwrap();
            assert!(c.mean().abs() <= 1e-15);
        }
        let h = SpectralFunction::from_fn(n, |t| 2.0 + t.cos()).unwrap();
        assert!((h.mean() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn evaluate_off_grid_matches_formula() {
        let h = SpectralFunction::from_modes(64, 1.0, &[(2, 0.3, -0.1), (5, 0.0, 0.2)]).unwrap();
        for &t in &[0.1f64, 1.234, 4.0] {
            let exact = 1.0 + 0.3 * (2.0 * t).cos() - 0.1 * (2.0 * t).sin() + 0.2 * (5.0 * t).sin();
            let dexact = -0.6 * (2.0 * t).sin() - 0.2 * (2.0 * t).cos() + (5.0 * t).cos();
            assert!((h.evaluate_at(t) - exact).abs() < 1e-13);
            assert!((h.derivative_at(t) - dexact).abs() < 1e-12);
        }
    }

    #[test]
    fn dealiased_product_is_exact_for_resolved_products() {
        let n = 16;
        let a = SpectralFunction::from_fn(n, |t| (5.0 * t).cos()).unwrap();
        // cos²(5τ) = (1 + cos 10τ)/2; mode 10 is unresolved on 16 points.
        let p = a.mul_dealiased(&a);
        let expect = SpectralFunction::constant(n, 0.5).unwrap();
        assert!(max_diff(&p, &expect) < 1e-14);
        // Plain pointwise product aliases mode 10 onto mode 6.
        assert!(max_diff(&(&a * &a), &expect) > 0.1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn roundtrip_and_symmetry(seed in 0u64..10_000, modes in 1usize..15) {
            let h = random_band_limited(32, modes, true, seed).unwrap();
            let c = h.coeffs();
            for j in 1..32 {
                prop_assert!((c[j] - c[32 - j].conj()).norm() < 1e-14);
            }
            let back = SpectralFunction::from_coeffs(c).unwrap();
            prop_assert!(max_diff(&back, &h) <= 10.0 * f64::EPSILON * h.max_abs());
        }

        #[test]
        fn hilbert_squared_is_minus_identity_on_mean_zero(seed in 0u64..10_000) {
            let h = random_band_limited(64, 16, true, seed).unwrap();
            let hh = h.hilbert().hilbert();
            let expect = h.add_constant(-h.mean()).scale(-1.0);
            prop_assert!(max_diff(&hh, &expect) < 1e-12);
        }

        #[test]
        fn derivative_commutes_with_hilbert(seed in 0u64..10_000) {
            let h = random_band_limited(64, 16, false, seed).unwrap();
            prop_assert!(max_diff(&h.d().hilbert(), &h.hilbert().d()) < 1e-11);
        }

        #[test]
        fn sobolev_zero_is_quadrature_l2(seed in 0u64..10_000) {
            let h = random_band_limited(64, 20, true, seed).unwrap();
            prop_assert!((h.sobolev_norm(0.0) - h.l2_norm()).abs() < 1e-12);
        }
    }
}
