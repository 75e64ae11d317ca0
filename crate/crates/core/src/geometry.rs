//! Star-shaped contour geometry: `Ξ_ρ(τ) = ρ(τ) n(τ)` with
//! `n = (cos τ, sin τ)` and `t = (-sin τ, cos τ)`.
//!
//! Derived quantities follow from `Ξ' = ρ t + ρ' n`, `ω = |Ξ'|`, and
//! `Ξ'' = 2ρ' t + (ρ'' - ρ) n`. The curvature splits into the quasilinear
//! piece `-ρ h''/ω³` (evaluated at `h = ρ`) and the lower-order piece
//! `(ρ² + 2ρ'²)/ω³`.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::spectral::{node, SpectralFunction};

pub type Vec2 = [f64; 2];

#[inline]
pub(crate) fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `z^⊤ = (y, -x)`.
#[inline]
pub(crate) fn perp(a: Vec2) -> Vec2 {
    [a[1], -a[0]]
}

/// `a × b = a · b^⊤`.
#[inline]
pub(crate) fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// A positive profile with its derived geometry. Construction validates the
/// profile and recomputes every derived field.
#[derive(Debug, Clone)]
pub struct RadialContour {
    rho: SpectralFunction,
    drho: SpectralFunction,
    d2rho: SpectralFunction,
    omega: SpectralFunction,
    position: Vec<Vec2>,
    xi_prime: Vec<Vec2>,
    xi_second: Vec<Vec2>,
    tangent: Vec<Vec2>,
    normal: Vec<Vec2>,
    fingerprint: u64,
}

impl RadialContour {
    pub fn new(rho: SpectralFunction) -> Result<Self> {
        if let Some((index, &value)) = rho.values().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::NonPositiveProfile { index, value });
        }
        let n = rho.n();
        let drho = rho.d();
        let d2rho = rho.differentiate(2)?;
        let omega = SpectralFunction::combine(&[&rho, &drho], |a| a[0].hypot(a[1]));

        let mut position = Vec::with_capacity(n);
        let mut xi_prime = Vec::with_capacity(n);
        let mut xi_second = Vec::with_capacity(n);
        let mut tangent = Vec::with_capacity(n);
        let mut normal = Vec::with_capacity(n);
        for j in 0..n {
            let (s, c) = node(j, n).sin_cos();
            let nv = [c, s];
            let tv = [-s, c];
            let (r, dr, ddr, w) = (
                rho.values()[j],
                drho.values()[j],
                d2rho.values()[j],
                omega.values()[j],
            );
            let xp = [r * tv[0] + dr * nv[0], r * tv[1] + dr * nv[1]];
            let xpp = [
                2.0 * dr * tv[0] + (ddr - r) * nv[0],
                2.0 * dr * tv[1] + (ddr - r) * nv[1],
            ];
            position.push([r * nv[0], r * nv[1]]);
            xi_prime.push(xp);
            xi_second.push(xpp);
            tangent.push([xp[0] / w, xp[1] / w]);
            let np = perp(xp);
            normal.push([np[0] / w, np[1] / w]);
        }
        let fingerprint = fingerprint(rho.values());
        Ok(Self {
            rho,
            drho,
            d2rho,
            omega,
            position,
            xi_prime,
            xi_second,
            tangent,
            normal,
            fingerprint,
        })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::new(SpectralFunction::from_values(values)?)
    }

    pub fn circle(n: usize, radius: f64) -> Result<Self> {
        Self::new(SpectralFunction::constant(n, radius)?)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.rho.n()
    }
    pub fn rho(&self) -> &SpectralFunction {
        &self.rho
    }
    pub fn drho(&self) -> &SpectralFunction {
        &self.drho
    }
    pub fn d2rho(&self) -> &SpectralFunction {
        &self.d2rho
    }
    pub fn omega(&self) -> &SpectralFunction {
        &self.omega
    }
    pub fn position(&self) -> &[Vec2] {
        &self.position
    }
    /// `Ξ'` at the nodes.
    pub fn xi_prime(&self) -> &[Vec2] {
        &self.xi_prime
    }
    /// `Ξ''` at the nodes.
    pub fn xi_second(&self) -> &[Vec2] {
        &self.xi_second
    }
    pub fn tangent(&self) -> &[Vec2] {
        &self.tangent
    }
    /// Outward unit normal `Ξ'^⊤/ω`.
    pub fn normal(&self) -> &[Vec2] {
        &self.normal
    }
    /// FNV-1a hash of the profile samples.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn check_grid(&self, h: &SpectralFunction) -> Result<()> {
        if h.n() != self.n() {
            return Err(Error::GridMismatch {
                expected: self.n(),
                found: h.n(),
            });
        }
        Ok(())
    }

    /// Returns `(κ(ρ)[h], f(ρ))`.
    pub fn curvature_split(
        &self,
        h: &SpectralFunction,
    ) -> Result<(SpectralFunction, SpectralFunction)> {
        self.curvature_split_with(h, false)
    }

    pub fn curvature_split_with(
        &self,
        h: &SpectralFunction,
        dealias: bool,
    ) -> Result<(SpectralFunction, SpectralFunction)> {
        self.check_grid(h)?;
        let h2 = h.differentiate(2)?;
        let kappa = |a: &[f64]| -a[0] * a[2] / a[0].hypot(a[1]).powi(3);
        let f = |a: &[f64]| (a[0] * a[0] + 2.0 * a[1] * a[1]) / a[0].hypot(a[1]).powi(3);
        let inputs = [&self.rho, &self.drho, &h2];
        Ok(if dealias {
            (
                SpectralFunction::combine_dealiased(&inputs, kappa),
                SpectralFunction::combine_dealiased(&inputs[..2], f),
            )
        } else {
            (
                SpectralFunction::combine(&inputs, kappa),
                SpectralFunction::combine(&inputs[..2], f),
            )
        })
    }

    /// Full curvature of `Γ_ρ` at the nodes.
    pub fn curvature(&self) -> SpectralFunction {
        self.curvature_with(false)
    }

    pub fn curvature_with(&self, dealias: bool) -> SpectralFunction {
        let (k, f) = self
            .curvature_split_with(&self.rho, dealias)
            .expect("profile is on its own grid");
        &k + &f
    }

    /// The mean-free lower-order map `λ(ρ)[h]`.
    pub fn lambda_op(&self, h: &SpectralFunction) -> Result<SpectralFunction> {
        self.lambda_op_with(h, false)
    }

    pub fn lambda_op_with(&self, h: &SpectralFunction, dealias: bool) -> Result<SpectralFunction> {
        self.check_grid(h)?;
        let h1 = h.d();
        let h2 = h.differentiate(2)?;
        let expr = |a: &[f64]| {
            let (r, dr, h1, h2) = (a[0], a[1], a[2], a[3]);
            let w2 = r * r + dr * dr;
            let num =
                r * r * dr * h2 - r.powi(3) * h1 - 4.0 * r * dr * dr * h1 - 2.0 * dr.powi(3) * h2;
            num / (w2 * w2 * w2.sqrt())
        };
        let inputs = [&self.rho, &self.drho, &h1, &h2];
        let raw = if dealias {
            SpectralFunction::combine_dealiased(&inputs, expr)
        } else {
            SpectralFunction::combine(&inputs, expr)
        };
        Ok(raw.add_constant(-raw.mean()))
    }

    /// Enclosed area `½∫ρ² dτ`.
    pub fn area(&self) -> f64 {
        0.5 * self.rho.map(|r| r * r).integral()
    }

    /// First moment `∫_Ω z dz = ⅓(∫ρ³ cos τ dτ, ∫ρ³ sin τ dτ)`.
    pub fn centroid_moment(&self) -> Vec2 {
        let n = self.n();
        let (mut mx, mut my) = (0.0, 0.0);
        for (j, &r) in self.rho.values().iter().enumerate() {
            let (s, c) = node(j, n).sin_cos();
            let r3 = r * r * r;
            mx += r3 * c;
            my += r3 * s;
        }
        let w = 2.0 * PI / n as f64 / 3.0;
        [w * mx, w * my]
    }

    /// Perimeter `∫ω dτ`.
    pub fn perimeter(&self) -> f64 {
        self.omega.integral()
    }

    /// Trigonometric interpolant of the profile at an arbitrary angle.
    pub fn rho_at(&self, tau: f64) -> f64 {
        self.rho.evaluate_at(tau)
    }

    /// True when `z` lies strictly inside `Ω_ρ`.
    pub fn contains(&self, z: Vec2) -> bool {
        let r = z[0].hypot(z[1]);
        r < self.rho_at(z[1].atan2(z[0]))
    }

    /// Profile of the same domain seen from the shifted origin `center`.
    ///
    /// For each node solves `|center + r n(τ)| = ρ(arg(center + r n(τ)))`
    /// by Newton's method in `r`, starting from `ρ(τ)`.
    pub fn recentered(&self, center: Vec2) -> Result<Self> {
        const MAX_ITER: usize = 50;
        const TOL: f64 = 1e-13;
        let n = self.n();
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let tau = node(j, n);
            let nv = [tau.cos(), tau.sin()];
            let mut r = self.rho.values()[j];
            let mut converged = false;
            for _ in 0..MAX_ITER {
                let z = [center[0] + r * nv[0], center[1] + r * nv[1]];
                let dist = z[0].hypot(z[1]);
                let phi = z[1].atan2(z[0]);
                let residual = dist - self.rho_at(phi);
                let dphi = cross(z, nv) / (dist * dist);
                let slope = dot(z, nv) / dist - self.rho.derivative_at(phi) * dphi;
                if !(slope.abs() > 0.0) {
                    break;
                }
                let step = residual / slope;
                r -= step;
                if step.abs() <= TOL * r.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            if !converged || !(r > 0.0) {
                return Err(Error::RootFind {
                    tau,
                    reason: format!("ray Newton iteration did not converge (r = {r})"),
                });
            }
            out.push(r);
        }
        Self::from_values(out)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.rho.scale(factor))
    }
}

/// Rescales to area `π` and recenters so the centroid moment vanishes.
pub fn normalize_contour(c: &RadialContour) -> Result<RadialContour> {
    const AREA_TOL: f64 = 1e-10;
    const MOMENT_TOL: f64 = 1e-10;
    let mut cur = c.clone();
    for _ in 0..6 {
        cur = cur.scaled((PI / cur.area()).sqrt())?;
        let m = cur.centroid_moment();
        if m[0].hypot(m[1]) <= 1e-14 {
            break;
        }
        let area = cur.area();
        cur = cur.recentered([m[0] / area, m[1] / area])?;
    }
    let m = cur.centroid_moment();
    if (cur.area() - PI).abs() > AREA_TOL * PI || m[0].hypot(m[1]) > MOMENT_TOL {
        return Err(Error::RootFind {
            tau: f64::NAN,
            reason: "normalization did not reach the constraint manifold".into(),
        });
    }
    Ok(cur)
}

/// `c0 + Σ (a_k cos kτ + b_k sin kτ)`, resolution-independent description of
/// a profile.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierProfile {
    pub constant: f64,
    pub modes: Vec<(usize, f64, f64)>,
}

impl FourierProfile {
    pub fn circle(radius: f64) -> Self {
        Self {
            constant: radius,
            modes: Vec::new(),
        }
    }

    pub fn new(constant: f64, modes: &[(usize, f64, f64)]) -> Self {
        Self {
            constant,
            modes: modes.to_vec(),
        }
    }

    pub fn sample(&self, n: usize) -> Result<SpectralFunction> {
        SpectralFunction::from_modes(n, self.constant, &self.modes)
    }

    pub fn contour(&self, n: usize) -> Result<RadialContour> {
        RadialContour::new(self.sample(n)?)
    }
}

impl fmt::Display for FourierProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.constant)?;
        for &(k, a, b) in &self.modes {
            if a != 0.0 {
                write!(f, "{:+}cos{}t", a, k)?;
            }
            if b != 0.0 {
                write!(f, "{:+}sin{}t", b, k)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn fingerprint(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::random_band_limited;
    use proptest::prelude::*;

    fn perturbed(n: usize, modes: &[(usize, f64, f64)]) -> RadialContour {
        FourierProfile::new(1.0, modes).contour(n).unwrap()
    }

    #[test]
    fn rejects_degenerate_profiles() {
        let mut v = vec![1.0; 32];
        v[5] = 0.0;
        assert!(matches!(
            RadialContour::from_values(v.clone()),
            Err(Error::NonPositiveProfile { index: 5, .. })
        ));
        v[5] = -0.2;
        assert!(RadialContour::from_values(v.clone()).is_err());
        v[5] = f64::INFINITY;
        assert!(matches!(
            RadialContour::from_values(v),
            Err(Error::NonFinite { index: 5 })
        ));
    }

    #[test]
    fn frames_are_orthonormal() {
        let c = perturbed(64, &[(1, 0.2, 0.0), (3, 0.0, 0.1)]);
        for j in 0..c.n() {
            let (t, nv) = (c.tangent()[j], c.normal()[j]);
            assert!((dot(t, t).sqrt() - 1.0).abs() < 1e-12);
            assert!((dot(nv, nv).sqrt() - 1.0).abs() < 1e-12);
            assert!(dot(t, nv).abs() < 1e-12);
            assert!(c.omega().values()[j] >= c.rho().values()[j]);
            // outward: normal points away from the origin
            assert!(dot(nv, c.position()[j]) > 0.0);
        }
    }

    #[test]
    fn circle_curvature() {
        let r = 1.7;
        let c = RadialContour::circle(32, r).unwrap();
        let (k, f) = c.curvature_split(c.rho()).unwrap();
        assert!(k.max_abs() < 1e-15);
        assert!((&f - &SpectralFunction::constant(32, 1.0 / r).unwrap()).max_abs() < 1e-15);
        assert!((&c.curvature() - &f).max_abs() < 1e-15);
    }

    #[test]
    fn kappa_part_of_mode_two_on_unit_circle() {
        let c = RadialContour::circle(32, 1.0).unwrap();
        let h = SpectralFunction::from_fn(32, |t| (2.0 * t).cos()).unwrap();
        let (k, _) = c.curvature_split(&h).unwrap();
        let expect = SpectralFunction::from_fn(32, |t| 4.0 * (2.0 * t).cos()).unwrap();
        assert!((&k - &expect).max_abs() < 1e-13);
        let wrong = SpectralFunction::zeros(64).unwrap();
        assert!(matches!(
            c.curvature_split(&wrong),
            Err(Error::GridMismatch {
                expected: 32,
                found: 64
            })
        ));
    }

    /// Curvature of the parametric curve `(ρ cos τ, ρ sin τ)` with ρ and its
    /// derivatives supplied in closed form.
    fn parametric_curvature(rho: impl Fn(f64) -> (f64, f64, f64), t: f64) -> f64 {
        let (r, dr, ddr) = rho(t);
        let (s, c) = t.sin_cos();
        let (x1, y1) = (dr * c - r * s, dr * s + r * c);
        let (x2, y2) = (
            ddr * c - 2.0 * dr * s - r * c,
            ddr * s + 2.0 * dr * c - r * s,
        );
        (x1 * y2 - y1 * x2) / (x1 * x1 + y1 * y1).powf(1.5)
    }

    #[test]
    fn curvature_matches_parametric_oracle() {
        let eps = 0.1;
        let rho = |t: f64| (1.0 + eps * t.cos(), -eps * t.sin(), -eps * t.cos());
        let c = perturbed(128, &[(1, eps, 0.0)]);
        let k = c.curvature();
        let err = (0..128)
            .map(|j| (k.values()[j] - parametric_curvature(rho, node(j, 128))).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "err = {err}");
    }

    #[test]
    fn curvature_converges_spectrally() {
        // exp(0.3 cos τ) is entire but not band-limited.
        let rho = |t: f64| {
            let e = (0.3 * t.cos()).exp();
            let d = -0.3 * t.sin() * e;
            let dd = (-0.3 * t.cos() + 0.09 * t.sin().powi(2)) * e;
            (e, d, dd)
        };
        let err_at = |n: usize| {
            let c =
                RadialContour::new(SpectralFunction::from_fn(n, |t| rho(t).0).unwrap()).unwrap();
            let k = c.curvature();
            (0..n)
                .map(|j| (k.values()[j] - parametric_curvature(rho, node(j, n))).abs())
                .fold(0.0, f64::max)
        };
        let (e16, e32) = (err_at(16), err_at(32));
        assert!(e32 * 10.0 <= e16 || e32 < 1e-13, "{e16} -> {e32}");
        assert!(err_at(64) < 1e-12);
    }

    #[test]
    fn lambda_examples() {
        let c = RadialContour::circle(64, 2.0).unwrap();
        assert!(c.lambda_op(c.rho()).unwrap().max_abs() < 1e-15);

        let c = perturbed(64, &[(2, 0.1, 0.05), (3, 0.0, 0.05)]);
        let h = random_band_limited(64, 6, true, 3).unwrap();
        assert!(c.lambda_op(&h).unwrap().mean().abs() < 1e-13);

        let c = perturbed(256, &[(1, 0.2, 0.0)]);
        let (_, f) = c.curvature_split(c.rho()).unwrap();
        let lam = c.lambda_op(c.rho()).unwrap();
        assert!((&lam - &f.d()).max_abs() < 1e-9);
    }

    #[test]
    fn lambda_on_unit_circle_is_minus_derivative() {
        let c = RadialContour::circle(32, 1.0).unwrap();
        let h = random_band_limited(32, 6, true, 9).unwrap();
        let lam = c.lambda_op(&h).unwrap();
        assert!((&lam + &h.d()).max_abs() < 1e-13);
    }

    #[test]
    fn area_examples() {
        assert!((RadialContour::circle(32, 1.0).unwrap().area() - PI).abs() < 1e-14);
        assert!((RadialContour::circle(32, 2.0).unwrap().area() - 4.0 * PI).abs() < 1e-13);
        let c = perturbed(32, &[(3, 0.1, 0.0)]);
        assert!((c.area() - PI * 1.005).abs() < 1e-14);
    }

    #[test]
    fn centroid_examples() {
        let m = RadialContour::circle(32, 1.3).unwrap().centroid_moment();
        assert!(m[0].abs() < 1e-15 && m[1].abs() < 1e-15);

        // (1/3)∫(1+εcos)³cos = π(ε + ε³/4), from the binomial expansion.
        let eps = 0.1;
        let m = perturbed(64, &[(1, eps, 0.0)]).centroid_moment();
        let analytic = PI * (eps + eps.powi(3) / 4.0);
        assert!((m[0] - analytic).abs() < 1e-12);
        assert!(m[1].abs() < 1e-14);
        // fine-grid midpoint-rule oracle, independent of the node set
        let quad: f64 = (0..20_000)
            .map(|i| {
                let t = (i as f64 + 0.5) * 2.0 * PI / 20_000.0;
                (1.0 + eps * t.cos()).powi(3) * t.cos()
            })
            .sum::<f64>()
            * 2.0
            * PI
            / 20_000.0
            / 3.0;
        assert!((quad - analytic).abs() < 1e-12);

        let m = perturbed(64, &[(2, 0.1, 0.0)]).centroid_moment();
        assert!(m[0].hypot(m[1]) < 1e-12);
    }

    #[test]
    fn normalize_examples() {
        let c = perturbed(64, &[(2, 0.05, 0.0)]);
        let once = normalize_contour(&c).unwrap();
        let twice = normalize_contour(&once).unwrap();
        assert!((twice.rho() - once.rho()).max_abs() < 1e-12);

        let c = RadialContour::circle(32, 1.3).unwrap();
        let c = normalize_contour(&c).unwrap();
        assert!(c.rho().values().iter().all(|r| (r - 1.0).abs() < 1e-14));

        // unit disc centred at (0.05, 0): ρ = c·n + sqrt((c·n)² + 1 - |c|²)
        let shift = 0.05;
        let disc = SpectralFunction::from_fn(64, |t| {
            let cn = shift * t.cos();
            cn + (cn * cn + 1.0 - shift * shift).sqrt()
        })
        .unwrap();
        let c = normalize_contour(&RadialContour::new(disc).unwrap()).unwrap();
        assert!(c.rho().values().iter().all(|r| (r - 1.0).abs() < 1e-10));
    }

    #[test]
    fn normalize_reports_failed_ray_search() {
        // the centroid shift moves the origin outside this thin domain
        let c = RadialContour::circle(32, 1.0).unwrap();
        assert!(c.recentered([1.5, 0.0]).is_err());
    }

    fn green_oracles(c: &RadialContour) -> (f64, Vec2) {
        let n = c.n();
        let x =
            SpectralFunction::from_values((0..n).map(|j| c.position()[j][0]).collect()).unwrap();
        let y =
            SpectralFunction::from_values((0..n).map(|j| c.position()[j][1]).collect()).unwrap();
        let (dx, dy) = (x.d(), y.d());
        let area = 0.5 * (&(&x * &dy) - &(&y * &dx)).integral();
        let mx = 0.5 * (&(&x * &x) * &dy).integral();
        let my = -0.5 * (&(&y * &y) * &dx).integral();
        (area, [mx, my])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn area_and_moment_match_green(seed in 0u64..5000) {
            let bump = random_band_limited(64, 4, false, seed).unwrap().scale(0.04);
            let c = RadialContour::new(bump.add_constant(1.0)).unwrap();
            let (area, m) = green_oracles(&c);
            prop_assert!((area - c.area()).abs() < 1e-12);
            let cm = c.centroid_moment();
            prop_assert!((m[0] - cm[0]).abs() < 1e-12 && (m[1] - cm[1]).abs() < 1e-12);
        }

        #[test]
        fn normalize_is_idempotent(seed in 0u64..5000) {
            let bump = random_band_limited(64, 4, false, seed).unwrap().scale(0.03);
            let c = RadialContour::new(bump.add_constant(1.1)).unwrap();
            let once = normalize_contour(&c).unwrap();
            prop_assert!((once.area() - PI).abs() <= 1e-10 * PI);
            let m = once.centroid_moment();
            prop_assert!(m[0].hypot(m[1]) <= 1e-10);
            let twice = normalize_contour(&once).unwrap();
            prop_assert!((twice.rho() - once.rho()).max_abs() < 1e-10);
        }
    }
}
