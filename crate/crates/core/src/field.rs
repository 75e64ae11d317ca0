//! Interior pressure and velocity from a double-layer density, and the
//! boundary trace of the pressure gradient.
//!
//! With `w = Ξ(s) - z` and `a^⊤ = (a_y, -a_x)`:
//!
//! ```text
//! u(z)  =  (1/π) ∫ w·Ξ'(s)^⊤ / |w|² β(s) ds
//! ∇u(z) = -(1/π) ∫ w^⊤ / |w|² β'(s) ds
//! ```
//!
//! Both are evaluated with the periodic trapezoid rule, which is accurate
//! only away from the boundary. Points closer than [`GUARD_SPACINGS`] mean
//! node spacings, or outside the domain, are refused per point.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{dot, perp, RadialContour, Vec2};
use crate::layer_solve::LayerDensity;
use crate::spectral::SpectralFunction;

/// Minimum distance to the boundary, in mean node spacings.
pub const GUARD_SPACINGS: f64 = 3.0;

/// Pressure and pressure gradient at one interior point.
///
/// The fluid velocity is `-grad_u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub point: Vec2,
    pub u: f64,
    pub grad_u: Vec2,
}

fn check_density(c: &RadialContour, beta: &LayerDensity) -> Result<()> {
    if beta.beta.n() != c.n() {
        return Err(Error::GridMismatch {
            expected: c.n(),
            found: beta.beta.n(),
        });
    }
    Ok(())
}

/// Mean distance between consecutive boundary nodes.
pub fn node_spacing(c: &RadialContour) -> f64 {
    c.perimeter() / c.n() as f64
}

/// Accepts `z` when it is inside the domain and at least the guard distance
/// from every boundary node.
pub fn admit_point(c: &RadialContour, z: Vec2) -> Result<()> {
    let reject = |reason| Error::PointRejected {
        x: z[0],
        y: z[1],
        reason,
    };
    if !z[0].is_finite() || !z[1].is_finite() {
        return Err(reject("non-finite coordinates"));
    }
    if !c.contains(z) {
        return Err(reject("outside the domain"));
    }
    let guard = GUARD_SPACINGS * node_spacing(c);
    let near = c
        .position()
        .iter()
        .any(|p| (p[0] - z[0]).hypot(p[1] - z[1]) < guard);
    if near {
        return Err(reject("within the boundary guard distance"));
    }
    Ok(())
}

fn pressure_at(c: &RadialContour, beta: &[f64], z: Vec2) -> f64 {
    let mut sum = 0.0;
    for ((p, xp), b) in c.position().iter().zip(c.xi_prime()).zip(beta) {
        let w = [p[0] - z[0], p[1] - z[1]];
        sum += dot(w, perp(*xp)) / dot(w, w) * b;
    }
    sum * 2.0 / c.n() as f64
}

fn gradient_at(c: &RadialContour, dbeta: &[f64], z: Vec2) -> Vec2 {
    let mut g = [0.0, 0.0];
    for (p, db) in c.position().iter().zip(dbeta) {
        let w = [p[0] - z[0], p[1] - z[1]];
        let k = db / dot(w, w);
        let wp = perp(w);
        g[0] += wp[0] * k;
        g[1] += wp[1] * k;
    }
    let scale = -2.0 / c.n() as f64;
    [g[0] * scale, g[1] * scale]
}

/// Pressure at each point, or a per-point rejection.
pub fn pressure(
    c: &RadialContour,
    beta: &LayerDensity,
    points: &[Vec2],
) -> Result<Vec<Result<f64>>> {
    check_density(c, beta)?;
    let values = beta.beta.values();
    Ok(points
        .par_iter()
        .map(|&z| admit_point(c, z).map(|_| pressure_at(c, values, z)))
        .collect())
}

/// Pressure gradient `∇u` at each point, or a per-point rejection.
pub fn velocity(
    c: &RadialContour,
    beta: &LayerDensity,
    points: &[Vec2],
) -> Result<Vec<Result<Vec2>>> {
    check_density(c, beta)?;
    let dbeta = beta.beta.d();
    let dv = dbeta.values();
    Ok(points
        .par_iter()
        .map(|&z| admit_point(c, z).map(|_| gradient_at(c, dv, z)))
        .collect())
}

/// Pressure and gradient at each point, or a per-point rejection.
pub fn evaluate(
    c: &RadialContour,
    beta: &LayerDensity,
    points: &[Vec2],
) -> Result<Vec<Result<FieldSample>>> {
    check_density(c, beta)?;
    let values = beta.beta.values();
    let dbeta = beta.beta.d();
    let dv = dbeta.values();
    Ok(points
        .par_iter()
        .map(|&z| {
            admit_point(c, z).map(|_| FieldSample {
                point: z,
                u: pressure_at(c, values, z),
                grad_u: gradient_at(c, dv, z),
            })
        })
        .collect())
}

/// Interior limit of `∇u` at every boundary node.
///
/// The principal value is split as `Ξ'(τ)^⊤/ω²(τ) · ½cot((s-τ)/2)` plus a
/// smooth remainder. The cotangent part is the discrete Hilbert transform;
/// the remainder uses the trapezoid rule with its diagonal limit
/// `(Ξ''/2 - (Ξ'·Ξ''/ω²) Ξ')^⊤ / ω²`.
pub fn boundary_gradient(c: &RadialContour, beta: &LayerDensity) -> Result<Vec<Vec2>> {
    check_density(c, beta)?;
    let n = c.n();
    let dbeta = beta.beta.d();
    let hdb = dbeta.hilbert();
    let db = dbeta.values();
    let hb = hdb.values();
    let pos = c.position();
    let xp = c.xi_prime();
    let xs = c.xi_second();
    let h = 2.0 * PI / n as f64;
    let half_cot: Vec<f64> = (0..n)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                0.5 / (0.5 * h * k as f64).tan()
            }
        })
        .collect();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let w2 = dot(xp[i], xp[i]);
            let tp = perp(xp[i]);
            let a = dot(xp[i], xs[i]) / w2;
            let diag = perp([0.5 * xs[i][0] - a * xp[i][0], 0.5 * xs[i][1] - a * xp[i][1]]);
            let mut r = [diag[0] / w2 * db[i], diag[1] / w2 * db[i]];
            for j in (0..n).filter(|&j| j != i) {
                let w = [pos[j][0] - pos[i][0], pos[j][1] - pos[i][1]];
                let wp = perp(w);
                let inv = 1.0 / dot(w, w);
                let sc = half_cot[(j + n - i) % n] / w2;
                r[0] += (wp[0] * inv - tp[0] * sc) * db[j];
                r[1] += (wp[1] * inv - tp[1] * sc) * db[j];
            }
            let jump = db[i] / w2;
            [
                jump * xp[i][0] + tp[0] / w2 * hb[i] - r[0] * h / PI,
                jump * xp[i][1] + tp[1] / w2 * hb[i] - r[1] * h / PI,
            ]
        })
        .collect())
}

/// Outward normal component of [`boundary_gradient`] at every node.
pub fn boundary_normal_derivative(
    c: &RadialContour,
    beta: &LayerDensity,
) -> Result<SpectralFunction> {
    let g = boundary_gradient(c, beta)?;
    let values = g
        .iter()
        .zip(c.normal())
        .map(|(g, nu)| dot(*g, *nu))
        .collect();
    SpectralFunction::from_values(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FourierProfile;
    use crate::layer_solve::{solve_dirichlet_density, SolveContext};

    fn density(beta: SpectralFunction) -> LayerDensity {
        LayerDensity {
            beta,
            residual_norm: 0.0,
            condition_estimate: None,
        }
    }

    fn perturbed(n: usize) -> RadialContour {
        FourierProfile::new(1.0, &[(1, 0.2, 0.0), (3, 0.0, 0.1)])
            .contour(n)
            .unwrap()
    }

    #[test]
    fn circle_with_unit_datum_has_unit_pressure() {
        let c = RadialContour::circle(128, 1.0).unwrap();
        let beta = solve_dirichlet_density(&c, &SpectralFunction::constant(128, 1.0).unwrap(), 1.0)
            .unwrap();
        let pts = [[0.0, 0.0], [0.3, -0.2], [-0.5, 0.5], [0.0, 0.8]];
        for u in pressure(&c, &beta, &pts).unwrap() {
            assert!((u.unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_density_gives_zero_field() {
        let c = perturbed(64);
        let beta = density(SpectralFunction::zeros(64).unwrap());
        let s = evaluate(&c, &beta, &[[0.1, 0.2]]).unwrap();
        let s = s[0].as_ref().unwrap();
        assert_eq!(s.u, 0.0);
        assert_eq!(s.grad_u, [0.0, 0.0]);
    }

    #[test]
    fn constant_density_has_zero_gradient() {
        let c = perturbed(64);
        let beta = density(SpectralFunction::constant(64, 0.7).unwrap());
        for g in velocity(&c, &beta, &[[0.1, 0.2], [-0.4, 0.0]]).unwrap() {
            let g = g.unwrap();
            assert!(g[0].abs() < 1e-14 && g[1].abs() < 1e-14);
        }
        for g in boundary_gradient(&c, &beta).unwrap() {
            assert!(g[0].abs() < 1e-14 && g[1].abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_at_circle_center() {
        // β' = cos s on the unit circle: w = n(s), w^⊤ = (sin s, -cos s), so
        // ∇u(0) = -(1/π)(∫ sin cos, -∫ cos²) = (0, 1).
        let c = RadialContour::circle(64, 1.0).unwrap();
        let beta = density(SpectralFunction::from_fn(64, f64::sin).unwrap());
        let g = velocity(&c, &beta, &[[0.0, 0.0]]).unwrap()[0]
            .clone()
            .unwrap();
        assert!(g[0].abs() < 1e-14);
        assert!((g[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_pressure_differences() {
        let c = perturbed(128);
        let beta = density(
            SpectralFunction::from_fn(128, |t| 0.3 + (2.0 * t).cos() - 0.4 * t.sin()).unwrap(),
        );
        let z = [0.2, -0.1];
        let h = 1e-5;
        let u = |p: Vec2| pressure_at(&c, beta.beta.values(), p);
        let fd = [
            (u([z[0] + h, z[1]]) - u([z[0] - h, z[1]])) / (2.0 * h),
            (u([z[0], z[1] + h]) - u([z[0], z[1] - h])) / (2.0 * h),
        ];
        let g = gradient_at(&c, beta.beta.d().values(), z);
        assert!((fd[0] - g[0]).abs() < 1e-8 && (fd[1] - g[1]).abs() < 1e-8);
    }

    #[test]
    fn pressure_is_harmonic() {
        let c = perturbed(128);
        let beta = solve_dirichlet_density(&c, &c.curvature(), 1.0).unwrap();
        let h = 1e-3;
        for z in [[0.0, 0.0], [0.3, 0.2], [-0.2, -0.15], [0.1, -0.4]] {
            let pts = [
                z,
                [z[0] + h, z[1]],
                [z[0] - h, z[1]],
                [z[0], z[1] + h],
                [z[0], z[1] - h],
            ];
            let u: Vec<f64> = pressure(&c, &beta, &pts)
                .unwrap()
                .into_iter()
                .map(|u| u.unwrap())
                .collect();
            let lap = (u[1] + u[2] + u[3] + u[4] - 4.0 * u[0]) / (h * h);
            assert!(lap.abs() < 1e-5, "laplacian {lap} at {z:?}");
        }
    }

    #[test]
    fn exterior_and_near_points_are_flagged() {
        let c = RadialContour::circle(64, 1.0).unwrap();
        let beta = density(SpectralFunction::constant(64, 0.5).unwrap());
        let r = pressure(&c, &beta, &[[2.0, 0.0], [0.99, 0.0], [0.5, 0.0]]).unwrap();
        assert!(matches!(r[0], Err(Error::PointRejected { .. })));
        assert!(matches!(r[1], Err(Error::PointRejected { .. })));
        assert!(r[2].is_ok());
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let c = RadialContour::circle(64, 1.0).unwrap();
        let beta = density(SpectralFunction::constant(32, 0.5).unwrap());
        assert!(matches!(
            pressure(&c, &beta, &[]),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn normal_trace_matches_adjoint_operator() {
        let n = 256;
        let c = perturbed(n);
        let ctx = SolveContext::new(&c).unwrap();
        let beta = ctx.solve_dirichlet(&c.curvature()).unwrap();
        let normal = boundary_normal_derivative(&c, &beta).unwrap();
        let expected = ctx.operators().apply_bstar(&beta.beta.d());
        let err = normal
            .values()
            .iter()
            .zip(expected.values())
            .zip(c.omega().values())
            .map(|((a, b), w)| (a - b / w).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "normal trace mismatch {err}");
    }

    #[test]
    fn interior_gradient_converges_to_trace() {
        let n = 1024;
        let c = FourierProfile::new(1.0, &[(2, 0.1, 0.0), (3, 0.0, 0.05)])
            .contour(n)
            .unwrap();
        let beta =
            density(SpectralFunction::from_fn(n, |t| t.cos() + 0.5 * (2.0 * t).sin()).unwrap());
        let trace = boundary_gradient(&c, &beta).unwrap();
        for i in [0, 200, 517] {
            let p = c.position()[i];
            let errs: Vec<f64> = [0.1, 0.05, 0.025]
                .iter()
                .map(|d| {
                    let z = [p[0] * (1.0 - d), p[1] * (1.0 - d)];
                    let g = velocity(&c, &beta, &[z]).unwrap()[0].clone().unwrap();
                    (g[0] - trace[i][0]).hypot(g[1] - trace[i][1])
                })
                .collect();
            for w in errs.windows(2) {
                let ratio = w[0] / w[1];
                assert!((1.6..2.5).contains(&ratio), "node {i}: errors {errs:?}");
            }
        }
    }

    #[test]
    fn pressure_approaches_boundary_datum() {
        let n = 1024;
        let c = perturbed(n);
        let phi = c.curvature();
        let beta = solve_dirichlet_density(&c, &phi, 1.0).unwrap();
        for i in [0, 300, 700] {
            let p = c.position()[i];
            let errs: Vec<f64> = [0.12, 0.06, 0.03]
                .iter()
                .map(|d| {
                    let z = [p[0] * (1.0 - d), p[1] * (1.0 - d)];
                    (pressure(&c, &beta, &[z]).unwrap()[0].clone().unwrap() - phi.values()[i]).abs()
                })
                .collect();
            for (e, d) in errs.iter().zip([0.12, 0.06, 0.03]) {
                assert!(*e < 5.0 * d, "node {i}: errors {errs:?}");
            }
        }
    }

    #[test]
    fn net_flux_vanishes() {
        let c = perturbed(128);
        let ctx = SolveContext::new(&c).unwrap();
        let beta = ctx.solve_dirichlet(&c.curvature()).unwrap();
        let flux = &boundary_normal_derivative(&c, &beta).unwrap() * c.omega();
        assert!(flux.integral().abs() < 1e-10);
    }
}
