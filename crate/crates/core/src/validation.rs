//! Conformance checks for the operator identities, spectral predictions and
//! conservation laws, collected into pass/fail reports.
//!
//! Every check reduces to one non-negative residual compared against the
//! tolerance stored for it in [`Check::tolerance`]. Residuals are relative
//! unless stated otherwise. Random test functions are seeded and
//! band-limited to modes `≤ min(8, n/8)`, so the same function is used at
//! every grid size.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolution::{
    circle_symbol, evaluate_phi, phi1_apply, phi_compact, phi_with, run, Method, StepperConfig,
};
use crate::field;
use crate::geometry::{normalize_contour, FourierProfile, RadialContour};
use crate::layer_solve::SolveContext;
use crate::singular_ops::{assemble, assemble_via_bnmp, OperatorMatrices};
use crate::spectral::{random_band_limited, SpectralFunction};

/// Residual below which a convergence ratio is not meaningful: roundoff
/// amplified by spectral differentiation, about `n² ε` at `n = 256`.
pub const ROUNDOFF_FLOOR: f64 = 1e-11;
/// Number of random densities per contour and grid size.
pub const RANDOM_FUNCTIONS: usize = 5;
/// Highest mode examined by the spectrum and symbol checks.
pub const SPECTRUM_MODES: usize = 8;
/// Finite-difference step of the linearization check.
pub const SPECTRUM_EPS: f64 = 1e-4;
/// Grid of the reference operators in the operator-convergence check.
const REFERENCE_N: usize = 1024;

/// The checks run by [`run_suite`], in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Check {
    Adjointness,
    CommutationD,
    CommutationB,
    MeanZeroDstar,
    MeanZeroBstar,
    RellichPlus,
    RellichMinus,
    DualRoute,
    SolveResidual,
    Decomposition,
    DifferentiatedSolve,
    Conditioning,
    PhiCompact,
    DirichletTrace,
    NetFlux,
    Phi1Symbol,
    Stationarity,
    SpectrumDiagonal,
    SpectrumZeroModes,
    SpectrumContamination,
    Conservation,
    PerimeterDecay,
    RellichConvergence,
    CommutationConvergence,
    OperatorConvergence,
}

struct Entry {
    check: Check,
    name: &'static str,
    tolerance: f64,
    invariant: &'static str,
}

const TABLE: [Entry; 25] = [
    Entry {
        check: Check::Adjointness,
        name: "adjointness",
        tolerance: 1e-10,
        invariant: "<D b, g> = <b, D* g> and <B b, g> = <b, B* g> in the quadrature inner product",
    },
    Entry {
        check: Check::CommutationD,
        name: "commutation_d",
        tolerance: 1e-8,
        invariant: "(D b)' = -D* b'",
    },
    Entry {
        check: Check::CommutationB,
        name: "commutation_b",
        tolerance: 1e-8,
        invariant: "(B b)' = -B* b'",
    },
    Entry {
        check: Check::MeanZeroDstar,
        name: "mean_zero_dstar",
        tolerance: 1e-11,
        invariant: "D* maps mean-zero functions to mean-zero functions",
    },
    Entry {
        check: Check::MeanZeroBstar,
        name: "mean_zero_bstar",
        tolerance: 1e-11,
        invariant: "B* maps mean-zero functions to mean-zero functions",
    },
    Entry {
        check: Check::RellichPlus,
        name: "rellich_plus",
        tolerance: 1e-6,
        invariant: "interior Rellich identity, with D* and with the transpose of D",
    },
    Entry {
        check: Check::RellichMinus,
        name: "rellich_minus",
        tolerance: 1e-6,
        invariant: "exterior Rellich identity, with D* and with the transpose of D",
    },
    Entry {
        check: Check::DualRoute,
        name: "dual_route",
        tolerance: 1e-8,
        invariant: "geometric-kernel and kernel-family assemblies agree in action",
    },
    Entry {
        check: Check::SolveResidual,
        name: "solve_residual",
        tolerance: 1e-10,
        invariant: "solved densities reproduce their right-hand sides",
    },
    Entry {
        check: Check::Decomposition,
        name: "decomposition",
        tolerance: 1e-10,
        invariant: "density of the full curvature = alpha1 density + density of the f part",
    },
    Entry {
        check: Check::DifferentiatedSolve,
        name: "differentiated_solve",
        tolerance: 1e-8,
        invariant: "derivative of the f-part density solves (1 - D*) g = f'",
    },
    Entry {
        check: Check::Conditioning,
        name: "conditioning",
        tolerance: 1e3,
        invariant: "1-norm condition estimate of I + D",
    },
    Entry {
        check: Check::PhiCompact,
        name: "phi_compact",
        tolerance: 1e-6,
        invariant: "split and compact forms of the evolution operator agree",
    },
    Entry {
        check: Check::DirichletTrace,
        name: "dirichlet_trace",
        tolerance: 10.0,
        invariant: "|u(z) - datum| / offset for radial approach to the boundary",
    },
    Entry {
        check: Check::NetFlux,
        name: "net_flux",
        tolerance: 1e-10,
        invariant: "boundary flux of the pressure gradient vanishes",
    },
    Entry {
        check: Check::Phi1Symbol,
        name: "phi1_symbol",
        tolerance: 1e-6,
        invariant: "leading part at the unit circle is the multiplier -|k|^3",
    },
    Entry {
        check: Check::Stationarity,
        name: "stationarity",
        tolerance: 1e-9,
        invariant: "circles of radius 0.5, 1, 2 are stationary (absolute sup norm)",
    },
    Entry {
        check: Check::SpectrumDiagonal,
        name: "spectrum_diagonal",
        tolerance: 1e-3,
        invariant: "linearization at the unit circle has eigenvalues |k|(1 - k^2), 2 <= k <= 8",
    },
    Entry {
        check: Check::SpectrumZeroModes,
        name: "spectrum_zero_modes",
        tolerance: 1e-6,
        invariant: "1, cos t, sin t span the kernel of the linearization (absolute)",
    },
    Entry {
        check: Check::SpectrumContamination,
        name: "spectrum_contamination",
        tolerance: 1e-6,
        invariant: "linearization at the unit circle is diagonal in the Fourier basis",
    },
    Entry {
        check: Check::Conservation,
        name: "conservation",
        tolerance: 1e-10,
        invariant: "area and centroid moment are conserved along a short rk4 run",
    },
    Entry {
        check: Check::PerimeterDecay,
        name: "perimeter_decay",
        tolerance: 1e-12,
        invariant: "perimeter does not increase near the circle (largest relative increase)",
    },
    Entry {
        check: Check::RellichConvergence,
        name: "rellich_convergence",
        tolerance: 1.0,
        invariant: "Rellich residual drops 10x per grid doubling or reaches the roundoff floor",
    },
    Entry {
        check: Check::CommutationConvergence,
        name: "commutation_convergence",
        tolerance: 1.0,
        invariant: "commutation residual drops 10x per grid doubling or reaches the roundoff floor",
    },
    Entry {
        check: Check::OperatorConvergence,
        name: "operator_convergence",
        tolerance: 1.0,
        invariant: "error against a fine-grid reference drops 10x per doubling or reaches the roundoff floor",
    },
];

impl Check {
    pub const ALL: [Check; 25] = {
        let mut all = [Check::Adjointness; 25];
        let mut i = 0;
        while i < 25 {
            all[i] = TABLE[i].check;
            i += 1;
        }
        all
    };

    fn entry(self) -> &'static Entry {
        &TABLE[self as usize]
    }

    pub fn name(self) -> &'static str {
        self.entry().name
    }

    pub fn tolerance(self) -> f64 {
        self.entry().tolerance
    }

    /// The property the check enforces.
    pub fn invariant(self) -> &'static str {
        self.entry().invariant
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome of one check on one contour at one grid size.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub contour: String,
    pub n: usize,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckReport {
    pub fn new(check: Check, contour: impl Into<String>, n: usize, residual: f64) -> Self {
        let tolerance = check.tolerance();
        Self {
            name: check.name().to_string(),
            contour: contour.into(),
            n,
            residual,
            tolerance,
            pass: residual <= tolerance,
        }
    }

    fn from_result(check: Check, contour: &str, n: usize, r: Result<f64>) -> Self {
        Self::new(check, contour, n, r.unwrap_or(f64::INFINITY))
    }
}

/// A contour of the suite, resampled to each grid size.
#[derive(Debug, Clone)]
pub struct SuiteContour {
    pub label: String,
    pub rho: SpectralFunction,
}

impl SuiteContour {
    pub fn new(label: impl Into<String>, rho: SpectralFunction) -> Self {
        Self {
            label: label.into(),
            rho,
        }
    }

    pub fn from_profile(profile: &FourierProfile) -> Result<Self> {
        Ok(Self::new(profile.to_string(), profile.sample(64)?))
    }

    pub fn at(&self, n: usize) -> Result<RadialContour> {
        RadialContour::new(self.rho.resample(n)?)
    }
}

/// The circle and two analytic perturbations used by default.
pub fn standard_family() -> Vec<FourierProfile> {
    vec![
        FourierProfile::circle(1.0),
        FourierProfile::new(1.0, &[(1, 0.2, 0.0)]),
        FourierProfile::new(1.0, &[(2, 0.15, 0.0), (3, 0.0, 0.1)]),
    ]
}

/// A single entry of `D` shifted before the checks run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corruption {
    pub row: usize,
    pub col: usize,
    pub delta: f64,
}

impl Default for Corruption {
    fn default() -> Self {
        Self {
            row: 3,
            col: 11,
            delta: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    pub corruption: Option<Corruption>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            corruption: None,
        }
    }
}

fn band(n: usize) -> usize {
    (n / 8).clamp(1, 8)
}

/// Seeded band-limited test functions shared across grid sizes.
pub fn test_functions(
    n: usize,
    count: usize,
    with_mean: bool,
    seed: u64,
) -> Result<Vec<SpectralFunction>> {
    (0..count as u64)
        .map(|i| random_band_limited(n, band(n), with_mean, seed.wrapping_add(i)))
        .collect()
}

/// Analytic, non-band-limited density used by the convergence checks.
pub fn analytic_density(n: usize) -> Result<SpectralFunction> {
    SpectralFunction::from_fn(n, |t| (t.sin()).exp() + 0.5 / (1.6 - (t - 0.3).cos()))
}

fn sup_rel(a: &SpectralFunction, scale: f64) -> f64 {
    a.max_abs() / scale.max(f64::MIN_POSITIVE)
}

fn transpose_apply(m: &nalgebra::DMatrix<f64>, beta: &SpectralFunction) -> SpectralFunction {
    let v = m.tr_mul(&DVector::from_column_slice(beta.values()));
    SpectralFunction::from_values(v.as_slice().to_vec()).expect("finite matrix action")
}

/// Largest normalized defect of the quadrature adjoint relations over the
/// given pairs.
pub fn adjointness_residual(
    ops: &OperatorMatrices,
    pairs: &[(SpectralFunction, SpectralFunction)],
) -> f64 {
    pairs
        .iter()
        .map(|(b, g)| {
            let s = b.l2_norm() * g.l2_norm();
            let d = (ops.apply_d(b).inner(g) - b.inner(&ops.apply_dstar(g))).abs();
            let bb = (ops.apply_b(b).inner(g) - b.inner(&ops.apply_bstar(g))).abs();
            d.max(bb) / s
        })
        .fold(0.0, f64::max)
}

/// `‖(D β)' + D* β'‖∞ / ‖β'‖∞` and the same for `B`, `B*`.
pub fn commutation_residuals(ops: &OperatorMatrices, beta: &SpectralFunction) -> (f64, f64) {
    let db = beta.d();
    let scale = db.max_abs();
    let d = &ops.apply_d(beta).d() + &ops.apply_dstar(&db);
    let b = &ops.apply_b(beta).d() + &ops.apply_bstar(&db);
    (sup_rel(&d, scale), sup_rel(&b, scale))
}

/// `|⟨D* β⟩| / ‖β‖∞` and `|⟨B* β⟩| / ‖β‖∞` for mean-zero `β`.
pub fn mean_zero_residuals(ops: &OperatorMatrices, beta: &SpectralFunction) -> (f64, f64) {
    let s = beta.max_abs();
    (
        ops.apply_dstar(beta).mean().abs() / s,
        ops.apply_bstar(beta).mean().abs() / s,
    )
}

fn rellich_with(
    c: &RadialContour,
    a: &SpectralFunction,
    b: &SpectralFunction,
    mean: f64,
    sign: f64,
) -> f64 {
    let h = 2.0 * PI / c.n() as f64;
    let (mut lhs, mut rhs, mut scale) = (0.0, 0.0, 0.0);
    for i in 0..c.n() {
        let r = c.rho().values()[i];
        let dr = c.drho().values()[i];
        let w2 = c.omega().values()[i].powi(2);
        let (ai, bi) = (a.values()[i], b.values()[i]);
        lhs += h * r * r / w2 * (ai * ai - bi * bi);
        rhs += h * 2.0 * r * dr * ai * bi / w2;
        scale += h * (r * r / w2 * (ai * ai + bi * bi) + (2.0 * r * dr * ai * bi / w2).abs());
    }
    let jump = 4.0 * (sign - 1.0) * PI * mean * mean;
    rhs -= jump;
    scale += jump.abs();
    (lhs - rhs).abs() / scale
}

/// Relative residual of the Rellich identity with sign `±1`.
///
/// The identity involves `D*`, the adjoint of `D`. It is evaluated with the
/// assembled `D*` and with the transpose of the assembled `D`, and the larger
/// residual is reported.
pub fn rellich_residual(
    c: &RadialContour,
    ops: &OperatorMatrices,
    beta: &SpectralFunction,
    sign: f64,
) -> f64 {
    let b = ops.apply_bstar(beta);
    let shifted = |m: SpectralFunction| &beta.scale(sign) - &m;
    let via_dstar = shifted(ops.apply_dstar(beta));
    let via_transpose = shifted(transpose_apply(ops.d(), beta));
    let mean = beta.mean();
    rellich_with(c, &via_dstar, &b, mean, sign).max(rellich_with(c, &via_transpose, &b, mean, sign))
}

/// Largest `‖(A - A') β‖∞ / ‖β‖∞` over the four operators of two assemblies.
pub fn dual_route_residual(
    a: &OperatorMatrices,
    b: &OperatorMatrices,
    betas: &[SpectralFunction],
) -> f64 {
    betas
        .iter()
        .map(|beta| {
            let s = beta.max_abs();
            [
                sup_rel(&(&a.apply_d(beta) - &b.apply_d(beta)), s),
                sup_rel(&(&a.apply_dstar(beta) - &b.apply_dstar(beta)), s),
                sup_rel(&(&a.apply_b(beta) - &b.apply_b(beta)), s),
                sup_rel(&(&a.apply_bstar(beta) - &b.apply_bstar(beta)), s),
            ]
            .into_iter()
            .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn l2_rel(r: &SpectralFunction, rhs: &SpectralFunction) -> f64 {
    r.l2_norm() / rhs.l2_norm().max(f64::MIN_POSITIVE)
}

/// Relative residuals of the Dirichlet and adjoint solves, recomputed from
/// the operator matrices.
pub fn solve_residual(c: &RadialContour, ctx: &SolveContext, seed: u64) -> Result<f64> {
    let ops = ctx.operators();
    let phi = c.curvature();
    let beta = ctx.solve_dirichlet(&phi)?.beta;
    let r1 = l2_rel(&(&(&beta + &ops.apply_d(&beta)) - &phi), &phi);
    let psi = random_band_limited(c.n(), band(c.n()), false, seed)?;
    let gamma = ctx.solve_adjoint(&psi)?.beta;
    let r2 = l2_rel(&(&(&gamma - &ops.apply_dstar(&gamma)) - &psi), &psi);
    Ok(r1.max(r2))
}

/// `‖β − α₁[ρ] − β_f‖∞ / ‖β‖∞` with `β` solved from the full curvature.
pub fn decomposition_residual(c: &RadialContour, ctx: &SolveContext) -> Result<f64> {
    let (_, f) = c.curvature_split(c.rho())?;
    let full = ctx.solve_dirichlet(&c.curvature())?.beta;
    let a1 = ctx.alpha1(c, c.rho())?.beta;
    let bf = ctx.solve_dirichlet(&f)?.beta;
    Ok(sup_rel(&(&(&full - &a1) - &bf), full.max_abs()))
}

/// `‖β_f' − γ‖∞ / ‖f‖∞` with `(1 + D)β_f = f` and `(1 − D*)γ = f'`.
pub fn differentiated_solve_residual(c: &RadialContour, ctx: &SolveContext) -> Result<f64> {
    let (_, f) = c.curvature_split(c.rho())?;
    let bf = ctx.solve_dirichlet(&f)?.beta;
    let gamma = ctx.solve_adjoint(&f.d())?.beta;
    Ok(sup_rel(&(&bf.d() - &gamma), f.max_abs()))
}

/// `‖Φ − Φ_compact‖∞ / max(‖Φ‖∞, 1)`.
pub fn phi_compact_residual(c: &RadialContour, ctx: &SolveContext) -> Result<f64> {
    let split = phi_with(c, ctx, false)?;
    let compact = phi_compact(c, ctx)?;
    Ok(sup_rel(&(&split - &compact), split.max_abs().max(1.0)))
}

/// Largest `|u(z) − φ(τ)| / δ` for `z = (1 − δ)Ξ(τ)` over admissible offsets,
/// with `φ` the curvature.
pub fn dirichlet_trace_residual(c: &RadialContour, ctx: &SolveContext) -> Result<f64> {
    let phi = c.curvature();
    let beta = ctx.solve_dirichlet(&phi)?;
    let n = c.n();
    let mut worst = 0.0f64;
    for i in [0, n / 3, 2 * n / 3] {
        let p = c.position()[i];
        for delta in [0.4, 0.2, 0.1, 0.05] {
            let z = [p[0] * (1.0 - delta), p[1] * (1.0 - delta)];
            if field::admit_point(c, z).is_err() {
                continue;
            }
            let u = field::pressure(c, &beta, &[z])?.remove(0)?;
            worst = worst.max((u - phi.values()[i]).abs() / delta);
        }
    }
    Ok(worst)
}

/// `|∫ ∂_n u |dξ|| / ‖β'‖∞` for the curvature density.
pub fn net_flux_residual(c: &RadialContour, ctx: &SolveContext) -> Result<f64> {
    let beta = ctx.solve_dirichlet(&c.curvature())?;
    let flux = &field::boundary_normal_derivative(c, &beta)? * c.omega();
    Ok(flux.integral().abs() / beta.beta.d().max_abs().max(1.0))
}

/// Largest `‖Φ₁(1)[cos kτ] + k³ cos kτ‖∞ / max(k³, 1)` for `k ≤ k_max`.
pub fn phi1_symbol_residual(n: usize, k_max: usize) -> Result<f64> {
    let c = RadialContour::circle(n, 1.0)?;
    let ctx = SolveContext::new(&c)?;
    let mut worst = 0.0f64;
    for k in 0..=k_max {
        let e = SpectralFunction::from_fn(n, |t| (k as f64 * t).cos())?;
        let k3 = (k as f64).powi(3);
        let r = &phi1_apply(&c, &ctx, &e)? + &e.scale(k3);
        worst = worst.max(r.max_abs() / k3.max(1.0));
    }
    Ok(worst)
}

/// Largest `‖Φ(R)[R]‖∞` over the given radii.
pub fn stationarity_residual(n: usize, radii: &[f64]) -> Result<f64> {
    radii.iter().try_fold(0.0f64, |worst, &r| {
        let c = RadialContour::circle(n, r)?;
        Ok(worst.max(evaluate_phi(&c, false)?.max_abs()))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Cos,
    Sin,
}

/// Measured response of the linearization to one Fourier direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumEntry {
    pub mode: usize,
    pub parity: Parity,
    /// Rayleigh coefficient `⟨J e, e⟩ / ⟨e, e⟩`.
    pub eigenvalue: f64,
    /// `‖J e − λ e‖ / (‖e‖ max(|λ|, 1))`.
    pub contamination: f64,
}

/// Central finite-difference linearization of `ρ ↦ Φ(ρ)[ρ]` at `c` along
/// `cos kτ` and `sin kτ`, `k ≤ k_max`.
///
/// Uses the fourth-order stencil on `±ε, ±2ε`, so the truncation error is
/// `O(ε⁴)` and `ε` can be taken at the top of its range, where the
/// roundoff of the third-order operator, amplified by `1/ε`, is smallest.
pub fn linearization_spectrum(
    c: &RadialContour,
    k_max: usize,
    eps: f64,
) -> Result<Vec<SpectrumEntry>> {
    if !(1e-8..=1e-4).contains(&eps) {
        return Err(Error::Config(format!(
            "finite-difference step {eps} outside [1e-8, 1e-4]"
        )));
    }
    let n = c.n();
    if 2 * k_max >= n {
        return Err(Error::Config(format!(
            "k_max {k_max} not resolved on {n} nodes"
        )));
    }
    let mut directions = vec![(0, Parity::Cos)];
    for k in 1..=k_max {
        directions.push((k, Parity::Cos));
        directions.push((k, Parity::Sin));
    }
    directions
        .into_par_iter()
        .map(|(k, parity)| {
            let e = SpectralFunction::from_fn(n, |t| match parity {
                Parity::Cos => (k as f64 * t).cos(),
                Parity::Sin => (k as f64 * t).sin(),
            })?;
            let at = |s: f64| -> Result<SpectralFunction> {
                let c = RadialContour::new(&c.rho().clone() + &e.scale(s))?;
                evaluate_phi(&c, false)
            };
            let near = &at(eps)? - &at(-eps)?;
            let far = &at(2.0 * eps)? - &at(-2.0 * eps)?;
            let j = (&near.scale(8.0) - &far).scale(1.0 / (12.0 * eps));
            let ee = e.inner(&e);
            let eigenvalue = j.inner(&e) / ee;
            let rest = &j - &e.scale(eigenvalue);
            let contamination = (rest.inner(&rest) / ee).sqrt() / eigenvalue.abs().max(1.0);
            Ok(SpectrumEntry {
                mode: k,
                parity,
                eigenvalue,
                contamination,
            })
        })
        .collect()
}

/// Spectrum residuals at the unit circle: relative error of the nonzero
/// eigenvalues, largest zero-mode eigenvalue, largest contamination.
pub fn spectrum_residuals(n: usize, k_max: usize, eps: f64) -> Result<(f64, f64, f64)> {
    let entries = linearization_spectrum(&RadialContour::circle(n, 1.0)?, k_max, eps)?;
    let (mut diag, mut zero, mut contamination) = (0.0f64, 0.0f64, 0.0f64);
    for e in &entries {
        let expected = circle_symbol(e.mode as i64);
        if e.mode <= 1 {
            zero = zero.max(e.eigenvalue.abs());
        } else {
            diag = diag.max((e.eigenvalue - expected).abs() / expected.abs());
        }
        contamination = contamination.max(e.contamination);
    }
    Ok((diag, zero, contamination))
}

/// Area/centroid drift and largest relative perimeter increase along a
/// short rk4 run from a normalized near-circle profile.
pub fn evolution_residuals(n: usize) -> Result<(f64, f64)> {
    let c = normalize_contour(&FourierProfile::new(1.0, &[(2, 0.05, 0.0)]).contour(n)?)?;
    let cfg = StepperConfig {
        method: Method::Rk4,
        dt: 1e-4,
        t_end: 5e-3,
        cadence: 1,
        ..StepperConfig::default()
    };
    let traj = run(&c, &cfg)?;
    if let Some(e) = traj.abort {
        return Err(e);
    }
    let (area, moment) = traj.max_drift();
    let perimeter = traj
        .states
        .windows(2)
        .map(|w| {
            (w[1].diagnostics.perimeter - w[0].diagnostics.perimeter) / w[0].diagnostics.perimeter
        })
        .fold(0.0f64, f64::max);
    Ok((area.max(moment), perimeter))
}

/// Error of the four operators applied to the analytic density at `n`,
/// against `reference` applied on its own grid.
fn operator_error(
    c: &RadialContour,
    ops: &OperatorMatrices,
    reference: &[SpectralFunction; 4],
) -> Result<f64> {
    let n = c.n();
    let beta = analytic_density(n)?;
    let stride = reference[0].n() / n;
    let actions = [
        ops.apply_d(&beta),
        ops.apply_dstar(&beta),
        ops.apply_b(&beta),
        ops.apply_bstar(&beta),
    ];
    let mut worst = 0.0f64;
    for (a, r) in actions.iter().zip(reference) {
        for (i, v) in a.values().iter().enumerate() {
            worst = worst.max((v - r.values()[i * stride]).abs());
        }
    }
    Ok(worst / beta.max_abs())
}

/// Convergence defect `fine / max(coarse / 10, floor)`; at most 1 when the
/// residual drops tenfold or is already at the roundoff floor.
pub fn convergence_defect(coarse: f64, fine: f64) -> f64 {
    fine / (coarse / 10.0).max(ROUNDOFF_FLOOR)
}

struct LevelResult {
    reports: Vec<CheckReport>,
    rellich: f64,
    commutation: f64,
    operator_error: Option<f64>,
}

fn failed_level(label: &str, n: usize) -> LevelResult {
    let per_contour = &Check::ALL[..15];
    LevelResult {
        reports: per_contour
            .iter()
            .map(|&k| CheckReport::new(k, label, n, f64::INFINITY))
            .collect(),
        rellich: f64::INFINITY,
        commutation: f64::INFINITY,
        operator_error: None,
    }
}

fn contour_level(
    label: &str,
    c: &RadialContour,
    opts: &SuiteOptions,
    reference: Option<&[SpectralFunction; 4]>,
) -> Result<LevelResult> {
    let n = c.n();
    let mut ops = assemble(c)?;
    if let Some(k) = opts.corruption {
        ops = ops.with_perturbed_d(k.row % n, k.col % n, k.delta);
    }
    let ctx = SolveContext::from_operators(ops.clone())?;
    let seed = opts.seed;

    let with_mean = test_functions(n, RANDOM_FUNCTIONS, true, seed)?;
    let mean_free = test_functions(n, RANDOM_FUNCTIONS, false, seed.wrapping_add(1000))?;
    let pairs: Vec<_> = with_mean
        .iter()
        .cloned()
        .zip(mean_free.iter().cloned())
        .collect();
    let analytic = analytic_density(n)?;

    let mut reports = Vec::new();
    let mut push = |check: Check, r: f64| reports.push(CheckReport::new(check, label, n, r));

    push(Check::Adjointness, adjointness_residual(&ops, &pairs));
    let (cd, cb) = commutation_residuals(&ops, &analytic);
    push(Check::CommutationD, cd);
    push(Check::CommutationB, cb);
    let (md, mb) = mean_free
        .iter()
        .map(|b| mean_zero_residuals(&ops, b))
        .fold((0.0f64, 0.0f64), |(x, y), (a, b)| (x.max(a), y.max(b)));
    push(Check::MeanZeroDstar, md);
    push(Check::MeanZeroBstar, mb);
    let rellich = |sign| {
        with_mean
            .iter()
            .map(|b| rellich_residual(c, &ops, b, sign))
            .fold(0.0f64, f64::max)
    };
    let (rp, rm) = (rellich(1.0), rellich(-1.0));
    push(Check::RellichPlus, rp);
    push(Check::RellichMinus, rm);
    let dual = assemble_via_bnmp(c).map(|b| dual_route_residual(&ops, &b, &with_mean));
    push(Check::DualRoute, dual.unwrap_or(f64::INFINITY));

    let guarded = [
        (Check::SolveResidual, solve_residual(c, &ctx, seed)),
        (Check::Decomposition, decomposition_residual(c, &ctx)),
        (
            Check::DifferentiatedSolve,
            differentiated_solve_residual(c, &ctx),
        ),
        (
            Check::Conditioning,
            ctx.condition_estimate().ok_or(Error::Singular("I + D")),
        ),
        (Check::PhiCompact, phi_compact_residual(c, &ctx)),
        (Check::DirichletTrace, dirichlet_trace_residual(c, &ctx)),
        (Check::NetFlux, net_flux_residual(c, &ctx)),
    ];
    for (check, r) in guarded {
        reports.push(CheckReport::from_result(check, label, n, r));
    }

    let operator_error = reference.map(|r| operator_error(c, &ops, r)).transpose()?;
    Ok(LevelResult {
        reports,
        rellich: rp.max(rm),
        commutation: cd.max(cb),
        operator_error,
    })
}

fn global_level(n: usize) -> Vec<CheckReport> {
    let label = "unit circle";
    let mut out = vec![
        CheckReport::from_result(
            Check::Phi1Symbol,
            label,
            n,
            phi1_symbol_residual(n, SPECTRUM_MODES.min(n / 2 - 1)),
        ),
        CheckReport::from_result(
            Check::Stationarity,
            "circles r=0.5,1,2",
            n,
            stationarity_residual(n, &[0.5, 1.0, 2.0]),
        ),
    ];
    match spectrum_residuals(n, SPECTRUM_MODES.min(n / 2 - 1), SPECTRUM_EPS) {
        Ok((d, z, k)) => {
            out.push(CheckReport::new(Check::SpectrumDiagonal, label, n, d));
            out.push(CheckReport::new(Check::SpectrumZeroModes, label, n, z));
            out.push(CheckReport::new(Check::SpectrumContamination, label, n, k));
        }
        Err(_) => {
            for k in [
                Check::SpectrumDiagonal,
                Check::SpectrumZeroModes,
                Check::SpectrumContamination,
            ] {
                out.push(CheckReport::new(k, label, n, f64::INFINITY));
            }
        }
    }
    let near = "1+0.05cos2t normalized";
    match evolution_residuals(n) {
        Ok((drift, perimeter)) => {
            out.push(CheckReport::new(Check::Conservation, near, n, drift));
            out.push(CheckReport::new(Check::PerimeterDecay, near, n, perimeter));
        }
        Err(_) => {
            out.push(CheckReport::new(
                Check::Conservation,
                near,
                n,
                f64::INFINITY,
            ));
            out.push(CheckReport::new(
                Check::PerimeterDecay,
                near,
                n,
                f64::INFINITY,
            ));
        }
    }
    out
}

/// Runs every check on every contour and grid size with default options.
pub fn run_suite(contours: &[SuiteContour], n_levels: &[usize]) -> Vec<CheckReport> {
    run_suite_with(contours, n_levels, &SuiteOptions::default())
}

/// Runs every check on every contour and grid size.
///
/// Per contour and grid size: operator identities, solves, evolution
/// operator forms and field traces. Per grid size: the unit-circle symbol,
/// spectrum, stationarity and a short conservation run. Per contour and
/// pair of consecutive grid sizes: convergence of the Rellich, commutation
/// and operator-application residuals. Failures are reported, not returned.
pub fn run_suite_with(
    contours: &[SuiteContour],
    n_levels: &[usize],
    opts: &SuiteOptions,
) -> Vec<CheckReport> {
    let mut levels: Vec<usize> = n_levels.to_vec();
    levels.sort_unstable();
    levels.dedup();
    let use_reference = levels.len() > 1 && levels.iter().all(|&n| n < REFERENCE_N);

    let per_contour: Vec<Vec<LevelResult>> = contours
        .par_iter()
        .map(|sc| {
            let reference = if use_reference {
                sc.at(REFERENCE_N).ok().and_then(|c| {
                    let ops = assemble(&c).ok()?;
                    let b = analytic_density(REFERENCE_N).ok()?;
                    Some([
                        ops.apply_d(&b),
                        ops.apply_dstar(&b),
                        ops.apply_b(&b),
                        ops.apply_bstar(&b),
                    ])
                })
            } else {
                None
            };
            levels
                .par_iter()
                .map(|&n| {
                    sc.at(n)
                        .and_then(|c| contour_level(&sc.label, &c, opts, reference.as_ref()))
                        .unwrap_or_else(|_| failed_level(&sc.label, n))
                })
                .collect()
        })
        .collect();
    let globals: Vec<Vec<CheckReport>> = levels.par_iter().map(|&n| global_level(n)).collect();

    let mut out = Vec::new();
    for (sc, results) in contours.iter().zip(&per_contour) {
        for r in results {
            out.extend(r.reports.iter().cloned());
        }
        for (w, pair) in results.windows(2).zip(levels.windows(2)) {
            let fine = pair[1];
            let label = format!("{} {}->{}", sc.label, pair[0], pair[1]);
            out.push(CheckReport::new(
                Check::RellichConvergence,
                label.clone(),
                fine,
                convergence_defect(w[0].rellich, w[1].rellich),
            ));
            out.push(CheckReport::new(
                Check::CommutationConvergence,
                label.clone(),
                fine,
                convergence_defect(w[0].commutation, w[1].commutation),
            ));
            if let (Some(a), Some(b)) = (w[0].operator_error, w[1].operator_error) {
                out.push(CheckReport::new(
                    Check::OperatorConvergence,
                    label,
                    fine,
                    convergence_defect(a, b),
                ));
            }
        }
    }
    for g in globals {
        out.extend(g);
    }
    out
}

/// Machine-readable report: a header and one comma-separated record per check.
pub fn report_csv(reports: &[CheckReport]) -> String {
    let mut s = String::from("name,contour,n,residual,tolerance,pass\n");
    for r in reports {
        s.push_str(&format!(
            "{},\"{}\",{},{:.16e},{:.16e},{}\n",
            r.name, r.contour, r.n, r.residual, r.tolerance, r.pass
        ));
    }
    s
}

/// Human-readable summary with one line per check and a final count.
pub fn report_summary(reports: &[CheckReport]) -> String {
    let mut s = String::new();
    for r in reports {
        s.push_str(&format!(
            "{} {:<24} n={:<5} residual={:.3e} tol={:.1e}  {}\n",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.n,
            r.residual,
            r.tolerance,
            r.contour
        ));
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    s.push_str(&format!("{} checks, {} failed\n", reports.len(), failed));
    s
}
