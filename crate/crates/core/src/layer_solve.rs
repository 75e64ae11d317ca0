//! Second-kind solves for the layer densities.
//!
//! `(λ + 𝔻)β = φ` is solved on the full space. `(λ - 𝔻*)γ = ψ` is solved on
//! the mean-zero subspace through the bordered system
//!
//! ```text
//! [ λI - D*   1 ] [γ]   [ψ]
//! [ 1ᵀ/n      0 ] [μ] = [0]
//! ```
//!
//! which stays nonsingular at `λ = 1`, where `I - D*` has a one-dimensional
//! kernel.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};
use crate::geometry::RadialContour;
use crate::singular_ops::{assemble, OperatorMatrices};
use crate::spectral::SpectralFunction;

/// Relative residual accepted from a dense solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// A solved density together with its solve diagnostics.
#[derive(Debug, Clone)]
pub struct LayerDensity {
    pub beta: SpectralFunction,
    /// Discrete L2 residual of the linear system.
    pub residual_norm: f64,
    /// 1-norm condition estimate of the system matrix, when requested.
    pub condition_estimate: Option<f64>,
}

/// Relative residual at which iterative refinement stops early.
const REFINE_TARGET: f64 = 1e-14;
const MAX_SWEEPS: usize = 12;

/// LU factors of `I + D` and of the bordered `I - D*`.
///
/// The factors normally belong to the context's own operators. A context
/// built with [`SolveContext::reusing_factors`] keeps the factors of a nearby
/// contour and recovers full accuracy by iterative refinement against its own
/// matrices.
#[derive(Debug, Clone)]
pub struct SolveContext {
    ops: OperatorMatrices,
    plus_d_matrix: DMatrix<f64>,
    minus_dstar_matrix: DMatrix<f64>,
    plus_d: Arc<LU<f64, Dyn, Dyn>>,
    minus_dstar: Arc<LU<f64, Dyn, Dyn>>,
}

fn l2(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() * 2.0 * std::f64::consts::PI / v.len() as f64).sqrt()
}

fn shifted(m: &DMatrix<f64>, lambda: f64, sign: f64) -> DMatrix<f64> {
    let mut a = m * sign;
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    a
}

fn bordered(m: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let mut a = DMatrix::zeros(n + 1, n + 1);
    let mut block = a.view_mut((0, 0), (n, n));
    block.copy_from(m);
    block *= -1.0;
    for i in 0..n {
        a[(i, i)] += lambda;
        a[(i, n)] = 1.0;
        a[(n, i)] = 1.0 / n as f64;
    }
    a
}

fn factor(a: DMatrix<f64>, what: &'static str) -> Result<LU<f64, Dyn, Dyn>> {
    let lu = a.lu();
    let u = lu.u();
    let scale = u.diagonal().amax();
    let tiny = u
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(scale > 0.0) || tiny <= f64::EPSILON * scale * u.nrows() as f64 {
        return Err(Error::Singular(what));
    }
    Ok(lu)
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn condition(a: &DMatrix<f64>, lu: &LU<f64, Dyn, Dyn>) -> Option<f64> {
    lu.try_inverse().map(|inv| one_norm(a) * one_norm(&inv))
}

fn check_rhs(n: usize, f: &SpectralFunction) -> Result<()> {
    if f.n() != n {
        return Err(Error::GridMismatch {
            expected: n,
            found: f.n(),
        });
    }
    if let Some(index) = f.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(())
}

fn check_mean_zero(psi: &SpectralFunction) -> Result<()> {
    let mean = psi.mean();
    if mean.abs() > 1e-12 * psi.max_abs().max(1.0) {
        return Err(Error::NotMeanZero { mean });
    }
    Ok(())
}

/// Solves `a x = rhs` by iterative refinement on the factors `lu` (of `a`
/// or of a nearby matrix) and checks the residual of the leading `n` rows.
fn solve_checked(
    a: &DMatrix<f64>,
    lu: &LU<f64, Dyn, Dyn>,
    rhs: DVector<f64>,
    n: usize,
) -> Result<(Vec<f64>, f64)> {
    let scale = l2(&rhs.as_slice()[..n]);
    let mut x = lu
        .solve(&rhs)
        .ok_or(Error::Singular("LU back-substitution"))?;
    let mut r = &rhs - a * &x;
    let mut residual = l2(&r.as_slice()[..n]);
    for _ in 0..MAX_SWEEPS {
        if residual <= REFINE_TARGET * scale {
            break;
        }
        let Some(dx) = lu.solve(&r) else { break };
        let trial = &x + dx;
        let r_trial = &rhs - a * &trial;
        let res_trial = l2(&r_trial.as_slice()[..n]);
        if !(res_trial < residual) {
            break;
        }
        let improvement = residual / res_trial;
        (x, r, residual) = (trial, r_trial, res_trial);
        if improvement < 2.0 {
            break;
        }
    }
    if !(residual <= RESIDUAL_TOL * scale) && residual > 0.0 {
        return Err(Error::Residual {
            residual,
            tolerance: RESIDUAL_TOL * scale,
        });
    }
    Ok((x.as_slice()[..n].to_vec(), residual))
}

impl SolveContext {
    pub fn new(c: &RadialContour) -> Result<Self> {
        Self::from_operators(assemble(c)?)
    }

    pub fn from_operators(ops: OperatorMatrices) -> Result<Self> {
        let plus_d_matrix = shifted(ops.d(), 1.0, 1.0);
        let minus_dstar_matrix = bordered(ops.dstar(), 1.0);
        let plus_d = factor(plus_d_matrix.clone(), "I + D")?;
        let minus_dstar = factor(minus_dstar_matrix.clone(), "bordered I - D*")?;
        Ok(Self {
            ops,
            plus_d_matrix,
            minus_dstar_matrix,
            plus_d: Arc::new(plus_d),
            minus_dstar: Arc::new(minus_dstar),
        })
    }

    /// Context for `ops` that borrows the factorizations of `base`.
    pub fn reusing_factors(ops: OperatorMatrices, base: &SolveContext) -> Result<Self> {
        if ops.n() != base.n() {
            return Err(Error::GridMismatch {
                expected: base.n(),
                found: ops.n(),
            });
        }
        Ok(Self {
            plus_d_matrix: shifted(ops.d(), 1.0, 1.0),
            minus_dstar_matrix: bordered(ops.dstar(), 1.0),
            ops,
            plus_d: Arc::clone(&base.plus_d),
            minus_dstar: Arc::clone(&base.minus_dstar),
        })
    }

    pub fn operators(&self) -> &OperatorMatrices {
        &self.ops
    }

    pub fn n(&self) -> usize {
        self.ops.n()
    }

    /// Fails when `c` is not the contour the context was built for.
    pub fn check_contour(&self, c: &RadialContour) -> Result<()> {
        if c.fingerprint() != self.ops.fingerprint() || c.n() != self.n() {
            return Err(Error::ContextMismatch);
        }
        Ok(())
    }

    /// `(I + D)β = φ`.
    pub fn solve_dirichlet(&self, phi: &SpectralFunction) -> Result<LayerDensity> {
        check_rhs(self.n(), phi)?;
        let (x, residual_norm) = solve_checked(
            &self.plus_d_matrix,
            &self.plus_d,
            DVector::from_column_slice(phi.values()),
            self.n(),
        )?;
        Ok(LayerDensity {
            beta: SpectralFunction::from_values_unchecked(x),
            residual_norm,
            condition_estimate: None,
        })
    }

    /// `(I - D*)γ = ψ` with `⟨γ⟩ = 0`.
    pub fn solve_adjoint(&self, psi: &SpectralFunction) -> Result<LayerDensity> {
        check_rhs(self.n(), psi)?;
        check_mean_zero(psi)?;
        self.solve_adjoint_unchecked(psi)
    }

    fn solve_adjoint_unchecked(&self, psi: &SpectralFunction) -> Result<LayerDensity> {
        let n = self.n();
        let mut rhs = DVector::zeros(n + 1);
        rhs.as_mut_slice()[..n].copy_from_slice(psi.values());
        let (x, residual_norm) =
            solve_checked(&self.minus_dstar_matrix, &self.minus_dstar, rhs, n)?;
        Ok(LayerDensity {
            beta: SpectralFunction::from_values_unchecked(x),
            residual_norm,
            condition_estimate: None,
        })
    }

    /// `α₁(ρ)[h] = (1 + 𝔻)⁻¹ κ(ρ)[h]`.
    pub fn alpha1(&self, c: &RadialContour, h: &SpectralFunction) -> Result<LayerDensity> {
        self.alpha1_with(c, h, false)
    }

    pub fn alpha1_with(
        &self,
        c: &RadialContour,
        h: &SpectralFunction,
        dealias: bool,
    ) -> Result<LayerDensity> {
        self.check_contour(c)?;
        let (kappa, _) = c.curvature_split_with(h, dealias)?;
        self.solve_dirichlet(&kappa)
    }

    /// `α₂(ρ)[h] = (1 - 𝔻*)⁻¹ λ(ρ)[h]`.
    pub fn alpha2(&self, c: &RadialContour, h: &SpectralFunction) -> Result<LayerDensity> {
        self.alpha2_with(c, h, false)
    }

    pub fn alpha2_with(
        &self,
        c: &RadialContour,
        h: &SpectralFunction,
        dealias: bool,
    ) -> Result<LayerDensity> {
        self.check_contour(c)?;
        // λ(ρ)[h] is mean-free by construction.
        self.solve_adjoint_unchecked(&c.lambda_op_with(h, dealias)?)
    }

    /// 1-norm condition estimate of `I + D`.
    pub fn condition_estimate(&self) -> Option<f64> {
        condition(&self.plus_d_matrix, &self.plus_d_matrix.clone().lu())
    }
}

fn check_lambda(lambda: f64, min: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda.abs() >= min) {
        return Err(Error::Config(format!(
            "spectral parameter {lambda} outside the invertibility range"
        )));
    }
    Ok(())
}

/// `(λ + 𝔻)β = φ` for `λ ≥ 1`, with a condition estimate.
pub fn solve_dirichlet_density(
    c: &RadialContour,
    phi: &SpectralFunction,
    lambda: f64,
) -> Result<LayerDensity> {
    check_lambda(lambda, 1.0)?;
    if lambda < 1.0 {
        return Err(Error::Config(format!(
            "spectral parameter {lambda} must be at least 1"
        )));
    }
    check_rhs(c.n(), phi)?;
    let ops = assemble(c)?;
    let a = shifted(ops.d(), lambda, 1.0);
    let lu = factor(a.clone(), "λ + D")?;
    let (x, residual_norm) =
        solve_checked(&a, &lu, DVector::from_column_slice(phi.values()), c.n())?;
    Ok(LayerDensity {
        beta: SpectralFunction::from_values_unchecked(x),
        residual_norm,
        condition_estimate: condition(&a, &lu),
    })
}

/// `(λ - 𝔻*)γ = ψ` on the mean-zero subspace for `|λ| ≥ 1`.
pub fn solve_adjoint_meanzero(
    c: &RadialContour,
    psi: &SpectralFunction,
    lambda: f64,
) -> Result<LayerDensity> {
    check_lambda(lambda, 1.0)?;
    check_rhs(c.n(), psi)?;
    check_mean_zero(psi)?;
    let n = c.n();
    let ops = assemble(c)?;
    let a = bordered(ops.dstar(), lambda);
    let lu = factor(a.clone(), "bordered λ - D*")?;
    let mut rhs = DVector::zeros(n + 1);
    rhs.as_mut_slice()[..n].copy_from_slice(psi.values());
    let (x, residual_norm) = solve_checked(&a, &lu, rhs, n)?;
    Ok(LayerDensity {
        beta: SpectralFunction::from_values_unchecked(x),
        residual_norm,
        condition_estimate: condition(&a, &lu),
    })
}

pub fn alpha1(c: &RadialContour, h: &SpectralFunction) -> Result<LayerDensity> {
    SolveContext::new(c)?.alpha1(c, h)
}

pub fn alpha2(c: &RadialContour, h: &SpectralFunction) -> Result<LayerDensity> {
    SolveContext::new(c)?.alpha2(c, h)
}
