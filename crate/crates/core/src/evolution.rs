//! The evolution operator `Φ(ρ)[ρ] = Φ₁ + Φ₂` and time integration of
//! `dρ/dt = Φ(ρ)[ρ]`.
//!
//! Near the circle `Φ` behaves like the multiplier `|k|(1 - k²)`, so the
//! explicit RK4 scheme is only stable for modes with
//! `dt·a·|k|(k² - 1) ≤ 2.78`, `a = max ρ/ω³`. The RK4 stepper therefore
//! integrates the band-truncated field `P_K Φ(P_K ρ)`, where `K` is the
//! largest mode inside that region scaled by `cfl_safety`. The semi-implicit
//! stepper treats `a(|k|³ - |k|)` implicitly and needs no truncation.

use crate::error::{Error, Result};
use crate::geometry::{normalize_contour, RadialContour, Vec2};
use crate::layer_solve::SolveContext;
use crate::singular_ops::assemble_with;
use crate::spectral::SpectralFunction;

/// Real-axis extent of the classical RK4 stability region.
const RK4_STABILITY: f64 = 2.785;
/// Smallest admissible retained band for the RK4 stepper.
const MIN_BAND: usize = 8;
/// Profile minimum below which the polar chart is considered lost.
const MIN_RHO: f64 = 1e-3;
/// Curvature magnitude treated as incipient breakdown.
const MAX_CURVATURE: f64 = 1e3;
/// Number of tracked mode amplitudes, `k = 0..=8`.
pub const TRACKED_MODES: usize = 9;

fn pointwise(
    dealias: bool,
    inputs: &[&SpectralFunction],
    f: impl Fn(&[f64]) -> f64,
) -> SpectralFunction {
    if dealias {
        SpectralFunction::combine_dealiased(inputs, f)
    } else {
        SpectralFunction::combine(inputs, f)
    }
}

/// `Φ₁(ρ)[ρ]` and `Φ₂(ρ)[ρ]` separately.
pub fn phi_parts(
    c: &RadialContour,
    ctx: &SolveContext,
    dealias: bool,
) -> Result<(SpectralFunction, SpectralFunction)> {
    let ops = ctx.operators();
    let a1 = ctx.alpha1_with(c, c.rho(), dealias)?.beta;
    let a2 = ctx.alpha2_with(c, c.rho(), dealias)?.beta;
    let b_a1 = ops.apply_b(&a1);
    let bs_a2 = ops.apply_bstar(&a2);
    let phi1 = pointwise(dealias, &[&b_a1, c.rho()], |v| v[0] / v[1]).d();
    let phi2 = pointwise(dealias, &[&b_a1, &bs_a2, c.rho(), c.drho()], |v| {
        v[3] / (v[2] * v[2]) * v[0] - v[1] / v[2]
    });
    Ok((phi1, phi2))
}

/// `Φ(ρ)[ρ]` through the `α₁`/`α₂` split.
pub fn phi(c: &RadialContour, ctx: &SolveContext) -> Result<SpectralFunction> {
    phi_with(c, ctx, false)
}

pub fn phi_with(c: &RadialContour, ctx: &SolveContext, dealias: bool) -> Result<SpectralFunction> {
    let (p1, p2) = phi_parts(c, ctx, dealias)?;
    Ok(&p1 + &p2)
}

/// `Φ(ρ)[ρ] = -(1/ρ) 𝔹*[β']` with `(1 + 𝔻)β` equal to the full curvature.
pub fn phi_compact(c: &RadialContour, ctx: &SolveContext) -> Result<SpectralFunction> {
    phi_compact_with(c, ctx, false)
}

pub fn phi_compact_with(
    c: &RadialContour,
    ctx: &SolveContext,
    dealias: bool,
) -> Result<SpectralFunction> {
    ctx.check_contour(c)?;
    let beta = ctx.solve_dirichlet(&c.curvature_with(dealias))?.beta;
    let bs = ctx.operators().apply_bstar(&beta.d());
    Ok(pointwise(dealias, &[&bs, c.rho()], |v| -v[0] / v[1]))
}

/// `Φ₁(ρ)[h] = (𝔹(ρ)[α₁(ρ)[h]] / ρ)'` for an arbitrary direction `h`.
pub fn phi1_apply(
    c: &RadialContour,
    ctx: &SolveContext,
    h: &SpectralFunction,
) -> Result<SpectralFunction> {
    let a1 = ctx.alpha1(c, h)?.beta;
    let b_a1 = ctx.operators().apply_b(&a1);
    Ok(SpectralFunction::combine(&[&b_a1, c.rho()], |v| v[0] / v[1]).d())
}

/// Assembles a fresh context and evaluates `Φ(ρ)[ρ]`.
pub fn evaluate_phi(c: &RadialContour, dealias: bool) -> Result<SpectralFunction> {
    phi_with(c, &SolveContext::new(c)?, dealias)
}

/// Time integrator choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rk4,
    SemiImplicit,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rk4" => Ok(Self::Rk4),
            "semi-implicit" | "semi_implicit" | "imex" => Ok(Self::SemiImplicit),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperConfig {
    pub method: Method,
    pub dt: f64,
    pub t_end: f64,
    /// Fraction of the RK4 stability limit allowed for the retained band.
    pub cfl_safety: f64,
    pub dealias: bool,
    /// Renormalize area and centroid every this many steps.
    pub renormalize_every: Option<usize>,
    /// Record a state every this many steps (the final state is always kept).
    pub cadence: usize,
    /// Optional cap on the retained band for RK4.
    pub max_mode: Option<usize>,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            dt: 1e-4,
            t_end: 1.0,
            cfl_safety: 0.9,
            dealias: true,
            renormalize_every: None,
            cadence: 100,
            max_mode: None,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Config(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if self.cadence == 0 {
            return Err(Error::Config("cadence must be at least 1".into()));
        }
        if self.renormalize_every == Some(0) {
            return Err(Error::Config("renormalize_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Scalar summaries of a contour.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub area: f64,
    pub centroid_moment: Vec2,
    pub perimeter: f64,
    pub min_rho: f64,
    pub max_rho: f64,
    pub max_curvature: f64,
    pub h1_norm: f64,
    pub h3_norm: f64,
    /// Cosine/sine amplitude `√(a_k² + b_k²)` of mode `k`; entry 0 is the mean.
    pub modes: [f64; TRACKED_MODES],
}

impl Diagnostics {
    pub fn of(c: &RadialContour) -> Self {
        let rho = c.rho();
        let mut modes = [0.0; TRACKED_MODES];
        for (k, m) in modes.iter_mut().enumerate() {
            let scale = if k == 0 { 1.0 } else { 2.0 };
            *m = scale * rho.coeff(k as i64).norm();
        }
        Self {
            area: c.area(),
            centroid_moment: c.centroid_moment(),
            perimeter: c.perimeter(),
            min_rho: rho.min(),
            max_rho: rho.max(),
            max_curvature: c.curvature().max_abs(),
            h1_norm: rho.sobolev_norm(1.0),
            h3_norm: rho.sobolev_norm(3.0),
            modes,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionState {
    pub t: f64,
    pub step: usize,
    pub contour: RadialContour,
    pub diagnostics: Diagnostics,
}

impl EvolutionState {
    pub fn new(contour: RadialContour, t: f64) -> Self {
        let diagnostics = Diagnostics::of(&contour);
        Self {
            t,
            step: 0,
            contour,
            diagnostics,
        }
    }

    fn advanced(&self, rho: SpectralFunction, dt: f64) -> Result<Self> {
        let t = self.t + dt;
        if let Some(index) = rho.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::Breakdown {
                t,
                reason: format!("non-finite profile sample at index {index}"),
            });
        }
        let min = rho.min();
        if min < MIN_RHO {
            return Err(Error::Breakdown {
                t,
                reason: format!("min ρ = {min:e} below {MIN_RHO:e}"),
            });
        }
        let contour = RadialContour::new(rho)?;
        let diagnostics = Diagnostics::of(&contour);
        if diagnostics.max_curvature > MAX_CURVATURE {
            return Err(Error::Breakdown {
                t,
                reason: format!(
                    "max |κ| = {:e} above {MAX_CURVATURE:e}",
                    diagnostics.max_curvature
                ),
            });
        }
        Ok(Self {
            t,
            step: self.step + 1,
            contour,
            diagnostics,
        })
    }
}

/// Leading-order coefficient `max ρ/ω³` of the third-order part of `Φ`.
fn leading_coefficient(c: &RadialContour) -> f64 {
    SpectralFunction::combine(&[c.rho(), c.omega()], |v| v[0] / v[1].powi(3)).max()
}

/// Largest mode kept by the RK4 stepper on contour `c`.
pub fn stable_band(c: &RadialContour, cfg: &StepperConfig) -> Result<usize> {
    let a = leading_coefficient(c);
    let limit = cfg.cfl_safety * RK4_STABILITY / (cfg.dt * a);
    let nyquist = c.n() / 2 - 1;
    let cap = cfg.max_mode.unwrap_or(nyquist).min(nyquist);
    let mut k = 1usize;
    while k < cap {
        let next = (k + 1) as f64;
        if next * (next * next - 1.0) > limit {
            break;
        }
        k += 1;
    }
    if k < MIN_BAND.min(cap) {
        return Err(Error::Config(format!(
            "dt = {} leaves only modes up to {k} inside the RK4 stability region",
            cfg.dt
        )));
    }
    Ok(k)
}

fn axpy(x: &SpectralFunction, a: f64, y: &SpectralFunction) -> SpectralFunction {
    SpectralFunction::combine(&[x, y], |v| v[0] + a * v[1])
}

/// Steps between refactorizations of the second-kind systems. In between,
/// solves run on the older factors with iterative refinement.
const REFACTOR_EVERY: usize = 8;

/// Time stepper holding the factorization cache shared by consecutive
/// evaluations of `Φ`.
#[derive(Debug)]
pub struct Stepper {
    cfg: StepperConfig,
    factors: Option<SolveContext>,
    steps_since_factor: usize,
}

impl Stepper {
    pub fn new(cfg: StepperConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            factors: None,
            steps_since_factor: 0,
        })
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    fn phi_at(&mut self, c: &RadialContour) -> Result<SpectralFunction> {
        // Matrices solved on borrowed factors skip the transpose check; it
        // runs whenever the factors are renewed.
        if let Some(base) = &self.factors {
            let ctx = SolveContext::reusing_factors(assemble_with(c, false)?, base)?;
            match phi_with(c, &ctx, self.cfg.dealias) {
                Err(Error::Residual { .. }) => {}
                other => return other,
            }
        }
        let ctx = SolveContext::new(c)?;
        let out = phi_with(c, &ctx, self.cfg.dealias);
        self.factors = Some(ctx);
        self.steps_since_factor = 0;
        out
    }

    fn field(&mut self, rho: &SpectralFunction, band: usize) -> Result<SpectralFunction> {
        let c = RadialContour::new(rho.clone())?;
        Ok(self.phi_at(&c)?.project_band(band))
    }

    /// Advances `state` by `dt`.
    pub fn step_by(&mut self, state: &EvolutionState, dt: f64) -> Result<EvolutionState> {
        if self.steps_since_factor >= REFACTOR_EVERY {
            self.factors = None;
        }
        self.steps_since_factor += 1;
        let c = &state.contour;
        let rho = c.rho();
        let t = state.t;
        let fail = |e: Error| match e {
            Error::Breakdown { .. } | Error::Config(_) => e,
            other => Error::Breakdown {
                t,
                reason: other.to_string(),
            },
        };
        let next = match self.cfg.method {
            Method::Rk4 => {
                let band = stable_band(
                    c,
                    &StepperConfig {
                        dt,
                        ..self.cfg.clone()
                    },
                )?;
                let rho0 = rho.project_band(band);
                let k1 = self.field(&rho0, band).map_err(fail)?;
                let k2 = self
                    .field(&axpy(&rho0, 0.5 * dt, &k1), band)
                    .map_err(fail)?;
                let k3 = self
                    .field(&axpy(&rho0, 0.5 * dt, &k2), band)
                    .map_err(fail)?;
                let k4 = self.field(&axpy(&rho0, dt, &k3), band).map_err(fail)?;
                SpectralFunction::combine(&[&rho0, &k1, &k2, &k3, &k4], |v| {
                    v[0] + dt / 6.0 * (v[1] + 2.0 * v[2] + 2.0 * v[3] + v[4])
                })
            }
            Method::SemiImplicit => {
                let a = leading_coefficient(c);
                let lam = |k: i64| {
                    let k = k.unsigned_abs() as f64;
                    k * k * k - k
                };
                let p = self.phi_at(c).map_err(fail)?;
                let explicit = axpy(rho, dt, &(&p + &rho.fourier_multiplier(|k| a * lam(k))));
                explicit.fourier_multiplier(|k| 1.0 / (1.0 + a * dt * lam(k)))
            }
        };
        state.advanced(next, dt)
    }

    /// Advances `state` by the configured step.
    pub fn step(&mut self, state: &EvolutionState) -> Result<EvolutionState> {
        self.step_by(state, self.cfg.dt)
    }
}

/// Advances one step of the configured length with fresh factorizations.
pub fn step(state: &EvolutionState, cfg: &StepperConfig) -> Result<EvolutionState> {
    Stepper::new(cfg.clone())?.step(state)
}

/// Recorded states of a run; `abort` holds the error that ended it early.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<EvolutionState>,
    pub abort: Option<Error>,
}

impl Trajectory {
    pub fn last(&self) -> &EvolutionState {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn completed(&self) -> bool {
        self.abort.is_none()
    }

    /// Largest `|area - π|/π` and `|centroid moment|` over recorded states,
    /// measured against the initial values.
    pub fn max_drift(&self) -> (f64, f64) {
        let first = &self.states[0].diagnostics;
        self.states.iter().fold((0.0, 0.0), |(da, dm), s| {
            let d = &s.diagnostics;
            let m = [
                d.centroid_moment[0] - first.centroid_moment[0],
                d.centroid_moment[1] - first.centroid_moment[1],
            ];
            (
                f64::max(da, (d.area - first.area).abs() / first.area),
                f64::max(dm, m[0].hypot(m[1])),
            )
        })
    }
}

/// Integrates from `initial` to `cfg.t_end`.
pub fn run(initial: &RadialContour, cfg: &StepperConfig) -> Result<Trajectory> {
    let mut stepper = Stepper::new(cfg.clone())?;
    let steps = (cfg.t_end / cfg.dt - 1e-9).ceil().max(1.0) as usize;
    let mut state = EvolutionState::new(initial.clone(), 0.0);
    let mut states = vec![state.clone()];
    for i in 0..steps {
        let dt = if i + 1 == steps {
            cfg.t_end - state.t
        } else {
            cfg.dt
        };
        let mut next = match stepper.step_by(&state, dt) {
            Ok(s) => s,
            Err(e) => {
                if states.last().map(|s| s.step) != Some(state.step) {
                    states.push(state);
                }
                return Ok(Trajectory {
                    states,
                    abort: Some(e),
                });
            }
        };
        if let Some(every) = cfg.renormalize_every {
            if next.step % every == 0 {
                match normalize_contour(&next.contour) {
                    Ok(c) => {
                        next = EvolutionState {
                            contour: c.clone(),
                            diagnostics: Diagnostics::of(&c),
                            ..next
                        }
                    }
                    Err(e) => {
                        states.push(next);
                        return Ok(Trajectory {
                            states,
                            abort: Some(e),
                        });
                    }
                }
            }
        }
        state = next;
        if state.step.is_multiple_of(cfg.cadence) || i + 1 == steps {
            states.push(state.clone());
        }
    }
    Ok(Trajectory {
        states,
        abort: None,
    })
}

/// Least-squares slope of `ln(amplitude)` against `t` for mode `k` over the
/// recorded states with `t ∈ [t0, t1]`.
pub fn fit_decay_rate(states: &[EvolutionState], k: usize, t0: f64, t1: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = states
        .iter()
        .filter(|s| s.t >= t0 - 1e-12 && s.t <= t1 + 1e-12)
        .filter_map(|s| {
            let a = *s.diagnostics.modes.get(k)?;
            (a > 0.0).then(|| (s.t, a.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mt, my) = (st / m, sy / m);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), p| {
        (a + (p.0 - mt) * (p.1 - my), b + (p.0 - mt).powi(2))
    });
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Dominant non-trivial mode (`k ≥ 2`) by amplitude in a state.
pub fn dominant_mode(state: &EvolutionState) -> usize {
    (2..TRACKED_MODES)
        .max_by(|&a, &b| state.diagnostics.modes[a].total_cmp(&state.diagnostics.modes[b]))
        .unwrap_or(2)
}

/// `|k|(1 - k²)`, the symbol of the linearization at the unit circle.
pub fn circle_symbol(k: i64) -> f64 {
    let k = k.unsigned_abs() as f64;
    k * (1.0 - k * k)
}
