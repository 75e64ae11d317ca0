//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line.
//!
//! Tests hold a common lock so that the runtime limits are measured without
//! contention from the other criteria.

use std::f64::consts::PI;
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use hsflow_core::evolution::{fit_decay_rate, run, Trajectory};
use hsflow_core::field;
use hsflow_core::geometry::normalize_contour;
use hsflow_core::layer_solve::solve_dirichlet_density;
use hsflow_core::singular_ops::{assemble, assemble_via_bnmp};
use hsflow_core::validation::{
    analytic_density, commutation_residuals, convergence_defect, dual_route_residual,
    phi_compact_residual, rellich_residual, run_suite_with, spectrum_residuals,
    stationarity_residual, test_functions, Corruption, SuiteContour, SuiteOptions, ROUNDOFF_FLOOR,
    SPECTRUM_EPS,
};
use hsflow_core::{FourierProfile, RadialContour, SolveContext, SpectralFunction, StepperConfig};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

const SEED: u64 = 2024;

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(id: u32, title: &str, pass: bool, detail: String) {
    println!(
        "criterion {id:>2} {} {title}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} failed: {detail}");
}

fn family(n: usize) -> Vec<RadialContour> {
    [
        FourierProfile::circle(1.0),
        FourierProfile::new(1.0, &[(1, 0.2, 0.0)]),
        FourierProfile::new(1.0, &[(2, 0.15, 0.0), (3, 0.0, 0.1)]),
    ]
    .iter()
    .map(|p| p.contour(n).unwrap())
    .collect()
}

#[test]
fn c01_circle_operator_identities() {
    let _g = serial();
    let start = Instant::now();
    let n = 128;
    let ops = assemble(&RadialContour::circle(n, 1.0).unwrap()).unwrap();
    let mut d_err = 0.0f64;
    let mut b_err = 0.0f64;
    for beta in test_functions(n, 10, true, SEED).unwrap() {
        d_err = d_err.max(ops.apply_d(&beta).add_constant(-beta.mean()).max_abs());
        b_err = b_err.max((&ops.apply_b(&beta) + &beta.hilbert()).max_abs());
    }
    let elapsed = start.elapsed();
    let pass = d_err <= 1e-10 && b_err <= 1e-10 && elapsed < Duration::from_secs(1);
    verdict(
        1,
        "circle operator identities",
        pass,
        format!("|D - mean| = {d_err:.2e}, |B + H| = {b_err:.2e}, {elapsed:.2?}"),
    );
}

#[test]
fn c02_rellich_identities() {
    let _g = serial();
    let start = Instant::now();
    let n = 256;
    let betas = test_functions(n, 5, true, SEED).unwrap();
    let mut worst = 0.0f64;
    for c in family(n) {
        let ops = assemble(&c).unwrap();
        for b in &betas {
            for sign in [1.0, -1.0] {
                worst = worst.max(rellich_residual(&c, &ops, b, sign));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-6 && elapsed < Duration::from_secs(10);
    verdict(
        2,
        "Rellich identities",
        pass,
        format!("max relative residual {worst:.2e}, {elapsed:.2?}"),
    );
}

#[test]
fn c03_commutation_laws() {
    let _g = serial();
    let residual = |n: usize| {
        let beta = analytic_density(n).unwrap();
        family(n)
            .iter()
            .map(|c| {
                let (d, b) = commutation_residuals(&assemble(c).unwrap(), &beta);
                d.max(b)
            })
            .collect::<Vec<_>>()
    };
    let coarse = residual(128);
    let fine = residual(256);
    let worst = fine.iter().copied().fold(0.0, f64::max);
    let decreasing = coarse
        .iter()
        .zip(&fine)
        .all(|(&c, &f)| convergence_defect(c, f) <= 1.0);
    let pass = worst <= 1e-8 && decreasing;
    verdict(
        3,
        "commutation laws",
        pass,
        format!(
            "n=256 residual {worst:.2e}; n=128 -> 256 per contour {:?} -> {:?} \
             (10x drop or below roundoff floor {ROUNDOFF_FLOOR:.0e})",
            coarse
                .iter()
                .map(|r| format!("{r:.1e}"))
                .collect::<Vec<_>>(),
            fine.iter().map(|r| format!("{r:.1e}")).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn c04_dual_route_assembly() {
    let _g = serial();
    let n = 128;
    let betas = test_functions(n, 5, true, SEED).unwrap();
    let worst = family(n)
        .iter()
        .map(|c| {
            dual_route_residual(
                &assemble(c).unwrap(),
                &assemble_via_bnmp(c).unwrap(),
                &betas,
            )
        })
        .fold(0.0, f64::max);
    verdict(
        4,
        "dual-route assembly",
        worst <= 1e-8,
        format!("max action difference {worst:.2e}"),
    );
}

#[test]
fn c05_formula_equivalence() {
    let _g = serial();
    let n = 256;
    let worst = family(n)
        .iter()
        .map(|c| phi_compact_residual(c, &SolveContext::new(c).unwrap()).unwrap())
        .fold(0.0, f64::max);
    verdict(
        5,
        "split and compact evolution operator",
        worst <= 1e-6,
        format!("max relative difference {worst:.2e}"),
    );
}

#[test]
fn c06_stationarity() {
    let _g = serial();
    let worst = stationarity_residual(128, &[0.5, 1.0, 2.0]).unwrap();
    verdict(
        6,
        "circles are stationary",
        worst <= 1e-9,
        format!("max |Phi(R)[R]| {worst:.2e}"),
    );
}

#[test]
fn c07_spectrum_reproduction() {
    let _g = serial();
    let start = Instant::now();
    let (diag, zero, contamination) = spectrum_residuals(128, 8, SPECTRUM_EPS).unwrap();
    let elapsed = start.elapsed();
    let pass =
        diag <= 1e-3 && zero <= 1e-6 && contamination <= 1e-6 && elapsed < Duration::from_secs(30);
    verdict(
        7,
        "linearization spectrum at the circle",
        pass,
        format!(
            "eigenvalue rel. error {diag:.2e}, zero modes {zero:.2e}, contamination {contamination:.2e}, {elapsed:.2?}"
        ),
    );
}

struct Runs {
    base: Trajectory,
    half: Trajectory,
    base_time: Duration,
    half_time: Duration,
}

fn evolve(amplitude: f64, dt: f64) -> (Trajectory, Duration) {
    let c = FourierProfile::new(1.0, &[(2, amplitude, 0.0)])
        .contour(128)
        .unwrap();
    let c = normalize_contour(&c).unwrap();
    let cfg = StepperConfig {
        dt,
        t_end: 1.0,
        cadence: 10,
        ..StepperConfig::default()
    };
    let start = Instant::now();
    let traj = run(&c, &cfg).unwrap();
    (traj, start.elapsed())
}

fn runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let (base, base_time) = evolve(0.05, 1e-4);
        let (half, half_time) = evolve(0.05, 5e-5);
        Runs {
            base,
            half,
            base_time,
            half_time,
        }
    })
}

/// Largest `|area - π|/π` and `|centroid moment|` over the recorded states.
fn conservation(t: &Trajectory) -> (f64, f64) {
    t.states.iter().fold((0.0f64, 0.0f64), |(a, m), s| {
        let d = &s.diagnostics;
        (
            a.max((d.area - PI).abs() / PI),
            m.max(d.centroid_moment[0].hypot(d.centroid_moment[1])),
        )
    })
}

#[test]
fn c08_conservation() {
    let _g = serial();
    let r = runs();
    let completed = r.base.completed() && r.half.completed();
    let (area, moment) = conservation(&r.base);
    let (area_drift, moment_drift) = r.base.max_drift();
    let (area_drift_half, moment_drift_half) = r.half.max_drift();
    let drift = area_drift.max(moment_drift);
    let drift_half = area_drift_half.max(moment_drift_half);
    let at_floor = drift <= ROUNDOFF_FLOOR && drift_half <= ROUNDOFF_FLOOR;
    let ratio = drift / drift_half;
    let elapsed = r.base_time + r.half_time;
    let pass = completed
        && area <= 1e-8
        && moment <= 1e-7
        && (ratio >= 8.0 || at_floor)
        && elapsed < Duration::from_secs(60);
    verdict(
        8,
        "conservation of area and centroid",
        pass,
        format!(
            "|area-pi|/pi {area:.2e}, |moment| {moment:.2e}; drift dt=1e-4 {drift:.2e}, dt=5e-5 {drift_half:.2e}, \
             ratio {ratio:.2} ({}), runs {:.1?} + {:.1?}",
            if ratio >= 8.0 {
                "order reduction"
            } else if at_floor {
                "both at roundoff floor"
            } else {
                "no reduction"
            },
            r.base_time,
            r.half_time
        ),
    );
}

#[test]
fn c09_decay_rate() {
    let _g = serial();
    let r = runs();
    let rate = fit_decay_rate(&r.base.states, 2, 0.2, 0.8).unwrap();
    let (doubled, _) = evolve(0.1, 1e-4);
    let rate2 = fit_decay_rate(&doubled.states, 2, 0.2, 0.8).unwrap();
    let rel = ((rate + 6.0) / 6.0).abs();
    let change = ((rate2 - rate) / rate).abs();
    let pass = r.base.completed() && doubled.completed() && rel <= 0.05 && change <= 0.01;
    verdict(
        9,
        "decay rate of mode 2",
        pass,
        format!(
            "rate {rate:.6} (error {:.3}%), doubled amplitude {rate2:.6} (change {:.3}%)",
            rel * 100.0,
            change * 100.0
        ),
    );
}

#[test]
fn c10_field_correctness() {
    let _g = serial();
    let circle = RadialContour::circle(128, 1.0).unwrap();
    let one = SpectralFunction::constant(128, 1.0).unwrap();
    let beta = solve_dirichlet_density(&circle, &one, 1.0).unwrap();
    let points: Vec<[f64; 2]> = (0..20)
        .map(|i| {
            let r = 0.85 * (i as f64 + 0.5) / 20.0;
            let a = 2.399963 * i as f64;
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    let unit = field::pressure(&circle, &beta, &points)
        .unwrap()
        .into_iter()
        .map(|u| (u.unwrap() - 1.0).abs())
        .fold(0.0, f64::max);

    let c = FourierProfile::new(1.0, &[(1, 0.2, 0.0), (3, 0.0, 0.1)])
        .contour(128)
        .unwrap();
    let beta = solve_dirichlet_density(&c, &c.curvature(), 1.0).unwrap();
    let h = 1e-3;
    let mut laplacian = 0.0f64;
    for z in [
        [0.0, 0.0],
        [0.3, 0.2],
        [-0.2, -0.15],
        [0.1, -0.4],
        [-0.35, 0.3],
    ] {
        let stencil = [
            z,
            [z[0] + h, z[1]],
            [z[0] - h, z[1]],
            [z[0], z[1] + h],
            [z[0], z[1] - h],
        ];
        let u: Vec<f64> = field::pressure(&c, &beta, &stencil)
            .unwrap()
            .into_iter()
            .map(|u| u.unwrap())
            .collect();
        laplacian = laplacian.max(((u[1] + u[2] + u[3] + u[4] - 4.0 * u[0]) / (h * h)).abs());
    }

    let c = FourierProfile::new(1.0, &[(1, 0.2, 0.0), (3, 0.0, 0.1)])
        .contour(256)
        .unwrap();
    let ctx = SolveContext::new(&c).unwrap();
    let beta = ctx.solve_dirichlet(&c.curvature()).unwrap();
    let trace = field::boundary_normal_derivative(&c, &beta).unwrap();
    let adjoint = ctx.operators().apply_bstar(&beta.beta.d());
    let normal = trace
        .values()
        .iter()
        .zip(adjoint.values())
        .zip(c.omega().values())
        .map(|((t, b), w)| (t - b / w).abs())
        .fold(0.0, f64::max);

    let pass = unit <= 1e-10 && laplacian <= 1e-5 && normal <= 1e-8;
    verdict(
        10,
        "interior field and boundary trace",
        pass,
        format!("|u - 1| {unit:.2e}, 5-point Laplacian {laplacian:.2e}, normal trace vs B* {normal:.2e}"),
    );
}

#[test]
fn c11_negative_controls() {
    let _g = serial();
    let contours =
        [SuiteContour::from_profile(&FourierProfile::new(1.0, &[(1, 0.2, 0.0)])).unwrap()];
    let opts = SuiteOptions {
        seed: SEED,
        corruption: Some(Corruption::default()),
    };
    let reports = run_suite_with(&contours, &[128], &opts);
    let failed = |name: &str| reports.iter().filter(|r| r.name == name).all(|r| !r.pass);
    let library = failed("adjointness") && failed("rellich_plus") && failed("rellich_minus");

    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("validate.toml");
    std::fs::write(&config, "levels = [128]\nbuiltin_family = false\n").unwrap();
    let exe = env!("CARGO_BIN_EXE_hsflow");
    let status = |extra: &[&str]| {
        Command::new(exe)
            .arg("validate")
            .arg(&config)
            .args(extra)
            .output()
            .unwrap()
            .status
            .code()
    };
    let clean = status(&[]);
    let corrupted = status(&["--debug-corrupt-matrix"]);
    let pass = library && clean == Some(0) && corrupted.is_some_and(|c| c != 0);
    let residual = |name: &str| {
        reports
            .iter()
            .find(|r| r.name == name)
            .map_or(f64::NAN, |r| r.residual)
    };
    verdict(
        11,
        "negative controls",
        pass,
        format!(
            "corrupted adjointness {:.2e}, Rellich +/- {:.2e}/{:.2e}; validate exit clean {clean:?}, corrupted {corrupted:?}",
            residual("adjointness"),
            residual("rellich_plus"),
            residual("rellich_minus")
        ),
    );
}
