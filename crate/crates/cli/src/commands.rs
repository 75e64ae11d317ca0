//! The four subcommands.

use std::fs;
use std::path::Path;

use hsflow_core::evolution::{circle_symbol, dominant_mode, fit_decay_rate, run};
use hsflow_core::geometry::normalize_contour;
use hsflow_core::layer_solve::solve_dirichlet_density;
use hsflow_core::validation::{
    linearization_spectrum, report_csv, report_summary, run_suite_with, standard_family,
    Corruption, SuiteContour, SuiteOptions,
};
use hsflow_core::{field, RadialContour, SpectralFunction};

use crate::config::{ConfigError, Datum, RunConfig};
use crate::output::{self, float};

/// Process outcome of a subcommand.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Success,
    ConfigError(String),
    RuntimeAbort(String),
    ValidationFailed(usize),
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::ConfigError(_) => 2,
            Outcome::RuntimeAbort(_) => 3,
            Outcome::ValidationFailed(_) => 4,
        }
    }
}

impl From<ConfigError> for Outcome {
    fn from(e: ConfigError) -> Self {
        Outcome::ConfigError(e.0)
    }
}

fn abort(e: impl std::fmt::Display) -> Outcome {
    Outcome::RuntimeAbort(e.to_string())
}

fn prepare_output(dir: &Path) -> Result<(), Outcome> {
    fs::create_dir_all(dir).map_err(|e| abort(format!("{}: {e}", dir.display())))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Outcome> {
    output::write(dir, name, contents)
        .map_err(|e| abort(format!("{}: {e}", dir.join(name).display())))
}

fn starting_contour(cfg: &RunConfig) -> Result<RadialContour, Outcome> {
    let c = cfg.initial_contour()?;
    if cfg.normalize {
        normalize_contour(&c)
            .map_err(|e| Outcome::ConfigError(format!("profile cannot be normalized: {e}")))
    } else {
        Ok(c)
    }
}

fn into_outcome(r: Result<Outcome, Outcome>) -> Outcome {
    r.unwrap_or_else(|e| e)
}

/// Runs the evolution and writes `diagnostics.csv`, `snapshots.csv` and
/// `summary.csv`.
pub fn simulate(cfg: &RunConfig) -> Outcome {
    into_outcome((|| {
        let c = starting_contour(cfg)?;
        let stepper = cfg.stepper()?;
        prepare_output(&cfg.output_dir)?;
        let traj = run(&c, &stepper).map_err(abort)?;
        let dir = &cfg.output_dir;
        write(dir, "diagnostics.csv", &output::diagnostics_csv(&traj))?;
        write(dir, "snapshots.csv", &output::snapshots_csv(&traj))?;

        let last = traj.last();
        let t_end = last.t;
        let [t0, t1] = cfg
            .fit_window
            .unwrap_or([0.2 * t_end.min(1.0), 0.8 * t_end.min(1.0)]);
        let mode = dominant_mode(&traj.states[0]);
        let nontrivial = traj.states[0].diagnostics.modes[mode] > 1e-12;
        let rate = nontrivial
            .then(|| fit_decay_rate(&traj.states, mode, t0, t1))
            .flatten();
        let d = &last.diagnostics;
        let status = match &traj.abort {
            None => "completed".to_string(),
            Some(e) => format!("\"aborted: {e}\""),
        };
        let records = [
            ("status", status),
            ("profile", format!("\"{}\"", cfg.profile_label())),
            ("n", cfg.n.to_string()),
            ("method", cfg.method.clone()),
            ("dt", float(cfg.dt)),
            ("t_final", float(t_end)),
            ("steps", last.step.to_string()),
            ("area", float(d.area)),
            ("centroid_x", float(d.centroid_moment[0])),
            ("centroid_y", float(d.centroid_moment[1])),
            ("perimeter", float(d.perimeter)),
            ("min_rho", float(d.min_rho)),
            ("max_rho", float(d.max_rho)),
            ("max_curv", float(d.max_curvature)),
            (
                "dominant_mode",
                if nontrivial {
                    mode.to_string()
                } else {
                    "none".into()
                },
            ),
            ("decay_rate", rate.map_or("none".into(), float)),
            ("fit_t0", float(t0)),
            ("fit_t1", float(t1)),
        ];
        write(dir, "summary.csv", &output::key_value_csv(&records))?;
        println!(
            "{} at t = {} after {} steps; decay rate of mode {}: {}",
            if traj.abort.is_none() {
                "completed"
            } else {
                "aborted"
            },
            t_end,
            last.step,
            mode,
            rate.map_or("none".into(), |r| format!("{r:.6}"))
        );
        Ok(match traj.abort {
            None => Outcome::Success,
            Some(e) => abort(e),
        })
    })())
}

/// Runs the conformance suite and writes `validation.csv` and
/// `validation_summary.txt`.
pub fn validate(cfg: &RunConfig, corrupt_matrix: bool) -> Outcome {
    into_outcome((|| {
        let mut contours = Vec::new();
        if cfg.builtin_family {
            for p in standard_family() {
                contours.push(SuiteContour::from_profile(&p).map_err(abort)?);
            }
        }
        if cfg.has_user_profile() || contours.is_empty() {
            let c = starting_contour(cfg)?;
            contours.push(SuiteContour::new(cfg.profile_label(), c.rho().clone()));
        }
        let opts = SuiteOptions {
            seed: cfg.seed,
            corruption: corrupt_matrix.then(Corruption::default),
        };
        prepare_output(&cfg.output_dir)?;
        let reports = run_suite_with(&contours, &cfg.levels, &opts);
        let summary = report_summary(&reports);
        write(&cfg.output_dir, "validation.csv", &report_csv(&reports))?;
        write(&cfg.output_dir, "validation_summary.txt", &summary)?;
        print!("{summary}");
        let failed = reports.iter().filter(|r| !r.pass).count();
        Ok(if failed == 0 {
            Outcome::Success
        } else {
            Outcome::ValidationFailed(failed)
        })
    })())
}

/// Linearization spectrum at the configured contour, written to
/// `spectrum.csv`.
pub fn spectrum(cfg: &RunConfig) -> Outcome {
    into_outcome((|| {
        let c = starting_contour(cfg)?;
        prepare_output(&cfg.output_dir)?;
        let entries = linearization_spectrum(&c, cfg.k_max, cfg.eps).map_err(abort)?;
        let expected = |k: usize| circle_symbol(k as i64);
        write(
            &cfg.output_dir,
            "spectrum.csv",
            &output::spectrum_csv(&entries, expected),
        )?;
        for e in &entries {
            println!(
                "k={:<3} {:?}  eigenvalue={:>14.6}  circle symbol={:>8}  contamination={:.2e}",
                e.mode,
                e.parity,
                e.eigenvalue,
                expected(e.mode),
                e.contamination
            );
        }
        Ok(Outcome::Success)
    })())
}

/// Pressure and gradient at the configured points, written to `field.csv`.
pub fn field(cfg: &RunConfig) -> Outcome {
    into_outcome((|| {
        let c = starting_contour(cfg)?;
        let datum = match cfg.datum {
            Datum::Curvature => c.curvature(),
            Datum::One => SpectralFunction::constant(c.n(), 1.0).map_err(abort)?,
        };
        prepare_output(&cfg.output_dir)?;
        let beta = solve_dirichlet_density(&c, &datum, 1.0).map_err(abort)?;
        let points = cfg.field_points();
        let samples = field::evaluate(&c, &beta, &points).map_err(abort)?;
        write(
            &cfg.output_dir,
            "field.csv",
            &output::field_csv(&points, &samples),
        )?;
        let flagged = samples.iter().filter(|s| s.is_err()).count();
        println!("{} points, {} flagged", points.len(), flagged);
        Ok(Outcome::Success)
    })())
}
