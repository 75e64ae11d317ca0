//! Run configuration read from a flat TOML file.
//!
//! Every key is optional. Relative paths are resolved against the directory
//! containing the configuration file.
//!
//! ```toml
//! n = 128                      # grid size, even and >= 16
//! constant = 1.0               # profile: constant + sum of (mode, cos, sin)
//! modes = [[2, 0.05, 0.0]]
//! # profile_file = "rho.txt"   # alternative: whitespace/comma separated samples
//! normalize = true             # rescale to area pi and zero centroid
//! method = "rk4"               # or "semi-implicit"
//! dt = 1e-4
//! t_end = 1.0
//! cadence = 100                # record every this many steps
//! cfl_safety = 0.9
//! dealias = true
//! renormalize_every = 0        # 0 disables renormalization during runs
//! fit_window = [0.2, 0.8]
//! output_dir = "hsflow-out"
//! seed = 7
//! levels = [128, 256]          # validate: grid sizes
//! builtin_family = true        # validate: include the built-in contours
//! k_max = 8                    # spectrum: highest mode
//! eps = 1e-4                   # spectrum: finite-difference step
//! datum = "curvature"          # field: "curvature" or "one"
//! points = [[0.0, 0.0]]        # field: explicit points
//! grid_min = [-0.5, -0.5]      # field: optional rectangular point grid
//! grid_max = [0.5, 0.5]
//! grid_count = [11, 11]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use hsflow_core::evolution::Method;
use hsflow_core::{FourierProfile, RadialContour, SpectralFunction, StepperConfig};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Datum {
    Curvature,
    One,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub constant: f64,
    pub modes: Vec<(usize, f64, f64)>,
    pub profile_file: Option<PathBuf>,
    pub normalize: bool,
    pub method: String,
    pub dt: f64,
    pub t_end: f64,
    pub cadence: usize,
    pub cfl_safety: f64,
    pub dealias: bool,
    pub renormalize_every: usize,
    pub fit_window: Option<[f64; 2]>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub levels: Vec<usize>,
    pub builtin_family: bool,
    pub k_max: usize,
    pub eps: f64,
    pub datum: Datum,
    pub points: Vec<[f64; 2]>,
    pub grid_min: Option<[f64; 2]>,
    pub grid_max: Option<[f64; 2]>,
    pub grid_count: Option<[usize; 2]>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let stepper = StepperConfig::default();
        Self {
            n: 128,
            constant: 1.0,
            modes: Vec::new(),
            profile_file: None,
            normalize: true,
            method: "rk4".into(),
            dt: stepper.dt,
            t_end: stepper.t_end,
            cadence: stepper.cadence,
            cfl_safety: stepper.cfl_safety,
            dealias: stepper.dealias,
            renormalize_every: 0,
            fit_window: None,
            output_dir: PathBuf::from("hsflow-out"),
            seed: 7,
            levels: vec![128, 256],
            builtin_family: true,
            k_max: 8,
            eps: 1e-4,
            datum: Datum::Curvature,
            points: Vec::new(),
            grid_min: None,
            grid_max: None,
            grid_count: None,
        }
    }
}

/// A configuration problem, reported with exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<hsflow_core::Error> for ConfigError {
    fn from(e: hsflow_core::Error) -> Self {
        Self(e.to_string())
    }
}

fn check_grid(n: usize) -> Result<(), ConfigError> {
    if n < 16 || !n.is_multiple_of(2) {
        return Err(ConfigError(format!(
            "grid size must be even and at least 16, got {n}"
        )));
    }
    Ok(())
}

impl RunConfig {
    /// Reads and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = &cfg.profile_file {
            cfg.profile_file = Some(base.join(p));
        }
        cfg.output_dir = base.join(&cfg.output_dir);
        cfg.check()?;
        Ok(cfg)
    }

    /// Parses configuration text without touching the file system.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    fn check(&self) -> Result<(), ConfigError> {
        check_grid(self.n)?;
        if self.levels.is_empty() {
            return Err(ConfigError(
                "levels must list at least one grid size".into(),
            ));
        }
        for &l in &self.levels {
            check_grid(l)?;
        }
        self.method()?;
        self.stepper()?.validate()?;
        if let Some([t0, t1]) = self.fit_window {
            if !(t0 < t1) {
                return Err(ConfigError(format!("fit window [{t0}, {t1}] is empty")));
            }
        }
        if 2 * self.k_max >= self.n {
            return Err(ConfigError(format!(
                "k_max {} not resolved on {} nodes",
                self.k_max, self.n
            )));
        }
        if !(1e-8..=1e-4).contains(&self.eps) {
            return Err(ConfigError(format!(
                "eps must lie in [1e-8, 1e-4], got {}",
                self.eps
            )));
        }
        if self.grid_min.is_some() != self.grid_max.is_some()
            || self.grid_min.is_some() != self.grid_count.is_some()
        {
            return Err(ConfigError(
                "grid_min, grid_max and grid_count go together".into(),
            ));
        }
        self.initial_contour()?;
        Ok(())
    }

    pub fn method(&self) -> Result<Method, ConfigError> {
        Ok(self.method.parse()?)
    }

    pub fn stepper(&self) -> Result<StepperConfig, ConfigError> {
        Ok(StepperConfig {
            method: self.method()?,
            dt: self.dt,
            t_end: self.t_end,
            cfl_safety: self.cfl_safety,
            dealias: self.dealias,
            renormalize_every: (self.renormalize_every > 0).then_some(self.renormalize_every),
            cadence: self.cadence,
            max_mode: None,
        })
    }

    /// True when the configuration names a profile other than the default.
    pub fn has_user_profile(&self) -> bool {
        self.profile_file.is_some() || !self.modes.is_empty() || self.constant != 1.0
    }

    /// Human-readable description of the initial profile.
    pub fn profile_label(&self) -> String {
        match &self.profile_file {
            Some(p) => p.display().to_string(),
            None => FourierProfile::new(self.constant, &self.modes).to_string(),
        }
    }

    /// The initial profile sampled on `n` nodes, before normalization.
    pub fn profile(&self, n: usize) -> Result<SpectralFunction, ConfigError> {
        match &self.profile_file {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
                let values = text
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|e| ConfigError(format!("{}: `{s}`: {e}", path.display())))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(SpectralFunction::from_values(values)?.resample(n)?)
            }
            None => Ok(FourierProfile::new(self.constant, &self.modes).sample(n)?),
        }
    }

    /// The initial contour at the configured grid size, before normalization.
    pub fn initial_contour(&self) -> Result<RadialContour, ConfigError> {
        Ok(RadialContour::new(self.profile(self.n)?)?)
    }

    /// Explicit points followed by the rectangular grid, row by row.
    pub fn field_points(&self) -> Vec<[f64; 2]> {
        let mut pts = self.points.clone();
        if let (Some(lo), Some(hi), Some([nx, ny])) =
            (self.grid_min, self.grid_max, self.grid_count)
        {
            let coord = |a: f64, b: f64, i: usize, m: usize| {
                if m <= 1 {
                    0.5 * (a + b)
                } else {
                    a + (b - a) * i as f64 / (m - 1) as f64
                }
            };
            for j in 0..ny {
                for i in 0..nx {
                    pts.push([coord(lo[0], hi[0], i, nx), coord(lo[1], hi[1], j, ny)]);
                }
            }
        }
        pts
    }
}
