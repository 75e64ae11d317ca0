//! Plain-text data files. Floats are written with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use hsflow_core::evolution::{Trajectory, TRACKED_MODES};
use hsflow_core::field::FieldSample;
use hsflow_core::validation::{Parity, SpectrumEntry};

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write(dir: &Path, name: &str, contents: &str) -> io::Result<()> {
    fs::write(dir.join(name), contents)
}

/// `t, area, centroid_x, centroid_y, perimeter, min_rho, max_curv, a1..a8`.
pub fn diagnostics_csv(traj: &Trajectory) -> String {
    let mut s = String::from("t,area,centroid_x,centroid_y,perimeter,min_rho,max_curv");
    for k in 1..TRACKED_MODES {
        let _ = write!(s, ",a{k}");
    }
    s.push('\n');
    for st in &traj.states {
        let d = &st.diagnostics;
        let row = [
            st.t,
            d.area,
            d.centroid_moment[0],
            d.centroid_moment[1],
            d.perimeter,
            d.min_rho,
            d.max_curvature,
        ];
        let cells: Vec<String> = row.iter().chain(&d.modes[1..]).map(|v| float(*v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// One row per recorded state: `t` followed by the profile samples.
pub fn snapshots_csv(traj: &Trajectory) -> String {
    let mut s = String::new();
    for st in &traj.states {
        s.push_str(&float(st.t));
        for v in st.contour.rho().values() {
            s.push(',');
            s.push_str(&float(*v));
        }
        s.push('\n');
    }
    s
}

/// `key,value` records.
pub fn key_value_csv(records: &[(&str, String)]) -> String {
    let mut s = String::from("key,value\n");
    for (k, v) in records {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}

/// `mode, parity, eigenvalue, expected, contamination`.
pub fn spectrum_csv(entries: &[SpectrumEntry], expected: impl Fn(usize) -> f64) -> String {
    let mut s = String::from("mode,parity,eigenvalue,expected,contamination\n");
    for e in entries {
        let parity = match e.parity {
            Parity::Cos => "cos",
            Parity::Sin => "sin",
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            e.mode,
            parity,
            float(e.eigenvalue),
            float(expected(e.mode)),
            float(e.contamination)
        );
    }
    s
}

/// `x, y, u, ux, uy, status`; rejected points carry `NaN` values and the
/// rejection reason.
pub fn field_csv(points: &[[f64; 2]], samples: &[hsflow_core::Result<FieldSample>]) -> String {
    let mut s = String::from("x,y,u,ux,uy,status\n");
    for (p, r) in points.iter().zip(samples) {
        let (u, g, status) = match r {
            Ok(f) => (f.u, f.grad_u, "ok".to_string()),
            Err(e) => (f64::NAN, [f64::NAN; 2], format!("\"{e}\"")),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            float(p[0]),
            float(p[1]),
            float(u),
            float(g[0]),
            float(g[1]),
            status
        );
    }
    s
}
