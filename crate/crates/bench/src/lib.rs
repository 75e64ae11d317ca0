//! Shared fixtures for the benchmarks under `benches/`.

use hsflow_core::{FourierProfile, RadialContour};

/// Three-mode contour used by every benchmark.
pub fn fixture(n: usize) -> RadialContour {
    FourierProfile::new(1.0, &[(2, 0.15, 0.0), (3, 0.0, 0.1)])
        .contour(n)
        .expect("fixture profile is admissible")
}
