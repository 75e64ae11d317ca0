//! Nyström discretisation of the singular integral operators on `Γ_ρ`.
//!
//! Two assembly routes are provided:
//!
//! * [`assemble`] works with the geometric kernels directly. The double layer
//!   kernels are continuous and use the plain trapezoid rule with their
//!   analytic diagonal limits. The `𝔹` kernels are split into the circle
//!   kernel `½cot((τ-σ)/2)`, handled exactly by the discrete Hilbert matrix,
//!   plus a continuous remainder.
//! * [`assemble_via_bnmp`] rebuilds the same four operators from the
//!   `B^p_{n,m}` kernel family, with the alternating-point rule for the
//!   principal-value members. It shares no kernel code with the first route
//!   and serves as its cross-check.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{fingerprint, RadialContour};
use crate::spectral::SpectralFunction;

/// Tolerance for the transpose relations checked after assembly.
const ADJOINT_TOL: f64 = 1e-10;

const DUMP_MAGIC: &[u8; 8] = b"HSFLOPS1";

/// Parameters of one member of the `B^p_{n,m}` family: the tangent power
/// `p`, the difference-quotient functions `h_1..h_n` and the profiles
/// `ϱ_1..ϱ_m` in the denominator.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    p: usize,
    h: Vec<SpectralFunction>,
    varrho: Vec<SpectralFunction>,
}

impl KernelSpec {
    pub fn new(p: usize, h: Vec<SpectralFunction>, varrho: Vec<SpectralFunction>) -> Result<Self> {
        if p > h.len() + 1 {
            return Err(Error::InvalidKernel(format!(
                "tangent power {p} exceeds n_h + 1 = {}",
                h.len() + 1
            )));
        }
        let n = varrho
            .first()
            .or(h.first())
            .map(SpectralFunction::n)
            .ok_or_else(|| Error::InvalidKernel("kernel needs at least one function".into()))?;
        for f in h.iter().chain(&varrho) {
            if f.n() != n {
                return Err(Error::GridMismatch {
                    expected: n,
                    found: f.n(),
                });
            }
        }
        for r in &varrho {
            if let Some((index, &value)) = r.values().iter().enumerate().find(|(_, v)| !(**v > 0.0))
            {
                return Err(Error::NonPositiveProfile { index, value });
            }
        }
        if varrho.is_empty() {
            return Err(Error::InvalidKernel("m_rho must be at least 1".into()));
        }
        Ok(Self { p, h, varrho })
    }

    /// All `h_i` and `ϱ_i` equal to one profile.
    pub fn uniform(rho: &SpectralFunction, n_h: usize, m_rho: usize, p: usize) -> Result<Self> {
        Self::new(p, vec![rho.clone(); n_h], vec![rho.clone(); m_rho])
    }

    pub fn p(&self) -> usize {
        self.p
    }
    pub fn n_h(&self) -> usize {
        self.h.len()
    }
    pub fn m_rho(&self) -> usize {
        self.varrho.len()
    }
    pub fn n(&self) -> usize {
        self.varrho[0].n()
    }

    /// Kernel without the `1/π` factor at target `i`, source `j`, `i ≠ j`.
    fn kernel(&self, i: usize, j: usize, cot: f64) -> f64 {
        let mut num = cot.powi((self.n_h() + 1 - self.p) as i32);
        for h in &self.h {
            num *= h.values()[i] - h.values()[j];
        }
        let mut den = 1.0;
        for r in &self.varrho {
            let (a, b) = (r.values()[i], r.values()[j]);
            let q = (a - b) * cot;
            den *= (a + b) * (a + b) + q * q;
        }
        num / den
    }

    /// Continuous extension of the kernel to `s = 0` for `p ≥ 1`.
    fn diagonal(&self, i: usize, dh: &[SpectralFunction], omega2: &[SpectralFunction]) -> f64 {
        if self.p >= 2 {
            return 0.0;
        }
        let num: f64 = dh.iter().map(|d| 2.0 * d.values()[i]).product();
        let den: f64 = omega2.iter().map(|w| 4.0 * w.values()[i]).product();
        num / den
    }
}

/// `cot(π k / n)` for each index offset `k = i - j mod n`; entry 0 is unused.
fn cot_table(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                let x = PI * k as f64 / n as f64;
                x.cos() / x.sin()
            }
        })
        .collect()
}

fn build_rows(n: usize, row: impl Fn(usize, &mut [f64]) + Sync) -> DMatrix<f64> {
    let mut data = vec![0.0; n * n];
    data.par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, r)| row(i, r));
    DMatrix::from_row_slice(n, n, &data)
}

/// Dense matrix of `B^p_{n,m}(ϱ)[h, ·]` acting on grid samples.
pub fn bnmp_matrix(spec: &KernelSpec) -> DMatrix<f64> {
    let n = spec.n();
    let step = 2.0 * PI / n as f64;
    let cot = cot_table(n);
    if spec.p == 0 {
        let w = 2.0 * step / PI;
        return build_rows(n, |i, row| {
            for (j, r) in row.iter_mut().enumerate() {
                let k = (i + n - j) % n;
                if k % 2 == 1 {
                    *r = w * spec.kernel(i, j, cot[k]);
                }
            }
        });
    }
    let dh: Vec<SpectralFunction> = spec.h.iter().map(SpectralFunction::d).collect();
    let omega2: Vec<SpectralFunction> = spec
        .varrho
        .iter()
        .map(|r| SpectralFunction::combine(&[r, &r.d()], |a| a[0] * a[0] + a[1] * a[1]))
        .collect();
    let w = step / PI;
    build_rows(n, |i, row| {
        for (j, r) in row.iter_mut().enumerate() {
            let k = (i + n - j) % n;
            *r = w * if k == 0 {
                spec.diagonal(i, &dh, &omega2)
            } else {
                spec.kernel(i, j, cot[k])
            };
        }
    })
}

/// Applies `B^p_{n,m}(ϱ)[h, β]` at the grid nodes.
pub fn apply_bnmp(spec: &KernelSpec, beta: &SpectralFunction) -> Result<SpectralFunction> {
    if beta.n() != spec.n() {
        return Err(Error::GridMismatch {
            expected: spec.n(),
            found: beta.n(),
        });
    }
    Ok(matvec(&bnmp_matrix(spec), beta))
}

/// Discrete Hilbert transform as a matrix: `(2/n) cot((τ_i-τ_j)/2)` on odd
/// offsets, zero elsewhere. Agrees with the spectral multiplier
/// `-i sign(k)` with the Nyquist mode removed.
pub fn hilbert_matrix(n: usize) -> DMatrix<f64> {
    let cot = cot_table(n);
    let w = 2.0 / n as f64;
    build_rows(n, |i, row| {
        for (j, r) in row.iter_mut().enumerate() {
            let k = (i + n - j) % n;
            if k % 2 == 1 {
                *r = w * cot[k];
            }
        }
    })
}

/// `s → 0` limits of the geometric kernels at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalLimits {
    /// Limit of `(Ξ(τ)-Ξ(σ))·Ξ'(σ)^⊤ / |Ξ(τ)-Ξ(σ)|²`, equal to
    /// `-(ρ² + 2ρ'² - ρρ'') / (2ω²) = -κω/2`. The adjoint kernel has the
    /// opposite sign.
    pub double_layer: Vec<f64>,
    /// Limit of `(Ξ(τ)-Ξ(σ))·Ξ'(σ) / |Ξ(τ)-Ξ(σ)|² - ½cot((τ-σ)/2)`, equal
    /// to `-ρ'(ρ + ρ'') / (2ω²)`. The adjoint remainder has the opposite sign.
    pub b_remainder: Vec<f64>,
}

pub fn diagonal_limits(c: &RadialContour) -> DiagonalLimits {
    let n = c.n();
    let (r, dr, ddr, w) = (
        c.rho().values(),
        c.drho().values(),
        c.d2rho().values(),
        c.omega().values(),
    );
    let mut double_layer = Vec::with_capacity(n);
    let mut b_remainder = Vec::with_capacity(n);
    for j in 0..n {
        let w2 = w[j] * w[j];
        double_layer.push(-(r[j] * r[j] + 2.0 * dr[j] * dr[j] - r[j] * ddr[j]) / (2.0 * w2));
        b_remainder.push(-dr[j] * (r[j] + ddr[j]) / (2.0 * w2));
    }
    DiagonalLimits {
        double_layer,
        b_remainder,
    }
}

/// The four boundary operators of one contour as dense matrices on grid
/// samples.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrices {
    n: usize,
    d: DMatrix<f64>,
    dstar: DMatrix<f64>,
    b: DMatrix<f64>,
    bstar: DMatrix<f64>,
    fingerprint: u64,
}

impl OperatorMatrices {
    pub fn from_parts(
        d: DMatrix<f64>,
        dstar: DMatrix<f64>,
        b: DMatrix<f64>,
        bstar: DMatrix<f64>,
        fingerprint: u64,
    ) -> Result<Self> {
        let n = d.nrows();
        for m in [&d, &dstar, &b, &bstar] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::GridMismatch {
                    expected: n,
                    found: m.nrows().max(m.ncols()),
                });
            }
            if let Some(index) = m.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index });
            }
        }
        Ok(Self {
            n,
            d,
            dstar,
            b,
            bstar,
            fingerprint,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn dstar(&self) -> &DMatrix<f64> {
        &self.dstar
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn bstar(&self) -> &DMatrix<f64> {
        &self.bstar
    }
    /// Fingerprint of the profile the matrices were assembled for.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn apply_d(&self, beta: &SpectralFunction) -> SpectralFunction {
        matvec(&self.d, beta)
    }
    pub fn apply_dstar(&self, beta: &SpectralFunction) -> SpectralFunction {
        matvec(&self.dstar, beta)
    }
    pub fn apply_b(&self, beta: &SpectralFunction) -> SpectralFunction {
        matvec(&self.b, beta)
    }
    pub fn apply_bstar(&self, beta: &SpectralFunction) -> SpectralFunction {
        matvec(&self.bstar, beta)
    }

    /// Largest entrywise violation of `D* = Dᵀ` and `B* = Bᵀ`.
    pub fn adjointness_defect(&self) -> f64 {
        let n = self.n;
        let gap = |m: &DMatrix<f64>, adj: &DMatrix<f64>| {
            let (m, adj) = (m.as_slice(), adj.as_slice());
            let mut worst = 0.0f64;
            for (j, col) in adj.chunks_exact(n).enumerate() {
                for (i, a) in col.iter().enumerate() {
                    let d = (a - m[i * n + j]).abs();
                    if d > worst {
                        worst = d;
                    }
                }
            }
            worst
        };
        gap(&self.d, &self.dstar).max(gap(&self.b, &self.bstar))
    }

    /// Copy with one entry of `D` shifted by `delta`. Used to check that the
    /// validation suite notices a damaged operator.
    pub fn with_perturbed_d(&self, i: usize, j: usize, delta: f64) -> Self {
        let mut out = self.clone();
        out.d[(i, j)] += delta;
        out
    }

    /// Writes the matrices as an 8-byte magic, `n` and the fingerprint as
    /// little-endian `u64`, then `D`, `D*`, `B`, `B*` row-major as
    /// little-endian `f64`.
    pub fn write_dump(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&self.fingerprint.to_le_bytes())?;
        for m in [&self.d, &self.dstar, &self.b, &self.bstar] {
            for i in 0..self.n {
                for j in 0..self.n {
                    w.write_all(&m[(i, j)].to_le_bytes())?;
                }
            }
        }
        w.flush()
    }

    pub fn read_dump(mut r: impl Read) -> Result<Self> {
        let io = |e: std::io::Error| Error::Dump(e.to_string());
        let mut word = [0u8; 8];
        r.read_exact(&mut word).map_err(io)?;
        if &word != DUMP_MAGIC {
            return Err(Error::Dump("bad magic".into()));
        }
        r.read_exact(&mut word).map_err(io)?;
        let n = u64::from_le_bytes(word) as usize;
        if n == 0 || n > 1 << 16 {
            return Err(Error::Dump(format!("implausible grid size {n}")));
        }
        r.read_exact(&mut word).map_err(io)?;
        let fp = u64::from_le_bytes(word);
        let mut mats = Vec::with_capacity(4);
        let mut buf = vec![0u8; n * n * 8];
        for _ in 0..4 {
            r.read_exact(&mut buf).map_err(io)?;
            let vals: Vec<f64> = buf
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
                .collect();
            mats.push(DMatrix::from_row_slice(n, n, &vals));
        }
        let bstar = mats.pop().expect("four matrices");
        let b = mats.pop().expect("four matrices");
        let dstar = mats.pop().expect("four matrices");
        let d = mats.pop().expect("four matrices");
        Self::from_parts(d, dstar, b, bstar, fp)
    }
}

pub(crate) fn matvec(m: &DMatrix<f64>, beta: &SpectralFunction) -> SpectralFunction {
    assert_eq!(m.ncols(), beta.n(), "operator and density grids differ");
    let v = m * DVector::from_column_slice(beta.values());
    SpectralFunction::from_values_unchecked(v.as_slice().to_vec())
}

fn check_adjoint(m: &OperatorMatrices) -> Result<()> {
    let defect = m.adjointness_defect();
    if defect > ADJOINT_TOL {
        return Err(Error::Residual {
            residual: defect,
            tolerance: ADJOINT_TOL,
        });
    }
    Ok(())
}

/// Geometric-kernel assembly; the production route.
pub fn assemble(c: &RadialContour) -> Result<OperatorMatrices> {
    assemble_with(c, true)
}

/// Geometric-kernel assembly; `verify` enables the transpose check.
pub(crate) fn assemble_with(c: &RadialContour, verify: bool) -> Result<OperatorMatrices> {
    let n = c.n();
    let w = 2.0 / n as f64;
    let (px, py): (Vec<f64>, Vec<f64>) = c.position().iter().map(|p| (p[0], p[1])).unzip();
    let (tx, ty): (Vec<f64>, Vec<f64>) = c.xi_prime().iter().map(|p| (p[0], p[1])).unzip();
    let lim = diagonal_limits(c);
    // cot((τ_i - τ_j)/2) for i = 0..n sits at [n - j .. 2n - j] of the
    // doubled tables; the Hilbert weights vanish on even offsets.
    let cot = cot_table(n);
    let half_cot: Vec<f64> = (0..2 * n).map(|m| 0.5 * cot[m % n]).collect();
    let hil: Vec<f64> = (0..2 * n)
        .map(|m| if m % 2 == 1 { w * cot[m % n] } else { 0.0 })
        .collect();

    // Entries are filled one source column at a time, straight into the
    // column-major storage; every adjoint entry comes from its own kernel.
    let mut bufs = [
        vec![0.0; n * n],
        vec![0.0; n * n],
        vec![0.0; n * n],
        vec![0.0; n * n],
    ];
    let [d, dstar, b, bstar] = &mut bufs;
    d.par_chunks_mut(n)
        .zip(dstar.par_chunks_mut(n))
        .zip(b.par_chunks_mut(n).zip(bstar.par_chunks_mut(n)))
        .enumerate()
        .for_each(|(j, ((d, dstar), (b, bstar)))| {
            let (xj, yj, txj, tyj) = (px[j], py[j], tx[j], ty[j]);
            let hc = &half_cot[n - j..2 * n - j];
            let hl = &hil[n - j..2 * n - j];
            for i in 0..n {
                let (dx, dy) = (px[i] - xj, py[i] - yj);
                let inv = 1.0 / (dx * dx + dy * dy);
                d[i] = -w * (dx * tyj - dy * txj) * inv;
                dstar[i] = w * (dx * ty[i] - dy * tx[i]) * inv;
                b[i] = -hl[i] - w * ((dx * txj + dy * tyj) * inv - hc[i]);
                bstar[i] = hl[i] + w * ((dx * tx[i] + dy * ty[i]) * inv - hc[i]);
            }
            d[j] = -w * lim.double_layer[j];
            dstar[j] = d[j];
            b[j] = -w * lim.b_remainder[j];
            bstar[j] = b[j];
        });
    let [d, dstar, b, bstar] = bufs.map(|v| DMatrix::from_vec(n, n, v));
    let m = OperatorMatrices::from_parts(d, dstar, b, bstar, c.fingerprint())?;
    if verify {
        check_adjoint(&m)?;
    }
    Ok(m)
}

/// Assembly through the `B^p_{n,m}` combination identities.
pub fn assemble_via_bnmp(c: &RadialContour) -> Result<OperatorMatrices> {
    let rho = c.rho();
    let b2_11 = bnmp_matrix(&KernelSpec::uniform(rho, 1, 1, 2)?);
    let b0_11 = bnmp_matrix(&KernelSpec::uniform(rho, 1, 1, 0)?);
    let b1_01 = bnmp_matrix(&KernelSpec::uniform(rho, 0, 1, 1)?);
    let b0_01 = bnmp_matrix(&KernelSpec::uniform(rho, 0, 1, 0)?);
    let r = DMatrix::from_diagonal(&DVector::from_column_slice(rho.values()));
    let dr = DMatrix::from_diagonal(&DVector::from_column_slice(c.drho().values()));

    let b_sum = &b2_11 + &b0_11;
    let d = -&b_sum * &r + 2.0 * &r * &b1_01 * &r + 2.0 * &r * &b0_01 * &dr;
    let dstar = &r * &b_sum + 2.0 * &r * &b1_01 * &r - 2.0 * &dr * &b0_01 * &r;
    let b = -&b_sum * &dr - 2.0 * &r * &b0_01 * &r + 2.0 * &r * &b1_01 * &dr;
    let bstar = &dr * &b_sum + 2.0 * &r * &b0_01 * &r + 2.0 * &dr * &b1_01 * &r;
    OperatorMatrices::from_parts(d, dstar, b, bstar, fingerprint(rho.values()))
}
