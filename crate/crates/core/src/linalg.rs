//! Dense complex linear-algebra helpers shared by the filters.
//!
//! Matrices are `faer` matrices over `c64`. Cyclic shift matrices are never
//! materialized inside the hot paths: `Θ_z x` is a row rotation, `X Θ_zᵀ` a
//! column rotation.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::{Col, ColRef, Mat, MatRef, Side};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub use faer::c64;

pub type CMat = Mat<c64>;
pub type CCol = Col<c64>;

#[inline]
pub fn cr(x: f64) -> c64 {
    c64::new(x, 0.0)
}

pub fn scaled(m: MatRef<'_, c64>, s: f64) -> CMat {
    faer::Scale(cr(s)) * m
}

pub fn scaled_col(v: ColRef<'_, c64>, s: f64) -> CCol {
    faer::Scale(cr(s)) * v
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn diag_real(values: &[f64]) -> CMat {
    let n = values.len();
    CMat::from_fn(n, n, |i, j| if i == j { cr(values[i]) } else { c64::ZERO })
}

pub fn trace_re(m: MatRef<'_, c64>) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)].re).sum()
}

pub fn frob(m: MatRef<'_, c64>) -> f64 {
    m.norm_l2()
}

/// Replaces `m` by `(m + mᴴ) / 2`.
pub fn hermitize(m: &mut CMat) {
    let n = m.nrows();
    for j in 0..n {
        for i in j..n {
            let a = m[(i, j)];
            let b = m[(j, i)].conj();
            let avg = (a + b) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// `‖m − mᴴ‖_F / ‖m‖_F` (zero for the zero matrix).
pub fn hermitian_defect(m: MatRef<'_, c64>) -> f64 {
    let norm = m.norm_l2();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm_l2() / norm
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues in
/// descending order and each eigenvector's first significant entry made
/// real and positive.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl HermitianEigen {
    pub fn new(m: MatRef<'_, c64>) -> Result<Self> {
        let n = m.nrows();
        if n != m.ncols() {
            return Err(Error::invalid("eigen-decomposition of a non-square matrix"));
        }
        if n == 0 {
            return Ok(Self {
                values: Vec::new(),
                vectors: CMat::zeros(0, 0),
            });
        }
        let evd = m
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::numerical(format!("hermitian eigen-decomposition: {e:?}")))?;
        let u = evd.U();
        let s = evd.S().column_vector();
        let mut values = Vec::with_capacity(n);
        let mut vectors = CMat::zeros(n, n);
        for (dst, src) in (0..n).rev().enumerate() {
            values.push(s[src].re);
            let col = canonical_phase(u.col(src));
            vectors.col_mut(dst).copy_from(&col);
        }
        Ok(Self { values, vectors })
    }

    /// `U f(Λ) Uᴴ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.values.len();
        let mut scaled_u = self.vectors.clone();
        for j in 0..n {
            let w = cr(f(self.values[j]));
            for i in 0..n {
                scaled_u[(i, j)] *= w;
            }
        }
        &scaled_u * self.vectors.adjoint()
    }

    pub fn leading_vectors(&self, count: usize) -> CMat {
        self.vectors.subcols(0, count).to_owned()
    }
}

fn canonical_phase(v: ColRef<'_, c64>) -> CCol {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut out = v.to_owned();
    if max == 0.0 {
        return out;
    }
    if let Some(lead) = v.iter().find(|z| z.norm() > 1e-8 * max) {
        let phase = lead.conj() / lead.norm();
        for z in out.iter_mut() {
            *z *= phase;
        }
    }
    out
}

/// Hermitian square root with negative eigenvalues clamped to zero.
pub fn psd_sqrt(m: MatRef<'_, c64>) -> Result<CMat> {
    let evd = HermitianEigen::new(m)?;
    Ok(evd.reconstruct_with(|l| l.max(0.0).sqrt()))
}

/// `m^{-1/2}` for a Hermitian matrix, with eigenvalues floored at `floor`.
pub fn psd_inv_sqrt(m: MatRef<'_, c64>, floor: f64) -> Result<CMat> {
    if floor <= 0.0 {
        return Err(Error::invalid("inverse square root needs a positive floor"));
    }
    let evd = HermitianEigen::new(m)?;
    Ok(evd.reconstruct_with(|l| 1.0 / l.max(floor).sqrt()))
}

/// Clamps eigenvalues below `-rel_tol · trace` to zero. The matrix is
/// returned untouched (but symmetrized) when it already passes.
pub fn psd_repair(m: &CMat, rel_tol: f64) -> Result<CMat> {
    let mut out = m.clone();
    hermitize(&mut out);
    let tr = trace_re(out.as_ref()).abs();
    let n = out.nrows();
    if n == 0 {
        return Ok(out);
    }
    let shift = cr(rel_tol * tr.max(f64::MIN_POSITIVE));
    let mut probe = out.clone();
    for i in 0..n {
        probe[(i, i)] += shift;
    }
    if probe.llt(Side::Lower).is_ok() {
        return Ok(out);
    }
    let evd = HermitianEigen::new(out.as_ref())?;
    let limit = -rel_tol * tr;
    let mut repaired = evd.reconstruct_with(|l| if l < limit { 0.0 } else { l.max(0.0) });
    hermitize(&mut repaired);
    Ok(repaired)
}

/// Solves `a x = b` for Hermitian positive definite `a`.
pub fn hpd_solve(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Result<CMat> {
    let llt = a
        .llt(Side::Lower)
        .map_err(|e| Error::numerical(format!("cholesky factorization failed: {e:?}")))?;
    Ok(llt.solve(b))
}

/// `x · a⁻¹` for Hermitian positive definite `a`, i.e. `(a⁻¹ xᴴ)ᴴ`.
pub fn hpd_right_solve(x: MatRef<'_, c64>, a: MatRef<'_, c64>) -> Result<CMat> {
    let xh = x.adjoint().to_owned();
    let sol = hpd_solve(a, xh.as_ref())?;
    Ok(sol.adjoint().to_owned())
}

#[inline]
fn wrap(i: usize, z: usize, n: usize) -> usize {
    (i + n - z % n) % n
}

/// `Θ_z m`: row `i` of the result is row `(i − z) mod n` of `m`.
pub fn shift_rows(m: MatRef<'_, c64>, z: usize) -> CMat {
    let n = m.nrows();
    if n == 0 {
        return m.to_owned();
    }
    CMat::from_fn(n, m.ncols(), |i, j| m[(wrap(i, z, n), j)])
}

/// `m Θ_zᵀ`: column `j` of the result is column `(j − z) mod n` of `m`.
pub fn shift_cols(m: MatRef<'_, c64>, z: usize) -> CMat {
    let n = m.ncols();
    if n == 0 {
        return m.to_owned();
    }
    CMat::from_fn(m.nrows(), n, |i, j| m[(i, wrap(j, z, n))])
}

/// `Θ_z m Θ_zᵀ`.
pub fn shift_sym(m: MatRef<'_, c64>, z: usize) -> CMat {
    let n = m.nrows();
    if n == 0 {
        return m.to_owned();
    }
    CMat::from_fn(n, n, |i, j| m[(wrap(i, z, n), wrap(j, z, n))])
}

/// `Θ_z v`.
pub fn shift_vec(v: ColRef<'_, c64>, z: usize) -> CCol {
    let n = v.nrows();
    if n == 0 {
        return v.to_owned();
    }
    CCol::from_fn(n, |i| v[wrap(i, z, n)])
}

/// `Θ_zᵀ v`, the inverse rotation.
pub fn unshift_vec(v: ColRef<'_, c64>, z: usize) -> CCol {
    let n = v.nrows();
    if n == 0 {
        return v.to_owned();
    }
    CCol::from_fn(n, |i| v[(i + z) % n])
}

/// `Θ_zᵀ m`.
pub fn unshift_rows(m: MatRef<'_, c64>, z: usize) -> CMat {
    let n = m.nrows();
    if n == 0 {
        return m.to_owned();
    }
    CMat::from_fn(n, m.ncols(), |i, j| m[((i + z) % n, j)])
}

/// Unitary DFT matrix, `F(k, n) = e^{-j2πkn/N} / √N`.
pub fn dft_matrix(n: usize) -> CMat {
    let norm = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |k, t| {
        let phase = -2.0 * std::f64::consts::PI * ((k * t) % n) as f64 / n as f64;
        c64::from_polar(norm, phase)
    })
}

/// Column `c` of the unitary DFT matrix.
pub fn dft_column(n: usize, c: usize) -> CCol {
    let norm = 1.0 / (n as f64).sqrt();
    CCol::from_fn(n, |k| {
        let phase = -2.0 * std::f64::consts::PI * ((k * c) % n) as f64 / n as f64;
        c64::from_polar(norm, phase)
    })
}

/// Draws a circularly-symmetric complex normal vector `CN(0, I)`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CCol {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CCol::from_fn(n, |_| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64::new(re * s, im * s)
    })
}

/// Unitary forward/inverse FFT of a fixed length.
#[derive(Clone)]
pub struct UnitaryFft {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for UnitaryFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UnitaryFft")
            .field("len", &self.len)
            .finish()
    }
}

impl UnitaryFft {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward(&self, data: &mut [c64]) {
        self.forward.process(data);
        let s = 1.0 / (self.len as f64).sqrt();
        data.iter_mut().for_each(|z| *z *= s);
    }

    pub fn inverse(&self, data: &mut [c64]) {
        self.inverse.process(data);
        let s = 1.0 / (self.len as f64).sqrt();
        data.iter_mut().for_each(|z| *z *= s);
    }
}

/// Copies the `(rows, cols)` block selection of `m` into a dense matrix.
pub fn gather_blocks(blocks: &[&[CMat]]) -> CMat {
    let rows: usize = blocks.iter().map(|r| r[0].nrows()).sum();
    let cols: usize = blocks[0].iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut r0 = 0;
    for row in blocks {
        let mut c0 = 0;
        for b in row.iter() {
            out.as_mut()
                .submatrix_mut(r0, c0, b.nrows(), b.ncols())
                .copy_from(b);
            c0 += b.ncols();
        }
        r0 += row[0].nrows();
    }
    out
}
