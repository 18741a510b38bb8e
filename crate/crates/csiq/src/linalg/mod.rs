//! Dense complex linear algebra for antenna-domain signal processing.
//!
//! Everything in this module is sized for feedback problems: vectors of a few
//! dozen complex entries, matrices up to about 64x64. The primitives are the
//! chordal distance on complex lines, Gram-Schmidt orthonormalization,
//! subspace projectors, Hermitian eigendecomposition (cyclic Jacobi) and
//! power iteration. All operations are pure functions; values are immutable
//! after construction and safe to share across threads.

mod eig;

pub use eig::{eigh_topk, principal_eigenvector, PowerIterSettings};

use num_complex::Complex64;
use thiserror::Error;

/// Complex scalar used throughout the crate.
pub type C64 = Complex64;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("zero-norm vector where a direction is required")]
    ZeroNorm,
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("matrix column {column} is numerically dependent on earlier columns (pivot {pivot:.3e})")]
    DegenerateBasis { column: usize, pivot: f64 },
    #[error("matrix is not Hermitian within tolerance (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("eigensolver did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("covariance trace {0} is not normalized to 1")]
    UnnormalizedTrace(f64),
}

/// Dense complex vector.
#[derive(Clone, Debug, PartialEq)]
pub struct CVec {
    data: Vec<C64>,
}

impl CVec {
    pub fn new(data: Vec<C64>) -> Self {
        Self { data }
    }

    pub fn zeros(n: usize) -> Self {
        Self { data: vec![C64::new(0.0, 0.0); n] }
    }

    /// Standard basis vector `e_i` in `n` dimensions.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.data[i] = C64::new(1.0, 0.0);
        v
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> C64) -> Self {
        Self { data: (0..n).map(f).collect() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, C64> {
        self.data.iter()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Hermitian inner product `self^H other`.
    pub fn dot(&self, other: &CVec) -> C64 {
        debug_assert_eq!(self.len(), other.len());
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scale(&self, s: C64) -> CVec {
        CVec::new(self.data.iter().map(|z| z * s).collect())
    }

    pub fn add(&self, other: &CVec) -> CVec {
        debug_assert_eq!(self.len(), other.len());
        CVec::new(
            self.data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &CVec) -> CVec {
        debug_assert_eq!(self.len(), other.len());
        CVec::new(
            self.data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    /// `self - s * other`, the Gram-Schmidt update step.
    pub fn axpy_sub(&mut self, s: C64, other: &CVec) {
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a -= s * b;
        }
    }

    pub fn normalized(&self) -> Result<CVec, LinalgError> {
        let n = self.norm();
        if n <= 0.0 {
            return Err(LinalgError::ZeroNorm);
        }
        Ok(self.scale(C64::new(1.0 / n, 0.0)))
    }

    /// Rotate by a global phase so the largest-magnitude entry is real and
    /// positive. Ties on magnitude are broken by the lowest index. This is
    /// the canonical representative of the complex line spanned by `self`.
    pub fn phase_normalized(&self) -> CVec {
        let mut best = 0usize;
        let mut best_mag = -1.0f64;
        for (i, z) in self.data.iter().enumerate() {
            let m = z.norm_sqr();
            if m > best_mag {
                best_mag = m;
                best = i;
            }
        }
        let pivot = self.data[best];
        let mag = pivot.norm();
        if mag == 0.0 {
            return self.clone();
        }
        self.scale(pivot.conj() / C64::new(mag, 0.0))
    }

    /// Elementwise product with a real diagonal weight vector.
    pub fn weighted(&self, weights: &[f64]) -> CVec {
        debug_assert_eq!(self.len(), weights.len());
        CVec::new(
            self.data
                .iter()
                .zip(weights.iter())
                .map(|(z, w)| z * w)
                .collect(),
        )
    }

    pub fn outer(&self, other: &CVec) -> CMat {
        let mut m = CMat::zeros(self.len(), other.len());
        for j in 0..other.len() {
            for i in 0..self.len() {
                m[(i, j)] = self.data[i] * other.data[j].conj();
            }
        }
        m
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl std::ops::Index<usize> for CVec {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for CVec {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.data[i]
    }
}

/// Dense complex matrix in column-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_cols(cols: &[CVec]) -> Self {
        assert!(!cols.is_empty());
        let rows = cols[0].len();
        let mut m = Self::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            assert_eq!(c.len(), rows, "column length mismatch");
            m.set_col(j, c);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> CVec {
        CVec::new(self.col_slice(j).to_vec())
    }

    pub fn col_slice(&self, j: usize) -> &[C64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn set_col(&mut self, j: usize, v: &CVec) {
        assert_eq!(v.len(), self.rows);
        self.data[j * self.rows..(j + 1) * self.rows].copy_from_slice(v.as_slice());
    }

    /// Matrix-vector product `A x`.
    pub fn mul_vec(&self, x: &CVec) -> CVec {
        assert_eq!(self.cols, x.len(), "mul_vec dimension mismatch");
        let mut out = vec![C64::new(0.0, 0.0); self.rows];
        for j in 0..self.cols {
            let xj = x[j];
            if xj == C64::new(0.0, 0.0) {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.col_slice(j)) {
                *o += a * xj;
            }
        }
        CVec::new(out)
    }

    /// Matrix product `A B`.
    pub fn mul(&self, other: &CMat) -> CMat {
        assert_eq!(self.cols, other.rows, "mul dimension mismatch");
        let mut out = CMat::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let col = self.mul_vec(&other.col(j));
            out.set_col(j, &col);
        }
        out
    }

    /// Conjugate transpose `A^H`.
    pub fn adjoint(&self) -> CMat {
        let mut out = CMat::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    /// `A^H x` without materializing the adjoint.
    pub fn adjoint_mul_vec(&self, x: &CVec) -> CVec {
        assert_eq!(self.rows, x.len(), "adjoint_mul_vec dimension mismatch");
        CVec::from_fn(self.cols, |j| {
            self.col_slice(j)
                .iter()
                .zip(x.iter())
                .map(|(a, b)| a.conj() * b)
                .sum()
        })
    }

    pub fn add(&self, other: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a + b)
            .collect();
        CMat { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a - b)
            .collect();
        CMat { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: C64) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        assert_eq!(self.rows, self.cols);
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum elementwise deviation from `A = A^H`.
    pub fn hermitian_defect(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut worst = 0.0f64;
        for j in 0..self.cols {
            for i in 0..=j {
                let d = (self[(i, j)] - self[(j, i)].conj()).norm();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[j * self.rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[j * self.rows + i]
    }
}

/// Hermitian positive semi-definite matrix, the covariance carrier.
///
/// Construction verifies Hermitian symmetry to 1e-12 (relative to the largest
/// entry) and stores the exactly symmetrized matrix `(A + A^H) / 2`. Positive
/// semi-definiteness is an invariant of the construction paths used in this
/// crate (sums of outer products and projected covariances), not re-checked.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianPsd {
    mat: CMat,
}

impl HermitianPsd {
    pub fn new(mat: CMat) -> Result<Self, LinalgError> {
        assert_eq!(mat.rows(), mat.cols(), "HermitianPsd requires a square matrix");
        let scale = mat
            .data
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max)
            .max(1.0);
        let defect = mat.hermitian_defect();
        if defect > 1e-12 * scale {
            return Err(LinalgError::NotHermitian(defect));
        }
        let mut sym = mat.clone();
        for j in 0..mat.cols() {
            for i in 0..=j {
                let avg = (mat[(i, j)] + mat[(j, i)].conj()) * 0.5;
                sym[(i, j)] = avg;
                sym[(j, i)] = avg.conj();
            }
            sym[(j, j)] = C64::new(sym[(j, j)].re, 0.0);
        }
        Ok(Self { mat: sym })
    }

    /// Accumulate `sum_k w_k x_k x_k^H` and wrap it; the result is PSD by
    /// construction.
    pub fn from_outer_products(vectors: &[CVec], weights: &[f64]) -> Self {
        assert!(!vectors.is_empty());
        assert_eq!(vectors.len(), weights.len());
        let n = vectors[0].len();
        let mut m = CMat::zeros(n, n);
        for (x, &w) in vectors.iter().zip(weights.iter()) {
            for j in 0..n {
                let xjw = x[j].conj() * w;
                for i in 0..n {
                    m[(i, j)] += x[i] * xjw;
                }
            }
        }
        Self::new(m).expect("outer-product sum is Hermitian")
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn mul_vec(&self, x: &CVec) -> CVec {
        self.mat.mul_vec(x)
    }

    /// Quadratic form `x^H A x`, real for Hermitian `A`.
    pub fn quad_form(&self, x: &CVec) -> f64 {
        x.dot(&self.mat.mul_vec(x)).re
    }

    /// Two-sided projection `P A P` for Hermitian `P`, again Hermitian PSD.
    pub fn project(&self, p: &CMat) -> HermitianPsd {
        let pap = p.mul(&self.mat).mul(p);
        // Round off the asymmetry introduced by floating-point products.
        let mut sym = pap.clone();
        for j in 0..sym.cols() {
            for i in 0..=j {
                let avg = (pap[(i, j)] + pap[(j, i)].conj()) * 0.5;
                sym[(i, j)] = avg;
                sym[(j, i)] = avg.conj();
            }
            sym[(j, j)] = C64::new(sym[(j, j)].re, 0.0);
        }
        HermitianPsd { mat: sym }
    }
}

/// Leading eigenpairs of a Hermitian PSD matrix.
///
/// Columns of `vectors` are orthonormal and phase-normalized; `values` are
/// the matching eigenvalues sorted descending (exact ties keep the source
/// order). Singular values of the matrix square root are `values[j].sqrt()`.
#[derive(Clone, Debug)]
pub struct EigenBasis {
    pub vectors: CMat,
    pub values: Vec<f64>,
}

impl EigenBasis {
    pub fn singular_values(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v.max(0.0).sqrt()).collect()
    }
}

/// Chordal distance between the complex lines spanned by `x` and `y`:
/// `sqrt(1 - |x^H y|^2 / (|x|^2 |y|^2))`, invariant to nonzero complex
/// scaling of either argument, with values in `[0, 1]`.
pub fn chordal_distance(x: &CVec, y: &CVec) -> Result<f64, LinalgError> {
    Ok(chordal_distance_sq(x, y)?.sqrt())
}

/// Squared chordal distance; see [`chordal_distance`].
pub fn chordal_distance_sq(x: &CVec, y: &CVec) -> Result<f64, LinalgError> {
    if x.len() != y.len() {
        return Err(LinalgError::DimMismatch(format!(
            "chordal distance between lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    let nx = x.norm_sq();
    let ny = y.norm_sq();
    if nx <= 0.0 || ny <= 0.0 {
        return Err(LinalgError::ZeroNorm);
    }
    let ip = x.dot(y).norm_sqr();
    Ok((1.0 - ip / (nx * ny)).clamp(0.0, 1.0))
}

/// Squared chordal distance between diagonally weighted vectors,
/// `d^2(W c, W chat)` for `W = diag(weights)`. This is the metric that a
/// weighted-coordinate quantizer must minimize: with reconstruction
/// `bhat = W chat / |W chat|` it equals `d^2(b, bhat)` for `b = W c`.
pub fn weighted_chordal_sq(
    c: &CVec,
    c_hat: &CVec,
    weights: &[f64],
) -> Result<f64, LinalgError> {
    if c.len() != c_hat.len() || c.len() != weights.len() {
        return Err(LinalgError::DimMismatch(format!(
            "weighted chordal with lengths {}, {}, {}",
            c.len(),
            c_hat.len(),
            weights.len()
        )));
    }
    chordal_distance_sq(&c.weighted(weights), &c_hat.weighted(weights))
}

/// Gram-Schmidt orthonormalization of the columns of `v`, in column order.
///
/// Returns `w` with `w^H w = I` and `span(w) = span(v)`; the first column of
/// `w` is the normalized first column of `v`. This matches the Q factor of
/// the QR decomposition with positive-diagonal triangular factor, so any two
/// parties running it on the same input obtain bit-identical output. A second
/// orthogonalization pass keeps the residual non-orthogonality near machine
/// precision.
pub fn orthonormalize(v: &CMat) -> Result<CMat, LinalgError> {
    let k = v.cols();
    let mut w: Vec<CVec> = Vec::with_capacity(k);
    for j in 0..k {
        let mut col = v.col(j);
        let orig_norm = col.norm();
        for pass in 0..2 {
            for wi in w.iter() {
                let coeff = wi.dot(&col);
                col.axpy_sub(coeff, wi);
            }
            let pivot = col.norm();
            if pass == 0 && pivot < 1e-10 * orig_norm.max(1.0) {
                return Err(LinalgError::DegenerateBasis { column: j, pivot });
            }
        }
        let pivot = col.norm();
        if pivot <= 0.0 {
            return Err(LinalgError::DegenerateBasis { column: j, pivot });
        }
        w.push(col.scale(C64::new(1.0 / pivot, 0.0)));
    }
    Ok(CMat::from_cols(&w))
}

/// Orthogonal projector onto the column space of `v`:
/// `P = v (v^H v)^{-1} v^H`. For orthonormal `w` this equals `w w^H`; it is
/// invariant under any basis change of the column space, in particular
/// `projector(v) == projector(orthonormalize(v))` up to rounding.
pub fn projector(v: &CMat) -> Result<CMat, LinalgError> {
    let k = v.cols();
    let gram = v.adjoint().mul(v);
    let chol = cholesky(&gram)?;
    // Solve (L L^H) X = V^H, then P = V X.
    let vh = v.adjoint();
    let mut x = CMat::zeros(k, v.rows());
    for j in 0..v.rows() {
        let rhs = vh.col(j);
        let sol = cholesky_solve(&chol, &rhs);
        x.set_col(j, &sol);
    }
    Ok(v.mul(&x))
}

/// Orthogonal projector onto the column span of `m`, tolerating rank
/// deficiency: `P = M G^+ M^H` with `G = M^H M` pseudo-inverted through its
/// eigendecomposition. Agrees with [`projector`] on full-rank input.
pub fn span_projector(m: &CMat) -> Result<CMat, LinalgError> {
    let k = m.cols();
    let gram = HermitianPsd::new(m.adjoint().mul(m))?;
    let eig = eig::eigh_topk(&gram, k)?;
    let tol = 1e-12 * eig.values[0].max(1e-300);
    let n = m.rows();
    let mut p = CMat::zeros(n, n);
    for j in 0..k {
        if eig.values[j] <= tol {
            continue;
        }
        let dir = m.mul_vec(&eig.vectors.col(j));
        let scale = C64::new(1.0 / eig.values[j], 0.0);
        for c in 0..n {
            let w = dir[c].conj() * scale;
            for r in 0..n {
                p[(r, c)] += dir[r] * w;
            }
        }
    }
    Ok(p)
}

/// Cholesky factor `L` (lower triangular, positive diagonal) of a Hermitian
/// positive definite matrix. Fails with the offending column on a
/// non-positive pivot, which signals rank deficiency.
pub(crate) fn cholesky(a: &CMat) -> Result<CMat, LinalgError> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let scale = (0..n).map(|i| a[(i, i)].re).fold(0.0f64, f64::max).max(1.0);
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d < 1e-20 * scale {
            return Err(LinalgError::DegenerateBasis { column: j, pivot: d.max(0.0).sqrt() });
        }
        let djj = d.sqrt();
        l[(j, j)] = C64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solve `(L L^H) x = b` given the Cholesky factor `L`.
pub(crate) fn cholesky_solve(l: &CMat, b: &CVec) -> CVec {
    let n = l.rows();
    let mut y = b.as_slice().to_vec();
    // Forward: L y = b.
    for i in 0..n {
        for k in 0..i {
            let lik = l[(i, k)];
            y[i] = y[i] - lik * y[k];
        }
        y[i] /= l[(i, i)].re;
    }
    // Backward: L^H x = y.
    for i in (0..n).rev() {
        for k in i + 1..n {
            let lki = l[(k, i)].conj();
            y[i] = y[i] - lki * y[k];
        }
        y[i] /= l[(i, i)].re;
    }
    CVec::new(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    pub(crate) fn random_cvec(rng: &mut impl Rng, n: usize) -> CVec {
        CVec::from_fn(n, |_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    pub(crate) fn random_cmat(rng: &mut impl Rng, rows: usize, cols: usize) -> CMat {
        let cols: Vec<CVec> = (0..cols).map(|_| random_cvec(rng, rows)).collect();
        CMat::from_cols(&cols)
    }


    #[test]
    fn chordal_phase_invariance_on_equal_lines() {
        let x = CVec::unit(3, 0);
        let phase = C64::from_polar(1.0, std::f64::consts::PI / 3.0);
        let y = x.scale(phase);
        assert!(chordal_distance(&x, &y).unwrap() < 1e-12);
    }

    #[test]
    fn chordal_orthogonal_lines() {
        let x = CVec::unit(3, 0);
        let y = CVec::unit(3, 1);
        assert!((chordal_distance(&x, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chordal_45_degrees() {
        let x = CVec::new(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let y = CVec::new(vec![C64::new(s, 0.0), C64::new(s, 0.0)]);
        let d = chordal_distance(&x, &y).unwrap();
        assert!((d - s).abs() < 1e-12);
    }

    #[test]
    fn chordal_rejects_zero_norm() {
        let x = CVec::zeros(2);
        let y = CVec::unit(2, 0);
        assert_eq!(chordal_distance(&x, &y), Err(LinalgError::ZeroNorm));
    }

    #[test]
    fn orthonormalize_two_columns() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = CMat::from_cols(&[
            CVec::unit(2, 0),
            CVec::new(vec![C64::new(s, 0.0), C64::new(s, 0.0)]),
        ]);
        let w = orthonormalize(&v).unwrap();
        assert!((w.col(0).sub(&CVec::unit(2, 0))).norm() < 1e-12);
        assert!((w.col(1).sub(&CVec::unit(2, 1))).norm() < 1e-12);
    }

    #[test]
    fn orthonormalize_fixed_point() {
        let mut rng = StdRng::seed_from_u64(7);
        let v = random_cmat(&mut rng, 5, 3);
        let w = orthonormalize(&v).unwrap();
        let w2 = orthonormalize(&w).unwrap();
        assert!(w.sub(&w2).fro_norm() < 1e-12);
    }

    #[test]
    fn orthonormalize_random_contract() {
        let mut rng = StdRng::seed_from_u64(42);
        let v = random_cmat(&mut rng, 6, 3);
        let w = orthonormalize(&v).unwrap();
        let gram = w.adjoint().mul(&w);
        assert!(gram.sub(&CMat::identity(3)).fro_norm() < 1e-10);
        // span preserved: P_w V = V
        let p = w.mul(&w.adjoint());
        assert!(p.mul(&v).sub(&v).fro_norm() < 1e-10);
        // first column is the normalized first column of V
        assert!(w.col(0).sub(&v.col(0).normalized().unwrap()).norm() < 1e-12);
    }

    #[test]
    fn orthonormalize_reports_dependent_column() {
        let v = CMat::from_cols(&[
            CVec::unit(3, 0),
            CVec::unit(3, 0).scale(C64::new(2.0, 0.0)),
        ]);
        match orthonormalize(&v) {
            Err(LinalgError::DegenerateBasis { column, .. }) => assert_eq!(column, 1),
            other => panic!("expected degenerate basis, got {other:?}"),
        }
    }

    #[test]
    fn projector_single_column() {
        let w = CMat::from_cols(&[CVec::unit(2, 0)]);
        let p = projector(&w).unwrap();
        assert!((p[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!(p[(1, 1)].norm() < 1e-12);
        assert!(p[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn projector_of_unitary_is_identity() {
        let mut rng = StdRng::seed_from_u64(3);
        let v = random_cmat(&mut rng, 4, 4);
        let w = orthonormalize(&v).unwrap();
        let p = projector(&w).unwrap();
        assert!(p.sub(&CMat::identity(4)).fro_norm() < 1e-10);
    }

    #[test]
    fn projector_contracts() {
        let mut rng = StdRng::seed_from_u64(11);
        let v = random_cmat(&mut rng, 6, 3);
        let p = projector(&v).unwrap();
        // Idempotent, Hermitian, trace K.
        assert!(p.mul(&p).sub(&p).fro_norm() < 1e-10);
        assert!(p.hermitian_defect() < 1e-10);
        assert!((p.trace().re - 3.0).abs() < 1e-10);
        // Invariant under orthonormalization of the basis.
        let w = orthonormalize(&v).unwrap();
        let pw = projector(&w).unwrap();
        assert!(p.sub(&pw).fro_norm() < 1e-10);
    }

    #[test]
    fn span_projector_matches_projector_on_full_rank() {
        let mut rng = StdRng::seed_from_u64(17);
        let v = random_cmat(&mut rng, 6, 3);
        let p1 = projector(&v).unwrap();
        let p2 = span_projector(&v).unwrap();
        assert!(p1.sub(&p2).fro_norm() < 1e-9);
    }

    #[test]
    fn span_projector_handles_duplicate_columns() {
        let mut rng = StdRng::seed_from_u64(18);
        let a = random_cvec(&mut rng, 5);
        let b = random_cvec(&mut rng, 5);
        let v = CMat::from_cols(&[a.clone(), b.clone(), a.clone()]);
        assert!(projector(&v).is_err());
        let p = span_projector(&v).unwrap();
        // projects onto span(a, b): idempotent, Hermitian, rank 2
        assert!(p.mul(&p).sub(&p).fro_norm() < 1e-9);
        assert!((p.trace().re - 2.0).abs() < 1e-9);
        assert!(p.mul_vec(&a).sub(&a).norm() < 1e-9);
        assert!(p.mul_vec(&b).sub(&b).norm() < 1e-9);
    }

    #[test]
    fn weighted_chordal_identity_weights() {
        let mut rng = StdRng::seed_from_u64(5);
        let c = random_cvec(&mut rng, 4);
        let chat = random_cvec(&mut rng, 4);
        let w = vec![1.0; 4];
        let a = weighted_chordal_sq(&c, &chat, &w).unwrap();
        let b = chordal_distance_sq(&c, &chat).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn weighted_chordal_equal_vectors() {
        let mut rng = StdRng::seed_from_u64(6);
        let c = random_cvec(&mut rng, 4);
        let w = vec![2.0, 1.0, 0.5, 1.5];
        assert!(weighted_chordal_sq(&c, &c, &w).unwrap() < 1e-12);
    }

    #[test]
    fn weighted_chordal_hand_value() {
        // weights diag(2,1), c = (1,1)/sqrt(2), chat = (1,0): d^2 = 0.2
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = CVec::new(vec![C64::new(s, 0.0), C64::new(s, 0.0)]);
        let chat = CVec::new(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let d2 = weighted_chordal_sq(&c, &chat, &[2.0, 1.0]).unwrap();
        assert!((d2 - 0.2).abs() < 1e-12);
    }

    #[test]
    fn weighted_chordal_zero_weighted_vector() {
        let c = CVec::new(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let chat = CVec::new(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        // weight kills the only nonzero coordinate of c
        assert_eq!(
            weighted_chordal_sq(&c, &chat, &[0.0, 1.0]),
            Err(LinalgError::ZeroNorm)
        );
    }

    #[test]
    fn phase_normalization_pivots_largest_entry() {
        let v = CVec::new(vec![C64::new(0.1, 0.2), C64::new(-0.3, 0.4)]);
        let p = v.phase_normalized();
        assert!(p[1].im.abs() < 1e-12);
        assert!(p[1].re > 0.0);
        assert!(chordal_distance(&v, &p).unwrap() < 1e-12);
    }

    proptest! {
        #[test]
        fn prop_chordal_scale_phase_invariant(
            seed in 0u64..1000,
            re_a in 0.1f64..3.0, im_a in -2.0f64..2.0,
            re_b in 0.1f64..3.0, im_b in -2.0f64..2.0,
        ) {
            let mut rng = StdRng::seed_from_u64(seed);
            let x = random_cvec(&mut rng, 5);
            let y = random_cvec(&mut rng, 5);
            let a = C64::new(re_a, im_a);
            let b = C64::new(re_b, im_b);
            let d0 = chordal_distance(&x, &y).unwrap();
            let d1 = chordal_distance(&x.scale(a), &y.scale(b)).unwrap();
            prop_assert!((d0 - d1).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&d0));
        }

        #[test]
        fn prop_orthonormalize_idempotent(seed in 0u64..500) {
            let mut rng = StdRng::seed_from_u64(seed);
            let v = random_cmat(&mut rng, 6, 3);
            let w = orthonormalize(&v).unwrap();
            let w2 = orthonormalize(&w).unwrap();
            prop_assert!(w.sub(&w2).fro_norm() < 1e-12);
        }

        #[test]
        fn prop_projector_basis_invariant(seed in 0u64..500) {
            let mut rng = StdRng::seed_from_u64(seed);
            let v = random_cmat(&mut rng, 5, 2);
            let p = projector(&v).unwrap();
            let pw = projector(&orthonormalize(&v).unwrap()).unwrap();
            prop_assert!(p.sub(&pw).fro_norm() < 1e-10);
        }
    }
}
