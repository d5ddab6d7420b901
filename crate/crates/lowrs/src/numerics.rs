//! Dense matrix kernels: norms, one-sided Jacobi SVD, thresholding operators
//! and regularized solves.
//!
//! Everything here targets desk-scale matrices (up to a few hundred rows or
//! columns) and is written for robustness and reproducibility rather than
//! throughput. All functions are pure; none of them hold shared state.

use crate::error::{Error, Result};

/// Relative off-diagonal threshold at which a Jacobi column pair counts as
/// orthogonal.
const JACOBI_TOL: f64 = 1e-14;

/// Sweep budget for the one-sided Jacobi iteration.
const JACOBI_MAX_SWEEPS: usize = 64;

/// Singular values below `1e-12 * sigma_1` are treated as zero when ranks
/// are reported.
const RANK_CUTOFF: f64 = 1e-12;

/// Row-major dense real matrix, the universal numeric carrier of the crate.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows*cols");
        Self { rows, cols, data }
    }

    /// Builds a matrix from a closure over (row, col).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self { rows: r, cols: c, data: rows.concat() }
    }

    /// Stacks blocks vertically; all blocks must share a column count.
    pub fn vstack(blocks: &[DenseMatrix]) -> Self {
        let cols = blocks.iter().map(|b| b.cols).find(|&c| c > 0).unwrap_or(0);
        let mut data = Vec::new();
        let mut rows = 0;
        for b in blocks {
            assert!(b.rows == 0 || b.cols == cols, "column count mismatch in vstack");
            rows += b.rows;
            data.extend_from_slice(&b.data);
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Rows `range.start..range.end` as a new matrix.
    pub fn row_block(&self, range: std::ops::Range<usize>) -> Self {
        assert!(range.end <= self.rows);
        Self {
            rows: range.len(),
            cols: self.cols,
            data: self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        }
    }

    pub fn t(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let out_row = &mut out.data[i * out.cols..(i + 1) * out.cols];
                for (o, &b) in out_row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|x| x * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    /// Entrywise (Hadamard) product.
    pub fn hadamard(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a * b)
    }

    fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Largest entry magnitude (the entrywise infinity norm).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    /// Sum of entry magnitudes (the entrywise l1 norm).
    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).sum()
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Entrywise soft-thresholding `sign(x) * max(|x| - tau, 0)`, the proximal
    /// operator of `tau * l1`.
    pub fn soft_threshold(&self, tau: f64) -> Self {
        assert!(tau >= 0.0, "threshold must be nonnegative");
        self.map(|x| {
            let shrunk = x.abs() - tau;
            if shrunk > 0.0 {
                x.signum() * shrunk
            } else {
                0.0
            }
        })
    }

    /// Largest singular value by power iteration on the Gram matrix.
    ///
    /// The iteration starts from the normalized all-ones vector so runs are
    /// reproducible. A start vector orthogonal to the top singular direction
    /// stalls on a smaller singular value, so a second deterministic start is
    /// always run for confirmation and the larger converged estimate wins.
    pub fn spectral_norm(&self, tol: f64, max_iter: usize) -> Result<f64> {
        assert!(tol > 0.0, "tolerance must be positive");
        if self.rows == 0 || self.cols == 0 || self.frobenius_norm() == 0.0 {
            return Ok(0.0);
        }
        let n = self.cols;
        let ones = vec![1.0 / (n as f64).sqrt(); n];
        let alt: Vec<f64> = (0..n).map(|i| ((i + 1) as f64 * 1.234_567).sin()).collect();
        let s1 = self.power_iteration(ones, tol, max_iter)?;
        let s2 = self.power_iteration(normalize(alt), tol, max_iter)?;
        Ok(s1.max(s2))
    }

    fn power_iteration(&self, mut v: Vec<f64>, tol: f64, max_iter: usize) -> Result<f64> {
        let mut prev = f64::NAN;
        for _ in 0..max_iter {
            let av = self.matvec(&v);
            let s = norm2(&av);
            if s == 0.0 {
                return Ok(0.0);
            }
            if prev.is_finite() && (s - prev).abs() <= tol * s {
                return Ok(s);
            }
            prev = s;
            v = normalize(self.t_matvec(&av));
        }
        Err(Error::NonConvergence("spectral_norm power iteration"))
    }

    fn matvec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    fn t_matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    /// Thin SVD by one-sided Jacobi orthogonalization of the columns (the
    /// transpose is factored first when the matrix is wide).
    ///
    /// One-sided Jacobi keeps small singular values accurate relative to
    /// their own size, so exact low-rank inputs come back with a cleanly
    /// negligible tail. Column norms that fall to roundoff level are flushed
    /// to zero singular values and the matching left vectors are completed to
    /// an orthonormal set.
    pub fn thin_svd(&self) -> Result<ThinSvd> {
        if self.rows < self.cols {
            let svd = self.t().thin_svd()?;
            return Ok(ThinSvd { u: svd.v, sigma: svd.sigma, v: svd.u });
        }
        let (m, n) = (self.rows, self.cols);
        if n == 0 {
            return Ok(ThinSvd { u: Self::zeros(m, 0), sigma: vec![], v: Self::zeros(0, 0) });
        }

        let frob = self.frobenius_norm();
        let null_floor = f64::EPSILON * frob * (m.max(n) as f64);
        // Column-major working copy: w[j] is the j-th column.
        let mut w: Vec<Vec<f64>> = (0..n).map(|j| self.col(j)).collect();
        let mut v: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();

        if frob > 0.0 {
            let mut converged = false;
            for _ in 0..JACOBI_MAX_SWEEPS {
                let mut rotated = false;
                for i in 0..n - 1 {
                    for j in i + 1..n {
                        let a = dot(&w[i], &w[i]);
                        let b = dot(&w[j], &w[j]);
                        let g = dot(&w[i], &w[j]);
                        if a.sqrt() <= null_floor || b.sqrt() <= null_floor {
                            continue;
                        }
                        if g.abs() <= JACOBI_TOL * (a * b).sqrt() {
                            continue;
                        }
                        rotated = true;
                        let zeta = (b - a) / (2.0 * g);
                        let sgn = if zeta >= 0.0 { 1.0 } else { -1.0 };
                        let t = sgn / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                        let cs = 1.0 / (1.0 + t * t).sqrt();
                        let sn = cs * t;
                        rotate_pair(&mut w, i, j, cs, sn);
                        rotate_pair(&mut v, i, j, cs, sn);
                    }
                }
                if !rotated {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NonConvergence("thin_svd jacobi sweeps"));
            }
        }

        // Sort by column norm, largest first; ties keep the lower index.
        let norms: Vec<f64> = w.iter().map(|c| norm2(c)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

        let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut sigma = Vec::with_capacity(n);
        let mut v_out = Self::zeros(n, n);
        let mut pending = Vec::new();
        for (pos, &idx) in order.iter().enumerate() {
            for i in 0..n {
                v_out.set(i, pos, v[idx][i]);
            }
            if norms[idx] > null_floor {
                sigma.push(norms[idx]);
                u_cols.push(w[idx].iter().map(|x| x / norms[idx]).collect());
            } else {
                sigma.push(0.0);
                u_cols.push(vec![0.0; m]);
                pending.push(pos);
            }
        }
        for pos in pending {
            u_cols[pos] = orthonormal_completion(&u_cols, m);
        }

        let mut u = Self::zeros(m, n);
        for (j, cu) in u_cols.iter().enumerate() {
            for i in 0..m {
                u.set(i, j, cu[i]);
            }
        }
        Ok(ThinSvd { u, sigma, v: v_out })
    }

    /// Sum of singular values.
    pub fn nuclear_norm(&self) -> Result<f64> {
        Ok(self.thin_svd()?.sigma.iter().sum())
    }

    /// Soft-thresholds the singular values: the proximal operator of
    /// `tau * nuclear norm`.
    pub fn svt_shrink(&self, tau: f64) -> Result<Self> {
        assert!(tau >= 0.0, "threshold must be nonnegative");
        let svd = self.thin_svd()?;
        let mut out = Self::zeros(self.rows, self.cols);
        for (k, &s) in svd.sigma.iter().enumerate() {
            let shrunk = s - tau;
            if shrunk <= 0.0 {
                continue;
            }
            for i in 0..self.rows {
                let us = svd.u.get(i, k) * shrunk;
                for j in 0..self.cols {
                    out.data[i * self.cols + j] += us * svd.v.get(j, k);
                }
            }
        }
        Ok(out)
    }
}

/// Thin singular value decomposition `m = u * diag(sigma) * v'` with
/// `k = min(rows, cols)` columns in both factors.
#[derive(Clone, Debug)]
pub struct ThinSvd {
    /// Left singular vectors, `rows x k`, orthonormal columns.
    pub u: DenseMatrix,
    /// Singular values, nonincreasing and nonnegative.
    pub sigma: Vec<f64>,
    /// Right singular vectors, `cols x k`, orthonormal columns.
    pub v: DenseMatrix,
}

impl ThinSvd {
    pub fn reconstruct(&self) -> DenseMatrix {
        let k = self.sigma.len();
        let mut scaled = self.u.clone();
        for j in 0..k {
            for i in 0..scaled.rows() {
                let v = scaled.get(i, j) * self.sigma[j];
                scaled.set(i, j, v);
            }
        }
        scaled.matmul(&self.v.t())
    }

    /// Number of singular values above `1e-12 * sigma_1`.
    pub fn rank(&self) -> usize {
        let cutoff = self.sigma.first().copied().unwrap_or(0.0) * RANK_CUTOFF;
        self.sigma.iter().filter(|&&s| s > cutoff).count()
    }
}

/// Solves `a * x = b` for symmetric positive definite `a` by Cholesky
/// factorization. Only the lower triangle of `a` is read.
pub fn solve_sym_pd(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows();
    assert_eq!(a.cols(), n, "matrix must be square");
    assert_eq!(b.rows(), n, "right-hand side row count mismatch");

    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d <= 0.0 {
            return Err(Error::NotPositiveDefinite { row: j, pivot: d });
        }
        let dj = d.sqrt();
        l[j * n + j] = dj;
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / dj;
        }
    }

    let mut x = b.clone();
    let cols = b.cols();
    // Forward solve L y = b, then back solve L' x = y, column by column.
    for c in 0..cols {
        for i in 0..n {
            let mut s = x.get(i, c);
            for k in 0..i {
                s -= l[i * n + k] * x.get(k, c);
            }
            x.set(i, c, s / l[i * n + i]);
        }
        for i in (0..n).rev() {
            let mut s = x.get(i, c);
            for k in i + 1..n {
                s -= l[k * n + i] * x.get(k, c);
            }
            x.set(i, c, s / l[i * n + i]);
        }
    }
    Ok(x)
}

/// Exact inverse of the regularized Gram matrix `(r'r + c*I)` computed from
/// the SVD of `r`, so the inversion cost scales with `min(rows, cols)` rather
/// than the (possibly much larger) column count.
pub fn inv_regularized_gram(r: &DenseMatrix, c: f64) -> Result<DenseMatrix> {
    assert!(c > 0.0, "regularizer must be positive");
    let f = r.cols();
    if r.rows() == 0 || f == 0 {
        return Ok(DenseMatrix::identity(f).scale(1.0 / c));
    }
    let svd = r.thin_svd()?;
    // (r'r + cI)^{-1} = (1/c) [I - V diag(s^2 / (c + s^2)) V']
    let mut out = DenseMatrix::identity(f);
    for (k, &s) in svd.sigma.iter().enumerate() {
        let w = s * s / (c + s * s);
        if w == 0.0 {
            continue;
        }
        for i in 0..f {
            let vi = svd.v.get(i, k) * w;
            for j in 0..f {
                let cur = out.get(i, j);
                out.set(i, j, cur - vi * svd.v.get(j, k));
            }
        }
    }
    Ok(out.scale(1.0 / c))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(mut a: Vec<f64>) -> Vec<f64> {
    let n = norm2(&a);
    if n > 0.0 {
        for x in &mut a {
            *x /= n;
        }
    }
    a
}

fn rotate_pair(cols: &mut [Vec<f64>], i: usize, j: usize, cs: f64, sn: f64) {
    let (lo, hi) = cols.split_at_mut(j);
    let (ci, cj) = (&mut lo[i], &mut hi[0]);
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let xi = *x;
        let yj = *y;
        *x = cs * xi - sn * yj;
        *y = sn * xi + cs * yj;
    }
}

/// A unit vector orthogonal to every column already in `cols`, grown from the
/// best-conditioned coordinate vector.
fn orthonormal_completion(cols: &[Vec<f64>], m: usize) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for e in 0..m {
        let mut cand = vec![0.0; m];
        cand[e] = 1.0;
        for c in cols {
            let p = dot(&cand, c);
            if p != 0.0 {
                for (x, y) in cand.iter_mut().zip(c) {
                    *x -= p * y;
                }
            }
        }
        let n = norm2(&cand);
        if best.as_ref().map_or(true, |(bn, _)| n > *bn) {
            best = Some((n, cand));
        }
        if n > 0.9 {
            break;
        }
    }
    let (n, mut cand) = best.expect("nonzero dimension");
    assert!(n > 0.0, "cannot complete an orthonormal basis");
    // Second orthogonalization pass for numerical safety.
    for c in cols {
        let p = dot(&cand, c);
        for (x, y) in cand.iter_mut().zip(c) {
            *x -= p * y;
        }
    }
    normalize(cand)
}
