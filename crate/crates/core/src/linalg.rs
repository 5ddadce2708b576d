//! Small dense linear algebra used by the estimators.
//!
//! Everything here is sized for regression designs with a few dozen columns
//! and a few thousand rows, and for companion matrices of modest order. No
//! attempt is made at blocking or SIMD.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

/// Relative threshold below which a singular value counts as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch in matmul");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// Copy of the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            for (jj, &j) in cols.iter().enumerate() {
                out[(i, jj)] = self[(i, j)];
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Raised when a least-squares design does not have full column rank.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankDeficiency {
    /// First column (in design order) that is numerically dependent on the
    /// columns before it.
    pub column: usize,
}

/// Householder QR factorisation of a tall matrix, kept in compact form.
#[derive(Clone, Debug)]
pub struct Qr {
    rows: usize,
    cols: usize,
    // Householder vectors below the diagonal, R on and above it.
    packed: Matrix,
    betas: Vec<f64>,
    diag: Vec<f64>,
}

impl Qr {
    /// Factorises `x` (rows >= cols).
    pub fn new(x: &Matrix) -> Self {
        let (m, n) = (x.rows, x.cols);
        assert!(m >= n, "QR needs at least as many rows as columns");
        let mut a = x.clone();
        let mut betas = vec![0.0; n];
        let mut diag = vec![0.0; n];
        for k in 0..n {
            let mut norm = 0.0;
            for i in k..m {
                norm += a[(i, k)] * a[(i, k)];
            }
            let norm = libm::sqrt(norm);
            if norm == 0.0 {
                betas[k] = 0.0;
                diag[k] = 0.0;
                continue;
            }
            let alpha = if a[(k, k)] > 0.0 { -norm } else { norm };
            // v = x - alpha e1, stored in place; beta = 2 / (v^T v)
            a[(k, k)] -= alpha;
            let mut vnorm2 = 0.0;
            for i in k..m {
                vnorm2 += a[(i, k)] * a[(i, k)];
            }
            let beta = 2.0 / vnorm2;
            betas[k] = beta;
            diag[k] = alpha;
            for j in k + 1..n {
                let mut s = 0.0;
                for i in k..m {
                    s += a[(i, k)] * a[(i, j)];
                }
                s *= beta;
                for i in k..m {
                    let vik = a[(i, k)];
                    a[(i, j)] -= s * vik;
                }
            }
        }
        Self {
            rows: m,
            cols: n,
            packed: a,
            betas,
            diag,
        }
    }

    /// The upper-triangular factor R (cols x cols).
    pub fn r(&self) -> Matrix {
        let n = self.cols;
        let mut r = Matrix::zeros(n, n);
        for i in 0..n {
            r[(i, i)] = self.diag[i];
            for j in i + 1..n {
                r[(i, j)] = self.packed[(i, j)];
            }
        }
        r
    }

    /// Applies Q^T to every column of `y` in place.
    pub fn apply_qt(&self, y: &mut Matrix) {
        assert_eq!(y.rows, self.rows);
        for k in 0..self.cols {
            let beta = self.betas[k];
            if beta == 0.0 {
                continue;
            }
            for c in 0..y.cols {
                let mut s = 0.0;
                for i in k..self.rows {
                    s += self.packed[(i, k)] * y[(i, c)];
                }
                s *= beta;
                for i in k..self.rows {
                    y[(i, c)] -= s * self.packed[(i, k)];
                }
            }
        }
    }

    /// Checks the numerical rank of R using its singular values.
    pub fn check_rank(&self) -> Result<(), RankDeficiency> {
        let r = self.r();
        if is_rank_deficient(&r) {
            // Locate the first leading block that loses rank.
            for j in 0..self.cols {
                let lead = leading_block(&r, j + 1);
                if is_rank_deficient(&lead) {
                    return Err(RankDeficiency { column: j });
                }
            }
            return Err(RankDeficiency {
                column: self.cols.saturating_sub(1),
            });
        }
        Ok(())
    }
}

fn leading_block(r: &Matrix, n: usize) -> Matrix {
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            out[(i, j)] = r[(i, j)];
        }
    }
    out
}

fn is_rank_deficient(r: &Matrix) -> bool {
    let sv = singular_values(r);
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    max == 0.0 || min <= RANK_TOLERANCE * max
}

/// Singular values via one-sided Jacobi rotations, in no particular order.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    let m = a.rows;
    let n = a.cols;
    // Work column-major for cheap column access.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    alpha += cols[p][i] * cols[p][i];
                    beta += cols[q][i] * cols[q][i];
                    gamma += cols[p][i] * cols[q][i];
                }
                if gamma == 0.0 || libm::fabs(gamma) <= 1e-15 * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (libm::fabs(zeta) + libm::sqrt(1.0 + zeta * zeta));
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for i in 0..m {
                    let xp = cols[p][i];
                    let xq = cols[q][i];
                    cols[p][i] = c * xp - s * xq;
                    cols[q][i] = s * xp + c * xq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    cols.iter()
        .map(|c| libm::sqrt(c.iter().map(|v| v * v).sum::<f64>()))
        .collect()
}

/// Least-squares fit of several right-hand sides against one design.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    /// Coefficients, one column per right-hand side (design cols x rhs).
    pub coefficients: Matrix,
    /// Residuals y - X b (rows x rhs).
    pub residuals: Matrix,
    qr: Qr,
}

impl LeastSquares {
    /// Solves min ||Y - X B|| column by column with a rank check.
    pub fn fit(x: &Matrix, y: &Matrix) -> Result<Self, RankDeficiency> {
        assert_eq!(x.rows, y.rows, "design and targets differ in row count");
        let qr = Qr::new(x);
        qr.check_rank()?;
        let mut qty = y.clone();
        qr.apply_qt(&mut qty);
        let n = x.cols;
        let r = qr.r();
        let mut coefficients = Matrix::zeros(n, y.cols);
        for c in 0..y.cols {
            for i in (0..n).rev() {
                let mut s = qty[(i, c)];
                for j in i + 1..n {
                    s -= r[(i, j)] * coefficients[(j, c)];
                }
                coefficients[(i, c)] = s / r[(i, i)];
            }
        }
        let fitted = x.matmul(&coefficients);
        let mut residuals = y.clone();
        for (res, fit) in residuals.data.iter_mut().zip(&fitted.data) {
            *res -= fit;
        }
        Ok(Self {
            coefficients,
            residuals,
            qr,
        })
    }

    /// Residual sum of squares for right-hand side `c`.
    pub fn ssr(&self, c: usize) -> f64 {
        (0..self.residuals.rows)
            .map(|i| self.residuals[(i, c)] * self.residuals[(i, c)])
            .sum()
    }

    /// Diagonal of (X^T X)^{-1}, used for coefficient standard errors.
    pub fn unscaled_variances(&self) -> Vec<f64> {
        let rinv = upper_triangular_inverse(&self.qr.r());
        let n = rinv.rows;
        (0..n)
            .map(|i| (i..n).map(|j| rinv[(i, j)] * rinv[(i, j)]).sum())
            .collect()
    }
}

fn upper_triangular_inverse(r: &Matrix) -> Matrix {
    let n = r.rows;
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        inv[(j, j)] = 1.0 / r[(j, j)];
        for i in (0..j).rev() {
            let mut s = 0.0;
            for k in i + 1..=j {
                s += r[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -s / r[(i, i)];
        }
    }
    inv
}

/// Natural log of the determinant of a symmetric positive-definite matrix.
///
/// Returns `None` when the Cholesky factorisation breaks down.
pub fn ln_det_spd(a: &Matrix) -> Option<f64> {
    let n = a.rows;
    let mut l = Matrix::zeros(n, n);
    let mut ln_det = 0.0;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = libm::sqrt(d);
        l[(j, j)] = d;
        ln_det += 2.0 * libm::log(d);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(ln_det)
}

/// Eigenvalues of a general real square matrix as (re, im) pairs.
///
/// Balances the matrix, reduces it to upper Hessenberg form and runs the
/// Francis double-shift QR iteration. Returns `None` if the iteration does
/// not converge.
pub fn eigenvalues(a: &Matrix) -> Option<Vec<(f64, f64)>> {
    assert_eq!(a.rows, a.cols, "eigenvalues need a square matrix");
    let n = a.rows;
    if n == 0 {
        return Some(Vec::new());
    }
    // 1-based working copy; row/column 0 unused.
    let mut h = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            h[i + 1][j + 1] = a[(i, j)];
        }
    }
    balance(&mut h, n);
    to_hessenberg(&mut h, n);
    for i in 1..=n {
        for j in 1..=n {
            if i > j + 1 {
                h[i][j] = 0.0;
            }
        }
    }
    hessenberg_qr(&mut h, n)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &Matrix) -> f64 {
    match eigenvalues(a) {
        Some(ev) => ev
            .iter()
            .map(|&(re, im)| libm::hypot(re, im))
            .fold(0.0, f64::max),
        None => gelfand_radius(a),
    }
}

// Fallback when QR iteration stalls: ||A^(2^k)||^(1/2^k) with rescaling.
fn gelfand_radius(a: &Matrix) -> f64 {
    let mut m = a.clone();
    let mut log_scale = 0.0;
    let mut power = 1.0;
    for _ in 0..12 {
        let s = m.max_abs();
        if s == 0.0 {
            return 0.0;
        }
        for v in m.data.iter_mut() {
            *v /= s;
        }
        log_scale += libm::log(s) / power;
        m = m.matmul(&m);
        power *= 2.0;
    }
    let s = m.max_abs();
    if s == 0.0 {
        return 0.0;
    }
    libm::exp(log_scale + libm::log(s) / power)
}

fn balance(a: &mut [Vec<f64>], n: usize) {
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 1..=n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 1..=n {
                if j != i {
                    c += libm::fabs(a[j][i]);
                    r += libm::fabs(a[i][j]);
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 1..=n {
                        a[i][j] *= g;
                    }
                    for j in 1..=n {
                        a[j][i] *= f;
                    }
                }
            }
        }
    }
}

// Gaussian elimination with pivoting to upper Hessenberg form.
fn to_hessenberg(a: &mut [Vec<f64>], n: usize) {
    for m in 2..n {
        let mut x = 0.0;
        let mut i = m;
        for j in m..=n {
            if libm::fabs(a[j][m - 1]) > libm::fabs(x) {
                x = a[j][m - 1];
                i = j;
            }
        }
        if i != m {
            for j in (m - 1)..=n {
                let tmp = a[i][j];
                a[i][j] = a[m][j];
                a[m][j] = tmp;
            }
            for row in a.iter_mut().take(n + 1).skip(1) {
                row.swap(i, m);
            }
        }
        if x != 0.0 {
            for i in (m + 1)..=n {
                let mut y = a[i][m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..=n {
                        a[i][j] -= y * a[m][j];
                    }
                    for j in 1..=n {
                        a[j][m] += y * a[j][i];
                    }
                }
            }
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        libm::fabs(a)
    } else {
        -libm::fabs(a)
    }
}

#[allow(clippy::many_single_char_names)]
fn hessenberg_qr(a: &mut [Vec<f64>], n: usize) -> Option<Vec<(f64, f64)>> {
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in (i.max(2) - 1)..=n {
            anorm += libm::fabs(a[i][j]);
        }
    }
    let mut nn = n as isize;
    let mut t = 0.0;
    while nn >= 1 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l >= 2 {
                let mut s = libm::fabs(a[l - 1][l - 1]) + libm::fabs(a[l][l]);
                if s == 0.0 {
                    s = anorm;
                }
                if libm::fabs(a[l][l - 1]) + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[nu][nu];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = a[nu - 1][nu - 1];
            let mut w = a[nu][nu - 1] * a[nu - 1][nu];
            if l == nu - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = libm::sqrt(libm::fabs(q));
                x += t;
                if q >= 0.0 {
                    z = p + sign(z, p);
                    wr[nu - 1] = x + z;
                    wr[nu] = x + z;
                    if z != 0.0 {
                        wr[nu] = x - w / z;
                    }
                    wi[nu - 1] = 0.0;
                    wi[nu] = 0.0;
                } else {
                    wr[nu - 1] = x + p;
                    wr[nu] = x + p;
                    wi[nu - 1] = -z;
                    wi[nu] = z;
                }
                nn -= 2;
                break;
            }
            if its == 100 {
                return None;
            }
            if its == 10 || its == 20 {
                t += x;
                for i in 1..=nu {
                    a[i][i] -= x;
                }
                let s = libm::fabs(a[nu][nu - 1]) + libm::fabs(a[nu - 1][nu - 2]);
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            let mut m = nu - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = a[m][m];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - rr - ss;
                r = a[m + 2][m + 1];
                let s = libm::fabs(p) + libm::fabs(q) + libm::fabs(r);
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = libm::fabs(a[m][m - 1]) * (libm::fabs(q) + libm::fabs(r));
                let v = libm::fabs(p)
                    * (libm::fabs(a[m - 1][m - 1]) + libm::fabs(z) + libm::fabs(a[m + 1][m + 1]));
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nu {
                a[i][i - 2] = 0.0;
                if i != m + 2 {
                    a[i][i - 3] = 0.0;
                }
            }
            let mut k = m;
            while k < nu {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = 0.0;
                    if k != nu - 1 {
                        r = a[k + 2][k - 1];
                    }
                    x = libm::fabs(p) + libm::fabs(q) + libm::fabs(r);
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign(libm::sqrt(p * p + q * q + r * r), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pp = a[k][j] + q * a[k + 1][j];
                        if k != nu - 1 {
                            pp += r * a[k + 2][j];
                            a[k + 2][j] -= pp * z;
                        }
                        a[k + 1][j] -= pp * y;
                        a[k][j] -= pp * x;
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for i in l..=mmin {
                        let mut pp = x * a[i][k] + y * a[i][k + 1];
                        if k != nu - 1 {
                            pp += z * a[i][k + 2];
                            a[i][k + 2] -= pp * r;
                        }
                        a[i][k + 1] -= pp * q;
                        a[i][k] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Some((1..=n).map(|i| (wr[i], wi[i])).collect())
}
